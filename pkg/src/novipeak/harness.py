"""Scenario files, deterministic perturbations and the run pipeline.

A scenario is a UTF-8 text of ``key = value`` lines grouped in ``[section]``
blocks; keys before the first header belong to the scenario itself::

    kind = ode-sim
    seed = 7

    [initial]
    q = [0.0, 4.0]
    p = [1.0, 1.5]

    [ode]
    t_end = 50
    rtol = 1e-10

Values are Python literals (numbers, lists, ``True``/``None``, quoted
strings); a bare word is taken as a string. Every section is typed, unknown
keys are rejected and missing keys take their defaults.

:func:`run` writes three files next to the output prefix: ``.csv`` (the
trajectory, 17 significant digits), ``.report.json`` (per-audit pass/fail
with measured values and margins, or an error record) and
``.manifest.json`` (config echo, versions, seed, and the list of numeric
report fields).
"""

import ast
import json
import platform
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, get_type_hints

import numpy as np

from .errors import ParseError, PeakonError, PreconditionUnmet, ValidationError
from .field import (PeakonConfig, h1_distance, hypothesis_norm,
                    peakon, slope_l4_distance, train)
from .ode import IntegratorSettings, OdeState, conservation_report, integrate
from .pde import PdeSettings, pde_integrate
from .spectral import lambda_spectrum, verify_asymptotics
from .stability import (TRAIN_ORBITAL_CONSTANT, check_orthogonality_kernel,
                        ef_difference_bounds, f_upper_bound_check, max_height_bound,
                        monotonicity_audit, orbital_bound, orbital_distance,
                        single_peakon_identity, track_maxima, train_identity)

__all__ = [
    "KINDS",
    "Scenario",
    "InitialBlock",
    "PerturbBlock",
    "OdeBlock",
    "PdeBlock",
    "SpectrumBlock",
    "AsymptoticsBlock",
    "StabilityBlock",
    "AuditBlock",
    "parse_config",
    "perturb",
    "PerturbationSize",
    "measure_perturbation",
    "make_rng",
    "random_config",
    "Audit",
    "RunResult",
    "run",
    "EXIT_PASS",
    "EXIT_AUDIT_FAILURE",
    "EXIT_USAGE",
    "EXIT_NUMERIC",
]

EXIT_PASS, EXIT_AUDIT_FAILURE, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

KINDS = ("ode-sim", "pde-sim", "spectrum", "asymptotics", "stability-report", "lemma-audit")


# ---------------------------------------------------------------------------
# parameter blocks


@dataclass(frozen=True)
class InitialBlock:
    q: list = None
    p: list = None


@dataclass(frozen=True)
class PerturbBlock:
    magnitude: float = 0.0
    satellites: int = 0


@dataclass(frozen=True)
class OdeBlock:
    t_end: Optional[float] = None
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 1.0
    collision_gap: float = 1e-6
    sample_dt: float = 0.1
    drift_tol_E: float = 1e-8
    drift_tol_F: float = 1e-6

    def settings(self, sample_dt=None):
        return IntegratorSettings(rtol=self.rtol, atol=self.atol, max_step=self.max_step,
                                  collision_gap=self.collision_gap,
                                  sample_dt=sample_dt or self.sample_dt)


@dataclass(frozen=True)
class PdeBlock:
    t_end: Optional[float] = None
    half_width: float = 100.0
    N: int = 8192
    cfl: float = 0.5
    viscosity: Optional[float] = None
    mollifier_n: Optional[int] = None
    scheme: str = "momentum"
    comoving: bool = True
    limiter: str = "mc"
    snapshot_dt: float = 0.5
    slope_ceiling: float = 50.0
    guard: float = 20.0
    drift_tol: float = 1e-3

    def settings(self):
        skip = {"t_end", "drift_tol"}
        return PdeSettings(**{f.name: getattr(self, f.name) for f in fields(self)
                              if f.name not in skip})


@dataclass(frozen=True)
class SpectrumBlock:
    tol: float = 1e-9


@dataclass(frozen=True)
class AsymptoticsBlock:
    horizon: float = 200.0
    tol: float = 1e-3
    eig_tol: float = 1e-9


@dataclass(frozen=True)
class StabilityBlock:
    t_end: float = 100.0
    K: Optional[float] = None
    n0: int = 8
    constant: float = TRAIN_ORBITAL_CONSTANT
    sample_dt: float = 1.0


@dataclass(frozen=True)
class AuditBlock:
    samples: int = 100
    bound_samples: int = 50
    perturbed_samples: int = 20
    L_values: list = (10.0, 20.0, 40.0, 200.0)
    identity_tol: float = 1e-10
    slack_tol: float = 1e-9
    far_tol: float = 1e-12


_SECTIONS = {
    "initial": InitialBlock,
    "perturb": PerturbBlock,
    "ode": OdeBlock,
    "pde": PdeBlock,
    "spectrum": SpectrumBlock,
    "asymptotics": AsymptoticsBlock,
    "stability": StabilityBlock,
    "audit": AuditBlock,
}

_USES = {
    "ode-sim": ("initial", "perturb", "ode"),
    "pde-sim": ("initial", "perturb", "pde"),
    "spectrum": ("initial", "spectrum"),
    "asymptotics": ("initial", "asymptotics", "ode"),
    "stability-report": ("initial", "perturb", "ode", "stability"),
    "lemma-audit": ("initial", "audit"),
}

_TOP_KEYS = {"kind": str, "seed": int, "out": str}


@dataclass(frozen=True)
class Scenario:
    """A validated scenario: kind, initial data, parameter blocks, seed, output prefix."""

    kind: str
    initial: PeakonConfig
    settings: dict
    seed: int = 0
    out: str = "run"
    source: str = ""

    def block(self, name):
        return self.settings[name]

    def with_overrides(self, *, seed=None, out=None):
        return replace(self, seed=self.seed if seed is None else int(seed),
                       out=self.out if out is None else str(out))

    def echo(self):
        """Plain-data view of the scenario for the manifest."""
        return {
            "kind": self.kind,
            "seed": self.seed,
            "out": self.out,
            "initial": {"q": self.initial.q.tolist(), "p": self.initial.p.tolist()},
            "settings": {k: _plain(asdict(v)) for k, v in self.settings.items()},
        }


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# parsing


def _literal(raw):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(name, value, hint):
    optional = getattr(hint, "__args__", None) is not None and type(None) in hint.__args__
    if optional:
        if value is None:
            return None
        hint = next(a for a in hint.__args__ if a is not type(None))
    if hint is float:
        if not _is_number(value):
            raise ValidationError(name, f"{name} must be a number")
        return float(value)
    if hint is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ValidationError(name, f"{name} must be an integer")
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ValidationError(name, f"{name} must be True or False")
        return value
    if hint is str:
        if not isinstance(value, str):
            raise ValidationError(name, f"{name} must be a string")
        return value
    if hint is list:
        if _is_number(value):
            value = [value]
        if not isinstance(value, (list, tuple)) or not all(_is_number(v) for v in value):
            raise ValidationError(name, f"{name} must be a list of numbers")
        return [float(v) for v in value]
    raise TypeError(f"unsupported field type {hint!r}")


def _read_document(text):
    """Split into ``{section: {key: (line, raw)}}`` with ``""`` for top-level keys."""
    doc = {"": {}}
    current = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#") or s.startswith(";"):
            continue
        if s.startswith("["):
            if not s.endswith("]") or len(s) < 3:
                raise ParseError(lineno, f"malformed section header {s!r}")
            current = s[1:-1].strip()
            if current in doc:
                raise ParseError(lineno, f"duplicate section [{current}]")
            if current not in _SECTIONS:
                raise ParseError(lineno, f"unknown section [{current}]")
            doc[current] = {}
            continue
        if "=" not in s:
            raise ParseError(lineno, "expected 'key = value'")
        key, raw = (part.strip() for part in s.split("=", 1))
        if not key.isidentifier():
            raise ParseError(lineno, f"invalid key {key!r}")
        if not raw:
            raise ParseError(lineno, f"missing value for {key!r}")
        if key in doc[current]:
            raise ParseError(lineno, f"duplicate key {key!r}")
        doc[current][key] = (lineno, raw)
    return doc


def _build_block(name, entries):
    cls = _SECTIONS[name]
    hints = get_type_hints(cls)
    values = {}
    for key, (_, raw) in entries.items():
        dotted = f"{name}.{key}"
        if key not in hints:
            raise ValidationError(dotted, f"unknown key {dotted!r}")
        values[key] = _coerce(dotted, _literal(raw), hints[key])
    return cls(**values)


def parse_config(text, kind=None):
    """Parse and validate a scenario document.

    ``kind`` (e.g. from a CLI subcommand) fills in a missing ``kind`` key and
    must agree with it if both are given.

    Raises
    ------
    ParseError
        Malformed lines, headers, duplicates or unknown sections.
    ValidationError
        Unknown keys, wrong types or values violating a kind's preconditions.
    """
    doc = _read_document(text)
    top = {}
    for key, (_, raw) in doc.pop("").items():
        if key not in _TOP_KEYS:
            raise ValidationError(key, f"unknown key {key!r}")
        top[key] = _coerce(key, _literal(raw), _TOP_KEYS[key])
    if kind is not None:
        if "kind" in top and top["kind"] != kind:
            raise ValidationError("kind", f"document kind {top['kind']!r} does not match {kind!r}")
        top["kind"] = kind
    if "kind" not in top:
        raise ValidationError("kind", "kind is required")
    kind = top["kind"]
    if kind not in KINDS:
        raise ValidationError("kind", f"kind must be one of {', '.join(KINDS)}")
    used = _USES[kind]
    for name in doc:
        if name not in used:
            raise ValidationError(name, f"section [{name}] is not used by {kind}")
    blocks = {name: _build_block(name, doc.get(name, {})) for name in used}
    initial = _validate_initial(kind, blocks.pop("initial"))
    _validate_blocks(kind, blocks)
    seed = top.get("seed", 0)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed", "seed must be a 64-bit unsigned integer")
    return Scenario(kind, initial, blocks, seed, top.get("out", "run"), text)


def _validate_initial(kind, block):
    if block.q is None and block.p is None:
        if kind == "lemma-audit":
            return peakon(1.0)
        raise ValidationError("initial", "[initial] q and p are required")
    if block.q is None or block.p is None:
        raise ValidationError("initial.q" if block.q is None else "initial.p", "both q and p are required")
    if len(block.q) != len(block.p) or not block.q:
        raise ValidationError("initial.p", "q and p must be non-empty and of equal length")
    if not np.all(np.isfinite(block.q + block.p)):
        raise ValidationError("initial", "q and p must be finite")
    cfg = PeakonConfig(block.q, block.p)
    if kind in ("spectrum", "asymptotics", "stability-report"):
        if np.any(np.diff(cfg.q) <= 0):
            raise ValidationError("initial.q", "q must be ascending")
        if np.any(cfg.p <= 0):
            raise ValidationError("initial.p", "p must be positive")
    return cfg


def _positive(name, v):
    if v is not None and not v > 0:
        raise ValidationError(name, f"{name} must be positive")


def _validate_blocks(kind, blocks):
    for name, block in blocks.items():
        for f in fields(block):
            v = getattr(block, f.name)
            dotted = f"{name}.{f.name}"
            if f.name in ("magnitude", "satellites", "viscosity") and v is not None and v < 0:
                raise ValidationError(dotted, f"{dotted} must be nonnegative")
            if _is_number(v) and f.name not in ("magnitude", "satellites", "viscosity"):
                _positive(dotted, v)
    if "ode" in blocks:
        ode = blocks["ode"]
        if kind == "ode-sim" and ode.t_end is None:
            raise ValidationError("ode.t_end", "ode.t_end is required")
        try:
            ode.settings()
        except ValueError as exc:
            raise ValidationError("ode", str(exc)) from None
    if "pde" in blocks:
        pde = blocks["pde"]
        if pde.t_end is None:
            raise ValidationError("pde.t_end", "pde.t_end is required")
        try:
            pde.settings()
        except ValueError as exc:
            raise ValidationError("pde", str(exc)) from None


# ---------------------------------------------------------------------------
# perturbations and random configurations


def make_rng(seed):
    """The package's random generator: numpy's PCG64 seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(seed))


def perturb(cfg, magnitude, seed, satellites=0):
    """Deterministically jitter a configuration.

    ``magnitude`` sets the H^1 scale of the change. A peak moved by ``d``
    is ``~2 sqrt(c |d|)`` away in H^1, so positions move by
    ``magnitude**2 * N(0, 1) / 4``; amplitudes move by
    ``magnitude * N(0, 1) * |p|``; and ``satellites`` extra bumps of
    amplitude ``magnitude * |N(0, 1)|`` are placed uniformly 2 to 8 units
    behind the leftmost peak, where positive peaks never overtake them.
    ``magnitude = 0`` returns ``cfg`` unchanged. The size of the result must
    be measured (:func:`measure_perturbation`), not inferred from
    ``magnitude``.
    """
    if magnitude < 0:
        raise ValueError("magnitude must be nonnegative")
    if magnitude == 0:
        return cfg
    rng = make_rng(seed)
    q = cfg.q + 0.25 * magnitude ** 2 * rng.standard_normal(cfg.n)
    p = cfg.p * (1.0 + magnitude * rng.standard_normal(cfg.n))
    if satellites:
        q = np.r_[q, cfg.q.min() - rng.uniform(2.0, 8.0, satellites)]
        p = np.r_[p, magnitude * np.abs(rng.standard_normal(satellites))]
    order = np.argsort(q, kind="stable")
    return PeakonConfig(q[order], p[order])


@dataclass(frozen=True)
class PerturbationSize:
    h1: float
    slope_l4: float

    @property
    def hypothesis(self):
        """``||.||_{H^1} + ||d/dx .||_{L^4}``."""
        return self.h1 + self.slope_l4

    @property
    def eps(self):
        """The fourth root of :attr:`hypothesis`."""
        return self.hypothesis ** 0.25


def measure_perturbation(base, perturbed):
    """Deviation of ``perturbed`` from ``base`` measured by quadrature."""
    return PerturbationSize(h1_distance(perturbed, base), slope_l4_distance(perturbed, base))


def random_config(rng, n=None, *, positive=False, ordered=False, spread=5.0, n_max=4):
    """A random configuration with ``n`` (default uniform in 1..n_max) peaks."""
    n = int(rng.integers(1, n_max + 1)) if n is None else n
    q = rng.uniform(-spread, spread, n)
    if ordered:
        q = np.sort(q)
        q = q + 0.5 * np.arange(n)  # keep distinct
    p = rng.uniform(0.2, 2.0, n) if positive else rng.uniform(-2.0, 2.0, n)
    return PeakonConfig(q, p)


# ---------------------------------------------------------------------------
# running


@dataclass(frozen=True)
class Audit:
    """One checked inequality ``measured <= threshold`` (or ``>=`` if ``lower``)."""

    name: str
    measured: float
    threshold: float
    lower: bool = False

    @property
    def passed(self):
        if not np.isfinite(self.measured):
            return False
        if self.lower:
            return self.measured >= self.threshold
        return self.measured <= self.threshold

    @property
    def margin(self):
        return self.measured - self.threshold if self.lower else self.threshold - self.measured

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "measured": float(self.measured),
                "threshold": float(self.threshold), "margin": float(self.margin),
                "direction": ">=" if self.lower else "<="}


@dataclass
class RunResult:
    exit_code: int
    report: dict
    paths: dict = field(default_factory=dict)

    @property
    def audits(self):
        return self.report.get("audits", [])


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _drift(v):
    v = np.asarray(v, dtype=float)
    ref = abs(v[0])
    d = np.abs(v - v[0])
    return d / ref if ref > 0 else d


def _trajectory_rows(traj):
    dE, dF = _drift(traj.E), _drift(traj.F)
    return [np.r_[traj.t[k], traj.q[k], traj.p[k], traj.E[k], traj.F[k], dE[k], dF[k]]
            for k in range(len(traj))]


def _trajectory_header(n):
    return (["t"] + [f"q{i + 1}" for i in range(n)] + [f"p{i + 1}" for i in range(n)]
            + ["E", "F", "driftE", "driftF"])


def _run_ode(sc, ctx):
    ode, pert = sc.block("ode"), sc.block("perturb")
    cfg = perturb(sc.initial, pert.magnitude, sc.seed, pert.satellites)
    traj = integrate(OdeState(0.0, cfg), ode.t_end, ode.settings())
    ctx["csv"] = (_trajectory_header(cfg.n), _trajectory_rows(traj))
    dE, dF = conservation_report(traj)
    results = {"n": cfg.n, "t_end": float(traj.t[-1]), "E0": float(traj.E[0]),
               "F0": float(traj.F[0]), "q_final": traj.q[-1].tolist(),
               "p_final": traj.p[-1].tolist()}
    if pert.magnitude > 0:
        results["perturbation"] = asdict(measure_perturbation(sc.initial, cfg))
    audits = [Audit("energy_drift", dE, ode.drift_tol_E), Audit("f_drift", dF, ode.drift_tol_F)]
    return results, audits


def _run_pde(sc, ctx):
    pde, pert = sc.block("pde"), sc.block("perturb")
    cfg = perturb(sc.initial, pert.magnitude, sc.seed, pert.satellites)
    settings = pde.settings()
    r = pde_integrate(cfg, pde.t_end, settings)
    heights = np.array([s.u.max() for s in r.snapshots])
    rows = [np.r_[r.times[k], r.crest[k], heights[k], r.E[k], r.F[k], _drift(r.E)[k],
                  _drift(r.F)[k], r.max_slope[k]] for k in range(len(r))]
    ctx["csv"] = (["t", "crest", "height", "E", "F", "driftE", "driftF", "max_slope"], rows)
    results = {"dx": settings.dx, "mollifier_n": settings.mollifier_index,
               "crest_final": float(r.crest[-1]), "E0": float(r.E[0]), "F0": float(r.F[0]),
               "max_slope_final": float(r.max_slope[-1])}
    audits = [Audit("energy_drift", r.energy_drift, pde.drift_tol)]
    if cfg.n == 1:
        expected = cfg.q[0] + cfg.p[0] ** 2 * pde.t_end
        results["crest_expected"] = float(expected)
        audits.append(Audit("crest_transport", abs(r.crest[-1] - expected), 2 * settings.dx))
    return results, audits


def _run_spectrum(sc, ctx):
    tol = sc.block("spectrum").tol
    spec = lambda_spectrum(sc.initial, tol)
    results = {"lambdas": spec.lambdas.tolist(), "residual": spec.residual,
               "imag_leak": spec.imag_leak}
    return results, [Audit("eigen_residual", spec.residual, tol)]


def _run_asymptotics(sc, ctx):
    blk, ode = sc.block("asymptotics"), sc.block("ode")
    settings = ode.settings(sample_dt=max(blk.horizon / 50, ode.sample_dt))
    rep = verify_asymptotics(sc.initial, blk.horizon, settings, blk.eig_tol)
    audits = [Audit("forward_deviation", float(rep.dev_p_forward.max()), blk.tol),
              Audit("backward_deviation", float(rep.dev_p_backward.max()), blk.tol),
              Audit("min_gap", rep.min_gap, 0.0, lower=True)]
    return rep.as_dict(), audits


def _run_stability(sc, ctx):
    ode, pert, blk = sc.block("ode"), sc.block("perturb"), sc.block("stability")
    base = sc.initial
    speeds = base.p ** 2
    cfg = perturb(base, pert.magnitude, sc.seed, pert.satellites)
    size = measure_perturbation(base, cfg)
    t_end = ode.t_end if ode.t_end is not None else blk.t_end
    traj = integrate(OdeState(0.0, cfg), t_end, ode.settings(sample_dt=blk.sample_dt))
    ctx["csv"] = (_trajectory_header(cfg.n), _trajectory_rows(traj))
    eps = size.eps
    results = {"perturbation": {**asdict(size), "hypothesis": size.hypothesis, "eps": eps},
               "t_end": float(t_end), "speeds": speeds.tolist()}
    audits = []
    if base.n == 1:
        c = float(speeds[0])
        dist = np.array([orbital_distance(traj.config(k), c) for k in range(len(traj))])
        results["max_orbital_distance"] = float(dist.max())
        audits.append(Audit("orbital_distance", float(dist.max()), orbital_bound(c, eps)))
    else:
        L = float(np.min(np.diff(base.q)))
        K = blk.K if blk.K is not None else np.sqrt(L) / 8.0
        track = track_maxima(traj, speeds, init_shifts=base.q, n0=blk.n0)
        mono = monotonicity_audit(traj, K, speeds, track)
        bound = blk.constant * (eps + L ** -0.125)
        results.update({"L": L, "K": K, "min_tracked_gap": float(track.gaps.min()),
                        "max_per_bump_distance": float(track.per_bump_distance.max()),
                        "max_monotonicity_excess": mono.max_excess, "envelope": mono.envelope})
        audits += [Audit("tracked_gap", float(track.gaps.min()), L / 2, lower=True),
                   Audit("per_bump_distance", float(track.per_bump_distance.max()), bound),
                   Audit("almost_monotonicity", mono.max_excess, mono.envelope)]
    dE, dF = conservation_report(traj)
    audits += [Audit("energy_drift", dE, ode.drift_tol_E), Audit("f_drift", dF, ode.drift_tol_F)]
    return results, audits


def lemma_audits(blk, seed, base=None):
    """Randomized suite of the identity and inequality checks; returns ``(results, audits)``."""
    rng = make_rng(seed)
    base = base or peakon(1.0)
    results, audits = {}, []

    # distance identity to a single peakon
    gaps = []
    for _ in range(blk.samples):
        v = random_config(rng)
        lhs, rhs = single_peakon_identity(v, rng.uniform(0.25, 4.0), rng.uniform(-3, 3))
        gaps.append(abs(lhs - rhs))
    audits.append(Audit("distance_identity", max(gaps), blk.identity_tol))

    # upper bound of F by the maximum and E, tight at peakons
    slacks = [f_upper_bound_check(random_config(rng, positive=True)).slack
              for _ in range(blk.bound_samples)]
    audits.append(Audit("f_upper_bound", min(slacks), -blk.slack_tol, lower=True))
    tight = max(abs(f_upper_bound_check(peakon(c, z)).slack)
                for c, z in ((0.25, 0.0), (1.0, 1.5), (4.0, -2.0)))
    audits.append(Audit("f_bound_saturation", tight, blk.slack_tol))

    # nearby E, F force a nearby maximum: run on perturbed peakons
    c0 = float(base.p[0] ** 2) if base.n == 1 and base.p[0] > 0 else 1.0
    margins_E, margins_F, margins_M, skipped = [], [], [], 0
    for k in range(blk.perturbed_samples):
        c = c0 * rng.uniform(0.6, 1.5)
        v = perturb(peakon(c), 10.0 ** rng.uniform(-8, -5), int(rng.integers(2 ** 63)))
        eps = hypothesis_norm(v, peakon(c))
        try:
            ef = ef_difference_bounds(v, c, eps)
            mh = max_height_bound(v, c, eps)
        except PreconditionUnmet:
            skipped += 1
            continue
        margins_E.append(ef.margin_E)
        margins_F.append(ef.margin_F)
        margins_M.append(mh.bound - mh.deviation)
    results["perturbed_checked"] = len(margins_M)
    results["perturbed_skipped"] = skipped
    if margins_M:
        audits += [Audit("ef_difference_E", min(margins_E), 0.0, lower=True),
                   Audit("ef_difference_F", min(margins_F), 0.0, lower=True),
                   Audit("max_height", min(margins_M), 0.0, lower=True)]

    # train energy identity, cross terms below C exp(-L/4)
    for L in blk.L_values:
        speeds = np.sort(rng.uniform(0.3, 3.0, 3))
        z = np.cumsum(np.r_[0.0, L / 2 + rng.uniform(0.01, L / 2, 2)])
        R = train(speeds, z)
        v = perturb(R, 1e-3, int(rng.integers(2 ** 63)))
        ti = train_identity(v, speeds, z, L)
        tag = f"train_identity_L{L:g}"
        # an envelope below the rounding floor cannot be audited; use the
        # absolute tolerance there instead
        if ti.envelope > blk.far_tol:
            audits.append(Audit(tag, ti.gap, ti.envelope))
        else:
            audits.append(Audit(tag + "_absolute", ti.gap, blk.far_tol))

    # almost monotonicity on a separated 2-train
    speeds = np.array([1.0, 2.0])
    L = 20.0
    traj = integrate(OdeState(0.0, train(speeds, [0.0, L])), 20.0, IntegratorSettings(sample_dt=1.0))
    mono = monotonicity_audit(traj, np.sqrt(L) / 8.0, speeds)
    audits.append(Audit("almost_monotonicity", mono.max_excess, mono.envelope))

    kc = check_orthogonality_kernel(8)
    audits.append(Audit("kernel_increasing", kc.min_slope, 0.0, lower=True))
    return results, audits


def _run_lemma(sc, ctx):
    return lemma_audits(sc.block("audit"), sc.seed, sc.initial)


_RUNNERS = {
    "ode-sim": _run_ode,
    "pde-sim": _run_pde,
    "spectrum": _run_spectrum,
    "asymptotics": _run_asymptotics,
    "stability-report": _run_stability,
    "lemma-audit": _run_lemma,
}


def _versions():
    import scipy
    import mpmath
    from importlib import metadata

    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"package": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


def _numeric_fields(obj, prefix=""):
    out = []
    if isinstance(obj, dict):
        for k, v in obj.items():
            out += _numeric_fields(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        if obj and all(isinstance(v, dict) and "name" in v for v in obj):
            for v in obj:
                out += _numeric_fields({k: x for k, x in v.items() if k != "name"},
                                       f"{prefix}[{v['name']}]")
        elif any(_is_number(v) or isinstance(v, list) for v in obj):
            out.append(prefix)
    elif _is_number(obj):
        out.append(prefix)
    return out


def _error_record(exc):
    rec = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("t", "i", "j", "gap", "h", "max_slope", "line", "field"):
        if hasattr(exc, attr):
            v = getattr(exc, attr)
            rec[attr] = v.item() if isinstance(v, np.generic) else v
    return rec


def _json_safe(obj):
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def run(scenario, write=True):
    """Execute a scenario, write its files and return the exit status with the report.

    Exit status is :data:`EXIT_PASS` iff every audit passes,
    :data:`EXIT_AUDIT_FAILURE` if one fails and :data:`EXIT_NUMERIC` if a
    module error (collision, blow-up, ...) stopped the run; the error is then
    recorded in the report.
    """
    ctx = {}
    report = {"kind": scenario.kind, "seed": scenario.seed}
    try:
        results, audits = _RUNNERS[scenario.kind](scenario, ctx)
    except PeakonError as exc:
        report.update(status="error", error=_error_record(exc), audits=[])
        code = EXIT_NUMERIC
    else:
        report["results"] = _plain(results)
        report["audits"] = [a.as_dict() for a in audits]
        ok = all(a.passed for a in audits)
        report["status"] = "pass" if ok else "fail"
        code = EXIT_PASS if ok else EXIT_AUDIT_FAILURE
    report["exit_code"] = code
    report = _json_safe(report)
    paths = {}
    if write:
        prefix = Path(scenario.out)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        if "csv" in ctx:
            paths["csv"] = str(prefix.with_name(prefix.name + ".csv"))
            _write_csv(paths["csv"], *ctx["csv"])
        paths["report"] = str(prefix.with_name(prefix.name + ".report.json"))
        paths["manifest"] = str(prefix.with_name(prefix.name + ".manifest.json"))
        manifest = {
            "config": scenario.echo(),
            "config_text": scenario.source,
            "seed": scenario.seed,
            "rng": "numpy PCG64",
            "versions": _versions(),
            "argv": list(sys.argv),
            "outputs": paths,
            "csv_columns": ctx["csv"][0] if "csv" in ctx else [],
            "report_fields": sorted(_numeric_fields(report)),
        }
        with open(paths["report"], "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
        with open(paths["manifest"], "w", encoding="utf-8") as fh:
            json.dump(_json_safe(manifest), fh, indent=2)
    return RunResult(code, report, paths)
