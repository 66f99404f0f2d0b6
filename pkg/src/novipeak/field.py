"""Multipeakon fields ``u(x) = sum_i p_i exp(-|x - q_i|)`` and their functionals.

Any finite combination of peakons is, outside ``[min q, max q]``, a single
exponential: ``u = a exp(x - q_min)`` on the left and ``u = b exp(q_max - x)``
on the right, with ``u_x = +u`` and ``u_x = -u`` respectively. Integrals of
homogeneous polynomials in ``(u, u_x)`` therefore have closed-form tails, and
the interior is piecewise analytic with kinks only at the ``q_i``.
"""

from dataclasses import dataclass, field as dc_field
from math import ceil

import numpy as np
from scipy.integrate import trapezoid

from .errors import InvalidGrid
from .kernels import gauss_legendre

__all__ = [
    "PeakonConfig",
    "GridField",
    "EnergyPair",
    "peakon",
    "train",
    "eval_field",
    "eval_field_deriv",
    "energy_E",
    "functional_F",
    "energy_pair_grid",
    "h1_inner_exact",
    "h1_distance",
    "slope_l4_distance",
    "hypothesis_norm",
    "reconstruct_from_momentum",
    "momentum_total_variation",
    "field_maximum",
    "piecewise_quad",
    "quad_nodes",
    "f_density",
    "e_density",
]


def _as_vec(v):
    a = np.array(v, dtype=float).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PeakonConfig:
    """Positions ``q`` and amplitudes ``p`` of a peakon superposition.

    Unordered positions and mixed-sign amplitudes are allowed; use
    :meth:`is_ordered_positive` where the dynamics requires more.
    """

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q, p = _as_vec(self.q), _as_vec(self.p)
        if q.size == 0 or q.size != p.size:
            raise ValueError("q and p must be non-empty and of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("q and p must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return self.q.size

    def is_ordered_positive(self):
        return bool(np.all(self.p > 0) and np.all(np.diff(self.q) > 0))

    def shifted(self, s):
        return PeakonConfig(self.q + s, self.p)

    def scaled(self, a):
        return PeakonConfig(self.q, a * self.p)

    def __add__(self, other):
        return PeakonConfig(np.r_[self.q, other.q], np.r_[self.p, other.p])

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def __eq__(self, other):
        if not isinstance(other, PeakonConfig):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.p, other.p)

    def __hash__(self):
        return hash((self.q.tobytes(), self.p.tobytes()))


def peakon(c, z=0.0):
    """Single peakon ``sqrt(c) exp(-|x - z|)`` of speed ``c``."""
    if c < 0:
        raise ValueError("speed must be nonnegative")
    return PeakonConfig([z], [np.sqrt(c)])


def train(speeds, z):
    """Sum of peakons ``R_z = sum_i sqrt(c_i) exp(-|x - z_i|)``."""
    speeds = np.asarray(speeds, dtype=float)
    if np.any(speeds < 0):
        raise ValueError("speeds must be nonnegative")
    return PeakonConfig(z, np.sqrt(speeds))


@dataclass(frozen=True)
class GridField:
    """Uniform samples ``u[k] = u(x0 + k dx)``; ``ux`` optional."""

    x0: float
    dx: float
    u: np.ndarray
    ux: np.ndarray = dc_field(default=None)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        object.__setattr__(self, "u", u)
        if u.ndim != 1 or u.size < 8:
            raise InvalidGrid("grid needs at least 8 points")
        if not self.dx > 0:
            raise InvalidGrid("dx must be positive")
        if self.ux is not None:
            ux = np.asarray(self.ux, dtype=float)
            if ux.shape != u.shape:
                raise InvalidGrid("ux must match u in length")
            object.__setattr__(self, "ux", ux)

    @property
    def N(self):
        return self.u.size

    @property
    def x(self):
        return self.x0 + self.dx * np.arange(self.N)

    def slope(self):
        """``ux`` if stored, else centered differences (one-sided at the ends)."""
        if self.ux is not None:
            return self.ux
        return np.gradient(self.u, self.dx)

    @classmethod
    def sample(cls, cfg, x0, dx, N, with_slope=True):
        x = x0 + dx * np.arange(N)
        ux = eval_field_deriv(cfg, x) if with_slope else None
        return cls(x0, dx, eval_field(cfg, x), ux)


@dataclass(frozen=True)
class EnergyPair:
    E: float
    F: float


def _kernel(cfg, x):
    x = np.asarray(x, dtype=float)
    d = x[..., None] - cfg.q
    return d, np.exp(-np.abs(d))


def eval_field(cfg, x):
    """``u(x) = sum_i p_i exp(-|x - q_i|)``."""
    _, e = _kernel(cfg, x)
    return e @ cfg.p


def eval_field_deriv(cfg, x):
    """A.e. derivative ``u_x``, using ``sgn(0) = 0`` at the peaks."""
    d, e = _kernel(cfg, x)
    return (-np.sign(d) * e) @ cfg.p


def _gram(a, b):
    return np.exp(-np.abs(a.q[:, None] - b.q[None, :]))


def h1_inner_exact(a, b):
    """Closed-form ``<u_a, u_b>_{H^1} = 2 sum_ij p_i r_j exp(-|q_i - s_j|)``."""
    return float(2.0 * a.p @ _gram(a, b) @ b.p)


def energy_E(cfg):
    """``E(u) = int u^2 + u_x^2`` in closed form."""
    return max(h1_inner_exact(cfg, cfg), 0.0)


def h1_distance(a, b):
    """``||u_a - u_b||_{H^1}``, exact."""
    return np.sqrt(energy_E(a - b))


def e_density(u, ux):
    return u * u + ux * ux


def f_density(u, ux):
    u2, ux2 = u * u, ux * ux
    return u2 * u2 + 2.0 * u2 * ux2 - ux2 * ux2 / 3.0


def _panels(breaks, max_segment, panel):
    edges = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        length = b - a
        m = ceil(length / panel) if length > max_segment else 1
        edges.extend(a + length * np.arange(1, m + 1) / m)
    return np.asarray(edges)


def quad_nodes(cfg, *, breaks=(), a=-np.inf, b=np.inf, pad=40.0,
               max_segment=10.0, panel=1.0, nodes=32):
    """Composite Gauss-Legendre nodes and weights adapted to the kinks of ``cfg``.

    Segments run between consecutive kinks and extra ``breaks`` clipped to
    ``[a, b]``; infinite ends are truncated ``pad`` units past the extreme
    kinks. Segments longer than ``max_segment`` are cut into panels of length
    at most ``panel``.
    """
    pts = np.unique(np.r_[cfg.q, np.asarray(breaks, dtype=float)])
    pts = pts[np.isfinite(pts)]
    if a == -np.inf:
        a = min(pts[0], b) - pad
    if b == np.inf:
        b = max(pts[-1], a) + pad
    if not b > a:
        return np.empty(0), np.empty(0)
    edges = _panels(np.r_[a, pts[(pts > a) & (pts < b)], b], max_segment, panel)
    t, w = gauss_legendre(nodes)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    return (0.5 * (lo + hi) + half * t).ravel(), (half * w).ravel()


def piecewise_quad(cfg, integrand, *, degree=None, weight=None, breaks=(),
                   a=-np.inf, b=np.inf, pad=40.0, max_segment=10.0, panel=1.0,
                   nodes=32):
    """Integrate ``integrand(u, u_x)`` of the field ``cfg`` over ``[a, b]``.

    If ``degree`` is given and ``weight`` is None the integrand must be
    homogeneous of that degree in ``(u, u_x)``; infinite ends beyond the
    extreme peaks are then integrated in closed form, since the field is a
    single exponential there. Otherwise infinite ends are truncated ``pad``
    units past the extreme kinks (see :func:`quad_nodes`), and ``weight(x)``
    multiplies the integrand.
    """
    if not a < b:
        return 0.0
    total = 0.0
    if degree is not None and weight is None:
        if a == -np.inf:
            a = min(cfg.q.min(), b)
            ua = float(eval_field(cfg, a))
            total += float(integrand(np.array(ua), np.array(ua))) / degree
        if b == np.inf:
            b = max(cfg.q.max(), a)
            ub = float(eval_field(cfg, b))
            total += float(integrand(np.array(ub), np.array(-ub))) / degree
    x, w = quad_nodes(cfg, breaks=breaks, a=a, b=b, pad=pad,
                      max_segment=max_segment, panel=panel, nodes=nodes)
    if x.size:
        vals = integrand(eval_field(cfg, x), eval_field_deriv(cfg, x))
        if weight is not None:
            vals = vals * weight(x)
        total += float(w @ vals)
    return total


def functional_F(cfg):
    """``F(u) = int u^4 + 2 u^2 u_x^2 - u_x^4 / 3`` by piecewise quadrature."""
    return piecewise_quad(cfg, f_density, degree=4)


def slope_l4_distance(a, b):
    """``||u_a,x - u_b,x||_{L^4}``."""
    val = piecewise_quad(a - b, lambda u, ux: ux ** 4, degree=4)
    return max(val, 0.0) ** 0.25


def hypothesis_norm(v, w):
    """``||v - w||_{H^1} + ||v_x - w_x||_{L^4}``, the size of a perturbation."""
    return h1_distance(v, w) + slope_l4_distance(v, w)


def energy_pair_grid(field):
    """Trapezoid-rule ``E`` and ``F`` of a sampled field."""
    if not isinstance(field, GridField):
        raise InvalidGrid("expected a GridField")
    u, ux = field.u, field.slope()
    E = trapezoid(e_density(u, ux), dx=field.dx)
    F = trapezoid(f_density(u, ux), dx=field.dx)
    return EnergyPair(float(E), float(F))


def reconstruct_from_momentum(masses):
    """Field ``p * y`` for a point-mass momentum density ``y = sum w_k delta_{a_k}``.

    Since ``exp(-|x|) - (exp(-|x|))'' = 2 delta``, each mass ``w`` at ``a``
    becomes a peak of amplitude ``w / 2`` at ``a``.
    """
    masses = list(masses)
    if not masses:
        raise ValueError("need at least one point mass")
    loc, w = np.asarray(masses, dtype=float).T
    return PeakonConfig(loc, 0.5 * w)


def momentum_total_variation(cfg):
    """Total variation of the momentum density ``u - u_xx = 2 sum p_i delta_{q_i}``."""
    order = np.argsort(cfg.q, kind="stable")
    q, p = cfg.q[order], cfg.p[order]
    # coincident peaks merge into one mass
    _, idx = np.unique(q, return_index=True)
    return float(2.0 * np.abs(np.add.reduceat(p, idx)).sum())


def field_maximum(cfg, a=-np.inf, b=np.inf):
    """Exact ``(argmax, max)`` of ``u`` over ``[a, b]``.

    On each segment between kinks ``u = A e^t + B e^-t``, so candidates are the
    kinks, the finite endpoints and interior critical points where ``A, B < 0``.
    If the supremum is only approached at infinity, the returned point is
    ``+-inf`` with value 0.
    """
    qs = np.unique(cfg.q)
    cand_x = [x for x in qs if a <= x <= b]
    cand_x += [x for x in (a, b) if np.isfinite(x)]
    for lo, hi in zip(qs[:-1], qs[1:]):
        A = float(np.sum(cfg.p[cfg.q >= hi] * np.exp(-(cfg.q[cfg.q >= hi] - lo))))
        B = float(np.sum(cfg.p[cfg.q <= lo] * np.exp(-(lo - cfg.q[cfg.q <= lo]))))
        if A < 0 and B < 0:
            x = lo + 0.5 * np.log(B / A)
            if lo < x < hi and a <= x <= b:
                cand_x.append(x)
    cand_x = np.asarray(cand_x, dtype=float)
    best_x, best = None, -np.inf
    if cand_x.size:
        vals = eval_field(cfg, cand_x)
        k = int(np.argmax(vals))
        best_x, best = float(cand_x[k]), float(vals[k])
    # limits at infinity
    if a == -np.inf and best < 0 and eval_field(cfg, qs[0]) < 0:
        best_x, best = -np.inf, 0.0
    if b == np.inf and best < 0 and eval_field(cfg, qs[-1]) < 0:
        best_x, best = np.inf, 0.0
    return best_x, best
