"""Quantitative audits of peakon and peakon-train stability.

The identities here are exact algebra on H^1 pairings and hold to rounding;
the inequalities come with a measured slack. Localized energies use the
smoothed-step weights of :mod:`novipeak.kernels`, and bump positions along a
trajectory are tracked twice: by exact interval maxima and by shifts solving
orthogonality conditions against mollified peakon derivatives.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid

from .errors import (BumpLost, InvalidGrid, JacobianSingular, NewtonDiverged,
                     PreconditionUnmet, SeparationTooSmall)
from .field import (GridField, PeakonConfig, e_density, energy_E, eval_field,
                    eval_field_deriv,
                    f_density, field_maximum, functional_F, hypothesis_norm,
                    peakon, piecewise_quad, quad_nodes, train)
from .kernels import WeightParams, gauss_legendre, mollifier_rho, partition_phi, weight_psi

__all__ = [
    "single_peakon_identity",
    "f_upper_bound_check",
    "FBoundCheck",
    "ef_difference_bounds",
    "EFDifferenceReport",
    "max_height_bound",
    "MaxHeightReport",
    "train_identity",
    "TrainIdentity",
    "localized_energies",
    "LocalizedSample",
    "LocalizedEnergyReport",
    "ModulationTrack",
    "MollifiedKernel",
    "KernelCheck",
    "check_orthogonality_kernel",
    "peakon_pairing",
    "modulation_solve",
    "track_maxima",
    "monotonicity_audit",
    "orbital_distance",
    "orbital_bound",
    "ALMOST_MONOTONE_CONSTANT",
    "TRAIN_ORBITAL_CONSTANT",
]

# Universal constants of the almost-monotonicity envelope and of the
# per-bump train bound. The analysis leaves them non-explicit; both were
# set once from reference runs (measured ratios well below one) and frozen.
ALMOST_MONOTONE_CONSTANT = 1.0
TRAIN_ORBITAL_CONSTANT = 1.0


# ---------------------------------------------------------------------------
# single peakon


def single_peakon_identity(v, c, z):
    """Both sides of the H^1 distance identity to a peakon at ``z``.

    ``lhs = ||v - phi_c(. - z)||^2`` and
    ``rhs = E(v) - E(phi_c) - 4 sqrt(c) (v(z) - sqrt(c))``.
    """
    if not c > 0:
        raise ValueError("speed must be positive")
    lhs = energy_E(v - peakon(c, z))
    rhs = energy_E(v) - 2.0 * c - 4.0 * np.sqrt(c) * (float(eval_field(v, z)) - np.sqrt(c))
    return lhs, rhs


@dataclass(frozen=True)
class FBoundCheck:
    F: float
    bound: float
    slack: float
    M: float
    argmax: float


def f_upper_bound_check(v):
    """Check ``F(v) <= (4/3) M^2 E(v) - (4/3) M^4`` with ``M = max v``."""
    xi, M = field_maximum(v)
    F = functional_F(v)
    bound = 4.0 / 3.0 * M * M * energy_E(v) - 4.0 / 3.0 * M ** 4
    return FBoundCheck(F, bound, bound - F, M, xi)


@dataclass(frozen=True)
class EFDifferenceReport:
    hypothesis: float
    eps: float
    dE: float
    dF: float
    bound_E: float
    bound_F: float

    @property
    def margin_E(self):
        return self.bound_E - self.dE

    @property
    def margin_F(self):
        return self.bound_F - self.dF

    @property
    def holds(self):
        return self.margin_E >= 0 and self.margin_F >= 0


def _check_small(c, eps):
    if not c > 0:
        raise ValueError("speed must be positive")
    if not 0 < eps < min(1.0, c):
        raise PreconditionUnmet(f"eps={eps:.3g} must lie in (0, min(1, c))")


def ef_difference_bounds(v, c, eps):
    """Differences of ``E`` and ``F`` from their peakon values.

    The hypothesis ``||v - phi_c||_{H^1} + ||v_x - phi_c'||_{L^4} <= eps`` is
    measured first and :class:`PreconditionUnmet` raised if it fails.
    """
    _check_small(c, eps)
    phi = peakon(c)
    hyp = hypothesis_norm(v, phi)
    if hyp > eps:
        raise PreconditionUnmet(f"hypothesis norm {hyp:.3g} exceeds eps={eps:.3g}")
    dE = abs(energy_E(v) - 2.0 * c)
    dF = abs(functional_F(v) - 4.0 / 3.0 * c * c)
    return EFDifferenceReport(hyp, eps, dE, dF, 4.0 * np.sqrt(c) * eps, 120.0 * c ** 1.5 * eps)


@dataclass(frozen=True)
class MaxHeightReport:
    M: float
    deviation: float
    bound: float

    @property
    def holds(self):
        return self.deviation <= self.bound


def max_height_bound(v, c, eps):
    """Compare the maximum of ``v`` with ``sqrt(c)`` given nearby ``E`` and ``F``.

    Requires ``|E(v) - 2c| <= 4 sqrt(c) eps`` and
    ``|F(v) - (4/3)c^2| <= 120 c^(3/2) eps``; the claimed bound on
    ``|max v - sqrt(c)|`` is ``10 c^(3/4) sqrt(eps)``.
    """
    _check_small(c, eps)
    if abs(energy_E(v) - 2.0 * c) > 4.0 * np.sqrt(c) * eps:
        raise PreconditionUnmet("E(v) is not within 4 sqrt(c) eps of 2c")
    if abs(functional_F(v) - 4.0 / 3.0 * c * c) > 120.0 * c ** 1.5 * eps:
        raise PreconditionUnmet("F(v) is not within 120 c^1.5 eps of 4c^2/3")
    _, M = field_maximum(v)
    return MaxHeightReport(M, abs(M - np.sqrt(c)), 10.0 * c ** 0.75 * np.sqrt(eps))


def orbital_distance(cfg, c):
    """``inf_z ||u - phi_c(. - z)||_{H^1}``.

    By the distance identity the infimum is attained where ``u`` is largest.
    """
    xi, M = field_maximum(cfg)
    if not np.isfinite(xi):
        return float(np.sqrt(energy_E(cfg) + 2.0 * c))
    return float(np.sqrt(energy_E(cfg - peakon(c, xi))))


def orbital_bound(c, eps):
    """``2 c^(3/8) (4 + max(1, c^(3/8))) eps``."""
    r = c ** 0.375
    return 2.0 * r * (4.0 + max(1.0, r)) * eps


# ---------------------------------------------------------------------------
# trains


@dataclass(frozen=True)
class TrainIdentity:
    lhs: float
    rhs: float
    gap: float
    envelope_constant: float
    L: float

    @property
    def envelope(self):
        return self.envelope_constant * np.exp(-self.L / 4.0)


def _as_train(speeds, z, ascending=True):
    speeds = np.asarray(speeds, dtype=float)
    z = np.asarray(z, dtype=float)
    if speeds.shape != z.shape or speeds.ndim != 1 or speeds.size == 0:
        raise ValueError("speeds and shifts must be equal-length vectors")
    if np.any(speeds <= 0):
        raise ValueError("speeds must be positive")
    if ascending and np.any(np.diff(speeds) <= 0):
        raise ValueError("speeds must be strictly ascending")
    return speeds, z


def train_identity(v, speeds, z, L):
    """Energy identity for a peakon train up to exponentially small cross terms.

    ``lhs = E(v) - sum E(phi_ci)`` and
    ``rhs = ||v - R_z||^2 + 4 sum sqrt(c_i) (v(z_i) - sqrt(c_i))``; the gap is
    exactly ``4 sum_{i<j} sqrt(c_i c_j) exp(-|z_i - z_j|)``, which is below
    ``C exp(-L/4)`` with ``C = 4 sum_{i<j} sqrt(c_i c_j)`` whenever the shifts
    are ``L/2``-separated.
    """
    speeds, z = _as_train(speeds, z)
    if not L > 0:
        raise ValueError("L must be positive")
    if z.size > 1 and np.min(np.diff(z)) <= L / 2:
        raise SeparationTooSmall(f"shifts closer than L/2 = {L / 2:.3g}")
    R = train(speeds, z)
    lhs = energy_E(v) - 2.0 * speeds.sum()
    rhs = energy_E(v - R) + 4.0 * float(np.sqrt(speeds) @ (eval_field(v, z) - np.sqrt(speeds)))
    s = np.sqrt(speeds)
    C = 4.0 * float((np.sum(np.outer(s, s)) - s @ s) / 2.0)
    return TrainIdentity(lhs, rhs, abs(lhs - rhs), C, float(L))


# ---------------------------------------------------------------------------
# localized energies


@dataclass(frozen=True)
class LocalizedSample:
    """Weighted functionals at one instant; arrays indexed by bump."""

    I: np.ndarray
    E: np.ndarray
    F: np.ndarray
    M: np.ndarray

    @property
    def f_slack(self):
        """``(4/3) M_i^2 E_i - (4/3) M_i^4 - F_i``."""
        return 4.0 / 3.0 * self.M ** 2 * self.E - 4.0 / 3.0 * self.M ** 4 - self.F


def localized_energies(field, centers, K, slope=1.0):
    """``I_i = int (u^2+u_x^2) Psi_i``, ``E_i``/``F_i`` weighted by ``Phi_i``.

    ``centers[0]`` may be ``-inf`` (then ``Psi_1 = 1``). ``M_i`` is the
    maximum of ``u`` on ``[centers[i], centers[i+1]]``. A
    :class:`PeakonConfig` is integrated with Gauss-Legendre panels fine on the
    weight scale ``K slope``; a :class:`GridField` with the trapezoid rule.
    """
    params = WeightParams(tuple(centers), K, slope)
    n = params.n
    bounds = list(params.centers) + [np.inf]
    if isinstance(field, PeakonConfig):
        finite = [c for c in params.centers if np.isfinite(c)]
        x, w = quad_nodes(field, breaks=finite, pad=40.0, max_segment=min(1.0, K * slope / 2),
                          panel=min(1.0, K * slope / 2))
        u, ux = eval_field(field, x), eval_field_deriv(field, x)
        M = np.array([field_maximum(field, bounds[i] if i else -np.inf, bounds[i + 1])[1]
                      for i in range(n)])

        def integrate(vals):
            return vals @ w
    elif isinstance(field, GridField):
        x = field.x
        u, ux = field.u, field.slope()
        M = np.empty(n)
        for i in range(n):
            lo = bounds[i] if i else -np.inf
            inside = (x >= lo) & (x <= bounds[i + 1])
            M[i] = u[inside].max() if inside.any() else np.nan

        def integrate(vals):
            return trapezoid(vals, dx=field.dx, axis=-1)
    else:
        raise InvalidGrid("field must be a PeakonConfig or a GridField")
    e, f = e_density(u, ux), f_density(u, ux)
    Psi = np.stack([weight_psi(params, i, x) for i in range(n)])
    Phi = partition_phi(params, x)
    return LocalizedSample(integrate(Psi * e), integrate(Phi * e), integrate(Phi * f), M)


# ---------------------------------------------------------------------------
# modulation


def peakon_pairing(y, d1=0, d2=0, nodes=32, pad=40.0):
    """``int phi^(d1)(x) phi^(d2)(x - y) dx`` for ``phi = exp(-|x|)`` by quadrature.

    Gauss-Legendre on unit panels between the kinks ``0`` and ``y``,
    truncated ``pad`` units beyond them. ``d1, d2`` are 0 or 1.
    """
    def deriv(x, d):
        e = np.exp(-np.abs(x))
        return e if d == 0 else -np.sign(x) * e

    y = float(y)
    lo, hi = min(0.0, y), max(0.0, y)
    t, w = gauss_legendre(nodes)
    total = 0.0
    for a, b in ((lo - pad, lo), (lo, hi), (hi, hi + pad)):
        m = max(1, int(np.ceil(b - a)))
        edges = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(edges)[:, None]
        x = 0.5 * (edges[:-1, None] + edges[1:, None]) + half * t
        total += float(np.sum(half * w * deriv(x, d1) * deriv(x - y, d2)))
    return total


class MollifiedKernel:
    """``G(d) = int phi(x - d) (rho_n * phi)'(x) dx`` and its derivative.

    Since ``int phi(x - a) phi'(x) dx = -a exp(-|a|)``, ``G`` is the
    ``rho_n``-average of that function; it is computed by Gauss-Legendre on
    the mollifier support, split at the kink ``s = d``. Mollifier values on the
    reference nodes are tabulated once per instance.
    """

    def __init__(self, n0, nodes=64):
        if int(n0) != n0 or n0 < 1:
            raise ValueError("mollification index must be a positive integer")
        self.n0 = int(n0)
        self.h = 1.0 / self.n0
        self._t, self._w = gauss_legendre(nodes)

    def _average(self, d, profile):
        d = np.asarray(d, dtype=float)
        m = np.clip(d, -self.h, self.h)
        out = np.zeros(d.shape)
        for lo, hi in ((-self.h, m), (m, self.h)):
            half = 0.5 * (hi - lo)
            s = (0.5 * (hi + lo))[..., None] + half[..., None] * self._t
            a = np.abs(d[..., None] - s)
            out += half * ((profile(d[..., None] - s, a) * mollifier_rho(self.n0, s)) @ self._w)
        return out

    def G(self, d):
        return self._average(d, lambda r, a: -r * np.exp(-a))

    def dG(self, d):
        return self._average(d, lambda r, a: -(1.0 - a) * np.exp(-a))


@dataclass(frozen=True)
class KernelCheck:
    n0: int
    increasing: bool
    min_slope: float


@lru_cache(maxsize=None)
def check_orthogonality_kernel(n0, samples=1001):
    """Is ``y -> int phi (rho_n0 * phi)'(. - y)`` strictly increasing on [-1/2, 1/2]?

    That map equals ``G(-y)``; its derivative ``-G'(-y)`` is sampled densely
    and the sampled values must also increase.
    """
    k = MollifiedKernel(n0)
    y = np.linspace(-0.5, 0.5, samples)
    vals = k.G(-y)
    slopes = -k.dG(-y)
    ok = bool(np.all(slopes > 0) and np.all(np.diff(vals) > 0))
    return KernelCheck(int(n0), ok, float(slopes.min()))


@lru_cache(maxsize=None)
def _kernel(n0):
    chk = check_orthogonality_kernel(n0)
    if not chk.increasing:
        raise ValueError(f"mollification index {n0} fails the kernel monotonicity check")
    return MollifiedKernel(n0)


def _orthogonality(u, sq, shifts, kern):
    # Y_i = sqrt(c_i) [ sum_k p_k G(q_k - x_i) - sum_j sqrt(c_j) G(x_j - x_i) ]
    du = u.q[None, :] - shifts[:, None]
    dr = shifts[None, :] - shifts[:, None]
    Y = sq * (kern.G(du) @ u.p - kern.G(dr) @ sq)
    gu = kern.dG(du) @ u.p
    gr = kern.dG(dr) * sq[None, :]
    J = -sq[:, None] * gr
    np.fill_diagonal(J, sq * (-gu + gr.sum(axis=1) - np.diag(gr)))
    return Y, J


def modulation_solve(u, speeds, init_shifts, n0=8, *, max_iter=50, max_move=1.0, tol=1e-13):
    """Shifts ``x_1 < ... < x_n`` making ``u - R_x`` orthogonal to ``(rho_n0 * phi_ci)'(. - x_i)``.

    Damped Newton started at ``init_shifts``. The Jacobian has diagonal
    ``sqrt(c_i) [-sum_k p_k G'(q_k - x_i) + sum_{j != i} sqrt(c_j) G'(x_j - x_i)]``
    and off-diagonal ``-sqrt(c_i c_j) G'(x_j - x_i)``.

    Raises
    ------
    JacobianSingular
        If the Newton matrix is numerically singular.
    NewtonDiverged
        If the iteration leaves ``max_move`` of the start, loses the
        ordering, or does not converge in ``max_iter`` steps.
    """
    speeds = np.asarray(speeds, dtype=float)
    x0 = np.asarray(init_shifts, dtype=float)
    speeds, x0 = _as_train(speeds, x0, ascending=False)
    if np.any(np.diff(x0) <= 0):
        raise ValueError("initial shifts must be strictly ascending")
    kern = _kernel(n0)
    sq = np.sqrt(speeds)
    x = x0.copy()
    Y, J = _orthogonality(u, sq, x, kern)
    for _ in range(max_iter):
        res = np.linalg.norm(Y)
        if res == 0.0:
            return x
        if np.linalg.cond(J) > 1e13:
            raise JacobianSingular("orthogonality Jacobian is singular")
        dx = np.linalg.solve(J, -Y)
        step = 1.0
        while True:
            x_new = x + step * dx
            Y_new, J_new = _orthogonality(u, sq, x_new, kern)
            if np.linalg.norm(Y_new) <= (1.0 - 1e-4 * step) * res or step < 1 / 64:
                break
            step *= 0.5
        x, Y, J = x_new, Y_new, J_new
        if np.any(np.diff(x) <= 0) or np.max(np.abs(x - x0)) > max_move:
            raise NewtonDiverged("modulation iterate left the Newton basin")
        if np.max(np.abs(step * dx)) <= tol * max(1.0, np.max(np.abs(x))):
            return x
    raise NewtonDiverged(f"no convergence in {max_iter} iterations")


@dataclass(frozen=True)
class ModulationTrack:
    """Per-sample bump positions of a trajectory.

    ``shifts`` solve the orthogonality conditions; ``argmax``/``height`` are
    the exact maxima of ``u`` on the intervals between midpoints of
    consecutive shifts; ``per_bump_distance[k, i]`` is the H^1 norm of
    ``u - R_x`` restricted to interval ``i``, with ``R_x`` the train placed
    at the maxima.
    """

    times: np.ndarray
    shifts: np.ndarray
    argmax: np.ndarray
    height: np.ndarray
    per_bump_distance: np.ndarray

    @property
    def maxima(self):
        return [list(zip(a, m)) for a, m in zip(self.argmax, self.height)]

    @property
    def midpoints(self):
        """Interior interval edges ``y_2 .. y_n`` per sample."""
        return 0.5 * (self.shifts[:, 1:] + self.shifts[:, :-1])

    @property
    def gaps(self):
        return np.diff(self.argmax, axis=1)

    @property
    def shift_argmax_gap(self):
        return np.abs(self.argmax - self.shifts)

    @property
    def train_distance(self):
        return np.sqrt(np.sum(self.per_bump_distance ** 2, axis=1))


def _bump_positions(cfg, speeds, shifts):
    n = shifts.size
    y = np.r_[-np.inf, 0.5 * (shifts[1:] + shifts[:-1]), np.inf]
    xs, Ms = np.empty(n), np.empty(n)
    for i in range(n):
        xi, Mi = field_maximum(cfg, y[i], y[i + 1])
        if not np.isfinite(xi) or xi == y[i] or xi == y[i + 1]:
            raise BumpLost(f"maximum of bump {i} left its interval")
        xs[i], Ms[i] = xi, Mi
    w = cfg - train(speeds, xs)
    dist = np.array([np.sqrt(max(piecewise_quad(w, e_density, degree=2, a=y[i], b=y[i + 1]), 0.0))
                     for i in range(n)])
    return xs, Ms, dist


def track_maxima(traj, speeds, init_shifts=None, n0=8):
    """Track ``len(speeds)`` bumps along a sampled trajectory.

    The orthogonality shifts at each sample are seeded from the previous ones
    advanced by ``c_i dt``. ``init_shifts`` defaults to the initial positions
    and is required when the trajectory has more peaks than ``speeds``.
    """
    speeds = np.asarray(speeds, dtype=float)
    n = speeds.size
    if init_shifts is None:
        if traj.q.shape[1] != n:
            raise ValueError("init_shifts required when peaks and speeds differ in number")
        init_shifts = traj.q[0]
    guess = np.asarray(init_shifts, dtype=float)
    m = len(traj)
    shifts, xs, Ms, dist = (np.empty((m, n)) for _ in range(4))
    t_prev = traj.t[0]
    for k in range(m):
        cfg = traj.config(k)
        guess = guess + speeds * (traj.t[k] - t_prev)
        shifts[k] = modulation_solve(cfg, speeds, guess, n0)
        xs[k], Ms[k], dist[k] = _bump_positions(cfg, speeds, shifts[k])
        guess, t_prev = shifts[k], traj.t[k]
    return ModulationTrack(traj.t.copy(), shifts, xs, Ms, dist)


@dataclass(frozen=True)
class LocalizedEnergyReport:
    """Localized energies along a trajectory; arrays are (samples, bumps)."""

    times: np.ndarray
    I: np.ndarray
    Ei: np.ndarray
    Fi: np.ndarray
    M: np.ndarray
    K: float
    L: float
    envelope: float

    @property
    def monotonicity_excess(self):
        return self.I - self.I[0]

    @property
    def f_slack(self):
        return 4.0 / 3.0 * self.M ** 2 * self.Ei - 4.0 / 3.0 * self.M ** 4 - self.Fi

    @property
    def max_excess(self):
        """Largest excess over the interior weights (the first is the total energy)."""
        if self.I.shape[1] < 2:
            return 0.0
        return float(self.monotonicity_excess[:, 1:].max())

    @property
    def passes(self):
        return self.max_excess <= self.envelope


def monotonicity_audit(traj, K, speeds=None, track=None, slope=1.0):
    """Localized energies with weights centered at the tracked midpoints.

    The envelope is ``C E(u0)^2 / sigma0 exp(-L / (8K))`` with ``L`` the
    smallest initial gap of the shifts, ``sigma0 = min(c_1, c_i - c_{i-1}) / 4``
    and ``C = ALMOST_MONOTONE_CONSTANT``.
    """
    if speeds is None:
        speeds = traj.p[0] ** 2
    speeds = np.asarray(speeds, dtype=float)
    n = speeds.size
    if track is None:
        track = track_maxima(traj, speeds)
    m = len(traj)
    I, Ei, Fi, M = (np.empty((m, n)) for _ in range(4))
    y = track.midpoints
    for k in range(m):
        s = localized_energies(traj.config(k), np.r_[-np.inf, y[k]], K, slope)
        I[k], Ei[k], Fi[k], M[k] = s.I, s.E, s.F, s.M
    if n > 1:
        L = float(np.min(np.diff(track.shifts[0])))
        sigma0 = 0.25 * min(speeds[0], np.min(np.diff(speeds)))
        envelope = ALMOST_MONOTONE_CONSTANT * traj.E[0] ** 2 / sigma0 * np.exp(-L / (8.0 * K))
    else:
        L, envelope = np.inf, 0.0
    return LocalizedEnergyReport(traj.t.copy(), I, Ei, Fi, M, float(K), L, float(envelope))
