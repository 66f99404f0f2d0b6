"""Particle dynamics of multipeakons.

The positions and amplitudes of ``u = sum p_i exp(-|x - q_i|)`` obey::

    dq_i/dt = u(q_i)^2
    dp_i/dt = -p_i u(q_i) u_x(q_i)

with ``sgn(0) = 0`` in ``u_x``. Integration uses the Dormand-Prince 5(4)
pair with a PI step-size controller and its 4th order continuous extension
for output sampling.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CollisionDetected, StepSizeUnderflow
from .field import PeakonConfig, energy_E, functional_F

__all__ = [
    "OdeState",
    "IntegratorSettings",
    "Trajectory",
    "ode_rhs",
    "integrate",
    "conservation_report",
    "dopri5",
]


@dataclass(frozen=True)
class OdeState:
    t: float
    cfg: PeakonConfig


@dataclass(frozen=True)
class IntegratorSettings:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = 1.0
    collision_gap: float = 1e-6
    sample_dt: float = 0.1
    diagnostics: bool = True

    def __post_init__(self):
        for name in ("rtol", "atol", "max_step", "collision_gap", "sample_dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rtol < 1e-14:
            raise ValueError("rtol must be >= 1e-14")


@dataclass(frozen=True)
class Trajectory:
    """Samples ``t[k], q[k], p[k]`` with per-sample ``E[k]`` and ``F[k]``."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __len__(self):
        return self.t.size

    def config(self, k):
        return PeakonConfig(self.q[k], self.p[k])

    def __getitem__(self, k):
        return OdeState(float(self.t[k]), self.config(k))

    @property
    def samples(self):
        return [self[k] for k in range(len(self))]

    @property
    def final(self):
        return self[len(self) - 1]

    def velocities(self, k):
        """``dq/dt`` at sample ``k``."""
        return ode_rhs(self.config(k))[0]


def _rhs_arrays(q, p):
    d = q[:, None] - q[None, :]
    e = np.exp(-np.abs(d))
    u = e @ p
    ux = (-np.sign(d) * e) @ p
    return u * u, -p * u * ux


def ode_rhs(cfg):
    """``(dq, dp)`` for the multipeakon system, O(n^2)."""
    return _rhs_arrays(cfg.q, cfg.p)


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array(_A[6] + [0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
_D = np.array([-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
               -10690763975 / 1880347072, 701980252875 / 199316789632,
               -1453857185 / 822651844, 69997945 / 29380423])

_SAFE, _BETA = 0.9, 0.04
_EXPO = 0.2 - 0.75 * _BETA
_FAC_MIN, _FAC_MAX = 0.2, 10.0


def _initial_step(f, t0, y0, f0, direction, rtol, atol, max_step):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    f1 = f(t0 + direction * h0, y0 + direction * h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, max_step)


def dopri5(f, t0, y0, t_end, *, rtol, atol, max_step=np.inf, t_eval=None,
           on_step=None):
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t_end`` (either direction).

    Returns ``(t_eval, Y)`` with ``Y[k]`` the dense-output solution at
    ``t_eval[k]``. ``on_step(t, y)`` is called after every accepted step and
    may raise to abort. Raises :class:`StepSizeUnderflow` if the step
    collapses.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    if t_eval is None:
        t_eval = np.array([t0, t_end], dtype=float)
    t_eval = np.asarray(t_eval, dtype=float)
    out = np.empty((t_eval.size, y.size))
    k_next = 0
    while k_next < t_eval.size and direction * (t_eval[k_next] - t) <= 0:
        out[k_next] = y
        k_next += 1
    if t == t_end:
        return t_eval, out

    K = np.empty((7, y.size))
    K[0] = f(t, y)
    h = _initial_step(f, t, y, K[0], direction, rtol, atol, max_step)
    err_old = 1e-4
    rejected = False

    while direction * (t_end - t) > 0:
        h = min(h, max_step)
        if 16 * np.finfo(float).eps * max(abs(t), 1.0) > h:
            raise StepSizeUnderflow(t, h)
        last = h >= abs(t_end - t)
        if last:
            h = abs(t_end - t)
        hs = direction * h
        for s in range(1, 7):
            ys = y + hs * (np.asarray(_A[s]) @ K[:s])
            K[s] = f(t + _C[s] * hs, ys)
        y_new = ys  # stage 7 argument is the 5th order solution
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((hs * (_E @ K) / sc) ** 2))
        if not np.isfinite(err):
            err = np.inf

        if err <= 1.0:
            t_new = t_end if last else t + hs
            # dense output on (t, t_new]
            if k_next < t_eval.size and direction * (t_eval[k_next] - t_new) <= 0:
                r1 = y
                r2 = y_new - y
                r3 = hs * K[0] - r2
                r4 = r2 - hs * K[6] - r3
                r5 = hs * (_D @ K)
                while k_next < t_eval.size and direction * (t_eval[k_next] - t_new) <= 0:
                    th = (t_eval[k_next] - t) / hs
                    th1 = 1.0 - th
                    out[k_next] = r1 + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5)))
                    k_next += 1
            t, y = t_new, y_new
            K[0] = K[6]
            if on_step is not None:
                on_step(t, y)
            fac = err ** _EXPO / err_old ** _BETA if err > 0 else 0.0
            fac = min(1 / _FAC_MIN, max(1 / _FAC_MAX, fac / _SAFE))
            h_new = h / fac
            if rejected:
                h_new = min(h_new, h)
            err_old = max(err, 1e-4)
            rejected = False
            h = h_new
        else:
            fac = min(1 / _FAC_MIN, err ** _EXPO / _SAFE) if np.isfinite(err) else 1 / _FAC_MIN
            h = h / fac
            rejected = True
    return t_eval, out


def _sample_times(t0, t_end, dt):
    span = t_end - t0
    if span == 0:
        return np.array([t0])
    m = int(np.floor(abs(span) / dt + 1e-9))
    ts = t0 + np.sign(span) * dt * np.arange(m + 1)
    if abs(ts[-1] - t_end) > 1e-9 * max(1.0, abs(t_end)):
        ts = np.r_[ts, t_end]
    else:
        ts[-1] = t_end
    return ts


def integrate(start, t_end, settings=None):
    """Integrate the particle system from ``start`` (an :class:`OdeState`).

    Samples every ``settings.sample_dt`` in the direction of ``t_end`` and
    stops with :class:`CollisionDetected` if two positions come closer than
    ``settings.collision_gap``.
    """
    settings = settings or IntegratorSettings()
    cfg = start.cfg
    n = cfg.n
    order0 = np.argsort(cfg.q, kind="stable")

    def f(t, y):
        dq, dp = _rhs_arrays(y[:n], y[n:])
        return np.concatenate([dq, dp])

    def check(t, y):
        if n < 2:
            return
        q = y[:n]
        order = np.argsort(q, kind="stable")
        gaps = np.diff(q[order])
        k = int(np.argmin(gaps))
        crossed = not np.array_equal(order, order0)
        if gaps[k] < settings.collision_gap or crossed:
            raise CollisionDetected(t, order[k], order[k + 1], gaps[k])

    check(start.t, np.r_[cfg.q, cfg.p])
    ts = _sample_times(start.t, float(t_end), settings.sample_dt)
    ts, Y = dopri5(f, start.t, np.r_[cfg.q, cfg.p], float(t_end),
                   rtol=settings.rtol, atol=settings.atol,
                   max_step=settings.max_step, t_eval=ts, on_step=check)
    q, p = Y[:, :n].copy(), Y[:, n:].copy()
    if settings.diagnostics:
        E = np.array([energy_E(PeakonConfig(a, b)) for a, b in zip(q, p)])
        F = np.array([functional_F(PeakonConfig(a, b)) for a, b in zip(q, p)])
    else:
        E = F = np.full(ts.size, np.nan)
    return Trajectory(ts, q, p, E, F)


def _rel_drift(v):
    ref = abs(v[0])
    dev = np.max(np.abs(v - v[0]))
    return float(dev / ref) if ref > 0 else float(dev)


def conservation_report(traj):
    """Maximum relative drift of ``E`` and ``F`` against their initial values."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return _rel_drift(traj.E), _rel_drift(traj.F)
