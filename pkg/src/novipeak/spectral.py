"""Asymptotic speeds of ordered positive multipeakons.

For ``p_i > 0`` and ``q_1 < ... < q_n`` the amplitudes converge as
``t -> +inf`` to ``lambda_1 < ... < lambda_n``, the square roots of the
eigenvalues of ``T P E P`` with ``P = diag(p)``, ``E_ij = exp(-|q_i - q_j|)``
and ``T_jk = 1 + sgn(j - k)``; as ``t -> -inf`` they converge to the same
values in reverse order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (ComplexSpectrum, NonPositiveAmplitude, NonPositiveEigenvalue,
                     UnorderedPositions)
from .ode import IntegratorSettings, OdeState, integrate, ode_rhs

__all__ = [
    "SpeedSpectrum",
    "build_tpep",
    "hessenberg",
    "qr_eigenvalues",
    "lambda_spectrum",
    "verify_asymptotics",
    "AsymptoticsReport",
]

MAX_DIM = 64


@dataclass(frozen=True)
class SpeedSpectrum:
    lambdas: np.ndarray
    residual: float
    imag_leak: float


def _check_ordered_positive(cfg):
    if np.any(cfg.p <= 0):
        raise NonPositiveAmplitude("all amplitudes must be positive")
    if np.any(np.diff(cfg.q) <= 0):
        raise UnorderedPositions("positions must be strictly ascending")


def _factors(cfg):
    _check_ordered_positive(cfg)
    j = np.arange(cfg.n)
    T = 1.0 + np.sign(j[:, None] - j[None, :])
    PEP = cfg.p[:, None] * np.exp(-np.abs(cfg.q[:, None] - cfg.q[None, :])) * cfg.p[None, :]
    return T, PEP


def build_tpep(cfg):
    """The matrix ``T P E P``."""
    T, PEP = _factors(cfg)
    return T @ PEP


def _house(x):
    v = np.array(x, dtype=float)
    big = np.max(np.abs(v)) if v.size else 0.0
    if big == 0.0:
        return v, 0.0
    v /= big  # the reflector is scale-invariant; this avoids under/overflow
    nrm = np.linalg.norm(v)
    alpha = -nrm if v[0] >= 0 else nrm
    v[0] -= alpha
    vv = v @ v
    return v, (2.0 / vv if vv > 0 else 0.0)


def hessenberg(A):
    """Householder reduction to upper Hessenberg form (similar to ``A``)."""
    H = np.array(A, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        v, beta = _house(H[k + 1:, k])
        if beta == 0.0:
            continue
        H[k + 1:, k:] -= beta * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= beta * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _eig2(a, b, c, d):
    half_tr = 0.5 * (a + d)
    disc = (0.5 * (a - d)) ** 2 + b * c
    if disc >= 0:
        r = np.sqrt(disc)
        # avoid cancellation in the smaller root
        big = half_tr + np.copysign(r, half_tr) if half_tr != 0 else r
        det = a * d - b * c
        small = det / big if big != 0 else half_tr - r
        return [complex(big), complex(small)]
    r = np.sqrt(-disc)
    return [complex(half_tr, r), complex(half_tr, -r)]


def _francis_step(B, exceptional=False):
    m = B.shape[0]
    if exceptional:
        # ad hoc shifts to break cycling
        w = abs(B[m - 1, m - 2]) + abs(B[m - 2, m - 3])
        s, t = B[m - 1, m - 1] + 1.5 * w, w * w
    else:
        s = B[m - 2, m - 2] + B[m - 1, m - 1]
        t = B[m - 2, m - 2] * B[m - 1, m - 1] - B[m - 2, m - 1] * B[m - 1, m - 2]
    x = B[0, 0] ** 2 + B[0, 1] * B[1, 0] - s * B[0, 0] + t
    y = B[1, 0] * (B[0, 0] + B[1, 1] - s)
    z = B[1, 0] * B[2, 1]
    for k in range(m - 2):
        v, beta = _house([x, y, z])
        r = max(0, k - 1)
        B[k:k + 3, r:] -= beta * np.outer(v, v @ B[k:k + 3, r:])
        rr = min(k + 4, m)
        B[:rr, k:k + 3] -= beta * np.outer(B[:rr, k:k + 3] @ v, v)
        x = B[k + 1, k]
        y = B[k + 2, k]
        if k < m - 3:
            z = B[k + 3, k]
    v, beta = _house([x, y])
    B[m - 2:, m - 3:] -= beta * np.outer(v, v @ B[m - 2:, m - 3:])
    B[:, m - 2:] -= beta * np.outer(B[:, m - 2:] @ v, v)


def qr_eigenvalues(A, max_sweeps=60):
    """Eigenvalues of a small real matrix by Hessenberg + double-shift QR."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if n > MAX_DIM:
        raise ValueError(f"dimension capped at {MAX_DIM}")
    if n == 1:
        return np.array([complex(A[0, 0])])
    norm_a = np.max(np.abs(A))
    if norm_a == 0.0 or not np.isfinite(norm_a):
        return np.full(n, complex(0.0 if norm_a == 0.0 else np.nan))
    H = hessenberg(A / norm_a)
    eps = np.finfo(float).eps
    eigs = []
    hi = n  # active block is H[lo:hi, lo:hi]
    its = 0
    while hi > 0:
        if hi == 1:
            eigs.append(complex(H[0, 0]))
            break
        # deflate negligible subdiagonals
        lo = hi - 1
        while lo > 0:
            scale = abs(H[lo, lo]) + abs(H[lo - 1, lo - 1])
            if scale == 0.0:
                scale = np.abs(H[:hi, :hi]).sum()
            if abs(H[lo, lo - 1]) <= eps * scale:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        size = hi - lo
        if size == 1:
            eigs.append(complex(H[hi - 1, hi - 1]))
            hi -= 1
            its = 0
        elif size == 2:
            eigs.extend(_eig2(H[lo, lo], H[lo, lo + 1], H[lo + 1, lo], H[lo + 1, lo + 1]))
            hi -= 2
            its = 0
        else:
            its += 1
            if its > max_sweeps:
                raise RuntimeError("QR iteration failed to converge")
            _francis_step(H[lo:hi, lo:hi], exceptional=its % 10 == 0)
    return norm_a * np.array(eigs)


def _eig_extended(A, dps=50):
    # nearly defective clusters (equal, far-apart amplitudes) split by
    # O(eps^(1/k)) in double precision; resolve them with extra digits
    import mpmath

    with mpmath.workdps(dps):
        ev = mpmath.eig(mpmath.matrix(A.tolist()), left=False, right=False)
        mus = np.array([complex(e) for e in ev])
        leak = float(max(abs(mpmath.im(e)) for e in ev))
    return mus, leak


def _eig_residual(A, mu):
    # null vector of A - mu I from the smallest singular value
    M = A - mu * np.eye(A.shape[0])
    _, s, vt = np.linalg.svd(M)
    v = vt[-1]
    return np.linalg.norm(A @ v - mu * v)


def lambda_spectrum(cfg, tol=1e-9):
    """Asymptotic amplitudes ``lambda_i`` of an ordered positive multipeakon."""
    T, PEP = _factors(cfg)
    A = T @ PEP
    mus = qr_eigenvalues(A)
    imag_leak = float(np.max(np.abs(mus.imag)))
    scale = max(np.linalg.norm(A, 2), 1e-300)
    if imag_leak > tol * scale:
        # the cyclically permuted product P E P T has the same spectrum
        mus2 = qr_eigenvalues(PEP @ T)
        leak2 = float(np.max(np.abs(mus2.imag)))
        if leak2 < imag_leak:
            mus, imag_leak = mus2, leak2
        if imag_leak > tol * scale:
            mus, imag_leak = _eig_extended(A)
        if imag_leak > tol * scale:
            raise ComplexSpectrum(f"eigenvalue imaginary part {imag_leak:.3g} exceeds tolerance")
    mu = np.sort(mus.real)
    if mu[0] <= 0:
        raise NonPositiveEigenvalue(f"eigenvalue {mu[0]:.3g} is not positive")
    residual = max(_eig_residual(A, m) for m in mu) / scale
    return SpeedSpectrum(np.sqrt(mu), float(residual), imag_leak)


@dataclass(frozen=True)
class AsymptoticsReport:
    """Deviations of the late-time amplitudes and speeds from the spectrum."""

    lambdas: np.ndarray
    horizon: float
    p_forward: np.ndarray
    p_backward: np.ndarray
    dev_p_forward: np.ndarray
    dev_speed_forward: np.ndarray
    dev_p_backward: np.ndarray
    dev_speed_backward: np.ndarray
    min_gap: float

    @property
    def max_deviation(self):
        return float(max(self.dev_p_forward.max(), self.dev_p_backward.max()))

    def as_dict(self):
        return {
            "lambdas": self.lambdas.tolist(),
            "horizon": self.horizon,
            "p_forward": self.p_forward.tolist(),
            "p_backward": self.p_backward.tolist(),
            "dev_p_forward": self.dev_p_forward.tolist(),
            "dev_speed_forward": self.dev_speed_forward.tolist(),
            "dev_p_backward": self.dev_p_backward.tolist(),
            "dev_speed_backward": self.dev_speed_backward.tolist(),
            "max_deviation": self.max_deviation,
            "min_gap": self.min_gap,
        }


def verify_asymptotics(cfg, T_horizon, settings=None, tol=1e-9):
    """Compare ``p_i(+-T)`` and ``dq_i/dt(+-T)`` with the spectral limits."""
    spec = lambda_spectrum(cfg, tol)
    lam = spec.lambdas
    settings = settings or IntegratorSettings(sample_dt=max(T_horizon / 50, 0.1))
    fwd = integrate(OdeState(0.0, cfg), T_horizon, settings)
    bwd = integrate(OdeState(0.0, cfg), -T_horizon, settings)
    cf, cb = fwd.final.cfg, bwd.final.cfg
    vf, vb = ode_rhs(cf)[0], ode_rhs(cb)[0]
    rev = lam[::-1]
    gaps = [np.min(np.diff(tr.q, axis=1)) if cfg.n > 1 else np.inf for tr in (fwd, bwd)]
    return AsymptoticsReport(
        lambdas=lam,
        horizon=float(T_horizon),
        p_forward=cf.p,
        p_backward=cb.p,
        dev_p_forward=np.abs(cf.p - lam),
        dev_speed_forward=np.abs(vf - lam ** 2),
        dev_p_backward=np.abs(cb.p - rev),
        dev_speed_backward=np.abs(vb - rev ** 2),
        min_gap=float(min(gaps)),
    )
