"""Elementary kernels: Green's function of ``1 - d^2/dx^2``, mollifiers and
sigmoid weights used to localize energies.

All functions broadcast over numpy arrays.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateConfiguration

__all__ = [
    "green_p",
    "mollifier_rho",
    "mollifier_mass",
    "mollified_exponential",
    "psi",
    "WeightParams",
    "weight_psi",
    "partition_phi",
    "gauss_legendre",
]

_HALF_PI = 0.5 * np.pi


@lru_cache(maxsize=None)
def gauss_legendre(m):
    """Cached ``m``-point Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def green_p(x):
    """Fundamental solution ``p(x) = exp(-|x|) / 2`` of ``1 - d^2/dx^2``."""
    return 0.5 * np.exp(-np.abs(x))


def _bump(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    xi = x[inside]
    out[inside] = np.exp(1.0 / (xi * xi - 1.0))
    return out


@lru_cache(maxsize=None)
def mollifier_mass():
    """Integral of the unnormalized bump ``exp(1/(x^2-1))`` over (-1, 1)."""
    # the bump is flat at the ends, so convergence is slow; 256 nodes reach rounding
    x, w = gauss_legendre(256)
    return float(w @ _bump(x))


def mollifier_rho(n, x):
    """Normalized mollifier ``rho_n(x) = n rho(n x) / int(rho)``.

    Supported on ``[-1/n, 1/n]`` with unit integral.
    """
    if n < 1:
        raise ValueError("mollifier index must be >= 1")
    x = np.asarray(x, dtype=float)
    return n * _bump(n * x) / mollifier_mass()


def mollified_exponential(n, x, nodes=128):
    """``(rho_n * e^{-|.|})(x)`` and its derivative.

    Gauss-Legendre over the mollifier support, split at the kink ``s = x``.
    """
    x = np.asarray(x, dtype=float)
    h = 1.0 / n
    t, w = gauss_legendre(nodes)
    m = np.clip(x, -h, h)
    val = np.zeros(x.shape)
    der = np.zeros(x.shape)
    for lo, hi in ((-h, m), (m, h)):
        half = 0.5 * (hi - lo)
        s = (0.5 * (hi + lo))[..., None] + half[..., None] * t
        a = x[..., None] - s
        e = np.exp(-np.abs(a)) * mollifier_rho(n, s)
        val += half * (e @ w)
        der += half * ((-np.sign(a) * e) @ w)
    return val, der


def psi(x, slope=1.0):
    """Smoothed step ``(2/pi) arctan(exp(x / slope))``, increasing from 0 to 1."""
    if slope <= 0:
        raise ValueError("slope must be positive")
    t = np.asarray(x, dtype=float) / slope
    # arctan(e^t) = pi/2 - arctan(e^-t); the second form avoids overflow
    big = t > 30.0
    lo = np.arctan(np.exp(np.where(big, 0.0, t)))
    hi = _HALF_PI - np.arctan(np.exp(-np.where(big, t, 0.0)))
    return np.where(big, hi, lo) / _HALF_PI


@dataclass(frozen=True)
class WeightParams:
    """Parameters of the weight family ``Psi_{i,K}(x) = psi((x - y_i) / K, slope)``.

    ``centers`` holds ``y_1 < ... < y_n``; ``y_1`` may be ``-inf`` in which case
    ``Psi_{1,K}`` is identically one.
    """

    centers: tuple
    K: float = 1.0
    slope: float = 1.0

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(self.centers))
        object.__setattr__(self, "centers", c)
        if self.slope <= 0:
            raise ValueError("slope must be positive")
        if self.K <= 0:
            raise ValueError("K must be positive")
        if any(not b > a for a, b in zip(c, c[1:])):
            raise ValueError("centers must be strictly ascending")
        if any(np.isnan(c)) or any(v == np.inf for v in c):
            raise ValueError("centers must be finite or -inf")

    @property
    def n(self):
        return len(self.centers)


def weight_psi(params, i, x):
    """Evaluate ``Psi_{i,K}`` (zero-based ``i``) at ``x``."""
    y = params.centers[i]
    x = np.asarray(x, dtype=float)
    if y == -np.inf:
        return np.ones_like(x)
    return psi((x - y) / params.K, params.slope)


def partition_phi(params, x):
    """Partition of unity ``Phi_1, ..., Phi_n`` built from the weights.

    Returns an array of shape ``(n,) + shape(x)``. ``Phi_1 = 1 - Psi_2``,
    ``Phi_i = Psi_i - Psi_{i+1}`` and ``Phi_n = Psi_n``; the first center is
    not used.
    """
    n = params.n
    x = np.asarray(x, dtype=float)
    if n == 0:
        raise DegenerateConfiguration("partition needs at least one center")
    if n == 1:
        return np.ones((1,) + x.shape)
    w = np.stack([weight_psi(params, i, x) for i in range(1, n)])
    out = np.empty((n,) + x.shape)
    out[0] = 1.0 - w[0]
    out[1:-1] = w[:-1] - w[1:]
    out[-1] = w[-1]
    return out
