"""Outgoing Helmholtz Green's functions, their small-frequency expansions and W_{-1}.

All kernel routines accept scalar or array distances and broadcast over them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import hankel1

EULER_GAMMA = 0.57721566490153286061
GAMMA_HAT = complex(EULER_GAMMA - math.log(2.0), -0.5 * math.pi)
SERIES_ORDER = 30


@dataclass(frozen=True)
class KernelParams:
    dimension: int
    omega: complex = 0.0

    def __post_init__(self) -> None:
        if self.dimension not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dimension}")


def _check_distance(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise ValueError("singular point: kernel evaluated at r = 0")
    return r


def green(params: KernelParams, r):
    """Outgoing fundamental solution G^omega at distance ``r > 0``.

    3D: exp(i w r) / (4 pi r).  2D: (i/4) H0^(1)(w r), or -ln(r)/(2 pi) when w = 0.
    """
    r = _check_distance(r)
    w = complex(params.omega)
    if params.dimension == 3:
        if w == 0:
            out = 1.0 / (4.0 * math.pi * r)
        else:
            out = np.exp(1j * w * r) / (4.0 * math.pi * r)
    elif w == 0:
        out = -np.log(r) / (2.0 * math.pi)
    else:
        out = 0.25j * hankel1(0, w * r)
    out = np.asarray(out)
    return out if out.ndim else out[()]


def green_domega(params: KernelParams, r):
    """Derivative of G^omega with respect to omega at fixed ``r``."""
    r = _check_distance(r)
    w = complex(params.omega)
    if params.dimension == 3:
        out = 1j * np.exp(1j * w * r) / (4.0 * math.pi)
        out = out * np.ones_like(r)
    else:
        if w == 0:
            raise ValueError("2D kernel derivative is singular at omega = 0")
        out = -0.25j * r * hankel1(1, w * r)
    out = np.asarray(out)
    return out if out.ndim else out[()]


def green_series_term_3d(n: int, r):
    """Term G_n(r) = i^n r^(n-1) / (4 pi n!) of the 3D expansion in powers of omega."""
    if n < 0:
        raise ValueError("series index must be non-negative")
    r = np.asarray(r, dtype=float)
    if n == 0 and np.any(r == 0):
        raise ValueError("singular point: G_0 at r = 0")
    out = np.asarray((1j**n) * r ** (n - 1) / (4.0 * math.pi * math.factorial(n)))
    return out if out.ndim else out[()]


def green_series_3d(omega: complex, r, order: int = SERIES_ORDER):
    """Partial sum of omega^n G_n(r) for n <= order."""
    total = 0.0 + 0.0j
    for n in range(order + 1):
        total = total + omega**n * green_series_term_3d(n, r)
    return total


def series_remainder_bound_3d(omega: complex, r: float, order: int = SERIES_ORDER) -> float:
    """Size of the first omitted series term, |w|^(n) r^(n-1) / (4 pi n!) with n = order + 1."""
    n = order + 1
    return abs(omega) ** n * r ** (n - 1) / (4.0 * math.pi * math.factorial(n))


def eta_omega(omega: complex) -> complex:
    """Logarithmic constant (ln w + gamma - ln 2 - i pi/2) / (2 pi), principal log."""
    w = complex(omega)
    if w == 0:
        raise ValueError("eta_omega has a logarithmic singularity at omega = 0")
    return (np.log(w) + GAMMA_HAT) / (2.0 * math.pi)


def log_series_coefficients(j: int) -> tuple[float, complex]:
    """Coefficients (b_j, c_j) of the 2D small-frequency expansion.

    (i/4) H0(w r) = sum_j [ -b_j r^(2j) w^(2j) ln w - (b_j ln r + c_j) r^(2j) w^(2j) ].
    """
    if j < 0:
        raise ValueError("j must be non-negative")
    b = (-1) ** j / (2.0 * math.pi * 4.0**j * math.factorial(j) ** 2)
    harmonic = sum(1.0 / k for k in range(1, j + 1))
    c = b * (GAMMA_HAT - harmonic)
    return b, c


def green_2d_expansion(omega: complex, r, order: int = 1):
    """Truncated 2D expansion in (w^(2j) ln w, w^(2j)) through ``j = order``."""
    r = _check_distance(r)
    w = complex(omega)
    logw = np.log(w)
    total = np.zeros_like(r, dtype=complex)
    for j in range(order + 1):
        b, c = log_series_coefficients(j)
        total += -b * r ** (2 * j) * w ** (2 * j) * logw - (b * np.log(r) + c) * r ** (2 * j) * w ** (2 * j)
    return total if np.ndim(total) else total[()]


# ------------------------------------------------------------------ Lambert W


def lambert_w_minus1(x: float, max_iter: int = 50) -> float:
    """Lower real branch W_{-1}(x) for -1/e <= x < 0 via Halley iteration.

    Seeds from the small-|x| expansion ln(-x) - ln(-ln(-x)); within 0.25 of the
    branch point the square-root series around -1/e is used instead.
    """
    x = float(x)
    branch = -math.exp(-1.0)
    if not (x < 0.0) or x < branch * (1.0 + 4e-16):
        raise ValueError(f"W_-1 domain error: x = {x} outside [-1/e, 0)")
    if x <= branch:
        return -1.0
    q = 1.0 + math.e * x
    if q < 0.25:
        p = -math.sqrt(2.0 * q)
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3
    else:
        lx = math.log(-x)
        w = lx - math.log(-lx)
    for _ in range(max_iter):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w_new = w - step
        if w_new > -1.0:
            w_new = 0.5 * (w - 1.0)
        if abs(w_new - w) <= 4e-16 * abs(w_new):
            w = w_new
            break
        w = w_new
    return w


def principal_2d_leading(epsilon: float, area: float) -> float:
    """Scaled principal 2D frequency solving w^2 ln(eps w) = -2 pi / |D|."""
    if not (epsilon > 0 and area > 0):
        raise ValueError("epsilon and area must be positive")
    arg = -4.0 * math.pi * epsilon**2 / area
    if arg <= -math.exp(-1.0):
        raise ValueError("contrast too low: Lambert W argument below -1/e")
    s = lambert_w_minus1(arg)
    return math.sqrt(-4.0 * math.pi / (area * s))
