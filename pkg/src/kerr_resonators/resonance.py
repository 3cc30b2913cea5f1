"""Linear subwavelength resonances u = tau w^2 K^w[u] and their closed-form asymptotics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Union

import numpy as np
import scipy.linalg as sla

from .kernels import principal_2d_leading
from .mesh import Mesh, integrate, norm, symmetry_class
from .potential import assemble_helmholtz, assemble_helmholtz_derivative
from .spectra import SpectralPair

LOWER_HALF_MARGIN = -1e-12


class ResonanceError(RuntimeError):
    """Newton failure or a converged point outside the lower half-plane."""


@dataclass(frozen=True, eq=False)
class ResonancePoint:
    omega: complex
    tau: float
    u: np.ndarray
    residual: float
    amplitude: float
    symmetry: str
    kind: Literal["linear", "nonlinear"]
    iterations: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def omega_hat(self) -> complex:
        return math.sqrt(self.tau) * self.omega

    @property
    def epsilon(self) -> float:
        return 1.0 / math.sqrt(self.tau)


def _classify(mesh: Mesh, u: np.ndarray) -> str:
    if not mesh.is_symmetric:
        return "none"
    return symmetry_class(mesh, u, tol=1e-8)


def linear_residual(mesh: Mesh, tau: float, omega: complex, u: np.ndarray) -> np.ndarray:
    K = assemble_helmholtz(mesh, omega).entries
    return u - tau * omega**2 * (K @ u)


def solve_linear(
    mesh: Mesh,
    tau: float,
    omega_guess: complex,
    u_guess: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> ResonancePoint:
    """Newton iteration on (u, w) with the bordering condition <c, u> = 1.

    The map (u, w) -> u - tau w^2 K^w u is complex-analytic, so the complex
    bordered Jacobian is the realification-free form of the real Newton system.
    """
    if not tau > 0:
        raise ValueError("contrast tau must be positive")
    w = mesh.weights
    u = np.asarray(u_guess, dtype=complex).copy()
    u /= norm(mesh, u)
    omega = complex(omega_guess)
    n = mesh.n
    eye = np.eye(n)
    res = math.inf
    for it in range(1, max_iter + 1):
        K = assemble_helmholtz(mesh, omega).entries
        F = u - tau * omega**2 * (K @ u)
        res = norm(mesh, F) / norm(mesh, u)
        if res <= tol:
            break
        c = u / norm(mesh, u) ** 2
        dK = assemble_helmholtz_derivative(mesh, omega)
        J = np.empty((n + 1, n + 1), dtype=complex)
        J[:n, :n] = eye - tau * omega**2 * K
        J[:n, n] = -tau * (2.0 * omega * (K @ u) + omega**2 * (dK @ u))
        J[n, :n] = w * np.conj(c)
        J[n, n] = 0.0
        rhs = np.concatenate([-F, [0.0]])
        step = sla.solve(J, rhs, check_finite=False)
        u = u + step[:n]
        omega = omega + step[n]
        if not np.isfinite(omega):
            break
    else:
        K = assemble_helmholtz(mesh, omega).entries
        res = norm(mesh, u - tau * omega**2 * (K @ u)) / norm(mesh, u)
        it = max_iter
        if res > tol:
            raise ResonanceError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})")
    if not np.isfinite(omega) or res > tol:
        raise ResonanceError(f"Newton diverged (residual {res:.3e})")
    if omega.imag >= LOWER_HALF_MARGIN:
        raise ResonanceError(f"spurious resonance with Im w = {omega.imag:.3e} >= 0 rejected")
    u /= norm(mesh, u)
    phase = np.sum(w * np.conj(np.asarray(u_guess, dtype=complex)) * u)
    if abs(phase) > 0:
        u *= abs(phase) / phase
    return ResonancePoint(omega, float(tau), u, float(res), 1.0, _classify(mesh, u), "linear", it)


# ----------------------------------------------------------------- asymptotics


def asymptotic_linear_3d(pair: SpectralPair, tau: float, mesh: Mesh) -> complex:
    """Two-term expansion 1/sqrt(lam tau) - i (int phi)^2 / (8 pi lam^2 tau)."""
    mass = integrate(mesh, pair.phi).real
    return 1.0 / math.sqrt(pair.lam * tau) - 1j * mass**2 / (8.0 * math.pi * pair.lam**2 * tau)


def asymptotic_linear_2d(
    regime: Literal["principal", "bulk"], data: Union[float, SpectralPair], tau: float
) -> complex:
    """Leading 2D resonance: principal needs |D|, bulk needs an eigenpair (or mu) of K~_D."""
    if regime == "principal":
        area = float(data)
        return complex(math.sqrt(4.0 * math.pi / (area * tau * math.log(tau))))
    if regime == "bulk":
        mu = data.lam if isinstance(data, SpectralPair) else float(data)
        return complex(1.0 / math.sqrt(tau * mu))
    raise ValueError(f"unknown regime {regime!r}")


def principal_2d_lambert(area: float, tau: float) -> complex:
    """Principal 2D frequency from the Lambert-W leading-order equation, unscaled."""
    eps = 1.0 / math.sqrt(tau)
    return complex(principal_2d_leading(eps, area) * eps)


def seed_3d(pair: SpectralPair, tau: float, mesh: Mesh) -> tuple[complex, np.ndarray]:
    return asymptotic_linear_3d(pair, tau, mesh), pair.phi.astype(complex)


def seed_2d_principal(mesh: Mesh, tau: float) -> tuple[complex, np.ndarray]:
    return principal_2d_lambert(mesh.total_measure, tau), np.ones(mesh.n, dtype=complex)


def conjugate_seed(point: ResonancePoint) -> tuple[complex, np.ndarray]:
    """Mirror a resonance across the imaginary axis: (-conj w, conj u)."""
    return -np.conj(point.omega), np.conj(point.u)


def with_extras(point: ResonancePoint, **extras) -> ResonancePoint:
    merged = dict(point.extras)
    merged.update(extras)
    return replace(point, extras=merged)


def normalized_state(mesh: Mesh, u: np.ndarray, mode: np.ndarray) -> np.ndarray:
    """u / <mode, u>, the state scaled to unit coefficient along ``mode``."""
    coeff = np.sum(mesh.weights * np.conj(mode) * u)
    return u / coeff


def solve_linear_sweep(
    mesh: Mesh, taus, pair: Optional[SpectralPair] = None, regime: str = "3d", **kwargs
) -> list[ResonancePoint]:
    """Solve at each contrast, seeding from the asymptotic formula for that contrast."""
    out = []
    for tau in taus:
        if regime == "2d_principal":
            om, u0 = seed_2d_principal(mesh, tau)
        elif regime == "2d_bulk":
            om, u0 = asymptotic_linear_2d("bulk", pair, tau), pair.phi.astype(complex)
        else:
            om, u0 = seed_3d(pair, tau, mesh)
        out.append(solve_linear(mesh, tau, om, u0, **kwargs))
    return out
