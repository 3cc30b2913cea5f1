"""Nonlinear resonances u = tau w^2 K^w[u + |u|^2 u] and their continuation in amplitude.

The unknowns are (Re u, Im u, Re w, Im w). Two scalar equations close the
system: the phase gauge Im<phi_j, u> = 0 and one amplitude condition, either
||u||^2 = N or Re<psi, u> = t for a chosen field psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
import scipy.linalg as sla

from .mesh import Mesh, norm, symmetry_class
from .potential import assemble_helmholtz, assemble_helmholtz_derivative
from .resonance import LOWER_HALF_MARGIN, ResonancePoint, solve_linear
from .spectra import SpectralPair


@dataclass(frozen=True)
class NonlinearConfig:
    """Newton and continuation settings; the Kerr coefficient is fixed to one."""

    newton_tol: float = 1e-10
    max_step: float = 0.05
    max_iter: int = 30
    min_step_fraction: float = 1.0 / 64.0
    eta: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.newton_tol <= 1e-6):
            raise ValueError("newton_tol must lie in (0, 1e-6]")
        if not self.max_step > 0:
            raise ValueError("continuation step must be positive")
        if self.eta != 1.0:
            raise ValueError("only the normalized Kerr coefficient eta = 1 is supported")


@dataclass(frozen=True, eq=False)
class AmplitudeCondition:
    """Either ||u||^2 = value (kind 'norm') or Re<field, u> = value (kind 'projection')."""

    kind: Literal["norm", "projection"]
    value: float
    field: Optional[np.ndarray] = None


@dataclass(eq=False)
class Branch:
    points: list = field(default_factory=list)
    parameter: Literal["a", "N", "p_minus"] = "a"
    values: list = field(default_factory=list)
    events: list = field(default_factory=list)
    sigma_odd: list = field(default_factory=list)
    loc_metric: list = field(default_factory=list)
    branch_id: str = "symmetric"
    complete: bool = True
    meta: dict = field(default_factory=dict)

    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points])

    def omegas(self) -> np.ndarray:
        return np.array([p.omega for p in self.points])


class NonlinearError(RuntimeError):
    pass


def kerr_map(u: np.ndarray) -> np.ndarray:
    """Pointwise u + |u|^2 u."""
    u = np.asarray(u)
    return u + (u.real**2 + u.imag**2) * u


def nl_residual(mesh: Mesh, tau: float, omega: complex, u: np.ndarray, K: Optional[np.ndarray] = None) -> np.ndarray:
    """u - tau w^2 K^w[N(u)]."""
    if K is None:
        K = assemble_helmholtz(mesh, omega).entries
    return u - tau * omega**2 * (K @ kerr_map(u))


def _constraint(mesh: Mesh, cond: AmplitudeCondition, x: np.ndarray, y: np.ndarray):
    w = mesh.weights
    if cond.kind == "norm":
        value = float(np.sum(w * (x * x + y * y))) - cond.value
        return value, 2.0 * w * x, 2.0 * w * y
    psi = np.asarray(cond.field, dtype=complex)
    value = float(np.sum(w * (psi.real * x + psi.imag * y))) - cond.value
    return value, w * psi.real, w * psi.imag


def real_jacobian(mesh: Mesh, tau: float, omega: complex, u: np.ndarray, K: np.ndarray, dK: np.ndarray) -> np.ndarray:
    """Real 2n x (2n + 2) Jacobian of the residual in (Re u, Im u, Re w, Im w)."""
    n = mesh.n
    A = tau * omega**2 * K
    M = A * (1.0 + 2.0 * np.abs(u) ** 2)[None, :]
    P = A * (u * u)[None, :]
    d = -tau * (2.0 * omega * K + omega**2 * dK) @ kerr_map(u)
    J = np.empty((2 * n, 2 * n + 2))
    eye = np.eye(n)
    J[:n, :n] = eye - M.real - P.real
    J[:n, n : 2 * n] = M.imag - P.imag
    J[n:, :n] = -(M.imag + P.imag)
    J[n:, n : 2 * n] = eye - M.real + P.real
    J[:n, 2 * n] = d.real
    J[:n, 2 * n + 1] = -d.imag
    J[n:, 2 * n] = d.imag
    J[n:, 2 * n + 1] = d.real
    return J


def newton_nonlinear(
    mesh: Mesh,
    tau: float,
    omega: complex,
    u: np.ndarray,
    gauge: np.ndarray,
    cond: AmplitudeCondition,
    tol: float = 1e-10,
    max_iter: int = 30,
    orient: bool = True,
) -> ResonancePoint:
    """Solve the gauge-fixed nonlinear system from the given seed.

    With ``orient`` the seed is first rotated so <gauge, u> is real positive and
    the result is returned on that half of the gauge slice; without it the seed
    is used as given, which lets callers probe Re<gauge, u> < 0 directly.
    """
    n = mesh.n
    w = mesh.weights
    gauge = np.asarray(gauge, dtype=complex)
    u = np.asarray(u, dtype=complex).copy()
    omega = complex(omega)
    coeff = np.sum(w * np.conj(gauge) * u)
    if abs(coeff) <= 1e-8 * norm(mesh, u) * norm(mesh, gauge):
        raise NonlinearError("gauge mode orthogonal to state, reseed")
    if orient:
        # rotate onto the gauge slice before iterating; the residual is S^1-equivariant
        u *= abs(coeff) / coeff
    res = math.inf
    for it in range(1, max_iter + 1):
        K = assemble_helmholtz(mesh, omega).entries
        F = nl_residual(mesh, tau, omega, u, K)
        x, y = u.real, u.imag
        g_val = float(np.sum(w * (gauge.real * y - gauge.imag * x)))
        c_val, cx, cy = _constraint(mesh, cond, x, y)
        unorm = norm(mesh, u)
        res = norm(mesh, F) / unorm
        scale = max(abs(cond.value), 1e-300)
        if res <= tol and abs(c_val) <= 1e-12 * scale and abs(g_val) <= 1e-12 * unorm * norm(mesh, gauge):
            break
        dK = assemble_helmholtz_derivative(mesh, omega)
        J = np.zeros((2 * n + 2, 2 * n + 2))
        J[: 2 * n] = real_jacobian(mesh, tau, omega, u, K, dK)
        J[2 * n, :n] = -w * gauge.imag
        J[2 * n, n : 2 * n] = w * gauge.real
        J[2 * n + 1, :n] = cx
        J[2 * n + 1, n : 2 * n] = cy
        rhs = -np.concatenate([F.real, F.imag, [g_val, c_val]])
        try:
            step = sla.solve(J, rhs, check_finite=False)
        except (sla.LinAlgError, ValueError) as exc:
            raise NonlinearError(f"singular Newton system: {exc}") from exc
        u = u + step[:n] + 1j * step[n : 2 * n]
        omega = omega + complex(step[2 * n], step[2 * n + 1])
        if not (np.isfinite(omega) and np.all(np.isfinite(u))):
            raise NonlinearError("Newton diverged")
    else:
        raise NonlinearError(f"Newton did not converge in {max_iter} iterations (residual {res:.3e})")
    if orient and np.sum(w * np.conj(gauge) * u).real < 0:
        u = -u
    if omega.imag >= LOWER_HALF_MARGIN:
        raise NonlinearError(f"converged point has Im w = {omega.imag:.3e} >= 0; rejected")
    amp = float(np.sum(w * np.abs(u) ** 2))
    sym = symmetry_class(mesh, u, tol=1e-8) if mesh.is_symmetric else "none"
    a = float(np.sum(w * np.conj(gauge) * u).real)
    return ResonancePoint(omega, float(tau), u, float(res), amp, sym, "nonlinear", it, {"a": a})


def solve_nonlinear_at_amplitude(
    mesh: Mesh,
    tau: float,
    N_target: float,
    seed: ResonancePoint,
    config: NonlinearConfig,
    gauge: np.ndarray,
) -> ResonancePoint:
    """Nonlinear resonance with ||u||^2 = N_target, seeded from ``seed``."""
    if not N_target > 0:
        raise ValueError("N_target must be positive")
    if not np.all(np.isfinite(seed.u)) or not np.isfinite(seed.omega):
        raise NonlinearError("seed is not finite")
    u0 = seed.u * math.sqrt(N_target) / norm(mesh, seed.u)
    cond = AmplitudeCondition("norm", float(N_target))
    return newton_nonlinear(mesh, tau, seed.omega, u0, gauge, cond, config.newton_tol, config.max_iter)


def linear_start(mesh: Mesh, tau: float, mode: SpectralPair, omega_guess: complex) -> tuple[ResonancePoint, np.ndarray]:
    """Linear resonance and its state scaled to <phi_j, u> = 1."""
    lin = solve_linear(mesh, tau, omega_guess, mode.phi.astype(complex))
    coeff = np.sum(mesh.weights * mode.phi * lin.u)
    return lin, lin.u / coeff


def continue_branch(
    mesh: Mesh,
    tau: float,
    mode: SpectralPair,
    N_max: float,
    config: NonlinearConfig,
    omega_guess: complex,
    a_max: Optional[float] = None,
    max_points: int = 400,
    callback: Optional[Callable[[ResonancePoint], None]] = None,
) -> Branch:
    """Continue the branch bifurcating from mode ``mode`` in a = Re<phi_j, u>.

    Starts from the linear resonance, uses a secant predictor, and halves the
    step on Newton failure down to ``min_step_fraction`` of the nominal step.
    """
    lin, phi_star = linear_start(mesh, tau, mode, omega_guess)
    branch = Branch(
        parameter="a",
        meta={"omega_linear": lin.omega, "phi_star": phi_star, "mode_lambda": mode.lam, "gauge": mode.phi},
    )
    gauge = mode.phi.astype(complex)
    step = config.max_step
    min_step = config.max_step * config.min_step_fraction
    prev: list[tuple[float, complex, np.ndarray]] = [(0.0, lin.omega, np.zeros(mesh.n, complex))]
    a = 0.0
    while len(branch.points) < max_points:
        a_next = a + step
        if a_max is not None and a_next > a_max * (1 + 1e-12):
            a_next = a_max
        if len(prev) >= 2:
            (a0, w0, u0), (a1, w1, u1) = prev[-2], prev[-1]
            t = (a_next - a1) / (a1 - a0)
            om_guess = w1 + t * (w1 - w0)
            u_guess = u1 + t * (u1 - u0)
        else:
            om_guess = lin.omega
            u_guess = a_next * phi_star
        cond = AmplitudeCondition("projection", a_next, gauge)
        try:
            pt = newton_nonlinear(mesh, tau, om_guess, u_guess, gauge, cond, config.newton_tol, config.max_iter)
        except NonlinearError:
            step *= 0.5
            if step < min_step:
                branch.complete = False
                break
            continue
        branch.points.append(pt)
        branch.values.append(a_next)
        if callback is not None:
            callback(pt)
        prev.append((a_next, pt.omega, pt.u))
        a = a_next
        step = min(config.max_step, step * 1.5)
        if pt.amplitude >= N_max or (a_max is not None and a >= a_max * (1 - 1e-12)):
            break
    return branch


def solve_at_a(
    mesh: Mesh,
    tau: float,
    mode: SpectralPair,
    a: float,
    omega_guess: complex,
    phi_star: np.ndarray,
    config: NonlinearConfig,
) -> ResonancePoint:
    """Single nonlinear solve at Re<phi_j, u> = a; negative a is solved as is."""
    gauge = mode.phi.astype(complex)
    cond = AmplitudeCondition("projection", float(a), gauge)
    return newton_nonlinear(
        mesh, tau, omega_guess, a * phi_star, gauge, cond, config.newton_tol, config.max_iter, orient=False
    )


def derivative_at_zero(
    mesh: Mesh, tau: float, mode: SpectralPair, a: float, omega_guess: complex, config: NonlinearConfig
) -> dict:
    """Symmetric first and second differences of w(a) about a = 0.

    Both signs of a are solved independently from their own seeds.
    """
    lin, phi_star = linear_start(mesh, tau, mode, omega_guess)
    plus = solve_at_a(mesh, tau, mode, a, lin.omega, phi_star, config)
    minus = solve_at_a(mesh, tau, mode, -a, lin.omega, phi_star, config)
    first = (plus.omega - minus.omega) / (2 * a)
    second = (plus.omega + minus.omega - 2 * lin.omega) / a**2
    return {"first": first, "second": second, "omega0": lin.omega, "plus": plus, "minus": minus, "phi_star": phi_star}
