"""Two-mode reduced model of a symmetric dimer and symmetry-breaking detection.

The reduced model expresses a dimer state as c+ phi+ + c- phi- with the even and
odd leading eigenfields, and predicts where the symmetric branch loses stability
to an odd perturbation. The full model is probed through the Jacobian block that
acts on odd fields; a real eigenvalue of that block crossing zero marks a pitchfork.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import scipy.linalg as sla

from .kernels import eta_omega
from .mesh import Mesh, norm, reflect
from .nonlinear import AmplitudeCondition, Branch, NonlinearConfig, NonlinearError, continue_branch, newton_nonlinear
from .potential import assemble_helmholtz, assemble_newtonian, assemble_tilde
from .resonance import ResonancePoint, asymptotic_linear_2d, seed_2d_principal
from .spectra import constant_pair, expand_parity, restrict_matrix, top_eigenpairs

BISECT_REL_WIDTH = 1e-3


class DimerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModeCoefficients:
    lambda_plus: float
    lambda_minus: float
    A_pp: float
    A_pm: float
    A_mm: float
    A_mp: Optional[float] = None
    A_pp_eps: Optional[complex] = None
    A_pm_eps: Optional[complex] = None
    odd_overlaps: tuple = ()
    dimension: int = 3


@dataclass(frozen=True)
class AssumptionReport:
    first: float  # lam+ A++ - 3 lam- A+-, must be negative
    second: float  # lam+ A++ - lam- A+-, must be positive
    first_holds: bool
    second_holds: bool
    smallness_ratio: float

    @property
    def passed(self) -> bool:
        return self.first_holds and self.second_holds


@dataclass(frozen=True)
class BifurcationPrediction:
    p_plus_star: float
    omega_hat_star: float
    N_crit_estimate: float
    assumption_report: AssumptionReport
    quadrature_phase_excluded: bool


@dataclass(eq=False)
class BifurcationEvent:
    N: float
    point: ResonancePoint
    sigma_bracket: tuple
    null_vector: np.ndarray
    p_plus_sq: float
    kind: str = "pitchfork"


@dataclass(frozen=True)
class ObstructionReport:
    sigma_initial: float
    sigma_min: float
    floor_ratio: float
    events: int
    N_reached: float
    phase_factor_range: tuple
    matched_coefficient: float
    consistent: bool
    branch: Branch = field(compare=False, default=None)
    which: str = "principal"
    block: str = "odd"
    sigma: tuple = ()


# ---------------------------------------------------------------- coefficients


def mode_coefficients(
    mesh: Mesh,
    phi_plus: np.ndarray,
    phi_minus: np.ndarray,
    lambda_plus: float,
    lambda_minus: float,
    omega_hat: Optional[complex] = None,
    epsilon: Optional[float] = None,
) -> ModeCoefficients:
    """Quartic overlap constants of the leading even/odd eigenfields.

    In 3D these are weighted sums of products of four real eigenfields. In 2D the
    even mode is the constant field and the overlaps are taken through the static
    potential, with the frequency-dependent pieces added when omega_hat is given.
    """
    w = mesh.weights
    if np.iscomplexobj(phi_plus) or np.iscomplexobj(phi_minus):
        raise DimerError("mode coefficients need real eigenfields")
    if norm(mesh, reflect(mesh, phi_minus) + phi_minus) > 1e-8 * norm(mesh, phi_minus):
        raise DimerError("symmetry check failed: phi_minus is not odd")
    if mesh.dimension == 3:
        if norm(mesh, reflect(mesh, phi_plus) - phi_plus) > 1e-8 * norm(mesh, phi_plus):
            raise DimerError("symmetry check failed: phi_plus is not even")
        p, m = phi_plus, phi_minus
        odd = (float(np.sum(w * p**3 * m)), float(np.sum(w * p * m**3)))
        return ModeCoefficients(
            lambda_plus, lambda_minus,
            float(np.sum(w * p**4)), float(np.sum(w * p**2 * m**2)), float(np.sum(w * m**4)),
            odd_overlaps=odd, dimension=3,
        )
    K = assemble_newtonian(mesh).entries
    area = mesh.total_measure
    one = np.ones(mesh.n)
    m = phi_minus

    def plus_row(f):
        return float(np.sum(w * (K @ f)) / area)

    def minus_row(f):
        return float(np.sum(w * m * (K @ f)))

    A_pp = plus_row(one)
    A_pm = plus_row(m * m)
    A_mp = minus_row(m)
    A_mm = minus_row(m**3)
    odd = (plus_row(m), plus_row(m**3), minus_row(one), minus_row(m * m))
    A_pp_eps = A_pm_eps = None
    if omega_hat is not None and epsilon is not None:
        eta = eta_omega(epsilon * omega_hat)
        A_pp_eps = A_pp - eta * area
        A_pm_eps = A_pm - eta
    return ModeCoefficients(lambda_plus, lambda_minus, A_pp, A_pm, A_mm, A_mp, A_pp_eps, A_pm_eps, odd, 2)


def check_assumptions(c: ModeCoefficients) -> AssumptionReport:
    first = c.lambda_plus * c.A_pp - 3.0 * c.lambda_minus * c.A_pm
    second = c.lambda_plus * c.A_pp - c.lambda_minus * c.A_pm
    denom = -first
    ratio = (c.lambda_plus - c.lambda_minus) / denom if denom != 0 else math.inf
    return AssumptionReport(first, second, first < 0, second > 0, ratio)


def reduced_bifurcation_point(c: ModeCoefficients) -> BifurcationPrediction:
    """Threshold p+* and frequency w^* of the leading-order pitchfork."""
    rep = check_assumptions(c)
    denom = 3.0 * c.lambda_minus * c.A_pm - c.lambda_plus * c.A_pp
    if denom <= 0:
        raise DimerError("no symmetry-breaking predicted: 3 lam- A+- - lam+ A++ <= 0")
    p2 = (c.lambda_plus - c.lambda_minus) / denom
    p2 = max(p2, 0.0)
    omega_hat = 1.0 / math.sqrt(c.lambda_plus * (1.0 + p2 * c.A_pp))
    return BifurcationPrediction(math.sqrt(p2), omega_hat, p2, rep, quadrature_phase_excluded(c))


def quadrature_phase_excluded(c: ModeCoefficients) -> bool:
    """True when lam+ - lam- + (lam+ A++ - lam- A+-) p^2 has no positive root p^2."""
    gap = c.lambda_plus - c.lambda_minus
    slope = c.lambda_plus * c.A_pp - c.lambda_minus * c.A_pm
    if slope == 0:
        return gap != 0
    root = -gap / slope
    return not root > 0


def reduced_residuals(c: ModeCoefficients, omega_hat: complex, p_plus: float, p_minus: float, dtheta: float) -> tuple:
    """Leading-order reduced equations (F+, F-) in polar variables."""
    inv = omega_hat ** (-2)
    ph = np.exp(2j * dtheta)
    f_plus = inv - c.lambda_plus - c.lambda_plus * (p_plus**2 * c.A_pp + p_minus**2 * (2.0 + np.conj(ph)) * c.A_pm)
    f_minus = inv - c.lambda_minus - c.lambda_minus * (p_minus**2 * c.A_mm + p_plus**2 * (2.0 + ph) * c.A_pm)
    return complex(f_plus), complex(f_minus)


def reduced_secular_solve(c: ModeCoefficients, p_minus: float) -> tuple[float, float, float]:
    """(w^2, p+^2, dtheta) on the asymmetric branch at leading order, dtheta in {0}."""
    pred = reduced_bifurcation_point(c)
    slope = (c.lambda_minus * c.A_mm - 3.0 * c.lambda_plus * c.A_pm) / (
        c.lambda_plus * c.A_pp - 3.0 * c.lambda_minus * c.A_pm
    )
    p_plus_sq = pred.N_crit_estimate + slope * p_minus**2
    if p_plus_sq <= 0:
        raise DimerError("branch terminated: p+^2 <= 0")
    inv = c.lambda_plus + c.lambda_plus * (p_plus_sq * c.A_pp + 3.0 * p_minus**2 * c.A_pm)
    return 1.0 / inv, p_plus_sq, 0.0


def reduced_branch_slope(c: ModeCoefficients) -> float:
    return (c.lambda_minus * c.A_mm - 3.0 * c.lambda_plus * c.A_pm) / (
        c.lambda_plus * c.A_pp - 3.0 * c.lambda_minus * c.A_pm
    )


def phase_class(dtheta: float) -> float:
    """Representative of the relative phase modulo pi, in [0, pi)."""
    r = float(np.mod(dtheta, math.pi))
    # mod of a tiny negative rounds up to pi itself
    return 0.0 if r >= math.pi else r


# ------------------------------------------------------------ odd Jacobian


def parity_jacobian(
    mesh: Mesh,
    tau: float,
    omega: complex,
    u: np.ndarray,
    parity: Literal["even", "odd"],
    K: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Real matrix of v -> v - tau w^2 K^w[(1 + 2|u|^2) v + u^2 conj(v)] on one parity class.

    Coordinates are the real and imaginary parts in the weighted-orthonormal
    basis of that class, so singular values are those of the operator in the
    weighted norm. The block decouples whenever u has a definite parity.
    """
    if K is None:
        K = assemble_helmholtz(mesh, omega).entries
    A = tau * omega**2 * K
    W = mesh.weights[:, None]
    M = restrict_matrix(W * (A * (1.0 + 2.0 * np.abs(u) ** 2)[None, :]), mesh, parity)
    P = restrict_matrix(W * (A * (u * u)[None, :]), mesh, parity)
    m = M.shape[0]
    eye = np.eye(m)
    J = np.empty((2 * m, 2 * m))
    J[:m, :m] = eye - M.real - P.real
    J[:m, m:] = M.imag - P.imag
    J[m:, :m] = -(M.imag + P.imag)
    J[m:, m:] = eye - M.real + P.real
    return J


def odd_jacobian(mesh: Mesh, tau: float, omega: complex, u: np.ndarray, K: Optional[np.ndarray] = None) -> np.ndarray:
    return parity_jacobian(mesh, tau, omega, u, "odd", K)


def sigma_block(
    mesh: Mesh, tau: float, omega: complex, u: np.ndarray, parity: Literal["even", "odd"]
) -> tuple[float, np.ndarray]:
    """Smallest singular value of one parity block, signed by its determinant.

    Also returns the corresponding right singular vector as a complex field.
    """
    J = parity_jacobian(mesh, tau, omega, u, parity)
    U, s, Vt = sla.svd(J, check_finite=False)
    sign, _ = np.linalg.slogdet(J)
    m = J.shape[0] // 2
    v = Vt[-1]
    z = v[:m] + 1j * v[m:]
    field_ = expand_parity(mesh, parity, z)
    return float(sign * s[-1]), field_


def sigma_odd(mesh: Mesh, tau: float, omega: complex, u: np.ndarray) -> tuple[float, np.ndarray]:
    return sigma_block(mesh, tau, omega, u, "odd")


def loc_metric(mesh: Mesh, u: np.ndarray) -> float:
    """(int_{D1} |u|^2 - int_{D2} |u|^2) / ||u||^2."""
    w = mesh.weights
    dens = w * np.abs(u) ** 2
    total = dens.sum()
    return float((dens[mesh.tags == 1].sum() - dens[mesh.tags == 2].sum()) / total)


def p_plus_squared(mesh: Mesh, u: np.ndarray, phi_plus: np.ndarray) -> float:
    return float(abs(np.sum(mesh.weights * phi_plus * u)) ** 2)


def scan_sigma(branch: Branch, mesh: Mesh, tau: float) -> list:
    """Fill ``branch.sigma_odd`` with the signed odd singular value at every point."""
    branch.sigma_odd = [sigma_odd(mesh, tau, p.omega, p.u)[0] for p in branch.points]
    return branch.sigma_odd


def detect_symmetry_breaking(
    branch: Branch,
    mesh: Mesh,
    tau: float,
    phi_plus: Optional[np.ndarray] = None,
    config: NonlinearConfig = NonlinearConfig(),
    rel_width: float = BISECT_REL_WIDTH,
) -> list[BifurcationEvent]:
    """Locate sign changes of the signed odd singular value along a symmetric branch.

    ``phi_plus`` defaults to the gauge mode the branch was continued with.
    """
    if phi_plus is None:
        phi_plus = np.real(branch.meta["gauge"])
    if not mesh.is_symmetric:
        raise DimerError("symmetry-breaking detection needs a symmetric mesh")
    if len(branch.sigma_odd) != len(branch.points):
        scan_sigma(branch, mesh, tau)
    gauge = phi_plus.astype(complex)
    events = []
    sig = branch.sigma_odd
    for k in range(len(sig) - 1):
        if sig[k] == 0 or sig[k] * sig[k + 1] >= 0:
            continue
        lo, hi = branch.points[k], branch.points[k + 1]
        s_lo, s_hi = sig[k], sig[k + 1]
        mid_pt = lo
        while (hi.amplitude - lo.amplitude) > rel_width * 0.5 * (hi.amplitude + lo.amplitude):
            N_mid = 0.5 * (lo.amplitude + hi.amplitude)
            t = (N_mid - lo.amplitude) / (hi.amplitude - lo.amplitude)
            seed_u = lo.u + t * (hi.u - lo.u)
            seed_w = lo.omega + t * (hi.omega - lo.omega)
            seed_u = seed_u * math.sqrt(N_mid) / norm(mesh, seed_u)
            mid_pt = newton_nonlinear(
                mesh, tau, seed_w, seed_u, gauge, AmplitudeCondition("norm", N_mid), config.newton_tol, config.max_iter
            )
            s_mid, _ = sigma_odd(mesh, tau, mid_pt.omega, mid_pt.u)
            if s_mid * s_lo > 0:
                lo, s_lo = mid_pt, s_mid
            else:
                hi, s_hi = mid_pt, s_mid
        # report the bracket end with the smaller |sigma|
        best = lo if abs(s_lo) <= abs(s_hi) else hi
        _, null = sigma_odd(mesh, tau, best.omega, best.u)
        events.append(
            BifurcationEvent(best.amplitude, best, (lo.amplitude, hi.amplitude), null, p_plus_squared(mesh, best.u, phi_plus))
        )
    branch.events = events
    return events


def trace_asymmetric_branch(
    event: BifurcationEvent,
    direction: int,
    mesh: Mesh,
    tau: float,
    phi_plus: np.ndarray,
    phi_minus: np.ndarray,
    steps: int = 12,
    dp: Optional[float] = None,
    config: NonlinearConfig = NonlinearConfig(),
) -> Branch:
    """Branch-switch along +-(odd null vector) and continue in p- = Re<phi-, u>.

    The gauge stays Im<phi+, u> = 0 and the amplitude condition pins the odd
    coefficient, which rules out the symmetric branch (where it vanishes).
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    base = event.point
    v = event.null_vector
    proj = np.sum(mesh.weights * phi_minus * v)
    if abs(proj) == 0:
        raise DimerError("null vector has no phi- component")
    v = v / proj  # now <phi-, v> = 1
    gauge = phi_plus.astype(complex)
    unorm = norm(mesh, base.u)
    first = None
    first_p = None
    for frac in (1e-3, 3e-3, 1e-2, 3e-2, 1e-1):
        p = frac * unorm
        seed = base.u + direction * p * v
        cond = AmplitudeCondition("projection", direction * p, phi_minus.astype(complex))
        try:
            cand = newton_nonlinear(mesh, tau, base.omega, seed, gauge, cond, config.newton_tol, config.max_iter)
        except NonlinearError:
            continue
        if cand.symmetry == "even":
            continue
        first, first_p = cand, p
        break
    if first is None:
        raise DimerError("failed branch switch after the perturbation sweep")
    step = dp if dp is not None else max(first_p, 0.02 * unorm)
    branch = Branch(parameter="p_minus", branch_id=f"asym{'+' if direction > 0 else '-'}")
    prev = [(0.0, base.omega, base.u), (first_p, first.omega, first.u)]
    branch.points.append(first)
    branch.values.append(first_p)
    branch.loc_metric.append(loc_metric(mesh, first.u))
    p = first_p
    while len(branch.points) < steps:
        p_next = p + step
        (p0, w0, u0), (p1, w1, u1) = prev[-2], prev[-1]
        t = (p_next - p1) / (p1 - p0)
        cond = AmplitudeCondition("projection", direction * p_next, phi_minus.astype(complex))
        try:
            pt = newton_nonlinear(
                mesh, tau, w1 + t * (w1 - w0), u1 + t * (u1 - u0), gauge, cond, config.newton_tol, config.max_iter
            )
        except NonlinearError:
            step *= 0.5
            if step < (dp or first_p) / 64:
                branch.complete = False
                break
            continue
        branch.points.append(pt)
        branch.values.append(p_next)
        branch.loc_metric.append(loc_metric(mesh, pt.u))
        prev.append((p_next, pt.omega, pt.u))
        p = p_next
    return branch


def two_d_obstruction(
    mesh: Mesh,
    tau: float,
    N_bound: float,
    config: NonlinearConfig = NonlinearConfig(max_step=0.5),
    floor_ratio: float = 0.1,
    max_points: int = 400,
    which: Literal["principal", "antisymmetric"] = "principal",
) -> ObstructionReport:
    """Symmetry-breaking singular values along a 2D dimer branch, plus the sign obstruction.

    ``which="principal"`` follows the even branch from the principal resonance and
    watches the odd Jacobian block. ``which="antisymmetric"`` follows the branch of
    the leading odd eigenfield of the mean-zero operator and watches the even
    block instead, since there the odd block carries the gauge null direction.
    The branch is continued until ||u||^2 reaches ``N_bound`` or Newton stops
    converging; the reference singular value is taken at the linear resonance.
    """
    if mesh.dimension != 2:
        raise DimerError("the obstruction report is for 2D dimers")
    if not mesh.is_symmetric:
        raise DimerError("the obstruction report needs a symmetric dimer")
    if which == "principal":
        mode = constant_pair(mesh)
        omega0, _ = seed_2d_principal(mesh, tau)
        block = "odd"
    elif which == "antisymmetric":
        mode = next((p for p in top_eigenpairs(assemble_tilde(mesh), 3) if p.symmetry == "odd"), None)
        if mode is None:
            raise DimerError("no odd eigenfield among the leading mean-zero modes")
        omega0 = asymptotic_linear_2d("bulk", mode, tau)
        block = "even"
    else:
        raise ValueError(f"unknown branch {which!r}")
    branch = continue_branch(mesh, tau, mode, N_bound, config, omega0, max_points=max_points)
    if not branch.points:
        raise DimerError("no point of the branch converged")
    init, _ = sigma_block(mesh, tau, branch.meta["omega_linear"], np.zeros(mesh.n, complex), block)
    if block == "odd":
        events = len(detect_symmetry_breaking(branch, mesh, tau, config=config))
        sig = list(branch.sigma_odd)
    else:
        sig = [sigma_block(mesh, tau, p.omega, p.u, "even")[0] for p in branch.points]
        events = sum(1 for a, b in zip(sig, sig[1:]) if a * b < 0)
    ratios = [v / init for v in sig]
    thetas = np.linspace(0.0, math.pi, 721)
    factor = np.real(2.0 + np.exp(-2j * thetas))
    consistent = min(ratios) >= floor_ratio and not events
    return ObstructionReport(
        sigma_initial=init,
        sigma_min=min(sig),
        floor_ratio=min(ratios),
        events=events,
        N_reached=branch.points[-1].amplitude,
        phase_factor_range=(float(factor.min()), float(factor.max())),
        matched_coefficient=-mesh.total_measure,
        consistent=bool(consistent),
        branch=branch,
        which=which,
        block=block,
        sigma=tuple(sig),
    )
