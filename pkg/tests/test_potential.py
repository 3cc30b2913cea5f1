import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from kerr_resonators.kernels import eta_omega
from kerr_resonators.mesh import DomainSpec, Mesh, build_mesh, inner, reflect
from kerr_resonators.potential import (
    LatticeOperator,
    apply,
    assemble_helmholtz,
    assemble_helmholtz_derivative,
    assemble_newtonian,
    assemble_tilde,
    dump_matrix,
    self_cell_static,
)


def two_cell_mesh(r: float, w: float) -> Mesh:
    centers = np.array([[0.0, 0.0, 0.0], [r, 0.0, 0.0]])
    spec = DomainSpec.ball(1.0, w ** (1 / 3))
    return Mesh(centers, np.full(2, w), np.ones(2, np.int8), None, spec, w ** (1 / 3), np.zeros(3), None)


def test_two_cell_off_diagonals():
    K = assemble_newtonian(two_cell_mesh(1.7, 0.01)).entries
    assert K[0, 1] == pytest.approx(0.01 / (4 * math.pi * 1.7), rel=1e-15)
    assert K[1, 0] == K[0, 1]


@pytest.mark.parametrize("w", [1e-3, 0.05, 0.3])
def test_self_cell_matches_radial_quadrature(w):
    rho3 = (3 * w / (4 * math.pi)) ** (1 / 3)
    ref3 = quad(lambda r: r, 0, rho3, epsabs=0, epsrel=1e-13)[0]  # 4 pi r^2 / (4 pi r)
    assert self_cell_static(3, w) == pytest.approx(ref3, rel=1e-12)
    rho2 = math.sqrt(w / math.pi)
    ref2 = quad(lambda r: -math.log(r) * r, 0, rho2, epsabs=0, epsrel=1e-13)[0]  # 2 pi r (-ln r) / (2 pi)
    assert self_cell_static(2, w) == pytest.approx(ref2, rel=1e-10)


def test_newtonian_of_one_at_ball_center_tends_to_half():
    vals = []
    for h in (0.2, 0.1, 0.05):
        mesh = build_mesh(DomainSpec.ball(1.0, h))
        center = int(mesh.locate(np.zeros((1, 3)))[0])
        vals.append(LatticeOperator(mesh).matvec(np.ones(mesh.n))[center])
    errs = [abs(v - 0.5) for v in vals]
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.01


def test_static_helmholtz_is_newtonian(ball_mesh):
    assert np.array_equal(assemble_helmholtz(ball_mesh, 0.0).entries, assemble_newtonian(ball_mesh).entries)


def test_3d_small_frequency_correction(ball_mesh):
    w = 1e-3
    diff = (assemble_helmholtz(ball_mesh, w).entries - assemble_newtonian(ball_mesh).entries) / ball_mesh.weights
    diam = 2.0
    assert np.max(np.abs(diff - 1j * w / (4 * math.pi))) <= w**2 * diam / (4 * math.pi) * 1.01


def test_2d_small_frequency_correction(disk_mesh):
    w = 1e-4
    diff = (assemble_helmholtz(disk_mesh, w).entries - assemble_newtonian(disk_mesh).entries) / disk_mesh.weights
    assert np.max(np.abs(diff + eta_omega(w))) < 1e-6


def test_helmholtz_derivative_matches_finite_difference(ball_mesh, disk_mesh):
    for mesh, w in ((ball_mesh, 0.3 - 0.02j), (disk_mesh, 0.2 - 0.01j)):
        h = 1e-6
        fd = (assemble_helmholtz(mesh, w + h).entries - assemble_helmholtz(mesh, w - h).entries) / (2 * h)
        assert np.max(np.abs(assemble_helmholtz_derivative(mesh, w) - fd)) < 1e-7


def test_tilde_examples(disk_mesh, rng):
    T = assemble_tilde(disk_mesh)
    assert np.max(np.abs(apply(T, np.ones(disk_mesh.n)))) < 1e-12
    f = rng.standard_normal(disk_mesh.n)
    assert abs(np.sum(disk_mesh.weights * apply(T, f))) < 1e-12
    S = T.symmetrized()
    assert np.allclose(S, S.T, atol=1e-13)
    assert np.all(np.isreal(np.linalg.eigvalsh(S)))


def test_apply_linear_and_checks_shape(ball_mesh, rng):
    K = assemble_helmholtz(ball_mesh, 0.4 - 0.01j)
    f = rng.standard_normal(ball_mesh.n) + 1j * rng.standard_normal(ball_mesh.n)
    assert np.all(apply(K, np.zeros(ball_mesh.n)) == 0)
    alpha = 0.3 - 2.1j
    assert np.allclose(apply(K, alpha * f), alpha * apply(K, f), rtol=1e-13, atol=1e-15)
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply(K, f[:-1])


@given(seed=st.integers(0, 2**32 - 1), re=st.floats(0.0, 2.0), im=st.floats(-0.5, 0.0))
def test_reflection_commutes_with_potential(ball_dimer, seed, re, im):
    r = np.random.default_rng(seed)
    K = assemble_helmholtz(ball_dimer, complex(re, im))
    f = r.standard_normal(ball_dimer.n) + 1j * r.standard_normal(ball_dimer.n)
    lhs = reflect(ball_dimer, apply(K, f))
    rhs = apply(K, reflect(ball_dimer, f))
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, np.max(np.abs(lhs)))


@given(seed=st.integers(0, 2**32 - 1))
def test_newtonian_self_adjoint(ball_mesh, seed):
    r = np.random.default_rng(seed)
    K = assemble_newtonian(ball_mesh)
    f, g = r.standard_normal(ball_mesh.n), r.standard_normal(ball_mesh.n)
    a = inner(ball_mesh, f, apply(K, g))
    b = inner(ball_mesh, apply(K, f), g)
    assert abs(a - b) <= 1e-12 * abs(a)


@given(seed=st.integers(0, 2**32 - 1))
def test_newtonian_strongly_positive(ball_mesh, seed):
    r = np.random.default_rng(seed)
    f = np.zeros(ball_mesh.n)
    k = r.integers(1, 6)
    f[r.choice(ball_mesh.n, k, replace=False)] = r.uniform(0.1, 1.0, k)
    assert np.all(apply(assemble_newtonian(ball_mesh), f) > 0)


def test_newtonian_real_and_weighted_symmetric(ball_mesh):
    K = assemble_newtonian(ball_mesh).entries
    assert np.isrealobj(K) or np.all(K.imag == 0)
    W = np.sqrt(ball_mesh.weights)
    S = W[:, None] * K * W[None, :]
    assert np.allclose(S, S.T, rtol=0, atol=1e-16)
    off = K[~np.eye(ball_mesh.n, dtype=bool)]
    assert np.all(off > 0)


def test_3d_remainder_is_first_order(ball_mesh):
    K0 = assemble_newtonian(ball_mesh).entries
    norms = [np.abs(assemble_helmholtz(ball_mesh, eps * 1.5).entries - K0).sum(axis=1).max() for eps in (1e-1, 1e-2, 1e-3)]
    ratios = [a / b for a, b in zip(norms, norms[1:])]
    assert all(9.0 < q < 11.0 for q in ratios)


@pytest.mark.parametrize("omega", [0.0, 0.8 - 0.05j])
def test_lattice_operator_matches_dense(ball_dimer, rng, omega):
    dense = assemble_helmholtz(ball_dimer, omega)
    lat = LatticeOperator(ball_dimer, omega, "newtonian" if omega == 0 else "helmholtz_potential")
    f = rng.standard_normal(ball_dimer.n) + 1j * rng.standard_normal(ball_dimer.n)
    assert np.max(np.abs(lat.matvec(f) - dense.matvec(f))) < 1e-13 * np.max(np.abs(dense.matvec(f)))


def test_lattice_operator_2d_matches_dense(disk_dimer, rng):
    for omega in (0.0, 0.3 - 0.01j):
        dense = assemble_helmholtz(disk_dimer, omega)
        f = rng.standard_normal(disk_dimer.n)
        assert np.allclose(LatticeOperator(disk_dimer, omega).matvec(f), dense.matvec(f), rtol=0, atol=1e-13)


def test_dump_matrix_roundtrip(tmp_path, ball_mesh):
    op = assemble_helmholtz(ball_mesh, 0.5 - 0.1j)
    path = tmp_path / "k.bin"
    dump_matrix(op, path)
    raw = np.fromfile(path, dtype="<f8").reshape(ball_mesh.n, ball_mesh.n, 2)
    assert np.array_equal(raw[..., 0] + 1j * raw[..., 1], op.entries)
