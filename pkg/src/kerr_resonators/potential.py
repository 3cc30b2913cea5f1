"""Nystrom discretization of the volume potentials K_D^omega, K_D and the mean-zero K~_D.

Entry (i, j) of an assembled operator is G(|x_i - x_j|) * w_j off the diagonal.
The diagonal integrates the kernel over the ball (3D) or disk (2D) with the same
measure as the cell, which is exact for the static singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Union

import numpy as np
from scipy import fft as sfft
from scipy.special import hankel1

from .kernels import KernelParams, eta_omega, green
from .mesh import Mesh

OperatorKind = Literal["helmholtz_potential", "newtonian", "tilde_newtonian"]


def self_cell_static(dimension: int, weight):
    """Integral of the static kernel over the disk/ball of measure ``weight``."""
    weight = np.asarray(weight, dtype=float)
    if dimension == 3:
        rho = (3.0 * weight / (4.0 * math.pi)) ** (1.0 / 3.0)
        return 0.5 * rho**2
    rho = np.sqrt(weight / math.pi)
    return 0.25 * rho**2 - 0.5 * rho**2 * np.log(rho)


def self_cell_correction(dimension: int, omega: complex) -> complex:
    """Finite limit of (G^omega - G^0)(r) as r -> 0."""
    if dimension == 3:
        return 1j * complex(omega) / (4.0 * math.pi)
    return -eta_omega(omega)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense discretized volume potential acting on fields of ``mesh``."""

    entries: np.ndarray
    mesh: Mesh
    omega: complex
    kind: OperatorKind

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def matvec(self, f: np.ndarray) -> np.ndarray:
        return self.entries @ f

    def symmetrized(self) -> np.ndarray:
        """W^(1/2) K W^(-1/2); symmetric for the static kinds."""
        s = np.sqrt(self.mesh.weights)
        return s[:, None] * self.entries / s[None, :]


class LatticeOperator:
    """Matrix-free potential on a lattice mesh, applied by FFT convolution.

    Identical in exact arithmetic to the dense assembly (same self-cell rule), but
    needs only O(n) memory, which makes 3D meshes with tens of thousands of cells
    tractable for eigenvalue iterations.
    """

    def __init__(self, mesh: Mesh, omega: complex = 0.0, kind: OperatorKind = "newtonian"):
        if mesh.grid_index is None:
            raise ValueError("lattice operator needs a lattice-aligned mesh")
        w = mesh.weights
        if np.ptp(w) > 1e-14 * w[0]:
            raise ValueError("lattice operator needs uniform cell weights")
        if kind == "tilde_newtonian":
            raise ValueError("tilde operator is only available in dense form")
        self.mesh = mesh
        self.omega = complex(omega)
        self.kind = kind
        d = mesh.dimension
        lo = mesh.grid_index.min(axis=0)
        extent = mesh.grid_index.max(axis=0) - lo + 1
        self._slots = tuple((mesh.grid_index - lo).T)
        self._fft_shape = tuple(sfft.next_fast_len(int(2 * s - 1)) for s in extent)
        axes = []
        for s, m in zip(extent, self._fft_shape):
            k = np.arange(m)
            axes.append(np.where(k < s, k, k - m).astype(float))
        grids = np.meshgrid(*axes, indexing="ij")
        r = mesh.spacing * np.sqrt(sum(g * g for g in grids))
        origin = (0,) * d
        r[origin] = 1.0
        weight = float(w[0])
        self._real = self.omega == 0 and (d == 3 or kind == "newtonian")
        if self.omega == 0:
            kern = green(KernelParams(d, 0.0), r) * weight
            kern[origin] = self_cell_static(d, weight)
        else:
            kern = green(KernelParams(d, self.omega), r) * weight
            kern[origin] = self_cell_static(d, weight) + weight * self_cell_correction(d, self.omega)
        if self._real:
            self._kernel_hat = sfft.rfftn(np.real(kern), s=self._fft_shape)
        else:
            self._kernel_hat = sfft.fftn(kern.astype(complex))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.mesh.n, self.mesh.n)

    def _convolve_real(self, f: np.ndarray) -> np.ndarray:
        grid = np.zeros(self._fft_shape)
        grid[self._slots] = f
        out = sfft.irfftn(sfft.rfftn(grid) * self._kernel_hat, s=self._fft_shape)
        return out[self._slots]

    def matvec(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        if f.shape[0] != self.mesh.n:
            raise ValueError("dimension mismatch between operator and field")
        if self._real:
            if np.iscomplexobj(f):
                return self._convolve_real(f.real) + 1j * self._convolve_real(f.imag)
            return self._convolve_real(f)
        grid = np.zeros(self._fft_shape, dtype=complex)
        grid[self._slots] = f
        out = sfft.ifftn(sfft.fftn(grid) * self._kernel_hat)
        return out[self._slots]


AnyOperator = Union[OperatorMatrix, LatticeOperator]


def _kernel_matrix(mesh: Mesh, omega: complex) -> np.ndarray:
    """G^omega(|x_i - x_j|) with the diagonal set to zero."""
    dist = mesh.distances
    d = mesh.dimension
    safe = dist.copy()
    np.fill_diagonal(safe, 1.0)
    if omega == 0:
        if d == 3:
            G = 1.0 / (4.0 * math.pi * safe)
        else:
            G = -np.log(safe) / (2.0 * math.pi)
    elif d == 3:
        G = np.exp(1j * omega * safe) / (4.0 * math.pi * safe)
    else:
        G = 0.25j * hankel1(0, omega * safe)
    np.fill_diagonal(G, 0.0)
    return G


def assemble_newtonian(mesh: Mesh) -> OperatorMatrix:
    """Dense static potential (kernel 1/(4 pi r) or -ln r / (2 pi))."""
    K = _kernel_matrix(mesh, 0.0) * mesh.weights[None, :]
    K[np.diag_indices(mesh.n)] = self_cell_static(mesh.dimension, mesh.weights)
    return OperatorMatrix(K, mesh, 0.0, "newtonian")


def assemble_helmholtz(mesh: Mesh, omega: complex) -> OperatorMatrix:
    """Dense outgoing potential K_D^omega."""
    omega = complex(omega)
    if omega == 0:
        return assemble_newtonian(mesh)
    K = _kernel_matrix(mesh, omega) * mesh.weights[None, :]
    diag = self_cell_static(mesh.dimension, mesh.weights) + mesh.weights * self_cell_correction(mesh.dimension, omega)
    K[np.diag_indices(mesh.n)] = diag
    return OperatorMatrix(K, mesh, omega, "helmholtz_potential")


def assemble_helmholtz_derivative(mesh: Mesh, omega: complex) -> np.ndarray:
    """Entrywise omega-derivative of :func:`assemble_helmholtz` (analytic)."""
    omega = complex(omega)
    dist = mesh.distances
    w = mesh.weights
    if mesh.dimension == 3:
        dK = (1j / (4.0 * math.pi)) * np.exp(1j * omega * dist)
        dK *= w[None, :]
        dK[np.diag_indices(mesh.n)] = 1j * w / (4.0 * math.pi)
        return dK
    if omega == 0:
        raise ValueError("2D potential derivative is singular at omega = 0")
    safe = dist.copy()
    np.fill_diagonal(safe, 1.0)
    dK = (-0.25j) * safe * hankel1(1, omega * safe)
    dK *= w[None, :]
    dK[np.diag_indices(mesh.n)] = -w / (2.0 * math.pi * omega)
    return dK


def assemble_tilde(mesh: Mesh) -> OperatorMatrix:
    """(I - P0) K (I - P0) with P0 the weighted projection onto constants."""
    K = assemble_newtonian(mesh).entries
    w = mesh.weights
    area = w.sum()
    ones = np.ones(mesh.n)
    # P0 = 1 w^T / |D|, expanded so no n x n projector is formed
    row_mean = w @ K / area
    col_sum = K.sum(axis=1) / area
    total = w @ col_sum / area
    T = K - np.outer(ones, row_mean) - np.outer(col_sum, w) + total * np.outer(ones, w)
    return OperatorMatrix(T, mesh, 0.0, "tilde_newtonian")


def apply(op: AnyOperator, f: np.ndarray) -> np.ndarray:
    """Matrix-vector product of an assembled or lattice operator with a field."""
    f = np.asarray(f)
    if f.shape[0] != op.shape[1]:
        raise ValueError(f"dimension mismatch: operator {op.shape}, field {f.shape}")
    return op.matvec(f)


def dump_matrix(op: OperatorMatrix, path: str | Path) -> None:
    """Write entries row-major as little-endian (re, im) float64 pairs."""
    data = np.ascontiguousarray(op.entries, dtype="<c16")
    Path(path).write_bytes(data.tobytes(order="C"))
