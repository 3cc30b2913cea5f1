"""Voxel quadrature meshes for balls, disks, boxes and symmetric dimers.

Every cell is a voxel of side ``h`` on a regular lattice; a voxel is kept iff its
center lies strictly inside the analytic domain, so all weights equal ``h**d``.
Fields on a mesh are plain numpy arrays indexed like ``mesh.centers``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Literal, Optional

import numpy as np

ShapeKind = Literal["ball", "disk", "box", "dimer"]
Parity = Literal["even", "odd", "none"]

# Slack used when deciding whether a lattice point sits inside a domain, in
# units of h**2 (ball/disk) or h (box); keeps boundary hits deterministic.
_INSIDE_SLACK = 1e-9


class MeshError(ValueError):
    """Raised for invalid domain specifications or degenerate meshes."""


@dataclass(frozen=True)
class DomainSpec:
    """Analytic description of a resonator domain and its cell size."""

    dimension: int
    shape: ShapeKind
    resolution: float
    radius: Optional[float] = None
    extents: Optional[tuple[float, ...]] = None
    base: Optional["DomainSpec"] = None
    half_separation: Optional[float] = None

    def __post_init__(self) -> None:
        if self.dimension not in (2, 3):
            raise MeshError(f"dimension must be 2 or 3, got {self.dimension}")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise MeshError("resolution h must be strictly positive")
        if self.shape in ("ball", "disk"):
            expected = 3 if self.shape == "ball" else 2
            if self.dimension != expected:
                raise MeshError(f"{self.shape} requires dimension {expected}")
            if self.radius is None or not self.radius > 0:
                raise MeshError("radius must be strictly positive")
        elif self.shape == "box":
            if self.extents is None or len(self.extents) != self.dimension:
                raise MeshError("box extents must have one entry per dimension")
            if any(not e > 0 for e in self.extents):
                raise MeshError("box extents must be strictly positive")
        elif self.shape == "dimer":
            if self.base is None or self.base.shape == "dimer":
                raise MeshError("dimer base must be a ball, disk or box")
            if self.base.dimension != self.dimension:
                raise MeshError("dimer base dimension mismatch")
            if self.base.resolution != self.resolution:
                raise MeshError("dimer and base must share the resolution")
            if self.half_separation is None or not self.half_separation > 0:
                raise MeshError("half separation L must be strictly positive")
            if self.half_separation <= self.base.half_width_x():
                raise MeshError("overlapping particles: L must exceed the base half-width")
        else:
            raise MeshError(f"unknown shape {self.shape!r}")

    @classmethod
    def ball(cls, radius: float, h: float) -> "DomainSpec":
        return cls(dimension=3, shape="ball", resolution=h, radius=radius)

    @classmethod
    def disk(cls, radius: float, h: float) -> "DomainSpec":
        return cls(dimension=2, shape="disk", resolution=h, radius=radius)

    @classmethod
    def box(cls, extents: tuple[float, ...], h: float) -> "DomainSpec":
        return cls(dimension=len(extents), shape="box", resolution=h, extents=tuple(extents))

    @classmethod
    def dimer(cls, base: "DomainSpec", half_separation: float) -> "DomainSpec":
        return cls(
            dimension=base.dimension,
            shape="dimer",
            resolution=base.resolution,
            base=base,
            half_separation=half_separation,
        )

    def half_width_x(self) -> float:
        """Half extent of the domain along the first axis."""
        if self.shape in ("ball", "disk"):
            return float(self.radius)
        if self.shape == "box":
            return 0.5 * float(self.extents[0])
        return float(self.half_separation) + self.base.half_width_x()

    def analytic_measure(self) -> float:
        """Exact area or volume of the continuous domain."""
        if self.shape == "ball":
            return 4.0 * math.pi * self.radius**3 / 3.0
        if self.shape == "disk":
            return math.pi * self.radius**2
        if self.shape == "box":
            return float(np.prod(self.extents))
        return 2.0 * self.base.analytic_measure()

    def to_dict(self) -> dict:
        out: dict = {"dimension": self.dimension, "shape": self.shape, "resolution": self.resolution}
        if self.radius is not None:
            out["radius"] = self.radius
        if self.extents is not None:
            out["extents"] = list(self.extents)
        if self.base is not None:
            out["base"] = self.base.to_dict()
            out["half_separation"] = self.half_separation
        return out


@dataclass(frozen=True, eq=False)
class Mesh:
    """Cell centers, weights and symmetry maps of a voxel mesh.

    ``grid_index`` holds integer lattice coordinates when every cell sits on the
    common lattice ``grid_origin + h * index``; it is ``None`` for dimers whose
    separation is not a multiple of ``h``.
    """

    centers: np.ndarray
    weights: np.ndarray
    tags: np.ndarray
    reflection: Optional[np.ndarray]
    spec: DomainSpec
    spacing: float
    grid_origin: np.ndarray
    grid_index: Optional[np.ndarray]

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.centers.shape[1])

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    @property
    def is_symmetric(self) -> bool:
        return self.reflection is not None

    @cached_property
    def distances(self) -> np.ndarray:
        """Dense matrix of pairwise center distances (cached, n x n)."""
        c = self.centers
        sq = np.einsum("ij,ij->i", c, c)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (c @ c.T)
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, 0.0)
        return np.sqrt(d2)

    def particle(self, tag: int) -> np.ndarray:
        """Indices of the cells belonging to particle ``tag``."""
        return np.flatnonzero(self.tags == tag)

    def coordinate(self, axis: int) -> np.ndarray:
        return self.centers[:, axis].copy()

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Cell indices whose centers coincide with ``points`` (lattice meshes only)."""
        if self.grid_index is None:
            raise MeshError("cell lookup needs a lattice-aligned mesh")
        idx = np.rint((np.asarray(points) - self.grid_origin) / self.spacing).astype(np.int64)
        back = self.grid_origin + self.spacing * idx
        if np.max(np.abs(back - points), initial=0.0) > 1e-6 * self.spacing:
            raise MeshError("points are not on the mesh lattice")
        return _lookup(self.grid_index, idx)


def _lattice_range(half_width: float, h: float) -> np.ndarray:
    m = int(math.ceil(half_width / h)) + 1
    return np.arange(-m, m + 1, dtype=np.int64)


def _base_lattice(spec: DomainSpec) -> np.ndarray:
    """Integer lattice points (origin-centered) kept by center inclusion."""
    h = spec.resolution
    d = spec.dimension
    if spec.shape in ("ball", "disk"):
        axes = [_lattice_range(spec.radius, h)] * d
    else:
        axes = [_lattice_range(0.5 * e, h) for e in spec.extents]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    if spec.shape in ("ball", "disk"):
        r2 = (spec.radius / h) ** 2
        keep = np.einsum("ij,ij->i", grid, grid) < r2 - _INSIDE_SLACK
    else:
        half = np.array([0.5 * e / h for e in spec.extents])
        keep = np.all(np.abs(grid) < half - _INSIDE_SLACK, axis=1)
    return grid[keep]


def _lex_sorted(index: np.ndarray) -> np.ndarray:
    order = np.lexsort(index.T[::-1])
    return index[order]


def _linear_keys(index: np.ndarray, lo: np.ndarray, span: np.ndarray) -> np.ndarray:
    keys = np.zeros(index.shape[0], dtype=np.int64)
    for k in range(index.shape[1]):
        keys = keys * span[k] + (index[:, k] - lo[k])
    return keys


def _lookup(table: np.ndarray, query: np.ndarray) -> np.ndarray:
    lo = np.minimum(table.min(axis=0), query.min(axis=0))
    span = np.maximum(table.max(axis=0), query.max(axis=0)) - lo + 1
    keys = _linear_keys(table, lo, span)
    order = np.argsort(keys, kind="stable")
    q = _linear_keys(query, lo, span)
    pos = np.searchsorted(keys[order], q)
    pos = np.minimum(pos, keys.size - 1)
    found = order[pos]
    if not np.array_equal(keys[found], q):
        raise MeshError("lattice point not present in mesh")
    return found


def _grid_reflection(index: np.ndarray, origin0: float, h: float) -> Optional[np.ndarray]:
    shift = -2.0 * origin0 / h
    s = int(round(shift))
    if abs(shift - s) > 1e-9:
        return None
    mirrored = index.copy()
    mirrored[:, 0] = s - index[:, 0]
    try:
        return _lookup(index, mirrored)
    except MeshError:
        return None


def build_mesh(spec: DomainSpec) -> Mesh:
    """Voxelize ``spec`` with center inclusion and attach the reflection map."""
    h = spec.resolution
    d = spec.dimension
    if spec.shape != "dimer":
        index = _lex_sorted(_base_lattice(spec))
        if index.shape[0] == 0:
            raise MeshError("empty mesh")
        origin = np.zeros(d)
        centers = index * h
        tags = np.ones(index.shape[0], dtype=np.int8)
        reflection = _grid_reflection(index, 0.0, h)
        return Mesh(centers, np.full(index.shape[0], h**d), tags, reflection, spec, h, origin, index)

    base = _lex_sorted(_base_lattice(spec.base))
    if base.shape[0] == 0:
        raise MeshError("empty mesh")
    L = float(spec.half_separation)
    steps = 2.0 * L / h
    aligned = abs(steps - round(steps)) <= 1e-9 * max(1.0, steps)
    mirrored = base.copy()
    mirrored[:, 0] = -mirrored[:, 0]
    shift = np.zeros(d)
    shift[0] = L
    if aligned:
        # both particles on the lattice -L + h*Z^d; particle 2 is offset by 2L/h
        second = mirrored.copy()
        second[:, 0] += int(round(steps))
        index = np.vstack([base, second])
        tags = np.concatenate([np.ones(len(base), np.int8), np.full(len(base), 2, np.int8)])
        order = np.lexsort(index.T[::-1])
        index, tags = index[order], tags[order]
        origin = -shift
        centers = origin + index * h
        reflection = _grid_reflection(index, origin[0], h)
        if reflection is None:
            raise MeshError("dimer reflection map failed on an aligned lattice")
        return Mesh(centers, np.full(index.shape[0], h**d), tags, reflection, spec, h, origin, index)

    first = base * h - shift
    second = mirrored * h + shift
    n1 = base.shape[0]
    centers = np.vstack([first, second])
    tags = np.concatenate([np.ones(n1, np.int8), np.full(n1, 2, np.int8)])
    reflection = np.concatenate([np.arange(n1, 2 * n1), np.arange(n1)])
    return Mesh(centers, np.full(2 * n1, h**d), tags, reflection, spec, h, -shift, None)


# ---------------------------------------------------------------- field helpers


def inner(mesh: Mesh, f: np.ndarray, g: np.ndarray) -> complex:
    """Weighted inner product sum_i w_i conj(f_i) g_i."""
    return complex(np.sum(mesh.weights * np.conj(f) * g))


def norm(mesh: Mesh, f: np.ndarray) -> float:
    return math.sqrt(float(np.sum(mesh.weights * np.abs(f) ** 2)))


def integrate(mesh: Mesh, f: np.ndarray) -> complex:
    return complex(np.sum(mesh.weights * f))


def reflect(mesh: Mesh, f: np.ndarray) -> np.ndarray:
    """Mirror a field across the plane x_1 = 0."""
    if mesh.reflection is None:
        raise MeshError("domain not symmetric")
    f = np.asarray(f)
    if f.shape[0] != mesh.n:
        raise MeshError(f"field has {f.shape[0]} values, mesh has {mesh.n} cells")
    return f[mesh.reflection]


def symmetry_class(mesh: Mesh, f: np.ndarray, tol: float = 1e-8) -> Parity:
    """Classify a field as even, odd or neither under the reflection."""
    size = norm(mesh, f)
    if size == 0.0:
        raise MeshError("cannot classify the zero field")
    rf = reflect(mesh, f)
    if norm(mesh, rf - f) <= tol * size:
        return "even"
    if norm(mesh, rf + f) <= tol * size:
        return "odd"
    return "none"


def parity_basis(mesh: Mesh, parity: Literal["even", "odd"]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weighted-orthonormal basis of even or odd fields.

    Returns ``(rows, mates, scale)``: basis vector ``k`` equals ``scale[k]`` at
    cell ``rows[k]`` and ``+-scale[k]`` at ``mates[k]`` (sign from the parity).
    For self-mirrored cells ``rows[k] == mates[k]`` and only even vectors exist.
    """
    if mesh.reflection is None:
        raise MeshError("domain not symmetric")
    idx = np.arange(mesh.n)
    mate = mesh.reflection
    if parity == "even":
        rows = idx[idx <= mate]
    else:
        rows = idx[idx < mate]
    mates = mate[rows]
    pair = rows != mates
    scale = np.where(pair, 1.0 / np.sqrt(2.0 * mesh.weights[rows]), 1.0 / np.sqrt(mesh.weights[rows]))
    return rows, mates, scale


def parity_matrix(mesh: Mesh, parity: Literal["even", "odd"]) -> np.ndarray:
    """Dense n x m matrix whose columns are the parity basis vectors."""
    rows, mates, scale = parity_basis(mesh, parity)
    sign = 1.0 if parity == "even" else -1.0
    B = np.zeros((mesh.n, rows.size))
    cols = np.arange(rows.size)
    B[rows, cols] = scale
    pair = rows != mates
    B[mates[pair], cols[pair]] = sign * scale[pair]
    return B


def write_mesh_csv(mesh: Mesh, path: str | Path) -> None:
    """Dump the mesh as CSV: index, coordinates, weight, tag, mirror_index."""
    axes = ["x", "y", "z"][: mesh.dimension]
    mirror = mesh.reflection if mesh.reflection is not None else np.full(mesh.n, -1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", *axes, "weight", "tag", "mirror_index"])
        for i in range(mesh.n):
            writer.writerow(
                [i, *(f"{v:.16e}" for v in mesh.centers[i]), f"{mesh.weights[i]:.16e}", int(mesh.tags[i]), int(mirror[i])]
            )
