"""Structured 2D meshes, cell-valued scalar fields and the L^1/L^2 machinery.

Cells are stored flat in row-major order with x fastest: the cell (i, j)
(column i, row j) has flat index ``j*nx + i`` and centre
``(x0 + (i + 1/2)*dx, y0 + (j + 1/2)*dy)``.  All quadrature is midpoint
(one value per cell), so inner products are plain weighted sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import MeshMismatch, RegionGap, ZeroDimension


class BoundaryTag(Enum):
    """Outer-edge condition.

    VACUUM is read as zero-flux by the neutronics and as a fixed-temperature
    edge by the heat solver; SYMMETRY is zero normal current / adiabatic for
    both; FIXED_TEMPERATURE is an explicit thermal Dirichlet edge (treated
    like VACUUM by the neutronics).
    """

    VACUUM = "vacuum"
    SYMMETRY = "symmetry"
    FIXED_TEMPERATURE = "fixed_temperature"


_TAG_ALIASES = {t.value: t for t in BoundaryTag}


def _as_tag(tag) -> BoundaryTag:
    if isinstance(tag, BoundaryTag):
        return tag
    return _TAG_ALIASES[str(tag).lower()]


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform 2D Cartesian cell mesh with per-cell region ids.

    Parameters
    ----------
    nx, ny : int
        Cell counts along x and y.
    dx, dy : float
        Cell sizes (cm).
    origin : (float, float)
        Coordinates (x0, y0) of the lower-left domain corner (cm).
    region_id : np.ndarray
        Integer region id per cell, flat, length nx*ny.
    boundary : dict
        Per-side tags: keys 'west', 'east', 'south', 'north', values
        BoundaryTag (or their string names).  Every outer edge on a side
        carries that side's tag.
    """

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float]
    region_id: np.ndarray
    boundary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ZeroDimension(f"mesh has {self.nx} x {self.ny} cells")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("cell sizes must be positive")
        rid = np.asarray(self.region_id, dtype=np.int64).ravel()
        if rid.size != self.n_cells:
            raise RegionGap(
                f"region map has {rid.size} entries, mesh has {self.n_cells} cells")
        if np.any(rid < 0):
            raise RegionGap("negative region id marks an unassigned cell")
        rid.flags.writeable = False
        object.__setattr__(self, "region_id", rid)
        tags = {side: _as_tag(self.boundary.get(side, BoundaryTag.VACUUM))
                for side in ("west", "east", "south", "north")}
        object.__setattr__(self, "boundary", tags)

    # -- geometry helpers --

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def domain_area(self) -> float:
        return self.n_cells * self.cell_area

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat arrays (x, y) of cell-centre coordinates."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.dx
        ys = y0 + (np.arange(self.ny) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)           # row-major, x fastest
        return gx.ravel(), gy.ravel()

    def region_mask(self, region: int) -> np.ndarray:
        return self.region_id == region

    def region_area(self, region: int) -> float:
        return float(np.count_nonzero(self.region_mask(region))) * self.cell_area

    def as_grid(self, flat: np.ndarray) -> np.ndarray:
        """Reshape a flat per-cell array to (ny, nx)."""
        return np.asarray(flat).reshape(self.ny, self.nx)

    def same_grid(self, other: "StructuredMesh") -> bool:
        return (self.nx == other.nx and self.ny == other.ny
                and self.dx == other.dx and self.dy == other.dy
                and self.origin == other.origin)


@dataclass(frozen=True)
class ScalarField:
    """One real value per cell of a StructuredMesh."""

    mesh: StructuredMesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64).ravel()
        if vals.size != self.mesh.n_cells:
            raise MeshMismatch(
                f"field has {vals.size} values, mesh has {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_mesh(self, other)
        return ScalarField(self.mesh, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _check_same_mesh(self, other)
        return ScalarField(self.mesh, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.mesh, self.values * float(c))

    __rmul__ = __mul__

    def as_grid(self) -> np.ndarray:
        return self.mesh.as_grid(self.values)


def _check_same_mesh(f: ScalarField, g: ScalarField):
    if f.mesh is not g.mesh and not f.mesh.same_grid(g.mesh):
        raise MeshMismatch("fields live on different meshes")


def constant_field(mesh: StructuredMesh, value: float) -> ScalarField:
    return ScalarField(mesh, np.full(mesh.n_cells, float(value)))


def inner_product(f: ScalarField, g: ScalarField) -> float:
    """L^2 scalar product by midpoint quadrature: sum f*g*dx*dy."""
    _check_same_mesh(f, g)
    return float(np.dot(f.values, g.values) * f.mesh.cell_area)


def reduce_field(f: ScalarField, kind: str) -> float:
    """Scalar reduction of a field: ``l1`` (integral of |f|), ``l2``
    (sqrt of the squared integral) or ``integral``."""
    kind = kind.lower()
    area = f.mesh.cell_area
    if kind in ("l1", "l1norm"):
        return float(np.sum(np.abs(f.values)) * area)
    if kind in ("l2", "l2norm"):
        return float(np.sqrt(np.dot(f.values, f.values) * area))
    if kind == "integral":
        return float(np.sum(f.values) * area)
    raise ValueError(f"unknown reduction kind {kind!r}")


def l2_norms(mesh: StructuredMesh, value_matrix: np.ndarray) -> np.ndarray:
    """Row-wise L^2 norms of a (k, n_cells) stack of cell values."""
    m = np.atleast_2d(np.asarray(value_matrix, dtype=np.float64))
    return np.sqrt(np.einsum("ij,ij->i", m, m) * mesh.cell_area)


# -- construction from a config description ----------------------------------

def read_region_mask(path) -> np.ndarray:
    """Read a region mask file: ny lines of nx whitespace-separated ints,
    first line is the row j=0 (y = y0)."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([int(tok) for tok in line.split()])
    if not rows:
        raise RegionGap(f"region mask {path} is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise RegionGap(f"region mask {path} has ragged rows")
    return np.array(rows, dtype=np.int64).ravel()


def write_region_mask(path, mesh: StructuredMesh):
    grid = mesh.as_grid(mesh.region_id)
    with open(path, "w", encoding="ascii") as fh:
        for row in grid:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def build_mesh(config: dict) -> StructuredMesh:
    """Build a mesh from a plain-dict description.

    Required keys: nx, ny, dx, dy.  Optional: origin (default (0, 0)),
    boundary (per-side tags), and exactly one of ``region_id`` (flat or
    (ny, nx) array / nested lists) or ``region_file`` (mask file path).
    Without either, all cells get region 0.
    """

    nx, ny = int(config["nx"]), int(config["ny"])
    if nx * ny == 0:
        raise ZeroDimension("nx*ny = 0")
    if "region_file" in config:
        rid = read_region_mask(config["region_file"])
    elif "region_id" in config:
        rid = np.asarray(config["region_id"], dtype=np.int64).ravel()
    else:
        rid = np.zeros(nx * ny, dtype=np.int64)
    return StructuredMesh(
        nx=nx, ny=ny,
        dx=float(config["dx"]), dy=float(config["dy"]),
        origin=tuple(config.get("origin", (0.0, 0.0))),
        region_id=rid,
        boundary=dict(config.get("boundary", {})),
    )
