"""Uniform square-cell meshes on the unit square and the L-shaped domain.

Nodes live on an integer lattice scaled by ``1/divisions``; the lattice
coordinates are kept alongside the float coordinates so that nested levels
can be matched exactly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Domain", "RectMesh", "build_mesh", "refine_uniform", "mesh_size"]


class Domain(enum.Enum):
    UNIT_SQUARE = "unit_square"
    L_SHAPE = "l_shape"

    @property
    def area(self) -> float:
        return 1.0 if self is Domain.UNIT_SQUARE else 3.0

    @property
    def corners(self) -> np.ndarray:
        """Vertices of the polygon (counterclockwise)."""
        if self is Domain.UNIT_SQUARE:
            return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        return np.array([[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [1.0, 0.0],
                         [1.0, 1.0], [-1.0, 1.0]])

    @classmethod
    def parse(cls, text: str) -> "Domain":
        key = text.strip().lower().replace("-", "_")
        aliases = {"unit_square": cls.UNIT_SQUARE, "square": cls.UNIT_SQUARE,
                   "l_shape": cls.L_SHAPE, "lshape": cls.L_SHAPE}
        if key not in aliases:
            raise ValueError(f"unknown domain {text!r}")
        return aliases[key]


def _lattice_extent(domain: Domain, m: int) -> tuple[int, int]:
    """Lower-left lattice offset and number of cells per side of the bounding box."""
    if domain is Domain.UNIT_SQUARE:
        return 0, m
    return -m, 2 * m


def _inside_cell(domain: Domain, i: int, j: int, m: int) -> bool:
    # (i, j) is the lower-left lattice corner of the cell
    if domain is Domain.UNIT_SQUARE:
        return True
    return not (i >= 0 and j < 0)


def _on_boundary(domain: Domain, i: np.ndarray, j: np.ndarray, m: int) -> np.ndarray:
    if domain is Domain.UNIT_SQUARE:
        return (i == 0) | (i == m) | (j == 0) | (j == m)
    outer = (i == -m) | (i == m) | (j == -m) | (j == m)
    reentrant = ((i == 0) & (j <= 0)) | ((j == 0) & (i >= 0))
    return outer | reentrant


@dataclass(frozen=True, eq=False)
class RectMesh:
    """Axis-aligned mesh of equal squares.

    ``lattice`` holds integer node coordinates; physical coordinates are
    ``lattice / divisions``. Cells list their nodes counterclockwise from the
    lower-left corner.
    """

    domain: Domain
    divisions: int
    level: int
    lattice: np.ndarray
    cells: np.ndarray
    boundary: np.ndarray
    parent: "RectMesh | None" = None
    children: np.ndarray | None = None
    _node_lookup: dict = field(default_factory=dict, repr=False)
    _cell_lookup: dict = field(default_factory=dict, repr=False)

    @property
    def cell_side(self) -> float:
        return 1.0 / self.divisions

    @property
    def nodes(self) -> np.ndarray:
        return self.lattice / self.divisions

    @property
    def n_nodes(self) -> int:
        return len(self.lattice)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def h(self) -> float:
        return mesh_size(self)

    def node_index(self, i: int, j: int) -> int:
        """Node index for lattice point ``(i, j)``; ``KeyError`` if absent."""
        return self._node_lookup[(int(i), int(j))]

    def locate(self, point) -> tuple[int, float, float]:
        """Return ``(cell, xi, eta)`` for a physical point, with reference
        coordinates in [0, 1]. Raises ``ValueError`` outside the domain."""
        x, y = float(point[0]), float(point[1])
        m = self.divisions
        lo, ncell = _lattice_extent(self.domain, m)
        tx, ty = x * m - lo, y * m - lo
        tol = 1e-12 * max(1, ncell)
        if not (-tol <= tx <= ncell + tol and -tol <= ty <= ncell + tol):
            raise ValueError(f"point {(x, y)} is outside the domain")
        cells = self._cell_lookup
        cell = None
        # points on shared edges may belong to either neighbour
        for ci in _candidates(tx, ncell, tol):
            for cj in _candidates(ty, ncell, tol):
                cell = cells.get((ci + lo, cj + lo))
                if cell is not None:
                    break
            if cell is not None:
                break
        if cell is None:
            raise ValueError(f"point {(x, y)} is outside the domain")
        xi = min(max(tx - ci, 0.0), 1.0)
        eta = min(max(ty - cj, 0.0), 1.0)
        return cell, xi, eta


def _candidates(t: float, ncell: int, tol: float) -> list[int]:
    base = min(max(int(math.floor(t)), 0), ncell - 1)
    out = [base]
    if abs(t - base) <= tol and base > 0:
        out.append(base - 1)
    if abs(t - base - 1) <= tol and base + 1 < ncell:
        out.append(base + 1)
    return out


def _construct(domain: Domain, m: int, level: int) -> RectMesh:
    lo, ncell = _lattice_extent(domain, m)
    # cells lexicographic by lower-left corner, y-major
    cell_ll = [(lo + a, lo + b) for b in range(ncell) for a in range(ncell)
               if _inside_cell(domain, lo + a, lo + b, m)]
    used = set()
    for i, j in cell_ll:
        used.update(((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)))
    lattice = np.array(sorted(used, key=lambda p: (p[1], p[0])), dtype=np.int64)
    lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(lattice)}
    cells = np.array([[lookup[(i, j)], lookup[(i + 1, j)], lookup[(i + 1, j + 1)],
                       lookup[(i, j + 1)]] for i, j in cell_ll], dtype=np.int64)
    boundary = _on_boundary(domain, lattice[:, 0], lattice[:, 1], m)
    cell_lookup = {ll: c for c, ll in enumerate(cell_ll)}
    return RectMesh(domain, m, level, lattice, cells, boundary,
                    _node_lookup=lookup, _cell_lookup=cell_lookup)


def build_mesh(domain: Domain, divisions_per_unit: int) -> RectMesh:
    """Level-1 mesh of squares with side ``1/divisions_per_unit``."""
    if divisions_per_unit < 1:
        raise ValueError("divisions_per_unit must be >= 1")
    return _construct(domain, int(divisions_per_unit), 1)


def refine_uniform(mesh: RectMesh) -> RectMesh:
    """Split every cell into four congruent squares.

    The child mesh records ``parent`` and ``children[c] = (4 child cells)``
    ordered like the corners of the parent cell.
    """
    fine = _construct(mesh.domain, 2 * mesh.divisions, mesh.level + 1)
    lookup = fine._cell_lookup
    ll = 2 * mesh.lattice[mesh.cells[:, 0]]
    children = np.array([[lookup[(i, j)], lookup[(i + 1, j)], lookup[(i + 1, j + 1)],
                          lookup[(i, j + 1)]] for i, j in ll], dtype=np.int64)
    return RectMesh(fine.domain, fine.divisions, fine.level, fine.lattice, fine.cells,
                    fine.boundary, parent=mesh, children=children,
                    _node_lookup=fine._node_lookup, _cell_lookup=fine._cell_lookup)


def mesh_size(mesh: RectMesh) -> float:
    """Cell diagonal ``sqrt(2) * cell_side``."""
    return math.sqrt(2.0) * mesh.cell_side
