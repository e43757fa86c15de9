from dataclasses import dataclass
from enum import IntEnum
from typing import Callable

import numpy as np

from xgfem.core.constants import Constants
from xgfem.core.exceptions import MeshError
from xgfem.core.xg_debug import logger


class EdgeTag(IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2


@dataclass(frozen=True)
class EdgeInfo:
    vertices: tuple[int, int]
    plus: int
    minus: int | None
    normal: np.ndarray
    length: float
    tag: EdgeTag
    local: tuple[int, int | None]  # local edge number in the plus / minus cell

    @property
    def is_boundary(self) -> bool:
        return self.minus is None

    def __repr__(self) -> str:
        return '<EdgeInfo ' + str(self.vertices) + ' ' + self.tag.name + '>'


@dataclass(frozen=True)
class CellGeometry:
    """
    Affine maps x = v0 + J xi of a batch of cells onto the reference triangle {x, y >= 0, x + y <= 1}.
    """
    v0: np.ndarray  # (nc, 2)
    jac: np.ndarray  # (nc, 2, 2)
    det: np.ndarray  # (nc,)
    jac_inv: np.ndarray  # (nc, 2, 2)

    def __len__(self) -> int:
        return len(self.det)

    def take(self, cells: np.ndarray) -> 'CellGeometry':
        return CellGeometry(self.v0[cells], self.jac[cells], self.det[cells], self.jac_inv[cells])

    def to_physical(self, xi: np.ndarray) -> np.ndarray:
        """
        :param xi: reference points, (nq, 2) shared by all cells or (nc, nq, 2)
        :return: physical points (nc, nq, 2)
        """
        if xi.ndim == 2:
            return self.v0[:, None, :] + np.einsum('cij,qj->cqi', self.jac, xi)
        return self.v0[:, None, :] + np.einsum('cij,cqj->cqi', self.jac, xi)

    def to_reference(self, x: np.ndarray) -> np.ndarray:
        return np.einsum('cij,cqj->cqi', self.jac_inv, x - self.v0[:, None, :])


# local edge i of a cell runs from its vertex i to vertex i + 1 (counterclockwise)
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


class Mesh2D:
    """
    Conforming triangulation with globally numbered, oriented edges.
    Interior edges: plus = lower cell index and n_e points out of the plus cell. Boundary edges: n_e outward.
    """

    def __init__(self, vertices, cells, boundary_tags: dict[tuple[int, int], EdgeTag] | None = None) -> None:
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.cells.ndim != 2 or self.cells.shape[1] != 3 or len(self.cells) == 0:
            logger.error('Cells must be a non-empty list of vertex triples')
            raise MeshError('Cells must be a non-empty list of vertex triples')
        self._build_geometry()
        self._build_edges(boundary_tags or {})
        self._edges: list[EdgeInfo] | None = None

    def __repr__(self) -> str:
        return ('<Mesh2D: ' + str(self.n_vertices) + ' vertices, ' + str(self.n_cells) + ' cells, '
                + str(self.n_edges) + ' edges>')

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def h(self) -> float:
        return float(self.cell_diameters.max())

    @property
    def area(self) -> float:
        return float(self.cell_areas.sum())

    @property
    def interior(self) -> np.ndarray:
        return self.edge_tags == EdgeTag.INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.edge_tags != EdgeTag.INTERIOR

    def count(self, tag: EdgeTag) -> int:
        return int(np.count_nonzero(self.edge_tags == tag))

    def _build_geometry(self) -> None:
        x = self.vertices[self.cells]  # (nc, 3, 2)
        jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(det <= 0):
            bad = np.flatnonzero(det <= 0)
            logger.error('Cells not counterclockwise or degenerate: ' + str(bad[:10].tolist()))
            raise MeshError('Cells not counterclockwise or degenerate: ' + str(bad[:10].tolist()))
        jac_inv = np.empty_like(jac)
        jac_inv[:, 0, 0] = jac[:, 1, 1] / det
        jac_inv[:, 1, 1] = jac[:, 0, 0] / det
        jac_inv[:, 0, 1] = -jac[:, 0, 1] / det
        jac_inv[:, 1, 0] = -jac[:, 1, 0] / det
        self.geometry = CellGeometry(x[:, 0], jac, det, jac_inv)
        self.cell_areas = 0.5 * det
        sides = np.stack([np.linalg.norm(x[:, b] - x[:, a], axis=1) for a, b in LOCAL_EDGES], axis=1)
        self.cell_diameters = sides.max(axis=1)

    def _build_edges(self, boundary_tags: dict[tuple[int, int], EdgeTag]) -> None:
        index: dict[tuple[int, int], int] = {}
        edge_vertices, edge_cells, edge_local = [], [], []
        cell_edges = np.empty((self.n_cells, 3), dtype=np.int64)
        for c, cell in enumerate(self.cells):
            for i, (a, b) in enumerate(LOCAL_EDGES):
                va, vb = int(cell[a]), int(cell[b])
                key = (min(va, vb), max(va, vb))
                e = index.get(key)
                if e is None:
                    e = len(edge_vertices)
                    index[key] = e
                    edge_vertices.append((va, vb))
                    edge_cells.append([c, -1])
                    edge_local.append([i, -1])
                elif edge_cells[e][1] == -1 and (va, vb) == edge_vertices[e][::-1]:
                    edge_cells[e][1] = c
                    edge_local[e][1] = i
                else:
                    logger.error('Edge ' + str(key) + ' is not shared consistently by two cells')
                    raise MeshError('Edge ' + str(key) + ' is not shared consistently by two cells')
                cell_edges[c, i] = e
        self.edge_vertices = np.array(edge_vertices, dtype=np.int64)
        self.edge_cells = np.array(edge_cells, dtype=np.int64)
        self.edge_local = np.array(edge_local, dtype=np.int64)
        self.cell_edges = cell_edges
        self.cell_edge_signs = np.where(self.edge_cells[cell_edges, 0] == np.arange(self.n_cells)[:, None], 1, -1)

        tangent = self.vertices[self.edge_vertices[:, 1]] - self.vertices[self.edge_vertices[:, 0]]
        self.edge_lengths = np.linalg.norm(tangent, axis=1)
        self.edge_normals = np.stack([tangent[:, 1], -tangent[:, 0]], axis=1) / self.edge_lengths[:, None]
        self.edge_midpoints = 0.5 * (self.vertices[self.edge_vertices[:, 0]] + self.vertices[self.edge_vertices[:, 1]])

        tags = np.full(self.n_edges, EdgeTag.INTERIOR, dtype=np.int64)
        on_boundary = self.edge_cells[:, 1] == -1
        tags[on_boundary] = EdgeTag.DIRICHLET
        for (a, b), tag in boundary_tags.items():
            e = index.get((min(a, b), max(a, b)))
            if e is not None and on_boundary[e]:
                tags[e] = EdgeTag(tag)
        self.edge_tags = tags
        if on_boundary.any() and not np.any(tags == EdgeTag.DIRICHLET):
            logger.error('At least one Dirichlet edge is required')
            raise MeshError('At least one Dirichlet edge is required')

    @property
    def edges(self) -> list[EdgeInfo]:
        if self._edges is None:
            self._edges = [
                EdgeInfo(vertices=(int(v[0]), int(v[1])), plus=int(c[0]), minus=None if c[1] < 0 else int(c[1]),
                         normal=n, length=float(h), tag=EdgeTag(int(t)),
                         local=(int(loc[0]), None if loc[1] < 0 else int(loc[1])))
                for v, c, n, h, t, loc in zip(self.edge_vertices, self.edge_cells, self.edge_normals,
                                              self.edge_lengths, self.edge_tags, self.edge_local)
            ]
        return self._edges

    def outward_normal(self, cell: int, local: int) -> np.ndarray:
        e = self.cell_edges[cell, local]
        return self.cell_edge_signs[cell, local] * self.edge_normals[e]

    def boundary_tag_map(self) -> dict[tuple[int, int], EdgeTag]:
        return {(int(a), int(b)): EdgeTag(int(t))
                for (a, b), t in zip(self.edge_vertices[self.boundary], self.edge_tags[self.boundary])}

    def min_angle(self) -> float:
        x = self.vertices[self.cells]
        angles = []
        for i in range(3):
            u = x[:, (i + 1) % 3] - x[:, i]
            v = x[:, (i + 2) % 3] - x[:, i]
            cos = np.einsum('ci,ci->c', u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
        return float(np.min(angles))

    def to_text(self) -> str:
        lines = ['v ' + format(x, '.17g') + ' ' + format(y, '.17g') for x, y in self.vertices]
        lines += ['c ' + ' '.join(str(int(i)) for i in cell) for cell in self.cells]
        lines += ['e ' + str(int(a)) + ' ' + str(int(b)) + ' ' + EdgeTag(int(t)).name.lower()
                  for (a, b), t in zip(self.edge_vertices, self.edge_tags)]
        return '\n'.join(lines) + '\n'


def build_structured_unit_square(n: int) -> Mesh2D:
    """
    Uniform n x n grid of the unit square, each square split along its (0,0)-(1,1) diagonal. All boundary edges Dirichlet.
    """
    if n < 1:
        logger.error('Structured mesh needs n >= 1, got ' + str(n))
        raise MeshError('Structured mesh needs n >= 1, got ' + str(n))
    s = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(s, s)
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)
    cells = []
    for j in range(n):
        for i in range(n):
            v00 = j * (n + 1) + i
            v10, v01, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    mesh = Mesh2D(vertices, cells)
    logger.debug('Built structured mesh ' + repr(mesh))
    return mesh


def build_reference_triangle() -> Mesh2D:
    return Mesh2D([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [(0, 1, 2)])


def affine_image(mesh: Mesh2D, matrix, shift=(0.0, 0.0)) -> Mesh2D:
    matrix = np.asarray(matrix, dtype=float)
    if np.linalg.det(matrix) <= 0:
        logger.error('Affine image must preserve orientation')
        raise MeshError('Affine image must preserve orientation')
    vertices = mesh.vertices @ matrix.T + np.asarray(shift, dtype=float)
    return Mesh2D(vertices, mesh.cells, mesh.boundary_tag_map())


def refine_uniform(mesh: Mesh2D) -> Mesh2D:
    """
    Midpoint refinement: every cell is split into 4 similar children, boundary edge halves inherit the parent tag.
    """
    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints])
    mid = nv + mesh.cell_edges  # midpoint of local edge i = (v_i, v_i+1)
    c = mesh.cells
    children = np.stack([
        np.stack([c[:, 0], mid[:, 0], mid[:, 2]], axis=1),
        np.stack([mid[:, 0], c[:, 1], mid[:, 1]], axis=1),
        np.stack([mid[:, 2], mid[:, 1], c[:, 2]], axis=1),
        np.stack([mid[:, 0], mid[:, 1], mid[:, 2]], axis=1),
    ], axis=1).reshape(-1, 3)
    tags = {}
    for e in np.flatnonzero(mesh.boundary):
        a, b = mesh.edge_vertices[e]
        tag = EdgeTag(int(mesh.edge_tags[e]))
        tags[(int(a), nv + int(e))] = tag
        tags[(nv + int(e), int(b))] = tag
    refined = Mesh2D(vertices, children, tags)
    logger.debug('Refined ' + repr(mesh) + ' into ' + repr(refined))
    return refined


def tag_boundary(mesh: Mesh2D, predicate: Callable[[np.ndarray], EdgeTag]) -> Mesh2D:
    """
    Retag boundary edges by evaluating the predicate at their midpoints.
    :raises MeshError: if no Dirichlet edge remains
    """
    tags = {}
    for e in np.flatnonzero(mesh.boundary):
        tag = EdgeTag(predicate(mesh.edge_midpoints[e]))
        if tag == EdgeTag.INTERIOR:
            logger.error('Boundary edge ' + str(e) + ' cannot be tagged interior')
            raise MeshError('Boundary edge ' + str(e) + ' cannot be tagged interior')
        a, b = mesh.edge_vertices[e]
        tags[(int(a), int(b))] = tag
    return Mesh2D(mesh.vertices, mesh.cells, tags)


def sides_predicate(neumann_sides) -> Callable[[np.ndarray], EdgeTag]:
    """
    Neumann on the named sides of the unit square (left, right, bottom, top), Dirichlet elsewhere.
    """
    sides = set(neumann_sides)
    unknown = sides - set(Constants.BOUNDARY_SIDES.value)
    if unknown:
        raise MeshError('Unknown boundary sides: ' + ', '.join(sorted(unknown)))
    tol = Constants.GEOMETRY_TOL.value

    def predicate(midpoint: np.ndarray) -> EdgeTag:
        x, y = midpoint
        on = {'left': abs(x) < tol, 'right': abs(x - 1.0) < tol, 'bottom': abs(y) < tol, 'top': abs(y - 1.0) < tol}
        return EdgeTag.NEUMANN if any(on[s] for s in sides) else EdgeTag.DIRICHLET

    return predicate
