from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np

from xgfem.core.config import MethodConfig
from xgfem.core.mesh import EdgeTag, Mesh2D
from xgfem.core.polybasis import (BasisSet, EdgeBasis, Family, QuadRule, eval_mapped, make_basis, push_forward,
                                  quad_edge, quad_triangle)
from xgfem.core.xg_debug import logger


class FieldKind(str, Enum):
    P = 'p'
    PCHECK = 'pcheck'
    U = 'u'
    UCHECK = 'ucheck'


@dataclass(frozen=True)
class DofMap:
    """
    Contiguous numbering of one field. Cell fields own local_dim DOFs per cell; edge fields own
    degree + 1 DOFs per active edge and none on constrained edges.
    """
    kind: FieldKind
    degree: int | None
    local_dim: int
    offsets: np.ndarray
    counts: np.ndarray

    @property
    def ndofs(self) -> int:
        return int(self.counts.sum())

    @property
    def active(self) -> np.ndarray:
        return self.counts > 0

    @property
    def active_entities(self) -> np.ndarray:
        return np.flatnonzero(self.counts)

    def dofs(self, entities: np.ndarray | None = None) -> np.ndarray:
        """
        :return: (n, local_dim) global indices of the given (active) entities
        """
        if entities is None:
            entities = self.active_entities
        return self.offsets[entities][:, None] + np.arange(self.local_dim)[None, :]

    def __repr__(self) -> str:
        return '<DofMap ' + self.kind.value + ' degree=' + str(self.degree) + ' ndofs=' + str(self.ndofs) + '>'


def _cell_dofmap(kind: FieldKind, degree: int, local_dim: int, n_cells: int) -> DofMap:
    counts = np.full(n_cells, local_dim, dtype=np.int64)
    return DofMap(kind, degree, local_dim, np.arange(n_cells, dtype=np.int64) * local_dim, counts)


def _edge_dofmap(kind: FieldKind, degree: int | None, mesh: Mesh2D, constrained: EdgeTag) -> DofMap:
    local_dim = 0 if degree is None else degree + 1
    active = mesh.edge_tags != constrained
    counts = np.where(active, local_dim, 0).astype(np.int64)
    offsets = np.cumsum(counts) - counts
    return DofMap(kind, degree, local_dim, offsets, counts)


@dataclass(frozen=True)
class VolumeTables:
    points: np.ndarray  # (nc, nq, 2)
    weights: np.ndarray  # (nc, nq), physical
    u: np.ndarray  # (nc, nq, nu)
    grad_u: np.ndarray  # (nc, nq, nu, 2)
    q: np.ndarray  # (nc, nq, nq_dim, 2)
    div_q: np.ndarray  # (nc, nq, nq_dim)


@dataclass(frozen=True)
class EdgeTables:
    """
    Traces on every edge at shared physical quadrature points. Minus-side tables are zero on boundary edges.
    """
    t: np.ndarray  # (nq,) parameter from the first to the second edge vertex
    points: np.ndarray  # (ne, nq, 2)
    weights: np.ndarray  # (ne, nq), physical
    u_plus: np.ndarray  # (ne, nq, nu)
    u_minus: np.ndarray
    q_plus: np.ndarray  # (ne, nq, nq_dim, 2)
    q_minus: np.ndarray
    grad_u_plus: np.ndarray  # (ne, nq, nu, 2)
    grad_u_minus: np.ndarray
    div_q_plus: np.ndarray  # (ne, nq, nq_dim)
    div_q_minus: np.ndarray


class EdgeProjector:
    """
    L2 projection onto an edge space P_k(e) with the orthonormal Legendre basis (moments), zero on constrained edges.
    """

    def __init__(self, dofmap: DofMap, mesh: Mesh2D, rule: QuadRule) -> None:
        self.dofmap = dofmap
        self.mesh = mesh
        self.rule = rule
        self.basis = None if dofmap.degree is None else EdgeBasis(dofmap.degree)

    def __repr__(self) -> str:
        return '<EdgeProjector onto ' + repr(self.dofmap) + '>'

    def psi(self, edges: np.ndarray) -> np.ndarray:
        """
        :return: (n, nq, k + 1) physical orthonormal edge basis at the quadrature points
        """
        values = self.basis.values(self.rule.points)
        return values[None] / np.sqrt(self.mesh.edge_lengths[edges])[:, None, None]

    def weights(self, edges: np.ndarray) -> np.ndarray:
        return self.rule.weights[None] * self.mesh.edge_lengths[edges][:, None]

    def points(self, edges: np.ndarray) -> np.ndarray:
        a = self.mesh.vertices[self.mesh.edge_vertices[edges, 0]]
        b = self.mesh.vertices[self.mesh.edge_vertices[edges, 1]]
        return a[:, None, :] + self.rule.points[None, :, None] * (b - a)[:, None, :]

    def moments(self, values: np.ndarray, edges: np.ndarray) -> np.ndarray:
        """
        :param values: (n, nq, ...) trace values at the quadrature points of the given edges
        :return: (n, k + 1, ...) moments against the edge basis
        """
        w = self.weights(edges)
        return np.einsum('eq,eqj,eq...->ej...', w, self.psi(edges), values)

    def project(self, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        coefficients = np.zeros(self.dofmap.ndofs)
        if self.basis is None:
            return coefficients
        edges = self.dofmap.active_entities
        coefficients[self.dofmap.dofs(edges)] = self.moments(func(self.points(edges)), edges)
        return coefficients

    def coefficients_on(self, coefficients: np.ndarray, edge: int) -> np.ndarray:
        if self.basis is None:
            return np.zeros(0)
        if not self.dofmap.active[edge]:
            return np.zeros(self.dofmap.local_dim)
        start = self.dofmap.offsets[edge]
        return coefficients[start:start + self.dofmap.local_dim]

    def evaluate(self, coefficients: np.ndarray, edge: int, t: np.ndarray) -> np.ndarray:
        c = self.coefficients_on(coefficients, edge)
        if self.basis is None:
            return np.zeros_like(np.asarray(t, dtype=float))
        return self.basis.values(t) @ c / np.sqrt(self.mesh.edge_lengths[edge])


def project_edge(projector: EdgeProjector, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    return projector.project(func)


class Spaces:
    """
    The four discrete spaces Q_h x Qcheck_h x V_h x Vcheck_h on one mesh, with quadrature tables.
    """

    def __init__(self, mesh: Mesh2D, config: MethodConfig) -> None:
        self.mesh = mesh
        self.config = config
        self.q_basis: BasisSet = make_basis(Family(config.q_family), config.k_p)
        self.u_basis: BasisSet = make_basis(Family.SCALAR, config.k_u)
        n_cells = mesh.n_cells
        self.p = _cell_dofmap(FieldKind.P, config.k_p, self.q_basis.dim, n_cells)
        self.u = _cell_dofmap(FieldKind.U, config.k_u, self.u_basis.dim, n_cells)
        self.pcheck = _edge_dofmap(FieldKind.PCHECK, config.k_pcheck, mesh, EdgeTag.NEUMANN)
        self.ucheck = _edge_dofmap(FieldKind.UCHECK, config.k_ucheck, mesh, EdgeTag.DIRICHLET)
        self.cell_rule = quad_triangle(config.quadrature_degree)
        self.edge_rule = quad_edge(config.quadrature_degree)
        self.projector_p = EdgeProjector(self.pcheck, mesh, self.edge_rule)
        self.projector_u = EdgeProjector(self.ucheck, mesh, self.edge_rule)
        self.tau, self.eta = config.penalties(mesh.edge_lengths)
        logger.debug('Built spaces ' + repr(self))

    def __repr__(self) -> str:
        return ('<Spaces dims p=' + str(self.p.ndofs) + ' pcheck=' + str(self.pcheck.ndofs) + ' u='
                + str(self.u.ndofs) + ' ucheck=' + str(self.ucheck.ndofs) + '>')

    @property
    def dofmaps(self) -> tuple[DofMap, DofMap, DofMap, DofMap]:
        return self.p, self.pcheck, self.u, self.ucheck

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(d.ndofs for d in self.dofmaps)

    @property
    def block_offsets(self) -> np.ndarray:
        """
        Start of each field in the 4-field ordering (p, pcheck, u, ucheck), plus the total.
        """
        return np.concatenate([[0], np.cumsum(self.dims)])

    def block_slice(self, kind: FieldKind) -> slice:
        i = [FieldKind.P, FieldKind.PCHECK, FieldKind.U, FieldKind.UCHECK].index(kind)
        offsets = self.block_offsets
        return slice(int(offsets[i]), int(offsets[i + 1]))

    @cached_property
    def volume(self) -> VolumeTables:
        geom = self.mesh.geometry
        xi = self.cell_rule.points
        u = push_forward(self.u_basis, geom, xi)
        q = push_forward(self.q_basis, geom, xi)
        return VolumeTables(points=geom.to_physical(xi), weights=self.cell_rule.weights[None] * geom.det[:, None],
                            u=u.values, grad_u=u.gradients, q=q.values, div_q=q.divergence)

    @cached_property
    def edge(self) -> EdgeTables:
        mesh = self.mesh
        all_edges = np.arange(mesh.n_edges)
        points = self.projector_p.points(all_edges)
        weights = self.projector_p.weights(all_edges)
        plus = mesh.edge_cells[:, 0]
        u_plus = eval_mapped(self.u_basis, mesh.geometry.take(plus), points)
        q_plus = eval_mapped(self.q_basis, mesh.geometry.take(plus), points)
        u_minus = [np.zeros_like(u_plus.values), np.zeros_like(u_plus.gradients)]
        q_minus = [np.zeros_like(q_plus.values), np.zeros_like(q_plus.divergence)]
        inner = np.flatnonzero(mesh.interior)
        if len(inner):
            geom = mesh.geometry.take(mesh.edge_cells[inner, 1])
            um = eval_mapped(self.u_basis, geom, points[inner])
            qm = eval_mapped(self.q_basis, geom, points[inner])
            u_minus[0][inner], u_minus[1][inner] = um.values, um.gradients
            q_minus[0][inner], q_minus[1][inner] = qm.values, qm.divergence
        return EdgeTables(t=self.edge_rule.points, points=points, weights=weights,
                          u_plus=u_plus.values, u_minus=u_minus[0], q_plus=q_plus.values, q_minus=q_minus[0],
                          grad_u_plus=u_plus.gradients, grad_u_minus=u_minus[1],
                          div_q_plus=q_plus.divergence, div_q_minus=q_minus[1])

    def cell_values(self, kind: FieldKind, coefficients: np.ndarray) -> np.ndarray:
        """
        Discrete field at the volume quadrature points: (nc, nq) for u, (nc, nq, 2) for p.
        """
        if kind == FieldKind.U:
            return np.einsum('cqb,cb->cq', self.volume.u, coefficients.reshape(self.mesh.n_cells, -1))
        return np.einsum('cqbi,cb->cqi', self.volume.q, coefficients.reshape(self.mesh.n_cells, -1))

    def cell_gradients(self, coefficients: np.ndarray) -> np.ndarray:
        return np.einsum('cqbi,cb->cqi', self.volume.grad_u, coefficients.reshape(self.mesh.n_cells, -1))

    def cell_divergence(self, coefficients: np.ndarray) -> np.ndarray:
        return np.einsum('cqb,cb->cq', self.volume.div_q, coefficients.reshape(self.mesh.n_cells, -1))

    def flux_mass(self, c: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        """
        Cellwise (c q_i, q_j), (nc, nb, nb); c maps points (..., 2) to (..., 2, 2), identity if None.
        """
        vol = self.volume
        if c is None:
            return np.einsum('cq,cqia,cqja->cij', vol.weights, vol.q, vol.q)
        return np.einsum('cq,cqia,cqab,cqjb->cij', vol.weights, vol.q, c(vol.points), vol.q)

    def project_cells(self, kind: FieldKind, func: Callable[[np.ndarray], np.ndarray],
                      c: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
        """
        Cellwise L2 projection (c-weighted for fluxes) of func, which maps points (nc, nq, 2) to values.
        """
        vol = self.volume
        values = func(vol.points)
        if kind == FieldKind.U:
            # orthonormal basis: projection is a moment evaluation
            return np.einsum('cq,cqb,cq->cb', vol.weights, vol.u, values).ravel()
        if c is None:
            rhs = np.einsum('cq,cqbi,cqi->cb', vol.weights, vol.q, values)
        else:
            rhs = np.einsum('cq,cqbi,cqij,cqj->cb', vol.weights, vol.q, c(vol.points), values)
        return np.linalg.solve(self.flux_mass(c), rhs[..., None])[..., 0].ravel()


def build_spaces(mesh: Mesh2D, config: MethodConfig) -> Spaces:
    return Spaces(mesh, config)
