from dataclasses import dataclass
from functools import cached_property
from typing import Callable, TextIO

import numpy as np
from scipy import sparse

from xgfem.core.config import Regime
from xgfem.core.exceptions import AssemblyError
from xgfem.core.mesh import EdgeTag, Mesh2D
from xgfem.core.polybasis import eval_mapped
from xgfem.core.spaces import FieldKind, Spaces
from xgfem.core.xg_debug import logger

"""
Problem data
"""


def zero_function(x: np.ndarray) -> np.ndarray:
    return np.zeros(x.shape[:-1])


def identity_coefficient(x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()


@dataclass(frozen=True)
class ProblemData:
    """
    alpha maps points (..., 2) to SPD matrices (..., 2, 2); f, g_d, g_n map points to scalars.
    g_n is the normal flux p.n = -alpha grad u . n on the Neumann boundary.
    """
    alpha: Callable[[np.ndarray], np.ndarray] = identity_coefficient
    f: Callable[[np.ndarray], np.ndarray] = zero_function
    g_d: Callable[[np.ndarray], np.ndarray] = zero_function
    g_n: Callable[[np.ndarray], np.ndarray] = zero_function

    def coefficients(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        :return: (alpha, c = alpha^-1) at the points
        :raises AssemblyError: if alpha is not symmetric positive definite
        """
        alpha = np.asarray(self.alpha(points), dtype=float)
        if not np.allclose(alpha, np.swapaxes(alpha, -1, -2), rtol=0.0, atol=1e-12):
            logger.error('Coefficient alpha is not symmetric')
            raise AssemblyError('Coefficient alpha is not symmetric')
        if np.linalg.eigvalsh(alpha).min() <= 0:
            logger.error('Coefficient alpha is not positive definite')
            raise AssemblyError('Coefficient alpha is not positive definite')
        return alpha, np.linalg.inv(alpha)

    def c(self, points: np.ndarray) -> np.ndarray:
        return self.coefficients(points)[1]


"""
Averages and jumps
"""


@dataclass(frozen=True)
class SideWeights:
    """
    Per-edge weights of the (plus, minus) traces in {v} and {q}_e, in [v]_e, and in [q].
    """
    average: np.ndarray  # (ne, 2)
    jump_u: np.ndarray
    jump_q: np.ndarray


def side_weights(mesh: Mesh2D) -> SideWeights:
    tags = mesh.edge_tags
    interior = tags == EdgeTag.INTERIOR
    average = np.zeros((mesh.n_edges, 2))
    average[interior] = 0.5
    average[~interior, 0] = 1.0
    jump_u = np.zeros((mesh.n_edges, 2))
    jump_u[interior] = (1.0, -1.0)
    jump_u[tags == EdgeTag.DIRICHLET, 0] = 1.0
    jump_q = np.zeros((mesh.n_edges, 2))
    jump_q[interior] = (1.0, -1.0)
    jump_q[tags == EdgeTag.NEUMANN, 0] = 1.0
    return SideWeights(average, jump_u, jump_q)


@dataclass(frozen=True)
class EdgeTraces:
    average: np.ndarray  # {v}
    jump: np.ndarray  # [v]_e
    jump_vector: np.ndarray  # [[v]] = v+ n+ + v- n-
    flux_average: np.ndarray | None  # {q}_e
    flux_average_vector: np.ndarray | None  # {{q}}
    flux_jump: np.ndarray | None  # [q]


def _along(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    return weights.reshape(weights.shape + (1,) * (values.ndim - 1))


def dg_average_jump(mesh: Mesh2D, edges, v_plus, v_minus=None, q_plus=None, q_minus=None) -> EdgeTraces:
    """
    Averages and jumps of scalar side values v (n, ...) and vector side values q (n, ..., 2) on the given edges,
    with the boundary conventions {v} = v, [v]_e = v on Dirichlet and 0 on Neumann, [q] = 0 on Dirichlet
    and q.n on Neumann.
    :raises AssemblyError: if minus-side data is missing on an interior edge
    """
    edges = np.atleast_1d(np.asarray(edges))
    weights = side_weights(mesh)
    has_interior = bool(np.any(mesh.interior[edges]))
    v_plus = np.asarray(v_plus, dtype=float)
    if v_minus is None:
        if has_interior:
            logger.error('Missing minus-side values on an interior edge')
            raise AssemblyError('Missing minus-side values on an interior edge')
        v_minus = np.zeros_like(v_plus)
    v_minus = np.asarray(v_minus, dtype=float)
    a, j = weights.average[edges], weights.jump_u[edges]
    average = _along(a[:, 0], v_plus) * v_plus + _along(a[:, 1], v_plus) * v_minus
    jump = _along(j[:, 0], v_plus) * v_plus + _along(j[:, 1], v_plus) * v_minus
    normals = mesh.edge_normals[edges].reshape((len(edges),) + (1,) * (v_plus.ndim - 1) + (2,))
    jump_vector = jump[..., None] * normals
    if q_plus is None:
        return EdgeTraces(average, jump, jump_vector, None, None, None)
    q_plus = np.asarray(q_plus, dtype=float)
    if q_minus is None:
        if has_interior:
            logger.error('Missing minus-side fluxes on an interior edge')
            raise AssemblyError('Missing minus-side fluxes on an interior edge')
        q_minus = np.zeros_like(q_plus)
    q_minus = np.asarray(q_minus, dtype=float)
    jq = weights.jump_q[edges]
    qa = _along(a[:, 0], q_plus) * q_plus + _along(a[:, 1], q_plus) * q_minus
    n = mesh.edge_normals[edges].reshape((len(edges),) + (1,) * (q_plus.ndim - 2) + (2,))
    qn_plus, qn_minus = (q_plus * n).sum(axis=-1), (q_minus * n).sum(axis=-1)
    flux_average = (qa * n).sum(axis=-1)
    flux_jump = _along(jq[:, 0], qn_plus) * qn_plus + _along(jq[:, 1], qn_plus) * qn_minus
    return EdgeTraces(average, jump, jump_vector, flux_average, qa, flux_jump)


"""
Sparse assembly helpers
"""


class Triplets:
    """
    Coordinate-format accumulator; duplicates are summed on conversion.
    """

    def __init__(self) -> None:
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rows: np.ndarray, cols: np.ndarray, values: np.ndarray) -> None:
        """
        :param rows: (n, a) global rows
        :param cols: (n, b) global columns
        :param values: (n, a, b) local blocks
        """
        if values.size == 0:
            return
        self.rows.append(np.broadcast_to(rows[:, :, None], values.shape).ravel())
        self.cols.append(np.broadcast_to(cols[:, None, :], values.shape).ravel())
        self.vals.append(values.ravel())

    def add_diagonal(self, indices: np.ndarray, values: np.ndarray) -> None:
        if len(indices) == 0:
            return
        self.rows.append(np.asarray(indices).ravel())
        self.cols.append(np.asarray(indices).ravel())
        self.vals.append(np.asarray(values, dtype=float).ravel())

    def add_matrix(self, matrix: sparse.spmatrix, row_offset: int = 0, col_offset: int = 0) -> None:
        coo = sparse.coo_matrix(matrix)
        if coo.nnz == 0:
            return
        self.rows.append(coo.row + row_offset)
        self.cols.append(coo.col + col_offset)
        self.vals.append(coo.data)

    def tocsr(self, shape: tuple[int, int]) -> sparse.csr_matrix:
        if not self.vals:
            return sparse.csr_matrix(shape)
        matrix = sparse.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                                   shape=shape)
        return matrix.tocsr()


def stack_blocks(blocks: list[tuple[int, int, sparse.spmatrix]], shape: tuple[int, int]) -> sparse.csr_matrix:
    """
    Place sparse blocks at (row offset, column offset); zero-sized blocks are allowed.
    """
    triplets = Triplets()
    for row, col, block in blocks:
        triplets.add_matrix(block, row, col)
    return triplets.tocsr(shape)


def diagonal(values: np.ndarray) -> sparse.csr_matrix:
    values = np.asarray(values, dtype=float)
    n = len(values)
    return sparse.csr_matrix((values, (np.arange(n), np.arange(n))), shape=(n, n))


def edge_dof_values(spaces: Spaces, kind: FieldKind, per_edge: np.ndarray) -> np.ndarray:
    """
    Expand one value per edge to every DOF of an edge field.
    """
    dofmap = spaces.pcheck if kind == FieldKind.PCHECK else spaces.ucheck
    return np.repeat(np.asarray(per_edge, dtype=float)[dofmap.active], dofmap.local_dim)


def _side_tables(spaces: Spaces, kind: FieldKind) -> tuple[np.ndarray, np.ndarray]:
    # scalar traces of u, normal traces q.n_e of fluxes; (ne, nq, nb) per side
    tables = spaces.edge
    if kind == FieldKind.U:
        return tables.u_plus, tables.u_minus
    normals = spaces.mesh.edge_normals
    return (np.einsum('eqbi,ei->eqb', tables.q_plus, normals),
            np.einsum('eqbi,ei->eqb', tables.q_minus, normals))


def _cell_map(spaces: Spaces, kind: FieldKind):
    return spaces.u if kind == FieldKind.U else spaces.p


def _check_map(spaces: Spaces, kind: FieldKind):
    if kind == FieldKind.PCHECK:
        return spaces.pcheck, spaces.projector_p
    return spaces.ucheck, spaces.projector_u


def _trace_product(spaces: Spaces, row: FieldKind, row_weights: np.ndarray, col: FieldKind,
                   col_weights: np.ndarray, coef: np.ndarray) -> sparse.csr_matrix:
    """
    sum_e coef_e < sum_s rw_s phi_s, sum_t cw_t chi_t >_e for cell fields row, col (traces or normal traces).
    """
    row_tables, col_tables = _side_tables(spaces, row), _side_tables(spaces, col)
    row_map, col_map = _cell_map(spaces, row), _cell_map(spaces, col)
    cells = spaces.mesh.edge_cells
    weights = spaces.edge.weights
    triplets = Triplets()
    for s in (0, 1):
        for t in (0, 1):
            scale = coef * row_weights[:, s] * col_weights[:, t]
            edges = np.flatnonzero((scale != 0) & (cells[:, s] >= 0) & (cells[:, t] >= 0))
            if len(edges) == 0:
                continue
            values = np.einsum('eq,eqa,eqb->eab', weights[edges] * scale[edges, None],
                               row_tables[s][edges], col_tables[t][edges])
            triplets.add(row_map.dofs(cells[edges, s]), col_map.dofs(cells[edges, t]), values)
    return triplets.tocsr((row_map.ndofs, col_map.ndofs))


def edge_moment_matrix(spaces: Spaces, check: FieldKind, source: FieldKind, weights: np.ndarray) -> sparse.csr_matrix:
    """
    Moments < psi_i, sum_s w_s phi_s >_e of a combination of cell traces against an edge space.
    With average weights this is the matrix of Qcheck{.}; with jump weights the matrix of Qcheck[.].
    """
    dofmap, projector = _check_map(spaces, check)
    source_map = _cell_map(spaces, source)
    shape = (dofmap.ndofs, source_map.ndofs)
    if dofmap.ndofs == 0:
        return sparse.csr_matrix(shape)
    tables = _side_tables(spaces, source)
    cells = spaces.mesh.edge_cells
    active = dofmap.active_entities
    psi = projector.psi(active)
    triplets = Triplets()
    for s in (0, 1):
        mask = (weights[active, s] != 0) & (cells[active, s] >= 0)
        edges = active[mask]
        if len(edges) == 0:
            continue
        values = np.einsum('eq,eqi,eqb->eib', spaces.edge.weights[edges] * weights[edges, s, None],
                           psi[mask], tables[s][edges])
        triplets.add(dofmap.dofs(edges), source_map.dofs(cells[edges, s]), values)
    return triplets.tocsr(shape)


def average_moments(spaces: Spaces, check: FieldKind) -> sparse.csr_matrix:
    """
    Matrix of Qcheck^u{u_h} (check = UCHECK) or Qcheck^p{p_h}_e (check = PCHECK).
    """
    source = FieldKind.U if check == FieldKind.UCHECK else FieldKind.P
    return edge_moment_matrix(spaces, check, source, side_weights(spaces.mesh).average)


def jump_moments(spaces: Spaces, check: FieldKind) -> sparse.csr_matrix:
    """
    Matrix of Qcheck^p[u_h]_e (check = PCHECK) or Qcheck^u[p_h] (check = UCHECK).
    """
    weights = side_weights(spaces.mesh)
    if check == FieldKind.PCHECK:
        return edge_moment_matrix(spaces, check, FieldKind.U, weights.jump_u)
    return edge_moment_matrix(spaces, check, FieldKind.P, weights.jump_q)


def _block_diagonal(spaces: Spaces, kind: FieldKind, local: np.ndarray) -> sparse.csr_matrix:
    dofmap = _cell_map(spaces, kind)
    triplets = Triplets()
    dofs = dofmap.dofs(np.arange(spaces.mesh.n_cells))
    triplets.add(dofs, dofs, local)
    return triplets.tocsr((dofmap.ndofs, dofmap.ndofs))


def _check_penalty(spaces: Spaces, kind: FieldKind, values: np.ndarray, name: str) -> None:
    dofmap = spaces.pcheck if kind == FieldKind.PCHECK else spaces.ucheck
    active = values[dofmap.active]
    if dofmap.ndofs and not np.all(np.isfinite(active) & (active > 0)):
        logger.error(name + ' must be positive on every active edge')
        raise AssemblyError(name + ' must be positive on every active edge')


"""
Forms
"""


def assemble_a(spaces: Spaces, data: ProblemData, tau: np.ndarray | None = None) -> sparse.csr_matrix:
    """
    A = mass(c) on Q_h plus the edge mass of tau^-1 on Qcheck_h, over (p, pcheck).
    """
    tau = spaces.tau if tau is None else np.asarray(tau, dtype=float)
    _check_penalty(spaces, FieldKind.PCHECK, tau, 'tau')
    n_p, n_pc = spaces.p.ndofs, spaces.pcheck.ndofs
    mass = _block_diagonal(spaces, FieldKind.P, spaces.flux_mass(data.c))
    edge_mass = diagonal(1.0 / edge_dof_values(spaces, FieldKind.PCHECK, tau))
    return stack_blocks([(0, 0, mass), (n_p, n_p, edge_mass)], (n_p + n_pc, n_p + n_pc))


def assemble_c(spaces: Spaces, eta: np.ndarray | None = None) -> sparse.csr_matrix:
    """
    C = edge mass of eta^-1 on Vcheck_h, over (u, ucheck); the u block is zero.
    """
    eta = spaces.eta if eta is None else np.asarray(eta, dtype=float)
    _check_penalty(spaces, FieldKind.UCHECK, eta, 'eta')
    n_u, n_uc = spaces.u.ndofs, spaces.ucheck.ndofs
    triplets = Triplets()
    triplets.add_diagonal(n_u + np.arange(n_uc), 1.0 / edge_dof_values(spaces, FieldKind.UCHECK, eta))
    return triplets.tocsr((n_u + n_uc, n_u + n_uc))


def _b_check_blocks(spaces: Spaces) -> list[tuple[int, int, sparse.spmatrix]]:
    # b(v, qcheck) = -<[v]_e, qcheck>, b(vcheck, q) = <vcheck, [q]>
    n_p, n_u = spaces.p.ndofs, spaces.u.ndofs
    return [(0, n_p, -jump_moments(spaces, FieldKind.PCHECK).T),
            (n_u, 0, jump_moments(spaces, FieldKind.UCHECK))]


def _b_shape(spaces: Spaces) -> tuple[int, int]:
    return spaces.u.ndofs + spaces.ucheck.ndofs, spaces.p.ndofs + spaces.pcheck.ndofs


def assemble_b_grad(spaces: Spaces) -> sparse.csr_matrix:
    """
    B[v, q] = b(v, q) in gradient form: (grad_h v, q) - <[v]_e, {q}_e> - <[v]_e, qcheck> + <vcheck, [q]>.
    Rows (u, ucheck), columns (p, pcheck).
    """
    vol = spaces.volume
    local = np.einsum('cq,cqai,cqbi->cab', vol.weights, vol.grad_u, vol.q)
    weights = side_weights(spaces.mesh)
    volume = _block_diagonal_rect(spaces, local)
    edge = _trace_product(spaces, FieldKind.U, weights.jump_u, FieldKind.P, weights.average,
                          -np.ones(spaces.mesh.n_edges))
    return stack_blocks([(0, 0, volume), (0, 0, edge)] + _b_check_blocks(spaces), _b_shape(spaces))


def assemble_b_div(spaces: Spaces) -> sparse.csr_matrix:
    """
    B[v, q] = b(v, q) in divergence form: -(v, div_h q) + <{v}, [q]> - <[v]_e, qcheck> + <vcheck, [q]>.
    """
    vol = spaces.volume
    local = -np.einsum('cq,cqa,cqb->cab', vol.weights, vol.u, vol.div_q)
    weights = side_weights(spaces.mesh)
    volume = _block_diagonal_rect(spaces, local)
    edge = _trace_product(spaces, FieldKind.U, weights.average, FieldKind.P, weights.jump_q,
                          np.ones(spaces.mesh.n_edges))
    return stack_blocks([(0, 0, volume), (0, 0, edge)] + _b_check_blocks(spaces), _b_shape(spaces))


def _block_diagonal_rect(spaces: Spaces, local: np.ndarray) -> sparse.csr_matrix:
    cells = np.arange(spaces.mesh.n_cells)
    triplets = Triplets()
    triplets.add(spaces.u.dofs(cells), spaces.p.dofs(cells), local)
    return triplets.tocsr((spaces.u.ndofs, spaces.p.ndofs))


@dataclass(frozen=True)
class RhsParts:
    p: np.ndarray  # -<g_D, q.n>_D
    pcheck: np.ndarray  # -<g_D, qcheck>_D
    u: np.ndarray  # -(f, v) + <g_N, v>_N
    ucheck: np.ndarray  # <g_N, vcheck>_N


def _boundary_values(spaces: Spaces, func: Callable, tag: EdgeTag) -> tuple[np.ndarray, np.ndarray]:
    edges = np.flatnonzero(spaces.mesh.edge_tags == tag)
    return edges, np.asarray(func(spaces.edge.points[edges]), dtype=float)


def rhs_parts(spaces: Spaces, data: ProblemData) -> RhsParts:
    mesh, tables, vol = spaces.mesh, spaces.edge, spaces.volume
    plus = mesh.edge_cells[:, 0]
    g_p = np.zeros(spaces.p.ndofs)
    g_pc = np.zeros(spaces.pcheck.ndofs)
    f_u = np.zeros(spaces.u.ndofs)
    f_uc = np.zeros(spaces.ucheck.ndofs)

    f_values = np.asarray(data.f(vol.points), dtype=float)
    f_u -= np.einsum('cq,cq,cqb->cb', vol.weights, f_values, vol.u).ravel()

    edges, g_d = _boundary_values(spaces, data.g_d, EdgeTag.DIRICHLET)
    if len(edges):
        qn = np.einsum('eqbi,ei->eqb', tables.q_plus[edges], mesh.edge_normals[edges])
        np.add.at(g_p, spaces.p.dofs(plus[edges]), -np.einsum('eq,eq,eqb->eb', tables.weights[edges], g_d, qn))
        if spaces.pcheck.ndofs:
            g_pc[spaces.pcheck.dofs(edges)] = -spaces.projector_p.moments(g_d, edges)

    edges, g_n = _boundary_values(spaces, data.g_n, EdgeTag.NEUMANN)
    if len(edges):
        np.add.at(f_u, spaces.u.dofs(plus[edges]),
                  np.einsum('eq,eq,eqb->eb', tables.weights[edges], g_n, tables.u_plus[edges]))
        if spaces.ucheck.ndofs:
            f_uc[spaces.ucheck.dofs(edges)] = spaces.projector_u.moments(g_n, edges)
    return RhsParts(g_p, g_pc, f_u, f_uc)


def assemble_rhs(spaces: Spaces, data: ProblemData) -> np.ndarray:
    """
    Right-hand side (G, F) in the (p, pcheck, u, ucheck) ordering.
    """
    parts = rhs_parts(spaces, data)
    return np.concatenate([parts.p, parts.pcheck, parts.u, parts.ucheck])


"""
Block system and discrete fields
"""


@dataclass
class BlockSystem:
    """
    Symmetric indefinite system [[A, B^T], [B, -C]] over ((p, pcheck), (u, ucheck)).
    """
    spaces: Spaces
    a: sparse.csr_matrix
    b: sparse.csr_matrix
    c: sparse.csr_matrix
    rhs: np.ndarray

    def __repr__(self) -> str:
        return '<BlockSystem ' + str(self.size) + ' dofs, ' + str(self.matrix.nnz) + ' nonzeros>'

    @property
    def n_flux(self) -> int:
        return self.a.shape[0]

    @property
    def size(self) -> int:
        return self.n_flux + self.c.shape[0]

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        n = self.n_flux
        return stack_blocks([(0, 0, self.a), (0, n, self.b.T), (n, 0, self.b), (n, n, -self.c)],
                            (self.size, self.size))

    def symmetry_defect(self) -> float:
        m = self.matrix
        scale = abs(m).max() if m.nnz else 1.0
        diff = m - m.T
        return float(abs(diff).max() / scale) if diff.nnz else 0.0

    def fields(self, x: np.ndarray) -> 'SolutionFields':
        return SolutionFields.from_vector(self.spaces, x)

    def dump(self, stream: TextIO) -> None:
        write_coordinates(self.matrix, stream)


def write_coordinates(matrix: sparse.spmatrix, stream: TextIO) -> None:
    """
    One 'row col value' line per stored entry, sorted by row then column.
    """
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        stream.write(str(int(i)) + ' ' + str(int(j)) + ' ' + format(v, '.17e') + '\n')


def assemble_system(spaces: Spaces, data: ProblemData) -> BlockSystem:
    system = BlockSystem(spaces, assemble_a(spaces, data), assemble_b_grad(spaces), assemble_c(spaces),
                         assemble_rhs(spaces, data))
    logger.debug('Assembled ' + repr(system) + ' on ' + repr(spaces.mesh))
    return system


@dataclass
class SolutionFields:
    spaces: Spaces
    p: np.ndarray
    pcheck: np.ndarray
    u: np.ndarray
    ucheck: np.ndarray

    def __repr__(self) -> str:
        return '<SolutionFields ' + repr(self.spaces) + '>'

    @classmethod
    def from_vector(cls, spaces: Spaces, x: np.ndarray) -> 'SolutionFields':
        x = np.asarray(x, dtype=float)
        if len(x) != sum(spaces.dims):
            logger.error('Solution vector has ' + str(len(x)) + ' entries, expected ' + str(sum(spaces.dims)))
            raise AssemblyError('Solution vector length does not match the spaces')
        return cls(spaces, *(x[spaces.block_slice(kind)].copy() for kind in FieldKind))

    @classmethod
    def zeros(cls, spaces: Spaces) -> 'SolutionFields':
        return cls.from_vector(spaces, np.zeros(sum(spaces.dims)))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.pcheck, self.u, self.ucheck])

    def evaluate_u(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        """
        u_h at physical points (n, nq, 2), row i inside cells[i].
        """
        spaces = self.spaces
        mapped = eval_mapped(spaces.u_basis, spaces.mesh.geometry.take(cells), points)
        return np.einsum('cqb,cb->cq', mapped.values, self.u.reshape(spaces.mesh.n_cells, -1)[cells])

    def evaluate_p(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        spaces = self.spaces
        mapped = eval_mapped(spaces.q_basis, spaces.mesh.geometry.take(cells), points)
        return np.einsum('cqbi,cb->cqi', mapped.values, self.p.reshape(spaces.mesh.n_cells, -1)[cells])

    def _side_values(self, kind: FieldKind) -> tuple[np.ndarray, np.ndarray]:
        spaces = self.spaces
        cells = spaces.mesh.edge_cells
        tables = spaces.edge
        if kind == FieldKind.U:
            coefficients = self.u.reshape(spaces.mesh.n_cells, -1)
            return (np.einsum('eqb,eb->eq', tables.u_plus, coefficients[cells[:, 0]]),
                    np.einsum('eqb,eb->eq', tables.u_minus, coefficients[cells[:, 1]]))
        coefficients = self.p.reshape(spaces.mesh.n_cells, -1)
        return (np.einsum('eqbi,eb->eqi', tables.q_plus, coefficients[cells[:, 0]]),
                np.einsum('eqbi,eb->eqi', tables.q_minus, coefficients[cells[:, 1]]))

    def traces(self) -> EdgeTraces:
        """
        Averages and jumps of (u_h, p_h) at the edge quadrature points of every edge.
        """
        u_plus, u_minus = self._side_values(FieldKind.U)
        p_plus, p_minus = self._side_values(FieldKind.P)
        return dg_average_jump(self.spaces.mesh, np.arange(self.spaces.mesh.n_edges), u_plus, u_minus,
                               p_plus, p_minus)

    def u_bar(self) -> np.ndarray:
        return self.traces().average

    def p_bar(self) -> np.ndarray:
        return self.traces().flux_average

    def u_hat(self) -> np.ndarray:
        """
        Coefficients of u_hat = Qcheck^u{u_h} + ucheck_h on the Vcheck_h DOFs.
        """
        return average_moments(self.spaces, FieldKind.UCHECK) @ self.u + self.ucheck

    def p_hat(self) -> np.ndarray:
        return average_moments(self.spaces, FieldKind.PCHECK) @ self.p + self.pcheck


"""
Norm Gram matrices
"""


@dataclass(frozen=True)
class NormMatrices:
    regime: Regime
    flux: sparse.csr_matrix  # Gram of the (p, pcheck) norm
    scalar: sparse.csr_matrix  # Gram of the (u, ucheck) norm

    @property
    def block(self) -> sparse.csr_matrix:
        n, m = self.flux.shape[0], self.scalar.shape[0]
        return stack_blocks([(0, 0, self.flux), (n, n, self.scalar)], (n + m, n + m))

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(x @ (self.block @ x), 0.0)))


def assemble_norm_grams(spaces: Spaces, regime: Regime | str | None = None,
                        data: ProblemData | None = None) -> NormMatrices:
    """
    Grad regime: ||p~||_{0,rho h} and ||u~||_{1,rho h}; div regime: ||p~||_{div,rho h} and ||u~||_{0,rho h}.
    Jump terms use the edge projections Qcheck^p[u]_e and Qcheck^u[p].
    :raises AssemblyError: if the regime differs from the configured one
    """
    config = spaces.config
    regime = config.infsup_regime if regime is None else Regime(regime)
    if regime != config.infsup_regime:
        logger.error('Norm regime ' + regime.value + ' does not match ' + config.infsup_regime.value)
        raise AssemblyError('Norm regime ' + regime.value + ' does not match ' + config.infsup_regime.value)
    data = data or ProblemData()
    vol = spaces.volume
    rho_h = config.rho * spaces.mesh.edge_lengths
    n_p, n_pc, n_u, n_uc = spaces.dims
    mass_c = _block_diagonal(spaces, FieldKind.P, spaces.flux_mass(data.c))
    if regime == Regime.GRAD:
        stiffness = _block_diagonal(spaces, FieldKind.U, np.einsum('cq,cqai,cqbi->cab', vol.weights,
                                                                   vol.grad_u, vol.grad_u))
        jumps = jump_moments(spaces, FieldKind.PCHECK)
        penalty = diagonal(1.0 / edge_dof_values(spaces, FieldKind.PCHECK, rho_h))
        flux = stack_blocks([(0, 0, mass_c), (n_p, n_p, diagonal(edge_dof_values(spaces, FieldKind.PCHECK, rho_h)))],
                            (n_p + n_pc, n_p + n_pc))
        scalar = stack_blocks([(0, 0, stiffness), (0, 0, jumps.T @ penalty @ jumps),
                               (n_u, n_u, diagonal(1.0 / edge_dof_values(spaces, FieldKind.UCHECK, rho_h)))],
                              (n_u + n_uc, n_u + n_uc))
    else:
        div_div = _block_diagonal(spaces, FieldKind.P, np.einsum('cq,cqa,cqb->cab', vol.weights, vol.div_q, vol.div_q))
        jumps = jump_moments(spaces, FieldKind.UCHECK)
        penalty = diagonal(1.0 / edge_dof_values(spaces, FieldKind.UCHECK, rho_h))
        flux = stack_blocks([(0, 0, mass_c), (0, 0, div_div), (0, 0, jumps.T @ penalty @ jumps),
                             (n_p, n_p, diagonal(1.0 / edge_dof_values(spaces, FieldKind.PCHECK, rho_h)))],
                            (n_p + n_pc, n_p + n_pc))
        mass_u = _block_diagonal(spaces, FieldKind.U, np.einsum('cq,cqa,cqb->cab', vol.weights, vol.u, vol.u))
        scalar = stack_blocks([(0, 0, mass_u),
                               (n_u, n_u, diagonal(edge_dof_values(spaces, FieldKind.UCHECK, rho_h)))],
                              (n_u + n_uc, n_u + n_uc))
    return NormMatrices(regime, flux, scalar)


"""
Identities and direct DG assembly
"""


def b_identity_gap(spaces: Spaces) -> float:
    """
    Relative entrywise difference of the gradient and divergence forms of b.
    """
    grad, div = assemble_b_grad(spaces), assemble_b_div(spaces)
    scale = abs(grad).max() if grad.nnz else 1.0
    diff = grad - div
    return float(abs(diff).max() / scale) if diff.nnz else 0.0


def trace_identity_gap(spaces: Spaces, u: np.ndarray, v: np.ndarray) -> float:
    """
    Relative gap of <u, v>_{dT_h} = 2<{u}, {v}> + 1/2 <[u]_e, [v]_e> over the interior edges,
    for broken functions given by their V_h coefficients.
    """
    mesh = spaces.mesh
    edges = np.flatnonzero(mesh.interior)
    if len(edges) == 0:
        return 0.0
    cells = mesh.edge_cells[edges]
    tables = spaces.edge
    side = []
    for coefficients in (u, v):
        c = np.asarray(coefficients, dtype=float).reshape(mesh.n_cells, -1)
        side.append((np.einsum('eqb,eb->eq', tables.u_plus[edges], c[cells[:, 0]]),
                     np.einsum('eqb,eb->eq', tables.u_minus[edges], c[cells[:, 1]])))
    tu = dg_average_jump(mesh, edges, *side[0])
    tv = dg_average_jump(mesh, edges, *side[1])
    w = tables.weights[edges]
    boundary_sum = np.sum(w * (side[0][0] * side[1][0] + side[0][1] * side[1][1]))
    identity = np.sum(w * (2.0 * tu.average * tv.average + 0.5 * tu.jump * tv.jump))
    scale = np.sqrt(np.sum(w * (side[0][0] ** 2 + side[0][1] ** 2)) * np.sum(w * (side[1][0] ** 2 + side[1][1] ** 2)))
    return float(abs(boundary_sum - identity) / max(scale, 1e-300))


def assemble_dg_direct(spaces: Spaces, data: ProblemData) -> tuple[sparse.csr_matrix, np.ndarray]:
    """
    The (p, u) DG scheme with unprojected penalties eta<[p], [q]> and tau<[u]_e, [v]_e>, assembled by
    quadrature. It coincides with eliminating both check fields when [Q_h] lies in Vcheck_h and [V_h] in Qcheck_h.
    """
    mesh = spaces.mesh
    weights = side_weights(mesh)
    n_p, n_u = spaces.p.ndofs, spaces.u.ndofs
    blocks = [(0, 0, _block_diagonal(spaces, FieldKind.P, spaces.flux_mass(data.c)))]
    vol = spaces.volume
    b_pu = _block_diagonal_rect(spaces, np.einsum('cq,cqai,cqbi->cab', vol.weights, vol.grad_u, vol.q))
    b_pu = b_pu + _trace_product(spaces, FieldKind.U, weights.jump_u, FieldKind.P, weights.average,
                                 -np.ones(mesh.n_edges))
    blocks += [(0, n_p, b_pu.T), (n_p, 0, b_pu)]
    parts = rhs_parts(spaces, data)
    rhs_p, rhs_u = parts.p.copy(), parts.u.copy()
    plus = mesh.edge_cells[:, 0]
    tables = spaces.edge
    if spaces.config.k_ucheck is not None:
        blocks.append((0, 0, _trace_product(spaces, FieldKind.P, weights.jump_q, FieldKind.P, weights.jump_q,
                                            spaces.eta)))
        edges, g_n = _boundary_values(spaces, data.g_n, EdgeTag.NEUMANN)
        if len(edges):
            qn = np.einsum('eqbi,ei->eqb', tables.q_plus[edges], mesh.edge_normals[edges])
            np.add.at(rhs_p, spaces.p.dofs(plus[edges]),
                      np.einsum('eq,eq,eqb->eb', tables.weights[edges] * spaces.eta[edges, None], g_n, qn))
    if spaces.config.k_pcheck is not None:
        blocks.append((n_p, n_p, -_trace_product(spaces, FieldKind.U, weights.jump_u, FieldKind.U, weights.jump_u,
                                                 spaces.tau)))
        edges, g_d = _boundary_values(spaces, data.g_d, EdgeTag.DIRICHLET)
        if len(edges):
            np.add.at(rhs_u, spaces.u.dofs(plus[edges]),
                      -np.einsum('eq,eq,eqb->eb', tables.weights[edges] * spaces.tau[edges, None], g_d,
                                 tables.u_plus[edges]))
    matrix = stack_blocks(blocks, (n_p + n_u, n_p + n_u))
    return matrix, np.concatenate([rhs_p, rhs_u])
