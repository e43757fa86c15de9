from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
from scipy import sparse

from xgfem.core import conditions
from xgfem.core.assembly import (BlockSystem, ProblemData, SolutionFields, Triplets, assemble_system,
                                 average_moments, diagonal, stack_blocks, write_coordinates)
from xgfem.core.exceptions import EliminationError
from xgfem.core.linalg import SolveReport, solve_direct
from xgfem.core.spaces import FieldKind, Spaces
from xgfem.core.xg_debug import logger

"""
Static eliminations of the check fields, hybridization on u_hat and the p_hat formulation
"""

# Relative size of cross-cell entries tolerated in a block that must be cell-local
LOCALITY_TOL = 1e-10


@dataclass
class ReducedSystem:
    """
    A linear system in a subset of (transformed) fields. The full 4-field vector is
    recover @ x + offset.
    """
    spaces: Spaces
    layout: tuple[tuple[str, int], ...]  # (field name, size) in unknown order
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    recover: sparse.csr_matrix
    offset: np.ndarray
    extra: dict = field(default_factory=dict)

    def __repr__(self) -> str:
        return ('<ReducedSystem (' + ', '.join(self.fields) + ') ' + str(self.size) + ' dofs, '
                + str(self.matrix.nnz) + ' nonzeros>')

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.layout)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def field_slice(self, name: str) -> slice:
        start = 0
        for field_name, size in self.layout:
            if field_name == name:
                return slice(start, start + size)
            start += size
        raise KeyError(name)

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.recover @ x + self.offset

    def solve(self) -> tuple[SolutionFields, SolveReport]:
        report = solve_direct(self.matrix, self.rhs)
        return SolutionFields.from_vector(self.spaces, self.reconstruct(report.x)), report

    def dump(self, stream: TextIO) -> None:
        write_coordinates(self.matrix, stream)


def as_reduced(system: BlockSystem) -> ReducedSystem:
    """
    The 4-field system itself, with nothing eliminated.
    """
    spaces = system.spaces
    layout = tuple((kind.value, n) for kind, n in zip(FieldKind, spaces.dims))
    n = system.size
    return ReducedSystem(spaces, layout, system.matrix, system.rhs.copy(), sparse.identity(n, format='csr'),
                         np.zeros(n))


def _selection(indices: np.ndarray, n: int) -> sparse.csr_matrix:
    return sparse.csr_matrix((np.ones(len(indices)), (indices, np.arange(len(indices)))), shape=(n, len(indices)))


def eliminate_fields(reduced: ReducedSystem | BlockSystem, names) -> ReducedSystem:
    """
    Schur complement on fields whose diagonal block is diagonal:
    K' = K_rr - K_re D^-1 K_er, b' = b_r - K_re D^-1 b_e, x_e = D^-1 (b_e - K_er x_r).
    :raises EliminationError: if the block is not diagonal or has a zero entry
    """
    if isinstance(reduced, BlockSystem):
        reduced = as_reduced(reduced)
    names = [n.value if isinstance(n, FieldKind) else n for n in names]
    n = reduced.size
    eliminated = np.concatenate([np.arange(n)[reduced.field_slice(name)] for name in names] or [np.zeros(0, int)])
    kept = np.setdiff1d(np.arange(n), eliminated)
    layout = tuple(entry for entry in reduced.layout if entry[0] not in names)
    if len(eliminated) == 0:
        return ReducedSystem(reduced.spaces, layout, reduced.matrix, reduced.rhs, reduced.recover, reduced.offset,
                             dict(reduced.extra))
    k = reduced.matrix.tocsr()
    block = k[eliminated][:, eliminated]
    d = block.diagonal()
    off_diagonal = block - diagonal(d)
    if off_diagonal.nnz and abs(off_diagonal).max() > LOCALITY_TOL * max(abs(d).max(), 1.0):
        logger.error('Cannot eliminate ' + ', '.join(names) + ': block is not diagonal')
        raise EliminationError('Cannot eliminate ' + ', '.join(names) + ': block is not diagonal')
    if np.any(d == 0) or not np.all(np.isfinite(d)):
        logger.error('Cannot eliminate ' + ', '.join(names) + ': zero penalty on an active edge')
        raise EliminationError('Cannot eliminate ' + ', '.join(names) + ': zero penalty on an active edge')
    d_inv = diagonal(1.0 / d)
    k_rr, k_re, k_er = k[kept][:, kept], k[kept][:, eliminated], k[eliminated][:, kept]
    b_r, b_e = reduced.rhs[kept], reduced.rhs[eliminated]
    matrix = (k_rr - k_re @ d_inv @ k_er).tocsr()
    rhs = b_r - k_re @ (d_inv @ b_e)
    sel_r, sel_e = _selection(kept, n), _selection(eliminated, n)
    recover = (reduced.recover @ (sel_r - sel_e @ (d_inv @ k_er))).tocsr()
    offset = reduced.offset + reduced.recover @ (sel_e @ (d_inv @ b_e))
    result = ReducedSystem(reduced.spaces, layout, matrix, rhs, recover, offset, dict(reduced.extra))
    logger.debug('Eliminated ' + ', '.join(names) + ': ' + repr(result))
    return result


def change_variables(reduced: ReducedSystem, target: str, source: str, projection: sparse.spmatrix,
                     new_name: str) -> ReducedSystem:
    """
    Substitute x_target = x_new - projection @ x_source, i.e. K -> T^T K T, b -> T^T b.
    """
    n = reduced.size
    t_rows, s_cols = reduced.field_slice(target), reduced.field_slice(source)
    t = stack_blocks([(0, 0, sparse.identity(n)), (t_rows.start, s_cols.start, -projection)], (n, n))
    matrix = (t.T @ reduced.matrix @ t).tocsr()
    layout = tuple((new_name if name == target else name, size) for name, size in reduced.layout)
    return ReducedSystem(reduced.spaces, layout, matrix, t.T @ reduced.rhs, (reduced.recover @ t).tocsr(),
                         reduced.offset, dict(reduced.extra))


def eliminate_pcheck(system: BlockSystem) -> ReducedSystem:
    """
    (p, u, ucheck) system: pcheck = tau Qcheck^p([u]_e - g_D) is substituted.
    """
    return eliminate_fields(system, [FieldKind.PCHECK])


def eliminate_ucheck(system: BlockSystem) -> ReducedSystem:
    """
    (p, pcheck, u) system: ucheck = eta Qcheck^u([p] - g_N) is substituted.
    """
    return eliminate_fields(system, [FieldKind.UCHECK])


def eliminate_both(system: BlockSystem) -> ReducedSystem:
    """
    (p, u) DG system carrying both projected jump penalties.
    """
    return eliminate_fields(system, [FieldKind.PCHECK, FieldKind.UCHECK])


def _cell_groups(reduced: ReducedSystem, spaces: Spaces) -> np.ndarray:
    # (nc, m) positions of the p and u unknowns of every cell
    cells = np.arange(spaces.mesh.n_cells)
    p = reduced.field_slice(FieldKind.P.value).start + spaces.p.dofs(cells)
    u = reduced.field_slice(FieldKind.U.value).start + spaces.u.dofs(cells)
    return np.hstack([p, u])


def condense(reduced: ReducedSystem, skeleton: str) -> ReducedSystem:
    """
    Static condensation onto the skeleton field: cellwise dense solves for (p, u), then the Schur
    complement. The Schur matrix is negated so that the stored system is positive definite.
    :raises EliminationError: if the (p, u) block couples different cells
    """
    spaces = reduced.spaces
    n = reduced.size
    groups = _cell_groups(reduced, spaces)
    local = groups.ravel()
    hat = np.arange(n)[reduced.field_slice(skeleton)]
    position = np.full(n, -1)
    position[local] = np.tile(np.arange(groups.shape[1]), spaces.mesh.n_cells)
    owner = np.full(n, -1)
    owner[local] = np.repeat(np.arange(spaces.mesh.n_cells), groups.shape[1])

    k = reduced.matrix.tocsr()
    k_ll = k[local][:, local].tocoo()
    rows, cols = local[k_ll.row], local[k_ll.col]
    cross = owner[rows] != owner[cols]
    scale = max(abs(k).max(), 1.0) if k.nnz else 1.0
    if np.any(cross) and np.abs(k_ll.data[cross]).max() > LOCALITY_TOL * scale:
        logger.error('The (p, u) block couples different cells; hybridization is not equivalent')
        raise EliminationError('The (p, u) block couples different cells')
    blocks = np.zeros((spaces.mesh.n_cells,) + (groups.shape[1],) * 2)
    keep = ~cross
    np.add.at(blocks, (owner[rows[keep]], position[rows[keep]], position[cols[keep]]), k_ll.data[keep])
    try:
        inverses = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as e:
        logger.error('Singular local (p, u) block: ' + str(e))
        raise EliminationError('Singular local (p, u) block') from e
    # local indices in k[local] order are the flattened groups
    order = np.arange(len(local)).reshape(groups.shape)
    triplets = Triplets()
    triplets.add(order, order, inverses)
    k_inv = triplets.tocsr((len(local), len(local)))

    k_lh, k_hl, k_hh = k[local][:, hat], k[hat][:, local], k[hat][:, hat]
    b_l, b_h = reduced.rhs[local], reduced.rhs[hat]
    schur = k_hh - k_hl @ k_inv @ k_lh
    g = b_h - k_hl @ (k_inv @ b_l)
    sel_l, sel_h = _selection(local, n), _selection(hat, n)
    lift = (sel_h - sel_l @ (k_inv @ k_lh)).tocsr()
    recover = (reduced.recover @ lift).tocsr()
    offset = reduced.offset + reduced.recover @ (sel_l @ (k_inv @ b_l))
    extra = dict(reduced.extra, schur_dim=len(hat), local_dim=groups.shape[1])
    result = ReducedSystem(spaces, ((skeleton, len(hat)),), (-schur).tocsr(), -g, recover, offset, extra)
    logger.debug('Condensed onto ' + skeleton + ': ' + repr(result))
    return result


def hybridize_uhat(system: BlockSystem, strict: bool = True) -> ReducedSystem:
    """
    Eliminate pcheck, substitute ucheck = u_hat - Qcheck^u{u}, condense (p, u) cell by cell and keep u_hat.
    :raises ConditionViolation: if Q_h.n_e and V_h|_E are not contained in Vcheck_h, V_h|_E not in Qcheck_h,
        or tau eta differs from 1/4
    """
    spaces = system.spaces
    conditions.check_hybridizable(spaces, strict=strict)
    reduced = eliminate_pcheck(system)
    reduced = change_variables(reduced, FieldKind.UCHECK.value, FieldKind.U.value,
                               average_moments(spaces, FieldKind.UCHECK), 'uhat')
    return condense(reduced, 'uhat')


def assemble_wg_phat(spaces: Spaces, data: ProblemData, system: BlockSystem | None = None,
                     strict: bool = True) -> ReducedSystem:
    """
    The (p, p_hat, u) formulation with p_hat = Qcheck^p{p}_e + pcheck, obtained from the 4-field system by
    eliminating ucheck and substituting pcheck.
    :raises ConditionViolation: if Q_h.n_e is not contained in Qcheck_h or tau eta differs from 1/4
    """
    conditions.check_wg_phat(spaces, strict=strict)
    system = system or assemble_system(spaces, data)
    reduced = eliminate_ucheck(system)
    return change_variables(reduced, FieldKind.PCHECK.value, FieldKind.P.value,
                            average_moments(spaces, FieldKind.PCHECK), 'phat')


def reduce(system: BlockSystem, data: ProblemData, path: str) -> ReducedSystem:
    """
    :param path: full | pcheck | ucheck | both | hybridize | wg_phat
    """
    if path == 'full':
        return as_reduced(system)
    if path == 'pcheck':
        return eliminate_pcheck(system)
    if path == 'ucheck':
        return eliminate_ucheck(system)
    if path == 'both':
        return eliminate_both(system)
    if path == 'hybridize':
        return hybridize_uhat(system)
    if path == 'wg_phat':
        return assemble_wg_phat(system.spaces, data, system)
    logger.error('Unknown solve path: ' + str(path))
    raise EliminationError('Unknown solve path: ' + str(path))


def solve(system: BlockSystem, data: ProblemData, path: str | None = None) -> tuple[SolutionFields, SolveReport]:
    reduced = reduce(system, data, path or system.spaces.config.solve)
    return reduced.solve()
