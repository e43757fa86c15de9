from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.sparse.linalg import splu

from xgfem.core.constants import Constants
from xgfem.core.exceptions import AssemblyError, SolverError
from xgfem.core.xg_debug import logger

"""
Sparse direct solves, inf-sup constants, dual norms
"""


def as_csr(matrix) -> sparse.csr_matrix:
    """
    Compressed row storage with sorted, unique column indices.
    """
    csr = sparse.csr_matrix(matrix, dtype=float)
    csr.sum_duplicates()
    csr.sort_indices()
    return csr


def is_symmetric(matrix, tol: float = 1e-12) -> bool:
    m = as_csr(matrix)
    if m.nnz == 0:
        return True
    diff = m - m.T
    return diff.nnz == 0 or abs(diff).max() <= tol * abs(m).max()


@dataclass(frozen=True)
class SolveReport:
    x: np.ndarray
    residual: float  # ||Mx - b|| / ||b||, recomputed after the solve
    min_pivot: float
    max_pivot: float

    def __repr__(self) -> str:
        return ('<SolveReport n=' + str(len(self.x)) + ' residual=' + format(self.residual, '.2e')
                + ' pivots=[' + format(self.min_pivot, '.2e') + ', ' + format(self.max_pivot, '.2e') + ']>')


def solve_direct(matrix, b: np.ndarray, tol: float = Constants.SOLVER_TOL.value) -> SolveReport:
    """
    Sparse LU with partial pivoting.
    :raises SolverError: on a singular factorization or a residual above tol
    """
    m = as_csr(matrix)
    b = np.asarray(b, dtype=float)
    if m.shape[0] != m.shape[1] or m.shape[0] != len(b):
        logger.error('Cannot solve a ' + str(m.shape) + ' system with ' + str(len(b)) + ' right-hand side entries')
        raise SolverError('Shape mismatch in direct solve')
    if m.shape[0] == 0:
        return SolveReport(np.zeros(0), 0.0, 0.0, 0.0)
    try:
        lu = splu(m.tocsc())
    except RuntimeError as e:
        logger.error('Factorization failed: ' + str(e))
        raise SolverError('Factorization failed: ' + str(e)) from e
    pivots = np.abs(lu.U.diagonal())
    x = lu.solve(b)
    b_norm = np.linalg.norm(b)
    residual = float(np.linalg.norm(m @ x - b) / (b_norm if b_norm > 0 else 1.0))
    report = SolveReport(x, residual, float(pivots.min()), float(pivots.max()))
    logger.debug('Direct solve ' + repr(report))
    if not np.all(np.isfinite(x)) or residual > tol:
        logger.error('Direct solve residual ' + format(residual, '.3e') + ' above tolerance ' + format(tol, '.1e'))
        raise SolverError('Direct solve residual ' + format(residual, '.3e') + ' above tolerance')
    return report


@dataclass(frozen=True)
class InfSupReport:
    beta: float  # min |lambda| of M x = lambda N x
    lambda_min: float
    lambda_max: float
    regime: str = ''
    rho: float = float('nan')
    h: float = float('nan')
    preset: str = ''
    dofs: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def condition(self) -> float:
        return max(abs(self.lambda_min), abs(self.lambda_max)) / self.beta


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix, dtype=float)


def infsup_constant(matrix, gram, **labels) -> InfSupReport:
    """
    beta_h = min |lambda| over the symmetric generalized eigenproblem M x = lambda N x.
    :param matrix: symmetric system matrix M
    :param gram: SPD norm Gram N, block diagonal over the trial and test fields
    :raises AssemblyError: if N is not positive definite or M is not symmetric
    """
    m, n = _dense(matrix), _dense(gram)
    if m.shape[0] > Constants.DENSE_DOF_CAP.value:
        logger.warning('Dense eigen-solve on ' + str(m.shape[0]) + ' DOFs')
    if m.shape[0] == 0:
        logger.error('Inf-sup constant of an empty system')
        raise SolverError('Inf-sup constant of an empty system')
    n_min = float(linalg.eigvalsh(n)[0])
    if n_min <= 0:
        logger.error('Norm Gram is not positive definite (min eigenvalue ' + format(n_min, '.3e') + ')')
        raise AssemblyError('Norm Gram is not positive definite')
    if not is_symmetric(m, Constants.SYMMETRY_TOL.value):
        logger.error('Inf-sup constant needs a symmetric system matrix')
        raise AssemblyError('System matrix is not symmetric')
    eigenvalues = linalg.eigh(0.5 * (m + m.T), n, eigvals_only=True)
    magnitudes = np.abs(eigenvalues)
    report = InfSupReport(beta=float(magnitudes.min()), lambda_min=float(eigenvalues[0]),
                          lambda_max=float(eigenvalues[-1]), dofs=m.shape[0], **labels)
    logger.debug('Inf-sup beta=' + format(report.beta, '.4e') + ' on ' + str(m.shape[0]) + ' dofs')
    return report


def dual_norm(functional: np.ndarray, gram) -> float:
    """
    sqrt(F^T N^-1 F), the discrete sup of F(v) / ||v||_N.
    """
    f = np.asarray(functional, dtype=float)
    if len(f) == 0 or not np.any(f):
        return 0.0
    n = _dense(gram)
    factor = linalg.cho_factor(n)
    return float(np.sqrt(max(f @ linalg.cho_solve(factor, f), 0.0)))
