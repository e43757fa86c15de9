from dataclasses import dataclass, field

import numpy as np

from xgfem.core.config import Regime
from xgfem.core.constants import Constants
from xgfem.core.exceptions import ConditionViolation
from xgfem.core.mesh import EdgeTag
from xgfem.core.polybasis import EdgeBasis
from xgfem.core.spaces import Spaces
from xgfem.core.xg_debug import logger

"""
Inclusion conditions of the stability, limit and elimination results, measured by projection residuals
"""

TRACE_SOURCES = ('u', 'flux_normal', 'grad_normal', 'div')


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    residual: float
    ok: bool


@dataclass
class ConditionReport:
    title: str
    checks: list[ConditionCheck] = field(default_factory=list)

    def __repr__(self) -> str:
        return '<ConditionReport ' + self.title + ': ' + ('ok' if self.ok else 'violated') + '>'

    @property
    def ok(self) -> bool:
        return all(check.ok for check in self.checks)

    @property
    def first_failure(self) -> ConditionCheck | None:
        return next((check for check in self.checks if not check.ok), None)

    def add(self, name: str, residual: float, tol: float = Constants.INCLUSION_TOL.value) -> None:
        self.checks.append(ConditionCheck(name, float(residual), bool(residual <= tol)))

    def enforce(self) -> 'ConditionReport':
        failure = self.first_failure
        if failure is not None:
            logger.error(self.title + ': condition "' + failure.name + '" violated, residual '
                         + format(failure.residual, '.3e'))
            raise ConditionViolation(failure.name, failure.residual)
        return self


def _side_traces(spaces: Spaces, source: str) -> tuple[np.ndarray, np.ndarray]:
    tables = spaces.edge
    normals = spaces.mesh.edge_normals
    if source == 'u':
        return tables.u_plus, tables.u_minus
    if source == 'flux_normal':
        return (np.einsum('eqbi,ei->eqb', tables.q_plus, normals),
                np.einsum('eqbi,ei->eqb', tables.q_minus, normals))
    if source == 'grad_normal':
        return (np.einsum('eqbi,ei->eqb', tables.grad_u_plus, normals),
                np.einsum('eqbi,ei->eqb', tables.grad_u_minus, normals))
    if source == 'div':
        return tables.div_q_plus, tables.div_q_minus
    raise ValueError('Unknown trace source: ' + source)


def _relative(residual_sq: np.ndarray, norm_sq: np.ndarray) -> float:
    scale = norm_sq.max() if norm_sq.size else 0.0
    mask = norm_sq > 1e-24 * max(scale, 1e-300)
    if not np.any(mask):
        return 0.0
    return float(np.sqrt(np.max(np.maximum(residual_sq[mask], 0.0) / norm_sq[mask])))


def edge_inclusion_residual(spaces: Spaces, source: str, degree: int | None, edges: np.ndarray) -> float:
    """
    Largest relative L2 distance of a trace of a basis function (source: u, flux_normal, grad_normal, div)
    from P_degree(e) over the given edges and both adjacent cells; degree None stands for {0}.
    """
    edges = np.asarray(edges, dtype=int)
    if len(edges) == 0:
        return 0.0
    rule = spaces.edge_rule
    cells = spaces.mesh.edge_cells
    residuals, norms = [], []
    for side, table in enumerate(_side_traces(spaces, source)):
        present = edges[cells[edges, side] >= 0]
        if len(present) == 0:
            continue
        values = table[present]
        norm_sq = np.einsum('q,eqb->eb', rule.weights, values ** 2)
        if degree is None:
            residual_sq = norm_sq
        else:
            psi = EdgeBasis(degree).values(rule.points)
            coefficients = np.einsum('q,qj,eqb->ejb', rule.weights, psi, values)
            projected = np.einsum('qj,ejb->eqb', psi, coefficients)
            residual_sq = np.einsum('q,eqb->eb', rule.weights, (values - projected) ** 2)
        residuals.append(residual_sq.ravel())
        norms.append(norm_sq.ravel())
    if not norms:
        return 0.0
    return _relative(np.concatenate(residuals), np.concatenate(norms))


def cell_inclusion_residual(spaces: Spaces, source: str) -> float:
    """
    :param source: 'grad_u' for grad_h V_h in Q_h, 'div_q' for div_h Q_h in V_h
    """
    vol = spaces.volume
    w = vol.weights
    if source == 'grad_u':
        gram = np.einsum('cq,cqai,cqbi->cab', w, vol.q, vol.q)
        rhs = np.einsum('cq,cqai,cqbi->cab', w, vol.q, vol.grad_u)
        coefficients = np.linalg.solve(gram, rhs)
        projected = np.einsum('cqai,cab->cqbi', vol.q, coefficients)
        residual_sq = np.einsum('cq,cqbi->cb', w, (vol.grad_u - projected) ** 2)
        norm_sq = np.einsum('cq,cqbi->cb', w, vol.grad_u ** 2)
    elif source == 'div_q':
        # V_h basis is orthonormal on every cell
        coefficients = np.einsum('cq,cqa,cqb->cab', w, vol.u, vol.div_q)
        projected = np.einsum('cqa,cab->cqb', vol.u, coefficients)
        residual_sq = np.einsum('cq,cqb->cb', w, (vol.div_q - projected) ** 2)
        norm_sq = np.einsum('cq,cqb->cb', w, vol.div_q ** 2)
    else:
        raise ValueError('Unknown cell source: ' + source)
    return _relative(residual_sq, norm_sq)


def div_surjective(spaces: Spaces) -> bool:
    """
    div_h Q_h spans V_h on every cell (checked on the first cell; affine maps preserve the rank).
    """
    vol = spaces.volume
    coefficients = np.einsum('q,qa,qb->ab', vol.weights[0], vol.u[0], vol.div_q[0])
    return int(np.linalg.matrix_rank(coefficients, tol=1e-10 * max(np.abs(coefficients).max(), 1e-300))) \
        == spaces.u_basis.dim


def _pcheck_edges(spaces: Spaces) -> np.ndarray:
    return np.flatnonzero(spaces.mesh.edge_tags != EdgeTag.NEUMANN)


def _ucheck_edges(spaces: Spaces) -> np.ndarray:
    return np.flatnonzero(spaces.mesh.edge_tags != EdgeTag.DIRICHLET)


def _flag(ok: bool) -> float:
    return 0.0 if ok else 1.0


def _penalty_product(spaces: Spaces) -> float:
    target = Constants.HDG_PENALTY_PRODUCT.value
    return float(np.max(np.abs(spaces.tau * spaces.eta - target)) / target)


def _stable_mixed_pair(spaces: Spaces) -> bool:
    config = spaces.config
    if config.q_family == 'rt':
        return config.k_p == config.k_u
    return config.k_p == config.k_u + 1


def _finish(report: ConditionReport, strict: bool) -> ConditionReport:
    logger.debug(repr(report) + ' ' + str([(c.name, c.residual) for c in report.checks]))
    return report.enforce() if strict else report


def check_grad_conditions(spaces: Spaces, strict: bool = False) -> ConditionReport:
    report = ConditionReport('gradient-based stability')
    config = spaces.config
    report.add('Qcheck contains piecewise constants', _flag(config.k_pcheck is not None))
    report.add('grad_h V_h in Q_h', cell_inclusion_residual(spaces, 'grad_u'))
    report.add('{grad_h V_h}_e in Qcheck_h',
               edge_inclusion_residual(spaces, 'grad_normal', config.k_pcheck, _pcheck_edges(spaces)))
    return _finish(report, strict)


def check_div_conditions(spaces: Spaces, strict: bool = False) -> ConditionReport:
    report = ConditionReport('divergence-based stability')
    config = spaces.config
    report.add('Q_h is RT_k or P_k+1 paired with V_h^k', _flag(_stable_mixed_pair(spaces)))
    report.add('div_h Q_h in V_h', cell_inclusion_residual(spaces, 'div_q'))
    report.add('div_h Q_h onto V_h', _flag(div_surjective(spaces)))
    report.add('{div_h Q_h} in Vcheck_h',
               edge_inclusion_residual(spaces, 'div', config.k_ucheck, _ucheck_edges(spaces)))
    return _finish(report, strict)


def check_regime(spaces: Spaces, strict: bool = False) -> ConditionReport:
    if spaces.config.infsup_regime == Regime.GRAD:
        return check_grad_conditions(spaces, strict)
    return check_div_conditions(spaces, strict)


def check_primal_limit(spaces: Spaces, strict: bool = False) -> ConditionReport:
    report = ConditionReport('limit to the primal method')
    config = spaces.config
    report.add('gradient regime', _flag(config.regime == Regime.GRAD))
    report.add('grad_h V_h in Q_h', cell_inclusion_residual(spaces, 'grad_u'))
    report.add('{Q_h}_e in Qcheck_h',
               edge_inclusion_residual(spaces, 'flux_normal', config.k_pcheck, _pcheck_edges(spaces)))
    report.add('V_h = V_h^k with k >= 1', _flag(config.k_u >= 1))
    report.add('V_h|_E in Qcheck_h', edge_inclusion_residual(spaces, 'u', config.k_pcheck, _pcheck_edges(spaces)))
    return _finish(report, strict)


def check_mixed_limit(spaces: Spaces, strict: bool = False) -> ConditionReport:
    report = ConditionReport('limit to the mixed method')
    config = spaces.config
    report.add('divergence regime', _flag(config.regime == Regime.DIV))
    report.add('div_h Q_h in V_h', cell_inclusion_residual(spaces, 'div_q'))
    report.add('div_h Q_h onto V_h', _flag(div_surjective(spaces)))
    report.add('{V_h} in Vcheck_h', edge_inclusion_residual(spaces, 'u', config.k_ucheck, _ucheck_edges(spaces)))
    report.add('Q_h is RT_k or P_k+1 paired with V_h^k', _flag(_stable_mixed_pair(spaces)))
    return _finish(report, strict)


def check_hybridizable(spaces: Spaces, strict: bool = False) -> ConditionReport:
    report = ConditionReport('hybridization on u_hat')
    config = spaces.config
    ucheck_edges, pcheck_edges = _ucheck_edges(spaces), _pcheck_edges(spaces)
    report.add('Q_h.n_e in Vcheck_h', edge_inclusion_residual(spaces, 'flux_normal', config.k_ucheck, ucheck_edges))
    report.add('V_h|_E in Vcheck_h', edge_inclusion_residual(spaces, 'u', config.k_ucheck, ucheck_edges))
    report.add('V_h|_E in Qcheck_h', edge_inclusion_residual(spaces, 'u', config.k_pcheck, pcheck_edges))
    report.add('tau eta = 1/4', _penalty_product(spaces))
    return _finish(report, strict)


def check_wg_phat(spaces: Spaces, strict: bool = False) -> ConditionReport:
    report = ConditionReport('p_hat formulation')
    config = spaces.config
    report.add('Q_h.n_e in Qcheck_h',
               edge_inclusion_residual(spaces, 'flux_normal', config.k_pcheck, _pcheck_edges(spaces)))
    report.add('tau eta = 1/4', _penalty_product(spaces))
    return _finish(report, strict)
