from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
import pandas as pd

from xgfem.core import conditions
from xgfem.core.assembly import (ProblemData, SolutionFields, assemble_norm_grams, assemble_system, dg_average_jump,
                                 edge_dof_values, jump_moments, rhs_parts, zero_function)
from xgfem.core.cases import ManufacturedCase
from xgfem.core.config import MethodConfig, Regime, table_presets
from xgfem.core.conforming import MixedReference, PrimalReference, conforming_mixed_solve, conforming_primal_solve
from xgfem.core.constants import Constants
from xgfem.core.eliminate import reduce, solve
from xgfem.core.exceptions import ConditionViolation, ConfigError
from xgfem.core.linalg import InfSupReport, SolveReport, dual_norm, infsup_constant, solve_direct
from xgfem.core.mesh import EdgeTag, Mesh2D, build_structured_unit_square, sides_predicate, tag_boundary
from xgfem.core.spaces import FieldKind, Spaces, build_spaces
from xgfem.core.threaded import fan_out
from xgfem.core.xg_debug import logger

"""
Error norms and convergence, inf-sup, limit, quasi-optimality and stability studies
"""

NORM_NAMES = ('p', 'pcheck', 'u', 'ucheck')


def build_mesh(n: int, neumann=()) -> Mesh2D:
    """
    Structured n x n mesh of the unit square with the named sides Neumann.
    """
    mesh = build_structured_unit_square(n)
    if neumann:
        mesh = tag_boundary(mesh, sides_predicate(neumann))
    return mesh


def solve_case(case: ManufacturedCase, config: MethodConfig, n: int,
               neumann=()) -> tuple[SolutionFields, SolveReport]:
    spaces = build_spaces(build_mesh(n, neumann), config)
    data = case.problem_data()
    return solve(assemble_system(spaces, data), data, config.solve)


"""
Error norms
"""


@dataclass(frozen=True)
class ErrorRow:
    level: int
    h: float
    dofs: int
    errors: dict[str, float]

    @property
    def total(self) -> float:
        return float(sum(self.errors.values()))


def exact_jump_moments(spaces: Spaces, check: FieldKind, case: ManufacturedCase) -> np.ndarray:
    """
    Moments on the check space of the jump of the exact solution: [u]_e = g_D on Dirichlet edges for PCHECK,
    [p] = p.n on Neumann edges for UCHECK, zero elsewhere.
    """
    dofmap = spaces.pcheck if check == FieldKind.PCHECK else spaces.ucheck
    moments = np.zeros(dofmap.ndofs)
    if dofmap.ndofs == 0:
        return moments
    mesh = spaces.mesh
    tag = EdgeTag.DIRICHLET if check == FieldKind.PCHECK else EdgeTag.NEUMANN
    edges = np.flatnonzero(mesh.edge_tags == tag)
    if len(edges) == 0:
        return moments
    points = spaces.edge.points[edges]
    if check == FieldKind.PCHECK:
        moments[dofmap.dofs(edges)] = spaces.projector_p.moments(case.g_d(points), edges)
    else:
        values = np.einsum('eqi,ei->eq', case.p(points), mesh.edge_normals[edges])
        moments[dofmap.dofs(edges)] = spaces.projector_u.moments(values, edges)
    return moments


def _weighted_sum(weights: np.ndarray, values: np.ndarray) -> float:
    return float(np.sum(weights * values))


def _edge_weights(spaces: Spaces, kind: FieldKind, power: int) -> np.ndarray:
    return edge_dof_values(spaces, kind, (spaces.config.rho * spaces.mesh.edge_lengths) ** power)


def error_norms(solution: SolutionFields, case: ManufacturedCase, config: MethodConfig | None = None,
                regime: Regime | str | None = None, level: int = 0) -> ErrorRow:
    """
    Grad regime: ||p - p_h||_{0,c}, ||pcheck_h||_{0,rho h}, ||u - u_h||_{1,rho h}, ||ucheck_h||_{0,(rho h)^-1}.
    Div regime: ||p - p_h||_{div,rho h}, ||pcheck_h||_{0,(rho h)^-1}, ||u - u_h||_0, ||ucheck_h||_{0,rho h}.
    """
    spaces = solution.spaces
    config = config or spaces.config
    regime = config.infsup_regime if regime is None else Regime(regime)
    vol = spaces.volume
    w, x = vol.weights, vol.points
    c = case.problem_data().c(x)
    dp = case.p(x) - spaces.cell_values(FieldKind.P, solution.p)
    p_sq = _weighted_sum(w, np.einsum('cqi,cqij,cqj->cq', dp, c, dp))
    if regime == Regime.GRAD:
        du = case.grad_u(x) - spaces.cell_gradients(solution.u)
        u_sq = _weighted_sum(w, np.sum(du ** 2, axis=-1))
        if spaces.pcheck.ndofs:
            jumps = exact_jump_moments(spaces, FieldKind.PCHECK, case) \
                - jump_moments(spaces, FieldKind.PCHECK) @ solution.u
            u_sq += float(np.sum(jumps ** 2 * _edge_weights(spaces, FieldKind.PCHECK, -1)))
        pcheck_sq = float(np.sum(solution.pcheck ** 2 * _edge_weights(spaces, FieldKind.PCHECK, 1)))
        ucheck_sq = float(np.sum(solution.ucheck ** 2 * _edge_weights(spaces, FieldKind.UCHECK, -1)))
    else:
        ddiv = case.div_p(x) - spaces.cell_divergence(solution.p)
        p_sq += _weighted_sum(w, ddiv ** 2)
        if spaces.ucheck.ndofs:
            jumps = exact_jump_moments(spaces, FieldKind.UCHECK, case) \
                - jump_moments(spaces, FieldKind.UCHECK) @ solution.p
            p_sq += float(np.sum(jumps ** 2 * _edge_weights(spaces, FieldKind.UCHECK, -1)))
        u_sq = _weighted_sum(w, (case.u(x) - spaces.cell_values(FieldKind.U, solution.u)) ** 2)
        pcheck_sq = float(np.sum(solution.pcheck ** 2 * _edge_weights(spaces, FieldKind.PCHECK, -1)))
        ucheck_sq = float(np.sum(solution.ucheck ** 2 * _edge_weights(spaces, FieldKind.UCHECK, 1)))
    errors = dict(zip(NORM_NAMES, np.sqrt(np.maximum([p_sq, pcheck_sq, u_sq, ucheck_sq], 0.0)).tolist()))
    return ErrorRow(level, spaces.mesh.h, int(sum(spaces.dims)), errors)


def compute_eoc(errors, hs) -> np.ndarray:
    """
    log(e_l / e_l+1) / log(h_l / h_l+1); undefined (nan) when both errors are below the noise floor.
    """
    errors, hs = np.asarray(errors, dtype=float), np.asarray(hs, dtype=float)
    eoc = np.full(len(errors), np.nan)
    floor = Constants.EOC_NOISE_FLOOR.value
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if (e0 < floor and e1 < floor) or e0 <= 0 or e1 <= 0:
            continue
        eoc[i] = np.log(e0 / e1) / np.log(hs[i - 1] / hs[i])
    return eoc


@dataclass
class ErrorReport:
    case: str
    preset: str
    regime: Regime
    rows: list[ErrorRow] = field(default_factory=list)

    def __repr__(self) -> str:
        return '<ErrorReport ' + self.case + ' ' + self.preset + ' (' + self.regime.value + '), ' \
            + str(len(self.rows)) + ' levels>'

    def errors(self, name: str) -> np.ndarray:
        return np.array([row.errors[name] for row in self.rows])

    def eoc(self, name: str) -> np.ndarray:
        return compute_eoc(self.errors(name), [row.h for row in self.rows])

    def finest_eoc(self, name: str) -> float:
        return float(self.eoc(name)[-1])

    def frame(self) -> pd.DataFrame:
        data = {'level': [row.level for row in self.rows], 'h': [row.h for row in self.rows],
                'dofs': [row.dofs for row in self.rows]}
        for name in NORM_NAMES:
            data['err_' + name] = self.errors(name)
        for name in NORM_NAMES:
            data['eoc_' + name] = self.eoc(name)
        return pd.DataFrame(data)


def expected_rate(config: MethodConfig) -> int:
    """
    h^(k+1): V_h = V^(k+1) in the gradient regime, V_h = V^k in the divergence regime.
    """
    return config.k_u if config.infsup_regime == Regime.GRAD else config.k_u + 1


def eoc_failures(report: ErrorReport, rate: float, tolerance: float = Constants.EOC_TOLERANCE.value) -> list[str]:
    """
    Norms whose EOC on the finest pair is below rate - tolerance. Norms at round-off level on both
    finest levels are skipped.
    """
    failures = []
    for name in NORM_NAMES:
        errors = report.errors(name)
        if len(errors) >= 2 and max(errors[-2:]) < 1e-12:
            logger.warning('Error in ' + name + ' is at round-off level, EOC not checked')
            continue
        eoc = report.finest_eoc(name)
        if not eoc >= rate - tolerance:
            failures.append('EOC of ' + name + ' is ' + format(eoc, '.3f') + ', expected >= '
                            + format(rate - tolerance, '.3f'))
    return failures


def _error_job(case: ManufacturedCase, config: MethodConfig, n: int, neumann) -> ErrorRow:
    solution, report = solve_case(case, config, n, neumann)
    row = error_norms(solution, case, config, level=n)
    logger.info(case.name + ' ' + config.name + ' n=' + str(n) + ': errors '
                + ', '.join(k + '=' + format(v, '.3e') for k, v in row.errors.items()))
    return row


def eoc_study(case: ManufacturedCase, config: MethodConfig, levels, neumann=(),
              threads: int | None = None) -> ErrorReport:
    """
    Errors on the structured meshes n = levels (uniformly refined) and their convergence orders.
    :raises ConfigError: on fewer than 3 levels
    """
    levels = sorted(levels)
    if len(levels) < 3:
        logger.error('An EOC study needs at least 3 levels, got ' + str(levels))
        raise ConfigError('An EOC study needs at least 3 levels, got ' + str(levels))
    results = fan_out({n: partial(_error_job, case, config, n, tuple(neumann)) for n in levels}, threads)
    return ErrorReport(case.name, config.name, config.infsup_regime, [row for _, row in results])


"""
Data dual norms and stability
"""


def data_norms(spaces: Spaces, data: ProblemData) -> dict[str, float]:
    """
    Discrete dual norms of f, g_D, g_N in the regime norms; the two components of g_D and g_N are summed.
    In the divergence regime ||f|| is the L2 norm.
    """
    grams = assemble_norm_grams(spaces, data=data)
    n_p, _, n_u, _ = spaces.dims
    flux_p, flux_pc = grams.flux[:n_p, :n_p], grams.flux[n_p:, n_p:]
    scalar_u, scalar_uc = grams.scalar[:n_u, :n_u], grams.scalar[n_u:, n_u:]
    f_only = rhs_parts(spaces, replace(data, g_d=zero_function, g_n=zero_function))
    g_d_only = rhs_parts(spaces, replace(data, f=zero_function, g_n=zero_function))
    g_n_only = rhs_parts(spaces, replace(data, f=zero_function, g_d=zero_function))
    if spaces.config.infsup_regime == Regime.GRAD:
        f_norm = dual_norm(f_only.u, scalar_u)
    else:
        vol = spaces.volume
        f_norm = float(np.sqrt(np.sum(vol.weights * np.asarray(data.f(vol.points)) ** 2)))
    return {'f': f_norm,
            'g_d': dual_norm(g_d_only.p, flux_p) + dual_norm(g_d_only.pcheck, flux_pc),
            'g_n': dual_norm(g_n_only.u, scalar_u) + dual_norm(g_n_only.ucheck, scalar_uc)}


def solution_norm(solution: SolutionFields, data: ProblemData | None = None) -> float:
    """
    Sum of the four regime norms of a discrete solution.
    """
    spaces = solution.spaces
    grams = assemble_norm_grams(spaces, data=data)
    n_p, _, n_u, _ = spaces.dims
    blocks = ((grams.flux[:n_p, :n_p], solution.p), (grams.flux[n_p:, n_p:], solution.pcheck),
              (grams.scalar[:n_u, :n_u], solution.u), (grams.scalar[n_u:, n_u:], solution.ucheck))
    return float(sum(np.sqrt(max(x @ (gram @ x), 0.0)) for gram, x in blocks if len(x)))


def _stability_job(case: ManufacturedCase, config: MethodConfig, rho: float, n: int, neumann) -> dict:
    config = config.with_rho(rho)
    spaces = build_spaces(build_mesh(n, neumann), config)
    data = case.problem_data()
    solution, _ = solve(assemble_system(spaces, data), data, config.solve)
    norms = data_norms(spaces, data)
    lhs, rhs = solution_norm(solution, data), sum(norms.values())
    return {'rho': rho, 'level': n, 'h': spaces.mesh.h, 'dofs': int(sum(spaces.dims)), 'solution_norm': lhs,
            'data_norm': rhs, 'constant': lhs / rhs if rhs > 0 else np.nan}


def stability_study(case: ManufacturedCase, config: MethodConfig, levels, rhos, neumann=(),
                    threads: int | None = None) -> pd.DataFrame:
    """
    Ratio of the solution norm to the data norm over a (rho, level) sweep.
    """
    jobs = {(rho, n): partial(_stability_job, case, config, rho, n, tuple(neumann)) for rho in rhos for n in levels}
    frame = pd.DataFrame([row for _, row in fan_out(jobs, threads)])
    logger.info('Stability constants of ' + config.name + ' within ' + format(stability_spread(frame), '.3f')
                + ' of their median')
    return frame


def stability_spread(frame: pd.DataFrame) -> float:
    """
    Largest relative deviation of the stability constants from their median.
    """
    constants = frame['constant'].to_numpy(dtype=float)
    median = np.median(constants)
    return float(np.max(np.abs(constants / median - 1.0)))


"""
Quasi-optimality
"""


def best_approximation(spaces: Spaces, case: ManufacturedCase) -> SolutionFields:
    """
    Best approximation of (p, u) in Q_h x V_h in the regime norms (zero check fields).
    """
    config = spaces.config
    data = case.problem_data()
    grams = assemble_norm_grams(spaces, data=data)
    vol = spaces.volume
    w, x = vol.weights, vol.points
    n_p, _, n_u, _ = spaces.dims
    best = SolutionFields.zeros(spaces)
    if config.infsup_regime == Regime.GRAD:
        best.p = spaces.project_cells(FieldKind.P, case.p, c=data.c)
        b = np.einsum('cq,cqi,cqbi->cb', w, case.grad_u(x), vol.grad_u).ravel()
        if spaces.pcheck.ndofs:
            b += jump_moments(spaces, FieldKind.PCHECK).T @ (exact_jump_moments(spaces, FieldKind.PCHECK, case)
                                                             * _edge_weights(spaces, FieldKind.PCHECK, -1))
        best.u = solve_direct(grams.scalar[:n_u, :n_u], b).x
    else:
        best.u = spaces.project_cells(FieldKind.U, case.u)
        b = np.einsum('cq,cqi,cqij,cqbj->cb', w, case.p(x), data.c(x), vol.q).ravel() \
            + np.einsum('cq,cq,cqb->cb', w, case.div_p(x), vol.div_q).ravel()
        if spaces.ucheck.ndofs:
            b += jump_moments(spaces, FieldKind.UCHECK).T @ (exact_jump_moments(spaces, FieldKind.UCHECK, case)
                                                             * _edge_weights(spaces, FieldKind.UCHECK, -1))
        best.p = solve_direct(grams.flux[:n_p, :n_p], b).x
    return best


def _quasi_job(case: ManufacturedCase, config: MethodConfig, n: int, neumann) -> dict:
    spaces = build_spaces(build_mesh(n, neumann), config)
    data = case.problem_data()
    solution, _ = solve(assemble_system(spaces, data), data, config.solve)
    error = error_norms(solution, case, config, level=n).total
    best = error_norms(best_approximation(spaces, case), case, config, level=n).total
    return {'level': n, 'h': spaces.mesh.h, 'dofs': int(sum(spaces.dims)), 'error': error, 'best': best,
            'ratio': error / best if best > 0 else np.nan}


def quasi_optimality(case: ManufacturedCase, config: MethodConfig, levels, neumann=(),
                     threads: int | None = None) -> pd.DataFrame:
    """
    Error sum against the best-approximation error in the same norms, per level.
    """
    jobs = {n: partial(_quasi_job, case, config, n, tuple(neumann)) for n in sorted(levels)}
    return pd.DataFrame([row for _, row in fan_out(jobs, threads)])


"""
Inf-sup constants
"""


def infsup_at(config: MethodConfig, n: int, neumann=()) -> InfSupReport:
    mesh = build_mesh(n, neumann)
    spaces = build_spaces(mesh, config)
    system = assemble_system(spaces, ProblemData())
    grams = assemble_norm_grams(spaces)
    return infsup_constant(system.matrix, grams.block, regime=config.infsup_regime.value, rho=config.rho, h=mesh.h,
                           preset=config.name, extra={'level': n})


def infsup_sweep(config: MethodConfig, levels, rhos, neumann=(), threads: int | None = None) -> list[InfSupReport]:
    """
    Inf-sup constants over the rho values and mesh levels, sorted by (rho, level).
    """
    jobs = {(rho, n): partial(infsup_at, config.with_rho(rho), n, tuple(neumann)) for rho in rhos for n in levels}
    reports = [report for _, report in fan_out(jobs, threads)]
    logger.info('Inf-sup sweep of ' + config.name + ': beta in [' + format(min(r.beta for r in reports), '.4e')
                + ', ' + format(max(r.beta for r in reports), '.4e') + ']')
    return reports


def infsup_frame(reports: list[InfSupReport]) -> pd.DataFrame:
    return pd.DataFrame({'rho': [r.rho for r in reports], 'level': [r.extra.get('level') for r in reports],
                         'h': [r.h for r in reports], 'dofs': [r.dofs for r in reports],
                         'beta': [r.beta for r in reports], 'lambda_min': [r.lambda_min for r in reports],
                         'lambda_max': [r.lambda_max for r in reports]})


def infsup_ratio(reports: list[InfSupReport]) -> float:
    betas = [r.beta for r in reports]
    return max(betas) / min(betas)


"""
Limits rho -> 0
"""


@dataclass(frozen=True)
class LimitRow:
    rho: float
    distance: float
    flux_distance: float
    scalar_distance: float
    data_norm: float
    residual: float
    noise_floor: float

    @property
    def above_noise(self) -> bool:
        return self.distance > self.noise_floor


@dataclass
class LimitReport:
    reference: str
    case: str
    preset: str
    level: int
    rows: list[LimitRow] = field(default_factory=list)

    def __repr__(self) -> str:
        return '<LimitReport ' + self.reference + ' ' + self.preset + ' slope=' + format(self.slope, '.3f') + '>'

    @property
    def fitted_rows(self) -> list[LimitRow]:
        return [row for row in self.rows if row.above_noise]

    @property
    def slope(self) -> float:
        """
        Least-squares slope of log distance against log rho over the points above the noise floor.
        """
        rows = self.fitted_rows
        if len(rows) < Constants.LIMIT_MIN_POINTS.value:
            return float('nan')
        return float(np.polyfit(np.log([r.rho for r in rows]), np.log([r.distance for r in rows]), 1)[0])

    @property
    def monotone(self) -> bool:
        """
        Distances do not increase as rho decreases, up to the noise floor.
        """
        rows = sorted(self.fitted_rows, key=lambda r: -r.rho)
        return all(b.distance <= a.distance * (1.0 + 1e-8) for a, b in zip(rows, rows[1:]))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({'rho': [r.rho for r in self.rows], 'distance': [r.distance for r in self.rows],
                             'flux_distance': [r.flux_distance for r in self.rows],
                             'scalar_distance': [r.scalar_distance for r in self.rows],
                             'data_norm': [r.data_norm for r in self.rows],
                             'residual': [r.residual for r in self.rows],
                             'above_noise': [r.above_noise for r in self.rows]})


def _c_norm(w: np.ndarray, c: np.ndarray, values: np.ndarray) -> float:
    return float(np.sqrt(max(np.sum(w * np.einsum('cqi,cqij,cqj->cq', values, c, values)), 0.0)))


def primal_distance(solution: SolutionFields, reference: PrimalReference, data: ProblemData) -> tuple[float, float]:
    """
    ||p_h - p^c||_{0,c} and (||grad_h(u_h - u^c)||^2 + sum_e h_e^-1 ||[u_h - u^c]_e||^2)^(1/2).
    """
    spaces = solution.spaces
    mesh = spaces.mesh
    vol, tables = spaces.volume, spaces.edge
    cells = np.arange(mesh.n_cells)
    dp = spaces.cell_values(FieldKind.P, solution.p) - reference.evaluate_p(cells, vol.points)
    dgrad = spaces.cell_gradients(solution.u) - reference.evaluate_grad_u(cells, vol.points)
    coefficients = solution.u.reshape(mesh.n_cells, -1)
    plus, minus = mesh.edge_cells[:, 0], mesh.edge_cells[:, 1]
    inner = minus >= 0
    d_plus = np.einsum('eqb,eb->eq', tables.u_plus, coefficients[plus]) - reference.evaluate_u(plus, tables.points)
    d_minus = np.zeros_like(d_plus)
    if np.any(inner):
        d_minus[inner] = np.einsum('eqb,eb->eq', tables.u_minus[inner], coefficients[minus[inner]]) \
            - reference.evaluate_u(minus[inner], tables.points[inner])
    jump = dg_average_jump(mesh, np.arange(mesh.n_edges), d_plus, d_minus).jump
    jump_sq = np.sum(tables.weights * jump ** 2 / mesh.edge_lengths[:, None])
    scalar = np.sqrt(max(np.sum(vol.weights * np.sum(dgrad ** 2, axis=-1)) + jump_sq, 0.0))
    return _c_norm(vol.weights, data.c(vol.points), dp), float(scalar)


def mixed_distance(solution: SolutionFields, reference: MixedReference, data: ProblemData) -> tuple[float, float]:
    """
    ||p_h - p^c||_{0,c} + ||div_h(p_h - p^c)||_0 and ||u_h - u^c||_0.
    """
    spaces = solution.spaces
    vol = spaces.volume
    cells = np.arange(spaces.mesh.n_cells)
    dp = spaces.cell_values(FieldKind.P, solution.p) - reference.evaluate_p(cells, vol.points)
    ddiv = spaces.cell_divergence(solution.p) - reference.divergence(cells)[:, None]
    du = spaces.cell_values(FieldKind.U, solution.u) - reference.evaluate_u(cells, vol.points)
    flux = _c_norm(vol.weights, data.c(vol.points), dp) + np.sqrt(max(np.sum(vol.weights * ddiv ** 2), 0.0))
    return float(flux), float(np.sqrt(max(np.sum(vol.weights * du ** 2), 0.0)))


def _boundary_data_size(spaces: Spaces, func, tag: EdgeTag) -> float:
    edges = np.flatnonzero(spaces.mesh.edge_tags == tag)
    if len(edges) == 0:
        return 0.0
    return float(np.abs(func(spaces.edge.points[edges])).max())


def check_limit_setup(spaces: Spaces, case: ManufacturedCase, reference: str) -> None:
    """
    :raises ConditionViolation: if the limit theorem's space conditions or homogeneous data fail
    :raises ConfigError: if no conforming reference exists for the spaces
    """
    config = spaces.config
    if reference == 'primal':
        conditions.check_primal_limit(spaces, strict=True)
        if config.q_family != 'vector' or config.k_u not in (1, 2):
            logger.error('Primal reference needs vector fluxes and V_h of degree 1 or 2')
            raise ConfigError('Primal reference needs vector fluxes and V_h of degree 1 or 2')
        size, name = _boundary_data_size(spaces, case.g_d, EdgeTag.DIRICHLET), 'g_D = 0'
    elif reference == 'mixed':
        conditions.check_mixed_limit(spaces, strict=True)
        if config.q_family != 'rt' or config.k_p != 0 or config.k_u != 0:
            logger.error('Mixed reference is RT0 x P0 only, got ' + repr(config))
            raise ConfigError('Mixed reference is RT0 x P0 only')
        size, name = _boundary_data_size(spaces, case.g_n, EdgeTag.NEUMANN), 'g_N = 0'
    else:
        logger.error('Unknown limit reference: ' + str(reference))
        raise ConfigError('Unknown limit reference: ' + str(reference))
    if size > 1e-12:
        logger.error('Limit to the ' + reference + ' method needs ' + name + ', max |data| = ' + format(size, '.3e'))
        raise ConditionViolation(name, size)


def _limit_job(case: ManufacturedCase, config: MethodConfig, mesh: Mesh2D, rho: float, reference: str,
               conforming) -> LimitRow:
    config = config.with_rho(rho)
    spaces = build_spaces(mesh, config)
    data = case.problem_data()
    solution, report = solve(assemble_system(spaces, data), data, config.solve)
    norms = data_norms(spaces, data)
    if reference == 'primal':
        flux, scalar = primal_distance(solution, conforming, data)
        data_norm = norms['f'] + norms['g_n']
    else:
        flux, scalar = mixed_distance(solution, conforming, data)
        data_norm = norms['f'] + norms['g_d']
    noise = Constants.LIMIT_NOISE_FACTOR.value * max(report.residual, conforming.report.residual,
                                                     np.finfo(float).eps) * max(data_norm, 1.0)
    logger.info('Limit to ' + reference + ', rho=' + format(rho, 'g') + ': distance ' + format(flux + scalar, '.4e'))
    return LimitRow(rho, flux + scalar, flux, scalar, data_norm, report.residual, noise)


def limit_study(case: ManufacturedCase, config: MethodConfig, rhos, reference: str, level: int, neumann=(),
                threads: int | None = None) -> LimitReport:
    """
    Distance of the four-field solution to the conforming primal (rho -> 0 in the gradient regime) or mixed
    (divergence regime) solution for each rho.
    :param reference: 'primal' or 'mixed'
    """
    mesh = build_mesh(level, neumann)
    check_limit_setup(build_spaces(mesh, config), case, reference)
    if reference == 'primal':
        conforming = conforming_primal_solve(mesh, case, config.k_u, config.k_p)
    else:
        conforming = conforming_mixed_solve(mesh, case)
    jobs = {-rho: partial(_limit_job, case, config, mesh, rho, reference, conforming) for rho in rhos}
    report = LimitReport(reference, case.name, config.name, level, [row for _, row in fan_out(jobs, threads)])
    logger.info('Limit to ' + reference + ' of ' + config.name + ': slope ' + format(report.slope, '.3f') + ' over '
                + str(len(report.fitted_rows)) + ' points')
    if len(report.fitted_rows) < Constants.LIMIT_MIN_POINTS.value:
        logger.warning('Fewer than ' + str(Constants.LIMIT_MIN_POINTS.value) + ' points above the noise floor')
    return report


"""
Method zoo
"""


def describe_spaces(config: MethodConfig) -> str:
    def degree(k):
        return '{0}' if k is None else str(k)

    flux = ('RT' if config.q_family == 'rt' else 'P') + str(config.k_p)
    return flux + ' / ' + degree(config.k_pcheck) + ' / ' + str(config.k_u) + ' / ' + degree(config.k_ucheck)


def elimination_gap(spaces: Spaces, data: ProblemData, path: str | None = None) -> tuple[float, int]:
    """
    Relative max difference of (p_h, u_h) between the full solve and the given elimination path.
    :return: (gap, number of unknowns of the reduced system)
    """
    system = assemble_system(spaces, data)
    full, _ = solve(system, data, 'full')
    reduced = reduce(system, data, path or spaces.config.solve)
    eliminated, _ = reduced.solve()
    reference = np.concatenate([full.p, full.u])
    diff = np.concatenate([eliminated.p, eliminated.u]) - reference
    scale = max(np.abs(reference).max(), 1e-300)
    return float(np.abs(diff).max() / scale), reduced.size


def _zoo_job(name: str, k: int, level: int, rho: float, case: ManufacturedCase) -> dict:
    config = MethodConfig.from_preset(name, k, rho=rho)
    spaces = build_spaces(build_mesh(level), config)
    regime_ok = conditions.check_regime(spaces).ok
    report = infsup_at(config, level)
    gap, reduced_dofs = elimination_gap(spaces, case.problem_data())
    logger.info('Zoo ' + config.name + ': beta=' + format(report.beta, '.4e') + ', elimination gap '
                + format(gap, '.2e'))
    return {'preset': config.name, 'label': config.label, 'spaces': describe_spaces(config),
            'regime': config.infsup_regime.value, 'solve': config.solve, 'dofs': report.dofs,
            'reduced_dofs': reduced_dofs, 'beta': report.beta, 'conditions_ok': regime_ok, 'elimination_gap': gap}


def zoo(case: ManufacturedCase, k: int = 0, level: int = 2, rho: float = Constants.DEFAULT_RHO.value,
        threads: int | None = None) -> pd.DataFrame:
    """
    One row per named method: its claimed regime, inf-sup constant and elimination equivalence.
    """
    jobs = {name: partial(_zoo_job, name, k, level, rho, case) for name in table_presets()}
    rows = dict(fan_out(jobs, threads))
    return pd.DataFrame([rows[name] for name in table_presets()])
