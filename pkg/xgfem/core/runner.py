import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from xgfem.core import conditions, verify, vtk
from xgfem.core.cases import ManufacturedCase, get_case
from xgfem.core.config import ExperimentConfig, MethodConfig, Regime
from xgfem.core.constants import Constants
from xgfem.core.spaces import build_spaces
from xgfem.core.xg_debug import logger

"""
Experiment commands: solve, eoc, infsup, limit, zoo
"""

DEFAULT_LIMIT_RHOS = tuple(2.0 ** -j for j in range(2, 9))


@dataclass
class RunResult:
    command: str
    frames: dict[str, pd.DataFrame] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)

    def __repr__(self) -> str:
        return '<RunResult ' + self.command + ': ' + ('ok' if self.ok else str(len(self.failures)) + ' failures') + '>'

    @property
    def ok(self) -> bool:
        return not self.failures


def frame_to_markdown(frame: pd.DataFrame) -> str:
    def cell(value) -> str:
        if isinstance(value, (float, np.floating)):
            return format(float(value), '.4e')
        return str(value)

    lines = ['| ' + ' | '.join(str(c) for c in frame.columns) + ' |',
             '|' + '---|' * len(frame.columns)]
    lines += ['| ' + ' | '.join(cell(v) for v in row) + ' |' for row in frame.itertuples(index=False)]
    return '\n'.join(lines) + '\n'


def write_artifacts(result: RunResult, config: ExperimentConfig, out_dir: str) -> None:
    for name, frame in result.frames.items():
        path = os.path.join(out_dir, name + '.csv')
        frame.to_csv(path, index=False, float_format=Constants.CSV_FLOAT_FORMAT.value)
        result.artifacts.append(path)
    lines = ['# ' + config.command + ' (' + config.case + ', ' + (config.preset or 'custom') + ')', '']
    for name, frame in result.frames.items():
        lines += ['## ' + name, '', frame_to_markdown(frame)]
    lines += ['## acceptance', '']
    lines += ['* ' + failure for failure in result.failures] or ['All checks passed.']
    path = os.path.join(out_dir, 'summary.md')
    with open(path, 'w', encoding='utf-8') as f:
        f.write('\n'.join(lines) + '\n')
    result.artifacts.append(path)


def check_method(config: ExperimentConfig, method: MethodConfig) -> None:
    """
    Verify the claimed stability regime on the coarsest mesh before any solve.
    :raises ConditionViolation: naming the first violated condition
    """
    if method.regime == Regime.MANUAL:
        logger.warning(method.name + ' uses manual penalties, stability conditions not checked')
        return
    spaces = build_spaces(verify.build_mesh(min(config.levels), config.neumann), method)
    conditions.check_regime(spaces, strict=True)


def run_solve(config: ExperimentConfig, method: MethodConfig, case: ManufacturedCase, out_dir: str,
              threads: int | None) -> RunResult:
    result = RunResult('solve')
    report = verify.ErrorReport(case.name, method.name, method.infsup_regime)
    for n in sorted(config.levels):
        solution, solve_report = verify.solve_case(case, method, n, config.neumann)
        report.rows.append(verify.error_norms(solution, case, method, level=n))
        logger.info('Solved ' + method.name + ' on n=' + str(n) + ', residual ' + format(solve_report.residual, '.2e'))
        if config.vtk:
            path = os.path.join(out_dir, 'solution_n' + str(n) + '.vtu')
            vtk.write_solution(path, solution, case)
            result.artifacts.append(path)
    result.frames['solve'] = report.frame()
    if 'exactness_tol' in config.acceptance:
        tol = config.acceptance['exactness_tol']
        for row in report.rows:
            for name, error in row.errors.items():
                if error > tol:
                    result.failures.append('Error ' + name + ' on n=' + str(row.level) + ' is '
                                           + format(error, '.3e') + ' > ' + format(tol, '.1e'))
    return result


def run_eoc(config: ExperimentConfig, method: MethodConfig, case: ManufacturedCase, out_dir: str,
            threads: int | None) -> RunResult:
    result = RunResult('eoc')
    report = verify.eoc_study(case, method, config.levels, config.neumann, threads)
    result.frames['eoc'] = report.frame()
    result.frames['quasi'] = verify.quasi_optimality(case, method, config.levels, config.neumann, threads)
    tolerance = config.acceptance_value('eoc_tolerance', Constants.EOC_TOLERANCE)
    result.failures += verify.eoc_failures(report, verify.expected_rate(method), tolerance)
    return result


def run_infsup(config: ExperimentConfig, method: MethodConfig, case: ManufacturedCase, out_dir: str,
               threads: int | None) -> RunResult:
    result = RunResult('infsup')
    rhos = config.rhos or [config.rho]
    reports = verify.infsup_sweep(method, config.levels, rhos, config.neumann, threads)
    result.frames['infsup'] = verify.infsup_frame(reports)
    ratio_max = config.acceptance_value('infsup_ratio_max', Constants.INFSUP_RATIO_MAX)
    beta_min = config.acceptance_value('beta_min', Constants.BETA_MIN)
    ratio = verify.infsup_ratio(reports)
    if not ratio < ratio_max:
        result.failures.append('Inf-sup constants vary by ' + format(ratio, '.3f') + ', limit ' + format(ratio_max, 'g'))
    smallest = min(r.beta for r in reports)
    if not smallest > beta_min:
        result.failures.append('Smallest inf-sup constant ' + format(smallest, '.3e') + ' <= ' + format(beta_min, 'g'))
    if 'stability_spread_max' in config.acceptance:
        frame = verify.stability_study(case, method, config.levels, rhos, config.neumann, threads)
        result.frames['stability'] = frame
        spread = verify.stability_spread(frame)
        if not spread <= config.acceptance['stability_spread_max']:
            result.failures.append('Stability constants deviate by ' + format(spread, '.3f') + ' from their median')
    return result


def run_limit(config: ExperimentConfig, method: MethodConfig, case: ManufacturedCase, out_dir: str,
              threads: int | None) -> RunResult:
    result = RunResult('limit')
    reference = config.reference or ('primal' if method.infsup_regime == Regime.GRAD else 'mixed')
    rhos = config.rhos or list(DEFAULT_LIMIT_RHOS)
    report = verify.limit_study(case, method, rhos, reference, max(config.levels), config.neumann, threads)
    result.frames['limit'] = report.frame()
    slope_min = config.acceptance_value('slope_min', Constants.LIMIT_SLOPE_MIN)
    if len(report.fitted_rows) < Constants.LIMIT_MIN_POINTS.value:
        result.failures.append('Only ' + str(len(report.fitted_rows)) + ' distances above the noise floor')
    elif not report.slope >= slope_min:
        result.failures.append('Limit slope ' + format(report.slope, '.3f') + ' < ' + format(slope_min, 'g'))
    if not report.monotone:
        logger.warning('Limit distances are not monotone in rho')
    return result


def run_zoo(config: ExperimentConfig, method: MethodConfig | None, case: ManufacturedCase, out_dir: str,
            threads: int | None) -> RunResult:
    result = RunResult('zoo')
    frame = verify.zoo(case, config.k, min(config.levels), config.rho, threads)
    result.frames['zoo'] = frame
    beta_min = config.acceptance_value('beta_min', Constants.BETA_MIN)
    gap_max = config.acceptance_value('elimination_tol', Constants.ELIMINATION_TOL)
    for row in frame.itertuples(index=False):
        if row.label != 'not proved' and not row.beta > beta_min:
            result.failures.append(row.preset + ': inf-sup constant ' + format(row.beta, '.3e'))
        if not row.elimination_gap <= gap_max:
            result.failures.append(row.preset + ': elimination differs by ' + format(row.elimination_gap, '.3e'))
    return result


COMMAND_RUNNERS = {'solve': run_solve, 'eoc': run_eoc, 'infsup': run_infsup, 'limit': run_limit, 'zoo': run_zoo}


def run(config: ExperimentConfig, out_dir: str, threads: int | None = None) -> RunResult:
    """
    Run one experiment and write its CSV tables and summary.md to out_dir.
    :raises ConfigError, ConditionViolation: before any artifact is written
    :raises SolverError: on a failed solve
    """
    threads = threads or config.threads
    case = get_case(config.case)
    method = None
    if config.command != 'zoo':
        method = config.method_config()
        if config.command != 'limit':
            check_method(config, method)
    os.makedirs(out_dir, exist_ok=True)
    logger.info('Running ' + config.command + ' on ' + case.name + ' with ' + (repr(method) if method else 'all presets'))
    result = COMMAND_RUNNERS[config.command](config, method, case, out_dir, threads)
    write_artifacts(result, config, out_dir)
    for failure in result.failures:
        logger.warning('Acceptance check failed: ' + failure)
    logger.info(repr(result))
    return result
