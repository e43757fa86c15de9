import argparse
import sys

from xgfem.core.config import COMMANDS, load_config
from xgfem.core.exceptions import (AssemblyError, ConditionViolation, ConfigError, EliminationError, MeshError,
                                   QuadratureError, SolverError)
from xgfem.core.runner import run
from xgfem.core.xg_debug import logger

EXIT_OK, EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='xg', description='Extended Galerkin four-field experiments')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True, help='JSON experiment file')
    parser.add_argument('--out', required=True, help='output directory for CSV tables and summary.md')
    parser.add_argument('--threads', type=int, default=None, help='worker threads (capped by XG_THREADS)')
    parser.add_argument('--log-level', default=None, help='console log level')
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    if args.log_level:
        logger.set_console_level(args.log_level)
    try:
        config = load_config(args.config, args.command)
        result = run(config, args.out, args.threads)
    except (ConfigError, ConditionViolation, MeshError, QuadratureError, AssemblyError, EliminationError) as e:
        logger.error(type(e).__name__ + ': ' + str(e))
        return EXIT_CONFIG
    except SolverError as e:
        logger.error('Solver failure: ' + str(e))
        return EXIT_SOLVER
    return EXIT_OK if result.ok else EXIT_ACCEPTANCE


if __name__ == '__main__':
    sys.exit(main())
