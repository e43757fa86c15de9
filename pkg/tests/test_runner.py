import json
import os

import pandas as pd
import pytest

from xgfem.__main__ import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, build_parser, main
from xgfem.core.config import ExperimentConfig, load_config
from xgfem.core.exceptions import ConditionViolation
from xgfem.core.runner import frame_to_markdown, run

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs')


def write_config(tmp_path, content: dict) -> str:
    path = tmp_path / 'experiment.json'
    path.write_text(json.dumps(content))
    return str(path)


def test_markdown():
    frame = pd.DataFrame({'level': [2, 4], 'err': [0.5, 0.125]})
    assert frame_to_markdown(frame).splitlines() == [
        '| level | err |', '|---|---|', '| 2 | 5.0000e-01 |', '| 4 | 1.2500e-01 |']


class TestRun:

    def test_exact_solve(self, tmp_path):
        config = load_config(os.path.join(CONFIG_DIR, 'solve_exact_c2.json'), 'solve')
        result = run(config, str(tmp_path / 'out'))
        assert result.ok
        assert sorted(os.path.basename(path) for path in result.artifacts) == ['solve.csv', 'summary.md']
        frame = pd.read_csv(tmp_path / 'out' / 'solve.csv')
        assert list(frame['level']) == [2, 4]
        assert (frame[['err_p', 'err_pcheck', 'err_u', 'err_ucheck']] <= 1e-10).all().all()
        assert 'All checks passed.' in (tmp_path / 'out' / 'summary.md').read_text()

    def test_deterministic_tables(self, tmp_path):
        config = load_config(os.path.join(CONFIG_DIR, 'solve_exact_c2.json'), 'solve')
        run(config, str(tmp_path / 'a'), threads=1)
        run(config, str(tmp_path / 'b'), threads=2)
        assert (tmp_path / 'a' / 'solve.csv').read_bytes() == (tmp_path / 'b' / 'solve.csv').read_bytes()

    def test_vtk_output(self, tmp_path):
        config = ExperimentConfig(command='solve', case='C2', preset='div-rt', levels=[2], vtk=True)
        result = run(config, str(tmp_path))
        assert os.path.exists(tmp_path / 'solution_n2.vtu')
        assert str(tmp_path / 'solution_n2.vtu') in result.artifacts

    def test_acceptance_failure(self, tmp_path):
        config = ExperimentConfig(command='solve', case='C1', preset='grad', levels=[2],
                                  acceptance={'exactness_tol': 1e-10})
        result = run(config, str(tmp_path))
        assert not result.ok
        assert result.failures[0].startswith('Error p on n=2')
        assert '* Error p on n=2' in (tmp_path / 'summary.md').read_text()

    def test_violation_before_output(self, tmp_path):
        config = ExperimentConfig(command='eoc', case='C1', levels=[2, 4, 8],
                                  method={'k_p': 0, 'k_u': 2, 'k_pcheck': 0, 'k_ucheck': 0})
        with pytest.raises(ConditionViolation) as info:
            run(config, str(tmp_path / 'out'))
        assert info.value.condition == 'grad_h V_h in Q_h'
        assert not os.path.exists(tmp_path / 'out')

    def test_eoc(self, tmp_path):
        config = ExperimentConfig(command='eoc', case='C1', preset='div-rt', levels=[2, 4, 8])
        result = run(config, str(tmp_path), threads=2)
        assert set(result.frames) == {'eoc', 'quasi'}
        assert len(result.frames['quasi']) == 3

    def test_infsup(self, tmp_path):
        config = ExperimentConfig(command='infsup', case='C1', preset='grad', levels=[1, 2], rhos=[1.0, 0.5],
                                  acceptance={'infsup_ratio_max': 1e6, 'stability_spread_max': 1e6})
        result = run(config, str(tmp_path))
        assert result.ok
        assert len(result.frames['infsup']) == 4
        assert set(result.frames['stability']['rho']) == {0.5, 1.0}


class TestCommandLine:

    def test_parser(self):
        args = build_parser().parse_args(['solve', '--config', 'a.json', '--out', 'out', '--threads', '2'])
        assert (args.command, args.config, args.out, args.threads) == ('solve', 'a.json', 'out', 2)

    def test_success(self, tmp_path):
        out = tmp_path / 'out'
        code = main(['solve', '--config', os.path.join(CONFIG_DIR, 'solve_exact_c2.json'), '--out', str(out),
                     '--log-level', 'WARNING'])
        assert code == EXIT_OK
        assert (out / 'summary.md').exists()

    def test_acceptance_exit_code(self, tmp_path):
        path = write_config(tmp_path, {'case': 'C1', 'preset': 'grad', 'levels': [2],
                                       'acceptance': {'exactness_tol': 1e-10}})
        assert main(['solve', '--config', path, '--out', str(tmp_path / 'out')]) == EXIT_ACCEPTANCE

    def test_malformed_config(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"case": "C1", ')
        out = tmp_path / 'out'
        assert main(['solve', '--config', str(path), '--out', str(out)]) == EXIT_CONFIG
        assert not out.exists()

    def test_violation_exit_code(self, tmp_path):
        path = write_config(tmp_path, {'case': 'C1', 'levels': [2],
                                       'method': {'k_p': 0, 'k_u': 2, 'k_pcheck': 0, 'k_ucheck': 0}})
        out = tmp_path / 'out'
        assert main(['solve', '--config', path, '--out', str(out)]) == EXIT_CONFIG
        assert not out.exists()

    def test_bad_arguments(self):
        assert main(['plot', '--config', 'a.json', '--out', 'out']) == EXIT_CONFIG
