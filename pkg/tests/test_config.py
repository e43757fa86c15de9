import json

import numpy as np
import pytest

from xgfem.core.config import ExperimentConfig, MethodConfig, Regime, load_config, table_presets
from xgfem.core.constants import Constants
from xgfem.core.exceptions import ConfigError


class TestPresets:

    @pytest.mark.parametrize('name, k, degrees', [
        ('grad', 0, (0, 0, 1, 0)),
        ('grad', 2, (2, 2, 3, 2)),
        ('hdg-div', 1, (2, 2, 1, 2)),
        ('mixed-dg', 0, (1, None, 0, 0)),
        ('ldg', 1, (1, 1, 2, None)),
        ('primal-limit', 1, (0, 1, 1, 0)),
    ])
    def test_degrees(self, name, k, degrees):
        config = MethodConfig.from_preset(name, k)
        assert (config.k_p, config.k_pcheck, config.k_u, config.k_ucheck) == degrees
        assert config.name == name + '-k' + str(k)

    def test_suffix(self):
        config = MethodConfig.from_preset('div-rt-k1')
        assert config.q_family == 'rt' and config.k_p == 1 and config.regime == Regime.DIV

    def test_overrides(self):
        config = MethodConfig.from_preset('hdg-grad', 0, rho=0.1, solve='full')
        assert config.rho == 0.1 and config.solve == 'full'

    def test_manual_penalties(self):
        config = MethodConfig.from_preset('hdg-kkk', 0)
        assert config.infsup_regime == Regime.GRAD
        tau, eta = config.penalties(np.array([0.5, 2.0]))
        assert np.array_equal(tau, [1.0, 1.0]) and np.array_equal(eta, [0.25, 0.25])

    def test_table(self):
        names = table_presets()
        assert 'hdg-grad' in names and 'wg' in names
        assert 'grad' not in names and 'primal-limit' not in names

    @pytest.mark.parametrize('args', [('nitsche', 0), ('grad', None), ('primal-limit', 0)])
    def test_invalid(self, args):
        with pytest.raises(ConfigError):
            MethodConfig.from_preset(*args)


class TestMethodConfig:

    def test_penalties(self):
        lengths = np.array([0.5, 0.25])
        tau, eta = MethodConfig(k_p=0, k_u=1, k_pcheck=0, k_ucheck=0, rho=2.0, c_eta=0.5).penalties(lengths)
        assert np.allclose(tau, [1.0, 2.0]) and np.allclose(eta, [0.5, 0.25])
        tau, eta = MethodConfig(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, regime='div', rho=2.0).penalties(lengths)
        assert np.allclose(tau, [1.0, 0.5]) and np.allclose(eta, [1.0, 2.0])

    def test_quadrature_degree(self):
        assert MethodConfig.from_preset('div-rt', 1).quadrature_degree == 2 * 2 + Constants.QUAD_EXTRA_DEGREE.value
        assert MethodConfig(k_p=0, k_u=0, k_pcheck=None, k_ucheck=None, quad_degree=7).quadrature_degree == 7

    @pytest.mark.parametrize('fields', [
        dict(k_p=-1, k_u=0, k_pcheck=0, k_ucheck=0),
        dict(k_p=0, k_u=0.5, k_pcheck=0, k_ucheck=0),
        dict(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, q_family='bdm'),
        dict(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, solve='cg'),
        dict(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, rho=0.0),
        dict(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, regime='manual', tau=1.0),
    ])
    def test_invalid(self, fields):
        with pytest.raises(ConfigError):
            MethodConfig(**fields)

    def test_unknown_regime(self):
        with pytest.raises(ValueError):
            MethodConfig(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, regime='curl')

    def test_to_dict(self):
        d = MethodConfig.from_preset('wg', 0).to_dict()
        assert d['regime'] == 'div' and d['k_ucheck'] == 1 and d['norm_regime'] is None


class TestLoadConfig:

    def write(self, tmp_path, content) -> str:
        path = tmp_path / 'experiment.json'
        path.write_text(content if isinstance(content, str) else json.dumps(content))
        return str(path)

    def test_method_block(self, tmp_path):
        path = self.write(tmp_path, {'case': 'C2', 'levels': [2, 4],
                                     'method': {'k_p': 1, 'k_u': 1, 'k_pcheck': 'none', 'k_ucheck': 0}})
        config = load_config(path, 'solve')
        assert config.command == 'solve'
        method = config.method_config()
        assert method.k_pcheck is None and method.k_ucheck == 0

    def test_preset_with_elimination(self, tmp_path):
        path = self.write(tmp_path, {'command': 'eoc', 'preset': 'hdg-grad', 'k': 1, 'rho': 0.5,
                                     'elimination': 'both'})
        method = load_config(path).method_config()
        assert method.solve == 'both' and method.rho == 0.5 and method.k_u == 2

    def test_acceptance(self, tmp_path):
        config = load_config(self.write(tmp_path, {'command': 'eoc', 'acceptance': {'eoc_tolerance': 0.3}}))
        assert config.acceptance_value('eoc_tolerance', Constants.EOC_TOLERANCE) == 0.3
        assert config.acceptance_value('slope_min', Constants.LIMIT_SLOPE_MIN) == 0.4

    @pytest.mark.parametrize('content', [
        '{"command": "solve", ',
        '[1, 2]',
        {'command': 'solve', 'levels': [2], 'colour': 'red'},
        {'command': 'eoc'},
        {'command': 'solve', 'acceptance': {'speed': 1}},
        {'command': 'solve', 'neumann': ['front']},
        {'command': 'solve', 'levels': []},
        {'command': 'solve', 'method': {'k_p': 0, 'k_u': 0, 'k_pcheck': 0, 'k_ucheck': 0, 'order': 3}},
    ])
    def test_invalid(self, tmp_path, content):
        with pytest.raises(ConfigError):
            config = load_config(self.write(tmp_path, content), 'solve')
            config.method_config()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / 'absent.json'), 'solve')

    def test_unknown_command(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(command='plot')
