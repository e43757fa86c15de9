import numpy as np
import pytest

from xgfem.core.config import MethodConfig
from xgfem.core.conditions import (check_div_conditions, check_grad_conditions, check_hybridizable,
                                   check_mixed_limit, check_primal_limit, check_regime, check_wg_phat,
                                   div_surjective)
from xgfem.core.exceptions import ConditionViolation
from xgfem.core.spaces import build_spaces


@pytest.fixture
def spaces_for(mesh2):
    def build(*args, **kwargs):
        if args:
            return build_spaces(mesh2, MethodConfig.from_preset(*args, **kwargs))
        return build_spaces(mesh2, MethodConfig(**kwargs))

    return build


class TestStability:

    @pytest.mark.parametrize('k', [0, 1, 2])
    def test_grad_preset(self, spaces_for, k):
        report = check_grad_conditions(spaces_for('grad', k))
        assert report.ok
        assert [check.name for check in report.checks] == [
            'Qcheck contains piecewise constants', 'grad_h V_h in Q_h', '{grad_h V_h}_e in Qcheck_h']

    @pytest.mark.parametrize('preset', ['div-rt', 'div-p'])
    @pytest.mark.parametrize('k', [0, 1])
    def test_div_presets(self, spaces_for, preset, k):
        assert check_div_conditions(spaces_for(preset, k)).ok

    def test_gradient_outside_flux_space(self, spaces_for):
        report = check_grad_conditions(spaces_for(k_p=0, k_u=2, k_pcheck=2, k_ucheck=0))
        assert not report.ok
        assert report.first_failure.name == 'grad_h V_h in Q_h'
        assert report.first_failure.residual > 1e-3

    def test_trivial_pcheck(self, spaces_for):
        report = check_grad_conditions(spaces_for(k_p=0, k_u=1, k_pcheck=None, k_ucheck=0))
        assert report.first_failure.name == 'Qcheck contains piecewise constants'

    def test_average_outside_pcheck(self, spaces_for):
        # {grad u} of P2 is linear on edges, P0 cannot hold it
        report = check_grad_conditions(spaces_for(k_p=1, k_u=2, k_pcheck=0, k_ucheck=0))
        assert report.first_failure.name == '{grad_h V_h}_e in Qcheck_h'

    def test_strict(self, spaces_for):
        with pytest.raises(ConditionViolation) as info:
            check_grad_conditions(spaces_for(k_p=0, k_u=2, k_pcheck=0, k_ucheck=0), strict=True)
        assert info.value.condition == 'grad_h V_h in Q_h'

    def test_regime_dispatch(self, spaces_for):
        assert check_regime(spaces_for('div-rt', 0)).title == 'divergence-based stability'
        assert check_regime(spaces_for('grad', 0)).title == 'gradient-based stability'

    def test_divergence_onto(self, spaces_for):
        assert div_surjective(spaces_for('div-rt', 1))
        assert not div_surjective(spaces_for(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0))

    def test_unstable_mixed_pair(self, spaces_for):
        report = check_div_conditions(spaces_for(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0, regime='div'))
        assert not report.ok


class TestLimits:

    @pytest.mark.parametrize('k', [1, 2])
    def test_primal(self, spaces_for, k):
        assert check_primal_limit(spaces_for('primal-limit', k)).ok

    def test_primal_needs_gradient_regime(self, spaces_for):
        report = check_primal_limit(spaces_for('div-p', 1))
        assert report.first_failure.name == 'gradient regime'

    def test_mixed(self, spaces_for):
        assert check_mixed_limit(spaces_for('mixed-limit', 0)).ok

    def test_mixed_needs_divergence_regime(self, spaces_for):
        assert not check_mixed_limit(spaces_for('grad', 0)).ok


class TestEliminationConditions:

    @pytest.mark.parametrize('preset', ['hdg-grad', 'hdg-div', 'hdg-rt', 'hdg-kkk'])
    def test_hybridizable(self, spaces_for, preset):
        assert check_hybridizable(spaces_for(preset, 0)).ok

    def test_penalty_product(self, spaces_for):
        report = check_hybridizable(spaces_for('hdg-grad', 0, c_eta=1.0))
        assert report.first_failure.name == 'tau eta = 1/4'
        assert np.isclose(report.first_failure.residual, 3.0)

    def test_trace_outside_ucheck(self, spaces_for):
        report = check_hybridizable(spaces_for('grad', 0))
        assert report.first_failure.name == 'V_h|_E in Vcheck_h'

    def test_wg(self, spaces_for):
        assert check_wg_phat(spaces_for('wg-mfem', 0)).ok
        with pytest.raises(ConditionViolation):
            check_wg_phat(spaces_for('wg-mfem', 0, c_eta=2.0), strict=True)
