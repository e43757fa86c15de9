import numpy as np
import pytest

from xgfem.core.cases import builtin_cases, case_consistency, get_case, unit_square_normal
from xgfem.core.exceptions import ConfigError


@pytest.mark.parametrize('case', builtin_cases(), ids=lambda case: case.name)
def test_consistency(case):
    result = case_consistency(case)
    assert result['grad_u'] <= 1e-6
    assert result['div_p'] <= 1e-6
    assert result['balance'] <= 1e-10


def test_names():
    assert [case.name for case in builtin_cases()] == ['C1', 'C2', 'C3']


def test_unknown_case():
    with pytest.raises(ConfigError):
        get_case('C9')


class TestPolynomialCase:

    def test_flux(self, c2):
        x = np.array([[0.2, 0.7], [1.0, 0.5]])
        assert np.allclose(c2.p(x), [[-1.1, -0.2], [-2.5, -1.0]])
        assert np.allclose(c2.f(x), -2.0)

    def test_neumann_data(self, c2):
        x = np.array([[1.0, 0.5], [0.5, 1.0], [0.0, 0.25]])
        # p.n on the right, top and left sides
        assert np.allclose(c2.g_n(x), [-2.5, -0.5, 0.25])


class TestSinusoidalCase:

    def test_vanishes_on_boundary(self, c1):
        t = np.linspace(0.0, 1.0, 11)
        for side in (np.stack([t, 0 * t], -1), np.stack([t, 0 * t + 1.0], -1), np.stack([0 * t, t], -1),
                     np.stack([0 * t + 1.0, t], -1)):
            assert np.all(np.abs(c1.g_d(side)) <= 1e-15)

    def test_source(self, c1):
        assert np.isclose(c1.f(np.array([0.5, 0.5])), 2.0 * np.pi ** 2)

    def test_variable_coefficient(self):
        c3 = get_case('C3')
        alpha = c3.alpha(np.array([[0.5, 0.0]]))
        assert np.allclose(alpha, [[[1.25, 0.0], [0.0, 1.0]]])


def test_boundary_normal():
    x = np.array([[0.0, 0.5], [1.0, 0.5], [0.5, 0.0], [0.5, 1.0], [0.5, 0.5]])
    assert np.array_equal(unit_square_normal(x), [[-1, 0], [1, 0], [0, -1], [0, 1], [0, 0]])
