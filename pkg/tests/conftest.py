import os
import tempfile

import numpy as np
import pytest

# keep the package log out of the source tree; must run before xgfem.core.xg_debug is imported
os.environ.setdefault('XG_LOG_DIR', tempfile.mkdtemp(prefix='xgfem-tests-'))

from xgfem.core.assembly import ProblemData  # noqa: E402
from xgfem.core.cases import ManufacturedCase, get_case  # noqa: E402
from xgfem.core.config import MethodConfig  # noqa: E402
from xgfem.core.mesh import build_reference_triangle, build_structured_unit_square  # noqa: E402
from xgfem.core.spaces import build_spaces  # noqa: E402


def constant_function(value: float):
    def func(x: np.ndarray) -> np.ndarray:
        return np.full(x.shape[:-1], value)

    return func


def scaled_case(case: ManufacturedCase, factor: float) -> ManufacturedCase:
    return ManufacturedCase(name=case.name + 'x' + format(factor, 'g'),
                            u=lambda x: factor * case.u(x),
                            grad_u=lambda x: factor * case.grad_u(x),
                            div_p=lambda x: factor * case.div_p(x),
                            f=lambda x: factor * case.f(x),
                            alpha=case.alpha)


def zero_case() -> ManufacturedCase:
    return ManufacturedCase(name='zero', u=constant_function(0.0), grad_u=lambda x: np.zeros(x.shape),
                            div_p=constant_function(0.0), f=constant_function(0.0))


@pytest.fixture
def unit_mesh():
    return build_structured_unit_square(1)


@pytest.fixture
def mesh2():
    return build_structured_unit_square(2)


@pytest.fixture
def triangle():
    return build_reference_triangle()


@pytest.fixture
def k0_config():
    return MethodConfig(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0)


@pytest.fixture
def k0_spaces(unit_mesh, k0_config):
    return build_spaces(unit_mesh, k0_config)


@pytest.fixture
def c1():
    return get_case('C1')


@pytest.fixture
def c2():
    return get_case('C2')


@pytest.fixture
def no_data():
    return ProblemData()
