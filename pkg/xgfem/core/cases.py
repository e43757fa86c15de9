from dataclasses import dataclass
from typing import Callable

import numpy as np

from xgfem.core.assembly import ProblemData, identity_coefficient
from xgfem.core.exceptions import ConfigError
from xgfem.core.xg_debug import logger

"""
Manufactured solutions on the unit square
"""

PI = np.pi
BOUNDARY_TOL = 1e-10


def unit_square_normal(x: np.ndarray) -> np.ndarray:
    """
    Outward unit normal of the unit square at boundary points, zero elsewhere. Corners take the side listed last.
    """
    n = np.zeros(x.shape)
    n[np.abs(x[..., 0]) < BOUNDARY_TOL] = (-1.0, 0.0)
    n[np.abs(x[..., 0] - 1.0) < BOUNDARY_TOL] = (1.0, 0.0)
    n[np.abs(x[..., 1]) < BOUNDARY_TOL] = (0.0, -1.0)
    n[np.abs(x[..., 1] - 1.0) < BOUNDARY_TOL] = (0.0, 1.0)
    return n


@dataclass(frozen=True)
class ManufacturedCase:
    """
    Exact solution of div p = f, p = -alpha grad u with analytic derivatives.
    All callables map points (..., 2) to values (...), (..., 2) or (..., 2, 2).
    """
    name: str
    u: Callable[[np.ndarray], np.ndarray]
    grad_u: Callable[[np.ndarray], np.ndarray]
    div_p: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    alpha: Callable[[np.ndarray], np.ndarray] = identity_coefficient
    smoothness: str = 'analytic'
    description: str = ''

    def __repr__(self) -> str:
        return '<ManufacturedCase ' + self.name + ': ' + self.description + '>'

    def p(self, x: np.ndarray) -> np.ndarray:
        return -np.einsum('...ij,...j->...i', self.alpha(x), self.grad_u(x))

    def g_d(self, x: np.ndarray) -> np.ndarray:
        return self.u(x)

    def g_n(self, x: np.ndarray) -> np.ndarray:
        """
        Normal flux p.n on the boundary of the unit square.
        """
        return np.einsum('...i,...i->...', self.p(x), unit_square_normal(x))

    def problem_data(self) -> ProblemData:
        return ProblemData(alpha=self.alpha, f=self.f, g_d=self.g_d, g_n=self.g_n)


def _sin_sin(x):
    return np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1])


def _grad_sin_sin(x):
    sx, sy = np.sin(PI * x[..., 0]), np.sin(PI * x[..., 1])
    cx, cy = np.cos(PI * x[..., 0]), np.cos(PI * x[..., 1])
    return np.stack([PI * cx * sy, PI * sx * cy], axis=-1)


def _c1() -> ManufacturedCase:
    return ManufacturedCase(
        name='C1',
        u=_sin_sin,
        grad_u=_grad_sin_sin,
        div_p=lambda x: 2.0 * PI ** 2 * _sin_sin(x),
        f=lambda x: 2.0 * PI ** 2 * _sin_sin(x),
        description='u = sin(pi x) sin(pi y), alpha = I')


def _c2() -> ManufacturedCase:
    return ManufacturedCase(
        name='C2',
        u=lambda x: x[..., 0] ** 2 + x[..., 0] * x[..., 1],
        grad_u=lambda x: np.stack([2.0 * x[..., 0] + x[..., 1], x[..., 0]], axis=-1),
        div_p=lambda x: np.full(x.shape[:-1], -2.0),
        f=lambda x: np.full(x.shape[:-1], -2.0),
        smoothness='polynomial',
        description='u = x^2 + xy, alpha = I')


def _alpha_c3(x):
    alpha = np.zeros(x.shape[:-1] + (2, 2))
    alpha[..., 0, 0] = 1.0 + x[..., 0] ** 2
    alpha[..., 1, 1] = 1.0 + x[..., 1] ** 2
    return alpha


def _div_p_c3(x):
    # -d/dx((1 + x^2) u_x) - d/dy((1 + y^2) u_y)
    grad = _grad_sin_sin(x)
    laplace_part = -PI ** 2 * _sin_sin(x)
    return -(2.0 * x[..., 0] * grad[..., 0] + (1.0 + x[..., 0] ** 2) * laplace_part
             + 2.0 * x[..., 1] * grad[..., 1] + (1.0 + x[..., 1] ** 2) * laplace_part)


def _c3() -> ManufacturedCase:
    return ManufacturedCase(
        name='C3',
        u=_sin_sin,
        grad_u=_grad_sin_sin,
        div_p=_div_p_c3,
        f=_div_p_c3,
        alpha=_alpha_c3,
        description='u = sin(pi x) sin(pi y), alpha = diag(1 + x^2, 1 + y^2)')


def builtin_cases() -> list[ManufacturedCase]:
    return [_c1(), _c2(), _c3()]


def get_case(name: str) -> ManufacturedCase:
    for case in builtin_cases():
        if case.name == name:
            return case
    logger.error('Unknown case: ' + str(name))
    raise ConfigError('Unknown case: ' + str(name))


def case_consistency(case: ManufacturedCase, n_points: int = 20, step: float = 1e-5, seed: int = 0) -> dict:
    """
    Cross-check the analytic derivatives of a case at random interior points.
    :return: max relative errors of grad u and div p against central differences, and max |div p - f|
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 0.9, size=(n_points, 2))
    shifts = step * np.eye(2)
    fd_grad = np.stack([(case.u(x + s) - case.u(x - s)) / (2.0 * step) for s in shifts], axis=-1)
    fd_div = sum((case.p(x + s)[:, i] - case.p(x - s)[:, i]) / (2.0 * step) for i, s in enumerate(shifts))
    grad, div = case.grad_u(x), case.div_p(x)
    scale_grad = max(np.abs(grad).max(), 1.0)
    scale_div = max(np.abs(div).max(), 1.0)
    result = {'grad_u': float(np.abs(fd_grad - grad).max() / scale_grad),
              'div_p': float(np.abs(fd_div - div).max() / scale_div),
              'balance': float(np.abs(div - case.f(x)).max())}
    logger.debug('Consistency of ' + case.name + ': ' + str(result))
    return result
