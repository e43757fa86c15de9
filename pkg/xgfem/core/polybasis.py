from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import ceil, factorial

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import cholesky, solve_triangular
from scipy.special import roots_jacobi, roots_legendre

from xgfem.core.constants import Constants
from xgfem.core.exceptions import MeshError, QuadratureError
from xgfem.core.mesh import CellGeometry
from xgfem.core.xg_debug import logger


class Family(str, Enum):
    SCALAR = 'scalar'  # P_k
    VECTOR = 'vector'  # P_k^2
    RT = 'rt'  # P_k^2 + x P_k, no inter-element coupling


def _readonly(*arrays):
    for a in arrays:
        a.flags.writeable = False
    return arrays


"""
Quadrature
"""


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (nq, 2) on the reference triangle, (nq,) on [0, 1]
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def quad_triangle(degree: int) -> QuadRule:
    """
    Collapsed Gauss rule on the reference triangle: Gauss-Legendre in s, Gauss-Jacobi(1, 0) in t,
    (x, y) = (s (1 - t), t). Exact for polynomials of total degree <= degree.
    """
    if degree < 0 or degree > Constants.QUAD_MAX_TRIANGLE.value:
        logger.error('Unsupported triangle quadrature degree: ' + str(degree))
        raise QuadratureError('Unsupported triangle quadrature degree: ' + str(degree))
    n = max(1, ceil((degree + 1) / 2))
    xs, ws = roots_legendre(n)
    xt, wt = roots_jacobi(n, 1.0, 0.0)
    s, t = (xs + 1.0) / 2.0, (xt + 1.0) / 2.0
    ss, tt = np.meshgrid(s, t, indexing='ij')
    points = np.stack([(ss * (1.0 - tt)).ravel(), tt.ravel()], axis=1)
    weights = np.outer(ws / 2.0, wt / 4.0).ravel()
    return QuadRule(*_readonly(points, weights), degree=degree)


@lru_cache(maxsize=None)
def quad_edge(degree: int) -> QuadRule:
    """
    Gauss-Legendre rule on [0, 1].
    """
    if degree < 0 or degree > Constants.QUAD_MAX_EDGE.value:
        logger.error('Unsupported edge quadrature degree: ' + str(degree))
        raise QuadratureError('Unsupported edge quadrature degree: ' + str(degree))
    n = max(1, ceil((degree + 1) / 2))
    x, w = roots_legendre(n)
    return QuadRule(*_readonly((x + 1.0) / 2.0, w / 2.0), degree=degree)


"""
Monomials on the reference triangle
"""


@lru_cache(maxsize=None)
def monomial_exponents(degree: int) -> tuple[tuple[int, int], ...]:
    # ordered by total degree, then by the power of y
    return tuple((d - b, b) for d in range(degree + 1) for b in range(d + 1))


def monomial_integral(a: int, b: int) -> float:
    """
    Exact integral of x^a y^b over the reference triangle.
    """
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@lru_cache(maxsize=None)
def _monomial_gram(degree: int) -> np.ndarray:
    exps = monomial_exponents(degree)
    gram = np.array([[monomial_integral(a1 + a2, b1 + b2) for a2, b2 in exps] for a1, b1 in exps])
    return _readonly(gram)[0]


def _monomials(xi: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Values and first derivatives of all monomials up to degree at points xi (..., 2).
    """
    exps = np.array(monomial_exponents(degree))
    a, b = exps[:, 0], exps[:, 1]
    x, y = xi[..., 0:1], xi[..., 1:2]
    xa, yb = x ** a, y ** b
    dx = a * x ** np.maximum(a - 1, 0) * yb
    dy = b * y ** np.maximum(b - 1, 0) * xa
    return xa * yb, dx, dy


"""
Reference bases
"""


@dataclass(frozen=True)
class BasisSet:
    """
    L2-orthonormal modal basis on the reference triangle, stored as monomial coefficients.
    Scalar families use coef_x only.
    """
    family: Family
    degree: int
    poly_degree: int
    coef_x: np.ndarray  # (dim, n_monomials)
    coef_y: np.ndarray | None

    @property
    def dim(self) -> int:
        return self.coef_x.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.family != Family.SCALAR

    def values(self, xi: np.ndarray) -> np.ndarray:
        m, _, _ = _monomials(xi, self.poly_degree)
        if not self.is_vector:
            return m @ self.coef_x.T
        return np.stack([m @ self.coef_x.T, m @ self.coef_y.T], axis=-1)

    def gradients(self, xi: np.ndarray) -> np.ndarray:
        if self.is_vector:
            raise TypeError('Gradients are defined for scalar bases only')
        _, dx, dy = _monomials(xi, self.poly_degree)
        return np.stack([dx @ self.coef_x.T, dy @ self.coef_x.T], axis=-1)

    def divergence(self, xi: np.ndarray) -> np.ndarray:
        if not self.is_vector:
            raise TypeError('Divergence is defined for vector bases only')
        _, dx, dy = _monomials(xi, self.poly_degree)
        return dx @ self.coef_x.T + dy @ self.coef_y.T

    def gram(self) -> np.ndarray:
        gram = _monomial_gram(self.poly_degree)
        g = self.coef_x @ gram @ self.coef_x.T
        if self.is_vector:
            g = g + self.coef_y @ gram @ self.coef_y.T
        return g


def _orthonormalize(coef_x: np.ndarray, coef_y: np.ndarray | None, degree: int):
    gram = _monomial_gram(degree)
    g = coef_x @ gram @ coef_x.T
    if coef_y is not None:
        g = g + coef_y @ gram @ coef_y.T
    lower = cholesky(g, lower=True)
    coef_x = solve_triangular(lower, coef_x, lower=True)
    if coef_y is not None:
        coef_y = solve_triangular(lower, coef_y, lower=True)
    return coef_x, coef_y


def _scalar_coefficients(k: int, poly_degree: int) -> np.ndarray:
    n_k = (k + 1) * (k + 2) // 2
    coef = np.zeros((n_k, len(monomial_exponents(poly_degree))))
    coef[:, :n_k] = np.eye(n_k)
    return _orthonormalize(coef, None, poly_degree)[0]


@lru_cache(maxsize=None)
def make_basis(family: Family | str, k: int) -> BasisSet:
    """
    :param family: scalar P_k, vector P_k^2 or broken Raviart-Thomas P_k^2 + x P_k
    :param k: polynomial degree, k >= 0
    """
    family = Family(family)
    if k < 0:
        raise ValueError('Basis degree must be >= 0, got ' + str(k))
    if family == Family.SCALAR:
        coef = _scalar_coefficients(k, k)
        return BasisSet(family, k, k, *_readonly(coef), None)
    if family == Family.VECTOR:
        s = _scalar_coefficients(k, k)
        zero = np.zeros_like(s)
        coef_x, coef_y = np.vstack([s, zero]), np.vstack([zero, s])
        return BasisSet(family, k, k, *_readonly(coef_x, coef_y))
    # Raviart-Thomas: P_k^2 completed by x * (homogeneous P_k)
    exps = monomial_exponents(k + 1)
    s = _scalar_coefficients(k, k + 1)
    zero = np.zeros_like(s)
    extra_x = np.zeros((k + 1, len(exps)))
    extra_y = np.zeros((k + 1, len(exps)))
    for row, b in enumerate(range(k + 1)):
        a = k - b
        extra_x[row, exps.index((a + 1, b))] = 1.0
        extra_y[row, exps.index((a, b + 1))] = 1.0
    coef_x, coef_y = _orthonormalize(np.vstack([s, zero, extra_x]), np.vstack([zero, s, extra_y]), k + 1)
    return BasisSet(family, k, k + 1, *_readonly(coef_x, coef_y))


def basis_dimension(family: Family | str, k: int | None) -> int:
    if k is None:
        return 0
    family = Family(family)
    if family == Family.SCALAR:
        return (k + 1) * (k + 2) // 2
    if family == Family.VECTOR:
        return (k + 1) * (k + 2)
    return (k + 1) * (k + 3)


@dataclass(frozen=True)
class EdgeBasis:
    """
    Legendre polynomials orthonormal on [0, 1].
    """
    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, t: np.ndarray) -> np.ndarray:
        scale = np.sqrt(2.0 * np.arange(self.degree + 1) + 1.0)
        return legendre.legvander(2.0 * np.asarray(t) - 1.0, self.degree) * scale


"""
Push-forward to physical cells
"""


@dataclass(frozen=True)
class MappedValues:
    values: np.ndarray  # (nc, nq, nb) or (nc, nq, nb, 2)
    gradients: np.ndarray | None  # scalar bases: (nc, nq, nb, 2)
    divergence: np.ndarray | None  # vector bases: (nc, nq, nb)


def _check_geometry(geom: CellGeometry) -> None:
    if np.any(geom.det <= 0):
        logger.error('Degenerate cell in push-forward')
        raise MeshError('Degenerate cell in push-forward')


def push_forward(basis: BasisSet, geom: CellGeometry, xi: np.ndarray) -> MappedValues:
    """
    Physical basis values at the images of reference points xi, (nq, 2) shared by all cells or (nc, nq, 2).
    Scalar and vector P_k are scaled by |det J|^(-1/2), which keeps them L2-orthonormal on every cell;
    broken RT uses the contravariant Piola map q = J q_ref / det J.
    """
    _check_geometry(geom)
    shared = xi.ndim == 2
    ref = basis.values(xi)
    if basis.family == Family.SCALAR:
        scale = 1.0 / np.sqrt(geom.det)
        grad_ref = basis.gradients(xi)
        if shared:
            values = ref[None] * scale[:, None, None]
            grads = np.einsum('cji,qbj->cqbi', geom.jac_inv, grad_ref) * scale[:, None, None, None]
        else:
            values = ref * scale[:, None, None]
            grads = np.einsum('cji,cqbj->cqbi', geom.jac_inv, grad_ref) * scale[:, None, None, None]
        return MappedValues(values, grads, None)
    if basis.family == Family.VECTOR:
        scale = 1.0 / np.sqrt(geom.det)
        values = (ref[None] if shared else ref) * scale[:, None, None, None]
        # divergence of the push-forward: trace of J^-T grad_ref, computed from both components
        grad = _vector_gradients(basis, xi)
        if shared:
            div = np.einsum('cji,qbij->cqb', geom.jac_inv, grad)
        else:
            div = np.einsum('cji,cqbij->cqb', geom.jac_inv, grad)
        return MappedValues(values, None, div * scale[:, None, None])
    div_ref = basis.divergence(xi)
    if shared:
        values = np.einsum('cij,qbj->cqbi', geom.jac, ref) / geom.det[:, None, None, None]
        div = div_ref[None] / geom.det[:, None, None]
    else:
        values = np.einsum('cij,cqbj->cqbi', geom.jac, ref) / geom.det[:, None, None, None]
        div = div_ref / geom.det[:, None, None]
    return MappedValues(values, None, div)


def _vector_gradients(basis: BasisSet, xi: np.ndarray) -> np.ndarray:
    # (..., nb, component, reference direction)
    _, dx, dy = _monomials(xi, basis.poly_degree)
    gx = np.stack([dx @ basis.coef_x.T, dy @ basis.coef_x.T], axis=-1)
    gy = np.stack([dx @ basis.coef_y.T, dy @ basis.coef_y.T], axis=-1)
    return np.stack([gx, gy], axis=-2)


def eval_mapped(basis: BasisSet, geom: CellGeometry, points: np.ndarray) -> MappedValues:
    """
    Physical basis values at physical points (nc, nq, 2), one row of points per cell of geom.
    """
    _check_geometry(geom)
    return push_forward(basis, geom, geom.to_reference(points))
