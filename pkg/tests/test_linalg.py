import numpy as np
import pytest
from scipy import sparse

from xgfem.core.assembly import assemble_system
from xgfem.core.exceptions import AssemblyError, SolverError
from xgfem.core.linalg import as_csr, dual_norm, infsup_constant, is_symmetric, solve_direct


def random_spd(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    return m @ m.T + n * np.eye(n)


class TestDirectSolve:

    def test_identity(self):
        b = np.array([1.0, -2.0, 3.5])
        report = solve_direct(sparse.identity(3), b)
        assert np.array_equal(report.x, b)
        assert report.residual == 0.0

    def test_indefinite(self):
        report = solve_direct(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([1.0, 2.0]))
        assert np.allclose(report.x, [2.0, 1.0], rtol=0.0, atol=1e-15)

    def test_four_field_system(self, k0_spaces, c2):
        system = assemble_system(k0_spaces, c2.problem_data())
        report = solve_direct(system.matrix, system.rhs)
        dense = np.linalg.solve(system.matrix.toarray(), system.rhs)
        assert np.allclose(report.x, dense, rtol=0.0, atol=1e-10 * max(np.abs(dense).max(), 1.0))
        assert report.min_pivot > 0.0

    def test_singular(self):
        with pytest.raises(SolverError):
            solve_direct(np.ones((2, 2)), np.array([1.0, 2.0]))

    def test_shape_mismatch(self):
        with pytest.raises(SolverError):
            solve_direct(np.eye(3), np.ones(2))

    def test_empty(self):
        assert len(solve_direct(sparse.csr_matrix((0, 0)), np.zeros(0)).x) == 0

    def test_csr(self):
        coo = sparse.coo_matrix(([1.0, 2.0, 1.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
        csr = as_csr(coo)
        assert csr[0, 1] == 3.0 and csr.nnz == 2
        assert not is_symmetric(csr)
        assert is_symmetric(csr + csr.T)


class TestInfSup:

    def test_same_matrices(self):
        n = random_spd(5, 0)
        report = infsup_constant(n, n)
        assert np.isclose(report.beta, 1.0)
        assert np.isclose(report.condition, 1.0)

    def test_scaled_identity(self):
        report = infsup_constant(np.diag([-2.0, 0.5, 3.0]), np.eye(3), regime='grad', rho=0.5)
        assert np.isclose(report.beta, 0.5)
        assert np.isclose(report.lambda_min, -2.0)
        assert np.isclose(report.lambda_max, 3.0)
        assert report.rho == 0.5 and report.regime == 'grad'

    def test_permutation(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((6, 6))
        m = m + m.T
        n = random_spd(6, 2)
        perm = rng.permutation(6)
        beta = infsup_constant(m, n).beta
        assert np.isclose(infsup_constant(m[perm][:, perm], n[perm][:, perm]).beta, beta, rtol=1e-10)

    def test_sup_inf(self):
        # beta is min over x of max over y of x^T M y / (|x|_N |y|_N)
        m = np.array([[1.0, 2.0], [2.0, -1.0]])
        n = np.diag([1.0, 4.0])
        report = infsup_constant(m, n)
        l_inv = np.linalg.inv(np.linalg.cholesky(n))
        singular = np.linalg.svd(l_inv @ m @ l_inv.T, compute_uv=False)
        assert np.isclose(report.beta, singular.min())

    def test_indefinite_gram(self):
        with pytest.raises(AssemblyError):
            infsup_constant(np.eye(2), np.diag([1.0, -1.0]))

    def test_not_symmetric(self):
        with pytest.raises(AssemblyError):
            infsup_constant(np.array([[1.0, 2.0], [0.0, 1.0]]), np.eye(2))

    def test_four_field_system(self, k0_spaces, c2):
        system = assemble_system(k0_spaces, c2.problem_data())
        assert is_symmetric(system.matrix, 1e-10)
        assert infsup_constant(system.matrix, np.eye(system.size)).beta > 0.0


class TestDualNorm:

    def test_zero(self):
        assert dual_norm(np.zeros(3), random_spd(3, 0)) == 0.0

    def test_identity(self):
        f = np.array([3.0, 4.0])
        assert np.isclose(dual_norm(f, np.eye(2)), 5.0)

    def test_attained(self):
        n = random_spd(4, 5)
        f = np.array([1.0, -2.0, 0.5, 3.0])
        v = np.linalg.solve(n, f)
        value = dual_norm(f, sparse.csr_matrix(n))
        assert np.isclose(value, f @ v / np.sqrt(v @ n @ v))
        rng = np.random.default_rng(7)
        for w in rng.standard_normal((200, 4)):
            assert f @ w / np.sqrt(w @ n @ w) <= value * (1.0 + 1e-12)
