import numpy as np
import pytest

from conftest import zero_case
from xgfem.core.assembly import assemble_dg_direct, assemble_system, average_moments
from xgfem.core.config import MethodConfig, table_presets
from xgfem.core.eliminate import (as_reduced, eliminate_both, eliminate_fields, eliminate_pcheck, hybridize_uhat,
                                  reduce, solve)
from xgfem.core.exceptions import ConditionViolation, EliminationError
from xgfem.core.spaces import FieldKind, build_spaces
from xgfem.core.verify import build_mesh, elimination_gap


@pytest.mark.parametrize('n', [1, 2])
@pytest.mark.parametrize('k', [0, 1])
@pytest.mark.parametrize('preset', table_presets())
def test_elimination_matches_full_solve(preset, k, n, c1):
    spaces = build_spaces(build_mesh(n), MethodConfig.from_preset(preset, k))
    gap, size = elimination_gap(spaces, c1.problem_data())
    assert gap <= 1e-9
    assert size <= sum(spaces.dims)


def test_neumann_sides(c2):
    spaces = build_spaces(build_mesh(2, ['right', 'top']), MethodConfig.from_preset('hdg-grad', 1))
    gap, _ = elimination_gap(spaces, c2.problem_data())
    assert gap <= 1e-9


class TestEliminateFields:

    def test_layout(self, k0_spaces, c2):
        system = assemble_system(k0_spaces, c2.problem_data())
        reduced = eliminate_pcheck(system)
        assert reduced.fields == ('p', 'u', 'ucheck')
        assert reduced.size == 4 + 2 + 1
        assert eliminate_both(system).fields == ('p', 'u')

    def test_nothing_to_eliminate(self, unit_mesh, c2):
        spaces = build_spaces(unit_mesh, MethodConfig.from_preset('mixed-dg', 0))
        system = assemble_system(spaces, c2.problem_data())
        reduced = eliminate_pcheck(system)
        assert reduced.size == system.size
        assert np.allclose(reduced.matrix.toarray(), system.matrix.toarray())

    def test_reconstruction(self, mesh2, c2):
        spaces = build_spaces(mesh2, MethodConfig(k_p=1, k_u=1, k_pcheck=1, k_ucheck=1))
        system = assemble_system(spaces, c2.problem_data())
        full, _ = solve(system, c2.problem_data(), 'full')
        reduced, _ = eliminate_both(system).solve()
        assert np.allclose(reduced.vector(), full.vector(), rtol=0.0, atol=1e-9 * np.abs(full.vector()).max())

    def test_zero_block(self, k0_spaces, c2):
        system = assemble_system(k0_spaces, c2.problem_data())
        with pytest.raises(EliminationError):
            eliminate_fields(system, [FieldKind.U])

    @pytest.mark.parametrize('preset', ['grad-k0', 'hdg-grad-k1', 'div-rt-k1', 'wg-k0', 'hdg-reduced-k1'])
    def test_order_commutes(self, preset, c2):
        spaces = build_spaces(build_mesh(2, ['right']), MethodConfig.from_preset(preset))
        system = assemble_system(spaces, c2.problem_data())
        stepwise = eliminate_fields(eliminate_pcheck(system), ['ucheck'])
        both = eliminate_both(system)
        assert stepwise.fields == both.fields == ('p', 'u')
        scale = abs(both.matrix).max()
        assert abs(stepwise.matrix - both.matrix).max() <= 1e-12 * scale
        assert np.abs(stepwise.rhs - both.rhs).max() <= 1e-12 * max(np.abs(both.rhs).max(), 1.0)

    def test_matches_direct_dg(self, c2):
        spaces = build_spaces(build_mesh(2, ['right']), MethodConfig(k_p=0, k_u=0, k_pcheck=0, k_ucheck=0))
        reduced = eliminate_both(assemble_system(spaces, c2.problem_data()))
        matrix, rhs = assemble_dg_direct(spaces, c2.problem_data())
        scale = abs(matrix).max()
        assert np.allclose(reduced.matrix.toarray(), matrix.toarray(), rtol=0.0, atol=1e-12 * scale)
        assert np.allclose(reduced.rhs, rhs, rtol=0.0, atol=1e-12 * max(np.abs(rhs).max(), 1.0))


class TestHybridization:

    def test_skeleton_system(self, mesh2, c1):
        spaces = build_spaces(mesh2, MethodConfig.from_preset('hdg-grad', 0))
        reduced = hybridize_uhat(assemble_system(spaces, c1.problem_data()))
        assert reduced.fields == ('uhat',)
        assert reduced.extra['schur_dim'] == spaces.ucheck.ndofs
        assert reduced.extra['local_dim'] == spaces.p.local_dim + spaces.u.local_dim
        dense = reduced.matrix.toarray()
        assert np.allclose(dense, dense.T, atol=1e-12 * np.abs(dense).max())
        assert np.linalg.eigvalsh(dense).min() > 0.0

    def test_trace_unknowns(self, mesh2, c1):
        spaces = build_spaces(mesh2, MethodConfig.from_preset('hdg-grad', 0))
        reduced = hybridize_uhat(assemble_system(spaces, c1.problem_data()))
        fields, report = reduced.solve()
        assert np.allclose(report.x, fields.u_hat(), atol=1e-10)

    def test_not_hybridizable(self, mesh2, c1):
        spaces = build_spaces(mesh2, MethodConfig.from_preset('grad', 0))
        with pytest.raises(ConditionViolation):
            hybridize_uhat(assemble_system(spaces, c1.problem_data()))

    def test_zero_data(self, mesh2):
        spaces = build_spaces(mesh2, MethodConfig.from_preset('hdg-grad', 1))
        data = zero_case().problem_data()
        fields, _ = solve(assemble_system(spaces, data), data, 'hybridize')
        assert np.all(np.abs(fields.vector()) <= 1e-14)


class TestWeakGalerkin:

    def test_phat_relation(self, mesh2, c1):
        spaces = build_spaces(mesh2, MethodConfig.from_preset('wg-mfem', 0))
        data = c1.problem_data()
        reduced = reduce(assemble_system(spaces, data), data, 'wg_phat')
        assert reduced.fields == ('p', 'phat', 'u')
        fields, report = reduced.solve()
        phat = report.x[reduced.field_slice('phat')]
        assert np.allclose(phat - average_moments(spaces, FieldKind.PCHECK) @ fields.p, fields.pcheck, atol=1e-12)
        assert np.allclose(fields.p_hat(), phat, atol=1e-12)


class TestPaths:

    def test_full(self, k0_spaces, c2):
        system = assemble_system(k0_spaces, c2.problem_data())
        reduced = as_reduced(system)
        assert reduced.fields == ('p', 'pcheck', 'u', 'ucheck')
        assert reduced.size == system.size

    def test_unknown(self, k0_spaces, c2):
        system = assemble_system(k0_spaces, c2.problem_data())
        with pytest.raises(EliminationError):
            reduce(system, c2.problem_data(), 'schur')

    def test_dump(self, k0_spaces, c2, tmp_path):
        reduced = eliminate_both(assemble_system(k0_spaces, c2.problem_data()))
        path = tmp_path / 'reduced.txt'
        with open(path, 'w') as stream:
            reduced.dump(stream)
        assert len(path.read_text().splitlines()) == reduced.matrix.nnz
