import numpy as np
import pytest

from xgfem.core.exceptions import MeshError
from xgfem.core.mesh import (EdgeTag, Mesh2D, affine_image, build_structured_unit_square, refine_uniform,
                             sides_predicate, tag_boundary)


class TestStructuredMesh:

    @pytest.mark.parametrize('n', [1, 2, 3, 5])
    def test_counts(self, n):
        mesh = build_structured_unit_square(n)
        assert mesh.n_vertices == (n + 1) ** 2
        assert mesh.n_cells == 2 * n * n
        assert mesh.n_edges == 3 * n * n + 2 * n
        assert mesh.count(EdgeTag.DIRICHLET) == 4 * n

    def test_single_square(self, unit_mesh):
        assert (unit_mesh.n_vertices, unit_mesh.n_cells, unit_mesh.n_edges) == (4, 2, 5)
        assert np.count_nonzero(unit_mesh.boundary) == 4
        assert np.count_nonzero(unit_mesh.interior) == 1

    def test_area(self):
        assert abs(build_structured_unit_square(4).area - 1.0) <= 1e-14

    def test_bad_size(self):
        with pytest.raises(MeshError):
            build_structured_unit_square(0)


class TestOrientation:

    def test_edge_records_are_shared(self, mesh2):
        for e in np.flatnonzero(mesh2.interior):
            plus, minus = mesh2.edge_cells[e]
            local_plus, local_minus = mesh2.edge_local[e]
            assert plus < minus
            assert mesh2.cell_edges[plus, local_plus] == e
            assert mesh2.cell_edges[minus, local_minus] == e

    def test_normal_points_out_of_plus_cell(self, mesh2):
        centroids = mesh2.vertices[mesh2.cells].mean(axis=1)
        outward = mesh2.edge_midpoints - centroids[mesh2.edge_cells[:, 0]]
        assert np.all(np.einsum('ei,ei->e', outward, mesh2.edge_normals) > 0)
        assert np.allclose(np.linalg.norm(mesh2.edge_normals, axis=1), 1.0)

    def test_signs(self, mesh2):
        for c in range(mesh2.n_cells):
            for i in range(3):
                e = mesh2.cell_edges[c, i]
                assert mesh2.cell_edge_signs[c, i] == (1 if mesh2.edge_cells[e, 0] == c else -1)

    def test_outward_normal(self, mesh2):
        centroids = mesh2.vertices[mesh2.cells].mean(axis=1)
        for c in range(mesh2.n_cells):
            for i in range(3):
                e = mesh2.cell_edges[c, i]
                assert np.dot(mesh2.outward_normal(c, i), mesh2.edge_midpoints[e] - centroids[c]) > 0

    def test_edge_info(self, unit_mesh):
        interior = [info for info in unit_mesh.edges if not info.is_boundary]
        assert len(interior) == 1
        assert interior[0].plus == 0 and interior[0].minus == 1
        assert np.isclose(interior[0].length, np.sqrt(2.0))

    def test_clockwise_cell(self):
        with pytest.raises(MeshError):
            Mesh2D([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [(0, 2, 1)])

    def test_degenerate_cell(self):
        with pytest.raises(MeshError):
            Mesh2D([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], [(0, 1, 2)])

    def test_nonconforming_edge(self):
        # three cells sharing one edge
        vertices = [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0], [0.5, 0.5]]
        with pytest.raises(MeshError):
            Mesh2D(vertices, [(0, 1, 2), (1, 0, 3), (0, 1, 4)])


class TestRefinement:

    def test_refine_once(self, unit_mesh):
        fine = refine_uniform(unit_mesh)
        assert fine.n_cells == 8
        assert np.isclose(fine.h, unit_mesh.h / 2.0, rtol=0.0, atol=1e-15)
        assert abs(fine.area - 1.0) <= 1e-14

    def test_angles_are_kept(self, unit_mesh):
        assert np.isclose(refine_uniform(unit_mesh).min_angle(), unit_mesh.min_angle())
        assert np.isclose(unit_mesh.min_angle(), np.pi / 4.0)

    def test_refine_twice(self, unit_mesh):
        assert refine_uniform(refine_uniform(unit_mesh)).n_cells == 32

    def test_tags_are_inherited(self):
        mesh = tag_boundary(build_structured_unit_square(2), sides_predicate(['right']))
        fine = refine_uniform(mesh)
        assert fine.count(EdgeTag.NEUMANN) == 2 * mesh.count(EdgeTag.NEUMANN)
        assert fine.count(EdgeTag.DIRICHLET) == 2 * mesh.count(EdgeTag.DIRICHLET)
        right = fine.edge_tags == EdgeTag.NEUMANN
        assert np.allclose(fine.edge_midpoints[right, 0], 1.0)

    def test_affine_image(self, mesh2):
        image = affine_image(mesh2, [[2.0, 0.0], [0.0, 3.0]], shift=(1.0, 1.0))
        assert np.isclose(image.area, 6.0)
        assert np.array_equal(image.edge_tags, mesh2.edge_tags)

    def test_affine_image_flip(self, mesh2):
        with pytest.raises(MeshError):
            affine_image(mesh2, [[-1.0, 0.0], [0.0, 1.0]])


class TestBoundaryTags:

    def test_all_dirichlet(self, mesh2):
        mesh = tag_boundary(mesh2, lambda midpoint: EdgeTag.DIRICHLET)
        assert mesh.count(EdgeTag.DIRICHLET) == 8
        assert mesh.count(EdgeTag.NEUMANN) == 0

    def test_two_neumann_sides(self, mesh2):
        mesh = tag_boundary(mesh2, sides_predicate(['right', 'top']))
        assert mesh.count(EdgeTag.NEUMANN) == 4
        assert mesh.count(EdgeTag.DIRICHLET) == 4

    def test_all_neumann(self, mesh2):
        with pytest.raises(MeshError):
            tag_boundary(mesh2, lambda midpoint: EdgeTag.NEUMANN)

    def test_interior_tag(self, mesh2):
        with pytest.raises(MeshError):
            tag_boundary(mesh2, lambda midpoint: EdgeTag.INTERIOR)

    def test_unknown_side(self):
        with pytest.raises(MeshError):
            sides_predicate(['front'])


class TestText:

    def test_dump(self, unit_mesh):
        lines = unit_mesh.to_text().splitlines()
        assert len(lines) == unit_mesh.n_vertices + unit_mesh.n_cells + unit_mesh.n_edges
        assert lines[0].startswith('v ')
        assert lines[4] == 'c 0 1 3'
        assert sum(line.endswith('interior') for line in lines) == 1
