import numpy as np
import pytest
from lxml import etree

from xgfem.core.assembly import assemble_system
from xgfem.core.config import MethodConfig
from xgfem.core.eliminate import solve
from xgfem.core.spaces import build_spaces
from xgfem.core.vtk import VtuFile, cell_means, write_solution


@pytest.fixture
def c2_solution(mesh2, c2):
    spaces = build_spaces(mesh2, MethodConfig(k_p=1, k_u=2, k_pcheck=1, k_ucheck=1))
    data = c2.problem_data()
    solution, _ = solve(assemble_system(spaces, data), data, 'full')
    return solution


def arrays(path) -> dict:
    tree = etree.parse(str(path))
    return {element.get('Name'): element for element in tree.iter('DataArray')}


def test_cell_means(c2_solution, c2, mesh2):
    u, p = cell_means(c2_solution)
    assert u.shape == (mesh2.n_cells,)
    assert p.shape == (mesh2.n_cells, 2)
    # the mean of p = -(2x + y, x) is its value at the centroid
    centroids = mesh2.vertices[mesh2.cells].mean(axis=1)
    assert np.allclose(p, c2.p(centroids), atol=1e-9)


def test_write_solution(tmp_path, c2_solution, c2, mesh2):
    path = tmp_path / 'solution.vtu'
    write_solution(str(path), c2_solution, c2)
    root = etree.parse(str(path)).getroot()
    assert root.get('type') == 'UnstructuredGrid'
    piece = root.find('UnstructuredGrid/Piece')
    assert piece.get('NumberOfCells') == str(mesh2.n_cells)
    assert piece.get('NumberOfPoints') == str(mesh2.n_vertices)
    data = arrays(path)
    assert {'Points', 'connectivity', 'offsets', 'types', 'u', 'p', 'u_exact'} <= set(data)
    assert data['p'].get('NumberOfComponents') == '3'
    assert len(data['u'].text.split()) == mesh2.n_cells
    assert data['types'].text.split() == ['5'] * mesh2.n_cells


def test_without_exact(tmp_path, c2_solution):
    path = tmp_path / 'solution.vtu'
    write_solution(str(path), c2_solution)
    assert 'u_exact' not in arrays(path)


def test_field_size(mesh2):
    with pytest.raises(ValueError):
        VtuFile(mesh2).add_cell_field('u', np.zeros(mesh2.n_cells + 1))
