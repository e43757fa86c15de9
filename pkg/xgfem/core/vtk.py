import numpy as np
from lxml import etree

from xgfem.core.assembly import SolutionFields
from xgfem.core.mesh import Mesh2D
from xgfem.core.spaces import FieldKind
from xgfem.core.xg_debug import debugmethods, logger

"""
VTK XML unstructured grid (.vtu) export
"""

VTK_TRIANGLE = 5


def TextElement(tag: str, text: str, *args, **kwargs) -> etree.Element:
    element = etree.Element(tag, *args, **kwargs)
    element.text = text
    return element


def _ascii(values: np.ndarray, fmt: str = '.10e') -> str:
    return ' '.join(format(v, fmt) if isinstance(v, float) else str(v) for v in np.asarray(values).ravel().tolist())


def DataArray(name: str, values: np.ndarray, components: int = 1, dtype: str = 'Float64') -> etree.Element:
    attrib = {'type': dtype, 'Name': name, 'format': 'ascii'}
    if components > 1:
        attrib['NumberOfComponents'] = str(components)
    return TextElement('DataArray', _ascii(values), attrib)


@debugmethods
class VtuFile:
    """
    Triangles of a mesh with any number of cell-wise scalar or 2D vector fields.
    """

    def __init__(self, mesh: Mesh2D) -> None:
        self.mesh = mesh
        self.root = etree.Element('VTKFile', type='UnstructuredGrid', version='0.1', byte_order='LittleEndian')
        grid = etree.SubElement(self.root, 'UnstructuredGrid')
        self.piece = etree.SubElement(grid, 'Piece', NumberOfPoints=str(mesh.n_vertices),
                                      NumberOfCells=str(mesh.n_cells))
        points = etree.SubElement(self.piece, 'Points')
        xyz = np.hstack([mesh.vertices, np.zeros((mesh.n_vertices, 1))])
        points.append(DataArray('Points', xyz, components=3))
        cells = etree.SubElement(self.piece, 'Cells')
        cells.append(DataArray('connectivity', mesh.cells, dtype='Int64'))
        cells.append(DataArray('offsets', 3 * np.arange(1, mesh.n_cells + 1), dtype='Int64'))
        cells.append(DataArray('types', np.full(mesh.n_cells, VTK_TRIANGLE), dtype='UInt8'))
        self.cell_data = etree.SubElement(self.piece, 'CellData')

    def add_cell_field(self, name: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.mesh.n_cells:
            raise ValueError('Field ' + name + ' has ' + str(values.shape[0]) + ' rows for '
                             + str(self.mesh.n_cells) + ' cells')
        if values.ndim == 1:
            self.cell_data.append(DataArray(name, values))
        else:
            xyz = np.hstack([values, np.zeros((len(values), 3 - values.shape[1]))])
            self.cell_data.append(DataArray(name, xyz, components=3))

    def tostring(self) -> bytes:
        return etree.tostring(self.root, pretty_print=True, xml_declaration=True, encoding='UTF-8')

    def write(self, path: str) -> None:
        etree.ElementTree(self.root).write(path, pretty_print=True, xml_declaration=True, encoding='UTF-8')
        logger.debug('Wrote ' + path)


def cell_means(solution: SolutionFields) -> tuple[np.ndarray, np.ndarray]:
    """
    Cell averages of u_h (nc,) and p_h (nc, 2).
    """
    spaces = solution.spaces
    w = spaces.volume.weights
    area = w.sum(axis=1)
    u = np.sum(w * spaces.cell_values(FieldKind.U, solution.u), axis=1) / area
    p = np.einsum('cq,cqi->ci', w, spaces.cell_values(FieldKind.P, solution.p)) / area[:, None]
    return u, p


def write_solution(path: str, solution: SolutionFields, exact=None) -> None:
    """
    :param exact: optional ManufacturedCase; adds the exact u at the cell centroids
    """
    mesh = solution.spaces.mesh
    vtu = VtuFile(mesh)
    u, p = cell_means(solution)
    vtu.add_cell_field('u', u)
    vtu.add_cell_field('p', p)
    if exact is not None:
        centroids = mesh.vertices[mesh.cells].mean(axis=1)
        vtu.add_cell_field('u_exact', exact.u(centroids))
    vtu.write(path)
