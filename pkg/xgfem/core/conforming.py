from dataclasses import dataclass

import numpy as np
from scipy import sparse

from xgfem.core.cases import ManufacturedCase
from xgfem.core.constants import Constants
from xgfem.core.exceptions import ConfigError
from xgfem.core.linalg import SolveReport, solve_direct
from xgfem.core.mesh import LOCAL_EDGES, EdgeTag, Mesh2D
from xgfem.core.polybasis import BasisSet, Family, make_basis, push_forward, quad_edge, quad_triangle
from xgfem.core.xg_debug import logger

"""
Conforming reference solvers: continuous Lagrange primal method and lowest-order Raviart-Thomas mixed method.
Element loops here are independent of the four-field assembly.
"""


def lagrange_shape(degree: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Nodal Lagrange basis on the reference triangle. Nodes: vertices, then (degree 2) midpoints of the local edges.
    :param xi: reference points (..., 2)
    :return: values (..., n_local), reference gradients (..., n_local, 2)
    """
    lam = np.stack([1.0 - xi[..., 0] - xi[..., 1], xi[..., 0], xi[..., 1]], axis=-1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return lam, np.broadcast_to(dlam, lam.shape + (2,)).copy()
    if degree != 2:
        raise ConfigError('Lagrange degree must be 1 or 2, got ' + str(degree))
    values, grads = [], []
    for i in range(3):
        values.append(lam[..., i] * (2.0 * lam[..., i] - 1.0))
        grads.append((4.0 * lam[..., i] - 1.0)[..., None] * dlam[i])
    for a, b in LOCAL_EDGES:
        values.append(4.0 * lam[..., a] * lam[..., b])
        grads.append(4.0 * (lam[..., b][..., None] * dlam[a] + lam[..., a][..., None] * dlam[b]))
    return np.stack(values, axis=-1), np.stack(grads, axis=-2)


def _evaluation_rows(mesh: Mesh2D, cells: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cells = np.asarray(cells, dtype=int)
    return cells, mesh.geometry.take(cells).to_reference(points)


@dataclass
class PrimalReference:
    """
    Continuous Lagrange solution u^c with the recovered broken flux p^c = -Pi^c grad u^c in vector P_flux_degree.
    """
    mesh: Mesh2D
    degree: int
    nodal: np.ndarray  # values at the global Lagrange nodes
    cell_nodes: np.ndarray  # (nc, n_local)
    flux_basis: BasisSet
    flux: np.ndarray  # (nc, m) coefficients of p^c
    report: SolveReport

    def __repr__(self) -> str:
        return '<PrimalReference P' + str(self.degree) + ' on ' + repr(self.mesh) + '>'

    def evaluate_u(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells, xi = _evaluation_rows(self.mesh, cells, points)
        values, _ = lagrange_shape(self.degree, xi)
        return np.einsum('cqb,cb->cq', values, self.nodal[self.cell_nodes[cells]])

    def evaluate_grad_u(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells, xi = _evaluation_rows(self.mesh, cells, points)
        _, grads = lagrange_shape(self.degree, xi)
        physical = np.einsum('cji,cqbj->cqbi', self.mesh.geometry.jac_inv[cells], grads)
        return np.einsum('cqbi,cb->cqi', physical, self.nodal[self.cell_nodes[cells]])

    def evaluate_p(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        cells, xi = _evaluation_rows(self.mesh, cells, points)
        mapped = push_forward(self.flux_basis, self.mesh.geometry.take(cells), xi)
        return np.einsum('cqbi,cb->cqi', mapped.values, self.flux[cells])


def _lagrange_nodes(mesh: Mesh2D, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """
    :return: global node coordinates and (nc, n_local) node numbers
    """
    if degree == 1:
        return mesh.vertices, mesh.cells
    coordinates = np.vstack([mesh.vertices, mesh.edge_midpoints])
    return coordinates, np.hstack([mesh.cells, mesh.n_vertices + mesh.cell_edges])


def _dirichlet_nodes(mesh: Mesh2D, degree: int) -> np.ndarray:
    edges = np.flatnonzero(mesh.edge_tags == EdgeTag.DIRICHLET)
    nodes = [mesh.edge_vertices[edges].ravel()]
    if degree == 2:
        nodes.append(mesh.n_vertices + edges)
    return np.unique(np.concatenate(nodes))


def conforming_primal_solve(mesh: Mesh2D, case: ManufacturedCase, degree: int,
                            flux_degree: int | None = None) -> PrimalReference:
    """
    Find u^c in V_h^c with u^c = g_D at the Dirichlet nodes and p^c in Q_h (broken vector P_flux_degree):
    (c p^c, q) + (grad u^c, q) = 0, (p^c, grad v) = -(f, v) + <g_N, v>_N.
    The flux is eliminated cellwise, leaving G^T M_c^-1 G u^c = (f, v) - <g_N, v>_N.
    """
    if degree not in (1, 2):
        logger.error('Conforming primal reference supports degrees 1 and 2, got ' + str(degree))
        raise ConfigError('Conforming primal reference supports degrees 1 and 2, got ' + str(degree))
    flux_degree = degree - 1 if flux_degree is None else flux_degree
    data = case.problem_data()
    flux_basis = make_basis(Family.VECTOR, flux_degree)
    rule = quad_triangle(2 * max(degree, flux_degree) + Constants.QUAD_EXTRA_DEGREE.value)
    coordinates, cell_nodes = _lagrange_nodes(mesh, degree)
    n_nodes = len(coordinates)
    values, ref_grads = lagrange_shape(degree, rule.points)
    flux_values = push_forward(flux_basis, mesh.geometry, rule.points).values
    points = mesh.geometry.to_physical(rule.points)

    rows, cols, entries = [], [], []
    load = np.zeros(n_nodes)
    local_flux_maps = []
    for cell in range(mesh.n_cells):
        w = rule.weights * mesh.geometry.det[cell]
        grads = ref_grads @ mesh.geometry.jac_inv[cell]
        psi = flux_values[cell]
        c = data.c(points[cell])
        g = np.einsum('q,qmi,qbi->mb', w, psi, grads)
        m = np.einsum('q,qmi,qij,qnj->mn', w, psi, c, psi)
        flux_map = np.linalg.solve(m, g)
        stiffness = g.T @ flux_map
        nodes = cell_nodes[cell]
        rows.append(np.repeat(nodes, len(nodes)))
        cols.append(np.tile(nodes, len(nodes)))
        entries.append(stiffness.ravel())
        load[nodes] += np.einsum('q,q,qb->b', w, data.f(points[cell]), values)
        local_flux_maps.append(flux_map)

    edge_rule = quad_edge(2 * degree + Constants.QUAD_EXTRA_DEGREE.value)
    for e in np.flatnonzero(mesh.edge_tags == EdgeTag.NEUMANN):
        cell = mesh.edge_cells[e, 0]
        a, b = mesh.vertices[mesh.edge_vertices[e]]
        x = a + edge_rule.points[:, None] * (b - a)
        xi = mesh.geometry.take([cell]).to_reference(x[None])[0]
        phi, _ = lagrange_shape(degree, xi)
        load[cell_nodes[cell]] -= np.einsum('q,q,qb->b', edge_rule.weights * mesh.edge_lengths[e], data.g_n(x), phi)

    stiffness = sparse.csr_matrix((np.concatenate(entries), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(n_nodes, n_nodes))
    nodal = np.zeros(n_nodes)
    fixed = _dirichlet_nodes(mesh, degree)
    nodal[fixed] = data.g_d(coordinates[fixed])
    free = np.setdiff1d(np.arange(n_nodes), fixed)
    rhs = load[free] - stiffness[free][:, fixed] @ nodal[fixed]
    report = solve_direct(stiffness[free][:, free], rhs)
    nodal[free] = report.x

    flux = np.stack([-local_flux_maps[cell] @ nodal[cell_nodes[cell]] for cell in range(mesh.n_cells)])
    logger.debug('Conforming P' + str(degree) + ' solve on ' + repr(mesh) + ': ' + str(len(free)) + ' free nodes')
    return PrimalReference(mesh, degree, nodal, cell_nodes, flux_basis, flux, report)


@dataclass
class MixedReference:
    """
    RT0 x P0 solution; flux holds the normal flux p.n_e on every edge, u the cell values.
    """
    mesh: Mesh2D
    flux: np.ndarray  # (ne,)
    u: np.ndarray  # (nc,)
    report: SolveReport

    def __repr__(self) -> str:
        return '<MixedReference RT0 x P0 on ' + repr(self.mesh) + '>'

    def _local(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        :return: per cell and local edge, the scaled coefficient s |e| / (2|K|) p.n_e and the opposite vertex
        """
        mesh = self.mesh
        edges = mesh.cell_edges[cells]
        scale = mesh.cell_edge_signs[cells] * mesh.edge_lengths[edges] / (2.0 * mesh.cell_areas[cells, None])
        opposite = mesh.vertices[mesh.cells[cells][:, [2, 0, 1]]]
        return scale * self.flux[edges], opposite

    def evaluate_p(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        coefficients, opposite = self._local(np.asarray(cells, dtype=int))
        return np.einsum('ci,cqik->cqk', coefficients, points[:, :, None, :] - opposite[:, None, :, :])

    def divergence(self, cells: np.ndarray | None = None) -> np.ndarray:
        cells = np.arange(self.mesh.n_cells) if cells is None else np.asarray(cells, dtype=int)
        coefficients, _ = self._local(cells)
        return 2.0 * coefficients.sum(axis=1)

    def evaluate_u(self, cells: np.ndarray, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.u[np.asarray(cells, dtype=int), None], points.shape[:-1]).copy()


def conforming_mixed_solve(mesh: Mesh2D, case: ManufacturedCase) -> MixedReference:
    """
    Find p in RT0 with p.n = g_N on the Neumann edges and u in P0:
    (c p, q) - (u, div q) = -<g_D, q.n>_D, -(div p, v) = -(f, v).
    Local basis on a cell for its edge e: s |e| / (2|K|) (x - x_opposite), s = +1 when n_e points out of the cell.
    """
    data = case.problem_data()
    ne, nc = mesh.n_edges, mesh.n_cells
    rule = quad_triangle(2 + 2 * Constants.QUAD_EXTRA_DEGREE.value)
    points = mesh.geometry.to_physical(rule.points)
    opposite = mesh.vertices[mesh.cells[:, [2, 0, 1]]]

    rows, cols, entries = [], [], []
    d_rows, d_cols, d_entries = [], [], []
    rhs_u = np.zeros(nc)
    for cell in range(nc):
        w = rule.weights * mesh.geometry.det[cell]
        edges = mesh.cell_edges[cell]
        s = mesh.cell_edge_signs[cell]
        scale = s * mesh.edge_lengths[edges] / (2.0 * mesh.cell_areas[cell])
        psi = scale[None, :, None] * (points[cell][:, None, :] - opposite[cell][None, :, :])
        c = data.c(points[cell])
        m = np.einsum('q,qai,qij,qbj->ab', w, psi, c, psi)
        rows.append(np.repeat(edges, 3))
        cols.append(np.tile(edges, 3))
        entries.append(m.ravel())
        d_rows.append(np.full(3, cell))
        d_cols.append(edges)
        d_entries.append(s * mesh.edge_lengths[edges])
        rhs_u[cell] = -np.sum(w * data.f(points[cell]))

    mass = sparse.csr_matrix((np.concatenate(entries), (np.concatenate(rows), np.concatenate(cols))), shape=(ne, ne))
    div = sparse.csr_matrix((np.concatenate(d_entries), (np.concatenate(d_rows), np.concatenate(d_cols))),
                            shape=(nc, ne))

    edge_rule = quad_edge(2 + 2 * Constants.QUAD_EXTRA_DEGREE.value)

    def edge_integral(func, e):
        a, b = mesh.vertices[mesh.edge_vertices[e]]
        x = a + edge_rule.points[:, None] * (b - a)
        return float(np.sum(edge_rule.weights * mesh.edge_lengths[e] * func(x)))

    rhs_p = np.zeros(ne)
    for e in np.flatnonzero(mesh.edge_tags == EdgeTag.DIRICHLET):
        rhs_p[e] = -edge_integral(data.g_d, e)
    flux = np.zeros(ne)
    fixed = np.flatnonzero(mesh.edge_tags == EdgeTag.NEUMANN)
    for e in fixed:
        flux[e] = edge_integral(data.g_n, e) / mesh.edge_lengths[e]
    free = np.setdiff1d(np.arange(ne), fixed)

    matrix = sparse.bmat([[mass[free][:, free], -div[:, free].T], [-div[:, free], None]], format='csr')
    rhs = np.concatenate([rhs_p[free] - mass[free][:, fixed] @ flux[fixed], rhs_u + div[:, fixed] @ flux[fixed]])
    report = solve_direct(matrix, rhs)
    flux[free] = report.x[:len(free)]
    logger.debug('Conforming RT0 x P0 solve on ' + repr(mesh) + ': ' + str(len(rhs)) + ' unknowns')
    return MixedReference(mesh, flux, report.x[len(free):].copy(), report)
