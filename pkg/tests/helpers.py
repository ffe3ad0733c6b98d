"""Shared fixtures-by-hand: tiny meshes and independent evaluation helpers."""

import numpy as np

from afem2d import FEFunction, FunctionSpace, Mesh
from afem2d import fem
from afem2d.problems import unit_square_mesh


def tagged_unit_square(divisions, boundary):
    """Structured unit-square mesh with a custom boundary tagger."""
    base = unit_square_mesh(divisions)
    return Mesh(base.vertices, base.cells, boundary=boundary)


def unit_triangle_mesh(boundary=None):
    """The reference triangle as a one-cell mesh."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return Mesh(vertices, np.array([[0, 1, 2]]), boundary=boundary)


def two_cell_square(boundary=None):
    """Unit square split along the (0,0)-(1,1) diagonal."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    cells = np.array([[1, 2, 0], [3, 0, 2]])  # diagonal opposite slot 0
    return Mesh(vertices, cells, boundary=boundary)


def criss_cross_square(boundary=None):
    """Unit square cut into 4 triangles through the center vertex.

    Each cell leads with the center so its refinement edge is the outer
    (longest) side, keeping bisection self-similar."""
    vertices = np.array(
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]
    )
    cells = np.array([[4, 0, 1], [4, 1, 2], [4, 2, 3], [4, 3, 0]])
    return Mesh(vertices, cells, boundary=boundary)


def eval_function(u, ref_pts):
    """Evaluate an FEFunction at reference points of every cell: (nc, nq)."""
    tab = u.space.element.tabulate(ref_pts)
    return np.einsum("ci,qi->cq", u.cell_coeffs(), tab)


def assert_conforming(mesh):
    """No vertex of the mesh may sit at the midpoint of any facet."""
    mids = mesh.vertices[mesh.facets].mean(axis=1)
    d = np.abs(mids[:, None, :] - mesh.vertices[None, :, :]).max(axis=2)
    assert d.min() > 1e-12, "hanging vertex found on a facet midpoint"


def solve_poisson(mesh, degree, f, u_dirichlet=None, g=None, method="lu"):
    space = FunctionSpace(mesh, degree)
    system = fem.assemble_poisson(space, f, g=g, u_dirichlet=u_dirichlet)
    return FEFunction(space, fem.solve(system, method=method))


def row_reduction_kernel(g, tol=1e-9):
    """Independent kernel basis of a matrix via Gauss-Jordan elimination."""
    a = np.array(g, dtype=float)
    m, n = a.shape
    pivots = []
    row = 0
    for col in range(n):
        if row == m:
            break
        piv = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[piv, col]) < tol:
            continue
        a[[row, piv]] = a[[piv, row]]
        a[row] /= a[row, col]
        others = [r for r in range(m) if r != row]
        a[others] -= np.outer(a[others, col], a[row])
        pivots.append(col)
        row += 1
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((n, len(free)))
    for j, fc in enumerate(free):
        basis[fc, j] = 1.0
        for r, pc in enumerate(pivots):
            basis[pc, j] = -a[r, fc]
    return basis
