"""Continuous Lagrange spaces and Poisson assembly on triangle meshes.

Global degrees of freedom are numbered vertices first, then facet blocks
of degree - 1 nodes each, then cell-interior blocks.  Facet blocks run
from the lower-indexed vertex towards the higher one; the cell-local
gather flips edge nodes where needed, so shared values match across
cells and the element tables can stay cell-independent.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from . import element as el
from . import quadrature as quad
from .mesh import DIRICHLET, NEUMANN


class SolverError(RuntimeError):
    """The linear solver failed to reach its tolerance."""


def cell_geometry(mesh):
    """Affine map data: Jacobians (columns v1-v0, v2-v0), dets, inverses."""
    v = mesh.vertices[mesh.cells]
    jac = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1]
    inv[:, 1, 1] = jac[:, 0, 0]
    inv[:, 0, 1] = -jac[:, 0, 1]
    inv[:, 1, 0] = -jac[:, 1, 0]
    inv /= det[:, None, None]
    return jac, det, inv


def physical_points(mesh, ref_pts, jac=None):
    """Map reference points to every cell: (nc, nq, 2)."""
    if jac is None:
        jac, _, _ = cell_geometry(mesh)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    return v0[:, None, :] + np.einsum("cts,qs->cqt", jac, ref_pts)


def physical_gradients(ref_grads, inv):
    """Push reference gradients (nq, d, 2) through J^-T: (nc, nq, d, 2)."""
    return np.einsum("cst,qis->cqit", inv, ref_grads)


def lane_points(lane, n_or_pts):
    """Reference coordinates along local edge ``lane`` at parameters t."""
    t = np.asarray(n_or_pts, dtype=float)
    a, b = el.EDGE_VERTICES[lane]
    va, vb = el.VERTICES[a], el.VERTICES[b]
    return va[None, :] + t[:, None] * (vb - va)[None, :]


class FunctionSpace:
    """Continuous Lagrange space of degree 1..4 on a mesh."""

    def __init__(self, mesh, degree):
        if not 1 <= degree <= el.MAX_DEGREE:
            raise ValueError(f"unsupported space degree: {degree!r}")
        self.mesh = mesh
        self.degree = degree
        self.element = el.lagrange(degree)
        nv, nf, nc = mesh.num_vertices, len(mesh.facets), mesh.num_cells
        epf = degree - 1
        ipc = (degree - 1) * (degree - 2) // 2
        self.num_dofs = nv + nf * epf + nc * ipc
        dofmap = np.empty((nc, self.element.dim), dtype=np.int64)
        dofmap[:, :3] = mesh.cells
        for lane, (a, b) in enumerate(el.EDGE_VERTICES):
            facet = mesh.cell_facets[:, lane]
            base = nv + facet * epf
            forward = mesh.cells[:, a] < mesh.cells[:, b]
            for j in range(epf):
                dofmap[:, 3 + lane * epf + j] = base + np.where(forward, j, epf - 1 - j)
        for j in range(ipc):
            dofmap[:, 3 + 3 * epf + j] = nv + nf * epf + np.arange(nc) * ipc + j
        self.dofmap = dofmap
        self._dof_coords = None

    def dof_coordinates(self):
        if self._dof_coords is None:
            mesh, k = self.mesh, self.degree
            coords = [mesh.vertices]
            if k > 1:
                lo = mesh.vertices[mesh.facets[:, 0]]
                hi = mesh.vertices[mesh.facets[:, 1]]
                edge = np.stack(
                    [lo + (hi - lo) * (j / k) for j in range(1, k)], axis=1
                )
                coords.append(edge.reshape(-1, 2))
            if k > 2:
                interior = el.lagrange_nodes(k)[3 + 3 * (k - 1) :]
                coords.append(physical_points(mesh, interior).reshape(-1, 2))
            self._dof_coords = np.vstack(coords)
        return self._dof_coords

    def dirichlet_dofs(self):
        """Sorted indices of all DOFs sitting on Dirichlet facets."""
        mesh, k = self.mesh, self.degree
        tagged = np.flatnonzero(mesh.facet_tags == DIRICHLET)
        ids = [mesh.facets[tagged].ravel()]
        if k > 1:
            base = mesh.num_vertices + tagged * (k - 1)
            ids.append((base[:, None] + np.arange(k - 1)).ravel())
        return np.unique(np.concatenate(ids)) if ids[0].size else np.empty(0, np.int64)

    def neumann_facet_lanes(self):
        """(cell, lane, facet) triples for every Neumann facet."""
        mesh = self.mesh
        rows = []
        for lane in range(3):
            facet = mesh.cell_facets[:, lane]
            on = (mesh.facet_tags[facet] == NEUMANN) & (
                mesh.facet_cells[facet, 0] == np.arange(mesh.num_cells)
            )
            for c in np.flatnonzero(on):
                rows.append((c, lane, facet[c]))
        return sorted(rows)


@dataclass
class FEFunction:
    """Coefficient vector over a function space."""

    space: FunctionSpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.num_dofs,):
            raise ValueError("coefficient length does not match the space")

    def cell_coeffs(self):
        return self.coeffs[self.space.dofmap]

    def vertex_values(self):
        return self.coeffs[: self.space.mesh.num_vertices]


def interpolate(fn, space):
    """Nodal interpolant of a vectorized callable fn(x, y)."""
    pts = space.dof_coordinates()
    return FEFunction(space, np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float))


@dataclass
class SparseSystem:
    """Symmetric positive definite system after Dirichlet elimination."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray


def assemble_stiffness(space, quad_degree=None):
    """Raw Poisson stiffness matrix (no boundary conditions)."""
    mesh, element = space.mesh, space.element
    order = 2 * space.degree + 1 if quad_degree is None else quad_degree
    pts, wts = quad.triangle_rule(order)
    _, det, inv = cell_geometry(mesh)
    grads = physical_gradients(element.tabulate_grad(pts), inv)
    local = np.einsum("cqit,cqjt,q,c->cij", grads, grads, wts, det, optimize=True)
    d = element.dim
    rows = np.broadcast_to(space.dofmap[:, :, None], local.shape)
    cols = np.broadcast_to(space.dofmap[:, None, :], local.shape)
    mat = sparse.coo_matrix(
        (local.ravel(), (rows.ravel(), cols.ravel())),
        shape=(space.num_dofs, space.num_dofs),
    )
    return mat.tocsr()


def assemble_load(space, f, g=None, quad_degree=None):
    """Raw load vector: volume term plus Neumann flux term."""
    mesh, element = space.mesh, space.element
    order = 2 * space.degree + 1 if quad_degree is None else quad_degree
    pts, wts = quad.triangle_rule(order)
    jac, det, _ = cell_geometry(mesh)
    x = physical_points(mesh, pts, jac)
    fvals = np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
    if fvals.ndim == 0 or fvals.shape != x.shape[:2]:
        fvals = np.broadcast_to(fvals, x.shape[:2])
    tab = element.tabulate(pts)
    b = np.zeros(space.num_dofs)
    np.add.at(b, space.dofmap, np.einsum("cq,qi,q,c->ci", fvals, tab, wts, det))

    lanes = space.neumann_facet_lanes()
    if lanes:
        gfun = g if g is not None else (lambda x, y: np.zeros_like(x))
        t, wt = quad.edge_rule(order)
        lengths = mesh.facet_lengths()
        for lane in range(3):
            group = [(c, f_) for c, ln, f_ in lanes if ln == lane]
            if not group:
                continue
            cells_idx = np.array([c for c, _ in group])
            facet_idx = np.array([f_ for _, f_ in group])
            ref = lane_points(lane, t)
            tab_edge = element.tabulate(ref)
            xq = physical_points(mesh, ref, jac)[cells_idx]
            gv = np.asarray(gfun(xq[..., 0], xq[..., 1]), dtype=float)
            if gv.ndim == 0 or gv.shape != xq.shape[:2]:
                gv = np.broadcast_to(gv, xq.shape[:2])
            contrib = np.einsum("fq,qi,q->fi", gv, tab_edge, wt) * lengths[facet_idx][:, None]
            np.add.at(b, space.dofmap[cells_idx], contrib)
    return b


def apply_dirichlet(matrix, rhs, dofs, values):
    """Symmetric elimination: zero rows/columns, unit diagonal, lifted rhs."""
    n = matrix.shape[0]
    lift = np.zeros(n)
    lift[dofs] = values
    rhs = rhs - matrix @ lift
    keep = np.ones(n)
    keep[dofs] = 0.0
    d_free = sparse.diags(keep)
    d_fixed = sparse.diags(1.0 - keep)
    matrix = (d_free @ matrix @ d_free + d_fixed).tocsr()
    rhs = rhs * keep
    rhs[dofs] = values
    return matrix, rhs


def assemble_poisson(space, f, g=None, u_dirichlet=None, quad_degree=None):
    """Poisson system -div(grad u) = f with the mesh's boundary tags.

    ``u_dirichlet`` is a vectorized callable for the Dirichlet trace
    (None means homogeneous).  Neumann data ``g`` is applied on facets
    tagged N.
    """
    matrix = assemble_stiffness(space, quad_degree)
    rhs = assemble_load(space, f, g, quad_degree)
    dofs = space.dirichlet_dofs()
    if u_dirichlet is None:
        values = np.zeros(len(dofs))
    else:
        pts = space.dof_coordinates()[dofs]
        values = np.asarray(u_dirichlet(pts[:, 0], pts[:, 1]), dtype=float)
        values = np.broadcast_to(values, (len(dofs),)).copy()
    matrix, rhs = apply_dirichlet(matrix, rhs, dofs, values)
    return SparseSystem(matrix, rhs, dofs, values)


def solve(system, method="cg", rtol=1e-12, maxiter=200000):
    """Solve an eliminated system.

    ``cg`` runs conjugate gradients with a Jacobi preconditioner and
    checks the relative residual afterwards; ``lu`` goes through a sparse
    direct factorization.  Both are deterministic for fixed inputs.
    """
    matrix, rhs = system.matrix, system.rhs
    if method == "lu":
        x = spla.splu(matrix.tocsc()).solve(rhs)
    elif method == "cg":
        diag = matrix.diagonal()
        precond = sparse.diags(1.0 / diag)
        x, info = spla.cg(matrix, rhs, rtol=rtol, atol=0.0, maxiter=maxiter, M=precond)
        if info != 0:
            raise SolverError(f"conjugate gradients stopped with status {info}")
    else:
        raise ValueError(f"unknown solver method: {method!r}")
    norm_rhs = np.linalg.norm(rhs)
    if norm_rhs > 0:
        residual = np.linalg.norm(rhs - matrix @ x) / norm_rhs
        if residual > 1e-10:
            raise SolverError(f"relative residual {residual:.3e} above 1e-10")
    return x


def h1_seminorm_error(u, grad_exact, quad_degree=None):
    """|u_exact - u_h|_H1 from the exact gradient, by quadrature."""
    space = u.space
    order = 2 * space.degree + 3 if quad_degree is None else quad_degree
    pts, wts = quad.triangle_rule(order)
    jac, det, inv = cell_geometry(space.mesh)
    grads = physical_gradients(space.element.tabulate_grad(pts), inv)
    gh = np.einsum("ci,cqit->cqt", u.cell_coeffs(), grads)
    x = physical_points(space.mesh, pts, jac)
    gx, gy = grad_exact(x[..., 0], x[..., 1])
    diff = (gh[..., 0] - gx) ** 2 + (gh[..., 1] - gy) ** 2
    return float(np.sqrt(np.einsum("cq,q,c->", diff, wts, det)))


def l2_norm(u, quad_degree=None):
    space = u.space
    order = 2 * space.degree + 2 if quad_degree is None else quad_degree
    pts, wts = quad.triangle_rule(order)
    _, det, _ = cell_geometry(space.mesh)
    vals = np.einsum("ci,qi->cq", u.cell_coeffs(), space.element.tabulate(pts))
    return float(np.sqrt(np.einsum("cq,q,c->", vals**2, wts, det)))
