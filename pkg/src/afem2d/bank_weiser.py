"""Hierarchical error estimation from projected local Neumann problems.

For a space pair (k+, k-) the estimation space on each cell is the kernel
of the operator that interpolates the fine Lagrange space P_{k+} onto the
coarse one P_{k-} and injects the result back.  Both steps only involve
reference-element node evaluations, so the kernel basis N is computed
once per pair, on the reference cell, and shared by every cell.

Each cell then gets a small Neumann problem: the fine-space stiffness
A+ and a load b+ built from the interior residual f + lap(u_h) and the
facet data

    interior facet:  0.5 * (grad u_h|neighbor - grad u_h|owner) . n_owner
    Neumann facet:   g - dn(u_h)
    Dirichlet facet: 0  (fine DOFs on the facet are eliminated instead)

after which the system is projected onto the kernel, solved, and the
energy norm of the lifted solution is the cell indicator.
"""

import functools

import numpy as np

from . import element as el
from . import fem
from . import quadrature as quad
from .mesh import DIRICHLET, INTERIOR, NEUMANN, IndicatorField

NULLSPACE_RTOL = 1e-10

PAIRS = tuple(
    (kp, km) for kp in range(1, el.MAX_DEGREE + 1) for km in range(kp)
)


class NullspaceError(RuntimeError):
    """The SVD cutoff did not produce the expected kernel dimension."""


class LocalSolveError(RuntimeError):
    """A projected cell system could not be solved."""


def validate_pair(pair):
    try:
        kp, km = (int(v) for v in pair)
    except (TypeError, ValueError):
        raise ValueError(f"invalid space pair: {pair!r}") from None
    if not (1 <= kp <= el.MAX_DEGREE and 0 <= km < kp):
        raise ValueError(
            f"invalid space pair {pair!r}: need 1 <= k+ <= {el.MAX_DEGREE} and k- < k+"
        )
    return kp, km


def interpolation_matrix(fine, coarse):
    """Interpolate onto the coarse element, inject back into the fine one.

    The result is an idempotent (dim+, dim+) matrix whose kernel is the
    estimation space.
    """
    onto_coarse = fine.tabulate(coarse.nodes)  # (dim-, dim+)
    into_fine = fine.interpolate(coarse.tabulate)  # (dim+, dim-)
    return into_fine @ onto_coarse


def nullspace(fine, coarse, rtol=NULLSPACE_RTOL):
    """Orthonormal kernel basis of the interpolation matrix, via SVD.

    Singular values at or below rtol times the largest one count as zero;
    anything but exactly dim+ - dim- of them is an error.
    """
    g = interpolation_matrix(fine, coarse)
    _, sigma, vt = np.linalg.svd(g)
    null = sigma <= rtol * sigma[0]
    expected = fine.dim - coarse.dim
    if int(null.sum()) != expected:
        raise NullspaceError(
            f"kernel of the {fine.name}->{coarse.name} interpolation came out "
            f"{int(null.sum())}-dimensional, expected {expected}"
        )
    return vt[null].T


@functools.lru_cache(maxsize=None)
def _operators(kind):
    if kind == "bubble":
        fine, coarse = el.p2_bubble(), el.lagrange(1)
    else:
        kp, km = validate_pair(kind)
        fine, coarse = el.lagrange(kp), el.lagrange(km)
    return fine, coarse, nullspace(fine, coarse)


def local_system(u, f, g, fine):
    """Fine-space cell matrices and loads, before any elimination.

    Returns (a_raw, b, constrained) where a_raw is the (nc, d, d) batch
    of cell stiffness matrices, b the (nc, d) batch of residual loads,
    and constrained the boolean mask of fine DOFs on Dirichlet facets.
    """
    space = u.space
    mesh = space.mesh
    u_el = space.element
    nc = mesh.num_cells
    jac, det, inv = fem.cell_geometry(mesh)
    order = max(2 * fine.degree, space.degree + fine.degree + 2)
    pts, wts = quad.triangle_rule(order)

    grads = fem.physical_gradients(fine.tabulate_grad(pts), inv)
    a_raw = np.einsum("cqit,cqjt,q,c->cij", grads, grads, wts, det, optimize=True)

    coeffs = u.cell_coeffs()
    x = fem.physical_points(mesh, pts, jac)
    r = np.asarray(f(x[..., 0], x[..., 1]), dtype=float)
    if r.ndim == 0 or r.shape != x.shape[:2]:
        r = np.broadcast_to(r, x.shape[:2]).copy()
    else:
        r = r.copy()
    if space.degree >= 2:
        hess = u_el.tabulate_hess(pts)
        lap = np.einsum("csa,qist,cta->cqi", inv, hess, inv, optimize=True)
        r += np.einsum("ci,cqi->cq", coeffs, lap)
    b = np.einsum("cq,qi,q,c->ci", r, fine.tabulate(pts), wts, det, optimize=True)

    t, wt = quad.edge_rule(order)
    nq = len(t)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    u_grad_own = {}
    for lane in range(3):
        fid = mesh.cell_facets[:, lane]
        tags = mesh.facet_tags[fid]
        ref = fem.lane_points(lane, t)
        tab_edge = fine.tabulate(ref)
        g_own = np.einsum(
            "ci,cqit->cqt", coeffs, fem.physical_gradients(u_el.tabulate_grad(ref), inv)
        )
        a_loc, b_loc = el.EDGE_VERTICES[lane]
        evec = mesh.vertices[mesh.cells[:, b_loc]] - mesh.vertices[mesh.cells[:, a_loc]]
        elen = np.hypot(evec[:, 0], evec[:, 1])
        normal = np.column_stack([evec[:, 1], -evec[:, 0]]) / elen[:, None]

        data = np.zeros((nc, nq))
        inner = np.flatnonzero(tags == INTERIOR)
        if inner.size:
            x_edge = fem.physical_points(mesh, ref, jac)[inner]
            pair_cells = mesh.facet_cells[fid[inner]]
            nb = np.where(pair_cells[:, 0] == inner, pair_cells[:, 1], pair_cells[:, 0])
            local = np.einsum(
                "cts,cqs->cqt", inv[nb], x_edge - v0[nb][:, None, :]
            )
            nb_grads = u_el.tabulate_grad(local.reshape(-1, 2)).reshape(
                inner.size, nq, u_el.dim, 2
            )
            g_nb = np.einsum(
                "ci,cst,cqis->cqt", coeffs[nb], inv[nb], nb_grads, optimize=True
            )
            data[inner] = 0.5 * np.einsum(
                "cqt,ct->cq", g_nb - g_own[inner], normal[inner]
            )
        neum = np.flatnonzero(tags == NEUMANN)
        if neum.size:
            flux = np.einsum("cqt,ct->cq", g_own[neum], normal[neum])
            if g is None:
                gv = np.zeros_like(flux)
            else:
                x_edge = fem.physical_points(mesh, ref, jac)[neum]
                gv = np.broadcast_to(
                    np.asarray(g(x_edge[..., 0], x_edge[..., 1]), dtype=float),
                    flux.shape,
                )
            data[neum] = gv - flux
        b += np.einsum("cq,qi,q,c->ci", data, tab_edge, wt, elen, optimize=True)

    constrained = np.zeros((nc, fine.dim), dtype=bool)
    for lane in range(3):
        on_dirichlet = np.flatnonzero(
            mesh.facet_tags[mesh.cell_facets[:, lane]] == DIRICHLET
        )
        if on_dirichlet.size:
            constrained[np.ix_(on_dirichlet, fine.edge_dofs[lane])] = True
    return a_raw, b, constrained


def _solve_projected(a_raw, b, constrained, nullbasis):
    free = ~constrained
    a_mod = a_raw * (free[:, :, None] & free[:, None, :])
    idx = np.arange(a_raw.shape[1])
    a_mod[:, idx, idx] = np.where(constrained, 1.0, a_mod[:, idx, idx])
    b_mod = np.where(free, b, 0.0)
    a_bw = np.einsum("ij,cjk,kl->cil", nullbasis.T, a_mod, nullbasis, optimize=True)
    b_bw = b_mod @ nullbasis
    try:
        x = np.linalg.solve(a_bw, b_bw[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for c in range(len(a_bw)):
            try:
                np.linalg.solve(a_bw[c], b_bw[c])
            except np.linalg.LinAlgError:
                raise LocalSolveError(f"singular projected system on cell {c}") from None
        raise
    return x @ nullbasis.T


def _estimate(u, f, g, kind):
    fine, _, nullbasis = _operators(kind)
    a_raw, b, constrained = local_system(u, f, g, fine)
    lift = _solve_projected(a_raw, b, constrained, nullbasis)
    eta2 = np.einsum("ci,cij,cj->c", lift, a_raw, lift, optimize=True)
    return IndicatorField(np.sqrt(np.maximum(eta2, 0.0))), lift


def estimate(u, f, g=None, pair=(2, 1)):
    """Cell indicators for the solution ``u`` of a Poisson problem.

    Parameters
    ----------
    u : FEFunction
        Discrete solution; its mesh tags decide the facet data.
    f, g : vectorized callables
        Volume data and (optional) Neumann data of the solved problem.
    pair : (k+, k-)
        Fine/coarse degrees of the estimation spaces.

    Returns
    -------
    (IndicatorField, ndarray)
        Indicators eta_T = |grad e_T|_T and the (nc, dim+) lifted local
        error coefficients for diagnostics.
    """
    return _estimate(u, f, g, validate_pair(pair))


def estimate_bubble(u, f, g=None):
    """Same as :func:`estimate` with the P2 + interior-bubble fine space
    over a P1 coarse space (kernel: interior bubble and edge bubbles)."""
    return _estimate(u, f, g, "bubble")
