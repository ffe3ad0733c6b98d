"""Reference triangle elements: Lagrange P0..P4 and the bubble-enriched P2.

The reference triangle has vertices (0,0), (1,0), (0,1).  Local edge i is
the edge opposite vertex i, traversed counterclockwise:

    edge 0: v1 -> v2,   edge 1: v2 -> v0,   edge 2: v0 -> v1

Lagrange nodes are equispaced and ordered vertices first, then edge nodes
edge by edge (along the traversal direction), then interior nodes.  Basis
functions are stored as coefficient tables over the monomials x^a y^b so
values, gradients and Hessians all come from one evaluation path.
"""

import functools

import numpy as np

VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
EDGE_VERTICES = ((1, 2), (2, 0), (0, 1))
MAX_DEGREE = 4


def _exponents(degree):
    return [(t - j, j) for t in range(degree + 1) for j in range(t + 1)]


def _safe_pow(base, exp):
    # 0**0 = 1 and negative exponents never reach the power (factor is 0).
    return base ** max(exp, 0)


def _mono_values(exps, pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([x**a * y**b for a, b in exps])


def _mono_grads(exps, pts):
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros((len(pts), len(exps), 2))
    for m, (a, b) in enumerate(exps):
        if a:
            out[:, m, 0] = a * _safe_pow(x, a - 1) * y**b
        if b:
            out[:, m, 1] = b * x**a * _safe_pow(y, b - 1)
    return out


def _mono_hessians(exps, pts):
    x, y = pts[:, 0], pts[:, 1]
    out = np.zeros((len(pts), len(exps), 2, 2))
    for m, (a, b) in enumerate(exps):
        if a > 1:
            out[:, m, 0, 0] = a * (a - 1) * _safe_pow(x, a - 2) * y**b
        if a and b:
            out[:, m, 0, 1] = a * b * _safe_pow(x, a - 1) * _safe_pow(y, b - 1)
        if b > 1:
            out[:, m, 1, 1] = b * (b - 1) * x**a * _safe_pow(y, b - 2)
    out[:, :, 1, 0] = out[:, :, 0, 1]
    return out


def lagrange_nodes(degree):
    """Equispaced nodes in the fixed local ordering."""
    if degree == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    nodes = [VERTICES[i] for i in range(3)]
    for a, b in EDGE_VERTICES:
        for j in range(1, degree):
            nodes.append(VERTICES[a] + (VERTICES[b] - VERTICES[a]) * (j / degree))
    for j in range(1, degree):
        for i in range(1, degree - j):
            nodes.append(np.array([i / degree, j / degree]))
    return np.array(nodes)


class ReferenceElement:
    """Polynomial triangle element defined by a monomial coefficient table.

    Attributes
    ----------
    degree : int
        Polynomial degree of the spanned space.
    dim : int
        Number of basis functions.
    nodes : ndarray (dim, 2)
        Defining points (for the enriched element the last one is the
        barycenter carrying the bubble coefficient).
    edge_dofs : tuple of 3 tuples
        Local indices of all basis functions associated with the closed
        local edge, endpoints included.
    """

    def __init__(self, name, degree, nodes, exponents, coeffs, edge_dofs):
        self.name = name
        self.degree = degree
        self.nodes = nodes
        self.exponents = exponents
        self.coeffs = coeffs
        self.edge_dofs = edge_dofs
        self.dim = coeffs.shape[1]

    def __repr__(self):
        return f"ReferenceElement({self.name})"

    def tabulate(self, pts):
        """Basis values at pts (n, 2) as an (n, dim) array."""
        return _mono_values(self.exponents, np.asarray(pts, dtype=float)) @ self.coeffs

    def tabulate_grad(self, pts):
        """Reference gradients at pts as an (n, dim, 2) array."""
        g = _mono_grads(self.exponents, np.asarray(pts, dtype=float))
        return np.einsum("nmd,mi->nid", g, self.coeffs)

    def tabulate_hess(self, pts):
        """Reference Hessians at pts as an (n, dim, 2, 2) array."""
        h = _mono_hessians(self.exponents, np.asarray(pts, dtype=float))
        return np.einsum("nmde,mi->nide", h, self.coeffs)

    def interpolate(self, fn):
        """Coefficients of the element interpolant of ``fn``.

        ``fn`` maps an (n, 2) point array to values of shape (n,) or
        (n, m); functions already in the span are reproduced exactly.
        """
        vals = np.asarray(fn(self.nodes), dtype=float)
        if self.name != "p2+bubble":
            return vals
        # Nodal part from the P2 nodes; the bubble picks up whatever the
        # P2 interpolant misses at the barycenter.
        p2_at_bary = lagrange(2).tabulate(self.nodes[6:7])[0]
        bubble = vals[6] - p2_at_bary @ vals[:6]
        return np.concatenate([vals[:6], bubble[None]])


@functools.lru_cache(maxsize=None)
def lagrange(degree):
    """Lagrange element of the given degree (0 gives the constant)."""
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported element degree: {degree!r}")
    nodes = lagrange_nodes(degree)
    exps = _exponents(degree)
    vander = _mono_values(exps, nodes)
    coeffs = np.linalg.inv(vander)
    edge_dofs = tuple(
        (a, b) + tuple(3 + i * (degree - 1) + j for j in range(degree - 1))
        for i, (a, b) in enumerate(EDGE_VERTICES)
    ) if degree >= 1 else ((), (), ())
    return ReferenceElement(f"P{degree}", degree, nodes, exps, coeffs, edge_dofs)


@functools.lru_cache(maxsize=None)
def p2_bubble():
    """P2 enriched with the cubic interior bubble 27 x y (1 - x - y).

    Dimension 7; the bubble vanishes on all three edges, so the edge
    degrees of freedom are exactly those of P2.
    """
    p2 = lagrange(2)
    exps = _exponents(3)
    coeffs = np.zeros((len(exps), 7))
    index = {e: m for m, e in enumerate(exps)}
    for m, e in enumerate(_exponents(2)):
        coeffs[index[e], :6] = p2.coeffs[m]
    coeffs[index[(1, 1)], 6] = 27.0
    coeffs[index[(2, 1)], 6] = -27.0
    coeffs[index[(1, 2)], 6] = -27.0
    nodes = np.vstack([p2.nodes, [[1.0 / 3.0, 1.0 / 3.0]]])
    edge_dofs = tuple((a, b, 3 + i) for i, (a, b) in enumerate(EDGE_VERTICES))
    return ReferenceElement("p2+bubble", 3, nodes, exps, coeffs, edge_dofs)
