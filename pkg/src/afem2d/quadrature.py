"""Quadrature rules on the reference triangle and the unit interval.

Rules are generated from Gauss-Legendre points, collapsed onto the
triangle for the 2D case, so exactness holds for any requested order up
to ``MAX_ORDER``.
"""

import functools

import numpy as np

MAX_ORDER = 20


def _gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _check_order(order):
    if not isinstance(order, (int, np.integer)) or not 0 <= order <= MAX_ORDER:
        raise ValueError(f"unsupported quadrature order: {order!r}")


@functools.lru_cache(maxsize=None)
def edge_rule(order):
    """Gauss rule on [0, 1] exact for polynomials of degree <= order.

    Returns (points, weights) with weights summing to 1.
    """
    _check_order(order)
    pts, wts = _gauss01(order // 2 + 1)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@functools.lru_cache(maxsize=None)
def triangle_rule(order):
    """Rule on the reference triangle {x >= 0, y >= 0, x + y <= 1}.

    Exact for total degree <= order; weights sum to the area 1/2.
    Returns (points (n, 2), weights (n,)).
    """
    _check_order(order)
    # Collapsed tensor rule: x = u, y = v (1 - u).  The map's Jacobian
    # (1 - u) raises the u-degree by one, hence the extra point.
    n = (order + 3) // 2
    u, wu = _gauss01(n)
    uu, vv = np.meshgrid(u, u, indexing="ij")
    pts = np.column_stack([uu.ravel(), (vv * (1.0 - uu)).ravel()])
    wts = (np.outer(wu, wu) * (1.0 - uu)).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts
