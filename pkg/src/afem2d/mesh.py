"""Conforming triangle meshes: adjacency, marking, bisection refinement, I/O.

Cells are stored counterclockwise with the refinement edge opposite local
vertex 0, so newest-vertex bisection needs no separate per-cell state:
children are emitted with the new midpoint in slot 0, which is exactly the
newest-vertex rule.  Interior facets have a fixed owner (the incident cell
with the smaller index); all jump-orientation conventions derive from it.
"""

from dataclasses import dataclass

import numpy as np

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_TAG_FROM_CHAR = {"D": DIRICHLET, "N": NEUMANN}
_CHAR_FROM_TAG = {v: k for k, v in _TAG_FROM_CHAR.items()}


class NonManifoldError(ValueError):
    """Some facet is shared by more than two cells."""


def build_connectivity(cells):
    """Facet arrays for a (nc, 3) triangle array.

    Returns
    -------
    facets : ndarray (nf, 2)
        Sorted vertex pairs, lexicographically ordered.
    facet_cells : ndarray (nf, 2)
        Incident cells; owner first (smaller index), -1 for missing
        neighbor of boundary facets.
    cell_facets : ndarray (nc, 3)
        Facet index of local edge i (the edge opposite local vertex i).
    """
    cells = np.asarray(cells, dtype=np.int64)
    nc = len(cells)
    lanes = cells[:, [1, 2, 2, 0, 0, 1]].reshape(-1, 2)
    key = np.sort(lanes, axis=1)
    facets, inverse, counts = np.unique(
        key, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.ravel()
    if counts.size and counts.max() > 2:
        bad = facets[np.argmax(counts)]
        raise NonManifoldError(f"facet {tuple(bad)} is shared by more than two cells")
    cell_facets = inverse.reshape(nc, 3)
    # Stable sort groups lane entries by facet while keeping cell order,
    # so the first incident cell is automatically the owner.
    order = np.argsort(inverse, kind="stable")
    incident = order // 3
    starts = np.concatenate([[0], np.cumsum(counts)])
    facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
    facet_cells[:, 0] = incident[starts[:-1]]
    two = counts == 2
    facet_cells[two, 1] = incident[starts[:-1][two] + 1]
    return facets, facet_cells, cell_facets


class Mesh:
    """Immutable triangle mesh with boundary tags on its facets.

    Parameters
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array
        Counterclockwise triangles; slot 0 marks the refinement edge
        convention described in the module docstring.
    boundary : callable or dict or None
        Either a vectorized ``tag(x, y) -> array of DIRICHLET/NEUMANN``
        evaluated at boundary facet midpoints, a dict mapping sorted
        vertex pairs to tags, or None for all-Dirichlet.
    """

    def __init__(self, vertices, cells, boundary=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise ValueError("cells must be an (nc, 3) array")
        if self.cells.size and self.cells.max() >= len(self.vertices):
            raise ValueError("cell vertex index out of range")
        v = self.vertices[self.cells]
        d1, d2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.areas <= 0):
            raise ValueError("cells must be counterclockwise with positive area")
        self.facets, self.facet_cells, self.cell_facets = build_connectivity(self.cells)
        self.facet_tags = self._assign_tags(boundary)
        self.vertices.setflags(write=False)
        self.cells.setflags(write=False)
        self._vertex_cells = None

    def _assign_tags(self, boundary):
        tags = np.zeros(len(self.facets), dtype=np.int8)
        on_boundary = self.facet_cells[:, 1] < 0
        if boundary is None:
            tags[on_boundary] = DIRICHLET
        elif callable(boundary):
            mids = self.vertices[self.facets[on_boundary]].mean(axis=1)
            values = np.asarray(boundary(mids[:, 0], mids[:, 1]))
            tags[on_boundary] = values
        else:
            for (a, b), t in boundary.items():
                key = (min(a, b), max(a, b))
                idx = self._facet_index(*key)
                if not on_boundary[idx]:
                    raise ValueError(f"facet {key} is interior, cannot tag it")
                tags[idx] = t
        bad = on_boundary & ~np.isin(tags, (DIRICHLET, NEUMANN))
        if np.any(bad):
            raise ValueError("every boundary facet needs a D or N tag")
        return tags

    def _facet_index(self, a, b):
        idx = np.searchsorted(
            self.facets[:, 0] * len(self.vertices) + self.facets[:, 1],
            a * len(self.vertices) + b,
        )
        if idx >= len(self.facets) or tuple(self.facets[idx]) != (a, b):
            raise ValueError(f"no facet with vertices ({a}, {b})")
        return idx

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    def boundary_facets(self):
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    def facet_lengths(self):
        e = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return np.hypot(e[:, 0], e[:, 1])

    def cell_diameters(self):
        """Longest edge of each cell."""
        return self.facet_lengths()[self.cell_facets].max(axis=1)

    def min_angle(self):
        """Smallest interior angle over all cells, in radians.

        Quality monitor only; nothing in the refinement path enforces it.
        """
        v = self.vertices[self.cells]
        angles = []
        for i in range(3):
            d1 = v[:, (i + 1) % 3] - v[:, i]
            d2 = v[:, (i + 2) % 3] - v[:, i]
            cosv = np.einsum("cd,cd->c", d1, d2) / (
                np.hypot(d1[:, 0], d1[:, 1]) * np.hypot(d2[:, 0], d2[:, 1])
            )
            angles.append(np.arccos(np.clip(cosv, -1.0, 1.0)))
        return float(np.min(angles))

    def vertex_to_cells(self):
        """CSR-style adjacency: (offsets, cell ids) sorted per vertex."""
        if self._vertex_cells is None:
            flat = self.cells.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.num_vertices)
            offsets = np.concatenate([[0], np.cumsum(counts)])
            self._vertex_cells = (offsets, order // 3)
        return self._vertex_cells


def vertex_patch(mesh, vertex):
    """Indices of the cells sharing the given vertex, ascending."""
    if not 0 <= vertex < mesh.num_vertices:
        raise IndexError(f"vertex {vertex} out of range")
    offsets, cells = mesh.vertex_to_cells()
    return cells[offsets[vertex] : offsets[vertex + 1]]


@dataclass(frozen=True)
class IndicatorField:
    """Nonnegative per-cell error indicators with an l2 global reduction."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("indicator field must be one-dimensional")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("indicators must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def global_value(self):
        return float(np.sqrt(np.sum(self.values**2)))


def _indicator_values(field):
    values = field.values if isinstance(field, IndicatorField) else np.asarray(field, dtype=float)
    return values


def _check_theta(theta):
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"marking fraction must be in (0, 1], got {theta!r}")


def mark_maximum(field, theta):
    """Cells whose indicator reaches theta times the largest one."""
    _check_theta(theta)
    values = _indicator_values(field)
    top = values.max(initial=0.0)
    if top <= 0.0:
        return np.empty(0, dtype=np.int64)
    return np.flatnonzero(values >= theta * top).astype(np.int64)


def mark_dorfler(field, theta):
    """Smallest prefix of the sorted indicators holding theta of the mass.

    The returned set M satisfies sum_M eta^2 >= theta * sum eta^2 and is
    of minimal cardinality except that cells tied with the last kept
    value are all included, which keeps the result independent of sort
    stability.
    """
    _check_theta(theta)
    values = _indicator_values(field)
    squares = values**2
    total = squares.sum()
    if total <= 0.0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-squares, kind="stable")
    cumsum = np.cumsum(squares[order])
    target = theta * total * (1.0 - 1e-12)
    cut = int(np.searchsorted(cumsum, target))
    # Include the whole tied block at the cutoff value.
    sorted_squares = squares[order]
    end = int(np.searchsorted(-sorted_squares, -sorted_squares[cut], side="right"))
    return np.sort(order[:end]).astype(np.int64)


def orient_longest_edge(vertices, cells):
    """Rotate cells (preserving orientation) to put the longest edge
    opposite local vertex 0, fixing the initial refinement edges."""
    vertices = np.asarray(vertices, dtype=float)
    cells = np.asarray(cells, dtype=np.int64)
    out = cells.copy()
    v = vertices[cells]
    lengths = np.stack(
        [np.linalg.norm(v[:, (i + 2) % 3] - v[:, (i + 1) % 3], axis=1) for i in range(3)],
        axis=1,
    )
    longest = np.argmax(lengths, axis=1)
    for shift in (1, 2):
        rows = longest == shift
        out[rows] = np.roll(cells[rows], -shift, axis=1)
    return out


def refine(mesh, marked):
    """Newest-vertex bisection of the marked cells with conformity closure.

    All three edges of a marked cell are bisected; the closure then adds
    refinement edges of any cell that would otherwise hang.  Returns a new
    mesh; boundary tags are inherited by split facets.
    """
    marked = np.unique(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.num_cells:
        raise IndexError("marked cell index out of range")

    split = np.zeros(len(mesh.facets), dtype=bool)
    split[mesh.cell_facets[marked].ravel()] = True
    while True:
        hit = split[mesh.cell_facets].any(axis=1)
        need = hit & ~split[mesh.cell_facets[:, 0]]
        if not need.any():
            break
        split[mesh.cell_facets[need, 0]] = True

    nv = mesh.num_vertices
    split_ids = np.flatnonzero(split)
    midpoint_of = np.full(len(mesh.facets), -1, dtype=np.int64)
    midpoint_of[split_ids] = nv + np.arange(len(split_ids))
    midpoints = mesh.vertices[mesh.facets[split_ids]].mean(axis=1)
    new_vertices = np.vstack([mesh.vertices, midpoints])

    cells = mesh.cells
    b = split[mesh.cell_facets]  # (nc, 3) per-lane split flags
    m = midpoint_of[mesh.cell_facets]
    counts = np.where(b[:, 0], 2 + b[:, 1] + b[:, 2], 1)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    new_cells = np.empty((offsets[-1], 3), dtype=np.int64)

    v0, v1, v2 = cells[:, 0], cells[:, 1], cells[:, 2]
    m0, m1, m2 = m[:, 0], m[:, 1], m[:, 2]

    def emit(rows, children):
        for j, child in enumerate(children):
            new_cells[offsets[rows] + j] = np.column_stack([c[rows] for c in child])

    emit(np.flatnonzero(~b[:, 0]), [(v0, v1, v2)])
    emit(np.flatnonzero(b[:, 0] & ~b[:, 1] & ~b[:, 2]),
         [(m0, v0, v1), (m0, v2, v0)])
    emit(np.flatnonzero(b[:, 0] & ~b[:, 1] & b[:, 2]),
         [(m2, m0, v0), (m2, v1, m0), (m0, v2, v0)])
    emit(np.flatnonzero(b[:, 0] & b[:, 1] & ~b[:, 2]),
         [(m0, v0, v1), (m1, m0, v2), (m1, v0, m0)])
    emit(np.flatnonzero(b[:, 0] & b[:, 1] & b[:, 2]),
         [(m2, m0, v0), (m2, v1, m0), (m1, m0, v2), (m1, v0, m0)])

    # Boundary tags: unsplit facets keep theirs, halves inherit the parent's.
    old_boundary = mesh.boundary_facets()
    tag_of = {}
    for fid in old_boundary:
        a, bb = mesh.facets[fid]
        t = int(mesh.facet_tags[fid])
        if split[fid]:
            mid = int(midpoint_of[fid])
            tag_of[(min(a, mid), max(a, mid))] = t
            tag_of[(min(bb, mid), max(bb, mid))] = t
        else:
            tag_of[(int(a), int(bb))] = t
    return Mesh(new_vertices, new_cells, boundary=tag_of)


def uniform_refine(mesh, times=1):
    for _ in range(times):
        mesh = refine(mesh, np.arange(mesh.num_cells))
    return mesh


def write_mesh(mesh, path, vertex_values=None):
    """ASCII export; optionally append one value per vertex.

    Format: a header line ``nv nc nbf``, then nv lines ``x y``, nc lines
    ``v0 v1 v2``, nbf lines ``va vb tag`` with tag D or N, and, when
    given, nv lines of values.
    """
    boundary = mesh.boundary_facets()
    lines = [f"{mesh.num_vertices} {mesh.num_cells} {len(boundary)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.cells]
    lines += [
        f"{mesh.facets[f, 0]} {mesh.facets[f, 1]} {_CHAR_FROM_TAG[int(mesh.facet_tags[f])]}"
        for f in boundary
    ]
    if vertex_values is not None:
        values = np.asarray(vertex_values, dtype=float)
        if values.shape != (mesh.num_vertices,):
            raise ValueError("need exactly one value per vertex")
        lines += [f"{v:.17g}" for v in values]
    with open(path, "w") as handle:
        handle.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Load a mesh written by :func:`write_mesh` (values are ignored)."""
    with open(path) as handle:
        tokens = handle.read().split("\n")
    rows = [line.split() for line in tokens if line.strip()]
    nv, nc, nbf = (int(t) for t in rows[0])
    vertices = np.array([[float(x) for x in r] for r in rows[1 : 1 + nv]])
    cells = np.array([[int(x) for x in r] for r in rows[1 + nv : 1 + nv + nc]])
    tags = {}
    for r in rows[1 + nv + nc : 1 + nv + nc + nbf]:
        a, b, tag = int(r[0]), int(r[1]), r[2]
        if tag not in _TAG_FROM_CHAR:
            raise ValueError(f"unknown boundary tag {tag!r}")
        tags[(min(a, b), max(a, b))] = _TAG_FROM_CHAR[tag]
    return Mesh(vertices, cells, boundary=tags)
