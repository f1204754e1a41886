"""Conforming triangulations and their edge skeleton.

Local edge ``i`` of a triangle joins its vertices ``i`` and ``(i + 1) % 3``.
Every edge stores one outward unit normal, taken from its *owner* element
(side 0); the neighbour (side 1) uses the opposite normal.
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_NEIGHBOURS = 3


class MeshError(ValueError):
    """Raised for malformed or invalid mesh input."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangular mesh with edge connectivity.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    edges : (ne, 2) int array
        Vertex pair ordered along the owner's counterclockwise traversal.
    edge_elements : (ne, 2) int array
        Owner and neighbour element; neighbour is -1 on the boundary.
    edge_sides : (ne, 2) int array
        Local edge index within owner / neighbour (-1 on the boundary).
    element_edges : (nt, 3) int array
    normals : (ne, 2) float array
        Unit normal pointing out of the owner element.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    edge_sides: np.ndarray
    element_edges: np.ndarray
    normals: np.ndarray
    areas: np.ndarray = field(repr=False)
    h_kappa: np.ndarray = field(repr=False)
    h_e: np.ndarray = field(repr=False)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary(self):
        """Boolean mask of boundary edges."""
        return self.edge_elements[:, 1] < 0

    @property
    def interior(self):
        return ~self.boundary

    @property
    def h(self):
        return float(self.h_kappa.max())

    @property
    def quasi_uniformity(self):
        """Ratio ``h / min h_kappa``."""
        return float(self.h_kappa.max() / self.h_kappa.min())

    @property
    def bounded_variation(self):
        """Largest ratio ``h_K / h_K'`` over element pairs sharing an edge."""
        inner = self.edge_elements[self.interior]
        if len(inner) == 0:
            return 1.0
        a = self.h_kappa[inner[:, 0]]
        b = self.h_kappa[inner[:, 1]]
        return float(np.maximum(a / b, b / a).max())

    def neighbours(self, k):
        """Elements sharing an edge with element ``k``."""
        out = []
        for e in self.element_edges[k]:
            owner, other = self.edge_elements[e]
            nb = other if owner == k else owner
            if nb >= 0:
                out.append(int(nb))
        return out

    def element_normals(self):
        """Outward unit normals per element side, shape ``(nt, 3, 2)``."""
        out = np.empty((self.n_elements, 3, 2))
        for side in (0, 1):
            mask = self.edge_elements[:, side] >= 0
            sign = 1.0 if side == 0 else -1.0
            out[self.edge_elements[mask, side], self.edge_sides[mask, side]] = (
                sign * self.normals[mask])
        return out

    def jump_average(self, e, left, right=None):
        """Average and jump of traces on edge ``e``; see :func:`trace_jump_average`."""
        if right is None and not self.boundary[e]:
            raise ValueError(f"edge {e} is interior; both traces are required")
        if right is not None and self.boundary[e]:
            raise ValueError(f"edge {e} is a boundary edge; only one trace exists")
        return trace_jump_average(self.normals[e], left, right)


def trace_jump_average(normal, left, right=None):
    """Average and jump of a trace pair at common edge quadrature points.

    ``left`` is the owner trace and ``normal`` the owner's outward normal.
    Scalar traces have shape ``(nq,)`` and yield a scalar average and a
    vector jump ``w_K nu_K + w_K' nu_K'``.  Vector traces have shape
    ``(nq, 2)`` and yield a vector average and the scalar normal jump.
    Without ``right`` the edge is on the boundary: the jump is ``w_K nu_K``
    and the average is the owner trace itself.
    """
    nu = np.asarray(normal, dtype=float)
    left = np.asarray(left, dtype=float)
    if right is not None:
        right = np.asarray(right, dtype=float)
        if right.shape != left.shape:
            raise ValueError(
                f"mismatched quadrature-point counts: {left.shape} vs {right.shape}")
    vector = left.ndim == 2
    if vector and left.shape[1] != 2:
        raise ValueError("vector traces must have shape (nq, 2)")
    if right is None:
        if vector:
            return left.copy(), left @ nu
        return left.copy(), left[:, None] * nu
    avg = 0.5 * (left + right)
    if vector:
        return avg, (left - right) @ nu
    return avg, (left - right)[:, None] * nu


def _edge_lengths(v, tri):
    p = v[tri]
    d = p[:, [1, 2, 0]] - p
    return np.hypot(d[..., 0], d[..., 1])


def from_arrays(vertices, triangles, check_hanging=True):
    """Build a :class:`Mesh`, validating every invariant.

    Raises
    ------
    MeshError
        On inverted elements, non-manifold edges or hanging nodes.
    """
    v = np.array(vertices, dtype=float).reshape(-1, 2)
    tri = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if len(tri) == 0:
        raise MeshError("mesh has no triangles")
    if tri.min() < 0 or tri.max() >= len(v):
        raise MeshError("triangle references a vertex index out of range")

    p = v[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    bad = np.flatnonzero(areas <= 0.0)
    if len(bad):
        raise MeshError(f"inverted element {int(bad[0])} (non-positive area)")

    nt = len(tri)
    a = tri.ravel()
    b = tri[:, [1, 2, 0]].ravel()
    keys = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                      return_counts=True)
    inverse = inverse.ravel()
    if counts.max() > 2:
        e = int(np.argmax(counts))
        raise MeshError(f"non-manifold edge {tuple(uniq[e])} shared by "
                        f"{int(counts[e])} triangles")

    ne = len(uniq)
    owner_slot = np.full(ne, -1)
    other_slot = np.full(ne, -1)
    # slots are visited in element order, so the owner is the lowest element
    for slot in range(3 * nt):
        e = inverse[slot]
        if owner_slot[e] < 0:
            owner_slot[e] = slot
        else:
            other_slot[e] = slot

    has_other = other_slot >= 0
    if np.any(has_other):
        # conforming neighbours traverse a shared edge in opposite directions
        same_dir = a[owner_slot[has_other]] == a[other_slot[has_other]]
        if np.any(same_dir):
            raise MeshError("adjacent triangles have inconsistent orientation")

    edge_elements = np.stack([owner_slot // 3,
                              np.where(has_other, other_slot // 3, -1)], axis=1)
    edge_sides = np.stack([owner_slot % 3,
                           np.where(has_other, other_slot % 3, -1)], axis=1)
    edges = np.stack([a[owner_slot], b[owner_slot]], axis=1)
    element_edges = inverse.reshape(nt, 3)

    t = v[edges[:, 1]] - v[edges[:, 0]]
    h_e = np.hypot(t[:, 0], t[:, 1])
    normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / h_e[:, None]

    if check_hanging:
        _check_hanging(v, edges[~has_other], h_e[~has_other])

    arrays = dict(vertices=v, triangles=tri, edges=edges,
                  edge_elements=edge_elements, edge_sides=edge_sides,
                  element_edges=element_edges, normals=normals, areas=areas,
                  h_kappa=_edge_lengths(v, tri).max(axis=1), h_e=h_e)
    for arr in arrays.values():
        arr.flags.writeable = False
    return Mesh(**arrays)


def _check_hanging(v, bedges, lengths):
    # a vertex strictly inside a one-sided edge is a hanging node
    if len(bedges) == 0:
        return
    a = v[bedges[:, 0]]
    t = v[bedges[:, 1]] - a
    rel = v[None, :, :] - a[:, None, :]
    s = np.einsum("eid,ed->ei", rel, t) / lengths[:, None] ** 2
    cross = rel[..., 0] * t[:, None, 1] - rel[..., 1] * t[:, None, 0]
    tol = 1e-12 * lengths[:, None]
    hit = (np.abs(cross) / lengths[:, None] <= tol) & (s > 1e-12) & (s < 1 - 1e-12)
    if np.any(hit):
        e, i = np.argwhere(hit)[0]
        raise MeshError(f"hanging node: vertex {int(i)} lies inside edge "
                        f"{tuple(int(x) for x in bedges[e])}")


def build_structured(n):
    """Uniform ``n x n`` grid on the unit square, cells split along the
    lower-left to upper-right diagonal (``2 n^2`` triangles)."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_arrays(vertices, triangles, check_hanging=False)


def load_mesh(path):
    """Read the text format written by :func:`save_mesh`.

    The file holds a line ``vertices N`` followed by ``N`` lines ``x y``, then
    ``triangles M`` followed by ``M`` lines ``i j k`` (0-based, counterclockwise).
    """
    lines = [ln.split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    try:
        pos = 0
        vertices, pos = _read_block(lines, pos, "vertices", 2, float)
        triangles, pos = _read_block(lines, pos, "triangles", 3, int)
    except (ValueError, IndexError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from None
    if pos != len(lines):
        raise MeshError(f"malformed mesh file {path}: trailing content")
    return from_arrays(vertices, triangles)


def _read_block(lines, pos, keyword, width, kind):
    head = lines[pos]
    if len(head) != 2 or head[0] != keyword:
        raise ValueError(f"expected '{keyword} <count>' at line {pos + 1}")
    count = int(head[1])
    rows = lines[pos + 1:pos + 1 + count]
    if len(rows) != count or any(len(r) != width for r in rows):
        raise ValueError(f"expected {count} rows of {width} values after '{keyword}'")
    return np.array([[kind(x) for x in r] for r in rows]).reshape(-1, width), pos + 1 + count


def save_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"vertices {len(mesh.vertices)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_elements}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
