"""Independent reference computations used as test oracles.

Traces are evaluated through ``DGSpace.eval_field`` at physical edge points
and averages / jumps through ``trace_jump_average``, so none of the cached
trace tables or lifting blocks of the production path are reused.
"""
import numpy as np
import scipy.sparse as sp

from quasidg.femspace import DGSpace, triangle_rule
from quasidg.mesh import trace_jump_average


def volume_inner(space, f, g):
    """``int f . g`` for two flux-space coefficient arrays."""
    return float(np.sum(space.wdet[..., None] * space.values(f) * space.values(g)))


def edge_traces(space, c, e):
    """Owner / neighbour traces of field ``c`` at the edge points of ``e``."""
    pts = space.xe[e]
    out = []
    for side in (0, 1):
        k = space.mesh.edge_elements[e, side]
        if k < 0:
            out.append(None)
            continue
        val = space.eval_field(c, k, pts)
        out.append(val[0] if isinstance(val, tuple) else val)
    return out


def r_rhs(space, u, tau, edges=None):
    """``-sum_e int_e [[u]] . {tau} ds``."""
    total = 0.0
    mesh = space.mesh
    for e in (range(mesh.n_edges) if edges is None else edges):
        u0, u1 = edge_traces(space, u, e)
        t0, t1 = edge_traces(space, tau, e)
        _, ju = trace_jump_average(mesh.normals[e], u0, u1)
        at, _ = trace_jump_average(mesh.normals[e], t0, t1)
        total -= space.we[e] @ np.sum(ju * at, axis=1)
    return total


def edge_r_rhs(space, e, phi, tau):
    """``-int_e phi . {tau}`` for vector data ``phi`` at the edge points."""
    t0, t1 = edge_traces(space, tau, e)
    at, _ = trace_jump_average(space.mesh.normals[e], t0, t1)
    return -float(space.we[e] @ np.sum(phi * at, axis=1))


def edge_l_rhs(space, e, phi, tau):
    """``-int_e phi [[tau]]`` for scalar data ``phi`` on an interior edge."""
    t0, t1 = edge_traces(space, tau, e)
    _, jt = trace_jump_average(space.mesh.normals[e], t0, t1)
    return -float(space.we[e] @ (phi * jt))


def l_rhs(space, u, tau, beta):
    """``-sum_interior int_e (beta . [[u]]) [[tau]] ds``."""
    total = 0.0
    mesh = space.mesh
    for e in np.flatnonzero(mesh.interior):
        u0, u1 = edge_traces(space, u, e)
        t0, t1 = edge_traces(space, tau, e)
        _, ju = trace_jump_average(mesh.normals[e], u0, u1)
        _, jt = trace_jump_average(mesh.normals[e], t0, t1)
        total -= space.we[e] @ ((ju @ beta[e]) * jt)
    return total


def dense_edge_lifting(mesh, p, e, phi_fn):
    """Brute-force ``r^e`` with a physical monomial basis and a dense solve.

    Returns a function evaluating the lifted field at points of a given
    element.  ``phi_fn(t)`` gives the vector datum at edge parameter ``t``.
    """
    exps = [(i - j, j) for i in range(p + 1) for j in range(i + 1)]
    rule = triangle_rule(2 * p + 2)
    t, w = np.polynomial.legendre.leggauss(p + 4)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    a, b = mesh.vertices[mesh.edges[e]]
    xe = a + t[:, None] * (b - a)
    we = w * np.linalg.norm(b - a)
    alpha = 1.0 if mesh.boundary[e] else 0.5
    phi = phi_fn(t)
    sol = {}
    for side in (0, 1):
        k = mesh.edge_elements[e, side]
        if k < 0:
            continue
        v = mesh.vertices[mesh.triangles[k]]
        J = np.stack([v[1] - v[0], v[2] - v[0]], axis=1)
        x = v[0] + rule.points @ J.T
        wq = rule.weights * abs(np.linalg.det(J))
        mono = lambda pts: np.stack([pts[:, 0] ** i * pts[:, 1] ** j for i, j in exps], axis=1)
        A = mono(x)
        M = A.T @ (wq[:, None] * A)
        rhs = -alpha * (mono(xe) * we[:, None]).T @ phi  # (nb, 2)
        sol[k] = (np.linalg.solve(M, rhs), mono)
    return sol


def textbook_sipg(space, mu):
    """Linear SIPG matrix from element and face integrals.

    ``sum_K int grad u . grad v - sum_e int ({grad u}.[[v]] + {grad v}.[[u]])
    + sum_e mu/h_e int [[u]].[[v]]`` assembled entry-block by entry-block.
    """
    mesh = space.mesh
    m = space.m
    n = space.ndofs
    A = np.zeros((n, n))
    rule = space.quad
    for k in range(mesh.n_elements):
        v = mesh.vertices[mesh.triangles[k]]
        J = np.stack([v[1] - v[0], v[2] - v[0]], axis=1)
        G = space.basis.grad(rule.points) @ np.linalg.inv(J)  # (nq, m, 2)
        wq = rule.weights * np.linalg.det(J)
        A[k * m:(k + 1) * m, k * m:(k + 1) * m] += np.einsum("g,gad,gbd->ab", wq, G, G)
    for e in range(mesh.n_edges):
        nu = mesh.normals[e]
        pts = space.xe[e]
        sides = [(s, mesh.edge_elements[e, s]) for s in (0, 1) if mesh.edge_elements[e, s] >= 0]
        half = 0.5 if len(sides) == 2 else 1.0
        vals, grads = {}, {}
        for s, k in sides:
            ref = space.to_reference(k, pts)
            vals[s] = space.basis.eval(ref)
            grads[s] = space.basis.grad(ref) @ space.jac_inv[k]
        sign = {0: 1.0, 1: -1.0}
        for s, k in sides:  # test side
            for t, kk in sides:  # trial side
                jv = sign[s] * vals[s]
                ju = sign[t] * vals[t]
                avg_gu = half * grads[t] @ nu  # {grad u}.nu
                avg_gv = half * grads[s] @ nu
                blk = (-np.einsum("g,ga,gb->ab", space.we[e], jv, avg_gu)
                       - np.einsum("g,ga,gb->ab", space.we[e], avg_gv, ju)
                       + mu / mesh.h_e[e] * np.einsum("g,ga,gb->ab", space.we[e], jv, ju))
                A[k * m:(k + 1) * m, kk * m:(kk + 1) * m] += blk
    return sp.csr_matrix(A)


class TraceTable:
    """Basis values at every edge point, built once from ``to_reference``.

    Vectorised twin of :func:`edge_traces` for many random inputs.
    """

    def __init__(self, space):
        mesh = space.mesh
        self.space = space
        self.el = mesh.edge_elements
        self.T = np.zeros((mesh.n_edges, 2) + space.equad.points.shape[:1] + (space.m,))
        for e in range(mesh.n_edges):
            for s in (0, 1):
                k = self.el[e, s]
                if k >= 0:
                    self.T[e, s] = space.basis.eval(space.to_reference(k, space.xe[e]))
        self.present = (self.el >= 0).astype(float)
        self.sign = np.array([1.0, -1.0])
        self.half = np.where(mesh.boundary, 1.0, 0.5)

    def _trace(self, c, s):
        k = np.maximum(self.el[:, s], 0)
        return np.einsum("ega,e...a->eg...", self.T[:, s], c[k]) * \
            self.present[:, s].reshape((-1, 1) + (1,) * (c.ndim - 2))

    def scalar_jump(self, u):
        """``u_0 - u_1`` (zero outside) so that ``[[u]] = jump * nu``."""
        return self._trace(u, 0) - self._trace(u, 1)

    def avg(self, tau):
        return self.half[:, None, None] * (self._trace(tau, 0) + self._trace(tau, 1))

    def normal_jump(self, tau):
        nu = self.space.mesh.normals
        return np.einsum("egd,ed->eg", self._trace(tau, 0) - self._trace(tau, 1), nu)

    def r_rhs(self, u, tau):
        nu = self.space.mesh.normals
        at = np.einsum("egd,ed->eg", self.avg(tau), nu)
        return -float(np.sum(self.space.we * self.scalar_jump(u) * at))

    def l_rhs(self, u, tau, beta):
        nu = self.space.mesh.normals
        inner = self.space.mesh.interior
        bn = np.einsum("ed,ed->e", beta, nu)
        val = self.space.we * bn[:, None] * self.scalar_jump(u) * self.normal_jump(tau)
        return -float(np.sum(val[inner]))
