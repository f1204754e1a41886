"""Lifting operators mapping edge jump data into the flux space.

For an edge ``e`` the right lifting ``r^e(phi)`` is the flux-space field
supported on the elements adjacent to ``e`` with

    int_Omega r^e(phi) . tau dx = - int_e phi . {tau} ds      for all tau,

and the left lifting ``l^e(phi)`` satisfies the same identity with the scalar
datum paired against the normal jump of ``tau``.  Because the basis is
orthonormal, each local mass system is diagonal and the liftings are
closed-form moment expressions.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .femspace import DGSpace, DofField, as_coeffs
from .mesh import N_NEIGHBOURS


@dataclass(frozen=True)
class TraceConstants:
    C_r: float
    C_R: float


def _alpha(space):
    return np.where(space.mesh.boundary, 1.0, 0.5)


def edge_moments(space, e, side, values):
    """``int_e values * phi_a`` on the given side's element; ``(..., m)``."""
    P = space.trace[e, side]
    return np.einsum("g,g...,ga->...a", space.we[e], values, P)


def lift_edge_r(space, e, phi):
    """Lift vector trace data ``phi`` (shape ``(nq_e, 2)``) from edge ``e``."""
    phi = np.asarray(phi, float)
    if phi.shape != (len(space.equad.points), 2):
        raise ValueError("trace data must be given at the edge quadrature points")
    out = np.zeros((space.n_elements, 2, space.m))
    alpha = 1.0 if space.mesh.boundary[e] else 0.5
    for side in (0, 1):
        k = space.mesh.edge_elements[e, side]
        if k < 0:
            continue
        mom = edge_moments(space, e, side, phi)  # (2, m)
        out[k] -= alpha / space.det[k] * mom
    return DofField(space, out)


def lift_edge_l(space, e, phi):
    """Lift scalar trace data ``phi`` (shape ``(nq_e,)``) from interior edge ``e``."""
    if space.mesh.boundary[e]:
        raise ValueError("the left lifting is defined on interior edges only")
    phi = np.asarray(phi, float)
    out = np.zeros((space.n_elements, 2, space.m))
    nu = space.mesh.normals[e]
    for side, sign in ((0, 1.0), (1, -1.0)):
        k = space.mesh.edge_elements[e, side]
        mom = edge_moments(space, e, side, phi)  # (m,)
        out[k] -= (sign / space.det[k]) * nu[:, None] * mom[None, :]
    return DofField(space, out)


def jump_traces(space, u):
    """Scalar trace difference ``u_K - u_K'`` at edge points, ``(ne, nq)``.

    The vector jump is this times the owner normal; on boundary edges the
    neighbour trace is zero.
    """
    c = as_coeffs(space, u)
    el = space.mesh.edge_elements
    t0 = np.einsum("ega,ea->eg", space.trace[:, 0], c[el[:, 0]])
    t1 = np.einsum("ega,ea->eg", space.trace[:, 1], c[np.maximum(el[:, 1], 0)])
    t1[space.mesh.boundary] = 0.0
    return t0 - t1


def lift_blocks(space):
    """Per-edge blocks ``B[e, S, T]`` of shape ``(ne, 2, 2, m, m)``.

    ``r^e([[u]])`` restricted to side ``S`` has component ``d`` equal to
    ``nu_d * sum_T B[e, S, T] @ u_T`` with ``nu`` the owner normal.  Blocks
    touching a missing neighbour are zero.
    """
    P = space.trace  # (ne, 2, nq, m)
    W = space.we
    el = space.mesh.edge_elements
    alpha = _alpha(space)
    det = np.where(el >= 0, space.det[np.maximum(el, 0)], 1.0)
    sign = np.array([1.0, -1.0])
    PtWP = np.einsum("esga,eg,etgb->estab", P, W, P)
    B = -(alpha[:, None, None] / det[:, :, None])[..., None, None] * PtWP * sign[None, None, :, None, None]
    B[el[:, 1] < 0, 1] = 0.0
    B[el[:, 1] < 0, :, 1] = 0.0
    return B


def _flux_index(space, k, d):
    return (k * 2 + d) * space.m


def lifting_matrix_r(space, blocks=None):
    """Sparse map ``u -> r([[u]])`` from scalar to flux coefficients."""
    B = lift_blocks(space) if blocks is None else blocks
    return _assemble_lift(space, B, space.mesh.normals[:, None, :].repeat(2, axis=1))


def lifting_matrix_l(space, beta, blocks=None):
    """Sparse map ``u -> l(beta . [[u]])`` for per-edge constant ``beta``.

    ``beta`` has shape ``(ne, 2)``; boundary rows are ignored.
    """
    B = lift_blocks(space) if blocks is None else blocks
    beta = np.asarray(beta, float).reshape(space.mesh.n_edges, 2)
    nu = space.mesh.normals
    bn = np.einsum("ed,ed->e", beta, nu)
    bn[space.mesh.boundary] = 0.0
    # on side S: l^e(phi) = 2 r^e(phi nu_S) with phi = (beta . nu) (u_0 - u_1)
    vec = np.stack([nu, -nu], axis=1) * (2.0 * bn)[:, None, None]
    return _assemble_lift(space, B, vec)


def _assemble_lift(space, B, vec):
    # vec[e, S, d] multiplies block B[e, S, T] in component d
    m = space.m
    el = space.mesh.edge_elements
    rows, cols, vals = [], [], []
    a = np.arange(m)
    for S in (0, 1):
        for T in (0, 1):
            mask = (el[:, S] >= 0) & (el[:, T] >= 0)
            if not mask.any():
                continue
            eS = el[mask, S]
            eT = el[mask, T]
            blk = B[mask, S, T]
            for d in (0, 1):
                r = (eS * 2 + d)[:, None, None] * m + a[None, :, None]
                c = eT[:, None, None] * m + a[None, None, :]
                v = vec[mask, S, d][:, None, None] * blk
                rows.append(np.broadcast_to(r, v.shape).ravel())
                cols.append(np.broadcast_to(c, v.shape).ravel())
                vals.append(v.ravel())
    n = space.ndofs
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(2 * n, n))


def edge_lift_coeffs(space, u, blocks=None):
    """``r^e([[u]])`` for every edge on both adjacent elements, ``(ne, 2, 2, m)``."""
    B = lift_blocks(space) if blocks is None else blocks
    c = as_coeffs(space, u)
    el = space.mesh.edge_elements
    cu = np.stack([c[el[:, 0]], c[np.maximum(el[:, 1], 0)]], axis=1)
    s = np.einsum("estab,etb->esa", B, cu)
    return space.mesh.normals[:, None, :, None] * s[:, :, None, :]


def lift_global(space, u, beta=None):
    """Global liftings ``r([[u]])`` and ``l(beta . [[u]])`` as flux fields.

    ``r`` is the superposition of every edge lifting; ``l`` runs over
    interior edges only and is zero when ``beta`` is None.
    """
    B = lift_blocks(space)
    r = lifting_matrix_r(space, B) @ as_coeffs(space, u).ravel()
    if beta is None:
        l = np.zeros_like(r)
    else:
        l = lifting_matrix_l(space, beta, B) @ as_coeffs(space, u).ravel()
    shape = (space.n_elements, 2, space.m)
    return DofField(space, r.reshape(shape)), DofField(space, l.reshape(shape))


def edge_lift_norms_sq(space, u, blocks=None):
    """``||r^e([[u]])||^2_{L2}`` per edge."""
    ce = edge_lift_coeffs(space, u, blocks)
    el = space.mesh.edge_elements
    det = np.where(el >= 0, space.det[np.maximum(el, 0)], 0.0)
    return np.einsum("es,esda->e", det, ce ** 2)


def estimate_trace_constants(space_or_mesh, q=None, edges=None):
    """Sharp constants of ``C_r h^-1/2 |[[w]]| <= |r^e([[w]])| <= C_R h^-1/2 |[[w]]|``.

    For each edge the ratio is maximised / minimised over the jump space
    (traces of degree ``q`` on the edge) by a generalised eigenproblem; the
    result is the extreme over all edges (or over ``edges`` when given).
    """
    space = space_or_mesh if isinstance(space_or_mesh, DGSpace) else DGSpace(space_or_mesh, q)
    mesh = space.mesh
    # Legendre-type edge basis of degree q sampled at the edge points
    t = space.equad.points
    G = np.polynomial.legendre.legvander(2.0 * t - 1.0, space.degree)  # (nq, q+1)
    lo, hi = np.inf, 0.0
    alpha = _alpha(space)
    for e in (range(mesh.n_edges) if edges is None else edges):
        W = space.we[e]
        den = (G * W[:, None]).T @ G / mesh.h_e[e]
        num = np.zeros_like(den)
        for side in (0, 1):
            k = mesh.edge_elements[e, side]
            if k < 0:
                continue
            X = space.trace[e, side].T @ (W[:, None] * G)  # (m, q+1)
            num += alpha[e] ** 2 / space.det[k] * X.T @ X
        ev = scipy.linalg.eigh(num, den, eigvals_only=True)
        lo = min(lo, ev.min())
        hi = max(hi, ev.max())
    return TraceConstants(C_r=float(np.sqrt(max(lo, 0.0))), C_R=float(np.sqrt(hi)))


__all__ = [
    "N_NEIGHBOURS", "TraceConstants", "edge_lift_coeffs", "edge_lift_norms_sq",
    "estimate_trace_constants", "jump_traces", "lift_blocks", "lift_edge_l",
    "lift_edge_r", "lift_global", "lifting_matrix_l", "lifting_matrix_r",
]
