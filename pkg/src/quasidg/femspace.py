"""Broken polynomial spaces on triangles.

Shape functions are monomials in the reference coordinates, orthonormalised
on the reference triangle ``(0,0), (1,0), (0,1)``.  On a physical element the
mass matrix is therefore ``det(J) * I``, so elementwise L2 projections reduce
to scaled moments.

Scalar coefficient arrays have shape ``(nt, m)``; vector fields in the flux
space use ``(nt, 2, m)``.  Both are flattened element-major when a global
vector is needed.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import roots_jacobi

from . import _kernels


def dim_p(q):
    """Dimension of P^q on a triangle."""
    return (q + 1) * (q + 2) // 2


def space_dimension(q, n_elements):
    if q < 0:
        raise ValueError("degree must be non-negative")
    return n_elements * dim_p(q)


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray
    weights: np.ndarray
    degree: int


def triangle_rule(degree):
    """Collapsed Gauss rule on the reference triangle, exact to ``degree``.

    Conical product of Gauss-Legendre (in the collapsed direction) and
    Gauss-Jacobi(1, 0); all weights are positive and sum to 1/2.
    """
    n = max(1, (degree + 2) // 2)
    s, ws = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    t, wt = roots_jacobi(n, 1.0, 0.0)
    t = 0.5 * (t + 1.0)
    wt = 0.25 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    WS, WT = np.meshgrid(ws, wt, indexing="ij")
    pts = np.stack([(S * (1.0 - T)).ravel(), T.ravel()], axis=1)
    return Quadrature(pts, (WS * WT).ravel(), degree)


def edge_rule(degree):
    """Gauss-Legendre on [0, 1] exact to ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, w = np.polynomial.legendre.leggauss(n)
    return Quadrature(0.5 * (t + 1.0), 0.5 * w, degree)


def _exponents(q):
    return [(i - j, j) for i in range(q + 1) for j in range(i + 1)]


class Basis:
    """Orthonormal basis of P^q on the reference triangle."""

    def __init__(self, degree):
        if degree < 0:
            raise ValueError("degree must be non-negative")
        self.degree = degree
        self.dim = dim_p(degree)
        self._exp = np.array(_exponents(degree))
        quad = triangle_rule(2 * degree)
        P = self._monomials(quad.points)
        self._C = np.eye(self.dim)
        # phi = L^{-1} p, so phi^T = p^T L^{-T}; a second pass restores
        # orthonormality lost to monomial conditioning at higher degree
        for _ in range(2):
            Q = P @ self._C
            L = np.linalg.cholesky((Q * quad.weights[:, None]).T @ Q)
            self._C = self._C @ np.linalg.inv(L).T

    def _monomials(self, pts):
        x = np.asarray(pts, float)[:, 0] - 1.0 / 3.0
        y = np.asarray(pts, float)[:, 1] - 1.0 / 3.0
        return x[:, None] ** self._exp[:, 0] * y[:, None] ** self._exp[:, 1]

    def _monomial_grads(self, pts):
        x = np.asarray(pts, float)[:, 0] - 1.0 / 3.0
        y = np.asarray(pts, float)[:, 1] - 1.0 / 3.0
        ex, ey = self._exp[:, 0], self._exp[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(ex > 0, ex * x[:, None] ** np.maximum(ex - 1, 0), 0.0) * y[:, None] ** ey
            gy = x[:, None] ** ex * np.where(ey > 0, ey * y[:, None] ** np.maximum(ey - 1, 0), 0.0)
        return np.stack([gx, gy], axis=-1)

    def eval(self, pts):
        """Shape function values at reference points, shape ``(npts, m)``."""
        return self._monomials(pts) @ self._C

    def grad(self, pts):
        """Reference gradients, shape ``(npts, m, 2)``."""
        return np.einsum("pkd,km->pmd", self._monomial_grads(pts), self._C)


@dataclass
class DofField:
    """Coefficients of a broken polynomial field on a :class:`DGSpace`.

    ``coeffs`` has shape ``(nt, m)`` for scalar fields and ``(nt, 2, m)``
    for vector fields.
    """

    space: "DGSpace"
    coeffs: np.ndarray

    @property
    def is_vector(self):
        return self.coeffs.ndim == 3

    @property
    def vector(self):
        return self.coeffs.reshape(-1)

    def __len__(self):
        return self.coeffs.size

    def eval(self, element, points):
        return self.space.eval_field(self, element, points)


def as_coeffs(space, u, vector=False):
    """Coefficient array for ``u`` given as DofField, flat vector or array."""
    arr = u.coeffs if isinstance(u, DofField) else np.asarray(u, dtype=float)
    shape = (space.n_elements, 2, space.m) if vector else (space.n_elements, space.m)
    if arr.size != np.prod(shape):
        raise ValueError(f"coefficient vector of size {arr.size} does not match "
                         f"space shape {shape}")
    return arr.reshape(shape)


class DGSpace:
    """The broken space V_{h,q} together with its flux space (same degree).

    Parameters
    ----------
    mesh : Mesh
    degree : int
        Polynomial degree ``q``.
    quad_degree : int, optional
        Exactness of the triangle rule; defaults to ``2 q + 2``.
    edge_degree : int, optional
        Exactness of the edge rule; defaults to ``2 q + 1``.
    """

    def __init__(self, mesh, degree, quad_degree=None, edge_degree=None):
        self.mesh = mesh
        self.degree = int(degree)
        self.basis = Basis(self.degree)
        self.m = self.basis.dim
        self.quad = triangle_rule(2 * self.degree + 2 if quad_degree is None else quad_degree)
        self.equad = edge_rule(2 * self.degree + 1 if edge_degree is None else edge_degree)

        v = mesh.vertices[mesh.triangles]
        self.origin = v[:, 0]
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=2)
        self.jac = J
        self.det = np.linalg.det(J)
        self.jac_inv = np.linalg.inv(J)

        self.phi = self.basis.eval(self.quad.points)
        dref = self.basis.grad(self.quad.points)
        # physical gradient = J^{-T} grad_ref
        self.dphi = np.einsum("kjd,gmj->kgmd", self.jac_inv, dref)
        self.wdet = self.quad.weights[None, :] * self.det[:, None]
        self.xq = self.origin[:, None, :] + np.einsum("kdj,gj->kgd", J, self.quad.points)

        # gradient of a basis function expressed exactly in the same basis
        G = np.einsum("g,ga,gbj->jab", self.quad.weights, self.phi, dref)
        self.grad_op = np.einsum("kjd,jab->kdab", self.jac_inv, G)

        self._setup_edges()

    # ------------------------------------------------------------ geometry

    @property
    def n_elements(self):
        return self.mesh.n_elements

    @property
    def ndofs(self):
        return self.n_elements * self.m

    def to_reference(self, element, points):
        x = np.asarray(points, float).reshape(-1, 2) - self.origin[element]
        return x @ self.jac_inv[element].T

    def to_physical(self, element, ref_points):
        return self.origin[element] + np.asarray(ref_points, float) @ self.jac[element].T

    def _setup_edges(self):
        mesh = self.mesh
        ne, nq = mesh.n_edges, len(self.equad.points)
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        t = self.equad.points
        self.xe = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        self.we = self.equad.weights[None, :] * mesh.h_e[:, None]
        self.trace = np.zeros((ne, 2, nq, self.m))
        for side in (0, 1):
            idx = np.flatnonzero(mesh.edge_elements[:, side] >= 0)
            if len(idx) == 0:
                continue
            el = mesh.edge_elements[idx, side]
            rel = self.xe[idx] - self.origin[el][:, None, :]
            ref = np.einsum("kij,kgj->kgi", self.jac_inv[el], rel)
            self.trace[idx, side] = self.basis.eval(ref.reshape(-1, 2)).reshape(len(idx), nq, self.m)

    # ------------------------------------------------------------ fields

    def field(self, coeffs):
        return DofField(self, np.asarray(coeffs, float).reshape(
            (self.n_elements, 2, self.m) if np.size(coeffs) == 2 * self.ndofs
            else (self.n_elements, self.m)))

    def zeros(self, vector=False):
        shape = (self.n_elements, 2, self.m) if vector else (self.n_elements, self.m)
        return DofField(self, np.zeros(shape))

    def values(self, u):
        """Values at the volume quadrature points, ``(nt, nq)`` or ``(nt, nq, 2)``."""
        c = u.coeffs if isinstance(u, DofField) else np.asarray(u, float)
        if c.size == 2 * self.ndofs:
            return np.einsum("kda,ga->kgd", c.reshape(self.n_elements, 2, self.m), self.phi)
        return c.reshape(self.n_elements, self.m) @ self.phi.T

    def gradients(self, u):
        """Broken gradient at the volume quadrature points, ``(nt, nq, 2)``."""
        c = as_coeffs(self, u)
        return np.einsum("ka,kgad->kgd", c, self.dphi)

    def grad_coeffs(self, u):
        """Broken gradient as a flux-space coefficient array ``(nt, 2, m)``."""
        return np.einsum("kdab,kb->kda", self.grad_op, as_coeffs(self, u))

    def eval_field(self, u, element, points):
        """Values (and gradients for scalar fields) at physical points."""
        if not 0 <= element < self.n_elements:
            raise IndexError(f"element {element} out of range")
        ref = self.to_reference(element, points)
        phi = self.basis.eval(ref)
        c = u.coeffs if isinstance(u, DofField) else np.asarray(u, float)
        if c.size == 2 * self.ndofs:
            c = c.reshape(self.n_elements, 2, self.m)[element]
            return phi @ c.T
        c = c.reshape(self.n_elements, self.m)[element]
        grads = np.einsum("pmj,jd,m->pd", self.basis.grad(ref), self.jac_inv[element], c)
        return phi @ c, grads

    def integrate(self, values):
        """Integral over the domain of pointwise values ``(nt, nq)``."""
        return float(np.sum(self.wdet * values))

    # ------------------------------------------------------------ projections

    def moments(self, values):
        """``int_K f phi_a`` for values ``(nt, nq)`` or vector ``(nt, nq, 2)``."""
        values = np.asarray(values, float)
        if values.ndim == 3:
            w = self.wdet[:, None, :] * np.moveaxis(values, 2, 1)
        else:
            w = self.wdet * values
        return _kernels.moments(self.phi, w)

    def project_scalar(self, f):
        """Elementwise L2 projection of ``f(x, y)`` (the operator pi_h)."""
        vals = f(self.xq[..., 0], self.xq[..., 1]) * np.ones(self.xq.shape[:2])
        return DofField(self, self.moments(vals) / self.det[:, None])

    def galerkin_project_vector(self, xi):
        """Componentwise elementwise L2 projection of ``xi(x, y) -> (..., 2)``."""
        vals = np.asarray(xi(self.xq[..., 0], self.xq[..., 1]), float)
        vals = np.broadcast_to(vals, self.xq.shape)
        return DofField(self, self.moments(vals) / self.det[:, None, None])

    def project_values(self, values):
        """Projection of pointwise values sampled at the volume quadrature points."""
        values = np.asarray(values, float)
        det = self.det[:, None, None] if values.ndim == 3 else self.det[:, None]
        return self.moments(values) / det
