"""Primal DG forms for BR1, BR2, SIPG and LDG and their Frechet derivatives.

With ``Theta = D + R`` (broken gradient plus global right lifting, plus the
left lifting of ``beta . [[u]]`` for LDG) the forms read, in operator form,

    BR1:  Theta^T M(a(u, Theta u))
    LDG:  Theta^T M(a(u, Theta u)) + S u
    SIPG: D^T M(a(u, Theta u)) + R^T M(a(u, D u)) + S u
    BR2:  D^T M(a(u, Theta u)) + R^T M(a(u, D u)) + sum_e eta_e R_e^T M_e(a(u, R_e u))

where ``M(.)`` takes flux-space moments and ``S`` is the scaled jump penalty.
Products such as ``R^T M(a)`` use the lifting identity, so ``r([[phi_i]])``
is never formed per test function.
"""
from dataclasses import dataclass, field
from typing import Union

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .diffusion import DiffusionModel, get_model
from .femspace import DGSpace, DofField, as_coeffs
from .lifting import lift_blocks, lifting_matrix_l, lifting_matrix_r

FAMILIES = ("br1", "br2", "sipg", "ldg")


class SchemeError(ValueError):
    pass


@dataclass
class SchemeConfig:
    """Flux family, degree and stabilisation.

    ``penalty`` is ``"auto"``, a positive number or a per-edge array; it
    is ``mu_e`` for SIPG/LDG and ``eta_e`` for BR2 and ignored for BR1.
    ``beta`` (LDG only) is ``"zero"``, ``"switch"`` (``beta = nu_K / 2``
    with ``nu_K`` the owner normal), a number ``c`` (``beta = c nu_K``) or an
    ``(ne, 2)`` array.
    """

    family: str = "sipg"
    degree: int = 1
    penalty: Union[str, float, np.ndarray] = "auto"
    beta: Union[str, float, np.ndarray] = "zero"
    safety: float = 1.5

    def __post_init__(self):
        self.family = self.family.lower()
        if self.family not in FAMILIES:
            raise SchemeError(f"unknown scheme {self.family!r}; choose from {FAMILIES}")
        if int(self.degree) < 1:
            raise SchemeError("degree must be >= 1")
        self.degree = int(self.degree)
        if not isinstance(self.penalty, str):
            p = np.asarray(self.penalty, float)
            if self.family != "br1" and not np.all(p > 0):
                raise SchemeError("penalty parameters must be strictly positive")
        elif self.penalty != "auto":
            raise SchemeError(f"penalty must be 'auto' or a number, got {self.penalty!r}")


def _block_diag(blocks):
    """CSR block-diagonal matrix from ``(nb, r, c)`` blocks."""
    nb, r, c = blocks.shape
    bsr = sp.bsr_matrix((blocks, np.arange(nb), np.arange(nb + 1)), shape=(nb * r, nb * c))
    return bsr.tocsr()


def _edge_blocks(space, blocks):
    """Sparse matrix from ``blocks[e, S, T]`` coupling element ``el[e,S]`` to ``el[e,T]``."""
    m = space.m
    el = space.mesh.edge_elements
    a = np.arange(m)
    rows, cols, vals = [], [], []
    for S in (0, 1):
        for T in (0, 1):
            mask = (el[:, S] >= 0) & (el[:, T] >= 0)
            if not mask.any():
                continue
            v = blocks[mask, S, T]
            r = el[mask, S][:, None, None] * m + a[None, :, None]
            c = el[mask, T][:, None, None] * m + a[None, None, :]
            rows.append(np.broadcast_to(r, v.shape).ravel())
            cols.append(np.broadcast_to(c, v.shape).ravel())
            vals.append(v.ravel())
    n = space.ndofs
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def jump_penalty_matrix(space, mu):
    """``sum_e mu_e / h_e int_e [[u]] . [[v]] ds`` as a sparse matrix."""
    mu = np.broadcast_to(np.asarray(mu, float), (space.mesh.n_edges,))
    sign = np.array([1.0, -1.0])
    P = space.trace
    blk = np.einsum("esga,eg,etgb->estab", P, space.we, P)
    blk *= (mu / space.mesh.h_e)[:, None, None, None, None]
    blk *= (sign[:, None] * sign[None, :])[None, :, :, None, None]
    return _edge_blocks(space, blk)


def beta_field(space, beta):
    nu = space.mesh.normals
    if isinstance(beta, str):
        if beta == "zero":
            return np.zeros_like(nu)
        if beta == "switch":
            return 0.5 * nu
        raise SchemeError(f"beta must be 'zero', 'switch', a number or an array, got {beta!r}")
    beta = np.asarray(beta, float)
    if beta.ndim == 0:
        return float(beta) * nu
    return np.broadcast_to(beta, nu.shape).copy()


class DGScheme:
    """Assembler of the nonlinear residual and its Jacobian.

    Parameters
    ----------
    space : DGSpace
    model : DiffusionModel or str
    config : SchemeConfig
    """

    def __init__(self, space, model, config):
        if isinstance(model, str):
            model = get_model(model)
        if space.degree != config.degree:
            raise SchemeError(f"space degree {space.degree} != scheme degree {config.degree}")
        self.space = space
        self.model = model
        self.config = config
        self.family = config.family
        n_edges = space.mesh.n_edges

        self.blocks = lift_blocks(space)
        self.D = _block_diag(space.grad_op.reshape(space.n_elements, 2 * space.m, space.m))
        self.R = lifting_matrix_r(space, self.blocks)
        self.beta = beta_field(space, config.beta) if self.family == "ldg" else np.zeros((n_edges, 2))
        if self.family == "ldg" and np.any(self.beta):
            self.L = lifting_matrix_l(space, self.beta, self.blocks)
            self.Theta = (self.D + self.R + self.L).tocsr()
        else:
            self.L = None
            self.Theta = (self.D + self.R).tocsr()

        self.penalty = self._resolve_penalty()
        if self.family in ("sipg", "ldg"):
            self.S = jump_penalty_matrix(space, self.penalty)
        else:
            self.S = None

    def _resolve_penalty(self):
        n_edges = self.space.mesh.n_edges
        if self.family == "br1":
            return np.zeros(n_edges)
        p = self.config.penalty
        if isinstance(p, str):
            from .analysis import penalty_rule_for, auto_penalty
            rule = penalty_rule_for(self.family, self.model, self.space, self.config.safety)
            return auto_penalty(rule, self.space.mesh)
        return np.broadcast_to(np.asarray(p, float), (n_edges,)).copy()

    # ------------------------------------------------------------ pieces

    @property
    def ndofs(self):
        return self.space.ndofs

    def _vec(self, u):
        return as_coeffs(self.space, u).ravel()

    def theta_coeffs(self, u):
        """Coefficients of ``theta_h(u)`` in the flux space, ``(nt, 2, m)``."""
        sp_ = self.space
        return (self.Theta @ self._vec(u)).reshape(sp_.n_elements, 2, sp_.m)

    def theta_of(self, u):
        return DofField(self.space, self.theta_coeffs(u))

    def sigma_coeffs(self, u):
        """``sigma_h = G_h(a(u_h, theta_h))`` as flux coefficients."""
        sp_ = self.space
        a = self.model.flux(sp_.xq, sp_.values(u), sp_.values(self.theta_coeffs(u)))
        return sp_.project_values(a)

    def load(self, f):
        """``F(phi_i) = int f phi_i``; ``f`` is callable ``f(x, y)`` or None."""
        sp_ = self.space
        if f is None:
            return np.zeros(sp_.ndofs)
        if hasattr(f, "forcing"):
            f = f.forcing
        vals = np.asarray(f(sp_.xq[..., 0], sp_.xq[..., 1]), float) * np.ones(sp_.xq.shape[:2])
        return sp_.moments(vals).ravel()

    def _model(self, X, U, Z, where):
        try:
            out = self.model.evaluate(X, U, Z)
        except FloatingPointError as exc:
            raise FloatingPointError(f"{exc} while evaluating {where}") from None
        bad = ~np.isfinite(out[0])
        if bad.any():
            idx = np.argwhere(bad)[0]
            raise FloatingPointError(f"non-finite model output in {where} at index {tuple(idx[:-1])}")
        return out

    def _states(self, u):
        sp_ = self.space
        c = as_coeffs(sp_, u)
        U = c @ sp_.phi.T
        theta = self.theta_coeffs(c)
        Zt = np.einsum("kda,ga->kgd", theta, sp_.phi)
        return c, U, Zt

    def _edge_states(self, c, U):
        """Edge-lifted gradients on both adjacent elements for BR2."""
        sp_ = self.space
        el = sp_.mesh.edge_elements
        elc = np.maximum(el, 0)
        cu = np.stack([c[elc[:, 0]], c[elc[:, 1]]], axis=1)
        s = np.einsum("estab,etb->esa", self.blocks, cu)  # (ne, 2, m)
        sval = s @ sp_.phi.T  # (ne, 2, nq)
        nu = sp_.mesh.normals
        Z = sval[..., None] * nu[:, None, None, :]
        return elc, Z

    # ------------------------------------------------------------ operator

    def operator(self, u):
        """Vector ``B(u, phi_i)`` over all basis functions."""
        sp_ = self.space
        c, U, Zt = self._states(u)
        X = sp_.xq
        A1 = self._model(X, U, Zt, "volume flux a(u, theta)")[0]
        if self.family in ("br1", "ldg"):
            out = self.Theta.T @ sp_.moments(A1).ravel()
        else:
            Zg = sp_.gradients(c)
            A2 = self._model(X, U, Zg, "volume flux a(u, grad u)")[0]
            out = self.D.T @ sp_.moments(A1).ravel() + self.R.T @ sp_.moments(A2).ravel()
        if self.S is not None:
            out = out + self.S @ c.ravel()
        if self.family == "br2":
            out = out + self._br2_operator(c, U)
        return out

    def _br2_operator(self, c, U):
        sp_ = self.space
        el = sp_.mesh.edge_elements
        elc, Z = self._edge_states(c, U)
        Ue = U[elc]
        Xe = sp_.xq[elc]
        a = self._model(Xe, Ue, Z, "BR2 edge stabilisation")[0]
        an = np.einsum("esgd,ed->esg", a, sp_.mesh.normals)
        w = sp_.wdet[elc] * an * (el >= 0)[:, :, None]
        mom = _kernels.moments(sp_.phi, w)  # (ne, 2, m)
        contrib = np.einsum("estab,esa->etb", self.blocks, mom) * self.penalty[:, None, None]
        out = np.zeros((sp_.n_elements, sp_.m))
        for T in (0, 1):
            mask = el[:, T] >= 0
            np.add.at(out, el[mask, T], contrib[mask, T])
        return out.ravel()

    def residual(self, u, load):
        """``R_i = B(u, phi_i) - F(phi_i)``; ``load`` is a vector or forcing."""
        if not isinstance(load, np.ndarray):
            load = self.load(load)
        return self.operator(u) - load

    def form(self, u, v):
        """``B(u, v)``."""
        return float(self._vec(v) @ self.operator(u))

    # ------------------------------------------------------------ jacobian

    def _weighted_blocks(self, Au, Az):
        sp_ = self.space
        nt, m = sp_.n_elements, sp_.m
        w = sp_.wdet[:, None, None, :] * np.moveaxis(Az, 1, 3)  # (nt, 2, 2, nq)
        Kz = _kernels.mass_blocks(sp_.phi, w)  # (nt, d, e, m, m)
        Kz = _block_diag(Kz.transpose(0, 1, 3, 2, 4).reshape(nt, 2 * m, 2 * m))
        wu = sp_.wdet[:, None, :] * np.moveaxis(Au, 2, 1)  # (nt, 2, nq)
        Ku = _kernels.mass_blocks(sp_.phi, wu)  # (nt, d, m, m)
        Ku = _block_diag(Ku.reshape(nt, 2 * m, m))
        return Kz, Ku

    def jacobian(self, u):
        """Sparse Jacobian ``J_ij = d R_i / d u_j`` (analytic)."""
        sp_ = self.space
        c, U, Zt = self._states(u)
        X = sp_.xq
        _, Au1, Az1 = self._model(X, U, Zt, "volume flux a(u, theta)")
        Kz1, Ku1 = self._weighted_blocks(Au1, Az1)
        if self.family in ("br1", "ldg"):
            J = self.Theta.T @ (Kz1 @ self.Theta + Ku1)
        else:
            Zg = sp_.gradients(c)
            _, Au2, Az2 = self._model(X, U, Zg, "volume flux a(u, grad u)")
            Kz2, Ku2 = self._weighted_blocks(Au2, Az2)
            J = self.D.T @ (Kz1 @ self.Theta + Ku1) + self.R.T @ (Kz2 @ self.D + Ku2)
        if self.S is not None:
            J = J + self.S
        if self.family == "br2":
            J = J + self._br2_jacobian(c, U)
        return sp.csr_matrix(J)

    def _br2_jacobian(self, c, U):
        sp_ = self.space
        el = sp_.mesh.edge_elements
        nu = sp_.mesh.normals
        elc, Z = self._edge_states(c, U)
        _, au, az = self._model(sp_.xq[elc], U[elc], Z, "BR2 edge stabilisation")
        valid = (el >= 0)[:, :, None]
        wz = sp_.wdet[elc] * np.einsum("ei,esgij,ej->esg", nu, az, nu) * valid
        wu = sp_.wdet[elc] * np.einsum("esgd,ed->esg", au, nu) * valid
        vz = _kernels.mass_blocks(sp_.phi, wz)  # (ne, 2, m, m)
        vu = _kernels.mass_blocks(sp_.phi, wu)
        B = self.blocks
        blk = np.einsum("estab,esac,esucd->etubd", B, vz, B)
        blk += np.einsum("estab,esac->etsbc", B, vu)
        blk *= self.penalty[:, None, None, None, None]
        return _edge_blocks(sp_, blk)

    # ------------------------------------------------------------ consistency

    def consistency_error_functional(self, flux):
        """Vector ``E_i = E_p(u, phi_i)`` of the primal consistency error.

        ``flux(x, y)`` is the exact ``a(u, grad u)`` (for instance
        ``ManufacturedProblem.flux``).  For BR1, BR2 and SIPG this is
        ``sum_e int_e {(I - G_h) sigma} . [[v]] ds``; LDG adds
        ``sum_{interior} int_e (beta . [[v]]) [[(I - G_h) sigma]] ds``.
        """
        if hasattr(flux, "flux"):
            flux = flux.flux
        sp_ = self.space
        mesh = sp_.mesh
        el = mesh.edge_elements
        elc = np.maximum(el, 0)
        nu = mesh.normals
        Gs = sp_.project_values(flux(sp_.xq[..., 0], sp_.xq[..., 1]))  # (nt, 2, m)
        sig_e = flux(sp_.xe[..., 0], sp_.xe[..., 1])  # (ne, nq, 2)
        tr = np.einsum("esga,esda->esgd", sp_.trace, Gs[elc])  # (ne, 2, nq, 2)
        bnd = mesh.boundary
        avg = 0.5 * (tr[:, 0] + tr[:, 1])
        avg[bnd] = tr[bnd, 0]
        g = np.einsum("egd,ed->eg", sig_e - avg, nu)
        if self.family == "ldg":
            jump_def = np.einsum("egd,ed->eg", tr[:, 1] - tr[:, 0], nu)
            bn = np.einsum("ed,ed->e", self.beta, nu)
            g = g + np.where(bnd, 0.0, bn)[:, None] * jump_def
        out = np.zeros((sp_.n_elements, sp_.m))
        for S, sign in ((0, 1.0), (1, -1.0)):
            mask = el[:, S] >= 0
            vals = sign * np.einsum("eg,ega->ea", (sp_.we * g)[mask], sp_.trace[mask, S])
            np.add.at(out, el[mask, S], vals)
        return out.ravel()


def build_scheme(mesh, model, family="sipg", degree=1, penalty="auto", beta="zero",
                 safety=1.5, quad_degree=None):
    """Convenience constructor for a mesh, model name and family."""
    cfg = SchemeConfig(family=family, degree=degree, penalty=penalty, beta=beta, safety=safety)
    space = DGSpace(mesh, degree, quad_degree=quad_degree)
    return DGScheme(space, model, cfg)
