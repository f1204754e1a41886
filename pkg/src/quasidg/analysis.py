"""Norms, penalty rules, error reports, dual norms and discrete-form probes.

The energy norm is ``||v||_h^2 = |v|_{1,h}^2 + |v|_{*,h}^2`` where the
second term sums ``||r^e([[v]])||^2`` over all edges.
"""
from dataclasses import dataclass, asdict

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diffusion import get_model, probe_assumptions
from .femspace import DGSpace, as_coeffs
from .lifting import (edge_lift_norms_sq, estimate_trace_constants, jump_traces,
                      lift_blocks)
from .mesh import N_NEIGHBOURS

LAM_SHRINK = 1.25  # probed lam is divided by this, probed Lam multiplied


class PenaltyError(ValueError):
    pass


# ---------------------------------------------------------------- penalties


@dataclass
class PenaltyRule:
    family: str
    lam: float
    Lam: float
    C_R: float = None
    N_l: int = N_NEIGHBOURS
    safety: float = 1.5

    def value(self):
        fam = self.family.lower()
        if fam == "sipg":
            if self.C_R is None:
                raise PenaltyError("SIPG penalty rule needs the trace constant C_R")
            return self.safety * self.C_R ** 2 * self.Lam * self.N_l
        if fam == "br2":
            if not self.lam or self.lam <= 0:
                raise PenaltyError(
                    "BR2 requires diffusion uniformly bounded away from zero (lam > 0); "
                    "the degenerate-diffusion case lam = 0 is only admissible for SIPG")
            return self.safety * self.N_l * self.Lam / self.lam
        if fam == "ldg":
            return self.safety
        if fam == "br1":
            return 0.0
        raise PenaltyError(f"unknown family {self.family!r}")


def auto_penalty(rule, mesh):
    """Uniform per-edge penalty from ``rule``."""
    return np.full(mesh.n_edges, rule.value())


_PROBE_CACHE = {}


def model_bounds(model):
    """Declared ``(lam, Lam)`` with probed fallbacks (inflated by 1.25)."""
    if isinstance(model, str):
        model = get_model(model)
    lam, Lam = model.lam, model.Lam
    if lam is None or Lam is None:
        key = model.name
        if key not in _PROBE_CACHE:
            _PROBE_CACHE[key] = probe_assumptions(model)
        rep = _PROBE_CACHE[key]
        lam = rep.lam / LAM_SHRINK if lam is None else lam
        Lam = rep.Lam * LAM_SHRINK if Lam is None else Lam
    return float(lam), float(Lam)


def penalty_rule_for(family, model, space, safety=1.5):
    lam, Lam = model_bounds(model)
    C_R = estimate_trace_constants(space).C_R if family == "sipg" else None
    return PenaltyRule(family=family, lam=lam, Lam=Lam, C_R=C_R, safety=safety)


# ---------------------------------------------------------------- norms


class NormSuite:
    """Norm evaluators on a :class:`DGSpace`.

    Fields may be coefficient arrays / DofFields, or analytic pairs
    ``(u, grad)`` of callables ``f(x, y)``.  Analytic data is integrated with
    a rule of exactness ``2 q + extra``.
    """

    def __init__(self, space, extra=6):
        self.space = space
        self.blocks = lift_blocks(space)
        self.fine = DGSpace(space.mesh, space.degree,
                            quad_degree=2 * space.degree + extra,
                            edge_degree=2 * space.degree + extra)
        self._gram = None
        self._gram_lu = None

    # discrete fields ------------------------------------------------

    def l2(self, v):
        c = self._coeffs(v)
        d = self.space.det.reshape((-1,) + (1,) * (c.ndim - 1))
        return float(np.sqrt(np.sum(d * c ** 2)))

    def h1_semi(self, v):
        g = self.space.grad_coeffs(v)
        return float(np.sqrt(np.sum(self.space.det[:, None, None] * g ** 2)))

    def star_semi(self, v):
        return float(np.sqrt(edge_lift_norms_sq(self.space, v, self.blocks).sum()))

    def energy(self, v):
        if isinstance(v, tuple):
            return self.energy_error(None, v)
        c = self._coeffs(v)
        scale = np.abs(c).max(initial=0.0)
        if scale == 0.0 or not np.isfinite(scale):
            return float(np.hypot(self.h1_semi(c), self.star_semi(c)))
        # rescale so squared terms neither underflow nor overflow
        c = c / scale
        return float(scale * np.hypot(self.h1_semi(c), self.star_semi(c)))

    def _coeffs(self, v):
        arr = getattr(v, "coeffs", v)
        arr = np.asarray(arr, float)
        vector = arr.size == 2 * self.space.ndofs
        return as_coeffs(self.space, arr, vector=vector)

    # differences against analytic data --------------------------------

    def l2_error(self, u_h, u):
        fs = self.fine
        vals = u(fs.xq[..., 0], fs.xq[..., 1])
        if u_h is not None:
            vals = vals - fs.values(self._coeffs(u_h))
        return float(np.sqrt(fs.integrate(vals ** 2)))

    def vector_l2_error(self, w_h, w):
        """``||w - w_h||_{L2}`` for a flux-space field ``w_h`` and analytic ``w``."""
        fs = self.fine
        vals = np.asarray(w(fs.xq[..., 0], fs.xq[..., 1]), float)
        if w_h is not None:
            vals = vals - fs.values(self._coeffs(w_h))
        return float(np.sqrt(fs.integrate(np.sum(vals ** 2, axis=-1))))

    def h1_error(self, u_h, grad):
        return self.vector_l2_error(
            None if u_h is None else self.space.grad_coeffs(self._coeffs(u_h)), grad)

    def star_error(self, u_h, u):
        """``|u - u_h|_{*,h}``; analytic ``u`` contributes its boundary trace only."""
        fs = self.fine
        mesh = fs.mesh
        jt = np.where(mesh.boundary[:, None], u(fs.xe[..., 0], fs.xe[..., 1]), 0.0)
        if u_h is not None:
            jt = jt - jump_traces(fs, self._coeffs(u_h))
        return float(np.sqrt(lift_norms_sq_from_jumps(fs, jt).sum()))

    def energy_error(self, u_h, exact):
        u, grad = exact
        return float(np.hypot(self.h1_error(u_h, grad), self.star_error(u_h, u)))

    # gram / dual norms ----------------------------------------------

    def gram(self):
        """Energy-norm Gram matrix ``G`` with ``||v||_h^2 = v^T G v``."""
        if self._gram is None:
            self._gram = energy_gram(self.space, self.blocks)
        return self._gram

    def inner(self, v, w):
        return float(self._coeffs(v).ravel() @ (self.gram() @ self._coeffs(w).ravel()))

    def dual_norm(self, values):
        """``sup_w |A(w)| / ||w||_h`` for ``A`` given on the basis."""
        A = np.asarray(values, float).ravel()
        if not np.any(A):
            return 0.0
        if self._gram_lu is None:
            try:
                self._gram_lu = spla.splu(sp.csc_matrix(self.gram()))
            except RuntimeError as exc:
                raise np.linalg.LinAlgError(f"singular energy Gram matrix: {exc}") from None
        x = self._gram_lu.solve(A)
        return float(np.sqrt(max(A @ x, 0.0)))


def lift_norms_sq_from_jumps(space, jt):
    """``||r^e(j nu)||^2`` per edge for scalar jump traces ``jt`` (ne, nq)."""
    el = space.mesh.edge_elements
    alpha = np.where(space.mesh.boundary, 1.0, 0.5)
    out = np.zeros(space.mesh.n_edges)
    for S in (0, 1):
        mask = el[:, S] >= 0
        det = space.det[el[mask, S]]
        mom = np.einsum("eg,ega->ea", (space.we * jt)[mask], space.trace[mask, S])
        out[mask] += (alpha[mask] ** 2 / det) * np.sum(mom ** 2, axis=1)
    return out


def energy_gram(space, blocks=None):
    from .scheme import _block_diag, _edge_blocks
    B = lift_blocks(space) if blocks is None else blocks
    el = space.mesh.edge_elements
    g = space.grad_op  # (nt, d, a, b)
    H = np.einsum("k,kdab,kdac->kbc", space.det, g, g)
    det = np.where(el >= 0, space.det[np.maximum(el, 0)], 0.0)
    E = np.einsum("es,estab,esuac->etubc", det, B, B)
    return (_block_diag(H) + _edge_blocks(space, E)).tocsr()


def energy_norm(space, v):
    return NormSuite(space).energy(v)


def dual_norm_estimate(values, space):
    return NormSuite(space).dual_norm(values)


# ---------------------------------------------------------------- errors


@dataclass
class ErrorReport:
    err_l2: float
    err_h1: float
    err_star: float
    err_energy: float
    err_theta: float
    err_sigma: float

    def as_dict(self):
        return asdict(self)


def error_report(scheme, u_h, problem, norms=None):
    """Errors of ``u_h``, ``theta_h`` and ``sigma_h`` against a manufactured problem."""
    norms = NormSuite(scheme.space) if norms is None else norms
    ex = problem.exact
    c = as_coeffs(scheme.space, u_h)
    e_l2 = norms.l2_error(c, ex.u)
    e_h1 = norms.h1_error(c, ex.grad)
    e_star = norms.star_error(c, ex.u)
    e_theta = norms.vector_l2_error(scheme.theta_coeffs(c), ex.grad)
    e_sigma = norms.vector_l2_error(scheme.sigma_coeffs(c), problem.flux)
    return ErrorReport(err_l2=e_l2, err_h1=e_h1, err_star=e_star,
                       err_energy=float(np.hypot(e_h1, e_star)),
                       err_theta=e_theta, err_sigma=e_sigma)


def fit_rate(h, err):
    """Least-squares slope of ``log err`` against ``log h``."""
    h = np.asarray(h, float)
    err = np.asarray(err, float)
    if len(h) < 2:
        raise ValueError("need at least two levels to fit a rate")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def pairwise_rates(err):
    """``log2(err[k-1] / err[k])`` for meshes with ``h`` halved per level."""
    err = np.asarray(err, float)
    return np.log2(err[:-1] / err[1:])


# ---------------------------------------------------------------- probes


@dataclass
class ProbeStats:
    min: float
    max: float
    samples: int


def random_unit_field(norms, rng):
    """Random coefficient field normalised to ``||v||_h = 1``."""
    v = rng.standard_normal(norms.space.ndofs)
    return v / norms.energy(v)


def _stats(vals):
    vals = np.asarray(vals)
    return ProbeStats(float(vals.min()), float(vals.max()), len(vals))


def coercivity_probe(scheme, samples=100, seed=0, norms=None):
    """``B(u, u) / ||u||_h^2`` over random unit fields."""
    norms = NormSuite(scheme.space) if norms is None else norms
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        u = random_unit_field(norms, rng)
        vals.append(scheme.form(u, u) / norms.energy(u) ** 2)
    return _stats(vals)


def monotonicity_probe(scheme, samples=100, seed=0, norms=None):
    """``(B(v, xi) - B(w, xi)) / ||xi||_h^2`` with ``xi = v - w``."""
    norms = NormSuite(scheme.space) if norms is None else norms
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        v = random_unit_field(norms, rng)
        w = random_unit_field(norms, rng)
        xi = v - w
        vals.append((scheme.operator(v) - scheme.operator(w)) @ xi / norms.energy(xi) ** 2)
    return _stats(vals)


def lipschitz_probe(scheme, samples=100, seed=0, norms=None):
    """``sup_w |B(z, w) - B(v, w)| / (||z - v||_h ||w||_h)`` over random pairs.

    The supremum over ``w`` is evaluated exactly as the dual norm of
    ``B(z, .) - B(v, .)``; sampling ``w`` at random would shrink the ratio like
    ``1 / sqrt(ndofs)`` because independent random fields are nearly orthogonal.
    """
    norms = NormSuite(scheme.space) if norms is None else norms
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        z, v = (random_unit_field(norms, rng) for _ in range(2))
        num = norms.dual_norm(scheme.operator(z) - scheme.operator(v))
        vals.append(num / norms.energy(z - v))
    return _stats(vals)


def poincare_probe(space, samples=200, seed=0, norms=None):
    """``||v||_{L2} / ||v||_h`` over random fields."""
    norms = NormSuite(space) if norms is None else norms
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        v = rng.standard_normal(space.ndofs)
        vals.append(norms.l2(v) / norms.energy(v))
    return _stats(vals)


def theta_lower_bound_probe(scheme, samples=100, seed=0, eta=None, norms=None):
    """Slack ``||theta(w)||^2 - (||w||_h^2 / 2 - eta |w|_*^2)`` (should be >= 0)."""
    norms = NormSuite(scheme.space) if norms is None else norms
    eta = N_NEIGHBOURS + 0.5 if eta is None else eta
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(samples):
        w = random_unit_field(norms, rng)
        th = norms.l2(scheme.theta_coeffs(w)) ** 2
        vals.append(th - (0.5 * norms.energy(w) ** 2 - eta * norms.star_semi(w) ** 2))
    return _stats(vals)
