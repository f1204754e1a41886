"""Diffusion models ``a(x, u, z)``, manufactured problems and assumption probes.

All evaluators are vectorised: ``x`` has shape ``(..., 2)``, ``u`` shape
``(...)`` and ``z`` shape ``(..., 2)``.  ``evaluate`` returns the flux ``a``
``(..., 2)``, its ``u``-derivative ``(..., 2)`` and its ``z``-Jacobian
``(..., 2, 2)`` with ``a_z[..., i, j] = d a_i / d z_j``.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np


class DiffusionModel:
    """Base class for diffusion operators.

    Subclasses implement :meth:`_evaluate`.  Declared constants may be None
    when no analytic value is known; ``lam`` and ``Lam`` bound the
    eigenvalues of the symmetric part of ``a_z``.
    """

    name = "model"
    lam = None
    Lam = None
    C_sm = None
    C_lc = None
    zero_flux_at_zero_gradient = True
    symmetric_az = True

    def _evaluate(self, x, u, z):
        raise NotImplementedError

    def evaluate(self, x, u, z):
        x = np.asarray(x, float)
        u = np.asarray(u, float)
        z = np.asarray(z, float)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(z)) and np.all(np.isfinite(x))):
            raise FloatingPointError(f"non-finite input to diffusion model {self.name!r}")
        return self._evaluate(x, u, z)

    def flux(self, x, u, z):
        return self.evaluate(x, u, z)[0]

    def div_x(self, x, u, z):
        """Explicit-x divergence ``sum_i d a_i / d x_i`` at frozen ``(u, z)``."""
        return np.zeros(np.shape(u))

    def __repr__(self):
        return f"{type(self).__name__}()"


class Poisson(DiffusionModel):
    name = "poisson"
    lam = 1.0
    Lam = 1.0
    C_sm = 1.0
    C_lc = 1.0

    def _evaluate(self, x, u, z):
        shape = np.shape(u)
        az = np.broadcast_to(np.eye(2), shape + (2, 2)).copy()
        return z.copy(), np.zeros(shape + (2,)), az


class MeanCurvature(DiffusionModel):
    """``a = z / (1 + |z|)^(1/2)``.

    ``a_z`` is ``I`` at ``z = 0`` (the analytic limit).  Its eigenvalues lie
    in ``(0, 1]`` but are not bounded away from zero as ``|z|`` grows, so no
    global ``lam`` is declared.
    """

    name = "meancurv"
    Lam = 1.0

    def _evaluate(self, x, u, z):
        s = np.hypot(z[..., 0], z[..., 1])
        g = 1.0 / np.sqrt(1.0 + s)
        a = z * g[..., None]
        safe = np.where(s > 0.0, s, 1.0)
        c = np.where(s > 0.0, 0.5 * g ** 3 / safe, 0.0)
        az = g[..., None, None] * np.eye(2) - c[..., None, None] * z[..., :, None] * z[..., None, :]
        return a, np.zeros(np.shape(u) + (2,)), az


class Newtonian(DiffusionModel):
    """``a = k(u) z`` with ``k(u) = 1 + 0.5 sin(u)``."""

    name = "newtonian"
    lam = 0.5
    Lam = 1.5

    def _evaluate(self, x, u, z):
        k = 1.0 + 0.5 * np.sin(u)
        dk = 0.5 * np.cos(u)
        az = k[..., None, None] * np.eye(2)
        return k[..., None] * z, dk[..., None] * z, az


class Degenerate(DiffusionModel):
    """``a = x_1 z``: monotone but with ``lam = 0`` along ``x_1 = 0``."""

    name = "degenerate"
    lam = 0.0
    Lam = 1.0

    def _evaluate(self, x, u, z):
        k = x[..., 0] * np.ones(np.shape(u))
        az = k[..., None, None] * np.eye(2)
        return k[..., None] * z, np.zeros(np.shape(u) + (2,)), az

    def div_x(self, x, u, z):
        return z[..., 0] * np.ones(np.shape(u))


MODELS = {}


def register_model(model):
    """Register a model instance under ``model.name``."""
    MODELS[model.name] = model
    return model


for _m in (Poisson(), MeanCurvature(), Newtonian(), Degenerate()):
    register_model(_m)


def get_model(name):
    try:
        return MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; registered models: "
                       f"{', '.join(sorted(MODELS))}") from None


def eval_model(model, x, u, z):
    if isinstance(model, str):
        model = get_model(model)
    return model.evaluate(x, u, z)


# ---------------------------------------------------------------- probes


@dataclass
class ProbeReport:
    """Empirical constants from random sampling (not certified bounds)."""

    lam: float
    Lam: float
    C_sm: float
    C_lc: float
    c1: float
    growth_ok: bool
    samples: int
    radius: float


def _ball(rng, n, radius):
    r = radius * np.sqrt(rng.random(n))
    t = 2 * np.pi * rng.random(n)
    return np.stack([r * np.cos(t), r * np.sin(t)], axis=1)


def probe_assumptions(model, sample_count=2000, radius=10.0, seed=0):
    """Monte-Carlo estimates of monotonicity, Lipschitz and ellipticity constants.

    Gradients are sampled in a ball of the given radius and values in
    ``[-radius, radius]``.  Half of the pairs share the same ``u`` so that
    the pure gradient direction is probed.  Pairs with identical gradients
    are skipped by the monotonicity quotient.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if isinstance(model, str):
        model = get_model(model)
    rng = np.random.default_rng(seed)
    n = sample_count
    x = rng.random((n, 2))
    xi = radius * (2 * rng.random(n) - 1)
    xi2 = np.where(np.arange(n) % 2 == 0, xi, radius * (2 * rng.random(n) - 1))
    eta = _ball(rng, n, radius)
    eta2 = _ball(rng, n, radius)
    eta2[:2] = eta[:2]  # degenerate pairs exercise the skip path

    a1, _, az = model.evaluate(x, xi, eta)
    a2 = model.flux(x, xi2, eta2)
    da = a2 - a1
    deta = eta2 - eta
    dn2 = np.sum(deta ** 2, axis=1)
    ok = dn2 > 0
    C_sm = float(np.min(np.sum(da * deta, axis=1)[ok] / dn2[ok])) if ok.any() else np.nan
    dist = np.sqrt((xi2 - xi) ** 2 + dn2)
    ok2 = dist > 0
    C_lc = float(np.max(np.hypot(da[:, 0], da[:, 1])[ok2] / dist[ok2])) if ok2.any() else np.nan

    sym = 0.5 * (az + np.swapaxes(az, -1, -2))
    ev = np.linalg.eigvalsh(sym)

    # linear growth: fit c1 on the ball, then require the ratio to stay
    # bounded (within a factor 2) at 10x and 100x the radius
    def growth_ratio(u, z, a):
        return np.max(np.abs(a), axis=1) / (1.0 + np.abs(u) + np.abs(z).sum(axis=1))

    c1 = float(growth_ratio(xi, eta, a1).max())
    growth_ok = True
    for scale in (10.0, 100.0):
        far_u = scale * radius * (2 * rng.random(n) - 1)
        far_z = _ball(rng, n, scale * radius)
        far = growth_ratio(far_u, far_z, model.flux(x, far_u, far_z))
        growth_ok &= bool(np.all(np.isfinite(far)) and far.max() <= 2.0 * c1 + 1e-12)

    return ProbeReport(lam=float(ev[:, 0].min()), Lam=float(ev[:, 1].max()),
                       C_sm=C_sm, C_lc=C_lc, c1=c1, growth_ok=growth_ok,
                       samples=n, radius=radius)


# ---------------------------------------------------------------- manufactured


@dataclass(frozen=True)
class ExactSolution:
    """Analytic solution with gradient ``(..., 2)`` and Hessian ``(..., 2, 2)``."""

    name: str
    u: Callable
    grad: Callable
    hess: Callable


def _sine():
    pi = np.pi

    def u(x, y):
        return np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y):
        return np.stack([pi * np.cos(pi * x) * np.sin(pi * y),
                         pi * np.sin(pi * x) * np.cos(pi * y)], axis=-1)

    def hess(x, y):
        sxy = np.sin(pi * x) * np.sin(pi * y)
        cxy = np.cos(pi * x) * np.cos(pi * y)
        return pi ** 2 * np.stack([np.stack([-sxy, cxy], -1),
                                   np.stack([cxy, -sxy], -1)], -2)

    return ExactSolution("sine", u, grad, hess)


def _bubble():
    def u(x, y):
        return x * (1 - x) * y * (1 - y)

    def grad(x, y):
        return np.stack([(1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)], axis=-1)

    def hess(x, y):
        xx = -2 * y * (1 - y)
        yy = -2 * x * (1 - x)
        xy = (1 - 2 * x) * (1 - 2 * y)
        return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)

    return ExactSolution("bubble", u, grad, hess)


EXACT_SOLUTIONS = {"sine": _sine(), "bubble": _bubble()}


@dataclass(frozen=True)
class ManufacturedProblem:
    model: DiffusionModel
    exact: ExactSolution

    def forcing(self, x, y):
        """``f = -div a(x, u, grad u)`` by the chain rule."""
        X = np.stack(np.broadcast_arrays(x, y), axis=-1)
        u = self.exact.u(x, y)
        g = self.exact.grad(x, y)
        H = self.exact.hess(x, y)
        _, au, az = self.model.evaluate(X, u, g)
        div = self.model.div_x(X, u, g)
        return -(div + np.sum(au * g, axis=-1) + np.einsum("...ij,...ji->...", az, H))

    def flux(self, x, y):
        X = np.stack(np.broadcast_arrays(x, y), axis=-1)
        return self.model.flux(X, self.exact.u(x, y), self.exact.grad(x, y))


def make_manufactured(model, exact, boundary_tol=1e-12, samples=64):
    """Bind a model to an exact solution that vanishes on the unit square boundary."""
    if isinstance(model, str):
        model = get_model(model)
    if isinstance(exact, str):
        exact = EXACT_SOLUTIONS[exact]
    s = np.linspace(0.0, 1.0, samples)
    zero, one = np.zeros_like(s), np.ones_like(s)
    bx = np.concatenate([s, s, zero, one])
    by = np.concatenate([zero, one, s, s])
    worst = float(np.max(np.abs(exact.u(bx, by))))
    if worst > boundary_tol:
        raise ValueError(f"exact solution {exact.name!r} does not vanish on the boundary "
                         f"(max |u| = {worst:.3e})")
    return ManufacturedProblem(model, exact)
