"""Damped Newton iteration for the discrete nonlinear system ``R(u) = 0``."""
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .femspace import DofField, as_coeffs


class LinearSolveError(RuntimeError):
    pass


def direct_solve(J, b):
    """Sparse LU solve; raises :class:`LinearSolveError` when singular."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(J.tocsc(), b)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise LinearSolveError(f"singular Jacobian: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    return x


@dataclass
class NewtonConfig:
    """Newton settings; the residual is measured in the discrete l2 norm."""

    atol: float = 1e-10
    rtol: float = 1e-10
    max_iter: int = 50
    min_step: float = 2.0 ** -10
    initial_guess: Optional[np.ndarray] = None
    linear_solver: Callable = direct_solve

    def __post_init__(self):
        if not (self.atol > 0 and self.rtol > 0):
            raise ValueError("Newton tolerances must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.min_step <= 1:
            raise ValueError("min_step must lie in (0, 1]")


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else np.nan


def newton_solve(scheme, load, newton=None):
    """Solve ``B(u_h, v) = F(v)`` for all ``v`` by damped Newton.

    Parameters
    ----------
    scheme : DGScheme
    load : array, callable ``f(x, y)`` or ManufacturedProblem
        Right-hand side; non-arrays are integrated with ``scheme.load``.
    newton : NewtonConfig, optional

    Returns
    -------
    (DofField, SolveReport)
        The report is never silently successful: ``converged`` is False when
        the tolerance was not reached, with the reason in ``message``.
    """
    cfg = NewtonConfig() if newton is None else newton
    F = load if isinstance(load, np.ndarray) else scheme.load(load)
    space = scheme.space
    if cfg.initial_guess is None:
        u = np.zeros(space.ndofs)
    else:
        u = as_coeffs(space, cfg.initial_guess).ravel().copy()

    rep = SolveReport()
    R = scheme.operator(u) - F
    r0 = float(np.linalg.norm(R))
    rep.residuals.append(r0)
    tol = max(cfg.atol, cfg.rtol * r0)
    if r0 <= tol:
        rep.converged = True
        rep.message = "initial guess satisfies the tolerance"
        return DofField(space, u.reshape(space.n_elements, space.m)), rep

    rnorm = r0
    for it in range(1, cfg.max_iter + 1):
        J = scheme.jacobian(u)
        try:
            du = cfg.linear_solver(J, -R)
        except LinearSolveError as exc:
            rep.message = f"iteration {it}: {exc}"
            break
        step = 1.0
        while True:
            trial = u + step * du
            try:
                R_trial = scheme.operator(trial) - F
                r_trial = float(np.linalg.norm(R_trial))
            except FloatingPointError:
                r_trial = np.inf
            if r_trial < rnorm or r_trial <= tol:
                break
            step *= 0.5
            if step < cfg.min_step:
                break
        rep.iterations = it
        if step < cfg.min_step:
            rep.message = f"iteration {it}: line search failed to reduce the residual"
            break
        u, R, rnorm = trial, R_trial, r_trial
        rep.residuals.append(rnorm)
        rep.steps.append(step)
        if rnorm <= tol:
            rep.converged = True
            rep.message = f"converged in {it} iterations"
            break
    else:
        rep.message = f"no convergence within {cfg.max_iter} iterations"
    return DofField(space, u.reshape(space.n_elements, space.m)), rep
