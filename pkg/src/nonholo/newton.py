"""Damped Newton iteration for small dense nonlinear systems.

The residual callable must be dual-safe; Jacobians are then exact (seeded
dual numbers), which matters for the stiff entries the free-Lagrangian
stepping equations produce near their singular sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dualnum as dm
from .errors import SolverError


@dataclass
class NewtonStats:
    iterations: int
    residual: float


def _norm(values) -> float:
    worst = 0.0
    for v in values:
        a = abs(v)
        if a != a:  # NaN
            return float("inf")
        if a > worst:
            worst = a
    return worst


def newton_solve(residual, x0, tol: float = 1e-10, max_iter: int = 50,
                 max_halvings: int = 8):
    """Solve residual(x) = 0 by Newton's method with step halving.

    Returns (solution list, NewtonStats).  Raises :class:`SolverError` on
    divergence, a singular Jacobian, or evaluation failures that damping
    cannot step around.
    """
    x = [float(v) for v in x0]
    d = len(x)

    def safe_eval(pt):
        try:
            return [dm.real(v) for v in residual(pt)]
        except ArithmeticError:
            return None

    r = safe_eval(x)
    if r is None:
        raise SolverError("residual undefined at the initial guess")
    rnorm = _norm(r)
    for it in range(1, max_iter + 1):
        if rnorm < tol:
            return x, NewtonStats(it - 1, rnorm)
        try:
            jac = np.array(dm.jacobian(residual, x), dtype=float)
        except ArithmeticError as err:
            raise SolverError(f"Jacobian undefined: {err}", it, rnorm) from None
        try:
            step = np.linalg.solve(jac, -np.array(r))
        except np.linalg.LinAlgError as err:
            raise SolverError(f"singular Jacobian: {err}", it, rnorm) from None
        scale = 1.0
        for _ in range(max_halvings + 1):
            trial = [xi + scale * si for xi, si in zip(x, step)]
            r_trial = safe_eval(trial)
            if r_trial is not None:
                tnorm = _norm(r_trial)
                if tnorm < rnorm or tnorm < tol:
                    break
            scale *= 0.5
        else:
            raise SolverError(
                f"no progress after {max_halvings} halvings "
                f"(residual {rnorm:.3e})", it, rnorm)
        x, r, rnorm = trial, r_trial, tnorm
    if rnorm < tol:
        return x, NewtonStats(max_iter, rnorm)
    raise SolverError(
        f"did not converge in {max_iter} iterations (residual {rnorm:.3e})",
        max_iter, rnorm)
