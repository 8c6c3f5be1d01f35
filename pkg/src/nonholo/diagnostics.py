"""Reference integration, discrete series, circle fits, and error metrics.

The reference integrator is an adaptive high-order embedded Runge-Kutta pair
run at a local tolerance far below every acceptance tolerance; it is the
oracle every discrete path is compared against.  Everything else here is
pure bookkeeping over immutable paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import SolverError
from .integrators import DiscretePath, DiscretizationParams, discretize_constraints
from .model import ConstraintForm, SystemSpec

THREE_POINT = "three_point"
LEAST_SQUARES = "least_squares"


@dataclass(frozen=True)
class SeriesPoint:
    k: int
    t: float
    value: float


def _series(h: float, first_k: int, values) -> list[SeriesPoint]:
    return [SeriesPoint(first_k + i, (first_k + i) * h, float(v))
            for i, v in enumerate(values)]


def reference_trajectory(rhs, init, t_grid, tol: float = 1e-12) -> np.ndarray:
    """Integrate ``rhs(t, y)`` and sample at ``t_grid``; rows are states.

    Uses an eighth-order adaptive pair with absolute and relative local
    tolerance ``tol``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    y0 = np.asarray(init, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    sol = solve_ivp(
        rhs, (float(t_grid[0]), float(t_grid[-1])), y0,
        method="DOP853", rtol=tol, atol=tol, t_eval=t_grid, dense_output=False,
    )
    if not sol.success:
        raise SolverError(f"reference integration failed: {sol.message}")
    return sol.y.T.copy()


def discrete_energy_series(path: DiscretePath, sys: SystemSpec) -> list[SeriesPoint]:
    """Energy with backward difference quotients in place of velocities."""
    if len(path) < 2:
        raise ValueError("need at least two path points")
    h = path.h
    vals = []
    for k in range(1, len(path)):
        q_prev, q = path.points[k - 1], path.points[k]
        v = [(b - a) / h for a, b in zip(q_prev, q)]
        vals.append(sys.energy(q, v))
    return _series(h, 1, vals)


def constraint_residual_series(path: DiscretePath, sys: SystemSpec, mode: str,
                               params: DiscretizationParams | None = None):
    """Per-constraint residual series.

    ``continuous`` evaluates the one-forms at q_k on backward difference
    quotients; ``discrete`` evaluates the discretized constraints on
    consecutive pairs (and needs ``params``).
    """
    if len(path) < 2:
        raise ValueError("need at least two path points")
    h = path.h
    if mode == "continuous":
        form = ConstraintForm(sys)
        rows = []
        for k in range(1, len(path)):
            q_prev, q = path.points[k - 1], path.points[k]
            v = [(b - a) / h for a, b in zip(q_prev, q)]
            rows.append(form.apply(q, v))
    elif mode == "discrete":
        if params is None:
            raise ValueError("discrete mode needs the discretization parameters")
        omega_d = discretize_constraints(sys, params)
        rows = [omega_d.value(path.points[k - 1], path.points[k])
                for k in range(1, len(path))]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return [_series(h, 1, [row[a] for row in rows]) for a in range(sys.m)]


@dataclass(frozen=True)
class CircleFit:
    center: tuple[float, float]
    radius: float
    max_residual: float


def fit_circle(points, mode=LEAST_SQUARES, indices=None) -> CircleFit:
    """Fit a circle to planar points.

    ``three_point`` solves the exact 3x3 system through the points at
    ``indices``; ``least_squares`` minimizes the algebraic residual of
    x^2 + y^2 + D x + E y + F.  The reported residual is the largest radial
    deviation over all supplied points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("need at least three (x, y) points")
    if mode == THREE_POINT:
        if indices is None:
            indices = (0, len(pts) // 2, len(pts) - 1)
        p = pts[list(indices)]
        # subtract the first equation: 2 (p_j - p_0) . c = |p_j|^2 - |p_0|^2
        a = 2.0 * (p[1:] - p[0])
        b = (p[1:] ** 2).sum(axis=1) - (p[0] ** 2).sum()
        try:
            center = np.linalg.solve(a, b)
        except np.linalg.LinAlgError:
            raise ValueError("three-point circle fit needs non-collinear points") from None
        radius = float(np.linalg.norm(p[0] - center))
    elif mode == LEAST_SQUARES:
        a = np.column_stack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
        b = -(pts ** 2).sum(axis=1)
        coeff, *_ = np.linalg.lstsq(a, b, rcond=None)
        center = np.array([-coeff[0] / 2.0, -coeff[1] / 2.0])
        rad2 = center @ center - coeff[2]
        if rad2 <= 0.0:
            raise ValueError("degenerate least-squares circle (non-positive radius)")
        radius = float(math.sqrt(rad2))
    else:
        raise ValueError(f"unknown circle-fit mode {mode!r}")
    residual = float(np.max(np.abs(np.linalg.norm(pts - center, axis=1) - radius)))
    return CircleFit((float(center[0]), float(center[1])), radius, residual)


def windowed_circle_radii(points, n_windows: int = 10) -> list[float]:
    """Least-squares radius per consecutive window; a drifting sequence
    means the path spirals, a flat one means it stays on a circle."""
    pts = list(points)
    size = len(pts) // n_windows
    if size < 3:
        raise ValueError("too few points per window")
    radii = []
    for w in range(n_windows):
        chunk = pts[w * size:(w + 1) * size]
        radii.append(fit_circle(chunk, LEAST_SQUARES).radius)
    return radii


@dataclass(frozen=True)
class ErrorMetrics:
    max_error: float
    rms_error: float
    endpoint_error: float
    componentwise_max: tuple[float, ...]


def error_metrics(path: DiscretePath, reference) -> ErrorMetrics:
    """Configuration error of a discrete path against reference rows on the
    same time grid."""
    ref = np.asarray(reference, dtype=float)
    pts = np.asarray(path.points, dtype=float)
    if ref.shape[0] != pts.shape[0]:
        raise ValueError(
            f"grid mismatch: {pts.shape[0]} path points vs {ref.shape[0]} reference rows")
    diff = pts - ref[:, : pts.shape[1]]
    norms = np.linalg.norm(diff, axis=1)
    return ErrorMetrics(
        max_error=float(norms.max()),
        rms_error=float(math.sqrt(float((norms ** 2).mean()))),
        endpoint_error=float(norms[-1]),
        componentwise_max=tuple(float(x) for x in np.abs(diff).max(axis=0)),
    )


def convergence_order(run, h_list, reference_at) -> list[float | None]:
    """Measured order between consecutive step sizes.

    ``run(h)`` must return a DiscretePath over a fixed total time;
    ``reference_at(t)`` the reference configuration.  Entries are
    ``log(e_i/e_{i+1}) / log(h_i/h_{i+1})`` or None when an error vanishes
    (order undefined).
    """
    if len(h_list) < 2:
        raise ValueError("need at least two step sizes")
    errors = []
    for h in h_list:
        path = run(h)
        if path.error is not None:
            raise SolverError(f"stepper failed at h={h}: {path.error}")
        end = np.asarray(path.points[-1], dtype=float)
        ref = np.asarray(reference_at(path.n_steps * h), dtype=float)
        errors.append(float(np.linalg.norm(end - ref[: len(end)])))
    orders: list[float | None] = []
    for (h1, e1), (h2, e2) in zip(zip(h_list, errors), zip(h_list[1:], errors[1:])):
        if e1 == 0.0 or e2 == 0.0:
            orders.append(None)
        else:
            orders.append(math.log(e1 / e2) / math.log(h1 / h2))
    return orders
