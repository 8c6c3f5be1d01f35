"""Discrete Lagrangians, discrete constraints, and the three steppers.

Discretization evaluates the continuous object at an interior point
``(1-alpha)*q1 + alpha*q2`` with the difference quotient ``(q2-q1)/h`` as
velocity; the symmetrized scheme averages the two interior points obtained
from ``alpha`` and ``1-alpha``.

Steppers (all implicit, solved by damped Newton with exact Jacobians):

* constrained: the three-point stationarity equations of the plain
  Lagrangian with multipliers on the right-hand side, closed by the
  discrete constraints;
* variational: the three-point stationarity equations of a free Lagrangian,
  no constraint enforcement;
* modified: stationarity equations for the (r1, r2) block of the free
  Lagrangian, closed by the discrete constraints for the s block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import dualnum as dm
from .errors import DomainError, SolverError
from .model import ConstraintForm, SystemSpec
from .newton import newton_solve

PLAIN = "plain"
SYMMETRIZED = "symmetrized"


@dataclass(frozen=True)
class DiscretizationParams:
    alpha: float
    h: float
    scheme: str = PLAIN

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not self.h > 0.0:
            raise ValueError(f"step size must be positive, got {self.h!r}")
        if self.scheme not in (PLAIN, SYMMETRIZED):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def interior_weights(self):
        """(weight, alpha) pairs of the interior evaluation points."""
        if self.scheme == SYMMETRIZED:
            return ((0.5, self.alpha), (0.5, 1.0 - self.alpha))
        return ((1.0, self.alpha),)


class DiscreteLagrangian:
    """Two-point function L_d(q1, q2) with exact partial gradients."""

    def __init__(self, lagrangian, params: DiscretizationParams):
        self.lagrangian = lagrangian  # dual-safe callable L(q, v)
        self.params = params

    def value(self, q1, q2):
        h = self.params.h
        w = [(b - a) / h for a, b in zip(q1, q2)]
        total = 0.0
        for wt, al in self.params.interior_weights():
            qbar = [(1.0 - al) * a + al * b for a, b in zip(q1, q2)]
            total = total + wt * self.lagrangian(qbar, w)
        return total

    def grads(self, q1, q2):
        """(D1, D2) gradients via the interior-point chain rule."""
        h = self.params.h
        n = len(q1)
        w = [(b - a) / h for a, b in zip(q1, q2)]
        d1 = [0.0] * n
        d2 = [0.0] * n
        for wt, al in self.params.interior_weights():
            qbar = [(1.0 - al) * a + al * b for a, b in zip(q1, q2)]
            lq = dm.gradient(lambda qq: self.lagrangian(qq, w), qbar)
            lv = dm.gradient(lambda vv: self.lagrangian(qbar, vv), w)
            for i in range(n):
                d1[i] = d1[i] + wt * ((1.0 - al) * lq[i] - lv[i] / h)
                d2[i] = d2[i] + wt * (al * lq[i] + lv[i] / h)
        return d1, d2

    def d1(self, q1, q2):
        return self.grads(q1, q2)[0]

    def d2(self, q1, q2):
        return self.grads(q1, q2)[1]


class DiscreteConstraints:
    """Two-point constraint functions built from the one-form rows."""

    def __init__(self, omega, m: int, params: DiscretizationParams):
        self.omega = omega  # object with .matrix(q) -> m x n rows, dual-safe
        self.m = m
        self.params = params

    def value(self, q1, q2):
        h = self.params.h
        dq = [(b - a) / h for a, b in zip(q1, q2)]
        out = [0.0] * self.m
        for wt, al in self.params.interior_weights():
            qbar = [(1.0 - al) * a + al * b for a, b in zip(q1, q2)]
            rows = self.omega.matrix(qbar)
            for a in range(self.m):
                acc = 0.0
                for i, coeff in enumerate(rows[a]):
                    acc = acc + coeff * dq[i]
                out[a] = out[a] + wt * acc
        return out


def discretize_lagrangian(lagrangian, params: DiscretizationParams) -> DiscreteLagrangian:
    """Wrap a dual-safe continuous Lagrangian ``L(q, v)``."""
    return DiscreteLagrangian(lagrangian, params)


def discretize_constraints(sys: SystemSpec, params: DiscretizationParams) -> DiscreteConstraints:
    return DiscreteConstraints(ConstraintForm(sys), sys.m, params)


def seed_second_point(sys: SystemSpec, params: DiscretizationParams, q0,
                      r_components_of_q1, tol: float = 1e-12):
    """Solve the s-components of q1 so the pair (q0, q1) satisfies the
    discrete constraints exactly.

    Closed form for the plain alpha=0 scheme; Newton (on a linear system,
    so one step) otherwise.
    """
    q0 = [float(x) for x in q0]
    r1_1, r2_1 = float(r_components_of_q1[0]), float(r_components_of_q1[1])
    omega_d = discretize_constraints(sys, params)
    if params.scheme == PLAIN and params.alpha == 0.0:
        coeffs = sys.coeffs(q0[0])
        s = [q0[2 + a] - coeffs[a] * (r2_1 - q0[1]) for a in range(sys.m)]
        return [r1_1, r2_1, *s]

    def residual(s):
        return omega_d.value(q0, [r1_1, r2_1, *s])

    s0 = [q0[2 + a] for a in range(sys.m)]
    s_sol, _ = newton_solve(residual, s0, tol=tol)
    return [r1_1, r2_1, *s_sol]


@dataclass
class DiscretePath:
    """Stepper output: the configurations, per-step multipliers (constrained
    stepper only), and solver statistics."""

    h: float
    points: list
    multipliers: list | None = None
    newton_iterations: list = field(default_factory=list)
    defining_residuals: list = field(default_factory=list)
    error: str | None = None

    def __len__(self):
        return len(self.points)

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    def times(self):
        return [k * self.h for k in range(len(self.points))]

    def coordinate(self, i: int):
        return [p[i] for p in self.points]


class NonholonomicStepper:
    """Three-point update with multipliers and discrete constraints."""

    needs_multipliers = True

    def __init__(self, Ld: DiscreteLagrangian, omega_d: DiscreteConstraints | None,
                 omega: ConstraintForm | None, newton_tol: float = 1e-10):
        self.Ld = Ld
        self.omega_d = omega_d
        self.omega = omega
        self.newton_tol = newton_tol
        self.m = omega_d.m if omega_d is not None else 0

    def _residual_parts(self, q_prev, q_curr):
        _, d2 = self.Ld.grads(q_prev, q_curr)
        rows = self.omega.matrix(q_curr) if self.m else []
        return d2, rows

    def step(self, q_prev, q_curr, lam_guess=None):
        n = len(q_curr)
        d2_const, omega_rows = self._residual_parts(q_prev, q_curr)

        def residual(x):
            q_next = x[:n]
            lam = x[n:]
            d1 = self.Ld.d1(q_curr, q_next)
            out = []
            for i in range(n):
                r = d1[i] + d2_const[i]
                for a in range(self.m):
                    r = r - lam[a] * omega_rows[a][i]
                out.append(r)
            if self.m:
                out.extend(self.omega_d.value(q_curr, q_next))
            return out

        guess = [2.0 * c - p for p, c in zip(q_prev, q_curr)]
        guess += list(lam_guess) if lam_guess is not None else [0.0] * self.m
        sol, stats = newton_solve(residual, guess, tol=self.newton_tol)
        return sol[:n], sol[n:], stats

    def defining_residual(self, q_prev, q_curr, q_next, lam):
        d1 = self.Ld.d1(q_curr, q_next)
        _, d2 = self.Ld.grads(q_prev, q_curr)
        rows = self.omega.matrix(q_curr) if self.m else []
        worst = 0.0
        for i in range(len(q_curr)):
            r = d1[i] + d2[i]
            for a in range(self.m):
                r = r - lam[a] * rows[a][i]
            worst = max(worst, abs(dm.real(r)))
        if self.m:
            for r in self.omega_d.value(q_curr, q_next):
                worst = max(worst, abs(dm.real(r)))
        return worst

    def solve_previous(self, q_curr, q_next, lam, q_prev_guess):
        """Solve the same three-point relation for the trailing endpoint."""
        d1_const = self.Ld.d1(q_curr, q_next)
        rows = self.omega.matrix(q_curr) if self.m else []

        def residual(q_prev):
            _, d2 = self.Ld.grads(q_prev, q_curr)
            out = []
            for i in range(len(q_curr)):
                r = d1_const[i] + d2[i]
                for a in range(self.m):
                    r = r - lam[a] * rows[a][i]
                out.append(r)
            return out

        sol, _ = newton_solve(residual, list(q_prev_guess), tol=self.newton_tol)
        return sol


def _constraint_guess(omega_d: DiscreteConstraints, q_curr, linear_guess):
    """Linear prediction for the r block with the s block moved onto the
    discrete constraint manifold.

    Near the poles of a free Lagrangian the linear extrapolation of the s
    coordinates can be off by orders of magnitude while this guess stays
    close to the implicit solution, so it serves as a fallback Newton start.
    It only changes the starting point, never the equations being solved.
    """
    def residual(s):
        return omega_d.value(q_curr, [linear_guess[0], linear_guess[1], *s])

    s0 = [q_curr[2 + a] for a in range(omega_d.m)]
    s_sol, _ = newton_solve(residual, s0, tol=1e-12)
    return [linear_guess[0], linear_guess[1], *s_sol]


class VariationalStepper:
    """Three-point stationarity update for a free Lagrangian.

    ``omega_d`` is optional and used only to build a fallback initial guess
    when Newton stalls from the linear predictor (which happens close to
    the poles of the Lagrangian).
    """

    needs_multipliers = False

    def __init__(self, Ld: DiscreteLagrangian, newton_tol: float = 1e-10,
                 eps_min: float = 1e-6, omega_d: DiscreteConstraints | None = None):
        self.Ld = Ld
        self.newton_tol = newton_tol
        self.eps_min = eps_min
        self.omega_d = omega_d

    def _check_drive(self, q_a, q_b):
        rate = abs(q_b[0] - q_a[0]) / self.Ld.params.h
        if rate <= self.eps_min:
            raise SolverError(
                f"r1 difference quotient {rate:.3e} at the singular set "
                f"(eps_min={self.eps_min})")

    def step(self, q_prev, q_curr, lam_guess=None):
        self._check_drive(q_prev, q_curr)
        n = len(q_curr)
        _, d2_const = self.Ld.grads(q_prev, q_curr)

        def residual(q_next):
            d1 = self.Ld.d1(q_curr, q_next)
            return [d1[i] + d2_const[i] for i in range(n)]

        linear = [2.0 * c - p for p, c in zip(q_prev, q_curr)]
        try:
            sol, stats = newton_solve(residual, linear, tol=self.newton_tol)
        except SolverError:
            if self.omega_d is None:
                raise
            guess = _constraint_guess(self.omega_d, q_curr, linear)
            sol, stats = newton_solve(residual, guess, tol=self.newton_tol)
        self._check_drive(q_curr, sol)
        return sol, [], stats

    def defining_residual(self, q_prev, q_curr, q_next, lam=None):
        d1 = self.Ld.d1(q_curr, q_next)
        _, d2 = self.Ld.grads(q_prev, q_curr)
        return max(abs(dm.real(a + b)) for a, b in zip(d1, d2))

    def solve_previous(self, q_curr, q_next, lam, q_prev_guess):
        d1_const = self.Ld.d1(q_curr, q_next)

        def residual(q_prev):
            _, d2 = self.Ld.grads(q_prev, q_curr)
            return [a + b for a, b in zip(d1_const, d2)]

        sol, _ = newton_solve(residual, list(q_prev_guess), tol=self.newton_tol)
        return sol


class ModifiedStepper:
    """Free-Lagrangian stationarity for (r1, r2); discrete constraints close
    the s block, so the constraints hold exactly along the path."""

    needs_multipliers = False

    def __init__(self, Ld: DiscreteLagrangian, omega_d: DiscreteConstraints,
                 newton_tol: float = 1e-10, eps_min: float = 1e-6):
        self.Ld = Ld
        self.omega_d = omega_d
        self.newton_tol = newton_tol
        self.eps_min = eps_min

    def _check_drive(self, q_a, q_b):
        rate = abs(q_b[0] - q_a[0]) / self.Ld.params.h
        if rate <= self.eps_min:
            raise SolverError(
                f"r1 difference quotient {rate:.3e} at the singular set "
                f"(eps_min={self.eps_min})")

    def step(self, q_prev, q_curr, lam_guess=None):
        self._check_drive(q_prev, q_curr)
        _, d2_const = self.Ld.grads(q_prev, q_curr)

        def residual(q_next):
            d1 = self.Ld.d1(q_curr, q_next)
            out = [d1[0] + d2_const[0], d1[1] + d2_const[1]]
            out.extend(self.omega_d.value(q_curr, q_next))
            return out

        linear = [2.0 * c - p for p, c in zip(q_prev, q_curr)]
        try:
            sol, stats = newton_solve(residual, linear, tol=self.newton_tol)
        except SolverError:
            guess = _constraint_guess(self.omega_d, q_curr, linear)
            sol, stats = newton_solve(residual, guess, tol=self.newton_tol)
        self._check_drive(q_curr, sol)
        return sol, [], stats

    def defining_residual(self, q_prev, q_curr, q_next, lam=None):
        d1 = self.Ld.d1(q_curr, q_next)
        _, d2 = self.Ld.grads(q_prev, q_curr)
        worst = max(abs(dm.real(d1[i] + d2[i])) for i in range(2))
        for r in self.omega_d.value(q_curr, q_next):
            worst = max(worst, abs(dm.real(r)))
        return worst

    def solve_previous(self, q_curr, q_next, lam, q_prev_guess):
        d1_const = self.Ld.d1(q_curr, q_next)

        def residual(q_prev):
            _, d2 = self.Ld.grads(q_prev, q_curr)
            out = [d1_const[0] + d2[0], d1_const[1] + d2[1]]
            out.extend(self.omega_d.value(q_prev, q_curr))
            return out

        sol, _ = newton_solve(residual, list(q_prev_guess), tol=self.newton_tol)
        return sol


def step_nonholonomic(Ld, omega_d, omega, q_prev, q_curr, newton_tol=1e-10):
    """One constrained step; returns (q_next, multipliers)."""
    q_next, lam, _ = NonholonomicStepper(Ld, omega_d, omega, newton_tol).step(q_prev, q_curr)
    return q_next, lam


def step_variational(Ld, q_prev, q_curr, newton_tol=1e-10, eps_min=1e-6):
    q_next, _, _ = VariationalStepper(Ld, newton_tol, eps_min).step(q_prev, q_curr)
    return q_next


def step_modified(Ld, omega_d, q_prev, q_curr, newton_tol=1e-10, eps_min=1e-6):
    q_next, _, _ = ModifiedStepper(Ld, omega_d, newton_tol, eps_min).step(q_prev, q_curr)
    return q_next


def run_trajectory(stepper, q0, q1, n_steps: int) -> DiscretePath:
    """Advance ``n_steps`` three-point updates from the seeded pair.

    On a solver failure the partial path is returned with ``error`` set
    instead of raising, so callers can still flush diagnostics.
    """
    path = DiscretePath(
        h=stepper.Ld.params.h,
        points=[[float(x) for x in q0], [float(x) for x in q1]],
        multipliers=[] if stepper.needs_multipliers else None,
    )
    lam = None
    for k in range(n_steps):
        q_prev, q_curr = path.points[-2], path.points[-1]
        try:
            q_next, lam_next, stats = stepper.step(q_prev, q_curr, lam)
        except (SolverError, DomainError) as err:
            path.error = f"step {k}: {err}"
            return path
        path.points.append(q_next)
        if stepper.needs_multipliers:
            path.multipliers.append(lam_next)
            lam = lam_next
        path.newton_iterations.append(stats.iterations)
        path.defining_residuals.append(
            stepper.defining_residual(q_prev, q_curr, q_next, lam_next))
    return path
