"""System class, reduced dynamics, and associated second-order systems.

A system lives on coordinates ``(r1, r2, s_1..s_m)`` with diagonal kinetic
energy ``T = (I1*r1dot^2 + I2*r2dot^2 + sum I_s[a]*sdot_a^2)/2``, linear
velocity constraints ``sdot_a = -A_a(r1) * r2dot`` and an optional potential
``V(r2)``.  The module computes the measure density pair (N, K), the reduced
equations of motion, the associated second-order systems whose flows contain
the constrained dynamics, and the closed-form rolling-disk solution used as
a benchmark.

All evaluators accept dual numbers, so exact partial derivatives of every
vector field are available by seeding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import dualnum as dm
from . import expression as ex
from .errors import DomainError

ASSOC1 = "assoc1"
ASSOC2 = "assoc2"
EXTENDED = "extended"

_A_ZERO_EPS = 1e-12  # constraint coefficient treated as vanishing below this


@dataclass(frozen=True)
class SystemSpec:
    """One nonholonomic system of the supported class.

    ``A`` holds the constraint coefficient expressions (functions of r1),
    ``potential`` an optional V(r2).  ``r1_window`` is an interval of r1
    values on which every A_a is defined and bounded away from zero; it is
    used for sampling and validation, not enforced during integration.
    """

    name: str
    I1: float
    I2: float
    I_s: tuple[float, ...]
    A: tuple[ex.Expression, ...]
    labels: tuple[str, ...]
    potential: ex.Expression | None = None
    r1_window: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if len(self.I_s) < 1:
            raise ValueError("need at least one constraint (m >= 1)")
        if len(self.I_s) != len(self.A):
            raise ValueError(
                f"inertia/coefficient length mismatch: {len(self.I_s)} != {len(self.A)}"
            )
        for val in (self.I1, self.I2, *self.I_s):
            if not (val > 0):
                raise ValueError(f"inertias must be strictly positive, got {val!r}")
        if len(self.labels) != self.n:
            raise ValueError(f"expected {self.n} coordinate labels, got {len(self.labels)}")

    @property
    def m(self) -> int:
        return len(self.I_s)

    @property
    def n(self) -> int:
        return 2 + self.m

    def coeffs(self, r1):
        """Values of all A_a at r1 (dual-safe)."""
        return [a.eval(r1) for a in self.A]

    def coeff_rates(self, r1):
        """Exact derivatives A_a'(r1) (dual-safe)."""
        return [a.derivative_at(r1) for a in self.A]

    def potential_slope(self, r2):
        """V'(r2), or 0 when there is no potential."""
        if self.potential is None:
            return 0.0
        return self.potential.derivative_at(r2)

    def lagrangian(self):
        """Continuous Lagrangian L(q, v) = T - V as a dual-safe callable."""

        def L(q, v):
            kin = 0.5 * (self.I1 * v[0] * v[0] + self.I2 * v[1] * v[1])
            for a in range(self.m):
                kin = kin + 0.5 * self.I_s[a] * v[2 + a] * v[2 + a]
            if self.potential is not None:
                return kin - self.potential.eval(q[1])
            return kin

        return L

    def energy(self, q, v) -> float:
        """Total energy T + V at a state."""
        kin = 0.5 * (self.I1 * v[0] ** 2 + self.I2 * v[1] ** 2)
        for a in range(self.m):
            kin += 0.5 * self.I_s[a] * v[2 + a] ** 2
        if self.potential is not None:
            kin += self.potential.eval(q[1])
        return kin


@dataclass(frozen=True)
class State:
    """Configuration and velocity, ordered (r1, r2, s_1..s_m)."""

    q: tuple[float, ...]
    v: tuple[float, ...]

    def __post_init__(self):
        if len(self.q) != len(self.v):
            raise ValueError("q and v must have the same length")
        for x in (*self.q, *self.v):
            if not math.isfinite(x):
                raise ValueError(f"non-finite state entry {x!r}")


def constrained_state(sys: SystemSpec, q, u1: float, u2: float) -> State:
    """State with s-velocities placed on the constraint: sdot = -A(r1)*u2."""
    coeffs = sys.coeffs(q[0])
    v = (u1, u2, *(-coeffs[a] * u2 for a in range(sys.m)))
    return State(tuple(float(x) for x in q), tuple(float(x) for x in v))


class ConstraintForm:
    """One-form rows: omega_a(q) . v = sdot_a + A_a(r1) * r2dot."""

    def __init__(self, sys: SystemSpec):
        self.sys = sys

    @property
    def m(self) -> int:
        return self.sys.m

    def matrix(self, q):
        """m x n coefficient rows at q (dual-safe)."""
        coeffs = self.sys.coeffs(q[0])
        rows = []
        for a in range(self.sys.m):
            row = [0.0] * self.sys.n
            row[1] = coeffs[a]
            row[2 + a] = 1.0
            rows.append(row)
        return rows

    def apply(self, q, v):
        """Residuals omega_a(q) . v."""
        coeffs = self.sys.coeffs(q[0])
        return [v[2 + a] + coeffs[a] * v[1] for a in range(self.sys.m)]


def measure_density(sys: SystemSpec, r1):
    """The pair (N, K): N = (I2 + sum I_s A^2)^(-1/2), K = sum I_s A A'."""
    coeffs = sys.coeffs(r1)
    rates = sys.coeff_rates(r1)
    n2inv = sys.I2
    k = 0.0
    for a in range(sys.m):
        n2inv = n2inv + sys.I_s[a] * coeffs[a] * coeffs[a]
        k = k + sys.I_s[a] * coeffs[a] * rates[a]
    return 1.0 / dm.sqrt(n2inv), k


def inverse_measure_squared(sys: SystemSpec, r1):
    """N^(-2) as a dual-safe scalar; its r1-derivative equals 2K."""
    coeffs = sys.coeffs(r1)
    out = sys.I2
    for a in range(sys.m):
        out = out + sys.I_s[a] * coeffs[a] * coeffs[a]
    return out


@dataclass(frozen=True)
class MixedRates:
    """Right-hand side of the reduced equations: two accelerations plus the
    first-order s-velocities."""

    r1_accel: float
    r2_accel: float
    s_velocities: tuple[float, ...]


def nonholonomic_rhs(sys: SystemSpec, state: State) -> MixedRates:
    """Reduced equations after multiplier elimination.

    r1'' = 0;  r2'' = -N^2 K r1' r2' - N^2 V'(r2);  s_a' = -A_a(r1) r2'.
    """
    r1 = state.q[0]
    coeffs = sys.coeffs(r1)
    n, k = measure_density(sys, r1)
    n2 = n * n
    acc2 = -n2 * k * state.v[0] * state.v[1]
    if sys.potential is not None:
        acc2 = acc2 - n2 * sys.potential_slope(state.q[1])
    sdots = tuple(-coeffs[a] * state.v[1] for a in range(sys.m))
    return MixedRates(0.0, acc2, sdots)


def nonholonomic_field(sys: SystemSpec):
    """Closed first-order field for the reduced dynamics.

    State layout: y = (q_0..q_{n-1}, r1dot, r2dot); the s-velocities are
    reconstructed from the constraints at every evaluation.
    """
    n_coords = sys.n

    def f(t, y):
        q = list(y[:n_coords])
        u1, u2 = y[n_coords], y[n_coords + 1]
        coeffs = sys.coeffs(q[0])
        nn, k = measure_density(sys, q[0])
        n2 = nn * nn
        acc2 = -n2 * k * u1 * u2
        if sys.potential is not None:
            acc2 = acc2 - n2 * sys.potential_slope(q[1])
        return [u1, u2, *(-coeffs[a] * u2 for a in range(sys.m)), 0.0, acc2]

    return f


def pack_nonholonomic(state: State):
    return [*state.q, state.v[0], state.v[1]]


class SecondOrderSystem:
    """Explicit second-order system qdd = f(q, v) with exact partials.

    ``f`` must be dual-safe.  ``jac_q``/``jac_v`` seed one perturbation level
    and therefore work at dual inputs too, which is how higher derivatives
    are obtained downstream.
    """

    def __init__(self, n: int, f, name: str = ""):
        self.n = n
        self.f = f
        self.name = name

    def jac_q(self, q, v):
        return dm.jacobian(lambda qq: self.f(qq, v), list(q))

    def jac_v(self, q, v):
        return dm.jacobian(lambda vv: self.f(q, vv), list(v))

    def gamma(self, fld, q, v):
        """Derivative of a (scalar/vector/matrix) field of (q, v) along the
        flow direction (v, f(q, v))."""
        acc = self.f(q, v)
        xs = list(q) + list(v)
        ds = list(v) + list(acc)
        half = len(q)
        return dm.directional(lambda z: fld(z[:half], z[half:]), xs, ds)

    def first_order(self):
        """f(t, y) with y = (q, v) for use with an ODE integrator."""

        def fun(t, y):
            q = list(y[: self.n])
            v = list(y[self.n:])
            return [*v, *self.f(q, v)]

        return fun


def associated_sode(sys: SystemSpec, kind: str) -> SecondOrderSystem:
    """Second-order systems whose flows contain the constrained solutions.

    ``assoc1`` closes the s-equations with r1' r2' products; ``assoc2``
    divides per constraint by A_a (undefined where A_a vanishes).  With a
    potential both gain the forcing terms -N^2 V' on r2 and +A_a N^2 V' on
    s_a, which is what keeps the restriction property true.  ``extended``
    is the single-constraint potential form and validates that shape.
    """
    if kind not in (ASSOC1, ASSOC2, EXTENDED):
        raise ValueError(f"unknown associated system kind {kind!r}")
    if kind == EXTENDED:
        if sys.m != 1:
            raise ValueError("extended form requires exactly one constraint")
        if sys.potential is None:
            raise ValueError("extended form requires a potential")
    per_constraint = kind in (ASSOC2, EXTENDED)

    def f(q, v):
        r1 = q[0]
        u1, u2 = v[0], v[1]
        coeffs = sys.coeffs(r1)
        rates = sys.coeff_rates(r1)
        nn, k = measure_density(sys, r1)
        n2 = nn * nn
        vslope = sys.potential_slope(q[1]) if sys.potential is not None else 0.0
        acc2 = -n2 * k * u1 * u2 - n2 * vslope
        out = [0.0, acc2]
        for a in range(sys.m):
            drive = rates[a] - n2 * k * coeffs[a]
            if per_constraint:
                if abs(dm.real(coeffs[a])) < _A_ZERO_EPS:
                    raise DomainError(
                        f"constraint coefficient A_{a} vanishes at r1={dm.real(r1)!r}"
                    )
                acc = drive * u1 * (v[2 + a] / coeffs[a])
            else:
                acc = -drive * u1 * u2
            acc = acc + coeffs[a] * n2 * vslope
            out.append(acc)
        return out

    return SecondOrderSystem(sys.n, f, name=f"{sys.name}:{kind}")


def exact_disk_solution(init: State, t: float) -> State:
    """Closed-form rolling-disk solution (unit radius, unit mass).

    Heading and rolling angles advance linearly; the contact point traces a
    circle of radius u_theta/u_phi.  Requires u_phi != 0.
    """
    phi0, theta0, x0, y0 = init.q
    u_phi, u_theta = init.v[0], init.v[1]
    if u_phi == 0.0:
        raise DomainError("closed-form disk solution requires u_phi != 0")
    ratio = u_theta / u_phi
    cx = x0 - ratio * math.sin(phi0)
    cy = y0 + ratio * math.cos(phi0)
    phi = u_phi * t + phi0
    theta = u_theta * t + theta0
    x = ratio * math.sin(phi) + cx
    y = -ratio * math.cos(phi) + cy
    return State(
        (phi, theta, x, y),
        (u_phi, u_theta, u_theta * math.cos(phi), u_theta * math.sin(phi)),
    )


# -- registry ----------------------------------------------------------------

def _make_registry():
    reg = {}
    reg["particle"] = SystemSpec(
        name="particle",
        I1=1.0, I2=1.0, I_s=(1.0,),
        A=(ex.parse("x"),),
        labels=("x", "y", "z"),
        r1_window=(0.3, 2.0),
    )
    reg["knife_edge"] = SystemSpec(
        name="knife_edge",
        I1=1.0, I2=1.0, I_s=(1.0,),
        A=(ex.parse("-tan(phi)"),),
        labels=("phi", "x", "y"),
        r1_window=(0.15, 1.35),
    )
    reg["disk"] = SystemSpec(
        name="disk",
        I1=0.25, I2=0.5, I_s=(1.0, 1.0),
        A=(ex.parse("-cos(phi)"), ex.parse("-sin(phi)")),
        labels=("phi", "theta", "x", "y"),
        r1_window=(0.15, 1.4),
    )
    reg["mobile_robot"] = SystemSpec(
        name="mobile_robot",
        I1=1.0, I2=3.0, I_s=(1.0, 1.0),
        A=(ex.parse("-cos(theta)"), ex.parse("-sin(theta)")),
        labels=("theta", "psi", "x", "y"),
        potential=ex.parse("10*sin(psi)"),
        r1_window=(0.15, 1.4),
    )
    reg["knife_edge_inclined"] = SystemSpec(
        name="knife_edge_inclined",
        I1=1.0, I2=1.0, I_s=(1.0,),
        A=(ex.parse("-tan(phi)"),),
        labels=("phi", "x", "y"),
        potential=ex.parse("-x"),  # downslope force normalized to 1
        r1_window=(0.15, 1.35),
    )
    return reg


_REGISTRY = _make_registry()

# Default experiment initial data per registry system: configuration plus the
# two independent rates (u1, u2); s-velocities follow from the constraints.
DEFAULT_INITIAL = {
    "particle": ((1.0, 0.0, 0.0), 1.0, 1.0),
    "knife_edge": ((0.3, 0.0, 0.0), 0.2, 1.0),
    "disk": ((0.1, 0.0, 0.0, 0.0), 1.0, 2.0),
    "mobile_robot": ((0.2, 0.0, 0.0, 0.0), 0.2, 1.0),
    "knife_edge_inclined": ((0.25, 0.0, 0.0), 0.2, 0.5),
}

# Coordinate pair (indices) whose projection is expected to trace a circle.
CIRCLE_PROJECTION = {
    "particle": (0, 1),
    "knife_edge": (1, 2),
    "disk": (2, 3),
    "mobile_robot": (2, 3),
    "knife_edge_inclined": (1, 2),
}


def registry_names():
    return sorted(_REGISTRY)


def default_state(sys: SystemSpec) -> State:
    q0, u1, u2 = DEFAULT_INITIAL[sys.name]
    return constrained_state(sys, q0, u1, u2)


def build_system(config) -> SystemSpec:
    """Resolve a registry name or a full custom description.

    A custom description is a mapping with keys ``name, I1, I2, I_s, A``
    (expressions as strings), optional ``potential``, ``labels`` and
    ``r1_window``.
    """
    if isinstance(config, str):
        try:
            return _REGISTRY[config]
        except KeyError:
            raise ValueError(
                f"unknown system {config!r}; known: {', '.join(registry_names())}"
            ) from None
    if not isinstance(config, dict):
        raise ValueError(f"system config must be a name or mapping, got {type(config)}")
    cfg = dict(config)
    name = cfg.pop("name", "custom")
    if not cfg and name in _REGISTRY:
        return _REGISTRY[name]
    try:
        i1 = float(cfg.pop("I1"))
        i2 = float(cfg.pop("I2"))
        i_s = tuple(float(x) for x in cfg.pop("I_s"))
        a_text = list(cfg.pop("A"))
    except KeyError as err:
        raise ValueError(f"custom system missing field {err}") from None
    coeffs = tuple(ex.parse(t) for t in a_text)
    m = len(coeffs)
    labels = tuple(cfg.pop("labels", ("r1", "r2", *(f"s{a+1}" for a in range(m)))))
    pot_text = cfg.pop("potential", None)
    potential = ex.parse(pot_text) if pot_text else None
    window = tuple(float(x) for x in cfg.pop("r1_window", (-1.0, 1.0)))
    if cfg:
        raise ValueError(f"unknown system fields: {sorted(cfg)}")
    return SystemSpec(
        name=name, I1=i1, I2=i2, I_s=i_s, A=coeffs,
        labels=labels, potential=potential, r1_window=window,
    )


def sample_admissible(sys: SystemSpec, rng, on_constraint: bool = False):
    """Random (q, v) with r1 inside the window and r1dot bounded from zero."""
    lo, hi = sys.r1_window
    q = [rng.uniform(lo, hi), rng.uniform(-1.0, 1.0)]
    q += [rng.uniform(-1.0, 1.0) for _ in range(sys.m)]
    u1 = rng.uniform(0.3, 1.2) * (1.0 if rng.random() < 0.5 else -1.0)
    u2 = rng.uniform(-1.2, 1.2)
    if on_constraint:
        coeffs = sys.coeffs(q[0])
        v = [u1, u2, *(-coeffs[a] * u2 for a in range(sys.m))]
    else:
        v = [u1, u2, *(rng.uniform(-1.2, 1.2) for _ in range(sys.m))]
    return q, v
