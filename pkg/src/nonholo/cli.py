"""Config-driven command line front end.

Subcommands: ``simulate`` (one trajectory with full diagnostics), ``sweep``
(rerun while varying alpha or h, collecting a comparison table), ``verify``
(multiplier condition residuals or pointwise multiplier-space probes), and
``systems`` (list the registry).  Configs are single JSON documents; all
expression-valued fields are strings.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Output
floats carry 17 significant digits, and every command is deterministic for
a fixed seed, so reruns produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import helmholtz as hh
from . import integrators as it
from . import lagrangians as lg
from . import model as md
from .errors import ConfigError, NonholoError, SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_INTEGRATORS = ("nonholonomic", "variational", "modified", "oracle")
_CANDIDATES = ("hessian-of-type1", "hessian-of-type2", "pointwise-space")


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(x if isinstance(x, str) else _fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path!r}: {err}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path!r} is not valid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return raw


def parse_value_token(token: str) -> float:
    """Float or fraction like 1/3."""
    token = token.strip()
    if "/" in token:
        num, _, den = token.partition("/")
        try:
            return float(num) / float(den)
        except (ValueError, ZeroDivisionError) as err:
            raise ConfigError(f"bad value {token!r}: {err}") from None
    try:
        return float(token)
    except ValueError as err:
        raise ConfigError(f"bad value {token!r}: {err}") from None


def _get(raw: dict, key: str, caster, default=None, required=False):
    if key not in raw:
        if required:
            raise ConfigError(f"config field {key!r} is required")
        return default
    try:
        return caster(raw[key])
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"config field {key!r}: {err}") from None


@dataclass
class RunSettings:
    system: md.SystemSpec
    integrator: str
    kind: str | None
    constants: dict
    params: it.DiscretizationParams
    n_steps: int
    q0: list
    v0: list
    newton_tol: float
    oracle_tol: float
    eps_min: float
    guard_eps: float
    seed: int
    circle: tuple[int, int] | None


def _resolve_initial(raw_initial, sys: md.SystemSpec, params):
    """Return (q0, v0): velocities given directly, derived from a second
    configuration point, or taken from the registry defaults."""
    if raw_initial is None:
        if sys.name not in md.DEFAULT_INITIAL:
            raise ConfigError("custom systems need an explicit 'initial' section")
        st = md.default_state(sys)
        return list(st.q), list(st.v)
    if not isinstance(raw_initial, dict):
        raise ConfigError("'initial' must be an object")
    if "q0" not in raw_initial:
        raise ConfigError("'initial' needs q0")
    q0 = [float(x) for x in raw_initial["q0"]]
    if len(q0) != sys.n:
        raise ConfigError(f"q0 must have {sys.n} entries, got {len(q0)}")
    if "v0" in raw_initial:
        v0 = [float(x) for x in raw_initial["v0"]]
        if len(v0) != sys.n:
            raise ConfigError(f"v0 must have {sys.n} entries, got {len(v0)}")
        return q0, v0
    if "q1_r" in raw_initial:
        r = [float(x) for x in raw_initial["q1_r"]]
        if len(r) != 2:
            raise ConfigError("q1_r must hold the two r-components of q1")
        u1 = (r[0] - q0[0]) / params.h
        u2 = (r[1] - q0[1]) / params.h
        st = md.constrained_state(sys, q0, u1, u2)
        return q0, list(st.v)
    raise ConfigError("'initial' needs either v0 or q1_r")


def resolve_run_config(raw: dict) -> RunSettings:
    known = {"system", "integrator", "lagrangian", "alpha", "h", "scheme",
             "n_steps", "initial", "tolerances", "seed", "circle", "out_dir"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        sys_spec = md.build_system(raw.get("system", ""))
    except (ValueError, NonholoError) as err:
        raise ConfigError(f"config field 'system': {err}") from None
    integrator = _get(raw, "integrator", str, required=True)
    if integrator not in _INTEGRATORS:
        raise ConfigError(
            f"config field 'integrator': unknown value {integrator!r}; "
            f"choose from {', '.join(_INTEGRATORS)}")
    lag = raw.get("lagrangian") or {}
    if not isinstance(lag, dict):
        raise ConfigError("'lagrangian' must be an object")
    kind = lag.get("kind")
    constants = dict(lag.get("constants") or {})
    if "w_s" in constants:
        constants["w_s"] = tuple(float(x) for x in constants["w_s"])
    tol = raw.get("tolerances") or {}
    if not isinstance(tol, dict):
        raise ConfigError("'tolerances' must be an object")
    try:
        params = it.DiscretizationParams(
            alpha=float(raw.get("alpha", 0.0)),
            h=float(raw.get("h", 0.1)),
            scheme=str(raw.get("scheme", it.PLAIN)),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
    n_steps = _get(raw, "n_steps", int, default=500)
    if n_steps < 0:
        raise ConfigError("n_steps must be nonnegative")
    q0, v0 = _resolve_initial(raw.get("initial"), sys_spec, params)
    seed = int(os.environ.get("NONHOLO_SEED", raw.get("seed", 0)))
    circle = raw.get("circle")
    if circle is None:
        circle = md.CIRCLE_PROJECTION.get(sys_spec.name)
    else:
        circle = tuple(int(i) for i in circle)
        if len(circle) != 2 or not all(0 <= i < sys_spec.n for i in circle):
            raise ConfigError("'circle' must name two coordinate indices")
    return RunSettings(
        system=sys_spec,
        integrator=integrator,
        kind=kind,
        constants=constants,
        params=params,
        n_steps=n_steps,
        q0=q0,
        v0=v0,
        newton_tol=float(tol.get("newton", 1e-10)),
        oracle_tol=float(tol.get("oracle", 1e-12)),
        eps_min=float(tol.get("eps_min", 1e-6)),
        guard_eps=float(tol.get("guard_eps", 1e-9)),
        seed=seed,
        circle=circle,
    )


def _build_stepper(s: RunSettings):
    if s.integrator == "oracle":
        return None
    if s.integrator == "nonholonomic":
        ld = it.discretize_lagrangian(s.system.lagrangian(), s.params)
        omega_d = it.discretize_constraints(s.system, s.params)
        return it.NonholonomicStepper(ld, omega_d, md.ConstraintForm(s.system),
                                      newton_tol=s.newton_tol)
    try:
        free = lg.free_lagrangian(s.system, s.kind, guard_eps=s.guard_eps,
                                  **s.constants)
    except ValueError as err:
        raise ConfigError(f"lagrangian: {err}") from None
    ld = it.discretize_lagrangian(free.value, s.params)
    omega_d = it.discretize_constraints(s.system, s.params)
    if s.integrator == "variational":
        return it.VariationalStepper(ld, newton_tol=s.newton_tol, eps_min=s.eps_min,
                                     omega_d=omega_d)
    return it.ModifiedStepper(ld, omega_d, newton_tol=s.newton_tol, eps_min=s.eps_min)


@dataclass
class RunResult:
    path: it.DiscretePath
    endpoint_error: float | None
    circle: dg.CircleFit | None
    mean_energy_drift: float
    mean_constraint_residual: float
    error: str | None


def _run_single(s: RunSettings, out: Path) -> RunResult:
    out.mkdir(parents=True, exist_ok=True)
    h = s.params.h
    sys_spec = s.system

    if s.integrator == "oracle":
        grid = [k * h for k in range(s.n_steps + 2)]
        rows = dg.reference_trajectory(
            md.nonholonomic_field(sys_spec),
            [*s.q0, s.v0[0], s.v0[1]], grid, tol=s.oracle_tol)
        path = it.DiscretePath(h=h, points=[list(r[:sys_spec.n]) for r in rows])
    else:
        stepper = _build_stepper(s)
        q1_r = (s.q0[0] + h * s.v0[0], s.q0[1] + h * s.v0[1])
        q1 = it.seed_second_point(sys_spec, s.params, s.q0, q1_r)
        path = it.run_trajectory(stepper, s.q0, q1, s.n_steps)

    labels = sys_spec.labels
    _write_csv(out / "trajectory.csv", ["k", "t", *labels],
               [[str(k), _fmt(k * h), *map(_fmt, p)]
                for k, p in enumerate(path.points)])

    energy = dg.discrete_energy_series(path, sys_spec)
    _write_csv(out / "energy.csv", ["k", "t", "E"],
               [[str(p.k), _fmt(p.t), _fmt(p.value)] for p in energy])

    cont = dg.constraint_residual_series(path, sys_spec, "continuous")
    disc = dg.constraint_residual_series(path, sys_spec, "discrete", s.params)
    m = sys_spec.m
    header = ["k", "t", *(f"c{a+1}" for a in range(m)), *(f"d{a+1}" for a in range(m))]
    rows = []
    for i in range(len(cont[0])):
        rows.append([str(cont[0][i].k), _fmt(cont[0][i].t),
                     *(_fmt(cont[a][i].value) for a in range(m)),
                     *(_fmt(disc[a][i].value) for a in range(m))])
    _write_csv(out / "constraints.csv", header, rows)

    circle = None
    if s.circle is not None and len(path.points) >= 3:
        pts = [(p[s.circle[0]], p[s.circle[1]]) for p in path.points]
        try:
            circle = dg.fit_circle(pts, dg.LEAST_SQUARES)
        except ValueError:
            circle = None

    endpoint_error = None
    if path.error is None:
        try:
            grid = [k * h for k in range(len(path.points))]
            ref = dg.reference_trajectory(
                md.nonholonomic_field(sys_spec),
                [*s.q0, s.v0[0], s.v0[1]], grid, tol=s.oracle_tol)
            metrics = dg.error_metrics(path, ref[:, : sys_spec.n])
            endpoint_error = metrics.endpoint_error
        except (SolverError, ValueError):
            endpoint_error = None

    e0 = energy[0].value
    mean_drift = float(np.mean([abs(p.value - e0) for p in energy]))
    mean_res = float(np.mean([[abs(p.value) for p in series] for series in cont]))

    lines = [
        f"system: {sys_spec.name}",
        f"integrator: {s.integrator}",
        f"alpha: {s.params.alpha!r}  h: {h!r}  scheme: {s.params.scheme}",
        f"n_steps requested: {s.n_steps}  completed: {max(len(path.points) - 2, 0)}",
        f"q0: {s.q0}",
        f"v0: {s.v0}",
        f"seed: {s.seed}",
        f"seeded energy level: {_fmt(e0)}",
        f"mean |energy drift|: {_fmt(mean_drift)}",
        f"mean |constraint residual| (continuous): {_fmt(mean_res)}",
    ]
    if path.newton_iterations:
        lines.append(f"newton iterations (max): {max(path.newton_iterations)}")
        lines.append(f"defining residual (max): {_fmt(max(path.defining_residuals))}")
    if endpoint_error is not None:
        lines.append(f"endpoint error vs reference: {_fmt(endpoint_error)}")
    if circle is not None:
        lines.append(
            f"circle fit ({labels[s.circle[0]]},{labels[s.circle[1]]}): "
            f"center=({_fmt(circle.center[0])},{_fmt(circle.center[1])}) "
            f"radius={_fmt(circle.radius)} max_residual={_fmt(circle.max_residual)}")
    if path.error is not None:
        lines.append(f"ERROR: {path.error}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")

    _write_plot_script(out, sys_spec, s.circle)
    return RunResult(path, endpoint_error, circle, mean_drift, mean_res, path.error)


def _write_plot_script(out: Path, sys_spec: md.SystemSpec, circle):
    i, j = circle if circle is not None else (0, 1)
    text = f"""# gnuplot script for the CSV outputs in this directory
set datafile separator ','
set key outside

set terminal pngcairo size 800,600
set output 'trajectory.png'
set xlabel '{sys_spec.labels[i]}'
set ylabel '{sys_spec.labels[j]}'
plot 'trajectory.csv' using {i + 3}:{j + 3} every ::1 with linespoints title 'path'

set output 'energy.png'
set xlabel 't'
set ylabel 'E'
plot 'energy.csv' using 2:3 every ::1 with linespoints title 'discrete energy'

set output 'constraints.png'
set xlabel 't'
set ylabel 'residual'
plot 'constraints.csv' using 2:3 every ::1 with linespoints title 'continuous residual', \\
     'constraints.csv' using 2:{3 + sys_spec.m} every ::1 with linespoints title 'discrete residual'
"""
    (out / "plot.gp").write_text(text)


def cmd_simulate(config_path, out_dir=None) -> int:
    raw = load_config(config_path)
    settings = resolve_run_config(raw)
    out = Path(out_dir or raw.get("out_dir", "out"))
    result = _run_single(settings, out)
    if result.error is not None:
        print(f"numerical failure: {result.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {out}/trajectory.csv energy.csv constraints.csv summary.txt plot.gp")
    return EXIT_OK


def cmd_sweep(config_path, param: str, values, out_dir=None) -> int:
    raw = load_config(config_path)
    if param not in ("alpha", "h"):
        raise ConfigError(f"sweep parameter must be alpha or h, got {param!r}")
    if len(values) < 2:
        raise ConfigError("sweep needs at least two values")
    base_out = Path(out_dir or raw.get("out_dir", "out"))
    settings_list = []
    for v in values:
        raw_v = dict(raw)
        raw_v[param] = v
        settings_list.append(resolve_run_config(raw_v))
    dirs = [base_out / f"{param}_{_fmt(v)}" for v in values]

    def _task(pair):
        st, d = pair
        try:
            return _run_single(st, d)
        except NonholoError as err:
            return RunResult(it.DiscretePath(h=st.params.h, points=[]),
                             None, None, float("nan"), float("nan"), str(err))

    workers = min(len(values), os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_task, zip(settings_list, dirs)))

    rows = []
    for v, res in zip(values, results):
        rows.append([
            _fmt(v),
            _fmt(res.endpoint_error) if res.endpoint_error is not None else "nan",
            _fmt(res.circle.max_residual) if res.circle is not None else "nan",
            _fmt(res.mean_energy_drift),
            _fmt(res.mean_constraint_residual),
            "ok" if res.error is None else "failed",
        ])
    _write_csv(base_out / "sweep_summary.csv",
               [param, "endpoint_error", "circle_residual",
                "mean_energy_drift", "mean_constraint_residual", "status"],
               rows)
    print(f"wrote {base_out}/sweep_summary.csv ({len(values)} runs)")
    return EXIT_OK if all(r.error is None for r in results) else EXIT_NUMERICAL


def _verify_settings(raw: dict):
    known = {"system", "sode", "candidate", "depth", "samples", "probes",
             "seed", "tolerance", "on_constraint", "out_dir", "lagrangian"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        sys_spec = md.build_system(raw.get("system", ""))
    except (ValueError, NonholoError) as err:
        raise ConfigError(f"config field 'system': {err}") from None
    sode_kind = raw.get("sode", md.ASSOC2)
    if sode_kind not in (md.ASSOC1, md.ASSOC2, md.EXTENDED):
        raise ConfigError(f"unknown sode kind {sode_kind!r}")
    candidate = raw.get("candidate", "hessian-of-type1")
    if candidate not in _CANDIDATES:
        raise ConfigError(
            f"unknown candidate {candidate!r}; choose from {', '.join(_CANDIDATES)}")
    depth = int(raw.get("depth", 3))
    samples = int(raw.get("samples", 50))
    probes = int(raw.get("probes", 200))
    if samples < 1:
        raise ConfigError("samples must be positive")
    seed = int(os.environ.get("NONHOLO_SEED", raw.get("seed", 0)))
    tolerance = float(raw.get("tolerance", 1e-8))
    on_constraint = bool(raw.get("on_constraint", False))
    return sys_spec, sode_kind, candidate, depth, samples, probes, seed, \
        tolerance, on_constraint


def cmd_verify(config_path, out_dir=None) -> int:
    raw = load_config(config_path)
    (sys_spec, sode_kind, candidate_name, depth, samples, probes, seed,
     tolerance, on_constraint) = _verify_settings(raw)
    out = Path(out_dir or raw.get("out_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        sode = md.associated_sode(sys_spec, sode_kind)
    except ValueError as err:
        raise ConfigError(str(err)) from None

    rng = np.random.default_rng(seed)
    points = []
    skipped = 0
    for _ in range(samples):
        q, v = md.sample_admissible(sys_spec, rng, on_constraint=on_constraint)
        try:
            sode.f(q, v)
        except NonholoError:
            skipped += 1
            continue
        points.append((q, v))
    if not points:
        print("no admissible sample points", file=sys.stderr)
        return EXIT_NUMERICAL

    rows = []
    if candidate_name == "pointwise-space":
        dims, dets, founds = [], [], []
        for q, v in points:
            space = hh.algebraic_multiplier_space(
                sode, q, v, depth, probes=probes, seed=seed)
            dims.append(space.dimension)
            dets.append(space.max_abs_det)
            founds.append(space.nonsingular_found)
        found = all(founds)
        any_found = any(founds)
        rows.append(["space_dimension_min", _fmt(min(dims)), "", ""])
        rows.append(["space_dimension_max", _fmt(max(dims)), "", ""])
        rows.append(["max_normalized_det", _fmt(max(dets)), _fmt(1e-8), ""])
        rows.append(["nonsingular_found_all_points", "1" if found else "0", "", ""])
        verdict = ("nonsingular multiplier found at every sampled point"
                   if found else
                   "nonsingular multiplier found at some sampled points"
                   if any_found else
                   "no nonsingular multiplier found")
    else:
        kind = lg.TYPE1 if candidate_name == "hessian-of-type1" else lg.TYPE2
        lag_cfg = raw.get("lagrangian") or {}
        constants = dict(lag_cfg.get("constants") or {})
        if "w_s" in constants:
            constants["w_s"] = tuple(float(x) for x in constants["w_s"])
        try:
            free = lg.free_lagrangian(sys_spec, kind, **constants)
        except ValueError as err:
            raise ConfigError(f"lagrangian: {err}") from None
        report = hh.multiplier_residuals(
            sode, hh.hessian_candidate(free), points, tol=tolerance)
        for name in hh.CONDITIONS:
            r = report.residuals[name]
            if r is None:
                rows.append([name, "skipped", _fmt(tolerance), ""])
            else:
                rows.append([name, _fmt(r), _fmt(tolerance),
                             "pass" if r <= tolerance else "fail"])
        rows.append(["min_abs_det", _fmt(report.min_abs_det), "", ""])
        verdict = ("all conditions pass" if report.all_passed()
                   else "some conditions fail")

    _write_csv(out / "helmholtz_report.csv",
               ["name", "value", "threshold", "pass"], rows)
    lines = [
        f"system: {sys_spec.name}",
        f"sode: {sode_kind}",
        f"candidate: {candidate_name}",
        f"depth: {depth}",
        f"points used: {len(points)} (skipped {skipped})",
        f"seed: {seed}",
        f"verdict: {verdict}",
    ]
    (out / "verdict.txt").write_text("\n".join(lines) + "\n")
    print(f"verdict: {verdict}")
    return EXIT_OK


def cmd_systems() -> int:
    for name in md.registry_names():
        sys_spec = md.build_system(name)
        coeffs = ", ".join(a.text for a in sys_spec.A)
        pot = f"  V = {sys_spec.potential.text}" if sys_spec.potential else ""
        print(f"{name}: coords ({', '.join(sys_spec.labels)}), "
              f"I1={sys_spec.I1}, I2={sys_spec.I2}, I_s={sys_spec.I_s}, "
              f"A = [{coeffs}]{pot}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nonholo",
        description="Simulate, sweep, and verify integrators for a class of "
                    "nonholonomic mechanical systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one trajectory with diagnostics")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default=None)

    p_sweep = sub.add_parser("sweep", help="rerun while varying alpha or h")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--param", required=True, choices=("alpha", "h"))
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated, fractions allowed (1/3)")
    p_sweep.add_argument("--out", default=None)

    p_ver = sub.add_parser("verify", help="multiplier condition checks")
    p_ver.add_argument("--config", required=True)
    p_ver.add_argument("--out", default=None)

    sub.add_parser("systems", help="list the built-in system registry")

    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args.config, args.out)
        if args.command == "sweep":
            values = [parse_value_token(t) for t in args.values.split(",")]
            return cmd_sweep(args.config, args.param, values, args.out)
        if args.command == "verify":
            return cmd_verify(args.config, args.out)
        return cmd_systems()
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NonholoError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
