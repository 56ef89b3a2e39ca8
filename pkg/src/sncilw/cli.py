"""Command-line front end.

Verbs: generate, evolve, fields, verify, calibrate, selftest, list.  Every error
exit prints exactly one line ``error <Code>: <message>`` on stderr; a failed
verification prints ``FAIL <name>=<value> > <tol> ...`` and exits 1.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .backlund import backlund_residuals
from .dynamics import evolve
from .errors import ScenarioError, SncilwError, UnbalancedState
from .scenario import (
    Scenario,
    build_initial_data,
    load_state,
    resolve_scenario,
    save_state,
    shipped_scenarios,
)
from .verify import calibrate_multipliers, exact_multipliers, invariant_report, pde_residual
from .waves import analytic_time_derivative, boundary_report, eval_fields

EXIT_FAIL = 1
EXIT_ERROR = 2


# --------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(path, header: list[str], rows) -> Path:
    """CSV with a ``# created:`` line, a header row and '.'-decimal numbers."""
    path = Path(path)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# created: {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _complex_columns(prefix: str, count: int):
    return [c for j in range(1, count + 1) for c in (f"re_{prefix}{j}", f"im_{prefix}{j}")]


def _matrix_columns(prefix: str, d: int):
    return [c for i in range(1, d + 1) for j in range(1, d + 1) for c in (f"re_{prefix}{i}{j}", f"im_{prefix}{i}{j}")]


def _split(z) -> list:
    z = np.asarray(z, complex).ravel()
    return [v for c in z for v in (c.real, c.imag)]


def _out_dir(sc: Scenario, out: str | None) -> Path:
    base = Path(out) if out else Path(sc.out or "runs")
    path = base / sc.name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _initial_state(sc: Scenario, outdir: Path, data: str | None):
    path = Path(data) if data else outdir / "initial.json"
    if path.exists():
        return load_state(path)[0]
    if data:
        raise ScenarioError(f"data file {path} not found")
    state, info = build_initial_data(sc)
    save_state(path, state, info)
    return state


def _trajectory(sc: Scenario, state, strict: bool, times=None):
    times = np.asarray(sc.times if times is None else times, float)
    t_end = float(times.max())
    if t_end <= state.t:
        return [state], None
    traj = evolve(state, sc.case_kind(), t_end, sc.integrator_config(strict), times=times)
    return traj.states, traj


# --------------------------------------------------------------------------
# verbs


def cmd_generate(sc: Scenario, out: str | None = None, **_) -> int:
    outdir = _out_dir(sc, out)
    state, info = build_initial_data(sc)
    save_state(outdir / "initial.json", state, {"scenario": sc.name, **info})
    print(f"generated {sc.name}: constraint_residual={info['constraint_residual']:.3e} -> {outdir / 'initial.json'}")
    return 0


def cmd_evolve(sc: Scenario, out: str | None = None, strict: bool = False, data: str | None = None,
               samples: int = 101, **_) -> int:
    outdir = _out_dir(sc, out)
    state = _initial_state(sc, outdir, data)
    t_end = max(sc.times)
    if t_end <= state.t:
        raise ScenarioError("times must extend beyond the initial time to evolve")
    span = t_end - state.t
    if sc.integrator_config().scheme == "rk4":
        # keep the output spacing a multiple of dt so sampling never shortens the step
        dt = sc.integrator_config().dt
        samples = min(samples, int(span / dt + 1e-9) + 1)
        stride = dt * math.ceil(span / (dt * max(samples - 1, 1)) - 1e-9)
        grid = state.t + stride * np.arange(int(span / stride + 1e-9) + 1)
        grid = np.union1d(grid[grid < t_end - 1e-12], [*sc.times, t_end])
    else:
        grid = np.union1d(np.linspace(state.t, t_end, samples), sc.times)
    grid = grid[grid >= state.t]
    states, traj = _trajectory(sc, state, strict, grid)
    rep = invariant_report(traj, sc.case_kind(), sc.tol())
    d = state.d
    header = (["t"] + _complex_columns("a", state.N) + _complex_columns("b", state.M_count)
              + _matrix_columns("M", d) + ["min_sep", "strip_margin", "drift_P", "drift_Q",
                                          "drift_norm_fe_max", "backlund_res_max"])
    rows = []
    for k, s in enumerate(states):
        diag = [rep.columns[c][k] for c in ("min_sep", "strip_margin", "drift_P", "drift_Q",
                                            "drift_norm_fe_max", "backlund_res_max")]
        rows.append([s.t] + _split(s.a) + _split(s.b) + _split(s.M_bg) + diag)
    path = write_csv(outdir / "trajectory.csv", header, rows)
    save_state(outdir / "final.json", states[-1], {"scenario": sc.name})
    print(f"evolved {sc.name} to t={t_end:g}: {len(states)} samples -> {path}")
    for msg in traj.warnings:
        print(f"warning StripExit: {msg}", file=sys.stderr)
    return 0


def cmd_fields(sc: Scenario, out: str | None = None, strict: bool = False, data: str | None = None, **_) -> int:
    outdir = _out_dir(sc, out)
    state = _initial_state(sc, outdir, data)
    states, _ = _trajectory(sc, state, strict)
    case = sc.case_kind()
    x = sc.grid()
    d = state.d
    for k, s in enumerate(states):
        smp = eval_fields(s, case, x)
        header = ["x"] + _matrix_columns("U", d) + ([] if smp.V is None else _matrix_columns("V", d))
        rows = []
        for i in range(x.size):
            row = [x[i]] + _split(smp.U[i])
            if smp.V is not None:
                row += _split(smp.V[i])
            rows.append(row)
        write_csv(outdir / f"fields_{k:03d}.csv", header, rows)
    print(f"wrote {len(states)} field slices for {sc.name} -> {outdir}")
    return 0


def verify_scenario(sc: Scenario, state, strict: bool = False, tol: dict | None = None):
    """Residual rows, column names and the list of failed checks."""
    case = sc.case_kind()
    tol = {**sc.tol(), **(tol or {})}
    states, traj = _trajectory(sc, state, strict)
    x = sc.grid()
    table = calibrate_multipliers(case, x.size) if case.periodic else None
    boundary = case.tag in ("I", "III")
    header = ["t", "pde_res_U", "pde_res_V", "pde_res_max", "op_tail", "drift_P", "drift_Q",
              "drift_norm_fe_max", "backlund_res_max", "velocity_mismatch"]
    if boundary:
        header += ["boundary_defect", "boundary_tail"]
    rep = invariant_report(traj, case, tol) if traj is not None else None
    rows, failures = [], []
    for k, s in enumerate(states):
        try:
            r = pde_residual(analytic_time_derivative(s, case, x), case, table)
        except UnbalancedState as exc:
            # inadmissible data: measure anyway so the report shows the excess
            failures.append(f"{exc.code} at t={s.t:g}: {_one_line(exc)}")
            smp = analytic_time_derivative(s, case, x, balance_tol=math.inf)
            r = pde_residual(smp, case, table, spectral_tol=math.inf)
        ru, rv = r.max_norm["U"], r.max_norm.get("V", 0.0)
        if rep is not None:
            mon = [rep.columns[c][k] for c in ("drift_P", "drift_Q", "drift_norm_fe_max",
                                               "backlund_res_max", "velocity_mismatch")]
        else:
            br = backlund_residuals(s, case)
            mon = [0.0, 0.0, 0.0, br.max_norm, br.velocity_mismatch]
        row = [s.t, ru, rv, max(ru, rv), r.tail_estimate] + mon
        named = dict(zip(header, row))
        if boundary:
            b = boundary_report(s, case, x[0], x[-1])
            row += [b["boundary_defect"], b["boundary_tail"]]
            if not b["boundary_defect"] <= b["boundary_tail"]:
                failures.append(f"boundary_defect={b['boundary_defect']:.3e} > {b['boundary_tail']:.1e} at t={s.t:g}")
        for name in ("pde_res_max", "drift_P", "drift_Q", "drift_norm_fe_max", "backlund_res_max",
                     "velocity_mismatch"):
            if not named[name] <= tol[name]:
                failures.append(f"{name}={named[name]:.3e} > {tol[name]:.1e} at t={s.t:g}")
        rows.append(row)
    return header, rows, failures


def cmd_verify(sc: Scenario, out: str | None = None, strict: bool = False, data: str | None = None,
               tol: dict | None = None, **_) -> int:
    outdir = _out_dir(sc, out)
    state = _initial_state(sc, outdir, data)
    header, rows, failures = verify_scenario(sc, state, strict, tol)
    write_csv(outdir / "verify.csv", header, rows)
    worst = max(r[3] for r in rows)
    verdict = "PASS" if not failures else "FAIL"
    lines = [f"scenario: {sc.name}", f"case: {sc.case}", f"grid points: {sc.grid().size}",
             f"samples: {len(rows)}", f"worst pde_res_max: {worst:.3e}", f"verdict: {verdict}"]
    lines += [f"failed: {f}" for f in failures]
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if failures:
        print(f"FAIL {sc.name}: " + "; ".join(failures), file=sys.stderr)
        return EXIT_FAIL
    print(f"PASS {sc.name}: worst pde_res_max={worst:.3e}")
    return 0


def cmd_calibrate(sc: Scenario, out: str | None = None, **_) -> int:
    case = sc.case_kind()
    if not case.periodic:
        raise ScenarioError(f"calibrate needs a periodic case (II or IV), got {case.tag}")
    outdir = _out_dir(sc, out)
    table = calibrate_multipliers(case, sc.n)
    exact = exact_multipliers(case, sc.n)
    m = np.fft.fftfreq(sc.n, 1.0 / sc.n).astype(int)
    names = ["T", "Ttilde"] if case.tag == "IV" else ["H"]
    header = ["mode"] + [c for nm in names for c in (f"re_{nm}", f"im_{nm}", f"re_{nm}_exact", f"im_{nm}_exact")]
    rows = []
    for i in np.argsort(m):
        row = [m[i]]
        for nm in names:
            row += [getattr(table, nm)[i].real, getattr(table, nm)[i].imag, exact[nm][i].real, exact[nm][i].imag]
        rows.append(row)
    write_csv(outdir / "multipliers.csv", header, rows)
    print(f"calibrated {case.tag} at n={sc.n}: coarse/fine mismatch {table.calibration_error:.2e}")
    return 0


def cmd_selftest(**_) -> int:
    """Fast internal consistency checks; prints one line per check."""
    from .elliptic import CaseKind, Lattice, kappa, wp2, zeta2
    from .verify import check_strip_eigenfunction, strip_test_functions

    checks = {}
    lat = Lattice(math.pi, 1.0)
    checks["legendre"] = (abs(lat.legendre_defect()), 1e-12)
    z = 0.37 + 0.21j
    checks["wp2=zeta2^2-kappa"] = (abs(wp2(z, lat) - (zeta2(z, lat) ** 2 - kappa(z, lat))), 1e-10)
    case = CaseKind("IV", ell=math.pi, delta=1.0)
    table = calibrate_multipliers(case, 256)
    checks["T(1)=0"] = (abs(table.T[0]), 0.0)
    checks["Ttilde(1)=-i"] = (abs(table.Ttilde[0] + 1j), 0.0)
    dev = max(check_strip_eigenfunction(g, lat, 256) for g in strip_test_functions(lat).values())
    checks["strip eigenfunction"] = (dev, 1e-7)
    ok = True
    for name, (val, tol) in checks.items():
        good = val <= tol
        ok &= good
        print(f"{'ok  ' if good else 'FAIL'} {name}: {val:.2e} (tol {tol:.0e})")
    return 0 if ok else EXIT_FAIL


VERBS = {"generate": cmd_generate, "evolve": cmd_evolve, "fields": cmd_fields, "verify": cmd_verify,
         "calibrate": cmd_calibrate}


# --------------------------------------------------------------------------
# entry point


def _parse_tol(items) -> dict:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ScenarioError(f"--tol expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ScenarioError(f"--tol {name}: {value!r} is not a number") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sncilw", description="Spin-pole soliton builder and PDE residual checker.")
    p.add_argument("verb", choices=[*VERBS, "selftest", "list"])
    p.add_argument("--scenario", action="append", default=[], help="scenario file or shipped name (repeatable)")
    p.add_argument("--out", default=None, help="output root; each scenario writes to <out>/<name>/")
    p.add_argument("--data", default=None, help="state file to use instead of <out>/<name>/initial.json")
    p.add_argument("--strict", action="store_true", help="treat strip exits as errors")
    p.add_argument("--jobs", type=int, default=1, help="worker processes across scenarios")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE", help="tolerance override")
    return p


def _run_one(verb: str, spec: str, kwargs: dict) -> tuple[int, str]:
    try:
        sc = resolve_scenario(spec)
        extra = kwargs.pop("tol", {})
        unknown = set(extra) - set(sc.tol())
        if unknown:
            raise ScenarioError(f"--tol: unknown names {sorted(unknown)}")
        sc.tolerances = {**sc.tolerances, **extra}
        return VERBS[verb](sc, **kwargs), ""
    except SncilwError as exc:
        return EXIT_ERROR, f"error {exc.code}: {_one_line(exc)}"
    except (OSError, ValueError) as exc:
        return EXIT_ERROR, f"error {type(exc).__name__}: {_one_line(exc)}"


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verb == "list":
        print("\n".join(shipped_scenarios()))
        return 0
    if args.verb == "selftest":
        try:
            return cmd_selftest()
        except SncilwError as exc:
            print(f"error {exc.code}: {_one_line(exc)}", file=sys.stderr)
            return EXIT_ERROR
    if not args.scenario:
        print("error ScenarioError: --scenario is required", file=sys.stderr)
        return EXIT_ERROR
    try:
        tol = _parse_tol(args.tol)
    except ScenarioError as exc:
        print(f"error {exc.code}: {_one_line(exc)}", file=sys.stderr)
        return EXIT_ERROR
    if args.data and len(args.scenario) > 1:
        print("error ScenarioError: --data applies to a single scenario", file=sys.stderr)
        return EXIT_ERROR
    kwargs = {"out": args.out, "strict": args.strict, "data": args.data, "tol": tol}
    jobs = [(args.verb, spec, dict(kwargs)) for spec in args.scenario]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*job) for job in jobs]
    code = 0
    for rc, msg in results:
        if msg:
            print(msg, file=sys.stderr)
        code = max(code, rc)
    return code


if __name__ == "__main__":
    sys.exit(main())
