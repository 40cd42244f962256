"""Command-line front end.

Settings are resolved in increasing precedence: built-in command defaults,
the optional ``[run]`` table of the parameter file, then command-line flags.
Exit codes: 0 ok, 1 verification failure, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (convergence_study, longrun_case1, longrun_case2, sign_test_property2,
                       turnpike_check)
from .backend import backend_name
from .discrete_dp import DPConfig, DPError, dp_backward, dp_vs_ode_error
from .io import config_hash, write_csv, write_ensemble, write_json, write_table
from .model import (Constant, DampedExponential, ModelParams, ParameterError, figure1_params,
                    tomllib, validate_params)
from .riccati import SolverError, feedback_coefficients, solve_finite, solve_infinite, value_function
from .simulator import (FINITE, INFINITE, SimConfig, SimulationError, closed_form_moments,
                        estimate_cost, feedback_residual, moment_estimates, simulate_optimal)
from .svg import line_chart
from .verify import CHECKS, FAIL, INCONCLUSIVE, VerifyConfig, run_verification

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "solve": {"T": 30.0, "dt": 0.01},
    "dp": {"T": 5.0, "dt": 0.01},
    "simulate": {"T": 30.0, "dt": 0.01, "n_paths": 1000, "seed": 1, "mode": FINITE},
    "converge": {"dt": 0.01, "n_paths": 5000, "seed": 1},
    "turnpike": {"T": 30.0, "dt": 0.01},
    "longrun": {"T": 50.0, "dt": 0.01, "n_paths": 20000, "seed": 1},
    "signtest": {"T": 50.0, "dt": 0.01, "n_paths": 20000, "seed": 1},
    "figure1": {"T": 50.0, "dt": 0.01, "n_paths": 5, "seed": 7},
    "verify": {"dt": 0.01, "n_paths": 20000, "seed": 1},
}
RUN_KEYS = ("T", "dt", "steps", "n_paths", "seed", "window_start", "window_end", "mode")


class InputError(ValueError):
    pass


def _read_document(path: Optional[str]) -> tuple[ModelParams, dict, str]:
    if path is None:
        return figure1_params(), {}, "builtin:figure1"
    p = Path(path)
    if not p.is_file():
        raise InputError(f"parameter file not found: {path}")
    raw = p.read_bytes()
    try:
        doc = json.loads(raw) if p.suffix.lower() == ".json" else tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse {path}: {exc}") from None
    params = ModelParams.from_dict(doc)
    run = doc.get("run", {})
    unknown = set(run) - set(RUN_KEYS)
    if unknown:
        raise InputError(f"unknown [run] keys: {', '.join(sorted(unknown))}")
    return params, dict(run), str(p)


def _resolve(args: argparse.Namespace, run: dict) -> dict:
    cfg = dict(DEFAULTS.get(args.command, {}))
    cfg.update(run)
    for key in RUN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    _check_overrides(cfg)
    return cfg


def _check_overrides(cfg: dict) -> None:
    if "T" in cfg and not (isinstance(cfg["T"], (int, float)) and math.isfinite(cfg["T"]) and cfg["T"] > 0):
        raise InputError("T must be positive")
    if "dt" in cfg and not (isinstance(cfg["dt"], (int, float)) and cfg["dt"] > 0):
        raise InputError("dt must be positive")
    if "T" in cfg and "dt" in cfg:
        n = cfg["T"] / cfg["dt"]
        if abs(n - round(n)) > 1e-9 * max(n, 1.0):
            raise InputError("T must be an integer multiple of dt")
    if cfg.get("steps") is not None and (int(cfg["steps"]) != cfg["steps"] or cfg["steps"] < 2):
        raise InputError("steps must be an integer >= 2")
    if "n_paths" in cfg and (int(cfg["n_paths"]) != cfg["n_paths"] or cfg["n_paths"] < 1):
        raise InputError("n-paths must be a positive integer")
    if "seed" in cfg and not (int(cfg["seed"]) == cfg["seed"] and 0 <= cfg["seed"] < 2 ** 64):
        raise InputError("seed must be an integer in [0, 2^64)")
    if cfg.get("mode") not in (None, FINITE, INFINITE):
        raise InputError("mode must be 'finite' or 'infinite'")
    ws, we = cfg.get("window_start"), cfg.get("window_end")
    if ws is not None and we is not None and not ws < we:
        raise InputError("window-start must be below window-end")


def _steps(cfg: dict) -> int:
    return int(cfg["steps"]) if cfg.get("steps") else int(round(cfg["T"] / cfg["dt"]))


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {path} is not writable")
    return out


def _meta(command: str, params: ModelParams, cfg: dict) -> dict:
    body = {"command": command, "params": params.to_dict(), "run": cfg}
    return {"config_hash": config_hash(body), "seed": cfg.get("seed", "none"), "command": command}


def _record_every(n_steps: int, max_nodes: int = 500) -> int:
    k = max(1, math.ceil(n_steps / max_nodes))
    while n_steps % k:
        k += 1
    return k


# -- commands -----------------------------------------------------------------

def cmd_solve(args, params, cfg, out) -> int:
    meta = _meta("solve", params, cfg)
    vc = solve_finite(params, cfg["T"], _steps(cfg))
    cols, data = vc.table()
    write_table(out / "coeffs.csv", cols, data, meta)
    summary = {"finite": vc.summary(), "params": params.to_dict()}
    if params.constant_rho_lambda:
        inf = solve_infinite(params)
        fb = feedback_coefficients(params, inf.abar_inf, 0.0)
        summary["infinite"] = dict(inf.summary(), ia_over_a=fb.ia_over_a, ib_over_a=float(fb.ib_over_a))
        summary["abar_inf"] = inf.abar_inf
    write_json(out / "summary.json", summary, meta)
    print(f"abar(0) = {float(vc.abar[0])!r}  C(0) = {float(vc.cval[0])!r}  ({len(vc.t)} nodes)")
    if "abar_inf" in summary:
        print(f"abar_inf = {summary['abar_inf']!r}")
    return EXIT_OK


def cmd_dp(args, params, cfg, out) -> int:
    meta = _meta("dp", params, cfg)
    T, dt = cfg["T"], cfg["dt"]
    res = dp_backward(DPConfig(params, T, dt))
    cols, data = res.table()
    write_table(out / "dp.csv", cols, data, meta, int_columns=("n",))
    dts = [dt, dt / 2, dt / 4]
    ode = solve_finite(params, T, int(round(T / dts[-1])))
    rep = dp_vs_ode_error([res] + [dp_backward(DPConfig(params, T, d)) for d in dts[1:]], ode)
    write_json(out / "dp_summary.json", {
        "T": T, "dt": dt, "N": res.N, "A0": res.A[0], "B0": res.B[0], "C0": float(res.C[0]),
        "max_relation_residual": float(res.relation_residuals().max()),
        "ode_comparison": {"dts": rep.dts, "a11_err": rep.a11_err, "c_err": rep.c_err, "order": rep.order},
    }, meta)
    print(f"N = {res.N}  A11_0 = {float(res.A[0, 0, 0])!r}  fitted order = {rep.order:.3f}")
    return EXIT_OK


def cmd_simulate(args, params, cfg, out) -> int:
    meta = _meta("simulate", params, cfg)
    T, dt, mode = cfg["T"], cfg["dt"], cfg["mode"]
    n_steps = int(round(T / dt))
    sim = SimConfig(T, dt, int(cfg["n_paths"]), int(cfg["seed"]), mode, record_every=_record_every(n_steps))
    infinite = None
    if params.constant_rho_lambda:
        infinite = solve_infinite(params)
    if mode == FINITE:
        coeffs = solve_finite(params, T, n_steps)
        value = value_function(coeffs.at(0), (params.x0, params.y0))
    else:
        if infinite is None:
            raise InputError("infinite mode needs constant rho and lambda")
        coeffs = infinite
        value = infinite.abar_inf * (params.x0 + params.y0 / params.gamma) ** 2 + float(infinite.c(0.0))
    ens = simulate_optimal(params, coeffs, sim)
    est = estimate_cost(ens)
    rows = []
    for k in np.unique(np.linspace(0, len(ens.t) - 1, 11).round().astype(int)):
        t = float(ens.t[k])
        m, se_m, v, se_v = moment_estimates(ens, t) if sim.n_paths > 1 else (float(ens.x[0, k]), 0.0, 0.0, 0.0)
        row = {"t": t, "mean_x": m, "mean_x_se": se_m, "var_x": v, "var_x_se": se_v}
        if infinite is not None and mode == INFINITE and isinstance(params.sigma, (Constant, DampedExponential)):
            cm, cv = closed_form_moments(params, infinite.abar_inf, t)
            row.update(closed_mean_x=cm, closed_var_x=cv)
        rows.append(row)
    write_ensemble(out / "paths.csv", ens, meta)
    write_json(out / "summary.json", {
        "config": sim.to_dict(), "seed": sim.seed, "backend": ens.backend, "cost": est.to_dict(),
        "value": value, "max_feedback_residual": feedback_residual(ens), "moments": rows}, meta)
    print(f"cost = {est.mean!r} +- {est.std_error!r}  value = {value!r}")
    return EXIT_OK


def cmd_converge(args, params, cfg, out) -> int:
    meta = _meta("converge", params, cfg)
    T_list = [float(x) for x in args.T_list.split(",")]
    if any(T <= 0 for T in T_list):
        raise InputError("T must be positive")
    seeds = tuple(int(cfg["seed"]) + k for k in range(3))
    tab = convergence_study(params, T_list, dt=cfg["dt"], n_paths=int(cfg["n_paths"]), seeds=seeds)
    rows = [[r.T, r.abar_gap, r.c_gap, r.path_gap, r.path_gap_se] for r in tab.rows]
    write_csv(out / "converge.csv", ["T", "abar_gap", "c_gap", "path_gap", "path_gap_se"], rows, meta)
    write_json(out / "converge.json", tab.to_dict(), meta)
    dec = tab.decreasing()
    print("decreasing: " + ", ".join(f"{k}={v}" for k, v in dec.items()))
    return EXIT_OK if all(dec.values()) else EXIT_VERIFY


def cmd_turnpike(args, params, cfg, out) -> int:
    meta = _meta("turnpike", params, cfg)
    rep = turnpike_check(params, cfg["T"], _steps(cfg))
    cols, data = rep.table()
    write_table(out / "turnpike.csv", cols, data, meta)
    write_json(out / "turnpike.json", rep.to_dict(), meta)
    print(f"mu = {rep.mu:.6g}  K = {rep.K:.6g}  pass = {rep.passed}  min margin = {rep.min_margin:.6g}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_longrun(args, params, cfg, out) -> int:
    damped = isinstance(params.sigma, DampedExponential)
    default_window = (40.0, 50.0) if damped else (30.0, 50.0)
    window = (cfg.get("window_start", default_window[0]), cfg.get("window_end", default_window[1]))
    cfg = dict(cfg, window_start=window[0], window_end=window[1])
    meta = _meta("longrun", params, cfg)
    n_steps = int(round(cfg["T"] / cfg["dt"]))
    rec = max(1, int(round(0.25 / cfg["dt"])))
    sim = SimConfig(cfg["T"], cfg["dt"], int(cfg["n_paths"]), int(cfg["seed"]), INFINITE,
                    record_every=rec if n_steps % rec == 0 else 1)
    if damped:
        rep = longrun_case1(params, sim, window)
        ok = rep.second_moment_at_start <= 1e-4 and rep.max_abs_window < 0.05
    elif isinstance(params.sigma, Constant):
        rep = longrun_case2(params, sim, window)
        stat = rep.stationary_variance
        ok = 0.9 * stat <= rep.estimate <= 1.1 * stat and rep.bootstrap_confidence >= 0.99
    else:
        raise InputError("longrun needs a constant or damped-exponential sigma")
    write_json(out / "longrun.json", dict(rep.to_dict(), passed=ok), meta)
    print(f"case = {rep.case}  E[X^2] = {rep.estimate!r}  pass = {ok}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_signtest(args, params, cfg, out) -> int:
    meta = _meta("signtest", params, cfg)
    n_steps = int(round(cfg["T"] / cfg["dt"]))
    sim = SimConfig(cfg["T"], cfg["dt"], int(cfg["n_paths"]), int(cfg["seed"]), INFINITE,
                    record_every=n_steps)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = sign_test_property2(params, sim, args.position_tol)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_json(out / "signtest.json", rep.to_dict(), meta)
    if not rep.applicable:
        print("sign test not applicable (no external flow)")
        return EXIT_OK
    print(f"fraction = {rep.fraction}  samples = {rep.n_samples}")
    return EXIT_OK if (not rep.conclusive or rep.fraction >= 0.99) else EXIT_VERIFY


def cmd_figure1(args, params, cfg, out) -> int:
    # parameters are fixed by the figure; the params file is not used
    panels = {"left": figure1_params(False), "right": figure1_params(True)}
    meta = _meta("figure1", panels["left"], cfg)
    T, dt = cfg["T"], cfg["dt"]
    sim = SimConfig(T, dt, int(cfg["n_paths"]), int(cfg["seed"]), INFINITE)
    rows, checks = [], {}
    thin = max(1, int(round(0.1 / dt)))
    for pi, (name, p) in enumerate(panels.items()):
        ens = simulate_optimal(p, solve_infinite(p), sim)
        t = ens.t
        series = [(np.concatenate([[0.0], t[::thin]]), np.concatenate([[p.x0], ens.x[i, ::thin]]))
                  for i in range(ens.x.shape[0])]
        label = "sigma = 0.25" if name == "left" else "sigma_t = 0.25 exp(-0.2 t)"
        svg = line_chart(series, f"Optimal position, {label}", "t", "X_t", meta=meta)
        (out / f"fig1_{name}.svg").write_text(svg, encoding="utf-8")
        for i in range(ens.x.shape[0]):
            rows.extend((pi, int(ens.path_ids[i]), float(tt), float(ens.x[i, k]), float(ens.y[i, k]))
                        for k, tt in enumerate(t))
        late20 = ens.x[:, t > 20.0]
        checks[name] = {
            "start_after_jump": ens.x[:, 0].tolist(),
            "crosses_zero_after_20": bool(np.any(np.diff(np.sign(late20), axis=1) != 0)),
            "max_abs_after_40": float(np.max(np.abs(ens.x[:, t >= 40.0]))),
        }
    write_csv(out / "paths.csv", ["panel", "path", "t", "X", "Y"], rows, meta)
    write_json(out / "figure1.json", {"config": sim.to_dict(), "panels": checks,
                                      "panel_codes": {"0": "left", "1": "right"}}, meta)
    print(f"left crosses zero after t=20: {checks['left']['crosses_zero_after_20']}; "
          f"right max |X| after t=40: {checks['right']['max_abs_after_40']:.3g}")
    return EXIT_OK


def cmd_verify(args, params, cfg, out) -> int:
    meta = _meta("verify", params, cfg)
    n_paths = int(cfg["n_paths"])
    vc = VerifyConfig(dt=cfg["dt"], n_paths=n_paths, converge_paths=min(5000, n_paths),
                      seed=int(cfg["seed"]), abar_scale=args.abar_scale)
    only = args.only.split(",") if args.only else None
    unknown = sorted(set(only or ()) - set(CHECKS))
    if unknown:
        raise InputError(f"unknown checks: {', '.join(unknown)}")
    with warnings.catch_warnings():
        # inconclusive checks are reported below
        warnings.simplefilter("ignore", RuntimeWarning)
        results = run_verification(params, vc, only)
    failed = [r.name for r in results if r.status == FAIL]
    for r in results:
        line = f"{r.status.upper():<13} {r.name:<18} {r.seconds:7.2f}s"
        if r.message:
            line += f"  {r.message}"
        print(line)
        if r.status == INCONCLUSIVE:
            print(f"warning: {r.name}: {r.message or 'inconclusive'}", file=sys.stderr)
    write_json(out / "verify.json", {"backend": backend_name(), "checks": [r.to_dict() for r in results],
                                     "failed": failed, "passed": not failed}, meta)
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {
    "solve": cmd_solve, "dp": cmd_dp, "simulate": cmd_simulate, "converge": cmd_converge,
    "turnpike": cmd_turnpike, "longrun": cmd_longrun, "signtest": cmd_signtest,
    "figure1": cmd_figure1, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longliq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--params", help="TOML or JSON parameter file (default: figure-1 parameters)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--T", dest="T", type=float, help="horizon")
    common.add_argument("--dt", type=float, help="time step")
    common.add_argument("--steps", type=int, help="ODE grid steps (default T/dt)")
    common.add_argument("--n-paths", dest="n_paths", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--window-start", dest="window_start", type=float)
    common.add_argument("--window-end", dest="window_end", type=float)
    common.add_argument("--mode", choices=[FINITE, INFINITE])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "solve the backward coefficient equations",
        "dp": "run the discrete dynamic program",
        "simulate": "simulate the optimal strategy",
        "converge": "finite to infinite horizon convergence table",
        "turnpike": "check the turnpike bound",
        "longrun": "long-run second moment of the optimal position",
        "signtest": "trade-sign rule near a flat position",
        "figure1": "reproduce the long-run position figure",
        "verify": "run every numerical check",
    }
    subs = {name: sub.add_parser(name, parents=[common], help=h) for name, h in helps.items()}
    subs["converge"].add_argument("--T-list", dest="T_list", default="5,10,20,40")
    subs["signtest"].add_argument("--position-tol", dest="position_tol", type=float, default=1e-3)
    subs["verify"].add_argument("--only", help="comma-separated subset of checks")
    subs["verify"].add_argument("--abar-scale", dest="abar_scale", type=float, default=1.0,
                                help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        params, run, _ = _read_document(args.params)
        problems = validate_params(params)
        if problems:
            raise InputError("; ".join(problems))
        cfg = _resolve(args, run)
        out = _out_dir(args.out)
        return COMMANDS[args.command](args, params, cfg, out)
    except (InputError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, DPError, SimulationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
