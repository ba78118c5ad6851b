"""Command-line harness.

Subcommands:
  simulate     run a configured scenario; write report JSON + history CSV
  decompose    split configured initial data into profile + fluctuation
  spectrum     refined eigenvalues (and sandwich margins) of an operator
  fk-verify    Monte Carlo kernel vs direct product-formula propagator
  asymptotics  blowup-law fits for a configured run plus the ODE control
  suite        tagged acceptance checks; exit 0 only if all selected pass

Common flags: --config FILE (flat key = value), --seed, --out DIR, plus
--scenario/--p/--b0 overrides. Artifacts are deterministic for a fixed
config and seed: JSON is sorted-key without timestamps, CSV has the fixed
column order documented in pipeline.CSV_COLUMNS.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .acceptance import Context, available_tags, run_checks, verify_suite
from .decompose import solve_g
from .dynamics import fit_inverse_b_slope, integrate_truncated
from .fk import (conjugated_potential, dense_conjugated_propagator,
                 fk_kernel_matrix, sample_ou_bridge)
from .grid import Grid
from .pipeline import (ExperimentConfig, initial_window_norms,
                       make_initial_data, report_to_json, run_pipeline,
                       write_history_csv)
from .spectral import check_eigen_bounds, refined_eigenvalues

__all__ = ["main"]


def _build_config(args) -> ExperimentConfig:
    """File config plus flag overrides; flags win. Without a file, c0 is
    left to the scenario default."""
    from dataclasses import asdict

    overrides = {}
    for key in ("scenario", "p", "b0", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_file(args.config)
        if overrides:
            d = asdict(cfg)
            d.update(overrides)
            cfg = ExperimentConfig(**d)
    else:
        cfg = ExperimentConfig(**overrides)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _emit(args, name: str, text: str) -> str | None:
    out_dir = getattr(args, "out", None)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        return path
    return None


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    report = run_pipeline(cfg)
    tail = f"  (frame tail {report.t_star_tail})" if report.t_star_tail else ""
    print(f"t* = {report.t_star}{tail}")
    for k, f in sorted(report.fits.items()):
        print(f"fit {k}: {f.fitted:.6g} (target {f.target:.6g}, "
              f"rel {f.rel_error:.3g})")
    js = report_to_json(report, include_series=args.series)
    path = _emit(args, f"run-{report.config_hash}.json", js)
    if path:
        print(f"wrote {path}")
        if report.history:
            csv_path = os.path.join(args.out, f"run-{report.config_hash}.csv")
            write_history_csv(report, csv_path)
            print(f"wrote {csv_path}")
    else:
        print(js)
    for err in report.errors:
        print(f"error: {err}", file=sys.stderr)
    return 0 if not report.errors else 1


def cmd_decompose(args) -> int:
    cfg = _build_config(args)
    if cfg.scenario == "homogeneous":
        print("homogeneous data sit at b = 0 where the splitting is "
              "undefined", file=sys.stderr)
        return 1
    u0 = make_initial_data(cfg)
    norms = initial_window_norms(u0, cfg.p, cfg.b0, cfg.c0)
    guess = (cfg.gauge_l * cfg.c0 + (1.0 - cfg.gauge_l) * 0.5,
             max(cfg.b0, 1e-4))
    split = solve_g(u0, cfg.p, initial=guess, gauge_l=cfg.gauge_l)
    payload = {
        "a": split.a, "b": split.b, "c": split.params.c,
        "iterations": split.iterations, "g_norm": split.g_norm,
        "ortho_residuals": list(np.asarray(split.ortho_residuals, float)),
        "initial_norms": norms,
        "fluctuation_sup": float(np.abs(split.fluctuation.values).max()),
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    path = _emit(args, "decompose.json", text)
    print(path if path else text)
    return 0


def cmd_spectrum(args) -> int:
    grid = Grid(args.half_width, args.points)
    if args.kind == "linearized":
        res = check_eigen_bounds(grid, args.p, args.a, args.b, args.c,
                                 count=args.count)
        payload = {
            "kind": args.kind,
            "eigenvalues": res["eigenvalues"].tolist(),
            "lower_margin": res["lower_margin"].tolist(),
            "upper_margin": res["upper_margin"].tolist(),
            "passed": res["passed"],
        }
        code = 0 if res["passed"] else 1
    else:
        params = {"oscillator": {"a": args.a},
                  "oscillator_shifted": {"alpha": args.alpha},
                  "rescaled": {"p": args.p, "alpha": args.alpha,
                               "beta": args.b}}[args.kind]
        vals = refined_eigenvalues(grid, args.kind, args.count, **params)
        payload = {"kind": args.kind, "eigenvalues": vals.tolist(),
                   "params": params}
        code = 0
    text = json.dumps(payload, sort_keys=True, indent=2)
    path = _emit(args, "spectrum.json", text)
    print(path if path else text)
    return code


def cmd_fk_verify(args) -> int:
    alpha, beta, r = args.alpha, args.beta, args.horizon
    stencil = np.linspace(-1.0, 1.0, 5)
    pot = conjugated_potential(args.p, alpha, beta)
    bridge = sample_ou_bridge(alpha, 0.0, r, n_steps=args.steps,
                              n_paths=args.paths, seed=args.seed or 0)
    mc, se = fk_kernel_matrix(pot, alpha, bridge, stencil, stencil)
    direct = dense_conjugated_propagator(Grid(14.0, 1401), args.p, alpha,
                                         beta, r, stencil, stencil)
    sigmas = np.abs(mc - direct) / se
    worst = float(sigmas.max())
    payload = {
        "alpha": alpha, "beta": beta, "horizon": r,
        "n_paths": bridge.n_paths, "n_steps": bridge.n_steps,
        "seed": bridge.seed,
        "worst_sigmas": worst, "passed": worst <= 3.0,
        "mc": mc.tolist(), "direct": direct.tolist(),
        "stderr": se.tolist(),
    }
    text = json.dumps(payload, sort_keys=True, indent=2)
    path = _emit(args, "fk-verify.json", text)
    print(f"worst |mc - direct|/se = {worst:.3f} "
          f"({'PASS' if worst <= 3.0 else 'FAIL'})")
    if path:
        print(f"wrote {path}")
    return 0 if worst <= 3.0 else 1


def cmd_asymptotics(args) -> int:
    cfg = _build_config(args)
    report = run_pipeline(cfg)
    if report.errors:
        for err in report.errors:
            print(f"error: {err}", file=sys.stderr)
        return 1
    traj = integrate_truncated(cfg.b0, 0.5 - cfg.b0 / (cfg.p - 1.0), cfg.p,
                               l=cfg.gauge_l, tau_end=110.0, n_samples=2201)
    ode_fit = fit_inverse_b_slope(traj.tau, traj.b, cfg.p,
                                  window=(10.0, 100.0))
    payload = {"fits": {k: f.as_dict() for k, f in report.fits.items()},
               "ode_control": ode_fit.as_dict(),
               "t_star": report.t_star, "t_star_tail": report.t_star_tail}
    text = json.dumps(payload, sort_keys=True, indent=2)
    path = _emit(args, "asymptotics.json", text)
    for k, f in sorted(report.fits.items()):
        print(f"{k}: fitted {f.fitted:.6g}, target {f.target:.6g}, "
              f"rel {f.rel_error:.3g}")
    print(f"ode_control: fitted {ode_fit.fitted:.6g}, "
          f"rel {ode_fit.rel_error:.3g}")
    if path:
        print(f"wrote {path}")
    return 0


def cmd_suite(args) -> int:
    ctx = Context(seed=args.seed or 0)
    if args.tags:
        tags = [t.strip() for t in args.tags.split(",") if t.strip()]
        report = verify_suite(tags, context=ctx)
    else:
        report = run_checks(context=ctx)
    print(report.to_text())
    _path = _emit(args, "suite.json", report.to_json())
    if _path:
        print(f"wrote {_path}")
    return 0 if report.all_passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blowlab",
        description="semilinear heat blowup laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, with_overrides=True):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", help="output directory")
        if with_overrides:
            sp.add_argument("--scenario", choices=("homogeneous",
                                                   "paper-family", "custom"))
            sp.add_argument("--p", type=float, default=None)
            sp.add_argument("--b0", type=float, default=None)

    sp = sub.add_parser("simulate", help="run a scenario end to end")
    common(sp)
    sp.add_argument("--series", action="store_true",
                    help="embed the full history in the JSON report")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("decompose", help="split initial data")
    common(sp)
    sp.set_defaults(fn=cmd_decompose)

    sp = sub.add_parser("spectrum", help="operator eigenvalues")
    common(sp, with_overrides=False)
    sp.add_argument("--kind", default="linearized",
                    choices=("linearized", "oscillator",
                             "oscillator_shifted", "rescaled"))
    sp.add_argument("--p", type=float, default=3.0)
    sp.add_argument("--a", type=float, default=0.5)
    sp.add_argument("--b", type=float, default=0.05)
    sp.add_argument("--c", type=float, default=0.5)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--count", type=int, default=8)
    sp.add_argument("--half-width", type=float, default=20.0,
                    dest="half_width")
    sp.add_argument("--points", type=int, default=2001)
    sp.set_defaults(fn=cmd_spectrum)

    sp = sub.add_parser("fk-verify", help="Monte Carlo vs direct propagator")
    common(sp, with_overrides=False)
    sp.add_argument("--p", type=float, default=3.0)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--beta", type=float, default=0.1)
    sp.add_argument("--horizon", type=float, default=0.5)
    sp.add_argument("--paths", type=int, default=100_000)
    sp.add_argument("--steps", type=int, default=128)
    sp.set_defaults(fn=cmd_fk_verify)

    sp = sub.add_parser("asymptotics", help="blowup-law fits + ODE control")
    common(sp)
    sp.set_defaults(fn=cmd_asymptotics)

    sp = sub.add_parser("suite", help="acceptance checks")
    common(sp, with_overrides=False)
    sp.add_argument("--tags", help="comma-separated tag filter "
                    f"(available: {', '.join(available_tags())})")
    sp.set_defaults(fn=cmd_suite)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
