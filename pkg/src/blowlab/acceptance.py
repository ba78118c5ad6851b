"""Numbered acceptance checks with fixed tolerances and runtime caps.

Each check is a free function over a shared Context that lazily builds the
expensive artifacts (the full similarity-frame run) exactly once. Checks
return CheckResult records; the suite report renders one line per check and
serializes without timing fields so reruns are byte-identical.

Dual-route comparisons (Monte Carlo vs dense propagator, PDE vs truncated
ODE, Duhamel vs IMEX) keep their two routes in separate modules on purpose;
nothing here may share intermediate state between the routes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .decompose import beta_closed_form, solve_g
from .dynamics import (fit_inverse_b_slope, integrate_truncated,
                       jacobian_at_equilibrium)
from .fk import (conjugated_potential, dense_conjugated_propagator,
                 fk_kernel_estimate, fk_kernel_matrix, mehler_kernel_u0,
                 propagator_decay_check, sample_ou_bridge)
from .grid import Field, Grid, cutoff_indicator
from .heat import (Problem, apriori_bound, duhamel_local_solve,
                   homogeneous_blowup_time, local_existence_time,
                   scaled_blowup_energy, solve_to_blowup, step_imex)
from .pipeline import (ExperimentConfig, RunReport, fixed_frame_energy_series,
                       make_initial_data, run_pipeline)
from .spectral import ProfileParams, check_eigen_bounds, gauge_profile, \
    refined_eigenvalues

__all__ = ["CheckResult", "SuiteReport", "Context", "CHECKS",
           "run_checks", "verify_suite", "available_tags"]


@dataclass
class CheckResult:
    index: int
    name: str
    tags: tuple
    passed: bool
    elapsed: float
    cap: float | None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        parts = [f"[{self.index:2d}] {verdict} {self.name} ({self.elapsed:.1f}s)"]
        for k, v in self.details.items():
            if isinstance(v, float):
                parts.append(f"{k}={v:.6g}")
            elif isinstance(v, (bool, int, str)):
                parts.append(f"{k}={v}")
        return " ".join(parts)


@dataclass
class SuiteReport:
    results: list

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_text(self) -> str:
        lines = [r.line() for r in self.results]
        n_pass = sum(r.passed for r in self.results)
        lines.append(f"{n_pass}/{len(self.results)} checks passed")
        return "\n".join(lines)

    def to_json(self) -> str:
        """Timing is excluded so identical configs give identical bytes."""
        payload = [{
            "index": r.index, "name": r.name, "tags": list(r.tags),
            "passed": r.passed,
            "details": {k: _scrub(v) for k, v in r.details.items()},
        } for r in self.results]
        return json.dumps({"checks": payload, "all_passed": self.all_passed},
                          sort_keys=True, indent=2)


def _scrub(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


class Context:
    """Shared artifacts. The flagship run is built on first use and reused
    by every check that consumes it."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._report: RunReport | None = None
        self._config: ExperimentConfig | None = None

    @property
    def config(self) -> ExperimentConfig:
        if self._config is None:
            self._config = ExperimentConfig(scenario="paper-family", p=3.0,
                                            b0=0.05, seed=self.seed)
        return self._config

    @property
    def report(self) -> RunReport:
        if self._report is None:
            self._report = run_pipeline(self.config)
            if self._report.errors:
                raise RuntimeError(
                    f"flagship run failed: {self._report.errors}")
        return self._report


CHECKS = []


def _check(index, name, tags, cap=None):
    def wrap(fn):
        fn.index, fn.name, fn.tags, fn.cap = index, name, tuple(tags), cap
        CHECKS.append(fn)
        return fn
    return wrap


@_check(1, "homogeneous_blowup_time", ("solver",), cap=30.0)
def check_homogeneous(ctx: Context) -> dict:
    cfg = ExperimentConfig(scenario="homogeneous", p=3.0, b0=0.0, c0=1.0,
                           grid_points=2001, grid_half_width=20.0)
    rep = run_pipeline(cfg)
    if rep.t_star is None:
        return {"passed": False, "errors": "; ".join(rep.errors)}
    rel = abs(rep.t_star - 0.5) / 0.5
    return {"passed": rel <= 0.01, "t_star": rep.t_star, "rel_error": rel}


@_check(2, "local_solver_agreement", ("solver",), cap=10.0)
def check_local_agreement(ctx: Context) -> dict:
    grid = Grid(20.0, 2001)
    u0 = Field(grid, np.ones(grid.num_points), parity="even")
    p = 3.0
    res = duhamel_local_solve(u0, p)
    t_local = local_existence_time(1.0, p)
    limit = apriori_bound(1.0, p)

    # the two routes impose different wall conventions (zero extension vs
    # Dirichlet pinning), so the comparison window stops one unit short of
    # the walls; the layer itself spreads only ~sqrt(T_local) ~ 0.05
    interior = np.abs(grid.nodes) <= grid.half_width - 1.0
    state = u0
    worst = 0.0
    dt = res.times[1] - res.times[0]
    for k in range(1, res.times.size):
        state = step_imex(state, dt, p)
        diff = np.abs(state.values - res.states[k])[interior]
        worst = max(worst, float(diff.max()))
    ok = (worst <= 1e-4 and res.converged and res.apriori_satisfied
          and abs(res.slab_length - t_local) <= 1e-15
          and abs(limit - 3.0 * 2.0 ** (1.0 / 3.0)) <= 1e-12)
    return {"passed": ok, "sup_diff": worst, "t_local": res.slab_length,
            "apriori_limit": limit, "apriori_ok": res.apriori_satisfied}


@_check(3, "splitting_exactness", ("splitting",), cap=5.0)
def check_splitting(ctx: Context) -> dict:
    grid = Grid(20.0, 2001)
    p = 3.0
    worst = 0.0
    for a0, b0 in ((0.5, 0.1), (0.45, 0.05), (0.55, 0.2)):
        params = ProfileParams(p=p, a=a0, b=b0)
        v = gauge_profile(grid, params)
        s = solve_g(v, p, initial=(a0 + 0.01, b0 * 1.1))
        worst = max(worst, abs(s.a - a0), abs(s.b - b0))

    ratios = []
    x2 = grid.nodes**2
    for b0 in (0.1, 0.05, 0.025):
        c0 = 0.5 - b0 / (p - 1.0)
        a0 = 2.0 * c0 - 0.5
        params = ProfileParams(p=p, a=a0, b=b0)
        base = gauge_profile(grid, params)
        data = base.with_values(base.values
                                + b0**2 * x2 * np.exp(-x2 / 9.0))
        s = solve_g(data, p, initial=(a0, b0))
        dev = float(np.hypot(s.a - a0, s.b - b0))
        ratios.append(dev / b0**2)
    spread = max(ratios) / min(ratios)
    ok = worst <= 1e-12 and spread < 2.0
    return {"passed": ok, "recovery_error": worst, "ratio_spread": spread,
            "ratios": np.asarray(ratios)}


@_check(4, "spectral_sandwich", ("spectral",), cap=60.0)
def check_spectral(ctx: Context) -> dict:
    grid = Grid(20.0, 2001)
    p = 3.0
    worst_lower = np.inf
    worst_upper = np.inf
    n_fail = 0
    for a in np.linspace(0.4, 0.6, 5):
        for c in np.linspace(0.4, 0.6, 5):
            for b in np.linspace(0.01, 0.2, 5):
                r = check_eigen_bounds(grid, p, float(a), float(b), float(c),
                                       count=8, slack=1e-5)
                worst_lower = min(worst_lower, r["lower_margin"].min())
                worst_upper = min(worst_upper, r["upper_margin"].min())
                n_fail += 0 if r["passed"] else 1

    osc_err = 0.0
    for a in (0.4, 0.5, 0.6):
        vals = refined_eigenvalues(grid, "oscillator", 8, a=a)
        osc_err = max(osc_err, float(np.abs(vals - a * np.arange(8)).max()))
    ok = n_fail == 0 and osc_err <= 1e-5
    return {"passed": ok, "cases_failed": n_fail,
            "worst_lower_margin": float(worst_lower),
            "worst_upper_margin": float(worst_upper),
            "oscillator_error": osc_err}


@_check(5, "b_law_slope", ("pipeline", "ode"), cap=300.0)
def check_b_law(ctx: Context) -> dict:
    rep = ctx.report
    fit = rep.fits["inverse_b_slope"]
    traj = integrate_truncated(0.05, 0.475, 3.0, l=2.0, tau_end=110.0,
                               n_samples=2201)
    ode_fit = fit_inverse_b_slope(traj.tau, traj.b, 3.0, window=(10.0, 100.0))
    ok = fit.rel_error <= 0.15 and ode_fit.rel_error <= 0.01
    return {"passed": ok, "pde_slope": fit.fitted,
            "pde_rel_error": fit.rel_error, "ode_slope": ode_fit.fitted,
            "ode_rel_error": ode_fit.rel_error, "target": fit.target}


@_check(6, "parameter_limits", ("pipeline",), cap=None)
def check_parameter_limits(ctx: Context) -> dict:
    rep = ctx.report
    hist = rep.history
    a_end = float(hist["a"][-1])
    c_end = float(hist["c"][-1])
    a_dev_peak = float(rep.majorants.a_dev[-1])
    ok = (abs(a_end - 0.5) <= 0.05 and abs(c_end - 0.5) <= 0.05
          and a_dev_peak <= 10.0)
    return {"passed": ok, "a_final": a_end, "c_final": c_end,
            "sup_a_deviation_over_beta2": a_dev_peak}


@_check(7, "majorant_boundedness", ("pipeline",), cap=None)
def check_majorants(ctx: Context) -> dict:
    rep = ctx.report
    maj = rep.majorants
    tau_span = maj.tau[-1] - maj.tau[0]
    early = maj.tau <= maj.tau[0] + 0.1 * tau_span
    details = {}
    ok = True
    for label, series in (("M1", maj.m1), ("A", maj.a_dev), ("B", maj.b_dev)):
        scale = max(float(series[early][-1]), 0.05)
        final = float(series[-1])
        details[f"{label}_final"] = final
        details[f"{label}_initial_scale"] = scale
        ok = ok and final <= 10.0 * scale

    m2_default = float(maj.m2[-1])
    m2_tight = _tightened_m2(rep)
    details["M2_final"] = m2_default
    details["M2_tightened"] = m2_tight
    ok = ok and m2_default < 0.1 and m2_tight < 0.1
    return {"passed": ok, **details}


def _tightened_m2(rep: RunReport) -> float:
    """Exterior seminorm at radius 2/sqrt(beta) recomputed from snapshots.

    The configured cutoff radius sits beyond the grid for this box size, so
    the default M2 is vacuously zero; this recheck shrinks the radius until
    the exterior region is actually sampled (early tau only; the radius
    escapes the box again once beta is small).
    """
    p = rep.config["p"]
    gauge_l = rep.config["gauge_l"]
    hist = rep.history
    worst = 0.0
    for tau_s, (_, _, v) in zip(rep.snapshot_tau, rep.snapshots):
        beta = float(beta_closed_form(tau_s, rep.majorants.b0, p))
        radius = 2.0 / np.sqrt(beta)
        if radius >= v.grid.half_width:
            continue
        i = int(np.argmin(np.abs(hist["tau"] - tau_s)))
        s = solve_g(v, p, initial=(hist["a"][i], hist["b"][i]),
                    gauge_l=gauge_l)
        mask = cutoff_indicator(v.grid, radius)
        worst = max(worst, float(np.abs(mask * s.difference.values).max()))
    return worst


@_check(8, "energy_monotonicity", ("energy", "solver"), cap=None)
def check_energy(ctx: Context) -> dict:
    u0 = make_initial_data(ctx.config)
    s, S = fixed_frame_energy_series(u0, ctx.config.p, s_end=8.0, ds=0.01)
    s_incr = float(np.diff(S).max())

    # wall-compatible data: the free energy must fall from the very first
    # sample through the full adaptive march into blowup
    grid = Grid(20.0, 1401)
    bump = Field(grid, 1.2 * np.exp(-grid.nodes**2 / 9.0), parity="even")
    trace, _ = solve_to_blowup(Problem(p=3.0, initial=bump, sup_cap=1e6,
                                       dt_max=1e-3, dt_safety=0.05))
    e = trace.energy
    e_incr = float((np.diff(e) / np.maximum(1.0, np.abs(e[:-1]))).max())

    # flagship profile data violate the Dirichlet wall at t = 0; the first
    # step forms the wall layer, afterwards the energy must be monotone
    ef = ctx.report.trace.energy[1:]
    ef_incr = float((np.diff(ef) / np.maximum(1.0, np.abs(ef[:-1]))).max())
    ok = s_incr <= 1e-8 and e_incr <= 1e-8 and ef_incr <= 1e-8
    return {"passed": ok, "max_S_increase": s_incr,
            "max_E_relative_increase": e_incr,
            "flagship_E_increase_after_transient": ef_incr,
            "S_first": float(S[0]), "S_last": float(S[-1])}


@_check(9, "blowup_criterion", ("solver", "energy"), cap=None)
def check_blowup_criterion(ctx: Context) -> dict:
    grid = Grid(20.0, 1401)
    x = grid.nodes
    p = 3.0
    configs = [
        ("const_1.2", np.full(x.size, 1.2), 1.0),
        ("const_2.0", np.full(x.size, 2.0), 0.30),
        ("gauss_3.0", 3.0 * np.exp(-x**2 / 4.0), 0.45),
        ("lorentz_2.5", 2.5 / (1.0 + 0.25 * x**2), 0.6),
        ("gauss_2.2", 2.2 * np.exp(-x**2 / 9.0), 0.8),
    ]
    rows = {}
    ok = True
    for name, vals, T in configs:
        u0 = Field(grid, vals, parity="even")
        s_t = scaled_blowup_energy(u0, p, T)
        if s_t >= 0:
            ok = False
            rows[name] = {"S_T": s_t, "qualified": False}
            continue
        prob = Problem(p=p, initial=u0, sup_cap=1e6, dt_max=1e-3,
                       dt_safety=0.05)
        _, est = solve_to_blowup(prob, record_every=5)
        blew = est is not None and est.t_star <= T
        rows[name] = {"S_T": s_t,
                      "t_star": None if est is None else est.t_star,
                      "horizon": T, "blew_up_in_time": blew}
        ok = ok and blew
    return {"passed": ok, "n_configs": len(configs), "rows": rows}


@_check(10, "fk_fidelity", ("fk",), cap=120.0)
def check_fk(ctx: Context) -> dict:
    p, alpha, beta, r = 3.0, 0.5, 0.1, 0.5
    pot = conjugated_potential(p, alpha, beta)
    bridge = sample_ou_bridge(alpha, 0.0, r, n_steps=128, n_paths=100_000,
                              seed=ctx.seed)
    stencil = np.linspace(-1.0, 1.0, 5)
    mc, se = fk_kernel_matrix(pot, alpha, bridge, stencil, stencil)
    dense = dense_conjugated_propagator(Grid(14.0, 1401), p, alpha, beta, r,
                                        stencil, stencil)
    sigmas = float((np.abs(mc - dense) / se).max())

    free = fk_kernel_estimate(conjugated_potential(p, alpha, 0.0), alpha,
                              0.0, 0.4, 0.3, -0.2, n_paths=10_000,
                              seed=ctx.seed, n_steps=32)
    u0 = float(mehler_kernel_u0(alpha, 0.4, 0.3, -0.2))
    free_exact = free.mean == u0 and free.stderr == 0.0
    ok = sigmas <= 3.0 and free_exact
    return {"passed": ok, "worst_sigmas": sigmas,
            "free_case_exact": free_exact, "n_paths": bridge.n_paths}


@_check(11, "propagator_decay", ("fk", "spectral"), cap=None)
def check_decay(ctx: Context) -> dict:
    grid = Grid(14.0, 701)
    p, alpha = 3.0, 0.5
    z = grid.nodes

    def beta_of(s):
        return beta_closed_form(s, 0.05, p)

    fields = [Field(grid, np.exp(-z**2 / 2.0), parity="even"),
              Field(grid, z**2 * np.exp(-z**2 / 3.0), parity="even")]
    rep = propagator_decay_check(grid, p, alpha, beta_of, horizon=6.0,
                                 test_fields=fields, eps=0.1)
    return {"passed": rep.passed,
            "exponents": rep.exponents,
            "min_exponent": float(rep.exponents.min()),
            "threshold": rep.threshold}


@_check(12, "equilibrium_stability", ("ode",), cap=None)
def check_equilibrium(ctx: Context) -> dict:
    worst = 0.0
    nonpos = True
    for l in (1.5, 2.0, 3.0):
        _, eig = jacobian_at_equilibrium(l, 3.0)
        eig = np.sort(np.real(eig))
        target = np.sort([0.0, 1.0 - l])
        worst = max(worst, float(np.abs(eig - target).max()))
        nonpos = nonpos and bool((eig <= 1e-10).all())
    ok = worst <= 1e-10 and nonpos
    return {"passed": ok, "worst_eig_error": worst, "all_nonpositive": nonpos}


@_check(13, "scaling_equivariance", ("solver", "ode"), cap=None)
def check_scaling(ctx: Context) -> dict:
    p, lam = 3.0, 2.0
    pw = 2.0 / (p - 1.0)
    coarse = Grid(20.0, 1401)
    fine = Grid(10.0, 1401)
    u0 = Field(coarse, 1.5 * np.exp(-coarse.nodes**2 / 4.0), parity="even")
    v0 = Field(fine, lam**pw * 1.5 * np.exp(-(lam * fine.nodes)**2 / 4.0),
               parity="even")
    T, n = 0.02, 200
    u = u0
    for _ in range(n):
        u = step_imex(u, T / n, p)
    v = v0
    for _ in range(4 * n):
        v = step_imex(v, T / (4 * n * lam**2), p)
    # fine nodes are exactly coarse nodes / lam, so no interpolation here
    solver_diff = float(np.abs(v.values - lam**pw * u.values).max())

    mu = 2.0
    base = integrate_truncated(0.04, 0.48, p, l=2.0, tau_end=20.0,
                               n_samples=401, equilibrium_scale=0.5)
    scaled = integrate_truncated(mu**2 * 0.04, mu**2 * 0.48, p, l=2.0,
                                 tau_end=20.0 / mu**2, n_samples=401,
                                 equilibrium_scale=mu**2 * 0.5)
    ode_diff = float(max(np.abs(scaled.b - mu**2 * base.b).max(),
                         np.abs(scaled.c - mu**2 * base.c).max()))
    ok = solver_diff <= 1e-4 and ode_diff <= 1e-8
    return {"passed": ok, "solver_diff": solver_diff, "ode_diff": ode_diff}


def available_tags() -> list:
    tags = set()
    for fn in CHECKS:
        tags.update(fn.tags)
    return sorted(tags)


def run_checks(selected=None, context: Context | None = None) -> SuiteReport:
    """Run the registered checks (all by default) in index order."""
    ctx = context or Context()
    results = []
    for fn in sorted(CHECKS, key=lambda f: f.index):
        if selected is not None and fn.index not in selected:
            continue
        t0 = time.time()
        try:
            detail = fn(ctx)
        except Exception as exc:  # a crash is a failed check, not a crash
            detail = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        elapsed = time.time() - t0
        passed = bool(detail.pop("passed", False))
        if fn.cap is not None and elapsed >= fn.cap:
            passed = False
            detail["runtime_cap_exceeded"] = True
        results.append(CheckResult(fn.index, fn.name, fn.tags, passed,
                                   elapsed, fn.cap, detail))
    return SuiteReport(results)


def verify_suite(tags, context: Context | None = None) -> SuiteReport:
    """Checks whose tag sets intersect `tags`; empty selection is an empty
    passing report."""
    tags = set(tags)
    chosen = {fn.index for fn in CHECKS if tags & set(fn.tags)}
    return run_checks(selected=chosen, context=context)
