"""End-to-end experiment pipeline: scenarios, marches, reports.

A run has two independent stages. Stage one marches the physical equation
adaptively into blowup and extrapolates t* from the sup-norm track; nothing
downstream feeds back into it, so the blowup time used by the law fits is
never produced by the laws themselves. Stage two marches the rescaled state
in the moving similarity frame, splitting off the profile parameters every
step and closing the loop lambda' = a lambda with the extracted rate (lagged
one step, explicit coupling).

Rescaled-frame marching is not optional: in the physical frame the adaptive
step collapses like sup^{1-p} and double precision runs out of headroom
around sup ~ 1e6, far short of the asymptotic regime the fits need.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .decompose import EffectiveRHS, MajorantTracker, compute_gammas, solve_g
from .dynamics import LawFit, fit_blowup_laws
from .frames import FrameHistory
from .grid import Field, Grid, WeightSpec, weighted_sup_norm
from .heat import (Problem, SolveTrace, homogeneous_blowup_time,
                   lyapunov_energy, solve_to_blowup, step_similarity)
from .spectral import gauge_profile

__all__ = [
    "ExperimentConfig",
    "RunReport",
    "InitialDataError",
    "SCENARIOS",
    "make_initial_data",
    "normalize_initial_scale",
    "run_pipeline",
    "fixed_frame_energy_series",
    "write_history_csv",
    "report_to_json",
]

SCENARIOS = ("homogeneous", "paper-family", "custom")

CSV_COLUMNS = ("tau", "a", "b", "c", "lam", "t", "beta",
               "M1", "M2", "A", "B", "Gamma0", "Gamma1", "R_b", "R_c")


class InitialDataError(ValueError):
    """Initial data rejected; carries the measured norms."""


@dataclass
class ExperimentConfig:
    scenario: str = "paper-family"
    p: float = 3.0
    b0: float = 0.05
    c0: float = -1.0          # negative = scenario default
    delta_coeff: float = 1.0  # amplitude of the b0^2-sized perturbation
    delta0_cap: float = 0.1   # ceiling for the unweighted deviation norm
    grid_half_width: float = 20.0
    grid_points: int = 2001
    dt_tau: float = 0.005
    tau_end: float = 55.0
    sup_cap: float = 1e6
    dt_max: float = 1e-3
    dt_safety: float = 0.05
    c_d: float = 5.0
    gauge_l: float = 2.0
    record_every: int = 10
    snapshot_every: int = 250
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.c0 < 0:
            self.c0 = self._default_c0()
        if self.scenario == "paper-family":
            if not 0.5 <= self.c0 <= 2.0:
                raise ValueError("paper-family requires 1/2 <= c0 <= 2")
            if self.b0 < 0:
                raise ValueError("paper-family requires b0 >= 0")

    def _default_c0(self) -> float:
        return 0.5

    def canonical_text(self) -> str:
        """Everything that shapes the numbers; output location excluded."""
        buf = io.StringIO()
        for f in fields(self):
            if f.name == "out_dir":
                continue
            buf.write(f"{f.name} = {getattr(self, f.name)!r}\n")
        return buf.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:12]

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        """Flat `key = value` text; '#' starts a comment."""
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in kinds:
                    raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
                kind = kinds[key]
                if kind in ("int", int):
                    kwargs[key] = int(val)
                elif kind in ("float", float):
                    kwargs[key] = float(val)
                else:
                    kwargs[key] = val.strip("'\"")
        return cls(**kwargs)


@dataclass
class RunReport:
    config: dict
    config_hash: str
    code_version: str
    scenario: str
    t_star: float | None = None
    t_star_residual: float | None = None
    t_star_tail: float | None = None
    sup_bound_constant: float | None = None
    initial_norms: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)   # tau/a/b/c/lam/t arrays
    majorants: object = None
    effective: EffectiveRHS | None = None
    fits: dict = field(default_factory=dict)
    trace: SolveTrace | None = None
    snapshots: list = field(default_factory=list)  # (t, lam, Field)
    snapshot_tau: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def _profile_values(grid: Grid, p: float, b0: float, c0: float) -> np.ndarray:
    x2 = grid.nodes**2
    return (2.0 * c0 / (p - 1.0 + b0 * x2)) ** (1.0 / (p - 1.0))


def make_initial_data(cfg: ExperimentConfig) -> Field:
    """Profile-plus-perturbation initial state on the configured grid.

    The perturbation is delta_coeff * b0^2 * x^2 e^{-x^2/9}: even, localized,
    and exactly of the size the initial-data window prescribes for the
    cubic-weight norm. Both window norms are measured; violating either
    raises InitialDataError with the measurements attached.
    """
    grid = Grid(cfg.grid_half_width, cfg.grid_points)
    base = _profile_values(grid, cfg.p, cfg.b0, cfg.c0)
    if cfg.scenario == "homogeneous":
        return Field(grid, base, parity="even")
    x2 = grid.nodes**2
    pert = cfg.delta_coeff * cfg.b0**2 * x2 * np.exp(-x2 / 9.0)
    u0 = Field(grid, base + pert, parity="even")
    norms = initial_window_norms(u0, cfg.p, cfg.b0, cfg.c0)
    if cfg.scenario == "paper-family":
        delta3_cap = max(cfg.delta_coeff, 1.0) * cfg.b0**2 + 1e-15
        if norms["delta0"] > cfg.delta0_cap or norms["delta3"] > delta3_cap:
            raise InitialDataError(
                f"initial data outside the admissible window: {norms}")
    return u0


def initial_window_norms(u0: Field, p: float, b0: float, c0: float) -> dict:
    """The two weighted deviation norms of the initial-data condition."""
    base = _profile_values(u0.grid, p, b0, c0)
    dev = u0.with_values(u0.values - base)
    return {
        "delta0": weighted_sup_norm(dev, WeightSpec(poly_power=0)),
        "delta3": weighted_sup_norm(dev, WeightSpec(poly_power=3)),
    }


def normalize_initial_scale(u0: Field, p: float, b0: float, c0: float):
    """Rescale data so the profile parameters satisfy c = 1/2 - b/(p-1).

    The scaling u -> k^{2/(p-1)} u(k x) maps profile parameters (b, c) to
    (k^2 b, k^2 c); k = (2 c0 + 2 b0/(p-1))^{-1/2} lands on the normalized
    gauge. Returns (rescaled field on the same grid, new b, new c).
    """
    k = (2.0 * c0 + 2.0 * b0 / (p - 1.0)) ** -0.5
    grid = u0.grid
    vals = np.interp(grid.nodes * k, grid.nodes, u0.values)
    out = Field(grid, k ** (2.0 / (p - 1.0)) * vals, parity=u0.parity)
    return out, k * k * b0, k * k * c0


def fixed_frame_energy_series(initial: Field, p: float, s_end: float,
                              ds: float = 0.01):
    """March the fixed-rate (a = 1/2) frame and record the similarity energy.

    Returns (s, S(s)); S must be nonincreasing along this flow, which is the
    cheap smoke alarm for a mis-signed term anywhere in the stepper.
    """
    w = initial.with_values(initial.values.copy())
    vb = float(w.values[0])
    n = int(round(s_end / ds))
    s_vals = [0.0]
    energies = [lyapunov_energy(w, p)]
    for k in range(1, n + 1):
        w = step_similarity(w, ds, p, 0.5, boundary_value=vb)
        if w.parity == "even":
            w = w.symmetrized()
        s_vals.append(k * ds)
        energies.append(lyapunov_energy(w, p))
    return np.asarray(s_vals), np.asarray(energies)


def _march_similarity_frame(cfg: ExperimentConfig, u0: Field,
                            report: RunReport, b_eff: float,
                            c_eff: float) -> None:
    """Stage two: moving-frame march with per-step splitting."""
    p = cfg.p
    grid = u0.grid
    v = u0.with_values(u0.values.copy())
    a_guess = cfg.gauge_l * c_eff + (1.0 - cfg.gauge_l) * 0.5
    guess = (a_guess, max(b_eff, 1e-4))

    split = solve_g(v, p, initial=guess, gauge_l=cfg.gauge_l)
    b_init = split.b
    tracker = MajorantTracker(p, b0=b_init, c_d=cfg.c_d)
    history = FrameHistory(lam0=1.0)
    split_every_trigger = 2.0 * b_init

    n_steps = int(round(cfg.tau_end / cfg.dt_tau))
    rows = []
    lam_rows, t_rows = [], []
    sup_ratio = 0.0

    def record(step_idx, sp):
        tau = step_idx * cfg.dt_tau
        rows.append((tau, sp.a, sp.b, sp.params.c))
        lam_rows.append(history.lam[-1])
        t_rows.append(history.t[-1])

    for k in range(n_steps):
        tau = k * cfg.dt_tau
        due = (split.b < split_every_trigger) or (k % 10 == 0)
        if due and k > 0:
            split = solve_g(v, p, initial=(split.a, split.b),
                            gauge_l=cfg.gauge_l)
        tracker.observe(tau, split.params, split.difference)
        if k % cfg.record_every == 0:
            record(k, split)
        if k % cfg.snapshot_every == 0:
            report.snapshots.append((history.t[-1], history.lam[-1],
                                     v.with_values(v.values.copy())))
            report.snapshot_tau.append(tau)
        sup_ratio = max(sup_ratio, v.sup_norm())
        edge = gauge_profile(grid, split.params).values[-1]
        v = step_similarity(v, cfg.dt_tau, p, split.a, boundary_value=edge)
        v = v.symmetrized()
        history.append(split.a, cfg.dt_tau)

    split = solve_g(v, p, initial=(split.a, split.b), gauge_l=cfg.gauge_l)
    tracker.observe(n_steps * cfg.dt_tau, split.params, split.difference)
    record(n_steps, split)

    cols = np.asarray(rows).T
    report.history = {
        "tau": cols[0], "a": cols[1], "b": cols[2], "c": cols[3],
        "lam": np.asarray(lam_rows), "t": np.asarray(t_rows),
    }
    report.majorants = tracker.series()
    report.sup_bound_constant = sup_ratio
    report.t_star_tail = history.tail_blowup_time()
    report.effective = compute_gammas(cols[0], cols[1], cols[2], cols[3],
                                      p, cfg.gauge_l)


def run_pipeline(cfg: ExperimentConfig) -> RunReport:
    """Execute the configured scenario end to end.

    Stage errors are recorded in report.errors and a partial report comes
    back instead of an exception; downstream consumers decide severity.
    """
    cfg_dict = asdict(cfg)
    cfg_dict.pop("out_dir")  # environment detail, not experiment identity
    report = RunReport(config=cfg_dict, config_hash=cfg.config_hash(),
                       code_version=__version__, scenario=cfg.scenario)
    try:
        u0 = make_initial_data(cfg)
    except InitialDataError as exc:
        report.errors.append(f"initial data: {exc}")
        return report
    b_eff, c_eff = cfg.b0, cfg.c0
    if cfg.scenario != "homogeneous":
        report.initial_norms = initial_window_norms(u0, cfg.p, cfg.b0, cfg.c0)
    if cfg.scenario == "paper-family":
        # rescale onto the normalized gauge c = 1/2 - b/(p-1) before either
        # stage so the two marches see the same state
        u0, b_eff, c_eff = normalize_initial_scale(u0, cfg.p, cfg.b0, cfg.c0)
        report.initial_norms["k0"] = (2.0 * cfg.c0
                                      + 2.0 * cfg.b0 / (cfg.p - 1.0)) ** -0.5
        report.initial_norms["b_normalized"] = b_eff
        report.initial_norms["c_normalized"] = c_eff

    problem = Problem(p=cfg.p, initial=u0, sup_cap=cfg.sup_cap,
                      dt_max=cfg.dt_max, dt_safety=cfg.dt_safety)
    hint = homogeneous_blowup_time(u0.sup_norm(), cfg.p) \
        if cfg.scenario == "homogeneous" else None
    try:
        trace, estimate = solve_to_blowup(problem, t_star_hint=hint,
                                          record_every=5)
        report.trace = trace
        if estimate is None:
            report.errors.append(
                f"physical march ended without blowup ({trace.termination})")
        else:
            report.t_star = estimate.t_star
            report.t_star_residual = estimate.residual
    except (ArithmeticError, FloatingPointError) as exc:
        report.errors.append(f"physical march: {exc}")

    if cfg.scenario == "homogeneous":
        _homogeneous_report(cfg, report)
        return report

    try:
        _march_similarity_frame(cfg, u0, report, b_eff, c_eff)
    except (ArithmeticError, ValueError) as exc:
        report.errors.append(f"similarity march: {exc}")
        return report

    if report.t_star is not None:
        try:
            hist = report.history
            report.fits = fit_blowup_laws(
                hist["tau"], hist["b"], hist["t"], hist["lam"],
                report.t_star, cfg.p, window=(5.0, 50.0))
        except ValueError as exc:
            report.errors.append(f"law fits: {exc}")
    return report


def _homogeneous_report(cfg: ExperimentConfig, report: RunReport) -> None:
    """Homogeneous data sit on the b = 0 edge where the splitting is not
    defined, so the frame scale comes from the sup norm instead."""
    trace = report.trace
    if trace is None or report.t_star is None:
        return
    p = cfg.p
    sup0 = float(trace.sup_norm[0])
    report.initial_norms = {"sup": sup0,
                            "t_star_closed_form": homogeneous_blowup_time(sup0, p)}
    lam = trace.sup_norm ** (0.5 * (p - 1.0))
    keep = trace.t > 0.2 * report.t_star
    if keep.sum() >= 12:
        from .dynamics import fit_lambda_exponent
        try:
            report.fits = {"lambda_exponent": fit_lambda_exponent(
                trace.t[keep], lam[keep], report.t_star,
                window=(None, None), drop_last=3)}
        except ValueError as exc:
            report.errors.append(f"lambda fit: {exc}")


# ---------------------------------------------------------------------------
# serialization


def write_history_csv(report: RunReport, path: str) -> None:
    """Decomposition history with majorants and residuals, fixed column order.

    Majorant columns are sampled at the history's tau points from the
    (denser) tracker series; residual columns come from the smoothed
    derivatives and are NaN-padded if the history was too short.
    """
    hist = report.history
    if not hist:
        raise ValueError("report has no similarity-frame history")
    tau = hist["tau"]
    maj = report.majorants
    idx = np.searchsorted(maj.tau, tau).clip(max=maj.tau.size - 1)
    eff = report.effective
    cols = {
        "tau": tau, "a": hist["a"], "b": hist["b"], "c": hist["c"],
        "lam": hist["lam"], "t": hist["t"],
        "beta": maj.beta[idx], "M1": maj.m1[idx], "M2": maj.m2[idx],
        "A": maj.a_dev[idx], "B": maj.b_dev[idx],
        "Gamma0": eff.gamma0, "Gamma1": eff.gamma1,
        "R_b": eff.r_b, "R_c": eff.r_c,
    }
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for i in range(tau.size):
            fh.write(",".join(f"{cols[c][i]:.12g}" for c in CSV_COLUMNS) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, LawFit):
        return obj.as_dict()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def report_to_json(report: RunReport, include_series: bool = False) -> str:
    """Deterministic JSON: sorted keys, no timestamps, embedded config."""
    payload = {
        "config": report.config,
        "config_hash": report.config_hash,
        "code_version": report.code_version,
        "scenario": report.scenario,
        "t_star": report.t_star,
        "t_star_residual": report.t_star_residual,
        "t_star_tail": report.t_star_tail,
        "sup_bound_constant": report.sup_bound_constant,
        "initial_norms": report.initial_norms,
        "fits": {k: v.as_dict() for k, v in report.fits.items()},
        "errors": list(report.errors),
    }
    if include_series and report.history:
        payload["history"] = _jsonable(report.history)
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2)
