"""Profile-plus-fluctuation splitting and the seminorms that police it.

A rescaled even state v is written as v = V_ab + e^{a y^2/4} xi with the
weighted fluctuation xi orthogonal to the first two even Gaussian-oscillator
modes. The parameter pair (a, b) solving the two orthogonality conditions is
found by Newton iteration with an analytic (deliberately partial) Jacobian:
the weight's profile-parameter dependence beyond the gauge factor is dropped,
which leaves the root exact and costs at most an extra iteration or two.

The module also evaluates the running seminorm majorants used to certify a
run stayed in the trapping region, the residuals of the effective parameter
equations, and the forcing/nonlinearity fields of the fluctuation equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .grid import (Field, Grid, WeightOverflowError, WeightSpec,
                   cutoff_indicator, l2_inner, trapezoid_weights,
                   weighted_sup_norm)
from .spectral import (ProfileParams, gauge_profile, gauge_profile_weighted,
                       hermite_mode, profile_db_derivatives)

__all__ = [
    "SplitResult",
    "MajorantSeries",
    "MajorantTracker",
    "EffectiveRHS",
    "OutOfNeighborhoodError",
    "SplitConvergenceError",
    "solve_g",
    "beta_closed_form",
    "kappa_exponent",
    "compute_gammas",
    "evaluate_forcing",
    "evaluate_nonlinearity",
    "nonlinearity_bound_margin",
]

G_TOL = 1e-12
MAX_NEWTON = 50
COND_CAP = 1e8


class OutOfNeighborhoodError(ArithmeticError):
    """Newton drove b nonpositive; the input was not near the family."""


class SplitConvergenceError(ArithmeticError):
    """Newton failed to meet the orthogonality tolerance."""


@dataclass
class SplitResult:
    params: ProfileParams
    fluctuation: Field      # xi = e^{-a y^2/4} (v - V)
    difference: Field       # v - V itself; equals e^{+a y^2/4} xi exactly
    ortho_residuals: tuple  # (<xi, phi_0a>, <xi, phi_2a>), normalized modes
    iterations: int
    g_norm: float

    @property
    def a(self) -> float:
        return self.params.a

    @property
    def b(self) -> float:
        return self.params.b


def _orthogonality_weights(grid: Grid, a: float):
    """Unnormalized e^{-a y^2/4} phi_0a and e^{-a y^2/4} phi_2a directions."""
    y2 = grid.nodes**2
    gauss = np.exp(-0.5 * a * y2)
    return gauss, (1.0 - a * y2) * gauss


def _g_value(v: Field, params: ProfileParams):
    grid = v.grid
    w0, w2 = _orthogonality_weights(grid, params.a)
    diff = gauge_profile(grid, params).values - v.values
    wq = trapezoid_weights(grid)
    return np.array([np.dot(wq, diff * w0), np.dot(wq, diff * w2)]), diff


def _g_jacobian(v: Field, params: ProfileParams, diff: np.ndarray):
    grid = v.grid
    y2 = grid.nodes**2
    w0, w2 = _orthogonality_weights(grid, params.a)
    dva, dvb = profile_db_derivatives(grid, params)
    wq = trapezoid_weights(grid)
    a1 = np.array([
        [np.dot(wq, dva * w0), np.dot(wq, dvb * w0)],
        [np.dot(wq, dva * w2), np.dot(wq, dvb * w2)],
    ])
    # only the gauge factor of the weight is differentiated in a
    a2 = np.array([
        [-0.25 * np.dot(wq, diff * y2 * w0), 0.0],
        [-0.25 * np.dot(wq, diff * y2 * w2), 0.0],
    ])
    return a1 + a2


def solve_g(v: Field, p: float, initial=(0.5, 0.05), gauge_l: float = 2.0,
            tol: float = G_TOL, max_iter: int = MAX_NEWTON) -> SplitResult:
    """Solve the two orthogonality conditions for (a, b) and split v.

    Newton steps are damped (halved, up to 8 times) whenever they fail to
    shrink |G| or would push b out of (0, inf). A near-singular Jacobian
    (condition above 1e8) falls back to a regularized least-squares step.
    """
    if v.parity != "even":
        raise ValueError("splitting is defined for even fields")
    a, b = float(initial[0]), float(initial[1])
    if b <= 0:
        raise OutOfNeighborhoodError("initial b must be positive")

    params = ProfileParams(p=p, a=a, b=b, gauge_l=gauge_l)
    g, diff = _g_value(v, params)
    gn = float(np.hypot(*g))
    it = 0
    for it in range(1, max_iter + 1):
        if gn < tol:
            break
        jac = _g_jacobian(v, params, diff)
        if np.linalg.cond(jac) > COND_CAP:
            jtj = jac.T @ jac
            step = np.linalg.solve(jtj + 1e-8 * np.trace(jtj) * np.eye(2),
                                   jac.T @ g)
        else:
            step = np.linalg.solve(jac, g)
        scale = 1.0
        for _ in range(9):
            trial = (a - scale * step[0], b - scale * step[1])
            if trial[1] > 0.0:
                tp = ProfileParams(p=p, a=trial[0], b=trial[1], gauge_l=gauge_l)
                tg, tdiff = _g_value(v, tp)
                tn = float(np.hypot(*tg))
                if tn < gn or scale <= 1.0 / 256:
                    a, b = trial
                    params, g, diff, gn = tp, tg, tdiff, tn
                    break
            scale *= 0.5
        else:
            raise OutOfNeighborhoodError(
                f"b driven nonpositive from (a={a:.6g}, b={b:.6g})")
    else:
        raise SplitConvergenceError(
            f"|G| = {gn:.3e} after {max_iter} Newton iterations")

    diff_field = v.with_values(-diff, parity="even")  # v - V
    xi = v.with_values(np.exp(-0.25 * params.a * v.grid.nodes**2) * (-diff),
                       parity="even")
    r0 = l2_inner(xi, hermite_mode(v.grid, 0, params.a))
    r2 = l2_inner(xi, hermite_mode(v.grid, 2, params.a))
    return SplitResult(params, xi, diff_field, (float(r0), float(r2)), it, gn)


# ---------------------------------------------------------------------------
# majorants


def beta_closed_form(tau, b0: float, p: float):
    """beta(tau) = 1 / (1/b0 + 4 p tau / (p-1)^2)."""
    if b0 <= 0:
        raise ValueError("b0 must be positive")
    return 1.0 / (1.0 / b0 + 4.0 * p * np.asarray(tau, float) / (p - 1.0) ** 2)


def kappa_exponent(p: float) -> float:
    return min(0.5, 0.5 * (p - 1.0))


@dataclass
class MajorantSeries:
    p: float
    b0: float
    kappa: float
    c_d: float
    tau: np.ndarray
    beta: np.ndarray
    m1: np.ndarray       # running max of beta^-2 |<y>^-3 (v - V)|_sup
    m2: np.ndarray       # running max of the far-field sup beyond D(tau)
    a_dev: np.ndarray    # running max of beta^-2 |a - 1/2 + 2b/(p-1)|
    b_dev: np.ndarray    # running max of beta^-(1+kappa) |b - beta|
    cutoff_radius: np.ndarray


class MajorantTracker:
    """Accumulates the four running-seminorm majorants along a march.

    Feed one observation per retained step: the frame time, the fitted
    parameters, and the raw difference v - V (which is the weighted
    fluctuation with its Gaussian factor already cancelled).
    """

    def __init__(self, p: float, b0: float, c_d: float = 5.0):
        if c_d <= 0:
            raise ValueError("c_d must be positive")
        self.p = p
        self.b0 = b0
        self.c_d = c_d
        self.kappa = kappa_exponent(p)
        self._rows = []
        self._peaks = np.zeros(4)
        self._spec = WeightSpec(poly_power=3)

    def observe(self, tau: float, params: ProfileParams, difference: Field) -> None:
        p = self.p
        beta = float(beta_closed_form(tau, self.b0, p))
        radius = self.c_d / np.sqrt(beta)
        m1 = weighted_sup_norm(difference, self._spec) / beta**2
        mask = cutoff_indicator(difference.grid, radius)
        m2 = float(np.abs(mask * difference.values).max())
        a_dev = abs(params.a - 0.5 + 2.0 * params.b / (p - 1.0)) / beta**2
        b_dev = abs(params.b - beta) / beta ** (1.0 + self.kappa)
        self._peaks = np.maximum(self._peaks, [m1, m2, a_dev, b_dev])
        self._rows.append((tau, beta, *self._peaks, radius))

    def series(self) -> MajorantSeries:
        if not self._rows:
            raise ValueError("no observations recorded")
        cols = np.asarray(self._rows).T
        return MajorantSeries(self.p, self.b0, self.kappa, self.c_d,
                              cols[0], cols[1], cols[2], cols[3],
                              cols[4], cols[5], cols[6])


# ---------------------------------------------------------------------------
# effective-equation residuals


@dataclass
class EffectiveRHS:
    tau: np.ndarray
    b_tau: np.ndarray
    c_tau: np.ndarray
    a_tau: np.ndarray
    gamma0: np.ndarray
    gamma1: np.ndarray
    r_b: np.ndarray
    r_c: np.ndarray


def _smoothed_derivative(x: np.ndarray, dt: float) -> np.ndarray:
    if x.size < 5:
        raise ValueError("need at least 5 samples for the smoothing window")
    return savgol_filter(x, 5, 2, deriv=1, delta=dt)


def compute_gammas(tau: np.ndarray, a: np.ndarray, b: np.ndarray,
                   c: np.ndarray, p: float, gauge_l: float = 2.0) -> EffectiveRHS:
    """Residuals of the effective parameter equations along a history.

    Derivatives are least-squares quadratic (window 5) centered differences;
    the history must be uniformly sampled in tau. a_tau is tied to c_tau
    through the gauge relation a = l c + (1-l)/2.
    """
    tau = np.asarray(tau, float)
    steps = np.diff(tau)
    if steps.size < 4 or not np.allclose(steps, steps[0], rtol=1e-8, atol=1e-12):
        raise ValueError("history must be uniformly sampled in tau")
    dt = float(steps[0])
    if np.any(a == 0.0):
        raise ZeroDivisionError("a vanishes somewhere on the history")

    b_tau = _smoothed_derivative(np.asarray(b, float), dt)
    c_tau = _smoothed_derivative(np.asarray(c, float), dt)
    a_tau = gauge_l * c_tau

    q = (p - 1.0)
    gamma0 = -c_tau / c + 2.0 * (c - a) - 2.0 * b / q
    gamma1 = (b_tau - 2.0 * b * (c - a) + 2.0 * (3.0 * p - 1.0) * b**2 / q**2) / (a * q)
    r_b = b_tau + 2.0 * (3.0 * p - 1.0) * b**2 / q**2 - 2.0 * b * (c - a)
    r_c = c_tau / c - 2.0 * (c - a) + 2.0 * b / q
    return EffectiveRHS(tau, b_tau, c_tau, a_tau, gamma0, gamma1, r_b, r_c)


# ---------------------------------------------------------------------------
# forcing and nonlinearity of the fluctuation equation


def evaluate_forcing(grid: Grid, params: ProfileParams, gamma0: float,
                     gamma1: float, weighted: bool = True) -> Field:
    """Forcing field of the fluctuation equation at frozen parameters.

    F = (1/(p-1)) [ gamma0
                    + gamma1 (p-1) a y^2 / (p-1+b y^2)
                    - 4 p b^3 y^4 / ((p-1)^2 (p-1+b y^2)^2) ] * v_abc.

    With weighted=False the Gaussian factor of v_abc is dropped, which gives
    e^{a y^2/4} F directly without evaluating a growing exponential.
    """
    p, a, b = params.p, params.a, params.b
    y2 = grid.nodes**2
    q = p - 1.0
    den = q + b * y2
    bracket = (gamma0 + gamma1 * q * a * y2 / den
               - 4.0 * p * b**3 * y2**2 / (q**2 * den**2))
    carrier = gauge_profile_weighted(grid, params) if weighted \
        else gauge_profile(grid, params)
    return Field(grid, bracket / q * carrier.values, parity="even")


def evaluate_nonlinearity(xi: Field, params: ProfileParams) -> Field:
    """N(xi, b, c) = [|xi+v|^{p-1}(xi+v) - v^p - p v^{p-1} xi] e^{(p-1)a y^2/4}.

    v is the Gaussian-weighted profile. The exponential prefactor is checked
    against float range before evaluation.
    """
    p, a = params.p, params.a
    grid = xi.grid
    peak = 0.25 * (p - 1.0) * a * grid.half_width**2
    if peak > 700.0:
        raise WeightOverflowError(
            f"nonlinearity prefactor exp({peak:.3g}) exceeds float range")
    v = gauge_profile_weighted(grid, params).values
    s = xi.values + v
    bracket = np.abs(s) ** (p - 1.0) * s - v**p - p * v ** (p - 1.0) * xi.values
    return Field(grid, bracket * np.exp(0.25 * (p - 1.0) * a * grid.nodes**2),
                 parity=xi.parity)


def nonlinearity_bound_margin(xi: Field, params: ProfileParams) -> float:
    """max over nodes of |N| / (e^{a y^2/4} xi^2 + e^{(p-1)a y^2/4} |xi|^p).

    The quadratic-plus-critical envelope holds with a p-dependent constant;
    for profile-sized fluctuations the measured margin stays below p + 3.
    Far-field nodes where the envelope has decayed below the cancellation
    noise floor of the three-term difference in N are excluded: there both
    sides are rounding residue and their ratio carries no information.
    """
    p, a = params.p, params.a
    y2 = xi.grid.nodes**2
    n_vals = np.abs(evaluate_nonlinearity(xi, params).values)
    env = (np.exp(0.25 * a * y2) * xi.values**2
           + np.exp(0.25 * (p - 1.0) * a * y2) * np.abs(xi.values) ** p)
    floor = np.finfo(float).eps ** 0.75 * env.max()
    ratio = np.zeros_like(env)
    live = env > floor
    ratio[live] = n_vals[live] / env[live]
    return float(ratio.max())
