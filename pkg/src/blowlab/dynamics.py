"""Truncated parameter flow, closed-form decay law, and blowup-law fits.

The two-parameter system obtained by dropping the cubic remainders,

    b' = -2(3p-1) b^2/(p-1)^2 + 2 b (c - a),
    c' =  2 c (c - a) - 2 b c/(p-1),      a = l c + (1-l) s,

is the reference dynamics the full simulation is judged against. s is the
equilibrium value of c (1/2 in the blowup normalization); it must scale with
mu^2 alongside (b, c) for the flow's scaling symmetry to hold, so it is a
parameter rather than a constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "BetaLaw",
    "TruncatedState",
    "TruncatedTrajectory",
    "LawFit",
    "LawPrediction",
    "truncated_rhs",
    "integrate_truncated",
    "jacobian_at_equilibrium",
    "asymptotic_laws",
    "fit_inverse_b_slope",
    "fit_lambda_exponent",
    "fit_b_log_coefficient",
    "fit_blowup_laws",
    "profile_limit_deviation",
    "limit_profile",
]

RK_TOL = 1e-10


@dataclass(frozen=True)
class BetaLaw:
    """beta(tau) = 1/(1/b0 + 4 p tau/(p-1)^2); 1/beta is affine in tau."""

    b0: float
    p: float

    def __post_init__(self):
        if self.b0 <= 0:
            raise ValueError("b0 must be positive")
        if self.p <= 1:
            raise ValueError("p must exceed 1")

    @property
    def inverse_slope(self) -> float:
        return 4.0 * self.p / (self.p - 1.0) ** 2

    @property
    def kappa(self) -> float:
        return min(0.5, 0.5 * (self.p - 1.0))

    def __call__(self, tau):
        return 1.0 / (1.0 / self.b0 + self.inverse_slope * np.asarray(tau, float))


@dataclass(frozen=True)
class TruncatedState:
    tau: float
    b: float
    c: float

    def a(self, l: float, s: float = 0.5) -> float:
        return l * self.c + (1.0 - l) * s


@dataclass
class TruncatedTrajectory:
    tau: np.ndarray
    b: np.ndarray
    c: np.ndarray
    a: np.ndarray
    p: float
    gauge_l: float
    equilibrium_scale: float
    left_region: bool  # b went negative; trajectory truncated there


def truncated_rhs(b: float, c: float, p: float, l: float,
                  s: float = 0.5,
                  remainder: Callable | None = None):
    """(b', c'). `remainder(b, c) -> (r_b, r_c)` adds measured cubic
    corrections back: b' += r_b and c' += c * r_c (the c-residual is
    logarithmic by definition)."""
    a = l * c + (1.0 - l) * s
    q = p - 1.0
    db = -2.0 * (3.0 * p - 1.0) * b * b / q**2 + 2.0 * b * (c - a)
    dc = 2.0 * c * (c - a) - 2.0 * b * c / q
    if remainder is not None:
        r_b, r_c = remainder(b, c)
        db += r_b
        dc += c * r_c
    return db, dc


def _rk4(f, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * h * k1)
    k3 = f(y + 0.5 * h * k2)
    k4 = f(y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_truncated(b0: float, c0: float, p: float, l: float = 2.0,
                        tau_end: float = 50.0, n_samples: int = 1001,
                        equilibrium_scale: float = 0.5,
                        remainder: Callable | None = None,
                        tol: float = RK_TOL) -> TruncatedTrajectory:
    """March the truncated system with step-doubled RK4, local error `tol`.

    Output is sampled on a uniform tau grid (hit exactly; steps never
    overshoot a sample point). A negative b truncates the trajectory and
    sets the left_region flag.
    """
    if b0 < 0:
        raise ValueError("b0 must be nonnegative")
    if l <= 1:
        raise ValueError("gauge l must exceed 1")

    def f(y):
        return np.asarray(truncated_rhs(y[0], y[1], p, l,
                                        equilibrium_scale, remainder))

    taus = np.linspace(0.0, tau_end, n_samples)
    out = np.empty((n_samples, 2))
    out[0] = (b0, c0)
    y = out[0].copy()
    h = (taus[1] - taus[0]) if n_samples > 1 else tau_end
    left = False
    filled = n_samples
    for i in range(1, n_samples):
        target = taus[i]
        tau = taus[i - 1]
        while tau < target - 1e-15:
            h = min(h, target - tau)
            while True:
                big = _rk4(f, y, h)
                half = _rk4(f, _rk4(f, y, 0.5 * h), 0.5 * h)
                err = np.abs(big - half).max() / 15.0
                if err <= tol or h < 1e-12:
                    break
                h *= 0.5
            y = half
            tau += h
            if err < tol / 64.0:
                h *= 2.0
        out[i] = y
        if y[0] < 0.0:
            left = True
            filled = i + 1
            break

    taus = taus[:filled]
    b = out[:filled, 0]
    c = out[:filled, 1]
    a = l * c + (1.0 - l) * equilibrium_scale
    return TruncatedTrajectory(taus, b, c, a, p, l, equilibrium_scale, left)


def jacobian_at_equilibrium(l: float, p: float, s: float = 0.5):
    """Linearization of the truncated flow at (b, c) = (0, s).

    Returns (matrix, eigenvalues). The matrix is lower triangular, so the
    eigenvalues are the diagonal {0, 2 s (1-l)}; at the blowup normalization
    s = 1/2 this is {0, 1-l}, nonpositive for every gauge l > 1.
    """
    if l <= 1:
        raise ValueError("gauge l must exceed 1")
    jac = np.array([
        [0.0, 0.0],
        [-2.0 * s / (p - 1.0), 2.0 * s * (1.0 - l)],
    ])
    return jac, np.array([0.0, 2.0 * s * (1.0 - l)])


# ---------------------------------------------------------------------------
# asymptotic laws and fits


class LawPrediction(NamedTuple):
    lam: np.ndarray
    b: np.ndarray
    c: np.ndarray


def asymptotic_laws(t, t_star: float, p: float, lam0: float = 1.0) -> LawPrediction:
    """Leading-order laws near blowup:

    lam = lam0 (t*-t)^{-1/2},
    b   = (p-1)^2 / (4 p |ln(t*-t)|),
    c   = 1/2 - (p-1) / (4 p |ln(t*-t)|).
    """
    t = np.asarray(t, float)
    rem = t_star - t
    if np.any(rem <= 0.0):
        raise ValueError("t must precede the blowup time")
    if np.any(rem >= 1.0):
        raise ValueError("law valid only for t* - t < 1")
    log_abs = -np.log(rem)
    q = p - 1.0
    return LawPrediction(lam0 * rem**-0.5,
                         q * q / (4.0 * p * log_abs),
                         0.5 - q / (4.0 * p * log_abs))


def limit_profile(y, p: float):
    """(p-1)^{-1/(p-1)} (1 + (p-1) y^2/(4p))^{-1/(p-1)}."""
    q = p - 1.0
    return q ** (-1.0 / q) * (1.0 + q * np.asarray(y, float) ** 2 / (4.0 * p)) ** (-1.0 / q)


@dataclass
class LawFit:
    name: str
    target: float
    fitted: float
    window: tuple
    residual: float

    @property
    def rel_error(self) -> float:
        return abs(self.fitted - self.target) / abs(self.target)

    def as_dict(self) -> dict:
        return {"name": self.name, "target": self.target, "fitted": self.fitted,
                "relative_error": self.rel_error,
                "window": list(self.window), "residual": self.residual}


def _windowed(x: np.ndarray, lo, hi, drop_last: int):
    keep = np.ones(x.size, bool)
    if lo is not None:
        keep &= x >= lo
    if hi is not None:
        keep &= x <= hi
    idx = np.flatnonzero(keep)
    if drop_last and idx.size:
        idx = idx[:-drop_last] if idx.size > drop_last else idx[:0]
    if idx.size < 8:
        raise ValueError("insufficient samples in the fit window")
    return idx


def _linear_fit(x: np.ndarray, y: np.ndarray):
    coef = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return float(coef[0]), resid


def fit_inverse_b_slope(tau: np.ndarray, b: np.ndarray, p: float,
                        window=(5.0, None), drop_last: int = 3) -> LawFit:
    """Slope of 1/b against tau; target 4p/(p-1)^2."""
    idx = _windowed(np.asarray(tau, float), window[0], window[1], drop_last)
    slope, resid = _linear_fit(tau[idx], 1.0 / np.asarray(b, float)[idx])
    win = (float(tau[idx][0]), float(tau[idx][-1]))
    return LawFit("inverse_b_slope", 4.0 * p / (p - 1.0) ** 2, slope, win, resid)


def fit_lambda_exponent(t: np.ndarray, lam: np.ndarray, t_star: float,
                        tau: np.ndarray | None = None, window=(5.0, None),
                        drop_last: int = 3) -> LawFit:
    """Exponent of lam against (t*-t) on log-log axes; target -1/2.

    The window is applied in tau when a tau array is supplied (matching the
    other fits), otherwise in t.
    """
    t = np.asarray(t, float)
    axis = t if tau is None else np.asarray(tau, float)
    idx = _windowed(axis, window[0], window[1], drop_last)
    rem = t_star - t[idx]
    if np.any(rem <= 0):
        raise ValueError("window reaches past the blowup time")
    slope, resid = _linear_fit(np.log(rem), np.log(np.asarray(lam, float)[idx]))
    win = (float(axis[idx][0]), float(axis[idx][-1]))
    return LawFit("lambda_exponent", -0.5, slope, win, resid)


def fit_b_log_coefficient(t: np.ndarray, b: np.ndarray, t_star: float, p: float,
                          tau: np.ndarray | None = None, window=(5.0, None),
                          drop_last: int = 3) -> LawFit:
    """Coefficient of b ~ coeff/|ln(t*-t)|; target (p-1)^2/(4p).

    Least squares through the origin in the variable x = 1/|ln(t*-t)|.
    """
    t = np.asarray(t, float)
    axis = t if tau is None else np.asarray(tau, float)
    idx = _windowed(axis, window[0], window[1], drop_last)
    rem = t_star - t[idx]
    if np.any(rem <= 0) or np.any(rem >= 1):
        raise ValueError("window must sit inside 0 < t*-t < 1")
    x = 1.0 / np.abs(np.log(rem))
    bb = np.asarray(b, float)[idx]
    coeff = float(np.dot(x, bb) / np.dot(x, x))
    resid = float(np.sqrt(np.mean((coeff * x - bb) ** 2)))
    win = (float(axis[idx][0]), float(axis[idx][-1]))
    return LawFit("b_log_coefficient", (p - 1.0) ** 2 / (4.0 * p), coeff, win, resid)


def fit_blowup_laws(tau: np.ndarray, b: np.ndarray, t: np.ndarray,
                    lam: np.ndarray, t_star: float, p: float,
                    window=(5.0, None), drop_last: int = 3) -> dict:
    """All three law fits keyed by name. The blowup time must come from an
    independent extrapolation, never from the laws themselves."""
    fits = [
        fit_inverse_b_slope(tau, b, p, window, drop_last),
        fit_lambda_exponent(t, lam, t_star, tau, window, drop_last),
        fit_b_log_coefficient(t, b, t_star, p, tau, window, drop_last),
    ]
    return {f.name: f for f in fits}


def profile_limit_deviation(states, t_star: float, p: float, radius: float):
    """Sup deviation from the limit profile in self-similar variables.

    `states` is a sequence of (t, lam, Field) triples with v = the rescaled
    state in the lam-frame. For each one the physical state near the origin
    is u(x) = lam^{2/(p-1)} v(lam x), and the deviation

        sup_{|y| <= radius} |(t*-t)^{1/(p-1)} u(y sqrt((t*-t)|ln(t*-t)|))
                             - limit_profile(y)|

    is recorded. Returns (times, deviations). Raises when the log-scaled
    window escapes the stored grid.
    """
    out_t, out_d = [], []
    ys = np.linspace(-radius, radius, 257)
    q = p - 1.0
    for t, lam, v in states:
        rem = t_star - t
        if rem <= 0 or rem >= 1:
            continue
        spread = np.sqrt(rem * abs(np.log(rem)))
        arg = lam * spread * ys
        if np.abs(arg).max() > v.grid.half_width:
            raise ValueError("rescaled window exceeds the stored grid")
        u_scaled = (rem * lam * lam) ** (1.0 / q) * np.interp(arg, v.grid.nodes, v.values)
        out_t.append(t)
        out_d.append(float(np.abs(u_scaled - limit_profile(ys, p)).max()))
    if not out_t:
        raise ValueError("no states inside 0 < t*-t < 1")
    return np.asarray(out_t), np.asarray(out_d)
