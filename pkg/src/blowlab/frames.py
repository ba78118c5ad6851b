"""Scaling-frame bookkeeping.

A moving frame is described by a scale factor lam(tau) with frame clock tau,
physical clock t, and logarithmic rate a(tau):

    d lam / d tau = a lam,      d t / d tau = lam^-2.

Rescaled and physical states are related by
v(y, tau) = lam^{-2/(p-1)} u(y / lam, t). The fixed-rate frame (a frozen at
some alpha) has closed-form clocks and is used both as the classical frame
(alpha = 1/2) and to extrapolate the blowup time from the end of a march.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .grid import Field, Grid

__all__ = [
    "FrameHistory",
    "TangentFrame",
    "to_frame",
    "from_frame",
    "classical_rescale",
]


def _gain(a: float, d_tau: float) -> float:
    """int_0^{d_tau} e^{-2 a s} ds, stable for a near zero."""
    x = 2.0 * a * d_tau
    if abs(x) < 1e-12:
        return d_tau * (1.0 - 0.5 * x)
    return -np.expm1(-x) / (2.0 * a)


@dataclass
class FrameHistory:
    """Piecewise-frozen-rate frame accumulated along a march.

    Within each step the rate is held at the supplied value, making both the
    scale update lam -> lam e^{a d_tau} and the physical-clock gain exact for
    the frozen dynamics. Interpolants are cubic Hermite with the exact nodal
    slopes, so lam(tau) and t(tau) are C^1 and consistent with the defining
    relations at every node.
    """

    lam0: float = 1.0
    t0: float = 0.0
    _tau: list = field(default_factory=list)
    _a: list = field(default_factory=list)
    _lam: list = field(default_factory=list)
    _t: list = field(default_factory=list)

    def __post_init__(self):
        if self.lam0 <= 0:
            raise ValueError("lam0 must be positive")
        if not self._tau:
            self._tau = [0.0]
            self._a = [np.nan]  # rate of the step *ending* at each node
            self._lam = [self.lam0]
            self._t = [self.t0]
        self._dirty = True

    def __len__(self) -> int:
        return len(self._tau)

    def append(self, a: float, d_tau: float) -> None:
        if d_tau <= 0:
            raise ValueError("d_tau must be positive")
        lam = self._lam[-1]
        self._tau.append(self._tau[-1] + d_tau)
        self._a.append(a)
        self._lam.append(lam * np.exp(a * d_tau))
        self._t.append(self._t[-1] + _gain(a, d_tau) / lam**2)
        self._dirty = True

    # -- array views ------------------------------------------------------

    @property
    def tau(self) -> np.ndarray:
        return np.asarray(self._tau)

    @property
    def rate(self) -> np.ndarray:
        return np.asarray(self._a)

    @property
    def lam(self) -> np.ndarray:
        return np.asarray(self._lam)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self._t)

    # -- interpolants ------------------------------------------------------

    def _splines(self):
        if self._dirty:
            tau, lam, t = self.tau, self.lam, self.t
            a = self.rate.copy()
            a[0] = a[1] if len(a) > 1 else 0.5  # left-edge slope fallback
            self._lam_spline = CubicHermiteSpline(tau, lam, a * lam)
            self._t_spline = CubicHermiteSpline(tau, t, lam**-2.0)
            self._tau_of_t = PchipInterpolator(t, tau)
            self._dirty = False
        return self._lam_spline, self._t_spline, self._tau_of_t

    def lam_of_tau(self, tau):
        return self._splines()[0](tau)

    def t_of_tau(self, tau):
        return self._splines()[1](tau)

    def tau_of_t(self, t):
        return self._splines()[2](t)

    def lam_of_t(self, t):
        return self.lam_of_tau(self.tau_of_t(t))

    def tail_blowup_time(self) -> float:
        """t* if the final rate stayed frozen forever: t_end + 1/(2 a lam^2).

        Requires a positive terminal rate; the frozen-rate frame then reaches
        tau = infinity at this finite physical time.
        """
        if len(self) < 2:
            raise ValueError("history has no steps")
        a, lam, t = self._a[-1], self._lam[-1], self._t[-1]
        if not a > 0:
            raise ArithmeticError("terminal rate is not positive")
        return t + 1.0 / (2.0 * a * lam**2)


@dataclass(frozen=True)
class TangentFrame:
    """Frame with rate frozen at alpha, anchored at (tau0, t0, lam0).

    Closed forms:
        lam(tau) = lam0 e^{alpha (tau - tau0)}
        t(tau)   = t0 + (1 - e^{-2 alpha (tau - tau0)}) / (2 alpha lam0^2)
        t*       = t0 + 1 / (2 alpha lam0^2)
        lam(t)   = (lam0^-2 - 2 alpha (t - t0))^{-1/2}
    """

    alpha: float
    lam0: float = 1.0
    t0: float = 0.0
    tau0: float = 0.0

    def __post_init__(self):
        if self.alpha <= 0 or self.lam0 <= 0:
            raise ValueError("alpha and lam0 must be positive")

    @property
    def t_star(self) -> float:
        return self.t0 + 1.0 / (2.0 * self.alpha * self.lam0**2)

    def lam_of_tau(self, tau):
        return self.lam0 * np.exp(self.alpha * (np.asarray(tau, float) - self.tau0))

    def t_of_tau(self, tau):
        d = np.asarray(tau, float) - self.tau0
        return self.t0 - np.expm1(-2.0 * self.alpha * d) / (2.0 * self.alpha * self.lam0**2)

    def lam_of_t(self, t):
        base = self.lam0**-2.0 - 2.0 * self.alpha * (np.asarray(t, float) - self.t0)
        return base**-0.5

    def tau_of_t(self, t):
        base = 1.0 - 2.0 * self.alpha * self.lam0**2 * (np.asarray(t, float) - self.t0)
        return self.tau0 - np.log(base) / (2.0 * self.alpha)


def to_frame(u: Field, lam: float, p: float, target: Grid) -> Field:
    """v(y) = lam^{-2/(p-1)} u(y / lam) sampled on `target`.

    Points of y/lam outside the source grid are filled with the boundary
    sample of u, which is the right continuation for far-field-flat states.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    x = target.nodes / lam
    vals = np.interp(x, u.grid.nodes, u.values)
    return Field(target, lam ** (-2.0 / (p - 1.0)) * vals, parity=u.parity)


def from_frame(v: Field, lam: float, p: float, target: Grid) -> Field:
    """u(x) = lam^{2/(p-1)} v(lam x) sampled on `target`."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    y = target.nodes * lam
    vals = np.interp(y, v.grid.nodes, v.values)
    return Field(target, lam ** (2.0 / (p - 1.0)) * vals, parity=v.parity)


def classical_rescale(u: Field, p: float, remaining: float, target: Grid) -> Field:
    """w(y) = remaining^{1/(p-1)} u(y sqrt(remaining)) on `target`.

    This is `to_frame` with lam = remaining^{-1/2}, the classical frame tied
    to a blowup time t* = t + remaining.
    """
    if remaining <= 0:
        raise ValueError("remaining time must be positive")
    return to_frame(u, remaining**-0.5, p, target)
