"""Monte Carlo kernel estimates for conjugated oscillator semigroups.

The kernel of the evolution generated by -(L0 + V), viewed through the
Gaussian gauge, factors into a closed-form Mehler kernel times a bridge
average:

    U(tau, sigma)(x, y) = U0(tau - sigma)(x, y) * E[ exp(-int V(w0 + w)) ],

where w0 is the deterministic path joining y at time sigma to x at time tau
in the kernel of (-d^2/ds^2 + alpha^2), and w is a pinned Gaussian bridge
with covariance 2(-d^2/ds^2 + alpha^2)^{-1} and zero boundary. Two
conventions that drift through the source material are fixed here once:

* generator -(L0 + V) pairs with the weight exp(-int V); a representation
  written with exp(+int V) corresponds to V -> -V;
* the Mehler prefactor is (2 pi)^{-1/2} sqrt(alpha) (1 - e^{-2 alpha r})^{-1/2};
  the global constant was calibrated once against a dense discretized
  propagator and matches (2 pi)^{-1/2} to 3e-6.

Bridges are sampled exactly from the discretized covariance (banded Cholesky
of the inverse), so the only systematic error in the weight is the trapezoid
quadrature of int V along the path. Every path owns a counter-derived RNG
stream, making ensembles reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cholesky_banded, eigh, solve_banded

from .grid import Field, Grid, WeightSpec, weighted_sup_norm
from .spectral import assemble, hermite_mode

__all__ = [
    "MEHLER_CONST",
    "MCEstimate",
    "OUBridge",
    "mehler_kernel_u0",
    "omega0_path",
    "bridge_inverse_covariance",
    "sample_ou_bridge",
    "conjugated_potential",
    "fk_kernel_estimate",
    "fk_kernel_matrix",
    "dense_conjugated_propagator",
    "derivative_bound_check",
    "DerivativeBoundReport",
    "propagator_decay_check",
    "DecayReport",
]

MEHLER_CONST = (2.0 * np.pi) ** -0.5
EXP_CAP = 700.0


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int
    rejected: int = 0


@dataclass
class OUBridge:
    """Ensemble of pinned Gaussian bridges on a uniform time grid.

    The bridge law does not depend on the kernel endpoints (x, y), so one
    ensemble can be reused across a whole stencil of kernel evaluations;
    that reuse is what makes stencil comparisons affordable.
    """

    alpha: float
    sigma: float
    tau: float
    times: np.ndarray   # (n_steps + 1,)
    paths: np.ndarray   # (n_paths, n_steps + 1), zero first/last column
    seed: int

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_steps(self) -> int:
        return self.paths.shape[1] - 1


def _sinh_ratio(num: np.ndarray, den: float) -> np.ndarray:
    """sinh(num)/sinh(den) for 0 <= num <= den, overflow-safe."""
    return np.exp(num - den) * (-np.expm1(-2.0 * num)) / (-np.expm1(-2.0 * den))


def mehler_kernel_u0(alpha: float, r, x, y):
    """Closed-form kernel of the gauge-conjugated free semigroup.

    U0(r)(x, y) = MEHLER_CONST * sqrt(alpha) * e^{2 alpha r}
                  * (1 - e^{-2 alpha r})^{-1/2}
                  * exp(-alpha (x - e^{-alpha r} y)^2 / (2 (1 - e^{-2 alpha r}))).

    The e^{2 alpha r} growth is the ground-state eigenvalue -2 alpha of the
    shifted oscillator showing through. Broadcasting over r, x, y.
    """
    r = np.asarray(r, float)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if np.any(r <= 0):
        raise ValueError("r must be positive")
    decay = np.exp(-alpha * r)
    spread = -np.expm1(-2.0 * alpha * r)
    gauss = np.exp(-alpha * (np.asarray(x, float) - decay * np.asarray(y, float)) ** 2
                   / (2.0 * spread))
    return MEHLER_CONST * np.sqrt(alpha) * np.exp(2.0 * alpha * r) / np.sqrt(spread) * gauss


def omega0_path(alpha: float, sigma: float, tau: float, x: float, y: float,
                n_steps: int):
    """Deterministic endpoint path on the bridge time grid.

    w0(s) = [x sinh(alpha (s - sigma)) + y sinh(alpha (tau - s))]
            / sinh(alpha (tau - sigma)),

    the unique solution of (-d^2/ds^2 + alpha^2) w0 = 0 with w0(sigma) = y
    and w0(tau) = x. Returns (times, values).
    """
    if tau <= sigma:
        raise ValueError("need tau > sigma")
    s = np.linspace(sigma, tau, n_steps + 1)
    span = alpha * (tau - sigma)
    vals = (x * _sinh_ratio(alpha * (s - sigma), span)
            + y * _sinh_ratio(alpha * (tau - s), span))
    return s, vals


def bridge_inverse_covariance(alpha: float, sigma: float, tau: float,
                              n_steps: int) -> np.ndarray:
    """Upper-banded inverse covariance of the interior bridge values.

    The Gaussian action is (1/4) int (w'^2 + alpha^2 w^2) ds, i.e. covariance
    2 (-d^2/ds^2 + alpha^2)^{-1}; discretized with step quadrature this is
    the banded matrix (1/2)[(1/ds) tridiag(-1, 2, -1) + alpha^2 ds I].
    """
    if n_steps < 2:
        raise ValueError("need n_steps >= 2")
    ds = (tau - sigma) / n_steps
    m = n_steps - 1
    ab = np.zeros((2, m))
    ab[0, 1:] = -0.5 / ds
    ab[1, :] = 1.0 / ds + 0.5 * alpha**2 * ds
    return ab


def _path_normals(seed: int, index: int, count: int) -> np.ndarray:
    bg = np.random.Philox(key=seed, counter=[0, 0, 0, index])
    return np.random.Generator(bg).standard_normal(count)


def sample_ou_bridge(alpha: float, sigma: float, tau: float, n_steps: int,
                     n_paths: int, seed: int) -> OUBridge:
    """Exact Gaussian bridge ensemble.

    With inverse covariance P = U^T U (banded Cholesky), solving U w = z for
    standard-normal z gives Cov(w) = P^{-1} exactly; there is no
    time-discretization bias in the measure itself.
    """
    ab = bridge_inverse_covariance(alpha, sigma, tau, n_steps)
    u = cholesky_banded(ab)  # upper triangular factor, banded
    m = n_steps - 1
    z = np.empty((m, n_paths))
    for i in range(n_paths):
        z[:, i] = _path_normals(seed, i, m)
    interior = solve_banded((0, 1), u, z)
    paths = np.zeros((n_paths, n_steps + 1))
    paths[:, 1:-1] = interior.T
    times = np.linspace(sigma, tau, n_steps + 1)
    return OUBridge(alpha, sigma, tau, times, paths, seed)


def conjugated_potential(p: float, alpha: float, beta) -> Callable:
    """V(z, s) = 2 p alpha/(p-1) - 2 p alpha/(p-1 + beta(s) z^2), nonnegative.

    beta may be a constant or a callable of s. This is the barrier left over
    when the algebraic profile is subtracted in the fixed-rate frame.
    """
    fixed = None if callable(beta) else float(beta)

    def v(z, s):
        b = beta(s) if fixed is None else fixed
        return (2.0 * p * alpha / (p - 1.0)
                - 2.0 * p * alpha / (p - 1.0 + b * np.asarray(z) ** 2))

    return v


def _bridge_weights(potential: Callable, bridge: OUBridge, w0: np.ndarray):
    """Trapezoid exp(-int V) along each path; returns (weights, rejected)."""
    times = bridge.times
    ds = times[1] - times[0]
    quad = np.full(times.size, ds)
    quad[0] = quad[-1] = 0.5 * ds
    full = w0[None, :] + bridge.paths
    vals = potential(full, times[None, :]) if _takes_time(potential) \
        else potential(full)
    integral = vals @ quad
    ok = np.abs(integral) <= EXP_CAP
    weights = np.exp(-integral[ok])
    return weights, int((~ok).sum())


def _takes_time(potential: Callable) -> bool:
    try:
        potential(np.zeros(2))
    except TypeError:
        return True
    return False


def fk_kernel_estimate(potential: Callable, alpha: float, sigma: float,
                       tau: float, x: float, y: float, n_paths: int = 100_000,
                       seed: int = 0, n_steps: int = 64,
                       bridge: OUBridge | None = None) -> MCEstimate:
    """Monte Carlo estimate of U(tau, sigma)(x, y).

    `potential` is V(z, s) (or V(z) when time-independent), combined with the
    weight exp(-int V). Paths whose exponent exceeds float range are dropped
    and counted in `rejected`. Passing a pre-sampled `bridge` reuses its
    ensemble (and its seed) unchanged.
    """
    if bridge is None:
        bridge = sample_ou_bridge(alpha, sigma, tau, n_steps, n_paths, seed)
    _, w0 = omega0_path(alpha, bridge.sigma, bridge.tau, x, y, bridge.n_steps)
    weights, rejected = _bridge_weights(potential, bridge, w0)
    if weights.size == 0:
        raise ArithmeticError("all paths rejected by the exponent cap")
    u0 = float(mehler_kernel_u0(alpha, bridge.tau - bridge.sigma, x, y))
    mean = u0 * float(weights.mean())
    stderr = abs(u0) * float(weights.std(ddof=1) / np.sqrt(weights.size))
    return MCEstimate(mean, stderr, weights.size, bridge.seed, rejected)


def fk_kernel_matrix(potential: Callable, alpha: float, bridge: OUBridge,
                     xs: Sequence[float], ys: Sequence[float]):
    """Kernel estimates on a grid of endpoints sharing one bridge ensemble.

    Returns (means, stderrs) with shape (len(xs), len(ys)). Sharing the
    ensemble correlates the entries, which is exactly what stencil
    difference tests want (common-random-number variance cancellation).
    """
    xs = np.asarray(xs, float)
    ys = np.asarray(ys, float)
    means = np.empty((xs.size, ys.size))
    stderrs = np.empty_like(means)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            est = fk_kernel_estimate(potential, alpha, bridge.sigma,
                                     bridge.tau, x, y, bridge=bridge)
            means[i, j] = est.mean
            stderrs[i, j] = est.stderr
    return means, stderrs


def dense_conjugated_propagator(grid: Grid, p: float, alpha: float,
                                beta: float, r: float,
                                xs: Sequence[float], ys: Sequence[float],
                                n_steps: int = 64, refine: bool = True):
    """Direct route to U(r) for the independence check against Monte Carlo.

    Strang product of exact Mehler factors and half-step potential
    exponentials on the grid:

        U(r) ~ [e^{-dr V/2} U0(dr) e^{-dr V/2}]^{n_steps},

    composed with trapezoid quadrature in z. The Mehler factor already
    carries the gauge conjugation, and diagonal potential factors commute
    with it, so the product is the conjugated kernel directly. The Gaussian
    factors are many points wide on any sane grid, leaving the O(dr^2)
    splitting defect as the only visible error; `refine` Richardson-
    extrapolates it away over (n_steps, 2 n_steps).

    A second-difference eigendecomposition route was rejected: its kernel
    error decays only first order in h (crossover near 1e-3), which is
    hopeless against Monte Carlo standard errors at 1e5 paths.

    Nothing here touches the bridge sampler.
    """
    z = grid.nodes
    pot = np.asarray(conjugated_potential(p, alpha, float(beta))(z, 0.0), float)
    pot = np.broadcast_to(pot, z.shape).copy()
    ix = [grid.index_of(x) for x in xs]
    iy = [grid.index_of(y) for y in ys]

    def product(m: int) -> np.ndarray:
        dr = r / m
        half = np.exp(-0.5 * dr * pot)
        mehler = mehler_kernel_u0(alpha, dr, z[:, None], z[None, :])
        transfer = (half[:, None] * mehler * half[None, :]) * grid.spacing
        cols = transfer[:, iy] / grid.spacing
        for _ in range(m - 1):
            cols = transfer @ cols
        return cols[ix, :]

    sub = product(n_steps)
    if refine:
        sub = (4.0 * product(2 * n_steps) - sub) / 3.0
    return sub


@dataclass
class DerivativeBoundReport:
    y_points: np.ndarray
    derivatives: np.ndarray     # FD estimates of d/dy of the bridge average
    stderrs: np.ndarray
    bound: float                # K * (tau - sigma)
    passed: bool


def derivative_bound_check(potential: Callable, k_bound: float, alpha: float,
                           sigma: float, tau: float, n_paths: int = 50_000,
                           seed: int = 1, x: float = 0.0,
                           y_points=(-1.0, 0.0, 1.0), dy: float = 1e-2,
                           n_steps: int = 64) -> DerivativeBoundReport:
    """Checks |d/dy E[exp(-int V)]| <= K (tau - sigma) + 3 SE.

    Valid for nonnegative V (weights <= 1), with K >= sup |dV/dz| on the
    range the paths visit. The central difference at each y reuses one
    ensemble so the bridge noise cancels; only the endpoint path differs.
    """
    bridge = sample_ou_bridge(alpha, sigma, tau, n_steps, n_paths, seed)
    ys = np.asarray(y_points, float)
    der = np.empty(ys.size)
    ses = np.empty(ys.size)
    for i, y in enumerate(ys):
        _, w_plus = omega0_path(alpha, sigma, tau, x, y + dy, n_steps)
        _, w_minus = omega0_path(alpha, sigma, tau, x, y - dy, n_steps)
        wp, rp = _bridge_weights(potential, bridge, w_plus)
        wm, rm = _bridge_weights(potential, bridge, w_minus)
        if rp or rm:
            raise ArithmeticError("exponent cap hit inside derivative check")
        diff = (wp - wm) / (2.0 * dy)
        der[i] = float(diff.mean())
        ses[i] = float(diff.std(ddof=1) / np.sqrt(diff.size))
    bound = k_bound * (tau - sigma)
    passed = bool(np.all(np.abs(der) <= bound + 3.0 * ses))
    return DerivativeBoundReport(ys, der, ses, bound, passed)


# ---------------------------------------------------------------------------
# direct (non-MC) propagator decay on the complement of the low modes


@dataclass
class DecayReport:
    s: np.ndarray
    norms: np.ndarray        # (n_funcs, len(s))
    exponents: np.ndarray    # fitted decay rates, one per test function
    threshold: float         # alpha - eps
    passed: bool


def _low_mode_projector(grid: Grid, alpha: float) -> np.ndarray:
    """Euclidean-orthonormal basis of the lowest three modes on the interior."""
    cols = [hermite_mode(grid, n, alpha).values[1:-1] for n in range(3)]
    q, _ = np.linalg.qr(np.array(cols).T)
    return q


def propagator_decay_check(grid: Grid, p: float, alpha: float, beta,
                           horizon: float, test_fields: Sequence[Field],
                           n_substeps: int = 8, samples_per: int = 4,
                           eps: float = 0.1, fit_skip: float = 0.25) -> DecayReport:
    """Direct evolution of projected data under the barrier operator.

    The generator is Q L Q with Q the projector off the lowest three
    oscillator modes and L the shifted oscillator plus the nonnegative
    barrier at beta(s) (beta constant or callable). beta is frozen on each
    substep and the dense symmetric eigendecomposition of Q L Q steps the
    state exactly within the substep. The fitted exponent of
    ||<z>^{-3} e^{alpha z^2/4} g(s)||_sup must reach alpha - eps.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    beta_of = beta if callable(beta) else (lambda s, _b=float(beta): _b)
    low = _low_mode_projector(grid, alpha)

    def project(vec):
        return vec - low @ (low.T @ vec)

    spec = WeightSpec(poly_power=3, gauss_coeff=alpha)
    states = [project(f.values[1:-1].copy()) for f in test_fields]
    n = grid.num_points

    def wnorm(vec):
        full = np.zeros(n)
        full[1:-1] = vec
        return weighted_sup_norm(Field(grid, full), spec)

    s_samples = [0.0]
    norms = [[wnorm(v) for v in states]]
    ds = horizon / n_substeps
    for j in range(n_substeps):
        s_mid = (j + 0.5) * ds
        op = assemble(grid, "rescaled", p=p, alpha=alpha, beta=float(beta_of(s_mid)))
        dense = op.dense()
        a_proj = project(project(dense).T).T  # Q H Q, symmetric
        evals, evecs = eigh(a_proj)
        for k in range(1, samples_per + 1):
            dt = ds * k / samples_per
            s_samples.append(j * ds + dt)
            row = []
            for idx, v in enumerate(states):
                prop = evecs @ (np.exp(-evals * dt) * (evecs.T @ v))
                prop = project(prop)
                row.append(wnorm(prop))
                if k == samples_per:
                    states[idx] = prop
            norms.append(row)

    s_arr = np.asarray(s_samples)
    norm_arr = np.asarray(norms).T
    keep = s_arr >= fit_skip * horizon
    exponents = np.empty(norm_arr.shape[0])
    for i in range(norm_arr.shape[0]):
        coef = np.polyfit(s_arr[keep], np.log(norm_arr[i, keep]), 1)
        exponents[i] = -coef[0]
    threshold = alpha - eps
    return DecayReport(s_arr, norm_arr, exponents, threshold,
                       bool(np.all(exponents >= threshold)))
