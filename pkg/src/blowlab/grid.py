"""Uniform symmetric grids, tagged fields, and weighted norms.

Everything downstream lives on a truncated line [-L, L] with an odd number of
nodes so that the origin is a node and reflection is an exact index map.
Weighted sup norms use weights of the form (1 + y^2)^(-n/2) * exp(q y^2 / 4);
the Gaussian factor can overflow in the far field, which is treated as a hard
error rather than silently clipping.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "WeightSpec",
    "WeightOverflowError",
    "weighted_sup_norm",
    "l2_inner",
    "cutoff_indicator",
    "trapezoid_weights",
]

MIN_HALF_WIDTH = 10.0
PARITIES = ("even", "odd", "none")


class WeightOverflowError(FloatingPointError):
    """Gaussian weight overflowed at a named node."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-half_width, half_width] with an odd point count."""

    half_width: float
    num_points: int

    def __post_init__(self):
        if self.half_width < MIN_HALF_WIDTH:
            raise ValueError(f"half_width {self.half_width} < {MIN_HALF_WIDTH}")
        if self.num_points < 3 or self.num_points % 2 == 0:
            raise ValueError(f"num_points must be odd and >= 3, got {self.num_points}")

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.linspace(-self.half_width, self.half_width, self.num_points)
        x[self.num_points // 2] = 0.0  # exact origin node
        x.setflags(write=False)
        return x

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.num_points - 1)

    @property
    def center_index(self) -> int:
        return self.num_points // 2

    def refined(self) -> "Grid":
        """Same domain with halved spacing (used for Richardson passes)."""
        return Grid(self.half_width, 2 * self.num_points - 1)

    def index_of(self, x: float) -> int:
        i = int(round((x + self.half_width) / self.spacing))
        if not 0 <= i < self.num_points:
            raise ValueError(f"{x} outside grid")
        return i


@dataclass
class Field:
    """Nodal values on a grid plus a parity tag ('even', 'odd' or 'none')."""

    grid: Grid
    values: np.ndarray
    parity: str = "none"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.num_points,):
            raise ValueError("values shape does not match grid")
        if self.parity not in PARITIES:
            raise ValueError(f"unknown parity {self.parity!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite values")

    def parity_defect(self) -> float:
        """Max mismatch under reflection, relative to the sup norm."""
        v = self.values
        scale = max(np.abs(v).max(), 1e-300)
        if self.parity == "even":
            return float(np.abs(v - v[::-1]).max() / scale)
        if self.parity == "odd":
            return float(np.abs(v + v[::-1]).max() / scale)
        return 0.0

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def with_values(self, values: np.ndarray, parity: str | None = None) -> "Field":
        return Field(self.grid, values, self.parity if parity is None else parity)

    def symmetrized(self) -> "Field":
        if self.parity == "odd":
            return self.with_values(0.5 * (self.values - self.values[::-1]))
        return self.with_values(0.5 * (self.values + self.values[::-1]), parity="even")


@dataclass(frozen=True)
class WeightSpec:
    """Weight (1 + y^2)^(-poly_power/2) * exp(gauss_coeff * y^2 / 4).

    poly_power is restricted to 0..4 (the only powers the estimates use).
    gauss_coeff > 0 grows in the far field and may overflow on wide grids;
    evaluation then raises WeightOverflowError naming the offending node.
    """

    poly_power: int
    gauss_coeff: float = 0.0

    def __post_init__(self):
        if self.poly_power not in (0, 1, 2, 3, 4):
            raise ValueError(f"poly_power must be in 0..4, got {self.poly_power}")

    def values_on(self, grid: Grid) -> np.ndarray:
        y = grid.nodes
        with np.errstate(over="raise"):
            try:
                w = np.exp(self.gauss_coeff * y * y / 4.0)
            except FloatingPointError:
                bad = int(np.argmax(self.gauss_coeff * y * y / 4.0 > 700.0))
                raise WeightOverflowError(
                    f"gaussian weight overflow at node {bad} (y={y[bad]:.6g}, "
                    f"gauss_coeff={self.gauss_coeff:.6g})"
                ) from None
        if self.poly_power:
            w = w * (1.0 + y * y) ** (-0.5 * self.poly_power)
        return w


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.num_points, grid.spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def weighted_sup_norm(f: Field, spec: WeightSpec) -> float:
    """sup over nodes of |weight * f|; raises on non-finite products."""
    prod = spec.values_on(f.grid) * f.values
    if not np.all(np.isfinite(prod)):
        bad = int(np.argmax(~np.isfinite(prod)))
        raise WeightOverflowError(
            f"non-finite weighted value at node {bad} (y={f.grid.nodes[bad]:.6g})"
        )
    return float(np.abs(prod).max())


def l2_inner(f: Field, g: Field) -> float:
    """Trapezoid inner product. Grids must be identical."""
    if f.grid != g.grid:
        raise ValueError("fields on different grids")
    return float(np.dot(trapezoid_weights(f.grid), f.values * g.values))


def cutoff_indicator(grid: Grid, radius: float) -> np.ndarray:
    """Indicator of |y| >= radius (1.0/0.0 per node; ties count as outside)."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    return (np.abs(grid.nodes) >= radius).astype(float)
