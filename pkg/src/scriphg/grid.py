"""Triangular double-null grids on 0 < x <= y <= 2T.

The node set is built from a single increasing array of levels
t_0 < t_1 < ... < t_{M-1} = 2T; grid nodes are the pairs
(x, y) = (t_i, t_j) with i <= j, so that every y-level carries a
diagonal node x = y (the data surface).  The level set is the union of
a uniform partition of (0, 2T] with step h and a geometric refinement
of (0, h) with ratio r, clipped at x_min > 0: the solvers never place a
node on the conformal boundary x = 0, and the log-equispaced tail is
what the expansion-fitting routines sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class TriangularGrid:
    """Shared level set for a triangular double-null mesh."""

    T: float
    n_uniform: int
    ratio: float
    x_min: float
    levels: np.ndarray = field(repr=False)

    def __post_init__(self):
        lv = self.levels
        if lv.ndim != 1 or lv.size < 2:
            raise InputError("grid needs at least two levels")
        if not np.all(np.diff(lv) > 0):
            raise InputError("levels must be strictly increasing")
        if lv[0] <= 0 or abs(lv[-1] - 2 * self.T) > 1e-12 * self.T:
            raise InputError("levels must fill (0, 2T]")

    @property
    def n_levels(self) -> int:
        return int(self.levels.size)

    @property
    def h_uniform(self) -> float:
        return 2.0 * self.T / self.n_uniform

    def is_uniform(self) -> bool:
        d = np.diff(self.levels)
        return bool(np.all(np.abs(d - d[0]) < 1e-12 * d[0]))

    def x_nodes(self, j: int) -> np.ndarray:
        """x-coordinates of the nodes on the y-level with index j."""
        return self.levels[: j + 1]

    def refine(self) -> "TriangularGrid":
        """Halve the uniform step and the geometric log-step."""
        h_new = self.T / self.n_uniform
        return make_grid(self.T, n_uniform=2 * self.n_uniform,
                         ratio=float(np.sqrt(self.ratio)),
                         x_min=min(self.x_min, h_new))

    def describe(self) -> dict:
        return {
            "T": self.T,
            "n_uniform": self.n_uniform,
            "ratio": self.ratio,
            "x_min": self.x_min,
            "n_levels": self.n_levels,
        }


def make_grid(T: float, n_uniform: int = 64, ratio: float = 2.0 ** 0.25,
              x_min: float = None) -> TriangularGrid:
    """Uniform step 2T/n_uniform on (0, 2T], geometric tail down to x_min."""
    if not 0 < 2 * T < 1:
        raise InputError("need 0 < 2T < 1 (the series calculus assumes y < 1)")
    if n_uniform < 1:
        raise InputError("n_uniform must be positive")
    h = 2.0 * T / n_uniform
    if x_min is None:
        x_min = 1e-4 * 2 * T
    if x_min > h:
        raise InputError("x_min exceeds the uniform step")
    uniform = h * np.arange(1, n_uniform + 1)
    tail = []
    if x_min < h * (1 - 1e-12):
        if not ratio > 1:
            raise InputError("geometric ratio must exceed 1")
        n_geo = int(np.ceil(np.log(h / x_min) / np.log(ratio)))
        tail = h * ratio ** (-np.arange(1, n_geo + 1))
        tail = np.maximum(tail, x_min)[::-1]
        tail = tail[np.concatenate(([True], np.diff(tail) > 1e-14 * x_min))]
    levels = np.concatenate([tail, uniform]) if len(tail) else uniform
    return TriangularGrid(T=T, n_uniform=n_uniform, ratio=ratio,
                          x_min=float(x_min), levels=levels)


def uniform_grid(T: float, n: int) -> TriangularGrid:
    """Purely uniform levels k * (2T/n), k = 1..n (no geometric tail)."""
    grid = make_grid(T, n_uniform=n, x_min=2.0 * T / n)
    return grid
