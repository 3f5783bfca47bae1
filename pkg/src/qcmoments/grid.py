"""Rectangular phase-space grids, midpoint quadrature and finite differences.

Grids store node values at cell centers, so sums times the cell area are
midpoint-rule integrals.  Derivative stencils come in two flavours:

* ``boundary="one_sided"`` -- centered stencils in the interior with
  second-order one-sided stencils at the edges (diagnostics).
* ``boundary="clamp"`` -- the field is extended by zeros outside the domain
  and centered stencils are applied everywhere (time evolution, which
  assumes compactly supported classical functions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["PhaseGrid", "partial_deriv"]


@dataclass(frozen=True)
class PhaseGrid:
    """Cell-centered rectangular grid on ``[r_min, r_max] x [p_min, p_max]``."""

    r_min: float
    r_max: float
    p_min: float
    p_max: float
    n_r: int
    n_p: int

    def __post_init__(self):
        if self.n_r < 8 or self.n_p < 8:
            raise ValueError(f"grid must have at least 8 nodes per axis, "
                             f"got {self.n_r} x {self.n_p}")
        if not (self.r_max > self.r_min and self.p_max > self.p_min):
            raise ValueError("grid extents are empty")

    @property
    def dr(self) -> float:
        return (self.r_max - self.r_min) / self.n_r

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.n_p

    @property
    def cell_area(self) -> float:
        return self.dr * self.dp

    @property
    def r_centers(self) -> np.ndarray:
        return self.r_min + (np.arange(self.n_r) + 0.5) * self.dr

    @property
    def p_centers(self) -> np.ndarray:
        return self.p_min + (np.arange(self.n_p) + 0.5) * self.dp

    def meshgrid(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinate arrays of shape (n_r, n_p)."""
        return np.meshgrid(self.r_centers, self.p_centers, indexing="ij")

    def integrate(self, field: np.ndarray) -> np.ndarray | float:
        """Midpoint-rule integral over the domain (sums the first two axes)."""
        return np.sum(field, axis=(0, 1)) * self.cell_area

    @classmethod
    def for_gaussian(cls, sigma: float = 1.0, half_widths: float = 8.0,
                     n_r: int = 64, n_p: int = 64) -> "PhaseGrid":
        """Square grid sized to the given number of standard deviations."""
        w = half_widths * sigma
        return cls(-w, w, -w, w, n_r, n_p)


def _centered(f: np.ndarray, h: float, axis: int, order: int) -> np.ndarray:
    if order == 2:
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2.0 * h)
    return (-np.roll(f, -2, axis) + 8.0 * np.roll(f, -1, axis)
            - 8.0 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12.0 * h)


def partial_deriv(f: np.ndarray, h: float, axis: int = 0, order: int = 4,
                  boundary: str = "one_sided") -> np.ndarray:
    """Finite-difference derivative of a node field along one axis.

    ``order`` is 2 or 4 (interior stencil).  With ``boundary="one_sided"``
    the outermost rows use second-order one-sided stencils (and the rows
    adjacent to them fall back to second-order centered stencils when
    ``order=4``); with ``boundary="clamp"`` the field is treated as zero
    outside the domain.
    """
    if order not in (2, 4):
        raise ValueError(f"stencil order must be 2 or 4, got {order}")
    if boundary not in ("one_sided", "clamp"):
        raise ValueError(f"unknown boundary rule {boundary!r}")
    f = np.asarray(f, dtype=float)
    n = f.shape[axis]
    pad = 2 if order == 4 else 1
    if n < 2 * pad + 1:
        raise ValueError("field too small for the requested stencil")

    if boundary == "clamp":
        width = [(0, 0)] * f.ndim
        width[axis] = (pad, pad)
        fz = np.pad(f, width, mode="constant")
        d = _centered(fz, h, axis, order)
        sl = [slice(None)] * f.ndim
        sl[axis] = slice(pad, pad + n)
        return d[tuple(sl)]

    d = _centered(f, h, axis, order)

    def take(i):
        sl = [slice(None)] * f.ndim
        sl[axis] = i
        return f[tuple(sl)]

    def put(i, value):
        sl = [slice(None)] * f.ndim
        sl[axis] = i
        d[tuple(sl)] = value

    put(0, (-3.0 * take(0) + 4.0 * take(1) - take(2)) / (2.0 * h))
    put(-1, (3.0 * take(-1) - 4.0 * take(-2) + take(-3)) / (2.0 * h))
    if order == 4:
        put(1, (take(2) - take(0)) / (2.0 * h))
        put(-2, (take(-1) - take(-3)) / (2.0 * h))
    return d
