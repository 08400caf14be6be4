"""Spatial mesh and linear-discontinuous (LD) per-cell fields.

Every spatial unknown in this package lives in the LD space: two
coefficients per cell, (average, slope), representing

    u(x) = u_avg + u_slope * 2*(x - x_i) / dx_i     on cell i,

so the one-sided cell-edge traces are u_avg -/+ u_slope.  Arrays of LD
coefficients are shaped (..., n_cells, 2) with the coefficient axis last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """1D slab mesh.  dx may be nonuniform; the built-ins are uniform."""

    width: float
    n_cells: int
    dx: np.ndarray

    @staticmethod
    def uniform(width: float, n_cells: int) -> "Mesh":
        if width <= 0 or n_cells < 1:
            raise ValueError("mesh requires width > 0 and n_cells >= 1")
        dx = np.full(n_cells, width / n_cells)
        dx.setflags(write=False)
        return Mesh(float(width), int(n_cells), dx)

    @property
    def centers(self) -> np.ndarray:
        edges = np.concatenate(([0.0], np.cumsum(self.dx)))
        return 0.5 * (edges[:-1] + edges[1:])

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.dx)))


def to_nodes(coeffs: np.ndarray) -> np.ndarray:
    """(avg, slope) -> (left value, right value), any leading shape."""
    a = coeffs[..., 0]
    s = coeffs[..., 1]
    return np.stack([a - s, a + s], axis=-1)


def from_nodes(nodes: np.ndarray) -> np.ndarray:
    """(left value, right value) -> (avg, slope)."""
    left = nodes[..., 0]
    right = nodes[..., 1]
    return np.stack([0.5 * (left + right), 0.5 * (right - left)], axis=-1)


def nodal_product(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Per-cell product of two LD coefficient arrays, collocated at the
    two cell-edge values.  Exact inverse of :func:`nodal_ratio`."""
    return from_nodes(to_nodes(f) * to_nodes(g))


def nodal_ratio(num: np.ndarray, den: np.ndarray, fallback: float,
                eps: float = 1e-30) -> np.ndarray:
    """Value-wise ratio of LD fields with a safeguarded denominator.

    Nodes where |den| < eps return `fallback` instead of the quotient.
    """
    n = to_nodes(num)
    d = to_nodes(den)
    safe = np.abs(d) >= eps
    out = np.full_like(n, fallback, dtype=float)
    np.divide(n, d, out=out, where=safe)
    return from_nodes(out)


def const_field(value, n_cells: int) -> np.ndarray:
    out = np.zeros((n_cells, 2))
    out[:, 0] = value
    return out


class LDField:
    """A scalar LD function on a mesh.

    Thin wrapper over a coefficient array shaped (n_cells, 2); the solver
    internals work on raw arrays, this class carries the mesh handle for
    user-facing construction and inspection.
    """

    def __init__(self, mesh: Mesh, data: np.ndarray | None = None):
        self.mesh = mesh
        if data is None:
            data = np.zeros((mesh.n_cells, 2))
        data = np.asarray(data, dtype=float)
        if data.shape != (mesh.n_cells, 2):
            raise ValueError(
                f"LD data shape {data.shape} does not match mesh with "
                f"{mesh.n_cells} cells")
        self.data = data

    @classmethod
    def constant(cls, mesh: Mesh, value: float) -> "LDField":
        return cls(mesh, const_field(value, mesh.n_cells))

    @property
    def avg(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def slope(self) -> np.ndarray:
        return self.data[:, 1]

    def left(self) -> np.ndarray:
        return self.data[:, 0] - self.data[:, 1]

    def right(self) -> np.ndarray:
        return self.data[:, 0] + self.data[:, 1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points x (piecewise, discontinuous at edges)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        edges = self.mesh.edges
        i = np.clip(np.searchsorted(edges, x, side="right") - 1, 0,
                    self.mesh.n_cells - 1)
        xi = 2.0 * (x - self.mesh.centers[i]) / self.mesh.dx[i]
        return self.data[i, 0] + self.data[i, 1] * xi
