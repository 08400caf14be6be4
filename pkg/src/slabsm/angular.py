"""Double Gauss-Legendre quadrature and discrete angular moments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class AngularQuadrature:
    """Ordinates mu in (-1,1)\\{0} and positive weights with sum(w) = 2.

    The set is symmetric: (mu, w) present implies (-mu, w) present, and
    the ordinates are strictly sorted.
    """

    mu: np.ndarray
    w: np.ndarray

    @property
    def n_angles(self) -> int:
        return self.mu.size

    def negative(self) -> np.ndarray:
        return self.mu < 0.0

    def positive(self) -> np.ndarray:
        return self.mu > 0.0


def _legendre_and_derivative(n: int, x: np.ndarray):
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(2, n + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights of the n-point Gauss-Legendre rule on (-1, 1).

    Newton iteration on the Legendre recurrence, tolerance 1e-15.
    """
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def build_double_gauss(n_half: int) -> AngularQuadrature:
    """Double Gauss-Legendre set: the n_half-point rule mapped onto each
    half-range (0,1) and (-1,0).  2*n_half directions, sum(w) = 2."""
    if n_half < 1:
        raise ValueError("n_half must be >= 1")
    x, v = _gauss_legendre(n_half)
    mu_pos = 0.5 * (x + 1.0)
    w_half = 0.5 * v
    mu = np.concatenate([-mu_pos[::-1], mu_pos])
    w = np.concatenate([w_half[::-1], w_half])
    mu.setflags(write=False)
    w.setflags(write=False)
    return AngularQuadrature(mu=mu, w=w)


class MomentSet(NamedTuple):
    """Zeroth, first, and second-moment-closure angular moments."""

    phi: np.ndarray
    J: np.ndarray
    P: np.ndarray


def angular_moments(psi: np.ndarray, quad: AngularQuadrature) -> MomentSet:
    """Angular moments of a discrete-ordinate LD flux, coefficient-wise.

    psi has shape (M, n_cells, 2).  Returns LD coefficient arrays

        phi = sum_m w_m psi_m
        J   = sum_m w_m mu_m psi_m
        P   = sum_m w_m (1/3 - mu_m^2) psi_m

    Moments of an LD-in-space flux are again LD in space, so the reduction
    acts independently on each coefficient.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 3 or psi.shape[0] != quad.n_angles:
        raise ValueError(
            f"psi shape {psi.shape} does not match {quad.n_angles} directions")
    phi = np.einsum("m,mnc->nc", quad.w, psi)
    J = np.einsum("m,mnc->nc", quad.w * quad.mu, psi)
    P = np.einsum("m,mnc->nc", quad.w * (1.0 / 3.0 - quad.mu**2), psi)
    return MomentSet(phi=phi, J=J, P=P)
