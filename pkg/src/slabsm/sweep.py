"""Level 1: linear-discontinuous transport sweep for one decoupled group.

Weak form per cell and direction, with upwind edge fluxes.  For mu > 0
(left-to-right march) the 2x2 cell system for (psi_avg, psi_slope) is

    (mu + st*dx) a +        mu  s = dx*q_avg   + mu*psi_in
        -3 mu    a + (3mu + st*dx) s = dx*q_slope - 3*mu*psi_in

and the outflow trace a + s feeds the next cell; mu < 0 mirrors it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .angular import AngularQuadrature, MomentSet, angular_moments
from .fields import Mesh, nodal_product, to_nodes


@dataclass
class GroupSweepInput:
    """Inputs for one group's high-order solve.

    rhs is the full isotropic source density (per unit mu), i.e. already
    includes the 1/2 factors; shape (n_cells, 2).  Incoming boundary flux
    defaults to vacuum.
    """

    sigma_t: float
    rhs: np.ndarray
    quad: AngularQuadrature
    mesh: Mesh
    inc_left: np.ndarray | None = None
    inc_right: np.ndarray | None = None


def sweep_directions(sigma_t: float, mesh: Mesh, quad: AngularQuadrature,
                     rhs: np.ndarray, inc_left=None, inc_right=None
                     ) -> np.ndarray:
    """Sweep all directions; rhs may be (n_cells, 2) shared across angles
    or (M, n_cells, 2) per direction.  Returns psi shaped (M, n_cells, 2)."""
    if sigma_t <= 0:
        raise ValueError("sweep requires sigma_t > 0")
    M = quad.n_angles
    N = mesh.n_cells
    dx = mesh.dx
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape == (N, 2):
        rhs = np.broadcast_to(rhs, (M, N, 2))
    elif rhs.shape != (M, N, 2):
        raise ValueError(f"rhs shape {rhs.shape} invalid")
    if not np.all(np.isfinite(rhs)):
        raise ValueError("rhs must be finite")

    inc_left = np.zeros(M) if inc_left is None else np.asarray(inc_left, float)
    inc_right = np.zeros(M) if inc_right is None else np.asarray(inc_right, float)

    psi = np.empty((M, N, 2))
    pos = quad.positive()
    neg = quad.negative()

    mu_p = quad.mu[pos]
    inc = inc_left[pos].copy()
    for i in range(N):
        sd = sigma_t * dx[i]
        qa = rhs[pos, i, 0] * dx[i] + mu_p * inc
        qs = rhs[pos, i, 1] * dx[i] - 3.0 * mu_p * inc
        det = 6.0 * mu_p**2 + 4.0 * mu_p * sd + sd * sd
        a = ((3.0 * mu_p + sd) * qa - mu_p * qs) / det
        s = (3.0 * mu_p * qa + (mu_p + sd) * qs) / det
        psi[pos, i, 0] = a
        psi[pos, i, 1] = s
        inc = a + s

    mu_n = quad.mu[neg]
    inc = inc_right[neg].copy()
    for i in range(N - 1, -1, -1):
        sd = sigma_t * dx[i]
        qa = rhs[neg, i, 0] * dx[i] - mu_n * inc
        qs = rhs[neg, i, 1] * dx[i] - 3.0 * mu_n * inc
        det = 6.0 * mu_n**2 - 4.0 * mu_n * sd + sd * sd
        a = ((-3.0 * mu_n + sd) * qa - mu_n * qs) / det
        s = (3.0 * mu_n * qa + (-mu_n + sd) * qs) / det
        psi[neg, i, 0] = a
        psi[neg, i, 1] = s
        inc = a - s

    return psi


def sweep_group(inp: GroupSweepInput) -> np.ndarray:
    """Solve one group's decoupled transport equation for every direction."""
    return sweep_directions(inp.sigma_t, inp.mesh, inp.quad, inp.rhs,
                            inp.inc_left, inp.inc_right)


def sweep_batch(sigma_t: np.ndarray, mesh: Mesh, quad: AngularQuadrature,
                rhs: np.ndarray) -> np.ndarray:
    """Vacuum-boundary sweep of all groups in one pass, (G, M, N, 2).

    Elementwise-identical arithmetic to per-group sweep_directions calls,
    just batched over the group axis, so results agree bitwise.
    """
    G = sigma_t.size
    M = quad.n_angles
    N = mesh.n_cells
    dx = mesh.dx
    psi = np.empty((G, M, N, 2))
    pos = quad.positive()
    neg = quad.negative()

    mu_p = quad.mu[pos][None, :]
    inc = np.zeros((G, mu_p.size))
    for i in range(N):
        sd = (sigma_t * dx[i])[:, None]
        qa = rhs[:, i, 0][:, None] * dx[i] + mu_p * inc
        qs = rhs[:, i, 1][:, None] * dx[i] - 3.0 * mu_p * inc
        det = 6.0 * mu_p**2 + 4.0 * mu_p * sd + sd * sd
        a = ((3.0 * mu_p + sd) * qa - mu_p * qs) / det
        s = (3.0 * mu_p * qa + (mu_p + sd) * qs) / det
        psi[:, pos, i, 0] = a
        psi[:, pos, i, 1] = s
        inc = a + s

    mu_n = quad.mu[neg][None, :]
    inc = np.zeros((G, mu_n.size))
    for i in range(N - 1, -1, -1):
        sd = (sigma_t * dx[i])[:, None]
        qa = rhs[:, i, 0][:, None] * dx[i] - mu_n * inc
        qs = rhs[:, i, 1][:, None] * dx[i] - 3.0 * mu_n * inc
        det = 6.0 * mu_n**2 - 4.0 * mu_n * sd + sd * sd
        a = ((-3.0 * mu_n + sd) * qa - mu_n * qs) / det
        s = (3.0 * mu_n * qa + (-mu_n + sd) * qs) / det
        psi[:, neg, i, 0] = a
        psi[:, neg, i, 1] = s
        inc = a - s

    return psi


def build_ho_rhs(grey_phi: np.ndarray, sbar_s_g: np.ndarray,
                 Q_g: float) -> np.ndarray:
    """Isotropic sweep source 0.5*(sbar_s,g * grey_phi) + 0.5*Q_g.

    The product of the two LD fields is collocated at the cell-edge values,
    which keeps the averaged-cross-section identity exact at convergence.
    """
    if grey_phi.shape != sbar_s_g.shape:
        raise ValueError("grey flux and averaged cross section meshes differ")
    rhs = 0.5 * nodal_product(sbar_s_g, grey_phi)
    rhs[:, 0] += 0.5 * Q_g
    return rhs


def upwind_edge_psi(psi: np.ndarray, quad: AngularQuadrature,
                    inc_left=None, inc_right=None) -> np.ndarray:
    """Upwind angular flux on the N+1 cell edges, (M, N+1).

    Edge values for mu > 0 come from the left cell's right trace (or the
    incident flux at edge 0); mirrored for mu < 0.
    """
    M, N, _ = psi.shape
    out = np.zeros((M, N + 1))
    pos = quad.positive()
    neg = quad.negative()
    out[pos, 1:] = (psi[pos, :, 0] + psi[pos, :, 1])
    out[neg, :N] = (psi[neg, :, 0] - psi[neg, :, 1])
    if inc_left is not None:
        out[pos, 0] = np.asarray(inc_left, float)[pos]
    if inc_right is not None:
        out[neg, N] = np.asarray(inc_right, float)[neg]
    return out


@dataclass
class ClosureData:
    """Frozen transport functionals that close one group's low-order system.

    Edge arrays are indexed 0..N (cell edges).  dJ holds the additive
    constants of the edge-current reconstruction; slots 0 and N hold the
    boundary closure constants C with J = n*(phi/2) + C.  dphi holds the
    edge-scalar-flux reconstruction constants, Phat the edge closure moment
    sum w*(1/3 - mu^2)*psi, and P the cell LD coefficients of the closure
    moment.
    """

    dJ: np.ndarray
    dphi: np.ndarray
    Phat: np.ndarray
    P: np.ndarray

    def scaled_sum(self, other: "ClosureData") -> "ClosureData":
        return ClosureData(self.dJ + other.dJ, self.dphi + other.dphi,
                           self.Phat + other.Phat, self.P + other.P)


@dataclass(frozen=True)
class LOBoundaryClosure:
    """Boundary functionals C = J_edge - n*(phi_trace/2), n = -1 left/+1 right."""

    C_left: float
    C_right: float


def closure_from_sweep(psi: np.ndarray, quad: AngularQuadrature,
                       moments: MomentSet | None = None) -> ClosureData:
    """Edge and cell closure functionals from the latest sweep.

    The interior edge current and scalar flux are reconstructed from the
    one-sided LD traces via half-range P1 partial moments,

        J_edge   ~  [phi/4 + J/2]_left-cell + [-phi/4 + J/2]_right-cell
        phi_edge ~  [phi/2 + 3J/4]_left-cell + [phi/2 - 3J/4]_right-cell

    and the stored constants are the exact transport edge moments minus
    these reconstructions, so imposing them on the low-order system
    reproduces the transport moments identically at a consistent solution.
    """
    if moments is None:
        moments = angular_moments(psi, quad)
    N = psi.shape[1]
    edge_psi = upwind_edge_psi(psi, quad)
    phi_hat = np.einsum("m,me->e", quad.w, edge_psi)
    J_hat = np.einsum("m,me->e", quad.w * quad.mu, edge_psi)
    P_hat = np.einsum("m,me->e", quad.w * (1.0 / 3.0 - quad.mu**2), edge_psi)

    phi_n = to_nodes(moments.phi)     # (N, 2): [left, right] traces
    J_n = to_nodes(moments.J)

    dJ = np.empty(N + 1)
    dphi = np.empty(N + 1)
    # interior edges e = 1..N-1 between cells e-1 and e
    lphi, lJ = phi_n[:-1, 1], J_n[:-1, 1]
    rphi, rJ = phi_n[1:, 0], J_n[1:, 0]
    dJ[1:N] = J_hat[1:N] - (0.25 * lphi + 0.5 * lJ - 0.25 * rphi + 0.5 * rJ)
    dphi[1:N] = phi_hat[1:N] - (0.5 * lphi + 0.75 * lJ + 0.5 * rphi - 0.75 * rJ)
    # boundary closures against the one-sided traces
    dJ[0] = J_hat[0] + 0.5 * phi_n[0, 0]
    dJ[N] = J_hat[N] - 0.5 * phi_n[N - 1, 1]
    dphi[0] = phi_hat[0] - (0.5 * phi_n[0, 0] - 0.75 * J_n[0, 0])
    dphi[N] = phi_hat[N] - (0.5 * phi_n[N - 1, 1] + 0.75 * J_n[N - 1, 1])

    return ClosureData(dJ=dJ, dphi=dphi, Phat=P_hat, P=moments.P.copy())


def boundary_closure(closure: ClosureData) -> LOBoundaryClosure:
    return LOBoundaryClosure(C_left=float(closure.dJ[0]),
                             C_right=float(closure.dJ[-1]))


def group_balance(psi: np.ndarray, quad: AngularQuadrature, mesh: Mesh,
                  sigma_t: float, rhs: np.ndarray) -> tuple[float, float]:
    """(leakage + collision, source) weak-form balance of a sweep output."""
    mom = angular_moments(psi, quad)
    edge_psi = upwind_edge_psi(psi, quad)
    J_hat = np.einsum("m,me->e", quad.w * quad.mu, edge_psi)
    leakage = J_hat[-1] - J_hat[0]
    collision = float(np.sum(sigma_t * mom.phi[:, 0] * mesh.dx))
    source = float(np.sum(2.0 * rhs[:, 0] * mesh.dx))
    return leakage + collision, source
