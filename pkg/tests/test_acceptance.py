"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line per criterion (run with `pytest -s` to see them inline)."""

import numpy as np
import pytest

from slabsm.accel import aa1_alpha, AAState, aa_step
from slabsm.angular import angular_moments, build_double_gauss
from slabsm.driver import (IterationConfig, run_problem,
                           si_infinite_medium_rho)
from slabsm.fields import Mesh, to_nodes
from slabsm.losm import group_particle_balance, LowOrderSystem
from slabsm.problem import (builtin_problem, builtin_reference_c,
                            connection_strength, validate_scattering)
from slabsm.sweep import sweep_directions

EPS = 1e-9

_SPECS = {name: builtin_problem(name) for name in ("test1", "test2")}
_RUN_CACHE = {}


def _run(problem, method, k, s, **kw):
    key = (problem, method, k, s, tuple(sorted(kw.items())))
    if key not in _RUN_CACHE:
        cfg = IterationConfig(method=method, k_max=k, s_max=s, epsilon=EPS,
                              **kw)
        _RUN_CACHE[key] = run_problem(_SPECS[problem], cfg)
    return _RUN_CACHE[key]


def _verdict(criterion, failures):
    if failures:
        print(f"FAIL criterion {criterion}: " + "; ".join(failures))
    else:
        print(f"PASS criterion {criterion}")
    assert not failures, f"criterion {criterion}: " + "; ".join(failures)


# ---------------------------------------------------------------------------
# 1. Table 2 reproduction (Test 1)
# ---------------------------------------------------------------------------

def test_criterion_1_table2_test1():
    cells = [
        ("mlsm", 1, 1, 16, 0.20, 2),
        ("mlsm", 1, 2, 15, 0.20, 3),
        ("mlsm", 2, 1, 15, 0.19, 4),
        ("mlsm-aa1", 1, 1, 15, 0.20, 2),
        ("mlsm-aa1", 1, 2, 15, 0.20, 3),
    ]
    failures = []
    for method, k, s, nt_ref, rho_ref, mlo_ref in cells:
        rep = _run("test1", method, k, s)
        tag = f"{method}({k},{s})"
        if rep.status != "converged":
            failures.append(f"{tag} status={rep.status}")
            continue
        if abs(rep.N_t - nt_ref) > 2:
            failures.append(f"{tag} N_t={rep.N_t} vs {nt_ref}+-2")
        if rep.rho_num is None or abs(rep.rho_num - rho_ref) > 0.05:
            failures.append(f"{tag} rho={rep.rho_num} vs {rho_ref}+-0.05")
        if rep.M_lo != mlo_ref:
            failures.append(f"{tag} M_lo={rep.M_lo} vs {mlo_ref}")
    _verdict(1, failures)


# ---------------------------------------------------------------------------
# 2. Table 4 reproduction (Test 2, MLSM)
# ---------------------------------------------------------------------------

def test_criterion_2_table4_test2_mlsm():
    cells = [
        (1, 1, 31, 0.45),
        (1, 4, 20, 0.28),
        (2, 4, 15, 0.20),
        (5, 1, 15, 0.20),
    ]
    failures = []
    for k, s, nt_ref, rho_ref in cells:
        rep = _run("test2", "mlsm", k, s)
        tag = f"mlsm({k},{s})"
        if abs(rep.N_t - nt_ref) > 3:
            failures.append(f"{tag} N_t={rep.N_t} vs {nt_ref}+-3")
        if rep.rho_num is None or abs(rep.rho_num - rho_ref) > 0.06:
            failures.append(f"{tag} rho={rep.rho_num} vs {rho_ref}+-0.06")
    # trend along the k_max = 1 row: N_t nonincreasing as M_lo grows
    nts = [_run("test2", "mlsm", 1, s).N_t for s in (1, 2, 3, 4)]
    if any(a < b for a, b in zip(nts, nts[1:])):
        failures.append(f"k=1 row N_t not nonincreasing: {nts}")
    _verdict(2, failures)


# ---------------------------------------------------------------------------
# 3. Table 5 reproduction (Test 2, MLSM-AA(1))
# ---------------------------------------------------------------------------

def test_criterion_3_table5_test2_aa1():
    failures = []
    rep = _run("test2", "mlsm-aa1", 1, 2)
    if abs(rep.N_t - 18) > 3:
        failures.append(f"(1,2) N_t={rep.N_t} vs 18+-3")
    if rep.rho_num is None or abs(rep.rho_num - 0.27) > 0.06:
        failures.append(f"(1,2) rho={rep.rho_num} vs 0.27+-0.06")

    rep = _run("test2", "mlsm-aa1", 2, 2)
    if abs(rep.N_t - 15) > 2:
        failures.append(f"(2,2) N_t={rep.N_t} vs 15+-2")
    if rep.M_lo != 6:
        failures.append(f"(2,2) M_lo={rep.M_lo} vs 6")

    rep = _run("test2", "mlsm-aa1", 1, 1)
    if not rep.rho_irregular or rep.rho_num is not None:
        failures.append(f"(1,1) not flagged irregular (rho={rep.rho_num})")
    _verdict(3, failures)


# ---------------------------------------------------------------------------
# 4. Spectral analysis
# ---------------------------------------------------------------------------

def test_criterion_4_si_fourier_values():
    failures = []
    rho1 = si_infinite_medium_rho(_SPECS["test1"])
    rho2 = si_infinite_medium_rho(_SPECS["test2"])
    if abs(rho1 - 0.96) > 0.01:
        failures.append(f"test1 rho_th={rho1:.4f} vs 0.96+-0.01")
    if abs(rho2 - 0.98) > 0.01:
        failures.append(f"test2 rho_th={rho2:.4f} vs 0.98+-0.01")
    _verdict(4, failures)


# ---------------------------------------------------------------------------
# 5. Data diagnostics
# ---------------------------------------------------------------------------

_TABLE1 = [
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [1., 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0.71, 1., 0, 0, 0, 0, 0, 0, 0, 0],
    [1., 0.53, 0.36, 0, 0, 0, 0, 0, 0, 0],
    [1., 0.21, 0.48, 1., 0, 0, 0, 0, 0, 0],
    [0, 0.78, 0.64, 1., 0.81, 0, 0, 0, 0, 0],
    [0, 0, 0.26, 0.09, 0.20, 0.48, 0, 1., 0.22, 0.23],
    [0, 0, 0, 0.91, 0.11, 0.25, 0.13, 0, 1., 0.88],
    [0, 0, 0, 0, 0.39, 0.29, 1., 0.78, 0, 0.62],
    [0, 0, 0, 0, 0, 0.41, 1., 0.55, 0.68, 0],
]

_TABLE3 = [
    [0, 0, 0, 0, 0, 0, 0],
    [1., 0, 0, 0, 0, 0, 0],
    [5.5e-3, 1., 0, 0, 0, 0, 0],
    [1.7e-5, 2.8e-3, 1., 0, 3.2e-4, 0, 0],
    [1.3e-7, 1.2e-4, 4.1e-2, 1., 0, 5.3e-3, 0],
    [0, 1.5e-5, 5.2e-3, 1.3e-1, 1., 0, 2.6e-1],
    [0, 2.0e-6, 9.4e-4, 2.3e-2, 1.1e-1, 1., 0],
]


def _check_strength_matrix(name, table, fmt, failures):
    S = connection_strength(_SPECS[name]).S
    table = np.asarray(table, dtype=float)
    for g in range(table.shape[0]):
        for h in range(table.shape[1]):
            expected = table[g, h]
            got = S[g, h]
            if expected == 0.0:
                ok = got < 1e-12
            elif fmt == "decimals" or expected == 1.0:
                # printed with two decimals: agree within half an ulp
                ok = abs(got - expected) <= 5.1e-3
            else:
                # printed with a two-digit mantissa: within one printed ulp
                # (the source table itself rounds up to an ulp away)
                scale = 10.0 ** np.floor(np.log10(expected))
                ok = abs(got - expected) <= 0.101 * scale
            if not ok:
                failures.append(
                    f"{name} S[{g + 1}][{h + 1}]={got:.4g} vs {expected:.4g}")


def test_criterion_5_data_diagnostics():
    failures = []
    _check_strength_matrix("test1", _TABLE1, "decimals", failures)
    _check_strength_matrix("test2", _TABLE3, "scientific", failures)
    for name in ("test1", "test2"):
        rep = validate_scattering(_SPECS[name], builtin_reference_c(name))
        if not rep.passed:
            failures.append(f"{name} c_g deviation {rep.max_abs_dev:.2e}")
    _verdict(5, failures)


# ---------------------------------------------------------------------------
# 6. Property suite
# ---------------------------------------------------------------------------

def test_criterion_6a_consistency():
    failures = []
    for problem, method, k, s in [("test1", "mlsm", 1, 2),
                                  ("test2", "mlsm-aa1", 2, 2)]:
        st = _run(problem, method, k, s).state
        G = st.phi.shape[0]
        for g in range(G):
            dphi = np.abs(st.phi[g] - st.phi_ho[g]).max() \
                / np.abs(st.phi[g]).max()
            dJ = np.abs(st.J[g] - st.J_ho[g]).max() / np.abs(st.J[g]).max()
            if dphi > 10 * EPS:
                failures.append(f"{problem} {method} g={g + 1} phi dev "
                                f"{dphi:.2e}")
            if dJ > 10 * EPS:
                failures.append(f"{problem} {method} g={g + 1} J dev "
                                f"{dJ:.2e}")
        zdev = np.abs(to_nodes(st.zeta) - 1.0).max()
        if zdev > 10 * EPS:
            failures.append(f"{problem} {method} zeta dev {zdev:.2e}")
    _verdict("6a", failures)


def test_criterion_6b_fixed_point_agreement():
    failures = []
    ref = _run("test1", "si", 1, 1, max_outer=2000).state.grey_phi[:, 0]
    for method, k, s in [("mlsm", 1, 2), ("mlsm-aa1", 1, 2)]:
        grey = _run("test1", method, k, s).state.grey_phi[:, 0]
        dev = np.abs(grey - ref).max() / np.abs(ref).max()
        if dev > 100 * EPS:
            failures.append(f"{method} vs SI dev {dev:.2e}")
    _verdict("6b", failures)


def test_si_rate_below_infinite_medium_bound():
    # finite-slab leakage keeps the observed SI rate at or below the
    # flat-mode value 0.96 (within the quoted 0.02 slack)
    rep = _run("test1", "si", 1, 1, max_outer=2000)
    assert rep.status == "converged"
    assert rep.rho_num is not None
    assert rep.rho_num <= 0.98


def test_criterion_6c_determinism():
    failures = []
    serial = run_problem(_SPECS["test2"],
                         IterationConfig(method="mlsm-aa1", k_max=2, s_max=2,
                                         epsilon=EPS))
    threaded = run_problem(_SPECS["test2"],
                           IterationConfig(method="mlsm-aa1", k_max=2,
                                           s_max=2, epsilon=EPS,
                                           parallel=True, threads=4))
    if serial.residual_history != threaded.residual_history:
        failures.append("residual histories differ between 1 and 4 workers")
    if not np.array_equal(serial.state.grey_phi, threaded.state.grey_phi):
        failures.append("grey flux differs between 1 and 4 workers")
    if not np.array_equal(serial.state.phi, threaded.state.phi):
        failures.append("group fluxes differ between 1 and 4 workers")
    _verdict("6c", failures)


def test_criterion_6d_aa1_properties():
    failures = []
    # secant exactness on scalar affine maps
    rng = np.random.RandomState(314)
    for _ in range(100):
        a = rng.uniform(-0.9, 0.9)
        b = rng.uniform(-2, 2)
        state = AAState(m=1)
        x = rng.uniform(-4, 4)
        x1 = aa_step(state, np.array([x]), np.array([a * x + b]))[0]
        x2 = aa_step(state, np.array([x1]), np.array([a * x1 + b]))[0]
        fixed = b / (1 - a)
        if abs(x2 - fixed) > 1e-8 * max(1.0, abs(fixed)):
            failures.append(f"secant miss for a={a:.3f}")
            break
    # projection inequality on random vectors
    for _ in range(200):
        rp = rng.randn(rng.randint(2, 30))
        rc = rng.randn(rp.size)
        a0, a1 = aa1_alpha(rp, rc)
        if abs(a0 + a1 - 1.0) > 1e-14:
            failures.append("alpha constraint violated")
            break
        combo = np.linalg.norm(a0 * rp + a1 * rc)
        if combo > min(np.linalg.norm(rp), np.linalg.norm(rc)) + 1e-12:
            failures.append("projection inequality violated")
            break
    _verdict("6d", failures)


def test_criterion_6e_quadrature_properties():
    failures = []
    quad = build_double_gauss(8)
    if abs(quad.w.sum() - 2.0) > 1e-14:
        failures.append("weight normalization")
    if abs((quad.w * quad.mu**2).sum() - 2.0 / 3.0) > 1e-14:
        failures.append("second moment not exact")
    for k in range(2 * 8):
        pos = quad.mu > 0
        if abs((quad.w[pos] * quad.mu[pos]**k).sum() - 1 / (k + 1)) > 5e-14:
            failures.append(f"half-range degree {k} not exact")
    # P annihilates fluxes linear in mu
    psi = np.zeros((quad.n_angles, 4, 2))
    psi[:, :, 0] = (2.0 - 0.7 * quad.mu)[:, None]
    P = angular_moments(psi, quad).P
    if np.abs(P).max() > 1e-14:
        failures.append("P moment of linear-in-mu flux nonzero")
    _verdict("6e", failures)


def test_criterion_6f_particle_balance():
    failures = []
    rep = _run("test2", "mlsm", 2, 4)
    st = rep.state
    spec = _SPECS["test2"]
    mesh = Mesh.uniform(spec.width, spec.n_cells)
    # grey balance: leakage + absorption = source, from the final grey solve
    c = st.grey_coeffs
    phi_n = to_nodes(st.grey_phi)
    a_n = to_nodes(c.sbar_a)
    J_left = -0.5 * phi_n[0, 0] + st.grey_closure.dJ[0]
    J_right = 0.5 * phi_n[-1, 1] + st.grey_closure.dJ[-1]
    absorbed = float(np.sum(0.5 * (a_n * phi_n).sum(axis=1) * mesh.dx))
    source = float(np.sum(c.Q[:, 0] * mesh.dx))
    dev = abs((J_right - J_left) + absorbed - source) / abs(source)
    if dev > 1e-8:
        failures.append(f"grey balance dev {dev:.2e}")
    # per-group balance of a fresh converged-state solve
    system = LowOrderSystem(spec, mesh)
    S = system.group_source(st.phi, st.zeta)
    phi_new, J_new = system.group_pass(st.phi, st.J, st.zeta, st.closures)
    for g in range(spec.G):
        lhs, src = group_particle_balance(system, g, phi_new[g], J_new[g],
                                          S[g], st.closures[g])
        if abs(lhs - src) / abs(src) > 1e-10:
            failures.append(f"group {g + 1} balance {abs(lhs - src):.2e}")
    _verdict("6f", failures)


GAUSS3_T = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
GAUSS3_V = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def test_criterion_6g_manufactured_order():
    failures = []
    quad = build_double_gauss(4)
    sigma, W = 1.0, 4.0

    def exact(x, mu):
        return (1 + (x / W)**2) * (1 + mu)

    errors = []
    for n in (16, 32, 64):
        mesh = Mesh.uniform(W, n)
        rhs = np.zeros((quad.n_angles, n, 2))
        xc, h = mesh.centers, mesh.dx / 2.0
        for m in range(quad.n_angles):
            mu = quad.mu[m]
            for t, v in zip(GAUSS3_T, GAUSS3_V):
                fx = mu * (1 + mu) * 2 * (xc + h * t) / W**2 \
                    + sigma * exact(xc + h * t, mu)
                rhs[m, :, 0] += 0.5 * v * fx
                rhs[m, :, 1] += 1.5 * v * fx * t
        psi = sweep_directions(sigma, mesh, quad, rhs,
                               inc_left=exact(0.0, quad.mu),
                               inc_right=exact(W, quad.mu))
        err2 = 0.0
        for m in range(quad.n_angles):
            for t, v in zip(GAUSS3_T, GAUSS3_V):
                diff = psi[m, :, 0] + psi[m, :, 1] * t \
                    - exact(xc + h * t, quad.mu[m])
                err2 += quad.w[m] * np.sum(v * h * diff**2)
        errors.append(np.sqrt(err2))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    if not np.all(orders >= 1.9):
        failures.append(f"observed orders {orders}")
    _verdict("6g", failures)


# ---------------------------------------------------------------------------
# 7. Cost accounting
# ---------------------------------------------------------------------------

def test_criterion_7_cost_accounting():
    failures = []
    checked = 0
    for key, rep in _RUN_CACHE.items():
        if rep.method == "si":
            continue
        expected = rep.k_max * (rep.s_max + 1)
        if rep.M_lo != expected:
            failures.append(f"{key} M_lo={rep.M_lo} vs {expected}")
        if any(c != expected for c in rep.lo_solve_counts):
            failures.append(f"{key} per-outer counts {set(rep.lo_solve_counts)}")
        checked += 1
    if checked < 10:
        failures.append(f"only {checked} runs instrumented")
    _verdict(7, failures)
