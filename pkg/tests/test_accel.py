import numpy as np
import pytest

from slabsm.accel import (AAState, DegenerateResidualPair, aa1_alpha, aa_step,
                          flatten_state, unflatten_state)


def test_alpha_current_already_optimal():
    r_prev = np.array([1.0, -2.0, 0.5])
    a0, a1 = aa1_alpha(r_prev, np.zeros(3))
    assert a0 == pytest.approx(0.0)
    assert a1 == pytest.approx(1.0)


def test_alpha_antisymmetric_pair():
    r = np.array([0.3, -1.1, 2.0])
    a0, a1 = aa1_alpha(-r, r)
    assert a0 == pytest.approx(0.5)
    assert a1 == pytest.approx(0.5)
    assert np.allclose(a0 * (-r) + a1 * r, 0.0)


def test_alpha_degenerate_pair():
    r = np.array([1.0, 2.0])
    with pytest.raises(DegenerateResidualPair):
        aa1_alpha(r, r.copy())


def test_alpha_length_mismatch():
    with pytest.raises(ValueError):
        aa1_alpha(np.ones(3), np.ones(4))


def test_alpha_sums_to_one_and_projection_inequality():
    rng = np.random.RandomState(12)
    for _ in range(200):
        n = rng.randint(2, 40)
        rp = rng.randn(n)
        rc = rng.randn(n)
        a0, a1 = aa1_alpha(rp, rc)
        assert a0 + a1 == pytest.approx(1.0, abs=1e-15)
        combo = np.linalg.norm(a0 * rp + a1 * rc)
        best_single = min(np.linalg.norm(rp), np.linalg.norm(rc))
        assert combo <= best_single + 1e-12


def test_aa_step_m0_is_plain_fixed_point():
    state = AAState(m=0)
    x = np.array([1.0, 2.0])
    ax = np.array([0.3, 0.7])
    out = aa_step(state, x, ax)
    assert np.array_equal(out, ax)


def test_aa_step_worked_scalar_example():
    # A(x) = 0.5 x + 1: x0=0, A(x0)=1, r0=1; x1=1, A(x1)=1.5, r1=0.5
    # alpha0 = 0.5*(-0.5)/0.25 = -1 -> x2 = -1*1 + 2*1.5 = 2, the fixed point
    state = AAState(m=1)
    out1 = aa_step(state, np.array([0.0]), np.array([1.0]))
    assert out1[0] == pytest.approx(1.0)
    out2 = aa_step(state, np.array([1.0]), np.array([1.5]))
    assert out2[0] == pytest.approx(2.0, abs=1e-14)


def test_aa1_secant_exactness_random_affine():
    rng = np.random.RandomState(77)
    for _ in range(50):
        a = rng.uniform(-0.95, 0.95)
        b = rng.uniform(-3, 3)
        fixed = b / (1 - a)
        state = AAState(m=1)
        x = rng.uniform(-5, 5)
        ax = a * x + b
        x1 = aa_step(state, np.array([x]), np.array([ax]))[0]
        x2 = aa_step(state, np.array([x1]), np.array([a * x1 + b]))[0]
        assert x2 == pytest.approx(fixed, abs=1e-9 * max(1, abs(fixed)))


def test_aa_step_degenerate_falls_back():
    state = AAState(m=1)
    aa_step(state, np.array([1.0, 1.0]), np.array([2.0, 2.0]))
    # same (x, Ax) again: residual difference is zero -> plain step
    out = aa_step(state, np.array([1.0, 1.0]), np.array([2.0, 2.0]))
    assert np.array_equal(out, np.array([2.0, 2.0]))
    assert state.fallbacks == 1


def test_aa_m2_converges_on_linear_map():
    rng = np.random.RandomState(5)
    A = np.array([[0.5, 0.2], [-0.1, 0.6]])
    b = np.array([1.0, -0.5])
    fixed = np.linalg.solve(np.eye(2) - A, b)
    state = AAState(m=2)
    x = rng.randn(2)
    for _ in range(12):
        x = aa_step(state, x, A @ x + b)
    assert np.allclose(x, fixed, atol=1e-10)


def test_aa_beta_half_relaxation():
    state = AAState(m=1, beta=0.5)
    x = np.array([0.0])
    ax = np.array([1.0])
    out = aa_step(state, x, ax)
    # single history entry: plain step regardless of beta
    assert out[0] == pytest.approx(1.0)
    out2 = aa_step(state, np.array([1.0]), np.array([1.5]))
    # alpha = (-1, 2); mixed = 0.5*(alpha@xs) + 0.5*(alpha@axs)
    assert out2[0] == pytest.approx(0.5 * 2.0 + 0.5 * 2.0)


def test_flatten_roundtrip():
    rng = np.random.RandomState(1)
    phi = rng.randn(3, 5, 2)
    J = rng.randn(3, 5, 2)
    vec = flatten_state(phi, J)
    phi2, J2 = unflatten_state(vec, 3, 5)
    assert np.array_equal(phi, phi2)
    assert np.array_equal(J, J2)


def test_flatten_lengths():
    assert flatten_state(np.zeros((1, 1, 2)), np.zeros((1, 1, 2))).size == 4
    assert flatten_state(np.zeros((10, 128, 2)),
                         np.zeros((10, 128, 2))).size == 5120


def test_unflatten_length_mismatch():
    with pytest.raises(ValueError):
        unflatten_state(np.zeros(10), 2, 3)


def test_flatten_order_is_group_cell_coeff_field():
    phi = np.zeros((1, 2, 2))
    J = np.zeros((1, 2, 2))
    phi[0, 0] = [1, 2]   # cell 0: avg 1, slope 2
    J[0, 0] = [3, 4]
    phi[0, 1] = [5, 6]
    J[0, 1] = [7, 8]
    vec = flatten_state(phi, J)
    assert list(vec) == [1, 3, 2, 4, 5, 7, 6, 8]
