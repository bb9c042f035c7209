import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import (grid_argmax, power_lagrangian, printed_cubic_terms, random_slot,
                     simplex_projection_bisect, split_lagrangian)
from rsma_leo import kkt
from rsma_leo.kkt import (LN2, CubicCoeffs, KKTError, QuadCoeffs, printed_cubic_coeffs,
                          printed_quad_coeffs, project_splits, select_power_root,
                          simplex_projection, solve_cubic, solve_eta, solve_eta0)
from rsma_leo.model import AllocationState, Assignment, ChannelSet, SystemConfig
from rsma_leo.solver import DualState


# ---------------------------------------------------------------------------
# helpers: run the library kernels on an oracle slot instance
# ---------------------------------------------------------------------------

def lib_poly(s):
    w = (1 + s.lam1) * s.tau / LN2
    wc = s.lam2 * s.tau_c / LN2
    return kkt.slot_power_poly(s.h, s.base, s.eta, s.n, w, wc, s.price, s.hc, s.ref_c)


def lib_best_power(s):
    return kkt.slot_best_power(s.h, s.base, s.eta, s.eta0, s.n, s.tau, s.omega, s.tau_c,
                               s.omega_c, s.hc, s.base_c, s.ref_c, s.lam1, s.lam2, s.price,
                               s.p_max)


def lib_eta_quad(s):
    w = (1 + s.lam1) * s.tau / LN2
    lam4e = s.lam4 + s.lam2 * s.tau_c / LN2 * s.hc * s.p / s.ref_c
    mu = np.zeros((3, s.n))
    kkt.slot_eta_quad(s.h, s.base, s.eta, s.n, w, lam4e, s.p, mu[0], mu[1], mu[2])
    return mu


def selected_power(s):
    roots = kkt.real_roots(lib_poly(s)[::-1])
    return select_power_root(roots, lambda p: float(power_lagrangian(s, p)), s.p_max)


# ---------------------------------------------------------------------------
# printed coefficients
# ---------------------------------------------------------------------------

def test_printed_cubic_hand_scalars():
    # h = 1, eta = 0.25, I_p = 1, sigma^2 = 1, lam5 = 1, other multipliers 0, gamma = 1, W = 1
    c = printed_cubic_coeffs([1, 1], [0.25, 0.25], [1, 1], 1.0, 1.0, [1, 1], 1.0, [0, 0],
                             0.0, 0.0, 1.0, 1.0, 1.0)
    assert c.as_array() == pytest.approx([0.125, 2.0, 6.0, -16.0], abs=1e-12)


def test_printed_cubic_vanishes_without_multipliers_and_weights():
    c = printed_cubic_coeffs([2, 3], [0.3, 0.4], [1, 1], 1.0, 0.5, [0, 0], 0.0, [0, 0],
                             0.0, 0.0, 0.0, 0.7, 1.0)
    assert c.as_array().tolist() == [0.0, 0.0, 0.0, 0.0]


def random_printed_inputs(rng, n):
    return dict(h=rng.uniform(0.01, 10, n), eta=rng.uniform(0, 1, n), x=np.ones(n),
                ip=rng.uniform(0, 5, n), noise=rng.uniform(0.01, 1), gamma=rng.uniform(0, 3, n),
                gamma_c=rng.uniform(0, 3), lam1=rng.uniform(0, 2, n), lam2=rng.uniform(0, 2),
                lam3=rng.uniform(0, 2), lam5=rng.uniform(0, 2), f=rng.uniform(0.05, 1),
                W=rng.uniform(0.5, 2))


def test_printed_cubic_matches_termwise_oracle(rng):
    for _ in range(1000):
        a = random_printed_inputs(rng, int(rng.integers(2, 5)))
        got = printed_cubic_coeffs(a["h"], a["eta"], a["x"], a["ip"], a["noise"], a["gamma"],
                                   a["gamma_c"], a["lam1"], a["lam2"], a["lam3"], a["lam5"],
                                   a["f"], a["W"]).as_array()
        want = printed_cubic_terms(a["h"], a["eta"], a["x"], a["ip"], a["noise"], a["gamma"],
                                   a["gamma_c"], a["lam1"], a["lam2"], a["lam3"], a["lam5"],
                                   a["f"], a["W"])
        scale = max(1.0, float(np.max(np.abs(want))))
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-10 * scale)
        assert got[3] <= 0


def test_printed_cubic_multiplier_scaling(rng):
    a = random_printed_inputs(rng, 2)

    def coeffs(alpha):
        return printed_cubic_coeffs(a["h"], a["eta"], a["x"], a["ip"], a["noise"], a["gamma"],
                                    a["gamma_c"], alpha * a["lam1"], alpha * a["lam2"],
                                    alpha * a["lam3"], alpha * a["lam5"], a["f"], a["W"]).as_array()

    c0, c1, c3 = coeffs(0.0), coeffs(1.0), coeffs(3.0)
    assert c3[0] == pytest.approx(3 * c1[0], rel=1e-12)
    assert c3[1] == pytest.approx(3 * c1[1], rel=1e-12)
    assert c3[2] - c0[2] == pytest.approx(3 * (c1[2] - c0[2]), rel=1e-12)


def test_printed_quad_hand_scalars():
    q = printed_quad_coeffs(0, [1, 2], [1, 1], 1.0, 1.0, [1, 0.5], 0.5, 2.0, 1.0, 1.0)
    assert (q.mu1, q.mu2, q.mu3) == pytest.approx((-2.0, 52.0, 8.0), abs=1e-12)


def test_printed_quad_zero_weights_gives_zero_split():
    q = printed_quad_coeffs(0, [1, 2], [1, 1], 1.0, 1.0, [0, 0], 0.0, 3.0, 2.0, 1.0)
    assert q.mu1 == pytest.approx(-6.0)
    assert q.mu2 == pytest.approx(36.0)
    assert q.mu3 > 0
    assert solve_eta(q)[0] == pytest.approx(0.0, abs=1e-15)


def test_printed_quad_equals_two_user_stationarity(rng):
    # With lam1 of the co-user and the common multiplier zero the printed sums
    # coincide with the exact two-user condition used by the solver.
    for _ in range(200):
        s = random_slot(rng, 2)
        s.lam1[1] = 0.0
        s.lam2 = 0.0
        mu = lib_eta_quad(s)
        gamma = s.tau / LN2
        q = printed_quad_coeffs(0, s.h, np.ones(2), s.base - 0.3, 0.3, gamma, s.lam1[0], s.lam4,
                                s.p, 1.0)
        assert (q.mu1, q.mu2, q.mu3) == pytest.approx(tuple(mu[:, 0]), rel=1e-9)


# ---------------------------------------------------------------------------
# model-level entry points
# ---------------------------------------------------------------------------

def slot_problem(n_users=2):
    config = SystemConfig(num_beams=1, num_subcarriers=2, num_users=n_users + 1)
    h = np.full((1, n_users + 1, 2), 5.0)
    channels = ChannelSet(h=h, f=np.full((1, 2), 0.5), ip=np.full((n_users + 1, 2), 4.0))
    x = np.zeros((1, n_users + 1, 2), dtype=int)
    x[0, :n_users, 0] = 1
    x[0, n_users, 1] = 1
    alloc = AllocationState(p=np.array([[2.0, 3.0]]), eta0=np.array([[0.4, 0.5]]),
                            eta=np.full((1, n_users + 1, 2), 0.5 / n_users) * x,
                            c=np.zeros((1, n_users + 1, 2)))
    duals = DualState.initial(1, n_users + 1, 2, 0.3)
    return config, channels, duals, Assignment(x), alloc


def test_cubic_coeffs_shared_and_single_slots():
    config, channels, duals, x, alloc = slot_problem()
    shared = kkt.cubic_coeffs(config, channels, duals, x, alloc, 0, 0)
    assert all(math.isfinite(v) for v in shared.as_array())
    assert shared.t0 <= 0
    single = kkt.cubic_coeffs(config, channels, duals, x, alloc, 0, 1)
    assert single.t3 == 0.0
    roots = solve_cubic(single)
    positive = [r for r in roots if r > 0]
    assert len(positive) == 1


def test_cubic_coeffs_inactive_slot_raises():
    config, channels, duals, x, alloc = slot_problem()
    xx = x.x.copy()
    xx[0, 2, 1] = 0
    xx[0, 2, 0] = 1
    with pytest.raises(KKTError):
        kkt.cubic_coeffs(config, channels, duals, Assignment(xx), alloc, 0, 1)


def test_quad_coeffs_paths():
    config, channels, duals, x, alloc = slot_problem()
    q0 = kkt.quad_coeffs(config, channels, duals, x, alloc, 0, 0, 0)
    q1 = kkt.quad_coeffs(config, channels, duals, x, alloc, 0, 1, 0)
    assert q0.mu3 > 0
    assert solve_eta(q0)[0] == pytest.approx(solve_eta(q1)[0], rel=1e-12)   # symmetric users
    single = kkt.quad_coeffs(config, channels, duals, x, alloc, 0, 2, 1)
    assert single.mu2 == 0.0 and single.mu3 == duals.lambda4[0, 1]
    with pytest.raises(KKTError):
        kkt.quad_coeffs(config, channels, duals, x, alloc, 0, 2, 0)
    duals.lambda4[0, 0] = 0.0
    with pytest.raises(KKTError):
        kkt.quad_coeffs(config, channels, duals, x, alloc, 0, 0, 0)


# ---------------------------------------------------------------------------
# cubic roots
# ---------------------------------------------------------------------------

def test_solve_cubic_examples():
    assert solve_cubic((1, 0, -1, 0)) == pytest.approx([-1, 0, 1], abs=1e-10)
    assert solve_cubic((1, -6, 11, -6)) == pytest.approx([1, 2, 3], abs=1e-10)
    assert solve_cubic(CubicCoeffs(0, 1, -4, 4)) == pytest.approx([2], abs=1e-7)
    assert solve_cubic((0, 0, 2, -1)) == pytest.approx([0.5], abs=1e-15)
    assert solve_cubic((1, 0, 1, 0)) == pytest.approx([0.0], abs=1e-12)


def test_solve_cubic_rejects_zero_and_bad_shape():
    with pytest.raises(KKTError):
        solve_cubic((0, 0, 0, 0))
    with pytest.raises(KKTError):
        solve_cubic((1, 2, 3))


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0.1, 10))
def test_solve_cubic_recovers_planted_roots(roots, lead):
    roots = sorted(roots)
    if min(b - a for a, b in zip(roots, roots[1:])) < 1e-2:
        return
    coeffs = lead * np.poly(roots)
    got = solve_cubic(coeffs)
    assert got == pytest.approx(roots, abs=1e-8 * max(1.0, max(map(abs, roots))))


@given(st.lists(st.floats(-1e3, 1e3), min_size=4, max_size=4))
def test_cubic_root_residuals(coeffs):
    if not any(coeffs):
        return
    for r in solve_cubic(coeffs):
        value = ((coeffs[0] * r + coeffs[1]) * r + coeffs[2]) * r + coeffs[3]
        scale = max(abs(c) * abs(r) ** (3 - i) for i, c in enumerate(coeffs))
        assert abs(value) <= 1e-12 * max(scale, 1.0) + 1e-8 * max(1.0, abs(coeffs[3]))


# ---------------------------------------------------------------------------
# power selection
# ---------------------------------------------------------------------------

def test_select_power_root_box_cases():
    assert select_power_root([1.0, 2.0], lambda p: p, 0.0) == 0.0
    # all roots negative: the better box end wins
    assert select_power_root([-3.0, -1.0], lambda p: -p, 5.0) == 0.0
    assert select_power_root([-3.0, -1.0], lambda p: p, 5.0) == 5.0
    # interior root strictly better than both ends
    assert select_power_root([-1.0, 2.0, 9.0], lambda p: -(p - 2.0) ** 2, 5.0) == 2.0
    # ties go to the smaller power
    assert select_power_root([2.0], lambda p: 1.0, 5.0) == 0.0


def test_power_step_matches_grid_search(rng):
    for n in (1, 2, 3):
        for _ in range(150):
            s = random_slot(rng, n)
            p_grid, _, cell = grid_argmax(lambda p: power_lagrangian(s, p), 0.0, s.p_max)
            p_sel = selected_power(s)
            assert abs(p_sel - p_grid) <= cell * (1 + 1e-9)
            assert lib_best_power(s) == pytest.approx(p_sel, rel=1e-9, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_power_step_stays_in_box(seed):
    s = random_slot(np.random.default_rng(seed), 2)
    p = lib_best_power(s)
    assert 0.0 <= p <= s.p_max


def test_interior_root_is_stationary(rng):
    checked = 0
    for _ in range(400):
        s = random_slot(rng, 2)
        p = selected_power(s)
        if not 0 < p < s.p_max:
            continue
        step = 1e-6 * p
        deriv = (power_lagrangian(s, p + step) - power_lagrangian(s, p - step)) / (2 * step)
        assert abs(deriv) < 1e-4
        checked += 1
    assert checked > 50


def test_stationarity_polynomial_sign_matches_slope(rng):
    # the polynomial is negative exactly where the Lagrangian increases
    for _ in range(100):
        s = random_slot(rng, 2)
        poly = lib_poly(s)
        for p in np.geomspace(1e-3, 100, 25):
            step = 1e-6 * p
            slope = (power_lagrangian(s, p + step) - power_lagrangian(s, p - step)) / (2 * step)
            value = np.polyval(poly[::-1], p)
            if abs(slope) > 1e-6:
                assert np.sign(value) == -np.sign(slope)


# ---------------------------------------------------------------------------
# split closed forms
# ---------------------------------------------------------------------------

def test_solve_eta_examples():
    assert solve_eta(QuadCoeffs(0.5 * 4.0, 0.0, 4.0)) == (0.5, False)
    eta, clamped = solve_eta(QuadCoeffs(10.0, 1.0, 2.0))   # branches 5.5 and 4.5
    assert (eta, clamped) == (1.0, True)
    eta, clamped = solve_eta(QuadCoeffs(-10.0, 1.0, 2.0))  # both negative
    assert (eta, clamped) == (0.0, True)
    assert solve_eta(QuadCoeffs(0.8, 0.04, 1.0)) == (pytest.approx(1.0), False)
    with pytest.raises(KKTError):
        solve_eta(QuadCoeffs(1.0, -1.0, 1.0))
    with pytest.raises(KKTError):
        solve_eta(QuadCoeffs(1.0, 1.0, 0.0))


def test_solve_eta_prefers_larger_feasible_branch():
    eta, clamped = solve_eta(QuadCoeffs(1.0, 0.25, 2.0))   # branches 0.75 and 0.25
    assert (eta, clamped) == (0.75, False)


@given(st.floats(-1e3, 1e3), st.floats(0, 1e6), st.floats(1e-6, 1e3) | st.floats(-1e3, -1e-6))
def test_solve_eta_in_unit_interval(mu1, mu2, mu3):
    eta, _ = solve_eta(QuadCoeffs(mu1, mu2, mu3))
    assert 0.0 <= eta <= 1.0


def test_split_step_matches_grid_search(rng):
    for _ in range(500):
        s = random_slot(rng, 2)
        mu = lib_eta_quad(s)
        for u in range(2):
            eta, _ = solve_eta(QuadCoeffs(*mu[:, u]))
            best, _, cell = grid_argmax(lambda e: split_lagrangian(s, u, e), 0.0, 1.0)
            assert abs(eta - best) <= cell * (1 + 1e-9)


def test_single_user_split_is_weight_ratio():
    mu1, mu2, mu3 = np.zeros(1), np.zeros(1), np.zeros(1)
    kkt.slot_eta_quad(np.array([3.0]), np.array([1.0]), np.array([0.5]), 1, np.array([0.6]),
                      2.0, 1.5, mu1, mu2, mu3)
    assert solve_eta(QuadCoeffs(mu1[0], mu2[0], mu3[0]))[0] == pytest.approx(0.3)


def test_solve_eta0_examples():
    assert solve_eta0(0.0, 1.0, 2.0, 1.0) == 0.0
    assert solve_eta0(0.5, 1.0, 2.0, 1.0) == 1.0
    assert solve_eta0(0.1, 1.0, 2.0, 1.0) == pytest.approx(0.2)
    assert solve_eta0(0.2, 1.0, 2.0, 1.0) == pytest.approx(2 * 0.2)
    assert solve_eta0(5.0, 1.0, 2.0, 1.0) == 1.0
    assert solve_eta0(1.0, 0.0, 2.0, 1.0) is None
    assert solve_eta0(1.0, kkt.LAMBDA4_FLOOR / 2, 2.0, 1.0) is None


def test_project_splits_rescales_only_when_over_budget():
    eta0, eta = project_splits(np.array([0.6, 0.2]), np.array([[0.6, 0.2], [0.1, 0.1]]))
    assert eta0 == pytest.approx([0.6 / 1.4, 0.2])
    assert eta == pytest.approx(np.array([[0.6, 0.2], [0.1, 0.1]]) / np.array([[1.4], [1.0]]))


@given(st.lists(st.floats(-2, 5), min_size=1, max_size=8), st.floats(0, 4))
def test_simplex_projection_matches_bisection(v, cap):
    got = simplex_projection(np.array(v), cap)
    want = simplex_projection_bisect(v, cap)
    np.testing.assert_allclose(got, want, atol=1e-9)
    assert np.all(got >= 0) and got.sum() <= cap + 1e-12
