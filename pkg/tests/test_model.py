import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsma_leo.model import (SPEED_OF_LIGHT, AllocationState, Assignment, AssignmentError,
                            ChannelSet, ModelError, SystemConfig, channel_gain, common_rate,
                            common_sinr, evaluate, free_space_loss, private_rate)


# ---------------------------------------------------------------------------
# straight-line rate oracle
# ---------------------------------------------------------------------------

def oracle_rates(config, channels, alloc, x):
    """Rates from the defining expressions, one scalar at a time."""
    M, U, K = x.shape
    W, s2 = config.bandwidth, config.noise_variance
    common = np.zeros((M, K))
    private = np.zeros((M, U, K))
    for m in range(M):
        for k in range(K):
            users = [u for u in range(U) if x[m, u, k] == 1]
            if not users:
                continue
            p = alloc.p[m, k]
            worst = math.inf
            for u in users:
                h = channels.h[m, u, k]
                all_private = sum(alloc.eta[m, j, k] for j in users)
                sinr_c = h * alloc.eta0[m, k] * p / (channels.ip[m, u, k] + h * all_private * p + s2)
                worst = min(worst, sinr_c)
                others = sum(alloc.eta[m, j, k] for j in users if j != u)
                sinr_p = h * alloc.eta[m, u, k] * p / (channels.ip[m, u, k] + h * others * p + s2)
                private[m, u, k] = W * math.log2(1 + sinr_p)
            common[m, k] = W * math.log2(1 + worst)
    per_user = np.zeros(U)
    for m in range(M):
        for u in range(U):
            for k in range(K):
                if x[m, u, k]:
                    per_user[u] += alloc.c[m, u, k] + private[m, u, k]
    return common, private, per_user


def random_state(rng, M=3, U=6, K=3):
    x = np.zeros((M, U, K), dtype=np.int8)
    for u in range(U):
        x[rng.integers(M), u, rng.integers(K)] = 1
    channels = ChannelSet(h=rng.uniform(0.1, 10, (M, U, K)), f=rng.uniform(0.1, 1, (M, K)),
                          ip=rng.uniform(0, 4, (U, K)))
    eta0 = rng.uniform(0, 0.5, (M, K))
    eta = rng.uniform(0, 0.5, (M, U, K)) * x
    alloc = AllocationState(p=rng.uniform(0, 5, (M, K)), eta0=eta0, eta=eta,
                            c=rng.uniform(0, 1e6, (M, U, K)) * x)
    config = SystemConfig(num_beams=M, num_users=U, num_subcarriers=K)
    return config, channels, alloc, Assignment(x)


# ---------------------------------------------------------------------------
# channel model
# ---------------------------------------------------------------------------

def test_free_space_loss_unit_argument():
    f = 19e9
    assert free_space_loss(SPEED_OF_LIGHT / (4 * math.pi * f), f) == pytest.approx(1.0, rel=1e-14)


def test_free_space_loss_leo_default():
    assert free_space_loss(600e3, 19e9) == pytest.approx(2.2833168084314566e17, rel=1e-12)


def test_free_space_loss_square_law():
    assert free_space_loss(2e5, 1e9) / free_space_loss(1e5, 1e9) == pytest.approx(4.0, rel=1e-15)


@pytest.mark.parametrize("d,f", [(0, 1e9), (-1, 1e9), (1, 0), (1, -5)])
def test_free_space_loss_rejects_nonpositive(d, f):
    with pytest.raises(ModelError):
        free_space_loss(d, f)


def test_channel_gain_examples():
    assert channel_gain((1, 1), 1) == 1.0
    assert channel_gain((10, 10), 1e4) == pytest.approx(1e-2, rel=1e-15)
    with pytest.raises(ModelError):
        channel_gain((1, 1), 0)


@given(st.floats(1e-3, 1e6), st.floats(1e-3, 1e6))
def test_channel_gain_decreasing_in_loss(a, b):
    lo, hi = sorted((a, b))
    assert channel_gain((3.0, 7.0), lo) >= channel_gain((3.0, 7.0), hi)


# ---------------------------------------------------------------------------
# config and containers
# ---------------------------------------------------------------------------

def test_default_config_values():
    c = SystemConfig()
    assert (c.num_beams, c.num_subcarriers, c.num_users) == (5, 5, 10)
    assert (c.interference_threshold, c.bandwidth, c.min_rate, c.total_power) == (2.0, 10e6, 1e6, 50.0)
    assert c.carrier_frequency == 19e9


@pytest.mark.parametrize("field,value", [("num_beams", 0), ("num_users", 1.5),
                                         ("total_power", 0.0), ("noise_variance", -1.0),
                                         ("bandwidth", math.inf)])
def test_config_validation(field, value):
    with pytest.raises(ModelError):
        SystemConfig(**{field: value})


def test_config_roundtrip_and_unknown_field():
    c = SystemConfig(total_power=20.0)
    assert SystemConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ModelError):
        SystemConfig.from_dict({"bogus": 1})


def test_channel_set_geo_decomposition():
    g = np.full((1, 2, 1), 2.0)
    ch = ChannelSet.from_geo(h=np.ones((1, 2, 1)), f=np.ones((1, 1)), g=g, q=[2.0])
    assert np.all(ch.ip == 4.0)
    assert ChannelSet.from_dict(ch.to_dict()).fingerprint() == ch.fingerprint()


def test_channel_set_validation():
    with pytest.raises(ModelError):
        ChannelSet(h=-np.ones((1, 1, 1)), f=np.ones((1, 1)), ip=np.zeros((1, 1)))
    with pytest.raises(ModelError):
        ChannelSet(h=np.ones((1, 1, 1)), f=np.ones((2, 1)), ip=np.zeros((1, 1)))


def test_assignment_checks():
    with pytest.raises(AssignmentError):
        Assignment(np.full((1, 1, 1), 2))
    x = np.zeros((2, 2, 2), dtype=int)
    x[0, 0, 0] = 1
    a = Assignment(x)
    with pytest.raises(AssignmentError):
        a.check()
    x[1, 1, 1] = 1
    Assignment(x).check()
    assert Assignment(x).active_slots() == [(0, 0), (1, 1)]


# ---------------------------------------------------------------------------
# rate expressions
# ---------------------------------------------------------------------------

def single_link(h=1.0, p=1.0, eta0=0.5, eta=0.5, ip=0.0, noise=0.5):
    config = SystemConfig(num_beams=1, num_subcarriers=1, num_users=1, noise_variance=noise)
    channels = ChannelSet(h=[[[h]]], f=[[1.0]], ip=[[ip]])
    alloc = AllocationState(p=np.array([[p]]), eta0=np.array([[eta0]]),
                            eta=np.array([[[eta]]]), c=np.zeros((1, 1, 1)))
    return config, channels, alloc, Assignment(np.ones((1, 1, 1)))


def test_common_sinr_hand_value():
    config, channels, alloc, x = single_link()
    assert common_sinr(config, channels, alloc, x, 0, 0, 0) == pytest.approx(0.5, rel=1e-15)


def test_common_sinr_zero_split_and_noise_monotone():
    config, channels, alloc, x = single_link(eta0=0.0)
    assert common_sinr(config, channels, alloc, x, 0, 0, 0) == 0.0
    prev = math.inf
    for noise in (0.1, 0.2, 0.5, 1.0):
        config, channels, alloc, x = single_link(noise=noise)
        val = common_sinr(config, channels, alloc, x, 0, 0, 0)
        assert val < prev
        prev = val


def two_user_slot(h=(1.0, 1.0), eta=(0.25, 0.25), eta0=0.5, p=4.0, ip=1.0, noise=1.0):
    config = SystemConfig(num_beams=1, num_subcarriers=1, num_users=2, noise_variance=noise)
    channels = ChannelSet(h=np.array(h).reshape(1, 2, 1), f=[[1.0]], ip=np.full((2, 1), ip))
    alloc = AllocationState(p=np.array([[p]]), eta0=np.array([[eta0]]),
                            eta=np.array(eta, float).reshape(1, 2, 1), c=np.zeros((1, 2, 1)))
    return config, channels, alloc, Assignment(np.ones((1, 2, 1)))


def test_common_rate_uses_slot_minimum():
    # SINRs {1, 3}: h_u * 0.5 * 4 / (1 + 1 + h_u * 0.5 * 4) with all eta on the common stream
    config, channels, alloc, x = two_user_slot(h=(1.0, 3.0), eta=(0.0, 0.0), eta0=0.5, p=1.0,
                                               ip=0.0, noise=0.5)
    sinrs = [common_sinr(config, channels, alloc, x, 0, u, 0) for u in (0, 1)]
    assert sinrs == pytest.approx([1.0, 3.0], rel=1e-15)
    assert common_rate(config, channels, alloc, x, 0, 0) == pytest.approx(config.bandwidth, rel=1e-15)


def test_common_rate_symmetric_users_match_single_user():
    config, channels, alloc, x = two_user_slot()
    sinr = common_sinr(config, channels, alloc, x, 0, 0, 0)
    assert common_rate(config, channels, alloc, x, 0, 0) == pytest.approx(
        config.bandwidth * math.log2(1 + sinr), rel=1e-15)


def test_common_rate_empty_slot_is_zero():
    config, channels, alloc, x = two_user_slot()
    config = config.replace(num_subcarriers=2)
    channels = ChannelSet(h=np.ones((1, 2, 2)), f=np.ones((1, 2)), ip=np.ones((2, 2)))
    alloc = AllocationState.zeros(1, 2, 2)
    xx = np.zeros((1, 2, 2))
    xx[0, :, 0] = 1
    assert common_rate(config, channels, alloc, Assignment(xx), 0, 1) == 0.0


def test_private_rate_unit_sinr_and_zero_split():
    config, channels, alloc, x = single_link(h=2.0, p=1.0, eta=0.75, ip=1.0, noise=0.5)
    assert private_rate(config, channels, alloc, x, 0, 0, 0) == pytest.approx(config.bandwidth, rel=1e-15)
    config, channels, alloc, x = single_link(eta=0.0)
    assert private_rate(config, channels, alloc, x, 0, 0, 0) == 0.0


def test_private_interference_excludes_common_stream():
    # hand expansion for user 0: h0 eta0' p / (I_p + sigma^2 + h0 eta1 p), no eta_common term
    config, channels, alloc, x = two_user_slot(h=(2.0, 3.0), eta=(0.2, 0.3), eta0=0.5, p=4.0)
    expected = 2.0 * 0.2 * 4.0 / (1.0 + 1.0 + 2.0 * 0.3 * 4.0)
    got = private_rate(config, channels, alloc, x, 0, 0, 0)
    assert got == pytest.approx(config.bandwidth * math.log2(1 + expected), rel=1e-14)
    alloc.eta0[0, 0] = 0.0
    assert private_rate(config, channels, alloc, x, 0, 0, 0) == got
    config, channels, alloc, x = two_user_slot(h=(1.0, 1.0), eta=(0.3, 0.3))
    assert private_rate(config, channels, alloc, x, 0, 0, 0) == private_rate(config, channels, alloc, x, 0, 1, 0)


def test_evaluate_matches_straight_line_oracle(rng):
    for _ in range(25):
        config, channels, alloc, x = random_state(rng)
        report = evaluate(config, channels, alloc, x)
        common, private, per_user = oracle_rates(config, channels, alloc, x.x)
        np.testing.assert_allclose(report.common_rate, common, rtol=1e-9)
        np.testing.assert_allclose(report.private_rate, private, rtol=1e-9)
        np.testing.assert_allclose(report.per_user_total, per_user, rtol=1e-9)
        assert report.sum_rate == pytest.approx(per_user.sum(), rel=1e-9)


def test_evaluate_zero_power_and_bandwidth_scaling(rng):
    config, channels, alloc, x = random_state(rng)
    alloc.p[:] = 0
    alloc.c[:] = 0
    report = evaluate(config, channels, alloc, x)
    assert report.sum_rate == 0.0
    assert np.all(report.slack["C1"] < 0)
    config, channels, alloc, x = random_state(rng)
    a = evaluate(config, channels, alloc, x)
    alloc2 = alloc.copy()
    alloc2.c = alloc.c * 2
    b = evaluate(config.replace(bandwidth=2 * config.bandwidth), channels, alloc2, x)
    assert b.sum_rate == pytest.approx(2 * a.sum_rate, rel=1e-12)
    np.testing.assert_allclose(b.common_rate, 2 * a.common_rate, rtol=1e-12)


def test_evaluate_is_pure_and_rejects_broken_assignment(rng):
    config, channels, alloc, x = random_state(rng)
    a = evaluate(config, channels, alloc, x)
    b = evaluate(config, channels, alloc, x)
    assert a.sum_rate == b.sum_rate and np.array_equal(a.private_rate, b.private_rate)
    bad = x.x.copy()
    bad[:, 0, :] = 0
    with pytest.raises(AssignmentError):
        evaluate(config, channels, alloc, Assignment(bad))


def test_slacks_and_violation():
    config, channels, alloc, x = two_user_slot(p=60.0, eta=(0.6, 0.6), eta0=0.2)
    report = evaluate(config, channels, alloc, x)
    assert report.slack["C4"][0, 0] == pytest.approx(-0.4)
    assert report.slack["C5"] == pytest.approx(-10.0)
    assert report.slack["C3"][0, 0] == pytest.approx(2.0 - 60.0)
    assert report.max_violation(config) == pytest.approx(29.0)


@given(st.integers(0, 2**32 - 1))
def test_rates_nonnegative_and_finite(seed):
    config, channels, alloc, x = random_state(np.random.default_rng(seed))
    report = evaluate(config, channels, alloc, x)
    for arr in (report.common_rate, report.private_rate, report.per_user_total):
        assert np.all(np.isfinite(arr)) and np.all(arr >= 0)
