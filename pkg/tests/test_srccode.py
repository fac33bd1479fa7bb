import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifcran import lattice, srccode
from ifcran.exceptions import CalibrationError, ContractError, RefusalError
from ifcran.model import ChannelMatrix, Scenario, covariance

import oracles
from conftest import random_channel

K2 = np.array([[2.0, 1.0], [1.0, 2.0]])
K3 = np.array([[4.0, 1.5, 0.5], [1.5, 3.0, 1.0], [0.5, 1.0, 2.5]])


def channel_cov(seed, L=4, K=2, snr_db=25.0):
    return covariance(random_channel(np.random.default_rng(seed), L, K, snr_db))


# SUC

def test_rate_suc_examples():
    assert srccode.rate_suc([math.sqrt(2)], 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    assert srccode.rate_suc([0.0, 0.0], 50.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    P = 316.23
    assert srccode.rate_suc([1, 1, 1], P, 0.5) == pytest.approx(
        0.5 * math.log2(1 + (3 * P + 1) / 0.5), abs=1e-12)
    with pytest.raises(ContractError):
        srccode.rate_suc([1.0], 1.0, 0.0)


def test_distortion_suc_examples():
    assert srccode.distortion_suc([math.sqrt(3)], 1.0, 1.0) == pytest.approx(4 / 3)
    assert srccode.distortion_suc([math.sqrt(2)], 1.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(CalibrationError):
        srccode.distortion_suc([1.0], 1.0, 0.0)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 8.0))
def test_suc_round_trip(seed, c):
    h = np.random.default_rng(seed).standard_normal(3)
    d = srccode.distortion_suc(h, 316.23, c)
    assert srccode.rate_suc(h, 316.23, d) == pytest.approx(c, abs=1e-12)


# Wyner-Ziv

def test_rate_wz_two_by_two_example():
    r = srccode.rate_wz(K2, [1.0, 1.0], (0, 1))
    np.testing.assert_allclose(r, [0.5 * math.log2(3), 0.5 * math.log2(8 / 3)], atol=1e-12)
    assert r[1] <= r[0]


def test_rate_wz_single_basestation_is_suc():
    assert srccode.rate_wz(np.array([[5.0]]), [0.7], (0,))[0] == pytest.approx(
        0.5 * math.log2(1 + 5.0 / 0.7))


def test_rate_wz_rejects_bad_input():
    with pytest.raises(ContractError):
        srccode.rate_wz(K2, [1.0, 0.0], (0, 1))
    with pytest.raises(ContractError):
        srccode.rate_wz(K2, [1.0, 1.0], (0, 0))


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_rate_wz_matches_conditional_variances_and_telescopes(seed, L):
    rng = np.random.default_rng(seed)
    K = covariance(random_channel(rng, L, 2, 20.0))
    d = rng.uniform(0.05, 5.0, L)
    order = tuple(int(i) for i in rng.permutation(L))
    r = srccode.rate_wz(K, d, order)
    np.testing.assert_allclose(r, oracles.wz_rates_conditional(K, d, order), atol=1e-9)
    total = sum(r[l] + 0.5 * math.log2(d[order[l]]) for l in range(L))
    assert total == pytest.approx(0.5 * np.linalg.slogdet(K + np.diag(d))[1] / math.log(2),
                                  abs=1e-9)


def test_calibrate_wz_single_basestation_is_suc():
    cal = srccode.calibrate_wz(np.array([[3.0]]), 1.0, "exhaustive")
    assert cal.d[0] == pytest.approx(1.0)


def test_calibrate_wz_two_by_two_fixed_order():
    cal = srccode.calibrate_wz(K2, 1.0, (0, 1))
    # first basestation has no side information: SUC distortion 2 / 3
    assert cal.d[0] == pytest.approx(2 / 3, abs=1e-12)
    assert cal.d[1] < cal.d[0]
    np.testing.assert_allclose(cal.rates, 1.0, atol=1e-6)
    np.testing.assert_allclose(oracles.wz_calibrate_bisection(K2, 1.0, (0, 1)), cal.d, atol=1e-9)


def test_calibrate_wz_frozen_three_by_three():
    # bisection on the determinant-ratio rate, order (2, 0, 1)
    expected = [0.55892857, 0.32248117, 0.35714286]
    cal = srccode.calibrate_wz(K3, 1.5, (2, 0, 1))
    np.testing.assert_allclose(cal.d, expected, atol=1e-8)
    np.testing.assert_allclose(cal.rates, 1.5, atol=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_calibrate_wz_exhaustive_is_best_fixed_order(seed, L):
    K = channel_cov(seed, L, 2)
    best = srccode.calibrate_wz(K, 2.0, "exhaustive")
    fixed = [srccode.calibrate_wz(K, 2.0, order) for order in
             itertools.permutations(range(L))]
    assert best.d.sum() == pytest.approx(min(f.d.sum() for f in fixed), rel=1e-12)
    np.testing.assert_allclose(best.rates, 2.0, atol=1e-6)


def test_calibrate_wz_custom_metric_and_greedy():
    K = channel_cov(5, 4, 2)
    worst = srccode.calibrate_wz(K, 2.0, "exhaustive", metric=lambda D: -D.sum(axis=1))
    best = srccode.calibrate_wz(K, 2.0, "exhaustive")
    assert worst.d.sum() >= best.d.sum()
    greedy = srccode.calibrate_wz(K, 2.0, "greedy")
    first = greedy.order[0]
    assert greedy.d[first] == pytest.approx(np.min(np.diag(K)) / 15)
    np.testing.assert_allclose(greedy.rates, 2.0, atol=1e-6)


def test_calibrate_wz_refuses_large_exhaustive():
    with pytest.raises(RefusalError):
        srccode.calibrate_wz(np.eye(9) * 2, 1.0, "exhaustive")
    with pytest.raises(ContractError):
        srccode.calibrate_wz(K2, 1.0, "random")


def test_wz_symmetric_rate_picks_best_order():
    K = channel_cov(9, 3, 2)
    r, order = srccode.wz_symmetric_rate(K, 0.5)
    all_orders = itertools.permutations(range(3))
    assert r == pytest.approx(min(srccode.rate_wz(K, 0.5, o).max() for o in all_orders))
    assert srccode.rate_wz(K, 0.5, order).max() == pytest.approx(r)


# Berger-Tung

def test_rate_bt_examples():
    assert srccode.rate_bt(np.array([[3.0]]), 1.0) == pytest.approx(1.0)
    assert srccode.rate_bt(K2, 1.0) == pytest.approx(0.75)
    rates = [srccode.rate_bt(K2, d) for d in np.geomspace(1, 1e8, 20)]
    assert np.all(np.diff(rates) < 0) and rates[-1] < 1e-7
    with pytest.raises(ContractError):
        srccode.rate_bt(K2, -1.0)


def test_calibrate_bt_examples():
    assert srccode.calibrate_bt(np.array([[3.0]]), 1.0).d[0] == pytest.approx(1.0, abs=1e-5)
    cal = srccode.calibrate_bt(K2, 0.75)
    assert cal.d[0] == pytest.approx(1.0, abs=1e-5)
    assert 0.75 - 1e-6 <= cal.rates[0] <= 0.75


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 20.0))
def test_calibrate_bt_round_trip(seed, d0):
    K = channel_cov(seed, 3, 2, 10.0)
    cal = srccode.calibrate_bt(K, srccode.rate_bt(K, d0), tol=1e-10)
    assert cal.d[0] == pytest.approx(d0, rel=1e-6)


# symmetric IFSC

def test_rate_ifsc_sym_examples():
    r, A = srccode.rate_ifsc_sym(np.array([[3.0]]), 1.0)
    assert r == pytest.approx(1.0) and abs(A.entries[0, 0]) == 1
    r, A = srccode.rate_ifsc_sym(K2, 1.0)
    assert r == pytest.approx(0.5 * math.log2(3))
    assert A.entries.tolist() == [[1, 0], [0, 1]]
    assert r >= srccode.rate_bt(K2, 1.0)


def test_rate_ifsc_sym_frozen_nontrivial_matrix():
    H = np.array([[1.0, 1.0], [1.0, 1.1], [0.9, 1.0]])
    K = covariance(ChannelMatrix(H, 100.0))
    r, A = srccode.rate_ifsc_sym(K, 2.0)
    # exhaustive rational search over |a_i| <= 3
    assert r == pytest.approx(3.1239637567217935, abs=1e-9)
    assert not np.array_equal(np.abs(A.entries), np.eye(3))


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_ifsc_orderings_and_monotonicity(seed, L):
    K = channel_cov(seed, L, 2)
    grid = np.geomspace(0.01, 100.0, 12)
    r_ifsc = np.array([srccode.rate_ifsc_sym(K, d)[0] for d in grid])
    r_exact = np.array([srccode.rate_ifsc_sym(K, d, mode="lll_then_enumerate")[0] for d in grid])
    r_bt = np.array([srccode.rate_bt(K, d) for d in grid])
    r_identity = np.array([0.5 * math.log2(1 + K.diagonal().max() / d) for d in grid])
    assert np.all(r_bt <= r_exact + 1e-9)
    assert np.all(r_exact <= r_ifsc + 1e-12)
    assert np.all(r_ifsc <= r_identity + 1e-12)
    assert np.all(np.diff(r_bt) <= 1e-12)
    assert np.all(np.diff(r_exact) <= 1e-12)


def test_calibrate_ifsc_sym_examples():
    cal = srccode.calibrate_ifsc_sym(np.array([[3.0]]), 1.0)
    assert cal.d[0] == pytest.approx(1.0, abs=1e-5)
    cal = srccode.calibrate_ifsc_sym(K2, 0.5 * math.log2(3))
    assert cal.d[0] == pytest.approx(1.0, abs=1e-5)
    assert cal.A.entries.tolist() == [[1, 0], [0, 1]]
    with pytest.raises(ContractError):
        srccode.calibrate_ifsc_sym(K2, 1.0, tol=0.0)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 6.0))
def test_calibrate_ifsc_sym_brackets_target(seed, c):
    K = channel_cov(seed, 6, 3)
    cal = srccode.calibrate_ifsc_sym(K, c, tol=1e-3)
    r = srccode.rate_ifsc_sym(K, cal.d[0], candidates=[cal.A.entries])[0]
    assert c - 1e-3 <= r <= c + 1e-12
    assert cal.iterations <= 60
    assert cal.d[0] <= K.diagonal().max() / (2 ** (2 * c) - 1)


# asymmetric IFSC

def test_rate_ifsc_asym_identity_is_suc():
    K = K3[::-1, ::-1]   # ascending diagonal keeps identity rows sorted
    r = srccode.rate_ifsc_asym(K, 0.5, np.eye(3, dtype=int))
    np.testing.assert_allclose(r, [0.5 * math.log2(1 + k / 0.5) for k in np.diag(K)])


def test_rate_ifsc_asym_rejects_unsorted_rows():
    A = np.array([[1, 0], [0, 1]])
    with pytest.raises(ContractError):
        srccode.rate_ifsc_asym(np.diag([3.0, 1.0]), 1.0, A)


def test_rate_ifsc_asym_perturbation():
    K = channel_cov(21, 3, 2)
    cal = srccode.calibrate_ifsc_asym(K, 3.0)
    base = srccode.rate_ifsc_asym(K, cal.d, cal.A, cal.perm, check_order=False)
    for l in range(3):
        D = cal.d.copy()
        D[cal.perm[l]] *= 2
        bumped = srccode.rate_ifsc_asym(K, D, cal.A, cal.perm, check_order=False)
        assert bumped[l] < base[l]
        others = [m for m in range(3) if m != l]
        assert np.all(bumped[others] >= base[others] - 1e-12)


def test_calibrate_ifsc_asym_two_by_two():
    sym = srccode.calibrate_ifsc_sym(K2, 1.0)
    cal = srccode.calibrate_ifsc_asym(K2, 1.0)
    # (4 I - I) d = diag(K2) gives d = 2/3 for both basestations
    np.testing.assert_allclose(cal.d, [2 / 3, 2 / 3], atol=1e-9)
    assert np.all(cal.d <= sym.d + 1e-9)
    np.testing.assert_allclose(cal.rates, 1.0, atol=1e-9)


def test_calibrate_ifsc_asym_single_basestation():
    sym = srccode.calibrate_ifsc_sym(np.array([[3.0]]), 1.0)
    cal = srccode.calibrate_ifsc_asym(np.array([[3.0]]), 1.0)
    assert cal.d[0] == pytest.approx(sym.d[0], rel=1e-12)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_calibrate_ifsc_asym_properties(seed):
    K = channel_cov(seed, 6, 3)
    sym = srccode.calibrate_ifsc_sym(K, 3.0)
    cal = srccode.calibrate_ifsc_asym(K, 3.0, symmetric=sym)
    assert np.all(cal.d <= sym.d + 1e-9)
    assert np.all(cal.rates <= 3.0 + 1e-6)
    if cal.provenance.startswith("linear-solve"):
        np.testing.assert_allclose(cal.rates, 3.0, atol=1e-9)
        forms = lattice.quadratic_forms(cal.A.entries, K + np.diag(cal.d))
        assert np.all(np.diff(forms) >= -1e-9 * forms[1:])
        assert lattice.leading_minors_nonzero(cal.A.entries, cal.perm)
    else:
        assert cal.provenance.startswith("symmetric-fallback")


def test_calibrate_ifsc_asym_fallback_is_recorded():
    K = channel_cov(4, 6, 3)
    cal = srccode.calibrate_ifsc_asym(K, 3.0, max_passes=0)
    assert cal.provenance.startswith("symmetric-fallback")
    assert np.all(cal.rates <= 3.0 + 1e-6)


# opportunistic IFSC

def test_opportunistic_branch_boundary():
    K = np.diag([3.0, 100.0])
    prof = srccode.opportunistic_profile(K, 1.0, 2.0)
    assert prof.beta[0] == pytest.approx(math.sqrt(2))
    assert prof.d[0] == pytest.approx(1.0)
    assert prof.beta[1] == 1.0 and prof.d[1] == 2.0


def test_opportunistic_below_thresholds_equals_symmetric():
    K = channel_cov(2, 4, 2)
    d_t = 0.5 * K.diagonal().min() / 15
    r, prof, _ = srccode.rate_ifsc_opportunistic(K, 2.0, d_t)
    assert np.all(prof.beta == 1.0)
    assert r == pytest.approx(srccode.rate_ifsc_sym(K, d_t)[0], rel=1e-12)
    with pytest.raises(ContractError):
        srccode.opportunistic_profile(K, 2.0, 0.0)


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_opportunistic_distortions_never_exceed_target(seed, d_t):
    K = channel_cov(seed, 5, 3)
    prof = srccode.opportunistic_profile(K, 2.0, d_t)
    assert np.all(prof.beta >= 1.0)
    assert np.all(prof.d <= d_t * (1 + 1e-12))
    np.testing.assert_allclose(prof.d, d_t / prof.beta**2)
    suc = K.diagonal() / 15
    np.testing.assert_allclose(prof.d, np.minimum(d_t, suc), rtol=1e-12)


def test_distortion_profile_contract():
    with pytest.raises(ContractError):
        srccode.DistortionProfile([1.0, -1.0], "suc")
    with pytest.raises(ContractError):
        srccode.DistortionProfile([1.0], "ifsc_opportunistic")


# local CSIR outage calibration

def test_outage_calibration_rho_one():
    s = Scenario(2, 3, 20.0, 2.0, csir="local", rho=0.5, rho_s=0.25, trials=10)
    cal = srccode.calibrate_outage_distortion("ifsc_local", s, rho_s=1.0)
    assert cal.d_t == 0.0


@pytest.mark.parametrize("scheme,calibrate", [("ifsc_local", srccode.calibrate_ifsc_sym),
                                               ("bt", srccode.calibrate_bt)])
def test_outage_calibration_of_repeated_channel(scheme, calibrate):
    s = Scenario(2, 4, 20.0, 2.0, csir="local", rho=0.1, rho_s=0.05, trials=20)
    h = random_channel(np.random.default_rng(17), 4, 2, 20.0)
    cal = srccode.calibrate_outage_distortion(scheme, s, channels=[h] * 20, rtol=1e-9)
    ref = calibrate(h, 2.0, tol=1e-9).d[0]
    assert cal.d_t == pytest.approx(ref, rel=1e-6)
    assert cal.outage == 0.0


def test_outage_calibration_zero_budget_and_bad_input():
    s = Scenario(2, 3, 20.0, 2.0, csir="local", rho=0.1, rho_s=0.05, trials=10)
    chans = [covariance(random_channel(np.random.default_rng(i), 3, 2, 20.0)) for i in range(10)]
    cal = srccode.calibrate_outage_distortion("bt", s, channels=chans, rho_s=0.0)
    assert cal.outage == 0.0
    assert all(srccode.rate_bt(K, cal.d_t) <= 2.0 + 1e-12 for K in chans)
    with pytest.raises(ContractError):
        srccode.calibrate_outage_distortion("bt", s, channels=chans, rho_s=-0.1)
    with pytest.raises(ContractError):
        srccode.CompressionRate("wz_unknown", 2.0)


@pytest.mark.slow
def test_outage_calibration_reproducible_at_full_size():
    s = Scenario(3, 6, 25.0, 3.0, csir="local", rho=0.1, rho_s=0.05, trials=1000, seed=3)
    a = srccode.calibrate_outage_distortion("ifsc_opportunistic", s)
    b = srccode.calibrate_outage_distortion("ifsc_opportunistic", s)
    assert a.d_t == b.d_t
    assert a.outage <= 0.05
