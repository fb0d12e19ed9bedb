from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_4d, eps_pe_reference, security_lhs
from satqkd.counts import CountsProfile
from satqkd.finitekey import (
    BlockStats,
    SecurityConfig,
    binary_entropy,
    build_block,
    epsilon_pa,
    epsilon_pe,
    gamma,
    optimise_key_length,
    qber_range,
    search_grid,
    skl_upper_bound,
    threshold_sweep,
)

SEC = SecurityConfig()


def test_binary_entropy_endpoints():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == 1.0


def test_binary_entropy_high_precision():
    with mpmath.workdps(40):
        x = mpmath.mpf("0.11")
        ref = -x * mpmath.log(x, 2) - (1 - x) * mpmath.log(1 - x, 2)
    assert binary_entropy(0.11) == pytest.approx(float(ref), rel=1e-14)
    assert binary_entropy(0.11) == pytest.approx(0.499916, abs=1e-6)


def test_binary_entropy_domain():
    with pytest.raises(ValueError):
        binary_entropy(1.2)


def test_gamma_values():
    assert gamma(0, 10) == pytest.approx(1 + 1 / 11)
    assert gamma(10, 10) == pytest.approx(1 / 11 + 1)
    assert gamma(50, 100) == pytest.approx(2 / 51)


def test_eps_pe_dual_transcription():
    args = (10**6, 5 * 10**5, 5 * 10**5, 0.01, 0.02, 0.01)
    assert epsilon_pe(*args) == pytest.approx(eps_pe_reference(*args), rel=1e-13)


def test_eps_pe_degenerate_small_xi():
    assert epsilon_pe(10**6, 10**5, 9 * 10**5, 0.01, 0.02, 1e-12) >= 1.0


def test_eps_pe_decreasing_in_m():
    vals = []
    for m in (10**4, 10**5, 10**6, 10**7):
        k = math.floor(0.1 * m)
        vals.append(epsilon_pe(m, k, m - k, 0.02, 0.03, 0.01))
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("args", [
    (100, 50, 50, 0.01, 0.02, 0.03),
    (100, 50, 40, 0.01, 0.03, 0.02),
    (100, 50, 50, 0.995, 0.03, 0.02),
])
def test_eps_pe_rejects_infeasible(args):
    with pytest.raises(ValueError):
        epsilon_pe(*args)


def test_upper_bound_infeasible_budget():
    eps = (SEC.eps_qkd - SEC.eps_cor) / 2
    assert skl_upper_bound(10**6, 0.01, 0.02, eps, SEC) is None


def test_upper_bound_entropy_exhausted():
    assert skl_upper_bound(10**6, 0.1, 0.3, 1e-9, SEC) == 0


@settings(max_examples=100, deadline=None)
@given(n=st.integers(10**4, 10**8), delta=st.floats(0.001, 0.08), nu=st.floats(0.005, 0.05),
       eps_pe=st.floats(1e-12, 4e-7))
def test_slack_round_trip(n, delta, nu, eps_pe):
    ell = skl_upper_bound(n, delta, nu, eps_pe, SEC)
    if not ell:
        return
    lhs = SEC.eps_cor + 2 * eps_pe + epsilon_pa(n, delta, nu, ell, SEC)
    assert lhs <= SEC.eps_qkd * (1 + 1e-12)
    # One more bit breaks the constraint: the floor of the bound is tight.
    assert SEC.eps_cor + 2 * eps_pe + epsilon_pa(n, delta, nu, ell + 1, SEC) > SEC.eps_qkd


def test_continuous_bound_has_zero_slack():
    n, delta, nu, eps_pe = 10**6, 0.01, 0.02, 1e-8
    slack = SEC.eps_qkd - SEC.eps_cor - 2 * eps_pe
    r = SEC.ec_efficiency * n * binary_entropy(delta)
    bound = math.log2(4 * slack**2) + n * (1 - binary_entropy(delta + nu)) - r - SEC.t
    expo = -n * (1 - binary_entropy(delta + nu)) + r + SEC.t + bound
    assert 0.5 * math.sqrt(2.0**expo) == pytest.approx(slack, rel=1e-9)


def test_grid_satisfies_trivial_constraints():
    beta, nu, xi = search_grid(0.03, SEC)
    assert np.all((beta > 0) & (beta <= 0.5))
    assert np.all((nu > 0) & (nu < 0.5 - 0.03))
    assert np.all((xi > 0) & (xi < nu[:, None]))


def test_empty_block_and_high_qber():
    assert optimise_key_length(BlockStats(0, 0.01)).ell == 0
    assert optimise_key_length(BlockStats(10**6, 0.5)).ell == 0


@pytest.mark.parametrize("m, delta, grid_n", [(10**4, 0.02, 24), (3000, 0.01, 12)])
def test_reduced_search_matches_4d_brute_force(m, delta, grid_n):
    sec = SecurityConfig(grid_n=grid_n)
    assert optimise_key_length(BlockStats(m, delta), sec).ell == brute_force_4d(m, delta, grid_n)


@settings(max_examples=40, deadline=None)
@given(m=st.floats(3, 8), delta=st.floats(0.001, 0.11))
def test_optimum_satisfies_constraint(m, delta):
    m = int(10**m)
    r = optimise_key_length(BlockStats(m, delta))
    assert 0 <= r.ell <= r.n <= r.m
    if r.ell > 0:
        lhs = security_lhs(r.m, r.k, r.n, r.delta, r.nu, r.xi, r.ell)
        assert lhs <= SEC.eps_qkd * (1 + 1e-9)


def test_security_exponent_monotone():
    blk = BlockStats(10**6, 0.02)
    ells = [optimise_key_length(blk, SecurityConfig(s=s)).ell for s in (4, 6, 8, 10)]
    assert all(a >= b for a, b in zip(ells, ells[1:]))


def test_worker_count_does_not_change_result():
    blk = BlockStats(4 * 10**5, 0.013)
    assert optimise_key_length(blk, SEC, workers=1) == optimise_key_length(blk, SEC, workers=4)


def test_security_config_validation():
    with pytest.raises(ValueError):
        SecurityConfig(s=0)
    with pytest.raises(ValueError):
        SecurityConfig(grid_n=4)
    assert SEC.t == pytest.approx(8 * math.log2(10))


# --- blocks and thresholds ---------------------------------------------------


def make_counts(qbers, d=None, rate=1e6):
    qbers = np.asarray(qbers, float)
    d = np.full(qbers.shape, 1e-3) if d is None else np.asarray(d, float)
    z = np.zeros_like(d)
    return CountsProfile(z, z, d, d * qbers, rate, 1.0)


def test_block_full_pass_at_max_threshold():
    c = make_counts([0.02, 0.01, 0.05, 0.03], d=[1e-3, 2e-3, 5e-4, 1e-3])
    lo, hi = qber_range(c)
    blk = build_block(c, hi)
    assert blk.bins == (0, 1, 2, 3)
    assert blk.m == math.floor(0.5 * 1e6 * c.D.sum())
    assert blk.qber == pytest.approx(c.e.sum() / c.D.sum())


def test_block_single_best_bin_at_min_threshold():
    c = make_counts([0.02, 0.01, 0.05, 0.03])
    lo, _ = qber_range(c)
    assert build_block(c, lo).bins == (1,)


def test_block_below_min_is_empty():
    c = make_counts([0.02, 0.01])
    assert build_block(c, 0.001).m == 0


def test_max_model_uses_worst_bin():
    c = make_counts([0.02, 0.01, 0.05, 0.03])
    blk = build_block(c, 0.03, model="max")
    assert blk.bins == (0, 1, 3) and blk.qber == pytest.approx(0.03)


def test_unknown_model_rejected():
    with pytest.raises(ValueError):
        build_block(make_counts([0.01]), 0.01, model="median")


@settings(max_examples=50, deadline=None)
@given(q=st.lists(st.floats(0.001, 0.2), min_size=2, max_size=30),
       d=st.lists(st.floats(1e-5, 1e-2), min_size=30, max_size=30))
def test_block_grows_with_threshold(q, d):
    c = make_counts(q, d[:len(q)])
    lo, hi = qber_range(c)
    prev_m, prev_q = -1, -1.0
    for delta in np.linspace(lo, hi, 12):
        blk = build_block(c, float(delta))
        assert blk.m >= prev_m and blk.qber >= prev_q - 1e-15
        assert blk.qber <= delta + 1e-15
        prev_m, prev_q = blk.m, blk.qber


def test_flat_profile_sweep_is_degenerate():
    c = make_counts([0.01] * 6)
    best, curve = threshold_sweep(c, SEC, 8)
    assert len(set(b.m for b in curve.blocks)) == 1
    assert best.m == curve.blocks[0].m


def test_sweep_returns_best_of_curve():
    rng = np.random.default_rng(3)
    c = make_counts(rng.uniform(0.005, 0.08, 40), rng.uniform(1e-4, 2e-3, 40), rate=2e8)
    best, curve = threshold_sweep(c, SEC, 16)
    assert best.ell == curve.ell.max()
    assert len(curve.results) == 16
