import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockfade.channel import FadingSpec, csir_llr, make_rng
from blockfade.subchannel import (QuadratureRule, _stage_llr_numpy, block_likelihood, chain_stage_llrs,
                                  log_chain_likelihoods, log_prefix_likelihood, prefix_likelihood,
                                  prefix_likelihood_enumerated, stage_llr)

from oracles import block_likelihood_mc, log_block_likelihood_exact, prefix_likelihood_exact


def _spec(T, snr_db):
    return FadingSpec.from_snr_db(snr_db, T)


# -- quadrature ---------------------------------------------------------------------

def test_rayleigh_rule_moments():
    sh = 0.8
    q = QuadratureRule.rayleigh(sh)
    assert q.count == 64
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-14)
    # far-tail weights underflow to exactly zero, which the log-domain code tolerates
    assert np.all(q.nodes > 0) and np.all(q.weights >= 0)
    assert q.expect(lambda h: h) == pytest.approx(sh * math.sqrt(math.pi / 2), rel=1e-12)
    assert q.expect(lambda h: h ** 2) == pytest.approx(2 * sh ** 2, rel=1e-12)
    assert q.expect(lambda h: h ** 4) == pytest.approx(8 * sh ** 4, rel=1e-12)
    # a non-polynomial integrand with a closed-form Rayleigh expectation
    assert q.expect(lambda h: np.exp(-h)) == pytest.approx(
        1 - sh * math.sqrt(math.pi / 2) * math.exp(sh ** 2 / 2) * math.erfc(sh / math.sqrt(2)), rel=1e-10)


def test_rule_validation():
    with pytest.raises(ValueError):
        QuadratureRule([], [])
    with pytest.raises(ValueError):
        QuadratureRule([1.0, 2.0], [1.0])
    q = QuadratureRule.for_spec(FadingSpec(2, fixed_gain=0.5))
    assert q.nodes.tolist() == [0.5] and q.weights.tolist() == [1.0]


# -- block and prefix likelihoods -----------------------------------------------------------

@pytest.mark.parametrize("T", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("snr", [-3.0, 0.0, 6.0])
def test_block_likelihood_matches_closed_form(T, snr):
    spec = _spec(T, snr)
    rng = make_rng(T * 100 + int(snr) + 7)
    for _ in range(10):
        x = 1 - 2 * rng.integers(0, 2, T)
        h = spec.rayleigh_sigma_h * math.sqrt(-2 * math.log(1 - rng.random()))
        y = h * x + spec.noise_sigma * rng.standard_normal(T)
        want = log_block_likelihood_exact(y, x, spec.noise_sigma, spec.rayleigh_sigma_h ** 2)
        got = log_prefix_likelihood(y, x, spec)
        assert abs(got - want) < 1e-9 * max(1.0, abs(want))


def test_block_likelihood_example_against_mc():
    spec = FadingSpec(2, noise_sigma=1.0)
    y = np.array([1.0, 1.0])
    same = block_likelihood(y, [1, 1], spec)
    diff = block_likelihood(y, [1, -1], spec)
    assert same > diff
    for x, val in (([1, 1], same), ([1, -1], diff)):
        mc, _ = block_likelihood_mc(y, x, 1.0, spec.rayleigh_sigma_h, 10 ** 7, make_rng(5))
        assert abs(val / mc - 1) < 0.005


def test_point_mass_gives_gaussian_product():
    spec = FadingSpec(3, noise_sigma=0.8, fixed_gain=1.0)
    y = np.array([0.3, -1.2, 2.0])
    x = np.array([1.0, -1.0, -1.0])
    want = np.prod(np.exp(-(y - x) ** 2 / (2 * 0.64)) / math.sqrt(2 * math.pi * 0.64))
    assert block_likelihood(y, x, spec) == pytest.approx(want, rel=1e-13)


def test_prefix_edge_cases():
    spec = FadingSpec(2)
    y = np.array([0.4, -1.1])
    full = block_likelihood(y, [1, -1], spec)
    assert prefix_likelihood(y, [1, -1], spec) == full
    avg = 0.5 * (block_likelihood(y, [1, 1], spec) + block_likelihood(y, [1, -1], spec))
    assert prefix_likelihood(y, [1], spec) == pytest.approx(avg, rel=1e-13)
    with pytest.raises(ValueError):
        prefix_likelihood(y, [1, 1, 1], spec)
    with pytest.raises(ValueError):
        block_likelihood(y, [1], spec)
    with pytest.raises(ValueError):
        prefix_likelihood(np.zeros(3), [1], spec)


def test_enumeration_matches_fast_path_t3():
    spec = _spec(3, 1.0)
    rng = make_rng(9)
    for _ in range(50):
        y = rng.normal(0, 1.5, 3)
        for j in range(4):
            xp = 1 - 2 * rng.integers(0, 2, j)
            a = prefix_likelihood_enumerated(y, xp, spec)
            b = prefix_likelihood(y, xp, spec)
            assert abs(a / b - 1) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.data())
def test_fast_path_matches_closed_form_prefix(T, data):
    snr = data.draw(st.floats(-5, 10))
    spec = _spec(T, snr)
    y = np.array(data.draw(st.lists(st.floats(-4, 4), min_size=T, max_size=T)))
    j = data.draw(st.integers(0, T))
    xp = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=j, max_size=j)))
    want = prefix_likelihood_exact(y, xp, spec.noise_sigma, spec.rayleigh_sigma_h ** 2)
    assert prefix_likelihood(y, xp, spec) == pytest.approx(want, rel=1e-9)


def test_chain_likelihoods_agree_with_prefix_calls():
    spec = _spec(4, 2.0)
    rng = make_rng(10)
    y = rng.normal(0, 1, (6, 4))
    x = 1.0 - 2 * rng.integers(0, 2, (6, 4))
    chain = log_chain_likelihoods(y, x, spec)
    assert chain.shape == (6, 5)
    for j in range(5):
        assert np.allclose(chain[:, j], log_prefix_likelihood(y, x[:, :j], spec), rtol=1e-13, atol=1e-13)


def test_marginal_density_integrates_to_one():
    # importance sampling with a wide Gaussian proposal
    spec = _spec(2, 0.0)
    rng = make_rng(11)
    n, s = 400_000, 2.0
    y = s * rng.standard_normal((n, 2))
    logq = -0.5 * np.sum(y * y, axis=1) / s ** 2 - math.log(2 * math.pi * s ** 2)
    for xp in ([], [1.0], [-1.0, 1.0]):
        ratio = np.exp(log_prefix_likelihood(y, np.broadcast_to(xp, (n, len(xp))), spec) - logq)
        se = ratio.std() / math.sqrt(n)
        assert abs(ratio.mean() - 1) < 4 * se + 1e-3


# -- stage LLRs -------------------------------------------------------------------------

def test_stage_llr_examples():
    spec = _spec(3, 0.0)
    assert stage_llr(np.zeros(3), [], spec) == 0.0
    assert stage_llr(np.zeros(3), [1.0, -1.0], spec) == 0.0
    coh = FadingSpec(1, noise_sigma=0.9, fixed_gain=1.0)
    for y in (-2.0, 0.3, 1.7):
        assert stage_llr(np.array([y]), [], coh) == pytest.approx(csir_llr(y, 1.0, coh), rel=1e-12)


def test_stage_llr_is_log_ratio_of_prefix_likelihoods():
    spec = _spec(4, 1.0)
    rng = make_rng(12)
    y = rng.normal(0, 1.2, (20, 4))
    for j in range(1, 5):
        pre = 1.0 - 2 * rng.integers(0, 2, (20, j - 1))
        plus = np.concatenate([pre, np.ones((20, 1))], axis=1)
        minus = np.concatenate([pre, -np.ones((20, 1))], axis=1)
        want = log_prefix_likelihood(y, plus, spec) - log_prefix_likelihood(y, minus, spec)
        assert np.allclose(stage_llr(y, pre, spec), np.clip(want, -40, 40), rtol=1e-10, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.data())
def test_stage_llr_sign_symmetry(T, data):
    spec = _spec(T, data.draw(st.floats(-5, 12)))
    y = np.array(data.draw(st.lists(st.floats(-6, 6), min_size=T, max_size=T)))
    j = data.draw(st.integers(1, T))
    pre = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=j - 1, max_size=j - 1)))
    assert stage_llr(-y, -pre, spec) == -stage_llr(y, pre, spec)


def test_stage_kernel_matches_numpy_reference():
    spec = _spec(5, 3.0)
    rng = make_rng(13)
    q = QuadratureRule.for_spec(spec)
    y = rng.normal(0, 2, (300, 5))
    for j in range(1, 6):
        pre = 1.0 - 2 * rng.integers(0, 2, (300, j - 1))
        ref = np.clip(_stage_llr_numpy(y, pre, spec.noise_var, q), -40, 40)
        assert np.allclose(stage_llr(y, pre, spec, q), ref, rtol=1e-12, atol=1e-11)


def test_stage_llr_broadcast_and_errors():
    spec = _spec(3, 0.0)
    y = make_rng(14).normal(0, 1, (2, 5, 3))
    out = stage_llr(y, np.array([1.0, -1.0]), spec)
    assert out.shape == (2, 5)
    assert stage_llr(y, np.empty((2, 5, 0)), spec).shape == (2, 5)
    with pytest.raises(ValueError):
        stage_llr(y, np.ones(3), spec)


def test_chain_stage_llrs_match_stage_llr():
    spec = _spec(5, -1.0)
    rng = make_rng(15)
    y = rng.normal(0, 1.4, (40, 5))
    x = 1.0 - 2 * rng.integers(0, 2, (40, 5))
    got = chain_stage_llrs(y, x, spec)
    assert got.shape == (40, 5)
    for j in range(5):
        assert np.allclose(np.clip(got[:, j], -40, 40), stage_llr(y, x[:, :j], spec), rtol=1e-12, atol=1e-12)
