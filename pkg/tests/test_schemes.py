import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from blockfade.channel import FadingSpec, Frame, make_rng, transmit_frame
from blockfade.construction import construct_bicm, construct_parallel
from blockfade.polar import CodeProfile, bec_exact_z, polar_transform, select_sets
from blockfade.schemes import (FerCount, InterleaverSpec, bicm_decode, bicm_encode, mlc_decode, mlc_encode,
                               parallel_decode, parallel_encode, simulate, simulate_batch)


def _code(N, k, seed=0):
    # a reasonable code without running a construction
    eps = 0.5
    p = select_sets(bec_exact_z(eps, N), k)
    fv = make_rng(seed).integers(0, 2, len(p.frozen_set))
    return CodeProfile(N, p.info_set, p.frozen_set, [], fv)


def _random_info(profiles, B, rng):
    return [rng.integers(0, 2, (B, p.k), dtype=np.int8) for p in profiles]


# -- interleaver -------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(1, 2000), st.integers(0, 2 ** 32 - 1))
def test_interleaver_round_trip(length, seed):
    il = InterleaverSpec.random(length, seed)
    v = np.arange(length) * 3 + 1
    assert np.array_equal(il.deinterleave(il.interleave(v)), v)
    assert np.array_equal(il.interleave(il.deinterleave(v)), v)
    assert np.array_equal(np.sort(il.permutation), np.arange(length))


def test_interleaver_validation_and_identity():
    with pytest.raises(ValueError):
        InterleaverSpec(3, None, [0, 0, 1])
    il = InterleaverSpec.identity(5)
    assert il.interleave([4, 5, 6, 7, 8]).tolist() == [4, 5, 6, 7, 8]
    assert np.array_equal(InterleaverSpec.random(64, 3).permutation, InterleaverSpec.random(64, 3).permutation)


def test_interleaver_positions_are_uniform():
    # chi-square on where symbol 0 lands over many seeds
    L, seeds = 16, 8000
    counts = np.bincount([int(InterleaverSpec.random(L, s).inverse()[0]) for s in range(seeds)], minlength=L)
    assert stats.chisquare(counts).pvalue > 1e-3


# -- MLC -------------------------------------------------------------------------

def test_mlc_encode_examples():
    profs = [CodeProfile(8, [], range(8), [], np.zeros(8)) for _ in range(2)]
    assert not mlc_encode([np.zeros((1, 0)), np.zeros((1, 0))], profs).any()
    p = _code(16, 6, seed=3)
    bits = make_rng(1).integers(0, 2, (4, 6))
    assert np.array_equal(mlc_encode([bits], [p])[:, 0, :], polar_transform(p.assemble(bits)))
    with pytest.raises(ValueError):
        mlc_encode([bits], [p, p])


@pytest.mark.parametrize("scheme", ["mlc", "mlc-genie", "parallel", "bicm"])
def test_noiseless_round_trips(scheme):
    T, N = 4, 256
    rng = make_rng(2)
    if scheme == "bicm":
        profs = [_code(T * N, 500)]
    else:
        profs = [_code(N, k, seed=j) for j, k in enumerate([60, 100, 140, 180])]
    res = simulate(scheme, profs, FadingSpec.from_snr_db(0.0, T), 40, rng,
                   il=InterleaverSpec.random(T * N, 5), noiseless=True, batch=20)
    assert res.frame_errors == 0 and res.bit_errors == 0 and res.frames == 40


def test_mlc_decode_recovers_bits_directly():
    T, N = 4, 256
    rng = make_rng(3)
    profs = [_code(N, k, seed=j) for j, k in enumerate([40, 80, 120, 160])]
    info = _random_info(profs, 6, rng)
    frame = transmit_frame(mlc_encode(info, profs), FadingSpec(T, fixed_gain=1.0), rng, noiseless=True)
    res = mlc_decode(frame, profs, FadingSpec(T), sent=info)
    assert not res.frame_error.any()
    for d, s in zip(res.decoded_bits, info):
        assert np.array_equal(d, s)
    assert mlc_decode(frame, profs, FadingSpec(T)).frame_error is None
    with pytest.raises(ValueError):
        mlc_decode(frame, profs[:3], FadingSpec(T))


def test_genie_levels_dominate():
    T, N = 2, 64
    spec = FadingSpec.from_snr_db(3.0, T)
    profs = [_code(N, 16, 1), _code(N, 30, 2)]
    plain = simulate("mlc", profs, spec, 1500, make_rng(4))
    genie = simulate("mlc-genie", profs, spec, 1500, make_rng(4))
    # identical frames: the first level is decoded identically, later levels can only gain
    assert genie.level_errors[0] == plain.level_errors[0]
    se = math.sqrt(plain.level_errors[1] + genie.level_errors[1])
    assert genie.level_errors[1] <= plain.level_errors[1] + 3 * se


# -- parallel ----------------------------------------------------------------------

def test_parallel_single_row_equals_bicm_identity():
    N = 128
    spec = FadingSpec.from_snr_db(1.0, 1, "CSI-R")
    p = _code(N, 50)
    a = simulate("parallel", [p], spec, 600, make_rng(5))
    b = simulate("bicm", [p], spec, 600, make_rng(5), il=InterleaverSpec.identity(N))
    assert (a.frame_errors, a.bit_errors) == (b.frame_errors, b.bit_errors)


def test_parallel_requires_gains_and_order_does_not_matter():
    T, N = 3, 32
    spec = FadingSpec.from_snr_db(2.0, T, "CSI-R")
    profs = [_code(N, 12, j) for j in range(T)]
    rng = make_rng(6)
    info = _random_info(profs, 50, rng)
    frame = transmit_frame(parallel_encode(info, profs), spec, rng)
    a = parallel_decode(frame, profs, spec, info)
    b = parallel_decode(frame, profs, spec, info, order=[2, 0, 1])
    assert np.array_equal(a.level_errors, b.level_errors)
    blind = Frame(frame.tx_bits, frame.tx_symbols, frame.rx, None)
    with pytest.raises(RuntimeError, match="invalid state"):
        parallel_decode(blind, profs, spec)


def test_parallel_rows_fail_independently_on_fixed_gain():
    # with a fixed gain only the noise is random, and it is independent across rows
    T, N = 4, 64
    spec = FadingSpec.from_snr_db(2.0, T, "CSI-R", fixed_gain=1.0)
    profs = [_code(N, 40)] * T
    res = simulate("parallel", profs, spec, 6000, make_rng(7))
    p = res.level_errors.sum() / (T * res.frames)
    want = 1 - (1 - p) ** T
    assert 0.05 < want < 0.95
    se = math.sqrt(want * (1 - want) / res.frames)
    assert abs(res.fer - want) <= 3.3 * se


def test_parallel_rows_share_fading():
    # rows of one frame see the same gains, so their failures are positively correlated
    T, N = 4, 64
    spec = FadingSpec.from_snr_db(2.0, T, "CSI-R")
    res = simulate("parallel", [_code(N, 28)] * T, spec, 6000, make_rng(7))
    p = res.level_errors.sum() / (T * res.frames)
    want = 1 - (1 - p) ** T
    assert res.fer < want - 3 * math.sqrt(want * (1 - want) / res.frames)


# -- BICM -----------------------------------------------------------------------------

def test_bicm_identity_single_row_is_plain_encoding():
    p = _code(64, 20)
    bits = make_rng(8).integers(0, 2, (3, 20))
    out = bicm_encode(bits, p, InterleaverSpec.identity(64), 1)
    assert np.array_equal(out[:, 0, :], p.encode(bits))


def test_bicm_layout_and_errors():
    T, N = 4, 16
    p = _code(T * N, 30)
    il = InterleaverSpec.random(T * N, 9)
    bits = make_rng(9).integers(0, 2, (2, 30))
    frame_bits = bicm_encode(bits, p, il, T)
    assert frame_bits.shape == (2, T, N)
    # block b holds interleaved symbols b*T .. b*T+T-1
    v = il.interleave(p.encode(bits))
    assert np.array_equal(frame_bits[:, :, 3], v[:, 12:16])
    with pytest.raises(ValueError):
        bicm_encode(bits, p, InterleaverSpec.identity(32), T)
    frame = transmit_frame(frame_bits, FadingSpec(T, csi_mode="CSI-R"), make_rng(1), noiseless=True)
    with pytest.raises(RuntimeError):
        bicm_decode(Frame(frame.tx_bits, frame.tx_symbols, frame.rx, None), p, il, FadingSpec(T))
    with pytest.raises(ValueError):
        bicm_decode(frame, _code(32, 4), InterleaverSpec.identity(32), FadingSpec(T))
    res = bicm_decode(frame, p, il, FadingSpec(T, csi_mode="CSI-R"), [bits])
    assert not res.frame_error.any()


@pytest.mark.slow
def test_bicm_beats_parallel_at_equal_frame_size():
    T, N, rate = 4, 128, 0.35
    spec = FadingSpec.from_snr_db(2.0, T, "CSI-R")
    par = construct_parallel(spec, N, rate, 4000, make_rng(10))
    bicm = construct_bicm(spec, T * N, rate, 4000, make_rng(11))
    rp = simulate("parallel", par, spec, 10_000, make_rng(12))
    rb = simulate("bicm", [bicm], spec, 10_000, make_rng(13), il=InterleaverSpec.random(T * N, 14))
    assert 0.05 <= rp.fer <= 0.3
    assert rb.fer <= rp.fer + 3 * math.hypot(rb.fer_stderr(), rp.fer_stderr())


# -- bookkeeping ---------------------------------------------------------------------

def test_fer_count_merge_and_rates():
    a = FerCount(10, 2, 5, 100, np.array([1, 1]))
    b = FerCount(30, 1, 3, 300, np.array([0, 1]))
    c = a.merge(b)
    assert (c.frames, c.frame_errors, c.bit_errors, c.info_bits) == (40, 3, 8, 400)
    assert c.level_errors.tolist() == [1, 2]
    assert c.fer == 3 / 40 and c.ber == 8 / 400
    assert c.fer_stderr() == pytest.approx(math.sqrt(3 / 40 * 37 / 40 / 40))
    assert math.isnan(FerCount().fer)


def test_simulation_is_deterministic_and_validates():
    spec = FadingSpec.from_snr_db(0.0, 2)
    profs = [_code(32, 6), _code(32, 10)]
    a = simulate("mlc", profs, spec, 300, make_rng(15), batch=64)
    b = simulate("mlc", profs, spec, 300, make_rng(15), batch=64)
    assert (a.frame_errors, a.bit_errors) == (b.frame_errors, b.bit_errors)
    assert np.array_equal(a.level_errors, b.level_errors)
    with pytest.raises(ValueError):
        simulate("mlc", profs, spec, 0, make_rng(0))
    with pytest.raises(ValueError):
        simulate_batch("turbo", profs, spec, 4, make_rng(0))
