import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anamac.mac_core import MacParams, SecretKey, Tag, compute_tag
from anamac.noise_channel import (HEADER_SIZE, BadMagicError, BadVersionError, ChannelParams,
                                  FrameError, NoisyTag, TruncatedFrameError, bipolarize,
                                  corrupt, decode_packet, encode_packet, make_ana_tag,
                                  quantize, quantize_levels, reconstruct, snr_params)
from anamac.verifier import correlation_statistic

from golden_frames import GOLDEN


def test_bipolarize():
    assert list(bipolarize(Tag(np.array([1, 0, 1], dtype=np.uint8)))) == [-1, 1, -1]
    z = bipolarize(Tag(np.zeros(5, dtype=np.uint8)))
    assert np.all(z == 1) and z @ z == 5


def test_corrupt_noiseless_and_negative():
    x = np.array([1.0, -1.0, 1.0])
    assert np.array_equal(corrupt(x, 0.0, 5), x)
    with pytest.raises(ValueError):
        corrupt(x, -0.1, 5)


def test_corrupt_moments():
    sigma = 0.7
    x = np.ones(1_000_000)
    w = corrupt(x, sigma, 99) - x
    assert abs(w.mean()) <= 3 * sigma / 1000
    assert w.var() == pytest.approx(sigma ** 2, rel=0.01)


def test_corrupt_is_prefix_stable():
    a = corrupt(np.zeros(10), 1.0, 4)
    b = corrupt(np.zeros(20), 1.0, 4)
    assert np.array_equal(a, b[:10])


def test_quantizer_examples():
    p = ChannelParams(0.1, 1, 1.0 + 1e-12)
    nt = quantize(np.array([0.3]), p)
    assert nt.levels[0] == 1 and nt.values[0] == pytest.approx(0.5)


def test_quantizer_fixed_points():
    p = ChannelParams(0.3, 8)
    levels = np.arange(256)
    assert np.array_equal(quantize_levels(reconstruct(levels, p), p), levels)


def test_quantizer_error_bound():
    p = ChannelParams(0.5, 6)
    x = np.linspace(-p.clip_A, p.clip_A, 10_001)
    nt = quantize(x, p)
    assert np.max(np.abs(x - nt.values)) <= p.step / 2 + 1e-12
    assert nt.saturated == 0


def test_noiseless_quantization_of_symbols():
    p = ChannelParams(0.0, 8, 1.5)
    nt = quantize(np.array([1.0, -1.0]), p)
    assert np.all(np.abs(nt.values - [1, -1]) <= p.step / 2)


def test_saturation_rate_at_default_clip():
    sigma = 0.8
    p = ChannelParams(sigma, 8)
    x = 1.0 + sigma * np.random.default_rng(3).standard_normal(2_000_000)
    rate = quantize(x, p).saturated / x.size
    # Q(4) = 3.17e-5; the clip sits 4 sigma above the +1 symbol.
    assert rate < 1e-4


def test_channel_params_validation():
    assert ChannelParams(0.5).clip_A == 3.0
    with pytest.raises(ValueError):
        ChannelParams(-1.0)
    with pytest.raises(ValueError):
        ChannelParams(0.5, 17)
    with pytest.raises(ValueError):
        ChannelParams(0.5, 8, 1.0)


def test_make_ana_tag_noiseless():
    mac = MacParams(16, 64, "toy")
    key = SecretKey(4321, 16)
    ch = ChannelParams(0.0, 8, 1.25)
    nt = make_ana_tag(key, b"m", mac, ch, 1)
    t = compute_tag(key, b"m", mac)
    assert np.all(np.abs(nt.values - bipolarize(t)) <= ch.step / 2)
    assert correlation_statistic(t, nt) == pytest.approx(64, abs=64 * ch.step / 2)
    assert nt == make_ana_tag(key, b"m", mac, ch, 1)


def test_make_ana_tag_mean_tracks_symbols():
    mac = MacParams(16, 16, "toy")
    key = SecretKey(99, 16)
    ch = ChannelParams(1.0, 8)
    t = bipolarize(compute_tag(key, b"m", mac))
    vals = np.array([make_ana_tag(key, b"m", mac, ch, s).values for s in range(100_000)])
    sem = vals.std(axis=0) / math.sqrt(len(vals))
    assert np.all(np.abs(vals.mean(axis=0) - t) <= 3.5 * sem)


def test_unquantized_mode_passes_values_through():
    mac = MacParams(8, 16, "toy")
    nt = make_ana_tag(SecretKey(3, 8), b"x", mac, ChannelParams(0.5, None), 7)
    assert nt.levels is None and nt.l == 16


def test_snr_params():
    gt, gb = snr_params(1 / math.sqrt(2), 128, 256, 1)
    assert gt == pytest.approx(1.0) and gb == pytest.approx(2.0)
    sigma = 1 / math.sqrt(2 * 0.2506)
    assert snr_params(sigma, 128, 256, 1)[1] == pytest.approx(0.5012)
    assert 10 * math.log10(0.5012) == pytest.approx(-3.0, abs=1e-3)
    assert snr_params(0.5, 128, 64, 2)[1] == pytest.approx(2 * snr_params(0.5, 128, 64, 1)[1])
    with pytest.raises(ValueError):
        snr_params(0.0, 8, 8, 1)


def test_packet_layout():
    p = ChannelParams(0.5, 1, 3.0)
    frame = encode_packet(NoisyTag(np.zeros(8, int), reconstruct(np.zeros(8), p)), p)
    assert HEADER_SIZE == 24
    assert len(frame) == HEADER_SIZE + 1 and frame[-1] == 0
    assert frame[:4] == b"ANAM" and frame[4] == 1


@pytest.mark.parametrize("hexframe, sigma, q, clip, levels", GOLDEN)
def test_golden_frames(hexframe, sigma, q, clip, levels):
    tag, params = decode_packet(bytes.fromhex(hexframe))
    assert (params.sigma_w, params.q, params.clip_A) == (sigma, q, clip)
    assert tag.levels.tolist() == levels
    assert encode_packet(tag, params).hex() == hexframe


def test_frame_errors():
    good = bytes.fromhex(GOLDEN[2][0])
    with pytest.raises(BadMagicError):
        decode_packet(b"ANAX" + good[4:])
    with pytest.raises(BadVersionError):
        decode_packet(good[:4] + b"\x02" + good[5:])
    with pytest.raises(TruncatedFrameError):
        decode_packet(good[:-1])
    with pytest.raises(TruncatedFrameError):
        decode_packet(good[:10])
    with pytest.raises(FrameError):
        decode_packet(good + b"\x00")
    for cls in (BadMagicError, BadVersionError, TruncatedFrameError):
        assert issubclass(cls, FrameError)


def test_encode_rejects_oversized_tags():
    p = ChannelParams(1.0, 1)
    with pytest.raises(ValueError):
        encode_packet(NoisyTag(np.zeros(70_000, int), np.zeros(70_000)), p)


@st.composite
def frames(draw):
    q = draw(st.integers(1, 16))
    l = draw(st.integers(0, 300))
    sigma = draw(st.floats(0.0, 10.0, allow_nan=False))
    clip = draw(st.floats(1.0001, 100.0, allow_nan=False))
    levels = draw(st.lists(st.integers(0, (1 << q) - 1), min_size=l, max_size=l))
    p = ChannelParams(sigma, q, clip)
    return NoisyTag(np.array(levels, dtype=np.int64), reconstruct(levels, p)), p


@settings(max_examples=1000, deadline=None)
@given(frames())
def test_round_trip(frame):
    tag, params = frame
    back, bparams = decode_packet(encode_packet(tag, params))
    assert back == tag and bparams == params
