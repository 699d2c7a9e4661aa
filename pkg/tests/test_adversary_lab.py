import math

import numpy as np
import pytest

from anamac import adversary_lab as lab
from anamac.adversary_lab import (EnumerationLimitError, Observation, PosteriorTable,
                                  distance_distribution, distance_invariance_check,
                                  exact_equivocation, exact_posterior, ml_decode, ml_error_rate,
                                  optimal_spoof_success, spoof_success_probability)
from anamac.mac_core import MacParams, SecretKey, register_prf, sample_keys, tag_matrix
from anamac.noise_channel import ChannelParams, make_ana_tag

TINY = MacParams(8, 16, "toy")
MSG = b"observed"


def observe(key, mac, sigma, seed, msg=MSG, q=None):
    return Observation(msg, make_ana_tag(SecretKey(key, mac.n), msg, mac, ChannelParams(sigma, q),
                                         seed))


def is_injective(mac, msg):
    keys = list(range(1 << mac.n))
    return len({bytes(r) for r in tag_matrix(keys, msg, mac)}) == len(keys)


def true_key_mass(mac, sigma, trials, seed):
    """Mean posterior probability of the true key, from the lab's own trial stream."""
    setup = lab._setup(mac, ChannelParams(sigma, None), None, [MSG])
    rows, logits = lab._chunk_logits(setup, seed, (0, 0, trials))
    return lab._normalize(logits)[np.arange(trials), rows].mean()


# -- posterior -----------------------------------------------------------------

@pytest.mark.parametrize("sigma, q", [(0.8, None), (1.5, None), (0.8, 4), (2.0, 8)])
def test_posterior_is_normalized(sigma, q):
    obs = [observe(17, TINY, sigma, s, q=q) for s in range(3)]
    ch = ChannelParams(sigma, q) if q else None
    post = exact_posterior(obs, None, TINY, sigma, ch)
    assert abs(post.probs.sum() - 1.0) <= 1e-9 and np.all(post.probs >= 0)
    assert post.keys.size == 256


def test_posterior_noiseless_limit():
    mac = MacParams(8, 24, "toy")
    assert is_injective(mac, MSG)
    for k in (0, 99, 255):
        post = exact_posterior([observe(k, mac, 1e-3, k)], None, mac, 1e-3)
        assert post.prob(k) == pytest.approx(1.0, abs=1e-12)
        assert post.entropy() == pytest.approx(0.0, abs=1e-9)


def test_posterior_ties_at_zero_noise_are_uniform():
    mac = MacParams(8, 4, "toy")         # 256 keys onto 16 tags
    obs = [observe(5, mac, 0.0, 1)]
    post = exact_posterior(obs, None, mac, 0.0)
    codes = tag_matrix(list(range(256)), MSG, mac)[:, 0]
    tie = np.flatnonzero(codes == codes[5])
    assert np.allclose(post.probs[tie], 1 / tie.size)
    assert post.probs.sum() == pytest.approx(1.0)
    assert ml_decode(obs, None, mac, 0.0).value == tie.min()


def test_posterior_uniform_at_huge_noise():
    post = exact_posterior([observe(3, TINY, 1e4, 2)], None, TINY, 1e4)
    assert np.allclose(post.probs, 1 / 256, rtol=1e-3)


def test_posterior_explicit_key_space():
    post = exact_posterior([observe(3, TINY, 0.5, 2)], [SecretKey(9, 8), 3, 200, 3], TINY, 0.5)
    assert post.keys.tolist() == [3, 9, 200]
    assert post.prob(7) == 0.0
    assert set(post.as_dict()) == {3, 9, 200}


def test_posterior_limits_and_validation():
    with pytest.raises(EnumerationLimitError):
        exact_posterior([], None, MacParams(21, 24, "toy"), 1.0)
    with pytest.raises(ValueError):
        exact_posterior([observe(1, TINY, 1.0, 1)], None, TINY, -1.0)
    with pytest.raises(ValueError):
        exact_posterior([observe(1, MacParams(8, 12, "toy"), 1.0, 1)], None, TINY, 1.0)
    with pytest.raises(ValueError):
        PosteriorTable(np.arange(3), np.array([0.5, 0.5, 0.5]))


def test_true_key_mass_increases_as_noise_falls():
    sigmas = [2.0, 1.4, 1.0, 0.7, 0.5]
    mass = [true_key_mass(TINY, s, 10_000, 31) for s in sigmas]
    assert all(a < b for a, b in zip(mass, mass[1:]))
    assert mass[0] > 1 / 256


# -- ML decoding ---------------------------------------------------------------

def test_ml_decode_noiseless_recovers_key():
    mac = MacParams(8, 24, "toy")
    for k in range(0, 256, 17):
        assert ml_decode([observe(k, mac, 1e-3, k)], None, mac, 1e-3).value == k


def test_ml_error_rate_drops_with_more_observations():
    ch = ChannelParams(1.2, None)
    p1, _ = ml_error_rate(TINY, ch, None, [b"a"], 10_000, 4)
    p2, _ = ml_error_rate(TINY, ch, None, [b"a", b"b"], 10_000, 4)
    assert p2 <= p1


def test_ml_error_rate_noiseless():
    p, se = ml_error_rate(MacParams(8, 24, "toy"), ChannelParams(1e-6, None), None, [MSG],
                          2000, 1)
    assert p == 0.0 and se == 0.0


# -- equivocation --------------------------------------------------------------

def test_equivocation_limits():
    mac = MacParams(8, 24, "toy")
    h, _ = exact_equivocation(mac, ChannelParams(1e-6, None), None, [MSG], 2000, 3)
    assert h == pytest.approx(0.0, abs=1e-6)
    h, se = exact_equivocation(mac, ChannelParams(1e3, None), None, [MSG], 2000, 3)
    assert h == pytest.approx(8.0, abs=1e-3)


def test_equivocation_quantized_modes_do_not_gain_information():
    mac = MacParams(8, 16, "toy")
    h0, s0 = exact_equivocation(mac, ChannelParams(0.9, None), None, [MSG], 10_000, 6)
    for q in (1, 3):
        hq, sq = exact_equivocation(mac, ChannelParams(0.9, q), None, [MSG], 10_000, 6)
        assert hq >= h0 - 3 * math.hypot(s0, sq)


def test_equivocation_respects_capacity_bound():
    from anamac.bounds import equivocation_lower_bound
    mac = MacParams(8, 16, "toy")
    for sigma in (0.6, 1.0, 1.6):
        gt = 1 / (2 * sigma ** 2)
        h, se = exact_equivocation(mac, ChannelParams(sigma, None), None, [MSG], 5000, 8)
        assert h >= equivocation_lower_bound(8, 16, 1, gt) - 3 * se


def test_equivocation_key_space_limit():
    with pytest.raises(EnumerationLimitError):
        exact_equivocation(MacParams(17, 24, "toy"), ChannelParams(1.0), None, [MSG], 10, 1)


def test_mutual_information_is_nonnegative_and_bounded():
    mac = MacParams(8, 12, "toy")
    i, se = lab.mutual_information_estimate(mac, ChannelParams(1.0, None), None, [b"a"], b"b",
                                            5000, 2)
    assert -3 * se <= i <= 8


# -- spoofing ------------------------------------------------------------------

def test_blind_spoof_is_one_over_key_space():
    mac = MacParams(8, 24, "toy")
    assert is_injective(mac, b"next")
    p, se = optimal_spoof_success(mac, ChannelParams(1.0), None, [], b"next", 100, 1)
    assert p == 2 ** -8 and se == 0.0
    # With collisions the best blind guess is the largest preimage class.
    small = MacParams(8, 4, "toy")
    codes = tag_matrix(list(range(256)), b"next", small)[:, 0]
    p, _ = optimal_spoof_success(small, ChannelParams(1.0), None, [], b"next", 100, 1)
    assert p == np.bincount(codes).max() / 256


def test_spoof_after_noiseless_observation_is_certain():
    mac = MacParams(8, 24, "toy")
    p, _ = optimal_spoof_success(mac, ChannelParams(1e-6, None), None, [MSG], b"next", 2000, 5)
    assert p == pytest.approx(1.0, abs=1e-9)
    obs = [observe(77, mac, 1e-3, 1)]
    assert spoof_success_probability(obs, None, b"next", mac, 1e-3) == pytest.approx(1.0)


def test_spoof_success_single_observation_matches_posterior():
    mac = MacParams(8, 12, "toy")
    obs = [observe(40, mac, 0.8, 3)]
    post = exact_posterior(obs, None, mac, 0.8)
    codes = tag_matrix(post.keys.tolist(), b"next", mac)
    mass = {}
    for c, p in zip(map(bytes, codes), post.probs):
        mass[c] = mass.get(c, 0.0) + p
    assert spoof_success_probability(obs, None, b"next", mac, 0.8) == pytest.approx(
        max(mass.values()), rel=1e-12)


def test_spoof_tag_length_limit():
    with pytest.raises(EnumerationLimitError):
        optimal_spoof_success(MacParams(8, 25, "toy"), ChannelParams(1.0), None, [], b"x", 1, 1)


# -- distance spectra ----------------------------------------------------------

def test_distance_distribution_counts():
    mac = MacParams(8, 16, "toy")
    dist = distance_distribution(mac, MSG, "exhaustive", SecretKey(3, 8))
    assert dist.counts.sum() == 256 and dist.counts[0] >= 1
    assert dist.weights.sum() == pytest.approx(256)
    sample = [1, 2, 3, 3, 4]
    dist = distance_distribution(mac, MSG, sample, SecretKey(3, 8))
    assert dist.counts.sum() == 5 and dist.counts[0] >= 2
    assert dist.weights.sum() == pytest.approx(256)
    with pytest.raises(ValueError):
        distance_distribution(mac, MSG, [], SecretKey(3, 8))


def test_invariance_single_reference_repeated():
    mac = MacParams(8, 16, "toy")
    rep = distance_invariance_check(mac, [b"a", b"a"], [SecretKey(5, 8)] * 2, "exhaustive", 0.0)
    assert rep.max_tv == 0.0 and rep.passed and not rep.degenerate


def test_invariance_reference_prf():
    mac = MacParams(128, 256)
    refs = [SecretKey(k, 128) for k in sample_keys(mac, 4, 70)]
    rep = distance_invariance_check(mac, [b"first", b"second"], refs,
                                    sample_keys(mac, 10_000, 71), 0.05)
    assert rep.passed and rep.pairs == 28


def test_invariance_flags_constant_prf():
    register_prf("constant", lambda value, n, d, nbytes: bytes(nbytes))
    mac = MacParams(8, 16, "constant")
    with pytest.warns(UserWarning, match="constant"):
        rep = distance_invariance_check(mac, [b"a", b"b"], [SecretKey(1, 8), SecretKey(2, 8)],
                                        "exhaustive", 0.05)
    assert rep.passed and rep.degenerate and rep.max_tv == 0.0


# -- reproducibility -----------------------------------------------------------

def test_results_independent_of_worker_count():
    ch = ChannelParams(1.0, 8)
    args = (TINY, ch, None, [b"a"])
    assert exact_equivocation(*args, 5000, 9, workers=1) == \
        exact_equivocation(*args, 5000, 9, workers=3)
    assert ml_error_rate(*args, 5000, 9, workers=1) == ml_error_rate(*args, 5000, 9, workers=4)
    mac = MacParams(8, 12, "toy")
    assert optimal_spoof_success(mac, ch, None, [b"a"], b"b", 3000, 2, workers=1) == \
        optimal_spoof_success(mac, ch, None, [b"a"], b"b", 3000, 2, workers=2)
    roc1 = lab.monte_carlo_roc(MacParams(16, 32, "toy"), ch, [0.2, 0.5], 20_000, 3, workers=1)
    roc3 = lab.monte_carlo_roc(MacParams(16, 32, "toy"), ch, [0.2, 0.5], 20_000, 3, workers=3)
    assert roc1 == roc3


def test_seed_changes_results():
    ch = ChannelParams(1.0, None)
    assert exact_equivocation(TINY, ch, None, [b"a"], 2000, 1) != \
        exact_equivocation(TINY, ch, None, [b"a"], 2000, 2)
