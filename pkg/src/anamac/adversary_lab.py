"""Desk-scale adversary oracles.

Everything here enumerates an explicit key space, so it is limited to small
keys (the toy PRF, n up to about 16). Monte Carlo routines draw, per trial,
a uniform key index and then one noise vector per observed message, in
message order, from the stream ``(seed, "lab", chunk)``. Routines that share
a seed, key space and observed messages therefore see identical keys and
noise, which makes differences between them low-variance (common random
numbers).

Observations are either unquantized (``ChannelParams.q is None``; Gaussian
likelihood on the values) or quantized, in which case the likelihood of a
level is the exact Gaussian mass of its quantizer bin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.special import log_ndtr, logsumexp

from .bounds import LN2, DistanceDistribution, total_variation
from .mac_core import (MacParams, SecretKey, hamming_distances, sample_keys, tag_bytes,
                       tag_bit_matrix, tag_matrix)
from .noise_channel import (ChannelParams, NoisyTag, quantize_levels, reconstruct)
from .streams import chunk_bounds, map_chunks, stream
from .verifier import alpha_closed_form, beta_random_code

MAX_POSTERIOR_KEYS = 1 << 20
MAX_EQUIVOCATION_KEYS = 1 << 16
MAX_SPOOF_TAG_BITS = 24
ROC_CHUNK = 8192


class EnumerationLimitError(ValueError):
    """The requested instance is too large to enumerate."""


@dataclass(frozen=True)
class Observation:
    msg: bytes
    noisy_tag: NoisyTag


@dataclass(frozen=True, eq=False)
class PosteriorTable:
    keys: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        if self.keys.shape != self.probs.shape:
            raise ValueError("keys and probs must align")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-9:
            raise ValueError("posterior must be a probability vector")

    def prob(self, key) -> float:
        k = key.value if isinstance(key, SecretKey) else int(key)
        hit = np.flatnonzero(self.keys == k)
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log2(p)).sum())

    def argmax(self) -> int:
        best = self.probs.max()
        return int(self.keys[self.probs == best].min())

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(p) for k, p in zip(self.keys, self.probs)}


# -- key spaces and likelihoods ------------------------------------------------

def exhaustive_keys(mac_params: MacParams) -> np.ndarray:
    if mac_params.n > 20:
        raise EnumerationLimitError(f"cannot enumerate 2^{mac_params.n} keys")
    return np.arange(1 << mac_params.n, dtype=np.int64)


def _as_key_array(key_space, mac_params: MacParams, limit: int) -> np.ndarray:
    if key_space is None or (isinstance(key_space, str) and key_space == "exhaustive"):
        if mac_params.n > 30 or (1 << mac_params.n) > limit:
            raise EnumerationLimitError(f"2^{mac_params.n} keys exceed the limit of {limit}")
        return exhaustive_keys(mac_params)
    keys = np.array(sorted({k.value if isinstance(k, SecretKey) else int(k) for k in key_space}),
                    dtype=np.int64)
    if keys.size == 0:
        raise ValueError("empty key space")
    if keys.size > limit:
        raise EnumerationLimitError(f"{keys.size} keys exceed the limit of {limit}")
    return keys


def bipolar_table(keys: np.ndarray, msg: bytes, mac_params: MacParams) -> np.ndarray:
    """(K, l) matrix of bipolar tags, one row per key."""
    return 1.0 - 2.0 * tag_bit_matrix(keys.tolist(), msg, mac_params)


def _tag_codes(keys: np.ndarray, msg: bytes, mac_params: MacParams) -> np.ndarray:
    packed = tag_matrix(keys.tolist(), msg, mac_params)
    return np.ascontiguousarray(packed).view(np.dtype((np.void, packed.shape[1]))).ravel()


def _log_bin_mass(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``log(Phi(hi) - Phi(lo))`` without cancellation in either tail."""
    upper = lo >= 0
    a = np.where(upper, -hi, lo)
    b = np.where(upper, -lo, hi)
    la, lb = log_ndtr(a), log_ndtr(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = lb + np.log(-np.expm1(la - lb))
    return np.where(lb == -np.inf, -np.inf, out)


def level_log_likelihoods(params: ChannelParams) -> tuple[np.ndarray, np.ndarray]:
    """Log P(level | symbol) for symbols +1 and -1, one entry per level."""
    L = params.levels
    edges = -params.clip_A + params.step * np.arange(L + 1, dtype=np.float64)
    edges[0], edges[-1] = -np.inf, np.inf
    out = []
    for x in (1.0, -1.0):
        if params.sigma_w == 0:
            ll = np.full(L, -np.inf)
            ll[quantize_levels([x], params)[0]] = 0.0
        else:
            ll = _log_bin_mass((edges[:-1] - x) / params.sigma_w, (edges[1:] - x) / params.sigma_w)
        out.append(ll)
    return out[0], out[1]


def _observation_logits(y_or_levels: np.ndarray, table: np.ndarray,
                        params: ChannelParams, lls=None) -> np.ndarray:
    """Per-key log-likelihood (up to a per-row constant), shape (B, K)."""
    if params.q is None:
        if params.sigma_w == 0:
            d2 = ((y_or_levels[:, None, :] - table[None, :, :]) ** 2).sum(axis=2)
            return np.where(np.isclose(d2, d2.min(axis=1, keepdims=True), rtol=0, atol=1e-9),
                            0.0, -np.inf)
        return y_or_levels @ table.T / params.sigma_w ** 2
    lp, lm = lls if lls is not None else level_log_likelihoods(params)
    plus = lp[y_or_levels]
    minus = lm[y_or_levels]
    pos = (table > 0).astype(np.float64)
    if np.isfinite(plus).all() and np.isfinite(minus).all():
        return plus @ pos.T + minus @ (1.0 - pos).T
    # Impossible levels (sigma_w = 0 or underflow): count mismatches explicitly.
    big = 1e300
    p = np.where(np.isfinite(plus), plus, -big)
    m = np.where(np.isfinite(minus), minus, -big)
    out = p @ pos.T + m @ (1.0 - pos).T
    return np.where(out < -1e299, -np.inf, out)


def _normalize(logits: np.ndarray) -> np.ndarray:
    top = logits.max(axis=-1, keepdims=True)
    w = np.exp(logits - top)
    return w / w.sum(axis=-1, keepdims=True)


def _entropy_bits(logits: np.ndarray) -> np.ndarray:
    p = _normalize(logits)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def _obs_params(obs: Observation, sigma_w: float,
                channel_params: Optional[ChannelParams]) -> tuple[ChannelParams, np.ndarray]:
    if channel_params is not None and channel_params.q is not None and obs.noisy_tag.levels is not None:
        return channel_params, obs.noisy_tag.levels[None, :]
    return ChannelParams(sigma_w, None), obs.noisy_tag.values[None, :]


def exact_posterior(obs: Sequence[Observation], key_space, mac_params: MacParams,
                    sigma_w: float, channel_params: Optional[ChannelParams] = None
                    ) -> PosteriorTable:
    """Posterior over ``key_space`` (uniform prior) given noisy tag observations.

    Without ``channel_params`` (or in unquantized mode) each observation is
    scored with the Gaussian likelihood on its values. With a quantized
    ``channel_params`` the levels are scored with exact bin probabilities.
    """
    keys = _as_key_array(key_space, mac_params, MAX_POSTERIOR_KEYS)
    if sigma_w < 0:
        raise ValueError("sigma_w must be non-negative")
    logits = np.zeros((1, keys.size))
    for o in obs:
        if o.noisy_tag.l != mac_params.l:
            raise ValueError("observation length does not match l")
        params, y = _obs_params(o, sigma_w, channel_params)
        table = bipolar_table(keys, o.msg, mac_params)
        logits = logits + _observation_logits(y, table, params)
    return PosteriorTable(keys, _normalize(logits)[0])


def ml_decode(obs: Sequence[Observation], key_space, mac_params: MacParams,
              sigma_w: float, channel_params: Optional[ChannelParams] = None) -> SecretKey:
    """Maximum-likelihood key estimate; ties go to the smallest key."""
    post = exact_posterior(obs, key_space, mac_params, sigma_w, channel_params)
    return SecretKey(post.argmax(), mac_params.n)


# -- Monte Carlo over (key, noise) --------------------------------------------

@dataclass(frozen=True)
class _LabSetup:
    keys: np.ndarray
    tables: list
    clean_codes: list
    params: ChannelParams
    lls: Optional[tuple]
    chunk: int


def _setup(mac_params, channel_params, key_space, msgs, clean_msgs=(), limit=MAX_EQUIVOCATION_KEYS):
    keys = _as_key_array(key_space, mac_params, limit)
    tables = [bipolar_table(keys, m, mac_params) for m in msgs]
    clean = [_tag_codes(keys, m, mac_params) for m in clean_msgs]
    lls = level_log_likelihoods(channel_params) if channel_params.q is not None else None
    # Chunk size depends only on the key space, never on the worker count.
    chunk = int(max(16, min(4096, (1 << 22) // keys.size)))
    return _LabSetup(keys, tables, clean, channel_params, lls, chunk)


def _chunk_logits(setup: _LabSetup, seed: int, block) -> tuple[np.ndarray, np.ndarray]:
    """Draw keys and noise for one chunk; return (true key rows, logits)."""
    c, start, stop = block
    rng = stream(seed, "lab", c)
    B = stop - start
    K = setup.keys.size
    rows = rng.integers(0, K, size=B)
    logits = np.zeros((B, K))
    p = setup.params
    for table in setup.tables:
        noise = rng.standard_normal((B, table.shape[1]))
        x = table[rows] + p.sigma_w * noise
        y = quantize_levels(x, p) if p.q is not None else x
        logits += _observation_logits(y, table, p, setup.lls)
    for codes in setup.clean_codes:
        logits[codes[None, :] != codes[rows][:, None]] = -np.inf
    return rows, logits


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    mean = math.fsum(samples.tolist()) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum(((samples - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def equivocation_samples(mac_params: MacParams, channel_params: ChannelParams, key_space,
                         msgs: Sequence[bytes], trials: int, seed: int, *,
                         clean_msgs: Sequence[bytes] = (), workers: int = 1) -> np.ndarray:
    """Per-trial posterior entropies (bits)."""
    setup = _setup(mac_params, channel_params, key_space, msgs, clean_msgs)

    def run(block):
        _, logits = _chunk_logits(setup, seed, block)
        return _entropy_bits(logits)

    parts = map_chunks(run, chunk_bounds(trials, setup.chunk), workers)
    return np.concatenate(parts)


def exact_equivocation(mac_params: MacParams, channel_params: ChannelParams, key_space,
                       msgs: Sequence[bytes], trials: int, seed: int, *,
                       clean_msgs: Sequence[bytes] = (), workers: int = 1
                       ) -> tuple[float, float]:
    """Monte Carlo estimate of H(K | noisy tags of ``msgs``) with its standard error.

    ``clean_msgs`` additionally reveals the clean tags of those messages to
    the observer; it is used to form conditional mutual informations.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    return _mean_se(equivocation_samples(mac_params, channel_params, key_space, msgs,
                                         trials, seed, clean_msgs=clean_msgs, workers=workers))


def mutual_information_estimate(mac_params: MacParams, channel_params: ChannelParams,
                                key_space, msgs: Sequence[bytes], next_msg: bytes,
                                trials: int, seed: int, workers: int = 1
                                ) -> tuple[float, float]:
    """``I(K; T_next | noisy tags of msgs)`` as a paired difference of equivocations.

    Both runs share keys and noise; the standard error is that of the paired
    per-trial differences.
    """
    a = equivocation_samples(mac_params, channel_params, key_space, msgs, trials, seed,
                             workers=workers)
    b = equivocation_samples(mac_params, channel_params, key_space, msgs, trials, seed,
                             clean_msgs=[next_msg], workers=workers)
    return _mean_se(a - b)


def ml_error_rate(mac_params: MacParams, channel_params: ChannelParams, key_space,
                  msgs: Sequence[bytes], trials: int, seed: int, workers: int = 1
                  ) -> tuple[float, float]:
    """Monte Carlo block error rate of the ML key decoder, with binomial standard error."""
    setup = _setup(mac_params, channel_params, key_space, msgs, limit=MAX_POSTERIOR_KEYS)

    def run(block):
        rows, logits = _chunk_logits(setup, seed, block)
        # argmax returns the first maximum, i.e. the smallest key value.
        return np.count_nonzero(np.argmax(logits, axis=1) != rows)

    errors = sum(map_chunks(run, chunk_bounds(trials, setup.chunk), workers))
    p = errors / trials
    return p, math.sqrt(p * (1 - p) / trials)


def _group_matrix(codes: np.ndarray) -> sparse.csr_matrix:
    _, inv = np.unique(codes, return_inverse=True)
    inv = np.asarray(inv).ravel()
    K = codes.size
    return sparse.csr_matrix((np.ones(K), (np.arange(K), inv)), shape=(K, int(inv.max()) + 1))


def spoof_success_probability(obs: Sequence[Observation], key_space, next_msg: bytes,
                              mac_params: MacParams, sigma_w: float,
                              channel_params: Optional[ChannelParams] = None) -> float:
    """``max_t sum_{k: tag(k, next_msg) = t} P(k | obs)`` for one observed sequence."""
    if mac_params.l > MAX_SPOOF_TAG_BITS:
        raise EnumerationLimitError(f"tag length {mac_params.l} exceeds {MAX_SPOOF_TAG_BITS}")
    post = exact_posterior(obs, key_space, mac_params, sigma_w, channel_params)
    groups = _group_matrix(_tag_codes(post.keys, next_msg, mac_params))
    return float((groups.T @ post.probs).max())


def optimal_spoof_success(mac_params: MacParams, channel_params: ChannelParams, key_space,
                          msgs: Sequence[bytes], next_msg: bytes, trials: int, seed: int,
                          workers: int = 1) -> tuple[float, float]:
    """Success of the best clean-tag substitution after observing noisy tags of ``msgs``.

    Returns the Monte Carlo mean of ``max_t P(t valid | observations)`` and its
    standard error. With no observed messages the result is exact.
    """
    if mac_params.l > MAX_SPOOF_TAG_BITS:
        raise EnumerationLimitError(f"tag length {mac_params.l} exceeds {MAX_SPOOF_TAG_BITS}")
    setup = _setup(mac_params, channel_params, key_space, msgs)
    groups = _group_matrix(_tag_codes(setup.keys, next_msg, mac_params))
    if not msgs:
        return float(groups.sum(axis=0).max()) / setup.keys.size, 0.0

    def run(block):
        _, logits = _chunk_logits(setup, seed, block)
        return np.asarray((groups.T @ _normalize(logits).T).max(axis=0)).ravel()

    return _mean_se(np.concatenate(map_chunks(run, chunk_bounds(trials, setup.chunk), workers)))


# -- distance spectra ----------------------------------------------------------

def _sample_list(mac_params: MacParams, key_sample) -> list[int]:
    if isinstance(key_sample, str) and key_sample == "exhaustive":
        return exhaustive_keys(mac_params).tolist()
    keys = [k.value if isinstance(k, SecretKey) else int(k) for k in key_sample]
    if not keys:
        raise ValueError("empty key sample")
    return keys


def distance_counts(mac_params: MacParams, msg: bytes, keys: Sequence[int],
                    reference_key) -> np.ndarray:
    ref = np.frombuffer(tag_bytes(reference_key, msg, mac_params), dtype=np.uint8)
    d = hamming_distances(tag_matrix(keys, msg, mac_params), ref)
    return np.bincount(d, minlength=mac_params.l + 1)


def distance_distribution(mac_params: MacParams, msg: bytes, key_sample,
                          reference_key) -> DistanceDistribution:
    """Distance spectrum of the tags of ``key_sample`` around ``reference_key``'s tag.

    ``key_sample`` is an explicit key list or ``"exhaustive"``. Counts are
    scaled to the mean-count convention (total ``2^n``).
    """
    keys = _sample_list(mac_params, key_sample)
    counts = distance_counts(mac_params, msg, keys, reference_key)
    with np.errstate(divide="ignore"):
        lw = np.log(counts.astype(np.float64)) + mac_params.n * LN2 - math.log(len(keys))
    return DistanceDistribution(mac_params.l, lw, counts)


@dataclass(frozen=True)
class InvarianceReport:
    max_tv: float
    tol: float
    passed: bool
    degenerate: bool
    pairs: int = field(default=0)


def distance_invariance_check(mac_params: MacParams, msgs: Sequence[bytes],
                              reference_keys: Sequence, sample, tol: float) -> InvarianceReport:
    """Largest total-variation gap between distance spectra around different references."""
    if len(msgs) < 1 or len(reference_keys) < 1:
        raise ValueError("need at least one message and one reference key")
    keys = _sample_list(mac_params, sample)
    pmfs = []
    for msg in msgs:
        packed = tag_matrix(keys, msg, mac_params)
        for ref in reference_keys:
            r = np.frombuffer(tag_bytes(ref, msg, mac_params), dtype=np.uint8)
            c = np.bincount(hamming_distances(packed, r), minlength=mac_params.l + 1)
            pmfs.append(c / c.sum())
    gaps = [total_variation(a, b) for a, b in combinations(pmfs, 2)]
    worst = max(gaps, default=0.0)
    degenerate = all(p[0] == 1.0 for p in pmfs)
    if degenerate:
        warnings.warn("every tag coincides with its reference: the tag map is constant",
                      stacklevel=2)
    return InvarianceReport(worst, tol, worst <= tol, degenerate, len(gaps))


# -- ROC -----------------------------------------------------------------------

@dataclass(frozen=True)
class RocPoint:
    sigma_w: float
    gamma_t: float
    gamma_b: float
    rho: float
    alpha_hat: float
    beta_hat: float
    alpha_closed: float
    beta_closed: float
    stderr_alpha: float
    stderr_beta: float


def _binomial_se(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def roc_sweep(mac_params: MacParams, channels: Sequence[ChannelParams], rho_grid: Sequence[float],
              trials: int, seed: int, msg: bytes = b"anamac roc", workers: int = 1
              ) -> list[RocPoint]:
    """alpha/beta estimates for several noise levels sharing the same key draws.

    Trial ``j`` draws Alice's key and an independent impostor key. The
    legitimate statistic correlates Alice's tag with her own noisy tag; the
    impostor statistic correlates it with the noisy tag made under the
    impostor key. Standard errors are binomial at the closed-form
    probability, so a zero count against a tiny closed form is not an error.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rhos = np.asarray(rho_grid, dtype=np.float64)
    l = mac_params.l
    thresholds = rhos * l

    def run(block):
        c, start, stop = block
        B = stop - start
        true_keys = sample_keys(mac_params, B, _mix(seed, c, 0))
        fake_keys = sample_keys(mac_params, B, _mix(seed, c, 1))
        t_true = 1.0 - 2.0 * tag_bit_matrix(true_keys, msg, mac_params)
        t_fake = 1.0 - 2.0 * tag_bit_matrix(fake_keys, msg, mac_params)
        miss = np.zeros((len(channels), rhos.size), dtype=np.int64)
        false = np.zeros_like(miss)
        for s, ch in enumerate(channels):
            rng = stream(seed, "roc-noise", s, c)
            for sent, counts, legit in ((t_true, miss, True), (t_fake, false, False)):
                x = sent + ch.sigma_w * rng.standard_normal(sent.shape)
                if ch.q is not None:
                    x = reconstruct(quantize_levels(x, ch), ch)
                eta = np.einsum("ij,ij->i", t_true, x)
                if legit:
                    counts[s] = (eta[:, None] < thresholds[None, :]).sum(axis=0)
                else:
                    counts[s] = (eta[:, None] >= thresholds[None, :]).sum(axis=0)
        return miss, false

    parts = map_chunks(run, chunk_bounds(trials, ROC_CHUNK), workers)
    miss = sum(p[0] for p in parts)
    false = sum(p[1] for p in parts)
    rate = mac_params.n / l
    out = []
    for s, ch in enumerate(channels):
        gamma_t = 1.0 / (2.0 * ch.sigma_w ** 2)
        gamma_b = gamma_t / rate
        for j, rho in enumerate(rhos):
            a = alpha_closed_form(gamma_b, mac_params.n, float(rho))
            b = beta_random_code(gamma_b, mac_params.n, l, float(rho))
            out.append(RocPoint(ch.sigma_w, gamma_t, gamma_b, float(rho),
                                miss[s, j] / trials, false[s, j] / trials, a, b,
                                _binomial_se(a, trials), _binomial_se(b, trials)))
    return out


def monte_carlo_roc(mac_params: MacParams, channel_params: ChannelParams,
                    rho_grid: Sequence[float], trials: int, seed: int,
                    workers: int = 1) -> list[RocPoint]:
    """Empirical completeness error and false acceptance at one noise level."""
    return roc_sweep(mac_params, [channel_params], rho_grid, trials, seed, workers=workers)


def _mix(seed: int, *parts: int) -> int:
    return int(stream(seed, "mix", *parts).integers(0, 2 ** 63))
