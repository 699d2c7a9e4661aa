"""Receiver-side verification.

The practical test correlates the received values with the bipolar form of
the expected tag and accepts when the correlation reaches ``rho * l``. The
closed forms below give its completeness error (``alpha``) and false
acceptance probability (``beta``) under Gaussian noise, ignoring
quantization. ``optimal_llr_statistic`` is the likelihood-ratio test over an
explicit (small) key space, for comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import log_ndtr, logsumexp, ndtr

from .bounds import LN2, DistanceDistribution, random_code_distribution
from .mac_core import MacParams, SecretKey, Tag, compute_tag, tag_bit_matrix
from .noise_channel import ChannelParams, NoisyTag, bipolarize

MAX_LLR_KEYS = 1 << 20


class KeySpaceError(ValueError):
    """Key space too large to enumerate, or inconsistent with the request."""


@dataclass(frozen=True)
class VerifyConfig:
    rho: float
    mac_params: MacParams
    channel_params: ChannelParams

    def __post_init__(self):
        if not -1.0 <= self.rho < 1.0:
            warnings.warn(f"rho={self.rho} is outside [-1, 1); the test is degenerate",
                          stacklevel=2)

    @property
    def threshold(self) -> float:
        return self.rho * self.mac_params.l


@dataclass(frozen=True)
class Decision:
    accept: bool
    eta: float
    threshold: float


def q_function(x):
    """Gaussian upper tail ``Q(x) = P(N(0,1) > x)``."""
    out = ndtr(-np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


def correlation_statistic(expected: Tag, received: NoisyTag) -> float:
    if expected.l != received.l:
        raise ValueError(f"length mismatch: tag {expected.l}, received {received.l}")
    return float(np.dot(bipolarize(expected), received.values))


def verify(key: SecretKey, msg: bytes, received: NoisyTag, cfg: VerifyConfig) -> Decision:
    eta = correlation_statistic(compute_tag(key, msg, cfg.mac_params), received)
    thr = cfg.threshold
    return Decision(eta >= thr, eta, thr)


def alpha_closed_form(gamma_b: float, n: int, rho: float) -> float:
    """Completeness error ``Q(sqrt(2 gamma_b n)(1 - rho))``."""
    if gamma_b <= 0:
        raise ValueError("gamma_b must be positive")
    return q_function(math.sqrt(2.0 * gamma_b * n) * (1.0 - rho))


def beta_equidistant(gamma_b: float, n: int, delta_d: float, rho: float) -> float:
    """False acceptance for a code whose distinct words sit at normalized distance ``delta_d``."""
    if not 0.0 <= delta_d <= 1.0:
        raise ValueError("delta_d must lie in [0, 1]")
    return q_function(math.sqrt(2.0 * gamma_b * n) * (2.0 * delta_d - (1.0 - rho)))


def beta_from_distribution(gamma_b: float, n: int, dist: DistanceDistribution,
                           rho: float) -> float:
    """``sum_{d>0} A_d 2^-n Q(sqrt(2 gamma_b n)(2 d/l - (1 - rho)))``."""
    l = dist.l
    d = np.arange(1, l + 1)
    args = math.sqrt(2.0 * gamma_b * n) * (2.0 * d / l - (1.0 - rho))
    logw = dist.log_weights[1:] - n * LN2
    return float(np.exp(logsumexp(logw + log_ndtr(-args))))


def beta_random_code(gamma_b: float, n: int, l: int, rho: float) -> float:
    """False acceptance of a uniformly random wrong key when tags behave like a random code."""
    if gamma_b <= 0:
        raise ValueError("gamma_b must be positive")
    return beta_from_distribution(gamma_b, n, random_code_distribution(l, n), rho)


def _key_values(keys) -> np.ndarray:
    return np.array([k.value if isinstance(k, SecretKey) else int(k) for k in keys],
                    dtype=np.int64)


def llr_batch(values: np.ndarray, claimed_rows: np.ndarray, table: np.ndarray,
              sigma_w: float) -> np.ndarray:
    """Vectorized optimal statistic.

    ``values`` is (B, l) received values, ``claimed_rows`` the row of each
    claimed key in ``table`` (K, l) of bipolar tags.
    """
    # ||y - t||^2 = ||y||^2 - 2 y.t + l, so only y.t varies with the key.
    logits = values @ table.T / sigma_w ** 2
    own = logits[np.arange(len(values)), claimed_rows]
    return own - logsumexp(logits, axis=1) + math.log(table.shape[0])


def optimal_llr_statistic(received: NoisyTag, msg: bytes, claimed_key,
                          key_space: Sequence, sigma_w: float,
                          mac_params: MacParams) -> float:
    """``log p(y|k) - log sum_k' p(y|k') P(k')`` with a uniform prior over ``key_space``."""
    keys = _key_values(key_space)
    if len(keys) > MAX_LLR_KEYS:
        raise KeySpaceError(f"key space of {len(keys)} keys exceeds {MAX_LLR_KEYS}")
    if sigma_w <= 0:
        raise ValueError("sigma_w must be positive")
    claimed = claimed_key.value if isinstance(claimed_key, SecretKey) else int(claimed_key)
    rows = np.flatnonzero(keys == claimed)
    if rows.size == 0:
        raise KeySpaceError("claimed key is not in the key space")
    table = 1.0 - 2.0 * tag_bit_matrix(keys.tolist(), msg, mac_params)
    return float(llr_batch(received.values[None, :], rows[:1], table, sigma_w)[0])
