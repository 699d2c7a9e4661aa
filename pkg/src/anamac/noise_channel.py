"""The artificial channel: bipolar mapping, Gaussian noise, q-bit quantization
and the ANAM packet format.

Frame layout (all multi-octet fields big-endian)::

    offset  size  field
    0       4     magic b"ANAM"
    4       1     version (0x01)
    5       1     q, quantizer bits
    6       2     l, number of tag symbols
    8       8     sigma_w, IEEE 754 binary64
    16      8     clip_A, IEEE 754 binary64
    24      ceil(l*q/8)  level indices, q bits each, MSB-first, zero padded
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .mac_core import MacParams, SecretKey, Tag, compute_tag, coding_rate
from .streams import stream

MAGIC = b"ANAM"
VERSION = 1
HEADER = struct.Struct(">4sBBHdd")
HEADER_SIZE = HEADER.size
DEFAULT_Q = 8


class FrameError(ValueError):
    """Malformed ANAM frame."""


class BadMagicError(FrameError):
    pass


class BadVersionError(FrameError):
    pass


class TruncatedFrameError(FrameError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    """Noise level and quantizer. ``q=None`` selects the unquantized analysis mode.

    ``clip_A`` defaults to ``1 + 4 * sigma_w`` so clipping stays below Q(4) per
    symbol.
    """

    sigma_w: float
    q: Optional[int] = DEFAULT_Q
    clip_A: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_w >= 0 or not math.isfinite(self.sigma_w):
            raise ValueError(f"sigma_w must be finite and >= 0, got {self.sigma_w}")
        if self.q is not None and not 1 <= self.q <= 16:
            raise ValueError(f"q must lie in 1..16, got {self.q}")
        if self.clip_A is None:
            object.__setattr__(self, "clip_A", 1.0 + 4.0 * self.sigma_w)
        # The clip level only matters to the quantizer.
        if self.q is not None and not self.clip_A > 1:
            raise ValueError(f"clip_A must exceed 1, got {self.clip_A}")

    @property
    def levels(self) -> int:
        return 1 << self.q

    @property
    def step(self) -> float:
        return 2.0 * self.clip_A / self.levels

    def with_sigma(self, sigma_w: float) -> "ChannelParams":
        """Same quantizer resolution at a new noise level (clip range re-derived)."""
        return ChannelParams(sigma_w, self.q)


@dataclass(frozen=True, eq=False)
class NoisyTag:
    """A transmitted tag. ``levels`` is ``None`` in unquantized mode."""

    levels: Optional[np.ndarray]
    values: np.ndarray
    saturated: int = field(default=0, compare=False)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.levels is not None:
            lev = np.ascontiguousarray(self.levels, dtype=np.int64)
            lev.setflags(write=False)
            if lev.shape != vals.shape:
                raise ValueError("levels and values must have equal length")
            object.__setattr__(self, "levels", lev)

    @property
    def l(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        if not isinstance(other, NoisyTag):
            return NotImplemented
        if (self.levels is None) != (other.levels is None):
            return False
        if self.levels is not None and not np.array_equal(self.levels, other.levels):
            return False
        return np.array_equal(self.values, other.values)


def bipolarize(tag) -> np.ndarray:
    """Map bit ``b`` to ``1 - 2b``."""
    bits = tag.bits if isinstance(tag, Tag) else np.asarray(tag)
    return 1.0 - 2.0 * bits.astype(np.float64)


def gaussian_noise(size, sigma_w: float, noise_seed: int) -> np.ndarray:
    """``size`` i.i.d. N(0, sigma_w^2) draws; symbol ``i`` depends only on (seed, i)."""
    return sigma_w * stream(noise_seed, "noise").standard_normal(size)


def corrupt(x, sigma_w: float, noise_seed: int) -> np.ndarray:
    if sigma_w < 0:
        raise ValueError("sigma_w must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma_w == 0:
        return x.copy()
    return x + gaussian_noise(x.shape, sigma_w, noise_seed)


def quantize_levels(x, params: ChannelParams) -> np.ndarray:
    """Mid-rise level indices, clamped to ``[0, 2^q - 1]``."""
    idx = np.floor((np.asarray(x, dtype=np.float64) + params.clip_A) / params.step)
    return np.clip(idx, 0, params.levels - 1).astype(np.int64)


def reconstruct(levels, params: ChannelParams) -> np.ndarray:
    return -params.clip_A + (np.asarray(levels, dtype=np.float64) + 0.5) * params.step


def quantize(x, params: ChannelParams) -> NoisyTag:
    if params.q is None:
        raise ValueError("quantize needs a quantizer (q is None)")
    x = np.asarray(x, dtype=np.float64)
    levels = quantize_levels(x, params)
    saturated = int(np.count_nonzero(np.abs(x) > params.clip_A))
    return NoisyTag(levels, reconstruct(levels, params), saturated)


def transmit(x, params: ChannelParams, noise_seed: int) -> NoisyTag:
    """Corrupt then quantize (or pass through in unquantized mode)."""
    y = corrupt(x, params.sigma_w, noise_seed)
    if params.q is None:
        return NoisyTag(None, y)
    return quantize(y, params)


def make_ana_tag(key: SecretKey, msg: bytes, mac_params: MacParams,
                 channel_params: ChannelParams, noise_seed: int) -> NoisyTag:
    """The full transmitted tag: quantize(corrupt(bipolarize(tag)))."""
    tag = compute_tag(key, msg, mac_params)
    return transmit(bipolarize(tag), channel_params, noise_seed)


def snr_params(sigma_w: float, n: int, l: int, r: int = 1) -> tuple[float, float]:
    """Return ``(gamma_t, gamma_b)`` for noise level ``sigma_w``."""
    if not sigma_w > 0:
        raise ValueError("sigma_w must be positive to define an SNR")
    gamma_t = 1.0 / (2.0 * sigma_w ** 2)
    return gamma_t, gamma_t / coding_rate(n, r, l)


def ebn0_to_gamma(ebn0_db: float, rate: float) -> tuple[float, float]:
    """Convert E_b/N_0 in dB to ``(gamma_b, gamma_t)`` with ``gamma_t = rate * gamma_b``."""
    gamma_b = 10.0 ** (ebn0_db / 10.0)
    return gamma_b, rate * gamma_b


def sigma_from_gamma_t(gamma_t: float) -> float:
    return 1.0 / math.sqrt(2.0 * gamma_t)


def encode_packet(tag: NoisyTag, params: ChannelParams) -> bytes:
    if params.q is None or tag.levels is None:
        raise ValueError("only quantized tags can be framed")
    l = tag.l
    if l > 0xFFFF:
        raise ValueError(f"tag length {l} exceeds 65535")
    levels = tag.levels
    if levels.size and (levels.min() < 0 or levels.max() >= params.levels):
        raise ValueError("level index out of range for q")
    header = HEADER.pack(MAGIC, VERSION, params.q, l, params.sigma_w, params.clip_A)
    # Each level becomes q bits, MSB first.
    shifts = np.arange(params.q - 1, -1, -1)
    bits = ((levels[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()
    return header + np.packbits(bits).tobytes()


def decode_packet(data: bytes) -> tuple[NoisyTag, ChannelParams]:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("frame does not start with b'ANAM'")
    if len(data) < 5:
        raise TruncatedFrameError("frame ends inside the header")
    if data[4] != VERSION:
        raise BadVersionError(f"unsupported frame version {data[4]}")
    if len(data) < HEADER_SIZE:
        raise TruncatedFrameError("frame ends inside the header")
    _, _, q, l, sigma_w, clip_A = HEADER.unpack_from(data)
    try:
        params = ChannelParams(sigma_w, q, clip_A)
    except ValueError as exc:
        raise FrameError(f"invalid channel parameters in header: {exc}") from None
    need = -(-l * q // 8)
    payload = data[HEADER_SIZE:]
    if len(payload) < need:
        raise TruncatedFrameError(f"payload has {len(payload)} octets, expected {need}")
    if len(payload) > need:
        raise FrameError(f"{len(payload) - need} trailing octets after payload")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:l * q].reshape(l, q)
    weights = 1 << np.arange(q - 1, -1, -1, dtype=np.int64)
    levels = bits.astype(np.int64) @ weights if l else np.zeros(0, dtype=np.int64)
    return NoisyTag(levels, reconstruct(levels, params)), params
