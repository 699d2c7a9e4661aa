"""Keys, the keyed tag function and the r-fold codeword view.

Bit strings follow one convention throughout: bit index 0 is the most
significant bit of the first octet. A key is held as an integer whose bit
``i`` (in that order) is ``(value >> (n - 1 - i)) & 1``.

Two tag functions are provided:

``reference``
    AES in counter mode. The n-bit key is packed MSB-first, zero-padded to
    the next AES key size (128, 192 or 256 bits), and the keystream
    ``E_k(D), E_k(D + 1), ...`` is generated with the 128-bit message digest
    ``D`` as the initial counter block. The tag is the first ``l`` keystream
    bits.

``toy``
    For exhaustive experiments with ``n <= 24``. Tag bits are the output of
    SHA-256 in counter mode over ``b"anamac-toy" | n | key | D | ctr``. Only
    its statistics matter; no other implementation is expected to reproduce
    its bits.

The digest ``D`` is the first 16 octets of SHA-256 of the message.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .streams import stream

MAX_KEY_BITS = 256
TOY_MAX_KEY_BITS = 24


class KeyMismatchError(ValueError):
    """The key length does not match the MAC parameters."""


def digest(msg: bytes) -> bytes:
    """128-bit message digest used as the PRF input."""
    return hashlib.sha256(bytes(msg)).digest()[:16]


def _aes_key(value: int, n: int) -> bytes:
    packed = pack_int(value, n)
    size = 16 if len(packed) <= 16 else 24 if len(packed) <= 24 else 32
    return packed + bytes(size - len(packed))


def _reference_prf(value: int, n: int, d: bytes, nbytes: int) -> bytes:
    blocks = -(-nbytes // 16)
    enc = Cipher(algorithms.AES(_aes_key(value, n)), modes.CTR(d)).encryptor()
    return enc.update(bytes(16 * blocks))[:nbytes]


def _toy_prf(value: int, n: int, d: bytes, nbytes: int) -> bytes:
    head = b"anamac-toy" + bytes([n]) + value.to_bytes(4, "big") + d
    out = bytearray()
    ctr = 0
    while len(out) < nbytes:
        out += hashlib.sha256(head + ctr.to_bytes(4, "big")).digest()
        ctr += 1
    return bytes(out[:nbytes])


# A PRF maps (key value, n, digest, number of octets) to keystream octets.
PrfFunction = Callable[[int, int, bytes, int], bytes]

_PRFS: dict[str, PrfFunction] = {"reference": _reference_prf, "toy": _toy_prf}


def register_prf(name: str, fn: PrfFunction) -> None:
    """Add a tag function under ``name`` (used for degenerate test instances)."""
    _PRFS[name] = fn


def prf_ids() -> tuple[str, ...]:
    return tuple(_PRFS)


def pack_int(value: int, nbits: int) -> bytes:
    """Pack the low ``nbits`` of ``value`` MSB-first into ``ceil(nbits/8)`` octets."""
    nbytes = -(-nbits // 8)
    return (value << (8 * nbytes - nbits)).to_bytes(nbytes, "big")


def bits_from_bytes(data: bytes, nbits: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:nbits]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.uint8)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MacParams:
    n: int
    l: int
    prf_id: str = "reference"

    def __post_init__(self):
        if self.n < 1 or self.l < 1:
            raise ValueError(f"n and l must be positive, got n={self.n}, l={self.l}")
        if self.prf_id not in _PRFS:
            raise ValueError(f"unknown prf_id {self.prf_id!r}; expected one of {prf_ids()}")
        if self.prf_id == "reference" and self.n > MAX_KEY_BITS:
            raise ValueError(f"reference PRF supports n <= {MAX_KEY_BITS}")
        if self.prf_id == "toy" and self.n > TOY_MAX_KEY_BITS:
            raise ValueError(f"toy PRF supports n <= {TOY_MAX_KEY_BITS}")


@dataclass(frozen=True)
class SecretKey:
    value: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("key length must be positive")
        if not 0 <= self.value < (1 << self.n):
            raise ValueError(f"key value does not fit in {self.n} bits")

    @property
    def bits(self) -> np.ndarray:
        return _frozen(bits_from_bytes(self.to_bytes(), self.n))

    def to_bytes(self) -> bytes:
        return pack_int(self.value, self.n)

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bits(cls, bits: Sequence[int]) -> "SecretKey":
        value = 0
        for b in bits:
            value = (value << 1) | (int(b) & 1)
        return cls(value, len(bits))

    @classmethod
    def from_hex(cls, text: str, n: int) -> "SecretKey":
        raw = int(text, 16)
        nbytes = -(-n // 8)
        return cls(raw >> (8 * nbytes - n), n)


@dataclass(frozen=True, eq=False)
class Tag:
    """A clean l-bit tag (or an r-fold concatenation of tags)."""

    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen(self.bits))
        if self.bits.ndim != 1 or self.bits.size == 0:
            raise ValueError("tag bits must be a non-empty 1-D array")

    @property
    def l(self) -> int:
        return int(self.bits.size)

    def __eq__(self, other):
        return isinstance(other, Tag) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def to_bytes(self) -> bytes:
        return np.packbits(self.bits).tobytes()

    def block(self, i: int, l: int) -> "Tag":
        return Tag(self.bits[i * l:(i + 1) * l])


def _key_value(key) -> int:
    return key.value if isinstance(key, SecretKey) else int(key)


def gen_key(params: MacParams, seed: int) -> SecretKey:
    """Draw a uniform n-bit key, deterministically from ``seed``."""
    if params.n < 1:
        raise ValueError("invalid key length")
    bits = stream(seed, "gen_key", params.n).integers(0, 2, size=params.n, dtype=np.uint8)
    return SecretKey.from_bits(bits)


def sample_keys(params: MacParams, count: int, seed: int) -> list[int]:
    """``count`` uniform key values as Python integers."""
    rng = stream(seed, "sample_keys", params.n)
    nbytes = -(-params.n // 8)
    raw = rng.integers(0, 256, size=(count, nbytes), dtype=np.uint8)
    shift = 8 * nbytes - params.n
    return [int.from_bytes(row.tobytes(), "big") >> shift for row in raw]


def tag_bytes(key, msg: bytes, params: MacParams) -> bytes:
    if isinstance(key, SecretKey) and key.n != params.n:
        raise KeyMismatchError(f"key has {key.n} bits, params expect n={params.n}")
    nbytes = -(-params.l // 8)
    out = _PRFS[params.prf_id](_key_value(key), params.n, digest(msg), nbytes)
    tail = 8 * nbytes - params.l
    if tail:
        out = out[:-1] + bytes([out[-1] & (0xFF << tail) & 0xFF])
    return out


def compute_tag(key: SecretKey, msg: bytes, params: MacParams) -> Tag:
    """The clean tag of ``msg`` under ``key``."""
    if key.n != params.n:
        raise KeyMismatchError(f"key has {key.n} bits, params expect n={params.n}")
    return Tag(bits_from_bytes(tag_bytes(key, msg, params), params.l))


def codeword(key: SecretKey, msgs: Sequence[bytes], params: MacParams) -> Tag:
    """Concatenate the tags of ``msgs``: one codeword of the r-order code."""
    if len(msgs) == 0:
        raise ValueError("codeword needs at least one message")
    return Tag(np.concatenate([compute_tag(key, m, params).bits for m in msgs]))


def coding_rate(n: int, r: int, l: int) -> float:
    """Key bits per transmitted tag bit, ``n / (r * l)``."""
    if n <= 0 or r <= 0 or l <= 0:
        raise ValueError(f"coding rate needs positive n, r, l (got {n}, {r}, {l})")
    return n / (r * l)


def tag_matrix(keys: Iterable, msg: bytes, params: MacParams) -> np.ndarray:
    """Packed tags for many keys, shape ``(len(keys), ceil(l/8))``, dtype uint8."""
    nbytes = -(-params.l // 8)
    buf = b"".join(tag_bytes(k, msg, params) for k in keys)
    return np.frombuffer(buf, dtype=np.uint8).reshape(-1, nbytes)


def tag_bit_matrix(keys: Iterable, msg: bytes, params: MacParams) -> np.ndarray:
    """Unpacked tag bits for many keys, shape ``(len(keys), l)``."""
    packed = tag_matrix(keys, msg, params)
    return np.unpackbits(packed, axis=1)[:, :params.l]


def hamming_distances(packed: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Row-wise Hamming distance of packed tags from one packed reference tag."""
    x = np.bitwise_xor(packed, reference[None, :])
    return np.unpackbits(x, axis=1).sum(axis=1, dtype=np.int64)


def birthday_collisions(keyspace: int, l: int) -> float:
    """Expected number of colliding key pairs for a random map into ``2**l`` tags."""
    return math.comb(keyspace, 2) * 2.0 ** (-l)
