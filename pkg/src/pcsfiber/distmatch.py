"""Constant-composition distribution matching and its emulation mode.

The matcher maps k uniform data bits to an n-letter sequence with a fixed
letter composition (an n-type quantization of the target pmf). Encoding and
decoding use exact integer interval arithmetic over the shrinking multiset:
the number of completions after consuming letter ``a`` is
multinomial(n−1; counts−e_a) = N·counts[a]/n, an exact integer, so the map is
a bijection between [0, 2^k) and the first 2^k multiset permutations in
lexicographic order. No precision is lost and results are platform-independent
by construction.

Emulation mode sidesteps the matcher and draws i.i.d. symbols from the target
pmf directly, reproducing the reference behaviour for rate/BER studies.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .constellation import Constellation


class DecodeError(ValueError):
    """Raised when a letter sequence cannot be inverted to data bits."""


def _multinomial(n: int, counts) -> int:
    total = 1
    acc = 0
    for c in counts:
        acc += c
        total *= math.comb(acc, c)
    assert acc == n
    return total


@dataclass(frozen=True)
class Composition:
    """Letter counts of a constant-composition block.

    counts[a] is how many times letter ``a`` appears in every output block of
    length n = sum(counts); k is the number of data bits carried per block.
    """

    counts: tuple
    k: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts):
            raise ValueError("letter counts must be nonnegative")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.k > self.max_bits():
            raise ValueError(
                f"k={self.k} exceeds log2(multinomial) = {self.max_bits()} of this composition")

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def num_letters(self) -> int:
        return len(self.counts)

    @property
    def rate(self) -> float:
        return self.k / self.n

    def max_bits(self) -> int:
        """floor(log2(multinomial(n; counts))): the largest admissible k."""
        return _multinomial(self.n, self.counts).bit_length() - 1

    def sequence_count(self) -> int:
        return _multinomial(self.n, self.counts)


def composition_from_pmf(pmf, n: int, k: int | None = None) -> Composition:
    """Quantize ``pmf`` to the n-type minimizing KL(counts/n || pmf).

    Largest-remainder rounding followed by single-unit improvement moves; the
    objective is separable convex over the integer simplex so the local search
    terminates at the global minimum.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if n < pmf.size:
        raise ValueError(f"n={n} must be at least the alphabet size {pmf.size}")
    if np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-9:
        raise ValueError("pmf must be a probability vector")

    def kl_term(c, p):
        if c == 0:
            return 0.0
        if p == 0.0:
            return math.inf
        q = c / n
        return q * math.log(q / p)

    counts = np.floor(n * pmf).astype(int)
    rem = n - counts.sum()
    order = np.argsort(-(n * pmf - counts))
    counts[order[:rem]] += 1

    improved = True
    while improved:
        improved = False
        best = 0.0
        move = None
        for a in range(pmf.size):
            if counts[a] == 0:
                continue
            base_a = kl_term(counts[a], pmf[a]) + kl_term(counts[a] - 1, pmf[a])
            for b in range(pmf.size):
                if a == b:
                    continue
                delta = (kl_term(counts[a] - 1, pmf[a]) + kl_term(counts[b] + 1, pmf[b])
                         - kl_term(counts[a], pmf[a]) - kl_term(counts[b], pmf[b]))
                if delta < best - 1e-15:
                    best = delta
                    move = (a, b)
        if move is not None:
            counts[move[0]] -= 1
            counts[move[1]] += 1
            improved = True

    comp_counts = tuple(int(c) for c in counts)
    kmax = _multinomial(n, comp_counts).bit_length() - 1
    return Composition(comp_counts, kmax if k is None else k)


def _bits_to_int(bits) -> int:
    val = 0
    for b in bits:
        val = (val << 1) | int(b)
    return val


def _int_to_bits(val: int, width: int) -> np.ndarray:
    return np.array([(val >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def ccdm_encode(data_bits, comp: Composition) -> np.ndarray:
    """Map k data bits to the n-letter sequence of rank index(bits).

    The output histogram equals comp.counts exactly for every input.
    """
    data_bits = np.asarray(data_bits)
    if data_bits.size != comp.k:
        raise ValueError(f"expected {comp.k} data bits, got {data_bits.size}")
    d = _bits_to_int(data_bits)
    counts = list(comp.counts)
    n = comp.n
    total = _multinomial(n, counts)
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        rem = n - pos
        for a in range(len(counts)):
            if counts[a] == 0:
                continue
            sub = total * counts[a] // rem
            if d < sub:
                out[pos] = a
                counts[a] -= 1
                total = sub
                break
            d -= sub
    assert total == 1 and d == 0
    return out


def ccdm_decode(letters, comp: Composition) -> np.ndarray:
    """Invert :func:`ccdm_encode`.

    Raises DecodeError when the letter histogram does not match the
    composition or the sequence ranks outside the encoder's image; a frame
    corruption is always reported, never silently mis-decoded.
    """
    letters = np.asarray(letters, dtype=np.int64)
    if letters.size != comp.n:
        raise DecodeError(f"expected {comp.n} letters, got {letters.size}")
    hist = np.bincount(letters, minlength=comp.num_letters)
    if letters.size and (letters.min() < 0 or letters.max() >= comp.num_letters):
        raise DecodeError("letter out of alphabet range")
    if tuple(int(h) for h in hist) != comp.counts:
        raise DecodeError("letter histogram does not match the composition")
    counts = list(comp.counts)
    n = comp.n
    total = _multinomial(n, counts)
    d = 0
    for pos in range(n):
        rem = n - pos
        a_obs = int(letters[pos])
        for a in range(a_obs):
            if counts[a]:
                d += total * counts[a] // rem
        total = total * counts[a_obs] // rem
        counts[a_obs] -= 1
    if d >= (1 << comp.k):
        raise DecodeError("sequence lies outside the encoder's image")
    return _int_to_bits(d, comp.k)


@dataclass(frozen=True)
class ShapedBitStream:
    """Label bits of a shaped symbol stream (one row of bits per symbol)."""

    bits: np.ndarray           # (num_symbols, bits_per_symbol) uint8
    symbols: np.ndarray        # (num_symbols,) point indices
    target_marginals: np.ndarray

    @property
    def frame_length(self) -> int:
        return self.bits.shape[0]


def emulate_shaped_bits(c: Constellation, count: int, seed: int) -> ShapedBitStream:
    """Draw ``count`` i.i.d. symbols from the constellation pmf and emit their
    label bits; reproducible under ``seed``."""
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(seed)
    idx = rng.choice(c.order, size=count, p=c.pmf)
    return ShapedBitStream(c.labels[idx].copy(), idx, c.pmf @ c.labels)


# --- DM frame serialization -------------------------------------------------
#
# Byte layout (little-endian):
#   u32 n, u32 A, A × u32 counts, u32 k, then ceil(k/8) payload bytes holding
#   the data bits MSB-first within each byte (np.packbits order).

def pack_frame(comp: Composition, data_bits) -> bytes:
    data_bits = np.asarray(data_bits, dtype=np.uint8)
    if data_bits.size != comp.k:
        raise ValueError(f"expected {comp.k} payload bits")
    header = struct.pack(f"<II{comp.num_letters}II",
                         comp.n, comp.num_letters, *comp.counts, comp.k)
    return header + np.packbits(data_bits).tobytes()


def unpack_frame(blob: bytes) -> tuple[Composition, np.ndarray]:
    n, a = struct.unpack_from("<II", blob, 0)
    counts = struct.unpack_from(f"<{a}I", blob, 8)
    (k,) = struct.unpack_from("<I", blob, 8 + 4 * a)
    payload = np.frombuffer(blob, dtype=np.uint8, offset=12 + 4 * a)
    bits = np.unpackbits(payload)[:k]
    comp = Composition(tuple(counts), k)
    if comp.n != n:
        raise ValueError("frame header inconsistent: counts do not sum to n")
    return comp, bits
