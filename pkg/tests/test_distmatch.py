import itertools
import math

import numpy as np
import pytest
import scipy.stats

from pcsfiber.constellation import build_qam, set_pmf
from pcsfiber.distmatch import (Composition, DecodeError, ccdm_decode, ccdm_encode,
                                composition_from_pmf, emulate_shaped_bits,
                                pack_frame, unpack_frame)
from pcsfiber.shaping import mb_pmf


def kl(counts, pmf):
    n = sum(counts)
    total = 0.0
    for c, p in zip(counts, pmf):
        if c == 0:
            continue
        if p == 0:
            return math.inf
        total += (c / n) * math.log((c / n) / p)
    return total


def test_composition_trivial_cases():
    assert composition_from_pmf([0.5, 0.5], 4).counts == (2, 2)
    assert composition_from_pmf([0.25] * 4, 8).counts == (2, 2, 2, 2)


def test_composition_matches_exhaustive_kl_search():
    pmf = [0.4, 0.3, 0.2, 0.1]
    n = 10
    got = composition_from_pmf(pmf, n)
    best = min((tuple(c) for c in itertools.product(range(n + 1), repeat=4)
                if sum(c) == n), key=lambda c: kl(c, pmf))
    assert kl(got.counts, pmf) == pytest.approx(kl(best, pmf), abs=1e-12)


def test_composition_random_pmfs_against_bruteforce():
    rng = np.random.default_rng(17)
    for _ in range(10):
        pmf = rng.dirichlet(np.ones(3))
        n = 12
        got = composition_from_pmf(pmf, n)
        best = min((c for c in itertools.product(range(n + 1), repeat=3)
                    if sum(c) == n), key=lambda c: kl(c, pmf))
        assert kl(got.counts, pmf) == pytest.approx(kl(best, pmf), abs=1e-12)


def test_composition_validation():
    with pytest.raises(ValueError, match="at least the alphabet"):
        composition_from_pmf([0.5, 0.5], 1)
    with pytest.raises(ValueError, match="exceeds"):
        Composition((2, 2), k=5)  # multinomial(4;2,2)=6 -> max 2 bits


def test_ccdm_two_sequences_one_bit():
    comp = Composition((1, 1), k=1)
    seqs = {tuple(ccdm_encode([b], comp)) for b in (0, 1)}
    assert seqs == {(0, 1), (1, 0)}


def test_ccdm_output_composition_exact():
    rng = np.random.default_rng(3)
    comp = composition_from_pmf([0.45, 0.3, 0.15, 0.1], 64)
    for _ in range(20):
        bits = rng.integers(0, 2, size=comp.k)
        letters = ccdm_encode(bits, comp)
        assert tuple(np.bincount(letters, minlength=4)) == comp.counts


def test_ccdm_exhaustive_roundtrip_toy():
    comp = Composition((5, 3), k=Composition((5, 3), k=0).max_bits())
    assert comp.k == 5  # C(8,3) = 56 -> 5 bits
    outputs = set()
    for val in range(1 << comp.k):
        bits = [(val >> (comp.k - 1 - i)) & 1 for i in range(comp.k)]
        letters = ccdm_encode(bits, comp)
        outputs.add(tuple(letters))
        np.testing.assert_array_equal(ccdm_decode(letters, comp), bits)
    assert len(outputs) == 1 << comp.k


def test_ccdm_out_of_image_detected():
    comp = Composition((5, 3), k=5)
    image = {tuple(ccdm_encode([(v >> (4 - i)) & 1 for i in range(5)], comp))
             for v in range(32)}
    non_image = [seq for seq in itertools.permutations([0] * 5 + [1] * 3)
                 if seq not in image]
    # every valid-composition sequence outside the image must raise, never
    # return a wrong payload
    for seq in set(non_image):
        with pytest.raises(DecodeError, match="image"):
            ccdm_decode(np.array(seq), comp)


def test_ccdm_composition_mismatch_detected():
    comp = Composition((5, 3), k=5)
    with pytest.raises(DecodeError, match="histogram"):
        ccdm_decode(np.array([0] * 4 + [1] * 4), comp)
    with pytest.raises(DecodeError, match="letters"):
        ccdm_decode(np.array([0] * 7), comp)


def test_single_letter_alphabet_carries_zero_bits():
    comp = Composition((6,), k=0)
    letters = ccdm_encode(np.array([], dtype=np.uint8), comp)
    np.testing.assert_array_equal(letters, np.zeros(6, dtype=np.int64))
    assert ccdm_decode(letters, comp).size == 0


def test_ccdm_rate_approaches_entropy():
    pmf = [0.6, 0.25, 0.1, 0.05]
    h = -sum(p * math.log2(p) for p in pmf)
    rates = []
    for n in (64, 256, 1024):
        comp = composition_from_pmf(pmf, n)
        rates.append(comp.k / comp.n)
    assert all(np.diff(rates) >= -1e-3)
    assert rates[-1] <= h
    assert rates[-1] >= h - 0.1


def test_emulation_uniform_bit_frequencies():
    c = build_qam(16)
    stream = emulate_shaped_bits(c, 20000, seed=9)
    freq = stream.bits.mean(axis=0)
    sigma = 0.5 / np.sqrt(20000)
    assert np.all(np.abs(freq - 0.5) < 4 * sigma)


def test_emulation_degenerate_pmf_constant():
    c = build_qam(16)
    one = np.zeros(16)
    one[7] = 1.0
    stream = emulate_shaped_bits(set_pmf(c, one), 100, seed=1)
    assert np.all(stream.symbols == 7)
    assert np.unique(stream.bits, axis=0).shape[0] == 1


def test_emulation_histogram_chi2():
    # operating-style MB pmf, 2^16 symbols: chi-square acceptance at the 1%
    # significance level (threshold from the chi2 inverse CDF, 15 dof)
    c = build_qam(16)
    pmf = mb_pmf(c, 0.8)
    stream = emulate_shaped_bits(set_pmf(c, pmf), 1 << 16, seed=77)
    observed = np.bincount(stream.symbols, minlength=16)
    expected = pmf * (1 << 16)
    stat = np.sum((observed - expected) ** 2 / expected)
    assert stat < scipy.stats.chi2.ppf(0.99, df=15)


def test_emulation_and_ccdm_agree_statistically():
    pmf = np.array([0.5, 0.3, 0.15, 0.05])
    n = 1024
    comp = composition_from_pmf(pmf, n)
    rng = np.random.default_rng(11)
    bits = rng.integers(0, 2, size=comp.k)
    letters = ccdm_encode(bits, comp)
    ccdm_freq = np.bincount(letters, minlength=4) / n
    # two-sample consistency: both empirical pmfs near the target
    c = build_qam(16)
    target16 = np.zeros(16)
    target16[:4] = pmf
    stream = emulate_shaped_bits(set_pmf(c, target16), n, seed=5)
    emu_freq = np.bincount(stream.symbols, minlength=16)[:4] / n
    assert np.max(np.abs(ccdm_freq - pmf)) < 0.05
    assert np.max(np.abs(emu_freq - pmf)) < 0.05


def test_frame_pack_unpack_roundtrip():
    comp = composition_from_pmf([0.4, 0.35, 0.25], 32)
    rng = np.random.default_rng(2)
    bits = rng.integers(0, 2, size=comp.k, dtype=np.uint8)
    blob = pack_frame(comp, bits)
    comp2, bits2 = unpack_frame(blob)
    assert comp2 == comp
    np.testing.assert_array_equal(bits2, bits)
    # documented layout: n, A, counts, k as little-endian u32 before payload
    import struct
    n, a = struct.unpack_from("<II", blob, 0)
    assert (n, a) == (comp.n, comp.num_letters)
