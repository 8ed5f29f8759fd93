import numpy as np
import pytest
import scipy.stats
from importlib import resources

from pcsfiber import fec
from pcsfiber.constellation import build_qam, set_pmf
from pcsfiber.fec import (BitMapper, build_bit_mapper, build_dvbs2_code,
                          ldpc_decode, ldpc_encode, map_bits, syndrome_weight,
                          unmap_llrs)
from pcsfiber.shaping import mb_pmf


@pytest.fixture(scope="module")
def code34():
    return build_dvbs2_code("3/4")


@pytest.fixture(scope="module")
def code45():
    return build_dvbs2_code("4/5")


def test_code_dimensions(code34, code45):
    assert (code34.n, code34.k) == (64800, 48600)
    assert (code45.n, code45.k) == (64800, 51840)
    assert code34.q == 45 and code45.q == 36


def test_unsupported_rate_rejected():
    with pytest.raises(ValueError, match="unsupported code rate"):
        build_dvbs2_code("1/2")


def test_all_zero_is_codeword(code34, code45):
    for code in (code34, code45):
        cw = ldpc_encode(np.zeros(code.k, dtype=np.uint8), code)
        assert not cw.any()
        assert syndrome_weight(cw, code) == 0


def test_random_encodes_have_zero_syndrome(code34, code45):
    rng = np.random.default_rng(0)
    for code in (code34, code45):
        for _ in range(5):
            cw = ldpc_encode(rng.integers(0, 2, size=code.k, dtype=np.uint8), code)
            assert syndrome_weight(cw, code) == 0


def test_systematic_bits_copied_exactly(code45):
    rng = np.random.default_rng(1)
    info = (rng.random(code45.k) < 0.8).astype(np.uint8)  # biased data
    cw = ldpc_encode(info, code45)
    np.testing.assert_array_equal(cw[:code45.k], info)
    assert cw[:code45.k].mean() == pytest.approx(info.mean())


def test_encode_length_validated(code34):
    with pytest.raises(ValueError, match="information bits"):
        ldpc_encode(np.zeros(100, dtype=np.uint8), code34)


def test_committed_test_vectors(code34, code45):
    data = resources.files("pcsfiber.data").joinpath("dvbs2_testvectors.npz")
    with resources.as_file(data) as path:
        vecs = np.load(path)
        for tag, code in (("r34", code34), ("r45", code45)):
            for i in range(2):
                info = np.unpackbits(vecs[f"{tag}_info_{i}"])[:code.k]
                cw = np.unpackbits(vecs[f"{tag}_cw_{i}"])[:code.n]
                np.testing.assert_array_equal(ldpc_encode(info, code), cw)


def test_decode_noiseless(code45):
    rng = np.random.default_rng(2)
    info = rng.integers(0, 2, size=code45.k, dtype=np.uint8)
    cw = ldpc_encode(info, code45)
    llr = (1.0 - 2.0 * cw) * 30.0
    bits, iters, converged = ldpc_decode(llr, code45)
    assert converged and iters == 0
    np.testing.assert_array_equal(bits, info)


def test_decode_no_information_does_not_converge(code34):
    bits, iters, converged = ldpc_decode(np.zeros(code34.n), code34, max_iter=5)
    assert not converged
    assert iters == 5


def test_decode_rejects_bad_input(code34):
    llr = np.zeros(code34.n)
    llr[0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        ldpc_decode(llr, code34)
    with pytest.raises(ValueError, match="max_iter"):
        ldpc_decode(np.zeros(code34.n), code34, max_iter=0)
    with pytest.raises(ValueError, match="LLRs"):
        ldpc_decode(np.zeros(100), code34)


def test_ten_bit_flips_always_corrected(code34, code45):
    rng = np.random.default_rng(3)
    for code in (code34, code45):
        ok = 0
        trials = 100
        for _ in range(trials):
            info = rng.integers(0, 2, size=code.k, dtype=np.uint8)
            cw = ldpc_encode(info, code)
            llr = (1.0 - 2.0 * cw) * 8.0
            flip = rng.choice(code.n, size=10, replace=False)
            llr[flip] = -llr[flip]
            bits, _, converged = ldpc_decode(llr, code, max_iter=50)
            ok += converged and np.array_equal(bits, info)
        assert ok >= 0.99 * trials


def test_bpsk_waterfall_bracket(code34):
    """Calibrated waterfall regression: error-free comfortably above the
    cliff, heavy errors 1 dB below it (bracket measured by Monte-Carlo before
    freezing; the cliff sits near Eb/N0 2.0 dB for flooding-50)."""
    rng = np.random.default_rng(4)

    def run(ebn0_db, frames):
        n0 = 1.0 / (0.75 * 10 ** (ebn0_db / 10))
        errs = tot = 0
        for _ in range(frames):
            info = rng.integers(0, 2, size=code34.k, dtype=np.uint8)
            cw = ldpc_encode(info, code34)
            y = 1.0 - 2.0 * cw + rng.standard_normal(code34.n) * np.sqrt(n0 / 2)
            bits, _, _ = ldpc_decode(2.0 * y / (n0 / 2), code34)
            errs += np.count_nonzero(bits != info)
            tot += code34.k
        return errs / tot

    assert run(2.8, 12) < 1e-4
    assert run(1.8, 4) > 1e-2


def test_map_unmap_roundtrip_random_permutations():
    rng = np.random.default_rng(5)
    n, bps = 48, 4
    for _ in range(1000):
        perm = rng.permutation(n)
        mapper = BitMapper(slot_of_codebit=perm, num_symbols=n // bps,
                           bits_per_symbol=bps, parity_positions=np.array([0]))
        cw = rng.integers(0, 2, size=n, dtype=np.uint8)
        labels = map_bits(cw, mapper)
        llrs = 1.0 - 2.0 * labels.astype(float)
        np.testing.assert_array_equal(unmap_llrs(llrs, mapper), 1.0 - 2.0 * cw)


def test_identity_mapper_passthrough():
    n, bps = 64, 4
    mapper = BitMapper(slot_of_codebit=np.arange(n), num_symbols=n // bps,
                       bits_per_symbol=bps, parity_positions=np.array([], dtype=int))
    cw = np.arange(n) % 2
    np.testing.assert_array_equal(map_bits(cw, mapper).ravel(), cw)


def test_default_mapper_frame_geometry(code45):
    c = build_qam(16)
    mapper = build_bit_mapper(code45, c)
    assert mapper.num_symbols == 16200
    assert mapper.bits_per_symbol == 4
    # 51840 systematic + 12960 parity slots, bijective
    assert np.unique(mapper.slot_of_codebit).size == code45.n
    inv = mapper.codebit_of_slot
    np.testing.assert_array_equal(inv[mapper.slot_of_codebit], np.arange(code45.n))


def test_default_mapper_parity_on_uniform_positions(code45):
    c = set_pmf(build_qam(16), mb_pmf(build_qam(16), 0.8))
    mapper = build_bit_mapper(code45, c)
    # MB keeps the rail sign bits (positions 0 and 2) uniform: parity belongs there
    assert set(mapper.parity_positions.tolist()) <= {0, 2}
    parity_slots = mapper.slot_of_codebit[code45.k:]
    positions = parity_slots % 4
    assert set(positions.tolist()) <= {0, 2}


def test_mapped_frame_symbol_histogram_chi2(code45):
    """Shaped systematic bits + parity placement must reproduce the target
    symbol pmf: chi-square acceptance at the 1% level, threshold from the
    inverse chi2 CDF with 15 degrees of freedom."""
    base = build_qam(16)
    c = set_pmf(base, mb_pmf(base, 0.8))
    mapper = build_bit_mapper(code45, c)
    rng = np.random.default_rng(6)
    # systematic bits with the per-slot target marginals (amplitude bits
    # biased, sign bits uniform), as the matcher would emit them
    from pcsfiber.constellation import bit_marginals
    marg = bit_marginals(c)
    slot_pos = mapper.slot_of_codebit[:code45.k] % 4
    sys_bits = (rng.random(code45.k) < marg[slot_pos]).astype(np.uint8)
    cw = ldpc_encode(sys_bits, code45)
    labels = map_bits(cw, mapper)
    symbols = c.index_of_labels(labels)
    observed = np.bincount(symbols, minlength=16)
    expected = c.pmf * mapper.num_symbols
    stat = np.sum((observed - expected) ** 2 / expected)
    assert stat < scipy.stats.chi2.ppf(0.99, df=15)


def test_mapper_size_mismatch_rejected(code45):
    c = build_qam(16)
    mapper = build_bit_mapper(code45, c)
    with pytest.raises(ValueError, match="coded bits"):
        map_bits(np.zeros(100, dtype=np.uint8), mapper)
    with pytest.raises(ValueError, match="shape"):
        unmap_llrs(np.zeros((10, 4)), mapper)
