"""Coded-modulation chain assembly: distribution matcher (real or emulated),
systematic LDPC, shaping-preserving bit mapping, demapping and decoding.

Both reference chains carry 3 information bits per symbol per polarization:

* uniform: data -> rate-3/4 LDPC -> 16-QAM (4 bits/symbol, 1 bit redundancy)
* shaped:  data -> DM (rate 3/3.2) -> rate-4/5 LDPC -> shaped 16-QAM
           (0.8 redundancy bits/symbol; 1 bit total redundancy split between
           shaping and coding)

The shaped systematic stream is class-structured: amplitude-position slots
carry the biased matcher output, leftover sign-position slots carry uniform
data bits, and the near-uniform parity lands on sign-position slots so the
symbol distribution at the modulator equals the shaping target.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import distmatch, fec, metrics
from .constellation import Constellation, average_power, bit_marginals, build_qam, set_pmf
from .distmatch import Composition
from .fec import BitMapper, LdpcCode

INFO_BITS_PER_SYMBOL = 3  # per polarization, both chains

UNIFORM_RATE = Fraction(3, 4)
SHAPED_RATE = Fraction(4, 5)


class RateAuditError(ValueError):
    """Configuration does not close the 3 bits/symbol information-rate audit."""


def amplitude_positions(c: Constellation) -> np.ndarray:
    """Label positions that encode rail amplitudes (all but the two rail
    sign bits, which stay uniform under any symmetric pmf)."""
    bps = c.bits_per_symbol
    return np.array([p for p in range(bps) if p not in (0, bps // 2)], dtype=np.int64)


def amplitude_letter_pmf(c: Constellation) -> np.ndarray:
    """pmf of the amplitude-class letter (packed amplitude bits) of a symbol."""
    amp_pos = amplitude_positions(c)
    weights = 1 << np.arange(amp_pos.size - 1, -1, -1)
    letters = c.labels[:, amp_pos].astype(np.int64) @ weights
    out = np.zeros(1 << amp_pos.size)
    np.add.at(out, letters, c.pmf)
    return out


def _letter_bits_lut(num_amp_bits: int) -> np.ndarray:
    letters = np.arange(1 << num_amp_bits)
    return ((letters[:, None] >> np.arange(num_amp_bits - 1, -1, -1)[None, :]) & 1
            ).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class CodedChain:
    """One transmit/receive chain at 3 bits/symbol/polarization."""

    mode: str                       # "uniform" | "shaped-emulated" | "shaped-ccdm"
    constellation: Constellation
    code: LdpcCode
    mapper: BitMapper
    composition: Composition | None  # shaped-ccdm only
    data_bits_per_frame: int

    @property
    def symbols_per_frame(self) -> int:
        return self.mapper.num_symbols

    @property
    def information_rate(self) -> float:
        return self.data_bits_per_frame / self.symbols_per_frame

    def _slot_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """(systematic slot indices on amplitude positions, on sign positions),
        both in codeword order of the systematic part."""
        slots = self.mapper.slot_of_codebit[:self.code.k]
        pos = slots % self.mapper.bits_per_symbol
        amp = np.isin(pos, amplitude_positions(self.constellation))
        return np.nonzero(amp)[0], np.nonzero(~amp)[0]


def build_chain(mode: str, order: int = 16, shaped_constellation: Constellation | None = None,
                rate=None) -> CodedChain:
    """Assemble a chain and run the information-rate audit.

    ``shaped_constellation`` carries the target pmf for the shaped modes
    (typically ``optimize_shaping(...).constellation``).
    """
    if mode == "uniform":
        c = build_qam(order)
        rate = UNIFORM_RATE if rate is None else Fraction(rate)
    elif mode in ("shaped-emulated", "shaped-ccdm"):
        if shaped_constellation is None:
            raise ValueError("shaped modes need the shaped constellation (with its pmf)")
        c = shaped_constellation
        rate = SHAPED_RATE if rate is None else Fraction(rate)
    else:
        raise ValueError(f"unknown chain mode {mode!r}")

    code = fec.build_dvbs2_code(rate)
    mapper = fec.build_bit_mapper(code, c)
    num_symbols = mapper.num_symbols
    bps = mapper.bits_per_symbol
    required_data = INFO_BITS_PER_SYMBOL * num_symbols

    if mode == "uniform":
        if code.k != required_data:
            raise RateAuditError(
                f"uniform chain: code rate {rate} gives {code.k / num_symbols:.4g} "
                f"data bits/symbol, need {INFO_BITS_PER_SYMBOL}")
        return CodedChain(mode, c, code, mapper, None, code.k)

    # shaped: redundancy one bit/symbol total, split between DM and code
    sys_bits_per_symbol = code.k / num_symbols
    dm_rate = required_data / code.k
    if not 0.0 < dm_rate < 1.0:
        raise RateAuditError(
            f"shaped chain: rate {rate} leaves the matcher rate at {dm_rate:.4g}; "
            f"it must lie strictly inside (0, 1) "
            f"(systematic budget {sys_bits_per_symbol:.4g} bits/symbol)")

    if mode == "shaped-emulated":
        return CodedChain(mode, c, code, mapper, None, required_data)

    # shaped-ccdm: the amplitude letters must really carry the data deficit
    chain_probe = CodedChain(mode, c, code, mapper, None, required_data)
    amp_sys, sign_sys = chain_probe._slot_positions()
    k_dm = required_data - sign_sys.size
    letter_pmf = amplitude_letter_pmf(c)
    if k_dm < 0:
        raise RateAuditError("shaped-ccdm chain: negative matcher payload")
    try:
        comp = distmatch.composition_from_pmf(letter_pmf, num_symbols, k=k_dm)
    except ValueError as exc:
        raise RateAuditError(
            f"shaped-ccdm chain: composition cannot carry {k_dm} bits over "
            f"{num_symbols} letters at this pmf ({exc})") from exc
    if amp_sys.size != num_symbols * int(np.log2(letter_pmf.size)):
        raise RateAuditError("mapper left amplitude slots on parity positions; "
                             "the matcher output would be disturbed")
    return CodedChain(mode, c, code, mapper, comp, required_data)


def audit_information_rate(chain: CodedChain) -> float:
    """Exact data bits per symbol per polarization; raises unless it equals
    the 3 bits/symbol contract."""
    rate = Fraction(chain.data_bits_per_frame, chain.symbols_per_frame)
    if rate != INFO_BITS_PER_SYMBOL:
        raise RateAuditError(f"information rate is {float(rate):.6g}, not "
                             f"{INFO_BITS_PER_SYMBOL}")
    return float(rate)


@dataclass(frozen=True, eq=False)
class TxFrame:
    symbol_indices: np.ndarray      # (symbols_per_frame,)
    codeword: np.ndarray            # (n,)
    reference_bits: np.ndarray      # bits BER is measured against
    data_bits: np.ndarray | None    # real payload (None for emulated DM)


def transmit_frame(chain: CodedChain, seed: int, data_bits=None) -> TxFrame:
    """Build one frame of symbols for the chain.

    uniform / shaped-emulated draw their payload from ``seed``;
    shaped-ccdm takes ``data_bits`` (or draws them) and runs the matcher.
    """
    rng = np.random.default_rng(seed)
    c = chain.constellation
    bps = chain.mapper.bits_per_symbol

    if chain.mode == "uniform":
        info = (data_bits if data_bits is not None
                else rng.integers(0, 2, size=chain.code.k, dtype=np.uint8))
        info = np.asarray(info, dtype=np.uint8)
        codeword = fec.ldpc_encode(info, chain.code)
        labels = fec.map_bits(codeword, chain.mapper)
        return TxFrame(c.index_of_labels(labels), codeword, info, info)

    if chain.mode == "shaped-emulated":
        # draw i.i.d. symbols from the target pmf, keep their bits on the
        # systematic slots, and let the real parity overwrite the rest
        stream = distmatch.emulate_shaped_bits(c, chain.symbols_per_frame, seed)
        grid = stream.bits.copy()
        systematic = grid.reshape(-1)[chain.mapper.slot_of_codebit[:chain.code.k]]
        codeword = fec.ldpc_encode(systematic, chain.code)
        labels = fec.map_bits(codeword, chain.mapper)
        return TxFrame(c.index_of_labels(labels), codeword, systematic, None)

    # shaped-ccdm
    amp_sys, sign_sys = chain._slot_positions()
    k_dm = chain.composition.k
    if data_bits is None:
        data_bits = rng.integers(0, 2, size=chain.data_bits_per_frame, dtype=np.uint8)
    data_bits = np.asarray(data_bits, dtype=np.uint8)
    if data_bits.size != chain.data_bits_per_frame:
        raise ValueError(f"expected {chain.data_bits_per_frame} data bits")
    letters = distmatch.ccdm_encode(data_bits[:k_dm], chain.composition)
    lut = _letter_bits_lut(int(np.log2(chain.composition.num_letters)))
    letter_bits = lut[letters]  # (symbols, amp bits per symbol)

    systematic = np.empty(chain.code.k, dtype=np.uint8)
    systematic[amp_sys] = letter_bits.reshape(-1)
    systematic[sign_sys] = data_bits[k_dm:]
    codeword = fec.ldpc_encode(systematic, chain.code)
    labels = fec.map_bits(codeword, chain.mapper)
    return TxFrame(c.index_of_labels(labels), codeword, data_bits, data_bits)


def receive_frame(chain: CodedChain, rx_symbols, noise_variance: float,
                  max_iter: int = fec.DEFAULT_MAX_ITER) -> dict:
    """Demap with symbol priors, decode, and (for the real matcher) invert
    the DM. Returns decisions plus decoder diagnostics."""
    llr_grid = metrics.compute_llrs(rx_symbols, chain.constellation, noise_variance)
    llrs = fec.unmap_llrs(llr_grid, chain.mapper)
    info_hat, iterations, converged = fec.ldpc_decode(llrs, chain.code, max_iter=max_iter)

    result = {"iterations": iterations, "converged": converged,
              "systematic_hat": info_hat}
    if chain.mode in ("uniform", "shaped-emulated"):
        result["decided_bits"] = info_hat
        return result

    amp_sys, sign_sys = chain._slot_positions()
    lut = _letter_bits_lut(int(np.log2(chain.composition.num_letters)))
    weights = 1 << np.arange(lut.shape[1] - 1, -1, -1)
    letters_hat = info_hat[amp_sys].reshape(-1, lut.shape[1]).astype(np.int64) @ weights
    decided = np.empty(chain.data_bits_per_frame, dtype=np.uint8)
    try:
        decided[:chain.composition.k] = distmatch.ccdm_decode(letters_hat, chain.composition)
        result["dm_failure"] = False
    except distmatch.DecodeError:
        # corrupted frame: report the failure, count the matcher payload as lost
        decided[:chain.composition.k] = 0
        result["dm_failure"] = True
    decided[chain.composition.k:] = info_hat[sign_sys]
    result["decided_bits"] = decided
    return result


def awgn_frame_ber(chain: CodedChain, snr_linear: float, seed: int,
                   max_iter: int = fec.DEFAULT_MAX_ITER) -> tuple[int, int, dict]:
    """One frame over synthetic AWGN at the given SNR: (bit errors, bits)."""
    tx = transmit_frame(chain, seed)
    es = average_power(chain.constellation)
    n0 = es / snr_linear
    rng = np.random.default_rng(seed + 0x9E3779B9)
    n = tx.symbol_indices.size
    noise = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(n0 / 2)
    rx = chain.constellation.points[tx.symbol_indices] + noise
    result = receive_frame(chain, rx, n0, max_iter=max_iter)
    errors = int(np.count_nonzero(result["decided_bits"] != tx.reference_bits))
    return errors, tx.reference_bits.size, result


def awgn_ber(chain: CodedChain, snr_db: float, num_frames: int, seed: int,
             max_iter: int = fec.DEFAULT_MAX_ITER) -> float:
    """Post-decode BER over ``num_frames`` frames at one AWGN SNR point."""
    snr = 10.0 ** (snr_db / 10.0)
    errors = bits = 0
    for f in range(num_frames):
        e, b, _ = awgn_frame_ber(chain, snr, seed * 1009 + f, max_iter=max_iter)
        errors += e
        bits += b
    return errors / bits


def find_ber_crossing(bers: list[tuple[float, float]], threshold: float) -> float | None:
    """SNR (dB) where the BER curve crosses ``threshold``, by log-linear
    interpolation on the first bracketing pair; None if never crossed."""
    pts = sorted(bers)
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 > threshold >= b1:
            if b1 <= 0:
                b1 = threshold / 10.0  # zero-error point: clamp for the log
            t = (np.log10(threshold) - np.log10(b0)) / (np.log10(b1) - np.log10(b0))
            return float(s0 + t * (s1 - s0))
    return None
