"""Probabilistically shaped coded modulation over multi-span optical fiber.

Subpackages cover the pieces of the chain: constellations and shaping,
distribution matching, DVB-S2 LDPC coding with shaping-preserving mapping,
GN-model link budgeting, split-step fiber propagation, and nonparametric
MI / BER evaluation. ``pcsfiber.cli`` stitches them into the reference
experiments.
"""

from .constellation import (Constellation, average_power, bit_marginals,
                            build_qam, min_distance, set_pmf)
from .shaping import ShapingSolution, awgn_mi, mb_pmf, optimize_shaping, shaped_bit_rate
from .distmatch import (Composition, ccdm_decode, ccdm_encode,
                        composition_from_pmf, emulate_shaped_bits)
from .fec import build_bit_mapper, build_dvbs2_code, ldpc_decode, ldpc_encode
from .linkmodel import LinkConfig, ase_power, gn_snr, nli_power, optimal_launch_power
from .fiber import (SsfmConfig, WaveformFrame, cd_compensate, edfa,
                    matched_filter_downsample, modulate, normalize,
                    ssfm_propagate, wdm_demux_center, wdm_mux)
from .metrics import compute_llrs, estimate_mi, estimate_noise_variance, measure_ber

__version__ = "0.1.0"

__all__ = [
    "Constellation", "ShapingSolution", "Composition", "LinkConfig",
    "SsfmConfig", "WaveformFrame",
    "build_qam", "set_pmf", "average_power", "min_distance", "bit_marginals",
    "mb_pmf", "awgn_mi", "optimize_shaping", "shaped_bit_rate",
    "composition_from_pmf", "ccdm_encode", "ccdm_decode", "emulate_shaped_bits",
    "build_dvbs2_code", "ldpc_encode", "ldpc_decode", "build_bit_mapper",
    "ase_power", "nli_power", "gn_snr", "optimal_launch_power",
    "modulate", "wdm_mux", "wdm_demux_center", "ssfm_propagate", "edfa",
    "cd_compensate", "matched_filter_downsample", "normalize",
    "estimate_mi", "compute_llrs", "measure_ber", "estimate_noise_variance",
]
