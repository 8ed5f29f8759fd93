"""GN-model link budget: ASE and nonlinear-interference powers, SNR vs
distance, and the launch-power candidate used to pick shaping targets.

The nonlinear interference follows the closed-form Gaussian-noise reference
result for Nyquist-like WDM (flat power spectral density across the occupied
band, incoherent accumulation across identical spans): per channel and span,
P_NLI = eta * P^3 with eta built from the span's effective length, |beta2|,
gamma and the total WDM bandwidth through the asinh term. Powers are
polarization-aggregate on both signal and noise, so SNR is too.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import scipy.constants as const

DBM = 1e-3


def db2lin(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def lin2db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm2watt(p_dbm: float) -> float:
    return DBM * db2lin(p_dbm)


def watt2dbm(p_w: float) -> float:
    return lin2db(p_w / DBM)


@dataclass(frozen=True)
class LinkConfig:
    """Multi-span WDM link parameters (defaults: the reference system)."""

    num_spans: int = 1
    span_length: float = 100.0        # km
    alpha: float = 0.2                # dB/km
    gamma: float = 1.3                # 1/(W km)
    dispersion: float = 17.0          # ps/nm/km
    nf: float = 4.0                   # dB
    baud: float = 28e9                # symbols/s
    rolloff: float = 0.05
    wdm_channels: int = 15
    wdm_spacing: float = 30e9         # Hz
    launch_power: float = -1.6        # dBm per channel, both polarizations
    wavelength: float = 1550e-9       # m

    def __post_init__(self):
        positive = {
            "span_length": self.span_length, "alpha": self.alpha,
            "gamma": self.gamma, "dispersion": self.dispersion,
            "baud": self.baud, "wdm_spacing": self.wdm_spacing,
            "wavelength": self.wavelength,
        }
        for name, val in positive.items():
            if not val > 0:
                raise ValueError(f"{name} must be positive, got {val}")
        if self.num_spans < 0:
            raise ValueError("num_spans must be nonnegative")
        if not 0 <= self.rolloff <= 1:
            raise ValueError("rolloff must lie in [0, 1]")
        if self.wdm_channels < 1:
            raise ValueError("wdm_channels must be at least 1")

    @property
    def carrier_frequency(self) -> float:
        return const.c / self.wavelength

    @property
    def alpha_per_m(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha * math.log(10.0) / 10.0 / 1e3

    @property
    def beta2(self) -> float:
        """GVD coefficient in s^2/m (negative for anomalous dispersion)."""
        d_si = self.dispersion * 1e-6  # ps/nm/km -> s/m^2
        return -d_si * self.wavelength ** 2 / (2 * math.pi * const.c)

    @property
    def span_gain_db(self) -> float:
        return self.alpha * self.span_length

    @property
    def span_length_m(self) -> float:
        return self.span_length * 1e3


def ase_power(link: LinkConfig) -> float:
    """Total ASE power (W, both polarizations) in the baud-rate bandwidth.

    Per span: (G - 1) h f_c F B with G exactly compensating the span loss.
    """
    g = db2lin(link.span_gain_db)
    f = db2lin(link.nf)
    return link.num_spans * (g - 1.0) * const.h * link.carrier_frequency * f * link.baud


def nli_eta_per_span(link: LinkConfig) -> float:
    """NLI efficiency eta (1/W^2): per-span P_NLI = eta * P_channel^3."""
    alpha = link.alpha_per_m
    l_span = link.span_length_m
    l_eff = (1.0 - math.exp(-alpha * l_span)) / alpha
    l_eff_a = 1.0 / alpha
    b2 = abs(link.beta2)
    gamma = link.gamma * 1e-3  # 1/(W km) -> 1/(W m)
    b_wdm = link.wdm_channels * link.wdm_spacing
    g_nli_per_psd3 = (8.0 / 27.0) * gamma ** 2 * l_eff ** 2 \
        * math.asinh(0.5 * math.pi ** 2 * b2 * l_eff_a * b_wdm ** 2) \
        / (math.pi * b2 * l_eff_a)
    # flat PSD P/spacing across the comb; NLI power in the matched bandwidth
    return g_nli_per_psd3 / link.wdm_spacing ** 3 * link.baud


def nli_power(link: LinkConfig) -> float:
    """Total NLI power (W, both polarizations) on the center channel."""
    p = dbm2watt(link.launch_power)
    return link.num_spans * nli_eta_per_span(link) * p ** 3


def gn_snr(link: LinkConfig) -> float:
    """Linear SNR = P / (P_ASE + P_NLI) in the matched-filter bandwidth."""
    p = dbm2watt(link.launch_power)
    denom = ase_power(link) + nli_power(link)
    if denom == 0.0:
        return math.inf
    return p / denom


def optimal_launch_power(link: LinkConfig, lo_dbm: float = -20.0,
                         hi_dbm: float = 10.0) -> float:
    """Launch power (dBm) maximizing the GN SNR, by golden-section search in
    the dB domain (the SNR is concave there). With gamma -> 0 the SNR grows
    without bound and the search reports the upper boundary."""
    def snr_db_at(p_dbm: float) -> float:
        return lin2db(gn_snr(replace(link, launch_power=p_dbm, num_spans=max(link.num_spans, 1))))

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo_dbm, hi_dbm
    c1 = b - invphi * (b - a)
    c2 = a + invphi * (b - a)
    f1, f2 = snr_db_at(c1), snr_db_at(c2)
    while b - a > 1e-4:
        if f1 >= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - invphi * (b - a)
            f1 = snr_db_at(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + invphi * (b - a)
            f2 = snr_db_at(c2)
    best = c1 if f1 >= f2 else c2
    if hi_dbm - best < 1e-2:
        return hi_dbm  # boundary: no interior optimum in the search window
    return best


def snr_grid(link: LinkConfig, span_counts, launch_powers_dbm) -> list[dict]:
    """(distance, launch power, SNR) grid rows for downstream consumers."""
    rows = []
    for spans in span_counts:
        for p_dbm in launch_powers_dbm:
            cfg = replace(link, num_spans=int(spans), launch_power=float(p_dbm))
            rows.append({
                "num_spans": int(spans),
                "distance_km": spans * link.span_length,
                "launch_dbm": float(p_dbm),
                "snr_db": lin2db(gn_snr(cfg)),
            })
    return rows


def write_snr_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["num_spans", "distance_km", "launch_dbm", "snr_db"])
        writer.writeheader()
        for r in rows:
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v for k, v in r.items()})
