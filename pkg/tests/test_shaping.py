import numpy as np
import pytest

from pcsfiber.constellation import average_power, build_qam, min_distance, scale, set_pmf
from pcsfiber import shaping
from pcsfiber.shaping import awgn_mi, mb_pmf, optimize_shaping, shaped_bit_rate

# Monte-Carlo oracle, frozen from a 1e7-sample run (seed 123456):
# mean 3.163543, standard error 0.000386. The quadrature value must sit
# within 3 standard errors of the oracle.
MC_ORACLE_MI_10DB = 3.163543
MC_ORACLE_SEM = 0.000386


def test_mb_pmf_nu_zero_is_uniform():
    c = build_qam(16)
    np.testing.assert_allclose(mb_pmf(c, 0.0), 1 / 16, atol=1e-15)


def test_mb_pmf_large_nu_concentrates_on_inner_ring():
    c = build_qam(16)
    pmf = mb_pmf(c, 200.0)
    inner = np.abs(c.points) ** 2 <= np.min(np.abs(c.points) ** 2) + 1e-12
    np.testing.assert_allclose(pmf[inner], 0.25, atol=1e-9)
    np.testing.assert_allclose(pmf[~inner], 0.0, atol=1e-9)


def test_mb_pmf_equal_energy_equal_probability():
    c = build_qam(64)
    pmf = mb_pmf(c, 0.37)
    e = np.round(np.abs(c.points) ** 2, 9)
    for level in np.unique(e):
        vals = pmf[e == level]
        np.testing.assert_allclose(vals, vals[0], rtol=1e-12)


def test_mb_pmf_rejects_negative_nu():
    with pytest.raises(ValueError, match="nonnegative"):
        mb_pmf(build_qam(16), -0.1)
    with pytest.raises(ValueError, match="finite"):
        mb_pmf(build_qam(16), np.inf)


def test_awgn_mi_limits():
    c = build_qam(16)
    assert awgn_mi(c, 1e8) == pytest.approx(4.0, abs=1e-3)
    assert awgn_mi(c, 1e-6) == pytest.approx(0.0, abs=1e-4)


def test_awgn_mi_matches_frozen_monte_carlo_oracle():
    mi = awgn_mi(build_qam(16), 10.0)
    assert abs(mi - MC_ORACLE_MI_10DB) < 3 * MC_ORACLE_SEM


def test_awgn_mi_monte_carlo_oracle_rerun():
    # smaller re-run of the oracle, kept alive so the frozen value stays honest
    c = build_qam(16)
    rng = np.random.default_rng(123456)
    n0 = 0.1
    n = 1_000_000
    idx = rng.integers(0, 16, size=n)
    y = c.points[idx] + np.sqrt(n0 / 2) * (rng.standard_normal(n)
                                           + 1j * rng.standard_normal(n))
    d2 = np.abs(y[:, None] - c.points[None, :]) ** 2
    lw = -d2 / n0 + np.log(1 / 16)
    mx = lw.max(axis=1)
    log_py = mx + np.log(np.exp(lw - mx[:, None]).sum(axis=1))
    vals = (-np.abs(y - c.points[idx]) ** 2 / n0 - log_py) / np.log(2)
    sem = vals.std(ddof=1) / np.sqrt(n)
    assert abs(vals.mean() - awgn_mi(c, 10.0)) < 3 * sem


def test_awgn_mi_monotone_in_snr():
    c = build_qam(16)
    snrs = np.logspace(-0.5, 1.8, 20)
    mis = [awgn_mi(c, s) for s in snrs]
    assert np.all(np.diff(mis) >= -1e-9)


def test_optimize_high_snr_is_nearly_uniform():
    c = build_qam(16)
    sol = optimize_shaping(c, 10 ** 3.0)  # 30 dB
    np.testing.assert_allclose(sol.pmf, 1 / 16, atol=5e-3)
    assert sol.predicted_mi == pytest.approx(4.0, abs=1e-2)


def test_optimize_never_below_uniform():
    c = build_qam(16)
    for snr_db in (2.0, 6.0, 10.0, 14.0, 20.0):
        snr = 10 ** (snr_db / 10)
        sol = optimize_shaping(c, snr)
        assert sol.predicted_mi >= awgn_mi(c, snr) - 1e-6


def test_solution_is_maxwell_boltzmann_and_power_constrained():
    template = build_qam(16)
    sol = optimize_shaping(template, 10.0)
    # pmf must be exp(-nu |x|^2)/Z over the template points: exact log-linear fit
    mask = sol.pmf > 0
    e = np.abs(template.points[mask]) ** 2
    logp = np.log(sol.pmf[mask])
    coeffs = np.polyfit(e, logp, 1)
    residual = logp - np.polyval(coeffs, e)
    assert np.max(np.abs(residual)) < 1e-10
    assert average_power(sol.constellation) == pytest.approx(1.0, rel=1e-9)


def test_optimizer_invariant_to_template_scale():
    base = build_qam(16)
    for s in (0.2, 3.0):
        a = optimize_shaping(base, 10.0)
        b = optimize_shaping(scale(base, s), 10.0)
        np.testing.assert_allclose(b.pmf, a.pmf, atol=2e-5)
        np.testing.assert_allclose(b.constellation.points, a.constellation.points,
                                   atol=2e-5)


def test_shaped_bit_rate_examples():
    c = build_qam(16)
    uniform_sol = optimize_shaping(c, 1e8)
    rep = shaped_bit_rate(uniform_sol)
    assert rep.symbol_entropy == pytest.approx(4.0, abs=1e-6)

    one = np.zeros(16)
    one[5] = 1.0
    degenerate = shaping.ShapingSolution(
        nu=0.0, scaling=1.0, pmf=one, predicted_mi=0.0, target_snr=1.0,
        constellation=set_pmf(c, one))
    assert shaped_bit_rate(degenerate).symbol_entropy == 0.0


def test_operating_entropy_supports_dm_rate():
    # the distribution matcher target of 3.2 systematic bits/symbol needs
    # H(pmf) >= 3.2 at the BER-experiment operating point
    template = build_qam(16)
    sol = optimize_shaping(template, 10 ** (9.3 / 10))
    assert shaped_bit_rate(sol).symbol_entropy >= 3.2


def test_sweep_csv(tmp_path):
    template = build_qam(16)
    rows = shaping.shaping_sweep(template, [8.0, 12.0])
    assert rows[0]["predicted_mi"] >= rows[0]["uniform_mi"] - 1e-6
    path = tmp_path / "sweep.csv"
    shaping.write_shaping_csv(path, rows)
    text = path.read_text().splitlines()
    assert text[0] == "snr_db,nu,scaling,predicted_mi,uniform_mi,entropy"
    assert len(text) == 3
