import numpy as np
import pytest

from pcsfiber import constellation as con
from pcsfiber.constellation import (average_power, bit_marginals, build_qam,
                                    min_distance, set_pmf, scale)
from pcsfiber.shaping import mb_pmf


def test_qpsk_points_and_pmf():
    c = build_qam(4)
    expected = {(s1 + 1j * s2) / np.sqrt(2) for s1 in (-1, 1) for s2 in (-1, 1)}
    got = {complex(np.round(z, 12)) for z in c.points}
    assert got == {complex(np.round(z, 12)) for z in expected}
    np.testing.assert_allclose(c.pmf, 0.25)


def test_16qam_min_distance_and_power():
    c = build_qam(16)
    assert min_distance(c) == pytest.approx(2 / np.sqrt(10), abs=1e-15)
    assert average_power(c) == pytest.approx(1.0, abs=1e-12)


def test_gray_property_nearest_neighbours():
    c = build_qam(16)
    d_min = min_distance(c)
    for i in range(16):
        for j in range(16):
            if i == j:
                continue
            if abs(c.points[i] - c.points[j]) < d_min * 1.001:
                assert np.sum(c.labels[i] != c.labels[j]) == 1


def test_labels_distinct_and_exhaustive():
    for order in (4, 16, 64):
        c = build_qam(order)
        ints = {int("".join(map(str, row)), 2) for row in c.labels}
        assert ints == set(range(order))


def test_unsupported_order_and_labeling_rejected():
    with pytest.raises(ValueError, match="unsupported QAM order"):
        build_qam(32)
    with pytest.raises(ValueError, match="labeling"):
        build_qam(16, labeling="setpartition")


def test_set_pmf_examples():
    c = build_qam(16)
    assert average_power(set_pmf(c, np.full(16, 1 / 16))) == pytest.approx(1.0)
    one = np.zeros(16)
    one[3] = 1.0
    assert average_power(set_pmf(c, one)) == pytest.approx(abs(c.points[3]) ** 2)
    shaped = set_pmf(c, mb_pmf(c, 1.0))
    assert average_power(shaped) < average_power(c)


def test_set_pmf_rejects_bad_input():
    c = build_qam(16)
    with pytest.raises(ValueError):
        set_pmf(c, np.full(8, 1 / 8))
    bad = np.full(16, 1 / 16)
    bad[0], bad[1] = -0.01, 2 / 16 + 0.01
    with pytest.raises(ValueError):
        set_pmf(c, bad)


def test_unit_grid_template_min_distance():
    c = build_qam(16)
    unit_grid = scale(c, 1.0 / c.scaling)  # back to the odd-integer template
    assert min_distance(unit_grid) == pytest.approx(2.0)


def test_uniform_marginals_are_half():
    for order in (4, 16, 64):
        np.testing.assert_allclose(bit_marginals(build_qam(order)), 0.5, atol=1e-15)


def test_scaling_scales_power_and_distance_only():
    c = set_pmf(build_qam(16), mb_pmf(build_qam(16), 0.7))
    s = 2.5
    cs = scale(c, s)
    assert average_power(cs) == pytest.approx(s ** 2 * average_power(c))
    assert min_distance(cs) == pytest.approx(s * min_distance(c))
    np.testing.assert_array_equal(cs.pmf, c.pmf)


def test_marginals_permute_with_label_columns():
    base = build_qam(16)
    rng = np.random.default_rng(5)
    pmf = rng.dirichlet(np.ones(16))
    c = set_pmf(base, pmf)
    ref = bit_marginals(c)
    for _ in range(10):
        perm = rng.permutation(4)
        permuted = con.Constellation(c.points, c.labels[:, perm], c.pmf, c.scaling)
        np.testing.assert_allclose(bit_marginals(permuted), ref[perm], atol=1e-15)


def test_mb_pmf_factorizes_over_rails():
    c = build_qam(16)
    pmf = mb_pmf(c, 0.9)
    # joint over (I level, Q level) must equal the outer product of marginals
    joint = pmf.reshape(4, 4)
    p_i = joint.sum(axis=1)
    p_q = joint.sum(axis=0)
    np.testing.assert_allclose(joint, np.outer(p_i, p_q), atol=1e-12)
    np.testing.assert_allclose(p_i, p_q, atol=1e-12)


def test_table_roundtrip():
    c = set_pmf(build_qam(16), mb_pmf(build_qam(16), 0.42))
    back = con.from_table(con.to_table(c))
    np.testing.assert_allclose(back.points, c.points, atol=0)
    np.testing.assert_array_equal(back.labels, c.labels)
    np.testing.assert_allclose(back.pmf, c.pmf, atol=0)
    assert back.scaling == pytest.approx(c.scaling)


def test_table_file_roundtrip(tmp_path):
    c = build_qam(64)
    path = tmp_path / "c64.txt"
    con.save_table(c, path)
    back = con.load_table(path)
    np.testing.assert_allclose(back.points, c.points, atol=0)
