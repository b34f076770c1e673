import math

import numpy as np
import pytest
from scipy import stats

from qpsketch import embeddings as emb
from qpsketch.numerics import make_rng, vector_norm

INF = math.inf


def test_ose_zero_and_norm_mean():
    s = emb.make_ose(1, 12, 50).materialize()
    np.testing.assert_array_equal(s @ np.zeros(50), np.zeros(12))
    x = make_rng(2).standard_normal(50)
    ratios = [np.sum((emb.make_ose(seed, 12, 50).materialize() @ x) ** 2) / np.sum(x ** 2)
              for seed in range(10_000)]
    assert np.mean(ratios) == pytest.approx(1.0, abs=0.05)


def test_ose_subspace_distortion():
    r, d = 3, 50
    rng = make_rng(3)
    basis = np.linalg.qr(rng.standard_normal((d, r)))[0]
    pts = basis @ rng.standard_normal((r, 20))
    good = 0
    for seed in range(100):
        s = emb.make_ose(seed, 4 * r, d).materialize()
        ratio = np.linalg.norm(s @ pts, axis=0) / np.linalg.norm(pts, axis=0)
        good += bool(np.all((ratio >= 0.5) & (ratio <= 2.0)))
    assert good >= 90


def test_materialization_is_bit_identical():
    for desc in (emb.make_ose(5, 4, 6), emb.make_dvoretzky(5, 1.5, 6),
                 emb.make_pstable_sketch(5, 1.25, 7, 6), emb.make_highp_sketch(5, 3, 40, 0.1,
                                                                               allow_identity=False),
                 emb.make_blocksign(5, 6, 2, "col"), emb.make_blocksign(5, 6, 3, "row")):
        np.testing.assert_array_equal(desc.materialize(), desc.materialize())


@pytest.mark.parametrize("p", [1, 2])
def test_dvoretzky_distortion_examples(p):
    n = 16
    t = emb.make_dvoretzky(7, p, n, expansion=8).materialize()
    assert t.shape == (8 * n, n)
    x = make_rng(8).standard_normal((100, n))
    ratio = vector_norm(x @ t.T, p, axis=1) / np.linalg.norm(x, axis=1)
    assert np.all((ratio > 0.5) & (ratio < 2.0))
    np.testing.assert_array_equal(t @ np.zeros(n), np.zeros(8 * n))


def test_dvoretzky_uses_half_normal_mean_for_p1():
    assert emb.default_table().mean_scale(1) == pytest.approx(math.sqrt(2 / math.pi), rel=0.01)


@pytest.mark.parametrize("p", [1, 1.5, 2])
def test_dvoretzky_distortion_fraction(p):
    n = 32
    t = emb.make_dvoretzky(11, p, n, expansion=8).materialize()
    x = make_rng(12).standard_normal((500, n))
    x /= np.linalg.norm(x, axis=1)[:, None]
    vals = vector_norm(x @ t.T, p, axis=1)
    assert np.mean((vals > 0.5) & (vals < 1.5)) >= 0.95


def test_dvoretzky_rejects_large_p():
    with pytest.raises(ValueError):
        emb.make_dvoretzky(0, 3, 4)


def test_pstable_sketch_examples():
    assert emb.estimate_pstable(np.zeros(21), 1) == 0.0
    e1 = np.zeros(40)
    e1[0] = 1.0
    hits = 0
    for seed in range(300):
        y = emb.make_pstable_sketch(seed, 1, 21, 40)(e1)
        hits += 0.5 < emb.estimate_pstable(y, 1) < 2
    assert hits >= 200
    with pytest.raises(ValueError):
        emb.make_pstable_sketch(0, 1, 20, 40)


@pytest.mark.parametrize("p", [1, 1.25, 1.5, 2])
def test_pstable_success_probability(p):
    x = make_rng(13).standard_normal(64) * make_rng(14).exponential(size=64)
    truth = vector_norm(x, p)
    hits = 0
    trials = 300
    for seed in range(trials):
        y = emb.make_pstable_sketch(1000 + seed, p, 21, 64)(x)
        hits += 0.5 * truth < emb.estimate_pstable(y, p) < 2 * truth
    # H0: success probability >= 2/3 must not be rejected at the 1% level.
    assert stats.binomtest(hits, trials, 2 / 3, alternative="less").pvalue >= 0.01


@pytest.mark.parametrize("p", [3, 4, INF])
def test_highp_single_heavy_coordinate(p):
    n = 64
    e1 = np.zeros(n)
    e1[0] = 1.0
    hits = 0
    for seed in range(150):
        desc = emb.make_highp_sketch(seed, p, n, 0.2, allow_identity=False)
        hits += 0.5 < emb.estimate_with(desc, desc(e1)) < 2
    assert hits >= 100


def test_highp_identity_fallback_is_exact():
    x = make_rng(15).standard_normal(30)
    desc = emb.make_highp_sketch(0, 4, 30, 0.01)
    assert desc.param("reps") == 0
    assert emb.estimate_with(desc, desc(x)) == pytest.approx(vector_norm(x, 4), rel=1e-14)
    with pytest.raises(ValueError):
        emb.make_highp_sketch(0, 2, 30, 0.1)


def test_highp_heavy_tailed_vectors():
    n = 256
    x = make_rng(16).standard_cauchy(n)
    truth = vector_norm(x, 4)
    hits = 0
    for seed in range(200):
        desc = emb.make_highp_sketch(seed, 4, n, 0.01, allow_identity=False)
        hits += 0.25 < emb.estimate_with(desc, desc(x)) / truth < 4
    assert hits >= 190


def test_highp_failure_drops_with_repetitions():
    n = 200
    x = make_rng(17).standard_normal(n)
    truth = vector_norm(x, 4)

    def failures(delta):
        bad = 0
        for seed in range(300):
            desc = emb.make_highp_sketch(seed, 4, n, delta, c0=0.5, allow_identity=False)
            bad += not 0.5 < emb.estimate_with(desc, desc(x)) / truth < 2
        return bad

    few, many = math.exp(-2.5), math.exp(-8.5)
    assert emb.highp_shape(4, n, few, 0.5)[0] == 3
    assert emb.highp_shape(4, n, many, 0.5)[0] == 9
    assert failures(many) <= failures(few)


def test_calibration_values():
    e2 = emb.calibrate(2, 200_000, seed=1)
    assert e2.median_scale == pytest.approx(math.sqrt(2) * stats.norm.ppf(0.75), rel=0.01)
    e1 = emb.calibrate(1, 200_000, seed=1)
    assert e1.median_scale == pytest.approx(1.0, rel=0.01)
    assert emb.calibrate(1, 20_000, seed=4) == emb.calibrate(1, 20_000, seed=4)
    e4 = emb.calibrate(4, 200_000, seed=1)
    assert e4.median_scale == pytest.approx(math.log(2) ** -0.25, rel=0.01)
    assert e4.mean_scale == pytest.approx(3 ** 0.25, rel=0.01)
    with pytest.raises(ValueError):
        emb.calibrate(2, 100)


def test_calibration_table_round_trip():
    table = emb.CalibrationTable({1.0: emb.calibrate(1, 10_000, 3),
                                  INF: emb.calibrate(INF, 10_000, 3)})
    again = emb.CalibrationTable.loads(table.dumps())
    assert again.entries == table.entries


def test_all_maps_are_linear():
    rng = make_rng(18)
    descs = [emb.make_ose(1, 5, 12), emb.make_dvoretzky(1, 1, 12),
             emb.make_pstable_sketch(1, 1.5, 9, 12),
             emb.make_highp_sketch(1, 3, 12, 0.1, allow_identity=False),
             emb.make_blocksign(1, 12, 4, "row")]
    for desc in descs:
        x, y = rng.standard_normal((2, desc.in_dim))
        a, b = rng.standard_normal(2)
        lhs = desc(a * x + b * y)
        rhs = a * desc(x) + b * desc(y)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.abs(rhs).max())


def test_blocksign_structure():
    s = emb.make_blocksign(3, 12, 3, "col").materialize()
    assert s.shape == (12, 4)
    assert np.all(np.abs(s).sum(axis=1) == 1)
    assert np.all(np.abs(s).sum(axis=0) == 3)
    with pytest.raises(ValueError):
        emb.make_blocksign(3, 12, 5)
