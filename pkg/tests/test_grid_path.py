import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from semilab.grid_path import (
    SamplePath,
    TimeGrid,
    jordan_minimality_check,
    left_limit_path,
    read_path_csv,
    stieltjes_integral,
    total_variation,
    write_path_csv,
)
from semilab.simulate import Seed, gen_brownian, gen_dyadic, gen_pairflip

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.5, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.1, 1.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0]))
    g = TimeGrid.uniform(4, 2.0)
    assert g.horizon == 2.0
    assert g.index_of(1.5) == 3
    with pytest.raises(ValueError):
        g.index_of(0.7)


def test_path_is_immutable():
    p = SamplePath(TimeGrid.uniform(3), [0.0, 1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        p.values[0] = 5.0


def test_jump_marks_validated():
    g = TimeGrid.uniform(3)
    with pytest.raises(ValueError):
        SamplePath(g, np.zeros(4), [0], [0.0])
    with pytest.raises(ValueError):
        SamplePath(g, np.zeros(4), [1, 2], [0.0])


def test_left_limit_of_constant():
    p = SamplePath(TimeGrid.uniform(4), np.full(5, 3.0))
    assert np.array_equal(left_limit_path(p).values, [0.0, 3.0, 3.0, 3.0, 3.0])


def test_left_limit_holds_pre_jump_value():
    g = TimeGrid.uniform(4)
    p = SamplePath(g, [0.0, 0.0, 1.0, 1.0, 1.0], [2], [0.0])
    assert left_limit_path(p).values[2] == 0.0
    p2 = SamplePath(g, [0.0, 0.2, 1.0, 1.0, 1.0], [2], [0.3])
    assert left_limit_path(p2).values[2] == 0.3


def test_left_limit_of_brownian_is_index_shift():
    w = gen_brownian(TimeGrid.uniform(256), Seed(3))
    ll = left_limit_path(w).values
    assert ll[0] == 0.0
    assert np.array_equal(ll[1:], w.values[:-1])


def test_total_variation_monotone():
    p = SamplePath(TimeGrid.uniform(4), [1.0, 1.5, 1.5, 2.0, 4.0])
    prof = total_variation(p)
    assert np.allclose(prof.variation, p.values - p.values[0])
    assert np.all(prof.negative_part == 0.0)


def test_sawtooth_variation():
    p = SamplePath(TimeGrid.uniform(3), [0.0, 1.0, 0.0, 1.0])
    prof = total_variation(p)
    assert prof.variation[-1] == 3.0
    assert prof.positive_part[-1] == 2.0
    assert prof.negative_part[-1] == 1.0


def test_pairflip_variation_is_harmonic():
    for N in (1, 7, 100):
        sc = gen_pairflip(N, Seed(11))
        tv = total_variation(sc.path).variation[-1] + abs(sc.initial_jump)
        assert tv == pytest.approx(sum(1.0 / n for n in range(1, N + 1)), rel=1e-12)


def test_variation_counts_jump_and_drift_separately():
    # the path drifts down to 0 inside the cell, then jumps to 1
    g = TimeGrid.uniform(2)
    p = SamplePath(g, [0.0, 0.5, 1.0], [2], [0.0])
    prof = total_variation(p)
    assert prof.variation[-1] == pytest.approx(0.5 + 0.5 + 1.0)


def test_jordan_minimality_self_and_padding():
    p = gen_brownian(TimeGrid.uniform(64), Seed(1))
    prof = total_variation(p)
    assert jordan_minimality_check(p, prof.positive_part, prof.negative_part)
    t = p.times
    assert jordan_minimality_check(p, prof.positive_part + t, prof.negative_part + t)


def test_jordan_minimality_rejects_non_split():
    p = SamplePath(TimeGrid.uniform(2), [0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        jordan_minimality_check(p, [0.0, 1.0, 1.0], [0.0, 0.0, 0.0])


def test_jordan_minimality_fuzz(rng):
    g = TimeGrid.uniform(30)
    for _ in range(1000):
        dv = rng.normal(size=30) * (rng.random(30) < 0.7)
        p = SamplePath(g, np.concatenate(([0.0], np.cumsum(dv))))
        pad = rng.exponential(size=30)
        up = np.maximum(np.diff(p.values), 0) + pad
        down = up - np.diff(p.values)
        g1 = np.concatenate(([0.0], np.cumsum(up)))
        g2 = np.concatenate(([0.0], np.cumsum(down)))
        assert jordan_minimality_check(p, g1, g2, rtol=1e-9)


def test_jordan_minimality_detects_too_small_split():
    # the second cell hides a drift of -0.5 before a jump of +1, so the grid
    # increments alone understate the Jordan parts
    q = SamplePath(TimeGrid.uniform(2), [0.0, 0.5, 1.0], [2], [0.0])
    assert not jordan_minimality_check(q, [0.0, 0.5, 1.0], [0.0, 0.0, 0.0])


def test_stieltjes_constant_one_telescopes():
    v = gen_dyadic(6, Seed(2)).path
    res = stieltjes_integral(np.ones(len(v)), v)
    assert np.array_equal(res.path.values, np.concatenate(([0.0], np.cumsum(np.diff(v.values)))))
    assert np.allclose(res.path.values, v.values - v.values[0], rtol=0, atol=1e-15)


def test_stieltjes_zero_integrand():
    v = gen_dyadic(5, Seed(2)).path
    assert np.all(stieltjes_integral(np.zeros(len(v)), v).path.values == 0.0)


@pytest.mark.parametrize("M", [1, 4, 10])
def test_stieltjes_dyadic_absolute_mass(M):
    sc = gen_dyadic(M, Seed(5, 3))
    res = stieltjes_integral(sc.integrand, sc.path)
    assert res.absolute[-1] == M / 2


def test_csv_round_trip_bit_exact(tmp_path):
    g = TimeGrid.uniform(50)
    rng = np.random.default_rng(0)
    v = np.cumsum(rng.normal(size=51)) / 7.0
    p = SamplePath(g, v, [3, 17], [v[2] + 0.1, v[16] - 1 / 3])
    write_path_csv(p, tmp_path / "p.csv")
    assert read_path_csv(tmp_path / "p.csv") == p
    buf = io.StringIO()
    write_path_csv(p, buf)
    buf.seek(0)
    assert read_path_csv(buf) == p


def test_csv_rejects_missing_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("t,value\n0,0\n")
    with pytest.raises(ValueError):
        read_path_csv(tmp_path / "bad.csv")


@given(arrays(np.float64, st.integers(2, 40), elements=finite))
def test_variation_identities(vals):
    p = SamplePath(TimeGrid.uniform(vals.size - 1), vals)
    prof = total_variation(p)
    assert np.allclose(prof.positive_part - prof.negative_part, vals - vals[0], atol=1e-9)
    assert np.allclose(prof.variation, prof.positive_part + prof.negative_part, atol=1e-9)
    assert np.all(np.diff(prof.variation) >= 0)


@given(arrays(np.float64, st.integers(2, 40), elements=finite), st.integers(0, 2**32 - 1))
def test_csv_round_trip_property(vals, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid.uniform(vals.size - 1)
    idx = np.unique(rng.integers(1, vals.size, size=min(3, vals.size - 1)))
    p = SamplePath(g, vals, idx, rng.normal(size=idx.size))
    buf = io.StringIO()
    write_path_csv(p, buf)
    buf.seek(0)
    assert read_path_csv(buf) == p
