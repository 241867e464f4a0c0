import numpy as np
import pytest

from semilab.filtration import Anchored, Join, Natural, NotASemimartingaleError, PartitionEnlarged, anchored_drift_batch
from semilab.grid_path import SamplePath, TimeGrid, left_limit_path
from semilab.integrate import (
    PredictableIntegrand,
    TruncationLadder,
    UcpReport,
    _ladder_verdict,
    discrete_integral,
    evaluate_route,
    improper_integral,
    merge_ucp_reports,
    qv_floor,
    truncate,
    truncated_integral,
    two_filtration_compare,
    ucp_distance,
)
from semilab.pathwise import pathwise_integral
from semilab.simulate import Ensemble, Seed, brownian_ensemble, dyadic_ensemble, gen_brownian


def test_constant_integrands():
    w = gen_brownian(TimeGrid.uniform(100), Seed(1))
    assert np.allclose(discrete_integral(np.ones(101), w).values, w.values - w.values[0], atol=1e-14)
    assert np.all(discrete_integral(np.zeros(101), w).values == 0.0)


def test_left_limit_integrand_matches_pathwise():
    w = gen_brownian(TimeGrid.uniform(2**14), Seed(2))
    ito = discrete_integral(w.values, w).values[-1]
    for n in (6, 9):
        pw = pathwise_integral(left_limit_path(w), w, n).path.values[-1]
        assert abs(pw - ito) < 4 * 2.0**-n


def test_bound_is_enforced():
    with pytest.raises(ValueError):
        PredictableIntegrand(np.array([0.0, 2.0]), bound=1.0)


def test_truncation_with_large_level_is_identity():
    w = gen_brownian(TimeGrid.uniform(64), Seed(3))
    f = np.sin(w.values)
    assert np.array_equal(truncated_integral(f, w, 1.0).values, discrete_integral(f, w).values)
    with pytest.raises(ValueError):
        truncate(f, 0.0)


def test_dyadic_truncation_selects_levels():
    ens, f, level_of = dyadic_ensemble(8, 3, 5)
    for m0 in (1, 4, 8):
        kept = truncate(f, 2.0**m0)
        assert np.array_equal(kept != 0, (level_of >= 1) & (level_of <= m0))


def test_ladder_validation():
    with pytest.raises(ValueError):
        TruncationLadder((1.0, 1.0))
    with pytest.raises(ValueError):
        TruncationLadder((0.0, 1.0))
    lad = TruncationLadder.powers_of_two(4).merged(TruncationLadder((3.0,)))
    assert lad.levels == (2.0, 3.0, 4.0, 8.0, 16.0)


def test_improper_integral_bounded_is_convergent():
    ens = brownian_ensemble(TimeGrid.uniform(128), 1, 200)
    f = np.cos(ens.values)
    top, rep = improper_integral(f, ens, TruncationLadder((1.0, 2.0, 4.0, 8.0)))
    assert np.all(rep.probability == 0.0)
    assert rep.verdict == "CONVERGENT"
    assert np.array_equal(top.values, discrete_integral(f, ens).values)
    with pytest.raises(ValueError):
        improper_integral(f, ens, TruncationLadder((1.0, 2.0)))


def test_improper_integral_matches_brute_force():
    ens, f, _ = dyadic_ensemble(9, 4, 300)
    g = np.zeros_like(f)
    g[:-1] = f[1:]
    lad = TruncationLadder.powers_of_two(9)
    horizons = [0.5, 1.0]
    _, rep = improper_integral(g, ens, lad, horizons=horizons)
    k_half = ens.grid.index_of(0.5)
    for r, (lo, hi) in enumerate(zip(lad.levels[:-1], lad.levels[1:])):
        diff = truncated_integral(g, ens, hi).values - truncated_integral(g, ens, lo).values
        assert rep.mean_sup[r, 0] == pytest.approx(np.abs(diff[:, : k_half + 1]).max(axis=1).mean(), abs=1e-14)
        assert rep.mean_sup[r, 1] == pytest.approx(np.abs(diff).max(axis=1).mean(), abs=1e-14)


def test_dyadic_rung_variances():
    M = 12
    ens, f, _ = dyadic_ensemble(M, 8, 4000)
    g = np.zeros_like(f)
    g[:-1] = f[1:]
    for j in (2, 5, 8):
        d = truncated_integral(g, ens, 2.0 ** (j + 1)).values[:, -1] - truncated_integral(g, ens, 2.0**j).values[:, -1]
        assert d.var() == pytest.approx(2.0 ** (-j - 2), rel=0.1)


def test_dyadic_routes_dichotomy():
    M = 12
    ens, f, _ = dyadic_ensemble(M, 21, 4000)
    g = np.zeros_like(f)
    g[:-1] = f[1:]
    lad = TruncationLadder.powers_of_two(M)
    top, rep = improper_integral(g, ens, lad)
    assert rep.verdict == "CONVERGENT"
    oracle = sum(2.0 ** (-m - 1) for m in range(1, M + 1))
    assert top.values[:, -1].var() == pytest.approx(oracle, rel=0.06)
    mass, rep_abs = improper_integral(g, ens, lad, route="stieltjes")
    assert rep_abs.verdict == "DIVERGENT"
    assert np.all(mass.values[:, -1] == M / 2)
    assert np.all(rep_abs.mean_sup[:, 0] == 0.5)


def test_martingale_route_refuses_join():
    ens = brownian_ensemble(TimeGrid.uniform(16), 1, 5)
    j = Join(Natural(), Anchored(Natural(), (1.0,)))
    with pytest.raises(NotASemimartingaleError):
        improper_integral(np.ones(17), ens, TruncationLadder((1.0, 2.0, 3.0)), model=j)
    with pytest.raises(NotASemimartingaleError):
        evaluate_route("martingale", PredictableIntegrand(np.ones(17), model=j), ens.path(0))
    # the pathwise route is still available under a join
    evaluate_route("pathwise", PredictableIntegrand(np.ones(17), model=j), ens.path(0))


def _report(probs, hi=None):
    probs = np.asarray(probs, dtype=float)[:, None, None]
    hi = probs + 0.01 if hi is None else np.asarray(hi, dtype=float)[:, None, None]
    n = len(probs)
    return UcpReport(list(range(n)), [1.0], [0.1], probs, probs * 0, hi, np.zeros((n, 1)), 1000)


def test_verdict_rules():
    assert _ladder_verdict(_report([0.5, 0.3, 0.1, 0.01]))[0] == "CONVERGENT"
    assert _ladder_verdict(_report([0.5, 0.3, 0.2, 0.1]))[0] == "INCONCLUSIVE"
    assert _ladder_verdict(_report([0.5, 0.5, 0.6, 0.7]))[0] == "DIVERGENT"
    assert _ladder_verdict(_report([0.2, 0.1, 0.3, 0.2]))[0] == "INCONCLUSIVE"
    # a low point estimate with a wide interval is not a pass
    assert _ladder_verdict(_report([0.5, 0.4, 0.3, 0.04], hi=[1, 1, 1, 0.3]))[1]["0.1"] == "DECREASING"


def test_merge_equals_whole():
    ens, f, _ = dyadic_ensemble(8, 2, 600)
    g = np.zeros_like(f)
    g[:-1] = f[1:]
    lad = TruncationLadder.powers_of_two(8)
    _, whole = improper_integral(g, ens, lad)
    parts = []
    for lo in (0, 200, 400):
        sub = Ensemble(ens.grid, ens.values[lo:lo + 200], ens.seed, ens.streams[lo:lo + 200])
        parts.append(improper_integral(g, sub, lad)[1])
    merged = merge_ucp_reports(parts)
    assert np.array_equal(merged.exceed_counts, whole.exceed_counts)
    assert np.allclose(merged.mean_sup, whole.mean_sup)
    assert merged.verdict == whole.verdict


def test_ucp_identical_and_unpaired():
    g = TimeGrid.uniform(32)
    a = brownian_ensemble(g, 1, 50)
    rep = ucp_distance(a, a)
    assert np.all(rep.probability == 0.0)
    with pytest.raises(ValueError):
        ucp_distance(a, brownian_ensemble(g, 2, 50))


def test_pathwise_riemann_sums_converge_in_ucp():
    g = TimeGrid.uniform(2**12)
    ens = brownian_ensemble(g, 5, 300)
    ito = discrete_integral(ens.values, ens)
    probs = []
    for n in (1, 3, 5):
        z = np.array([pathwise_integral(left_limit_path(ens.path(i)), ens.path(i), n).path.values
                      for i in range(len(ens))])
        probs.append(ucp_distance(ens.derived(z), ito, epsilons=(0.1,)).probability[0, 0, 0])
    assert probs[0] > probs[1] > probs[2]
    assert probs[2] == 0.0


def _anchored_pair(w, grid):
    psi, _ = anchored_drift_batch(w, grid, (1.0,))
    d = np.zeros_like(psi)
    np.cumsum(psi[:, :-1] * grid.dt, axis=1, out=d[:, 1:])
    return (w, np.zeros_like(w)), (w - d, d)


def test_compare_same_decomposition_is_zero():
    ens = brownian_ensemble(TimeGrid.uniform(64), 1, 20)
    dec = (ens.values, np.zeros_like(ens.values))
    res = two_filtration_compare(np.cos(ens.values), ens, dec, dec, level=4)
    assert np.all(res.z.values == 0.0)


def test_compare_rejects_bad_decomposition_and_join():
    ens = brownian_ensemble(TimeGrid.uniform(64), 1, 4)
    good = (ens.values, np.zeros_like(ens.values))
    with pytest.raises(ValueError):
        two_filtration_compare(np.ones(65), ens, good, (ens.values, np.ones_like(ens.values)))
    with pytest.raises(NotASemimartingaleError):
        two_filtration_compare(np.ones(65), ens, good, good, models=(Natural(), Join(Natural(), Natural())))


def test_compare_anchored_residual_shrinks():
    fine = TimeGrid.uniform(2**13)
    w = brownian_ensemble(fine, 3, 400).values
    means = []
    for step in (8, 2, 1):
        grid = TimeGrid.uniform(2**13 // step)
        wl = w[:, ::step]
        f_dec, g_dec = _anchored_pair(wl, grid)
        res = two_filtration_compare(np.cos(wl), Ensemble(grid, wl), f_dec, g_dec, level=None)
        assert res.identity_error.max() < 1e-10
        means.append(res.sup_abs.mean())
    assert means[0] > means[1] > means[2]


def test_compare_qv_below_floor_at_two_levels():
    grid = TimeGrid.uniform(2**12)
    ens = brownian_ensemble(grid, 9, 50)
    f_dec, g_dec = _anchored_pair(ens.values, grid)
    for level in (8, 10):
        res = two_filtration_compare(np.cos(ens.values), ens, f_dec, g_dec, level=level)
        assert res.qv.max() < 10 * res.qv_floor
        assert res.qv_floor == qv_floor(grid, level)


def test_pathwise_integral_ignores_filtration_tags():
    w = gen_brownian(TimeGrid.uniform(1024), Seed(4))
    u = np.cos(w.values)
    outs = [evaluate_route("pathwise", PredictableIntegrand(u, 1.0, m), w, 7)
            for m in (Natural(), Anchored(Natural(), (1.0,)), PartitionEnlarged(Natural()),
                      Join(Natural(), Anchored(Natural(), (0.5,))))]
    for o in outs[1:]:
        assert o == outs[0]
    assert outs[0] == pathwise_integral(SamplePath(w.grid, u), w, 7).path
