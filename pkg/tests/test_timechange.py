import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semilab.decompose import IncreasingStep
from semilab.simulate import Seed, gen_brownian
from semilab.grid_path import TimeGrid
from semilab.timechange import (
    MollifierKernel,
    UnderResolvedError,
    adapted_approximants,
    build_timechange,
    mollify,
)


def test_kernel_unit_mass():
    assert MollifierKernel.build(8).mass() == pytest.approx(1.0, abs=1e-6)


def test_zero_qv_gives_identity_clock():
    t = np.linspace(0, 1, 11)
    tc = build_timechange(np.zeros(11), t)
    s = np.linspace(0, 1, 37)
    assert np.allclose(tc.phi(s), s)
    assert np.allclose(tc.psi(t), t)
    assert tc.lipschitz_ok()


def test_linear_qv_halves_clock():
    t = np.linspace(0, 1, 65)
    tc = build_timechange(t.copy(), t)
    s = np.linspace(0, 2, 41)
    assert np.allclose(tc.phi(s), s / 2)
    assert np.allclose(np.interp(s, tc.s, tc.clock), s / 2)


def test_brownian_clock_is_lipschitz():
    g = TimeGrid.uniform(4096)
    w = gen_brownian(g, Seed(5))
    qv = np.concatenate(([0.0], np.cumsum(np.diff(w.values) ** 2)))
    assert build_timechange(qv, g.times).lipschitz_ok()


def test_timechange_rejects_decreasing_qv():
    with pytest.raises(ValueError):
        build_timechange(np.array([0.0, 1.0, 0.5]), np.array([0.0, 0.5, 1.0]))


def test_mollify_constant():
    s = np.linspace(0, 1, 513)
    assert np.allclose(mollify(np.full(513, 3.5), s, 16), 3.5)


def _step(n, jump=0.5, points=4097):
    s = np.linspace(0, 1, points)
    h = (s >= jump).astype(float)
    return s, h, mollify(h, s, n)


def test_mollify_step_is_one_sided_and_monotone():
    n = 16
    s, h, out = _step(n)
    assert np.all(np.diff(out) >= -1e-12)
    assert np.all(out[s <= 0.5] == 0.0)  # no look-ahead
    assert np.allclose(out[s >= 0.5 + 2.0 / n], 1.0)


def test_mollify_l1_error_halves():
    errs = []
    for n in (8, 16, 32):
        s, h, out = _step(n, points=8193)
        errs.append(np.trapezoid(np.abs(out - h), s))
    assert errs[1] / errs[0] == pytest.approx(0.5, rel=0.05)
    assert errs[2] / errs[1] == pytest.approx(0.5, rel=0.05)


def test_mollify_ignores_future_values():
    s = np.linspace(0, 1, 1025)
    h = np.sin(7 * s)
    base = mollify(h, s, 8)
    h2 = h.copy()
    h2[700:] += 10.0
    changed = mollify(h2, s, 8)
    assert np.array_equal(base[:700], changed[:700])


def test_mollify_under_resolved():
    s = np.linspace(0, 1, 17)
    with pytest.raises(UnderResolvedError):
        mollify(np.zeros(17), s, 16)


def test_approximants_need_bound():
    t = np.linspace(0, 1, 65)
    with pytest.raises(ValueError):
        adapted_approximants(np.ones(65), t.copy(), t, 4)
    with pytest.raises(ValueError):
        adapted_approximants(np.full(65, 2.0), t.copy(), t, 4, bound=1.0)


def test_approximants_constant_is_exact():
    t = np.linspace(0, 1, 257)
    ap = adapted_approximants(np.full(257, -0.7), t.copy(), t, 8, bound=1.0)
    assert np.allclose(ap.values, -0.7)
    assert ap.l2_error == pytest.approx(0.0, abs=1e-24)


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_approximant_error_bound(n):
    g = TimeGrid.uniform(2048)
    w = gen_brownian(g, Seed(11))
    qv = np.concatenate(([0.0], np.cumsum(np.diff(w.values) ** 2)))
    f = (g.times > 0.5).astype(float)
    ap = adapted_approximants(f, qv, g.times, n, bound=1.0)
    # the error lives on one transition window of clock length 2/n
    assert ap.l2_error <= 2.0 / n


def test_chained_residual_gap():
    """Integral of f^n against W is close to that of f, with the gap controlled by E_n."""
    g = TimeGrid.uniform(4096)
    rng_gaps = []
    for n in (4, 16, 64):
        gaps = []
        for stream in range(40):
            w = gen_brownian(g, Seed(3, stream))
            dw = np.diff(w.values)
            qv = np.concatenate(([0.0], np.cumsum(dw**2)))
            f = (g.times > 0.5).astype(float)
            ap = adapted_approximants(f, qv, g.times, n, bound=1.0)
            gaps.append(np.sum((ap.values[:-1] - f[:-1]) * dw) ** 2)
        rng_gaps.append(np.mean(gaps))
        # E[(int (f^n - f) dW)^2] = E[E_n] <= 2/n
        assert np.mean(gaps) <= 3 * 2.0 / n
    assert rng_gaps[-1] < rng_gaps[0]


@given(st.lists(st.floats(0, 1), min_size=2, max_size=50))
def test_clock_lipschitz_property(dq):
    qv = np.concatenate(([0.0], np.cumsum(dq)))
    t = np.linspace(0, 1, qv.size)
    tc = build_timechange(IncreasingStep(qv), t)
    assert tc.lipschitz_ok()
    assert np.all(np.diff(tc.s) >= 0)
