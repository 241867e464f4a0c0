"""Integral evaluators tagged with the filtration that makes the integrand predictable.

All grid evaluators reduce to two sums:

* the predictable (Ito) sum ``sum_k f_k (x_{k+1} - x_k)``, used for
  martingale integrators, and
* the Lebesgue-Stieltjes sum of :func:`semilab.grid_path.stieltjes_integral`,
  used for finite-variation integrators.

Inputs may be single paths (1-D) or ensembles (2-D, scenarios on axis 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .filtration import FiltrationModel, Natural, require_semimartingale
from ._kernels import band_sups
from .grid_path import SamplePath, stieltjes_integral
from .pathwise import pathwise_integral, pathwise_qv
from .simulate import Ensemble

__all__ = [
    "PredictableIntegrand",
    "TruncationLadder",
    "UcpReport",
    "discrete_integral",
    "truncated_integral",
    "improper_integral",
    "ucp_distance",
    "two_filtration_compare",
    "CompareResult",
    "evaluate_route",
    "qv_floor",
    "merge_ucp_reports",
    "DEFAULT_EPSILONS",
]

DEFAULT_EPSILONS = (0.1, 0.01)
PASS_PROBABILITY = 0.05
FAIL_PROBABILITY = 0.2


@dataclass(frozen=True, eq=False)
class PredictableIntegrand:
    values: np.ndarray
    bound: Optional[float] = None
    model: FiltrationModel = field(default_factory=Natural)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if self.bound is not None and np.any(np.abs(v) > self.bound):
            raise ValueError("integrand exceeds its declared bound")
        object.__setattr__(self, "values", v)


def _values(obj) -> np.ndarray:
    if isinstance(obj, (SamplePath, Ensemble, PredictableIntegrand)):
        return obj.values
    return np.asarray(obj, dtype=np.float64)


def _wrap(like, out):
    if isinstance(like, SamplePath):
        return SamplePath(like.grid, out)
    if isinstance(like, Ensemble):
        return like.derived(out)
    return out


def discrete_integral(f, x):
    """Running sum of f_k (x_{k+1} - x_k); value 0 at t_0."""
    fv, xv = _values(f), _values(x)
    if fv.shape[-1] != xv.shape[-1]:
        raise ValueError("integrand and integrator live on different grids")
    if isinstance(f, SamplePath) and isinstance(x, SamplePath) and f.grid != x.grid:
        raise ValueError("integrand and integrator live on different grids")
    terms = fv[..., :-1] * np.diff(xv, axis=-1)
    out = np.zeros(np.broadcast_shapes(fv.shape, xv.shape))
    np.cumsum(terms, axis=-1, out=out[..., 1:])
    return _wrap(x, out)


def truncate(f, a: float) -> np.ndarray:
    if a <= 0:
        raise ValueError("truncation level must be positive")
    fv = _values(f)
    return np.where(np.abs(fv) <= a, fv, 0.0)


def truncated_integral(f, x, a: float):
    return discrete_integral(truncate(f, a), x)


def evaluate_route(route: str, f: PredictableIntegrand, x: SamplePath, level: int = 12):
    """Evaluate ``int f dx`` by a named route; the model tag only gates admissibility.

    Routes: ``"ito"`` (predictable sum), ``"pathwise"`` (stopping-partition sums
    with ``f`` read as a path), ``"martingale"`` (Ito sum, requires a model with a
    semimartingale guarantee).
    """
    if route == "ito":
        return discrete_integral(f, x)
    if route == "martingale":
        require_semimartingale(f.model)
        return discrete_integral(f, x)
    if route == "pathwise":
        return pathwise_integral(SamplePath(x.grid, f.values), x, level).path
    raise ValueError(f"unknown route {route!r}")


# --------------------------------------------------------------------------
# ucp diagnostics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncationLadder:
    levels: tuple

    def __post_init__(self):
        lv = tuple(float(a) for a in self.levels)
        if any(a <= 0 for a in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValueError("ladder levels must be positive and strictly increasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def powers_of_two(cls, top: int, start: int = 1) -> "TruncationLadder":
        return cls(tuple(2.0**j for j in range(start, top + 1)))

    def merged(self, other: "TruncationLadder") -> "TruncationLadder":
        return TruncationLadder(tuple(sorted(set(self.levels) | set(other.levels))))


def _wilson(k: int, n: int):
    if n == 0:
        return 0.0, 1.0
    ci = stats.binomtest(k, n).proportion_ci(0.95, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class UcpReport:
    """Estimated P(sup_{t<=T} |lhs - rhs| > eps) per row and (T, eps)."""

    labels: list
    horizons: list
    epsilons: list
    probability: np.ndarray  # (rows, horizons, epsilons)
    ci_low: np.ndarray
    ci_high: np.ndarray
    mean_sup: np.ndarray  # (rows, horizons)
    n_scenarios: int
    exceed_counts: Optional[np.ndarray] = None  # (rows, horizons, epsilons)
    verdict: Optional[str] = None
    per_eps_verdict: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "labels": [str(l) for l in self.labels],
            "horizons": list(map(float, self.horizons)),
            "epsilons": list(map(float, self.epsilons)),
            "probability": self.probability.tolist(),
            "ci_low": self.ci_low.tolist(),
            "ci_high": self.ci_high.tolist(),
            "mean_sup": self.mean_sup.tolist(),
            "n_scenarios": self.n_scenarios,
            "verdict": self.verdict,
            "per_eps_verdict": self.per_eps_verdict,
        }


def _sup_up_to(diff: np.ndarray, grid, horizons) -> np.ndarray:
    a = np.abs(diff)
    out = np.empty((a.shape[0], len(horizons)))
    for j, T in enumerate(horizons):
        k = int(np.searchsorted(grid.times, T, side="right"))
        out[:, j] = a[:, :k].max(axis=1)
    return out


def _ucp_rows(sups: list, labels, horizons, epsilons, n) -> UcpReport:
    counts = np.zeros((len(sups), len(horizons), len(epsilons)), dtype=np.int64)
    mean_sup = np.zeros((len(sups), len(horizons)))
    for r, sup in enumerate(sups):
        mean_sup[r] = sup.mean(axis=0)
        for e, eps in enumerate(epsilons):
            counts[r, :, e] = np.count_nonzero(sup > eps, axis=0)
    return _report_from_counts(counts, mean_sup, labels, horizons, epsilons, n)


def _report_from_counts(counts, mean_sup, labels, horizons, epsilons, n) -> UcpReport:
    prob = counts / n
    lo, hi = np.zeros(prob.shape), np.zeros(prob.shape)
    for i in np.ndindex(counts.shape):
        lo[i], hi[i] = _wilson(int(counts[i]), n)
    return UcpReport(list(labels), list(horizons), list(epsilons), prob, lo, hi, mean_sup, n, counts)


def merge_ucp_reports(reports: Sequence[UcpReport]) -> UcpReport:
    """Pool reports computed on disjoint scenario batches with identical layout."""
    first = reports[0]
    n = sum(r.n_scenarios for r in reports)
    counts = sum(r.exceed_counts for r in reports)
    mean_sup = sum(r.mean_sup * r.n_scenarios for r in reports) / n
    out = _report_from_counts(counts, mean_sup, first.labels, first.horizons, first.epsilons, n)
    if first.verdict is not None:
        out.verdict, out.per_eps_verdict = _ladder_verdict(out)
    return out


def ucp_distance(lhs: Ensemble, rhs: Ensemble, horizons=None, epsilons=DEFAULT_EPSILONS) -> UcpReport:
    if not lhs.paired_with(rhs):
        raise ValueError("ucp_distance needs paired ensembles (same grid, seed and streams)")
    horizons = list(horizons) if horizons is not None else [lhs.grid.horizon]
    sup = _sup_up_to(lhs.values - rhs.values, lhs.grid, horizons)
    return _ucp_rows([sup], ["lhs-rhs"], horizons, list(epsilons), len(lhs))


def _ladder_verdict(report: UcpReport, tail: int = 3) -> tuple[str, dict]:
    per = {}
    p = report.probability[:, -1, :]
    hi = report.ci_high[:, -1, :]
    for e, eps in enumerate(report.epsilons):
        seq = p[:, e]
        last = seq[-tail:]
        if seq[-1] < PASS_PROBABILITY and hi[-1, e] < FAIL_PROBABILITY:
            per[eps] = "PASS"
        elif len(last) == tail and np.all(np.diff(last) < 0):
            per[eps] = "DECREASING"
        elif len(last) == tail and np.all(np.diff(last) >= 0):
            per[eps] = "INCREASING"
        else:
            per[eps] = "UNSETTLED"
    vals = list(per.values())
    if any(v == "INCREASING" for v in vals):
        verdict = "DIVERGENT"
    elif all(v in ("PASS", "DECREASING") for v in vals) and "PASS" in vals:
        verdict = "CONVERGENT"
    else:
        verdict = "INCONCLUSIVE"
    return verdict, {str(k): v for k, v in per.items()}


def improper_integral(
    f,
    x: Ensemble,
    ladder: TruncationLadder,
    epsilons=DEFAULT_EPSILONS,
    horizons=None,
    route: str = "martingale",
    model: Optional[FiltrationModel] = None,
):
    """Truncated integrals along ``ladder`` and their Cauchy diagnostic.

    ``route="martingale"`` uses the predictable sum of ``f 1{|f|<=a}`` against
    ``x``.  ``route="stieltjes"`` tracks the absolute Stieltjes mass
    ``sum |f 1{|f|<=a}| |dx|`` that a Riemann-Stieltjes integral would need to
    be finite.  Returns ``(top rung, UcpReport)``; the report's verdict is
    CONVERGENT, DIVERGENT or INCONCLUSIVE, never an exception.
    """
    if len(ladder.levels) < 3:
        raise ValueError("ladder needs at least three rungs")
    if route == "martingale" and model is not None:
        require_semimartingale(model)
    horizons = list(horizons) if horizons is not None else [x.grid.horizon]
    levels = np.asarray(ladder.levels)
    fv = np.broadcast_to(_values(f), x.values.shape)
    g = fv[:, :-1]
    dx = np.diff(x.values, axis=1)
    if route == "martingale":
        terms = g * dx
    elif route == "stieltjes":
        terms = np.abs(g) * np.abs(dx)
    else:
        raise ValueError(f"unknown route {route!r}")
    # band j: a_{j-1} < |f| <= a_j, the part added between consecutive rungs
    band = np.searchsorted(levels, np.abs(g), side="left")
    band = np.where(band >= len(levels), -1, band)
    hidx = np.array([int(np.searchsorted(x.grid.times, T, side="right")) - 1 for T in horizons])
    sup = band_sups(terms, band, len(levels) - 1, hidx)
    sups = [sup[:, j, :] for j in range(len(levels) - 1)]
    labels = list(ladder.levels[1:])
    top_terms = np.where(np.abs(g) <= levels[-1], terms, 0.0)
    top = np.zeros(x.values.shape)
    np.cumsum(top_terms, axis=1, out=top[:, 1:])
    report = _ucp_rows(sups, labels, horizons, list(epsilons), len(x))
    report.verdict, report.per_eps_verdict = _ladder_verdict(report)
    return x.derived(top), report


# --------------------------------------------------------------------------
# two filtrations
# --------------------------------------------------------------------------

@dataclass
class CompareResult:
    z: Ensemble
    qv: np.ndarray  # per-scenario pathwise QV of Z at the horizon
    qv_floor: float
    tv: np.ndarray  # per-scenario total variation of Z
    sup_abs: np.ndarray
    identity_error: np.ndarray  # per scenario: |int f dM - int f dN - int f dD|
    bracket: np.ndarray  # per scenario: sup |int f dA (Stieltjes) - int f dA (Ito)|

    def summary(self) -> dict:
        return {
            "mean_sup_abs_z": float(self.sup_abs.mean()),
            "max_qv_z": float(self.qv.max()),
            "qv_floor": self.qv_floor,
            "mean_tv_z": float(self.tv.mean()),
            "max_identity_error": float(self.identity_error.max()),
        }


def _stieltjes_rows(f: np.ndarray, v: np.ndarray) -> np.ndarray:
    terms = f[..., 1:] * np.diff(v, axis=-1)
    out = np.zeros(np.broadcast_shapes(f.shape, v.shape))
    np.cumsum(terms, axis=-1, out=out[..., 1:])
    return out


def qv_floor(grid, level: int) -> float:
    """Pathwise QV at ``level`` of the zero-QV reference path t -> t on this grid.

    A continuous finite-variation path has zero quadratic variation in the
    limit; what the level-n sums still report on it is the resolution floor.
    """
    return float(pathwise_qv(SamplePath(grid, grid.times.copy()), level).values[-1])


def two_filtration_compare(
    f,
    x: Ensemble,
    decomp_f: tuple,
    decomp_g: tuple,
    level: Optional[int] = 10,
    models: Optional[tuple] = None,
    atol: float = 1e-12,
) -> CompareResult:
    """Difference of the decomposition routes of int f dx under two filtrations.

    ``decomp_f = (M, A)`` and ``decomp_g = (N, B)`` are per-scenario arrays (or
    ensembles) with ``M + A = x = N + B``.  Martingale legs use the predictable
    sum; finite-variation legs use the Lebesgue-Stieltjes sum with ``f`` read at
    each cell's closing time.  ``Z = (int f dM + int f dA) - (int f dN + int f dB)``.
    ``level=None`` skips the per-scenario pathwise QV of Z.
    """
    if models is not None:
        for m in models:
            require_semimartingale(m)
    xv = x.values
    M, A = (_values(v) for v in decomp_f)
    N, B = (_values(v) for v in decomp_g)
    scale = atol * (1.0 + np.abs(xv))
    for name, a, b in (("F", M, A), ("G", N, B)):
        if np.any(np.abs(a + b - xv) > scale):
            raise ValueError(f"decomposition {name} does not reproduce the integrator")
    fv = np.broadcast_to(_values(f), xv.shape)
    im, i_n = discrete_integral(fv, M), discrete_integral(fv, N)
    ia, ib = _stieltjes_rows(fv, A), _stieltjes_rows(fv, B)
    z = (im + ia) - (i_n + ib)
    d_int = discrete_integral(fv, M - N)
    ident = np.abs((im - i_n) - d_int).max(axis=1)
    bracket = np.abs(ia - discrete_integral(fv, A)).max(axis=1)
    if level is None:
        floor, qv = float("nan"), np.full(len(z), np.nan)
    else:
        floor = qv_floor(x.grid, level)
        qv = np.array([pathwise_qv(SamplePath(x.grid, row), level).values[-1] for row in z])
    tv = np.abs(np.diff(z, axis=1)).sum(axis=1)
    return CompareResult(x.derived(z), qv, floor, tv, np.abs(z).max(axis=1), ident, bracket)
