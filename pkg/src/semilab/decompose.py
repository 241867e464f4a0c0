"""Cellwise Lebesgue and Jordan decompositions of step processes.

Cells are numbered by their closing grid index: cell ``k`` is ``(t_{k-1}, t_k]``
for ``k = 1..n``.  Every per-cell quantity here depends only on the two
increments of that cell, so it is predictable in the discrete sense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "IncreasingStep",
    "DecompositionResult",
    "FVDecomposition",
    "JordanSplit",
    "lebesgue_decompose",
    "jordan_predictable",
    "fv_decompose",
    "dominated_density",
    "abs_continuity_check",
    "AbsContinuityVerdict",
    "regularity_check",
    "RegularityVerdict",
]


def _cumulative(increments) -> np.ndarray:
    d = np.asarray(increments, dtype=np.float64)
    return np.concatenate(([0.0], np.cumsum(d)))


@dataclass(frozen=True, eq=False)
class IncreasingStep:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("need a 1-D array of cumulative values")
        if v[0] != 0.0:
            raise ValueError("increasing step process must start at 0")
        if np.any(np.diff(v) < 0):
            raise ValueError("input is decreasing on some cell")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_increments(cls, d) -> "IncreasingStep":
        d = np.asarray(d, dtype=np.float64)
        if np.any(d < 0):
            raise ValueError("input is decreasing on some cell")
        return cls(_cumulative(d))

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    def __len__(self):
        return self.values.size


def _increments(obj) -> np.ndarray:
    if isinstance(obj, IncreasingStep):
        return obj.increments
    v = np.asarray(getattr(obj, "values", obj), dtype=np.float64)
    return np.diff(v)


def _signed_increments(u) -> np.ndarray:
    v = np.asarray(getattr(u, "values", u), dtype=np.float64)
    if v[0] != 0.0:
        raise ValueError("signed step path must start at 0")
    return np.diff(v)


@dataclass(frozen=True)
class DecompositionResult:
    density: np.ndarray  # phi per cell
    singular_set: np.ndarray  # sorted cell numbers (1-based)
    singular_part: IncreasingStep

    @property
    def singular_mask(self) -> np.ndarray:
        m = np.zeros(self.density.size, dtype=bool)
        m[self.singular_set - 1] = True
        return m


def lebesgue_decompose(a, r) -> DecompositionResult:
    da, dr = _increments(a), _increments(r)
    if da.shape != dr.shape:
        raise ValueError("grid mismatch")
    if np.any(da < 0) or np.any(dr < 0):
        raise ValueError("inputs must be increasing")
    charged = dr > 0
    phi = np.zeros_like(da)
    np.divide(da, dr, out=phi, where=charged)
    gamma = ~charged & (da > 0)
    sing = IncreasingStep(_cumulative(np.where(gamma, da, 0.0)))
    return DecompositionResult(phi, np.flatnonzero(gamma) + 1, sing)


@dataclass(frozen=True)
class JordanSplit:
    positive: IncreasingStep
    negative: IncreasingStep
    up_cells: np.ndarray  # Lambda: cells with a strictly positive increment (1-based)

    @property
    def up_mask(self) -> np.ndarray:
        m = np.zeros(len(self.positive) - 1, dtype=bool)
        m[self.up_cells - 1] = True
        return m


def jordan_predictable(u) -> JordanSplit:
    du = _signed_increments(u)
    lam = du > 0
    up = np.where(lam, du, 0.0)
    down = np.where(du < 0, -du, 0.0)
    return JordanSplit(IncreasingStep(_cumulative(up)), IncreasingStep(_cumulative(down)), np.flatnonzero(lam) + 1)


@dataclass(frozen=True)
class FVDecomposition:
    density: np.ndarray  # rho per cell
    sign: np.ndarray  # xi per cell, in {-1, 0, 1}
    singular: np.ndarray  # cumulative V, starting at 0
    up_cells: np.ndarray  # Lambda (1-based)

    @property
    def singular_increments(self) -> np.ndarray:
        return np.diff(self.singular)


def fv_decompose(u, r) -> FVDecomposition:
    du = _signed_increments(u)
    dr = _increments(r)
    if du.shape != dr.shape:
        raise ValueError("grid mismatch")
    js = jordan_predictable(u)
    plus = lebesgue_decompose(js.positive, r)
    minus = lebesgue_decompose(js.negative, r)
    lam = js.up_mask
    xi = (plus.singular_mask & lam).astype(np.int64) - (minus.singular_mask & ~lam).astype(np.int64)
    rho = plus.density - minus.density
    # V's increment is the singular mass itself, not du - rho*dr, so it is exact
    dv = np.where(xi != 0, du, 0.0)
    return FVDecomposition(rho, xi, _cumulative(dv), js.up_cells)


def dominated_density(a, r) -> np.ndarray:
    da, dr = _increments(a), _increments(r)
    if da.shape != dr.shape:
        raise ValueError("grid mismatch")
    if np.any(da > dr) or np.any(da < 0):
        raise ValueError("increments of a are not dominated by those of r")
    phi = np.zeros_like(da)
    np.divide(da, dr, out=phi, where=dr > 0)
    return phi


@dataclass(frozen=True)
class AbsContinuityVerdict:
    density_form: bool  # condition II: singular part vanishes
    null_test_form: bool  # condition III over the supplied tests and canonical witnesses
    witness: Optional[int]  # a cell (1-based) charged by u but not by r
    failed_tests: tuple

    @property
    def agree(self) -> bool:
        return self.density_form == self.null_test_form

    @property
    def absolutely_continuous(self) -> bool:
        return self.density_form and self.null_test_form


def abs_continuity_check(u, r, tests: Iterable = (), atol: float = 0.0) -> AbsContinuityVerdict:
    """Compare the density criterion with the null-set criterion on one path.

    Each test is a cell-indexed array ``f`` (length = number of cells).  A test
    fails when ``sum f^2 dR == 0`` but ``sum f dU != 0``.  The indicator of
    every R-null cell is always added as a witness test.
    """
    du = _signed_increments(u)
    dr = _increments(r)
    if du.shape != dr.shape:
        raise ValueError("grid mismatch")
    dec = fv_decompose(u, r)
    density_ok = not np.any(dec.singular_increments != 0)
    failed = []
    for i, f in enumerate(tests):
        f = np.asarray(f, dtype=np.float64)
        if np.sum(f * f * dr) <= atol and abs(np.sum(f * du)) > atol:
            failed.append(i)
    null_cells = np.flatnonzero((dr == 0) & (du != 0))
    witness = int(null_cells[0]) + 1 if null_cells.size else None
    null_ok = not failed and witness is None
    return AbsContinuityVerdict(density_ok, null_ok, witness, tuple(failed))


@dataclass(frozen=True)
class RegularityVerdict:
    regular: bool
    witness: Optional[int]
    detail: AbsContinuityVerdict

    @property
    def label(self) -> str:
        return "REGULAR" if self.regular else "NOT_REGULAR"


def regularity_check(m, a, qv, tests: Iterable = ()) -> RegularityVerdict:
    """Regularity of X = M + A: A must be absolutely continuous w.r.t. [M, M] cellwise."""
    mv = np.asarray(getattr(m, "values", m), dtype=np.float64)
    av = np.asarray(getattr(a, "values", a), dtype=np.float64)
    qv_v = np.asarray(getattr(qv, "values", qv), dtype=np.float64)
    if not (mv.shape == av.shape == qv_v.shape):
        raise ValueError("m, a and qv must share a grid")
    av = av - av[0]
    qv_v = qv_v - qv_v[0]
    verdict = abs_continuity_check(av, IncreasingStep(qv_v), tests)
    ok = verdict.absolutely_continuous
    return RegularityVerdict(ok, verdict.witness, verdict)
