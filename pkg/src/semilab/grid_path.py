"""Right-continuous paths with left limits sampled on a finite time grid.

A :class:`SamplePath` stores the value at every grid time plus, for a set of
marked indices, the value just before the jump.  Unmarked indices are treated
as continuity points: their left limit is the previous grid value.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TimeGrid",
    "SamplePath",
    "FVProfile",
    "left_limit_path",
    "total_variation",
    "jordan_minimality_check",
    "stieltjes_integral",
    "StieltjesResult",
    "read_path_csv",
    "write_path_csv",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=np.float64)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two points")
        if t[0] != 0.0:
            raise ValueError("time grid must start at exactly 0")
        if not np.all(np.diff(t) > 0):
            raise ValueError("time grid must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, steps: int, horizon: float = 1.0) -> "TimeGrid":
        return cls(np.linspace(0.0, horizon, steps + 1))

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def __len__(self):
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self.times.shape == other.times.shape and bool(np.array_equal(self.times, other.times))

    __hash__ = None

    def index_of(self, t: float) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        k = int(np.searchsorted(self.times, t))
        if k < self.times.size and np.isclose(self.times[k], t, rtol=0, atol=1e-12):
            return k
        raise ValueError(f"time {t!r} is not on the grid")


@dataclass(frozen=True, eq=False)
class SamplePath:
    grid: TimeGrid
    values: np.ndarray
    jump_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    pre_jump: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.shape != (len(self.grid),):
            raise ValueError("values and grid must have equal length")
        idx = np.array(self.jump_index, dtype=np.int64).reshape(-1)
        pre = np.array(self.pre_jump, dtype=np.float64).reshape(-1)
        if idx.shape != pre.shape:
            raise ValueError("every marked jump needs a stored pre-jump value")
        order = np.argsort(idx, kind="stable")
        idx, pre = idx[order], pre[order]
        if idx.size:
            if idx[0] <= 0 or idx[-1] >= v.size:
                raise ValueError("jump marks must lie in 1..len(grid)-1")
            if np.any(np.diff(idx) == 0):
                raise ValueError("duplicate jump mark")
        for a in (v, idx, pre):
            a.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "jump_index", idx)
        object.__setattr__(self, "pre_jump", pre)

    @classmethod
    def continuous(cls, grid: TimeGrid, values) -> "SamplePath":
        return cls(grid, values)

    @classmethod
    def from_jumps(cls, grid: TimeGrid, values, jump_index) -> "SamplePath":
        """Mark ``jump_index`` as jumps whose pre-jump value is the previous grid value."""
        values = np.asarray(values, dtype=np.float64)
        jump_index = np.asarray(jump_index, dtype=np.int64)
        return cls(grid, values, jump_index, values[jump_index - 1])

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def left_values(self) -> np.ndarray:
        """Left limit at each grid time; 0 at index 0."""
        left = np.empty_like(self.values)
        left[0] = 0.0
        left[1:] = self.values[:-1]
        left[self.jump_index] = self.pre_jump
        return left

    @property
    def jumps(self) -> np.ndarray:
        """Jump size per grid index (zero at unmarked points)."""
        out = np.zeros_like(self.values)
        out[self.jump_index] = self.values[self.jump_index] - self.pre_jump
        return out

    def with_values(self, values) -> "SamplePath":
        return SamplePath(self.grid, values)

    def __add__(self, other: "SamplePath") -> "SamplePath":
        if self.grid != other.grid:
            raise ValueError("grid mismatch")
        left = self.left_values + other.left_values
        idx = np.union1d(self.jump_index, other.jump_index).astype(np.int64)
        return SamplePath(self.grid, self.values + other.values, idx, left[idx])

    def __eq__(self, other):
        if not isinstance(other, SamplePath):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.jump_index, other.jump_index)
            and np.array_equal(self.pre_jump, other.pre_jump)
        )

    __hash__ = None


@dataclass(frozen=True)
class FVProfile:
    variation: np.ndarray
    positive_part: np.ndarray
    negative_part: np.ndarray


def left_limit_path(p: SamplePath) -> SamplePath:
    """The path t -> p(t-), with value 0 at time 0."""
    return SamplePath(p.grid, p.left_values)


def _sub_increments(p: SamplePath):
    # Each grid cell splits into a continuous move up to the left limit and a jump.
    left = p.left_values
    drift = left[1:] - p.values[:-1]
    jump = p.values[1:] - left[1:]
    return drift, jump


def total_variation(p: SamplePath) -> FVProfile:
    drift, jump = _sub_increments(p)
    up = np.maximum(drift, 0.0) + np.maximum(jump, 0.0)
    down = np.maximum(-drift, 0.0) + np.maximum(-jump, 0.0)
    pos = np.concatenate(([0.0], np.cumsum(up)))
    neg = np.concatenate(([0.0], np.cumsum(down)))
    var = np.concatenate(([0.0], np.cumsum(up + down)))
    return FVProfile(var, pos, neg)


def jordan_minimality_check(p: SamplePath, g1, g2, rtol: float = 1e-12) -> bool:
    """True iff the Jordan parts of ``p`` grow no faster than ``g1``/``g2`` on every cell.

    Raises ``ValueError`` if ``g1 - g2`` does not reproduce the increments of ``p``.
    """
    g1 = np.asarray(g1, dtype=np.float64)
    g2 = np.asarray(g2, dtype=np.float64)
    if g1.shape != p.values.shape or g2.shape != p.values.shape:
        raise ValueError("g1 and g2 must live on the path's grid")
    d1, d2, dp = np.diff(g1), np.diff(g2), np.diff(p.values)
    scale = rtol * (np.abs(d1) + np.abs(d2) + np.abs(dp) + 1e-300)
    if np.any(np.abs((d1 - d2) - dp) > scale):
        raise ValueError("g1 - g2 does not reproduce the path increments")
    if np.any(d1 < -scale) or np.any(d2 < -scale):
        raise ValueError("g1 and g2 must be increasing")
    prof = total_variation(p)
    dpos, dneg = np.diff(prof.positive_part), np.diff(prof.negative_part)
    return bool(np.all(dpos <= d1 + scale) and np.all(dneg <= d2 + scale))


@dataclass(frozen=True)
class StieltjesResult:
    path: SamplePath
    absolute: np.ndarray  # running sum of |f| |dV|


def stieltjes_integral(f, v: SamplePath) -> StieltjesResult:
    """Lebesgue-Stieltjes sum against a finite-variation grid path.

    ``f[k]`` weights the increment of ``v`` that arrives at ``t_k``; the running
    absolute mass ``sum |f_k| |v_k - v_{k-1}|`` is returned alongside so that
    divergence can be tracked along a ladder of inputs.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != v.values.shape:
        raise ValueError("integrand length does not match the grid")
    dv = np.diff(v.values)
    terms = f[1:] * dv
    out = np.concatenate(([0.0], np.cumsum(terms)))
    absolute = np.concatenate(([0.0], np.cumsum(np.abs(f[1:]) * np.abs(dv))))
    idx = v.jump_index
    if idx.size:
        pre = out[idx - 1] + f[idx] * (v.pre_jump - v.values[idx - 1])
        path = SamplePath(v.grid, out, idx, pre)
    else:
        path = SamplePath(v.grid, out)
    return StieltjesResult(path, absolute)


# --------------------------------------------------------------------------
# CSV round trip
# --------------------------------------------------------------------------

_COLUMNS = ("t", "value", "is_jump", "pre_jump_value")


def write_path_csv(p: SamplePath, dest) -> None:
    """Write ``p`` as CSV with columns t, value, is_jump, pre_jump_value.

    Floats are written with ``repr`` so reading back is bit-exact.
    """
    marks = dict(zip(p.jump_index.tolist(), p.pre_jump.tolist()))
    own = isinstance(dest, (str, Path))
    fh = open(dest, "w", newline="") if own else dest
    try:
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        for k, (t, x) in enumerate(zip(p.times.tolist(), p.values.tolist())):
            if k in marks:
                w.writerow((repr(t), repr(x), 1, repr(marks[k])))
            else:
                w.writerow((repr(t), repr(x), 0, ""))
    finally:
        if own:
            fh.close()


def read_path_csv(src) -> SamplePath:
    if isinstance(src, (str, Path)):
        text = Path(src).read_text()
    else:
        text = src.read()
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or set(_COLUMNS) - set(rows[0]):
        raise ValueError(f"path CSV must have columns {', '.join(_COLUMNS)}")
    t = [float(r["t"]) for r in rows]
    x = [float(r["value"]) for r in rows]
    idx, pre = [], []
    for k, r in enumerate(rows):
        if r["is_jump"].strip() in ("1", "true", "True"):
            idx.append(k)
            pre.append(float(r["pre_jump_value"]))
    return SamplePath(TimeGrid(np.array(t)), np.array(x), np.array(idx, dtype=np.int64), np.array(pre))
