"""Seeded scenario generators.

Randomness comes from numpy's counter-based Philox bit generator keyed by a
64-bit master seed; scenario ``i`` of an ensemble uses stream ``i`` (a spawn
key on the seed sequence), so any scenario can be regenerated on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .grid_path import SamplePath, TimeGrid

__all__ = [
    "Seed",
    "Ensemble",
    "DyadicScenario",
    "PairFlipScenario",
    "gen_brownian",
    "brownian_ensemble",
    "gen_dyadic",
    "dyadic_ensemble",
    "dyadic_grid",
    "gen_pairflip",
    "pairflip_ensemble",
    "gen_jump_semimartingale",
    "split_jumps",
    "MAX_DYADIC_LEVEL",
]

MAX_DYADIC_LEVEL = 20


@dataclass(frozen=True)
class Seed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.stream < 0:
            raise ValueError("stream id must be non-negative")

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(ss))

    def at(self, stream: int) -> "Seed":
        return Seed(self.seed, stream)


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Paths of several scenarios on one grid, row ``i`` drawn from ``streams[i]``."""

    grid: TimeGrid
    values: np.ndarray
    seed: Optional[int] = None
    streams: Optional[np.ndarray] = None
    jumps: Optional[np.ndarray] = None  # per-index jump sizes, same shape as values

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != len(self.grid):
            raise ValueError("ensemble values must be (scenarios, grid points)")
        object.__setattr__(self, "values", v)
        if self.streams is not None:
            s = np.asarray(self.streams, dtype=np.int64)
            if s.shape != (v.shape[0],):
                raise ValueError("one stream id per scenario")
            object.__setattr__(self, "streams", s)

    def __len__(self):
        return self.values.shape[0]

    def path(self, i: int) -> SamplePath:
        if self.jumps is None:
            return SamplePath(self.grid, self.values[i])
        idx = np.flatnonzero(self.jumps[i])
        return SamplePath(self.grid, self.values[i], idx, self.values[i, idx] - self.jumps[i, idx])

    def paired_with(self, other: "Ensemble") -> bool:
        if self.grid != other.grid or len(self) != len(other):
            return False
        if self.seed is None or other.seed is None or self.streams is None or other.streams is None:
            return False
        return self.seed == other.seed and np.array_equal(self.streams, other.streams)

    def derived(self, values, jumps=None) -> "Ensemble":
        """Same scenarios, new path values (e.g. an integral of these paths)."""
        return Ensemble(self.grid, values, self.seed, self.streams, jumps)


# --------------------------------------------------------------------------
# Brownian motion
# --------------------------------------------------------------------------

def _brownian_values(grid: TimeGrid, rng: np.random.Generator) -> np.ndarray:
    dw = rng.standard_normal(len(grid) - 1) * np.sqrt(grid.dt)
    return np.concatenate(([0.0], np.cumsum(dw)))


def gen_brownian(grid: TimeGrid, seed: Seed) -> SamplePath:
    return SamplePath(grid, _brownian_values(grid, seed.rng()))


def brownian_ensemble(grid: TimeGrid, seed: int, n_paths: int, first_stream: int = 0) -> Ensemble:
    streams = np.arange(first_stream, first_stream + n_paths, dtype=np.int64)
    vals = np.empty((n_paths, len(grid)))
    for i, s in enumerate(streams):
        vals[i] = _brownian_values(grid, Seed(seed, int(s)).rng())
    return Ensemble(grid, vals, seed, streams)


# --------------------------------------------------------------------------
# dyadic-jump martingale
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicScenario:
    max_level: int
    signs: dict  # level m -> array of xi^{k,m}, k = 1..2^{m-1}
    path: SamplePath
    integrand: np.ndarray  # f at each grid time: 2^m at a^{k,m}, 0 elsewhere
    level_of: np.ndarray  # m at a^{k,m}, 0 elsewhere

    def jump_times(self, m: int) -> np.ndarray:
        k = np.arange(1, 2 ** (m - 1) + 1)
        return (2 * k - 1) / 2.0**m

    @property
    def predictable_integrand(self) -> np.ndarray:
        """f shifted so entry k multiplies the increment from t_k to t_{k+1}."""
        g = np.zeros_like(self.integrand)
        g[:-1] = self.integrand[1:]
        return g


def dyadic_grid(M: int) -> TimeGrid:
    return TimeGrid(np.arange(2**M + 1) / 2.0**M)


def _check_level(M: int):
    if not 1 <= M <= MAX_DYADIC_LEVEL:
        raise ValueError(f"dyadic level must be in 1..{MAX_DYADIC_LEVEL}")


def _dyadic_layout(M: int):
    level_of = np.zeros(2**M + 1, dtype=np.int64)
    for m in range(1, M + 1):
        k = np.arange(1, 2 ** (m - 1) + 1)
        level_of[(2 * k - 1) * 2 ** (M - m)] = m
    f = np.where(level_of > 0, 2.0 ** level_of, 0.0)
    return level_of, f


def _dyadic_signs(M: int, rng: np.random.Generator) -> dict:
    return {m: rng.integers(0, 2, size=2 ** (m - 1)) * 2 - 1 for m in range(1, M + 1)}


def _dyadic_increments(M: int, signs: dict) -> np.ndarray:
    d = np.zeros(2**M + 1)
    for m, xi in signs.items():
        k = np.arange(1, xi.size + 1)
        d[(2 * k - 1) * 2 ** (M - m)] = xi * 2.0 ** (-2 * m)
    return d


def gen_dyadic(M: int, seed: Seed) -> DyadicScenario:
    _check_level(M)
    grid = dyadic_grid(M)
    signs = _dyadic_signs(M, seed.rng())
    jumps = _dyadic_increments(M, signs)
    values = np.cumsum(jumps)
    idx = np.flatnonzero(jumps)
    path = SamplePath(grid, values, idx, values[idx] - jumps[idx])
    level_of, f = _dyadic_layout(M)
    return DyadicScenario(M, signs, path, f, level_of)


def dyadic_ensemble(M: int, seed: int, n_paths: int, first_stream: int = 0):
    """Paths of A for many scenarios plus the shared integrand and level map."""
    _check_level(M)
    grid = dyadic_grid(M)
    streams = np.arange(first_stream, first_stream + n_paths, dtype=np.int64)
    jumps = np.empty((n_paths, len(grid)))
    for i, s in enumerate(streams):
        jumps[i] = _dyadic_increments(M, _dyadic_signs(M, Seed(seed, int(s)).rng()))
    level_of, f = _dyadic_layout(M)
    return Ensemble(grid, np.cumsum(jumps, axis=1), seed, streams, jumps), f, level_of


# --------------------------------------------------------------------------
# pair-flip process
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PairFlipScenario:
    max_index: int
    draws: np.ndarray  # U_k for k = 0..2N+1; entries 0 and 1 unused
    path: SamplePath  # grid: a_1 = 0 < a_2 < ... < a_N < 1

    @property
    def initial_jump(self) -> float:
        """The n = 1 term, folded into X_0 (with X_{0-} = 0)."""
        return float(self.path.values[0])


def _pairflip_grid(N: int) -> TimeGrid:
    n = np.arange(1, N + 1, dtype=np.float64)
    return TimeGrid(np.concatenate((1.0 - 1.0 / n, [1.0])))


def _pairflip_terms(N: int, rng: np.random.Generator):
    u = np.zeros(2 * N + 2, dtype=np.int64)
    u[2:] = rng.integers(0, 2, size=2 * N) * 2 - 1
    n = np.arange(1, N + 1)
    return u, u[2 * n] * u[2 * n + 1] / n


def gen_pairflip(N: int, seed: Seed) -> PairFlipScenario:
    if N < 1:
        raise ValueError("N must be at least 1")
    grid = _pairflip_grid(N)
    u, terms = _pairflip_terms(N, seed.rng())
    partial = np.cumsum(terms)
    values = np.concatenate((partial, [partial[-1]]))
    idx = np.arange(1, N, dtype=np.int64)
    path = SamplePath(grid, values, idx, values[idx - 1])
    return PairFlipScenario(N, u, path)


def pairflip_ensemble(N: int, seed: int, n_paths: int, first_stream: int = 0) -> Ensemble:
    grid = _pairflip_grid(N)
    streams = np.arange(first_stream, first_stream + n_paths, dtype=np.int64)
    vals = np.empty((n_paths, len(grid)))
    for i, s in enumerate(streams):
        _, terms = _pairflip_terms(N, Seed(seed, int(s)).rng())
        partial = np.cumsum(terms)
        vals[i, :-1] = partial
        vals[i, -1] = partial[-1]
    jumps = np.zeros_like(vals)
    jumps[:, 1:-1] = np.diff(vals[:, :-1], axis=1)
    return Ensemble(grid, vals, seed, streams, jumps)


# --------------------------------------------------------------------------
# Brownian motion plus summable jumps
# --------------------------------------------------------------------------

JumpLaw = Callable[[np.random.Generator, int], np.ndarray]


def normal_jumps(scale: float = 0.5) -> JumpLaw:
    return lambda rng, k: rng.normal(0.0, scale, size=k)


def gen_jump_semimartingale(
    grid: TimeGrid,
    seed: Seed,
    intensity: float = 0.0,
    jump_law: Optional[JumpLaw] = None,
    sigma: float = 1.0,
    jumps=None,
) -> SamplePath:
    """sigma * W plus a compound Poisson sum of marked jumps.

    Poisson jump times are snapped to the first grid time at or after them;
    ``jumps=(times, sizes)`` adds deterministic jumps at grid times instead.
    """
    rng = seed.rng()
    cont = sigma * _brownian_values(grid, rng)
    dv = np.zeros(len(grid))
    if intensity > 0.0:
        law = jump_law or normal_jumps()
        count = rng.poisson(intensity * grid.horizon)
        taus = rng.uniform(0.0, grid.horizon, size=count)
        sizes = np.asarray(law(rng, count), dtype=np.float64)
        where = np.clip(np.searchsorted(grid.times, taus, side="left"), 1, len(grid) - 1)
        np.add.at(dv, where, sizes)
    if jumps is not None:
        times, sizes = jumps
        for t, z in zip(np.atleast_1d(times), np.atleast_1d(sizes)):
            k = grid.index_of(float(t))
            if k == 0:
                raise ValueError("no jump at time 0")
            dv[k] += float(z)
    v = np.cumsum(dv)
    idx = np.flatnonzero(dv)
    values = cont + v
    return SamplePath(grid, values, idx, values[idx] - dv[idx])


def split_jumps(x: SamplePath):
    """(Y, V): continuous part and running sum of marked jumps, X = Y + V."""
    v = np.cumsum(x.jumps)
    idx = x.jump_index
    vpath = SamplePath(x.grid, v, idx, v[idx] - x.jumps[idx]) if idx.size else SamplePath(x.grid, v)
    return SamplePath(x.grid, x.values - v), vpath
