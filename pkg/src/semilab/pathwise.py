"""Filtration-free stochastic integration along adaptive stopping partitions.

For a driving path ``u`` and level ``n`` the partition points are the
successive first times at which ``u`` (or its left limit) has moved by at
least ``2**-n`` since the previous point.  Freezing ``u`` at those points
gives the Riemann sums ``Z^n``; nothing here reads anything but path values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import PartitionOverflow, partition_scan
from .grid_path import SamplePath

__all__ = [
    "DEFAULT_PARTITION_CAP",
    "PartitionOverflow",
    "StoppingPartition",
    "RiemannSumPath",
    "build_partition",
    "pathwise_integral",
    "pathwise_qv",
    "partition_qv",
    "qv_continuous_part",
    "frozen_integrand",
]

DEFAULT_PARTITION_CAP = 10_000_000


@dataclass(frozen=True)
class StoppingPartition:
    level: int
    indices: np.ndarray

    @property
    def oscillation_bound(self) -> float:
        return 2.0 ** -self.level


@dataclass(frozen=True)
class RiemannSumPath:
    level: int
    path: SamplePath
    partition: StoppingPartition


def build_partition(u: SamplePath, n: int, cap: int = DEFAULT_PARTITION_CAP) -> StoppingPartition:
    if n < 0:
        raise ValueError("level must be non-negative")
    idx = partition_scan(u.values, u.left_values, 2.0 ** -n, cap)
    return StoppingPartition(int(n), idx)


def frozen_integrand(u: SamplePath, part: StoppingPartition) -> np.ndarray:
    """Per-cell coefficient: u at the last partition point strictly before each index.

    Entry ``k`` (k >= 1) multiplies the increment ``x_k - x_{k-1}``; entry 0 is unused.
    """
    owner = np.zeros(len(u), dtype=np.int64)
    owner[part.indices] = part.indices
    owner = np.maximum.accumulate(owner)
    coef = np.empty(len(u))
    coef[0] = 0.0
    coef[1:] = u.values[owner[:-1]]
    return coef


def pathwise_integral(u: SamplePath, x: SamplePath, n: int, cap: int = DEFAULT_PARTITION_CAP) -> RiemannSumPath:
    if u.grid != x.grid:
        raise ValueError("integrand and integrator must share a grid")
    part = build_partition(u, n, cap)
    coef = frozen_integrand(u, part)
    dx = np.diff(x.values)
    z = np.concatenate(([0.0], np.cumsum(coef[1:] * dx)))
    idx = x.jump_index
    if idx.size:
        pre = z[idx - 1] + coef[idx] * (x.pre_jump - x.values[idx - 1])
        path = SamplePath(x.grid, z, idx, pre)
    else:
        path = SamplePath(x.grid, z)
    return RiemannSumPath(int(n), path, part)


def pathwise_qv(x: SamplePath, n: int, cap: int = DEFAULT_PARTITION_CAP) -> SamplePath:
    """Quadratic variation by integration by parts: X_t^2 - X_0^2 - 2 Z^n_t with u = x."""
    z = pathwise_integral(x, x, n, cap).path
    v = x.values
    qv = v * v - v[0] * v[0] - 2.0 * z.values
    idx = x.jump_index
    if idx.size:
        pre = x.pre_jump
        pre_qv = pre * pre - v[0] * v[0] - 2.0 * z.pre_jump
        return SamplePath(x.grid, qv, idx, pre_qv)
    return SamplePath(x.grid, qv)


def partition_qv(x: SamplePath, n: int, cap: int = DEFAULT_PARTITION_CAP) -> np.ndarray:
    """Sum of squared increments over the level-n cells, each stopped at t."""
    part = build_partition(x, n, cap)
    anchor_val = x.values[part.indices]
    owner = np.zeros(len(x), dtype=np.int64)
    owner[part.indices] = np.arange(part.indices.size)
    owner = np.maximum.accumulate(owner)
    # completed cells up to and including each partition point
    closed = np.concatenate(([0.0], np.cumsum(np.diff(anchor_val) ** 2)))
    # cell in progress at grid index k started at the last partition point <= k
    running = (x.values - anchor_val[owner]) ** 2
    return closed[owner] + running


def qv_continuous_part(x: SamplePath, qv: SamplePath) -> SamplePath:
    """Subtract the running sum of squared marked jumps from a QV path."""
    if x.grid != qv.grid:
        raise ValueError("grid mismatch")
    sq = np.cumsum(x.jumps ** 2)
    return SamplePath(x.grid, qv.values - sq)
