"""Random time change and lagged mollification for adapted continuous approximants."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from ._kernels import bump, lagged_mollify
from .decompose import IncreasingStep

__all__ = [
    "TimeChange",
    "MollifierKernel",
    "build_timechange",
    "mollify",
    "adapted_approximants",
    "Approximants",
    "UnderResolvedError",
]


class UnderResolvedError(ValueError):
    """The s-grid is too coarse for the kernel width 2/n."""


@lru_cache(maxsize=None)
def bump_mass() -> float:
    return integrate.quad(lambda x: float(bump(np.array([x]))[0]), -1.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]


@dataclass(frozen=True)
class MollifierKernel:
    n: int
    x: np.ndarray
    samples: np.ndarray

    @classmethod
    def build(cls, n: int, points: int = 4097) -> "MollifierKernel":
        x = np.linspace(-1.0, 1.0, points)
        return cls(n, x, bump(x) / bump_mass())

    def mass(self) -> float:
        return float(np.trapezoid(self.samples, self.x))


@dataclass(frozen=True)
class TimeChange:
    """Knots pair grid times t_k with clock times s_k = t_k + q_k."""

    t: np.ndarray
    s: np.ndarray
    clock: np.ndarray  # C at s_k, i.e. q_k

    def phi(self, s) -> np.ndarray:
        """Right-continuous inverse of t -> t + q_t (linear between knots)."""
        return np.interp(s, self.s, self.t)

    def psi(self, t) -> np.ndarray:
        return np.interp(t, self.t, self.s)

    def lipschitz_ok(self) -> bool:
        dc, ds = np.diff(self.clock), np.diff(self.s)
        slack = 4 * np.spacing(np.maximum(np.abs(self.s[1:]), 1.0))
        return bool(np.all(dc >= 0) and np.all(dc <= ds + slack))


def build_timechange(qv, times) -> TimeChange:
    q = qv.values if isinstance(qv, IncreasingStep) else IncreasingStep(np.asarray(qv, dtype=np.float64)).values
    t = np.asarray(times, dtype=np.float64)
    if t.shape != q.shape:
        raise ValueError("qv and times must have equal length")
    s = t + q
    return TimeChange(t, s, q.copy())


def mollify(h, s_grid, n: int, at=None) -> np.ndarray:
    """Lagged kernel average of the step function ``h`` (value h[j] on [s_j, s_{j+1})).

    Output at each query time (default: the grid itself) averages h over
    ``(t - 2/n, t]`` only, renormalised over the available mass.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    s_grid = np.asarray(s_grid, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if h.shape != s_grid.shape:
        raise ValueError("h and s_grid must have equal length")
    widths = np.diff(s_grid)
    if widths.size and widths.max() > 1.0 / (4 * n) * (1 + 1e-12):
        raise UnderResolvedError(f"s-grid spacing {widths.max():.3g} exceeds 1/(4n) = {1 / (4 * n):.3g}")
    # the last knot carries no cell of its own
    widths = np.append(widths, widths[-1] if widths.size else 1.0 / (4 * n))
    query = s_grid if at is None else np.asarray(at, dtype=np.float64)
    return lagged_mollify(s_grid, widths, h, query, n)


@dataclass(frozen=True)
class Approximants:
    n: int
    values: np.ndarray  # f^n on the t-grid
    l2_error: float  # sum |f^n_k - f_k|^2 dq_k


def _fine_clock(tc: TimeChange, n: int) -> np.ndarray:
    step = 1.0 / (4 * n)
    lo, hi = tc.s[0], tc.s[-1]
    uniform = np.arange(lo, hi, step)
    return np.union1d(uniform, tc.s)


def adapted_approximants(f, qv, times, n: int, bound=None) -> Approximants:
    """Continuous adapted approximants of a bounded left-sampled integrand.

    h_s = f_{phi_s} on a fine clock grid, mollified with lag, read back at
    s = psi_t.  ``bound`` (or ``f.bound``) is mandatory.
    """
    bound = getattr(f, "bound", bound) if bound is None else bound
    if bound is None:
        raise ValueError("adapted approximants need a declared bound on f")
    fv = np.asarray(getattr(f, "values", f), dtype=np.float64)
    if np.any(np.abs(fv) > bound):
        raise ValueError("f exceeds its declared bound")
    tc = build_timechange(qv, times)
    s_fine = _fine_clock(tc, n)
    k = np.clip(np.searchsorted(tc.s, s_fine, side="right") - 1, 0, fv.size - 1)
    h = fv[k]
    fn = mollify(h, s_fine, n, at=tc.s)
    dq = np.diff(tc.clock)
    err = float(np.sum((fn[:-1] - fv[:-1]) ** 2 * dq))
    return Approximants(n, fn, err)
