"""Filtrations as capability descriptors, information drift, and MC martingale tests.

A filtration model never enumerates sigma-fields.  It answers one question:
which pieces of scenario data are known at time ``s``.  Pieces are
:class:`Atom` values:

* ``Atom("path", d)``       the path of driver ``d`` up to the query time
* ``Atom("value", d, t)``   the single value ``d(t)``
* ``Atom("label", name)``   the cell label of a countable partition
* ``Atom("runmax", d, t)``  the running maximum of ``d`` on ``[0, t]``

Test bases declare the atoms they read; :func:`martingale_test` refuses a basis
whose atoms are not known under the model at the test's start time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .grid_path import SamplePath
from .simulate import Ensemble

__all__ = [
    "Atom",
    "FiltrationModel",
    "Natural",
    "PartitionEnlarged",
    "Anchored",
    "RunningMaxEnlarged",
    "Join",
    "Meet",
    "MeasurabilityError",
    "NotASemimartingaleError",
    "require_semimartingale",
    "model_to_json",
    "model_from_json",
    "Basis",
    "InformationDrift",
    "anchored_drift",
    "compensate",
    "jacod_expand_integral",
    "martingale_test",
    "MartingaleTestReport",
]


class MeasurabilityError(ValueError):
    """A functional reads information the model does not provide."""


class NotASemimartingaleError(ValueError):
    """A martingale-decomposition route was requested under a model that does not guarantee one."""


@dataclass(frozen=True)
class Atom:
    kind: str
    name: str
    time: Optional[float] = None


class FiltrationModel:
    semimartingale_guaranteed = True

    def knows(self, atom: Atom, s: float) -> bool:
        raise NotImplementedError

    def known(self, atoms, s: float) -> bool:
        return all(self.knows(a, s) for a in atoms)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Natural(FiltrationModel):
    driver: str = "W"

    def knows(self, atom, s):
        if atom.name != self.driver:
            return False
        if atom.kind == "path":
            return True
        if atom.kind in ("value", "runmax"):
            return atom.time is not None and atom.time <= s
        return False

    def to_dict(self):
        return {"variant": "natural", "driver": self.driver}


@dataclass(frozen=True)
class PartitionEnlarged(FiltrationModel):
    """Base filtration plus, from time 0, the cell of a countable partition."""

    base: FiltrationModel
    label: str = "cell"
    labels_source: str = "scenario"

    def knows(self, atom, s):
        if atom.kind == "label" and atom.name == self.label:
            return True
        return self.base.knows(atom, s)

    def to_dict(self):
        return {"variant": "partition", "base": self.base.to_dict(), "label": self.label,
                "labels_source": self.labels_source}


@dataclass(frozen=True)
class Anchored(FiltrationModel):
    """Base filtration plus the driver's values at fixed anchor times, known from time 0."""

    base: FiltrationModel
    anchors: tuple
    unbounded: bool = False  # the anchor sequence continues beyond the listed prefix

    def __post_init__(self):
        a = tuple(float(t) for t in self.anchors)
        if not a:
            raise ValueError("anchored model needs at least one anchor")
        if any(b <= c for c, b in zip(a, a[1:])) or a[0] <= 0:
            raise ValueError("anchor times must be positive and strictly increasing")
        object.__setattr__(self, "anchors", a)

    @property
    def driver(self):
        return getattr(self.base, "driver", "W")

    def knows(self, atom, s):
        if atom.kind == "value" and atom.name == self.driver and atom.time in self.anchors:
            return True
        return self.base.knows(atom, s)

    def to_dict(self):
        return {"variant": "anchored", "base": self.base.to_dict(), "anchors": list(self.anchors),
                "unbounded": self.unbounded}


@dataclass(frozen=True)
class RunningMaxEnlarged(FiltrationModel):
    """Base plus values and running maxima at fixed times (descriptor only; no compensator)."""

    base: FiltrationModel
    value_times: tuple = ()
    max_times: tuple = ()

    @property
    def driver(self):
        return getattr(self.base, "driver", "W")

    def knows(self, atom, s):
        if atom.name == self.driver:
            if atom.kind == "value" and atom.time in self.value_times:
                return True
            if atom.kind == "runmax" and atom.time in self.max_times:
                return True
        return self.base.knows(atom, s)

    def to_dict(self):
        return {"variant": "runmax", "base": self.base.to_dict(), "value_times": list(self.value_times),
                "max_times": list(self.max_times)}


@dataclass(frozen=True)
class Join(FiltrationModel):
    left: FiltrationModel
    right: FiltrationModel
    semimartingale_guaranteed = False

    def knows(self, atom, s):
        return self.left.knows(atom, s) or self.right.knows(atom, s)

    def to_dict(self):
        return {"variant": "join", "left": self.left.to_dict(), "right": self.right.to_dict(),
                "semimartingale_guaranteed": False}


@dataclass(frozen=True)
class Meet(FiltrationModel):
    left: FiltrationModel
    right: FiltrationModel

    def knows(self, atom, s):
        return self.left.knows(atom, s) and self.right.knows(atom, s)

    def to_dict(self):
        return {"variant": "meet", "left": self.left.to_dict(), "right": self.right.to_dict()}


def require_semimartingale(model: FiltrationModel) -> None:
    if not model.semimartingale_guaranteed:
        raise NotASemimartingaleError(
            f"{type(model).__name__} model does not guarantee a semimartingale decomposition; "
            "only pathwise or Stieltjes routes are allowed"
        )


def model_from_dict(d: Mapping) -> FiltrationModel:
    v = d["variant"]
    if v == "natural":
        return Natural(d.get("driver", "W"))
    if v == "partition":
        return PartitionEnlarged(model_from_dict(d["base"]), d.get("label", "cell"), d.get("labels_source", "scenario"))
    if v == "anchored":
        return Anchored(model_from_dict(d["base"]), tuple(d["anchors"]), bool(d.get("unbounded", False)))
    if v == "runmax":
        return RunningMaxEnlarged(model_from_dict(d["base"]), tuple(d.get("value_times", ())), tuple(d.get("max_times", ())))
    if v == "join":
        return Join(model_from_dict(d["left"]), model_from_dict(d["right"]))
    if v == "meet":
        return Meet(model_from_dict(d["left"]), model_from_dict(d["right"]))
    raise ValueError(f"unknown filtration variant {v!r}")


def model_to_json(model: FiltrationModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True)


def model_from_json(text: str) -> FiltrationModel:
    return model_from_dict(json.loads(text))


# --------------------------------------------------------------------------
# test bases
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Basis:
    """A functional b(scenario data, s) with the atoms it reads at time s."""

    name: str
    reads: Callable[[float], Sequence[Atom]]
    fn: Callable[[np.ndarray, int], np.ndarray]  # (ensemble values, index of s) -> per-scenario value

    @classmethod
    def of_values(cls, name: str, times_of: Callable[[float], Sequence[float]],
                  fn: Callable[[np.ndarray, int], np.ndarray], driver: str = "W") -> "Basis":
        return cls(name, lambda s: [Atom("value", driver, t) for t in times_of(s)], fn)


# --------------------------------------------------------------------------
# information drift for anchored Brownian filtrations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InformationDrift:
    psi: np.ndarray  # left-sampled: psi[k] is used on (t_k, t_{k+1}]
    anchors: tuple
    anchor_cells: np.ndarray  # cells (by left index) dropped next to each anchor
    omitted: np.ndarray  # drift mass those cells would have carried, per anchor


def anchored_drift(w: SamplePath, anchors, exclude_anchor_cell: bool = True) -> InformationDrift:
    """psi_s = (W_{t_i} - W_s)/(t_i - s) for t_{i-1} < s <= t_i, sampled at left cell ends.

    Past the last anchor psi is 0.  With ``exclude_anchor_cell`` the cell that
    closes at each anchor is left out of the drift and its would-be mass is
    reported in ``omitted``.
    """
    anchors = tuple(float(a) for a in anchors)
    if not anchors:
        raise ValueError("anchor list is empty")
    grid = w.grid
    aidx = np.array([grid.index_of(a) for a in anchors], dtype=np.int64)
    if np.any(np.diff(aidx) <= 0) or aidx[0] == 0:
        raise ValueError("anchors must be strictly increasing and positive")
    t, x = grid.times, w.values
    psi = np.zeros(len(grid))
    start = 0
    cells, omitted = [], []
    for k_a in aidx:
        s_idx = np.arange(start, k_a)
        psi[s_idx] = (x[k_a] - x[s_idx]) / (t[k_a] - t[s_idx])
        last = k_a - 1
        cells.append(last)
        omitted.append(psi[last] * (t[k_a] - t[last]))
        if exclude_anchor_cell:
            psi[last] = 0.0
        start = k_a
    return InformationDrift(psi, anchors, np.array(cells, dtype=np.int64), np.array(omitted))


def drift_path(w: SamplePath, drift: InformationDrift) -> np.ndarray:
    """Running integral of psi ds with left sampling."""
    return np.concatenate(([0.0], np.cumsum(drift.psi[:-1] * w.grid.dt)))


def compensate(w: SamplePath, drift: InformationDrift) -> SamplePath:
    """M = W - int_0^t psi ds."""
    if drift.psi.shape != w.values.shape:
        raise ValueError("drift is not defined on the path's grid")
    d = drift_path(w, drift)
    m = w.values - d
    if w.jump_index.size:
        return SamplePath(w.grid, m, w.jump_index, w.pre_jump - d[w.jump_index])
    return SamplePath(w.grid, m)


def anchored_drift_batch(values: np.ndarray, grid, anchors, exclude_anchor_cell: bool = True):
    """Vectorised :func:`anchored_drift` over ensemble rows; returns (psi, omitted)."""
    t = grid.times
    aidx = [grid.index_of(float(a)) for a in anchors]
    psi = np.zeros_like(values)
    omitted = np.zeros((values.shape[0], len(aidx)))
    start = 0
    for j, k_a in enumerate(aidx):
        s = slice(start, k_a)
        psi[:, s] = (values[:, [k_a]] - values[:, s]) / (t[k_a] - t[s])
        omitted[:, j] = psi[:, k_a - 1] * (t[k_a] - t[k_a - 1])
        if exclude_anchor_cell:
            psi[:, k_a - 1] = 0.0
        start = k_a
    return psi, omitted


# --------------------------------------------------------------------------
# expansion over a finite partition of the scenario space
# --------------------------------------------------------------------------

def _ito_sum(f: np.ndarray, x: np.ndarray) -> np.ndarray:
    terms = f[..., :-1] * np.diff(x, axis=-1)
    out = np.zeros(x.shape)
    np.cumsum(terms, axis=-1, out=out[..., 1:])
    return out


def jacod_expand_integral(hs: Mapping, labels, x: Ensemble) -> Ensemble:
    """Per scenario, the discrete predictable integral of h^{label} against that scenario's path."""
    labels = np.asarray(labels)
    if labels.shape != (len(x),):
        raise ValueError("one label per scenario")
    missing = set(labels.tolist()) - set(hs)
    if missing:
        raise KeyError(f"no integrand for cell(s) {sorted(missing)}")
    out = np.empty_like(x.values)
    for lab in np.unique(labels):
        rows = labels == lab
        h = np.broadcast_to(np.asarray(hs[lab], dtype=np.float64), x.values[rows].shape)
        out[rows] = _ito_sum(h, x.values[rows])
    return x.derived(out)


def glue_integrands(hs: Mapping, labels, shape) -> np.ndarray:
    """g = sum_k h^k 1_{A_k} as a per-scenario array."""
    labels = np.asarray(labels)
    g = np.empty(shape)
    for i, lab in enumerate(labels):
        g[i] = hs[lab]
    return g


# --------------------------------------------------------------------------
# Monte Carlo martingale test
# --------------------------------------------------------------------------

@dataclass
class MartingaleTestReport:
    model: dict
    alpha: float
    correction: str
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(r["reject"] for r in self.rows)

    def to_dict(self):
        return {"model": self.model, "alpha": self.alpha, "correction": self.correction,
                "passed": self.passed, "tests": self.rows}


def martingale_test(
    ensemble: Ensemble,
    model: FiltrationModel,
    times: Sequence[tuple],
    bases: Sequence[Basis],
    alpha: float = 0.01,
    correction: str = "holm",
) -> MartingaleTestReport:
    """Test E[(X_t - X_s) b] = 0 for every pair (s, t) and basis b.

    Each basis is statically checked against ``model`` at time ``s`` before any
    data is read.  Two-sided CLT p-values are adjusted across the whole family
    (Holm, or Bonferroni with ``correction="bonferroni"``).
    """
    grid = ensemble.grid
    x = ensemble.values
    n = x.shape[0]
    rows = []
    for s, t in times:
        if not s < t:
            raise ValueError("need s < t")
        for b in bases:
            if not model.known(b.reads(s), s):
                raise MeasurabilityError(f"basis {b.name!r} is not known at time {s} under {model.to_dict()}")
    z = stats.norm.ppf(0.975)
    for s, t in times:
        ks, kt = grid.index_of(s), grid.index_of(t)
        inc = x[:, kt] - x[:, ks]
        for b in bases:
            prod = inc * np.asarray(b.fn(x, ks), dtype=np.float64)
            est = float(prod.mean())
            se = float(prod.std(ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
            stat = est / se if se > 0 else (0.0 if est == 0 else np.inf)
            p = float(2.0 * stats.norm.sf(abs(stat)))
            rows.append({"s": s, "t": t, "basis": b.name, "estimate": est, "stderr": se,
                         "ci": [est - z * se, est + z * se], "z": float(stat), "p_value": p})
    m = len(rows)
    if correction == "bonferroni":
        for r in rows:
            r["p_adjusted"] = min(1.0, r["p_value"] * m)
    elif correction == "holm":
        order = sorted(range(m), key=lambda i: rows[i]["p_value"])
        running = 0.0
        for rank, i in enumerate(order):
            running = max(running, min(1.0, (m - rank) * rows[i]["p_value"]))
            rows[i]["p_adjusted"] = running
    else:
        raise ValueError(f"unknown correction {correction!r}")
    for r in rows:
        r["reject"] = bool(r["p_adjusted"] < alpha)
    return MartingaleTestReport(model.to_dict(), alpha, correction, rows)
