"""Desk-scale experiments: replica execution, aggregation and CSV reports.

Each experiment kind turns an :class:`ExperimentSpec` into a list of
:class:`ReportRow`.  Simulations are organised as replica tasks that return
small integer arrays; the expensive ones (the coupled shock triple) are shared
between kinds through a :class:`ReplicaStore`, which optionally persists them
on disk keyed by a hash of the task parameters.

Replica ``r`` always uses the arrow field seeded by ``derive_seed(seed, r)``
and results are gathered in replica order, so the report does not depend on
the number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import yaml

from .clocks import derive_seed
from .dynamics import CoupledEnsemble, CouplingCheck, conservation_count, duality_check, make_initial, shock_offset
from .errors import ShocklabError, UsageError
from .limit_laws import build_table, f_m1_gram, f_mp, limit_cdf, product_law
from .stats import EmpiricalCdf, binom_upper, dkw_band, ks_distance

KINDS = (
    "step_law",
    "cutoff",
    "product",
    "coupling_slack",
    "duality",
    "slow_decorrelation",
    "blocking_tail",
    "independence",
    "density_profile",
    "dist_table",
)

COLUMNS = ("kind", "p", "M", "R", "t", "s", "estimate", "reference", "band", "pass", "n", "seed", "wall_ms")

# Tolerance applied at the largest t of the grid, per kind.
DEFAULT_TOLERANCE = {
    "step_law": 0.05,
    "cutoff": 0.05,
    "blocking_tail": 0.02,
    "slow_decorrelation": 0.1,
    "dist_table": 1e-6,
}

# How a row's pass flag follows from its columns.
#   abs:      |estimate - reference| <= band
#   upper:    estimate - reference <= band
#   cp_upper: Clopper-Pearson 95% upper end for k = round(estimate * n) is <= band
#   info:     always passes (no reference)
PASS_RULES = {
    "step_law": "abs",
    "step_law.trend": "upper",
    "cutoff.tail": "cp_upper",
    "cutoff.tail_trend": "upper",
    "cutoff.cdf": "abs",
    "cutoff.gap_trend": "upper",
    "product.Y": "abs",
    "product.x": "abs",
    "product.order": "upper",
    "coupling_slack": "abs",
    "duality": "abs",
    "duality.conservation": "abs",
    "slow_decorrelation": "upper",
    "slow_decorrelation.trend": "upper",
    "blocking_tail": "cp_upper",
    "blocking_tail.trend": "upper",
    "independence.gap": "abs",
    "independence.law": "abs",
    "independence.marginal": "info",
    "density_profile": "info",
    "dist_table": "abs",
}

TAIL_ALPHA = 0.05
_CACHE_VERSION = 1


# -- spec ----------------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    p: tuple = (1.0, 0.75)
    M: tuple = (1, 2, 3)
    R: tuple = (-2, 0, 1, "M", "M+2")
    t_grid: tuple = (100.0, 400.0, 1600.0)
    replicas: int = 4000
    seed: int = 20261015
    nu: float = 0.75
    C: tuple = (0.0,)
    eps: float = 0.25
    s_grid: tuple = (-1.0, -0.5, 0.25, 0.5, 1.0, 1.5, 2.0)
    alpha: float = 0.01
    allowance: float = 0.03
    tolerance: Optional[float] = None
    trend_slack: Optional[float] = None
    m: Optional[int] = None
    L: Optional[float] = None
    n_lambda: int = 256
    bin_width: int = 20
    workers: int = 1
    out: Optional[str] = None
    timing: bool = True
    engine: str = "auto"
    pad: int = 2

    def __post_init__(self):
        def check(ok, name, msg):
            if not ok:
                err = UsageError(msg)
                err.field = name
                raise err

        check(self.kind in KINDS, "kind",
              f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        check(len(self.p) > 0, "p", "at least one value of p is required")
        for p in self.p:
            check(0.5 < p <= 1.0, "p", f"p must lie in (1/2, 1], got {p!r}")
        check(len(self.M) > 0 and all(int(m) == m and m >= 1 for m in self.M), "M",
              f"M must be a non-empty list of positive integers, got {self.M!r}")
        check(0.5 < self.nu < 1.0, "nu", f"nu must lie in (1/2, 1), got {self.nu!r}")
        check(len(self.t_grid) > 0 and all(t > 0 for t in self.t_grid), "t_grid",
              f"t grid must be positive, got {self.t_grid!r}")
        check(all(b > a for a, b in zip(self.t_grid, self.t_grid[1:])), "t_grid",
              f"t grid must be strictly increasing, got {self.t_grid!r}")
        check(self.replicas >= 1, "replicas", f"replica count must be >= 1, got {self.replicas}")
        check(self.workers >= 1, "workers", f"worker count must be >= 1, got {self.workers}")
        check(0.0 < self.alpha < 1.0, "alpha", f"alpha must lie in (0, 1), got {self.alpha}")
        check(self.trend_slack is None or self.trend_slack >= 0, "trend_slack",
              f"trend slack must be >= 0, got {self.trend_slack}")
        check(self.eps > 0, "eps", f"eps must be positive, got {self.eps}")
        check(self.bin_width >= 1, "bin_width", f"bin width must be >= 1, got {self.bin_width}")
        check(self.n_lambda >= 2 and self.n_lambda % 2 == 0, "n_lambda",
              f"n_lambda must be a positive even number, got {self.n_lambda}")
        check(self.engine in ("auto", "c", "python"), "engine", f"unknown engine {self.engine!r}")
        check(self.pad >= 0, "pad", f"pad must be >= 0, got {self.pad}")
        for r in self.R:
            _resolve_r(r, 1)

    @property
    def t_max(self) -> float:
        return self.t_grid[-1]

    def tol(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return DEFAULT_TOLERANCE.get(self.kind, math.inf)

    def slack(self) -> float:
        """Largest rise tolerated in a trend row; by default the DKW half-width of one estimate."""
        if self.trend_slack is not None:
            return self.trend_slack
        return dkw_band(self.replicas, self.alpha)

    def band_at(self, t: float, band: float) -> float:
        """Acceptance bands apply at the largest t; earlier grid points only feed trends."""
        return band if t == self.t_max else math.inf

    def r_values(self, M: int) -> list[int]:
        out: list[int] = []
        for r in self.R:
            v = _resolve_r(r, M)
            if v not in out:
                out.append(v)
        return out


def _resolve_r(r, M: int) -> int:
    """``R`` entries are integers or expressions ``M``, ``M+k``, ``M-k``."""
    if isinstance(r, (int, np.integer)) and not isinstance(r, bool):
        return int(r)
    if isinstance(r, str):
        txt = r.replace(" ", "")
        if txt == "M":
            return M
        if txt.startswith("M") and len(txt) > 2 and txt[1] in "+-" and txt[2:].isdigit():
            k = int(txt[2:])
            return M + k if txt[1] == "+" else M - k
        try:
            return int(txt)
        except ValueError:
            pass
    raise UsageError(f"R entries must be integers or of the form M, M+k, M-k; got {r!r}")


@dataclass
class ReportRow:
    kind: str
    p: float
    M: Optional[int]
    R: Optional[int]
    t: Optional[float]
    s: Optional[float]
    estimate: float
    reference: float
    band: float
    n: int
    seed: int
    wall_ms: Optional[int] = None
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = row_passes(self.kind, self.estimate, self.reference, self.band, self.n)

    def as_csv(self) -> list[str]:
        return [
            self.kind,
            _fmt(self.p),
            _fmt(self.M),
            _fmt(self.R),
            _fmt(self.t),
            _fmt(self.s),
            _fmt(self.estimate),
            _fmt(self.reference),
            _fmt(self.band),
            "true" if self.passed else "false",
            str(self.n),
            str(self.seed),
            _fmt(self.wall_ms),
        ]


def row_passes(kind: str, estimate: float, reference: float, band: float, n: int) -> bool:
    rule = PASS_RULES.get(kind)
    if rule is None:
        raise UsageError(f"no pass rule for row kind {kind!r}")
    if rule == "info":
        return True
    if rule == "abs":
        return abs(estimate - reference) <= band
    if rule == "upper":
        return estimate - reference <= band
    k = int(round(estimate * n))
    return binom_upper(k, n, TAIL_ALPHA) <= band


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


# -- replica execution -----------------------------------------------------------------------


def replica_seeds(master: int, n: int, start: int = 0) -> list[int]:
    return [derive_seed(master, r) for r in range(start, start + n)]


def map_replicas(fn: Callable, seeds: Sequence[int], workers: int = 1) -> list:
    """``[fn(seed) for seed in seeds]``, optionally spread over worker processes."""
    if workers <= 1 or len(seeds) < 2:
        return [fn(s) for s in seeds]
    chunk = max(1, len(seeds) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, seeds, chunksize=chunk))


class ReplicaStore:
    """Memoizes replica arrays in memory and, given a directory, on disk.

    With ``spot_check=k`` an array read from disk is accepted only if its first
    ``k`` replicas match a fresh computation, which guards against a cache
    written by different code.
    """

    def __init__(self, directory: Optional[str] = None, spot_check: int = 0):
        if directory is None:
            directory = os.environ.get("SHOCKLAB_CACHE") or None
        self.directory = Path(directory) if directory else None
        self.spot_check = spot_check
        self._mem: dict[str, np.ndarray] = {}

    @staticmethod
    def key(*parts) -> str:
        return hashlib.sha256(repr((_CACHE_VERSION,) + parts).encode()).hexdigest()[:24]

    def get(self, parts: tuple, compute: Callable[[], np.ndarray],
            head: Optional[Callable[[int], np.ndarray]] = None) -> np.ndarray:
        """Array for ``parts``; ``head(k)`` recomputes the first ``k`` replicas for spot checks."""
        k = self.key(*parts)
        if k in self._mem:
            return self._mem[k]
        path = self.directory / f"{parts[0]}-{k}.npy" if self.directory else None
        if path is not None and path.exists():
            arr = np.load(path)
            if self.spot_check and head is not None:
                n = min(self.spot_check, len(arr))
                if not np.array_equal(head(n), arr[:n]):
                    raise ShocklabError(f"cached replicas in {path} differ from a fresh computation; "
                                        "remove the cache directory")
        else:
            arr = compute()
            if path is not None:
                self.directory.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp.npy")
                np.save(tmp, arr)
                os.replace(tmp, path)
        self._mem[k] = arr
        return arr


def _stack(results) -> np.ndarray:
    return np.stack([np.asarray(r, dtype=np.int64) for r in results])


def _replicas(store: ReplicaStore, parts: tuple, task: Callable, seeds: Sequence[int], workers: int) -> np.ndarray:
    return store.get(parts, lambda: _stack(map_replicas(task, seeds, workers)),
                     head=lambda k: _stack([task(s) for s in seeds[:k]]))


def triple_replica(p: float, t: float, n_labels: int, nu: float, engine: str, pad: int, seed: int) -> np.ndarray:
    """Coupled (shock, block A, block B) run to time ``t``.

    Row 0..2: positions of labels 1..n_labels in the three members at ``t``;
    row 3: block A at ``t - t**nu``; row 4: coupling violations (first entry).
    For p = 1 the configurations are truncated behind label ``n_labels``.
    """
    trunc = n_labels if p == 1.0 else None
    watch = (1, n_labels)
    cfgs = [make_initial(kind, p, t, watch=watch, max_label=trunc) for kind in ("shock", "block_a", "block_b")]
    check = CouplingCheck(0, 1, 2, n_labels, exact=(p == 1.0))
    ens = CoupledEnsemble(cfgs, seed, p=p, pad=pad, coupling=check, engine=engine)
    labels = range(1, n_labels + 1)
    ens.evolve(t - t**nu)
    early = [ens.position(1, n) for n in labels]
    ens.evolve(t)
    out = np.zeros((5, n_labels), dtype=np.int64)
    for m in range(3):
        out[m] = [ens.position(m, n) for n in labels]
    out[3] = early
    out[4, 0] = ens.coupling_violations
    return out


def step_replica(p: float, t_grid: tuple, n_labels: int, engine: str, pad: int, seed: int) -> np.ndarray:
    """Positions of labels 1..n_labels of step data at each checkpoint, shape (len(t_grid), n_labels)."""
    trunc = n_labels if p == 1.0 else None
    cfg = make_initial("step", p, watch=(1, n_labels), max_label=trunc)
    ens = CoupledEnsemble([cfg], seed, p=p, pad=pad, engine=engine)
    out = np.zeros((len(t_grid), n_labels), dtype=np.int64)
    for i, t in enumerate(t_grid):
        ens.evolve(t)
        out[i] = [ens.position(0, n) for n in range(1, n_labels + 1)]
    return out


def reversed_replica(p: float, t_grid: tuple, engine: str, pad: int, seed: int) -> np.ndarray:
    """Running minimum of the leftmost particle of reversed step data at each checkpoint."""
    cfg = make_initial("reversed_step", p)
    ens = CoupledEnsemble([cfg], seed, p=p, pad=pad, engine=engine)
    out = np.zeros(len(t_grid), dtype=np.int64)
    for i, t in enumerate(t_grid):
        ens.evolve(t)
        out[i] = ens.running_min(0, 0)
    return out


def duality_replica(p: float, t: float, pairs: tuple, r_values: tuple, n_checks: int, engine: str, pad: int,
                    seed: int) -> np.ndarray:
    """Block B data checked at ``n_checks`` equally spaced times up to ``t``.

    Returns (indicator mismatches, conservation-count changes, tuples checked).
    """
    cfg = make_initial("block_b", p, t)
    ens = CoupledEnsemble([cfg], seed, p=p, pad=pad, engine=engine)
    base = {R: conservation_count(cfg, R) for R in r_values}
    mismatches = drift = checked = 0
    for i in range(1, n_checks + 1):
        ens.evolve(t * i / n_checks)
        snap = ens.member(0)
        for M, R in pairs:
            a, b = duality_check(snap, M, R)
            mismatches += a != b
            checked += 1
        for R in r_values:
            drift += conservation_count(snap, R) != base[R]
    return np.array([mismatches, drift, checked], dtype=np.int64)


def shock_snapshot_replica(p: float, t: float, lo: int, hi: int, engine: str, pad: int, seed: int) -> np.ndarray:
    """Occupation of sites lo..hi of shock data at time ``t``."""
    cfg = make_initial("shock", p, t, watch=(1, 1))
    ens = CoupledEnsemble([cfg], seed, p=p, pad=pad, engine=engine)
    ens.evolve(t)
    snap = ens.member(0)
    return np.array([snap.is_occupied(s) for s in range(lo, hi + 1)], dtype=np.int64)


class Runner:
    """Runs the replica tasks of one spec, sharing results through a store."""

    def __init__(self, spec: ExperimentSpec, store: Optional[ReplicaStore] = None):
        self.spec = spec
        self.store = store if store is not None else ReplicaStore()

    def _run(self, name: str, fn: Callable, params: tuple) -> np.ndarray:
        sp = self.spec
        seeds = replica_seeds(sp.seed, sp.replicas)
        task = partial(fn, *params, sp.engine, sp.pad)
        return _replicas(self.store, (name,) + params + (sp.seed, sp.replicas), task, seeds, sp.workers)

    def n_labels(self) -> int:
        return max(3, max(self.spec.M))

    def triple(self, p: float, t: float) -> np.ndarray:
        """Array of shape (replicas, 5, n_labels); see :func:`triple_replica`."""
        return self._run("triple", triple_replica, (float(p), float(t), self.n_labels(), float(self.spec.nu)))

    def step(self, p: float) -> np.ndarray:
        grid = tuple(float(t) for t in self.spec.t_grid)
        return self._run("step", step_replica, (float(p), grid, max(self.spec.M)))

    def reversed(self, p: float) -> np.ndarray:
        grid = tuple(float(t) for t in self.spec.t_grid)
        return self._run("reversed", reversed_replica, (float(p), grid))


def _timer():
    start = time.perf_counter()
    return lambda: int(round(1000.0 * (time.perf_counter() - start)))


def _wall(spec: ExperimentSpec, ms: int) -> Optional[int]:
    return ms if spec.timing else None


def _increase(values: Sequence[float]) -> float:
    """Largest rise between consecutive grid points (negative when strictly decreasing)."""
    if len(values) < 2:
        return -math.inf
    return float(max(b - a for a, b in zip(values, values[1:])))


def _frac(mask: np.ndarray) -> float:
    return float(np.count_nonzero(mask)) / mask.size


def _ceil(v: float) -> int:
    return math.ceil(round(v, 9))


# -- experiments -------------------------------------------------------------------------------


def run_step_law(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    """KS distance of the rescaled step-data positions to the limit law, per t."""
    runner, rows = Runner(spec, store), []
    for p in spec.p:
        clock = _timer()
        data = runner.step(p)
        ms = clock()
        drift = 2.0 * p - 1.0
        for M in spec.M:
            cdf = limit_cdf(M, p)
            dists = []
            for i, t in enumerate(spec.t_grid):
                x = data[:, i, M - 1].astype(float)
                S = (t - x / drift) / math.sqrt(t)
                d = ks_distance(EmpiricalCdf(S), cdf)
                dists.append(d)
                rows.append(ReportRow("step_law", p, M, None, t, None, d, 0.0, spec.band_at(t, spec.tol()),
                                      spec.replicas, spec.seed, _wall(spec, ms)))
            rows.append(ReportRow("step_law.trend", p, M, None, spec.t_max, None, _increase(dists), 0.0,
                                  spec.slack(), spec.replicas, spec.seed, _wall(spec, ms)))
    return rows


def run_cutoff(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    runner, rows = Runner(spec, store), []
    band = dkw_band(spec.replicas, spec.alpha) + spec.allowance
    for p in spec.p:
        drift = 2.0 * p - 1.0
        per_t = []
        clock = _timer()
        for t in spec.t_grid:
            per_t.append(runner.triple(p, t))
        ms = clock()
        for M in spec.M:
            for s in spec.s_grid:
                if s == 0:
                    continue
                series = []
                for t, data in zip(spec.t_grid, per_t):
                    thr = _ceil(-drift * s * math.sqrt(t))
                    est = _frac(data[:, 0, M - 1] >= thr)
                    if s < 0:
                        series.append(est)
                        rows.append(ReportRow("cutoff.tail", p, M, None, t, s, est, 0.0,
                                              spec.band_at(t, spec.tol()), spec.replicas, spec.seed,
                                              _wall(spec, ms)))
                    else:
                        ref = f_mp(M, p, s, m=spec.m, L=spec.L, n_lambda=spec.n_lambda)
                        series.append(abs(est - ref))
                        rows.append(ReportRow("cutoff.cdf", p, M, None, t, s, est, ref, spec.band_at(t, band),
                                              spec.replicas, spec.seed, _wall(spec, ms)))
                kind = "cutoff.tail_trend" if s < 0 else "cutoff.gap_trend"
                rows.append(ReportRow(kind, p, M, None, spec.t_max, s, _increase(series), 0.0, spec.slack(),
                                      spec.replicas, spec.seed, _wall(spec, ms)))
    return rows


def run_product(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    runner, rows = Runner(spec, store), []
    eps = dkw_band(spec.replicas, spec.alpha)
    for p in spec.p:
        for t in spec.t_grid:
            clock = _timer()
            data = runner.triple(p, t)
            ms = _wall(spec, clock())
            for M in spec.M:
                x = data[:, 0, M - 1]
                y = np.minimum(data[:, 1, M - 1], data[:, 2, M - 1])
                for R in spec.r_values(M):
                    ref = product_law(M, R, p, m=spec.m, L=spec.L, n_lambda=spec.n_lambda)
                    py, px = _frac(y >= -R), _frac(x >= -R)
                    band = spec.band_at(t, eps + spec.allowance)
                    rows.append(ReportRow("product.Y", p, M, R, t, None, py, ref, band, spec.replicas, spec.seed, ms))
                    if p == 1.0:
                        rows.append(ReportRow("product.x", p, M, R, t, None, px, ref, band, spec.replicas,
                                              spec.seed, ms))
                    else:
                        rows.append(ReportRow("product.order", p, M, R, t, None, px - py, 0.0, eps, spec.replicas,
                                              spec.seed, ms))
    return rows


def run_coupling_slack(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    """Pathwise violations of Y_n = x_n (p = 1) or Y_n >= x_n (p < 1), summed over replicas."""
    runner, rows = Runner(spec, store), []
    for p in spec.p:
        for t in spec.t_grid:
            clock = _timer()
            data = runner.triple(p, t)
            ms = _wall(spec, clock())
            x = data[:, 0, :]
            y = np.minimum(data[:, 1, :], data[:, 2, :])
            final = int(np.count_nonzero(y != x if p == 1.0 else y < x))
            violations = int(data[:, 4, 0].sum()) + final
            rows.append(ReportRow("coupling_slack", p, runner.n_labels(), None, t, None, violations, 0.0, 0.0,
                                  spec.replicas, spec.seed, ms))
    return rows


def run_duality(spec: ExperimentSpec, store: Optional[ReplicaStore] = None, n_checks: int = 8) -> list[ReportRow]:
    """Hole-duality indicator equality and the conservation count along block B paths."""
    store = store if store is not None else ReplicaStore()
    rows = []
    pairs = tuple((M, R) for M in spec.M for R in spec.r_values(M) if R < M)
    r_values = tuple(sorted({R for _, R in pairs}))
    if not pairs:
        raise UsageError("duality needs at least one pair with R < M")
    seeds = replica_seeds(spec.seed, spec.replicas)
    for p in spec.p:
        for t in spec.t_grid:
            clock = _timer()
            params = (float(p), float(t), pairs, r_values, n_checks)
            task = partial(duality_replica, *params, spec.engine, spec.pad)
            data = _replicas(store, ("duality",) + params + (spec.seed, spec.replicas), task, seeds, spec.workers)
            ms = _wall(spec, clock())
            tot = data.sum(axis=0)
            rows.append(ReportRow("duality", p, None, None, t, None, int(tot[0]), 0.0, 0.0, spec.replicas,
                                  spec.seed, ms))
            rows.append(ReportRow("duality.conservation", p, None, None, t, None, int(tot[1]), 0.0, 0.0,
                                  spec.replicas, spec.seed, ms))
    return rows


def run_slow_decorrelation(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    runner, rows = Runner(spec, store), []
    for p in spec.p:
        drift = 2.0 * p - 1.0
        clock = _timer()
        per_t = [runner.triple(p, t) for t in spec.t_grid]
        ms = _wall(spec, clock())
        for M in spec.M:
            series = []
            for t, data in zip(spec.t_grid, per_t):
                dev = data[:, 1, M - 1] - data[:, 3, M - 1] - drift * t**spec.nu
                est = _frac(np.abs(dev) >= spec.eps * math.sqrt(t))
                series.append(est)
                rows.append(ReportRow("slow_decorrelation", p, M, None, t, None, est, 0.0,
                                      spec.band_at(t, spec.tol()), spec.replicas, spec.seed, ms))
            rows.append(ReportRow("slow_decorrelation.trend", p, M, None, spec.t_max, None, _increase(series), 0.0,
                                  spec.slack(), spec.replicas, spec.seed, ms))
    return rows


def run_blocking_tail(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    """Probability that the leftmost reversed-step particle ever drops below -t^(1/4)."""
    runner, rows = Runner(spec, store), []
    for p in spec.p:
        clock = _timer()
        data = runner.reversed(p)
        ms = _wall(spec, clock())
        series = []
        for i, t in enumerate(spec.t_grid):
            est = _frac(data[:, i] < -(t**0.25))
            series.append(est)
            rows.append(ReportRow("blocking_tail", p, None, None, t, None, est, 0.0, spec.band_at(t, spec.tol()),
                                  spec.replicas, spec.seed, ms))
        if len(series) > 1:
            rows.append(ReportRow("blocking_tail.trend", p, None, None, spec.t_max, None, _increase(series), 0.0,
                                  spec.slack(), spec.replicas, spec.seed, ms))
    return rows


def run_independence(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    """Joint law of the shifted early block-A position and the block-B position."""
    runner, rows = Runner(spec, store), []
    eps = dkw_band(spec.replicas, spec.alpha)
    for p in spec.p:
        drift = 2.0 * p - 1.0
        for t in spec.t_grid:
            clock = _timer()
            data = runner.triple(p, t)
            ms = _wall(spec, clock())
            for M in spec.M:
                for R in spec.r_values(M):
                    if R >= M:
                        continue
                    for C in spec.C:
                        shift = drift * (t**spec.nu + C * math.sqrt(t))
                        ev_a = data[:, 3, M - 1] >= _ceil(-R - shift)
                        ev_b = data[:, 2, M - 1] >= -R
                        pa, pb, joint = _frac(ev_a), _frac(ev_b), _frac(ev_a & ev_b)
                        ref = f_mp(M, p, C, m=spec.m, L=spec.L, n_lambda=spec.n_lambda) * f_mp(
                            M - R, p, 0.0, m=spec.m, L=spec.L, n_lambda=spec.n_lambda)
                        common = (p, M, R, t, C)
                        rows.append(ReportRow("independence.gap", *common, joint - pa * pb, 0.0,
                                              spec.band_at(t, 2.0 * eps), spec.replicas, spec.seed, ms))
                        rows.append(ReportRow("independence.law", *common, joint, ref,
                                              spec.band_at(t, eps + spec.allowance), spec.replicas, spec.seed, ms))
                        rows.append(ReportRow("independence.marginal", *common, pa, math.nan, math.nan,
                                              spec.replicas, spec.seed, ms))
                        rows.append(ReportRow("independence.marginal", *common, pb, math.nan, math.nan,
                                              spec.replicas, spec.seed, ms))
    return rows


def run_density_profile(spec: ExperimentSpec, store: Optional[ReplicaStore] = None) -> list[ReportRow]:
    """Replica-averaged occupation of shock data in bins of ``bin_width`` sites; s holds bin centre / t."""
    store = store if store is not None else ReplicaStore()
    rows = []
    seeds = replica_seeds(spec.seed, spec.replicas)
    w = spec.bin_width
    for p in spec.p:
        for t in spec.t_grid:
            clock = _timer()
            K = shock_offset(p, t)
            reach = K + int(math.ceil((2.0 * p - 1.0) * t)) + 4 * int(math.ceil(math.sqrt(t))) + w
            lo, hi = -reach, reach
            params = (float(p), float(t), lo, hi)
            task = partial(shock_snapshot_replica, *params, spec.engine, spec.pad)
            occ = _replicas(store, ("shock_snapshot",) + params + (spec.seed, spec.replicas), task, seeds,
                            spec.workers)
            ms = _wall(spec, clock())
            mean = occ.mean(axis=0)
            for start in range(0, hi - lo + 1, w):
                chunk = mean[start:start + w]
                centre = lo + start + 0.5 * (chunk.size - 1)
                rows.append(ReportRow("density_profile", p, None, None, t, centre / t, float(chunk.mean()),
                                      math.nan, math.nan, spec.replicas, spec.seed, ms))
    return rows


def run_dist_table(spec: ExperimentSpec, store: Optional[ReplicaStore] = None,
                   table_dir: Optional[str] = None) -> list[ReportRow]:
    """Tabulate F over the s grid; each row compares against a refined evaluation.

    For p < 1 the refinement doubles the Nystrom nodes and contour nodes and
    lengthens the interval; for p = 1 the float64 Gram evaluation is compared
    with the 60-digit one.  Tables are written to ``table_dir`` when given.
    """
    rows = []
    s_grid = sorted(float(s) for s in spec.s_grid)
    for p in spec.p:
        for M in spec.M:
            clock = _timer()
            table = build_table(M, p, s_grid, m=spec.m, L=spec.L, n_lambda=spec.n_lambda, refine=False)
            if p == 1.0:
                fine = [f_m1_gram(M, s) for s in s_grid]
            else:
                fine = build_table(M, p, s_grid, m=2 * table.m, L=table.L + 4.0, n_lambda=2 * table.n_lambda,
                                   refine=False).F
            ms = _wall(spec, clock())
            if table_dir is not None:
                Path(table_dir).mkdir(parents=True, exist_ok=True)
                table.write_csv(Path(table_dir) / f"F_M{M}_p{p:g}.csv")
            for s, F, ref in zip(s_grid, table.F, fine):
                rows.append(ReportRow("dist_table", p, M, None, None, s, float(F), float(ref), spec.tol(), 1,
                                      spec.seed, ms))
    return rows


RUNNERS = {
    "step_law": run_step_law,
    "cutoff": run_cutoff,
    "product": run_product,
    "coupling_slack": run_coupling_slack,
    "duality": run_duality,
    "slow_decorrelation": run_slow_decorrelation,
    "blocking_tail": run_blocking_tail,
    "independence": run_independence,
    "density_profile": run_density_profile,
    "dist_table": run_dist_table,
}


def run_experiment(spec: ExperimentSpec, store: Optional[ReplicaStore] = None, **kw) -> list[ReportRow]:
    return RUNNERS[spec.kind](spec, store, **kw)


def all_passed(rows: Sequence[ReportRow]) -> bool:
    return all(r.passed for r in rows)


# -- reports -----------------------------------------------------------------------------------


def emit_report(rows: Sequence[ReportRow], path, fmt: Optional[str] = None) -> None:
    """Write rows with the fixed column order (``-`` writes to stdout).

    ``fmt`` is ``csv`` or ``json``; by default it follows the file suffix.
    """
    import sys

    if fmt is None:
        fmt = "json" if str(path).endswith(".json") else "csv"
    if fmt not in ("csv", "json"):
        raise UsageError(f"unknown report format {fmt!r}")
    write = _write_rows if fmt == "csv" else _write_json
    if str(path) == "-":
        write(sys.stdout, rows)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        write(fh, rows)


def _write_rows(fh, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.as_csv())


def _write_json(fh, rows) -> None:
    # same strings as the CSV cells, so both files carry identical values
    json.dump([dict(zip(COLUMNS, r.as_csv())) for r in rows], fh, indent=1)
    fh.write("\n")


def read_report(path) -> list[dict]:
    """Rows of a CSV or JSON report as dicts with parsed numbers and a recomputed ``pass_recomputed``."""
    with open(path, newline="") as fh:
        if str(path).endswith(".json"):
            try:
                records = json.load(fh)
                reader = iter([[rec[c] for c in COLUMNS] for rec in records])
            except (ValueError, KeyError, TypeError):
                raise UsageError(f"{path}: not a JSON report") from None
        else:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != COLUMNS:
                raise UsageError(f"{path}: not a report (expected header {','.join(COLUMNS)})")
        out = []
        for lineno, raw in enumerate(reader, start=2):
            if len(raw) != len(COLUMNS):
                raise UsageError(f"{path}:{lineno}: expected {len(COLUMNS)} fields, got {len(raw)}")
            d = dict(zip(COLUMNS, raw))

            def num(v, default=math.nan):
                return default if v == "" else float(v)

            row = {
                "kind": d["kind"],
                "p": num(d["p"]),
                "M": None if d["M"] == "" else int(d["M"]),
                "R": None if d["R"] == "" else int(d["R"]),
                "t": num(d["t"]),
                "s": num(d["s"]),
                "estimate": num(d["estimate"]),
                "reference": num(d["reference"]),
                "band": num(d["band"]),
                "pass": d["pass"] == "true",
                "n": int(d["n"]),
                "seed": int(d["seed"]),
                "wall_ms": None if d["wall_ms"] == "" else int(d["wall_ms"]),
            }
            row["pass_recomputed"] = row_passes(row["kind"], row["estimate"], row["reference"], row["band"], row["n"])
            out.append(row)
    return out


# -- configuration -------------------------------------------------------------------------------

# field -> (converter, section); a section of None means top level
_SCHEMA = {
    "kind": ("str", None),
    "p": ("floats", None),
    "M": ("ints", None),
    "R": ("rs", None),
    "t_grid": ("floats", None),
    "replicas": ("int", None),
    "seed": ("int", None),
    "nu": ("float", None),
    "C": ("floats", None),
    "eps": ("float", None),
    "s_grid": ("floats", None),
    "alpha": ("float", "acceptance"),
    "allowance": ("float", "acceptance"),
    "tolerance": ("float", "acceptance"),
    "trend_slack": ("float", "acceptance"),
    "m": ("int", "numerics"),
    "L": ("float", "numerics"),
    "n_lambda": ("int", "numerics"),
    "bin_width": ("int", None),
    "workers": ("int", "run"),
    "out": ("str", "run"),
    "timing": ("bool", "run"),
    "engine": ("str", "run"),
    "pad": ("int", "run"),
}
_SECTIONS = {"acceptance", "numerics", "run"}


def _convert(kind: str, value, where: str):
    def bad(expected):
        return UsageError(f"{where}: expected {expected}, got {value!r}")

    def one_float(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise bad("a number")
        return float(v)

    def one_int(v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise bad("an integer")
        return v

    def listify(v):
        return list(v) if isinstance(v, (list, tuple)) else [v]

    if value is None and kind in ("int", "float", "str"):
        return None
    if kind == "str":
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind == "int":
        return one_int(value)
    if kind == "float":
        return one_float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if kind == "floats":
        return tuple(one_float(v) for v in listify(value))
    if kind == "ints":
        return tuple(one_int(v) for v in listify(value))
    if kind == "rs":
        out = []
        for v in listify(value):
            try:
                _resolve_r(v, 1)
            except UsageError:
                raise bad("integers or M, M+k, M-k") from None
            out.append(v)
        return tuple(out)
    raise AssertionError(kind)


def _lines(node, prefix="") -> dict[str, int]:
    """Map dotted key paths of a YAML mapping node to 1-based line numbers."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = f"{prefix}{k.value}"
            out[key] = k.start_mark.line + 1
            out.update(_lines(v, key + "."))
    return out


def spec_from_mapping(data: dict, lines: Optional[dict] = None, source: str = "<config>",
                      **overrides) -> ExperimentSpec:
    lines = lines or {}

    def where(path):
        ln = lines.get(path)
        return f"{source}:{ln}: field '{path}'" if ln else f"{source}: field '{path}'"

    if not isinstance(data, dict):
        raise UsageError(f"{source}: top level must be a mapping of fields")
    values = {}
    for key, val in data.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise UsageError(f"{where(key)}: expected a mapping")
            for sub, subval in val.items():
                path = f"{key}.{sub}"
                spec_def = _SCHEMA.get(sub)
                if spec_def is None or spec_def[1] != key:
                    raise UsageError(f"{where(path)}: unknown field")
                values[sub] = _convert(spec_def[0], subval, where(path))
            continue
        spec_def = _SCHEMA.get(key)
        if spec_def is None:
            raise UsageError(f"{where(key)}: unknown field")
        if spec_def[1] is not None:
            raise UsageError(f"{where(key)}: belongs in section '{spec_def[1]}'")
        values[key] = _convert(spec_def[0], val, where(key))
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "kind" not in values:
        raise UsageError(f"{source}: missing required field 'kind'")
    nullable = ("m", "L", "tolerance", "trend_slack", "out")
    values = {k: v for k, v in values.items() if v is not None or k in nullable}
    try:
        return ExperimentSpec(**values)
    except UsageError as exc:
        name = getattr(exc, "field", None)
        path = name if name in lines else next((k for k in lines if k.endswith("." + str(name))), None)
        if name in values and path is not None:
            raise UsageError(f"{source}:{lines[path]}: field '{path}': {exc}") from None
        raise UsageError(f"{source}: {exc}") from None


def parse_config(path, **overrides) -> ExperimentSpec:
    """Read a YAML experiment config; keyword overrides (not ``None``) win over file values."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise UsageError(f"{loc}: malformed YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    return spec_from_mapping(data, _lines(node) if node is not None else {}, str(path), **overrides)


def with_overrides(spec: ExperimentSpec, **overrides) -> ExperimentSpec:
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})
