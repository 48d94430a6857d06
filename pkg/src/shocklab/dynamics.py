"""Exclusion configurations on Z, the shock initial data and coupled evolution.

Labels follow the convention ``x_{n+1} < x_n``: a larger label sits further
left.  An infinite configuration is stored as a finite array of site labels
(``EMPTY`` for holes) on ``[base, base + len(occ))`` together with the values
of the two tails.  A packed tail continues the labels consecutively.

Events are applied according to the basic coupling: every member of a
:class:`CoupledEnsemble` reads the same arrow field.  The active window always
contains ``[a - 1 - pad, b + 1 + pad]`` where ``a`` (``b``) is the first (last)
site differing from the left (right) tail value, so every event outside it is
a no-op and the truncation is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .clocks import ClockEvent, MergedStream, _check_p
from .errors import UsageError

EMPTY = np.iinfo(np.int64).min
NOPOS = np.iinfo(np.int64).max

KINDS = ("step", "reversed_step", "shock", "block_a", "block_b")


def shock_offset(p: float, t_param: float) -> int:
    """K = floor((p - q) t)."""
    if t_param < 0:
        raise UsageError(f"t_param must be >= 0, got {t_param}")
    return int(math.floor((2.0 * p - 1.0) * t_param))


class LabeledConfiguration:
    """A labelled exclusion configuration with packed/empty tails.

    Parameters
    ----------
    base : int
        Site of ``occ[0]``.
    occ : sequence of int
        Label at each stored site, or ``EMPTY``.
    left_tail, right_tail : bool
        Whether all sites left of / right of the storage are occupied.
    watch : (int, int), optional
        Inclusive label range whose positions and running minima are tracked.
    """

    def __init__(
        self,
        base: int,
        occ: Sequence[int],
        left_tail: bool = False,
        right_tail: bool = False,
        watch: Optional[tuple[int, int]] = None,
        p: Optional[float] = None,
        time: float = 0.0,
    ):
        self.base = int(base)
        self.occ = [int(v) for v in occ]
        self.left_tail = bool(left_tail)
        self.right_tail = bool(right_tail)
        self.p = p
        self.time = time
        if not self.occ:
            self.occ = [EMPTY]
        self._check_tail_labels()
        self.ensure_storage(self.base - 1, self.end)
        if watch is None:
            self.watch_lo, self.watch_hi = 0, -1
            self.pos: list[int] = []
            self.rmin: list[int] = []
        else:
            lo, hi = watch
            self.watch_lo, self.watch_hi = int(lo), int(hi)
            self.pos = self._locate_range(self.watch_lo, self.watch_hi)
            self.rmin = list(self.pos)

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_sites(
        cls,
        sites: Iterable[int],
        *,
        first_label: int = 1,
        left_tail: bool = False,
        right_tail: bool = False,
        watch=None,
        p=None,
    ) -> "LabeledConfiguration":
        """Finite set of occupied sites; the rightmost gets ``first_label``.

        With ``left_tail`` every site below ``min(sites)`` is also occupied.
        """
        sites = sorted(set(int(s) for s in sites), reverse=True)
        if not sites:
            return cls(0, [EMPTY], left_tail, right_tail, watch=watch, p=p)
        lo, hi = sites[-1], sites[0]
        occ = [EMPTY] * (hi - lo + 1)
        for j, s in enumerate(sites):
            occ[s - lo] = first_label + j
        return cls(lo, occ, left_tail, right_tail, watch=watch, p=p)

    def _check_tail_labels(self) -> None:
        if self.left_tail and self.occ[0] == EMPTY:
            raise UsageError("storage must start on an occupied site when the left tail is packed")
        if self.right_tail and self.occ[-1] == EMPTY:
            raise UsageError("storage must end on an occupied site when the right tail is packed")

    @property
    def end(self) -> int:
        """One past the last stored site."""
        return self.base + len(self.occ)

    def copy(self) -> "LabeledConfiguration":
        new = object.__new__(LabeledConfiguration)
        new.__dict__.update(self.__dict__)
        new.occ = list(self.occ)
        new.pos = list(self.pos)
        new.rmin = list(self.rmin)
        return new

    # -- site access ------------------------------------------------------------

    def label_at(self, site: int) -> int:
        i = site - self.base
        if i < 0:
            return self.occ[0] + (-i) if self.left_tail else EMPTY
        if i >= len(self.occ):
            return self.occ[-1] - (i - len(self.occ) + 1) if self.right_tail else EMPTY
        return self.occ[i]

    def is_occupied(self, site: int) -> bool:
        return self.label_at(site) != EMPTY

    def ensure_storage(self, lo: int, hi: int) -> None:
        """Grow the stored range to cover sites ``lo .. hi`` (inclusive)."""
        if lo < self.base:
            n = self.base - lo
            if self.left_tail:
                first = self.occ[0]
                ext = [first + (n - j) for j in range(n)]
            else:
                ext = [EMPTY] * n
            self.occ[:0] = ext
            self.base = lo
        if hi >= self.end:
            n = hi - self.end + 1
            if self.right_tail:
                last = self.occ[-1]
                ext = [last - j - 1 for j in range(n)]
            else:
                ext = [EMPTY] * n
            self.occ.extend(ext)

    def active_range(self) -> tuple[int, int]:
        """``(a, b)``: first site differing from the left tail, last differing from the right.

        Returns ``(+inf-ish, -inf-ish)`` sentinels via ``None`` when no site differs.
        """
        vl, vr = self.left_tail, self.right_tail
        a = b = None
        for i, lab in enumerate(self.occ):
            if (lab != EMPTY) != vl:
                a = self.base + i
                break
        for i in range(len(self.occ) - 1, -1, -1):
            if (self.occ[i] != EMPTY) != vr:
                b = self.base + i
                break
        return a, b

    def required_window(self, pad: int) -> Optional[tuple[int, int]]:
        a, b = self.active_range()
        if a is None and b is None:
            return None
        if a is None:
            a = b
        if b is None:
            b = a
        return min(a, b) - 1 - pad, max(a, b) + 1 + pad

    def particle_sites(self) -> list[int]:
        """Occupied sites inside the stored range, increasing."""
        return [self.base + i for i, lab in enumerate(self.occ) if lab != EMPTY]

    def hole_sites(self) -> list[int]:
        return [self.base + i for i, lab in enumerate(self.occ) if lab == EMPTY]

    # -- labels -----------------------------------------------------------------

    def _locate_range(self, lo: int, hi: int) -> list[int]:
        """Positions of labels ``lo..hi`` (``NOPOS`` where a label does not exist)."""
        out = [NOPOS] * (hi - lo + 1)
        base = self.base
        for i, lab in enumerate(self.occ):
            if lab != EMPTY and lo <= lab <= hi:
                out[lab - lo] = base + i
        # tails: labels grow to the left
        if self.left_tail:
            first = self.occ[0]
            for n in range(max(lo, first + 1), hi + 1):
                out[n - lo] = base - (n - first)
        if self.right_tail:
            last = self.occ[-1]
            for n in range(lo, min(hi, last - 1) + 1):
                out[n - lo] = self.end - 1 + (last - n)
        return out

    def _locate(self, n: int) -> int:
        return self._locate_range(n, n)[0]

    def position(self, n: int) -> int:
        if self.watch_lo <= n <= self.watch_hi:
            x = self.pos[n - self.watch_lo]
        else:
            x = self._locate(n)
        if x == NOPOS:
            raise UsageError(f"label {n} is not present in this configuration")
        return x

    def running_min(self, n: int) -> int:
        if not (self.watch_lo <= n <= self.watch_hi):
            raise UsageError(f"label {n} is not tracked (watched range {self.watch_lo}..{self.watch_hi})")
        x = self.rmin[n - self.watch_lo]
        if x == NOPOS:
            raise UsageError(f"label {n} is not present in this configuration")
        return x

    # -- dynamics -----------------------------------------------------------------

    def apply_event(self, ev: ClockEvent) -> Optional[int]:
        """Apply one arrow; returns the moved label or ``None`` for a no-op."""
        site = ev.site
        tgt = site + int(ev.direction)
        self.time = ev.time
        self.ensure_storage(min(site, tgt) - 1, max(site, tgt) + 1)
        i = site - self.base
        lab = self.occ[i]
        if lab == EMPTY:
            return None
        j = tgt - self.base
        if self.occ[j] != EMPTY:
            return None
        self.occ[j] = lab
        self.occ[i] = EMPTY
        k = lab - self.watch_lo
        if 0 <= k < len(self.pos):
            self.pos[k] = tgt
            if tgt < self.rmin[k]:
                self.rmin[k] = tgt
        return lab

    # -- observables ----------------------------------------------------------------

    def holes(self, m: int) -> list[int]:
        """Positions of the ``m`` leftmost holes, increasing."""
        if m < 1:
            raise UsageError(f"hole count must be positive, got {m}")
        if not self.left_tail:
            raise UsageError("hole indexing needs a packed left tail")
        out: list[int] = []
        for i, lab in enumerate(self.occ):
            if lab == EMPTY:
                out.append(self.base + i)
                if len(out) == m:
                    return out
        if self.right_tail:
            raise UsageError(f"configuration has only {len(out)} holes")
        s = self.end
        while len(out) < m:
            out.append(s)
            s += 1
        return out

    def count_right_of(self, threshold: float) -> int:
        """Number of particles at sites strictly greater than ``threshold``."""
        if self.right_tail:
            raise UsageError("infinitely many particles to the right")
        n = sum(1 for i, lab in enumerate(self.occ) if lab != EMPTY and self.base + i > threshold)
        if self.left_tail:
            n += max(0, self.base - 1 - math.floor(threshold))
        return n

    def density_histogram(self, bin_width: int, t: Optional[float] = None):
        """Occupancy per bin of ``bin_width`` sites over ``[a - 1, b + 1]``.

        Returns a list of ``(bin centre / t, occupied fraction)``.
        """
        if bin_width < 1:
            raise UsageError(f"bin width must be >= 1, got {bin_width}")
        win = self.required_window(0)
        if win is None:
            return []
        lo, hi = win
        t = self.time if t is None else t
        scale = t if t > 0 else 1.0
        out = []
        for start in range(lo, hi + 1, bin_width):
            stop = min(start + bin_width - 1, hi)
            filled = sum(1 for s in range(start, stop + 1) if self.is_occupied(s))
            centre = 0.5 * (start + stop)
            out.append((centre / scale, filled / (stop - start + 1)))
        return out

    def __repr__(self) -> str:
        return (
            f"LabeledConfiguration(base={self.base}, n_sites={len(self.occ)}, "
            f"left_tail={self.left_tail}, right_tail={self.right_tail}, time={self.time})"
        )


def make_initial(
    kind: str,
    p: float,
    t_param: float = 0.0,
    watch: Optional[tuple[int, int]] = None,
    max_label: Optional[int] = None,
) -> LabeledConfiguration:
    """Initial data by name.

    ``step``: x_n = -n (n >= 1).  ``reversed_step``: x_{-n} = n (n >= 0).
    ``shock``: x_n = -n - K (n >= 1) and x_n = -n (-K <= n <= 0).
    ``block_a``: x_n = -n - K (n >= 1).  ``block_b``: x_n = -n (n >= -K).
    Here K = floor((p - q) t_param).

    ``max_label`` drops every particle with a larger label.  For TASEP this
    leaves the trajectories of the remaining labels unchanged (particles never
    look behind), for p < 1 it would not, so it is rejected there.
    """
    _check_p(p)
    K = shock_offset(p, t_param)
    if kind == "step":
        sites, first = list(range(-1, -2, -1)), 1
        default_watch = (1, 9)
    elif kind == "reversed_step":
        if max_label is not None:
            raise UsageError("max_label is meaningless for reversed step data")
        cfg = LabeledConfiguration(0, [0], left_tail=False, right_tail=True, p=p,
                                   watch=watch or (-8, 0))
        return cfg
    elif kind == "shock":
        sites = list(range(K, -1, -1)) + [-K - 1]
        first = -K
        default_watch = (-K, 9)
    elif kind == "block_a":
        sites, first = [-K - 1], 1
        default_watch = (1, 9)
    elif kind == "block_b":
        sites, first = list(range(K, -2, -1)), -K
        default_watch = (-K, 9)
    else:
        raise UsageError(f"unknown initial kind {kind!r}; expected one of {KINDS}")

    if max_label is not None and p < 1.0:
        raise UsageError("dropping particles behind a label is exact only for p = 1")

    # sites are listed right to left; labels increase along the list
    occ_sites = sorted(sites)
    lo, hi = occ_sites[0], occ_sites[-1]
    occ = [EMPTY] * (hi - lo + 1)
    for j, s in enumerate(sorted(sites, reverse=True)):
        occ[s - lo] = first + j
    left_tail = True
    if max_label is not None:
        last_label = occ[0]
        need = max_label - last_label
        if need >= 0:
            occ[:0] = [last_label + need - j for j in range(need)]
            lo -= need
        occ = [lab if lab <= max_label else EMPTY for lab in occ]
        left_tail = False
    cfg = LabeledConfiguration(lo, occ, left_tail=left_tail, right_tail=False, p=p,
                               watch=watch or default_watch)
    return cfg


@dataclass(frozen=True)
class SuppressionRegion:
    """Jumps from sites on one side of ``threshold`` are ignored while ``time <= t_end``.

    ``side=+1`` suppresses sources ``>= threshold``, ``side=-1`` sources ``<= threshold``.
    """

    threshold: float
    side: int
    t_end: float

    def __post_init__(self):
        if self.side not in (1, -1):
            raise UsageError("side must be +1 or -1")

    def suppresses(self, site: int, time: float) -> bool:
        if time > self.t_end:
            return False
        return site >= self.threshold if self.side > 0 else site <= self.threshold

    @classmethod
    def everything(cls, t_end: float) -> "SuppressionRegion":
        return cls(-math.inf, 1, t_end)


@dataclass(frozen=True)
class CouplingCheck:
    """Pathwise check of min(x^A_n, x^B_n) against x_n for labels 1..n_max.

    ``exact=True`` demands equality (TASEP), otherwise ``>=``.
    """

    shock: int
    a: int
    b: int
    n_max: int
    exact: bool


def _initial_window(configs: Sequence[LabeledConfiguration], pad: int) -> tuple[int, int, int, int]:
    """Window and the (a, b) bounds over all members."""
    a_lb, b_ub = None, None
    for cfg in configs:
        a, b = cfg.active_range()
        for v in (a, b):
            if v is None:
                continue
            a_lb = v if a_lb is None else min(a_lb, v)
            b_ub = v if b_ub is None else max(b_ub, v)
    if a_lb is None:
        a_lb = b_ub = 0
    return a_lb - 1 - pad, b_ub + 1 + pad, a_lb, b_ub


class PyEngine:
    """Reference event loop built directly on :class:`~shocklab.clocks.MergedStream`."""

    name = "python"

    def __init__(self, configs, seed, p, pad, chunk, suppress, coupling, time):
        self.configs = list(configs)
        self.p = p
        self.pad = pad
        self.chunk = chunk
        self.suppress = suppress
        self.coupling = coupling
        lo, hi, self.a_lb, self.b_ub = _initial_window(self.configs, pad)
        self.stream = MergedStream(seed, lo, hi, p, start_time=time)
        self.time = time
        self.n_events = 0
        self.n_moves = 0
        self.violations = 0
        self.first_violation = None

    @property
    def window(self):
        return self.stream.lo, self.stream.hi

    def run(self, until: float) -> None:
        stream = self.stream
        configs = self.configs
        suppress = self.suppress
        pad = self.pad
        check = self.coupling
        while stream.peek_time() <= until:
            ev = stream.next()
            self.n_events += 1
            moved = []
            for m, cfg in enumerate(configs):
                reg = suppress[m]
                if reg is not None and reg.suppresses(ev.site, ev.time):
                    cfg.time = ev.time
                    continue
                lab = cfg.apply_event(ev)
                if lab is not None:
                    moved.append(lab)
            self.time = ev.time
            if moved:
                self.n_moves += 1
                lo_s = min(ev.site, ev.target)
                hi_s = max(ev.site, ev.target)
                if lo_s < self.a_lb:
                    self.a_lb = lo_s
                if hi_s > self.b_ub:
                    self.b_ub = hi_s
                need_lo = self.a_lb - 1 - pad
                need_hi = self.b_ub + 1 + pad
                if need_lo < stream.lo or need_hi > stream.hi:
                    new_lo = need_lo - self.chunk if need_lo < stream.lo else stream.lo
                    new_hi = need_hi + self.chunk if need_hi > stream.hi else stream.hi
                    stream.extend(new_lo, new_hi)
                if check is not None:
                    for lab in moved:
                        if 1 <= lab <= check.n_max:
                            self._check(lab, ev.time)
        for cfg in configs:
            cfg.time = until
        self.time = until

    def _check(self, n, time):
        c = self.coupling
        x = self.configs[c.shock].position(n)
        y = min(self.configs[c.a].position(n), self.configs[c.b].position(n))
        bad = (y != x) if c.exact else (y < x)
        if bad:
            self.violations += 1
            if self.first_violation is None:
                self.first_violation = (time, n, x, y)

    def snapshot(self, m: int) -> LabeledConfiguration:
        return self.configs[m].copy()

    def position(self, m: int, n: int) -> int:
        return self.configs[m].position(n)

    def running_min(self, m: int, n: int) -> int:
        return self.configs[m].running_min(n)


class CoupledEnsemble:
    """Several configurations evolving on one shared arrow field.

    Parameters
    ----------
    configs : list of LabeledConfiguration
        Members, all at the same time.
    seed : int
        64-bit seed of the arrow field.
    p : float, optional
        Right-jump probability; defaults to the members' ``p``.
    pad : int
        Safety margin of the active window.
    horizon : float, optional
        Evolving past it raises :class:`~shocklab.errors.UsageError`.
    suppress : list, optional
        One :class:`SuppressionRegion` (or ``None``) per member.
    coupling : CouplingCheck, optional
        Pathwise coupling inequality checked after every move.
    engine : {"auto", "c", "python"}
    """

    def __init__(
        self,
        configs: Sequence[LabeledConfiguration],
        seed: int,
        p: Optional[float] = None,
        pad: int = 2,
        horizon: Optional[float] = None,
        suppress: Optional[Sequence[Optional[SuppressionRegion]]] = None,
        coupling: Optional[CouplingCheck] = None,
        engine: str = "auto",
        chunk: int = 32,
    ):
        from . import engine as _engine_mod

        if not configs:
            raise UsageError("an ensemble needs at least one configuration")
        if p is None:
            p = configs[0].p
        if p is None:
            raise UsageError("jump probability p not given")
        _check_p(p)
        times = {c.time for c in configs}
        if len(times) != 1:
            raise UsageError("all members must be at the same time")
        if pad < 0:
            raise UsageError("pad must be >= 0")
        if suppress is None:
            suppress = [None] * len(configs)
        if len(suppress) != len(configs):
            raise UsageError("one suppression entry per member expected")
        if coupling is not None:
            n = coupling.n_max
            for idx in (coupling.shock, coupling.a, coupling.b):
                cfg = configs[idx]
                if not (cfg.watch_lo <= 1 and n <= cfg.watch_hi):
                    raise UsageError("coupled labels must be watched in all three members")
        self.p = p
        self.seed = seed
        self.pad = pad
        self.horizon = horizon
        self.time = times.pop()
        cls = _engine_mod.select(engine)
        self._engine = cls([c.copy() for c in configs], seed, p, pad, chunk,
                           list(suppress), coupling, self.time)
        self.n_members = len(configs)

    @property
    def engine_name(self) -> str:
        return self._engine.name

    def evolve(self, until: float) -> "CoupledEnsemble":
        if until < self.time:
            raise UsageError(f"cannot evolve backwards ({until} < {self.time})")
        if self.horizon is not None and until > self.horizon:
            raise UsageError(f"time {until} exceeds the horizon {self.horizon}")
        self._engine.run(until)
        self.time = until
        return self

    def member(self, m: int) -> LabeledConfiguration:
        """Snapshot of member ``m`` at the current time."""
        return self._engine.snapshot(m)

    @property
    def members(self) -> list[LabeledConfiguration]:
        return [self.member(m) for m in range(self.n_members)]

    def position(self, m: int, n: int) -> int:
        """Current position of label ``n`` in member ``m``."""
        return self._engine.position(m, n)

    def running_min(self, m: int, n: int) -> int:
        return self._engine.running_min(m, n)

    @property
    def window(self) -> tuple[int, int]:
        return self._engine.window

    @property
    def n_events(self) -> int:
        return self._engine.n_events

    @property
    def n_moves(self) -> int:
        return self._engine.n_moves

    @property
    def coupling_violations(self) -> int:
        return self._engine.violations

    @property
    def first_violation(self):
        return self._engine.first_violation


def evolve(ens: CoupledEnsemble, until: float) -> CoupledEnsemble:
    return ens.evolve(until)


def evolve_suppressed(
    cfg: LabeledConfiguration,
    region: Optional[SuppressionRegion],
    until: float,
    seed: int,
    p: Optional[float] = None,
    engine: str = "auto",
) -> LabeledConfiguration:
    """Evolve a single configuration with the jumps in ``region`` ignored."""
    ens = CoupledEnsemble([cfg], seed, p=p, suppress=[region], engine=engine)
    ens.evolve(until)
    return ens.member(0)


def coupling_min(cfg_a: LabeledConfiguration, cfg_b: LabeledConfiguration, n: int) -> int:
    """Y_n = min(x^A_n, x^B_n)."""
    return min(cfg_a.position(n), cfg_b.position(n))


def duality_check(cfg_b: LabeledConfiguration, M: int, R: int) -> tuple[bool, bool]:
    """Indicators of {H_{M-R} < -R} and {x_M >= -R}; equal for block-B type data."""
    if R >= M:
        raise UsageError(f"hole index M - R = {M - R} must be positive")
    h = cfg_b.holes(M - R)[-1]
    return h < -R, cfg_b.position(M) >= -R


def conservation_count(cfg: LabeledConfiguration, R: int) -> int:
    """Particles in [-R, inf) minus holes in (-inf, -R-1]."""
    if not cfg.left_tail or cfg.right_tail:
        raise UsageError("conservation count needs a packed left and empty right tail")
    lo = min(cfg.base, -R - 1)
    hi = cfg.end
    parts = sum(1 for s in range(-R, hi) if cfg.is_occupied(s))
    holes = sum(1 for s in range(lo, -R) if not cfg.is_occupied(s))
    return parts - holes


def count_right_of(cfg: LabeledConfiguration, threshold: float) -> int:
    return cfg.count_right_of(threshold)


def density_histogram(cfg: LabeledConfiguration, bin_width_sites: int, t: Optional[float] = None):
    return cfg.density_histogram(bin_width_sites, t)


def holes(cfg: LabeledConfiguration, m: int) -> list[int]:
    return cfg.holes(m)


def particle_position(cfg: LabeledConfiguration, n: int) -> int:
    return cfg.position(n)


def running_min(cfg: LabeledConfiguration, n: int) -> int:
    return cfg.running_min(n)


def apply_event(cfg: LabeledConfiguration, ev: ClockEvent) -> LabeledConfiguration:
    cfg.apply_event(ev)
    return cfg


def write_path_dump(path, rows: Iterable[tuple[float, int, int]]) -> None:
    """CSV with columns time, label, position."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "label", "position"])
        for time, label, position in rows:
            w.writerow([repr(float(time)), int(label), int(position)])
