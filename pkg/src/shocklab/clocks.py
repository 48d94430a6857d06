"""Seeded Poisson arrow field for the graphical construction.

Every lattice site carries its own rate-1 Poisson clock.  Each ring is a jump
attempt to the right with probability ``p`` and to the left otherwise.  The
randomness of a site is a pure function of ``(seed, site, counter)`` computed
with the Philox4x64-10 counter-based generator, so any number of coupled
configurations can read the same arrows and the active window can grow at any
time without disturbing the sites already in it.

To make "first event after time tau" an O(1) operation, the time axis is cut
into bins of width :data:`BIN_WIDTH`.  Inside bin ``b`` the events of a site
are ``b*w + E_1``, ``b*w + E_1 + E_2``, ... with ``E_k`` i.i.d. Exp(1), stopped
at the first partial sum leaving the bin; the overshooting draw is discarded.
Restricting a Poisson process to disjoint intervals gives independent pieces,
so the concatenation is exactly a rate-1 Poisson process.
"""

from __future__ import annotations

import enum
import heapq
import math
from typing import NamedTuple

from .errors import UsageError

MASK64 = (1 << 64) - 1

_PHILOX_M0 = 0xD2E7470EE14C6C93
_PHILOX_M1 = 0xCA5A826395121157
_PHILOX_W0 = 0x9E3779B97F4A7C15
_PHILOX_W1 = 0xBB67AE8584CAA73B

#: Width of the time bins used to key per-site draws.
BIN_WIDTH = 16.0

# Fourth counter word separates the two uses of the generator.
_DOMAIN_ARROWS = 0
_DOMAIN_SEEDS = 1

_TWO_M53 = 2.0**-53


def philox4x64(counter, key):
    """Philox4x64-10 block function (Salmon et al., Random123).

    ``counter`` is four and ``key`` two unsigned 64-bit integers.  Returns the
    four output words.  Bit-compatible with :class:`numpy.random.Philox`.
    """
    x0, x1, x2, x3 = (c & MASK64 for c in counter)
    k0, k1 = key[0] & MASK64, key[1] & MASK64
    for _ in range(10):
        p0 = _PHILOX_M0 * x0
        p1 = _PHILOX_M1 * x2
        x0, x1, x2, x3 = (
            (p1 >> 64) ^ x1 ^ k0,
            p1 & MASK64,
            (p0 >> 64) ^ x3 ^ k1,
            p0 & MASK64,
        )
        k0 = (k0 + _PHILOX_W0) & MASK64
        k1 = (k1 + _PHILOX_W1) & MASK64
    return x0, x1, x2, x3


def derive_seed(master_seed: int, index: int) -> int:
    """Seed of replica ``index``: first Philox word of ``(index, 0, 0, 1)`` keyed by the master."""
    return philox4x64((index, 0, 0, _DOMAIN_SEEDS), (master_seed, 0))[0]


def _unit(word: int) -> float:
    return (word >> 11) * _TWO_M53


def arrow_draw(seed: int, site: int, bin_index: int, k: int, p: float):
    """The ``k``-th draw of bin ``bin_index`` at ``site``: (Exp(1) spacing, is_right).

    One Philox block serves two consecutive draws: words (0, 1) for even ``k``,
    words (2, 3) for odd ``k``.
    """
    w = philox4x64((k >> 1, bin_index, site, _DOMAIN_ARROWS), (seed, 0))
    j = 2 * (k & 1)
    spacing = -math.log(1.0 - _unit(w[j]))
    return spacing, _unit(w[j + 1]) < p


class Direction(enum.IntEnum):
    LEFT = -1
    RIGHT = 1


class ClockEvent(NamedTuple):
    """One Poisson arrow: the particle at ``site`` (if any) tries ``site + direction``."""

    time: float
    site: int
    direction: Direction

    @property
    def target(self) -> int:
        return self.site + int(self.direction)


def _check_p(p: float) -> None:
    if not (0.5 < p <= 1.0):
        raise UsageError(f"p must lie in (1/2, 1], got {p!r}")


class SiteStream:
    """The arrow sequence of a single site.

    The stream state is the counter ``(bin, k)`` plus the running time inside
    the current bin; events depend on nothing but ``(seed, site, counter)``.
    """

    __slots__ = ("seed", "site", "p", "bin", "k", "_cur")

    def __init__(self, seed: int, site: int, p: float, start_time: float = 0.0):
        _check_p(p)
        self.seed = seed & MASK64
        self.site = site
        self.p = p
        self.bin = 0
        self.k = 0
        self._cur = 0.0
        if start_time > 0.0:
            self.skip_to(start_time)

    @property
    def counter(self) -> tuple[int, int]:
        return self.bin, self.k

    def skip_to(self, time: float) -> None:
        """Position the stream so that :meth:`next` returns the first event after ``time``.

        Only valid before any event at or after ``time`` has been consumed.
        """
        b = int(math.floor(time / BIN_WIDTH))
        if b > self.bin:
            self.bin, self.k, self._cur = b, 0, b * BIN_WIDTH

    def next(self) -> ClockEvent:
        seed, site, p = self.seed, self.site, self.p
        while True:
            spacing, right = arrow_draw(seed, site, self.bin, self.k, p)
            self.k += 1
            self._cur += spacing
            if self._cur < (self.bin + 1) * BIN_WIDTH:
                return ClockEvent(self._cur, site, Direction.RIGHT if right else Direction.LEFT)
            self.bin += 1
            self.k = 0
            self._cur = self.bin * BIN_WIDTH

    def next_after(self, time: float) -> ClockEvent:
        """First event strictly after ``time`` (consumes everything up to it)."""
        self.skip_to(time)
        while True:
            ev = self.next()
            if ev.time > time:
                return ev

    __next__ = next

    def __iter__(self):
        return self


def site_stream_next(stream: SiteStream) -> ClockEvent:
    return stream.next()


class MergedStream:
    """Time-ordered union of the site streams of an integer window ``[lo, hi]``.

    Ties (probability zero) are broken lexicographically by (time, site).
    """

    def __init__(self, seed: int, lo: int, hi: int, p: float, start_time: float = 0.0):
        _check_p(p)
        if hi < lo:
            raise UsageError(f"empty window [{lo}, {hi}]")
        self.seed = seed & MASK64
        self.p = p
        self.lo = lo
        self.hi = hi
        self.current_time = start_time
        self._streams: dict[int, SiteStream] = {}
        self._heap: list[tuple[float, int, int]] = []
        for site in range(lo, hi + 1):
            self._add_site(site)

    def _add_site(self, site: int) -> None:
        st = SiteStream(self.seed, site, self.p)
        ev = st.next_after(self.current_time)
        self._streams[site] = st
        heapq.heappush(self._heap, (ev.time, site, int(ev.direction)))

    def peek_time(self) -> float:
        return self._heap[0][0]

    def next(self) -> ClockEvent:
        if not self._heap:
            raise UsageError("merged stream over an empty window")
        time, site, d = self._heap[0]
        nxt = self._streams[site].next()
        heapq.heapreplace(self._heap, (nxt.time, site, int(nxt.direction)))
        self.current_time = time
        return ClockEvent(time, site, Direction(d))

    __next__ = next

    def __iter__(self):
        return self

    def extend(self, new_lo: int, new_hi: int) -> None:
        if new_lo > self.lo or new_hi < self.hi:
            raise UsageError(
                f"window may only grow: [{self.lo}, {self.hi}] -> [{new_lo}, {new_hi}]"
            )
        for site in range(new_lo, self.lo):
            self._add_site(site)
        for site in range(self.hi + 1, new_hi + 1):
            self._add_site(site)
        self.lo, self.hi = new_lo, new_hi


def merged_next(ms: MergedStream) -> ClockEvent:
    return ms.next()


def extend_window(ms: MergedStream, new_lo: int, new_hi: int) -> MergedStream:
    ms.extend(new_lo, new_hi)
    return ms
