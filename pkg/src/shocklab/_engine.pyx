# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loop; bit-for-bit equivalent to :class:`shocklab.dynamics.PyEngine`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, floor
from libc.stdint cimport uint64_t, int64_t
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memset

from .clocks import BIN_WIDTH
from .dynamics import EMPTY as _EMPTY, NOPOS as _NOPOS, LabeledConfiguration, _initial_window
from .errors import UsageError

cnp.import_array()

cdef extern from *:
    """
    #include <stdint.h>
    static inline void shl_philox4(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3,
                                   uint64_t k0, uint64_t k1, uint64_t *o) {
        int r;
        for (r = 0; r < 10; r++) {
            __uint128_t p0 = (__uint128_t)0xD2E7470EE14C6C93ULL * c0;
            __uint128_t p1 = (__uint128_t)0xCA5A826395121157ULL * c2;
            uint64_t n0 = (uint64_t)(p1 >> 64) ^ c1 ^ k0;
            uint64_t n2 = (uint64_t)(p0 >> 64) ^ c3 ^ k1;
            c1 = (uint64_t)p1;
            c3 = (uint64_t)p0;
            c0 = n0;
            c2 = n2;
            k0 += 0x9E3779B97F4A7C15ULL;
            k1 += 0xBB67AE8584CAA73BULL;
        }
        o[0] = c0;
        o[1] = c1;
        o[2] = c2;
        o[3] = c3;
    }
    """
    void shl_philox4(uint64_t c0, uint64_t c1, uint64_t c2, uint64_t c3,
                     uint64_t k0, uint64_t k1, uint64_t *o) nogil

cdef double TWO_M53 = 1.1102230246251565e-16
cdef int64_t EMPTY = _EMPTY
cdef int64_t NOPOS = _NOPOS
cdef double W = BIN_WIDTH

cdef enum:
    DONE = 0
    GROW = 1


ctypedef struct Ev:
    double t
    int64_t site
    int64_t dir


cdef inline bint ev_less(Ev *x, Ev *y) noexcept nogil:
    return x.t < y.t or (x.t == y.t and x.site < y.site)


cdef inline int64_t bin_events(uint64_t seed, int64_t site, int64_t b, double p, double after,
                               Ev *out, int64_t maxn) noexcept nogil:
    """Write the arrows of ``site`` in time bin ``b`` later than ``after``.

    Returns the count, or -1 if more than ``maxn`` would be written.
    """
    cdef uint64_t w[4]
    cdef uint64_t k = 0
    cdef int j
    cdef double cur = <double>b * W
    cdef double end = <double>(b + 1) * W
    cdef int64_t n = 0
    while True:
        j = 2 * <int>(k & 1)
        if j == 0:
            shl_philox4(k >> 1, <uint64_t>b, <uint64_t>site, 0, seed, 0, w)
        k += 1
        cur += -log(1.0 - <double>(w[j] >> 11) * TWO_M53)
        if cur >= end:
            return n
        if cur > after:
            if n >= maxn:
                return -1
            out[n].t = cur
            out[n].site = site
            out[n].dir = 1 if <double>(w[j + 1] >> 11) * TWO_M53 < p else -1
            n += 1


cdef class CEngine:
    """Event loop over a buffer holding one time bin of arrows.

    At the start of bin ``b`` the arrows of every window site in that bin are
    generated and counting-sorted by time (ties by site).  Sites added while a
    bin is under way put their remaining arrows of the bin into a small side
    heap which is merged on the fly.  The resulting order is the (time, site)
    order of :class:`~shocklab.clocks.MergedStream`.
    """

    cdef public str name
    cdef readonly int n
    cdef readonly int64_t base, cap, lo, hi, a_lb, b_ub
    cdef readonly double time, p
    cdef readonly long long n_events, n_moves, violations
    cdef public object first_violation
    cdef uint64_t seed
    cdef int pad, chunk
    cdef object proto, occ_arr, pos_arr, rmin_arr
    cdef int64_t *occ
    cdef int64_t wlo, nw
    cdef int64_t *pos
    cdef int64_t *rmin
    cdef int vl[8]
    cdef int vr[8]
    cdef int s_on[8]
    cdef int s_side[8]
    cdef double s_thr[8]
    cdef double s_end[8]
    cdef int c_on, c_x, c_a, c_b, c_exact
    cdef int64_t c_nmax
    # current bin: sorted arrows, read cursor, scratch for the sort
    cdef int64_t cur_bin
    cdef Ev *evs
    cdef Ev *raw
    cdef int64_t ev_n, ev_i, ev_cap
    cdef int64_t *cnt
    cdef int64_t cnt_cap
    # side heap for sites added during the bin
    cdef Ev *xh
    cdef int64_t xn, xcap

    def __cinit__(self, *args, **kwargs):
        self.evs = NULL
        self.raw = NULL
        self.cnt = NULL
        self.xh = NULL
        self.ev_n = self.ev_i = self.ev_cap = self.cnt_cap = 0
        self.xn = self.xcap = 0

    def __dealloc__(self):
        free(self.evs)
        free(self.raw)
        free(self.cnt)
        free(self.xh)

    def __init__(self, configs, seed, p, pad, chunk, suppress, coupling, time):
        cdef int m
        self.name = "c"
        self.n = len(configs)
        if self.n > 8:
            raise UsageError("the compiled engine supports at most 8 coupled members")
        self.proto = [(c.left_tail, c.right_tail, c.p) for c in configs]
        self.seed = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.p = p
        self.pad = pad
        self.chunk = chunk
        self.time = time
        self.n_events = self.n_moves = self.violations = 0
        self.first_violation = None
        lo, hi, a_lb, b_ub = _initial_window(configs, pad)
        self.lo, self.hi, self.a_lb, self.b_ub = lo, hi, a_lb, b_ub

        # storage keeps one spare site beyond the window on both sides
        base = lo - 1 - chunk
        cap = (hi + 1 + chunk) - base + 1
        self.base, self.cap = base, cap
        occ = np.empty((self.n, cap), dtype=np.int64)
        for m, cfg in enumerate(configs):
            occ[m, :] = [cfg.label_at(s) for s in range(base, base + cap)]
            self.vl[m] = 1 if cfg.left_tail else 0
            self.vr[m] = 1 if cfg.right_tail else 0
            reg = suppress[m]
            self.s_on[m] = 0 if reg is None else 1
            self.s_side[m] = 0 if reg is None else reg.side
            self.s_thr[m] = 0.0 if reg is None else reg.threshold
            self.s_end[m] = 0.0 if reg is None else reg.t_end
        self.occ_arr = occ

        # watched labels: union of the members' ranges
        ranges = [(c.watch_lo, c.watch_hi) for c in configs if c.watch_hi >= c.watch_lo]
        wlo = min((r[0] for r in ranges), default=0)
        whi = max((r[1] for r in ranges), default=-1)
        nw = max(0, whi - wlo + 1)
        self.wlo, self.nw = wlo, nw
        pos = np.full((self.n, max(nw, 1)), NOPOS, dtype=np.int64)
        rmin = np.full((self.n, max(nw, 1)), NOPOS, dtype=np.int64)
        for m, cfg in enumerate(configs):
            if nw:
                pos[m, :nw] = cfg._locate_range(wlo, whi)
                rmin[m, :nw] = pos[m, :nw]
                for j in range(cfg.watch_hi - cfg.watch_lo + 1):
                    rmin[m, cfg.watch_lo + j - wlo] = cfg.rmin[j]
        self.pos_arr, self.rmin_arr = pos, rmin
        self._refresh()

        if coupling is None:
            self.c_on = 0
            self.c_x = self.c_a = self.c_b = self.c_exact = 0
            self.c_nmax = 0
        else:
            self.c_on = 1
            self.c_x, self.c_a, self.c_b = coupling.shock, coupling.a, coupling.b
            self.c_nmax = coupling.n_max
            self.c_exact = 1 if coupling.exact else 0

        b0 = int(floor(time / W))
        self._fill_bin(max(b0, 0), time)

    cdef void _refresh(self):
        self.occ = <int64_t *> cnp.PyArray_DATA(self.occ_arr)
        self.pos = <int64_t *> cnp.PyArray_DATA(self.pos_arr)
        self.rmin = <int64_t *> cnp.PyArray_DATA(self.rmin_arr)

    # -- arrow buffers --------------------------------------------------------

    cdef void _reserve_bin(self, int64_t n) except *:
        cdef Ev *a
        cdef Ev *b
        if n <= self.ev_cap:
            return
        n = max(n, 2 * self.ev_cap)
        a = <Ev *> realloc(self.evs, n * sizeof(Ev))
        if a == NULL:
            raise MemoryError()
        self.evs = a
        b = <Ev *> realloc(self.raw, n * sizeof(Ev))
        if b == NULL:
            raise MemoryError()
        self.raw = b
        self.ev_cap = n

    cdef void _fill_bin(self, int64_t b, double after) except *:
        """Generate and sort the arrows of bin ``b`` later than ``after`` for the window."""
        cdef int64_t site, n = 0, i, j, nb, idx, c
        cdef int64_t nsites = self.hi - self.lo + 1
        cdef double t0 = <double>b * W, scale
        cdef Ev e
        cdef Ev *raw
        cdef Ev *evs
        cdef int64_t *cnt
        # about 16 arrows per site; a site with more than 256 in one bin is never seen
        self._reserve_bin(nsites * 24 + 64)
        for site in range(self.lo, self.hi + 1):
            if n + 256 > self.ev_cap:
                self._reserve_bin(n + 256 + nsites * 24)
            c = bin_events(self.seed, site, b, self.p, after, &self.raw[n], 256)
            if c < 0:
                raise RuntimeError(f"more than 256 arrows at site {site} in one bin")
            n += c
        nb = n // 2 + 1
        if nb + 1 > self.cnt_cap:
            free(self.cnt)
            self.cnt = <int64_t *> malloc((nb + 1) * sizeof(int64_t))
            if self.cnt == NULL:
                self.cnt_cap = 0
                raise MemoryError()
            self.cnt_cap = nb + 1
        raw, evs, cnt = self.raw, self.evs, self.cnt
        memset(cnt, 0, (nb + 1) * sizeof(int64_t))
        scale = <double>nb / W
        for i in range(n):
            idx = <int64_t>((raw[i].t - t0) * scale)
            if idx >= nb:
                idx = nb - 1
            if idx < 0:
                idx = 0
            cnt[idx + 1] += 1
        for i in range(nb):
            cnt[i + 1] += cnt[i]
        for i in range(n):
            idx = <int64_t>((raw[i].t - t0) * scale)
            if idx >= nb:
                idx = nb - 1
            if idx < 0:
                idx = 0
            evs[cnt[idx]] = raw[i]
            cnt[idx] += 1
        # buckets are ordered; finish with insertion sort (runs are tiny)
        for i in range(1, n):
            e = evs[i]
            j = i - 1
            while j >= 0 and ev_less(&e, &evs[j]):
                evs[j + 1] = evs[j]
                j -= 1
            evs[j + 1] = e
        self.ev_n = n
        self.ev_i = 0
        self.cur_bin = b

    cdef void _xpush(self, Ev *e) except *:
        cdef Ev *h
        cdef int64_t i, parent
        if self.xn >= self.xcap:
            h = <Ev *> realloc(self.xh, max(64, 2 * self.xcap) * sizeof(Ev))
            if h == NULL:
                raise MemoryError()
            self.xh = h
            self.xcap = max(64, 2 * self.xcap)
        h = self.xh
        i = self.xn
        self.xn += 1
        while i > 0:
            parent = (i - 1) >> 1
            if ev_less(e, &h[parent]):
                h[i] = h[parent]
                i = parent
            else:
                break
        h[i] = e[0]

    cdef inline void _xpop(self) noexcept nogil:
        cdef Ev *h = self.xh
        cdef int64_t n, i = 0, c
        cdef Ev last
        self.xn -= 1
        n = self.xn
        if n == 0:
            return
        last = h[n]
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            if c + 1 < n and ev_less(&h[c + 1], &h[c]):
                c += 1
            if ev_less(&h[c], &last):
                h[i] = h[c]
                i = c
            else:
                break
        h[i] = last

    cdef void _add_site(self, int64_t site) except *:
        """Arrows of a new site in the current bin after the current time go to the side heap."""
        cdef Ev buf[256]
        cdef int64_t k, n
        n = bin_events(self.seed, site, self.cur_bin, self.p, self.time, buf, 256)
        if n < 0:
            raise RuntimeError(f"more than 256 arrows at site {site} in one bin")
        for k in range(n):
            self._xpush(&buf[k])

    # -- storage growth -----------------------------------------------------

    cdef void _ensure_storage(self, int64_t lo, int64_t hi) except *:
        """Storage must cover [lo - 1, hi + 1]."""
        cdef int64_t new_base = self.base, new_end = self.base + self.cap
        if lo - 1 >= self.base and hi + 1 < self.base + self.cap:
            return
        span = self.cap
        if lo - 1 < self.base:
            new_base = lo - 1 - span // 2
        if hi + 1 >= self.base + self.cap:
            new_end = hi + 2 + span // 2
        new_cap = new_end - new_base
        off = self.base - new_base
        old = self.occ_arr
        occ = np.empty((self.n, new_cap), dtype=np.int64)
        occ[:, off:off + self.cap] = old
        for m in range(self.n):
            first = old[m, 0]
            last = old[m, self.cap - 1]
            if off:
                if self.vl[m]:
                    occ[m, :off] = first + np.arange(off, 0, -1, dtype=np.int64)
                else:
                    occ[m, :off] = EMPTY
            tail = new_cap - off - self.cap
            if tail:
                if self.vr[m]:
                    occ[m, off + self.cap:] = last - np.arange(1, tail + 1, dtype=np.int64)
                else:
                    occ[m, off + self.cap:] = EMPTY
        self.occ_arr = occ
        self.base, self.cap = new_base, new_cap
        self._refresh()

    cdef void _grow(self) except *:
        cdef int64_t need_lo = self.a_lb - 1 - self.pad
        cdef int64_t need_hi = self.b_ub + 1 + self.pad
        cdef int64_t new_lo = self.lo, new_hi = self.hi, s
        if need_lo < self.lo:
            new_lo = need_lo - self.chunk
        if need_hi > self.hi:
            new_hi = need_hi + self.chunk
        self._ensure_storage(new_lo, new_hi)
        for s in range(new_lo, self.lo):
            self._add_site(s)
        for s in range(self.hi + 1, new_hi + 1):
            self._add_site(s)
        self.lo, self.hi = new_lo, new_hi

    # -- event loop -----------------------------------------------------------

    cdef void _check(self, int64_t lab):
        cdef int64_t j = lab - self.wlo
        cdef int64_t x = self.pos[self.c_x * self.nw + j]
        cdef int64_t ya = self.pos[self.c_a * self.nw + j]
        cdef int64_t yb = self.pos[self.c_b * self.nw + j]
        cdef int64_t y = ya if ya < yb else yb
        cdef bint bad = (y != x) if self.c_exact else (y < x)
        if bad:
            self.violations += 1
            if self.first_violation is None:
                self.first_violation = (self.time, lab, x, y)

    cdef int _loop(self, double until) except -1:
        cdef int64_t site, col, lab, j, tgt, d, lo_s, hi_s, row
        cdef int64_t moved[8]
        cdef int nmoved, m, i
        cdef Ev *nxt
        cdef int n = self.n
        cdef int64_t *occ = self.occ
        cdef int64_t cap = self.cap
        cdef int64_t base = self.base
        cdef int64_t nw = self.nw, wlo = self.wlo
        cdef int64_t *pos = self.pos
        cdef int64_t *rmin = self.rmin
        cdef int64_t need_pad = 1 + self.pad
        while True:
            nxt = NULL
            if self.ev_i < self.ev_n:
                nxt = &self.evs[self.ev_i]
            if self.xn > 0 and (nxt == NULL or ev_less(&self.xh[0], nxt)):
                nxt = &self.xh[0]
            if nxt == NULL:
                if <double>(self.cur_bin + 1) * W > until:
                    return DONE
                self._fill_bin(self.cur_bin + 1, -1.0)
                continue
            if nxt.t > until:
                return DONE
            site = nxt.site
            d = nxt.dir
            self.time = nxt.t
            if nxt == &self.xh[0]:
                self._xpop()
            else:
                self.ev_i += 1
            self.n_events += 1
            col = site - base
            nmoved = 0
            tgt = site + d
            for m in range(n):
                if self.s_on[m] and self.time <= self.s_end[m]:
                    if self.s_side[m] > 0:
                        if <double>site >= self.s_thr[m]:
                            continue
                    elif <double>site <= self.s_thr[m]:
                        continue
                row = m * cap
                lab = occ[row + col]
                if lab == EMPTY or occ[row + col + d] != EMPTY:
                    continue
                occ[row + col + d] = lab
                occ[row + col] = EMPTY
                j = lab - wlo
                if 0 <= j < nw:
                    pos[m * nw + j] = tgt
                    if tgt < rmin[m * nw + j]:
                        rmin[m * nw + j] = tgt
                moved[nmoved] = lab
                nmoved += 1
            if nmoved:
                self.n_moves += 1
                lo_s = site if site < tgt else tgt
                hi_s = site if site > tgt else tgt
                if lo_s < self.a_lb:
                    self.a_lb = lo_s
                if hi_s > self.b_ub:
                    self.b_ub = hi_s
                if self.c_on:
                    for i in range(nmoved):
                        if 1 <= moved[i] <= self.c_nmax:
                            self._check(moved[i])
                if self.a_lb - need_pad < self.lo or self.b_ub + need_pad > self.hi:
                    return GROW

    def run(self, double until):
        while self._loop(until) == GROW:
            self._grow()
        self.time = until

    # -- inspection ---------------------------------------------------------------

    @property
    def window(self):
        return (self.lo, self.hi)

    def position(self, int m, n):
        j = n - self.wlo
        if 0 <= j < self.nw:
            x = self.pos_arr[m, j]
            if x == NOPOS:
                raise UsageError(f"label {n} is not present in this configuration")
            return int(x)
        return self.snapshot(m).position(n)

    def running_min(self, int m, n):
        j = n - self.wlo
        if 0 <= j < self.nw and self.rmin_arr[m, j] != NOPOS:
            return int(self.rmin_arr[m, j])
        return self.snapshot(m).running_min(n)

    def positions(self, int m):
        """Watched positions of member ``m`` (``NOPOS`` for absent labels)."""
        return np.asarray(self.pos_arr[m, :self.nw]).copy()

    def snapshot(self, int m):
        left_tail, right_tail, p = self.proto[m]
        cfg = object.__new__(LabeledConfiguration)
        cfg.base = int(self.base)
        cfg.occ = self.occ_arr[m].tolist()
        cfg.left_tail = left_tail
        cfg.right_tail = right_tail
        cfg.p = p
        cfg.time = self.time
        if self.nw:
            cfg.watch_lo, cfg.watch_hi = int(self.wlo), int(self.wlo + self.nw - 1)
            cfg.pos = self.pos_arr[m, :self.nw].tolist()
            cfg.rmin = self.rmin_arr[m, :self.nw].tolist()
        else:
            cfg.watch_lo, cfg.watch_hi = 0, -1
            cfg.pos, cfg.rmin = [], []
        return cfg
