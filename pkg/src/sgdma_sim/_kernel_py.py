"""Pure-Python MM2S engine kernel (fallback for ``_kernel_c``).

Both kernels expose ``simulate(params, lengths, n_cycles, start_ps, record,
fast)`` and must return identical results; ``tests/test_kernels.py`` holds
them to that.  All times are integer picoseconds.

``params`` is the tuple built by :func:`sgdma_sim.engine.kernel_params`::

    (cycle, startup, bd_overhead, fifo_beats, beat_bytes, overlap,
     base, switch, ctrl_num, ctrl_den, bytes_per_clock,
     refresh_period, refresh_stall, refresh_phase, contention)

With ``fast`` set and a uniform ring, steady-state stretches between refresh
windows are skipped in whole periods, and a repeat of (state, refresh
alignment) lets the kernel jump over every remaining repetition.
"""

from __future__ import annotations

from collections import deque

KIND_BD = 0
KIND_BUFFER = 1
KIND_STATUS = 2

CLASS_RING = 0
CLASS_BUFFER = 1

STATUS_BYTES = 4
MAX_PERIOD = 4
MAX_KEY_ITEMS = 8
_INF = 1 << 62


def _cdiv(a, b):
    return -((-a) // b)


class _Engine:
    def __init__(self, params, record):
        (self.cyc, self.startup, self.overhead, self.fifo, self.w, self.overlap,
         self.base, self.sw, self.cnum, self.cden, self.bpc,
         self.period, self.stall, self.phase, self.contention) = params
        self.chunk = self.fifo * self.w
        self.record = record
        self.free_at = 0
        self.last_cls = -1
        self.bus_free = 0
        self.reserved = 0
        # burst: [start_idx, nbeats, bus_free0, A, nbytes, regime, first, last]
        self.bursts = deque()
        self.pending = deque()  # (issue, seq)
        self.n_bd = 0
        self.n_buf = 0
        self.n_status = 0
        self.n_stalls = 0
        self.first_beat = -1
        self.last_beat = -1
        self.end = 0
        self.step_stalled = False
        self.step_lo = _INF
        self.step_hi = -_INF
        self._regime_cache = {}
        self.acc_log = []
        self.burst_log = []
        self.status_log = []

    # -- DDR -------------------------------------------------------------
    def xfer(self, n):
        return -((-n * self.cnum) // self.cden)

    def n_windows(self, a, b):
        if b <= a:
            return 0
        k_lo = (a - self.phase - self.stall) // self.period + 1
        if k_lo < 0:
            k_lo = 0
        k_hi = (b - self.phase - 1) // self.period
        return k_hi - k_lo + 1 if k_hi >= k_lo else 0

    def charge(self, start, nominal):
        n = 0
        while True:
            m = self.n_windows(start, start + nominal + n * self.stall)
            if m == n:
                return n
            n = m

    def access(self, issue, nbytes, cls, kind, seq):
        start = issue if issue > self.free_at else self.free_at
        lo = start
        if start >= self.phase:
            r = (start - self.phase) % self.period
            if r < self.stall:  # arrived during a refresh: wait it out
                start += self.stall - r
                self.step_stalled = True
        sw = self.sw if (self.last_cls != -1 and self.last_cls != cls) else 0
        nclk = _cdiv(nbytes, self.bpc)
        lat = self.base + sw + self.xfer(nclk - 1)
        n_lat = self.charge(start, lat)
        finish = start + lat + n_lat * self.stall
        occ = sw + self.xfer(nclk)
        n_occ = self.charge(start, occ)
        self.free_at = start + occ + n_occ * self.stall
        self.last_cls = cls
        self.n_stalls += n_lat
        if n_lat or n_occ:
            self.step_stalled = True
        if lo < self.step_lo:
            self.step_lo = lo
        hi = finish if finish > self.free_at else self.free_at
        if hi > self.step_hi:
            self.step_hi = hi
        if self.record:
            self.acc_log.append((kind, seq, issue, start, finish, n_lat))
        return finish, start + self.base + sw + n_lat * self.stall

    def flush(self, t):
        while self.pending and self.pending[0][0] < t:
            issue, seq = self.pending.popleft()
            finish, _ = self.access(issue, STATUS_BYTES, CLASS_RING, KIND_STATUS, seq)
            self.n_status += 1
            if finish > self.end:
                self.end = finish
            if self.record:
                self.status_log.append((seq, issue, finish))

    # -- stream ----------------------------------------------------------
    def snap(self, t):
        return _cdiv(t, self.cyc) * self.cyc

    def ready(self, A, nbytes, j):
        last_byte = min((j + 1) * self.w, nbytes) - 1
        return A + self.xfer(last_byte // self.bpc)

    def regime(self, nbytes):
        r = self._regime_cache.get(nbytes)
        if r is None:
            nb = _cdiv(nbytes, self.w)
            r0 = self.ready(0, nbytes, 0)
            r = 0
            for j in range(1, nb):
                if self.ready(0, nbytes, j) - r0 > j * self.cyc:
                    r = 1
                    break
            if r == 1:
                for j in range(1, nb):
                    if self.ready(0, nbytes, j) - self.ready(0, nbytes, j - 1) < self.cyc:
                        r = 2
                        break
            self._regime_cache[nbytes] = r
        return r

    def beat_time(self, b, k):
        start_idx, nb, bf0, A, nbytes, reg, first, last = b
        if reg == 0:
            return first + k * self.cyc
        if reg == 1:
            t1 = bf0 + k * self.cyc
            t2 = self.snap(self.ready(A, nbytes, k))
            return t1 if t1 > t2 else t2
        t = bf0 - self.cyc
        for j in range(k + 1):
            r = self.snap(self.ready(A, nbytes, j))
            t = t + self.cyc if t + self.cyc > r else r
        return t

    def global_beat_time(self, g):
        # The FIFO lookup targets the oldest retained bursts.
        for b in self.bursts:
            if b[0] + b[1] > g:
                if g < b[0]:
                    break
                return self.beat_time(b, g - b[0])
        return -_INF

    def prune(self, ref):
        # A beat that left before ``ref`` can no longer hold back an issue.
        while self.bursts and self.bursts[0][7] + self.cyc <= ref:
            self.bursts.popleft()

    def issue_burst(self, t, nbytes, seq):
        nb = _cdiv(nbytes, self.w)
        need = self.reserved + nb - self.fifo
        if need > 0:
            tf = self.global_beat_time(need - 1) + self.cyc
            if tf > t:
                t = tf
        self.flush(t)
        _, A = self.access(t, nbytes, CLASS_BUFFER, KIND_BUFFER, seq)
        self.n_buf += 1
        reg = self.regime(nbytes)
        bf0 = self.bus_free
        b = [self.reserved, nb, bf0, A, nbytes, reg, 0, 0]
        if reg == 0:
            r0 = self.snap(self.ready(A, nbytes, 0))
            first = bf0 if bf0 > r0 else r0
            last = first + (nb - 1) * self.cyc
        else:
            first = self.beat_time(b, 0)
            last = self.beat_time(b, nb - 1)
        b[6] = first
        b[7] = last
        self.bursts.append(b)
        self.reserved += nb
        while self.bursts and self.bursts[0][0] + self.bursts[0][1] <= self.reserved - self.fifo:
            self.bursts.popleft()
        self.bus_free = last + self.cyc
        if self.first_beat < 0:
            self.first_beat = first
        self.last_beat = last
        if self.record:
            self.burst_log.append((seq, t, A, bf0, nbytes, first, last))
        return t, last

    def process_bd(self, sg, length, seq):
        """Fetch, stream and queue the status write of one descriptor."""
        finish, _ = self.access(sg, 64, CLASS_RING, KIND_BD, seq)
        self.n_bd += 1
        t = self.snap(finish) + self.overhead
        first_issue = -1
        last_issue = -1
        last = -1
        remaining = length
        while remaining > 0:
            nbytes = self.chunk if remaining > self.chunk else remaining
            if last_issue >= 0 and last_issue + self.cyc > t:
                t = last_issue + self.cyc
            t, last = self.issue_burst(t, nbytes, seq)
            if first_issue < 0:
                first_issue = t
            last_issue = t
            remaining -= nbytes
        status_issue = last + self.cyc
        if self.overlap:
            self.pending.append((status_issue, seq))
            nxt = last_issue + self.cyc
        else:
            self.pending.append((status_issue, seq))
            self.flush(_INF)
            nxt = self.snap(self.end)
        return first_issue, status_issue, nxt

    # -- fast-forward ------------------------------------------------------
    def key(self, ref):
        if len(self.pending) > MAX_KEY_ITEMS:
            return None
        items = [max(0, self.free_at - ref), self.last_cls, max(0, self.bus_free - ref),
                 len(self.pending)]
        for issue, _ in self.pending:
            items.append(issue - ref)
        live = []
        for b in reversed(self.bursts):
            if b[7] + self.cyc <= ref:
                break
            if len(live) == MAX_KEY_ITEMS:
                return None
            live.append(b)
        live.reverse()
        items.append(len(live))
        for b in live:
            items.extend((b[0] - self.reserved, b[1], b[2] - ref, b[3] - ref, b[4], b[5],
                          b[6] - ref, b[7] - ref))
        return tuple(items)

    def counters(self):
        return (self.n_bd, self.n_buf, self.n_status, self.n_stalls, self.reserved)

    def shift(self, dt, dbeats, dcounts):
        self.free_at += dt
        self.bus_free += dt
        self.last_beat += dt
        if self.end:
            self.end += dt
        self.pending = deque((issue + dt, seq) for issue, seq in self.pending)
        for b in self.bursts:
            b[0] += dbeats
            b[2] += dt
            b[3] += dt
            b[6] += dt
            b[7] += dt
        self.n_bd += dcounts[0]
        self.n_buf += dcounts[1]
        self.n_status += dcounts[2]
        self.n_stalls += dcounts[3]
        self.reserved += dcounts[4]


def _shift_hist(hist, dt, dc):
    for r in hist:
        r[1] += dt
        r[6] = tuple(a + b for a, b in zip(r[6], dc))


def simulate(params, lengths, n_cycles, start_ps=0, record=False, fast=True):
    lengths = [int(x) for x in lengths]
    n_ring = len(lengths)
    total = n_ring * n_cycles
    eng = _Engine(params, record)
    sg = eng.snap(start_ps + eng.startup)
    eng.free_at = sg + eng.contention
    uniform = fast and not record and eng.overlap and len(set(lengths)) == 1
    sg_log = []
    mm2s_log = []
    # step records: [i, ref, key, lo_rel, hi_rel, stalled, counters]
    hist = deque(maxlen=MAX_PERIOD + 1)
    memo = {}
    open_rec = None
    i = 0
    while i < total:
        eng.flush(sg)
        eng.prune(sg)
        if open_rec is not None:
            open_rec[3] = eng.step_lo - open_rec[1]
            open_rec[4] = eng.step_hi - open_rec[1]
            open_rec[5] = eng.step_stalled
            open_rec = None
        if uniform and i > 0:
            k = eng.key(sg)
            cnt = eng.counters()
            jumped = False
            if k is not None:
                for p in range(1, min(MAX_PERIOD, len(hist)) + 1):
                    old = hist[-p]
                    if old[2] != k:
                        continue
                    block = list(hist)[-p:]
                    if any(r[5] for r in block):
                        continue
                    base_ref = old[1]
                    dt = sg - base_ref
                    lo = min(r[3] + r[1] - base_ref for r in block)
                    hi = max(r[4] + r[1] - base_ref for r in block)
                    dcnt = tuple(a - b for a, b in zip(cnt, old[6]))
                    kw = max((sg + lo - eng.phase - eng.stall) // eng.period + 1, 0)
                    w = eng.phase + kw * eng.period
                    if w < sg + hi:
                        break
                    m = (w - sg - hi) // dt + 1
                    m = min(m, (total - 1 - i) // p)
                    if m < 1:
                        break
                    key2 = (k, p, dt, (sg - eng.phase) % eng.period)
                    seen = memo.get(key2)
                    if seen is not None:
                        i0, ref0, cnt0 = seen
                        big_d = i - i0
                        q = (total - 1 - i) // big_d
                        memo.clear()
                        if q >= 1:
                            big_t = sg - ref0
                            dc = tuple(q * (a - b) for a, b in zip(cnt, cnt0))
                            eng.shift(q * big_t, dc[4], dc)
                            _shift_hist(hist, q * big_t, dc)
                            sg += q * big_t
                            i += q * big_d
                            jumped = True
                            break
                    else:
                        memo[key2] = (i, sg, cnt)
                    dc = tuple(m * x for x in dcnt)
                    eng.shift(m * dt, dc[4], dc)
                    _shift_hist(hist, m * dt, dc)
                    sg += m * dt
                    i += m * p
                    jumped = True
                    break
            if jumped:
                continue
            rec = [i, sg, k, 0, 0, False, cnt]
        else:
            rec = [i, sg, None, 0, 0, False, eng.counters()]
        eng.step_stalled = False
        eng.step_lo = _INF
        eng.step_hi = -_INF
        length = lengths[i % n_ring]
        first_issue, _status_issue, nxt = eng.process_bd(sg, length, i)
        if record:
            sg_log.append(sg)
            mm2s_log.append(first_issue)
        hist.append(rec)
        open_rec = rec
        sg = nxt
        i += 1
    eng.flush(_INF)
    out = {
        "start": start_ps,
        "first_beat": eng.first_beat,
        "last_beat": eng.last_beat,
        "n_beats": eng.reserved,
        "n_bd_fetch": eng.n_bd,
        "n_buffer_fetch": eng.n_buf,
        "n_status_write": eng.n_status,
        "n_stalls": eng.n_stalls,
        "end": eng.end,
        "free_at": eng.free_at,
        "last_cls": eng.last_cls,
    }
    if record:
        out["sg"] = sg_log
        out["mm2s"] = mm2s_log
        out["status"] = eng.status_log
        out["bursts"] = eng.burst_log
        out["accesses"] = eng.acc_log
    return out
