# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled MM2S engine kernel.

A line-for-line port of ``_kernel_py`` onto C arrays; see that module for the
model.  Python floor-division semantics are kept (``cdivision`` off) because
window arithmetic runs on negative numerators.
"""

from libc.stdlib cimport malloc, realloc, free

cdef enum:
    MAX_PERIOD = 4
    HMAX = 5
    MAX_KEY_ITEMS = 8
    KEYMAX = 77
    NCNT = 5

cdef long long INF = 1LL << 62


cdef struct Burst:
    long long start_idx
    long long nb
    long long bf0
    long long A
    long long nbytes
    long long first
    long long last
    int reg


cdef inline long long cdiv(long long a, long long b):
    return -((-a) // b)


cdef class _Engine:
    cdef long long cyc, startup, overhead, fifo, w, base, sw, cnum, cden, bpc
    cdef long long period, stall, phase, contention, chunk
    cdef bint overlap, record
    cdef public long long free_at
    cdef long long bus_free, reserved
    cdef public int last_cls
    cdef Burst *bursts
    cdef long long b_head, b_count, b_cap
    cdef long long *p_issue
    cdef long long *p_seq
    cdef long long p_head, p_count, p_cap
    cdef public long long n_bd, n_buf, n_status, n_stalls
    cdef public long long first_beat, last_beat, end
    cdef bint step_stalled
    cdef long long step_lo, step_hi
    cdef long long rc_nbytes[2]
    cdef int rc_reg[2]
    cdef public list acc_log, burst_log, status_log

    def __cinit__(self, tuple params, bint record):
        (self.cyc, self.startup, self.overhead, self.fifo, self.w, self.overlap,
         self.base, self.sw, self.cnum, self.cden, self.bpc,
         self.period, self.stall, self.phase, self.contention) = params
        self.chunk = self.fifo * self.w
        self.record = record
        self.free_at = 0
        self.last_cls = -1
        self.bus_free = 0
        self.reserved = 0
        self.b_cap = self.fifo + 8
        self.bursts = <Burst *> malloc(self.b_cap * sizeof(Burst))
        self.b_head = 0
        self.b_count = 0
        self.p_cap = 64
        self.p_issue = <long long *> malloc(self.p_cap * sizeof(long long))
        self.p_seq = <long long *> malloc(self.p_cap * sizeof(long long))
        self.p_head = 0
        self.p_count = 0
        if self.bursts == NULL or self.p_issue == NULL or self.p_seq == NULL:
            raise MemoryError()
        self.n_bd = self.n_buf = self.n_status = self.n_stalls = 0
        self.first_beat = -1
        self.last_beat = -1
        self.end = 0
        self.step_stalled = False
        self.step_lo = INF
        self.step_hi = -INF
        self.rc_nbytes[0] = -1
        self.rc_nbytes[1] = -1
        self.acc_log = []
        self.burst_log = []
        self.status_log = []

    def __dealloc__(self):
        free(self.bursts)
        free(self.p_issue)
        free(self.p_seq)

    # -- ring buffers ------------------------------------------------------
    cdef inline Burst *burst_at(self, long long j):
        return &self.bursts[(self.b_head + j) % self.b_cap]

    cdef void pending_push(self, long long issue, long long seq) except *:
        cdef long long *ni
        cdef long long *ns
        cdef long long j
        if self.p_count == self.p_cap:
            ni = <long long *> malloc(2 * self.p_cap * sizeof(long long))
            ns = <long long *> malloc(2 * self.p_cap * sizeof(long long))
            if ni == NULL or ns == NULL:
                raise MemoryError()
            for j in range(self.p_count):
                ni[j] = self.p_issue[(self.p_head + j) % self.p_cap]
                ns[j] = self.p_seq[(self.p_head + j) % self.p_cap]
            free(self.p_issue)
            free(self.p_seq)
            self.p_issue = ni
            self.p_seq = ns
            self.p_head = 0
            self.p_cap *= 2
        j = (self.p_head + self.p_count) % self.p_cap
        self.p_issue[j] = issue
        self.p_seq[j] = seq
        self.p_count += 1

    # -- DDR -------------------------------------------------------------
    cdef inline long long xfer(self, long long n):
        return -((-n * self.cnum) // self.cden)

    cdef inline long long n_windows(self, long long a, long long b):
        cdef long long k_lo, k_hi
        if b <= a:
            return 0
        k_lo = (a - self.phase - self.stall) // self.period + 1
        if k_lo < 0:
            k_lo = 0
        k_hi = (b - self.phase - 1) // self.period
        return k_hi - k_lo + 1 if k_hi >= k_lo else 0

    cdef inline long long charge(self, long long start, long long nominal):
        cdef long long n = 0, m
        while True:
            m = self.n_windows(start, start + nominal + n * self.stall)
            if m == n:
                return n
            n = m

    cdef long long access(self, long long issue, long long nbytes, int cls, int kind,
                          long long seq, long long *data_start) except? -1:
        cdef long long start = issue if issue > self.free_at else self.free_at
        cdef long long lo = start, r
        if start >= self.phase:
            r = (start - self.phase) % self.period
            if r < self.stall:  # arrived during a refresh: wait it out
                start += self.stall - r
                self.step_stalled = True
        cdef long long sw = self.sw if (self.last_cls != -1 and self.last_cls != cls) else 0
        cdef long long nclk = cdiv(nbytes, self.bpc)
        cdef long long lat = self.base + sw + self.xfer(nclk - 1)
        cdef long long n_lat = self.charge(start, lat)
        cdef long long finish = start + lat + n_lat * self.stall
        cdef long long occ = sw + self.xfer(nclk)
        cdef long long n_occ = self.charge(start, occ)
        cdef long long hi
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
        data_start[0] = start + self.base + sw + n_lat * self.stall
        return finish

    cdef int flush(self, long long t) except -1:
        cdef long long issue, seq, finish, ds
        while self.p_count > 0 and self.p_issue[self.p_head] < t:
            issue = self.p_issue[self.p_head]
            seq = self.p_seq[self.p_head]
            self.p_head = (self.p_head + 1) % self.p_cap
            self.p_count -= 1
            finish = self.access(issue, 4, 0, 2, seq, &ds)
            self.n_status += 1
            if finish > self.end:
                self.end = finish
            if self.record:
                self.status_log.append((seq, issue, finish))
        return 0

    # -- stream ----------------------------------------------------------
    cdef inline long long snap(self, long long t):
        return cdiv(t, self.cyc) * self.cyc

    cdef inline long long ready(self, long long A, long long nbytes, long long j):
        cdef long long last_byte = (j + 1) * self.w
        if last_byte > nbytes:
            last_byte = nbytes
        return A + self.xfer((last_byte - 1) // self.bpc)

    cdef int regime(self, long long nbytes):
        cdef int slot, r
        cdef long long nb, r0, j
        for slot in range(2):
            if self.rc_nbytes[slot] == nbytes:
                return self.rc_reg[slot]
        nb = cdiv(nbytes, self.w)
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
        slot = 0 if self.rc_nbytes[0] == -1 else 1
        self.rc_nbytes[slot] = nbytes
        self.rc_reg[slot] = r
        return r

    cdef long long beat_time(self, Burst *b, long long k):
        cdef long long t1, t2, t, j, r
        if b.reg == 0:
            return b.first + k * self.cyc
        if b.reg == 1:
            t1 = b.bf0 + k * self.cyc
            t2 = self.snap(self.ready(b.A, b.nbytes, k))
            return t1 if t1 > t2 else t2
        t = b.bf0 - self.cyc
        for j in range(k + 1):
            r = self.snap(self.ready(b.A, b.nbytes, j))
            t = t + self.cyc if t + self.cyc > r else r
        return t

    cdef long long global_beat_time(self, long long g):
        cdef long long j
        cdef Burst *b
        for j in range(self.b_count):
            b = self.burst_at(j)
            if b.start_idx + b.nb > g:
                if g < b.start_idx:
                    break
                return self.beat_time(b, g - b.start_idx)
        return -INF

    cdef void prune(self, long long ref):
        while self.b_count > 0 and self.burst_at(0).last + self.cyc <= ref:
            self.b_head = (self.b_head + 1) % self.b_cap
            self.b_count -= 1

    cdef long long issue_burst(self, long long t, long long nbytes, long long seq,
                               long long *last_out) except? -1:
        cdef long long nb = cdiv(nbytes, self.w)
        cdef long long need = self.reserved + nb - self.fifo
        cdef long long tf, A, bf0, r0
        cdef Burst *b
        if need > 0:
            tf = self.global_beat_time(need - 1) + self.cyc
            if tf > t:
                t = tf
        self.flush(t)
        self.access(t, nbytes, 1, 1, seq, &A)
        self.n_buf += 1
        bf0 = self.bus_free
        if self.b_count == self.b_cap:
            raise RuntimeError("burst history overflow")
        b = self.burst_at(self.b_count)
        self.b_count += 1
        b.start_idx = self.reserved
        b.nb = nb
        b.bf0 = bf0
        b.A = A
        b.nbytes = nbytes
        b.reg = self.regime(nbytes)
        if b.reg == 0:
            r0 = self.snap(self.ready(A, nbytes, 0))
            b.first = bf0 if bf0 > r0 else r0
            b.last = b.first + (nb - 1) * self.cyc
        else:
            b.first = self.beat_time(b, 0)
            b.last = self.beat_time(b, nb - 1)
        self.reserved += nb
        while self.b_count > 0:
            b = self.burst_at(0)
            if b.start_idx + b.nb > self.reserved - self.fifo:
                break
            self.b_head = (self.b_head + 1) % self.b_cap
            self.b_count -= 1
        b = self.burst_at(self.b_count - 1)
        self.bus_free = b.last + self.cyc
        if self.first_beat < 0:
            self.first_beat = b.first
        self.last_beat = b.last
        if self.record:
            self.burst_log.append((seq, t, A, bf0, nbytes, b.first, b.last))
        last_out[0] = b.last
        return t

    cdef long long process_bd(self, long long sg, long long length, long long seq,
                              long long *first_issue_out) except? -1:
        cdef long long ds, t, first_issue = -1, last_issue = -1, last = -1
        cdef long long remaining = length, nbytes, status_issue
        cdef long long finish = self.access(sg, 64, 0, 0, seq, &ds)
        self.n_bd += 1
        t = self.snap(finish) + self.overhead
        while remaining > 0:
            nbytes = self.chunk if remaining > self.chunk else remaining
            if last_issue >= 0 and last_issue + self.cyc > t:
                t = last_issue + self.cyc
            t = self.issue_burst(t, nbytes, seq, &last)
            if first_issue < 0:
                first_issue = t
            last_issue = t
            remaining -= nbytes
        first_issue_out[0] = first_issue
        status_issue = last + self.cyc
        self.pending_push(status_issue, seq)
        if self.overlap:
            return last_issue + self.cyc
        self.flush(INF)
        return self.snap(self.end)

    # -- fast-forward ------------------------------------------------------
    cdef int key(self, long long ref, long long *out):
        """Fill ``out`` with the normalised state; return its length or -1."""
        cdef long long n = 0, j, live = 0, v
        cdef Burst *b
        if self.p_count > MAX_KEY_ITEMS:
            return -1
        for j in range(self.b_count - 1, -1, -1):
            if self.burst_at(j).last + self.cyc <= ref:
                break
            live += 1
        if live > MAX_KEY_ITEMS:
            return -1
        v = self.free_at - ref
        out[0] = v if v > 0 else 0
        out[1] = self.last_cls
        v = self.bus_free - ref
        out[2] = v if v > 0 else 0
        out[3] = self.p_count
        n = 4
        for j in range(self.p_count):
            out[n] = self.p_issue[(self.p_head + j) % self.p_cap] - ref
            n += 1
        out[n] = live
        n += 1
        for j in range(self.b_count - live, self.b_count):
            b = self.burst_at(j)
            out[n] = b.start_idx - self.reserved
            out[n + 1] = b.nb
            out[n + 2] = b.bf0 - ref
            out[n + 3] = b.A - ref
            out[n + 4] = b.nbytes
            out[n + 5] = b.reg
            out[n + 6] = b.first - ref
            out[n + 7] = b.last - ref
            n += 8
        return n

    cdef void counters(self, long long *c):
        c[0] = self.n_bd
        c[1] = self.n_buf
        c[2] = self.n_status
        c[3] = self.n_stalls
        c[4] = self.reserved

    cdef void shift(self, long long dt, long long *dc):
        cdef long long j
        cdef Burst *b
        self.free_at += dt
        self.bus_free += dt
        self.last_beat += dt
        if self.end:
            self.end += dt
        for j in range(self.p_count):
            self.p_issue[(self.p_head + j) % self.p_cap] += dt
        for j in range(self.b_count):
            b = self.burst_at(j)
            b.start_idx += dc[4]
            b.bf0 += dt
            b.A += dt
            b.first += dt
            b.last += dt
        self.n_bd += dc[0]
        self.n_buf += dc[1]
        self.n_status += dc[2]
        self.n_stalls += dc[3]
        self.reserved += dc[4]


cdef inline bint same_key(long long *a, int na, long long *b, int nb):
    cdef int j
    if na != nb or na < 0:
        return False
    for j in range(na):
        if a[j] != b[j]:
            return False
    return True


cdef void _shift_hist(long long *h_ref, long long (*h_cnt)[NCNT], long long dt, long long *dc):
    cdef int s, c
    for s in range(HMAX):
        h_ref[s] += dt
        for c in range(NCNT):
            h_cnt[s][c] += dc[c]


def simulate(params, lengths, long long n_cycles, long long start_ps=0, bint record=False,
             bint fast=True):
    cdef list lens = [int(x) for x in lengths]
    cdef long long n_ring = len(lens)
    cdef long long total = n_ring * n_cycles
    cdef _Engine eng = _Engine(tuple(params), record)
    cdef long long sg = eng.snap(start_ps + eng.startup)
    cdef bint uniform = fast and not record and eng.overlap and len(set(lens)) == 1
    cdef long long first_issue, nxt, length0 = lens[0] if n_ring else 0
    cdef list sg_log = [], mm2s_log = []
    # step history ring: slot = (h_pos + j) % HMAX
    cdef long long h_ref[HMAX]
    cdef long long h_lo[HMAX]
    cdef long long h_hi[HMAX]
    cdef bint h_stalled[HMAX]
    cdef long long h_cnt[HMAX][NCNT]
    cdef long long h_key[HMAX][KEYMAX]
    cdef int h_klen[HMAX]
    cdef int h_len = 0, h_next = 0
    cdef bint rec_open = False
    cdef int open_slot = 0, slot, s2, p, pmax, j, c
    cdef long long kbuf[KEYMAX]
    cdef int klen
    cdef long long cnt[NCNT]
    cdef long long dcnt[NCNT]
    cdef long long dc[NCNT]
    cdef long long base_ref, dt, lo, hi, kw, w, m, q, big_d, big_t, i = 0
    cdef bint jumped, blocked
    cdef dict memo = {}
    cdef object key2, seen
    eng.free_at = sg + eng.contention
    while i < total:
        eng.flush(sg)
        eng.prune(sg)
        if rec_open:
            h_lo[open_slot] = eng.step_lo - h_ref[open_slot]
            h_hi[open_slot] = eng.step_hi - h_ref[open_slot]
            h_stalled[open_slot] = eng.step_stalled
            rec_open = False
        klen = -1
        eng.counters(cnt)
        if uniform and i > 0:
            klen = eng.key(sg, kbuf)
            jumped = False
            if klen >= 0:
                pmax = MAX_PERIOD if MAX_PERIOD < h_len else h_len
                for p in range(1, pmax + 1):
                    slot = (h_next - p + HMAX) % HMAX
                    if not same_key(h_key[slot], h_klen[slot], kbuf, klen):
                        continue
                    blocked = False
                    for j in range(1, p + 1):
                        if h_stalled[(h_next - j + HMAX) % HMAX]:
                            blocked = True
                    if blocked:
                        continue
                    base_ref = h_ref[slot]
                    dt = sg - base_ref
                    lo = INF
                    hi = -INF
                    for j in range(1, p + 1):
                        s2 = (h_next - j + HMAX) % HMAX
                        if h_lo[s2] + h_ref[s2] - base_ref < lo:
                            lo = h_lo[s2] + h_ref[s2] - base_ref
                        if h_hi[s2] + h_ref[s2] - base_ref > hi:
                            hi = h_hi[s2] + h_ref[s2] - base_ref
                    for c in range(NCNT):
                        dcnt[c] = cnt[c] - h_cnt[slot][c]
                    kw = (sg + lo - eng.phase - eng.stall) // eng.period + 1
                    if kw < 0:
                        kw = 0
                    w = eng.phase + kw * eng.period
                    if w < sg + hi:
                        break
                    m = (w - sg - hi) // dt + 1
                    if (total - 1 - i) // p < m:
                        m = (total - 1 - i) // p
                    if m < 1:
                        break
                    key2 = (tuple([kbuf[j] for j in range(klen)]), p, dt,
                            (sg - eng.phase) % eng.period)
                    seen = memo.get(key2)
                    if seen is not None:
                        big_d = i - <long long> seen[0]
                        q = (total - 1 - i) // big_d
                        memo.clear()
                        if q >= 1:
                            big_t = sg - <long long> seen[1]
                            for c in range(NCNT):
                                dc[c] = q * (cnt[c] - <long long> seen[2][c])
                            eng.shift(q * big_t, dc)
                            _shift_hist(h_ref, h_cnt, q * big_t, dc)
                            sg += q * big_t
                            i += q * big_d
                            jumped = True
                            break
                    else:
                        memo[key2] = (i, sg, tuple([cnt[c] for c in range(NCNT)]))
                    for c in range(NCNT):
                        dc[c] = m * dcnt[c]
                    eng.shift(m * dt, dc)
                    _shift_hist(h_ref, h_cnt, m * dt, dc)
                    sg += m * dt
                    i += m * p
                    jumped = True
                    break
            if jumped:
                continue
        slot = h_next
        h_ref[slot] = sg
        h_klen[slot] = klen
        for j in range(klen):
            h_key[slot][j] = kbuf[j]
        for c in range(NCNT):
            h_cnt[slot][c] = cnt[c]
        h_stalled[slot] = False
        h_lo[slot] = 0
        h_hi[slot] = 0
        eng.step_stalled = False
        eng.step_lo = INF
        eng.step_hi = -INF
        nxt = eng.process_bd(sg, length0 if uniform else <long long> lens[i % n_ring], i,
                             &first_issue)
        if record:
            sg_log.append(sg)
            mm2s_log.append(first_issue)
        h_next = (h_next + 1) % HMAX
        if h_len < HMAX:
            h_len += 1
        open_slot = slot
        rec_open = True
        sg = nxt
        i += 1
    eng.flush(INF)
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

