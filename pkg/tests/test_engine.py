import csv
import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sgdma_sim.bdring import (BdRing, Placement, RingSpec, create_ring, ring_from_lengths,
                              unroll)
from sgdma_sim.engine import (ACCESS_KINDS, EngineConfig, count_ddr_transactions, measure,
                              run_mm2s)
from sgdma_sim.errors import ConfigInvalid, IncompleteTrace, InvalidRing
from sgdma_sim.harness import run_trials, summarize
from sgdma_sim.memmodel import DdrConfig, DdrState, MemoryMap

MAP = MemoryMap()


def _run(ring, ddr_cfg, engine=None, start_ns=0.0, contention_ps=0):
    return run_mm2s(ring, engine or EngineConfig(), DdrState(ddr_cfg), start_ns, contention_ps)


@st.composite
def rings(draw, max_bds=12, max_len=9000):
    lengths = draw(st.lists(st.integers(1, max_len), min_size=1, max_size=max_bds))
    return ring_from_lengths(lengths, n_cycles=draw(st.integers(1, 4)))


phases = st.integers(0, 7_799_999).map(lambda ps: DdrConfig(refresh_phase_ns=ps / 1000))


class TestEngineConfig:
    def test_invalid(self):
        with pytest.raises(ConfigInvalid):
            EngineConfig(fifo_depth_beats=0)
        with pytest.raises(ConfigInvalid):
            EngineConfig(per_bd_cycles=-1)


class TestRunMm2s:
    def test_three_bd_two_cycle_counts(self, quiet_ddr):
        trace = _run(ring_from_lengths([100, 32, 4096], n_cycles=2), quiet_ddr)
        assert count_ddr_transactions(trace) == {"bd_fetches": 6, "buffer_fetches": 6,
                                                 "status_writes": 6}
        assert len(trace.beats_ps) == 2 * (4 + 1 + 128)
        assert trace.bytes_per_bd().tolist() == [100, 32, 4096] * 2

    @pytest.mark.parametrize("cycles,expected", [(1, 4), (8, 32)])
    def test_transaction_counts(self, ddr, cycles, expected):
        trace = _run(create_ring(RingSpec(4, 64, n_cycles=cycles)), ddr)
        c = count_ddr_transactions(trace)
        assert c["bd_fetches"] == c["status_writes"] == expected

    def test_bursts_split_at_fifo_depth(self, quiet_ddr):
        eng = EngineConfig(fifo_depth_beats=16)  # 512-byte bursts
        trace = _run(ring_from_lengths([2000]), quiet_ddr, eng)
        assert trace.burst_bytes.tolist() == [512, 512, 512, 464]
        assert count_ddr_transactions(trace)["buffer_fetches"] == 4

    def test_single_bd_latency_in_band(self, quiet_ddr):
        lat = _run(ring_from_lengths([32]), quiet_ddr).latency_ns
        assert 849.0 <= lat <= 1516.0

    def test_invalid_ring(self, ddr):
        ring = create_ring(RingSpec(4, 64))
        d = ring.descriptors
        broken = dataclasses.replace(ring, descriptors=d[:3] + (dataclasses.replace(d[3], next_bd_addr=ring.addr_of(1)),))
        with pytest.raises(InvalidRing):
            _run(broken, ddr)

    def test_incomplete_trace(self, ddr):
        trace = _run(create_ring(RingSpec(4, 64)), ddr)
        cut = dataclasses.replace(trace, status_write_ps=trace.status_write_ps[:2])
        with pytest.raises(IncompleteTrace):
            count_ddr_transactions(cut)

    def test_ddr_state_advances(self, ddr):
        state = DdrState(ddr)
        run_mm2s(create_ring(RingSpec(4, 64)), EngineConfig(), state)
        assert state.free_at_ps > 0 and state.last_class >= 0

    def test_csv_export(self, ddr, tmp_path):
        trace = _run(create_ring(RingSpec(2, 64)), ddr, start_ns=10.0)
        path = trace.to_csv(tmp_path / "t.csv", include_beats=True)
        rows = list(csv.DictReader(path.open()))
        assert list(rows[0]) == ["name", "bd_index", "timestamp_ns"]
        assert rows[0]["name"] == "tail_write" and float(rows[0]["timestamp_ns"]) == 10.0
        assert sum(r["name"] == "s_axis" for r in rows) == 4
        assert sum(r["name"] == "sg_ar_valid" for r in rows) == 2
        times = [float(r["timestamp_ns"]) for r in rows]
        assert times == sorted(times)

    def test_placement_does_not_change_timing(self, ddr):
        seq = _run(create_ring(RingSpec(64, 512, Placement.SEQUENTIAL, 5)), ddr)
        rnd = _run(create_ring(RingSpec(64, 512, Placement.RANDOM, 5)), ddr)
        np.testing.assert_array_equal(seq.beats_ps, rnd.beats_ps)


class TestTraceInvariants:
    @given(rings(), phases, st.integers(0, 136))
    def test_event_ordering(self, ring, ddr_cfg, backlog):
        tr = _run(ring, ddr_cfg, start_ns=1.0, contention_ps=ddr_cfg.contention_ps(backlog))
        assert tr.tail_write_ps <= tr.sg_ar_valid_ps[0] <= tr.mm2s_ar_valid_ps[0]
        assert tr.mm2s_ar_valid_ps[0] <= tr.first_s_axis_ps <= tr.done_ps
        assert np.all(tr.sg_ar_valid_ps < tr.mm2s_ar_valid_ps)
        assert np.all(tr.mm2s_ar_valid_ps < tr.status_write_ps)
        assert np.all(np.diff(tr.beats_ps) >= tr.cycle_ps)

    @given(rings(), phases)
    def test_every_byte_streamed_once_per_pass(self, ring, ddr_cfg):
        tr = _run(ring, ddr_cfg)
        assert tr.bytes_per_bd().tolist() == ring.lengths() * ring.n_cycles
        assert len(tr.beats_ps) == ring.n_cycles * sum(-(-x // 32) for x in ring.lengths())

    @given(rings(), phases)
    def test_throughput_below_ceiling(self, ring, ddr_cfg):
        tr = _run(ring, ddr_cfg)
        assert tr.throughput_MBps <= EngineConfig().bus.max_bandwidth_bytes_per_s / 1e6 * (1 + 1e-12)

    @given(rings(max_bds=6), phases, st.integers(0, 136))
    def test_cyclic_equals_unrolled(self, ring, ddr_cfg, backlog):
        c = ddr_cfg.contention_ps(backlog)
        cyc = _run(ring, ddr_cfg, contention_ps=c)
        flat = _run(unroll(ring), ddr_cfg, contention_ps=c)
        assert cyc.beats_ps.tobytes() == flat.beats_ps.tobytes()
        assert count_ddr_transactions(cyc) == count_ddr_transactions(flat)

    @given(st.integers(1, 9000), st.integers(1, 64), st.integers(1, 64), phases, st.integers(0, 136))
    def test_latency_independent_of_ring_size(self, b, n1, n2, ddr_cfg, backlog):
        c = ddr_cfg.contention_ps(backlog)
        a = _run(create_ring(RingSpec(n1, b, n_cycles=2)), ddr_cfg, contention_ps=c)
        z = _run(create_ring(RingSpec(n2, b)), ddr_cfg, contention_ps=c)
        assert a.latency_ps == z.latency_ps

    @given(rings(), phases, st.booleans())
    def test_accesses_replay_through_memory_model(self, ring, ddr_cfg, overlap):
        tr = _run(ring, ddr_cfg, EngineConfig(pipeline_overlap=overlap))
        state = DdrState(ddr_cfg)
        bursts = iter(tr.burst_bytes.tolist())
        for kind, _seq, issue, start, finish, _n in tr.accesses:
            name = ACCESS_KINDS[kind]
            if name == "buffer_fetch":
                addr, n = MAP.buffer_base, next(bursts)
            else:
                addr, n = MAP.ring_base, 64 if name == "bd_fetch" else 4
            c = state.access_ps(addr, n, issue)
            assert (c.start_ps, c.finish_ps) == (start, finish)

    @given(rings(max_bds=8), phases, st.integers(0, 136))
    def test_measure_matches_trace(self, ring, ddr_cfg, backlog):
        c = ddr_cfg.contention_ps(backlog)
        tr = _run(ring, ddr_cfg, contention_ps=c)
        m = measure(ring.lengths(), ring.n_cycles, EngineConfig(), ddr_cfg, c)
        assert (m.latency_ps, m.done_ps, m.n_beats) == (tr.latency_ps, tr.done_ps, len(tr.beats_ps))
        assert m.throughput_MBps == pytest.approx(tr.throughput_MBps, rel=1e-12)


class TestThroughputShape:
    SEEDS = list(range(40))

    def test_median_non_decreasing_in_bytes(self, ddr, engine):
        for n_total in (4, 1024, 2**16):
            meds = [summarize(run_trials(b, n_total, self.SEEDS, ddr, engine)[1]).median
                    for b in (32, 64, 128, 256, 512, 1024, 2048, 4096, 8192)]
            assert meds == sorted(meds)

    def test_relative_spread_non_increasing_in_total(self, ddr, engine):
        for b in (32, 512, 8192):
            spreads = []
            for n_total in (4, 16, 64, 256, 1024, 4096, 2**16, 2**20):
                thr = summarize(run_trials(b, n_total, self.SEEDS, ddr, engine)[1])
                spreads.append(thr.spread)
            # float noise of a few ulps once runs are long
            assert all(s2 <= s1 + 1e-6 for s1, s2 in zip(spreads, spreads[1:])), spreads

    def test_non_overlap_mode_is_slower(self, ddr):
        fast = measure([8192], 64, EngineConfig(), ddr)
        slow = measure([8192], 64, EngineConfig(pipeline_overlap=False), ddr)
        assert slow.throughput_MBps < fast.throughput_MBps
