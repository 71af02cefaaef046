import pytest
from hypothesis import given, strategies as st

from sgdma_sim.bdring import ring_from_lengths
from sgdma_sim.csm import (CsmPhase, CsmScenario, CsmState, LatencyMode, run_csm, run_csm_clocked,
                           scenario_from_trace, tick)
from sgdma_sim.engine import EngineConfig, run_mm2s
from sgdma_sim.errors import ScenarioIncomplete
from sgdma_sim.memmodel import DdrConfig, DdrState

CYC = 3003


def _scenario(setup=265, gap=10, latency=262, beats=4, spacing=1, reset=0, payload=None):
    start = reset + setup * CYC
    tail = start + gap * CYC
    first = tail + latency * CYC
    bt = [first + j * spacing * CYC for j in range(beats)]
    return CsmScenario(CYC, reset, start, tail, bt, payload if payload is not None else 32 * beats)


class TestFigure3:
    def test_counters(self):
        cv = run_csm(_scenario())
        assert cv.setup_cycles == 265
        assert cv.latency_cycles == 262
        assert cv.latency_ns == pytest.approx(786.786)
        assert round(cv.latency_ns) == 787

    def test_start_received_mode_spans_the_gap(self):
        cv = run_csm(_scenario(gap=10), LatencyMode.START_RECEIVED)
        assert cv.latency_cycles == 272

    def test_128_back_to_back_beats(self):
        cv = run_csm(_scenario(beats=128, payload=4096))
        assert cv.throughput_cycles == 128
        assert cv.throughput_MBps == pytest.approx(4096 / (128 * 3.003) * 1e3)

    def test_clocked_state_sequence(self):
        cv = run_csm_clocked(_scenario())
        assert cv.states == (CsmPhase.IDLE, CsmPhase.WAIT_START_ACK, CsmPhase.MM2S_STATE,
                             CsmPhase.WAIT_DONE_GET_CNT_VALS)
        assert (cv.setup_cycles, cv.latency_cycles, cv.throughput_cycles) == (265, 262, 4)


class TestGuards:
    def test_no_beats(self):
        with pytest.raises(ScenarioIncomplete):
            run_csm(_scenario(beats=0))

    def test_beats_on_same_edge(self):
        sc = _scenario()
        bad = CsmScenario(CYC, 0, sc.start_ps, sc.tail_write_ps, [sc.beats_ps[0] - 1, sc.beats_ps[0]])
        with pytest.raises(ScenarioIncomplete):
            run_csm(bad)

    def test_out_of_order(self):
        sc = _scenario()
        with pytest.raises(ScenarioIncomplete):
            run_csm(CsmScenario(CYC, sc.start_ps + CYC, sc.start_ps, sc.tail_write_ps, sc.beats_ps))

    def test_counters_reset_in_idle(self):
        s = CsmState(setup_cnter=5, mm2s_lat_cnter=3)
        tick(s, 0, _scenario(), False)
        assert s.state is CsmPhase.WAIT_START_ACK
        assert (s.mm2s_lat_cnter, s.mm2s_thrput_cnter) == (0, 0)
        assert s.setup_cnter == 1


@st.composite
def scenarios(draw):
    cyc_off = st.integers(0, CYC - 1)
    reset = draw(st.integers(0, 50)) * CYC + draw(cyc_off)
    start = reset + draw(st.integers(0, 400)) * CYC + draw(cyc_off)
    tail = start + draw(st.integers(0, 60)) * CYC
    first = tail + draw(st.integers(1, 400)) * CYC + draw(cyc_off)
    gaps = draw(st.lists(st.integers(1, 5), max_size=60))
    beats = [first]
    for g in gaps:
        beats.append(beats[-1] + g * CYC)
    return CsmScenario(CYC, reset, start, tail, beats, 32 * len(beats))


class TestClockedReference:
    @given(scenarios(), st.sampled_from(list(LatencyMode)))
    def test_closed_form_matches_edges(self, sc, mode):
        a, b = run_csm(sc, mode), run_csm_clocked(sc, mode)
        assert (a.setup_cycles, a.latency_cycles, a.throughput_cycles) == \
               (b.setup_cycles, b.latency_cycles, b.throughput_cycles)
        assert b.states[-1] is CsmPhase.WAIT_DONE_GET_CNT_VALS


class TestAgainstTrace:
    @given(st.lists(st.integers(1, 5000), min_size=1, max_size=8), st.integers(0, 7_799_999),
           st.integers(0, 5000))
    def test_counters_match_trace_within_a_cycle(self, lengths, phase_ps, tail_offset_ps):
        ddr = DdrConfig(refresh_phase_ns=phase_ps / 1000)
        tail_ns = (100 * CYC + tail_offset_ps) / 1000
        tr = run_mm2s(ring_from_lengths(lengths), EngineConfig(), DdrState(ddr), tail_ns)
        cv = run_csm(scenario_from_trace(tr, 0, 50 * CYC))
        assert abs(cv.latency_ns - tr.latency_ns) <= CYC / 1000
        span_ns = (tr.done_ps - tr.first_s_axis_ps) / 1000
        assert abs(cv.throughput_ns - span_ns) <= CYC / 1000
        assert cv.throughput_MBps == pytest.approx(tr.throughput_MBps, rel=0.02)
