"""Measurement state machine in the PL that times one MM2S run.

Three counters run on the PL clock:

* setup: from reset release until the start request is seen,
* latency: until the first stream beat, from the tail-descriptor write
  (default) or from the start request,
* throughput: first beat to last beat, both inclusive.

An input is sampled at the first clock edge at or after it happens.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ScenarioIncomplete
from .units import ceil_div, ps_to_ns


class CsmPhase(enum.Enum):
    IDLE = "IDLE"
    WAIT_START_ACK = "WAIT_START_ACK"
    MM2S_STATE = "MM2S_STATE"
    WAIT_DONE_GET_CNT_VALS = "WAIT_DONE_GET_CNT_VALS"


class LatencyMode(str, enum.Enum):
    TAIL_WRITE = "tail_write"
    START_RECEIVED = "start_received"


@dataclass
class CsmState:
    state: CsmPhase = CsmPhase.IDLE
    setup_cnter: int = 0
    mm2s_lat_cnter: int = 0
    mm2s_thrput_cnter: int = 0
    lat_running: bool = False
    first_word_seen: bool = False
    beats_seen: int = 0
    done: bool = False

    def reset(self):
        self.setup_cnter = self.mm2s_lat_cnter = self.mm2s_thrput_cnter = 0
        self.lat_running = self.first_word_seen = self.done = False
        self.beats_seen = 0


@dataclass(frozen=True)
class CsmScenario:
    """Event times (ps) seen by the state machine during one run."""

    cycle_ps: int
    reset_release_ps: int
    start_ps: int
    tail_write_ps: int
    beats_ps: Sequence[int]
    payload_bytes: int = 0

    def edge(self, t_ps: int) -> int:
        return ceil_div(int(t_ps), self.cycle_ps)


@dataclass(frozen=True)
class CounterValues:
    setup_cycles: int
    latency_cycles: int
    throughput_cycles: int
    cycle_ps: int
    payload_bytes: int = 0
    states: tuple[CsmPhase, ...] = ()

    @property
    def setup_ns(self) -> float:
        return ps_to_ns(self.setup_cycles * self.cycle_ps)

    @property
    def latency_ns(self) -> float:
        return ps_to_ns(self.latency_cycles * self.cycle_ps)

    @property
    def throughput_ns(self) -> float:
        return ps_to_ns(self.throughput_cycles * self.cycle_ps)

    @property
    def throughput_MBps(self) -> float:
        return self.payload_bytes / self.throughput_ns * 1e3


def tick(s: CsmState, k: int, sc: CsmScenario, beat: bool,
         mode: LatencyMode = LatencyMode.TAIL_WRITE, expected_beats: int | None = None) -> None:
    """Advance the machine by the clock edge ``k``."""
    if s.state is CsmPhase.IDLE:
        if k < sc.edge(sc.reset_release_ps):
            return
        s.reset()
        s.state = CsmPhase.WAIT_START_ACK
    if s.state is CsmPhase.WAIT_START_ACK:
        if k < sc.edge(sc.start_ps):
            s.setup_cnter += 1
            return
        s.state = CsmPhase.MM2S_STATE
        if mode is LatencyMode.START_RECEIVED:
            s.lat_running = True
    if s.state is CsmPhase.MM2S_STATE:
        if mode is LatencyMode.TAIL_WRITE and k == sc.edge(sc.tail_write_ps):
            s.lat_running = True
        if beat:
            if not s.first_word_seen:
                s.first_word_seen = True
                s.lat_running = False
            s.beats_seen += 1
        if s.first_word_seen:
            s.mm2s_thrput_cnter += 1
        elif s.lat_running:
            s.mm2s_lat_cnter += 1
        n = len(sc.beats_ps) if expected_beats is None else expected_beats
        if s.first_word_seen and s.beats_seen >= n:
            s.state = CsmPhase.WAIT_DONE_GET_CNT_VALS
            s.done = True


def _check(sc: CsmScenario, mode: LatencyMode) -> np.ndarray:
    if len(sc.beats_ps) == 0:
        raise ScenarioIncomplete("no stream beats: the machine never leaves MM2S_STATE")
    edges = np.asarray([sc.edge(t) for t in sc.beats_ps], dtype=np.int64)
    if np.any(np.diff(edges) < 1):
        raise ScenarioIncomplete("stream beats must fall on distinct clock edges")
    order = [sc.edge(sc.reset_release_ps), sc.edge(sc.start_ps)]
    if mode is LatencyMode.TAIL_WRITE:
        order.append(sc.edge(sc.tail_write_ps))
    order.append(int(edges[0]))
    if any(b < a for a, b in zip(order, order[1:])):
        raise ScenarioIncomplete("scenario events out of order")
    return edges


def run_csm(sc: CsmScenario, mode: LatencyMode | str = LatencyMode.TAIL_WRITE) -> CounterValues:
    """Counter values after the run, jumping over stretches where nothing changes."""
    mode = LatencyMode(mode)
    edges = _check(sc, mode)
    reset_k = sc.edge(sc.reset_release_ps)
    start_k = sc.edge(sc.start_ps)
    lat_from = sc.edge(sc.tail_write_ps) if mode is LatencyMode.TAIL_WRITE else start_k
    return CounterValues(
        setup_cycles=start_k - reset_k,
        latency_cycles=int(edges[0]) - lat_from,
        throughput_cycles=int(edges[-1] - edges[0]) + 1,
        cycle_ps=sc.cycle_ps,
        payload_bytes=sc.payload_bytes,
        states=tuple(CsmPhase),
    )


def run_csm_clocked(sc: CsmScenario, mode: LatencyMode | str = LatencyMode.TAIL_WRITE,
                    max_cycles: int = 10_000_000) -> CounterValues:
    """Edge-by-edge reference for :func:`run_csm` (slow; for checking)."""
    mode = LatencyMode(mode)
    edges = _check(sc, mode)
    beat_edges = set(int(e) for e in edges)
    s = CsmState()
    seen = [s.state]
    k = 0
    while not s.done:
        if k > max_cycles:
            raise ScenarioIncomplete("machine did not finish within max_cycles")
        tick(s, k, sc, k in beat_edges, mode)
        if s.state is not seen[-1]:
            seen.append(s.state)
        k += 1
    return CounterValues(s.setup_cnter, s.mm2s_lat_cnter, s.mm2s_thrput_cnter, sc.cycle_ps,
                         sc.payload_bytes, tuple(seen))


def scenario_from_trace(trace, reset_release_ps: int, start_ps: int) -> CsmScenario:
    """Attach RPU-side events to an engine trace."""
    return CsmScenario(trace.cycle_ps, reset_release_ps, start_ps, trace.tail_write_ps,
                       trace.beats_ps, trace.payload_bytes_total)
