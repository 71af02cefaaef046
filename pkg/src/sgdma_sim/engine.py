"""MM2S scatter-gather engine: walks a BD ring and streams its buffers.

Per descriptor the engine fetches the 64-byte BD, fetches the buffer in
bursts of at most ``fifo_depth_beats`` bus beats, streams the beats, and
writes the status word back.  With ``pipeline_overlap`` the next BD fetch is
issued right after the current buffer request and the status write is queued
behind it; without it, each descriptor waits for its own status write.

The timing core lives in the kernels (:mod:`sgdma_sim.kernels`); this module
builds their parameters and turns recorded runs into :class:`TransferTrace`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .bdring import BdRing, validate_ring
from .errors import ConfigInvalid, IncompleteTrace, InvalidRing
from .fabric import BusConfig, beat_times_ps, burst_ready_ps
from .memmodel import DdrConfig, DdrState, DdrTiming, windows_intersecting
from .units import ns_to_ps, ps_to_ns, snap_up

ACCESS_KINDS = ("bd_fetch", "buffer_fetch", "status_write")


@dataclass(frozen=True)
class EngineConfig:
    bus: BusConfig = field(default_factory=BusConfig)
    pipeline_overlap: bool = True
    fifo_depth_beats: int = 512
    # Calibrated engine costs, in PL cycles.
    per_bd_cycles: int = 28
    startup_cycles: int = 188

    def __post_init__(self):
        if self.fifo_depth_beats < 1:
            raise ConfigInvalid("fifo_depth_beats must be >= 1")
        if self.per_bd_cycles < 0 or self.startup_cycles < 0:
            raise ConfigInvalid("engine cycle costs must be >= 0")


def kernel_params(cfg: EngineConfig, t: DdrTiming, contention_ps: int = 0) -> tuple:
    cyc = cfg.bus.cycle_ps
    return (cyc, cfg.startup_cycles * cyc, cfg.per_bd_cycles * cyc, cfg.fifo_depth_beats,
            cfg.bus.beat_bytes, int(cfg.pipeline_overlap),
            t.base_ps, t.switch_ps, t.ctrl_num, t.ctrl_den, t.bytes_per_clock,
            t.period_ps, t.stall_ps, t.phase_ps, int(contention_ps))


@dataclass(frozen=True)
class TransferTrace:
    """Timestamped record of one MM2S run (integer ps inside, ns outside)."""

    cycle_ps: int
    tail_write_ps: int
    sg_ar_valid_ps: np.ndarray
    mm2s_ar_valid_ps: np.ndarray
    status_write_ps: np.ndarray
    status_done_ps: np.ndarray
    beats_ps: np.ndarray
    burst_bd: np.ndarray          # BD sequence number of each buffer burst
    burst_bytes: np.ndarray
    accesses: tuple               # (kind, bd_seq, issue, start, finish, n_stalls)
    stall_events_ps: tuple        # (bd_seq, kind, window_start)
    n_bds: int
    n_cycles: int
    ring_lengths: tuple[int, ...]
    beat_bytes: int = 32

    # -- ns views ----------------------------------------------------------
    @property
    def tail_write_ns(self) -> float:
        return ps_to_ns(self.tail_write_ps)

    @property
    def sg_ar_valid_ns(self) -> np.ndarray:
        return self.sg_ar_valid_ps / 1000

    @property
    def mm2s_ar_valid_ns(self) -> np.ndarray:
        return self.mm2s_ar_valid_ps / 1000

    @property
    def status_write_ns(self) -> np.ndarray:
        return self.status_write_ps / 1000

    @property
    def s_axis_beats(self) -> np.ndarray:
        return self.beats_ps / 1000

    @property
    def first_s_axis_ps(self) -> int:
        return int(self.beats_ps[0])

    @property
    def first_s_axis_ns(self) -> float:
        return ps_to_ns(self.first_s_axis_ps)

    @property
    def done_ps(self) -> int:
        """End of the last beat's clock cycle."""
        return int(self.beats_ps[-1]) + self.cycle_ps

    @property
    def done_ns(self) -> float:
        return ps_to_ns(self.done_ps)

    @property
    def latency_ps(self) -> int:
        return self.first_s_axis_ps - self.tail_write_ps

    @property
    def latency_ns(self) -> float:
        return ps_to_ns(self.latency_ps)

    @property
    def payload_bytes_total(self) -> int:
        return sum(self.ring_lengths) * self.n_cycles

    @property
    def throughput_MBps(self) -> float:
        return self.payload_bytes_total / ps_to_ns(self.done_ps - self.first_s_axis_ps) * 1e3

    @property
    def n_total(self) -> int:
        return self.n_bds * self.n_cycles

    @property
    def complete(self) -> bool:
        n = self.n_total
        return (len(self.sg_ar_valid_ps) == n and len(self.mm2s_ar_valid_ps) == n
                and len(self.status_write_ps) == n and len(self.status_done_ps) == n
                and len(self.beats_ps) > 0)

    def bytes_per_bd(self) -> np.ndarray:
        """Bytes streamed for each BD visit, in visit order."""
        return np.bincount(self.burst_bd, weights=self.burst_bytes,
                           minlength=self.n_total).astype(np.int64)

    # -- export ------------------------------------------------------------
    def events(self) -> list[tuple[str, int, float]]:
        rows: list[tuple[str, int, float]] = [("tail_write", -1, self.tail_write_ns)]
        for i in range(self.n_total):
            rows.append(("sg_ar_valid", i, float(self.sg_ar_valid_ns[i])))
            rows.append(("mm2s_ar_valid", i, float(self.mm2s_ar_valid_ns[i])))
            rows.append(("status_write", i, float(self.status_write_ns[i])))
        rows.append(("first_s_axis", 0, self.first_s_axis_ns))
        for seq, kind, start in self.stall_events_ps:
            rows.append((f"refresh_stall:{kind}", seq, ps_to_ns(start)))
        rows.append(("done", self.n_total - 1, self.done_ns))
        rows.sort(key=lambda r: (r[2], r[1]))
        return rows

    def to_csv(self, path: str | Path, include_beats: bool = False) -> Path:
        path = Path(path)
        rows = self.events()
        if include_beats:
            beat_bd = np.repeat(self.burst_bd, self._burst_beats())
            rows += [("s_axis", int(b), float(t)) for b, t in zip(beat_bd, self.s_axis_beats)]
            rows.sort(key=lambda r: (r[2], r[1]))
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "bd_index", "timestamp_ns"])
            for name, idx, t in rows:
                w.writerow([name, idx, f"{t:.3f}"])
        return path

    def _burst_beats(self) -> np.ndarray:
        return -(-self.burst_bytes // self.beat_bytes)


def _trace_from_record(out: dict, ring_lengths: Sequence[int], n_cycles: int, cfg: EngineConfig,
                       t: DdrTiming, tail_ps: int) -> TransferTrace:
    cyc = cfg.bus.cycle_ps
    w = cfg.bus.beat_bytes
    beats = []
    for seq, _issue, a, bf0, nbytes, first, last in out["bursts"]:
        ready = burst_ready_ps(a, nbytes, w, t)
        bt = beat_times_ps(bf0, len(ready), cyc, ready)
        assert bt[0] == first and bt[-1] == last, "kernel/fabric beat mismatch"
        beats.append(bt)
    status = sorted(out["status"])
    stall_events = []
    for kind, seq, _issue, start, finish, n_lat in out["accesses"]:
        if n_lat:
            k_lo, k_hi = windows_intersecting(t, start, finish)
            for k in range(k_lo, k_hi + 1):
                stall_events.append((seq, ACCESS_KINDS[kind], t.phase_ps + k * t.period_ps))
    trace = TransferTrace(
        cycle_ps=cyc,
        tail_write_ps=tail_ps,
        sg_ar_valid_ps=np.asarray(out["sg"], dtype=np.int64),
        mm2s_ar_valid_ps=np.asarray(out["mm2s"], dtype=np.int64),
        status_write_ps=np.asarray([s[1] for s in status], dtype=np.int64),
        status_done_ps=np.asarray([s[2] for s in status], dtype=np.int64),
        beats_ps=np.concatenate(beats) if beats else np.empty(0, dtype=np.int64),
        burst_bd=np.asarray([b[0] for b in out["bursts"]], dtype=np.int64),
        burst_bytes=np.asarray([b[4] for b in out["bursts"]], dtype=np.int64),
        accesses=tuple(out["accesses"]),
        stall_events_ps=tuple(stall_events),
        n_bds=len(ring_lengths),
        n_cycles=n_cycles,
        ring_lengths=tuple(int(x) for x in ring_lengths),
        beat_bytes=w,
    )
    return trace


def run_mm2s(ring: BdRing, cfg: EngineConfig, ddr: DdrState, start_ns: float = 0.0,
             contention_ps: int = 0) -> TransferTrace:
    """Simulate the engine over ``ring`` from a tail-descriptor write at ``start_ns``.

    ``contention_ps`` is extra DDR backlog, beyond ``ddr.free_at_ps``, that the
    first descriptor fetch finds in front of it.  ``ddr`` is advanced to the
    state left behind by the run.
    """
    report = validate_ring(ring, ddr.memory_map)
    if not report.ok:
        raise InvalidRing("ring fails validation: " + ", ".join(sorted(report.codes)))
    t = ddr.config.timing()
    tail = ns_to_ps(start_ns)
    sg0 = snap_up(tail + cfg.startup_cycles * cfg.bus.cycle_ps, cfg.bus.cycle_ps)
    backlog = max(ddr.free_at_ps - sg0, 0) + int(contention_ps)
    lengths = ring.lengths()
    out = kernels.simulate(kernel_params(cfg, t, backlog), lengths, ring.n_cycles, tail, True, False)
    ddr.free_at_ps = out["free_at"]
    ddr.last_class = out["last_cls"]
    return _trace_from_record(out, lengths, ring.n_cycles, cfg, t, tail)


def count_ddr_transactions(trace: TransferTrace) -> dict[str, int]:
    if not trace.complete:
        raise IncompleteTrace("trace is missing per-BD events")
    counts = dict.fromkeys(ACCESS_KINDS, 0)
    for kind, *_ in trace.accesses:
        counts[ACCESS_KINDS[kind]] += 1
    return {"bd_fetches": counts["bd_fetch"], "buffer_fetches": counts["buffer_fetch"],
            "status_writes": counts["status_write"]}


@dataclass(frozen=True)
class Measurement:
    """Latency and throughput of one run, without the per-event record."""

    latency_ps: int
    first_beat_ps: int
    done_ps: int
    payload_bytes: int
    n_beats: int
    n_bd_fetches: int
    n_buffer_fetches: int
    n_status_writes: int
    n_refresh_stalls: int

    @property
    def latency_ns(self) -> float:
        return ps_to_ns(self.latency_ps)

    @property
    def throughput_MBps(self) -> float:
        return self.payload_bytes / ps_to_ns(self.done_ps - self.first_beat_ps) * 1e3


def measure(lengths: Sequence[int], n_cycles: int, cfg: EngineConfig, ddr: DdrConfig,
            contention_ps: int = 0, start_ps: int = 0, fast: bool = True) -> Measurement:
    """Summary-only run used by sweeps; skips steady stretches when it can."""
    if not len(lengths) or n_cycles < 1:
        raise InvalidRing("need at least one descriptor and one cycle")
    if min(lengths) < 1:
        raise InvalidRing("descriptor lengths must be >= 1")
    out = kernels.simulate(kernel_params(cfg, ddr.timing(), contention_ps), list(lengths),
                           n_cycles, start_ps, False, fast)
    return Measurement(
        latency_ps=out["first_beat"] - start_ps,
        first_beat_ps=out["first_beat"],
        done_ps=out["last_beat"] + cfg.bus.cycle_ps,
        payload_bytes=sum(int(x) for x in lengths) * n_cycles,
        n_beats=out["n_beats"],
        n_bd_fetches=out["n_bd_fetch"],
        n_buffer_fetches=out["n_buffer_fetch"],
        n_status_writes=out["n_status_write"],
        n_refresh_stalls=out["n_stalls"],
    )
