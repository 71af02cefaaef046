"""Clocked AXI-stream model between the DMA engine and the measurement FSM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigInvalid
from .memmodel import DdrTiming
from .units import ceil_div, ns_to_ps, snap_up

BUS_WIDTHS = (32, 64, 256, 512, 1024)


@dataclass(frozen=True)
class BusConfig:
    data_width_bits: int = 256
    pl_clock_mhz: float = 333.0

    def __post_init__(self):
        if self.data_width_bits not in BUS_WIDTHS:
            raise ConfigInvalid(f"data_width_bits must be one of {BUS_WIDTHS}")
        if self.pl_clock_mhz <= 0:
            raise ConfigInvalid("pl_clock_mhz must be > 0")

    @property
    def beat_bytes(self) -> int:
        return self.data_width_bits // 8

    @property
    def cycle_ps(self) -> int:
        # Whole picoseconds: 333 MHz gives the 3.003 ns beat period.
        return int(round(10**6 / self.pl_clock_mhz))

    @property
    def cycle_ns(self) -> float:
        return self.cycle_ps / 1000

    @property
    def max_bandwidth_bytes_per_s(self) -> float:
        return self.beat_bytes / self.cycle_ps * 1e12

    def beats(self, payload_bytes: int) -> int:
        return ceil_div(payload_bytes, self.beat_bytes)


def beat_times_ps(earliest_ps: int, n_beats: int, cycle_ps: int,
                  ready_ps: Sequence[int] | None = None) -> np.ndarray:
    """One beat per clock from ``earliest_ps``, held back by per-beat ready times.

    Beat ``j`` goes out at ``max(beat[j-1] + cycle, snap(ready[j]))``.
    """
    if ready_ps is None:
        return earliest_ps + cycle_ps * np.arange(n_beats, dtype=np.int64)
    if len(ready_ps) != n_beats:
        raise ValueError("need one ready time per beat")
    out = np.empty(n_beats, dtype=np.int64)
    t = earliest_ps - cycle_ps
    for j, r in enumerate(ready_ps):
        t = max(t + cycle_ps, snap_up(int(r), cycle_ps))
        out[j] = t
    return out


def word_delivery_times(first_word_ns: float, payload_bytes: int, cfg: BusConfig,
                        backpressure: Sequence[float] | None = None) -> np.ndarray:
    """Beat timestamps (ns) for ``payload_bytes`` streamed from ``first_word_ns``.

    ``backpressure`` optionally gives, per beat, the time (ns) its data
    becomes available upstream; beats wait for their data.
    """
    if payload_bytes < 1:
        raise ValueError("payload_bytes must be >= 1")
    n = cfg.beats(payload_bytes)
    ready = None if backpressure is None else [ns_to_ps(r) for r in backpressure]
    return beat_times_ps(ns_to_ps(first_word_ns), n, cfg.cycle_ps, ready) / 1000


def throughput_bytes_per_s(times_ns: np.ndarray, payload_bytes: int, cfg: BusConfig) -> float:
    """Payload over first-beat-to-end-of-last-beat time."""
    span_ns = float(times_ns[-1] - times_ns[0]) + cfg.cycle_ns
    return payload_bytes / span_ns * 1e9


def burst_ready_ps(data_start_ps: int, nbytes: int, beat_bytes: int, t: DdrTiming) -> list[int]:
    """When each bus beat's bytes have arrived from the DDR controller."""
    out = []
    n_beats = ceil_div(nbytes, beat_bytes)
    for j in range(n_beats):
        last_byte = min((j + 1) * beat_bytes, nbytes) - 1
        out.append(data_start_ps + t.xfer_ps(last_byte // t.bytes_per_clock))
    return out


REGIME_BUS_LIMITED = 0
REGIME_DDR_LIMITED = 1
REGIME_GENERIC = 2


def burst_regime(nbytes: int, beat_bytes: int, cycle_ps: int, t: DdrTiming) -> int:
    """Which closed form gives a burst's beat times (see the kernels)."""
    ready = burst_ready_ps(0, nbytes, beat_bytes, t)
    if all(r - ready[0] <= j * cycle_ps for j, r in enumerate(ready)):
        return REGIME_BUS_LIMITED
    if all(b - a >= cycle_ps for a, b in zip(ready, ready[1:])):
        return REGIME_DDR_LIMITED
    return REGIME_GENERIC
