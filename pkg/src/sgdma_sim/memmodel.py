"""Timed DDR model: memory map, periodic refresh stalls and access cost.

The DDR serves requests first-come first-served.  Each access has a latency
part (``base_access_ns`` plus any row switch plus the data beats after the
first) and an occupancy part (row switch plus all data beats) that blocks
the next request.  Refresh windows recur every ``refresh_period_ns`` starting
at ``refresh_phase_ns``; any window that intersects an access's service
interval delays it by the full ``refresh_stall_ns``.  A request that arrives
while a refresh is in progress starts when the window closes; that window
is not charged again.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

from .errors import ConfigInvalid, OutOfAperture
from .units import ceil_div, clock_period, cycles_to_ps, ns_to_ps, ps_to_ns

RPMSG_BYTES = 2048
RING_BYTES = 4 * 1024 * 1024
BUFFER_BYTES = 256 * 1024 * 1024


class Region(enum.Enum):
    RPMSG = "rpmsg"
    RING = "ring"
    BUFFER = "buffer"
    UNALLOCATED = "unallocated"


class AccessKind(enum.Enum):
    BD_FETCH = "bd_fetch"
    BUFFER_FETCH = "buffer_fetch"
    STATUS_WRITE = "status_write"
    RPMSG_FLAG = "rpmsg_flag"


# Row-state classes used by the kernels (small ints); unallocated space is
# lumped with the buffer class.
CLASS_NONE = -1
CLASS_RING = 0
CLASS_BUFFER = 1
CLASS_RPMSG = 2

_REGION_CLASS = {
    Region.RING: CLASS_RING,
    Region.BUFFER: CLASS_BUFFER,
    Region.UNALLOCATED: CLASS_BUFFER,
    Region.RPMSG: CLASS_RPMSG,
}


@dataclass(frozen=True)
class MemoryMap:
    """Reserved DDR aperture split into RPMsg, BD-ring and buffer regions."""

    aperture_base: int = 0x8000_0000
    aperture_end: int = 0x9FFF_FFFF  # inclusive
    rpmsg_bytes: int = RPMSG_BYTES
    ring_bytes: int = RING_BYTES
    buffer_bytes: int = BUFFER_BYTES

    def __post_init__(self):
        total = self.rpmsg_bytes + self.ring_bytes + self.buffer_bytes
        if min(self.rpmsg_bytes, self.ring_bytes, self.buffer_bytes) <= 0:
            raise ConfigInvalid("memory map regions must be non-empty")
        if total > self.aperture_bytes:
            raise ConfigInvalid("memory map regions exceed the aperture")

    @property
    def aperture_bytes(self) -> int:
        return self.aperture_end - self.aperture_base + 1

    @property
    def rpmsg_base(self) -> int:
        return self.aperture_base

    @property
    def ring_base(self) -> int:
        return self.rpmsg_base + self.rpmsg_bytes

    @property
    def buffer_base(self) -> int:
        return self.ring_base + self.ring_bytes

    @property
    def buffer_end(self) -> int:
        """One past the last buffer-region byte."""
        return self.buffer_base + self.buffer_bytes

    def bounds(self, region: Region) -> tuple[int, int]:
        """Half-open ``[start, end)`` byte range of ``region``."""
        if region is Region.RPMSG:
            return self.rpmsg_base, self.ring_base
        if region is Region.RING:
            return self.ring_base, self.buffer_base
        if region is Region.BUFFER:
            return self.buffer_base, self.buffer_end
        return self.buffer_end, self.aperture_end + 1

    def in_aperture(self, addr: int) -> bool:
        return self.aperture_base <= addr <= self.aperture_end

    def region_of(self, addr: int) -> Region:
        if not self.in_aperture(addr):
            raise OutOfAperture(f"address {addr:#x} is outside the DDR aperture")
        if addr < self.ring_base:
            return Region.RPMSG
        if addr < self.buffer_base:
            return Region.RING
        if addr < self.buffer_end:
            return Region.BUFFER
        return Region.UNALLOCATED

    def contains(self, region: Region, addr: int, length: int) -> bool:
        lo, hi = self.bounds(region)
        return lo <= addr and addr + length <= hi


class DdrTiming(NamedTuple):
    """Integer-picosecond view of a :class:`DdrConfig` used by the kernels."""

    base_ps: int
    switch_ps: int
    ctrl_num: int  # controller clock period = ctrl_num / ctrl_den ps
    ctrl_den: int
    bytes_per_clock: int
    period_ps: int
    stall_ps: int
    phase_ps: int

    def xfer_ps(self, n_clocks: int) -> int:
        return -((-n_clocks * self.ctrl_num) // self.ctrl_den)


@dataclass(frozen=True)
class DdrConfig:
    refresh_period_ns: float = 7800.0
    refresh_stall_ns: float = 210.0
    # Calibrated (see harness.calibrate); not measured values.
    base_access_ns: float = 80.0
    row_switch_penalty_ns: float = 40.0
    controller_clock_mhz: float = 300.0
    controller_width_bits: int = 512
    # Upper bound of the per-run backlog left by other AXI masters when the
    # engine issues its first descriptor fetch (calibrated).
    contention_max_ns: float = 453.333
    refresh_phase_ns: float = 0.0

    def __post_init__(self):
        for name in ("refresh_stall_ns", "base_access_ns", "row_switch_penalty_ns",
                     "contention_max_ns", "refresh_phase_ns"):
            if getattr(self, name) < 0:
                raise ConfigInvalid(f"{name} must be >= 0")
        if self.refresh_period_ns <= 0:
            raise ConfigInvalid("refresh_period_ns must be > 0")
        if self.refresh_stall_ns >= self.refresh_period_ns:
            raise ConfigInvalid("refresh_stall_ns must be shorter than the period")
        if self.refresh_phase_ns >= self.refresh_period_ns:
            raise ConfigInvalid("refresh_phase_ns must be < refresh_period_ns")
        if self.controller_clock_mhz <= 0:
            raise ConfigInvalid("controller_clock_mhz must be > 0")
        if self.controller_width_bits <= 0 or self.controller_width_bits % 8:
            raise ConfigInvalid("controller_width_bits must be a positive multiple of 8")

    @property
    def controller_period(self) -> Fraction:
        return clock_period(self.controller_clock_mhz)

    def timing(self) -> DdrTiming:
        period = self.controller_period
        return DdrTiming(
            base_ps=ns_to_ps(self.base_access_ns),
            switch_ps=ns_to_ps(self.row_switch_penalty_ns),
            ctrl_num=period.numerator,
            ctrl_den=period.denominator,
            bytes_per_clock=self.controller_width_bits // 8,
            period_ps=ns_to_ps(self.refresh_period_ns),
            stall_ps=ns_to_ps(self.refresh_stall_ns),
            phase_ps=ns_to_ps(self.refresh_phase_ns),
        )

    def transfer_time_ns(self, length: int) -> float:
        """Data-beat time beyond the first controller beat for ``length`` bytes."""
        t = self.timing()
        return ps_to_ns(t.xfer_ps(ceil_div(length, t.bytes_per_clock) - 1))

    def contention_clocks(self) -> int:
        """Largest backlog in whole controller clocks (values within 1e-3 clock round up)."""
        c = Fraction(str(self.contention_max_ns)) * 1000 / self.controller_period
        return math.floor(c + Fraction(1, 1000))

    def contention_ps(self, clocks: int) -> int:
        return cycles_to_ps(clocks, self.controller_period)


def windows_intersecting(t: DdrTiming, a: int, b: int) -> tuple[int, int]:
    """Index range ``[k_lo, k_hi]`` of refresh windows meeting ``[a, b)``.

    Windows are ``[phase + k*period, + stall)`` for ``k >= 0``.  The range is
    empty when ``k_hi < k_lo``.
    """
    if b <= a:
        return 0, -1
    k_lo = max((a - t.phase_ps - t.stall_ps) // t.period_ps + 1, 0)
    k_hi = (b - t.phase_ps - 1) // t.period_ps
    return k_lo, k_hi


def defer_past_refresh(t: DdrTiming, when: int) -> int:
    """Earliest service start at or after ``when`` that is not inside a window."""
    if when < t.phase_ps:
        return when
    r = (when - t.phase_ps) % t.period_ps
    return when + t.stall_ps - r if r < t.stall_ps else when


def charge_stalls(t: DdrTiming, start: int, nominal: int) -> int:
    """Refresh windows charged to a service interval that grows as it stalls."""
    n = 0
    while True:
        k_lo, k_hi = windows_intersecting(t, start, start + nominal + n * t.stall_ps)
        m = max(0, k_hi - k_lo + 1)
        if m == n:
            return n
        n = m


def refresh_schedule(config: DdrConfig, horizon_ns: float) -> list[tuple[float, float]]:
    """Refresh windows ``(start_ns, end_ns)`` whose start lies before the horizon."""
    if horizon_ns < 0:
        raise ValueError("horizon must be >= 0")
    t = config.timing()
    horizon = ns_to_ps(horizon_ns)
    out = []
    k = 0
    while True:
        start = t.phase_ps + k * t.period_ps
        if start >= horizon:
            return out
        out.append((ps_to_ns(start), ps_to_ns(start + t.stall_ps)))
        k += 1


@dataclass(frozen=True)
class MemAccess:
    addr: int
    length: int
    kind: AccessKind
    issue_time_ns: float

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("access length must be > 0")


@dataclass(frozen=True)
class Completion:
    start_ps: int
    finish_ps: int
    data_start_ps: int
    free_ps: int
    stall_events_ps: tuple[int, ...]

    @property
    def finish_time_ns(self) -> float:
        return ps_to_ns(self.finish_ps)

    @property
    def stall_events(self) -> list[float]:
        """Start times (ns) of the refresh windows charged to this access."""
        return [ps_to_ns(s) for s in self.stall_events_ps]


@dataclass
class DdrState:
    """Mutable DDR state owned by a single simulation run."""

    config: DdrConfig
    memory_map: MemoryMap = field(default_factory=MemoryMap)
    free_at_ps: int = 0
    last_class: int = CLASS_NONE

    def __post_init__(self):
        self._t = self.config.timing()

    def access_ps(self, addr: int, length: int, issue_ps: int) -> Completion:
        cls = _REGION_CLASS[self.memory_map.region_of(addr)]
        if not self.memory_map.in_aperture(addr + length - 1):
            raise OutOfAperture(f"access {addr:#x}+{length} runs past the aperture")
        t = self._t
        start = defer_past_refresh(t, max(issue_ps, self.free_at_ps))
        sw = t.switch_ps if self.last_class not in (CLASS_NONE, cls) else 0
        nclk = ceil_div(length, t.bytes_per_clock)
        lat = t.base_ps + sw + t.xfer_ps(nclk - 1)
        n_lat = charge_stalls(t, start, lat)
        finish = start + lat + n_lat * t.stall_ps
        occ = sw + t.xfer_ps(nclk)
        n_occ = charge_stalls(t, start, occ)
        self.free_at_ps = start + occ + n_occ * t.stall_ps
        self.last_class = cls
        k_lo, k_hi = windows_intersecting(t, start, finish)
        events = tuple(t.phase_ps + k * t.period_ps for k in range(k_lo, k_hi + 1))
        return Completion(start, finish, start + t.base_ps + sw + n_lat * t.stall_ps,
                          self.free_at_ps, events)

    def access(self, req: MemAccess) -> Completion:
        return self.access_ps(req.addr, req.length, ns_to_ps(req.issue_time_ns))


def access(state: DdrState, req: MemAccess) -> Completion:
    return state.access(req)
