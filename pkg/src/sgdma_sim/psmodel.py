"""Processor-side models: BD-ring creation time and inter-processor handshakes.

Ring creation is a fixed cost per descriptor plus stalls drawn from a small
discrete mixture.  The application processor (APU) is fast but suffers rare,
long OS stalls; the real-time processor (RPU) is slower and steady.  All
defaults are calibration choices, not measurements.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .memmodel import DdrState
from .units import ns_to_ps, ps_to_ns

RPMSG_FLAG_BYTES = 4


class CpuKind(str, enum.Enum):
    APU = "APU"
    RPU = "RPU"


class StallScope(str, enum.Enum):
    PER_BD = "bd"
    PER_RUN = "run"


APU_STALLS = ((0.90, 0.0), (0.07, 100.0), (0.025, 2000.0), (0.004, 9000.0), (0.001, 32000.0))
RPU_STALLS = ((0.98, 0.0), (0.02, 20.0))


@dataclass(frozen=True)
class CpuModel:
    kind: CpuKind = CpuKind.APU
    per_bd_base_ns: float = 120.0
    stall_model: tuple[tuple[float, float], ...] = APU_STALLS
    rng_seed: int = 0
    stall_scope: StallScope = StallScope.PER_BD

    def __post_init__(self):
        probs = [p for p, _ in self.stall_model]
        if not self.stall_model or any(p < 0 for p in probs):
            raise ConfigInvalid("stall_model needs non-negative probabilities")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigInvalid("stall_model probabilities must sum to 1")
        if self.per_bd_base_ns < 0 or any(s < 0 for _, s in self.stall_model):
            raise ConfigInvalid("durations must be >= 0")

    @property
    def probabilities(self) -> np.ndarray:
        p = np.array([p for p, _ in self.stall_model], dtype=float)
        return p / p.sum()

    @property
    def stall_values_ns(self) -> np.ndarray:
        return np.array([s for _, s in self.stall_model], dtype=float)

    @property
    def best_case_ns(self) -> float:
        """Per-BD time when no stall is drawn (or the smallest stall is)."""
        return self.per_bd_base_ns + float(self.stall_values_ns.min())


def apu_model(seed: int = 0, **kw) -> CpuModel:
    return CpuModel(CpuKind.APU, kw.pop("per_bd_base_ns", 120.0),
                    kw.pop("stall_model", APU_STALLS), seed, **kw)


def rpu_model(seed: int = 0, **kw) -> CpuModel:
    # Seven times the APU best case, the middle of the measured speedup range.
    return CpuModel(CpuKind.RPU, kw.pop("per_bd_base_ns", 840.0),
                    kw.pop("stall_model", RPU_STALLS), seed, **kw)


def simulate_ring_creation(cpu: CpuModel, n_bds: int, trials: int,
                           rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-BD creation time (ns) for each of ``trials`` rings of ``n_bds`` BDs."""
    if n_bds < 1 or trials < 1:
        raise ValueError("n_bds and trials must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(cpu.rng_seed)
    draws_per_trial = n_bds if cpu.stall_scope is StallScope.PER_BD else 1
    counts = rng.multinomial(draws_per_trial, cpu.probabilities, size=trials)
    stalls = counts @ cpu.stall_values_ns
    return (n_bds * cpu.per_bd_base_ns + stalls) / n_bds


class Mechanism(str, enum.Enum):
    RPMSG = "RPMsg"
    GPIO = "GPIO"


@dataclass(frozen=True)
class HandshakeModel:
    mechanism: Mechanism = Mechanism.GPIO
    per_hop_ns: float = 150.0

    def __post_init__(self):
        if self.per_hop_ns <= 0:
            raise ConfigInvalid("per_hop_ns must be > 0")

    @property
    def ddr_coupled(self) -> bool:
        return self.mechanism is Mechanism.RPMSG


def gpio_handshake(per_hop_ns: float = 150.0) -> HandshakeModel:
    return HandshakeModel(Mechanism.GPIO, per_hop_ns)


def rpmsg_handshake(per_hop_ns: float = 100.0) -> HandshakeModel:
    return HandshakeModel(Mechanism.RPMSG, per_hop_ns)


def handshake_latency(model: HandshakeModel, ddr: DdrState, t0_ns: float) -> float:
    """Duration (ns) of a flag write followed by the acknowledging poll."""
    hop = ns_to_ps(model.per_hop_ns)
    if not model.ddr_coupled:
        return ps_to_ns(2 * hop)
    t0 = ns_to_ps(t0_ns)
    flag = ddr.memory_map.rpmsg_base
    t = t0
    for _ in range(2):
        t = ddr.access_ps(flag, RPMSG_FLAG_BYTES, t + hop).finish_ps
    return ps_to_ns(t - t0)


@dataclass(frozen=True)
class PsConfig:
    apu: CpuModel = field(default_factory=apu_model)
    rpu: CpuModel = field(default_factory=rpu_model)
    gpio: HandshakeModel = field(default_factory=gpio_handshake)
    rpmsg: HandshakeModel = field(default_factory=rpmsg_handshake)
