"""System configuration: one YAML file for every module, plus ``key=value`` overrides.

Schema (all sections and keys optional; unknown keys are rejected)::

    ddr:       refresh_period_ns, refresh_stall_ns, base_access_ns,
               row_switch_penalty_ns, controller_clock_mhz,
               controller_width_bits, contention_max_ns, refresh_phase_ns
    bus:       data_width_bits, pl_clock_mhz
    engine:    pipeline_overlap, fifo_depth_beats, per_bd_cycles, startup_cycles
    cpu:       apu / rpu: per_bd_base_ns, stall_model [[p, ns], ...], stall_scope
    handshake: gpio_per_hop_ns, rpmsg_per_hop_ns
    sweep:     bytes_per_bd, n_bds, n_cycles, placement, trials_per_point,
               base_seed, requirement_MBps, creation_trials, creation_n_bds,
               histogram_n_bds

Overrides use dotted paths, e.g. ``ddr.base_access_ns=90`` or
``sweep.n_bds=[4,1024]``; values are parsed as YAML scalars or lists.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import yaml

from .engine import EngineConfig
from .errors import ConfigInvalid
from .fabric import BusConfig
from .memmodel import DdrConfig
from .psmodel import (CpuKind, CpuModel, PsConfig, StallScope, apu_model, gpio_handshake,
                      rpmsg_handshake, rpu_model)

POW2_BYTES = tuple(2**k for k in range(5, 14))
POW2_COUNTS = tuple(2**k for k in range(1, 14))
PLACEMENTS = ("sequential", "random", "both")


@dataclass(frozen=True)
class SweepSpec:
    bytes_per_bd: tuple[int, ...] = POW2_BYTES
    n_bds: tuple[int, ...] = POW2_COUNTS
    n_cycles: tuple[int, ...] = POW2_COUNTS
    placement: str = "both"
    trials_per_point: int = 100
    base_seed: int = 0
    requirement_MBps: float = 32.0
    creation_trials: int = 100_000
    creation_n_bds: tuple[int, ...] = (1, 16, 256, 4096)
    histogram_n_bds: int = 1

    def __post_init__(self):
        for name in ("bytes_per_bd", "n_bds", "n_cycles", "creation_n_bds"):
            vals = getattr(self, name)
            if not vals:
                raise ConfigInvalid(f"sweep.{name} must be non-empty")
            if any(int(v) != v or v < 1 for v in vals):
                raise ConfigInvalid(f"sweep.{name} entries must be positive integers")
            object.__setattr__(self, name, tuple(int(v) for v in vals))
        if self.placement not in PLACEMENTS:
            raise ConfigInvalid(f"sweep.placement must be one of {PLACEMENTS}")
        if self.histogram_n_bds < 1:
            raise ConfigInvalid("sweep.histogram_n_bds must be >= 1")
        if self.trials_per_point < 1 or self.creation_trials < 1:
            raise ConfigInvalid("trial counts must be >= 1")
        if self.requirement_MBps <= 0:
            raise ConfigInvalid("sweep.requirement_MBps must be > 0")

    @property
    def placements(self) -> tuple[str, ...]:
        return ("sequential", "random") if self.placement == "both" else (self.placement,)


@dataclass(frozen=True)
class SystemConfig:
    ddr: DdrConfig = field(default_factory=DdrConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    ps: PsConfig = field(default_factory=PsConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    @property
    def bus(self) -> BusConfig:
        return self.engine.bus

    def to_dict(self) -> dict[str, Any]:
        def cpu(m: CpuModel) -> dict:
            return {"per_bd_base_ns": m.per_bd_base_ns,
                    "stall_model": [[float(p), float(s)] for p, s in m.stall_model],
                    "stall_scope": m.stall_scope.value}
        eng = dataclasses.asdict(self.engine)
        bus = eng.pop("bus")
        sweep = {k: list(v) if isinstance(v, tuple) else v
                 for k, v in dataclasses.asdict(self.sweep).items()}
        return {
            "ddr": dataclasses.asdict(self.ddr),
            "bus": bus,
            "engine": eng,
            "cpu": {"apu": cpu(self.ps.apu), "rpu": cpu(self.ps.rpu)},
            "handshake": {"gpio_per_hop_ns": self.ps.gpio.per_hop_ns,
                          "rpmsg_per_hop_ns": self.ps.rpmsg.per_hop_ns},
            "sweep": sweep,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _defaults() -> dict[str, Any]:
    return SystemConfig().to_dict()


def _merge(base: dict, update: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in update.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigInvalid(f"unknown config key '{where}'")
        if isinstance(out[key], dict):
            if not isinstance(val, dict):
                raise ConfigInvalid(f"'{where}' must be a mapping")
            out[key] = _merge(out[key], val, where + ".")
        else:
            out[key] = val
    return out


def parse_override(text: str) -> dict[str, Any]:
    """``a.b.c=v`` -> ``{"a": {"b": {"c": v}}}``."""
    if "=" not in text:
        raise ConfigInvalid(f"override '{text}' is not key=value")
    key, raw = text.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigInvalid(f"bad override key '{key}'")
    try:
        val = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"cannot parse override value '{raw}': {exc}") from exc
    out: dict[str, Any] = {parts[-1]: val}
    for p in reversed(parts[:-1]):
        out = {p: out}
    return out


def _cpu(kind: CpuKind, d: dict, seed: int) -> CpuModel:
    make = apu_model if kind is CpuKind.APU else rpu_model
    try:
        model = tuple((float(p), float(s)) for p, s in d["stall_model"])
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"cpu.{kind.value.lower()}.stall_model must be [[p, ns], ...]") from exc
    return make(seed, per_bd_base_ns=float(d["per_bd_base_ns"]), stall_model=model,
                stall_scope=StallScope(d["stall_scope"]))


def from_dict(d: dict[str, Any]) -> SystemConfig:
    merged = _merge(_defaults(), d or {})
    try:
        sweep = SweepSpec(**{k: tuple(v) if isinstance(v, list) else v
                             for k, v in merged["sweep"].items()})
        seed = sweep.base_seed
        return SystemConfig(
            ddr=DdrConfig(**merged["ddr"]),
            engine=EngineConfig(bus=BusConfig(**merged["bus"]), **merged["engine"]),
            ps=PsConfig(apu=_cpu(CpuKind.APU, merged["cpu"]["apu"], seed),
                        rpu=_cpu(CpuKind.RPU, merged["cpu"]["rpu"], seed),
                        gpio=gpio_handshake(float(merged["handshake"]["gpio_per_hop_ns"])),
                        rpmsg=rpmsg_handshake(float(merged["handshake"]["rpmsg_per_hop_ns"]))),
            sweep=sweep,
        )
    except ConfigInvalid:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> SystemConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config '{path}': {exc}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"config '{path}' is not valid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigInvalid("config root must be a mapping")
    for ov in overrides:
        data = _merge_user(data, parse_override(ov))
    return from_dict(data)


def _merge_user(base: dict, update: dict) -> dict:
    out = dict(base)
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge_user(out[k], v)
        else:
            out[k] = v
    return out
