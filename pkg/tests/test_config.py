from pathlib import Path

import pytest
import yaml

from sgdma_sim.config import SweepSpec, SystemConfig, from_dict, load_config, parse_override
from sgdma_sim.errors import ConfigInvalid
from sgdma_sim.psmodel import StallScope

ROOT = Path(__file__).resolve().parents[1]


class TestLoad:
    def test_defaults(self):
        assert load_config() == SystemConfig()

    def test_shipped_default_file_matches_code(self):
        assert load_config(ROOT / "configs" / "default.yaml") == SystemConfig()

    def test_yaml_round_trip(self, tmp_path):
        cfg = load_config(overrides=["ddr.base_access_ns=95", "sweep.n_bds=[4, 1024]",
                                     "cpu.apu.stall_scope=run"])
        p = tmp_path / "c.yaml"
        p.write_text(cfg.to_yaml())
        assert load_config(p) == cfg
        assert cfg.ps.apu.stall_scope is StallScope.PER_RUN

    def test_file_then_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("engine:\n  per_bd_cycles: 3\nsweep:\n  trials_per_point: 7\n")
        cfg = load_config(p, ["sweep.trials_per_point=9"])
        assert cfg.engine.per_bd_cycles == 3
        assert cfg.sweep.trials_per_point == 9
        assert cfg.sweep.n_bds == SweepSpec().n_bds

    @pytest.mark.parametrize("text", ["- 1\n- 2\n", "ddr: [1,\n"])
    def test_bad_file(self, tmp_path, text):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(ConfigInvalid):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigInvalid):
            load_config(tmp_path / "nope.yaml")


class TestValidation:
    @pytest.mark.parametrize("override", [
        "ddr.nope=1", "nope.x=1", "sweep.n_bds=[]", "sweep.placement=diagonal",
        "sweep.trials_per_point=0", "bus.data_width_bits=100", "engine.fifo_depth_beats=0",
        "cpu.apu.stall_model=[[0.5, 0]]", "handshake.gpio_per_hop_ns=0", "ddr.base_access_ns=fast",
        "ddr=3", "sweep.bytes_per_bd=[0]",
    ])
    def test_rejected(self, override):
        with pytest.raises(ConfigInvalid):
            load_config(overrides=[override])

    @pytest.mark.parametrize("text", ["noequals", "=3", "a..b=1"])
    def test_bad_override_syntax(self, text):
        with pytest.raises(ConfigInvalid):
            parse_override(text)

    def test_override_parsing(self):
        assert parse_override("a.b.c=[1, 2]") == {"a": {"b": {"c": [1, 2]}}}
        assert parse_override("x=2.5") == {"x": 2.5}

    def test_placements(self):
        assert SweepSpec(placement="both").placements == ("sequential", "random")
        assert SweepSpec(placement="random").placements == ("random",)

    def test_to_dict_is_plain_yaml(self):
        d = yaml.safe_load(SystemConfig().to_yaml())
        assert set(d) == {"ddr", "bus", "engine", "cpu", "handshake", "sweep"}
        assert from_dict(d) == SystemConfig()
