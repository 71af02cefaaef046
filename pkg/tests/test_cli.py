import json
import struct

import pytest
import yaml

from sgdma_sim.bdring import BD_BYTES, Placement, RingSpec, create_ring, serialize_ring
from sgdma_sim.cli import EXIT_ARGS, EXIT_CHECK, EXIT_IO, EXIT_OK, main
from sgdma_sim.config import load_config

TINY = ["--set", "sweep.bytes_per_bd=[32, 4096]", "--set", "sweep.n_bds=[2, 8]",
        "--set", "sweep.n_cycles=[1]", "--set", "sweep.creation_n_bds=[1, 4]",
        "--set", "sweep.creation_trials=50", "--trials", "5"]


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _error(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def swept(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    assert main(["sweep", "--out", str(out), "--threads", "1", *TINY]) == EXIT_OK
    return out


class TestSweepAndPlot:
    def test_outputs(self, swept):
        for name in ("results.csv", "creation_samples.csv", "requirement.txt",
                     "effective_config.yaml"):
            assert (swept / name).is_file()
        assert (swept / "requirement.txt").read_text().startswith("PASS")
        eff = load_config(swept / "effective_config.yaml")
        assert eff.sweep.trials_per_point == 5 and eff.sweep.n_bds == (2, 8)
        assert len((swept / "results.csv").read_text().splitlines()) == 1 + 2 * 2 * 2

    @pytest.mark.parametrize("fmt", ["png", "svg"])
    def test_plot(self, swept, capsys, tmp_path, fmt):
        code, out, _ = _run(capsys, "plot", "--out", str(tmp_path), "--plot-format", fmt,
                            "--results", str(swept / "results.csv"),
                            "--creation", str(swept / "creation_samples.csv"))
        assert code == EXIT_OK
        names = sorted(p.split("/")[-1] for p in json.loads(out)["images"])
        assert names == sorted(f"{n}.{fmt}" for n in ("throughput", "latency", "creation_hist"))

    def test_requirement_from_csv(self, swept, capsys, tmp_path):
        code, out, _ = _run(capsys, "requirement-check", "--out", str(tmp_path),
                            "--results", str(swept / "results.csv"))
        assert code == EXIT_OK and json.loads(out)["passed"]

    def test_requirement_failure(self, swept, capsys, tmp_path):
        code, _, err = _run(capsys, "requirement-check", "--out", str(tmp_path),
                            "--results", str(swept / "results.csv"),
                            "--set", "sweep.requirement_MBps=1000000000.0")
        assert code == EXIT_CHECK
        e = _error(err)
        assert e["error"] == "CheckFailed" and e["failing_points"] == 8


class TestTrace:
    def test_trace(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "trace", "--out", str(tmp_path), "--bytes-per-bd", "64",
                            "--n-bds", "4", "--n-cycles", "2", "--beats")
        assert code == EXIT_OK
        s = json.loads(out)
        assert (tmp_path / "trace.csv").is_file()
        assert s["transactions"]["bd_fetches"] == 8
        assert s["csm"]["throughput_cycles"] >= 8 * 64 // 32
        assert 700 < s["latency_ns"] < 1700

    def test_trace_matches_across_calls(self, capsys, tmp_path):
        a = _run(capsys, "trace", "--out", str(tmp_path / "a"), "--trial", "3")[1]
        b = _run(capsys, "trace", "--out", str(tmp_path / "b"), "--trial", "3")[1]
        strip = lambda s: {k: v for k, v in json.loads(s).items() if k != "trace"}
        assert strip(a) == strip(b)


class TestRingCheck:
    @pytest.fixture
    def image(self, tmp_path):
        img = serialize_ring(create_ring(RingSpec(4, 128, Placement.SEQUENTIAL, 0)))
        path = tmp_path / "r.bdring"
        path.write_bytes(img)
        return path, img

    def test_ok(self, capsys, tmp_path, image):
        code, out, _ = _run(capsys, "ring-check", str(image[0]), "--out", str(tmp_path))
        assert code == EXIT_OK
        assert json.loads(out) == {"image": str(image[0]), "n_bds": 4, "payload_bytes": 512,
                                   "status": "ok"}

    def test_broken_link(self, capsys, tmp_path, image):
        path, img = image
        buf = bytearray(img)
        first_next = struct.unpack_from("<Q", buf, 0)[0]
        struct.pack_into("<Q", buf, 3 * BD_BYTES, first_next)  # last BD skips BD 0
        path.write_bytes(bytes(buf))
        code, _, err = _run(capsys, "ring-check", str(path), "--out", str(tmp_path))
        assert code == EXIT_CHECK
        assert [v["code"] for v in _error(err)["violations"]] == ["RingNotClosed"]

    def test_truncated(self, capsys, tmp_path, image):
        path, img = image
        path.write_bytes(img[:100])
        code, _, err = _run(capsys, "ring-check", str(path), "--out", str(tmp_path))
        assert code == EXIT_CHECK
        assert _error(err)["violations"][0]["code"] == "MalformedImage"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = _run(capsys, "ring-check", str(tmp_path / "none.bdring"),
                            "--out", str(tmp_path))
        assert code == EXIT_IO and _error(err)["error"] == "IoError"


class TestCalibrateVerb:
    def test_quick(self, capsys, tmp_path):
        code, out, _ = _run(capsys, "calibrate", "--quick", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert json.loads(out)["max_residual"] < 0.01
        fitted = yaml.safe_load((tmp_path / "calibrated_config.yaml").read_text())
        assert fitted["engine"]["per_bd_cycles"] == load_config().engine.per_bd_cycles
        assert "residual" in (tmp_path / "calibration.txt").read_text()


class TestErrors:
    @pytest.mark.parametrize("argv", [
        [], ["frobnicate"], ["sweep", "--trials", "many"], ["trace", "--placement", "spiral"],
    ])
    def test_bad_args(self, capsys, argv):
        code, _, err = _run(capsys, *argv)
        assert code == EXIT_ARGS and _error(err)["error"] == "BadArgs"

    def test_invalid_config(self, capsys, tmp_path):
        code, _, err = _run(capsys, "trace", "--out", str(tmp_path), "--set", "ddr.warp=9")
        assert code == EXIT_ARGS and _error(err)["error"] == "ConfigInvalid"

    def test_missing_config_file(self, capsys, tmp_path):
        code, _, err = _run(capsys, "trace", "--out", str(tmp_path),
                            "--config", str(tmp_path / "x.yaml"))
        assert code == EXIT_ARGS and "message" in _error(err)

    def test_unwritable_out(self, capsys, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code, _, err = _run(capsys, "trace", "--out", str(blocker / "sub"))
        assert code == EXIT_IO
