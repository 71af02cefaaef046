"""Command-line entry point: ``sgdma-sim VERB [options]``.

Verbs: sweep, trace, calibrate, ring-check, plot, requirement-check.  Every
run writes ``effective_config.yaml`` to the output directory and logs it.
Failures print one JSON object on stderr and exit nonzero:

====  ==============================================
 2    bad arguments or invalid configuration
 3    check failed (ring-check, requirement-check)
 4    I/O error
 1    any other simulator error
====  ==============================================
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import kernels
from .bdring import Placement, RingSpec, create_ring, read_ring_image, validate_ring
from .config import SystemConfig, load_config
from .csm import run_csm, scenario_from_trace
from .engine import count_ddr_transactions, run_mm2s
from .errors import BadArgs, ConfigInvalid, InvalidRing, SimError
from .harness import (CalibrationGrid, calibrate, creation_samples, read_result_csv,
                      requirement_check, result_from_csv, run_sweep, trial_conditions, trial_seed,
                      write_creation_csv)
from .memmodel import DdrState
from .plotting import FORMATS, plot_creation_hist, plot_latency, plot_throughput, read_creation_csv
from .psmodel import handshake_latency
from .units import ns_to_ps

log = logging.getLogger("sgdma_sim")

EXIT_OK, EXIT_ERROR, EXIT_ARGS, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise BadArgs(message)


class CheckFailed(SimError):
    code = "CheckFailed"

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.detail = detail or {}


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML config file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="K=V",
                   help="config override, e.g. ddr.base_access_ns=90 (repeatable)")
    p.add_argument("--trials", type=int, help="trials per sweep point")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--plot-format", choices=FORMATS, default="png")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="sgdma-sim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", parents=[common], help="run the parameter sweep")
    s.add_argument("--threads", type=int, help="worker processes (capped by SGDMA_SIM_THREADS)")

    t = sub.add_parser("trace", parents=[common], help="simulate one run and export its trace")
    t.add_argument("--bytes-per-bd", type=int, default=32)
    t.add_argument("--n-bds", type=int, default=4)
    t.add_argument("--n-cycles", type=int, default=1)
    t.add_argument("--placement", choices=[p.value for p in Placement], default="sequential")
    t.add_argument("--trial", type=int, default=0, help="trial index (selects the seed)")
    t.add_argument("--beats", action="store_true", help="include every stream beat")

    c = sub.add_parser("calibrate", parents=[common], help="fit the free timing parameters")
    c.add_argument("--quick", action="store_true", help="small grid around the defaults")

    r = sub.add_parser("ring-check", parents=[common], help="validate a .bdring image")
    r.add_argument("image", type=Path)
    r.add_argument("--bd-base", type=lambda x: int(x, 0), help="ring base address")

    pl = sub.add_parser("plot", parents=[common], help="render figures from CSV results")
    pl.add_argument("--results", type=Path, help="sweep CSV (default OUT/results.csv)")
    pl.add_argument("--creation", type=Path, help="creation samples CSV")

    q = sub.add_parser("requirement-check", parents=[common], help="gate-rate requirement")
    q.add_argument("--results", type=Path, help="existing sweep CSV (else a sweep is run)")
    return parser


def _effective_config(args) -> SystemConfig:
    overrides = list(args.overrides)
    if args.trials is not None:
        overrides.append(f"sweep.trials_per_point={args.trials}")
    if args.seed is not None:
        overrides.append(f"sweep.base_seed={args.seed}")
    return load_config(args.config, overrides)


def _log_config(cfg: SystemConfig, out: Path, verb: str) -> None:
    text = cfg.to_yaml()
    (out / "effective_config.yaml").write_text(text)
    log.info("%s: kernel backend %s; effective config:\n%s", verb, kernels.BACKEND, text)


def cmd_sweep(args, cfg: SystemConfig) -> dict:
    t0 = time.perf_counter()
    result = run_sweep(cfg.sweep, cfg, threads=args.threads)
    res_path = result.write_csv(args.out / "results.csv")
    cr_path = write_creation_csv(creation_samples(cfg), args.out / "creation_samples.csv")
    rep = requirement_check(result)
    (args.out / "requirement.txt").write_text(rep.text() + "\n")
    return {"results": str(res_path), "creation_samples": str(cr_path), "rows": len(result),
            "requirement": rep.text(), "seconds": round(time.perf_counter() - t0, 2)}


def cmd_trace(args, cfg: SystemConfig) -> dict:
    spec = RingSpec(args.n_bds, args.bytes_per_bd, Placement(args.placement),
                    cfg.sweep.base_seed, args.n_cycles)
    ring = create_ring(spec)
    seed = trial_seed(cfg.sweep.base_seed, args.bytes_per_bd, args.n_bds * args.n_cycles,
                      args.trial)
    phase, backlog = trial_conditions(seed, cfg.ddr)
    ddr_cfg = dataclasses.replace(cfg.ddr, refresh_phase_ns=phase / 1000)
    # RPU side: start request over GPIO, then the tail write one hop later.
    start_ns = handshake_latency(cfg.ps.gpio, DdrState(ddr_cfg), 0.0)
    tail_ns = start_ns + cfg.ps.gpio.per_hop_ns
    trace = run_mm2s(ring, cfg.engine, DdrState(ddr_cfg), tail_ns, ddr_cfg.contention_ps(backlog))
    path = trace.to_csv(args.out / "trace.csv", include_beats=args.beats)
    counters = run_csm(scenario_from_trace(trace, 0, ns_to_ps(start_ns)))
    return {
        "trace": str(path), "seed": seed, "refresh_phase_ns": phase / 1000,
        "latency_ns": trace.latency_ns, "throughput_MBps": trace.throughput_MBps,
        "transactions": count_ddr_transactions(trace),
        "csm": {"setup_cycles": counters.setup_cycles, "latency_cycles": counters.latency_cycles,
                "throughput_cycles": counters.throughput_cycles},
    }


def cmd_calibrate(args, cfg: SystemConfig) -> dict:
    grid = None
    if args.quick:
        d, e = cfg.ddr, cfg.engine
        grid = CalibrationGrid((d.base_access_ns,), (d.row_switch_penalty_ns,),
                               tuple(sorted({max(0, e.per_bd_cycles + k) for k in (-4, 0, 4)})))
    res = calibrate(base=cfg, grid=grid)
    fitted = dataclasses.replace(cfg, ddr=res.ddr, engine=res.engine)
    (args.out / "calibration.txt").write_text(res.report() + "\n")
    (args.out / "calibrated_config.yaml").write_text(fitted.to_yaml())
    return {"report": str(args.out / "calibration.txt"), "max_residual": res.max_residual,
            "residuals": res.residuals}


def cmd_ring_check(args, cfg: SystemConfig) -> dict:
    try:
        ring = read_ring_image(args.image, args.bd_base)
    except InvalidRing as exc:
        raise CheckFailed("ring image is malformed",
                          {"violations": [{"code": "MalformedImage", "bd_index": None,
                                           "message": exc.message}]}) from exc
    report = validate_ring(ring)
    if not report.ok:
        raise CheckFailed("ring image fails validation", {
            "violations": [{"code": v.code, "bd_index": v.bd_index, "message": v.message}
                           for v in report]})
    return {"image": str(args.image), "n_bds": len(ring), "payload_bytes": ring.payload_bytes,
            "status": "ok"}


def cmd_plot(args, cfg: SystemConfig) -> dict:
    res = args.results or args.out / "results.csv"
    rows = read_result_csv(res)
    if not rows:
        raise ConfigInvalid(f"no rows in {res}")
    fmt = args.plot_format
    ceiling = cfg.bus.max_bandwidth_bytes_per_s / 1e6
    out = [plot_throughput(rows, args.out / f"throughput.{fmt}", ceiling),
           plot_latency(rows, args.out / f"latency.{fmt}")]
    creation = args.creation or args.out / "creation_samples.csv"
    if creation.exists():
        out.append(plot_creation_hist(read_creation_csv(creation),
                                      args.out / f"creation_hist.{fmt}",
                                      cfg.sweep.histogram_n_bds))
    return {"images": [str(p) for p in out]}


def cmd_requirement(args, cfg: SystemConfig) -> dict:
    if args.results:
        result = result_from_csv(args.results)
    else:
        result = run_sweep(cfg.sweep, cfg)
    rep = requirement_check(result, cfg.sweep.requirement_MBps)
    if not rep.passed:
        raise CheckFailed(rep.text(), {"failing_points": rep.failing_points})
    return {"passed": True, "worst_MBps": rep.worst_MBps, "margin": rep.margin}


COMMANDS = {
    "sweep": cmd_sweep, "trace": cmd_trace, "calibrate": cmd_calibrate,
    "ring-check": cmd_ring_check, "plot": cmd_plot, "requirement-check": cmd_requirement,
}


def _fail(code: str, message: str, status: int, **extra) -> int:
    print(json.dumps({"error": code, "message": message, **extra}), file=sys.stderr)
    return status


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except BadArgs as exc:
        return _fail(exc.code, exc.message, EXIT_ARGS)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _effective_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        _log_config(cfg, args.out, args.verb)
        summary = COMMANDS[args.verb](args, cfg)
    except CheckFailed as exc:
        return _fail(exc.code, exc.message, EXIT_CHECK, **exc.detail)
    except (BadArgs, ConfigInvalid) as exc:
        return _fail(exc.code, exc.message, EXIT_ARGS)
    except SimError as exc:
        return _fail(exc.code, exc.message, EXIT_ERROR)
    except OSError as exc:
        return _fail("IoError", str(exc), EXIT_IO)
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
