"""
Command-line entry point.

Exit codes: 0 success, 1 a verification check failed, 2 configuration
error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, NumericalError
from ..properties import verify_suite
from .config import RunConfig, build_scenario, load_config, serialize_config
from .output import DiagnosticsWriter, snapshot_of, write_table
from .sweeps import sweep_epsilon, sweep_incompressible_limit

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("eulerkv")


def _output_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override if override is not None else cfg.output.directory)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise ConfigError(f"cannot create output directory {out}: {err}") from None
    return out


def run_scenario(cfg: RunConfig, output_dir: str | None = None) -> Path:
    """
    Run ``cfg`` writing ``diagnostics.csv``, ``snapshot_NNNNN.bin`` files and
    the echoed ``config.toml`` into the output directory.  Snapshots are taken
    every ``snapshot_stride`` samples (0: first and last only).
    """
    from ..dynamics import run, solver_for

    scn = build_scenario(cfg)
    out = _output_dir(cfg, output_dir)
    (out / "config.toml").write_text(serialize_config(cfg), encoding="utf-8")
    solver = solver_for(scn)
    stride = cfg.output.snapshot_stride
    count = {"samples": 0, "snaps": 0, "last": None}

    def snap(state):
        snapshot_of(state, solver).write(out / f"snapshot_{count['snaps']:05d}.bin")
        count["snaps"] += 1
        count["last"] = state.t

    with DiagnosticsWriter(out / "diagnostics.csv", solver) as diag:
        def on_sample(state, led):
            diag(state, led)
            if count["samples"] == 0 or (stride and count["samples"] % stride == 0):
                snap(state)
            count["samples"] += 1

        traj = run(scn, callbacks=[on_sample], sample_stride=cfg.output.sample_stride, keep_states=False)
    if count["last"] != traj.final.t:
        snap(traj.final)
    return out


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = run_scenario(cfg, args.output_dir)
    print(f"wrote {out / 'diagnostics.csv'}")
    return EXIT_OK


def _sweep_values(args, cfg: RunConfig) -> list[float]:
    values = args.values if args.values else list(cfg.experiment.values)
    if not values:
        raise ConfigError("no sweep values: pass --values or set experiment.values")
    return [float(v) for v in values]


def _cmd_sweep_k(args) -> int:
    cfg = load_config(args.config)
    mode = args.mode or cfg.experiment.mode
    scn = build_scenario(cfg)
    out = _output_dir(cfg, args.output_dir)
    res = sweep_incompressible_limit(scn, _sweep_values(args, cfg), mode=mode,
                                     progress=lambda r: print(f"K={r[0]:.6g} div_v_l2={r[1]:.6e}"))
    write_table(out / f"sweep_k_{mode}.csv", res.header, res.rows)
    print(f"log-log slope: {res.slope:.4f}")
    return EXIT_OK


def _cmd_sweep_eps(args) -> int:
    cfg = load_config(args.config)
    scn = build_scenario(cfg)
    out = _output_dir(cfg, args.output_dir)
    values = sorted(set(_sweep_values(args, cfg)) | {0.0}, reverse=True)
    res = sweep_epsilon(scn, values, progress=lambda r: print(f"epsilon={r[0]:.6g} F_distance={r[1]:.6e}"))
    write_table(out / "sweep_eps.csv", res.header, res.rows)
    if res.verdict is not None:
        print("distances strictly decreasing" if res.verdict else "distances NOT strictly decreasing")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    scn = build_scenario(cfg)
    results = verify_suite(scn, seed=args.seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default=None, help="overrides output.directory")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="eulerkv", description="Eulerian Kelvin-Voigt solver")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one scenario")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)
    p = sub.add_parser("sweep-k", parents=[common], help="incompressible-limit sweep")
    p.add_argument("config")
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--mode", choices=("viscous", "elastic"))
    p.set_defaults(func=_cmd_sweep_k)
    p = sub.add_parser("sweep-eps", parents=[common], help="transport-regularization sweep")
    p.add_argument("config")
    p.add_argument("--values", type=float, nargs="+")
    p.set_defaults(func=_cmd_sweep_eps)
    p = sub.add_parser("verify", parents=[common], help="structural property checks")
    p.add_argument("config")
    p.set_defaults(func=_cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
