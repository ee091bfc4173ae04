"""Command-line entry point.

    ladderlab denoise1d|ica|variance|gradcheck [--config F] [--seed N] [--out DIR]
                                               [--set key=value ...] [--assert] [--force]
    ladderlab show-trace TRACE.jsonl [--every N]

Exit codes: 0 success, 2 configuration error, 3 numeric abort, 4 failed
acceptance threshold (only with ``--assert``).
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import CSV_FMT
from .errors import ConfigError, NumericAbort, NumericError, SingularityError
from .experiments import EXPERIMENTS, RUNNERS, load_config
from .model import save_checkpoint
from .optim import TrainTrace

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4
OUT_ENV = "LADDERLAB_OUT"

log = logging.getLogger("ladderlab")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def output_dir(args, cfg):
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / f"{cfg['experiment']}-seed{cfg['seed']}"


def planned_files(result):
    files = ["config.json", "metrics.json"]
    files += [f"{stem}.csv" for stem in result.tables]
    files += [f"{stem}.jsonl" for stem in result.traces]
    files += [f"{stem}.json" for stem in result.checkpoints]
    return files


def write_result(result, out, force=False):
    """Write every artifact of ``result`` into ``out``; refuse to overwrite unless ``force``."""
    out = Path(out)
    existing = [f for f in planned_files(result) if (out / f).exists()]
    if existing and not force:
        raise ConfigError(f"{out} already holds {', '.join(existing)}; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_json(result.config))
    metrics = {
        "experiment": result.experiment,
        "seed": result.config["seed"],
        "metrics": result.metrics,
        "checks": [c.to_dict() for c in result.checks],
        "passed": result.passed,
    }
    (out / "metrics.json").write_text(dump_json(metrics))
    for stem, (header, rows) in result.tables.items():
        np.savetxt(out / f"{stem}.csv", np.atleast_2d(rows), fmt=CSV_FMT, delimiter=",",
                   header=",".join(header), comments="")
    for stem, trace in result.traces.items():
        trace.write_jsonl(out / f"{stem}.jsonl")
    for stem, (spec, params) in result.checkpoints.items():
        save_checkpoint(out / f"{stem}.json", spec, params, seed=result.config["seed"])
    return out


def show_trace(path, every=1):
    trace = TrainTrace.read_jsonl(path)
    print(f"{'epoch':>6} {'total':>12} {'c0':>12}  lam_min / beta")
    for e in trace.entries:
        if e.epoch % every == 0 or e.epoch == trace[-1].epoch:
            lam = " ".join(f"{v:.3f}" for v in e.lam_min)
            beta = " ".join(f"{v:.3g}" for v in e.beta)
            print(f"{e.epoch:>6} {e.cost['total']:>12.6g} {e.cost['c0']:>12.6g}  {lam} / {beta}")


def build_parser():
    p = argparse.ArgumentParser(prog="ladderlab", description="Ladder network experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="JSON file merged over the bundled defaults")
        s.add_argument("--seed", type=int, help="overrides the config seed")
        s.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./runs, plus <experiment>-seed<N>)")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, value parsed as JSON; repeatable")
        s.add_argument("--assert", dest="check", action="store_true",
                       help="exit with status 4 if any acceptance threshold fails")
        s.add_argument("--force", action="store_true", help="overwrite existing outputs")
    s = sub.add_parser("show-trace", help="print a training trace")
    s.add_argument("trace", help="trace .jsonl file")
    s.add_argument("--every", type=int, default=1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "show-trace":
            show_trace(args.trace, max(1, args.every))
            return EXIT_OK
        cfg = load_config(args.command, args.config, args.overrides, args.seed)
        out = output_dir(args, cfg)
        if (out / "config.json").exists() and not args.force:
            raise ConfigError(f"{out} already holds a run; pass --force to overwrite")
        result = RUNNERS[args.command](cfg)
        write_result(result, out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericAbort, SingularityError, NumericError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value} ({c.threshold})")
    print(f"wrote {out}")
    if args.check and not result.passed:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
