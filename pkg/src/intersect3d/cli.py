"""Command-line entry point: ``intersect3d <subcommand> [flags]``."""
import argparse
import json
import logging
import sys

from . import __version__, runner
from .config import KINDS, ExperimentConfig, parse_checkpoints
from .errors import ConfigError, DataError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA, EXIT_IO, EXIT_INTERRUPTED = 0, 1, 2, 3, 4, 130

# flag -> config field
_FLAGS = {
    "seed": "seed", "pairs": "pairs", "steps": "max_steps", "checkpoints": "checkpoints",
    "m": "m", "n": "n", "particles": "particles", "replicates": "replicates",
    "base_radius": "base_radius", "h_lag": "h_lag", "threads": "threads", "out": "out",
    "checkpoint_every": "checkpoint_every", "shells": "shells", "initial": "initial",
    "gap": "gap", "initial2": "initial2", "gap2": "gap2", "seed2": "seed2",
    "functional": "functional", "half_angle": "half_angle", "trials": "trials",
    "chunk": "chunk", "sigma": "sigma",
}


def _checkpoint_list(text):
    try:
        return parse_checkpoints(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_run_flags(p):
    p.add_argument("--config", metavar="PATH", help="JSON config; flags override it")
    p.add_argument("--seed", type=int, metavar="U64")
    p.add_argument("--pairs", type=int, metavar="M", help="number of walk pairs")
    p.add_argument("--steps", type=int, metavar="N", help="maximum walk length")
    p.add_argument("--checkpoints", type=_checkpoint_list, metavar="LIST",
                   help="'1000,2000' or 'start:stop:step'")
    p.add_argument("--m", type=int, help="walks in group 1 (tuple)")
    p.add_argument("--n", type=int, help="walks in group 2 (tuple)")
    p.add_argument("--particles", type=int, metavar="P")
    p.add_argument("--replicates", type=int, metavar="R")
    p.add_argument("--base-radius", type=float, metavar="R0")
    p.add_argument("--h-lag", type=int, metavar="m")
    p.add_argument("--shells", type=int)
    p.add_argument("--window", type=int, nargs=2, metavar=("N0", "N1"))
    p.add_argument("--initial", help="diametric-lines or angular-gap")
    p.add_argument("--gap", type=float, help="angular gap as a fraction of pi")
    p.add_argument("--initial2", help="second initial pair (mixing)")
    p.add_argument("--gap2", type=float)
    p.add_argument("--seed2", type=int, help="seed of the second ensemble (mixing)")
    p.add_argument("--functional")
    p.add_argument("--half-angle", type=float, help="cone half-angle in radians")
    p.add_argument("--sigma", type=float, help="Gaussian step floor")
    p.add_argument("--trials", type=int)
    p.add_argument("--chunk", type=int, help="pairs or trials per checkpoint unit")
    _add_runtime_flags(p)


def _add_runtime_flags(p):
    p.add_argument("--threads", type=int, metavar="W")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--checkpoint-every", type=float, metavar="SECONDS")
    p.add_argument("--stop-after", type=int, metavar="UNITS",
                   help="stop after this many work units, leaving a checkpoint")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="intersect3d",
                                     description="Intersection exponents of 3D random walks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        _add_run_flags(sub.add_parser(kind, help=f"run the {kind} experiment"))
    rep = sub.add_parser("report", help="tabulate an artifact and write plot data")
    rep.add_argument("artifact")
    rep.add_argument("--out", metavar="DIR", help="where to write plot data and figures")
    res = sub.add_parser("resume", help="continue from a checkpoint")
    res.add_argument("checkpoint")
    _add_runtime_flags(res)
    return parser


def config_from_args(args):
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except OSError as exc:
            raise ConfigError("config", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"invalid JSON: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config", "must be a JSON object")
        if base.get("kind", args.command) != args.command:
            raise ConfigError("kind", f"config is for {base['kind']!r}, not {args.command!r}")
    base["kind"] = args.command
    for flag, name in _FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            base[name] = v
    if getattr(args, "window", None):
        base["window"] = list(args.window)
    return ExperimentConfig.from_dict(base)


def _finish(outcome):
    if outcome.status == "complete":
        print(outcome.artifact)
        return EXIT_OK
    print(f"interrupted; resume with: intersect3d resume {outcome.checkpoint}", file=sys.stderr)
    return EXIT_INTERRUPTED


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        if args.command == "report":
            text, files = _report(args)
            print(text)
            for f in files:
                print(f"wrote {f}", file=sys.stderr)
            return EXIT_OK
        if args.command == "resume":
            return _finish(runner.resume(args.checkpoint, threads=args.threads, out=args.out,
                                         stop_after=args.stop_after))
        cfg = config_from_args(args)
        return _finish(runner.run(cfg, stop_after=args.stop_after))
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


def _report(args):
    from .report import report
    return report(args.artifact, args.out)


if __name__ == "__main__":
    sys.exit(main())
