"""``evolab`` command line.

Exit codes: 0 success, 1 usage or validation error, 2 acceptance thresholds
failed (only with ``--check``).
"""
import argparse
from pathlib import Path
import sys

from . import __version__
from ._accel import apply_thread_cap
from .errors import EvolabError
from .harness import ExperimentSpec, run
from .io import parse_config, report_markdown, write_csv, write_report
from .mesh import build_icosphere, write_off

EXPERIMENTS = ("elliptic", "semidiscrete", "fully-discrete", "oracle")

DEFAULT_SUITE = (
    ExperimentSpec("elliptic", levels=(1, 2, 3, 4), data="y1", norms=("l2", "energy")),
    ExperimentSpec("semidiscrete", levels=(1, 2, 3, 4), data="y1", norms=("l2", "energy")),
    ExperimentSpec("fully-discrete", levels=(3,), steps=(8, 16, 32, 64), data="y1"),
    ExperimentSpec("oracle"),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _csv_list(cast):
    def parse(text):
        try:
            return tuple(cast(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad list {text!r}") from None

    return parse


def build_parser():
    parser = _Parser(prog="evolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"evolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    mesh = sub.add_parser("mesh", help="write an icosphere as OFF")
    mesh.add_argument("--level", type=int, required=True)
    mesh.add_argument("--out", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config")
        p.add_argument("--levels", type=_csv_list(int))
        p.add_argument("--T", dest="T", type=float)
        p.add_argument("--t-query", dest="t_query", type=float)
        p.add_argument("--steps", type=_csv_list(int))
        p.add_argument("--data")
        p.add_argument("--norms", type=_csv_list(str))
        p.add_argument("--seed", type=int)
        p.add_argument("--out-csv", dest="out_csv")
        p.add_argument("--out-report", dest="out_report")
        p.add_argument("--check", action="store_true", help="exit 2 when acceptance thresholds fail")

    rep = sub.add_parser("report", help="run several configs into one markdown report")
    rep.add_argument("--config", action="append", default=[], help="repeatable; default: headline suite")
    rep.add_argument("--out", required=True)
    rep.add_argument("--check", action="store_true")
    return parser


def _spec_from_args(args):
    overrides = {
        k: getattr(args, k)
        for k in ("levels", "T", "t_query", "steps", "data", "norms", "seed", "out_csv", "out_report")
    }
    text = Path(args.config).read_text() if args.config else f"kind = {args.command}\n"
    spec = parse_config(text, overrides)
    if spec.kind != args.command:
        raise EvolabError(f"config kind {spec.kind!r} does not match subcommand {args.command!r}")
    return spec


def _summary(report):
    return report_markdown([report])


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    apply_thread_cap()
    try:
        if args.command == "mesh":
            mesh = build_icosphere(args.level)
            write_off(mesh, args.out)
            print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
            return 0
        if args.command == "report":
            specs = [parse_config(Path(c).read_text()) for c in args.config] or list(DEFAULT_SUITE)
            reports = [run(s) for s in specs]
            write_report(reports, args.out)
            print(f"wrote {args.out}")
            return 2 if args.check and not all(r.passed for r in reports) else 0
        spec = _spec_from_args(args)
        report = run(spec)
        print(_summary(report))
        if spec.out_csv:
            write_csv(report, spec.out_csv)
        if spec.out_report:
            write_report([report], spec.out_report)
    except (EvolabError, OSError) as exc:
        print(f"evolab: error: {exc}", file=sys.stderr)
        return 1
    return 2 if args.check and not report.passed else 0


if __name__ == "__main__":
    sys.exit(main())
