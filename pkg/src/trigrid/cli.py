"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation mismatch,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass

from . import rmat
from .driver import run_count
from .engine import EngineOptions
from .errors import (
    ConfigError,
    InternalInvariantError,
    MalformedInputError,
    ProtocolError,
    TrigridError,
)
from .graph import EdgeList, load_any, save_binary, save_text
from .oracle import count_matrix, count_serial

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_MISMATCH = 3
EXIT_INTERNAL = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class RunConfig:
    ranks: int
    input_path: str | None
    rmat_params: rmat.RmatParams | None
    options: EngineOptions
    metrics_path: str | None
    metrics_format: str


def _add_graph_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="edge-list file (text `u v` lines or TGR1 binary)")
    p.add_argument("--rmat-scale", type=int, help="generate an RMAT graph with 2^scale vertices")
    p.add_argument("--edge-factor", type=int, default=rmat.DEFAULT_EDGE_FACTOR)
    p.add_argument("--seed", type=int, default=0)


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ranks", type=int, default=1, help="rank count (perfect square)")
    p.add_argument("--no-direct-hash", action="store_true")
    p.add_argument("--no-dcsr", action="store_true")
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--enum", choices=("ijk", "jik"), default="jik")
    p.add_argument("--scratch-factor", type=int, default=2)
    p.add_argument("--metrics", help="write the metrics report to this path")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--corrupt-rank", type=int, help=argparse.SUPPRESS)  # test hook


def _config_from(args) -> RunConfig:
    if (args.input is None) == (args.rmat_scale is None):
        raise ConfigError("exactly one of --input or --rmat-scale is required")
    params = None
    if args.rmat_scale is not None:
        params = rmat.RmatParams(scale=args.rmat_scale, edge_factor=args.edge_factor, seed=args.seed)
    options = EngineOptions(
        direct_hash=not args.no_direct_hash,
        dcsr=not args.no_dcsr,
        prune=not args.no_prune,
        enumeration=args.enum,
        scratch_factor=args.scratch_factor,
    )
    return RunConfig(
        ranks=args.ranks,
        input_path=args.input,
        rmat_params=params,
        options=options,
        metrics_path=args.metrics,
        metrics_format=args.format,
    )


def _load_graph(config: RunConfig) -> EdgeList:
    if config.rmat_params is not None:
        return rmat.generate(config.rmat_params)
    try:
        return load_any(config.input_path)
    except (OSError, MalformedInputError) as exc:
        print(f"trigrid: cannot read {config.input_path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO) from exc


def _write_metrics(report, config: RunConfig) -> None:
    if not config.metrics_path:
        return
    body = report.to_json() if config.metrics_format == "json" else report.to_text()
    try:
        with open(config.metrics_path, "w") as fh:
            fh.write(body + "\n")
    except OSError as exc:
        print(f"trigrid: cannot write {config.metrics_path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO) from exc


def cmd_generate(args) -> int:
    params = rmat.RmatParams(scale=args.scale, edge_factor=args.edge_factor, seed=args.seed)
    graph = rmat.generate(params)
    if args.out.endswith(".bin"):
        save_binary(graph, args.out)
    else:
        save_text(graph, args.out)
    print(f"wrote {args.out}: n={graph.n} m={graph.m}")
    return EXIT_OK


def cmd_count(args) -> int:
    config = _config_from(args)
    graph = _load_graph(config)
    result = run_count(graph, config.ranks, config.options, corrupt_rank=args.corrupt_rank)
    print(result.count)
    _write_metrics(result.report, config)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _config_from(args)
    graph = _load_graph(config)
    result = run_count(graph, config.ranks, config.options, corrupt_rank=args.corrupt_rank)
    serial = count_serial(graph)
    counts = {"distributed": result.count, "serial-merge": serial}
    if graph.n <= 64:
        counts["dense-matrix"] = count_matrix(graph)
    for name, value in counts.items():
        print(f"{name:<14} {value}")
    if len(set(counts.values())) != 1:
        print("MISMATCH", file=sys.stderr)
        return EXIT_MISMATCH
    print("match")
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _config_from(args)
    graph = _load_graph(config)
    rank_list = sorted(set(args.rank_list))
    rows = []
    for p in rank_list:
        t0 = time.perf_counter()
        result = run_count(graph, p, config.options)
        overall = time.perf_counter() - t0
        rep = result.report
        rows.append(
            {
                "ranks": p,
                "expected_speedup": p / rank_list[0],
                "ppt": rep.phase_wall_max.get("preprocess", 0.0),
                "tct": rep.phase_wall_max.get("count", 0.0),
                "overall": overall,
                "tasks": rep.total_tasks,
                "count": result.count,
            }
        )
    base = rows[0]
    header = (
        f"{'ranks':>6} {'expected':>9} {'ppt':>9} {'ppt_spd':>8} "
        f"{'tct':>9} {'tct_spd':>8} {'overall':>9} {'spd':>7} {'tasks':>12}"
    )
    print(header)
    for row in rows:
        print(
            f"{row['ranks']:>6} {row['expected_speedup']:>9.2f} "
            f"{row['ppt']:>9.4f} {base['ppt'] / row['ppt'] if row['ppt'] else 1.0:>8.2f} "
            f"{row['tct']:>9.4f} {base['tct'] / row['tct'] if row['tct'] else 1.0:>8.2f} "
            f"{row['overall']:>9.4f} {base['overall'] / row['overall']:>7.2f} "
            f"{row['tasks']:>12}"
        )
    counts = {row["count"] for row in rows}
    if len(counts) != 1:
        print("MISMATCH across rank counts", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trigrid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic RMAT graph to a file")
    g.add_argument("--scale", type=int, required=True)
    g.add_argument("--edge-factor", type=int, default=rmat.DEFAULT_EDGE_FACTOR)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help=".bin for binary, anything else for text")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("count", help="count triangles on a simulated rank grid")
    _add_graph_source(c)
    _add_engine_flags(c)
    c.set_defaults(func=cmd_count)

    v = sub.add_parser("validate", help="run the engine and both oracles, compare")
    _add_graph_source(v)
    _add_engine_flags(v)
    v.set_defaults(func=cmd_validate)

    b = sub.add_parser("bench", help="sweep rank counts, print a scaling table")
    _add_graph_source(b)
    _add_engine_flags(b)
    b.add_argument(
        "--rank-list",
        type=int,
        nargs="+",
        default=[1, 4, 9, 16],
        help="perfect-square rank counts to sweep",
    )
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except ConfigError as exc:
        print(f"trigrid: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InternalInvariantError, ProtocolError) as exc:
        print(f"trigrid: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except TrigridError as exc:
        print(f"trigrid: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
