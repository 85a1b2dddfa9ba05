"""Command-line front end.

Run it using::

    uv run resplit both notebook.ipynb -o resplit.ipynb --log log.json
    uv run resplit stats notebooks/ --transform merge --out stats.json --histogram hist.csv

Exit codes: 0 on success, 1 on usage errors, 2 when the target file cannot be read,
parsed or written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Sequence
from pathlib import Path

from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from resplit import __version__
from resplit.cell_metrics import per_cell_records
from resplit.config import AnalysisConfig, load_config
from resplit.corpus_tools import (
    DEFAULT_BINS,
    DEFAULT_THRESHOLD,
    StatsOptions,
    corpus_stats_from_dir,
    dedup,
    filter_data_science,
    iter_notebooks,
    load_token_bags,
)
from resplit.defuse_chains import analyze_notebook, dump_chains
from resplit.errors import ConfigError, NotebookFormatError
from resplit.notebook_io import read_notebook, write_atomic, write_notebook
from resplit.pipeline import TRANSFORMS, is_marked, resplit_notebook

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def configure_logging(verbosity: int = 0, level: str | None = None) -> None:
    level = level or os.getenv("RESPLIT_LOG_LEVEL")
    if not level:
        level = {0: "WARNING", 1: "INFO"}.get(verbosity, "DEBUG")
    try:
        logger.level(level.upper())
    except ValueError as e:
        raise UsageError(f"resplit: unknown log level {level!r}") from e
    logger.remove()
    logger.add(sys.stderr, format=LOG_FORMAT, level=level.upper())


# ----------------------------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------------------------


def _add_merge_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("merge")
    group.add_argument("--max-merge-lines", type=int, help="cells must be shorter than this")
    group.add_argument("--max-ratio-change", type=float, help="largest inter-link ratio change")
    group.add_argument("--max-cell-lines", type=int, help="ceiling for a merged cell")
    group.add_argument(
        "--one-sided-ratio",
        action="store_const",
        const="one-sided",
        dest="ratio_check",
        help="compare the merged ratio with the growing group only",
    )
    group.add_argument(
        "--no-markdown-barrier",
        action="store_const",
        const=False,
        dest="barrier_on_markdown",
        help="allow merges across markdown and raw cells",
    )
    group.add_argument(
        "--preserve-output-boundaries",
        action="store_const",
        const=True,
        help="only the last cell of a merge group may have outputs",
    )


def _add_split_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("split")
    group.add_argument("--min-split-lines", type=int, help="smallest fragment to cut off")
    group.add_argument(
        "--no-attach-remainder",
        action="store_const",
        const=False,
        dest="attach_remainder_down",
        help="keep a short top remainder as its own cell",
    )


def _add_transform_command(subparsers, name: str, help_text: str) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, help=help_text)
    parser.add_argument("input", type=Path, help="notebook to restructure")
    parser.add_argument("-o", "--output", type=Path, help="where to write the result")
    parser.add_argument("--log", type=Path, help="write the transform log as JSON")
    parser.add_argument("--emit-chains", type=Path, help="write input chains as JSON lines")
    parser.add_argument("--dry-run", action="store_true", help="do not write the notebook")
    parser.add_argument("--force", action="store_true", help="reprocess a marked notebook")
    if name in ("merge", "both"):
        _add_merge_flags(parser)
    if name in ("split", "both"):
        _add_split_flags(parser)
    if name == "both":
        parser.add_argument("--order", choices=["merge-split", "split-merge"])
    return parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="resplit",
        description="Merge and split Jupyter notebook cells along def-use chains.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    parser.add_argument("--log-level", help="explicit loguru level, e.g. DEBUG")
    parser.add_argument("--config", type=Path, help="JSON file with hyper-parameters")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_transform_command(sub, "merge", "merge consecutive small, related cells")
    _add_transform_command(sub, "split", "split cells at unchained statement boundaries")
    _add_transform_command(sub, "both", "merge, then split (see --order)")

    stats = sub.add_parser("stats", help="corpus statistics before/after a transform")
    stats.add_argument("input", type=Path, help="notebook or directory of notebooks")
    stats.add_argument("--transform", choices=TRANSFORMS, default="none")
    stats.add_argument("--out", type=Path, help="write statistics as JSON")
    stats.add_argument("--histogram", type=Path, help="write the ratio histogram as CSV")
    stats.add_argument("--bins", type=int, default=DEFAULT_BINS)
    stats.add_argument("--per-cell", action="store_true", help="print one JSON line per cell")
    stats.add_argument("--include-markdown-in-counts", action="store_true")
    stats.add_argument("--include-zero-link", action="store_true")
    stats.add_argument("--all-lengths", action="store_true")
    stats.add_argument("--jobs", type=int, default=1)
    _add_merge_flags(stats)
    _add_split_flags(stats)
    stats.add_argument("--order", choices=["merge-split", "split-merge"])

    dd = sub.add_parser("dedup", help="find near-duplicate notebooks")
    dd.add_argument("input", type=Path, help="directory of notebooks")
    dd.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    dd.add_argument("--out", type=Path, help="write clusters as JSON")
    dd.add_argument("--emit-kept", type=Path, help="write kept notebook ids, one per line")
    dd.add_argument("--exhaustive", action="store_true", help="score every pair")
    dd.add_argument("--jobs", type=int, default=1)

    ds = sub.add_parser("filter-ds", help="list notebooks importing data-science libraries")
    ds.add_argument("input", type=Path, help="directory of notebooks")
    ds.add_argument("--out", type=Path, help="write kept ids, one per line")
    ds.add_argument("--jobs", type=int, default=1)

    chains = sub.add_parser("chains", help="dump def-use links as JSON lines")
    chains.add_argument("input", type=Path, help="notebook to analyse")
    chains.add_argument("--out", type=Path, help="write to a file instead of stdout")
    return parser


def resolve_config(args: argparse.Namespace) -> AnalysisConfig:
    """Defaults, then the config file, then the flags that were given."""
    config = load_config(args.config)
    merge = {
        key: getattr(args, key, None)
        for key in (
            "max_merge_lines",
            "max_ratio_change",
            "max_cell_lines",
            "ratio_check",
            "barrier_on_markdown",
            "preserve_output_boundaries",
        )
    }
    split = {key: getattr(args, key, None) for key in ("min_split_lines", "attach_remainder_down")}
    return config.with_overrides(merge=merge, split=split, order=getattr(args, "order", None))


# ----------------------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------------------


def _write_text(path: Path, text: str) -> None:
    write_atomic(path, text.encode("utf-8"))


def _write_json(path: Path, data) -> None:
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_transform(args: argparse.Namespace, config: AnalysisConfig) -> int:
    if args.output is None and not args.dry_run:
        raise UsageError(f"resplit {args.command}: -o/--output is required unless --dry-run")
    nb = read_notebook(args.input)
    if is_marked(nb) and not args.force:
        raise UsageError(f"{args.input} was already processed by resplit; use --force")

    if args.emit_chains:
        _, chains = analyze_notebook(nb)
        _write_text(args.emit_chains, dump_chains(chains))

    result, log = resplit_notebook(nb, config, args.command, input_path=str(args.input))
    if not args.dry_run:
        write_notebook(result, args.output)
    if args.log:
        _write_text(args.log, log.model_dump_json(indent=2) + "\n")
    counters = log.counters
    print(
        f"✅ {args.input}: {len(log.merges)} merges, {len(log.splits)} splits, "
        f"{counters.cells_before} -> {counters.cells_after} code cells"
        + (" (dry run)" if args.dry_run else ""),
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_stats(args: argparse.Namespace, config: AnalysisConfig) -> int:
    try:
        options = StatsOptions(
            bins=args.bins,
            include_markdown=args.include_markdown_in_counts,
            include_zero_link=args.include_zero_link,
            all_lengths=args.all_lengths,
        )
    except ValidationError as e:
        raise UsageError(f"resplit stats: invalid option: {e}") from e
    if not args.input.exists():
        raise FileNotFoundError(f"{args.input} does not exist")

    if args.per_cell:
        directory = args.input.is_dir()
        for nb_id, nb in iter_notebooks(args.input):
            if args.transform != "none":
                nb, _ = resplit_notebook(nb, config, args.transform)
            _, chains = analyze_notebook(nb)
            for record in per_cell_records(nb, chains):
                if directory:
                    record = {"notebook": nb_id, **record}
                print(json.dumps(record))

    stats = corpus_stats_from_dir(args.input, args.transform, config, options, jobs=args.jobs)
    if not args.input.is_dir() and stats.n_failed:
        raise NotebookFormatError(f"{args.input} could not be processed")
    if args.out:
        _write_json(args.out, stats.model_dump(mode="json"))
    if args.histogram:
        _write_text(args.histogram, stats.histogram_csv())
    print(
        f"📊 {stats.n_notebooks} notebooks ({stats.n_failed} failed), "
        f"mean cell length {stats.mean_cell_length:.2f}, "
        f"mean cells {stats.mean_cells_per_notebook:.2f}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_dedup(args: argparse.Namespace, config: AnalysisConfig) -> int:
    if not args.input.is_dir():
        raise FileNotFoundError(f"{args.input} is not a directory")
    if not 0.0 <= args.threshold <= 1.0:
        raise UsageError("resplit dedup: --threshold must be within [0, 1]")
    bags, failed = load_token_bags(args.input, jobs=args.jobs)
    result = dedup(bags, threshold=args.threshold, exhaustive=args.exhaustive, jobs=args.jobs)
    if args.out:
        _write_json(args.out, {**result.as_dict(), "failed": failed})
    if args.emit_kept:
        _write_text(args.emit_kept, "".join(f"{i}\n" for i in result.kept))
    print(
        f"🧬 {len(bags)} notebooks, {len(result.clusters)} clone clusters, "
        f"{len(result.kept)} kept",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_filter_ds(args: argparse.Namespace, config: AnalysisConfig) -> int:
    if not args.input.is_dir():
        raise FileNotFoundError(f"{args.input} is not a directory")
    kept, failed = filter_data_science(args.input, jobs=args.jobs)
    text = "".join(f"{i}\n" for i in kept)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    print(f"🔬 {len(kept)} data-science notebooks ({failed} unreadable)", file=sys.stderr)
    return EXIT_OK


def cmd_chains(args: argparse.Namespace, config: AnalysisConfig) -> int:
    _, chains = analyze_notebook(read_notebook(args.input))
    text = dump_chains(chains)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "merge": cmd_transform,
    "split": cmd_transform,
    "both": cmd_transform,
    "stats": cmd_stats,
    "dedup": cmd_dedup,
    "filter-ds": cmd_filter_ds,
    "chains": cmd_chains,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code."""
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    try:
        configure_logging(args.verbose, args.log_level)
        config = resolve_config(args)
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except NotebookFormatError as e:
        logger.error(f"{args.input}: {e}")
        return EXIT_IO
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
