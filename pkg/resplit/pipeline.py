"""Orchestration of the merge and split passes over one notebook.

Chains are rebuilt between passes, so the second pass plans on the cells the first one
produced.
"""

from __future__ import annotations

from typing import Literal

from loguru import logger

from resplit import __version__
from resplit.config import AnalysisConfig, config_hash
from resplit.defuse_chains import analyze_notebook
from resplit.merge_transform import MergeConfig, apply_merges, plan_merges
from resplit.notebook_io import Notebook
from resplit.pystmt_parser import is_cell_magic
from resplit.split_transform import SplitConfig, apply_splits, plan_splits
from resplit.transform_log import SkippedCell, TransformLog

Transform = Literal["none", "merge", "split", "both"]
TRANSFORMS: tuple[str, ...] = ("none", "merge", "split", "both")
MARKER_KEY = "resplit"


def merge_pass(nb: Notebook, cfg: MergeConfig) -> tuple[Notebook, TransformLog]:
    parsed, chains = analyze_notebook(nb)
    unparsed = {p.cell_index for p in parsed if p.parse_failed}
    magic = {
        p.cell_index
        for p in parsed
        if p.cell_index not in unparsed and is_cell_magic(nb.cells[p.cell_index].source)
    }
    merged, log = apply_merges(nb, plan_merges(nb, chains, cfg, unparsed | magic))
    log.skipped_cells.extend(
        SkippedCell(index=index, reason="parse failed; not merged") for index in sorted(unparsed)
    )
    log.skipped_cells.extend(
        SkippedCell(index=index, reason="cell magic; not merged") for index in sorted(magic)
    )
    return merged, log


def split_pass(nb: Notebook, cfg: SplitConfig) -> tuple[Notebook, TransformLog]:
    parsed, chains = analyze_notebook(nb)
    return apply_splits(nb, plan_splits(nb, parsed, chains, cfg))


def is_marked(nb: Notebook) -> bool:
    return MARKER_KEY in nb.metadata


def with_marker(nb: Notebook, config: AnalysisConfig) -> Notebook:
    metadata = dict(nb.metadata)
    metadata[MARKER_KEY] = {"version": __version__, "config_hash": config_hash(config)}
    return Notebook(
        cells=nb.cells,
        format_major=nb.format_major,
        format_minor=nb.format_minor,
        metadata=metadata,
        extra=nb.extra,
    )


def resplit_notebook(
    nb: Notebook,
    config: AnalysisConfig | None = None,
    transform: Transform = "both",
    input_path: str | None = None,
) -> tuple[Notebook, TransformLog]:
    """Run the selected transform.

    Args:
        nb: The notebook to restructure.
        config: Hyper-parameters; defaults when omitted.
        transform: ``none``, ``merge``, ``split`` or ``both`` (ordered by ``config.order``).
        input_path: Recorded in the log.

    Returns:
        The transformed notebook and its log. The notebook carries the ``resplit``
        metadata marker only if something changed.
    """
    config = config or AnalysisConfig()
    if transform not in TRANSFORMS:
        raise ValueError(f"unknown transform {transform!r}")

    passes = []
    if transform in ("merge", "both"):
        passes.append("merge")
    if transform in ("split", "both"):
        passes.append("split")
    if config.order == "split-merge":
        passes.reverse()

    log = TransformLog(input_path=input_path, config=config.snapshot())
    current = nb
    for name in passes:
        if name == "merge":
            current, pass_log = merge_pass(current, config.merge)
        else:
            current, pass_log = split_pass(current, config.split)
        log.extend(pass_log)
    log.count(nb, current)

    if log.changed:
        current = with_marker(current, config)
    logger.info(
        f"{input_path or 'notebook'}: {len(log.merges)} merges, {len(log.splits)} splits, "
        f"{log.counters.cells_before} -> {log.counters.cells_after} code cells"
    )
    return current, log
