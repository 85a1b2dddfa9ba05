"""Merging of consecutive small, link-compatible code cells.

Cells are scanned left to right while a group grows. A code cell joins the current group
when both are short, no narrative cell separates them, and merging keeps the inter-cell
link ratio close to the ratio of each side.
"""

from __future__ import annotations

import hashlib
import math
from collections.abc import Collection
from dataclasses import dataclass
from typing import Literal

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from resplit.cell_metrics import cell_stats, merged_stats
from resplit.defuse_chains import ChainIndex
from resplit.errors import StalePlan
from resplit.notebook_io import Cell, CellKind, Notebook, line_count
from resplit.transform_log import MergeRecord, TransformLog


class MergeConfig(BaseModel):
    """Merge thresholds.

    Parameters:
        max_merge_lines: Both the group and the candidate must be shorter than this.
        max_ratio_change: Largest permitted change of the inter-cell link ratio.
        max_cell_lines: Ceiling for the merged cell; never binds at the defaults.
        ratio_check: Compare the merged ratio with both sides or with the group only.
        barrier_on_markdown: Markdown and raw cells close the current group.
        preserve_output_boundaries: Only the last cell of a group may have outputs.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_merge_lines: int = Field(default=5, ge=1)
    max_ratio_change: float = Field(default=0.1, ge=0.0, le=1.0)
    max_cell_lines: int = Field(default=10, ge=1)
    ratio_check: Literal["two-sided", "one-sided"] = "two-sided"
    barrier_on_markdown: bool = True
    preserve_output_boundaries: bool = False


@dataclass(frozen=True)
class MergePlan:
    """Groups of cell indices (into ``nb.cells``) to merge, each of two or more code cells."""

    groups: tuple[tuple[int, ...], ...] = ()
    fingerprint: str = ""

    def __bool__(self) -> bool:
        return bool(self.groups)


def notebook_fingerprint(nb: Notebook) -> str:
    digest = hashlib.sha256()
    for cell in nb.cells:
        digest.update(cell.kind.value.encode())
        digest.update(b"\0")
        digest.update(cell.source.encode("utf-8", "surrogatepass"))
        digest.update(b"\1")
    return digest.hexdigest()


def within(delta: float, limit: float) -> bool:
    """``delta <= limit`` tolerant to float noise in ratio arithmetic."""
    return delta <= limit or math.isclose(delta, limit, rel_tol=1e-9, abs_tol=1e-12)


def merged_source(cells: list[Cell]) -> str:
    """Constituent sources, trailing blank lines stripped, joined by single newlines."""
    parts = []
    for cell in cells:
        lines = cell.source.split("\n")
        while lines and not lines[-1].strip():
            lines.pop()
        parts.append("\n".join(lines))
    return "\n".join(parts)


def merge_allowed(
    nb: Notebook, group: list[int], candidate: int, chains: ChainIndex, cfg: MergeConfig
) -> bool:
    """Whether ``candidate`` may extend ``group``; the barrier check is the caller's."""
    cells = nb.cells
    group_text = merged_source([cells[i] for i in group])
    if line_count(group_text) >= cfg.max_merge_lines:
        return False
    if line_count(cells[candidate]) >= cfg.max_merge_lines:
        return False
    if line_count(merged_source([cells[i] for i in [*group, candidate]])) > cfg.max_cell_lines:
        return False

    r_group = merged_stats(group, chains).r_inter
    r_cand = cell_stats(candidate, chains).r_inter
    r_merged = merged_stats([*group, candidate], chains).r_inter
    if not within(abs(r_merged - r_group), cfg.max_ratio_change):
        return False
    if cfg.ratio_check == "two-sided" and not within(
        abs(r_merged - r_cand), cfg.max_ratio_change
    ):
        return False

    if cfg.preserve_output_boundaries and any(cells[i].outputs for i in group):
        return False
    return True


def plan_merges(
    nb: Notebook,
    chains: ChainIndex,
    cfg: MergeConfig | None = None,
    barriers: Collection[int] = (),
) -> MergePlan:
    """Greedy left-to-right grouping of mergeable code cells.

    Args:
        nb: The notebook.
        chains: Chains built for ``nb``.
        cfg: Merge thresholds; defaults when omitted.
        barriers: Code cells that are never merged and always close the current group:
            cells that failed to parse and cells owned by a ``%%`` magic.

    Returns:
        The merge plan. Each prefix of every group satisfied the criteria when it was
        extended.
    """
    cfg = cfg or MergeConfig()
    groups: list[tuple[int, ...]] = []
    group: list[int] = []

    def close() -> None:
        if len(group) >= 2:
            logger.debug(f"Merge group {group}")
            groups.append(tuple(group))

    for index, cell in enumerate(nb.cells):
        if not cell.is_code:
            if cfg.barrier_on_markdown:
                close()
                group = []
            continue
        if index in barriers:
            close()
            group = []
            continue
        if group and merge_allowed(nb, group, index, chains, cfg):
            group.append(index)
            continue
        close()
        group = [index]
    close()
    return MergePlan(groups=tuple(groups), fingerprint=notebook_fingerprint(nb))


def _check_plan(nb: Notebook, plan: MergePlan) -> None:
    if plan.fingerprint and plan.fingerprint != notebook_fingerprint(nb):
        raise StalePlan("merge plan was computed for a different notebook")
    code = nb.code_cell_indices()
    position = {cell: pos for pos, cell in enumerate(code)}
    previous_end = -1
    for group in plan.groups:
        if len(group) < 2:
            raise StalePlan(f"merge group {list(group)} has fewer than two cells")
        if any(i not in position for i in group):
            raise StalePlan(f"merge group {list(group)} names a missing or non-code cell")
        pos = [position[i] for i in group]
        if pos != list(range(pos[0], pos[0] + len(pos))):
            raise StalePlan(f"merge group {list(group)} is not contiguous in code-cell order")
        if group[0] <= previous_end:
            raise StalePlan("merge groups overlap or are out of order")
        previous_end = group[-1]


def _merge_cells(cells: list[Cell]) -> Cell:
    first = cells[0]
    counts = [c.execution_count for c in cells if c.execution_count is not None]
    return Cell(
        kind=CellKind.CODE,
        source=merged_source(cells),
        outputs=[output for c in cells for output in c.outputs],
        execution_count=max(counts) if counts else None,
        metadata=first.metadata,
        cell_id=first.cell_id,
        extra=first.extra,
    )


def apply_merges(nb: Notebook, plan: MergePlan) -> tuple[Notebook, TransformLog]:
    """Replace each planned group by one code cell.

    The merged cell takes the place of the group's first cell; any non-code cells lying
    inside a group (possible only without the markdown barrier) follow it in their
    original order.

    Raises:
        StalePlan: The plan does not match ``nb``.
    """
    _check_plan(nb, plan)
    log = TransformLog()
    group_of = {group[0]: group for group in plan.groups}
    member = {i for group in plan.groups for i in group}

    new_cells: list[Cell] = []
    index = 0
    while index < len(nb.cells):
        group = group_of.get(index)
        if group is None:
            if index not in member:
                new_cells.append(nb.cells[index])
            index += 1
            continue
        log.merges.append(
            MergeRecord(cell_range_before=list(group), cell_index_after=len(new_cells))
        )
        new_cells.append(_merge_cells([nb.cells[i] for i in group]))
        new_cells.extend(
            nb.cells[i] for i in range(group[0], group[-1] + 1) if not nb.cells[i].is_code
        )
        index = group[-1] + 1

    merged = nb.with_cells(new_cells)
    logger.debug(f"Applied {len(plan.groups)} merges")
    return merged, log.count(nb, merged)
