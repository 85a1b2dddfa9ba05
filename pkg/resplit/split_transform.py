"""Splitting of code cells at boundaries no intra-cell def-use chain crosses.

Fragments are collected from the bottom of the cell upwards, so the statements that produce
a cell's output stay together with what they depend on.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from resplit.defuse_chains import ChainIndex, links_within
from resplit.errors import StalePlan
from resplit.merge_transform import notebook_fingerprint
from resplit.notebook_io import Cell, Notebook
from resplit.pystmt_parser import ParsedCell, is_cell_magic, parse_cell
from resplit.transform_log import SkippedCell, SplitRecord, TransformLog

MAX_CELL_ID = 64


class SplitConfig(BaseModel):
    """Split thresholds.

    Parameters:
        min_split_lines: Smallest fragment, in lines, that may be cut off.
        attach_remainder_down: A too-short top remainder joins the fragment below it.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    min_split_lines: int = Field(default=3, ge=1)
    attach_remainder_down: bool = True


@dataclass(frozen=True)
class SplitPlan:
    """For each split cell, the statement indices after which a new cell begins."""

    boundaries: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    fingerprint: str = ""
    skipped: tuple[SkippedCell, ...] = ()

    def __bool__(self) -> bool:
        return any(self.boundaries.values())


def _intra_links(cell: ParsedCell, chains: ChainIndex):
    intra, _ = links_within(cell.cell_index, chains)
    return intra


def potential_split_points(cell: ParsedCell, chains: ChainIndex) -> set[int]:
    """Boundaries ``k`` (between statements ``k`` and ``k+1``) not spanned by a chain."""
    n = len(cell.statements)
    if cell.parse_failed or n < 2:
        return set()
    blocked = [False] * (n - 1)
    for link in _intra_links(cell, chains):
        for k in range(link.def_at.stmt_index, link.use_at.stmt_index):
            blocked[k] = True
    return {k for k in range(n - 1) if not blocked[k]}


def _span_lines(cell: ParsedCell, first_stmt: int, last_stmt: int) -> int:
    statements = cell.statements
    return statements[last_stmt].last_line - statements[first_stmt].first_line + 1


def plan_split(
    cell: ParsedCell, chains: ChainIndex, cfg: SplitConfig | None = None
) -> list[int]:
    """Committed boundaries for one cell, in increasing order.

    Statements are accumulated from the bottom. At each potential boundary the fragment
    below it is cut off once it spans at least ``min_split_lines`` lines; otherwise
    collection continues to the next potential boundary.
    """
    cfg = cfg or SplitConfig()
    potential = potential_split_points(cell, chains)
    if not potential:
        return []

    committed: list[int] = []
    fragment_end = len(cell.statements) - 1
    for k in range(len(cell.statements) - 2, -1, -1):
        if k not in potential:
            continue
        if _span_lines(cell, k + 1, fragment_end) >= cfg.min_split_lines:
            committed.append(k)
            fragment_end = k

    if committed and cfg.attach_remainder_down:
        if _span_lines(cell, 0, fragment_end) < cfg.min_split_lines:
            committed.pop()
    return sorted(committed)


def plan_splits(
    nb: Notebook,
    parsed_cells: Iterable[ParsedCell],
    chains: ChainIndex,
    cfg: SplitConfig | None = None,
) -> SplitPlan:
    """Plan splits for every code cell of ``nb``; unparseable and cell-magic cells are skipped."""
    cfg = cfg or SplitConfig()
    boundaries: dict[int, tuple[int, ...]] = {}
    skipped: list[SkippedCell] = []
    for cell in parsed_cells:
        if cell.parse_failed:
            skipped.append(SkippedCell(index=cell.cell_index, reason="parse failed"))
            logger.warning(f"Cell {cell.cell_index} is not split: {cell.error}")
            continue
        if is_cell_magic(nb.cells[cell.cell_index].source):
            skipped.append(SkippedCell(index=cell.cell_index, reason="cell magic"))
            continue
        committed = plan_split(cell, chains, cfg)
        if committed:
            logger.debug(f"Split cell {cell.cell_index} after statements {committed}")
            boundaries[cell.cell_index] = tuple(committed)
    return SplitPlan(
        boundaries=boundaries, fingerprint=notebook_fingerprint(nb), skipped=tuple(skipped)
    )


def fragment_sources(source: str, cell: ParsedCell, boundaries: Iterable[int]) -> list[str]:
    """Cut ``source`` after the last line of each boundary statement.

    A fragment runs from the line after the previous fragment up to the last line of its
    own last statement, so comments above a statement travel with it; blank lines between
    fragments are dropped. The bottom fragment keeps everything to the end of the cell.
    """
    lines = source.split("\n")
    cuts = [cell.statements[k].last_line for k in sorted(boundaries)]
    starts = [0, *cuts]
    ends = [*cuts, len(lines)]
    fragments = []
    for start, end in zip(starts, ends, strict=True):
        chunk = lines[start:end]
        while chunk and not chunk[0].strip():
            chunk.pop(0)
        if end != len(lines):
            while chunk and not chunk[-1].strip():
                chunk.pop()
        fragments.append("\n".join(chunk))
    return fragments


def _fragment_id(cell_id: str | None, k: int) -> str | None:
    if cell_id is None:
        return None
    suffix = f"-{k}"
    return cell_id[: MAX_CELL_ID - len(suffix)] + suffix


def _split_cell(cell: Cell, sources: list[str]) -> list[Cell]:
    last = len(sources) - 1
    return [
        Cell(
            kind=cell.kind,
            source=text,
            outputs=cell.outputs if k == last else [],
            execution_count=cell.execution_count if k == last else None,
            metadata=cell.metadata,
            cell_id=cell.cell_id if k == last else _fragment_id(cell.cell_id, k),
            extra=cell.extra,
        )
        for k, text in enumerate(sources)
    ]


def apply_splits(nb: Notebook, plan: SplitPlan) -> tuple[Notebook, TransformLog]:
    """Replace each planned cell, in place, by its fragments in top-to-bottom order.

    The bottom fragment inherits the outputs and execution count; every fragment inherits
    the cell metadata.

    Raises:
        StalePlan: The plan does not match ``nb``.
    """
    if plan.fingerprint and plan.fingerprint != notebook_fingerprint(nb):
        raise StalePlan("split plan was computed for a different notebook")
    log = TransformLog(skipped_cells=list(plan.skipped))

    new_cells: list[Cell] = []
    for index, cell in enumerate(nb.cells):
        boundaries = plan.boundaries.get(index)
        if not boundaries:
            new_cells.append(cell)
            continue
        if not cell.is_code:
            raise StalePlan(f"split plan targets non-code cell {index}")
        parsed = parse_cell(cell.source, cell_index=index)
        n = len(parsed.statements)
        if parsed.parse_failed or any(not 0 <= k < n - 1 for k in boundaries):
            raise StalePlan(f"split boundaries {list(boundaries)} do not fit cell {index}")
        if list(boundaries) != sorted(set(boundaries)):
            raise StalePlan(f"split boundaries of cell {index} are not strictly increasing")

        fragments = _split_cell(cell, fragment_sources(cell.source, parsed, boundaries))
        first = len(new_cells)
        new_cells.extend(fragments)
        log.splits.append(
            SplitRecord(
                cell_index_before=index,
                fragment_indices_after=list(range(first, first + len(fragments))),
                boundaries=list(boundaries),
            )
        )

    split = nb.with_cells(new_cells)
    logger.debug(f"Applied splits to {len(log.splits)} cells")
    return split, log.count(nb, split)
