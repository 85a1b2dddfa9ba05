"""Audit record of the merges and splits applied to one notebook."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field

from resplit import __version__
from resplit.notebook_io import Notebook, line_count


class MergeRecord(BaseModel):
    cell_range_before: list[int]
    cell_index_after: int


class SplitRecord(BaseModel):
    cell_index_before: int
    fragment_indices_after: list[int]
    boundaries: list[int] = Field(default_factory=list)


class SkippedCell(BaseModel):
    index: int
    reason: str


class Counters(BaseModel):
    cells_before: int = 0
    cells_after: int = 0
    lines_before: int = 0
    lines_after: int = 0


class TransformLog(BaseModel):
    """What a transform run did.

    Indices in ``merges`` refer to the notebook entering the merge pass and indices in
    ``splits`` to the notebook entering the split pass; the counters compare the original
    input with the final output and count code cells only.
    """

    input_path: str | None = None
    tool_version: str = __version__
    config: dict[str, Any] = Field(default_factory=dict)
    merges: list[MergeRecord] = Field(default_factory=list)
    splits: list[SplitRecord] = Field(default_factory=list)
    counters: Counters = Field(default_factory=Counters)
    skipped_cells: list[SkippedCell] = Field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(self.merges or self.splits)

    def count(self, before: Notebook, after: Notebook) -> TransformLog:
        self.counters = Counters(
            cells_before=_code_cells(before),
            cells_after=_code_cells(after),
            lines_before=_code_lines(before),
            lines_after=_code_lines(after),
        )
        return self

    def extend(self, other: TransformLog) -> TransformLog:
        self.merges.extend(other.merges)
        self.splits.extend(other.splits)
        seen = {(s.index, s.reason) for s in self.skipped_cells}
        self.skipped_cells.extend(s for s in other.skipped_cells if (s.index, s.reason) not in seen)
        return self


def _code_cells(nb: Notebook) -> int:
    return sum(cell.is_code for cell in nb.cells)


def _code_lines(nb: Notebook) -> int:
    return sum(line_count(cell) for cell in nb.cells if cell.is_code)
