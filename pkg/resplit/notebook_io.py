"""Lossless reading and writing of nbformat 4 notebooks.

The in-memory model keeps every key it does not interpret (top-level keys, cell keys such as
``attachments``, outputs and metadata) so that a parse/serialize round-trip is structurally
exact. Cell sources are normalized to a single string; on disk they are written back as a
list of lines, the nbformat convention.
"""

from __future__ import annotations

import copy
import os
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any

import nbformat
from loguru import logger
from nbformat.reader import NotJSONError, get_version, parse_json
from nbformat.v4 import nbjson

from resplit.errors import MalformedJson, UnsupportedFormat

SUPPORTED_MAJOR = 4

_CELL_KEYS = {"cell_type", "source", "outputs", "execution_count", "metadata", "id"}
_NOTEBOOK_KEYS = {"cells", "nbformat", "nbformat_minor", "metadata"}


class CellKind(str, Enum):
    CODE = "code"
    MARKDOWN = "markdown"
    RAW = "raw"


@dataclass(frozen=True)
class Cell:
    """One notebook cell.

    Markdown and raw cells never carry outputs or an execution count.
    """

    kind: CellKind
    source: str = ""
    outputs: list[Any] = field(default_factory=list)
    execution_count: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)
    cell_id: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def is_code(self) -> bool:
        return self.kind is CellKind.CODE


@dataclass(frozen=True)
class Notebook:
    cells: tuple[Cell, ...] = ()
    format_major: int = SUPPORTED_MAJOR
    format_minor: int = 5
    metadata: dict[str, Any] = field(default_factory=dict)
    extra: dict[str, Any] = field(default_factory=dict)

    def code_cell_indices(self) -> list[int]:
        return [i for i, cell in enumerate(self.cells) if cell.is_code]

    def with_cells(self, cells: list[Cell] | tuple[Cell, ...]) -> Notebook:
        return replace(self, cells=tuple(cells))


def _join_source(value: Any, where: str) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, list) and all(isinstance(line, str) for line in value):
        return "".join(value)
    raise MalformedJson(f"{where}: 'source' must be a string or a list of strings")


def _split_source(source: str) -> list[str]:
    return source.splitlines(keepends=True)


def _parse_cell(raw: Any, index: int) -> Cell:
    where = f"cell {index}"
    if not isinstance(raw, dict):
        raise MalformedJson(f"{where}: expected an object, got {type(raw).__name__}")
    try:
        kind = CellKind(raw.get("cell_type"))
    except ValueError:
        raise MalformedJson(f"{where}: unknown cell_type {raw.get('cell_type')!r}") from None

    metadata = raw.get("metadata", {})
    if not isinstance(metadata, dict):
        raise MalformedJson(f"{where}: 'metadata' must be an object")

    outputs: list[Any] = []
    execution_count = None
    if kind is CellKind.CODE:
        outputs = raw.get("outputs", [])
        if not isinstance(outputs, list):
            raise MalformedJson(f"{where}: 'outputs' must be a list")
        execution_count = raw.get("execution_count")
        if execution_count is not None and not isinstance(execution_count, int):
            raise MalformedJson(f"{where}: 'execution_count' must be an integer or null")

    return Cell(
        kind=kind,
        source=_join_source(raw.get("source", ""), where),
        outputs=copy.deepcopy(outputs),
        execution_count=execution_count,
        metadata=copy.deepcopy(metadata),
        cell_id=raw.get("id"),
        extra={k: copy.deepcopy(v) for k, v in raw.items() if k not in _CELL_KEYS},
    )


def parse_notebook(raw: bytes | str) -> Notebook:
    """Parse an nbformat 4 JSON document.

    Args:
        raw: The document as UTF-8 bytes or text.

    Returns:
        The notebook with every cell in file order.

    Raises:
        MalformedJson: The input is not UTF-8 JSON or lacks the notebook structure.
        UnsupportedFormat: The nbformat major version is not 4.
    """
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedJson(f"notebook is not valid UTF-8: {e}") from e
    try:
        document = parse_json(raw)
    except NotJSONError as e:
        raise MalformedJson("notebook does not appear to be JSON") from e
    if not isinstance(document, dict):
        raise MalformedJson("notebook root must be a JSON object")

    major, minor = get_version(document)
    if major != SUPPORTED_MAJOR:
        raise UnsupportedFormat(
            f"nbformat {major} is not supported; only nbformat {SUPPORTED_MAJOR} notebooks "
            "can be processed (convert it with `jupyter nbconvert --to notebook` first)"
        )
    if not isinstance(minor, int):
        raise MalformedJson("'nbformat_minor' must be an integer")

    raw_cells = document.get("cells")
    if not isinstance(raw_cells, list):
        raise MalformedJson("notebook has no 'cells' list")
    metadata = document.get("metadata", {})
    if not isinstance(metadata, dict):
        raise MalformedJson("notebook 'metadata' must be an object")

    return Notebook(
        cells=tuple(_parse_cell(c, i) for i, c in enumerate(raw_cells)),
        format_major=major,
        format_minor=minor,
        metadata=copy.deepcopy(metadata),
        extra={k: copy.deepcopy(v) for k, v in document.items() if k not in _NOTEBOOK_KEYS},
    )


def _cell_to_json(cell: Cell) -> dict[str, Any]:
    data: dict[str, Any] = dict(cell.extra)
    data["cell_type"] = cell.kind.value
    data["metadata"] = cell.metadata
    data["source"] = _split_source(cell.source)
    if cell.cell_id is not None:
        data["id"] = cell.cell_id
    if cell.is_code:
        data["outputs"] = cell.outputs
        data["execution_count"] = cell.execution_count
    return data


def serialize_notebook(nb: Notebook) -> bytes:
    """Serialize a notebook with nbformat's v4 JSON writer (sorted keys, one-space indent).

    The writer drops transient keys: notebook ``signature`` and ``orig_nbformat*`` metadata
    and cell-level ``trusted`` flags. Strings holding lone surrogates are written as
    ``\\u`` escapes.
    """
    document: dict[str, Any] = dict(nb.extra)
    document["cells"] = [_cell_to_json(c) for c in nb.cells]
    document["metadata"] = nb.metadata
    document["nbformat"] = nb.format_major
    document["nbformat_minor"] = nb.format_minor
    node = nbformat.from_dict(document)
    text = nbjson.writes(node, split_lines=False)
    try:
        data = text.encode("utf-8")
    except UnicodeEncodeError:
        data = nbjson.writes(node, split_lines=False, ensure_ascii=True).encode("ascii")
    return data + b"\n"


def line_count(cell: Cell | str) -> int:
    """Physical source lines, ignoring trailing empty or whitespace-only lines."""
    source = cell if isinstance(cell, str) else cell.source
    lines = source.split("\n")
    while lines and not lines[-1].strip():
        lines.pop()
    return len(lines)


def read_notebook(path: str | Path) -> Notebook:
    nb = parse_notebook(Path(path).read_bytes())
    logger.debug(f"Read {path}: {len(nb.cells)} cells")
    return nb


def write_atomic(path: str | Path, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temporary file in the same directory."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_notebook(nb: Notebook, path: str | Path) -> None:
    write_atomic(path, serialize_notebook(nb))
    logger.debug(f"Wrote {path}: {len(nb.cells)} cells")
