"""Shared notebook builders and seeded generators of synthetic notebooks."""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from resplit.notebook_io import Cell, CellKind, Notebook
from resplit.pystmt_parser import parse_cell

FIXTURES = Path(__file__).parent / "fixtures"
SEED = 20221015


def code(source: str, outputs=None, execution_count=None, cell_id=None, metadata=None) -> Cell:
    return Cell(
        kind=CellKind.CODE,
        source=source,
        outputs=list(outputs or []),
        execution_count=execution_count,
        metadata=dict(metadata or {}),
        cell_id=cell_id,
    )


def markdown(text: str) -> Cell:
    return Cell(kind=CellKind.MARKDOWN, source=text)


def notebook(*cells: Cell | str) -> Notebook:
    """Strings become code cells."""
    return Notebook(cells=tuple(code(c) if isinstance(c, str) else c for c in cells))


def statement_texts(nb: Notebook) -> list[str]:
    """Top-level statement texts of all code cells, in notebook order."""
    texts = []
    for cell in nb.cells:
        if not cell.is_code:
            continue
        lines = cell.source.split("\n")
        parsed = parse_cell(cell.source)
        assert not parsed.parse_failed
        texts.extend(
            "\n".join(lines[s.first_line - 1 : s.last_line]) for s in parsed.statements
        )
    return texts


# ----------------------------------------------------------------------------------------
# Synthetic corpus: over-split imports, chained pipelines, self-contained snippets and
# monolithic cells. Every short cell with links has an inter-cell ratio of exactly 0 or 1.
# ----------------------------------------------------------------------------------------


class SyntheticNotebook:
    def __init__(self, rng: random.Random, scale: int = 1):
        self.rng = rng
        self.scale = scale
        self.cells: list[Cell] = []
        self.uid = 0

    def fresh(self) -> int:
        self.uid += 1
        return self.uid

    def imports(self) -> None:
        u = self.fresh()
        names = [f"m{u}_{i}" for i in range(self.rng.randint(2, 4))]
        self.cells.extend(code(f"import lib{u}_{i} as {n}") for i, n in enumerate(names))
        self.cells.append(code(f"data{u} = {names[0]}.load({', '.join(names[1:])})"))
        self.pipeline(f"data{u}")

    def pipeline(self, source: str | None = None) -> None:
        u = self.fresh()
        previous = source or f"list(range({self.rng.randint(2, 9)}))"
        for i in range(self.rng.randint(1, 3)):
            self.cells.append(code(f"p{u}_{i} = sorted({previous})"))
            previous = f"p{u}_{i}"

    def snippet(self) -> None:
        u = self.fresh()
        self.cells.append(code(f"v{u} = {self.rng.randint(0, 99)}\nprint(v{u})"))

    def monolith(self) -> None:
        u = self.fresh()
        blocks = [
            f"t{u}_{j} = {j} * 2\nf{u}_{j} = t{u}_{j} + 1\nr{u}_{j} = f{u}_{j} * 2"
            for j in range(self.rng.randint(3, 5))
        ]
        self.cells.append(code("\n".join(blocks)))

    def narrative(self) -> None:
        self.cells.append(markdown(f"## Step {self.fresh()}"))

    def build(self) -> Notebook:
        self.imports()
        self.snippet()
        self.monolith()
        parts = [self.imports, self.pipeline, self.snippet, self.monolith, self.narrative]
        for _ in range(self.rng.randint(2, 6) * self.scale):
            self.rng.choice(parts)()
        return Notebook(cells=tuple(self.cells))


def synthetic_notebook(rng: random.Random, scale: int = 1) -> Notebook:
    return SyntheticNotebook(rng, scale).build()


# ----------------------------------------------------------------------------------------
# Random notebooks over a tiny name pool, for chain and transform properties
# ----------------------------------------------------------------------------------------

NAME_POOL = ("a", "b", "c", "d", "e")
STATEMENT_TEMPLATES = (
    "{x} = {y} + {z}",
    "{x} = {y}",
    "{x} = 1",
    "{x} += {y}",
    "import os as {x}",
    "def {x}():\n    return {y}",
    "print({x}, {y})",
    "{x} = [{y} for _ in range(2)]",
    "for {x} in {y}:\n    {z} = {x}",
    "%time {x} = {y}",
    "{x}.append({y})",
)


def random_statement(rng: random.Random) -> str:
    x, y, z = (rng.choice(NAME_POOL) for _ in range(3))
    return rng.choice(STATEMENT_TEMPLATES).format(x=x, y=y, z=z)


def random_notebook(rng: random.Random, max_cells: int = 10, max_statements: int = 8) -> Notebook:
    cells: list[Cell] = []
    for _ in range(rng.randint(1, max_cells)):
        if rng.random() < 0.1:
            cells.append(markdown("notes"))
            continue
        statements = [random_statement(rng) for _ in range(rng.randint(1, max_statements))]
        cells.append(code("\n".join(statements), outputs=[{"n": len(cells)}] * rng.randint(0, 1)))
    return Notebook(cells=tuple(cells))


@pytest.fixture
def rng() -> random.Random:
    return random.Random(SEED)


@pytest.fixture(scope="session")
def synthetic_corpus() -> list[Notebook]:
    generator = random.Random(SEED)
    return [synthetic_notebook(generator) for _ in range(500)]


@pytest.fixture(scope="session")
def random_notebooks() -> list[Notebook]:
    generator = random.Random(SEED + 1)
    return [random_notebook(generator) for _ in range(1000)]


@pytest.fixture
def fixture_paths() -> list[Path]:
    return sorted(FIXTURES.glob("*.ipynb"))
