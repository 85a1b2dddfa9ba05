"""Notebook-wide definition-usage links between top-level statements.

Code cells are read top to bottom as one straight-line program. Every use of a name links to
the nearest preceding statement that defines it, in the same cell or in any earlier code
cell. Links are statement pairs: repeated uses of a name inside one statement count once,
and a statement never links to itself.
"""

from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from loguru import logger

from resplit.notebook_io import Notebook
from resplit.pystmt_parser import ParsedCell, parse_cell


@dataclass(frozen=True, order=True)
class StmtRef:
    """Position of a statement; ordering follows notebook order."""

    cell_index: int
    stmt_index: int

    def as_list(self) -> list[int]:
        return [self.cell_index, self.stmt_index]


@dataclass(frozen=True, order=True)
class DefUseLink:
    def_at: StmtRef
    use_at: StmtRef
    name: str


@dataclass(frozen=True)
class ChainIndex:
    links: frozenset[DefUseLink] = frozenset()
    by_cell: Mapping[int, frozenset[DefUseLink]] = field(default_factory=dict)

    @classmethod
    def from_links(cls, links: Iterable[DefUseLink]) -> ChainIndex:
        links = frozenset(links)
        by_cell: dict[int, set[DefUseLink]] = defaultdict(set)
        for link in links:
            by_cell[link.def_at.cell_index].add(link)
            by_cell[link.use_at.cell_index].add(link)
        return cls(links=links, by_cell={k: frozenset(v) for k, v in by_cell.items()})

    def touching(self, cell_index: int) -> frozenset[DefUseLink]:
        return self.by_cell.get(cell_index, frozenset())

    def sorted_links(self) -> list[DefUseLink]:
        return sorted(self.links, key=lambda link: (link.use_at, link.def_at, link.name))

    def __len__(self) -> int:
        return len(self.links)


def build_chains(parsed_cells: Iterable[ParsedCell]) -> ChainIndex:
    """Link every use to its nearest preceding definition.

    Args:
        parsed_cells: Code cells in notebook order.

    Returns:
        The chain index over all cells. Names with no visible definition (builtins,
        undefined names, names defined only by opaque statements) produce no link.
    """
    last_def: dict[str, StmtRef] = {}
    links: set[DefUseLink] = set()
    for cell in parsed_cells:
        for stmt in cell.statements:
            here = StmtRef(cell.cell_index, stmt.index_in_cell)
            for name in stmt.uses:
                defined_at = last_def.get(name)
                if defined_at is not None:
                    links.add(DefUseLink(def_at=defined_at, use_at=here, name=name))
            for name in stmt.defs:
                last_def[name] = here
    return ChainIndex.from_links(links)


def links_within(
    cell_index: int, index: ChainIndex
) -> tuple[frozenset[DefUseLink], frozenset[DefUseLink]]:
    """Split the links touching a cell into ``(intra, inter)``."""
    intra, inter = set(), set()
    for link in index.touching(cell_index):
        if link.def_at.cell_index == link.use_at.cell_index:
            intra.add(link)
        else:
            inter.add(link)
    return frozenset(intra), frozenset(inter)


def parse_code_cells(nb: Notebook) -> list[ParsedCell]:
    """Parse every code cell of the notebook, keyed by its index in ``nb.cells``."""
    parsed = [parse_cell(nb.cells[i].source, cell_index=i) for i in nb.code_cell_indices()]
    failed = sum(p.parse_failed for p in parsed)
    if failed:
        logger.info(f"{failed} of {len(parsed)} code cells could not be parsed")
    return parsed


def analyze_notebook(nb: Notebook) -> tuple[list[ParsedCell], ChainIndex]:
    parsed = parse_code_cells(nb)
    return parsed, build_chains(parsed)


def dump_chains(index: ChainIndex) -> str:
    """Render links as JSON lines ``{"name":..., "def":[c,s], "use":[c,s]}``."""
    lines = [
        json.dumps(
            {"name": link.name, "def": link.def_at.as_list(), "use": link.use_at.as_list()}
        )
        for link in index.sorted_links()
    ]
    return "".join(f"{line}\n" for line in lines)
