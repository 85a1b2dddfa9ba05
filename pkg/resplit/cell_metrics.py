"""Per-cell link statistics and the inter-cell link ratio that drives merging."""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from resplit.defuse_chains import ChainIndex, DefUseLink, links_within
from resplit.notebook_io import Notebook, line_count


@dataclass(frozen=True)
class CellLinkStats:
    cell_index: int
    n_intra: int
    n_inter: int
    r_inter: float

    @property
    def n_links(self) -> int:
        return self.n_intra + self.n_inter


def inter_ratio(n_intra: int, n_inter: int) -> float:
    """Inter-cell links over all links; 0 for a cell with no links at all."""
    total = n_intra + n_inter
    return n_inter / total if total else 0.0


def cell_stats(cell_index: int, chains: ChainIndex) -> CellLinkStats:
    intra, inter = links_within(cell_index, chains)
    return CellLinkStats(
        cell_index=cell_index,
        n_intra=len(intra),
        n_inter=len(inter),
        r_inter=inter_ratio(len(intra), len(inter)),
    )


def merged_stats(group: Iterable[int], chains: ChainIndex) -> CellLinkStats:
    """Statistics of a contiguous group of cells as if it were one cell.

    Links internal to the group count as intra-cell links; links with exactly one endpoint
    in the group count as inter-cell links. The result is reported under the group's first
    cell index.
    """
    members = sorted(set(group))
    if len(members) == 1:
        return cell_stats(members[0], chains)

    touching: set[DefUseLink] = set()
    for index in members:
        touching |= chains.touching(index)
    member_set = set(members)
    n_intra = sum(
        1
        for link in touching
        if link.def_at.cell_index in member_set and link.use_at.cell_index in member_set
    )
    n_inter = len(touching) - n_intra
    return CellLinkStats(
        cell_index=members[0],
        n_intra=n_intra,
        n_inter=n_inter,
        r_inter=inter_ratio(n_intra, n_inter),
    )


def per_cell_records(nb: Notebook, chains: ChainIndex) -> list[dict]:
    """One ``{"cell", "lines", "intra", "inter", "r_inter"}`` record per code cell."""
    records = []
    for index in nb.code_cell_indices():
        stats = cell_stats(index, chains)
        records.append(
            {
                "cell": index,
                "lines": line_count(nb.cells[index]),
                "intra": stats.n_intra,
                "inter": stats.n_inter,
                "r_inter": stats.r_inter,
            }
        )
    return records
