import json

from resplit.defuse_chains import (
    ChainIndex,
    DefUseLink,
    StmtRef,
    analyze_notebook,
    build_chains,
    dump_chains,
    links_within,
    parse_code_cells,
)
from resplit.pystmt_parser import parse_cell
from tests.conftest import markdown, notebook


def link(d: tuple[int, int], u: tuple[int, int], name: str) -> DefUseLink:
    return DefUseLink(def_at=StmtRef(*d), use_at=StmtRef(*u), name=name)


def chains_for(*sources: str) -> ChainIndex:
    return build_chains(parse_cell(s, cell_index=i) for i, s in enumerate(sources))


def brute_force_links(parsed_cells) -> set[DefUseLink]:
    """For each use, scan backwards for the nearest statement defining the name."""
    flat = [
        (StmtRef(cell.cell_index, stmt.index_in_cell), stmt)
        for cell in parsed_cells
        for stmt in cell.statements
    ]
    links = set()
    for position, (use_at, stmt) in enumerate(flat):
        for name in stmt.uses:
            for def_at, earlier in reversed(flat[:position]):
                if name in earlier.defs:
                    links.add(DefUseLink(def_at=def_at, use_at=use_at, name=name))
                    break
    return links


def test_worked_example_has_one_chain():
    assert chains_for("a = 2 + 2\nb = a / 2\nc = 16 * 2").links == {link((0, 0), (0, 1), "a")}


def test_inter_cell_link_and_undefined_names():
    chains = chains_for("import pandas as pd", "df = pd.read_csv(p)")
    assert chains.links == {link((0, 0), (1, 0), "pd")}


def test_shadowed_definition_is_not_linked():
    assert chains_for("x = 1\nx = 2\ny = x").links == {link((0, 1), (0, 2), "x")}


def test_repeated_uses_in_one_statement_count_once():
    assert len(chains_for("x = 1\ny = x + x * x")) == 1


def test_builtins_and_opaque_definitions_give_no_links():
    chains = chains_for("%time z = 1", "print(len(z))")
    assert len(chains) == 0


def test_links_within_partitions_touching_links():
    chains = chains_for("import pandas as pd", "df = pd.read_csv('x')\ndf.head()")
    intra, inter = links_within(1, chains)
    assert intra == {link((1, 0), (1, 1), "df")}
    assert inter == {link((0, 0), (1, 0), "pd")}
    assert links_within(0, chains) == (frozenset(), inter)


def test_cell_without_names_has_no_links():
    chains = chains_for("1 + 1", "x = 2")
    assert links_within(0, chains) == (frozenset(), frozenset())


def test_self_contained_cell_counts_distinct_pairs():
    source = "tmp = raw * 2\nscaled = tmp / tmp.max()\nclipped = scaled.clip(0, 1)\nout = clipped + tmp"
    intra, inter = links_within(1, chains_for("raw = 1", source))
    assert {(x.def_at.stmt_index, x.use_at.stmt_index, x.name) for x in intra} == {
        (0, 1, "tmp"),
        (1, 2, "scaled"),
        (2, 3, "clipped"),
        (0, 3, "tmp"),
    }
    assert inter == {link((0, 0), (1, 0), "raw")}


def test_cell_indices_refer_to_notebook_positions():
    nb = notebook(markdown("# intro"), "a = 1", markdown("more"), "b = a")
    parsed, chains = analyze_notebook(nb)
    assert [p.cell_index for p in parsed] == [1, 3]
    assert chains.links == {link((1, 0), (3, 0), "a")}


def test_unparseable_cell_contributes_nothing():
    nb = notebook("a = 1", "b = (a", "c = a")
    parsed = parse_code_cells(nb)
    assert parsed[1].parse_failed
    assert build_chains(parsed).links == {link((0, 0), (2, 0), "a")}


def test_matches_brute_force_oracle(random_notebooks):
    for nb in random_notebooks:
        parsed = parse_code_cells(nb)
        chains = build_chains(parsed)
        assert set(chains.links) == brute_force_links(parsed)


def test_links_are_partitioned(random_notebooks):
    for nb in random_notebooks[:200]:
        _, chains = analyze_notebook(nb)
        for index in nb.code_cell_indices():
            intra, inter = links_within(index, chains)
            assert not intra & inter
            assert intra | inter == chains.touching(index)


def test_dump_chains_json_lines():
    text = dump_chains(chains_for("a = 1", "b = a\nc = b"))
    records = [json.loads(line) for line in text.splitlines()]
    assert records == [
        {"name": "a", "def": [0, 0], "use": [1, 0]},
        {"name": "b", "def": [1, 0], "use": [1, 1]},
    ]
    assert dump_chains(ChainIndex()) == ""
