import random
from collections import Counter

import pytest

from resplit.corpus_tools import (
    StatsOptions,
    TokenBag,
    corpus_stats,
    corpus_stats_from_dir,
    dedup,
    filter_data_science,
    imported_roots,
    is_data_science,
    iter_notebook_paths,
    load_token_bags,
    map_notebooks,
    similarity,
    summarize_notebook,
    token_bag,
    tokenize_source,
)
from resplit.notebook_io import serialize_notebook, write_atomic
from tests.conftest import markdown, notebook


def bag(nb_id: str, tokens: str) -> TokenBag:
    return TokenBag(notebook_id=nb_id, tokens=Counter(tokens.split()))


def write(path, nb):
    write_atomic(path, serialize_notebook(nb))


# -- data-science filter -------------------------------------------------------------------


def test_sklearn_import_is_data_science():
    assert is_data_science(notebook("import os", "from sklearn import svm"))


def test_plain_import_is_not():
    assert not is_data_science(notebook("import os", markdown("import torch")))


def test_fallback_scan_for_unparseable_cell():
    cell = "%%time\nfrom sklearn.svm import SVC\nclf = SVC(\n"
    assert imported_roots(cell) == {"sklearn"}
    assert is_data_science(notebook(cell))


@pytest.mark.parametrize(
    ("source", "roots"),
    [
        ("import torch.nn as nn, numpy", {"torch", "numpy"}),
        ("from . import local", set()),
        ("def f():\n    import tensorflow as tf", {"tensorflow"}),
        ("!pip install nltk\nimport nltk", {"nltk"}),
    ],
)
def test_imported_roots(source, roots):
    assert imported_roots(source) == roots


def test_filter_data_science(tmp_path):
    write(tmp_path / "a.ipynb", notebook("import spacy"))
    write(tmp_path / "sub" / "b.ipynb", notebook("import os"))
    write(tmp_path / "sub" / "c.ipynb", notebook("import torch"))
    write(tmp_path / ".ipynb_checkpoints" / "a-checkpoint.ipynb", notebook("import torch"))
    (tmp_path / "broken.ipynb").write_text("{")
    kept, failed = filter_data_science(tmp_path)
    assert kept == ["a.ipynb", "sub/c.ipynb"]
    assert failed == 1


def test_discovery_skips_checkpoints(tmp_path):
    write(tmp_path / "x.ipynb", notebook())
    write(tmp_path / ".ipynb_checkpoints" / "x-checkpoint.ipynb", notebook())
    assert iter_notebook_paths(tmp_path) == [tmp_path / "x.ipynb"]
    assert iter_notebook_paths(tmp_path / "x.ipynb") == [tmp_path / "x.ipynb"]


# -- dedup -----------------------------------------------------------------------------------


def test_tokens_exclude_comments_and_whitespace():
    assert tokenize_source("x = f(1)  # call\n\n") == ["x", "=", "f", "(", "1", ")"]


def test_tokens_of_unparseable_source():
    assert tokenize_source("x = (1 # open\ny") == ["x", "=", "(", "1", "y"]


def test_token_bag_counts_code_cells_only():
    nb = notebook("a = a + 1", markdown("a a a"))
    assert token_bag(nb, "n").tokens == Counter({"a": 2, "=": 1, "+": 1, "1": 1})


def test_similarity():
    assert similarity(bag("a", "x y z"), bag("b", "x y z")) == 1.0
    assert similarity(bag("a", "x y"), bag("b", "z w")) == 0.0
    assert similarity(bag("a", ""), bag("b", "")) == 1.0
    assert similarity(bag("a", "x x y"), bag("b", "x y y")) == pytest.approx(2 / 3)


def test_similarity_exactly_at_threshold_is_a_clone():
    a, b = bag("a", "p q r s"), bag("b", "p q r s t")
    assert similarity(a, b) == 0.8
    result = dedup([a, b], threshold=0.8)
    assert result.clusters == [["a", "b"]]
    assert result.kept == ["a"]


def test_identical_notebooks_collapse():
    result = dedup([bag(i, "import numpy as np") for i in ("c", "a", "b")])
    assert result.kept == ["a"]
    assert result.clusters == [["a", "b", "c"]]


def test_distinct_notebooks_are_all_kept():
    result = dedup([bag("a", "x y z"), bag("b", "u v w"), bag("c", "x u q r")])
    assert result.kept == ["a", "b", "c"]
    assert result.clusters == []


def test_clusters_are_transitive():
    # a~b and b~c, but a and c differ too much
    a = bag("a", "t1 t2 t3 t4 t5 t6 t7 t8 t9 t10")
    b = bag("b", "t1 t2 t3 t4 t5 t6 t7 t8 t9 u1")
    c = bag("c", "t1 t2 t3 t4 t5 t6 t7 t8 u1 u2")
    assert similarity(a, c) < 0.9 <= similarity(b, c)
    assert dedup([a, b, c], threshold=0.9).clusters == [["a", "b", "c"]]


def planted_corpus(rng: random.Random, n: int = 200) -> list[TokenBag]:
    vocabulary = [f"tok{i}" for i in range(60)]
    bags = []
    while len(bags) < n:
        base = [rng.choice(vocabulary) for _ in range(rng.randint(0, 40))]
        for _ in range(rng.choice([1, 1, 2, 3, 5])):
            tokens = list(base)
            for _ in range(rng.randint(0, 4)):
                if tokens and rng.random() < 0.5:
                    tokens.pop(rng.randrange(len(tokens)))
                else:
                    tokens.append(rng.choice(vocabulary))
            bags.append(TokenBag(notebook_id=f"nb{len(bags):03d}", tokens=Counter(tokens)))
    return bags[:n]


def test_prefilter_matches_exhaustive(rng):
    corpus = planted_corpus(rng)
    for threshold in (0.5, 0.8, 0.95, 1.0):
        fast = dedup(corpus, threshold=threshold)
        slow = dedup(corpus, threshold=threshold, exhaustive=True)
        assert fast.clusters == slow.clusters
        assert fast.kept == slow.kept
        assert fast.n_scored_pairs <= slow.n_scored_pairs
    assert dedup(corpus).clusters


def test_dedup_is_order_independent(rng):
    corpus = planted_corpus(rng, 80)
    shuffled = list(corpus)
    rng.shuffle(shuffled)
    assert dedup(corpus).as_dict() == dedup(shuffled).as_dict()


def test_parallel_pair_scoring_matches_serial(rng):
    corpus = planted_corpus(rng, 80)
    assert dedup(corpus, jobs=2).as_dict() == dedup(corpus).as_dict()
    parallel = dedup(corpus, exhaustive=True, jobs=2)
    assert parallel.as_dict() == dedup(corpus, exhaustive=True).as_dict()


def test_load_token_bags(tmp_path):
    write(tmp_path / "a.ipynb", notebook("x = 1"))
    (tmp_path / "b.ipynb").write_text("nope")
    bags, failed = load_token_bags(tmp_path)
    assert [b.notebook_id for b in bags] == ["a.ipynb"]
    assert failed == 1


# -- statistics ----------------------------------------------------------------------------


def test_means_over_code_cells():
    nb = notebook("a = 1\nb = 2", markdown("text"), "c = 1\nd = 2\ne = 3\nf = 4")
    stats = corpus_stats([nb])
    assert stats.n_notebooks == 1
    assert stats.mean_cell_length == 3.0
    assert stats.mean_cells_per_notebook == 2.0


def test_markdown_counted_on_request():
    nb = notebook("a = 1\nb = 2", markdown("text"), "c = 1\nd = 2\ne = 3\nf = 4")
    stats = corpus_stats([nb], options=StatsOptions(include_markdown=True))
    assert stats.mean_cells_per_notebook == 3.0
    assert stats.mean_cell_length == pytest.approx(7 / 3)


def test_ratio_histogram_eligibility():
    nb = notebook("import os", "p = os.sep\nprint(p)", "q = 1", "\n".join(["r = 1"] * 5))
    assert summarize_notebook(nb).ratios == (1.0, 0.5)
    assert summarize_notebook(nb, options=StatsOptions(include_zero_link=True)).ratios == (
        1.0,
        0.5,
        0.0,
    )
    everything = StatsOptions(include_zero_link=True, all_lengths=True)
    assert len(summarize_notebook(nb, options=everything).ratios) == 4


def test_histogram_bins_sum_to_ratio_cells(synthetic_corpus):
    stats = corpus_stats(synthetic_corpus[:50])
    assert len(stats.ratio_histogram) == 20
    assert sum(b.count for b in stats.ratio_histogram) == stats.n_ratio_cells > 0
    assert stats.ratio_histogram[0].bin_lo == 0.0
    assert stats.ratio_histogram[-1].bin_hi == 1.0


def test_histogram_csv():
    stats = corpus_stats([notebook("import os", "print(os.sep)")], options=StatsOptions(bins=2))
    assert stats.histogram_csv() == "bin_lo,bin_hi,count\n0,0.5,0\n0.5,1,2\n"


def test_empty_corpus():
    stats = corpus_stats([])
    assert (stats.n_notebooks, stats.n_cells, stats.mean_cell_length) == (0, 0, 0.0)


def test_no_hidden_mutation(synthetic_corpus):
    sample = synthetic_corpus[:30]
    before = corpus_stats(sample)
    corpus_stats(sample, transform="both")
    assert corpus_stats(sample) == before


def test_stats_from_dir_counts_failures(tmp_path):
    write(tmp_path / "a.ipynb", notebook("a = 1\nb = 2"))
    (tmp_path / "z.ipynb").write_text("{}")
    stats = corpus_stats_from_dir(tmp_path)
    assert (stats.n_notebooks, stats.n_failed) == (1, 1)


def test_worker_pool_preserves_order_and_results(tmp_path, synthetic_corpus):
    assert map_notebooks(abs, [-3, -1, -2], jobs=2) == [3, 1, 2]
    for i, nb in enumerate(synthetic_corpus[:6]):
        write(tmp_path / f"nb{i}.ipynb", nb)
    serial = corpus_stats_from_dir(tmp_path, "both")
    parallel = corpus_stats_from_dir(tmp_path, "both", jobs=2)
    assert serial == parallel
