"""Corpus utilities: data-science filtering, clone deduplication and aggregate statistics.

Per-notebook work is independent and can run in a process pool; every reduction is done
sequentially in a fixed (sorted) order so results do not depend on scheduling.
"""

from __future__ import annotations

import ast
import io
import itertools
import math
import re
import tokenize
from collections import Counter, defaultdict
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import TypeVar

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from resplit.cell_metrics import cell_stats
from resplit.config import AnalysisConfig
from resplit.defuse_chains import analyze_notebook
from resplit.errors import ResplitError
from resplit.notebook_io import Notebook, line_count, read_notebook
from resplit.pipeline import Transform, resplit_notebook
from resplit.pystmt_parser import parse_module

T = TypeVar("T")
R = TypeVar("R")

# "pytorch" is what people call it; "torch" is what they import
DS_LIBRARIES = frozenset({"sklearn", "torch", "pytorch", "tensorflow", "spacy", "nltk"})
DEFAULT_THRESHOLD = 0.8
DEFAULT_BINS = 20

_IMPORT_RE = re.compile(r"^[ \t]*import[ \t]+([^\n#;]+)", re.MULTILINE)
_FROM_RE = re.compile(r"^[ \t]*from[ \t]+([A-Za-z_]\w*)[\w.]*[ \t]+import\b", re.MULTILINE)
_FALLBACK_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_SKIPPED_TOKENS = {
    tokenize.COMMENT,
    tokenize.NL,
    tokenize.NEWLINE,
    tokenize.INDENT,
    tokenize.DEDENT,
    tokenize.ENDMARKER,
}


# ----------------------------------------------------------------------------------------
# Notebook discovery and the worker pool
# ----------------------------------------------------------------------------------------


def iter_notebook_paths(root: str | Path) -> list[Path]:
    """All ``*.ipynb`` files under ``root`` in sorted order, checkpoints excluded."""
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(
        p for p in root.rglob("*.ipynb") if ".ipynb_checkpoints" not in p.relative_to(root).parts
    )


def notebook_id(path: Path, root: Path) -> str:
    if root.is_file():
        return path.name
    return path.relative_to(root).as_posix()


def map_notebooks(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> list[R]:
    """Order-preserving map, in a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (jobs * 4))
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, items, chunksize=chunksize))


# ----------------------------------------------------------------------------------------
# Data-science filter
# ----------------------------------------------------------------------------------------


def imported_roots(source: str) -> set[str]:
    """Root packages imported by a cell, from its AST or, failing that, a regex scan."""
    module, _, _ = parse_module(source)
    roots: set[str] = set()
    if module is not None:
        for node in ast.walk(module):
            if isinstance(node, ast.Import):
                roots.update(alias.name.split(".", 1)[0] for alias in node.names)
            elif isinstance(node, ast.ImportFrom) and node.level == 0 and node.module:
                roots.add(node.module.split(".", 1)[0])
        return roots

    for match in _IMPORT_RE.finditer(source):
        for part in match.group(1).split(","):
            words = part.split()
            if words:
                roots.add(words[0].split(".", 1)[0])
    roots.update(match.group(1) for match in _FROM_RE.finditer(source))
    return roots


def is_data_science(nb: Notebook, libraries: Iterable[str] = DS_LIBRARIES) -> bool:
    wanted = set(libraries)
    return any(imported_roots(cell.source) & wanted for cell in nb.cells if cell.is_code)


def _classify_path(path: Path) -> bool | None:
    try:
        return is_data_science(read_notebook(path))
    except (ResplitError, OSError) as e:
        logger.warning(f"Skipping {path}: {e}")
        return None


def filter_data_science(root: str | Path, jobs: int = 1) -> tuple[list[str], int]:
    """Ids of data-science notebooks under ``root`` and the number that failed to load."""
    root = Path(root)
    paths = iter_notebook_paths(root)
    verdicts = map_notebooks(_classify_path, paths, jobs)
    kept = [notebook_id(p, root) for p, ok in zip(paths, verdicts, strict=True) if ok]
    failed = sum(v is None for v in verdicts)
    logger.info(f"{len(kept)} of {len(paths)} notebooks use a data-science library")
    return kept, failed


# ----------------------------------------------------------------------------------------
# Clone deduplication
# ----------------------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenBag:
    notebook_id: str
    tokens: Counter = field(default_factory=Counter)

    @property
    def size(self) -> int:
        return sum(self.tokens.values())


def tokenize_source(source: str) -> list[str]:
    """Lexical tokens of one cell; comments and whitespace are dropped."""
    try:
        return [
            tok.string
            for tok in tokenize.generate_tokens(io.StringIO(source).readline)
            if tok.type not in _SKIPPED_TOKENS and tok.string.strip()
        ]
    except (tokenize.TokenError, SyntaxError):
        lines = (line.split("#", 1)[0] for line in source.split("\n"))
        return [t for line in lines for t in _FALLBACK_TOKEN_RE.findall(line)]


def token_bag(nb: Notebook, nb_id: str) -> TokenBag:
    tokens: Counter = Counter()
    for cell in nb.cells:
        if cell.is_code:
            tokens.update(tokenize_source(cell.source))
    return TokenBag(notebook_id=nb_id, tokens=tokens)


def similarity(a: TokenBag, b: TokenBag) -> float:
    """Multiset overlap divided by the larger bag; 1.0 for two empty bags."""
    larger = max(a.size, b.size)
    if larger == 0:
        return 1.0
    overlap = sum((a.tokens & b.tokens).values())
    return overlap / larger


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # the smaller index (smallest id) stays the root
            self.parent[max(ri, rj)] = min(ri, rj)


def _required_overlap(size: int, threshold: float) -> int:
    return max(1, math.ceil(threshold * size - 1e-9))


def _candidate_pairs(bags: Sequence[TokenBag], threshold: float) -> set[tuple[int, int]]:
    """Pairs that can reach ``threshold``, found by prefix filtering.

    Each token occurrence ``(token, k)`` is a set element, so multiset overlap becomes set
    overlap. Elements are ordered by global frequency, rarest first; two bags sharing at
    least ``ceil(threshold * size)`` elements must share one within their prefixes of
    ``size - ceil(threshold * size) + 1`` elements.
    """
    expanded = [
        [(token, k) for token, count in bag.tokens.items() for k in range(count)]
        for bag in bags
    ]
    frequency: Counter = Counter(e for elements in expanded for e in elements)

    index: dict[tuple[str, int], list[int]] = defaultdict(list)
    empties: list[int] = []
    pairs: set[tuple[int, int]] = set()
    for i, elements in enumerate(expanded):
        size = len(elements)
        if size == 0:
            empties.append(i)
            continue
        elements.sort(key=lambda e: (frequency[e], e))
        prefix = elements[: size - _required_overlap(size, threshold) + 1]
        for element in prefix:
            for j in index[element]:
                small, large = sorted((size, bags[j].size))
                if small >= threshold * large - 1e-9:
                    pairs.add((j, i))
            index[element].append(i)
    pairs.update(itertools.combinations(empties, 2))
    return pairs


@dataclass(frozen=True)
class DedupResult:
    kept: list[str]
    clusters: list[list[str]]
    threshold: float = DEFAULT_THRESHOLD
    n_scored_pairs: int = 0

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "kept": self.kept,
            "clusters": self.clusters,
            "scored_pairs": self.n_scored_pairs,
        }


def _clone_flags(chunk: Sequence[tuple[TokenBag, TokenBag]], threshold: float) -> list[bool]:
    return [similarity(a, b) >= threshold for a, b in chunk]


def dedup(
    corpus: Iterable[TokenBag],
    threshold: float = DEFAULT_THRESHOLD,
    exhaustive: bool = False,
    jobs: int = 1,
) -> DedupResult:
    """Cluster near-duplicate notebooks and keep one representative per cluster.

    Pairs with similarity at or above ``threshold`` are clones; clusters are their
    transitive closure and the lexicographically smallest id represents each cluster.

    Args:
        corpus: Token bags with unique notebook ids.
        threshold: Clone similarity threshold in [0, 1].
        exhaustive: Score every pair instead of prefix-filtered candidates.
        jobs: Worker processes for pair scoring; clusters are joined in pair order.
    """
    bags = sorted(corpus, key=lambda b: b.notebook_id)
    if exhaustive or threshold <= 0:
        pairs = list(itertools.combinations(range(len(bags)), 2))
    else:
        pairs = sorted(_candidate_pairs(bags, threshold))

    if jobs > 1 and len(pairs) > 1:
        size = max(1, math.ceil(len(pairs) / (jobs * 4)))
        chunks = [
            [(bags[i], bags[j]) for i, j in pairs[start : start + size]]
            for start in range(0, len(pairs), size)
        ]
        scored_chunks = map_notebooks(partial(_clone_flags, threshold=threshold), chunks, jobs)
        flags = [flag for chunk in scored_chunks for flag in chunk]
    else:
        flags = [similarity(bags[i], bags[j]) >= threshold for i, j in pairs]

    clusters = _DisjointSet(len(bags))
    for (i, j), clone in zip(pairs, flags, strict=True):
        if clone:
            clusters.union(i, j)
    scored = len(pairs)

    members: dict[int, list[str]] = defaultdict(list)
    for i, bag in enumerate(bags):
        members[clusters.find(i)].append(bag.notebook_id)
    kept = sorted(ids[0] for ids in members.values())
    groups = sorted(ids for ids in members.values() if len(ids) > 1)
    logger.info(
        f"Dedup: {len(bags)} notebooks, {scored} pairs scored, {len(groups)} clone clusters, "
        f"{len(kept)} kept"
    )
    return DedupResult(kept=kept, clusters=groups, threshold=threshold, n_scored_pairs=scored)


def _bag_from_path(path: Path, root: Path) -> TokenBag | None:
    try:
        return token_bag(read_notebook(path), notebook_id(path, root))
    except (ResplitError, OSError) as e:
        logger.warning(f"Skipping {path}: {e}")
        return None


def load_token_bags(root: str | Path, jobs: int = 1) -> tuple[list[TokenBag], int]:
    root = Path(root)
    bags = map_notebooks(partial(_bag_from_path, root=root), iter_notebook_paths(root), jobs)
    return [b for b in bags if b is not None], sum(b is None for b in bags)


# ----------------------------------------------------------------------------------------
# Aggregate statistics
# ----------------------------------------------------------------------------------------


class StatsOptions(BaseModel):
    """What the aggregate statistics count.

    Parameters:
        bins: Number of equal-width ratio histogram bins over [0, 1].
        include_markdown: Count markdown and raw cells in the cell means.
        include_zero_link: Put cells without any link into the ratio histogram.
        all_lengths: Do not restrict the histogram to cells shorter than the merge size.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    bins: int = Field(default=DEFAULT_BINS, ge=1)
    include_markdown: bool = False
    include_zero_link: bool = False
    all_lengths: bool = False


@dataclass(frozen=True)
class NotebookSummary:
    notebook_id: str
    cell_lengths: tuple[int, ...] = ()
    ratios: tuple[float, ...] = ()
    failed: bool = False


class HistogramBin(BaseModel):
    bin_lo: float
    bin_hi: float
    count: int


class CorpusStats(BaseModel):
    transform: str = "none"
    n_notebooks: int = 0
    n_failed: int = 0
    n_cells: int = 0
    mean_cell_length: float = 0.0
    mean_cells_per_notebook: float = 0.0
    n_ratio_cells: int = 0
    ratio_histogram: list[HistogramBin] = Field(default_factory=list)

    def histogram_csv(self) -> str:
        rows = ["bin_lo,bin_hi,count"]
        rows.extend(f"{b.bin_lo:g},{b.bin_hi:g},{b.count}" for b in self.ratio_histogram)
        return "\n".join(rows) + "\n"


def summarize_notebook(
    nb: Notebook,
    nb_id: str = "",
    transform: Transform = "none",
    config: AnalysisConfig | None = None,
    options: StatsOptions | None = None,
) -> NotebookSummary:
    """Cell lengths and eligible per-cell ratios of one notebook after ``transform``."""
    config = config or AnalysisConfig()
    options = options or StatsOptions()
    if transform != "none":
        nb, _ = resplit_notebook(nb, config, transform)
    _, chains = analyze_notebook(nb)

    lengths = [
        line_count(cell) for cell in nb.cells if cell.is_code or options.include_markdown
    ]
    ratios = []
    for index in nb.code_cell_indices():
        stats = cell_stats(index, chains)
        if stats.n_links == 0 and not options.include_zero_link:
            continue
        if not options.all_lengths and line_count(nb.cells[index]) >= config.merge.max_merge_lines:
            continue
        ratios.append(stats.r_inter)
    return NotebookSummary(notebook_id=nb_id, cell_lengths=tuple(lengths), ratios=tuple(ratios))


def _summarize_path(
    path: Path,
    root: Path,
    transform: Transform,
    config: AnalysisConfig,
    options: StatsOptions,
) -> NotebookSummary:
    nb_id = notebook_id(path, root)
    try:
        return summarize_notebook(read_notebook(path), nb_id, transform, config, options)
    except (ResplitError, OSError, RecursionError) as e:
        logger.warning(f"Skipping {path}: {e}")
        return NotebookSummary(notebook_id=nb_id, failed=True)


def reduce_summaries(
    summaries: Iterable[NotebookSummary], transform: str = "none", bins: int = DEFAULT_BINS
) -> CorpusStats:
    summaries = list(summaries)
    ok = [s for s in summaries if not s.failed]
    n_failed = len(summaries) - len(ok)
    lengths = np.fromiter((n for s in ok for n in s.cell_lengths), dtype=float)
    ratios = np.fromiter((r for s in ok for r in s.ratios), dtype=float)
    counts, edges = np.histogram(ratios, bins=bins, range=(0.0, 1.0))
    return CorpusStats(
        transform=transform,
        n_notebooks=len(ok),
        n_failed=n_failed,
        n_cells=int(lengths.size),
        mean_cell_length=float(lengths.mean()) if lengths.size else 0.0,
        mean_cells_per_notebook=lengths.size / len(ok) if ok else 0.0,
        n_ratio_cells=int(ratios.size),
        ratio_histogram=[
            HistogramBin(bin_lo=float(lo), bin_hi=float(hi), count=int(c))
            for lo, hi, c in zip(edges[:-1], edges[1:], counts, strict=True)
        ],
    )


def corpus_stats(
    corpus: Iterable[Notebook],
    transform: Transform = "none",
    config: AnalysisConfig | None = None,
    options: StatsOptions | None = None,
) -> CorpusStats:
    """Mean code-cell length, mean code cells per notebook and the ratio histogram.

    Notebooks whose transform fails are counted in ``n_failed`` and skipped.
    """
    config = config or AnalysisConfig()
    options = options or StatsOptions()
    summaries = []
    for i, nb in enumerate(corpus):
        try:
            summaries.append(summarize_notebook(nb, str(i), transform, config, options))
        except (ResplitError, RecursionError) as e:
            logger.warning(f"Skipping notebook {i}: {e}")
            summaries.append(NotebookSummary(notebook_id=str(i), failed=True))
    return reduce_summaries(summaries, transform, options.bins)


def corpus_stats_from_dir(
    root: str | Path,
    transform: Transform = "none",
    config: AnalysisConfig | None = None,
    options: StatsOptions | None = None,
    jobs: int = 1,
) -> CorpusStats:
    root = Path(root)
    config = config or AnalysisConfig()
    options = options or StatsOptions()
    worker = partial(
        _summarize_path, root=root, transform=transform, config=config, options=options
    )
    summaries = map_notebooks(worker, iter_notebook_paths(root), jobs)
    return reduce_summaries(summaries, transform, options.bins)


def iter_notebooks(root: str | Path) -> Iterator[tuple[str, Notebook]]:
    """Yield ``(id, notebook)`` for every readable notebook under ``root``."""
    root = Path(root)
    for path in iter_notebook_paths(root):
        try:
            yield notebook_id(path, root), read_notebook(path)
        except (ResplitError, OSError) as e:
            logger.warning(f"Skipping {path}: {e}")
