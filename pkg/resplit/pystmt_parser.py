"""Top-level statements of a code cell and the names each one defines and uses.

Grammar parsing is delegated to :mod:`ast`; each statement is then converted with gast and
run through beniget's def-use chains on its own. The analysis is flow-insensitive and works
at module scope: nested function, class, lambda and comprehension scopes are only inspected
for the names they read from (or, through ``global``, write to) the module namespace.

A name read by a statement counts as a use only if the statement has not already bound it
by that point in evaluation order; reads of the statement's own binding would be self-links,
which the chain builder discards anyway.
"""

from __future__ import annotations

import ast
import re
import warnings
from dataclasses import dataclass, field
from enum import Enum

import beniget
import gast
from loguru import logger

_MAGIC_RE = re.compile(r"^(\s*)[%!?]")
_SHAPE_CACHE_SIZE = 4096

# events depend on the statement's shape only, never on where it sits
_events_by_shape: dict[str, tuple[frozenset[str], frozenset[str]]] = {}


class EventKind(str, Enum):
    DEFINE = "define"
    USE = "use"


@dataclass(frozen=True, order=True)
class NameEvent:
    name: str
    kind: EventKind


@dataclass(frozen=True)
class Statement:
    """A top-level statement with its 1-based, inclusive line span inside the cell."""

    index_in_cell: int
    first_line: int
    last_line: int
    defs: frozenset[str] = frozenset()
    uses: frozenset[str] = frozenset()
    opaque: bool = False

    @property
    def line_span(self) -> tuple[int, int]:
        return self.first_line, self.last_line

    @property
    def n_lines(self) -> int:
        return self.last_line - self.first_line + 1

    @property
    def events(self) -> tuple[NameEvent, ...]:
        defined = (NameEvent(n, EventKind.DEFINE) for n in self.defs)
        used = (NameEvent(n, EventKind.USE) for n in self.uses)
        return tuple(sorted([*defined, *used]))


@dataclass(frozen=True)
class ParsedCell:
    cell_index: int
    statements: tuple[Statement, ...] = ()
    parse_failed: bool = False
    error: str | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.statements)


# ----------------------------------------------------------------------------------------
# Name events through beniget
# ----------------------------------------------------------------------------------------

_SCOPES = (gast.FunctionDef, gast.AsyncFunctionDef, gast.Lambda, gast.ClassDef)
_BINDERS = (
    gast.alias,
    gast.FunctionDef,
    gast.AsyncFunctionDef,
    gast.ClassDef,
    gast.MatchAs,
    gast.MatchStar,
    gast.MatchMapping,
)
_ASSIGNERS = (
    gast.Assign,
    gast.AnnAssign,
    gast.AugAssign,
    gast.NamedExpr,
    gast.For,
    gast.AsyncFor,
)


class _StatementChains(beniget.DefUseChains):
    """Def-use chains of a single statement; names bound elsewhere are simply unbound."""

    def unbound_identifier(self, name, node):
        pass

    def warn(self, msg, node):
        pass


def _bound_names(node: gast.AST) -> list[str]:
    if isinstance(node, gast.Name) and isinstance(node.ctx, gast.Store):
        return [node.id]
    if isinstance(node, (gast.FunctionDef, gast.AsyncFunctionDef, gast.ClassDef)):
        return [node.name]
    if isinstance(node, gast.alias) and node.name != "*":
        return [node.asname or node.name.split(".", 1)[0]]
    if isinstance(node, (gast.MatchAs, gast.MatchStar)) and isinstance(node.name, str):
        return [node.name]
    if isinstance(node, gast.MatchMapping) and isinstance(node.rest, str):
        return [node.rest]
    return []


class _StatementEvents:
    """Module-level defs and upward-exposed uses of one gast statement."""

    def __init__(self, stmt: ast.stmt):
        module = gast.ast_to_gast(ast.Module(body=[stmt], type_ignores=[]))
        self.stmt = module.body[0]
        self.nodes = list(gast.walk(self.stmt))
        self._inside = {id(n) for n in self.nodes}
        self._annotation_only = {
            id(n.target) for n in self.nodes if isinstance(n, gast.AnnAssign) and n.value is None
        }

        # a trailing load per candidate name shows what the statement leaves bound
        candidates = sorted({name for n in self.nodes for name in _bound_names(n)})
        self._trailing = []
        for name in candidates:
            load = gast.Name(id=name, ctx=gast.Load(), annotation=None, type_comment=None)
            self._trailing.append(load)
            module.body.append(gast.Expr(value=load))

        chains = _StatementChains()
        chains.visit(module)
        self.ancestors = beniget.Ancestors()
        self.ancestors.visit(module)

        self.reached: dict[int, list[gast.AST]] = {}
        for d in chains.chains.values():
            if not self._binds(d.node):
                continue
            for user in d.users():
                if user.node is not d.node:
                    self.reached.setdefault(id(user.node), []).append(d.node)

    def _binds(self, node) -> bool:
        if id(node) not in self._inside or id(node) in self._annotation_only:
            return False
        if isinstance(node, gast.Name):
            return isinstance(node.ctx, (gast.Store, gast.Param))
        return isinstance(node, _BINDERS)

    def _path(self, node: gast.AST) -> list[gast.AST]:
        return [*self.ancestors.parents(node), node]

    def _within(self, node: gast.AST, root: gast.AST) -> bool:
        return any(n is root for n in self._path(node))

    def _runs_later(self, node: gast.AST) -> bool:
        path = self._path(node)
        for parent, child in zip(path, path[1:]):
            if isinstance(parent, (gast.FunctionDef, gast.AsyncFunctionDef)):
                if any(child is s for s in parent.body):
                    return True
            elif isinstance(parent, gast.Lambda) and child is parent.body:
                return True
        return False

    def _in_comprehension_target(self, node: gast.AST) -> bool:
        path = self._path(node)
        return any(
            isinstance(parent, gast.comprehension) and child is parent.target
            for parent, child in zip(path, path[1:])
        )

    def _evaluated_after(self, d: gast.AST, u: gast.AST) -> bool:
        """True when ``u`` is part of the value whose result ``d`` receives."""
        for parent in reversed(self.ancestors.parents(d)):
            if isinstance(parent, _ASSIGNERS):
                looping = isinstance(parent, (gast.For, gast.AsyncFor))
                value = parent.iter if looping else parent.value
                return value is not None and self._within(u, value)
        return False

    def _position(self, node: gast.AST) -> tuple[int, int]:
        for n in reversed(self._path(node)):
            if getattr(n, "lineno", None) is not None:
                return n.lineno, n.col_offset
        return 0, 0

    def _binds_before(self, d: gast.AST, u: gast.AST) -> bool:
        if self._runs_later(u) or self._in_comprehension_target(d):
            return True
        return not self._evaluated_after(d, u) and self._position(d) < self._position(u)

    def _scope_owner(self, node: gast.AST) -> gast.AST | None:
        for parent in reversed(self.ancestors.parents(node)):
            if isinstance(parent, _SCOPES):
                return parent
        return None

    def _nested_module_stores(self) -> set[str]:
        """Names a nested scope writes to the module: ``global`` ones and walrus targets."""
        declared: dict[int, set[str]] = {}
        for n in self.nodes:
            if isinstance(n, gast.Global):
                owner = self._scope_owner(n)
                if owner is not None:
                    declared.setdefault(id(owner), set()).update(n.names)
        stores: set[str] = set()
        for n in self.nodes:
            if isinstance(n, gast.NamedExpr) and self._scope_owner(n) is None:
                stores.add(n.target.id)
            owner = self._scope_owner(n)
            if owner is None or id(owner) not in declared:
                continue
            stores.update(set(_bound_names(n)) & declared[id(owner)])
        return stores

    def defs(self) -> set[str]:
        found = {p.id for p in self._trailing if self.reached.get(id(p))}
        return found | self._nested_module_stores()

    def uses(self) -> set[str]:
        augmented = {id(n.target) for n in self.nodes if isinstance(n, gast.AugAssign)}
        uses: set[str] = set()
        for n in self.nodes:
            if not isinstance(n, gast.Name):
                continue
            if not isinstance(n.ctx, (gast.Load, gast.Del)) and id(n) not in augmented:
                continue
            # `del x` reads x for chain purposes
            if not any(self._binds_before(d, n) for d in self.reached.get(id(n), ())):
                uses.add(n.id)
        return uses


def extract_name_events(stmt: ast.stmt) -> tuple[frozenset[str], frozenset[str]]:
    """Return the module-level ``(defs, uses)`` of one top-level statement.

    Attribute, subscript and call chains collapse to their base name, so ``df.head()``
    uses ``df`` and ``df["x"] = 1`` uses (never defines) ``df``.
    """
    shape = ast.dump(stmt)
    events = _events_by_shape.get(shape)
    if events is None:
        found = _StatementEvents(stmt)
        events = frozenset(found.defs()), frozenset(found.uses())
        if len(_events_by_shape) >= _SHAPE_CACHE_SIZE:
            _events_by_shape.clear()
        _events_by_shape[shape] = events
    return events


def is_cell_magic(source: str) -> bool:
    """Whether the cell starts with a ``%%`` magic, which owns the whole cell body."""
    for line in source.splitlines():
        if line.strip():
            return line.lstrip().startswith("%%")
    return False


# ----------------------------------------------------------------------------------------
# Cell parsing
# ----------------------------------------------------------------------------------------


def _neutralize_magics(source: str) -> tuple[str, set[int]]:
    """Replace IPython-only lines with ``pass`` at the same indentation."""
    lines = source.split("\n")
    magic_lines: set[int] = set()
    for i, line in enumerate(lines):
        match = _MAGIC_RE.match(line)
        if match:
            lines[i] = f"{match.group(1)}pass"
            magic_lines.add(i + 1)
    return "\n".join(lines), magic_lines


def parse_module(source: str) -> tuple[ast.Module | None, set[int], str | None]:
    """Parse cell source, neutralizing magic lines only if the raw text does not parse.

    Returns:
        The module (or None on failure), the 1-based magic line numbers and the error text.
    """
    try:
        return _parse(source), set(), None
    except (SyntaxError, ValueError, RecursionError) as e:
        error = f"{type(e).__name__}: {e}"
    text, magic_lines = _neutralize_magics(source)
    if not magic_lines:
        return None, set(), error
    try:
        return _parse(text), magic_lines, None
    except (SyntaxError, ValueError, RecursionError) as e:
        return None, magic_lines, f"{type(e).__name__}: {e}"


def _parse(text: str) -> ast.Module:
    with warnings.catch_warnings():
        # SyntaxWarning for invalid escapes
        warnings.simplefilter("ignore")
        return ast.parse(text)


def _first_line(stmt: ast.stmt) -> int:
    decorators = getattr(stmt, "decorator_list", None) or []
    return min([stmt.lineno, *(d.lineno for d in decorators)])


def parse_cell(source: str, cell_index: int = 0) -> ParsedCell:
    """Split a code cell into top-level statements with their name events.

    Never raises: text that cannot be parsed yields ``parse_failed=True`` and no
    statements.
    """
    module, magic_lines, error = parse_module(source)
    if module is None:
        logger.debug(f"Cell {cell_index} failed to parse: {error}")
        return ParsedCell(cell_index=cell_index, parse_failed=True, error=error)

    # (first, last, defs, uses, opaque), grouped so that statements sharing a line merge
    groups: list[list] = []
    for stmt in module.body:
        first, last = _first_line(stmt), stmt.end_lineno or stmt.lineno
        opaque = isinstance(stmt, ast.Pass) and stmt.lineno in magic_lines
        if opaque:
            defs, uses = frozenset(), frozenset()
        else:
            try:
                defs, uses = extract_name_events(stmt)
            except Exception as e:
                logger.warning(f"Cell {cell_index}: name analysis failed: {e}")
                return ParsedCell(
                    cell_index=cell_index, parse_failed=True, error=f"{type(e).__name__}: {e}"
                )
        if groups and first <= groups[-1][1] and not opaque and not groups[-1][4]:
            group = groups[-1]
            group[1] = max(group[1], last)
            # later parts of the line may read what earlier parts bound
            group[3] = group[3] | (uses - group[2])
            group[2] = group[2] | defs
            continue
        groups.append([first, last, defs, uses, opaque])

    statements = tuple(
        Statement(
            index_in_cell=i,
            first_line=first,
            last_line=last,
            defs=frozenset(defs),
            uses=frozenset(uses),
            opaque=opaque,
        )
        for i, (first, last, defs, uses, opaque) in enumerate(groups)
    )
    return ParsedCell(cell_index=cell_index, statements=statements)
