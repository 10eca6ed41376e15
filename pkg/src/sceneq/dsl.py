"""Region-graph query language: AST, parser, printer, validator.

Grammar (whitespace-insensitive)::

    query  := graph (';' graph)*
    graph  := '(' preds ')'
            | 'Duration(' body ',' INT ')'
            | pred                      # single-predicate shorthand
    body   := '(' preds ')' | preds     # parser lenient, printer canonical
    preds  := pred (',' pred)*
    pred   := NAME '(' var (',' var)? ')'
    var    := 'o' INT

Negation is not part of the language; any input containing a negation
token ('!', '¬', or the standalone word 'not') is rejected outright. A
full reference lives in docs/query_language.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import QueryParseError

_NEGATION = re.compile(r"(?<![A-Za-z0-9_])(?:not|NOT|Not)(?![A-Za-z0-9_])|[!¬]")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_VAR = re.compile(r"^o([0-9]+)$")
_INT = re.compile(r"[0-9]+")


@dataclass(frozen=True, order=True)
class Variable:
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise QueryParseError(f"variable index must be >= 0, got {self.index}")

    def __str__(self):
        return f"o{self.index}"


@dataclass(frozen=True)
class Predicate:
    name: str
    args: tuple[Variable, ...]

    def __post_init__(self):
        if len(self.args) not in (1, 2):
            raise QueryParseError(
                f"predicate {self.name!r} must take 1 or 2 variables")
        if len(self.args) == 2 and self.args[0] == self.args[1]:
            raise QueryParseError(
                f"predicate {self.name!r} uses the same variable twice")

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self):
        return f"{self.name}({', '.join(str(v) for v in self.args)})"


@dataclass(frozen=True)
class RegionGraphSpec:
    predicates: tuple[Predicate, ...]
    duration: int = 1

    def __post_init__(self):
        if not self.predicates:
            raise QueryParseError("region graph must contain a predicate")
        if self.duration < 1:
            raise QueryParseError(f"duration must be >= 1, got {self.duration}")
        if len(set(self.predicates)) != len(self.predicates):
            raise QueryParseError("duplicate predicate in region graph")


@dataclass(frozen=True)
class Query:
    graphs: tuple[RegionGraphSpec, ...]

    def __post_init__(self):
        if not self.graphs:
            raise QueryParseError("query must contain a region graph")
        indices = sorted({v.index for g in self.graphs
                          for p in g.predicates for v in p.args})
        if indices != list(range(len(indices))):
            raise QueryParseError(
                f"variable indices {indices} are not contiguous from 0")

    def variables(self) -> list[Variable]:
        seen = {v.index for g in self.graphs for p in g.predicates for v in p.args}
        return [Variable(i) for i in sorted(seen)]

    def predicates(self) -> list[Predicate]:
        return [p for g in self.graphs for p in g.predicates]


@dataclass(frozen=True)
class UnresolvedPredicate:
    name: str
    arity: int


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str):
        raise QueryParseError(f"syntax error at position {self.pos}: {message}",
                              position=self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            self.error(f"expected {ch!r}")
        self.pos += 1

    def name(self) -> str:
        self.skip_ws()
        m = _NAME.match(self.text, self.pos)
        if not m:
            self.error("expected an identifier")
        self.pos = m.end()
        return m.group()

    def integer(self) -> int:
        self.skip_ws()
        m = _INT.match(self.text, self.pos)
        if not m:
            self.error("expected an integer")
        self.pos = m.end()
        return int(m.group())

    def at_integer(self) -> bool:
        self.skip_ws()
        return bool(_INT.match(self.text, self.pos))

    def variable(self) -> Variable:
        token = self.name()
        m = _VAR.match(token)
        if not m:
            self.error(f"expected a variable like o0, got {token!r}")
        return Variable(int(m.group(1)))

    def predicate(self, name: str | None = None) -> Predicate:
        if name is None:
            name = self.name()
        if name == "Duration":
            self.error("'Duration' is a reserved keyword")
        if _VAR.match(name):
            self.error(f"variable {name!r} used as a predicate name")
        self.expect("(")
        args = [self.variable()]
        if self.peek() == ",":
            self.expect(",")
            args.append(self.variable())
        self.expect(")")
        return Predicate(name, tuple(args))

    def predicate_list(self) -> list[Predicate]:
        preds = [self.predicate()]
        while self.peek() == ",":
            mark = self.pos
            self.expect(",")
            if self.at_integer():
                # duration argument follows; hand the comma back
                self.pos = mark
                break
            preds.append(self.predicate())
        return preds

    def graph(self) -> RegionGraphSpec:
        self.skip_ws()
        if self.peek() == "(":
            self.expect("(")
            preds = self.predicate_list()
            self.expect(")")
            return RegionGraphSpec(tuple(preds))
        name = self.name()
        if name == "Duration":
            self.expect("(")
            if self.peek() == "(":
                self.expect("(")
                preds = self.predicate_list()
                self.expect(")")
            else:
                preds = self.predicate_list()
            self.expect(",")
            duration = self.integer()
            self.expect(")")
            return RegionGraphSpec(tuple(preds), duration)
        # single-predicate shorthand without parentheses
        return RegionGraphSpec((self.predicate(name=name),))

    def query(self) -> Query:
        graphs = [self.graph()]
        while self.peek() == ";":
            self.expect(";")
            graphs.append(self.graph())
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("trailing input after query")
        return Query(tuple(graphs))


def parse(text: str) -> Query:
    """Parse DSL text into a Query, rejecting negation and malformed input."""
    m = _NEGATION.search(text)
    if m:
        raise QueryParseError(
            f"negation is not supported (token {m.group()!r} at position {m.start()})",
            position=m.start())
    if not text.strip():
        raise QueryParseError("empty query", position=0)
    return _Parser(text).query()


def print_query(query: Query) -> str:
    """Canonical text form; parse(print_query(q)) == q."""
    parts = []
    for g in query.graphs:
        preds = ", ".join(str(p) for p in g.predicates)
        if g.duration == 1:
            parts.append(f"({preds})")
        else:
            parts.append(f"Duration(({preds}), {g.duration})")
    return "; ".join(parts)


def validate(query: Query, registry) -> list[UnresolvedPredicate]:
    """Predicates not resolvable by the registry, de-duplicated by
    (name, arity) in first-appearance order. Empty means executable."""
    unresolved: list[UnresolvedPredicate] = []
    seen = set()
    for pred in query.predicates():
        key = (pred.name, pred.arity)
        if key in seen:
            continue
        entry = registry.get(pred.name)
        if entry is None or entry.signature.arity != pred.arity:
            seen.add(key)
            unresolved.append(UnresolvedPredicate(pred.name, pred.arity))
    return unresolved
