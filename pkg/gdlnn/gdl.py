"""GDL programs: interval-constrained node and edge descriptions.

Text format, one description per line::

    node x <[3.0, 4.0]>
    node y
    edge (x, y) <[-inf, 0.5]>

``//`` starts a comment, blank lines are ignored. A missing constraint
vector means every coordinate is unconstrained.
"""

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from .errors import (
    DimensionMismatchError,
    DuplicateEdgeError,
    DuplicateVariableError,
    GDLSyntaxError,
    InvalidIntervalError,
    ProgramError,
    UndeclaredVariableError,
)

IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` over the extended reals."""

    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise InvalidIntervalError(f"interval bounds must not be NaN: [{lo}, {hi}]")
        if lo == math.inf or hi == -math.inf:
            raise InvalidIntervalError(f"interval [{lo}, {hi}] has an infinite bound on the wrong side")
        if lo > hi:
            raise InvalidIntervalError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, value: float) -> "Interval":
        return cls(value, value)

    @classmethod
    def unbounded(cls) -> "Interval":
        return cls(-math.inf, math.inf)

    @property
    def is_unbounded(self) -> bool:
        return self.lo == -math.inf and self.hi == math.inf

    @property
    def finite_bounds(self) -> int:
        return int(self.lo != -math.inf) + int(self.hi != math.inf)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def __str__(self) -> str:
        return f"[{_format_number(self.lo)}, {_format_number(self.hi)}]"


Constraints = Optional[Tuple[Interval, ...]]


def _normalize(constraints: Optional[Iterable[Interval]]) -> Tuple[Constraints, Optional[int]]:
    # All-unbounded vectors mean the same as no vector; the written width is kept for validation.
    if constraints is None:
        return None, None
    vector = tuple(constraints)
    if not vector or all(itv.is_unbounded for itv in vector):
        return None, len(vector)
    return vector, len(vector)


@dataclass(frozen=True)
class NodeDescription:
    var: str
    constraints: Constraints = None
    width: Optional[int] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        constraints, width = _normalize(self.constraints)
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "width", width)


@dataclass(frozen=True)
class EdgeDescription:
    src: str
    dst: str
    constraints: Constraints = None
    width: Optional[int] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        constraints, width = _normalize(self.constraints)
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "width", width)

    @property
    def pair(self) -> Tuple[str, str]:
        return (self.src, self.dst)


Description = Union[NodeDescription, EdgeDescription]


@dataclass(frozen=True, eq=False)
class Program:
    """An ordered conjunction of descriptions.

    Equality and hashing ignore description order.
    """

    descriptions: Tuple[Description, ...] = field(default_factory=tuple)

    def __post_init__(self):
        descriptions = tuple(self.descriptions)
        object.__setattr__(self, "descriptions", descriptions)
        _check_invariants(descriptions)

    @cached_property
    def nodes(self) -> Tuple[NodeDescription, ...]:
        return tuple(d for d in self.descriptions if isinstance(d, NodeDescription))

    @cached_property
    def edges(self) -> Tuple[EdgeDescription, ...]:
        return tuple(d for d in self.descriptions if isinstance(d, EdgeDescription))

    @cached_property
    def variables(self) -> Tuple[str, ...]:
        return tuple(d.var for d in self.nodes)

    @property
    def size(self) -> int:
        return len(self.descriptions)

    @cached_property
    def generality_measure(self) -> int:
        """Descriptions plus finite interval bounds; every mutation lowers it."""
        bounds = 0
        for d in self.descriptions:
            if d.constraints is not None:
                bounds += sum(itv.finite_bounds for itv in d.constraints)
        return self.size + bounds

    @cached_property
    def _key(self) -> FrozenSet[Description]:
        return frozenset(self.descriptions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __len__(self) -> int:
        return len(self.descriptions)

    def __str__(self) -> str:
        return print_program(self)


def _check_invariants(descriptions: Sequence[Description], lines: Optional[Sequence[int]] = None) -> None:
    declared: Dict[str, int] = {}
    for i, d in enumerate(descriptions):
        line = lines[i] if lines else None
        if isinstance(d, NodeDescription):
            if not IDENT_RE.match(d.var):
                raise ProgramError(f"invalid variable name {d.var!r}", line)
            if d.var in declared:
                raise DuplicateVariableError(f"variable {d.var!r} is declared more than once", line)
            declared[d.var] = i
        elif not isinstance(d, EdgeDescription):
            raise TypeError(f"not a GDL description: {d!r}")

    seen_pairs = set()
    for i, d in enumerate(descriptions):
        if not isinstance(d, EdgeDescription):
            continue
        line = lines[i] if lines else None
        for var in (d.src, d.dst):
            if var not in declared:
                raise UndeclaredVariableError(f"edge ({d.src}, {d.dst}) uses undeclared variable {var!r}", line)
        if d.pair in seen_pairs:
            raise DuplicateEdgeError(f"edge ({d.src}, {d.dst}) is described more than once", line)
        seen_pairs.add(d.pair)


# Printing

def _format_number(value: float) -> str:
    if value == math.inf:
        return "inf"
    if value == -math.inf:
        return "-inf"
    return repr(float(value))


def _format_constraints(constraints: Constraints) -> str:
    if constraints is None:
        return ""
    return " <" + ", ".join(str(itv) for itv in constraints) + ">"


def format_description(d: Description) -> str:
    if isinstance(d, NodeDescription):
        return f"node {d.var}{_format_constraints(d.constraints)}"
    return f"edge ({d.src}, {d.dst}){_format_constraints(d.constraints)}"


def print_program(p: Program) -> str:
    """Render a program in description order, one description per line."""
    return "\n".join(format_description(d) for d in p.descriptions)


def canonical_order(p: Program) -> Tuple[Description, ...]:
    nodes = sorted(p.nodes, key=lambda d: d.var)
    edges = sorted(p.edges, key=lambda d: d.pair)
    return tuple(nodes) + tuple(edges)


def canonical_text(p: Program) -> str:
    """Order-independent rendering used for deduplication and tie-breaks."""
    return "\n".join(format_description(d) for d in canonical_order(p))


# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<inf>[+-]inf(?![A-Za-z0-9_]))
  | (?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<word>[A-Za-z][A-Za-z0-9_]*)
  | (?P<punct>[<>\[\](),])
    """,
    re.VERBOSE,
)


class _Line:
    """Token cursor over a single line of GDL text."""

    def __init__(self, text: str, lineno: int):
        self.lineno = lineno
        self.tokens: List[Tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                raise GDLSyntaxError(f"unexpected character {text[pos]!r}", lineno, pos + 1)
            kind = m.lastgroup
            if kind != "ws":
                self.tokens.append((kind, m.group(), pos + 1))
            pos = m.end()
        self.end_column = len(text) + 1
        self.index = 0

    def peek(self) -> Optional[Tuple[str, str, int]]:
        if self.index < len(self.tokens):
            return self.tokens[self.index]
        return None

    def error(self, message: str) -> GDLSyntaxError:
        token = self.peek()
        column = token[2] if token else self.end_column
        return GDLSyntaxError(message, self.lineno, column)

    def next(self, expected: str) -> Tuple[str, str, int]:
        token = self.peek()
        if token is None:
            raise self.error(f"expected {expected}, found end of line")
        self.index += 1
        return token

    def expect_punct(self, char: str) -> None:
        token = self.peek()
        if token is None or token[1] != char:
            found = "end of line" if token is None else repr(token[1])
            raise self.error(f"expected {char!r}, found {found}")
        self.index += 1

    def ident(self) -> str:
        token = self.peek()
        if token is None or token[0] != "word":
            found = "end of line" if token is None else repr(token[1])
            raise self.error(f"expected a variable name, found {found}")
        self.index += 1
        return token[1]

    def bound(self, side: str) -> float:
        token = self.peek()
        if token is None:
            raise self.error("expected a number, found end of line")
        kind, text, _ = token
        if kind == "number":
            value = float(text)
        elif kind == "inf" and side == "lo" and text == "-inf":
            value = -math.inf
        elif side == "hi" and ((kind == "inf" and text == "+inf") or (kind == "word" and text == "inf")):
            value = math.inf
        else:
            expected = "a number or -inf" if side == "lo" else "a number or inf"
            raise self.error(f"expected {expected}, found {text!r}")
        self.index += 1
        return value

    def interval(self) -> Interval:
        start = self.peek()
        self.expect_punct("[")
        lo = self.bound("lo")
        self.expect_punct(",")
        hi = self.bound("hi")
        self.expect_punct("]")
        if lo > hi:
            raise GDLSyntaxError(f"empty interval [{lo}, {hi}]", self.lineno, start[2])
        return Interval(lo, hi)

    def constraints(self) -> Constraints:
        token = self.peek()
        if token is None:
            return None
        self.expect_punct("<")
        vector = [self.interval()]
        while self.peek() is not None and self.peek()[1] == ",":
            self.index += 1
            vector.append(self.interval())
        self.expect_punct(">")
        return tuple(vector)

    def done(self) -> None:
        token = self.peek()
        if token is not None:
            raise self.error(f"unexpected {token[1]!r} after description")


def _parse_line(line: _Line) -> Description:
    kind, keyword, _ = line.next("'node' or 'edge'")
    if kind == "word" and keyword == "node":
        var = line.ident()
        constraints = line.constraints()
        line.done()
        return NodeDescription(var, constraints)
    if kind == "word" and keyword == "edge":
        line.expect_punct("(")
        src = line.ident()
        line.expect_punct(",")
        dst = line.ident()
        line.expect_punct(")")
        constraints = line.constraints()
        line.done()
        return EdgeDescription(src, dst, constraints)
    line.index -= 1
    raise line.error(f"expected 'node' or 'edge', found {keyword!r}")


def parse_program(text: str) -> Program:
    """Parse GDL text into a Program.

    Args:
        text: GDL source

    Returns:
        The parsed Program

    Raises:
        GDLSyntaxError: text does not follow the grammar
        UndeclaredVariableError: an edge names a variable with no node line
        DuplicateVariableError: a variable is declared twice
        DuplicateEdgeError: two edge lines share (src, dst)
    """
    descriptions: List[Description] = []
    lines: List[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("//", 1)[0]
        if not body.strip():
            continue
        descriptions.append(_parse_line(_Line(body, lineno)))
        lines.append(lineno)
    _check_invariants(descriptions, lines)
    return Program(tuple(descriptions))


def validate_against_dataset(p: Program, d: int, c: int) -> None:
    """Check every present constraint vector against feature dimensions.

    Raises:
        DimensionMismatchError: naming the first offending description
    """
    for desc in p.descriptions:
        written = len(desc.constraints) if desc.constraints is not None else desc.width
        if written is None:
            continue
        expected = d if isinstance(desc, NodeDescription) else c
        if written != expected:
            kind = "node" if isinstance(desc, NodeDescription) else "edge"
            raise DimensionMismatchError(
                f"{format_description(desc)!r} has {written} intervals, "
                f"expected {expected} {kind} features"
            )
