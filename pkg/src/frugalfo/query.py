"""Query ASTs, the s-expression query language and FO(#) normalization.

Grammar (whitespace separated, ``;`` starts a comment)::

    query  := expr | (with :d <int> expr)
    expr   := (and expr...) | (or expr...) | (not expr) | (implies expr expr) | (iff expr expr)
            | (local :r <int> :s <int> :psi <psi>)
            | (count= t t) | (count< t t) | (count<= t t) | (count> t t) | (count>= t t) | (count!= t t)
            | (hanf :r <int> :m <int> pred)
    t      := (# <psi> [:r <int>]) | (+ t t) | (* t t) | (- t t)
    psi    := true | triangle | path2 | deg>=<d> | ball-cycle | ball-tree
    pred   := (>= <int> <type>) | (has <type>) | (and pred...) | (or pred...) | (not pred)
    type   := path3 | edge-end | single | star<k> | (rooted :root <v> :edges ((u v) ...))
"""

from __future__ import annotations

import re
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import TypeVar, Union

from frugalfo.catalog import Psi, parse_psi
from frugalfo.errors import ConfigurationError, InputError
from frugalfo.graph import Graph, RType, canonical_r_type, k_ball

# ---------------------------------------------------------------------------
# leaves and terms


@dataclass(frozen=True)
class LocalLeaf:
    """Basic local sentence: s witnesses pairwise more than 2r apart, each satisfying psi in its r-ball."""

    r: int
    s: int
    psi: Psi

    def __post_init__(self) -> None:
        if self.r < 0 or self.s < 1:
            raise InputError("a local sentence needs r >= 0 and s >= 1")


@dataclass(frozen=True)
class CountTerm:
    """#x.psi(x), with psi evaluated on the radius-r ball of x."""

    psi: Psi
    r: int = 1


@dataclass(frozen=True)
class TermOp:
    op: str  # "+", "*" or "-" (truncated at zero)
    left: Term
    right: Term


Term = Union[CountTerm, TermOp]


@dataclass(frozen=True)
class CountAtom:
    op: str  # "=" or "<" after normalization
    left: Term
    right: Term


@dataclass(frozen=True)
class TypeSpec:
    """A named rooted graph whose r-ball code a predicate refers to."""

    name: str
    n: int
    root: int
    edges: tuple[tuple[int, int], ...]

    def code(self, r: int) -> RType:
        return canonical_r_type(k_ball(Graph(self.n, self.edges), self.root, r))


@dataclass(frozen=True)
class HanfPred:
    op: str  # ">=", "has", "and", "or", "not"
    threshold: int = 0
    type_spec: TypeSpec | None = None
    parts: tuple[HanfPred, ...] = ()


@dataclass(frozen=True)
class HanfLeaf:
    r: int
    m: int
    pred: HanfPred


Leaf = Union[LocalLeaf, CountAtom, HanfLeaf]


@dataclass(frozen=True)
class QAnd:
    parts: tuple[QueryExpr, ...]


@dataclass(frozen=True)
class QOr:
    parts: tuple[QueryExpr, ...]


@dataclass(frozen=True)
class QNot:
    body: QueryExpr


@dataclass(frozen=True)
class RawCmp:
    """Comparison of count terms before normalization."""

    op: str
    left: Term
    right: Term


@dataclass(frozen=True)
class QImplies:
    left: QueryExpr
    right: QueryExpr


@dataclass(frozen=True)
class QIff:
    left: QueryExpr
    right: QueryExpr


QueryExpr = Union[QAnd, QOr, QNot, QImplies, QIff, RawCmp, LocalLeaf, CountAtom, HanfLeaf]


@dataclass
class ParsedQuery:
    expr: QueryExpr
    degree_bound: int | None = None
    flags: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# term helpers


def term_size(t: Term) -> int:
    """Number of basic #-terms in t."""
    if isinstance(t, CountTerm):
        return 1
    return term_size(t.left) + term_size(t.right)


def basic_terms(t: Term) -> list[CountTerm]:
    if isinstance(t, CountTerm):
        return [t]
    return basic_terms(t.left) + basic_terms(t.right)


def term_value(t: Term, counts: dict[CountTerm, int]) -> int:
    if isinstance(t, CountTerm):
        return counts[t]
    a, b = term_value(t.left, counts), term_value(t.right, counts)
    if t.op == "+":
        return a + b
    if t.op == "*":
        return a * b
    return max(0, a - b)


def has_subtraction(t: Term) -> bool:
    if isinstance(t, CountTerm):
        return False
    return t.op == "-" or has_subtraction(t.left) or has_subtraction(t.right)


def leaves(e: QueryExpr) -> list[Leaf]:
    if isinstance(e, (LocalLeaf, CountAtom, HanfLeaf)):
        return [e]
    if isinstance(e, RawCmp):
        raise InputError("query is not normalized")
    if isinstance(e, QNot):
        return leaves(e.body)
    if isinstance(e, (QImplies, QIff)):
        return leaves(e.left) + leaves(e.right)
    return [x for p in e.parts for x in leaves(p)]


def combine(e: QueryExpr, value: dict[Leaf, bool]) -> bool:
    """Evaluate the Boolean structure given truth values for every leaf."""
    if isinstance(e, (LocalLeaf, CountAtom, HanfLeaf)):
        return value[e]
    if isinstance(e, QNot):
        return not combine(e.body, value)
    if isinstance(e, QAnd):
        return all(combine(p, value) for p in e.parts)
    if isinstance(e, QOr):
        return any(combine(p, value) for p in e.parts)
    if isinstance(e, QImplies):
        return (not combine(e.left, value)) or combine(e.right, value)
    if isinstance(e, QIff):
        return combine(e.left, value) == combine(e.right, value)
    raise InputError("query is not normalized")


# ---------------------------------------------------------------------------
# normalization


def normalize_count(e: QueryExpr, flags: list[str] | None = None) -> QueryExpr:
    """Rewrite into and/or/not over local leaves, Hanf leaves and = / < count atoms."""
    if flags is None:
        flags = []
    if isinstance(e, (LocalLeaf, HanfLeaf)):
        return e
    if isinstance(e, CountAtom):
        _flag_sub(e.left, e.right, flags)
        if e.op not in ("=", "<"):
            return normalize_count(RawCmp(e.op, e.left, e.right), flags)
        return e
    if isinstance(e, RawCmp):
        _flag_sub(e.left, e.right, flags)
        a, b = e.left, e.right
        if e.op == "=":
            return CountAtom("=", a, b)
        if e.op == "<":
            return CountAtom("<", a, b)
        if e.op == "<=":
            return QOr((CountAtom("<", a, b), CountAtom("=", a, b)))
        if e.op == ">":
            return CountAtom("<", b, a)
        if e.op == ">=":
            return QOr((CountAtom("<", b, a), CountAtom("=", a, b)))
        if e.op == "!=":
            return QNot(CountAtom("=", a, b))
        raise InputError(f"unsupported comparison {e.op!r}")
    if isinstance(e, QNot):
        return QNot(normalize_count(e.body, flags))
    if isinstance(e, QAnd):
        return QAnd(tuple(normalize_count(p, flags) for p in e.parts))
    if isinstance(e, QOr):
        return QOr(tuple(normalize_count(p, flags) for p in e.parts))
    if isinstance(e, QImplies):
        return QOr((QNot(normalize_count(e.left, flags)), normalize_count(e.right, flags)))
    if isinstance(e, QIff):
        a, b = normalize_count(e.left, flags), normalize_count(e.right, flags)
        return QOr((QAnd((a, b)), QAnd((QNot(a), QNot(b)))))
    raise InputError(f"unsupported construct {type(e).__name__}")


def _flag_sub(a: Term, b: Term, flags: list[str]) -> None:
    if (has_subtraction(a) or has_subtraction(b)) and "truncated-subtraction" not in flags:
        flags.append("truncated-subtraction")


# ---------------------------------------------------------------------------
# s-expression reader

_TOKEN = re.compile(r"\(|\)|[^\s()]+")
SExpr = Union[str, list["SExpr"]]
_T = TypeVar("_T")


class Form(list):  # type: ignore[type-arg]
    """A parenthesized group that remembers the line it opened on."""

    line: int | None = None


def _tokens(text: str) -> list[tuple[str, int]]:
    out = []
    for number, raw in enumerate(text.splitlines(), start=1):
        out.extend((tok, number) for tok in _TOKEN.findall(raw.split(";", 1)[0]))
    return out


def read_sexpr(text: str) -> SExpr:
    tokens = _tokens(text)
    if not tokens:
        raise InputError("empty query")
    pos = 0

    def parse() -> SExpr:
        nonlocal pos
        if pos >= len(tokens):
            raise InputError("unexpected end of query", tokens[-1][1])
        tok, line = tokens[pos]
        pos += 1
        if tok == "(":
            out = Form()
            out.line = line
            while pos < len(tokens) and tokens[pos][0] != ")":
                out.append(parse())
            if pos >= len(tokens):
                raise InputError("unbalanced parentheses", line)
            pos += 1
            return out
        if tok == ")":
            raise InputError("unexpected ')'", line)
        return tok

    tree = parse()
    if pos != len(tokens):
        raise InputError("trailing input after the query", tokens[pos][1])
    return tree


def _located(fn: Callable[[SExpr], _T]) -> Callable[[SExpr], _T]:
    """Attach the line of the innermost form to errors that lack one."""

    def wrapper(x: SExpr) -> _T:
        try:
            return fn(x)
        except InputError as exc:
            line = getattr(x, "line", None)
            if exc.line is None and line is not None:
                raise InputError(str(exc), line) from None
            raise

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _keywords(items: list[SExpr], allowed: set[str]) -> tuple[dict[str, SExpr], list[SExpr]]:
    kw: dict[str, SExpr] = {}
    rest: list[SExpr] = []
    i = 0
    while i < len(items):
        it = items[i]
        if isinstance(it, str) and it.startswith(":"):
            key = it[1:]
            if key not in allowed:
                raise InputError(f"unknown keyword :{key}")
            if i + 1 >= len(items):
                raise InputError(f"keyword :{key} needs a value")
            kw[key] = items[i + 1]
            i += 2
        else:
            rest.append(it)
            i += 1
    return kw, rest


def _as_int(x: SExpr, what: str) -> int:
    if isinstance(x, str):
        try:
            return int(x)
        except ValueError:
            pass
    raise InputError(f"{what} must be an integer")


def _psi(x: SExpr) -> Psi:
    if isinstance(x, list):
        if len(x) == 2 and x[0] == "deg>=":
            return parse_psi(f"deg>={_as_int(x[1], 'degree threshold')}")
        raise InputError(f"malformed property {x!r}")
    return parse_psi(x)


_COMPARE = {"count=": "=", "count<": "<", "count<=": "<=", "count>": ">", "count>=": ">=", "count!=": "!="}
_UNSUPPORTED = ("exists-count", "forall-count", "exists", "forall")


def parse_query(text: str) -> ParsedQuery:
    tree = read_sexpr(text)
    degree_bound = None
    if isinstance(tree, list) and tree and tree[0] == "with":
        kw, rest = _keywords(tree[1:], {"d"})
        if len(rest) != 1:
            raise InputError("(with ...) wraps exactly one expression")
        if "d" in kw:
            degree_bound = _as_int(kw["d"], ":d")
        tree = rest[0]
    return ParsedQuery(_expr(tree), degree_bound)


@_located
def _expr(x: SExpr) -> QueryExpr:
    if not isinstance(x, list) or not x or not isinstance(x[0], str):
        raise InputError(f"expected a query form, got {x!r}")
    head, args = x[0], x[1:]
    if head in _UNSUPPORTED:
        raise InputError(f"unsupported construct '{head}': quantification outside local leaves is not in the fragment")
    if head in ("and", "or"):
        if not args:
            raise InputError(f"({head}) needs operands")
        parts = tuple(_expr(a) for a in args)
        return QAnd(parts) if head == "and" else QOr(parts)
    if head == "not":
        if len(args) != 1:
            raise InputError("(not ...) takes one operand")
        return QNot(_expr(args[0]))
    if head in ("implies", "iff"):
        if len(args) != 2:
            raise InputError(f"({head} ...) takes two operands")
        cls = QImplies if head == "implies" else QIff
        return cls(_expr(args[0]), _expr(args[1]))
    if head == "local":
        kw, rest = _keywords(args, {"r", "s", "psi"})
        if rest or set(kw) != {"r", "s", "psi"}:
            raise InputError("malformed local leaf; expected (local :r <int> :s <int> :psi <psi>)")
        return LocalLeaf(_as_int(kw["r"], ":r"), _as_int(kw["s"], ":s"), _psi(kw["psi"]))
    if head in _COMPARE:
        if len(args) != 2:
            raise InputError(f"({head} ...) compares two terms")
        return RawCmp(_COMPARE[head], _term(args[0]), _term(args[1]))
    if head == "hanf":
        kw, rest = _keywords(args, {"r", "m"})
        if len(rest) != 1 or set(kw) != {"r", "m"}:
            raise InputError("malformed Hanf leaf; expected (hanf :r <int> :m <int> <predicate>)")
        r, m = _as_int(kw["r"], ":r"), _as_int(kw["m"], ":m")
        pred = _pred(rest[0])
        check_hanf_thresholds(pred, m)
        return HanfLeaf(r, m, pred)
    raise InputError(f"unknown query form '{head}'")


@_located
def _term(x: SExpr) -> Term:
    if not isinstance(x, list) or not x:
        raise InputError(f"expected a count term, got {x!r}")
    head = x[0]
    if head == "#":
        kw, rest = _keywords(x[1:], {"r"})
        if len(rest) != 1:
            raise InputError("malformed count term; expected (# <psi> [:r <int>])")
        body = rest[0]
        if isinstance(body, list) and body and body[0] in _COMPARE:
            raise InputError("unsupported construct: count comparison inside a # body")
        return CountTerm(_psi(body), _as_int(kw.get("r", "1"), ":r"))
    if head in ("+", "*", "-"):
        if len(x) != 3:
            raise InputError(f"({head} t t) takes two terms")
        return TermOp(head, _term(x[1]), _term(x[2]))
    raise InputError(f"unknown term form {head!r}")


_STAR = re.compile(r"star(\d+)$")


def named_type(name: str) -> TypeSpec:
    if name == "path3":
        return TypeSpec("path3", 3, 2, ((1, 2), (2, 3)))
    if name == "edge-end":
        return TypeSpec("edge-end", 2, 1, ((1, 2),))
    if name == "single":
        return TypeSpec("single", 1, 1, ())
    m = _STAR.match(name)
    if m:
        k = int(m.group(1))
        return TypeSpec(name, k + 1, 1, tuple((1, i) for i in range(2, k + 2)))
    raise InputError(f"unknown type name {name!r}")


@_located
def _type(x: SExpr) -> TypeSpec:
    if isinstance(x, str):
        return named_type(x)
    if x and x[0] == "rooted":
        kw, rest = _keywords(x[1:], {"root", "edges"})
        if rest or "edges" not in kw or "root" not in kw or not isinstance(kw["edges"], list):
            raise InputError("malformed type; expected (rooted :root <v> :edges ((u v) ...))")
        edges = []
        for e in kw["edges"]:
            if not isinstance(e, list) or len(e) != 2:
                raise InputError("edges are (u v) pairs")
            edges.append((_as_int(e[0], "node"), _as_int(e[1], "node")))
        root = _as_int(kw["root"], ":root")
        n = max([root] + [max(e) for e in edges])
        return TypeSpec("rooted", n, root, tuple(edges))
    raise InputError(f"malformed type {x!r}")


@_located
def _pred(x: SExpr) -> HanfPred:
    if not isinstance(x, list) or not x:
        raise InputError(f"expected a predicate, got {x!r}")
    head = x[0]
    if head == ">=":
        if len(x) != 3:
            raise InputError("(>= <count> <type>)")
        return HanfPred(">=", threshold=_as_int(x[1], "threshold"), type_spec=_type(x[2]))
    if head == "has":
        if len(x) != 2:
            raise InputError("(has <type>)")
        return HanfPred("has", threshold=1, type_spec=_type(x[1]))
    if head in ("and", "or"):
        return HanfPred(head, parts=tuple(_pred(p) for p in x[1:]))
    if head == "not":
        if len(x) != 2:
            raise InputError("(not <predicate>)")
        return HanfPred("not", parts=(_pred(x[1]),))
    raise InputError(f"unknown predicate form {head!r}")


def check_hanf_thresholds(pred: HanfPred, m: int) -> None:
    if pred.op in (">=", "has") and pred.threshold >= m:
        raise ConfigurationError(f"threshold {pred.threshold} is not below the cap m={m}; capped counts cannot decide it")
    for p in pred.parts:
        check_hanf_thresholds(p, m)


def eval_hanf_pred(pred: HanfPred, table: dict[RType, int], r: int) -> bool:
    if pred.op in (">=", "has"):
        assert pred.type_spec is not None
        return table.get(pred.type_spec.code(r), 0) >= pred.threshold
    if pred.op == "and":
        return all(eval_hanf_pred(p, table, r) for p in pred.parts)
    if pred.op == "or":
        return any(eval_hanf_pred(p, table, r) for p in pred.parts)
    return not eval_hanf_pred(pred.parts[0], table, r)


def load_query(text: str) -> ParsedQuery:
    """Parse and normalize a query file."""
    parsed = parse_query(text)
    flags: list[str] = []
    parsed.expr = normalize_count(parsed.expr, flags)
    parsed.flags = flags
    return parsed
