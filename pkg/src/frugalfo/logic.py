"""First-order formulas over graphs: AST, evaluation, quantifier rank and relativization."""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable
from dataclasses import dataclass

from frugalfo.errors import InputError
from frugalfo.graph import Graph


class Formula:
    """Base class of the FO AST (signature: E, =, dist<=c, unary labels)."""

    def free_vars(self) -> frozenset[str]:
        raise NotImplementedError

    def children(self) -> tuple[Formula, ...]:
        return ()


@dataclass(frozen=True)
class Truth(Formula):
    value: bool

    def free_vars(self) -> frozenset[str]:
        return frozenset()


@dataclass(frozen=True)
class Adj(Formula):
    a: str
    b: str

    def free_vars(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class Eq(Formula):
    a: str
    b: str

    def free_vars(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class DistLe(Formula):
    """dist(a, b) <= bound in the ambient graph."""

    a: str
    b: str
    bound: int

    def free_vars(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class Label(Formula):
    name: str
    a: str

    def free_vars(self) -> frozenset[str]:
        return frozenset((self.a,))


@dataclass(frozen=True)
class Not(Formula):
    body: Formula

    def free_vars(self) -> frozenset[str]:
        return self.body.free_vars()

    def children(self) -> tuple[Formula, ...]:
        return (self.body,)


@dataclass(frozen=True)
class And(Formula):
    parts: tuple[Formula, ...]

    def free_vars(self) -> frozenset[str]:
        return frozenset().union(*(p.free_vars() for p in self.parts))

    def children(self) -> tuple[Formula, ...]:
        return self.parts


@dataclass(frozen=True)
class Or(Formula):
    parts: tuple[Formula, ...]

    def free_vars(self) -> frozenset[str]:
        return frozenset().union(*(p.free_vars() for p in self.parts))

    def children(self) -> tuple[Formula, ...]:
        return self.parts


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def free_vars(self) -> frozenset[str]:
        return self.left.free_vars() | self.right.free_vars()

    def children(self) -> tuple[Formula, ...]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula

    def free_vars(self) -> frozenset[str]:
        return self.body.free_vars() - {self.var}

    def children(self) -> tuple[Formula, ...]:
        return (self.body,)


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula

    def free_vars(self) -> frozenset[str]:
        return self.body.free_vars() - {self.var}

    def children(self) -> tuple[Formula, ...]:
        return (self.body,)


def conj(*parts: Formula) -> Formula:
    return parts[0] if len(parts) == 1 else And(tuple(parts))


def disj(*parts: Formula) -> Formula:
    if not parts:
        return Truth(False)
    return parts[0] if len(parts) == 1 else Or(tuple(parts))


def exists_many(names: Iterable[str], body: Formula) -> Formula:
    for name in reversed(list(names)):
        body = Exists(name, body)
    return body


def quantifier_rank(f: Formula) -> int:
    below = max((quantifier_rank(c) for c in f.children()), default=0)
    return below + 1 if isinstance(f, (Exists, Forall)) else below


def bound_vars(f: Formula) -> set[str]:
    out = {f.var} if isinstance(f, (Exists, Forall)) else set()
    for c in f.children():
        out |= bound_vars(c)
    return out


def gaifman_bounds(k: int, p: int = 0, improved: bool = False) -> tuple[int, int, int]:
    """Radius, witness-count and local-rank bounds for a rank-k formula with p free variables."""
    if k < 1:
        raise InputError("quantifier rank must be at least 1")
    r_max = 4**k - 1 if improved else 7 ** (k - 1)
    return r_max, p + k, (7**k - 1) // 2


# ---------------------------------------------------------------------------
# relativization


def relativize(f: Formula, r: int, anchor: str) -> Formula:
    """Bound every quantifier of ``f`` to the radius-``r`` ball around ``anchor``.

    Distance atoms of ``f`` itself are expanded into guarded path formulas so
    that they, too, are measured inside the ball; the guards added here are
    distances in the ambient graph.
    """
    if anchor in bound_vars(f):
        raise InputError(f"anchor variable {anchor!r} is quantified inside the formula")
    fresh = _FreshNames(_all_vars(f) | {anchor})
    return _rel(f, r, anchor, fresh)


class _FreshNames:
    def __init__(self, taken: set[str]) -> None:
        self.taken = set(taken)
        self.counter = itertools.count()

    def __call__(self) -> str:
        while True:
            name = f"_z{next(self.counter)}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def _all_vars(f: Formula) -> set[str]:
    out = set(f.free_vars()) | bound_vars(f)
    for c in f.children():
        out |= _all_vars(c)
    return out


def _rel(f: Formula, r: int, anchor: str, fresh: _FreshNames) -> Formula:
    if isinstance(f, Exists):
        return Exists(f.var, And((DistLe(anchor, f.var, r), _rel(f.body, r, anchor, fresh))))
    if isinstance(f, Forall):
        return Forall(f.var, Implies(DistLe(anchor, f.var, r), _rel(f.body, r, anchor, fresh)))
    if isinstance(f, DistLe):
        if f.bound <= 1:
            return Eq(f.a, f.b) if f.bound == 0 else Or((Eq(f.a, f.b), Adj(f.a, f.b)))
        return _rel(_expand_dist(f.a, f.b, f.bound, fresh), r, anchor, fresh)
    if isinstance(f, Not):
        return Not(_rel(f.body, r, anchor, fresh))
    if isinstance(f, And):
        return And(tuple(_rel(p, r, anchor, fresh) for p in f.parts))
    if isinstance(f, Or):
        return Or(tuple(_rel(p, r, anchor, fresh) for p in f.parts))
    if isinstance(f, Implies):
        return Implies(_rel(f.left, r, anchor, fresh), _rel(f.right, r, anchor, fresh))
    return f


def _expand_dist(a: str, b: str, bound: int, fresh: _FreshNames) -> Formula:
    if bound == 0:
        return Eq(a, b)
    if bound == 1:
        return Or((Eq(a, b), Adj(a, b)))
    z = fresh()
    return Or((Eq(a, b), Exists(z, And((Adj(a, z), _expand_dist(z, b, bound - 1, fresh))))))


# ---------------------------------------------------------------------------
# evaluation


class Structure:
    """A graph (or an induced ball of one) viewed as a finite structure."""

    def __init__(self, domain: Iterable[int], adjacency: dict[int, set[int]], labels: dict[str, set[int]] | None = None) -> None:
        self.domain = tuple(sorted(domain))
        self.adj = adjacency
        self.labels = labels or {}
        self._dist: dict[int, dict[int, int]] = {}

    @classmethod
    def of_graph(cls, g: Graph, labels: dict[str, set[int]] | None = None) -> Structure:
        return cls(g.nodes(), {v: set(g.neighbors(v)) for v in g.nodes()}, labels)

    @classmethod
    def of_ball(cls, g: Graph, nodes: Iterable[int], labels: dict[str, set[int]] | None = None) -> Structure:
        keep = set(nodes)
        return cls(keep, {v: set(g.neighbors(v)) & keep for v in keep}, labels)

    def dist(self, a: int, b: int) -> float:
        if a not in self._dist:
            self._dist[a] = _bfs(self.adj, a)
        return self._dist[a].get(b, float("inf"))


def _bfs(adj: dict[int, set[int]], source: int) -> dict[int, int]:
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for v in frontier:
            for u in adj[v]:
                if u not in dist:
                    dist[u] = dist[v] + 1
                    nxt.append(u)
        frontier = nxt
    return dist


def evaluate(f: Formula, s: Structure, env: dict[str, int]) -> bool:
    if isinstance(f, Truth):
        return f.value
    if isinstance(f, Adj):
        return env[f.b] in s.adj[env[f.a]]
    if isinstance(f, Eq):
        return env[f.a] == env[f.b]
    if isinstance(f, DistLe):
        return s.dist(env[f.a], env[f.b]) <= f.bound
    if isinstance(f, Label):
        return env[f.a] in s.labels.get(f.name, ())
    if isinstance(f, Not):
        return not evaluate(f.body, s, env)
    if isinstance(f, And):
        return all(evaluate(p, s, env) for p in f.parts)
    if isinstance(f, Or):
        return any(evaluate(p, s, env) for p in f.parts)
    if isinstance(f, Implies):
        return (not evaluate(f.left, s, env)) or evaluate(f.right, s, env)
    if isinstance(f, (Exists, Forall)):
        want = isinstance(f, Exists)
        saved = env.get(f.var)
        try:
            for v in s.domain:
                env[f.var] = v
                if evaluate(f.body, s, env) == want:
                    return want
            return not want
        finally:
            if saved is None:
                env.pop(f.var, None)
            else:
                env[f.var] = saved
    raise InputError(f"unknown formula node {type(f).__name__}")


Evaluator = Callable[[Graph, int, int], bool]
