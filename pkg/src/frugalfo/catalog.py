"""The shipped catalog of local unary properties psi(x).

Each entry has two independent routes: an FO formula (fed to the generic
evaluator) and a direct graph computation on the induced ball.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass

from frugalfo.errors import InputError
from frugalfo.logic import Adj, DistLe, Eq, Formula, Not, Truth, conj, disj, exists_many

KINDS = ("true", "triangle", "degree", "ball-cycle", "ball-tree")


@dataclass(frozen=True)
class Psi:
    """A catalog property, evaluated on the induced radius-r ball of x."""

    kind: str
    threshold: int = 0
    alias: str | None = None

    @property
    def name(self) -> str:
        if self.alias:
            return self.alias
        return f"deg>={self.threshold}" if self.kind == "degree" else self.kind

    def formula(self, r: int, var: str = "x") -> Formula:
        """FO formula with free variable ``var`` (unrelativized)."""
        if self.kind == "true":
            return Truth(True)
        if self.kind == "triangle":
            return exists_many(["_y", "_w"], conj(Adj(var, "_y"), Adj("_y", "_w"), Adj(var, "_w")))
        if self.kind == "degree":
            ys = [f"_y{i}" for i in range(self.threshold)]
            parts: list[Formula] = [Adj(var, y) for y in ys]
            parts += [Not(Eq(a, b)) for i, a in enumerate(ys) for b in ys[i + 1 :]]
            return exists_many(ys, conj(*parts)) if ys else Truth(True)
        cycle = _short_cycle_formula(var, r)
        return cycle if self.kind == "ball-cycle" else Not(cycle)

    def holds(self, adj: Mapping[int, set[int] | tuple[int, ...]], x: int, r: int) -> bool:
        """Direct evaluation on the radius-r ball of x inside ``adj``."""
        if self.kind == "true":
            return True
        if self.kind == "degree":
            return self.threshold == 0 or (r >= 1 and len(adj[x]) >= self.threshold)
        if self.kind == "triangle":
            if r < 1:
                return False
            nbrs = set(adj[x])
            return any(nbrs & set(adj[y]) for y in nbrs)
        ball = _ball(adj, x, r)
        edges = sum(1 for v in ball for u in adj[v] if u in ball) // 2
        has_cycle = edges >= len(ball)
        return has_cycle if self.kind == "ball-cycle" else not has_cycle


def _ball(adj: Mapping[int, set[int] | tuple[int, ...]], x: int, r: int) -> set[int]:
    seen = {x}
    frontier = [x]
    for _ in range(r):
        nxt = []
        for v in frontier:
            for u in adj[v]:
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        frontier = nxt
    return seen


def _short_cycle_formula(var: str, r: int) -> Formula:
    # A connected ball of radius r has a cycle iff it has one of length <= 2r+1.
    options = []
    for k in range(3, 2 * r + 2):
        ys = [f"_c{i}" for i in range(k)]
        parts: list[Formula] = [DistLe(var, y, r) for y in ys]
        parts += [Not(Eq(a, b)) for i, a in enumerate(ys) for b in ys[i + 1 :]]
        parts += [Adj(ys[i], ys[(i + 1) % k]) for i in range(k)]
        options.append(exists_many(ys, conj(*parts)))
    return disj(*options)


_DEG = re.compile(r"deg>=(\d+)$")


def parse_psi(token: str) -> Psi:
    token = token.strip()
    if token in ("true", "triangle", "ball-cycle", "ball-tree"):
        return Psi(token)
    if token == "path2":
        return Psi("degree", 2, alias="path2")
    m = _DEG.match(token)
    if m:
        return Psi("degree", int(m.group(1)))
    raise InputError(f"unknown property {token!r}; catalog: true, triangle, deg>=<d>, path2, ball-cycle, ball-tree")
