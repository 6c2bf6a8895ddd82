"""Centralized brute-force ground truth for queries."""

from __future__ import annotations

from collections import Counter

from frugalfo.catalog import Psi
from frugalfo.errors import CapacityError
from frugalfo.graph import Graph, RType, bfs_distances, canonical_r_type, k_ball
from frugalfo.query import (
    CountAtom,
    CountTerm,
    HanfLeaf,
    Leaf,
    LocalLeaf,
    QueryExpr,
    basic_terms,
    combine,
    eval_hanf_pred,
    leaves,
    term_size,
    term_value,
)

ORACLE_CAP = 400


def satisfying_nodes(g: Graph, psi: Psi, r: int) -> set[int]:
    adj = {v: g.neighbors(v) for v in g.nodes()}
    return {v for v in g.nodes() if psi.holds(adj, v, r)}


def max_scattered(g: Graph, candidates: set[int], r: int, cap: int) -> int:
    """Largest set of candidates pairwise more than 2r apart, counted up to ``cap``."""
    order = sorted(candidates)
    near = {v: {u for u in bfs_distances(g, v, limit=2 * r) if u in candidates} for v in order}
    best = 0

    def grow(chosen: int, pool: list[int]) -> bool:
        nonlocal best
        best = max(best, chosen)
        if best >= cap:
            return True
        if chosen + len(pool) <= best:
            return False
        for i, v in enumerate(pool):
            rest = [u for u in pool[i + 1 :] if u not in near[v]]
            if grow(chosen + 1, rest):
                return True
        return False

    grow(0, order)
    return min(best, cap)


def local_leaf_holds(g: Graph, leaf: LocalLeaf) -> bool:
    return max_scattered(g, satisfying_nodes(g, leaf.psi, leaf.r), leaf.r, leaf.s) >= leaf.s


def count_value(g: Graph, term: CountTerm) -> int:
    return len(satisfying_nodes(g, term.psi, term.r))


def count_atom_holds(g: Graph, atom: CountAtom) -> bool:
    counts = {t: count_value(g, t) for t in set(basic_terms(atom.left) + basic_terms(atom.right))}
    a, b = term_value(atom.left, counts), term_value(atom.right, counts)
    for t, v in ((atom.left, a), (atom.right, b)):
        assert v <= g.n ** term_size(t), "term value exceeds n^|t|"
    return a == b if atom.op == "=" else a < b


def type_table(g: Graph, r: int, cap: int | None = None) -> dict[RType, int]:
    """Exact r-type counts, optionally capped."""
    table = Counter(canonical_r_type(k_ball(g, v, r)) for v in g.nodes())
    if cap is None:
        return dict(table)
    return {t: min(c, cap) for t, c in table.items()}


def hanf_leaf_holds(g: Graph, leaf: HanfLeaf) -> bool:
    return eval_hanf_pred(leaf.pred, type_table(g, leaf.r, leaf.m), leaf.r)


def leaf_holds(g: Graph, leaf: Leaf) -> bool:
    if isinstance(leaf, LocalLeaf):
        return local_leaf_holds(g, leaf)
    if isinstance(leaf, CountAtom):
        return count_atom_holds(g, leaf)
    return hanf_leaf_holds(g, leaf)


def oracle_eval(g: Graph, q: QueryExpr, cap: int = ORACLE_CAP) -> bool:
    if g.n > cap:
        raise CapacityError(f"oracle cap is n <= {cap}, graph has {g.n} nodes")
    return combine(q, {leaf: leaf_holds(g, leaf) for leaf in leaves(q)})
