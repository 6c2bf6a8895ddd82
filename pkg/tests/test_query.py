from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frugalfo.catalog import Psi, parse_psi
from frugalfo.errors import CapacityError, ConfigurationError, InputError
from frugalfo.generators import cycle, random_planar
from frugalfo.graph import Graph, k_ball
from frugalfo.logic import (
    Adj,
    And,
    DistLe,
    Exists,
    Forall,
    Formula,
    Implies,
    Structure,
    Truth,
    evaluate,
    gaifman_bounds,
    quantifier_rank,
    relativize,
)
from frugalfo.oracle import count_value, leaf_holds, oracle_eval
from frugalfo.query import (
    CountAtom,
    CountTerm,
    LocalLeaf,
    QAnd,
    QNot,
    QOr,
    RawCmp,
    TermOp,
    combine,
    leaves,
    load_query,
    normalize_count,
    term_value,
)
from instances import small_connected_graphs, triangle_with_tail, two_triangles

TRIANGLE = parse_psi("triangle")
TRUE = parse_psi("true")
CATALOG = ["true", "triangle", "path2", "deg>=3", "ball-cycle", "ball-tree"]


def test_quantifier_rank_examples() -> None:
    assert quantifier_rank(Adj("x", "y")) == 0
    assert quantifier_rank(Exists("x", Exists("y", Adj("x", "y")))) == 2
    mixed = And((Exists("x", Adj("x", "x")), Exists("z", Exists("w", Adj("z", "w")))))
    assert quantifier_rank(mixed) == 2


def test_gaifman_bounds_examples() -> None:
    assert gaifman_bounds(1, 0) == (1, 1, 3)
    assert gaifman_bounds(2, 0) == (7, 2, 24)
    assert gaifman_bounds(2, 0, improved=True)[0] == 15
    with pytest.raises(InputError):
        gaifman_bounds(0)


@given(st.integers(1, 6), st.integers(0, 5))
def test_gaifman_bounds_are_monotone(k: int, p: int) -> None:
    here = gaifman_bounds(k, p)
    assert all(a <= b for a, b in zip(here, gaifman_bounds(k + 1, p)))
    assert all(a <= b for a, b in zip(here, gaifman_bounds(k, p + 1)))
    assert gaifman_bounds(k, p, improved=True)[0] <= gaifman_bounds(k + 1, p, improved=True)[0]


def test_relativize_examples() -> None:
    body = Adj("y", "y")
    assert relativize(Exists("y", body), 2, "x") == Exists("y", And((DistLe("x", "y", 2), body)))
    assert relativize(Forall("y", body), 2, "x") == Forall("y", Implies(DistLe("x", "y", 2), body))
    assert relativize(Adj("x", "z"), 3, "x") == Adj("x", "z")
    with pytest.raises(InputError):
        relativize(Exists("x", body), 1, "x")


def _formula_cases(r: int) -> list[tuple[str, Formula]]:
    cases = [(name, parse_psi(name).formula(r)) for name in CATALOG]
    cases.append(("forall-neighbour-has-degree-2", Forall("y", Implies(Adj("x", "y"), parse_psi("path2").formula(r, "y")))))
    return cases


@pytest.mark.parametrize("r", [1, 2])
def test_relativization_matches_ball_semantics(r: int) -> None:
    for g in small_connected_graphs(6):
        whole = Structure.of_graph(g)
        for name, f in _formula_cases(r):
            rel = relativize(f, r, "x")
            for v in g.nodes():
                ball = Structure.of_ball(g, k_ball(g, v, r).nodes)
                assert evaluate(rel, whole, {"x": v}) == evaluate(f, ball, {"x": v}), (g, name, v)


@pytest.mark.parametrize("r", [1, 2])
def test_catalog_formulas_agree_with_direct_routes(r: int) -> None:
    for g in small_connected_graphs(6):
        adj = {v: g.neighbors(v) for v in g.nodes()}
        for name in CATALOG:
            psi = parse_psi(name)
            for v in g.nodes():
                ball = Structure.of_ball(g, k_ball(g, v, r).nodes)
                assert evaluate(psi.formula(r), ball, {"x": v}) == psi.holds(adj, v, r), (g, name, v)


def test_oracle_examples() -> None:
    leaf = LocalLeaf(1, 2, TRIANGLE)
    g, _ = two_triangles(5)
    assert oracle_eval(g, leaf)
    g, _ = triangle_with_tail(4)
    assert not oracle_eval(g, leaf)
    c4, _ = cycle(4)
    atom = CountAtom("=", CountTerm(parse_psi("path2"), 1), CountTerm(TRUE, 1))
    assert oracle_eval(c4, atom)


def test_oracle_cap() -> None:
    g, _ = cycle(10)
    with pytest.raises(CapacityError):
        oracle_eval(g, LocalLeaf(1, 1, TRUE), cap=5)


def test_local_leaf_rejects_bad_parameters() -> None:
    with pytest.raises(InputError):
        LocalLeaf(1, 0, TRUE)
    with pytest.raises(InputError):
        LocalLeaf(-1, 1, TRUE)


def test_normalize_count_examples() -> None:
    a, b = CountTerm(TRIANGLE), CountTerm(TRUE)
    atom = CountAtom("<", a, b)
    assert normalize_count(atom) == atom
    sigma = LocalLeaf(1, 1, TRUE)
    raw = QAnd((QNot(RawCmp("=", a, b)), sigma))
    assert normalize_count(raw) == QAnd((QNot(CountAtom("=", a, b)), sigma))
    nested = TermOp("*", TermOp("+", a, b), CountTerm(parse_psi("path2")))
    out = normalize_count(RawCmp("=", nested, b))
    assert out == CountAtom("=", nested, b)


def test_subtraction_is_truncated_and_flagged() -> None:
    a, b = CountTerm(TRIANGLE), CountTerm(TRUE)
    flags: list[str] = []
    normalize_count(RawCmp("=", TermOp("-", a, b), a), flags)
    assert flags == ["truncated-subtraction"]
    assert term_value(TermOp("-", a, b), {a: 2, b: 5}) == 0


OPS = {"=": int.__eq__, "<": int.__lt__, "<=": int.__le__, ">": int.__gt__, ">=": int.__ge__, "!=": int.__ne__}


@settings(max_examples=20, deadline=None)
@given(st.integers(3, 30), st.integers(0, 10**6), st.sampled_from(sorted(OPS)))
def test_normalize_count_preserves_truth(n: int, seed: int, op: str) -> None:
    g, _ = random_planar(n, seed)
    rng = random.Random(seed)
    terms = [CountTerm(parse_psi(rng.choice(CATALOG)), rng.randint(1, 2)) for _ in range(3)]
    left = TermOp("*", TermOp("+", terms[0], terms[1]), terms[2])
    right = TermOp("+", terms[2], terms[0])
    counts = {t: count_value(g, t) for t in terms}
    want = OPS[op](term_value(left, counts), term_value(right, counts))
    assert oracle_eval(g, normalize_count(RawCmp(op, left, right))) == want


def test_oracle_is_compositional() -> None:
    rng = random.Random(7)
    for g in small_connected_graphs(5):
        parts = [LocalLeaf(rng.randint(0, 2), rng.randint(1, 2), parse_psi(rng.choice(CATALOG))) for _ in range(3)]
        expr = QOr((QAnd((parts[0], QNot(parts[1]))), parts[2]))
        values = {leaf: leaf_holds(g, leaf) for leaf in leaves(expr)}
        assert oracle_eval(g, expr) == combine(expr, values)


def test_load_query_reads_the_documented_example() -> None:
    parsed = load_query("(and (local :r 1 :s 2 :psi triangle) (not (count< (# path2) (# true))))")
    assert parsed.degree_bound is None
    local, atom = leaves(parsed.expr)
    assert local == LocalLeaf(1, 2, TRIANGLE)
    assert isinstance(atom, CountAtom) and atom.op == "<"
    bounded = load_query("; comment\n(with :d 3 (hanf :r 1 :m 5 (>= 2 path3)))")
    assert bounded.degree_bound == 3


def test_load_query_rewrites_comparisons() -> None:
    parsed = load_query("(count>= (# triangle) (# true :r 2))")
    a, b = CountTerm(TRIANGLE, 1), CountTerm(TRUE, 2)
    assert parsed.expr == QOr((CountAtom("<", b, a), CountAtom("=", a, b)))


@pytest.mark.parametrize(
    ("text", "pattern"),
    [
        ("(and\n (local :r 1 :s 2 :psi triangle)\n (local :r 1 :s x :psi true))", "line 3: :s must be an integer"),
        ("(local :r 1 :s 2)", "malformed local leaf"),
        ("(exists x (local :r 1 :s 1 :psi true))", "unsupported construct 'exists'"),
        ("(local :r 1 :s 1 :psi wobbly)", "unknown property"),
        ("(and (local :r 1 :s 1 :psi true)", "unbalanced"),
        ("(count= (# (count< (# true) (# true))) (# true))", "count comparison inside"),
        ("", "empty query"),
    ],
)
def test_query_parse_errors(text: str, pattern: str) -> None:
    with pytest.raises(InputError, match=pattern):
        load_query(text)


def test_hanf_threshold_must_stay_below_cap() -> None:
    with pytest.raises(ConfigurationError):
        load_query("(with :d 3 (hanf :r 1 :m 3 (>= 4 path3)))")


def test_psi_names_round_trip() -> None:
    for name in CATALOG + ["deg>=5"]:
        assert parse_psi(name).name == name
    assert parse_psi("path2") == Psi("degree", 2, alias="path2")


def test_count_values_on_small_graphs() -> None:
    g, _ = two_triangles(4)
    assert g.n == 9
    assert count_value(g, CountTerm(TRIANGLE)) == 6
    for n, k in itertools.product((3, 5), (1, 2)):
        c, _ = cycle(n)
        assert count_value(c, CountTerm(parse_psi("ball-cycle"), k)) == (n if 2 * k + 1 >= n else 0)


def test_truth_formula_evaluates() -> None:
    g = Graph(1, [])
    assert evaluate(Truth(True), Structure.of_graph(g), {})
