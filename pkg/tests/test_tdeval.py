from __future__ import annotations

import itertools
import random

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frugalfo.errors import CapacityError, InputError
from frugalfo.generators import cycle, grid, random_planar
from frugalfo.graph import Graph, OrderedTreeDecomposition, check_tree_decomposition
from frugalfo.oracle import max_scattered
from frugalfo.tdeval import (
    SINK,
    ElementEncoding,
    LabeledTree,
    TreeAutomaton,
    binarize,
    decode_element,
    decode_set,
    elem_check,
    encode_element,
    encode_set,
    format_automaton,
    pad_bags,
    parse_automaton,
    rank,
    run_automaton,
    scattered_count,
    scattered_dp,
    set_check,
    sigma_label,
    sigma_labels,
    three_pass,
)
from automata_cases import brute_force_assignments, check_three_pass_case, random_tree


def heuristic_decomposition(g: Graph) -> OrderedTreeDecomposition:
    """A valid decomposition from the networkx min-degree heuristic, rooted at its first bag."""
    h = nx.Graph(list(g.edges()))
    h.add_nodes_from(g.nodes())
    _, tree = nx.algorithms.approximation.treewidth_min_degree(h)
    bags = sorted(tree.nodes(), key=lambda b: sorted(b))
    index = {b: i + 1 for i, b in enumerate(bags)}
    parent: dict[int, int | None] = {1: None}
    for a, b in nx.bfs_edges(tree, bags[0]):
        parent[index[b]] = index[a]
    return OrderedTreeDecomposition({index[b]: tuple(sorted(b)) for b in bags}, parent)


def test_binarize_examples() -> None:
    single = OrderedTreeDecomposition({1: (1, 2)}, {1: None})
    assert binarize(single).bags == single.bags
    star_graph = Graph(4, [(1, 2), (1, 3), (1, 4)])
    star_td = OrderedTreeDecomposition({1: (1, 1), 2: (1, 2), 3: (1, 3), 4: (1, 4)}, {1: None, 2: 1, 3: 1, 4: 1})
    out = binarize(star_td, star_graph)
    assert rank(out) == 2 and len(out.bags) == 5
    assert out.bags[5] == (1, 1)
    assert check_tree_decomposition(star_graph, out).valid
    chain = OrderedTreeDecomposition({1: (1, 2), 2: (2, 3)}, {1: None, 2: 1})
    assert binarize(chain).parent == chain.parent


def test_binarize_rejects_invalid_input() -> None:
    bad = OrderedTreeDecomposition({1: (1, 2), 2: (3, 3)}, {1: None, 2: 1})
    with pytest.raises(InputError):
        binarize(bad, Graph(3, [(1, 2), (2, 3)]))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10**6))
def test_binarize_preserves_validity_and_width(n: int, seed: int) -> None:
    g, _ = random_planar(n, seed)
    td = heuristic_decomposition(g)
    before = check_tree_decomposition(g, td)
    out = binarize(td, g)
    after = check_tree_decomposition(g, out)
    assert before.valid and after.valid
    assert before.width == after.width
    assert rank(out) <= 2
    padded = pad_bags(out)
    assert len({len(b) for b in padded.bags.values()}) == 1
    assert check_tree_decomposition(g, padded).valid


def test_sigma_label_examples() -> None:
    g = Graph(2, [(1, 2)])
    lab = sigma_label((1, 1, 2), None, g)
    assert {(1, 2), (2, 1)} <= lab.equal
    assert {(j, j) for j in (1, 2, 3)} <= lab.equal
    assert lab.adjacent == {(1, 3), (3, 1), (2, 3), (3, 2)}
    assert lab.parent_equal == frozenset()
    assert lab.first_positions() == [1, 3]
    child = sigma_label((2, 2, 2), (1, 1, 1), Graph(2, [(1, 2)]))
    assert child.parent_equal == frozenset()
    shared = sigma_label((2, 3), (1, 2), Graph(3, [(1, 2), (2, 3)]))
    assert shared.parent_equal == {(1, 2)} and shared.parent_position(1) == 2


def test_sigma_labels_need_rank_two() -> None:
    g = Graph(4, [(1, 2), (1, 3), (1, 4)])
    td = OrderedTreeDecomposition({1: (1, 1), 2: (1, 2), 3: (1, 3), 4: (1, 4)}, {1: None, 2: 1, 3: 1, 4: 1})
    with pytest.raises(InputError):
        sigma_labels(td, g)
    labels = sigma_labels(binarize(td), g)
    root = binarize(td).root
    assert labels[root].parent_equal == frozenset()


SOME_A = """
states no yes
alphabet a b
init a yes
init b no
delta1 no a yes
delta1 no b no
delta1 yes a yes
delta1 yes b yes
delta2 no no a yes
delta2 no no b no
delta2 no yes a yes
delta2 no yes b yes
delta2 yes no a yes
delta2 yes no b yes
delta2 yes yes a yes
delta2 yes yes b yes
final yes
"""


def test_run_automaton_examples() -> None:
    universal = parse_automaton("states q\nalphabet a b\ninit a q\ninit b q\ndelta1 q a q\ndelta1 q b q\n"
                                "delta2 q q a q\ndelta2 q q b q\nfinal q\n")
    tree = LabeledTree(1, {1: (2, 3), 2: (4,)}, {1: "a", 2: "b", 3: "b", 4: "a"})
    assert run_automaton(universal, tree)
    some_a = parse_automaton(SOME_A)
    assert run_automaton(some_a, tree)
    assert not run_automaton(some_a, LabeledTree(1, {1: (2, 3)}, {1: "b", 2: "b", 3: "b"}))
    assert run_automaton(some_a, LabeledTree(1, {}, {1: "a"}))
    assert not run_automaton(some_a, LabeledTree(1, {}, {1: "b"}))


def test_automaton_text_format() -> None:
    a = parse_automaton(SOME_A)
    assert parse_automaton(format_automaton(a)) == a
    assert not a.has_sink
    partial = parse_automaton("states q\nalphabet a:01 a:10\ninit a:01 q\nfinal q\n")
    assert partial.has_sink
    assert partial.initial(("a", (1, 0))) == SINK
    with pytest.raises(InputError, match="line 2"):
        parse_automaton("states q\ninit a\n")
    with pytest.raises(InputError, match="not in the automaton alphabet"):
        run_automaton(a, LabeledTree(1, {}, {1: "c"}))
    with pytest.raises(InputError, match="undeclared"):
        parse_automaton("states q\nalphabet a\ninit a z\nfinal q\n")


# ---------------------------------------------------------------------------
# three passes against exhaustive enumeration


def test_three_pass_degenerate_slots() -> None:
    tree = LabeledTree(1, {1: (2,)}, {1: "a", 2: "a"})
    plain = ("a", ())
    wrapped = TreeAutomaton(frozenset({"q", "r"}), frozenset({plain}), {plain: "q"}, {("q", plain): "r"}, {}, frozenset({"r"}))
    assert three_pass(wrapped, tree, 0, 0, arity=1).assignments == {()}
    single = LabeledTree(1, {}, {1: "a"})
    assert three_pass(wrapped, single, 0, 0, arity=1).assignments == set()


def test_three_pass_marking_automaton_on_two_vertices() -> None:
    # accepts iff exactly one vertex carries the mark
    alphabet = frozenset({("x", (0,)), ("x", (1,))})
    init = {("x", (0,)): "zero", ("x", (1,)): "one"}
    delta1 = {("zero", ("x", (0,))): "zero", ("zero", ("x", (1,))): "one", ("one", ("x", (0,))): "one"}
    a = TreeAutomaton(frozenset({"zero", "one"}), alphabet, init, delta1, {}, frozenset({"one"}))
    tree = LabeledTree(1, {1: (2,)}, {1: "x", 2: "x"})
    tables = three_pass(a, tree, 0, 1, arity=1)
    assert tables.assignments == {(0b01,), (0b10,)}
    assert tables.assignments == brute_force_assignments(a, tree, 1)
    assert {tables.as_sets(x)[0] for x in tables.assignments} == {frozenset({1}), frozenset({2})}


@pytest.mark.parametrize("seed", range(60))
def test_three_pass_matches_brute_force(seed: int) -> None:
    assert check_three_pass_case(seed)


def test_three_pass_capacity() -> None:
    rng = random.Random(1)
    labels = ["a"]
    tree = random_tree(rng, 8, labels)
    universal_states = frozenset({"q"})
    alphabet = frozenset(("a", bits) for bits in itertools.product((0, 1), repeat=2))
    a = TreeAutomaton(
        universal_states, alphabet, {s: "q" for s in alphabet}, {("q", s): "q" for s in alphabet},
        {("q", "q", s): "q" for s in alphabet}, universal_states,
    )
    with pytest.raises(CapacityError):
        three_pass(a, tree, 2, 0, arity=1, cap=100)


# ---------------------------------------------------------------------------
# encodings


def test_element_encoding_examples() -> None:
    g = Graph(2, [(1, 2)])
    td = OrderedTreeDecomposition({1: (1, 2, 2)}, {1: None})
    enc = encode_element(2, td)
    assert enc.sets == (frozenset(), frozenset({1}), frozenset())
    labels = sigma_labels(td, g)
    assert elem_check(enc, labels)
    assert not elem_check(ElementEncoding((frozenset({1}), frozenset({1}), frozenset())), labels)
    assert not elem_check(ElementEncoding((frozenset(), frozenset(), frozenset({1}))), labels)
    with pytest.raises(InputError):
        encode_element(3, td)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10**6), st.randoms(use_true_random=False))
def test_encodings_round_trip(n: int, seed: int, rng: random.Random) -> None:
    g, _ = random_planar(n, seed)
    td = pad_bags(binarize(heuristic_decomposition(g)))
    labels = sigma_labels(td, g)
    for v in g.nodes():
        enc = encode_element(v, td)
        assert decode_element(enc, td) == v
        assert elem_check(enc, labels)
    chosen = {v for v in g.nodes() if rng.random() < 0.4}
    enc = encode_set(chosen, td)
    assert decode_set(enc, td) == chosen
    assert set_check(enc, labels)


# ---------------------------------------------------------------------------
# scattered-set dynamic program


def test_scattered_dp_examples() -> None:
    g, _ = cycle(6)
    td = heuristic_decomposition(g)
    everyone = set(g.nodes())
    assert scattered_dp(td, g, everyone, 1, 2)
    assert not scattered_dp(td, g, everyone, 1, 3)
    assert scattered_dp(td, g, {4}, 1, 1)
    assert not scattered_dp(td, g, set(), 1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 45), st.integers(0, 10**6), st.integers(1, 2), st.integers(1, 4), st.randoms(use_true_random=False))
def test_scattered_dp_matches_exhaustive_search(n: int, seed: int, r: int, s: int, rng: random.Random) -> None:
    g, _ = random_planar(n, seed)
    td = heuristic_decomposition(g)
    p_nodes = {v for v in g.nodes() if rng.random() < 0.5}
    assert scattered_count(td, g, p_nodes, r, s) == max_scattered(g, p_nodes, r, s)
    assert scattered_count(binarize(td), g, p_nodes, r, s) == max_scattered(g, p_nodes, r, s)


def test_scattered_dp_on_grids() -> None:
    g, _ = grid(6)
    td = heuristic_decomposition(g)
    for r, s in [(1, 4), (1, 5), (2, 2), (2, 3)]:
        assert scattered_count(td, g, set(g.nodes()), r, s) == max_scattered(g, set(g.nodes()), r, s)
