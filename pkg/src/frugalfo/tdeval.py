"""Evaluation over ordered tree decompositions.

Binarization, the per-bag index labels, bottom-up tree automata (explicit
tables and the symbolic catalog automata), the three-pass computation of
all satisfying assignments, element/set encodings, and a dynamic program
for scattered P-sets.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Protocol

from frugalfo.catalog import Psi
from frugalfo.errors import CapacityError, InputError, InvariantError, UnsupportedQueryError
from frugalfo.graph import Graph, OrderedTreeDecomposition, bfs_distances, check_tree_decomposition

Pair = tuple[int, int]
Bits = tuple[int, ...]
State = Hashable
Symbol = Hashable

DEFAULT_SAT_CAP = 200_000
DEFAULT_DP_CAP = 100_000


# ---------------------------------------------------------------------------
# binarization


def binarize(td: OrderedTreeDecomposition, g: Graph | None = None) -> OrderedTreeDecomposition:
    """Rank <= 2: a bag with children c1..cp keeps c1 and hands c2..cp to a chain of copies of itself."""
    if g is not None:
        report = check_tree_decomposition(g, td)
        if not report.valid:
            raise InputError(f"cannot binarize an invalid decomposition: {report}")
    bags = dict(td.bags)
    parent: dict[int, int | None] = dict(td.parent)
    children: dict[int, list[int]] = {t: list(cs) for t, cs in td.children.items()}
    next_id = max(bags) + 1
    for t in list(td.bags):
        kids = children[t]
        holder = t
        while len(kids) > 2:
            copy = next_id
            next_id += 1
            bags[copy] = bags[t]
            parent[copy] = holder
            children[holder] = [kids[0], copy]
            parent[kids[0]] = holder
            kids = kids[1:]
            children[copy] = kids
            for c in kids:
                parent[c] = copy
            holder = copy
    return OrderedTreeDecomposition(bags, parent, children)


def pad_bags(td: OrderedTreeDecomposition, arity: int | None = None) -> OrderedTreeDecomposition:
    """Equal-length bags: each bag repeats its last entry up to ``arity``."""
    arity = arity or max(len(b) for b in td.bags.values())
    bags = {}
    for t, bag in td.bags.items():
        if not bag or len(bag) > arity:
            raise InputError(f"bag {t} cannot be padded to arity {arity}")
        bags[t] = tuple(bag) + (bag[-1],) * (arity - len(bag))
    return OrderedTreeDecomposition(bags, dict(td.parent), {t: list(cs) for t, cs in td.children.items()})


def rank(td: OrderedTreeDecomposition) -> int:
    return max((len(cs) for cs in td.children.values()), default=0)


# ---------------------------------------------------------------------------
# index labels


@dataclass(frozen=True)
class SigmaLabel:
    """Index-pair relations of one bag; positions are 1-based.

    ``adjacent``: positions holding adjacent vertices.
    ``equal``: positions holding the same vertex (contains the diagonal).
    ``parent_equal``: (j, j') with this bag's j-th entry equal to the parent's j'-th; empty at the root.
    """

    arity: int
    adjacent: frozenset[Pair]
    equal: frozenset[Pair]
    parent_equal: frozenset[Pair]

    @cached_property
    def _firsts(self) -> tuple[int, ...]:
        return tuple(j for j in range(1, self.arity + 1) if not any((i, j) in self.equal for i in range(1, j)))

    @cached_property
    def _parent_map(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for a, b in self.parent_equal:
            out[a] = min(b, out.get(a, b))
        return out

    def first_positions(self) -> list[int]:
        """Positions holding the first occurrence of their vertex."""
        return list(self._firsts)

    def shared(self, j: int) -> bool:
        return j in self._parent_map

    def parent_position(self, j: int) -> int | None:
        """Smallest parent position holding the same vertex as position j."""
        return self._parent_map.get(j)


def _positions(bag: Sequence[int]) -> dict[int, list[int]]:
    where: dict[int, list[int]] = {}
    for j, v in enumerate(bag, start=1):
        where.setdefault(v, []).append(j)
    return where


def _label(bag: Sequence[int], parent_bag: Sequence[int] | None, adjacent_vertices: Callable[[int, int], bool]) -> SigmaLabel:
    where = _positions(bag)
    verts = list(where)
    equal = frozenset((a, b) for ps in where.values() for a in ps for b in ps)
    adjacent = frozenset(
        (a, b)
        for u in verts
        for w in verts
        if u != w and adjacent_vertices(u, w)
        for a in where[u]
        for b in where[w]
    )
    parent_equal: frozenset[Pair] = frozenset()
    if parent_bag is not None:
        above = _positions(parent_bag)
        parent_equal = frozenset((a, b) for v, ps in where.items() for a in ps for b in above.get(v, ()))
    return SigmaLabel(len(bag), adjacent, equal, parent_equal)


def sigma_label(bag: Sequence[int], parent_bag: Sequence[int] | None, g: Graph) -> SigmaLabel:
    return _label(bag, parent_bag, g.has_edge)


def sigma_label_from(
    bag: Sequence[int], parent_bag: Sequence[int] | None, edges: set[tuple[int, int]] | frozenset[tuple[int, int]]
) -> SigmaLabel:
    """The same label when adjacency is known only as a set of normalized edges."""
    return _label(bag, parent_bag, lambda u, w: (min(u, w), max(u, w)) in edges)


def sigma_labels(td: OrderedTreeDecomposition, g: Graph) -> dict[int, SigmaLabel]:
    if rank(td) > 2:
        raise InputError("labels are defined on decompositions of rank <= 2; binarize first")
    return {
        t: sigma_label(bag, td.bags[td.parent[t]] if td.parent[t] is not None else None, g)  # type: ignore[index]
        for t, bag in td.bags.items()
    }


# ---------------------------------------------------------------------------
# labeled trees and automata


@dataclass
class LabeledTree:
    root: int
    children: dict[int, tuple[int, ...]]
    labels: dict[int, Symbol]

    def __post_init__(self) -> None:
        for t, cs in self.children.items():
            if len(cs) > 2:
                raise InputError(f"tree vertex {t} has {len(cs)} children; automata read binary trees")

    def postorder(self) -> list[int]:
        out: list[int] = []
        stack = [(self.root, False)]
        while stack:
            t, done = stack.pop()
            if done:
                out.append(t)
                continue
            stack.append((t, True))
            stack.extend((c, False) for c in reversed(self.children.get(t, ())))
        return out

    def parents(self) -> dict[int, int | None]:
        out: dict[int, int | None] = {self.root: None}
        for t in self.postorder():
            for c in self.children.get(t, ()):
                out[c] = t
        return out

    @classmethod
    def from_decomposition(cls, td: OrderedTreeDecomposition, labels: Mapping[int, Symbol]) -> LabeledTree:
        return cls(td.root, {t: tuple(cs) for t, cs in td.children.items()}, dict(labels))


class Automaton(Protocol):
    """A deterministic bottom-up automaton over binary trees."""

    def initial(self, symbol: Symbol) -> State: ...

    def step1(self, child: State, symbol: Symbol) -> State: ...

    def step2(self, left: State, right: State, symbol: Symbol) -> State: ...

    def accepting(self, state: State) -> bool: ...


SINK = "#sink"


@dataclass
class TreeAutomaton:
    """Explicit transition tables; missing entries go to a non-accepting sink."""

    states: frozenset[State]
    alphabet: frozenset[Symbol]
    init: dict[Symbol, State]
    delta1: dict[tuple[State, Symbol], State]
    delta2: dict[tuple[State, State, Symbol], State]
    final: frozenset[State]
    has_sink: bool = field(default=False)

    def __post_init__(self) -> None:
        for q in self.final:
            if q not in self.states:
                raise InputError(f"final state {q!r} is not declared")
        tables: list[tuple[tuple[Any, ...], State]] = [((sym,), q) for sym, q in self.init.items()]
        tables += [(k, q) for k, q in self.delta1.items()] + [(k, q) for k, q in self.delta2.items()]
        for key, q in tables:
            if q not in self.states or key[-1] not in self.alphabet or any(s not in self.states for s in key[:-1]):
                raise InputError(f"transition {key} -> {q!r} uses undeclared states or symbols")
        total = len(self.alphabet) * (1 + len(self.states) + len(self.states) ** 2)
        self.has_sink = len(self.init) + len(self.delta1) + len(self.delta2) < total

    def _check(self, symbol: Symbol) -> None:
        if symbol not in self.alphabet:
            raise InputError(f"symbol {symbol!r} is not in the automaton alphabet")

    def initial(self, symbol: Symbol) -> State:
        self._check(symbol)
        return self.init.get(symbol, SINK)

    def step1(self, child: State, symbol: Symbol) -> State:
        self._check(symbol)
        return self.delta1.get((child, symbol), SINK)

    def step2(self, left: State, right: State, symbol: Symbol) -> State:
        self._check(symbol)
        return self.delta2.get((left, right, symbol), SINK)

    def accepting(self, state: State) -> bool:
        return state in self.final


def _symbol(token: str) -> Symbol:
    """``a`` is a plain symbol; ``a:01`` is symbol a extended by the bit vector (0, 1)."""
    if ":" in token:
        base, bits = token.split(":", 1)
        if not bits or set(bits) - {"0", "1"}:
            raise InputError(f"bad bit vector in symbol {token!r}")
        return (base, tuple(int(b) for b in bits))
    return token


def _token(symbol: Symbol) -> str:
    if isinstance(symbol, tuple):
        return f"{symbol[0]}:{''.join(map(str, symbol[1]))}"
    return str(symbol)


def parse_automaton(text: str) -> TreeAutomaton:
    """Line-oriented format; each line starts with its section name.

    states q0 q1 ...          alphabet a b:01 ...
    init <sym> <q>            delta1 <q> <sym> <q'>
    delta2 <q1> <q2> <sym> <q'>                final q ...
    """
    states: list[str] = []
    alphabet: list[Symbol] = []
    init: dict[Symbol, State] = {}
    delta1: dict[tuple[State, Symbol], State] = {}
    delta2: dict[tuple[State, State, Symbol], State] = {}
    final: list[str] = []
    arities = {"init": 2, "delta1": 3, "delta2": 4}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        parts = raw.split("#", 1)[0].split()
        if not parts:
            continue
        head, args = parts[0], parts[1:]
        if head == "states":
            states.extend(args)
        elif head == "alphabet":
            alphabet.extend(_symbol(a) for a in args)
        elif head == "final":
            final.extend(args)
        elif head in arities:
            if len(args) != arities[head]:
                raise InputError(f"{head} expects {arities[head]} fields, got {len(args)}", lineno)
            target = args[-1]
            sym = _symbol(args[-2])
            table: dict[Any, State] = {"init": init, "delta1": delta1, "delta2": delta2}[head]
            key: Any = sym if head == "init" else (*args[:-2], sym)
            if key in table:
                raise InputError(f"duplicate {head} entry for {key}", lineno)
            table[key] = target
        else:
            raise InputError(f"unknown section {head!r}", lineno)
    if not states or not alphabet:
        raise InputError("automaton needs non-empty states and alphabet sections")
    return TreeAutomaton(frozenset(states), frozenset(alphabet), init, delta1, delta2, frozenset(final))


def format_automaton(a: TreeAutomaton) -> str:
    lines = ["states " + " ".join(sorted(map(str, a.states))), "alphabet " + " ".join(sorted(map(_token, a.alphabet)))]
    lines += [f"init {_token(s)} {q}" for s, q in sorted(a.init.items(), key=lambda kv: _token(kv[0]))]
    lines += [f"delta1 {q} {_token(s)} {t}" for (q, s), t in sorted(a.delta1.items(), key=str)]
    lines += [f"delta2 {q1} {q2} {_token(s)} {t}" for (q1, q2, s), t in sorted(a.delta2.items(), key=str)]
    lines.append("final " + " ".join(sorted(map(str, a.final))))
    return "\n".join(lines) + "\n"


def run_states(a: Automaton, tree: LabeledTree) -> dict[int, State]:
    """The unique run: one state per tree vertex."""
    run: dict[int, State] = {}
    for t in tree.postorder():
        cs = tree.children.get(t, ())
        sym = tree.labels[t]
        if not cs:
            run[t] = a.initial(sym)
        elif len(cs) == 1:
            run[t] = a.step1(run[cs[0]], sym)
        else:
            run[t] = a.step2(run[cs[0]], run[cs[1]], sym)
    return run


def run_automaton(a: Automaton, tree: LabeledTree) -> bool:
    return a.accepting(run_states(a, tree)[tree.root])


# ---------------------------------------------------------------------------
# three passes: potential, successful, satisfying


@dataclass
class ThreePassTables:
    pot: dict[int, set[State]]
    suc: dict[int, set[State]]
    sat: dict[int, dict[State, set[Bits]]]
    order: list[int]
    slots: int

    @property
    def assignments(self) -> set[Bits]:
        root = self.order[-1]
        out: set[Bits] = set()
        for q in self.suc[root]:
            out |= self.sat[root][q]
        return out

    def as_sets(self, assignment: Bits) -> tuple[frozenset[int], ...]:
        """Per-slot tree-vertex sets of a bitset assignment."""
        return tuple(frozenset(t for i, t in enumerate(self.order) if mask >> i & 1) for mask in assignment)


def all_letters(slots: int) -> list[Bits]:
    return list(itertools.product((0, 1), repeat=slots))


def _letters(a: Automaton, label: Symbol, slots: int) -> list[Bits]:
    hook: Callable[[Symbol], Iterable[Bits]] | None = getattr(a, "letters", None)
    return list(hook(label)) if hook is not None else all_letters(slots)


def pot_step(a: Automaton, label: Symbol, letters: Iterable[Bits], child_pots: Sequence[set[State]]) -> set[State]:
    out: set[State] = set()
    for bits in letters:
        sym = (label, bits)
        if not child_pots:
            out.add(a.initial(sym))
        elif len(child_pots) == 1:
            out.update(a.step1(q, sym) for q in child_pots[0])
        else:
            out.update(a.step2(q1, q2, sym) for q1 in child_pots[0] for q2 in child_pots[1])
    return out


def suc_step(
    a: Automaton, label: Symbol, letters: Iterable[Bits], suc: set[State], child_pots: Sequence[set[State]]
) -> list[set[State]]:
    """Successful states of each child, given the parent's successful states."""
    letters = list(letters)
    if len(child_pots) == 1:
        return [{q for q in child_pots[0] if any(a.step1(q, (label, b)) in suc for b in letters)}]
    left, right = child_pots
    good = [
        (q1, q2)
        for q1 in left
        for q2 in right
        if any(a.step2(q1, q2, (label, b)) in suc for b in letters)
    ]
    return [{q1 for q1, _ in good}, {q2 for _, q2 in good}]


def three_pass(
    a: Automaton,
    tree: LabeledTree,
    set_slots: int,
    element_slots: int,
    arity: int,
    cap: int = DEFAULT_SAT_CAP,
) -> ThreePassTables:
    """All slot assignments (per-slot vertex bitsets) under which ``a`` accepts.

    Labels are extended letter-wise to ``(label, bits)`` with
    ``arity * (set_slots + element_slots)`` bits per tree vertex.
    """
    slots = arity * (set_slots + element_slots)
    order = tree.postorder()
    index = {t: i for i, t in enumerate(order)}
    letters = {t: _letters(a, tree.labels[t], slots) for t in order}
    for t, options in letters.items():
        if any(len(bits) != slots for bits in options):
            raise InputError(f"letters at tree vertex {t} do not have {slots} bits")
    pot: dict[int, set[State]] = {}
    for t in order:
        pot[t] = pot_step(a, tree.labels[t], letters[t], [pot[c] for c in tree.children.get(t, ())])
    suc: dict[int, set[State]] = {tree.root: {q for q in pot[tree.root] if a.accepting(q)}}
    for t in reversed(order):
        cs = tree.children.get(t, ())
        if cs:
            for c, states in zip(cs, suc_step(a, tree.labels[t], letters[t], suc[t], [pot[c] for c in cs])):
                suc[c] = states
    subtree: dict[int, int] = {}
    sat: dict[int, dict[State, set[Bits]]] = {}
    stored = 0
    for t in order:
        cs = tree.children.get(t, ())
        own = 1 << index[t]
        mask = own
        for c in cs:
            if subtree[c] & mask:
                raise InvariantError(f"subtrees below tree vertex {t} overlap")
            mask |= subtree[c]
        subtree[t] = mask
        table: dict[State, set[Bits]] = {q: set() for q in suc[t]}
        for bits in letters[t]:
            sym = (tree.labels[t], bits)
            here = tuple(own if b else 0 for b in bits)
            if not cs:
                q = a.initial(sym)
                if q in table:
                    table[q].add(here)
            elif len(cs) == 1:
                for q1, rows in sat[cs[0]].items():
                    q = a.step1(q1, sym)
                    if q in table:
                        table[q].update(tuple(x | y for x, y in zip(row, here)) for row in rows)
            else:
                for q1, rows1 in sat[cs[0]].items():
                    for q2, rows2 in sat[cs[1]].items():
                        q = a.step2(q1, q2, sym)
                        if q in table:
                            table[q].update(
                                tuple(x | y | z for x, y, z in zip(r1, r2, here)) for r1 in rows1 for r2 in rows2
                            )
        stored += sum(len(rows) for rows in table.values())
        if stored > cap:
            raise CapacityError(f"satisfying-assignment tables exceed {cap} tuples")
        sat[t] = table
    return ThreePassTables(pot, suc, sat, order, slots)


# ---------------------------------------------------------------------------
# element and set encodings


@dataclass(frozen=True)
class ElementEncoding:
    """One tree-vertex set per bag position; a single vertex marks an element."""

    sets: tuple[frozenset[int], ...]


def _top_bag(td: OrderedTreeDecomposition, v: int) -> int:
    holders = [t for t, bag in td.bags.items() if v in bag]
    if not holders:
        raise InputError(f"vertex {v} occurs in no bag")
    tops = [t for t in holders if td.parent[t] is None or v not in td.bags[td.parent[t]]]  # type: ignore[index]
    if len(tops) != 1:
        raise InputError(f"occurrences of vertex {v} are not connected")
    return tops[0]


def encode_element(v: int, td: OrderedTreeDecomposition) -> ElementEncoding:
    t = _top_bag(td, v)
    j = td.bags[t].index(v)
    arity = max(len(b) for b in td.bags.values())
    return ElementEncoding(tuple(frozenset({t}) if i == j else frozenset() for i in range(arity)))


def encode_set(vertices: Iterable[int], td: OrderedTreeDecomposition) -> ElementEncoding:
    arity = max(len(b) for b in td.bags.values())
    sets: list[set[int]] = [set() for _ in range(arity)]
    for v in vertices:
        for i, s in enumerate(encode_element(v, td).sets):
            sets[i] |= s
    return ElementEncoding(tuple(frozenset(s) for s in sets))


def decode_element(enc: ElementEncoding, td: OrderedTreeDecomposition) -> int:
    hits = [(i, t) for i, s in enumerate(enc.sets) for t in s]
    if len(hits) != 1:
        raise InputError("an element encoding marks exactly one bag position")
    i, t = hits[0]
    return td.bags[t][i]


def decode_set(enc: ElementEncoding, td: OrderedTreeDecomposition) -> set[int]:
    return {td.bags[t][i] for i, s in enumerate(enc.sets) for t in s}


def set_check(enc: ElementEncoding, labels: Mapping[int, SigmaLabel]) -> bool:
    """Marks sit only at first positions of vertices not shared with the parent bag."""
    for i, s in enumerate(enc.sets, start=1):
        for t in s:
            lab = labels[t]
            if any((h, i) in lab.equal for h in range(1, i)) or lab.shared(i):
                return False
    return True


def elem_check(enc: ElementEncoding, labels: Mapping[int, SigmaLabel]) -> bool:
    marked = [t for s in enc.sets for t in s]
    return len(marked) == 1 and set_check(enc, labels)


# ---------------------------------------------------------------------------
# catalog automata over labeled decompositions, one free element variable


@dataclass(frozen=True)
class Done:
    verdict: bool



class PsiAutomaton:
    """Accepts exactly the labeled trees whose single element mark is a vertex satisfying psi.

    States are ``("open", summary)`` before the mark, ``Done(verdict)`` after
    it, and ``"dead"`` for malformed markings.  The summary holds, per first
    bag position, what the subtree has seen of that vertex: triangle
    membership or a capped count of distinct neighbours.
    """

    def __init__(self, psi: Psi, r: int) -> None:
        if psi.kind in ("ball-cycle", "ball-tree") and r >= 2:
            raise UnsupportedQueryError(f"{psi.name} with r={r} has no shipped decomposition automaton")
        if r < 1 and psi.kind != "true":
            raise UnsupportedQueryError(f"{psi.name} needs r >= 1")
        self.psi = psi
        if psi.kind == "degree":
            self.mode = "degree"
        elif psi.kind in ("triangle", "ball-cycle", "ball-tree"):
            self.mode = "triangle"
        else:
            self.mode = "true"
        self.negate = psi.kind == "ball-tree"

    # summaries ------------------------------------------------------------

    def _local(self, lab: SigmaLabel) -> dict[int, int]:
        firsts = lab.first_positions()
        out: dict[int, int] = {}
        if self.mode == "triangle":
            for j in firsts:
                nb = [x for x in firsts if (j, x) in lab.adjacent]
                out[j] = int(any((x, y) in lab.adjacent for x, y in itertools.combinations(nb, 2)))
        elif self.mode == "degree":
            for j in firsts:
                # an edge is counted at the topmost bag holding both ends
                out[j] = sum(1 for x in firsts if (j, x) in lab.adjacent and not (lab.shared(j) and lab.shared(x)))
        return out

    def _lift(self, lab: SigmaLabel, child_lab: SigmaLabel, summary: tuple[tuple[int, int], ...]) -> dict[int, int]:
        out: dict[int, int] = {}
        for j, v in summary:
            p = child_lab.parent_position(j)
            if p is not None:
                out[p] = v
        return out

    def _summary(self, lab: SigmaLabel, child_summaries: list[tuple[SigmaLabel, tuple[tuple[int, int], ...]]]) -> tuple[tuple[int, int], ...]:
        acc = self._local(lab)
        for child_lab, summary in child_summaries:
            for j, v in self._lift(lab, child_lab, summary).items():
                if self.mode == "triangle":
                    acc[j] = acc.get(j, 0) | v
                else:
                    acc[j] = acc.get(j, 0) + v
        if self.mode == "degree":
            acc = {j: min(v, self.psi.threshold) for j, v in acc.items()}
        return tuple(sorted(acc.items()))

    def _verdict(self, summary: dict[int, int], j: int) -> bool:
        if self.mode == "true":
            return True
        if self.mode == "degree":
            return summary.get(j, 0) >= self.psi.threshold
        return bool(summary.get(j, 0)) != self.negate

    # transitions ----------------------------------------------------------

    def letters(self, label: Symbol) -> list[Bits]:
        lab: SigmaLabel = label  # type: ignore[assignment]
        zero = (0,) * lab.arity
        out = [zero]
        for j in lab.first_positions():
            if not lab.shared(j):
                out.append(tuple(1 if i == j else 0 for i in range(1, lab.arity + 1)))
        return out

    def _step(self, children: list[State], symbol: Symbol) -> State:
        lab, bits = symbol  # type: ignore[misc]
        if any(c == "dead" for c in children):
            return "dead"
        done = [c for c in children if isinstance(c, Done)]
        marks = [j for j, b in enumerate(bits, start=1) if b]
        if len(done) + len(marks) > 1:
            return "dead"
        if done:
            return done[0]
        summary = self._summary(lab, [(c[1], c[2]) for c in children])  # type: ignore[index]
        if marks:
            j = marks[0]
            if j not in lab.first_positions() or lab.shared(j):
                return "dead"
            return Done(self._verdict(dict(summary), j))
        return ("open", lab, summary)

    def initial(self, symbol: Symbol) -> State:
        return self._step([], symbol)

    def step1(self, child: State, symbol: Symbol) -> State:
        return self._step([child], symbol)

    def step2(self, left: State, right: State, symbol: Symbol) -> State:
        return self._step([left, right], symbol)

    def accepting(self, state: State) -> bool:
        return state == Done(True)


def psi_by_automaton(td: OrderedTreeDecomposition, g: Graph, psi: Psi, r: int) -> set[int]:
    """Vertices satisfying psi, read off the accepted element marks of the three passes."""
    btd = pad_bags(binarize(td))
    labels = sigma_labels(btd, g)
    tree = LabeledTree.from_decomposition(btd, labels)
    arity = max(len(b) for b in btd.bags.values())
    tables = three_pass(PsiAutomaton(psi, r), tree, 0, 1, arity)
    out = set()
    for row in tables.assignments:
        sets = tables.as_sets(row)
        out.add(decode_element(ElementEncoding(sets), btd))
    return out


# ---------------------------------------------------------------------------
# scattered sets


DpState = tuple[int, tuple[int, ...]]


def _prune(states: set[DpState]) -> set[DpState]:
    """Drop states dominated by one with at least the count and at least every distance."""
    ranked = sorted(states, key=lambda st: (-st[0], tuple(-d for d in st[1])))
    kept: list[DpState] = []
    for c, d in ranked:
        if not any(kc >= c and all(x >= y for x, y in zip(kd, d)) for kc, kd in kept):
            kept.append((c, d))
    return set(kept)


def dp_step(
    vertices: tuple[int, ...],
    tops: Iterable[int],
    dist: Mapping[tuple[int, int], int],
    children: Sequence[tuple[tuple[int, ...], set[DpState]]],
    p_nodes: set[int] | frozenset[int],
    r: int,
    s: int,
    cap: int = DEFAULT_DP_CAP,
) -> set[DpState]:
    """States of one bag: (chosen count capped at s, distance from each bag vertex to the nearest chosen).

    ``vertices`` are the bag's distinct vertices; distances are capped at
    2r+1 and ``dist`` covers every pair of them plus each child's vertices
    shared with this bag.
    """
    far = 2 * r + 1
    states: set[DpState] = {(0, (far,) * len(vertices))}
    for child_vertices, child_states in children:
        seps = [(i, child_vertices.index(b)) for i, b in enumerate(vertices) if b in child_vertices]
        lifted: set[DpState] = set()
        for c, dv in child_states:
            vec = tuple(
                min([far] + [min(far, dv[ci] + dist[(vertices[bi], u)]) for bi, ci in seps]) for u in vertices
            )
            lifted.add((c, vec))
        merged: set[DpState] = set()
        for c1, d1 in states:
            for c2, d2 in lifted:
                if c1 and c2 and min(x + y for x, y in zip(d1, d2)) <= 2 * r:
                    continue
                merged.add((min(s, c1 + c2), tuple(map(min, d1, d2))))
        states = _prune(merged)
        if len(states) > cap:
            raise CapacityError(f"scattered-set table exceeds {cap} states")
    for v in sorted(set(tops)):
        if v not in p_nodes:
            continue
        i = vertices.index(v)
        grown = set(states)
        for c, dv in states:
            if dv[i] > 2 * r:
                grown.add((min(s, c + 1), tuple(min(x, dist[(v, u)]) for x, u in zip(dv, vertices))))
        states = _prune(grown)
        if len(states) > cap:
            raise CapacityError(f"scattered-set table exceeds {cap} states")
    return states


def distance_table(g: Graph, vertices: Iterable[int], r: int) -> dict[tuple[int, int], int]:
    far = 2 * r + 1
    vs = sorted(set(vertices))
    out: dict[tuple[int, int], int] = {}
    for a in vs:
        d = bfs_distances(g, a, limit=far)
        for b in vs:
            out[(a, b)] = min(far, d.get(b, far))
    return out


def scattered_count(td: OrderedTreeDecomposition, g: Graph, p_nodes: set[int], r: int, s: int,
                    cap: int = DEFAULT_DP_CAP) -> int:
    """Largest number (capped at s) of P-nodes pairwise more than 2r apart in g."""
    tables: dict[int, tuple[tuple[int, ...], set[DpState]]] = {}
    for t in td.postorder():
        vertices = tuple(dict.fromkeys(td.bags[t]))
        p = td.parent[t]
        tops = [v for v in vertices if p is None or v not in td.bags[p]]
        near = set(vertices)
        for c in td.children[t]:
            near |= set(tables[c][0])
        dist = distance_table(g, near, r)
        states = dp_step(vertices, tops, dist, [tables[c] for c in td.children[t]], p_nodes, r, s, cap)
        tables[t] = (vertices, states)
    return max(c for c, _ in tables[td.root][1])


def scattered_dp(td: OrderedTreeDecomposition, g: Graph, p_nodes: set[int], r: int, s: int) -> bool:
    return scattered_count(td, g, p_nodes, r, s) >= s
