"""Distributed evaluation of whole queries: leaf dispatch, term counting, Boolean combination."""

from __future__ import annotations

from dataclasses import dataclass, field

from frugalfo.errors import ConfigurationError, InvariantError, UnsupportedQueryError
from frugalfo.graph import Graph, OrderedTreeDecomposition, PlanarEmbedding
from frugalfo.netsim import LinkStats, Network, Session
from frugalfo.proto.bounded import (
    BALL_KEY,
    CollectBalls,
    HanfParams,
    ball_of,
    decide_hanf,
    eval_basic_local_bounded,
    hanf_program,
    restrict_ball,
)
from frugalfo.proto.common import count_aggregate_program
from frugalfo.proto.planar import eval_basic_local_planar, run_bands
from frugalfo.query import (
    CountAtom,
    CountTerm,
    HanfLeaf,
    Leaf,
    LocalLeaf,
    ParsedQuery,
    basic_terms,
    combine,
    leaves,
    term_size,
    term_value,
)

PROTOCOLS = ("bounded", "planar")


@dataclass
class LeafOutcome:
    leaf: Leaf
    value: bool
    notes: list[str] = field(default_factory=list)


@dataclass
class Evaluation:
    protocol: str
    decision: bool
    leaves: list[LeafOutcome]
    counts: dict[CountTerm, int]
    stats: LinkStats
    stats_at_finality: LinkStats
    phases: list[str]
    decompositions: dict[str, OrderedTreeDecomposition]
    transcript: list[str]
    flags: list[str]


def choose_protocol(parsed: ParsedQuery, embedding: PlanarEmbedding | None) -> str:
    """Bounded-degree pipeline when the query declares a degree bound, planar otherwise."""
    if parsed.degree_bound is not None:
        return "bounded"
    if embedding is None:
        raise ConfigurationError("the planar protocol needs an embedding; give one or declare a degree bound (with :d ...)")
    return "planar"


def leaf_label(leaf: Leaf) -> str:
    if isinstance(leaf, LocalLeaf):
        return f"local r={leaf.r} s={leaf.s} psi={leaf.psi.name}"
    if isinstance(leaf, HanfLeaf):
        return f"hanf r={leaf.r} m={leaf.m}"
    return f"count{leaf.op}"


def _radius_needed(parsed: ParsedQuery) -> int:
    radius = 0
    for leaf in leaves(parsed.expr):
        if isinstance(leaf, (LocalLeaf, HanfLeaf)):
            radius = max(radius, leaf.r)
        else:
            radius = max([radius] + [t.r for t in basic_terms(leaf.left) + basic_terms(leaf.right)])
    return radius


class _Evaluator:
    def __init__(self, session: Session, protocol: str, degree_bound: int | None) -> None:
        self.session = session
        self.protocol = protocol
        self.d = degree_bound
        self.counts: dict[CountTerm, int] = {}
        self.decompositions: dict[str, OrderedTreeDecomposition] = {}
        self.local_cache: dict[tuple[int, int, str], LeafOutcome] = {}
        self.flag_tags: dict[tuple[int, str], str] = {}

    @property
    def n(self) -> int:
        return self.session.net.g.n

    def leaf(self, leaf: Leaf, index: int) -> LeafOutcome:
        if isinstance(leaf, LocalLeaf):
            return self.local(leaf, index)
        if isinstance(leaf, HanfLeaf):
            return self.hanf(leaf)
        return self.count_atom(leaf)

    def local(self, leaf: LocalLeaf, index: int) -> LeafOutcome:
        key = (leaf.r, leaf.s, leaf.psi.name)
        if key in self.local_cache:
            return self.local_cache[key]
        tag = f"L{index}"
        if self.protocol == "bounded":
            value, notes = eval_basic_local_bounded(self.session, leaf.r, leaf.s, leaf.psi, self.d, tag)
            out = LeafOutcome(leaf, value, notes)
        else:
            value, bands, scatter = eval_basic_local_planar(self.session, leaf.r, leaf.s, leaf.psi, tag)
            notes = [f"tree depth {bands.tree_depth}", f"witnesses {scatter.witnesses}"]
            if bands.violations:
                raise InvariantError(f"special-block violations in {tag}: {bands.violations}")
            for (i, w), td in bands.decompositions.items():
                self.decompositions[f"{tag} band {i} component {w}"] = td
            for (root,), td in scatter.decompositions.items():
                self.decompositions[f"{tag} scatter component {root}"] = td
            out = LeafOutcome(leaf, value, notes)
        self.flag_tags[(leaf.r, leaf.psi.name)] = tag
        self.local_cache[key] = out
        return out

    def hanf(self, leaf: HanfLeaf) -> LeafOutcome:
        if self.protocol != "bounded":
            raise UnsupportedQueryError("Hanf leaves need the bounded-degree protocol (declare (with :d ...))")
        params = HanfParams(leaf.r, leaf.m, self.d)
        table = self.session.run(hanf_program(params)).decision
        return LeafOutcome(leaf, decide_hanf(table, leaf.pred, leaf.m, leaf.r), [f"{len(table)} capped types"])

    def _flag_term(self, term: CountTerm) -> str:
        """Place psi flags for ``term`` at every node and return their memory key."""
        cached = self.flag_tags.get((term.r, term.psi.name))
        if cached is not None:
            return cached + ".P"
        tag = f"T{len(self.flag_tags)}"
        if self.protocol == "bounded":
            for ctx in self.session.net.contexts.values():
                ball = restrict_ball(ball_of(ctx), term.r)
                ctx.mem[tag + ".P"] = term.psi.holds(ball.neighbors(), ctx.node, term.r)
        else:
            report = run_bands(self.session, term.r, term.psi, tag)
            if report.violations:
                raise InvariantError(f"special-block violations in {tag}: {report.violations}")
        self.flag_tags[(term.r, term.psi.name)] = tag
        return tag + ".P"

    def count(self, term: CountTerm) -> int:
        if term not in self.counts:
            key = self._flag_term(term)
            self.counts[term] = self.session.run(count_aggregate_program(key)).decision
        return self.counts[term]

    def count_atom(self, atom: CountAtom) -> LeafOutcome:
        values = {t: self.count(t) for t in basic_terms(atom.left) + basic_terms(atom.right)}
        a, b = term_value(atom.left, values), term_value(atom.right, values)
        for t, v in ((atom.left, a), (atom.right, b)):
            if v > self.n ** term_size(t):
                raise InvariantError(f"term value {v} exceeds n^|t| = {self.n}^{term_size(t)}")
        value = a == b if atom.op == "=" else a < b
        return LeafOutcome(atom, value, [f"{a} {atom.op} {b}"])


def evaluate_distributed(
    g: Graph,
    parsed: ParsedQuery,
    embedding: PlanarEmbedding | None = None,
    requester: int = 1,
    seed: int = 0,
    transcript: bool = False,
    protocol: str | None = None,
) -> Evaluation:
    """Run every leaf of ``parsed`` on one network and combine the verdicts at the requester."""
    protocol = protocol or choose_protocol(parsed, embedding)
    if protocol not in PROTOCOLS:
        raise ConfigurationError(f"unknown protocol {protocol!r}")
    if protocol == "planar" and embedding is None:
        raise ConfigurationError("the planar protocol needs an embedding")
    if protocol == "bounded" and parsed.degree_bound is None:
        raise ConfigurationError("the bounded-degree protocol needs a degree bound d")
    if requester not in g.nodes():
        raise ConfigurationError(f"requester {requester} is not a node")
    if not g.is_connected():
        raise ConfigurationError("the network must be connected")
    net = Network(g, requester=requester, embedding=embedding if protocol == "planar" else None,
                  degree_bound=parsed.degree_bound)
    session = Session(net, seed, transcript=transcript)
    if protocol == "bounded":
        session.run(CollectBalls(_radius_needed(parsed), parsed.degree_bound))
        assert all(BALL_KEY in ctx.mem for ctx in net.contexts.values())
    ev = _Evaluator(session, protocol, parsed.degree_bound)
    outcomes = [ev.leaf(leaf, i) for i, leaf in enumerate(leaves(parsed.expr))]
    decision = combine(parsed.expr, {o.leaf: o.value for o in outcomes})
    return Evaluation(
        protocol=protocol,
        decision=decision,
        leaves=outcomes,
        counts=dict(ev.counts),
        stats=session.stats,
        stats_at_finality=session.stats_at_finality,
        phases=list(session.phases),
        decompositions=ev.decompositions,
        transcript=session.transcript,
        flags=list(parsed.flags),
    )
