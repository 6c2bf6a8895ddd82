"""Bounded-degree protocols: r-ball collection, capped r-type aggregation, local-sentence evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from frugalfo.catalog import Psi
from frugalfo.errors import ConfigurationError, InvariantError
from frugalfo.graph import Graph, RootedBall, RType, bfs_distances, canonical_r_type
from frugalfo.netsim import Message, NodeContext, Send, Session
from frugalfo.oracle import max_scattered
from frugalfo.proto.common import GreedyScatter, Program, SyncRounds, TreeAggregate, capped_multiset, sum_aggregate
from frugalfo.query import HanfPred, check_hanf_thresholds, eval_hanf_pred

BALL_KEY = "ball"


@dataclass(frozen=True)
class HanfParams:
    r: int
    m: int
    d: int

    def __post_init__(self) -> None:
        if self.r < 1 or self.m < 1:
            raise ConfigurationError("Hanf parameters need r >= 1 and m >= 1")


def ball_size_bound(d: int, r: int) -> int:
    """Largest possible radius-r ball when every degree is at most d."""
    return 1 + sum(d * (d - 1) ** (i - 1) for i in range(1, r + 1)) if d > 1 else 1 + min(d, 1) * r


class _Knowledge:
    """Adjacency lists a node has learned, with the increment learned last round."""

    def __init__(self, node: int, ports: tuple[int, ...], flag: bool = False) -> None:
        self.known: dict[int, tuple[tuple[int, ...], bool]] = {node: (tuple(sorted(ports)), flag)}
        self.fresh = dict(self.known)

    def merge(self, increments: list[dict[int, tuple[tuple[int, ...], bool]]]) -> None:
        new = {}
        for inc in increments:
            for v, entry in inc.items():
                if v not in self.known:
                    new[v] = entry
        self.known.update(new)
        self.fresh = new


def _adj_message(kind: str, k: int, inc: dict[int, tuple[tuple[int, ...], bool]]) -> Message:
    ids = []
    for v, (nbrs, _) in sorted(inc.items()):
        ids.append(v)
        ids.extend(nbrs)
    # one P-flag bit and one list-length byte per entry
    return Message(kind, ids=tuple(ids), small=(k,), blob=inc, blob_bits=9 * len(inc))


class CollectBalls(Program):
    """r lock-step rounds; each round a node forwards the adjacency lists it learned in the previous one."""

    def __init__(self, r: int, d: int) -> None:
        self.r, self.d = r, d
        self.name = f"collect-ball[r={r}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        if len(ctx.ports) > self.d:
            raise ConfigurationError(f"node {ctx.node} has degree {len(ctx.ports)} above the bound d={self.d}")
        know = _Knowledge(ctx.node, ctx.ports)
        rounds = SyncRounds(self.r, know, self._step, lambda k, kn: _adj_message("BALL.ADJ", k, kn.fresh))
        ctx.mem[BALL_KEY] = (self.r, know.known)
        return {"know": know, "rounds": rounds, "decision": None}

    @staticmethod
    def _step(know: _Knowledge, incoming: list[Any]) -> _Knowledge:
        know.merge(incoming)
        return know

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        # Nodes other than the requester wake up on their first round-1 message.
        sends = self._wake(ctx, st)
        self._check(st)
        return sends

    def _wake(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["rounds"].started:
            return []
        return st["rounds"].begin(ctx, st["know"])

    def _check(self, st: dict[str, Any]) -> None:
        if st["rounds"].done:
            st["decision"] = True

    def on_ADJ(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        sends = self._wake(ctx, st)
        sends += st["rounds"].deliver(ctx, sender, msg.small[0], msg.blob)
        self._check(st)
        return sends


def ball_of(ctx: NodeContext) -> RootedBall:
    """The induced ball a node assembled from collected adjacency lists."""
    radius, known = ctx.mem[BALL_KEY]
    depth = {ctx.node: 0}
    frontier = [ctx.node]
    while frontier:
        nxt = []
        for v in frontier:
            if depth[v] >= radius:
                continue
            for u in known[v][0]:
                if u not in depth:
                    depth[u] = depth[v] + 1
                    nxt.append(u)
        frontier = nxt
    nodes = tuple(sorted(depth))
    keep = set(nodes)
    edges = []
    for v in nodes:
        if v in known:
            edges.extend((v, u) for u in known[v][0] if u > v and u in keep)
        else:
            raise InvariantError(f"node {ctx.node} lacks the adjacency of ball member {v}")
    return RootedBall(ctx.node, radius, nodes, tuple(sorted(edges)), depth)


def restrict_ball(ball: RootedBall, r: int) -> RootedBall:
    depth = {v: d for v, d in ball.depth.items() if d <= r}
    edges = tuple(e for e in ball.edges if e[0] in depth and e[1] in depth)
    return RootedBall(ball.root, r, tuple(sorted(depth)), edges, depth)


def type_key_bits(d: int, r: int) -> int:
    """Bits for one canonical code of a d-bounded radius-r ball."""
    size = ball_size_bound(d, r)
    per_index = max(1, size.bit_length())
    return 2 * per_index + size * d * per_index


def hanf_program(params: HanfParams, cap: int = 32) -> TreeAggregate:
    def contribute(ctx: NodeContext) -> dict[RType, int]:
        code = canonical_r_type(restrict_ball(ball_of(ctx), params.r), cap=max(cap, ball_size_bound(params.d, params.r)))
        return {code: 1}

    return TreeAggregate(
        capped_multiset(contribute, params.m, type_key_bits(params.d, params.r), kind="HANF.UP"),
        name=f"hanf[r={params.r},m={params.m}]",
        payload=Message("HANF.DOWN"),
    )


def decide_hanf(table: dict[RType, int], pred: HanfPred, m: int, r: int) -> bool:
    check_hanf_thresholds(pred, m)
    return eval_hanf_pred(pred, table, r)


# ---------------------------------------------------------------------------
# basic local sentences


class GatherComponents(Program):
    """Lock-step flooding of (adjacency, P-flag) lists among I-nodes.

    After ``rounds`` rounds every I-node knows its whole ⟨I⟩ component,
    provided the component diameter is at most ``rounds``.
    """

    def __init__(self, rounds: int, i_key: str, p_key: str) -> None:
        self.rounds, self.i_key, self.p_key = rounds, i_key, p_key
        self.name = f"gather-components[{rounds}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        inside = bool(ctx.mem.get(self.i_key))
        know = _Knowledge(ctx.node, ctx.ports, bool(ctx.mem.get(self.p_key))) if inside else None
        rounds = SyncRounds(self.rounds, know, self._step, self._encode)
        return {"rounds": rounds, "know": know, "inside": inside, "decision": None}

    @staticmethod
    def _encode(k: int, know: _Knowledge | None) -> Message:
        return _adj_message("GATHER.ADJ", k, know.fresh if know is not None else {})

    @staticmethod
    def _step(know: _Knowledge | None, incoming: list[Any]) -> _Knowledge | None:
        if know is not None:
            know.merge(incoming)
        return know

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        return self._wake(ctx, st)

    def _wake(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["rounds"].started:
            return []
        sends = st["rounds"].begin(ctx, st["know"])
        self._finish(ctx, st)
        return sends

    def _finish(self, ctx: NodeContext, st: dict[str, Any]) -> None:
        if st["rounds"].done and st["inside"]:
            ctx.mem["gathered"] = st["know"].known
        if st["rounds"].done:
            st["decision"] = True

    def on_ADJ(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        sends = self._wake(ctx, st)
        sends += st["rounds"].deliver(ctx, sender, msg.small[0], msg.blob)
        self._finish(ctx, st)
        return sends


@dataclass
class ComponentVerdict:
    count: int
    component_size: int
    diameter: int


def decide_component(ctx: NodeContext, r: int, s: int) -> ComponentVerdict | None:
    """At the smallest-id member of a gathered component: capped scattered count of its P-nodes."""
    known = ctx.mem.get("gathered")
    if not known or min(known) != ctx.node:
        return None
    members = sorted(known)
    index = {v: i + 1 for i, v in enumerate(members)}
    edges = {(index[v], index[u]) for v in members for u in known[v][0] if u in index and v < u}
    comp = Graph(len(members), sorted(edges))
    p_nodes = {index[v] for v in members if known[v][1]}
    diameter = max(max(bfs_distances(comp, v).values()) for v in comp.nodes())
    return ComponentVerdict(max_scattered(comp, p_nodes, r, s), len(members), diameter)


def eval_basic_local_bounded(session: Session, r: int, s: int, psi: Psi, d: int, tag: str) -> tuple[bool, list[str]]:
    """Decide one local leaf; balls of radius >= r must already be collected.

    Returns the verdict and any diagnostic flags raised along the way.
    """
    flags: list[str] = []
    p_key = f"{tag}.P"
    for ctx in session.net.contexts.values():
        ball = restrict_ball(ball_of(ctx), r)
        ctx.mem[p_key] = psi.holds(ball.neighbors(), ctx.node, r)
    scatter = session.run(GreedyScatter(r, s, p_key, tag)).decision
    if scatter.l == s:
        return True, flags
    if scatter.l == 0:
        return False, flags
    # Each <I> component lies within 4r of one of l witnesses chained at gaps <= 8r+1.
    session.run(GatherComponents(scatter.l * (8 * r + 1), f"{tag}.I", p_key))
    size_cap = ball_size_bound(d, scatter.l * (8 * r + 1))
    verdicts: list[ComponentVerdict] = []

    def contribute(ctx: NodeContext) -> int:
        verdict = decide_component(ctx, r, s)
        if verdict is None:
            return 0
        verdicts.append(verdict)
        return verdict.count

    total = session.run(
        TreeAggregate(
            sum_aggregate(contribute, kind="VERDICT.UP"),
            name=f"component-verdicts[{tag}]",
            payload=Message("VERDICT.DOWN"),
        )
    ).decision
    for verdict in verdicts:
        if verdict.component_size > size_cap:
            raise InvariantError(f"gathered component of {verdict.component_size} nodes exceeds the bound {size_cap}")
        if verdict.diameter >= 4 * scatter.l * r:
            flags.append(f"component-diameter {verdict.diameter} >= 4lr = {4 * scatter.l * r}")
    return total >= s, flags
