"""Primitives over the BFS tree: broadcast/convergecast, counting, greedy scattered selection."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

from frugalfo.errors import InvariantError
from frugalfo.netsim import Message, NodeContext, Send

INF = 10**9


class Program:
    """Base for node programs: dispatches ``on_<KIND>`` handlers."""

    name = "program"

    def init(self, ctx: NodeContext) -> Any:
        return {}

    def start(self, ctx: NodeContext, state: Any) -> list[Send]:
        return []

    def receive(self, ctx: NodeContext, state: Any, sender: int, msg: Message) -> list[Send]:
        handler = getattr(self, "on_" + msg.kind.split(".")[-1], None)
        if handler is None:
            raise InvariantError(f"{self.name}: no handler for {msg.kind}")
        return handler(ctx, state, sender, msg)

    def decision(self, state: Any) -> Any:
        return state.get("decision") if isinstance(state, dict) else getattr(state, "decision", None)


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class Aggregate:
    """Associative, commutative fold with an optional saturation rule."""

    identity: Any
    combine: Callable[[Any, Any], Any]
    contribute: Callable[[NodeContext], Any]
    encode: Callable[[Any], Message]

    def fold(self, values: list[Any]) -> Any:
        acc = self.identity
        for v in values:
            acc = self.combine(acc, v)
        return acc


def sum_aggregate(contribute: Callable[[NodeContext], int], kind: str = "AGG.UP") -> Aggregate:
    return Aggregate(0, lambda a, b: a + b, contribute, lambda v: Message(kind, ids=(v,)))


def max_aggregate(contribute: Callable[[NodeContext], int], kind: str = "AGG.UP") -> Aggregate:
    return Aggregate(0, max, contribute, lambda v: Message(kind, ids=(v,)))


def capped_multiset(
    contribute: Callable[[NodeContext], Any], cap: int, key_bits: int, kind: str = "AGG.UP"
) -> Aggregate:
    """Per-key counts saturating at ``cap``; each entry costs key_bits plus a count below cap."""

    def combine(a: dict[Any, int], b: dict[Any, int]) -> dict[Any, int]:
        out = dict(a)
        for key, c in b.items():
            out[key] = min(cap, out.get(key, 0) + c)
        return out

    def encode(v: dict[Any, int]) -> Message:
        count_bits = max(1, cap.bit_length())
        return Message(kind, blob=tuple(sorted(v.items())), blob_bits=len(v) * (key_bits + count_bits))

    return Aggregate({}, combine, contribute, encode)


class TreeAggregate(Program):
    """Broadcast a trigger down the BFS tree, fold contributions back up.

    Exactly one message down and one up per tree edge.
    """

    def __init__(self, agg: Aggregate, name: str = "aggregate", payload: Message | None = None,
                 on_payload: Callable[[NodeContext, Message], None] | None = None) -> None:
        self.agg = agg
        self.name = name
        self.payload = payload or Message("AGG.DOWN")
        self.on_payload = on_payload

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        return {"pending": len(ctx.children), "acc": None, "decision": None}

    def _local(self, ctx: NodeContext, st: dict[str, Any], msg: Message) -> list[Send]:
        if self.on_payload is not None:
            self.on_payload(ctx, msg)
        st["acc"] = self.agg.contribute(ctx)
        return self._maybe_up(ctx, st)

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        sends = [(c, self.payload) for c in ctx.children]
        return sends + self._local(ctx, st, self.payload)

    def on_DOWN(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        sends = [(c, msg) for c in ctx.children]
        return sends + self._local(ctx, st, msg)

    def on_UP(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        value = msg.blob if msg.blob is not None else msg.ids[0]
        if isinstance(value, tuple) and value and isinstance(value[0], tuple):
            value = dict(value)
        st["pending"] -= 1
        st.setdefault("inbox", []).append(value)
        return self._maybe_up(ctx, st)

    def _maybe_up(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["pending"] or st["acc"] is None or st.get("sent"):
            return []
        st["sent"] = True
        total = self.agg.fold([st["acc"], *st.get("inbox", [])])
        if ctx.parent is None:
            st["decision"] = total
            return []
        return [(ctx.parent, self.agg.encode(total))]


def count_aggregate_program(flag_key: str) -> TreeAggregate:
    """Count the nodes whose ``mem[flag_key]`` is set; one integer per message."""
    return TreeAggregate(sum_aggregate(lambda ctx: 1 if ctx.mem.get(flag_key) else 0), name=f"count[{flag_key}]")


# ---------------------------------------------------------------------------
# synchronized rounds


class SyncRounds:
    """``rounds`` lock-step exchanges: every node sends one value over every link per round.

    A node sends its round-(k+1) value only after it has the round-k values of
    all neighbours, so the message set does not depend on the schedule.
    """

    def __init__(self, rounds: int, value: Any, step: Callable[[Any, list[Any]], Any],
                 encode: Callable[[int, Any], Message]) -> None:
        self.rounds = rounds
        self.value = value
        self.step = step
        self.encode = encode
        self.round = 0
        self.started = False
        self.inbox: dict[int, dict[int, Any]] = {}
        self.sent_round = 0

    @property
    def done(self) -> bool:
        return self.started and self.round >= self.rounds

    def begin(self, ctx: NodeContext, value: Any) -> list[Send]:
        self.value = value
        self.started = True
        return self._advance(ctx)

    def deliver(self, ctx: NodeContext, sender: int, k: int, value: Any) -> list[Send]:
        self.inbox.setdefault(k, {})[sender] = value
        return self._advance(ctx) if self.started else []

    def _advance(self, ctx: NodeContext) -> list[Send]:
        sends: list[Send] = []
        while self.round < self.rounds:
            k = self.round + 1
            if self.sent_round < k:
                sends.extend((u, self.encode(k, self.value)) for u in ctx.ports)
                self.sent_round = k
            got = self.inbox.get(k, {})
            if len(got) < len(ctx.ports):
                break
            self.value = self.step(self.value, [got[u] for u in ctx.ports])
            self.inbox.pop(k, None)
            self.round = k
        return sends


def _min_plus_one(cap: int) -> Callable[[int, list[int]], int]:
    def step(value: int, nbrs: list[int]) -> int:
        best = min([value] + [x + 1 for x in nbrs])
        return min(best, cap)

    return step


# ---------------------------------------------------------------------------
# greedy scattered selection


@dataclass
class ScatterResult:
    witnesses: list[int]
    l: int
    s: int
    imarked: bool
    flags: list[str] = field(default_factory=list)


class GreedyScatter(Program):
    """Pick up to s witnesses: smallest-id P-node not yet within 2r of an earlier witness.

    Iteration j broadcasts the newest witness, runs a 2r-round distance flood
    from it to set Q, then convergecasts the smallest unmarked P-node.  When
    fewer than s witnesses exist, a final 4r-round flood marks I.  Results are
    left in ``mem`` under ``<prefix>.Q``, ``<prefix>.I``, ``<prefix>.witness``.
    """

    def __init__(self, r: int, s: int, p_key: str, prefix: str) -> None:
        self.r, self.s, self.p_key, self.prefix = r, s, p_key, prefix
        self.name = f"greedy-scatter[{prefix}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        ctx.mem[self.prefix + ".Q"] = False
        ctx.mem[self.prefix + ".I"] = False
        ctx.mem[self.prefix + ".witness"] = False
        return {"it": 0, "flood": {}, "pending": 0, "best": INF, "local_done": False,
                "witnesses": [], "decision": None}

    # requester drives iterations
    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        return self._open(ctx, st, Message("GS.ROUND", ids=(0,), small=(1, 0)))

    def _open(self, ctx: NodeContext, st: dict[str, Any], msg: Message) -> list[Send]:
        w, (it, imark) = msg.ids[0], msg.small
        st.update(it=it, imark=imark, pending=len(ctx.children), best=INF, local_done=False)
        sends = [(c, msg) for c in ctx.children]
        if imark:
            rounds = 4 * self.r
            start = 0 if ctx.mem[self.prefix + ".witness"] else INF
        else:
            if w == ctx.node:
                ctx.mem[self.prefix + ".witness"] = True
            rounds = 2 * self.r if w else 0
            start = 0 if w == ctx.node else INF
        flood = self._flood(st, it, rounds)
        sends += flood.begin(ctx, start)
        return sends + self._check_local(ctx, st)

    def _flood(self, st: dict[str, Any], it: int, rounds: int | None = None) -> SyncRounds:
        if it not in st["flood"]:
            cap = 4 * self.r + 1
            st["flood"][it] = SyncRounds(
                rounds or 0, INF, _min_plus_one(cap),
                lambda k, v, it=it: Message("GS.FLOOD", small=(it, k, min(v, cap))),
            )
        flood = st["flood"][it]
        if rounds is not None:
            flood.rounds = rounds
        return flood

    def _check_local(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        flood = st["flood"][st["it"]]
        if st["local_done"] or not flood.done:
            return []
        st["local_done"] = True
        if st["imark"]:
            if flood.value <= 4 * self.r:
                ctx.mem[self.prefix + ".I"] = True
        else:
            if flood.value <= 2 * self.r:
                ctx.mem[self.prefix + ".Q"] = True
            if ctx.mem.get(self.p_key) and not ctx.mem[self.prefix + ".Q"]:
                st["best"] = min(st["best"], ctx.node)
        del st["flood"][st["it"]]
        return self._maybe_report(ctx, st)

    def on_ROUND(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._open(ctx, st, msg)

    def on_FLOOD(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        it, k, value = msg.small
        flood = self._flood(st, it)
        sends = flood.deliver(ctx, sender, k, value)
        if it == st["it"]:
            sends += self._check_local(ctx, st)
        return sends

    def on_REPORT(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        cand = msg.ids[0]
        if cand:
            st["best"] = min(st["best"], cand)
        st["pending"] -= 1
        return self._maybe_report(ctx, st)

    def _maybe_report(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["pending"] or not st["local_done"]:
            return []
        best = 0 if st["best"] == INF else st["best"]
        if ctx.parent is not None:
            return [(ctx.parent, Message("GS.REPORT", ids=(best,)))]
        return self._next(ctx, st, best)

    def _next(self, ctx: NodeContext, st: dict[str, Any], cand: int) -> list[Send]:
        if st["imark"]:
            st["decision"] = ScatterResult(st["witnesses"], len(st["witnesses"]), self.s, True)
            return []
        if cand:
            st["witnesses"].append(cand)
        l = len(st["witnesses"])
        if l == self.s:
            st["decision"] = ScatterResult(st["witnesses"], l, self.s, False)
            return []
        if not cand:
            return self._open(ctx, st, Message("GS.ROUND", ids=(0,), small=(st["it"] + 1, 1)))
        return self._open(ctx, st, Message("GS.ROUND", ids=(cand,), small=(st["it"] + 1, 0)))
