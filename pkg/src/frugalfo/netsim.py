"""Asynchronous message-passing simulator with per-link accounting.

Every node runs the same program.  A run starts at the requesting node and
ends at quiescence; delivery order among in-flight messages is a seeded random
choice, so no FIFO order is assumed on any link.
"""

from __future__ import annotations

import csv
import io
import math
import random
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import Any, Protocol

from frugalfo.errors import FrugalError, InvariantError, LivelockError, RunError
from frugalfo.graph import BfsTree, Graph, PlanarEmbedding, PortState, build_bfs_tree, norm_edge

KIND_BITS = 8
SMALL_BITS = 8
DEFAULT_EVENT_CAP = 10**8


def id_bits(n: int) -> int:
    """Bits for one node id or one counter bounded by n."""
    return max(1, math.ceil(math.log2(n))) + 1


def log_n(n: int) -> int:
    return max(1, math.ceil(math.log2(n)))


@dataclass(frozen=True)
class Message:
    """A protocol message.

    ``ids`` holds values bounded by n (node ids, counters); ``small`` holds
    values bounded by the query parameters; ``blob`` is a structured payload
    of fixed size ``blob_bits`` that depends only on the parameters.
    """

    kind: str
    ids: tuple[int, ...] = ()
    small: tuple[int, ...] = ()
    blob: Any = None
    blob_bits: int = 0

    def bits(self, n: int) -> int:
        return KIND_BITS + len(self.ids) * id_bits(n) + len(self.small) * SMALL_BITS + self.blob_bits

    def size_constant(self) -> int:
        """An n-independent c with bits(n) <= c * ceil(log2 n) for all n >= 2."""
        return KIND_BITS + 2 * len(self.ids) + len(self.small) * SMALL_BITS + self.blob_bits


Send = tuple[int, Message]


@dataclass
class NodeContext:
    """What a node knows locally: its id, its ports and the precomputed BFS data."""

    node: int
    n: int
    ports: tuple[int, ...]
    depth: int
    parent: int | None
    port_state: dict[int, PortState]
    rotation: tuple[int, ...] | None
    degree_bound: int | None
    mem: dict[str, Any] = field(default_factory=dict)

    def ports_with(self, *states: PortState) -> list[int]:
        return [u for u in self.ports if self.port_state[u] in states]

    @property
    def children(self) -> list[int]:
        return self.ports_with(PortState.CHILD)

    @property
    def is_leaf(self) -> bool:
        return not self.children


class NodeProgram(Protocol):
    name: str

    def init(self, ctx: NodeContext) -> Any: ...

    def start(self, ctx: NodeContext, state: Any) -> list[Send]: ...

    def receive(self, ctx: NodeContext, state: Any, sender: int, msg: Message) -> list[Send]: ...

    def decision(self, state: Any) -> Any: ...


@dataclass
class LinkStats:
    """Directed per-link message counts, largest message size and per-kind tallies."""

    count: Counter[tuple[int, int]] = field(default_factory=Counter)
    max_bits: dict[tuple[int, int], int] = field(default_factory=dict)
    per_kind: Counter[tuple[int, int, str]] = field(default_factory=Counter)
    max_size_constant: int = 0
    max_size_kind: str = ""

    def record(self, src: int, dst: int, msg: Message, bits: int) -> None:
        key = (src, dst)
        self.count[key] += 1
        if bits > self.max_bits.get(key, 0):
            self.max_bits[key] = bits
        self.per_kind[(src, dst, msg.kind)] += 1
        c = msg.size_constant()
        if c > self.max_size_constant:
            self.max_size_constant = c
            self.max_size_kind = msg.kind

    def merge(self, other: LinkStats) -> None:
        self.count.update(other.count)
        for key, b in other.max_bits.items():
            if b > self.max_bits.get(key, 0):
                self.max_bits[key] = b
        self.per_kind.update(other.per_kind)
        if other.max_size_constant > self.max_size_constant:
            self.max_size_constant = other.max_size_constant
            self.max_size_kind = other.max_size_kind

    def copy(self) -> LinkStats:
        out = LinkStats()
        out.merge(self)
        return out

    def link_totals(self) -> Counter[tuple[int, int]]:
        """Messages per undirected link (both directions summed)."""
        out: Counter[tuple[int, int]] = Counter()
        for (u, v), c in self.count.items():
            out[norm_edge(u, v)] += c
        return out

    def max_per_direction(self) -> int:
        return max(self.count.values(), default=0)

    def total_messages(self) -> int:
        return sum(self.count.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["u", "v", "dir", "count", "max_bits"])
        for (src, dst), c in sorted(self.count.items()):
            a, b = norm_edge(src, dst)
            writer.writerow([a, b, "fwd" if src == a else "bwd", c, self.max_bits[(src, dst)]])
        return buf.getvalue()


@dataclass
class FrugalityReport:
    passed: bool
    max_count: int
    argmax_link: tuple[int, int] | None
    argmax_kind: str | None
    max_bits: int
    max_size_constant: int
    max_size_kind: str
    per_kind_max: dict[str, int]
    size_budget_bits: int | None = None

    def render(self) -> str:
        lines = [
            f"frugality check: {'pass' if self.passed else 'FAIL'}",
            f"max messages on one link direction: {self.max_count} at {self.argmax_link} (dominant kind {self.argmax_kind})",
            f"largest message: {self.max_bits} bits; size constant {self.max_size_constant} ({self.max_size_kind})",
        ]
        lines.extend(f"  {kind}: {c}" for kind, c in sorted(self.per_kind_max.items()))
        return "\n".join(lines)


def frugality_report(
    stats: LinkStats, n: int | None = None, k_cap: int | None = None, c_cap: int | None = None
) -> FrugalityReport:
    """Worst link and message; passes iff counts <= k_cap and sizes <= c_cap * ceil(log2 n)."""
    if not stats.count:
        return FrugalityReport(True, 0, None, 0, 0, "", {})
    link, top = max(stats.count.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
    kinds = {k: c for (s, d, k), c in stats.per_kind.items() if (s, d) == link}
    argmax_kind = max(sorted(kinds), key=lambda k: kinds[k])
    per_kind_max: dict[str, int] = {}
    for (_, _, k), c in stats.per_kind.items():
        per_kind_max[k] = max(per_kind_max.get(k, 0), c)
    budget = c_cap * log_n(n) if (c_cap is not None and n is not None) else None
    biggest = max(stats.max_bits.values())
    passed = (k_cap is None or top <= k_cap) and (budget is None or biggest <= budget)
    return FrugalityReport(
        passed=passed,
        max_count=top,
        argmax_link=link,
        argmax_kind=argmax_kind,
        max_bits=biggest,
        max_size_constant=stats.max_size_constant,
        max_size_kind=stats.max_size_kind,
        per_kind_max=per_kind_max,
        size_budget_bits=budget,
    )


@dataclass
class RunOutcome:
    program: str
    decision: Any
    stats: LinkStats
    stats_at_finality: LinkStats | None
    events: int
    states: dict[int, Any]
    transcript: list[str]
    quiescent: bool = True


class Network:
    """A graph plus the per-node local knowledge that persists across runs."""

    def __init__(
        self,
        g: Graph,
        requester: int = 1,
        embedding: PlanarEmbedding | None = None,
        degree_bound: int | None = None,
        bfs: BfsTree | None = None,
    ) -> None:
        self.g = g
        self.requester = requester
        self.embedding = embedding
        self.bfs = bfs or build_bfs_tree(g, requester)
        self.contexts: dict[int, NodeContext] = {}
        for v in g.nodes():
            ports = embedding.rotation[v] if embedding is not None else g.neighbors(v)
            self.contexts[v] = NodeContext(
                node=v,
                n=g.n,
                ports=tuple(ports),
                depth=self.bfs.depth[v],
                parent=self.bfs.parent.get(v),
                port_state={u: self.bfs.port_state[(v, u)] for u in ports},
                rotation=tuple(ports) if embedding is not None else None,
                degree_bound=degree_bound,
            )


def run(
    net: Network,
    program: NodeProgram,
    seed: int,
    event_cap: int = DEFAULT_EVENT_CAP,
    transcript: bool = False,
) -> RunOutcome:
    rng = random.Random(seed)
    ctxs = net.contexts
    n = net.g.n
    states = {v: program.init(ctx) for v, ctx in ctxs.items()}
    stats = LinkStats()
    at_final: LinkStats | None = None
    lines: list[str] = []
    flight: list[tuple[int, int, Message]] = []

    def post(src: int, sends: Iterable[Send]) -> None:
        nbrs = ctxs[src].port_state
        for dst, msg in sends:
            if dst not in nbrs:
                raise InvariantError(f"node {src} tried to send {msg.kind} to non-neighbour {dst}")
            flight.append((src, dst, msg))

    requester_state = states[net.requester]
    post(net.requester, program.start(ctxs[net.requester], requester_state))
    events = 0
    if program.decision(requester_state) is not None:
        at_final = stats.copy()
    while flight:
        if events >= event_cap:
            raise LivelockError(f"{program.name}: event cap {event_cap} reached with {len(flight)} messages in flight")
        i = rng.randrange(len(flight))
        flight[i], flight[-1] = flight[-1], flight[i]
        src, dst, msg = flight.pop()
        bits = msg.bits(n)
        stats.record(src, dst, msg, bits)
        if transcript:
            a, b = norm_edge(src, dst)
            lines.append(f"deliver {a}-{b} {'fwd' if src == a else 'bwd'} {msg.kind} {bits}")
        events += 1
        try:
            sends = program.receive(ctxs[dst], states[dst], src, msg)
        except FrugalError:
            raise
        except Exception as exc:
            raise RunError(f"{program.name}: node {dst} failed handling {msg.kind} from {src}: {exc!r}") from exc
        post(dst, sends)
        if at_final is None and program.decision(requester_state) is not None:
            at_final = stats.copy()
    return RunOutcome(
        program=program.name,
        decision=program.decision(requester_state),
        stats=stats,
        stats_at_finality=at_final,
        events=events,
        states=states,
        transcript=lines,
    )


class Session:
    """Sequential composition of runs on one network; stats and transcripts accumulate."""

    def __init__(self, net: Network, seed: int, event_cap: int = DEFAULT_EVENT_CAP, transcript: bool = False) -> None:
        self.net = net
        self.seed = seed
        self.event_cap = event_cap
        self.keep_transcript = transcript
        self.stats = LinkStats()
        self.stats_at_finality = LinkStats()
        self.transcript: list[str] = []
        self.events = 0
        self.phases: list[str] = []

    def run(self, program: NodeProgram) -> RunOutcome:
        phase_seed = self.seed * 1_000_003 + len(self.phases)
        out = run(self.net, program, phase_seed, self.event_cap, self.keep_transcript)
        self.phases.append(program.name)
        self.stats.merge(out.stats)
        self.stats_at_finality.merge(out.stats_at_finality or out.stats)
        self.events += out.events
        if self.keep_transcript:
            self.transcript.append(f"# phase {len(self.phases)} {program.name}")
            self.transcript.extend(out.transcript)
        return out
