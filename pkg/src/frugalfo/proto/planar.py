"""Planar pipeline: cover and kernel intervals, per-band decompositions, scattered-set decision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from frugalfo.catalog import Psi
from frugalfo.errors import ConfigurationError, InvariantError
from frugalfo.graph import OrderedTreeDecomposition, PortState
from frugalfo.netsim import Message, NodeContext, Send, Session
from frugalfo.proto.common import GreedyScatter, Program, SyncRounds, TreeAggregate, sum_aggregate
from frugalfo.proto.decomp import ComponentPipeline, Frame, FrameSpec, PassConfig, collect_decomposition
from frugalfo.tdeval import PsiAutomaton

EMPTY = (1, 0)

_DEPTH_STEP = {
    PortState.PARENT: -1,
    PortState.UPWARD: -1,
    PortState.HORIZON: 0,
    PortState.CHILD: 1,
    PortState.DOWNWARD: 1,
}


def _keys(r: int) -> dict[str, str]:
    return {name: f"planar{r}.{name}" for name in ("treeDepth", "C", "D", "anc", "done")}


def intersect(a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    lo, hi = max(a[0], b[0]), min(a[1], b[1])
    return (lo, hi) if lo <= hi else EMPTY


def cover_interval(depth: int, tree_depth: int, r: int) -> tuple[int, int]:
    if tree_depth <= 2 * r:
        return (0, 0)
    lo, hi = max(depth - 2 * r, 0), min(depth, tree_depth - 2 * r)
    return (lo, hi) if lo <= hi else EMPTY


def band_count(tree_depth: int, r: int) -> int:
    """Bands 0..max(0, treeDepth - 2r)."""
    return max(0, tree_depth - 2 * r) + 1


# ---------------------------------------------------------------------------
# Phase II


class CoverIntervals(Program):
    """Depth fold up the BFS tree, then a broadcast that fixes each node's cover interval.

    The broadcast also hands every node its BFS ancestors, up to 2r of them.
    """

    def __init__(self, r: int) -> None:
        self.r = r
        self.keys = _keys(r)
        self.name = f"cover[r={r}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        return {"tree_depth": 0, "pending": len(ctx.children), "decision": None}

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        st["tree_depth"] = 0
        if not ctx.children:
            return self._cover(ctx, st, 0, ())
        return [(c, Message("COVER.TREEDEPTH")) for c in ctx.children]

    def on_TREEDEPTH(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        st["tree_depth"] = ctx.depth
        if ctx.children:
            return [(c, Message("COVER.TREEDEPTH")) for c in ctx.children]
        return [(ctx.parent, Message("COVER.ACKTREEDEPTH", ids=(ctx.depth,)))]

    def on_ACKTREEDEPTH(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        st["tree_depth"] = max(st["tree_depth"], msg.ids[0])
        st["pending"] -= 1
        if st["pending"]:
            return []
        if ctx.parent is None:
            return self._cover(ctx, st, st["tree_depth"], ())
        return [(ctx.parent, Message("COVER.ACKTREEDEPTH", ids=(st["tree_depth"],)))]

    def _cover(self, ctx: NodeContext, st: dict[str, Any], tree_depth: int, above: tuple[int, ...]) -> list[Send]:
        anc = ((ctx.node,) + above)[: 2 * self.r + 1]
        ctx.mem[self.keys["treeDepth"]] = tree_depth
        ctx.mem[self.keys["C"]] = cover_interval(ctx.depth, tree_depth, self.r)
        ctx.mem[self.keys["anc"]] = anc
        ctx.mem[self.keys["done"]] = set()
        st["pending"] = len(ctx.children)
        if ctx.children:
            msg = Message("COVER.STARTCOVER", ids=(tree_depth,) + anc[: 2 * self.r], small=(len(anc),))
            return [(c, msg) for c in ctx.children]
        return self._ack(ctx, st)

    def on_STARTCOVER(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._cover(ctx, st, msg.ids[0], msg.ids[1:])

    def _ack(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["pending"]:
            return []
        if ctx.parent is None:
            st["decision"] = ctx.mem[self.keys["treeDepth"]]
            return []
        return [(ctx.parent, Message("COVER.ACKCOVER"))]

    def on_ACKCOVER(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        st["pending"] -= 1
        return self._ack(ctx, st)


# ---------------------------------------------------------------------------
# Phase III


class KernelIntervals(Program):
    """r rounds of interval exchange: D_i(v) = C(v) intersected with every neighbour's D_{i-1}.

    Tuples that arrive early are kept and re-examined after every advance, so
    no FIFO order is needed.  Each delivery asserts that the two endpoints'
    round indices differ by at most one.
    """

    def __init__(self, r: int) -> None:
        self.r = r
        self.keys = _keys(r)
        self.name = f"kernel[r={r}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        return {"pending": len(ctx.children), "started": False, "over": False, "over_pending": len(ctx.children),
                "idx": 1, "stored": [], "checks": 0, "decision": None}

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        return self._init(ctx, st)

    def _init(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        ctx.mem[self.keys["D"]] = ctx.mem[self.keys["C"]]
        st["idx"] = 1
        if ctx.children:
            return [(c, Message("KERNEL.INIT")) for c in ctx.children]
        return self._ackinit(ctx, st)

    def on_INIT(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._init(ctx, st)

    def _ackinit(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["pending"]:
            return []
        if ctx.parent is not None:
            return [(ctx.parent, Message("KERNEL.ACKINIT"))]
        return self._startkernel(ctx, st)

    def on_ACKINIT(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        st["pending"] -= 1
        return self._ackinit(ctx, st)

    def _kernel_msg(self, ctx: NodeContext, st: dict[str, Any]) -> Message:
        lo, hi = ctx.mem[self.keys["D"]]
        return Message("KERNEL.KERNEL", ids=(lo, hi), small=(st["idx"] - 1,))

    def _startkernel(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        st["started"] = True
        sends = [(c, Message("KERNEL.STARTKERNEL")) for c in ctx.children]
        if self.r == 0:
            st["over"] = True
            return sends + self._over(ctx, st)
        sends += [(u, self._kernel_msg(ctx, st)) for u in ctx.ports]
        return sends + self._advance(ctx, st)

    def on_STARTKERNEL(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._startkernel(ctx, st)

    def on_KERNEL(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        i = msg.small[0]
        st["checks"] += 1
        if abs(st["idx"] - (i + 1)) > 1:
            raise InvariantError(f"round indices of {ctx.node} ({st['idx']}) and {sender} ({i + 1}) differ by more than one")
        st["stored"].append((sender, i, (msg.ids[0], msg.ids[1])))
        if not st["started"]:
            return []
        return self._advance(ctx, st)

    def _advance(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        sends: list[Send] = []
        while not st["over"]:
            want = st["idx"] - 1
            have = {u: d for u, i, d in st["stored"] if i == want}
            if len(have) < len(ctx.ports):
                break
            d = ctx.mem[self.keys["D"]]
            for u in ctx.ports:
                d = intersect(d, have[u])
            ctx.mem[self.keys["D"]] = d
            st["stored"] = [t for t in st["stored"] if t[1] != want]
            st["idx"] += 1
            if st["idx"] <= self.r:
                sends += [(u, self._kernel_msg(ctx, st)) for u in ctx.ports]
            else:
                st["over"] = True
                sends += self._over(ctx, st)
        return sends

    def _over(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if not st["over"] or st["over_pending"] or st.get("over_sent"):
            return []
        st["over_sent"] = True
        ctx.mem[self.keys["D"] + ".checks"] = st["checks"]
        if ctx.parent is None:
            st["decision"] = True
            return []
        return [(ctx.parent, Message("KERNEL.KERNELOVER"))]

    def on_KERNELOVER(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        st["over_pending"] -= 1
        return self._over(ctx, st)


def run_cover_and_kernel(session: Session, r: int) -> int:
    """Phases II and III; returns treeDepth."""
    keys = _keys(r)
    root = session.net.contexts[session.net.requester]
    if keys["D"] in root.mem:
        return root.mem[keys["treeDepth"]]
    tree_depth = session.run(CoverIntervals(r)).decision
    session.run(KernelIntervals(r))
    return tree_depth


# ---------------------------------------------------------------------------
# Phase IV


def band_arity(r: int) -> int:
    return 3 * (2 * r + 2) + 1


def in_interval(i: int, interval: tuple[int, int]) -> bool:
    return interval[0] <= i <= interval[1]


class BandDecompositions(ComponentPipeline):
    """Post-order traversal of the BFS tree; each depth-i node not yet covered starts
    the component of G[i, i+2r] around it, which is decomposed and evaluated.

    A node's P flag is set when some band i in D(v) reports psi(v).
    """

    prefix = "BAND"

    def __init__(self, r: int, psi: Psi, tag: str) -> None:
        super().__init__(PassConfig("psi", band_arity(r), r, automaton=PsiAutomaton(psi, r)))
        self.r, self.psi, self.tag = r, psi, tag
        self.keys = _keys(r)
        self.name = f"bands[{tag}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        ctx.mem[self.tag + ".P"] = False
        ctx.mem[self.tag + ".bands"] = set()
        ctx.mem[self.keys["done"]] = set()
        return {"frames": {}, "pt": list(ctx.children), "decision": None}

    def describe(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...]) -> FrameSpec:
        i = key[0]
        d = ctx.depth
        lo, hi = i, i + 2 * self.r
        if not lo <= d <= hi:
            raise InvariantError(f"node {ctx.node} at depth {d} pulled into band {i}")
        members = tuple(u for u in ctx.ports if lo <= d + _DEPTH_STEP[ctx.port_state[u]] <= hi)
        top = d == i
        if top:
            ctx.mem[self.keys["done"]].add(i)
        children = frozenset(u for u in members if ctx.port_state[u] == PortState.CHILD)
        anc = ctx.mem[self.keys["anc"]]
        return FrameSpec(
            members=members,
            top=top,
            tree_parent=None if top else ctx.parent,
            tree_children=children,
            parent_port=ctx.parent if top else None,
            path=tuple(anc[: d - i + 1]),
        )

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        return self._pt_next(ctx, st)

    def _pt_next(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if st["pt"]:
            return [(st["pt"].pop(0), Message("BANDPT.GO"))]
        i = ctx.depth
        bands = band_count(ctx.mem[self.keys["treeDepth"]], self.r)
        if i < bands and i not in ctx.mem[self.keys["done"]]:
            return self.start_component(ctx, st, (i, ctx.node))
        return self._pt_back(ctx, st)

    def _pt_back(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        if ctx.parent is None:
            st["decision"] = True
            return []
        return [(ctx.parent, Message("BANDPT.BACK"))]

    def on_GO(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._pt_next(ctx, st)

    def on_BACK(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._pt_next(ctx, st)

    def component_done(self, ctx: NodeContext, st: dict[str, Any], frame: Frame) -> list[Send]:
        return self._pt_back(ctx, st)

    def on_verdict(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...]) -> None:
        i = key[0]
        ctx.mem[self.tag + ".bands"].add(i)
        if in_interval(i, ctx.mem[self.keys["D"]]):
            ctx.mem[self.tag + ".P"] = True


@dataclass
class BandReport:
    tree_depth: int
    decompositions: dict[tuple[int, ...], OrderedTreeDecomposition]
    violations: list[str]


def assemble(states: dict[int, Any], key: tuple[int, ...]) -> OrderedTreeDecomposition:
    bags, parent = collect_decomposition(states, key)
    index = {gid: k + 1 for k, gid in enumerate(sorted(bags))}
    return OrderedTreeDecomposition(
        {index[g]: bags[g] for g in bags},
        {index[g]: (index[p] if p is not None else None) for g, p in parent.items()},
    )


def run_bands(session: Session, r: int, psi: Psi, tag: str) -> BandReport:
    """Phases II-IV: leaves ``<tag>.P`` set exactly at the nodes satisfying psi on their r-ball."""
    if session.net.embedding is None:
        raise ConfigurationError("the planar protocol needs a combinatorial embedding")
    tree_depth = run_cover_and_kernel(session, r)
    out = session.run(BandDecompositions(r, psi, tag))
    keys = sorted({k for st in out.states.values() for k in st.get("frames", {})})
    violations = [v for st in out.states.values() for v in st.get("violations", [])]
    return BandReport(tree_depth, {k: assemble(out.states, k) for k in keys}, violations)


# ---------------------------------------------------------------------------
# Phase V


def component_rounds(l: int, r: int) -> int:
    """Rounds after which every node of an <I> component knows its smallest member.

    Each member is within 4r of one of its component's witnesses, and the
    witnesses of a component chain together with gaps of at most 8r+1.
    """
    return l * (8 * r + 1)


class ComponentTrees(Program):
    """Lock-step flooding among I-nodes of (smallest id, distance, shortest path, path P flags).

    Lexicographic minima make the result a BFS tree of each <I> component
    rooted at its smallest id.
    """

    def __init__(self, rounds: int, tag: str) -> None:
        self.rounds, self.tag = rounds, tag
        self.name = f"component-trees[{tag}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        inside = bool(ctx.mem.get(self.tag + ".I"))
        flag = bool(ctx.mem.get(self.tag + ".P"))
        value = (ctx.node, 0, (ctx.node,), (flag,)) if inside else None
        st: dict[str, Any] = {"inside": inside, "flag": flag, "nbrs": {}, "decision": None}

        def step(current: Any, incoming: list[Any]) -> Any:
            st["nbrs"] = dict(zip(ctx.ports, incoming))
            if current is None:
                return None
            best = current
            for cand in incoming:
                if cand is None:
                    continue
                root, dist, path, flags = cand
                if ctx.node in path:
                    continue
                ext = (root, dist + 1, (ctx.node,) + path, (st["flag"],) + flags)
                if ext[:3] < best[:3]:
                    best = ext
            return best

        def encode(k: int, value: Any) -> Message:
            if value is None:
                return Message("KTREE.ROUND", small=(k, 0), blob=None)
            root, dist, path, flags = value
            return Message("KTREE.ROUND", ids=(root, dist) + path, small=(k, 1), blob=value, blob_bits=len(flags))

        st["rounds"] = SyncRounds(self.rounds + 1, value, step, encode)
        return st

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        return self._wake(ctx, st)

    def _wake(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        rounds = st["rounds"]
        if rounds.started:
            return []
        sends = rounds.begin(ctx, rounds.value)
        self._finish(ctx, st)
        return sends

    def _finish(self, ctx: NodeContext, st: dict[str, Any]) -> None:
        if not st["rounds"].done or st["decision"] is not None:
            return
        st["decision"] = True
        ctx.mem[self.tag + ".ktree"] = st["rounds"].value
        ctx.mem[self.tag + ".knbrs"] = st["nbrs"]

    def on_ROUND(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        sends = self._wake(ctx, st)
        sends += st["rounds"].deliver(ctx, sender, msg.small[0], msg.blob)
        self._finish(ctx, st)
        return sends


def scatter_arity(l: int, r: int) -> int:
    return 3 * (component_rounds(l, r) + 2) + 1


class ComponentDecompositions(ComponentPipeline):
    """Broadcast a start signal; each component root decomposes its <I> component
    and runs the scattered-set table pass over it."""

    prefix = "KCOMP"

    def __init__(self, r: int, s: int, l: int, tag: str) -> None:
        super().__init__(PassConfig("dp", scatter_arity(l, r), r, s=s))
        self.r, self.s, self.tag = r, s, tag
        self.name = f"component-decompositions[{tag}]"

    def init(self, ctx: NodeContext) -> dict[str, Any]:
        ctx.mem[self.tag + ".kcount"] = 0
        return {"frames": {}, "decision": None}

    def describe(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...]) -> FrameSpec:
        root, _, path, flags = ctx.mem[self.tag + ".ktree"]
        if root != key[0]:
            raise InvariantError(f"node {ctx.node} pulled into the component of {key[0]}")
        nbrs = ctx.mem[self.tag + ".knbrs"]
        members = tuple(u for u in ctx.ports if nbrs.get(u) is not None and nbrs[u][0] == root)
        children = frozenset(u for u in members if len(nbrs[u][2]) > 1 and nbrs[u][2][1] == ctx.node)
        return FrameSpec(
            members=members,
            top=root == ctx.node,
            tree_parent=path[1] if len(path) > 1 else None,
            tree_children=children,
            parent_port=None,
            path=tuple(path),
            flags=tuple(flags),
        )

    def start(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        st["decision"] = True
        return self._spread(ctx, st)

    def _spread(self, ctx: NodeContext, st: dict[str, Any]) -> list[Send]:
        sends: list[Send] = [(c, Message("KSTART.GO")) for c in ctx.children]
        tree = ctx.mem.get(self.tag + ".ktree")
        if tree is not None and tree[0] == ctx.node:
            sends += self.start_component(ctx, st, (ctx.node,))
        return sends

    def on_GO(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        return self._spread(ctx, st)

    def component_done(self, ctx: NodeContext, st: dict[str, Any], frame: Frame) -> list[Send]:
        ctx.mem[self.tag + ".kcount"] = frame.result
        return []


@dataclass
class ScatterReport:
    verdict: bool
    witnesses: list[int]
    decompositions: dict[tuple[int, ...], OrderedTreeDecomposition]
    counts: dict[int, int]


def decide_scattered(session: Session, r: int, s: int, tag: str) -> ScatterReport:
    """Phase V over the P flags at ``<tag>.P``."""
    scatter = session.run(GreedyScatter(r, s, tag + ".P", tag)).decision
    if scatter.l == s:
        return ScatterReport(True, scatter.witnesses, {}, {})
    if scatter.l == 0:
        return ScatterReport(False, scatter.witnesses, {}, {})
    session.run(ComponentTrees(component_rounds(scatter.l, r), tag))
    out = session.run(ComponentDecompositions(r, s, scatter.l, tag))
    total = session.run(
        TreeAggregate(
            sum_aggregate(lambda ctx: ctx.mem.get(tag + ".kcount", 0), kind="KCOUNT.UP"),
            name=f"component-counts[{tag}]",
            payload=Message("KCOUNT.DOWN"),
        )
    ).decision
    keys = sorted({k for st in out.states.values() for k in st.get("frames", {})})
    counts = {v: ctx.mem[tag + ".kcount"] for v, ctx in session.net.contexts.items() if ctx.mem.get(tag + ".kcount")}
    return ScatterReport(total >= s, scatter.witnesses, {k: assemble(out.states, k) for k in keys}, counts)


def eval_basic_local_planar(session: Session, r: int, s: int, psi: Psi, tag: str) -> tuple[bool, BandReport, ScatterReport]:
    bands = run_bands(session, r, psi, tag)
    scatter = decide_scattered(session, r, s, tag)
    return scatter.verdict, bands, scatter
