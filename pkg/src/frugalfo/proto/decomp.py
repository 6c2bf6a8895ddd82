"""Distributed ordered tree decompositions of planar components, and passes over them.

A component is a connected node set with a rooted spanning tree whose roots
("tops") all hang off one virtual vertex that is never instantiated.  The
pipeline run per component is:

A. token DFS from the starter with lowpoints, then a labelling sweep that
   assigns every incident edge a block id;
B. face walks per nontrivial block: the face of the special block that
   surrounds the virtual vertex is star-triangulated from it, every other face
   (a simple cycle) is fan-triangulated from the node that launched the walk;
   a triangle's bag concatenates the spanning-tree root paths of its corners;
C. a DFS over triangles across sides that are not spanning-tree edges (the
   dual of the cotree), glued across cut vertices by local hub chains;
D. passes over the resulting tree: wake, edge completion up and down, then
   either the three automaton passes or the scattered-set table pass.

Messages between tree-decomposition nodes hosted at different nodes are
routed over at most three hops along face darts.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any

from frugalfo.errors import InvariantError
from frugalfo.graph import face_successor, norm_edge
from frugalfo.netsim import Message, NodeContext, Send
from frugalfo.proto.common import Program
from frugalfo.tdeval import (
    DEFAULT_DP_CAP,
    PsiAutomaton,
    dp_step,
    pot_step,
    sigma_label_from,
    suc_step,
)

VIRTUAL = -1
Link = tuple[tuple[int, ...], tuple[Any, ...]]


# ---------------------------------------------------------------------------
# message packing


def _flatten(value: Any, ids: list[int], small: list[int]) -> None:
    if value is None:
        ids.append(0)
    elif isinstance(value, bool):
        small.append(int(value))
    elif isinstance(value, int):
        ids.append(value)
    elif isinstance(value, str):
        small.append(0)
    elif isinstance(value, (tuple, list)):
        small.append(len(value))
        for item in value:
            _flatten(item, ids, small)
    else:
        raise TypeError(f"cannot account for a {type(value).__name__} field")


def pack(kind: str, fields: dict[str, Any], opaque: dict[str, Any] | None = None, opaque_bits: int = 0) -> Message:
    """A message whose id and small-value slots are counted from its fields.

    Structured payloads go in ``opaque`` with an explicit size.
    """
    ids: list[int] = []
    small: list[int] = []
    for value in fields.values():
        _flatten(value, ids, small)
    blob = dict(fields)
    if opaque:
        blob.update(opaque)
    return Message(kind, ids=tuple(ids), small=tuple(small), blob=blob, blob_bits=opaque_bits)


# ---------------------------------------------------------------------------
# per-node state


@dataclass(frozen=True)
class FrameSpec:
    """What a node knows about itself inside one component."""

    members: tuple[int, ...]
    top: bool
    tree_parent: int | None
    tree_children: frozenset[int]
    parent_port: int | None
    path: tuple[int, ...]
    flags: tuple[bool, ...] = ()


@dataclass
class TdNode:
    lid: int
    bag: tuple[int, ...]
    kind: str
    corners: tuple[int, ...] = ()
    lists: tuple[tuple[int, ...], ...] = ()
    sides: list[tuple[tuple[int, int], bool, Link | None]] = field(default_factory=list)
    edges: set[tuple[int, int]] = field(default_factory=set)
    face: tuple[int, int] | None = None
    flags: dict[int, bool] = field(default_factory=dict)
    parent: Link | None = None
    children: list[Link] = field(default_factory=list)
    visited: bool = False
    scan: int = 0
    parent_pair: tuple[int, int] | None = None
    anchor: Link | None = None
    # pass state
    pbag: tuple[int, ...] | None = None
    padded: tuple[int, ...] = ()
    child_shared: list[tuple[int, ...]] = field(default_factory=list)
    pending: int = 0
    known: set[tuple[int, int]] = field(default_factory=set)
    dist: dict[tuple[int, int], int] = field(default_factory=dict)
    label: Any = None
    child_pots: list[set[Any]] = field(default_factory=list)
    pot: set[Any] = field(default_factory=set)
    tables: list[Any] = field(default_factory=list)
    total: int = 0


@dataclass
class Frame:
    key: tuple[int, ...]
    spec: FrameSpec
    starter: int
    # stage A
    visited: bool = False
    depth: int = 0
    low: int = 0
    dfs_parent: int | None = None
    scan: int = 0
    waiting: int | None = None
    kids: list[int] = field(default_factory=list)
    kid_low: dict[int, int] = field(default_factory=dict)
    kid_flag: dict[int, bool] = field(default_factory=dict)
    back_up: set[int] = field(default_factory=set)
    back_down: dict[int, int] = field(default_factory=dict)
    pb: int = 0
    pb_bridge: bool = False
    pb_top: int = 0
    port_block: dict[int, int] = field(default_factory=dict)
    block_bridge: dict[int, bool] = field(default_factory=dict)
    acks: int = 0
    # stage B
    out_walked: set[int] = field(default_factory=set)
    in_loc: dict[int, tuple[Any, ...]] = field(default_factory=dict)
    launches: list[int] = field(default_factory=list)
    launched: list[int] = field(default_factory=list)
    stage_kids: list[int] = field(default_factory=list)
    # stage C
    td: dict[int, TdNode] = field(default_factory=dict)
    next_lid: int = 0
    redirect: dict[Link, int] = field(default_factory=dict)
    steps: list[tuple[Any, ...]] = field(default_factory=list)
    hubs: list[int] = field(default_factory=list)
    bridge_bag: dict[int, int] = field(default_factory=dict)
    parent_bridge_lid: int = -1
    root: Link | None = None
    # stage D
    sweeps: dict[tuple[int, int], set[int]] = field(default_factory=dict)
    result: Any = None

    def new_node(self, lists: tuple[tuple[int, ...], ...], kind: str, **kw: Any) -> TdNode:
        self.next_lid += 1
        bag = tuple(v for lst in lists for v in lst)
        node = TdNode(self.next_lid, bag, kind, lists=lists, **kw)
        self.td[node.lid] = node
        return node

    def own_flags(self) -> dict[int, bool]:
        return dict(zip(self.spec.path, self.spec.flags))

    def is_tree_edge(self, u: int) -> bool:
        return u == self.spec.tree_parent or u in self.spec.tree_children

    def block_ports(self, b: int) -> set[int]:
        return {u for u in self.spec.members if self.port_block.get(u) == b}


def _wedge(rot: tuple[int, ...], came_from: int, going_to: int) -> list[int]:
    """Ports strictly between the incoming port and the outgoing one, scanning backwards."""
    i = rot.index(came_from)
    out = []
    for step in range(1, len(rot)):
        w = rot[(i - step) % len(rot)]
        if w == going_to:
            return out
        out.append(w)
    return out


# ---------------------------------------------------------------------------
# the pipeline


@dataclass
class PassConfig:
    """What to evaluate once a component's decomposition is built."""

    mode: str
    arity: int
    r: int
    automaton: PsiAutomaton | None = None
    s: int = 0
    dp_cap: int = DEFAULT_DP_CAP


class ComponentPipeline(Program):
    """Node program fragment building and evaluating decompositions of components.

    Subclasses provide ``describe`` (the local view of a component) and
    ``component_done`` (called at the starter when the last pass returns),
    and may override ``deliver_verdict``.
    """

    prefix = "CP"

    def __init__(self, passes: PassConfig) -> None:
        self.passes = passes

    # hooks ------------------------------------------------------------------

    def describe(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...]) -> FrameSpec:
        raise NotImplementedError

    def component_done(self, ctx: NodeContext, st: dict[str, Any], frame: Frame) -> list[Send]:
        return []

    def on_verdict(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...]) -> None:
        """Node ``ctx.node`` satisfies psi inside the component ``key``."""

    # plumbing ---------------------------------------------------------------

    def frame(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...], starter: int) -> Frame:
        frames = st.setdefault("frames", {})
        if key not in frames:
            frames[key] = Frame(key, self.describe(ctx, st, key), starter)
        return frames[key]

    def msg(self, op: str, frame: Frame, /, **fields: Any) -> Message:
        opaque = fields.pop("_opaque", None)
        bits = fields.pop("_bits", 0)
        return pack(f"{self.prefix}.{op}", {"key": frame.key, "starter": frame.starter, **fields}, opaque, bits)

    def receive(self, ctx: NodeContext, st: dict[str, Any], sender: int, msg: Message) -> list[Send]:
        op = msg.kind.split(".", 1)[1]
        if not msg.kind.startswith(self.prefix + "."):
            return super().receive(ctx, st, sender, msg)
        body = msg.blob
        frame = self.frame(ctx, st, tuple(body["key"]), body["starter"])
        handler = getattr(self, "_on_" + op.replace(".", "_"))
        out: list[Send] = []
        local: deque[tuple[Any, ...]] = deque()
        st["_local"] = local
        handler(ctx, st, frame, sender, body, out, local)
        self._drain(ctx, st, frame, out, local)
        return out

    def _drain(self, ctx, st, frame: Frame, out: list[Send], local: deque) -> None:
        while local:
            lid, op2, payload, hops = local.popleft()
            self._td_deliver(ctx, st, frame, lid, op2, payload, hops, out, local)

    def start_component(self, ctx: NodeContext, st: dict[str, Any], key: tuple[int, ...]) -> list[Send]:
        frame = self.frame(ctx, st, key, ctx.node)
        frame.visited = True
        frame.depth = 1
        frame.low = 1
        frame.dfs_parent = None
        out: list[Send] = []
        local: deque[tuple[Any, ...]] = deque()
        st["_local"] = local
        self._explore(ctx, st, frame, out)
        self._drain(ctx, st, frame, out, local)
        return out

    # stage A: DFS with lowpoints ---------------------------------------------

    def _explore(self, ctx: NodeContext, st: dict[str, Any], frame: Frame, out: list[Send]) -> None:
        members = frame.spec.members
        while frame.scan < len(members):
            u = members[frame.scan]
            frame.scan += 1
            if u == frame.dfs_parent or u in frame.back_down or u in frame.kid_low:
                continue
            frame.waiting = u
            out.append((u, self.msg("DFS.GO", frame, depth=frame.depth)))
            return
        frame.waiting = None
        if frame.dfs_parent is None:
            self._label_start(ctx, st, frame, out)
        else:
            flag = bool(frame.spec.flags and frame.spec.flags[0])
            out.append((frame.dfs_parent, self.msg("DFS.RET", frame, low=frame.low, flag=flag)))

    def _on_DFS_GO(self, ctx, st, frame, sender, body, out, local) -> None:
        if frame.visited:
            if frame.depth >= body["depth"] or frame.waiting is None:
                raise InvariantError(f"DFS probe from {sender} reached {ctx.node}, which is not an active ancestor")
            frame.back_down[sender] = frame.waiting
            out.append((sender, self.msg("DFS.BACK", frame, depth=frame.depth)))
            return
        frame.visited = True
        frame.dfs_parent = sender
        frame.depth = body["depth"] + 1
        frame.low = 0 if frame.spec.top else frame.depth
        self._explore(ctx, st, frame, out)

    def _on_DFS_BACK(self, ctx, st, frame, sender, body, out, local) -> None:
        frame.back_up.add(sender)
        frame.low = min(frame.low, body["depth"])
        self._explore(ctx, st, frame, out)

    def _on_DFS_RET(self, ctx, st, frame, sender, body, out, local) -> None:
        frame.kids.append(sender)
        frame.kid_low[sender] = body["low"]
        frame.kid_flag[sender] = body["flag"]
        frame.low = min(frame.low, body["low"])
        self._explore(ctx, st, frame, out)

    # stage A: block labels ----------------------------------------------------

    def _child_block(self, frame: Frame, u: int) -> tuple[int, bool, int]:
        low = frame.kid_low[u]
        if low >= frame.depth:
            return u, low > frame.depth, frame.spec.path[-1]
        return frame.pb, frame.pb_bridge, frame.pb_top

    def _label_start(self, ctx, st, frame: Frame, out: list[Send]) -> None:
        frame.pb = frame.starter
        frame.pb_bridge = not any(low < frame.depth for low in frame.kid_low.values())
        frame.pb_top = frame.spec.path[-1]
        self._label_here(ctx, st, frame, out)

    def _label_here(self, ctx, st, frame: Frame, out: list[Send]) -> None:
        if frame.spec.top and frame.pb != frame.starter:
            st.setdefault("violations", []).append(f"top {ctx.node} outside the special block in {frame.key}")
        if frame.pb != frame.starter and frame.spec.path[-1] != frame.pb_top:
            st.setdefault("violations", []).append(f"node {ctx.node} leaves its block's top subtree in {frame.key}")
        if frame.dfs_parent is not None:
            frame.port_block[frame.dfs_parent] = frame.pb
        frame.block_bridge[frame.pb] = frame.pb_bridge
        for u in frame.back_up:
            frame.port_block[u] = frame.pb
        for u in frame.kids:
            bid, bridge, top = self._child_block(frame, u)
            frame.port_block[u] = bid
            frame.block_bridge[bid] = bridge
            out.append((u, self.msg("LAB.GO", frame, block=bid, bridge=bridge, top=top)))
        for u, child in frame.back_down.items():
            frame.port_block[u] = frame.port_block[child]
        frame.acks = len(frame.kids)
        self._label_ack(ctx, st, frame, out)

    def _label_ack(self, ctx, st, frame: Frame, out: list[Send]) -> None:
        if frame.acks:
            return
        if frame.dfs_parent is not None:
            out.append((frame.dfs_parent, self.msg("LAB.ACK", frame)))
        else:
            self._stage_enter(ctx, st, frame, "WT", out)

    def _on_LAB_GO(self, ctx, st, frame, sender, body, out, local) -> None:
        frame.pb, frame.pb_bridge, frame.pb_top = body["block"], body["bridge"], body["top"]
        self._label_here(ctx, st, frame, out)

    def _on_LAB_ACK(self, ctx, st, frame, sender, body, out, local) -> None:
        frame.acks -= 1
        self._label_ack(ctx, st, frame, out)

    # generic token traversal over the DFS tree -------------------------------

    def _stage_enter(self, ctx, st, frame: Frame, stage: str, out: list[Send], local=None, body=None) -> None:
        frame.stage_kids = list(frame.kids)
        if stage == "WT":
            frame.launches = self._launch_list(frame)
            self._walk_next(ctx, st, frame, out)
        elif stage == "CT":
            local = st["_local"] if local is None else local
            frame.parent_bridge_lid = body["bridge_lid"] if body else -1
            self._ct_plan(ctx, st, frame)
            self._ct_next(ctx, st, frame, out, local)
        elif stage == "SW":
            frame.launches = list(frame.launched)
            self._sweep_next(ctx, st, frame, out)

    def _stage_continue(self, ctx, st, frame: Frame, stage: str, out: list[Send]) -> None:
        if frame.stage_kids:
            u = frame.stage_kids.pop(0)
            fields: dict[str, Any] = {}
            if stage == "CT":
                fields["bridge_lid"] = frame.bridge_bag.get(u, -1)
            out.append((u, self.msg(f"{stage}.GO", frame, **fields)))
            return
        if frame.dfs_parent is not None:
            out.append((frame.dfs_parent, self.msg(f"{stage}.DONE", frame)))
        elif stage == "WT":
            self._stage_enter(ctx, st, frame, "CT", out, None)
        elif stage == "CT":
            self._wake_root(ctx, st, frame, out)
        else:
            out.extend(self.component_done(ctx, st, frame))

    def _on_WT_GO(self, ctx, st, frame, sender, body, out, local) -> None:
        self._stage_enter(ctx, st, frame, "WT", out)

    def _on_WT_DONE(self, ctx, st, frame, sender, body, out, local) -> None:
        self._stage_continue(ctx, st, frame, "WT", out)

    def _on_CT_GO(self, ctx, st, frame, sender, body, out, local) -> None:
        self._stage_enter(ctx, st, frame, "CT", out, local, body)

    def _on_CT_DONE(self, ctx, st, frame, sender, body, out, local) -> None:
        self._stage_continue(ctx, st, frame, "CT", out)

    def _on_SW_GO(self, ctx, st, frame, sender, body, out, local) -> None:
        self._stage_enter(ctx, st, frame, "SW", out)

    def _on_SW_DONE(self, ctx, st, frame, sender, body, out, local) -> None:
        self._stage_continue(ctx, st, frame, "SW", out)

    # stage B: face walks -------------------------------------------------------

    def _launch_list(self, frame: Frame) -> list[int]:
        out = []
        if frame.dfs_parent is None and not frame.block_bridge[frame.pb]:
            if frame.spec.parent_port is None:
                raise InvariantError("special block is nontrivial but the starter has no outside port")
            out.append(VIRTUAL)
        for u in frame.spec.members:
            if not frame.block_bridge[frame.port_block[u]]:
                out.append(u)
        return out

    def _walk_next(self, ctx, st, frame: Frame, out: list[Send]) -> None:
        rot = ctx.rotation
        while frame.launches:
            u = frame.launches.pop(0)
            if u == VIRTUAL:
                allowed = frame.block_ports(frame.pb)
                z = face_successor(rot, frame.spec.parent_port, allowed)
                frame.out_walked.add(z)
                out.append((z, self.msg("WALK", frame, block=frame.pb, star=True, x1=ctx.node, x2=z,
                                        l1=(), lx=frame.spec.path, f1=(), fx=frame.spec.flags, first=False,
                                        ptid=-1, etree=False, spoke=True)))
                return
            if u in frame.out_walked:
                continue
            frame.out_walked.add(u)
            frame.launched.append(u)
            out.append((u, self.msg("WALK", frame, block=frame.port_block[u], star=False, x1=ctx.node, x2=u,
                                    l1=frame.spec.path, lx=frame.spec.path, f1=frame.spec.flags,
                                    fx=frame.spec.flags, first=True, ptid=-1, etree=False, spoke=False)))
            return
        self._stage_continue(ctx, st, frame, "WT", out)

    def _on_WALK(self, ctx, st, frame, sender, body, out, local) -> None:
        x, y, b = sender, ctx.node, body["block"]
        rot = ctx.rotation
        z = face_successor(rot, x, frame.block_ports(b))
        path = frame.spec.path
        xpath = tuple(body["lx"])
        fields = dict(block=b, star=body["star"], x1=body["x1"], x2=body["x2"], l1=body["l1"], lx=path,
                      f1=body["f1"], fx=frame.spec.flags, first=False)
        if body["star"]:
            right_tree = frame.spec.top and frame.spec.parent_port in _wedge(rot, x, z)
            node = frame.new_node((path, xpath), "tri", corners=(VIRTUAL, x, y))
            node.edges = {norm_edge(x, y)}
            node.sides = [
                (norm_edge(x, y), frame.is_tree_edge(x), ((x,), ("dart", y, x))),
                ((VIRTUAL, x), body["spoke"], ((x,), ("td", body["ptid"]))),
                ((VIRTUAL, y), right_tree, ((z,), ("dart", y, z))),
            ]
            self._note_flags(frame, node, xpath, body)
            frame.in_loc[x] = ("local", node.lid)
            if z in frame.out_walked:
                if y != frame.starter or not right_tree:
                    raise InvariantError(f"special face walk closed at {y} away from the starter's outside wedge")
                self._walk_next(ctx, st, frame, out)
                return
            frame.out_walked.add(z)
            out.append((z, self.msg("WALK", frame, **fields, ptid=node.lid, etree=False, spoke=right_tree)))
            return
        x1 = body["x1"]
        if body["first"]:
            if z == x1:
                raise InvariantError(f"face of block {b} has only two darts")
            frame.in_loc[x] = ("fwd", z, ("dart", y, z))
            frame.out_walked.add(z)
            out.append((z, self.msg("WALK", frame, **fields, ptid=-1, etree=frame.is_tree_edge(x), spoke=False)))
            return
        l1 = tuple(body["l1"])
        node = frame.new_node((path, xpath, l1), "tri", corners=(x1, x, y), face=(x1, body["x2"]))
        node.edges = {norm_edge(x, y)}
        if body["ptid"] == -1:
            left = (norm_edge(x1, x), body["etree"], ((x, x1), ("dart", x, x1)))
            node.edges.add(norm_edge(x1, x))
        else:
            left = (norm_edge(x1, x), False, ((x,), ("td", body["ptid"])))
        if z == x1:
            right = (norm_edge(x1, y), frame.is_tree_edge(x1), ((), ("dart", x1, y)))
            node.edges.add(norm_edge(x1, y))
        else:
            right = (norm_edge(x1, y), False, ((z,), ("dart", y, z)))
        node.sides = [(norm_edge(x, y), frame.is_tree_edge(x), ((x,), ("dart", y, x))), left, right]
        self._note_flags(frame, node, xpath, body)
        frame.in_loc[x] = ("local", node.lid)
        frame.out_walked.add(z)
        if z == x1:
            out.append((z, self.msg("CLOSE", frame, block=b, tid=node.lid)))
        else:
            out.append((z, self.msg("WALK", frame, **fields, ptid=node.lid, etree=False, spoke=False)))

    @staticmethod
    def _note_flags(frame: Frame, node: TdNode, xpath: tuple[int, ...], body: dict[str, Any]) -> None:
        node.flags.update(frame.own_flags())
        node.flags.update(zip(xpath, body["fx"]))
        node.flags.update(zip(tuple(body["l1"]), body["f1"]))

    def _on_CLOSE(self, ctx, st, frame, sender, body, out, local) -> None:
        frame.in_loc[sender] = ("fwd", sender, ("td", body["tid"]))
        self._walk_next(ctx, st, frame, out)

    # routing between decomposition nodes -------------------------------------

    def _td_send(self, ctx, frame: Frame, link: Link, op: str, payload: dict[str, Any], out, local,
                 hops: tuple[int, ...] = ()) -> None:
        route, key = link
        hops = hops + (ctx.node,)
        if route:
            out.append((route[0], self.msg("TD", frame, route=tuple(route[1:]), target=key, hops=hops, op=op,
                                           _opaque={"payload": payload}, _bits=payload.get("_bits", 0))))
            return
        self._td_resolve(ctx, frame, key, op, payload, hops[:-1], out, local)

    def _td_resolve(self, ctx, frame: Frame, key: tuple[Any, ...], op: str, payload, hops, out, local) -> None:
        if key[0] == "td":
            if key[1] not in frame.td:
                raise InvariantError(f"node {ctx.node} hosts no decomposition node {key[1]} in {frame.key}")
            local.append((key[1], op, payload, hops))
            return
        _, a, b = key
        if b != ctx.node:
            raise InvariantError(f"dart key {key} resolved at {ctx.node}")
        loc = frame.in_loc.get(a)
        if loc is None:
            raise InvariantError(f"node {ctx.node} has no triangle for the dart from {a} in {frame.key}")
        if loc[0] == "local":
            local.append((loc[1], op, payload, hops))
        else:
            self._td_send(ctx, frame, ((loc[1],), loc[2]), op, payload, out, local, hops)

    def _on_TD(self, ctx, st, frame, sender, body, out, local) -> None:
        link = (tuple(body["route"]), tuple(body["target"]))
        hops = tuple(body["hops"])
        if link[0]:
            self._td_send(ctx, frame, link, body["op"], body["payload"], out, local, hops)
            return
        self._td_resolve(ctx, frame, link[1], body["op"], body["payload"], hops, out, local)

    @staticmethod
    def _back(hops: tuple[int, ...], lid: int) -> Link:
        return tuple(reversed(hops)), ("td", lid)

    def _td_deliver(self, ctx, st, frame: Frame, lid: int, op: str, payload, hops, out, local) -> None:
        node = frame.td[lid]
        if op in ("EUP", "POT", "SAT", "DP"):
            link = self._back(hops, payload["from"])
            if link not in node.children:
                node = frame.td[frame.redirect[link]]
        getattr(self, "_td_" + op)(ctx, st, frame, node, payload, hops, out, local)

    # stage C: dual DFS and gluing ---------------------------------------------

    def _td_VISIT(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        if node.visited:
            raise InvariantError(f"triangle {node.lid} at {ctx.node} reached twice by the dual DFS in {frame.key}")
        node.visited = True
        back = self._back(hops, payload["from"])
        if payload.get("anchor"):
            node.anchor = back
        else:
            node.parent = back
        node.parent_pair = tuple(payload["pair"]) if payload.get("pair") else None
        self._dual_next(ctx, st, frame, node, out, local)

    def _dual_next(self, ctx, st, frame, node: TdNode, out, local) -> None:
        while node.scan < len(node.sides):
            pair, tree, link = node.sides[node.scan]
            node.scan += 1
            if tree or pair == node.parent_pair:
                continue
            if link is None or link[1] == ("td", -1):
                raise InvariantError(f"non-tree side {pair} of triangle {node.lid} at {ctx.node} has no partner")
            self._td_send(ctx, frame, link, "VISIT", {"from": node.lid, "pair": pair}, out, local)
            return
        target = node.anchor if node.anchor is not None else node.parent
        self._td_send(ctx, frame, target, "DONE", {"from": node.lid}, out, local)

    def _td_DONE(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        if node.kind == "anchor":
            frame.root = self._back(hops, payload["from"])
            frame.td.pop(node.lid)
            self._ct_next(ctx, st, frame, out, local)
            return
        node.children.append(self._back(hops, payload["from"]))
        if node.kind == "tri":
            self._dual_next(ctx, st, frame, node, out, local)
        else:
            self._ct_next(ctx, st, frame, out, local)

    def _td_ATTACH(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        node.children.append(self._back(hops, payload["from"]))
        self._td_send(ctx, frame, self._back(hops, payload["from"]), "ATTACHED", {"from": node.lid}, out, local)

    def _td_ATTACHED(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        node.parent = self._back(hops, payload["from"])
        self._ct_next(ctx, st, frame, out, local)

    def _ct_plan(self, ctx, st, frame: Frame) -> None:
        """Local steps at a cut-vertex candidate, run in order, each possibly waiting for a reply."""
        steps: list[tuple[Any, ...]] = []
        path = frame.spec.path
        if frame.dfs_parent is None:
            if frame.block_bridge[frame.pb]:
                root = frame.new_node((path,), "bridge", flags=frame.own_flags())
                frame.root = ((), ("td", root.lid))
                frame.bridge_bag[VIRTUAL] = root.lid
            else:
                steps.append(("root", self._first_port(ctx, frame, frame.pb)))
        new_blocks = [u for u in frame.kids if frame.port_block[u] == u]
        if new_blocks:
            hubs = [frame.new_node((path,), "hub", flags=frame.own_flags()) for _ in new_blocks]
            for a, b in zip(hubs, hubs[1:]):
                b.parent = ((), ("td", a.lid))
                a.children.append(((), ("td", b.lid)))
            first = hubs[0]
            if frame.block_bridge[frame.pb]:
                if frame.dfs_parent is None:
                    target: Link = ((), ("td", frame.bridge_bag[VIRTUAL]))
                else:
                    target = ((frame.dfs_parent,), ("td", frame.parent_bridge_lid))
            else:
                q = self._first_port(ctx, frame, frame.pb)
                target = ((), ("dart", q, ctx.node))
            steps.append(("attach", first.lid, target))
            for hub, u in zip(hubs, new_blocks):
                if frame.block_bridge[u]:
                    flags = frame.own_flags()
                    flags[u] = frame.kid_flag[u]
                    bag = frame.new_node(((u,) + path,), "bridge", flags=flags)
                    bag.parent = ((), ("td", hub.lid))
                    hub.children.append(((), ("td", bag.lid)))
                    frame.bridge_bag[u] = bag.lid
                else:
                    steps.append(("block", hub.lid, self._first_port(ctx, frame, u)))
        frame.steps = steps

    @staticmethod
    def _first_port(ctx: NodeContext, frame: Frame, block: int) -> int:
        for u in frame.spec.members:
            if frame.port_block.get(u) == block:
                return u
        raise InvariantError(f"node {ctx.node} has no port in block {block}")

    def _ct_next(self, ctx, st, frame: Frame, out, local) -> None:
        if not frame.steps:
            self._stage_continue(ctx, st, frame, "CT", out)
            return
        step = frame.steps.pop(0)
        if step[0] == "root":
            anchor = frame.new_node(((),), "anchor")
            self._td_send(ctx, frame, ((), ("dart", step[1], ctx.node)), "VISIT",
                          {"from": anchor.lid, "pair": None, "anchor": True}, out, local)
        elif step[0] == "attach":
            _, lid, target = step
            self._td_send(ctx, frame, target, "ATTACH", {"from": lid}, out, local)
        else:
            _, hub, port = step
            self._td_send(ctx, frame, ((), ("dart", port, ctx.node)), "VISIT", {"from": hub, "pair": None},
                          out, local)

    # stage D: passes ------------------------------------------------------------

    def _wake_root(self, ctx, st, frame: Frame, out) -> None:
        self._td_send(ctx, frame, frame.root, "WAKE", {"pbag": None, "_bits": 0}, out, st["_local"])

    def _binarize(self, ctx, frame: Frame, node: TdNode) -> None:
        holder = node
        while len(holder.children) > 2:
            copy = frame.new_node(node.lists, "copy", flags=dict(node.flags))
            copy.children = holder.children[1:]
            for link in copy.children:
                frame.redirect[link] = copy.lid
            copy.parent = ((), ("td", holder.lid))
            holder.children = [holder.children[0], ((), ("td", copy.lid))]
            holder = copy

    def _pad(self, bag: tuple[int, ...]) -> tuple[int, ...]:
        arity = self.passes.arity
        if len(bag) > arity:
            raise InvariantError(f"bag of {len(bag)} entries exceeds the arity {arity}")
        return bag + (bag[-1],) * (arity - len(bag))

    def _td_WAKE(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        node.pbag = payload["pbag"]
        if node.pbag is None:
            node.parent = None
        self._binarize(ctx, frame, node)
        node.padded = self._pad(node.bag)
        vertices = set(node.bag)
        node.known = {e for e in node.edges}
        for lst in node.lists:
            node.known.update(norm_edge(a, b) for a, b in zip(lst, lst[1:]))
        node.known = {e for e in node.known if e[0] in vertices and e[1] in vertices}
        far = 2 * self.passes.r + 1
        node.dist = {(a, b): (0 if a == b else far) for a in vertices for b in vertices}
        node.pending = len(node.children)
        node.child_shared = [()] * len(node.children)
        for link in node.children:
            self._td_send(ctx, frame, link, "WAKE", {"pbag": node.padded, "_bits": 0}, out, local)
        self._edges_up(ctx, st, frame, node, out, local)

    def _closure(self, node: TdNode) -> None:
        far = 2 * self.passes.r + 1
        vs = sorted(set(node.bag))
        d = node.dist
        for a, b in node.known:
            d[(a, b)] = d[(b, a)] = min(d[(a, b)], 1)
        for k in vs:
            for a in vs:
                dak = d[(a, k)]
                if dak >= far:
                    continue
                for b in vs:
                    alt = dak + d[(k, b)]
                    if alt < d[(a, b)]:
                        d[(a, b)] = min(alt, far)

    def _shared_payload(self, node: TdNode, shared: tuple[int, ...]) -> dict[str, Any]:
        s = set(shared)
        edges = sorted(e for e in node.known if e[0] in s and e[1] in s)
        k = len(shared)
        payload: dict[str, Any] = {"shared": shared, "edges": edges, "_bits": k * k}
        if self.passes.mode == "dp":
            payload["dist"] = {(a, b): node.dist[(a, b)] for a in shared for b in shared}
            payload["_bits"] += k * k * max(1, (2 * self.passes.r + 1).bit_length())
        return payload

    def _merge_shared(self, node: TdNode, payload: dict[str, Any]) -> None:
        node.known.update(tuple(e) for e in payload["edges"])
        for pair, value in payload.get("dist", {}).items():
            if value < node.dist[pair]:
                node.dist[pair] = value

    def _edges_up(self, ctx, st, frame, node: TdNode, out, local) -> None:
        if node.pending:
            return
        self._closure(node)
        if node.parent is None:
            self._edges_down(ctx, st, frame, node, out, local)
            return
        shared = tuple(v for v in dict.fromkeys(node.bag) if v in set(node.pbag))
        payload = self._shared_payload(node, shared)
        payload["from"] = node.lid
        self._td_send(ctx, frame, node.parent, "EUP", payload, out, local)

    def _child_index(self, node: TdNode, hops: tuple[int, ...], lid: int) -> int:
        link = self._back(hops, lid)
        return node.children.index(link)

    def _td_EUP(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        i = self._child_index(node, hops, payload["from"])
        node.child_shared[i] = tuple(payload["shared"])
        self._merge_shared(node, payload)
        node.pending -= 1
        self._edges_up(ctx, st, frame, node, out, local)

    def _edges_down(self, ctx, st, frame, node: TdNode, out, local) -> None:
        node.label = sigma_label_from(node.padded, node.pbag, node.known)
        node.pending = len(node.children)
        node.child_pots = [set() for _ in node.children]
        node.tables = [None] * len(node.children)
        for link, shared in zip(node.children, node.child_shared):
            self._td_send(ctx, frame, link, "EDOWN", self._shared_payload(node, shared), out, local)
        self._after_down(ctx, st, frame, node, out, local)

    def _td_EDOWN(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        self._merge_shared(node, payload)
        self._closure(node)
        self._edges_down(ctx, st, frame, node, out, local)

    def _after_down(self, ctx, st, frame, node: TdNode, out, local) -> None:
        if node.pending:
            return
        if self.passes.mode == "psi":
            self._pot_up(ctx, st, frame, node, out, local)
        else:
            self._dp_up(ctx, st, frame, node, out, local)

    # automaton passes ----------------------------------------------------------

    def _state_bits(self) -> int:
        a = self.passes.arity
        return 4 * (2 + 3 * a * a + 8 * a)

    def _pot_up(self, ctx, st, frame, node: TdNode, out, local) -> None:
        a = self.passes.automaton
        letters = a.letters(node.label)
        node.pot = pot_step(a, node.label, letters, node.child_pots)
        if node.parent is None:
            self._suc_here(ctx, st, frame, node, {q for q in node.pot if a.accepting(q)}, out, local)
            return
        self._td_send(ctx, frame, node.parent, "POT",
                      {"from": node.lid, "pot": frozenset(node.pot), "_bits": self._state_bits()}, out, local)

    def _td_POT(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        i = self._child_index(node, hops, payload["from"])
        node.child_pots[i] = set(payload["pot"])
        node.pending -= 1
        if not node.pending:
            self._pot_up(ctx, st, frame, node, out, local)

    def _suc_here(self, ctx, st, frame, node: TdNode, suc: set[Any], out, local) -> None:
        a = self.passes.automaton
        letters = a.letters(node.label)
        opens = []
        for pots in node.child_pots:
            cands = [q for q in pots if isinstance(q, tuple) and q[0] == "open"]
            if len(cands) != 1:
                raise InvariantError("a child subtree has no unique unmarked run")
            opens.append(cands[0])
        accepted = []
        for bits in letters:
            if not any(bits):
                continue
            sym = (node.label, bits)
            q = a._step(opens, sym)
            if q in suc:
                accepted.append(node.padded[bits.index(1)])
        for x in accepted:
            self._deliver(ctx, st, frame, node, x, out, local)
        node.total = len(accepted)
        node.pending = len(node.children)
        if node.children:
            for link, states in zip(node.children, suc_step(a, node.label, letters, suc, node.child_pots)):
                self._td_send(ctx, frame, link, "SUC",
                              {"suc": frozenset(states), "_bits": self._state_bits()}, out, local)
        self._sat_up(ctx, st, frame, node, out, local)

    def _td_SUC(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        self._suc_here(ctx, st, frame, node, set(payload["suc"]), out, local)

    def _sat_up(self, ctx, st, frame, node: TdNode, out, local) -> None:
        if node.pending:
            return
        if node.parent is None:
            self._finish(ctx, st, frame, node, node.total, out, local)
            return
        self._td_send(ctx, frame, node.parent, "SAT", {"from": node.lid, "count": node.total, "_bits": 0},
                      out, local)

    def _td_SAT(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        node.total += payload["count"]
        node.pending -= 1
        self._sat_up(ctx, st, frame, node, out, local)

    def _finish(self, ctx, st, frame, node: TdNode, value: Any, out, local) -> None:
        link = node.anchor
        if link is None or not link[0]:
            self._fin_here(ctx, st, frame, value, out)
            return
        out.append((link[0][0], self.msg("FIN", frame, route=link[0][1:], value=value)))

    def _on_FIN(self, ctx, st, frame, sender, body, out, local) -> None:
        if body["route"]:
            out.append((body["route"][0], self.msg("FIN", frame, route=tuple(body["route"][1:]), value=body["value"])))
            return
        self._fin_here(ctx, st, frame, body["value"], out)

    def _fin_here(self, ctx, st, frame: Frame, value: Any, out) -> None:
        if ctx.node != frame.starter:
            raise InvariantError(f"component {frame.key} finished away from its starter")
        frame.result = value
        if self.passes.mode == "psi":
            self._stage_enter(ctx, st, frame, "SW", out)
        else:
            out.extend(self.component_done(ctx, st, frame))

    # verdict delivery ------------------------------------------------------------

    def _deliver(self, ctx, st, frame: Frame, node: TdNode, x: int, out, local) -> None:
        if x in frame.spec.path:
            self._verdict_up(ctx, st, frame, x, out)
            return
        if node.kind == "bridge" and x == node.bag[0]:
            out.append((x, self.msg("VERDICT", frame, x=x)))
            return
        if node.kind in ("tri", "copy") and len(node.corners) == 3:
            xj = node.corners[1]
            lists = node.lists
            if len(lists) > 1 and x in lists[1]:
                out.append((xj, self.msg("VERDICT", frame, x=x)))
                return
            if node.face is not None and len(lists) > 2 and x in lists[2]:
                frame.sweeps.setdefault(node.face, set()).add(x)
                return
        raise InvariantError(f"no delivery route from {ctx.node} to {x} in {frame.key}")

    def _verdict_up(self, ctx, st, frame: Frame, x: int, out) -> None:
        if x == ctx.node:
            self.on_verdict(ctx, st, frame.key)
            return
        if frame.spec.tree_parent is None:
            raise InvariantError(f"verdict for {x} climbed past the top at {ctx.node}")
        out.append((frame.spec.tree_parent, self.msg("VERDICT", frame, x=x)))

    def _on_VERDICT(self, ctx, st, frame, sender, body, out, local) -> None:
        self._verdict_up(ctx, st, frame, body["x"], out)

    def _sweep_next(self, ctx, st, frame: Frame, out) -> None:
        if frame.launches:
            u = frame.launches.pop(0)
            face = (ctx.node, u)
            out.append((u, self.msg("SWEEP", frame, block=frame.port_block[u], face=face, acc=())))
            return
        self._stage_continue(ctx, st, frame, "SW", out)

    def _on_SWEEP(self, ctx, st, frame, sender, body, out, local) -> None:
        face = tuple(body["face"])
        acc = set(body["acc"]) | frame.sweeps.pop(face, set())
        if ctx.node == face[0]:
            for x in sorted(acc):
                self._verdict_up(ctx, st, frame, x, out)
            self._sweep_next(ctx, st, frame, out)
            return
        z = face_successor(ctx.rotation, sender, frame.block_ports(body["block"]))
        out.append((z, self.msg("SWEEP", frame, block=body["block"], face=face, acc=tuple(sorted(acc)))))

    # scattered-set pass -------------------------------------------------------

    def _dp_up(self, ctx, st, frame, node: TdNode, out, local) -> None:
        vertices = tuple(dict.fromkeys(node.bag))
        parent_vs = set(node.pbag) if node.pbag is not None else set()
        tops = [v for v in vertices if v not in parent_vs]
        p_nodes = {v for v in vertices if node.flags.get(v)}
        children = [t for t in node.tables]
        states = dp_step(vertices, tops, node.dist, children, p_nodes, self.passes.r, self.passes.s,
                         self.passes.dp_cap)
        if node.parent is None:
            self._finish(ctx, st, frame, node, max(c for c, _ in states), out, local)
            return
        bits = len(states) * (8 + len(vertices) * max(1, (2 * self.passes.r + 1).bit_length()))
        self._td_send(ctx, frame, node.parent, "DP",
                      {"from": node.lid, "vertices": vertices, "states": frozenset(states), "_bits": bits},
                      out, local)

    def _td_DP(self, ctx, st, frame, node: TdNode, payload, hops, out, local) -> None:
        i = self._child_index(node, hops, payload["from"])
        node.tables[i] = (tuple(payload["vertices"]), set(payload["states"]))
        node.pending -= 1
        if not node.pending:
            self._dp_up(ctx, st, frame, node, out, local)


# ---------------------------------------------------------------------------
# reading decompositions back out of node memory


def collect_decomposition(states: dict[int, Any], key: tuple[int, ...]) -> tuple[
    dict[tuple[int, int], tuple[int, ...]], dict[tuple[int, int], tuple[int, int] | None]
]:
    """Padded bags and parent pointers of one component, keyed by (host, local id)."""
    bags: dict[tuple[int, int], tuple[int, ...]] = {}
    parent: dict[tuple[int, int], tuple[int, int] | None] = {}
    for v, st in states.items():
        frame = st.get("frames", {}).get(key) if isinstance(st, dict) else None
        if frame is None:
            continue
        for lid, node in frame.td.items():
            bags[(v, lid)] = node.padded or node.bag
            parent.setdefault((v, lid), None)
            for route, target in node.children:
                host = route[-1] if route else v
                parent[(host, target[1])] = (v, lid)
    return bags, parent
