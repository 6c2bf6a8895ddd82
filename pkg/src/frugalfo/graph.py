"""Graphs, rotation systems, BFS port states, balls, r-types and tree decompositions."""

from __future__ import annotations

import hashlib
import itertools
from collections import deque
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum

from frugalfo.errors import CapacityError, EmbeddingError, InputError

Edge = tuple[int, int]
Dart = tuple[int, int]


def norm_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


class Graph:
    """Simple undirected graph on node ids 1..n."""

    __slots__ = ("n", "_adj", "_edges")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]]) -> None:
        if n < 1:
            raise InputError("a graph needs at least one node")
        adj: list[set[int]] = [set() for _ in range(n + 1)]
        seen: set[Edge] = set()
        for u, v in edges:
            if not (1 <= u <= n and 1 <= v <= n):
                raise InputError(f"edge ({u},{v}) uses an id outside 1..{n}")
            if u == v:
                raise InputError(f"self-loop at node {u}")
            e = norm_edge(u, v)
            if e in seen:
                raise InputError(f"duplicate edge {e}")
            seen.add(e)
            adj[u].add(v)
            adj[v].add(u)
        self.n = n
        self._adj: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(a)) for a in adj)
        self._edges: tuple[Edge, ...] = tuple(sorted(seen))

    @property
    def m(self) -> int:
        return len(self._edges)

    def nodes(self) -> range:
        return range(1, self.n + 1)

    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._adj[v]

    def degree(self, v: int) -> int:
        return len(self._adj[v])

    def max_degree(self) -> int:
        return max((len(a) for a in self._adj[1:]), default=0)

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._adj[u]

    def is_connected(self) -> bool:
        return len(bfs_distances(self, 1)) == self.n

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self._edges == other._edges

    def __hash__(self) -> int:
        return hash((self.n, self._edges))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.m})"


def bfs_distances(g: Graph, source: int, limit: int | None = None) -> dict[int, int]:
    """Hop distances from ``source``, optionally truncated at ``limit``."""
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        d = dist[v]
        if limit is not None and d >= limit:
            continue
        for u in g.neighbors(v):
            if u not in dist:
                dist[u] = d + 1
                queue.append(u)
    return dist


def distance(g: Graph, u: int, v: int) -> float:
    """Shortest-path hop distance; ``inf`` when disconnected."""
    return bfs_distances(g, u).get(v, float("inf"))


@dataclass(frozen=True)
class RootedBall:
    """Induced subgraph on all nodes within ``radius`` hops of ``root``."""

    root: int
    radius: int
    nodes: tuple[int, ...]
    edges: tuple[Edge, ...]
    depth: dict[int, int] = field(compare=False, hash=False)

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {v: [] for v in self.nodes}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


def k_ball(g: Graph, v: int, k: int) -> RootedBall:
    if k < 0:
        raise InputError("ball radius must be non-negative")
    dist = bfs_distances(g, v, limit=k)
    nodes = tuple(sorted(dist))
    edges = tuple(e for e in _induced_edges(g, dist))
    return RootedBall(root=v, radius=k, nodes=nodes, edges=edges, depth=dist)


def _induced_edges(g: Graph, keep: Iterable[int]) -> list[Edge]:
    keep_set = set(keep)
    out = []
    for u in sorted(keep_set):
        for w in g.neighbors(u):
            if w > u and w in keep_set:
                out.append((u, w))
    return out


def induced_subgraph(g: Graph, keep: Iterable[int]) -> tuple[Graph, dict[int, int]]:
    """Relabel the induced subgraph to 1..k; returns it with the old→new id map."""
    order = sorted(set(keep))
    relabel = {v: i + 1 for i, v in enumerate(order)}
    edges = [(relabel[u], relabel[w]) for u, w in _induced_edges(g, order)]
    return Graph(len(order), edges), relabel


# ---------------------------------------------------------------------------
# canonical r-types

RType = tuple[int, int, tuple[Edge, ...]]
DEFAULT_TYPE_CAP = 32


def canonical_r_type(ball: RootedBall, cap: int = DEFAULT_TYPE_CAP) -> RType:
    """Canonical code of a rooted ball: equal codes iff root-preserving isomorphic.

    Individualization-refinement search; the first level of the search prunes
    branches that are in the same orbit under automorphisms already found.
    """
    k = len(ball.nodes)
    if k > cap:
        raise CapacityError(f"ball of {k} nodes exceeds the canonicalization cap {cap}")
    index = {v: i for i, v in enumerate(ball.nodes)}
    adj: list[list[int]] = [[] for _ in range(k)]
    for u, v in ball.edges:
        adj[index[u]].append(index[v])
        adj[index[v]].append(index[u])
    nbr_sets = [frozenset(a) for a in adj]
    colors = [(0 if v == ball.root else 1, ball.depth[v], len(adj[index[v]])) for v in ball.nodes]
    start = _refine(_rank(colors), adj)
    best: list[tuple[Edge, ...] | None] = [None]
    autos: list[list[int]] = []
    first_leaf: list[list[int] | None] = [None]
    _search(start, adj, nbr_sets, best, autos, first_leaf)
    assert best[0] is not None
    return (ball.radius, k, best[0])


def _rank(colors: Sequence[object]) -> list[int]:
    palette = {c: i for i, c in enumerate(sorted(set(colors)))}  # type: ignore[type-var]
    return [palette[c] for c in colors]


def _refine(part: list[int], adj: list[list[int]]) -> list[int]:
    while True:
        sig = [(part[v], tuple(sorted(part[u] for u in adj[v]))) for v in range(len(part))]
        new = _rank(sig)
        if len(set(new)) == len(set(part)):
            return new
        part = new


def _code(part: list[int], adj: list[list[int]]) -> tuple[Edge, ...]:
    return tuple(sorted(norm_edge(part[v], part[u]) for v in range(len(adj)) for u in adj[v] if u > v))


def _search(
    part: list[int],
    adj: list[list[int]],
    nbr_sets: list[frozenset[int]],
    best: list[tuple[Edge, ...] | None],
    autos: list[list[int]],
    first_leaf: list[list[int] | None],
    fixed: tuple[int, ...] = (),
) -> None:
    k = len(part)
    if len(set(part)) == k:
        code = _code(part, adj)
        if first_leaf[0] is None:
            first_leaf[0] = part
        elif code == _code(first_leaf[0], adj):
            # Map vertex of the first leaf at rank c to the vertex here at rank c.
            inv = {c: v for v, c in enumerate(first_leaf[0])}
            autos.append([inv[part[v]] for v in range(k)])
        if best[0] is None or code < best[0]:
            best[0] = code
        return
    cells: dict[int, list[int]] = {}
    for v, c in enumerate(part):
        cells.setdefault(c, []).append(v)
    target = min((c for c, vs in cells.items() if len(vs) > 1), key=lambda c: (len(cells[c]), c))
    cell = cells[target]
    explored: list[int] = []
    for v in cell:
        if any(_twins(v, u, nbr_sets) for u in explored):
            continue
        if explored and _same_orbit(v, explored, autos, fixed):
            continue
        explored.append(v)
        child = [2 * c for c in part]
        child[v] += 1
        _search(_refine(_rank(child), adj), adj, nbr_sets, best, autos, first_leaf, fixed + (v,))


def _twins(a: int, b: int, nbr_sets: list[frozenset[int]]) -> bool:
    return nbr_sets[a] - {b} == nbr_sets[b] - {a}


def _same_orbit(v: int, explored: list[int], autos: list[list[int]], fixed: tuple[int, ...]) -> bool:
    gens = [p for p in autos if all(p[x] == x for x in fixed)]
    if not gens:
        return False
    orbit = {v}
    frontier = [v]
    while frontier:
        x = frontier.pop()
        for p in gens:
            for y in (p[x],):
                if y not in orbit:
                    orbit.add(y)
                    frontier.append(y)
    return any(u in orbit for u in explored)


def type_label(code: RType) -> str:
    """Short stable label for display."""
    digest = hashlib.sha1(repr(code).encode()).hexdigest()[:10]
    return f"r{code[0]}n{code[1]}-{digest}"


# ---------------------------------------------------------------------------
# BFS trees and port states


class PortState(str, Enum):
    PARENT = "parent"
    CHILD = "child"
    HORIZON = "horizon"
    UPWARD = "upward"
    DOWNWARD = "downward"


@dataclass(frozen=True)
class BfsTree:
    root: int
    depth: dict[int, int]
    parent: dict[int, int]
    port_state: dict[Dart, PortState]
    children: dict[int, tuple[int, ...]]

    @property
    def height(self) -> int:
        return max(self.depth.values())

    def ancestors(self, v: int, stop_depth: int = 0) -> list[int]:
        """Path v, parent(v), ... up to the ancestor at ``stop_depth`` inclusive."""
        out = [v]
        while self.depth[out[-1]] > stop_depth:
            out.append(self.parent[out[-1]])
        return out


def build_bfs_tree(g: Graph, root: int) -> BfsTree:
    depth = bfs_distances(g, root)
    if len(depth) != g.n:
        raise InputError("graph is not connected")
    parent = {}
    for v in g.nodes():
        if v != root:
            parent[v] = min(u for u in g.neighbors(v) if depth[u] == depth[v] - 1)
    children: dict[int, list[int]] = {v: [] for v in g.nodes()}
    for v, p in parent.items():
        children[p].append(v)
    states: dict[Dart, PortState] = {}
    for v in g.nodes():
        for u in g.neighbors(v):
            if parent.get(v) == u:
                s = PortState.PARENT
            elif parent.get(u) == v:
                s = PortState.CHILD
            elif depth[u] == depth[v]:
                s = PortState.HORIZON
            elif depth[u] < depth[v]:
                s = PortState.UPWARD
            else:
                s = PortState.DOWNWARD
            states[(v, u)] = s
    return BfsTree(
        root=root,
        depth=depth,
        parent=parent,
        port_state=states,
        children={v: tuple(sorted(c)) for v, c in children.items()},
    )


# ---------------------------------------------------------------------------
# rotation systems and faces


@dataclass(frozen=True)
class PlanarEmbedding:
    """Counterclockwise cyclic order of neighbours at every node."""

    rotation: dict[int, tuple[int, ...]]

    def position(self, v: int, u: int) -> int:
        return self.rotation[v].index(u)


def validate_embedding(g: Graph, emb: PlanarEmbedding) -> None:
    for v in g.nodes():
        rot = emb.rotation.get(v, ())
        if len(set(rot)) != len(rot):
            raise EmbeddingError(f"rotation at node {v} repeats a neighbour")
        if set(rot) != set(g.neighbors(v)):
            raise EmbeddingError(f"rotation at node {v} does not list exactly its neighbours")
    extra = set(emb.rotation) - set(g.nodes())
    if extra:
        raise EmbeddingError(f"rotation given for unknown nodes {sorted(extra)}")


def face_successor(rot: Sequence[int], came_from: int, allowed: set[int] | frozenset[int] | None = None) -> int:
    """Next neighbour after arriving from ``came_from``: the one immediately before it."""
    i = rot.index(came_from)
    k = len(rot)
    for step in range(1, k + 1):
        w = rot[(i - step) % k]
        if allowed is None or w in allowed:
            return w
    raise EmbeddingError("no admissible dart leaves this node")


def trace_faces(g: Graph, emb: PlanarEmbedding) -> tuple[list[list[Dart]], bool]:
    """Face boundary walks as lists of darts, plus the Euler validity flag."""
    validate_embedding(g, emb)
    seen: set[Dart] = set()
    faces: list[list[Dart]] = []
    for u, v in g.edges():
        for start in ((u, v), (v, u)):
            if start in seen:
                continue
            walk = []
            dart = start
            while dart not in seen:
                seen.add(dart)
                walk.append(dart)
                a, b = dart
                dart = (b, face_successor(emb.rotation[b], a))
            if dart != start:
                raise EmbeddingError("face walk did not close on its starting dart")
            faces.append(walk)
    f = len(faces) if g.m else 1
    components = _component_count(g)
    valid = g.n - g.m + f == 1 + components
    return faces, valid


def _component_count(g: Graph) -> int:
    seen: set[int] = set()
    count = 0
    for v in g.nodes():
        if v not in seen:
            count += 1
            seen.update(bfs_distances(g, v))
    return count


# ---------------------------------------------------------------------------
# ordered tree decompositions


@dataclass
class OrderedTreeDecomposition:
    """Rooted tree of ordered bags (tuples that may repeat entries)."""

    bags: dict[int, tuple[int, ...]]
    parent: dict[int, int | None]
    children: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.children:
            self.children = {t: [] for t in self.bags}
            for t, p in sorted(self.parent.items()):
                if p is not None:
                    self.children[p].append(t)

    @property
    def root(self) -> int:
        roots = [t for t, p in self.parent.items() if p is None]
        if len(roots) != 1:
            raise InputError(f"decomposition has {len(roots)} roots")
        return roots[0]

    @property
    def width(self) -> int:
        return max(len(set(b)) for b in self.bags.values()) - 1

    def postorder(self) -> list[int]:
        out: list[int] = []
        stack: list[tuple[int, bool]] = [(self.root, False)]
        while stack:
            t, done = stack.pop()
            if done:
                out.append(t)
                continue
            stack.append((t, True))
            for c in reversed(self.children[t]):
                stack.append((c, False))
        return out


@dataclass
class TdReport:
    valid: bool
    width: int
    uncovered_edges: list[Edge]
    missing_nodes: list[int]
    disconnected_nodes: list[int]
    structure_errors: list[str]


def check_tree_decomposition(g: Graph, td: OrderedTreeDecomposition) -> TdReport:
    errors: list[str] = []
    roots = [t for t, p in td.parent.items() if p is None]
    if len(roots) != 1:
        errors.append(f"expected one root, found {len(roots)}")
    for t, p in td.parent.items():
        if p is not None and p not in td.bags:
            errors.append(f"bag {t} has unknown parent {p}")
    if not errors:
        reached = set(td.postorder())
        if reached != set(td.bags):
            errors.append("parent pointers do not form a single tree")
    holders: dict[int, set[int]] = {}
    for t, bag in td.bags.items():
        for v in bag:
            holders.setdefault(v, set()).add(t)
    missing = [v for v in g.nodes() if v not in holders]
    uncovered = [e for e in g.edges() if not (holders.get(e[0], set()) & holders.get(e[1], set()))]
    disconnected = []
    for v, ts in sorted(holders.items()):
        tops = [t for t in ts if td.parent.get(t) not in ts]
        if len(tops) != 1:
            disconnected.append(v)
    width = td.width if td.bags else -1
    valid = not (errors or missing or uncovered or disconnected)
    return TdReport(valid, width, uncovered, missing, disconnected, errors)


def iter_pairs(items: Sequence[int]) -> Iterator[tuple[int, int]]:
    return itertools.combinations(items, 2)
