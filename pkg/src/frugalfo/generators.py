"""Graph families used by the CLI and the test suites, with planar rotations where applicable."""

from __future__ import annotations

import math
import random

import networkx as nx

from frugalfo.errors import ConfigurationError
from frugalfo.graph import Graph, PlanarEmbedding

FAMILIES = ("cycle", "path", "grid", "triangulated-grid", "random-d-regular", "random-tree", "random-planar")


def cycle(n: int) -> tuple[Graph, PlanarEmbedding]:
    if n < 3:
        raise ConfigurationError("a cycle needs at least 3 nodes")
    edges = [(i, i % n + 1) for i in range(1, n + 1)]
    rot = {i: ((i - 2) % n + 1, i % n + 1) for i in range(1, n + 1)}
    return Graph(n, edges), PlanarEmbedding(rot)


def path(n: int) -> tuple[Graph, PlanarEmbedding]:
    if n < 1:
        raise ConfigurationError("a path needs at least 1 node")
    g = Graph(n, [(i, i + 1) for i in range(1, n)])
    return g, PlanarEmbedding({v: g.neighbors(v) for v in g.nodes()})


def _grid_id(k: int, row: int, col: int) -> int:
    return row * k + col + 1


def _lattice(k: int, diagonals: bool) -> tuple[Graph, PlanarEmbedding]:
    if k < 1:
        raise ConfigurationError("grid side must be positive")
    # Node (row, col) sits at the point (col, row); rotations list neighbours by angle.
    steps = [(0, 1), (1, 1), (1, 0), (0, -1), (-1, -1), (-1, 0)] if diagonals else [(0, 1), (1, 0), (0, -1), (-1, 0)]
    edges = set()
    rot: dict[int, tuple[int, ...]] = {}
    for row in range(k):
        for col in range(k):
            v = _grid_id(k, row, col)
            around = []
            for dr, dc in steps:
                r2, c2 = row + dr, col + dc
                if 0 <= r2 < k and 0 <= c2 < k:
                    u = _grid_id(k, r2, c2)
                    around.append(u)
                    edges.add((min(u, v), max(u, v)))
            rot[v] = tuple(around)
    return Graph(k * k, sorted(edges)), PlanarEmbedding(rot)


def grid(k: int) -> tuple[Graph, PlanarEmbedding]:
    return _lattice(k, diagonals=False)


def triangulated_grid(k: int) -> tuple[Graph, PlanarEmbedding]:
    return _lattice(k, diagonals=True)


def random_regular(n: int, d: int, seed: int) -> Graph:
    """Connected random d-regular graph; reseeds deterministically until connected."""
    if d < 0 or d >= n or (d * n) % 2:
        raise ConfigurationError(f"no {d}-regular graph on {n} nodes (need d < n and d*n even)")
    rng = random.Random(seed)
    if d == 2:
        order = list(range(1, n + 1))
        rng.shuffle(order)
        return Graph(n, [(order[i], order[(i + 1) % n]) for i in range(n)])
    for _ in range(1000):
        h = nx.random_regular_graph(d, n, seed=rng.randrange(2**31))
        if d == 0 or nx.is_connected(h):
            return Graph(n, [(u + 1, v + 1) for u, v in h.edges()])
    raise ConfigurationError(f"could not sample a connected {d}-regular graph on {n} nodes")


def random_tree(n: int, seed: int) -> tuple[Graph, PlanarEmbedding]:
    rng = random.Random(seed)
    g = Graph(n, [(v, rng.randint(1, v - 1)) for v in range(2, n + 1)])
    return g, PlanarEmbedding({v: g.neighbors(v) for v in g.nodes()})


def random_planar(n: int, seed: int, extra: float = 1.0) -> tuple[Graph, PlanarEmbedding]:
    """Random tree plus up to ``extra * n`` chords, each kept only if the graph stays planar."""
    rng = random.Random(seed)
    h = nx.Graph()
    h.add_nodes_from(range(1, n + 1))
    h.add_edges_from((v, rng.randint(1, v - 1)) for v in range(2, n + 1))
    for _ in range(int(extra * n)):
        u, v = rng.sample(range(1, n + 1), 2) if n > 1 else (1, 1)
        if u == v or h.has_edge(u, v):
            continue
        h.add_edge(u, v)
        if not nx.check_planarity(h)[0]:
            h.remove_edge(u, v)
    return from_networkx_planar(h)


def from_networkx_planar(h: nx.Graph) -> tuple[Graph, PlanarEmbedding]:
    """Relabelled copy of a planar networkx graph on nodes 1..n with a clockwise rotation system."""
    ok, emb = nx.check_planarity(h)
    if not ok:
        raise ConfigurationError("graph is not planar")
    index = {v: i + 1 for i, v in enumerate(sorted(h.nodes()))}
    g = Graph(len(index), [(index[u], index[v]) for u, v in h.edges()])
    rot = {index[v]: tuple(index[u] for u in emb.neighbors_cw_order(v)) for v in h.nodes()}
    return g, PlanarEmbedding(rot)


def generate(family: str, n: int, seed: int = 0, d: int = 3) -> tuple[Graph, PlanarEmbedding | None]:
    """Build a family member; for grids ``n`` is the side length."""
    if family == "cycle":
        return cycle(n)
    if family == "path":
        return path(n)
    if family == "grid":
        return grid(n)
    if family == "triangulated-grid":
        return triangulated_grid(n)
    if family == "random-d-regular":
        return random_regular(n, d, seed), None
    if family == "random-tree":
        return random_tree(n, seed)
    if family == "random-planar":
        return random_planar(n, seed)
    raise ConfigurationError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")


def grid_side_for(n: int) -> int:
    side = math.isqrt(n)
    if side * side != n:
        raise ConfigurationError(f"{n} is not a square")
    return side
