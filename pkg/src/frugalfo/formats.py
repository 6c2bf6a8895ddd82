"""Text formats for graphs, embeddings and tree-decomposition dumps."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

from frugalfo.errors import EmbeddingError, InputError
from frugalfo.graph import Graph, OrderedTreeDecomposition, PlanarEmbedding, validate_embedding


def _content_lines(text: str) -> Iterator[tuple[int, list[str]]]:
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def _int(token: str, line: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise InputError(f"expected an integer, got {token!r}", line) from None


def parse_graph(text: str) -> Graph:
    header: tuple[int, int] | None = None
    edges: list[tuple[int, int]] = []
    lines: list[int] = []
    for number, tokens in _content_lines(text):
        if header is None:
            if tokens[0] != "graph" or len(tokens) != 3:
                raise InputError("expected header 'graph <n> <m>'", number)
            header = (_int(tokens[1], number), _int(tokens[2], number))
            continue
        if tokens[0] != "e" or len(tokens) != 3:
            raise InputError("expected 'e <u> <v>'", number)
        edges.append((_int(tokens[1], number), _int(tokens[2], number)))
        lines.append(number)
    if header is None:
        raise InputError("missing 'graph <n> <m>' header")
    n, m = header
    if m != len(edges):
        raise InputError(f"header declares {m} edges but {len(edges)} were listed")
    seen: set[tuple[int, int]] = set()
    for (u, v), number in zip(edges, lines):
        if u == v:
            raise InputError(f"self-loop at node {u}", number)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise InputError(f"duplicate edge {key}", number)
        if not (1 <= u <= n and 1 <= v <= n):
            raise InputError(f"node id outside 1..{n}", number)
        seen.add(key)
    return Graph(n, edges)


def format_graph(g: Graph) -> str:
    lines = [f"graph {g.n} {g.m}"]
    lines.extend(f"e {u} {v}" for u, v in g.edges())
    return "\n".join(lines) + "\n"


def parse_embedding(text: str, g: Graph) -> PlanarEmbedding:
    rotation: dict[int, tuple[int, ...]] = {}
    for number, tokens in _content_lines(text):
        if tokens[0] != "rot" or len(tokens) < 2:
            raise EmbeddingError("expected 'rot <v> <u1> ... <uk>'", number)
        v = _int(tokens[1], number)
        if v in rotation:
            raise EmbeddingError(f"second rotation for node {v}", number)
        rotation[v] = tuple(_int(t, number) for t in tokens[2:])
    for v in g.nodes():
        rotation.setdefault(v, ())
    emb = PlanarEmbedding(rotation)
    validate_embedding(g, emb)
    return emb


def format_embedding(emb: PlanarEmbedding) -> str:
    return "".join(f"rot {v} {' '.join(map(str, rot))}\n".replace(" \n", "\n") for v, rot in sorted(emb.rotation.items()))


def format_td(td: OrderedTreeDecomposition) -> str:
    out = []
    for t in sorted(td.bags):
        p = td.parent[t]
        out.append(f"bag {t} {'-' if p is None else p} {' '.join(map(str, td.bags[t]))}")
    return "\n".join(out) + "\n"


def parse_td(text: str) -> OrderedTreeDecomposition:
    bags: dict[int, tuple[int, ...]] = {}
    parent: dict[int, int | None] = {}
    for number, tokens in _content_lines(text):
        if tokens[0] != "bag" or len(tokens) < 3:
            raise InputError("expected 'bag <id> <parent> v1 ... vA'", number)
        t = _int(tokens[1], number)
        parent[t] = None if tokens[2] == "-" else _int(tokens[2], number)
        bags[t] = tuple(_int(x, number) for x in tokens[3:])
    return OrderedTreeDecomposition(bags=bags, parent=parent)


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
