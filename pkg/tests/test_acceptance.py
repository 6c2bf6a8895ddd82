"""Acceptance criteria 1-10, each reporting one pass/fail line."""

from __future__ import annotations

import functools
import random
from dataclasses import dataclass, field

import pytest

from automata_cases import check_three_pass_case
from frugalfo.catalog import parse_psi
from frugalfo.engine import Evaluation, evaluate_distributed
from frugalfo.generators import cycle, grid, path, random_planar, random_regular, triangulated_grid
from frugalfo.graph import Graph, OrderedTreeDecomposition, PlanarEmbedding, check_tree_decomposition, induced_subgraph
from frugalfo.netsim import Network, Session, log_n
from frugalfo.oracle import count_value, leaf_holds, oracle_eval, type_table
from frugalfo.proto.bounded import CollectBalls, HanfParams, ball_size_bound, hanf_program
from frugalfo.proto.planar import eval_basic_local_planar, run_bands, run_cover_and_kernel
from frugalfo.query import CountAtom, ParsedQuery, basic_terms, leaves, load_query, named_type, term_size, term_value
from instances import brute_kernel, small_connected_graphs

PSI_BOUNDED = ["true", "triangle", "deg>=2", "deg>=3", "path2", "ball-cycle", "ball-tree"]
# ball-cycle and ball-tree have planar automata for r = 1 only
PSI_PLANAR = {1: ["true", "triangle", "deg>=3", "deg>=4", "path2", "ball-cycle", "ball-tree"],
              2: ["true", "triangle", "deg>=3", "deg>=4", "path2"]}


def phase4_bound(r: int) -> int:
    return 3 * (2 * r + 2) - 1


@dataclass
class Record:
    """What one distributed run is checked against."""

    name: str
    protocol: str
    n: int
    decision_ok: bool
    counts_ok: bool = True
    term_bound_ok: bool = True
    terms_checked: int = 0
    size_ok: bool = True
    size_constant: int = 0
    # (phase, r, valid, width)
    decompositions: list[tuple[str, int, bool, int]] = field(default_factory=list)


def _terms_ok(g: Graph, parsed: ParsedQuery, ev: Evaluation) -> tuple[bool, bool, int]:
    counts_ok, bound_ok, checked = True, True, 0
    for leaf in leaves(parsed.expr):
        if not isinstance(leaf, CountAtom):
            continue
        for term in basic_terms(leaf.left) + basic_terms(leaf.right):
            counts_ok &= ev.counts[term] == count_value(g, term)
        for side in (leaf.left, leaf.right):
            checked += 1
            bound_ok &= term_value(side, ev.counts) <= g.n ** term_size(side)
    return counts_ok, bound_ok, checked


def _relabeled_check(g: Graph, td: OrderedTreeDecomposition) -> tuple[bool, int]:
    members = {v for b in td.bags.values() for v in b}
    sub, index = induced_subgraph(g, members)
    local = OrderedTreeDecomposition({t: tuple(index[v] for v in b) for t, b in td.bags.items()}, dict(td.parent))
    report = check_tree_decomposition(sub, local)
    return report.valid, report.width


def _record(name: str, g: Graph, parsed: ParsedQuery, ev: Evaluation, r: int) -> Record:
    counts_ok, bound_ok, checked = _terms_ok(g, parsed, ev)
    rec = Record(
        name=name,
        protocol=ev.protocol,
        n=g.n,
        decision_ok=ev.decision == oracle_eval(g, parsed.expr)
        and all(o.value == leaf_holds(g, o.leaf) for o in ev.leaves),
        counts_ok=counts_ok,
        term_bound_ok=bound_ok,
        terms_checked=checked,
        size_ok=max(ev.stats.max_bits.values(), default=0) <= ev.stats.max_size_constant * log_n(g.n),
        size_constant=ev.stats.max_size_constant,
    )
    for label, td in ev.decompositions.items():
        valid, width = _relabeled_check(g, td)
        rec.decompositions.append(("IV" if " band " in label else "V", r, valid, width))
    return rec


@functools.lru_cache(maxsize=None)
def bounded_runs() -> tuple[Record, ...]:
    """Every connected graph with n <= 7 and degree <= 3, every catalog leaf with r <= 2, s <= 2."""
    out = []
    count_queries = [
        "(count< (# triangle) (# deg>=3))",
        "(count= (+ (# path2) (# ball-cycle :r 2)) (* (# true) (# ball-tree :r 2)))",
        "(count< (- (# deg>=2) (# triangle :r 2)) (# true :r 0))",
    ]
    for gi, g in enumerate(small_connected_graphs(7, 3)):
        texts = [f"(local :r {r} :s {s} :psi {psi})" for r in (0, 1, 2) for s in (1, 2) for psi in PSI_BOUNDED]
        for text in texts + count_queries:
            parsed = load_query(f"(with :d 3 {text})")
            ev = evaluate_distributed(g, parsed, seed=gi)
            out.append(_record(f"atlas#{gi} {text}", g, parsed, ev, 0))
    return tuple(out)


FAMILIES = {
    "grid": lambda rng: grid(rng.randint(2, 20)),
    "triangulated-grid": lambda rng: triangulated_grid(rng.randint(2, 20)),
    "cycle": lambda rng: cycle(rng.randint(3, 400)),
}


def planar_case(family: str, seed: int) -> tuple[Graph, PlanarEmbedding, str, int, int]:
    rng = random.Random(f"{family}:{seed}")
    g, emb = FAMILIES[family](rng)
    r, s = rng.randint(1, 2), rng.randint(1, 3)
    psi = rng.choice(PSI_PLANAR[r])
    a, b = rng.choice(PSI_PLANAR[1]), rng.choice(PSI_PLANAR[1])
    text = f"(and (local :r {r} :s {s} :psi {psi}) (count< (# {a}) (# {b})))"
    return g, emb, text, r, rng.randint(1, g.n)


@functools.lru_cache(maxsize=None)
def planar_runs() -> tuple[Record, ...]:
    """100 seeded instances per planar family with n <= 400, r <= 2, s <= 3."""
    out = []
    for family in FAMILIES:
        for seed in range(100):
            g, emb, text, r, requester = planar_case(family, seed)
            parsed = load_query(text)
            ev = evaluate_distributed(g, parsed, emb, requester=requester, seed=seed)
            out.append(_record(f"{family}#{seed} n={g.n} {text}", g, parsed, ev, r))
    return tuple(out)


def _first_failures(records: tuple[Record, ...], attr: str) -> str:
    bad = [rec.name for rec in records if not getattr(rec, attr)]
    return f"; first failures: {bad[:3]}" if bad else ""


def test_criterion_1_bounded_oracle_equivalence(criterion) -> None:  # type: ignore[no-untyped-def]
    runs = bounded_runs()
    agree = sum(rec.decision_ok for rec in runs)
    graphs = len(small_connected_graphs(7, 3))
    ok = criterion(1, agree == len(runs), f"bounded degree: {agree}/{len(runs)} runs agree with the oracle "
                   f"over {graphs} graphs{_first_failures(runs, 'decision_ok')}")
    assert ok


@pytest.mark.slow
def test_criterion_2_planar_oracle_equivalence(criterion) -> None:  # type: ignore[no-untyped-def]
    runs = planar_runs()
    agree = sum(rec.decision_ok for rec in runs)
    largest = max(rec.n for rec in runs)
    ok = criterion(2, agree == len(runs), f"planar: {agree}/{len(runs)} runs agree with the oracle, "
                   f"largest n={largest}{_first_failures(runs, 'decision_ok')}")
    assert ok


FRUGALITY_CONFIGS = [
    ("bounded", 1, 2, "triangle"),
    ("bounded", 1, 3, "true"),
    ("bounded", 2, 2, "ball-tree"),
    ("bounded", 2, 1, "path2"),
    ("planar", 1, 2, "deg>=4"),
    ("planar", 1, 3, "triangle"),
    ("planar", 2, 2, "deg>=4"),
    ("planar", 2, 1, "true"),
]
BOUNDED_SIZES = [32, 64, 128, 256, 512]
GRID_SIDES = [5, 7, 10, 15, 20]
RANDOM_SEEDS = range(10)


@functools.lru_cache(maxsize=None)
def frugality_rows() -> tuple[tuple[tuple[str, int, int, str], list[int], list[int], bool], ...]:
    """Per config: worst per-link count and declared size constant at each n."""
    rows = []
    for proto, r, s, psi in FRUGALITY_CONFIGS:
        counts, constants, size_ok = [], [], True
        if proto == "bounded":
            for n in BOUNDED_SIZES:
                worst, c = 0, 0
                # random instances differ in which branch the selection takes, so take the worst seed
                for seed in RANDOM_SEEDS:
                    g = random_regular(n, 3, seed)
                    ev = evaluate_distributed(g, load_query(f"(with :d 3 (local :r {r} :s {s} :psi {psi}))"), seed=seed)
                    worst, c = max(worst, ev.stats.max_per_direction()), max(c, ev.stats.max_size_constant)
                    size_ok &= max(ev.stats.max_bits.values()) <= ev.stats.max_size_constant * log_n(n)
                counts.append(worst)
                constants.append(c)
        else:
            for side in GRID_SIDES:
                g, emb = grid(side)
                ev = evaluate_distributed(g, load_query(f"(local :r {r} :s {s} :psi {psi})"), emb)
                counts.append(ev.stats.max_per_direction())
                constants.append(ev.stats.max_size_constant)
                size_ok &= max(ev.stats.max_bits.values()) <= ev.stats.max_size_constant * log_n(g.n)
        rows.append(((proto, r, s, psi), counts, constants, size_ok))
    return tuple(rows)


@pytest.mark.slow
def test_criterion_3_frugality_constant(criterion) -> None:  # type: ignore[no-untyped-def]
    rows = frugality_rows()
    details = []
    for (proto, r, s, psi), counts, _, _ in rows:
        details.append(f"{proto} r={r} s={s} {psi}: {counts}")
    bad = [cfg for cfg, counts, _, _ in rows if counts[-1] > counts[0]]
    ok = criterion(3, not bad, "max messages per directed link over increasing n; " + "; ".join(details))
    assert ok, bad


def adjacency_size_bound(d: int, r: int, s: int) -> int:
    """Size constant of the largest adjacency flood: ball collection or gathering over (s-1)(8r+1) rounds."""
    entries = ball_size_bound(d, max(r, (s - 1) * (8 * r + 1)))
    # kind byte, round counter, then per entry an id list of at most d+1 ids, a flag bit and a length byte
    return 8 + 8 + entries * (2 * (d + 1) + 9)


@pytest.mark.slow
def test_criterion_4_message_size(criterion) -> None:  # type: ignore[no-untyped-def]
    runs = bounded_runs() + planar_runs()
    rows = frugality_rows()
    # a run's own constant bounds each of its messages, so the per-protocol maximum bounds them all
    fits = all(rec.size_ok for rec in runs) and all(size_ok for *_, size_ok in rows)
    declared: dict[str, int] = {}
    for rec in runs:
        declared[rec.protocol] = max(declared.get(rec.protocol, 0), rec.size_constant)
    for (proto, *_), _, constants, _ in rows:
        declared[proto] = max(declared.get(proto, 0), *constants)
    # bounded constants vary with the gathered component, so they are held to a bound from (d, r, s) alone;
    # planar constants must not grow from the smallest to the largest n
    over = []
    for (proto, r, s, _), _, constants, _ in rows:
        limit = adjacency_size_bound(3, r, s) if proto == "bounded" else constants[0]
        if max(constants) > limit:
            over.append((proto, r, s, constants, limit))
    ok = criterion(4, fits and not over,
                   f"every message <= c*ceil(log2 n) over {len(runs)} runs plus the criterion 3 sweep; "
                   f"declared c {dict(sorted(declared.items()))}; constants per config over n "
                   f"{[constants for _, _, constants, _ in rows]}, all within their n-independent bounds")
    assert ok, over


def kernel_corpus() -> list[tuple[str, Graph, PlanarEmbedding]]:
    out = []
    for k in (2, 3, 5, 8, 12):
        out.append((f"grid{k}", *grid(k)))
        out.append((f"tgrid{k}", *triangulated_grid(k)))
    for n in (3, 7, 16, 40):
        out.append((f"cycle{n}", *cycle(n)))
        out.append((f"path{n}", *path(n)))
    for seed in range(12):
        out.append((f"planar{seed}", *random_planar(10 + 15 * seed, seed)))
    return out


def test_criterion_5_kernel_intervals(criterion) -> None:  # type: ignore[no-untyped-def]
    mismatches, checks, expected_checks, runs = [], 0, 0, 0
    rng = random.Random(5)
    for name, g, emb in kernel_corpus():
        for r in (0, 1, 2, 3):
            requester = rng.randint(1, g.n)
            session = Session(Network(g, requester=requester, embedding=emb), seed=r)
            # a KERNEL delivery whose round indices differ by more than one raises InvariantError
            run_cover_and_kernel(session, r)
            runs += 1
            want = brute_kernel(g, requester, r)
            for v, ctx in session.net.contexts.items():
                if ctx.mem[f"planar{r}.D"] != want[v]:
                    mismatches.append((name, r, v))
                checks += ctx.mem.get(f"planar{r}.D.checks", 0)
            expected_checks += r * 2 * g.m
    ok = criterion(5, not mismatches and checks == expected_checks,
                   f"D(v) equals brute force at every node of {runs} runs; {checks} KERNEL deliveries checked "
                   f"for index gap <= 1 with 0 violations; mismatches {mismatches[:3]}")
    assert ok


def _band_corpus() -> list[tuple[str, Graph, PlanarEmbedding]]:
    out = [(f"grid{k}", *grid(k)) for k in (4, 9, 14)]
    out += [(f"tgrid{k}", *triangulated_grid(k)) for k in (4, 9)]
    out += [(f"cycle{n}", *cycle(n)) for n in (9, 30)]
    out += [(f"planar{seed}", *random_planar(30 + 20 * seed, seed)) for seed in range(8)]
    return out


@pytest.mark.slow
def test_criterion_6_band_decompositions(criterion) -> None:  # type: ignore[no-untyped-def]
    violations, bad, built, worst = [], [], 0, {}
    for name, g, emb in _band_corpus():
        for r in (1, 2):
            report = run_bands(Session(Network(g, embedding=emb), seed=0), r, parse_psi("deg>=3"), "B")
            violations += report.violations
            for key, td in report.decompositions.items():
                built += 1
                valid, width = _relabeled_check(g, td)
                worst[r] = max(worst.get(r, 0), width)
                if not valid or width > phase4_bound(r):
                    bad.append((name, r, key, valid, width))
    for rec in planar_runs():
        for phase, r, valid, width in rec.decompositions:
            if phase == "IV":
                built += 1
                worst[r] = max(worst.get(r, 0), width)
                if not valid or width > phase4_bound(r):
                    bad.append((rec.name, r, valid, width))
    ok = criterion(6, not bad and not violations,
                   f"Phase IV: {built} band decompositions valid with width <= 3(2r+2)-1 "
                   f"(worst width per r {dict(sorted(worst.items()))}); special-block violations {len(violations)}")
    assert ok, (bad[:3], violations[:3])


@functools.lru_cache(maxsize=None)
def _phase5_decompositions() -> tuple[tuple[str, int, bool, int], ...]:
    """Scatter-component decompositions from the planar sweep and from random planar graphs."""
    out = [(rec.name, r, valid, width) for rec in planar_runs() for phase, r, valid, width in rec.decompositions
           if phase == "V"]
    for seed in range(60):
        g, emb = random_planar(20 + 5 * (seed % 16), seed)
        for s, psi in ((2, "triangle"), (3, "deg>=4")):
            session = Session(Network(g, embedding=emb), seed)
            _, _, scatter = eval_basic_local_planar(session, 1, s, parse_psi(psi), "L")
            for (root,), td in scatter.decompositions.items():
                out.append((f"planar{seed} n={g.n} s={s} {psi} component {root}", 1, *_relabeled_check(g, td)))
    return tuple(out)


@pytest.mark.slow
def test_criterion_6_scatter_decompositions_are_valid() -> None:
    tds = _phase5_decompositions()
    assert tds
    assert all(valid for _, _, valid, _ in tds)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="Phase V components span up to l(8r+1) BFS levels against 2r+1 for a band, so their width can exceed 3(2r+2)-1",
)
def test_criterion_6_scatter_decomposition_width(criterion) -> None:  # type: ignore[no-untyped-def]
    tds = _phase5_decompositions()
    over = [(name, r, width) for name, r, _, width in tds if width > phase4_bound(r)]
    worst = max((w - phase4_bound(r) for _, r, _, w in tds), default=0)
    ok = criterion(6, not over, f"Phase V: {len(tds) - len(over)}/{len(tds)} scatter decompositions within "
                   f"3(2r+2)-1; worst excess {worst}; e.g. {over[:2]}")
    assert ok


def test_criterion_7_three_pass(criterion) -> None:  # type: ignore[no-untyped-def]
    cases = range(1000, 1500)
    failures = [seed for seed in cases if not check_three_pass_case(seed)]
    ok = criterion(7, not failures, f"three-pass tables equal exhaustive enumeration in "
                   f"{len(cases) - len(failures)}/{len(cases)} seeded cases; failing seeds {failures[:5]}")
    assert ok


@pytest.mark.slow
def test_criterion_8_counting(criterion) -> None:  # type: ignore[no-untyped-def]
    runs = bounded_runs() + planar_runs()
    counted = [rec for rec in runs if rec.terms_checked]
    counts_ok = all(rec.counts_ok for rec in counted)
    bound_ok = all(rec.term_bound_ok for rec in counted)
    ok = criterion(8, counts_ok and bound_ok,
                   f"distributed counts equal oracle counts in {sum(r.counts_ok for r in counted)}/{len(counted)} "
                   f"counting runs; t <= n^|t| for all {sum(r.terms_checked for r in counted)} evaluated terms"
                   f"{_first_failures(runs, 'counts_ok')}")
    assert ok


def _determinism_instances() -> list[tuple[str, Graph, PlanarEmbedding | None, str]]:
    mixed = "(and (local :r 1 :s 2 :psi triangle) (count< (# deg>=4) (# true)))"
    return [
        ("grid6", *grid(6), "(or (local :r 2 :s 2 :psi deg>=3) (count= (# path2) (# true)))"),
        ("tgrid5", *triangulated_grid(5), mixed),
        ("planar40", *random_planar(40, 5), mixed),
        ("regular24", random_regular(24, 3, 2), None, f"(with :d 3 {mixed})"),
        ("regular30", random_regular(30, 4, 9), None, "(with :d 4 (hanf :r 1 :m 3 (>= 2 star4)))"),
    ]


def test_criterion_9_determinism(criterion) -> None:  # type: ignore[no-untyped-def]
    unstable = []
    for name, g, emb, text in _determinism_instances():
        parsed = load_query(text)
        runs = [evaluate_distributed(g, parsed, emb, seed=seed, transcript=True) for seed in range(20)]
        if len({ev.decision for ev in runs}) != 1 or any(ev.stats.count != runs[0].stats.count for ev in runs):
            unstable.append(f"{name}: seeds disagree")
        again = evaluate_distributed(g, parsed, emb, seed=7, transcript=True)
        if "\n".join(again.transcript).encode() != "\n".join(runs[7].transcript).encode():
            unstable.append(f"{name}: transcripts differ")
    ok = criterion(9, not unstable, f"20 seeds x {len(_determinism_instances())} instances give identical decisions "
                   f"and per-link counts; repeated seeds give byte-identical transcripts {unstable}")
    assert ok


def hanf_predicates() -> list[str]:
    types = ["path3", "edge-end", "single", "star2", "star3", "(rooted :root 2 :edges ((1 2) (2 3)))"]
    out = []
    for t in types:
        out.append(f"(has {t})")
        out.append(f"(not (has {t}))")
        out += [f"(>= {k} {t})" for k in range(1, 5)]
    out.append("(and (>= 4 path3) (not (has star3)))")
    out.append("(or (has single) (>= 3 path3))")
    return out


def test_criterion_10_hanf_probe(criterion) -> None:  # type: ignore[no-untyped-def]
    tables, decisions = [], []
    for n in (20, 30):
        g, _ = cycle(n)
        session = Session(Network(g, degree_bound=2), seed=0)
        session.run(CollectBalls(1, 2))
        table = session.run(hanf_program(HanfParams(1, 5, 2))).decision
        assert table == type_table(g, 1, cap=5)
        tables.append(table)
        row = []
        for pred in hanf_predicates():
            parsed = load_query(f"(with :d 2 (hanf :r 1 :m 5 {pred}))")
            value = evaluate_distributed(g, parsed).decision
            assert value == oracle_eval(g, parsed.expr)
            row.append(value)
        decisions.append(row)
    path3 = named_type("path3").code(1)
    ok = criterion(10, tables[0] == tables[1] and decisions[0] == decisions[1],
                   f"C20 and C30 share the capped table {{path3: {tables[0].get(path3)}}} and agree on "
                   f"{sum(a == b for a, b in zip(*decisions))}/{len(decisions[0])} predicates")
    assert ok
