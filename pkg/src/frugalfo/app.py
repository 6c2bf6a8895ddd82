"""Run configuration, execution and reporting shared by the CLI and the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from frugalfo.engine import Evaluation, evaluate_distributed, leaf_label
from frugalfo.errors import CapacityError, ConfigurationError, InputError, UnsupportedQueryError
from frugalfo.formats import parse_embedding, parse_graph
from frugalfo.graph import Graph, PlanarEmbedding, trace_faces
from frugalfo.netsim import frugality_report
from frugalfo.oracle import count_value, leaf_holds, oracle_eval
from frugalfo.query import CountAtom, CountTerm, ParsedQuery, basic_terms, leaves, load_query

Mode = Literal["distributed", "oracle", "both"]

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_MISMATCH = 2
EXIT_FRUGALITY = 3
EXIT_INPUT = 4


class RunConfig(BaseModel):
    """Everything one run needs; texts are file contents, names are used in error messages."""

    graph_text: str
    query_text: str
    embedding_text: str | None = None
    graph_name: str = "<graph>"
    query_name: str = "<query>"
    embedding_name: str = "<embedding>"
    mode: Mode = "both"
    requester: int = 1
    seed: int = 0
    k_cap: int | None = Field(default=None, ge=0)
    c_cap: int | None = Field(default=None, ge=1)
    transcript: bool = False


class LeafReport(BaseModel):
    label: str
    distributed: bool | None = None
    oracle: bool | None = None
    notes: list[str] = []


class CountReport(BaseModel):
    term: str
    distributed: int | None = None
    oracle: int | None = None


class FrugalityModel(BaseModel):
    passed: bool
    max_count: int
    max_count_at_finality: int
    argmax_link: tuple[int, int] | None
    argmax_kind: str | None
    max_bits: int
    size_constant: int
    size_kind: str
    size_budget_bits: int | None
    k_cap: int | None
    c_cap: int | None
    per_kind_max: dict[str, int]


class RunReport(BaseModel):
    n: int
    m: int
    mode: Mode
    protocol: str | None = None
    requester: int
    seed: int
    oracle_decision: bool | None = None
    distributed_decision: bool | None = None
    verdict: Literal["MATCH", "MISMATCH"] | None = None
    leaves: list[LeafReport] = []
    counts: list[CountReport] = []
    flags: list[str] = []
    frugality: FrugalityModel | None = None

    @property
    def exit_code(self) -> int:
        if self.verdict == "MISMATCH":
            return EXIT_MISMATCH
        if self.frugality is not None and not self.frugality.passed:
            return EXIT_FRUGALITY
        return EXIT_OK


def _decision(value: bool | None) -> str:
    return "-" if value is None else ("accept" if value else "reject")


def render(report: RunReport) -> str:
    lines = [f"network: n={report.n} m={report.m} requester={report.requester} seed={report.seed}"]
    if report.protocol:
        lines.append(f"protocol: {report.protocol}")
    for i, leaf in enumerate(report.leaves, start=1):
        lines.append(f"leaf {i} [{leaf.label}]: distributed {_decision(leaf.distributed)}, oracle {_decision(leaf.oracle)}")
    for c in report.counts:
        lines.append(f"count {c.term}: distributed {'-' if c.distributed is None else c.distributed}, "
                     f"oracle {'-' if c.oracle is None else c.oracle}")
    lines.extend(f"flag: {f}" for f in report.flags)
    if report.mode in ("oracle", "both"):
        lines.append(f"oracle decision: {_decision(report.oracle_decision)}")
    if report.mode in ("distributed", "both"):
        lines.append(f"distributed decision: {_decision(report.distributed_decision)}")
    if report.verdict:
        lines.append(f"verdict: {report.verdict}")
    fr = report.frugality
    if fr is not None:
        lines.append(f"frugality check: {'pass' if fr.passed else 'FAIL'}"
                     f" (k_cap={fr.k_cap if fr.k_cap is not None else '-'}, c_cap={fr.c_cap if fr.c_cap is not None else '-'})")
        lines.append(f"max messages per link direction: {fr.max_count} at quiescence, {fr.max_count_at_finality} "
                     f"at requester finality; worst link {fr.argmax_link} ({fr.argmax_kind})")
        lines.append(f"largest message: {fr.max_bits} bits; declared size constant c={fr.size_constant} "
                     f"({fr.size_kind}), every message <= c*ceil(log2 n) bits")
        lines.extend(f"  {kind}: {c}" for kind, c in sorted(fr.per_kind_max.items()))
    return "\n".join(lines) + "\n"


def load_inputs(cfg: RunConfig) -> tuple[Graph, PlanarEmbedding | None, ParsedQuery]:
    """Parse the three inputs, prefixing errors with the file they came from."""
    try:
        g = parse_graph(cfg.graph_text)
    except InputError as exc:
        raise InputError(f"{cfg.graph_name}: {exc}") from None
    emb = None
    if cfg.embedding_text is not None:
        try:
            emb = parse_embedding(cfg.embedding_text, g)
        except InputError as exc:
            raise InputError(f"{cfg.embedding_name}: {exc}") from None
        _, euler = trace_faces(g, emb)
        if not euler:
            raise InputError(f"{cfg.embedding_name}: rotation system fails Euler's formula (not planar)")
    try:
        parsed = load_query(cfg.query_text)
    except InputError as exc:
        raise InputError(f"{cfg.query_name}: {exc}") from None
    return g, emb, parsed


def _frugality(ev: Evaluation, n: int, k_cap: int | None, c_cap: int | None) -> FrugalityModel:
    rep = frugality_report(ev.stats, n, k_cap, c_cap)
    return FrugalityModel(
        passed=rep.passed,
        max_count=rep.max_count,
        max_count_at_finality=ev.stats_at_finality.max_per_direction(),
        argmax_link=rep.argmax_link,
        argmax_kind=rep.argmax_kind,
        max_bits=rep.max_bits,
        size_constant=rep.max_size_constant,
        size_kind=rep.max_size_kind,
        size_budget_bits=rep.size_budget_bits,
        k_cap=k_cap,
        c_cap=c_cap,
        per_kind_max=rep.per_kind_max,
    )


def execute(cfg: RunConfig) -> tuple[RunReport, Evaluation | None]:
    """Run one configuration; bad input raises InputError or ConfigurationError."""
    g, emb, parsed = load_inputs(cfg)
    report = RunReport(n=g.n, m=g.m, mode=cfg.mode, requester=cfg.requester, seed=cfg.seed, flags=list(parsed.flags))
    query_leaves = leaves(parsed.expr)
    report.leaves = [LeafReport(label=leaf_label(leaf)) for leaf in query_leaves]
    ev = None
    if cfg.mode in ("distributed", "both"):
        ev = evaluate_distributed(g, parsed, emb, requester=cfg.requester, seed=cfg.seed, transcript=cfg.transcript)
        report.protocol = ev.protocol
        report.distributed_decision = ev.decision
        for row, outcome in zip(report.leaves, ev.leaves):
            row.distributed = outcome.value
            row.notes = outcome.notes
        report.counts = [CountReport(term=_term_label(t), distributed=v) for t, v in ev.counts.items()]
        report.frugality = _frugality(ev, g.n, cfg.k_cap, cfg.c_cap)
    if cfg.mode in ("oracle", "both"):
        report.oracle_decision = oracle_eval(g, parsed.expr)
        for row, leaf in zip(report.leaves, query_leaves):
            row.oracle = leaf_holds(g, leaf)
        if ev is None:
            terms = {t for leaf in query_leaves if isinstance(leaf, CountAtom) for t in _terms(leaf)}
            report.counts = [CountReport(term=_term_label(t)) for t in sorted(terms, key=_term_label)]
        by_label = {c.term: c for c in report.counts}
        for leaf in query_leaves:
            if isinstance(leaf, CountAtom):
                for t in _terms(leaf):
                    by_label[_term_label(t)].oracle = count_value(g, t)
    if cfg.mode == "both":
        agree = report.oracle_decision == report.distributed_decision and all(
            c.oracle == c.distributed for c in report.counts
        )
        report.verdict = "MATCH" if agree else "MISMATCH"
    return report, ev


def _terms(atom: CountAtom) -> list[CountTerm]:
    return basic_terms(atom.left) + basic_terms(atom.right)


def _term_label(t: CountTerm) -> str:
    return f"(# {t.psi.name} :r {t.r})"


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (InputError, ConfigurationError, UnsupportedQueryError, CapacityError)):
        return EXIT_INPUT
    return EXIT_INTERNAL
