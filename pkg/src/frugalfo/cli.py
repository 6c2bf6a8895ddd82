"""Command-line entry point: ``frugalfo gen | check-embedding | run | batch``."""

from __future__ import annotations

import csv
import io
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click

from frugalfo.app import (
    EXIT_INPUT,
    EXIT_OK,
    RunConfig,
    RunReport,
    execute,
    exit_code_for,
    render,
)
from frugalfo.errors import ConfigurationError, FrugalError, InputError
from frugalfo.formats import format_embedding, format_graph, format_td, parse_embedding, parse_graph, read_text
from frugalfo.generators import FAMILIES, generate
from frugalfo.graph import trace_faces

MODES = ("distributed", "oracle", "both")


def _guard(body: Callable[[], int]) -> None:
    """Run ``body`` and turn package errors into the documented exit codes."""
    try:
        code = body()
    except FrugalError as exc:
        click.echo(f"error: {exc}", err=True)
        code = exit_code_for(exc)
    sys.exit(code)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text)


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Frugal distributed evaluation of first-order queries, checked against a brute-force oracle."""


@main.command()
@click.argument("family", type=click.Choice(FAMILIES))
@click.argument("size", type=int)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--degree", "-d", type=int, default=3, show_default=True, help="Degree for random-d-regular.")
@click.option("--graph", "graph_path", type=click.Path(dir_okay=False), default=None,
              help="Graph output file (stdout when omitted).")
@click.option("--embedding", "embedding_path", type=click.Path(dir_okay=False), default=None,
              help="Rotation-system output file for planar families.")
def gen(family: str, size: int, seed: int, degree: int, graph_path: str | None, embedding_path: str | None) -> None:
    """Generate a family member; SIZE is the side length for grids and the node count otherwise."""

    def body() -> int:
        if size < 2:
            raise InputError("size must be at least 2")
        g, emb = generate(family, size, seed, degree)
        if emb is None and embedding_path is not None:
            raise ConfigurationError(f"family {family} has no planar embedding")
        if emb is not None:
            _, euler = trace_faces(g, emb)
            if not euler:
                raise FrugalError(f"generated rotation system for {family} fails Euler's formula")
        _write(graph_path, format_graph(g))
        if emb is not None and embedding_path is not None:
            _write(embedding_path, format_embedding(emb))
        return EXIT_OK

    _guard(body)


@main.command("check-embedding")
@click.option("--graph", "graph_path", required=True, type=click.Path(dir_okay=False))
@click.option("--embedding", "embedding_path", required=True, type=click.Path(dir_okay=False))
def check_embedding(graph_path: str, embedding_path: str) -> None:
    """Trace faces of a rotation system and check Euler's formula."""

    def body() -> int:
        try:
            g = parse_graph(read_text(graph_path))
        except InputError as exc:
            raise InputError(f"{graph_path}: {exc}") from None
        try:
            emb = parse_embedding(read_text(embedding_path), g)
        except InputError as exc:
            raise InputError(f"{embedding_path}: {exc}") from None
        faces, ok = trace_faces(g, emb)
        click.echo(f"n={g.n} m={g.m} faces={len(faces)} euler={'ok' if ok else 'violated'}")
        return EXIT_OK if ok else EXIT_INPUT

    _guard(body)


def _run_options(fn: Callable[..., Any]) -> Callable[..., Any]:
    options = [
        click.option("--query", "query_path", required=True, type=click.Path(dir_okay=False)),
        click.option("--mode", type=click.Choice(MODES), default="both", show_default=True),
        click.option("--requester", type=int, default=1, show_default=True),
        click.option("--kcap", type=int, default=None, help="Max messages per directed link."),
        click.option("--ccap", type=int, default=None, help="Max message bits per ceil(log2 n)."),
        click.option("--stats-csv", "stats_csv", type=click.Path(dir_okay=False), default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(dir_okay=False))
@click.option("--embedding", "embedding_path", type=click.Path(dir_okay=False), default=None)
@_run_options
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--dump-td", "dump_td", type=click.Path(dir_okay=False), default=None,
              help="Write every built tree decomposition as 'bag <id> <parent> v1 ... vA' lines.")
@click.option("--transcript", "transcript_path", type=click.Path(dir_okay=False), default=None,
              help="Write the delivery transcript, one line per event.")
def run(graph_path: str, embedding_path: str | None, query_path: str, mode: str, requester: int,
        kcap: int | None, ccap: int | None, stats_csv: str | None, seed: int, dump_td: str | None,
        transcript_path: str | None) -> None:
    """Evaluate a query distributively, centrally, or both (default) and compare."""

    def body() -> int:
        cfg = RunConfig(
            graph_text=read_text(graph_path),
            graph_name=graph_path,
            query_text=read_text(query_path),
            query_name=query_path,
            embedding_text=read_text(embedding_path) if embedding_path else None,
            embedding_name=embedding_path or "<embedding>",
            mode=mode,
            requester=requester,
            seed=seed,
            k_cap=kcap,
            c_cap=ccap,
            transcript=transcript_path is not None,
        )
        report, ev = execute(cfg)
        click.echo(render(report), nl=False)
        if ev is not None:
            if stats_csv:
                Path(stats_csv).write_text(ev.stats.to_csv())
            if dump_td:
                chunks = [f"# {label}\n{format_td(td)}" for label, td in ev.decompositions.items()]
                Path(dump_td).write_text("".join(chunks))
            if transcript_path:
                Path(transcript_path).write_text("".join(line + "\n" for line in ev.transcript))
        return report.exit_code

    _guard(body)


def _int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


BATCH_COLUMNS = ["family", "size", "seed", "n", "m", "oracle", "distributed", "verdict",
                 "max_count", "max_bits", "size_constant", "exit"]


def _batch_row(family: str, size: int, seed: int, report: RunReport) -> dict[str, Any]:
    fr = report.frugality
    return {
        "family": family, "size": size, "seed": seed, "n": report.n, "m": report.m,
        "oracle": report.oracle_decision, "distributed": report.distributed_decision,
        "verdict": report.verdict or "", "max_count": fr.max_count if fr else "",
        "max_bits": fr.max_bits if fr else "", "size_constant": fr.size_constant if fr else "",
        "exit": report.exit_code,
    }


@main.command()
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--sizes", required=True, help="Comma list or ranges, e.g. 5,7,10-12.")
@click.option("--seeds", default="0", show_default=True, help="Comma list or ranges, e.g. 0-19.")
@click.option("--degree", "-d", type=int, default=3, show_default=True)
@_run_options
def batch(family: str, sizes: str, seeds: str, degree: int, query_path: str, mode: str, requester: int,
          kcap: int | None, ccap: int | None, stats_csv: str | None) -> None:
    """Run one query over generated instances; one summary line per (size, seed)."""

    def body() -> int:
        query_text = read_text(query_path)
        worst = EXIT_OK
        rows = []
        for size in _int_list(sizes):
            for seed in _int_list(seeds):
                g, emb = generate(family, size, seed, degree)
                cfg = RunConfig(
                    graph_text=format_graph(g),
                    graph_name=f"{family}:{size}:{seed}",
                    embedding_text=format_embedding(emb) if emb is not None else None,
                    query_text=query_text,
                    query_name=query_path,
                    mode=mode,
                    requester=min(requester, g.n),
                    seed=seed,
                    k_cap=kcap,
                    c_cap=ccap,
                )
                report, _ = execute(cfg)
                row = _batch_row(family, size, seed, report)
                rows.append(row)
                click.echo(" ".join(f"{k}={row[k]}" for k in BATCH_COLUMNS))
                worst = max(worst, report.exit_code)
        if stats_csv:
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=BATCH_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
            Path(stats_csv).write_text(buf.getvalue())
        return worst

    _guard(body)


if __name__ == "__main__":
    main()
