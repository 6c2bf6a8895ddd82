from __future__ import annotations

from pathlib import Path

import pytest
from click.testing import CliRunner

from frugalfo.cli import main
from frugalfo.formats import format_embedding, format_graph, parse_embedding, parse_graph, parse_td
from frugalfo.generators import cycle
from frugalfo.graph import trace_faces
from instances import two_triangles


def _invoke(*args: str):  # type: ignore[no-untyped-def]
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def _instance(tmp_path: Path, name: str, g, emb) -> tuple[str, str]:  # type: ignore[no-untyped-def]
    graph_path, emb_path = tmp_path / f"{name}.graph", tmp_path / f"{name}.emb"
    graph_path.write_text(format_graph(g))
    emb_path.write_text(format_embedding(emb))
    return str(graph_path), str(emb_path)


def _query(tmp_path: Path, text: str, name: str = "q.fo") -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_gen_grid(tmp_path: Path) -> None:
    result = _invoke("gen", "grid", "5", "--graph", str(tmp_path / "g"), "--embedding", str(tmp_path / "e"))
    assert result.exit_code == 0
    g = parse_graph((tmp_path / "g").read_text())
    assert (g.n, g.m) == (25, 40)
    _, euler = trace_faces(g, parse_embedding((tmp_path / "e").read_text(), g))
    assert euler


def test_gen_cycle_rotations(tmp_path: Path) -> None:
    assert _invoke("gen", "cycle", "6", "--graph", str(tmp_path / "g"), "--embedding", str(tmp_path / "e")).exit_code == 0
    g = parse_graph((tmp_path / "g").read_text())
    emb = parse_embedding((tmp_path / "e").read_text(), g)
    assert all(len(emb.rotation[v]) == 2 for v in g.nodes())


def test_gen_is_seeded() -> None:
    a = _invoke("gen", "random-d-regular", "20", "-d", "3", "--seed", "7")
    b = _invoke("gen", "random-d-regular", "20", "-d", "3", "--seed", "7")
    assert a.exit_code == 0 and a.output == b.output
    assert parse_graph(a.output).n == 20


def test_gen_input_errors() -> None:
    assert _invoke("gen", "random-d-regular", "7", "-d", "3").exit_code == 4
    assert _invoke("gen", "cycle", "1").exit_code == 4


def test_check_embedding(tmp_path: Path) -> None:
    graph_path, emb_path = _instance(tmp_path, "c6", *cycle(6))
    result = _invoke("check-embedding", "--graph", graph_path, "--embedding", emb_path)
    assert result.exit_code == 0
    assert "faces=2 euler=ok" in result.output


def test_run_two_triangles_matches(tmp_path: Path) -> None:
    graph_path, emb_path = _instance(tmp_path, "tt", *two_triangles(4))
    query = _query(tmp_path, "(local :r 1 :s 2 :psi triangle)\n")
    td_path, csv_path = tmp_path / "td.txt", tmp_path / "stats.csv"
    result = _invoke("run", "--graph", graph_path, "--embedding", emb_path, "--query", query,
                     "--dump-td", str(td_path), "--stats-csv", str(csv_path))
    assert result.exit_code == 0, result.output
    assert "verdict: MATCH" in result.output
    assert "distributed decision: accept" in result.output
    assert "declared size constant c=" in result.output
    assert csv_path.read_text().startswith("u,v,dir,count,max_bits\n")
    first_block = td_path.read_text().split("# ")[1].split("\n", 1)[1]
    assert parse_td(first_block).bags


def test_run_c6_rejects(tmp_path: Path) -> None:
    graph_path, emb_path = _instance(tmp_path, "c6", *cycle(6))
    query = _query(tmp_path, "(local :r 1 :s 3 :psi true)\n")
    result = _invoke("run", "--graph", graph_path, "--embedding", emb_path, "--query", query)
    assert result.exit_code == 0
    assert "verdict: MATCH" in result.output
    assert "oracle decision: reject" in result.output and "distributed decision: reject" in result.output


def test_run_reports_are_byte_identical(tmp_path: Path) -> None:
    graph_path, emb_path = _instance(tmp_path, "tt", *two_triangles(4))
    query = _query(tmp_path, "(and (local :r 1 :s 2 :psi triangle) (count< (# triangle) (# true)))\n")
    args = ["run", "--graph", graph_path, "--embedding", emb_path, "--query", query, "--seed", "5",
            "--transcript", str(tmp_path / "t1")]
    a = _invoke(*args)
    args[-1] = str(tmp_path / "t2")
    b = _invoke(*args)
    assert a.output == b.output
    assert (tmp_path / "t1").read_bytes() == (tmp_path / "t2").read_bytes()


def test_run_frugality_breach_exits_3(tmp_path: Path) -> None:
    graph_path, emb_path = _instance(tmp_path, "c6", *cycle(6))
    query = _query(tmp_path, "(local :r 1 :s 2 :psi true)\n")
    result = _invoke("run", "--graph", graph_path, "--embedding", emb_path, "--query", query, "--kcap", "1")
    assert result.exit_code == 3
    assert "frugality check: FAIL" in result.output


@pytest.mark.parametrize(
    ("query", "fragment"),
    [
        ("(local :r 1 :s x :psi true)", "q.fo: line 1: :s must be an integer"),
        ("(hanf :r 1 :m 3 (has path3))", "Hanf leaves need"),
    ],
)
def test_run_input_errors_exit_4(tmp_path: Path, query: str, fragment: str) -> None:
    graph_path, emb_path = _instance(tmp_path, "c6", *cycle(6))
    result = CliRunner().invoke(main, ["run", "--graph", graph_path, "--embedding", emb_path,
                                       "--query", _query(tmp_path, query)])
    assert result.exit_code == 4
    assert fragment in result.output


def test_run_missing_embedding_is_a_config_error(tmp_path: Path) -> None:
    graph_path, _ = _instance(tmp_path, "c6", *cycle(6))
    result = CliRunner().invoke(main, ["run", "--graph", graph_path, "--query", _query(tmp_path, "(local :r 1 :s 1 :psi true)")])
    assert result.exit_code == 4
    assert "embedding" in result.output


def test_run_oracle_mode_only(tmp_path: Path) -> None:
    graph_path, _ = _instance(tmp_path, "c6", *cycle(6))
    query = _query(tmp_path, "(count= (# true) (# deg>=2))")
    result = _invoke("run", "--graph", graph_path, "--query", query, "--mode", "oracle")
    assert result.exit_code == 0
    assert "oracle decision: accept" in result.output
    assert "verdict" not in result.output


def test_batch(tmp_path: Path) -> None:
    query = _query(tmp_path, "(local :r 1 :s 2 :psi deg>=3)")
    csv_path = tmp_path / "batch.csv"
    result = _invoke("batch", "--family", "grid", "--sizes", "3,4", "--seeds", "0-1", "--query", query,
                     "--stats-csv", str(csv_path))
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert len(lines) == 4 and all("verdict=MATCH" in line for line in lines)
    assert csv_path.read_text().splitlines()[0].startswith("family,size,seed")
