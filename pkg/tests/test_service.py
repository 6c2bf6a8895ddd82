from __future__ import annotations

from fastapi.testclient import TestClient

from frugalfo.service import app

client = TestClient(app)


def test_health_and_families() -> None:
    assert client.get("/health").json()["status"] == "ok"
    assert "grid" in client.get("/families").json()


def test_gen_then_check_then_run() -> None:
    made = client.post("/gen", json={"family": "grid", "size": 4}).json()
    verdict = client.post("/check-embedding", json={"graph": made["graph"], "embedding": made["embedding"]}).json()
    assert verdict == {"n": 16, "m": 24, "faces": 10, "euler": True}
    body = {"graph_text": made["graph"], "embedding_text": made["embedding"], "query_text": "(local :r 1 :s 2 :psi deg>=3)"}
    out = client.post("/run", json=body).json()
    assert out["exit_code"] == 0
    assert out["report"]["verdict"] == "MATCH"
    assert "verdict: MATCH" in out["text"]


def test_errors_map_to_status_codes() -> None:
    assert client.post("/gen", json={"family": "random-d-regular", "size": 7, "degree": 3}).status_code == 422
    assert client.post("/gen", json={"family": "grid", "size": 1}).status_code == 422
    made = client.post("/gen", json={"family": "cycle", "size": 5}).json()
    bad = client.post("/run", json={"graph_text": made["graph"], "query_text": "(local :r 1 :s 1 :psi true)"})
    assert bad.status_code == 422
    assert "embedding" in bad.json()["detail"]
