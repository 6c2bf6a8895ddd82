"""HTTP front end over the same run path as the CLI.

Start with ``uvicorn frugalfo.service:app``.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from frugalfo import __version__
from frugalfo.app import EXIT_INPUT, RunConfig, RunReport, execute, exit_code_for, render
from frugalfo.errors import FrugalError
from frugalfo.formats import format_embedding, format_graph, parse_embedding, parse_graph
from frugalfo.generators import FAMILIES, generate
from frugalfo.graph import trace_faces

app = FastAPI(title="frugalfo", version=__version__)


class GenRequest(BaseModel):
    family: str
    size: int = Field(ge=2)
    seed: int = 0
    degree: int = 3


class GenResponse(BaseModel):
    graph: str
    embedding: str | None


class EmbeddingCheck(BaseModel):
    graph: str
    embedding: str


class EmbeddingVerdict(BaseModel):
    n: int
    m: int
    faces: int
    euler: bool


class RunResponse(BaseModel):
    report: RunReport
    text: str
    exit_code: int


def _fail(exc: FrugalError) -> HTTPException:
    status = 422 if exit_code_for(exc) == EXIT_INPUT else 500
    return HTTPException(status_code=status, detail=str(exc))


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok", "version": __version__}


@app.get("/families")
def families() -> list[str]:
    return list(FAMILIES)


@app.post("/gen", response_model=GenResponse)
def gen(req: GenRequest) -> GenResponse:
    try:
        g, emb = generate(req.family, req.size, req.seed, req.degree)
    except FrugalError as exc:
        raise _fail(exc) from None
    return GenResponse(graph=format_graph(g), embedding=format_embedding(emb) if emb is not None else None)


@app.post("/check-embedding", response_model=EmbeddingVerdict)
def check_embedding(req: EmbeddingCheck) -> EmbeddingVerdict:
    try:
        g = parse_graph(req.graph)
        emb = parse_embedding(req.embedding, g)
        faces, ok = trace_faces(g, emb)
    except FrugalError as exc:
        raise _fail(exc) from None
    return EmbeddingVerdict(n=g.n, m=g.m, faces=len(faces), euler=ok)


@app.post("/run", response_model=RunResponse)
def run(cfg: RunConfig) -> RunResponse:
    try:
        report, _ = execute(cfg)
    except FrugalError as exc:
        raise _fail(exc) from None
    return RunResponse(report=report, text=render(report), exit_code=report.exit_code)
