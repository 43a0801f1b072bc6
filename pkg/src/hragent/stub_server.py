"""Conformance stub for the remote backend wire protocol.

Used by the test suite (mounted via an ASGI transport) and runnable
standalone for manual poking. By default it answers with the local
baselines, so it doubles as a conformant reference server; individual
routes can be overridden with canned responses or fault injection.
"""

from __future__ import annotations

import time
from typing import Callable, Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse, PlainTextResponse

from . import normalize as norm
from .backends import (
    ExtractionRequest,
    SelectionCandidate,
    SelectionRequest,
    extract_baseline,
    select_baseline,
)

DEFAULT_ZIP_TABLE = {"98121": "Seattle WA", "10001": "New York NY"}


def make_stub_app(
    select_override: Optional[Callable[[dict], list[str]]] = None,
    extract_override: Optional[Callable[[dict], Optional[str]]] = None,
    complete_table: Optional[dict[str, str]] = None,
    generate_fn: Optional[Callable[[dict], str]] = None,
    delay_s: float = 0.0,
    raw_body: Optional[str] = None,
    model_id: str = "stub-backend",
) -> FastAPI:
    app = FastAPI(title="hragent backend stub")
    table = DEFAULT_ZIP_TABLE if complete_table is None else complete_table

    def _meta(t0: float) -> dict:
        return {"model_id": model_id, "elapsed_ms": (time.perf_counter() - t0) * 1000}

    def _maybe_delay():
        if delay_s:
            time.sleep(delay_s)

    @app.post("/v1/select")
    def select(body: dict):
        t0 = time.perf_counter()
        _maybe_delay()
        if raw_body is not None:
            return PlainTextResponse(raw_body)
        if select_override is not None:
            selected = select_override(body)
        else:
            candidates = tuple(
                SelectionCandidate(c["label"], c["label"], c["question"])
                for c in body["candidates"]
            )
            req = SelectionRequest(utterance=body["utterance"], candidates=candidates)
            selected = sorted(select_baseline(req).selected)
        return JSONResponse({"selected": selected, **_meta(t0)})

    @app.post("/v1/extract")
    def extract(body: dict):
        t0 = time.perf_counter()
        _maybe_delay()
        if raw_body is not None:
            return PlainTextResponse(raw_body)
        if extract_override is not None:
            answer = extract_override(body)
        else:
            result = extract_baseline(
                ExtractionRequest(question=body["question"], utterance=body["utterance"])
            )
            answer = result.span.text if result.span else None
        return JSONResponse({"answer": answer, **_meta(t0)})

    @app.post("/v1/complete")
    def complete(body: dict):
        t0 = time.perf_counter()
        _maybe_delay()
        raw = body.get("raw", "")
        if raw in table:
            value = table[raw]
        else:
            ctx = norm.ReferenceContext.from_iso(
                body.get("reference_date", "2023-01-01")
            )
            kinds = {"date": norm.normalize_date, "time": norm.normalize_time,
                     "money": norm.normalize_money}
            fn = kinds.get(body.get("slot_kind"))
            value = fn(raw, ctx).canonical if fn else raw
        return JSONResponse({"value": value, **_meta(t0)})

    @app.post("/v1/generate")
    def generate(body: dict):
        t0 = time.perf_counter()
        _maybe_delay()
        text = generate_fn(body) if generate_fn else ""
        return JSONResponse({"text": text, **_meta(t0)})

    return app
