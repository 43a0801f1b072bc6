"""HTTP session service over the dialogue engine.

One engine process, many concurrent sessions; each session's messages
are serialized by its own lock. State survives restarts through an
append-only JSON-lines event log per session; the latest snapshot in
the log reproduces the exact session state.

Default logs carry session ids and action kinds only, never message
content: conversation text is confidential.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from . import normalize as norm
from .engine import (
    ActionKind,
    AgentAction,
    DialogueEngine,
    EngineConfig,
    HandlerRegistry,
    SessionTerminated,
    UnknownSession,
    _Session,
)
from .schema_model import (
    DialogueState,
    Phase,
    SlotValue,
    Speaker,
    TaskSchema,
    TerminationReason,
    Turn,
    parse_schema,
    apply_fill,
)

log = logging.getLogger("hragent.service")


@dataclass
class ServiceConfig:
    schema_dir: str
    host: str = "127.0.0.1"
    port: int = 8700
    engine_config: EngineConfig = field(default_factory=EngineConfig)
    backend_url: Optional[str] = None
    persistence_dir: Optional[str] = None
    idle_timeout_s: float = 1800.0


# --- state (de)serialization -------------------------------------------------


def state_to_dict(state: DialogueState) -> dict:
    return {
        "schema_id": state.schema_id,
        "filled": {
            sid: {
                "raw_span": v.raw_span,
                "normalized": v.normalized,
                "source_turn": v.source_turn,
                "confirmed": v.confirmed,
            }
            for sid, v in state.filled.items()
        },
        "pending": list(state.pending),
        "clarify_count": dict(state.clarify_count),
        "user_turn_count": state.user_turn_count,
        "phase": state.phase.value,
        "termination_reason": state.termination_reason.value
        if state.termination_reason else None,
    }


def state_from_dict(d: dict) -> DialogueState:
    return DialogueState(
        schema_id=d["schema_id"],
        filled={
            sid: SlotValue(slot_id=sid, raw_span=v["raw_span"],
                           normalized=v.get("normalized"),
                           source_turn=v["source_turn"],
                           confirmed=v.get("confirmed", False))
            for sid, v in d["filled"].items()
        },
        pending=tuple(d["pending"]),
        clarify_count=dict(d["clarify_count"]),
        user_turn_count=d["user_turn_count"],
        phase=Phase(d["phase"]),
        termination_reason=TerminationReason(d["termination_reason"])
        if d.get("termination_reason") else None,
    )


def _turns_to_list(sess: _Session) -> list[dict]:
    return [
        {"index": t.index, "speaker": t.speaker.value, "text": t.text,
         "timestamp": t.timestamp, "latency_ms": t.latency_ms}
        for t in sess.turns
    ]


def session_snapshot(sess: _Session) -> dict:
    return {
        "session_id": sess.session_id,
        "schema_id": sess.schema.id,
        "reference_datetime": sess.ctx.reference_datetime.isoformat(),
        "state": state_to_dict(sess.state),
        "turns": _turns_to_list(sess),
        "last_utterance": sess.last_utterance,
        "created_at": sess.created_at,
        "last_active_at": sess.last_active_at,
    }


# --- service ------------------------------------------------------------------


class SessionService:
    def __init__(self, config: ServiceConfig,
                 registry: Optional[HandlerRegistry] = None):
        self.config = config
        self.schemas = self._load_schemas(config.schema_dir)
        select_fn, extract_fn = self._backends(config.backend_url)
        registry = registry or HandlerRegistry()
        for schema in self.schemas.values():
            registry.register(schema.dispatch_target)
        self.engine = DialogueEngine(select_fn=select_fn, extract_fn=extract_fn,
                                     registry=registry)
        if config.persistence_dir:
            Path(config.persistence_dir).mkdir(parents=True, exist_ok=True)
            self._restore_sessions()

    @staticmethod
    def _load_schemas(schema_dir: str) -> dict[str, TaskSchema]:
        schemas = {}
        for path in sorted(Path(schema_dir).glob("*.json")):
            schema = parse_schema(path.read_text())
            schemas[schema.id] = schema
        return schemas

    @staticmethod
    def _backends(backend_url: Optional[str]):
        if backend_url is None:
            from .backends import extract_baseline, select_baseline

            return select_baseline, extract_baseline
        from .backends import RemoteBackend

        remote = RemoteBackend(backend_url)
        return remote.select, remote.extract

    # -- persistence ------------------------------------------------------

    def _log_path(self, session_id: str) -> Optional[Path]:
        if not self.config.persistence_dir:
            return None
        return Path(self.config.persistence_dir) / f"{session_id}.jsonl"

    def _persist(self, session_id: str, event: str):
        path = self._log_path(session_id)
        if path is None:
            return
        sess = self.engine.sessions[session_id]
        record = {"event": event, "at": datetime.now(timezone.utc).isoformat(),
                  "snapshot": session_snapshot(sess)}
        with open(path, "a") as f:
            f.write(json.dumps(record) + "\n")

    def _restore_sessions(self):
        for path in sorted(Path(self.config.persistence_dir).glob("*.jsonl")):
            last = None
            with open(path) as f:
                for line in f:
                    if line.strip():
                        last = json.loads(line)
            if last is None:
                continue
            snap = last["snapshot"]
            schema = self.schemas.get(snap["schema_id"])
            if schema is None:
                log.warning("session %s references unknown schema, skipped",
                            snap["session_id"])
                continue
            sess = _Session(
                session_id=snap["session_id"],
                schema=schema,
                cfg=self.config.engine_config,
                ctx=norm.ReferenceContext.from_iso(snap["reference_datetime"]),
                state=state_from_dict(snap["state"]),
                turns=[
                    Turn(index=t["index"], speaker=Speaker(t["speaker"]),
                         text=t["text"], timestamp=t["timestamp"],
                         latency_ms=t.get("latency_ms"))
                    for t in snap["turns"]
                ],
                last_utterance=snap.get("last_utterance", ""),
                created_at=snap.get("created_at", ""),
                last_active_at=snap.get("last_active_at", ""),
            )
            self.engine.sessions[sess.session_id] = sess
            log.info("restored session %s", sess.session_id)

    # -- operations ---------------------------------------------------------

    def create_session(self, schema_id: str,
                       reference_datetime: Optional[str] = None) -> tuple[str, AgentAction]:
        schema = self.schemas[schema_id]
        ctx = None
        if reference_datetime:
            ctx = norm.ReferenceContext.from_iso(reference_datetime)
        sid, action = self.engine.start_session(
            schema, cfg=self.config.engine_config, ctx=ctx
        )
        log.info("session %s created (schema=%s)", sid, schema_id)
        self._persist(sid, "session_created")
        return sid, action

    def post_message(self, session_id: str, text: str) -> AgentAction:
        self._expire_if_idle(session_id)
        action = self.engine.handle_user_turn(session_id, text)
        log.info("session %s -> %s", session_id, action.kind.value)
        self._persist(session_id, "user_message")
        return action

    def confirm(self, session_id: str, decision: str,
                corrections: Optional[dict[str, str]] = None) -> AgentAction:
        sess = self.engine.get_session(session_id)
        if sess.state.phase != Phase.confirming:
            raise WrongPhase(sess.state.phase)
        if corrections:
            action = None
            for slot_id, text in corrections.items():
                action = self._apply_correction(sess, slot_id, text)
            log.info("session %s corrected %d slot(s)", session_id, len(corrections))
            self._persist(session_id, "correction")
            return action
        action = self.engine.handle_user_turn(
            session_id, "yes" if decision in ("yes", "confirm") else decision
        )
        log.info("session %s -> %s", session_id, action.kind.value)
        self._persist(session_id, "confirm")
        return action

    def _apply_correction(self, sess: _Session, slot_id: str, text: str) -> AgentAction:
        with sess.lock:
            slot = sess.schema.slot(slot_id)  # KeyError -> 404
            self.engine._record_user_turn(sess, text)
            turn_index = sess.turns[-1].index
            filled = dict(sess.state.filled)
            filled.pop(slot_id, None)
            order = [s.id for s in sess.schema.slots]
            pending = tuple(sid for sid in order if sid not in filled)
            sess.state = replace(sess.state, filled=filled, pending=pending,
                                 phase=Phase.collecting)
            sess.state = apply_fill(
                sess.state,
                SlotValue(slot_id=slot_id, raw_span=text, source_turn=turn_index),
            )
            required_left = [s for s in sess.state.pending
                             if sess.schema.slot(s).required]
            if required_left:
                action = AgentAction(
                    ActionKind.ask, sess.schema.slot(required_left[0]).question,
                    sess.state, slot_id=required_left[0],
                )
            else:
                action = self.engine._confirm_summary(sess)
            self.engine._record_agent_turn(sess, action, 0.0)
            return action

    def _expire_if_idle(self, session_id: str):
        sess = self.engine.sessions.get(session_id)
        if sess is None or not sess.last_active_at:
            return
        last = datetime.fromisoformat(sess.last_active_at)
        idle = (datetime.now(timezone.utc) - last).total_seconds()
        if idle > self.config.idle_timeout_s:
            log.info("session %s expired after %.0fs idle", session_id, idle)
            del self.engine.sessions[session_id]


class WrongPhase(RuntimeError):
    def __init__(self, phase: Phase):
        super().__init__(f"operation not valid in phase {phase.value}")
        self.phase = phase


# --- HTTP layer ------------------------------------------------------------------


def _action_payload(action: AgentAction, session_id: Optional[str] = None) -> dict:
    state = action.state_snapshot
    payload: dict = {
        "action": {"kind": action.kind.value, "text": action.text},
        "state": {
            "filled": {
                sid: {"raw_span": v.raw_span, "normalized": v.normalized}
                for sid, v in state.filled.items()
            },
            "pending": list(state.pending),
            "phase": state.phase.value,
        },
    }
    if session_id is not None:
        payload["session_id"] = session_id
    if action.slot_id is not None:
        payload["action"]["slot_id"] = action.slot_id
    if action.kind == ActionKind.terminated:
        payload["terminated"] = True
        payload["reason"] = action.reason.value if action.reason else None
        payload["wiki_url"] = action.wiki_url
    if action.receipt is not None:
        payload["receipt"] = action.receipt
    return payload


def make_app(service: SessionService) -> FastAPI:
    app = FastAPI(title="hragent session service")

    @app.get("/v1/schemas")
    def list_schemas():
        return {
            "schemas": [
                {"id": s.id, "domain": s.domain,
                 "slots": [
                     {"id": sd.id, "name": sd.name, "question": sd.question,
                      "required": sd.required}
                     for sd in s.slots
                 ]}
                for s in service.schemas.values()
            ]
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict):
        schema_id = body.get("schema_id")
        if schema_id not in service.schemas:
            return JSONResponse(
                status_code=404,
                content={"error": f"unknown schema '{schema_id}'",
                         "available": sorted(service.schemas)},
            )
        sid, action = service.create_session(
            schema_id, reference_datetime=body.get("reference_datetime")
        )
        return _action_payload(action, session_id=sid)

    @app.post("/v1/sessions/{session_id}/messages")
    def post_message(session_id: str, body: dict):
        text = (body.get("text") or "").strip()
        if not text:
            return JSONResponse(status_code=422,
                                content={"error": "empty message"})
        try:
            action = service.post_message(session_id, text)
        except UnknownSession:
            return JSONResponse(status_code=404,
                                content={"error": "unknown session"})
        except SessionTerminated as e:
            return JSONResponse(
                status_code=409,
                content={"error": "session terminated",
                         "reason": e.reason.value if e.reason else None,
                         "wiki_url": e.wiki_url},
            )
        return _action_payload(action, session_id=session_id)

    @app.post("/v1/sessions/{session_id}/confirm")
    def confirm(session_id: str, body: dict):
        try:
            action = service.confirm(
                session_id, body.get("decision", ""),
                corrections=body.get("corrections"),
            )
        except UnknownSession:
            return JSONResponse(status_code=404,
                                content={"error": "unknown session"})
        except WrongPhase as e:
            return JSONResponse(
                status_code=409,
                content={"error": str(e), "phase": e.phase.value},
            )
        except KeyError as e:
            return JSONResponse(status_code=404,
                                content={"error": f"unknown slot {e}"})
        except SessionTerminated as e:
            return JSONResponse(
                status_code=409,
                content={"error": "session terminated",
                         "reason": e.reason.value if e.reason else None},
            )
        return _action_payload(action, session_id=session_id)

    @app.get("/v1/sessions/{session_id}/state")
    def get_state(session_id: str):
        try:
            sess = service.engine.get_session(session_id)
        except UnknownSession:
            return JSONResponse(status_code=404,
                                content={"error": "unknown session"})
        return {"session_id": session_id, "state": state_to_dict(sess.state),
                "turns": _turns_to_list(sess)}

    return app


def make_app_from_env() -> FastAPI:
    """App factory for `uvicorn hragent.service:make_app_from_env`."""
    config_path = os.environ.get("HRAGENT_CONFIG")
    if config_path:
        raw = json.loads(Path(config_path).read_text())
        cfg = ServiceConfig(
            schema_dir=raw["schema_dir"],
            host=raw.get("host", "127.0.0.1"),
            port=raw.get("port", 8700),
            backend_url=raw.get("backend_url"),
            persistence_dir=raw.get("persistence_dir"),
            idle_timeout_s=raw.get("idle_timeout_s", 1800.0),
        )
    else:
        cfg = ServiceConfig(schema_dir=os.environ.get("HRAGENT_SCHEMA_DIR", "schemas"))
    if os.environ.get("HRAGENT_BACKEND_URL"):
        cfg.backend_url = os.environ["HRAGENT_BACKEND_URL"]
    return make_app(SessionService(cfg))
