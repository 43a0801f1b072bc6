"""Per-session turn loop: selection -> extraction -> state -> next question.

Routes each user utterance through the configured backends, maintains the
dialogue state, enforces the guardrails (clarification repeat limit and
the periodic sentiment gate), runs confirmation and dispatches confirmed
payloads to registered task handlers. Sessions are processed strictly
serially under a per-session lock; distinct sessions run in parallel.
"""

from __future__ import annotations

import hashlib
import json
import string
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Callable, Optional

from . import normalize as norm
from .backends import (
    ExtractionRequest,
    ExtractionResult,
    SelectionCandidate,
    SelectionRequest,
    SelectionResult,
    SentimentScore,
    extract_baseline,
    select_baseline,
    sentiment_baseline,
)
from .schema_model import (
    DialogueState,
    Phase,
    SlotValue,
    Speaker,
    TaskSchema,
    TerminationReason,
    Transcript,
    Turn,
    apply_fill,
    fresh_state,
)


class UnknownSession(KeyError):
    pass


class SessionTerminated(RuntimeError):
    def __init__(self, reason: TerminationReason, wiki_url: Optional[str]):
        super().__init__(f"session terminated: {reason.value}")
        self.reason = reason
        self.wiki_url = wiki_url


class DispatchError(RuntimeError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    clarify_limit: int = 3
    sentiment_period: int = 4
    sentiment_threshold: float = 0.5
    empathy_enabled: bool = False
    wiki_links: dict[str, str] = field(default_factory=dict)
    response_budget_ms: float = 2000.0

    def __post_init__(self):
        if self.clarify_limit < 1:
            raise ValueError("clarify_limit must be >= 1")
        if not 0 < self.sentiment_threshold < 1:
            raise ValueError("sentiment_threshold must be in (0, 1)")
        if self.sentiment_period < 1:
            raise ValueError("sentiment_period must be >= 1")


class ActionKind(str, Enum):
    ask = "ask"
    clarify = "clarify"
    confirm_summary = "confirm_summary"
    dispatched = "dispatched"
    terminated = "terminated"


@dataclass(frozen=True)
class AgentAction:
    kind: ActionKind
    text: str
    state_snapshot: DialogueState
    slot_id: Optional[str] = None
    reason: Optional[TerminationReason] = None
    wiki_url: Optional[str] = None
    receipt: Optional[dict] = None


@dataclass(frozen=True)
class DispatchRequest:
    dispatch_target: str
    values: dict[str, str]
    session_id: str
    schema_id: str


# --- guardrails ---------------------------------------------------------------


def check_guardrails(
    state: DialogueState,
    latest_sentiment: Optional[SentimentScore],
    cfg: EngineConfig,
) -> Optional[TerminationReason]:
    """Termination reason, if any. Sentiment is only passed on scheduled turns."""
    if any(c > cfg.clarify_limit for c in state.clarify_count.values()):
        return TerminationReason.repeat_limit
    if latest_sentiment is not None and latest_sentiment.negative_prob > cfg.sentiment_threshold:
        return TerminationReason.sentiment_limit
    return None


# --- empathy rewriting --------------------------------------------------------

# (trigger keywords, acknowledgment, known concise-question rephrasings)
EMPATHY_BANK: tuple[tuple[frozenset[str], str, dict[str, str]], ...] = (
    (
        frozenset({"emergency", "emergencies", "claim", "claims", "injury"}),
        "I understand that medical emergencies can be stressful.",
        {
            "can you please provide details about the incident?":
                "Please share the incident details so we can assist you.",
        },
    ),
    (
        frozenset({"bill", "bills", "billing"}),
        "Dealing with medical bills can be confusing.",
        {
            "could you please provide me with the details of the bill?":
                "Please share the bill details, and we'll look into it.",
        },
    ),
    (
        frozenset({"website", "error", "404"}),
        "Website errors can be frustrating.",
        {
            "can you provide more context about when and where it occurs?":
                "Please tell me more, so I can assist you effectively.",
        },
    ),
    (
        frozenset({"code", "compile", "compiling", "bug"}),
        "Coding errors can be challenging.",
        {
            "could you share the error message and a snippet of your code for better assistance?":
                "Please provide the error message and your code, and we'll figure it out together.",
        },
    ),
)

GENERIC_ACK = "Thank you for letting me know."


def rewrite_with_empathy(next_question: str, last_utterance: str) -> str:
    """Prefix the concise question with a situation-keyed acknowledgment.

    Known question/situation pairs from the template bank get their full
    concise rewrite; everything else keeps the question verbatim after a
    generic acknowledgment. At most two sentences either way.
    """
    tokens = set(last_utterance.lower().replace(".", " ").replace(",", " ").split())
    best = max(EMPATHY_BANK, key=lambda entry: len(entry[0] & tokens))
    keywords, ack, rewrites = best
    if keywords & tokens:
        suffix = rewrites.get(next_question.strip().lower(), next_question)
        return f"{ack} {suffix}"
    return f"{GENERIC_ACK} {next_question}"


AFFIRMATIVE_WORDS = frozenset({"yes", "correct", "confirm", "right", "confirmed"})


def is_affirmative(utterance: str) -> bool:
    tokens = [t.strip(string.punctuation) for t in utterance.lower().split()]
    return bool(tokens) and all(t in AFFIRMATIVE_WORDS for t in tokens if t)


# --- dispatch -----------------------------------------------------------------


class HandlerRegistry:
    """Named task handler stubs writing JSON-lines audit records."""

    def __init__(self, audit_path: Optional[str] = None):
        self.audit_path = audit_path
        self._handlers: dict[str, Callable[[dict], dict]] = {}

    def register(self, target: str, handler: Optional[Callable[[dict], dict]] = None):
        self._handlers[target] = handler or (lambda payload: {"status": "recorded"})

    def dispatch(self, req: DispatchRequest) -> dict:
        if req.dispatch_target not in self._handlers:
            raise DispatchError(f"unknown dispatch target '{req.dispatch_target}'")
        payload = {
            "dispatch_target": req.dispatch_target,
            "values": req.values,
            "session_id": req.session_id,
            "schema_id": req.schema_id,
        }
        result = self._handlers[req.dispatch_target](payload)
        receipt = {
            "handler_id": req.dispatch_target,
            "payload_hash": hashlib.sha256(
                json.dumps(payload, sort_keys=True).encode()
            ).hexdigest(),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "result": result,
        }
        if self.audit_path:
            with open(self.audit_path, "a") as f:
                f.write(json.dumps({"payload": payload, "receipt": receipt}) + "\n")
        return receipt


# fact-check hook: inspects the outgoing request, returns (slot_id, message)
# when some value fails validation, None when the dispatch may proceed
FactCheck = Callable[[DispatchRequest], Optional[tuple[str, str]]]


# --- session engine -----------------------------------------------------------


@dataclass
class _Session:
    session_id: str
    schema: TaskSchema
    cfg: EngineConfig
    ctx: norm.ReferenceContext
    state: DialogueState
    turns: list[Turn] = field(default_factory=list)
    started: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)
    last_utterance: str = ""
    created_at: str = ""
    last_active_at: str = ""

    def transcript(self) -> Transcript:
        return Transcript(schema_id=self.schema.id, turns=tuple(self.turns),
                          final_state=self.state)


class DialogueEngine:
    def __init__(
        self,
        select_fn: Callable[[SelectionRequest], SelectionResult] = select_baseline,
        extract_fn: Callable[[ExtractionRequest], ExtractionResult] = extract_baseline,
        sentiment_fn: Callable[[str], SentimentScore] = sentiment_baseline,
        registry: Optional[HandlerRegistry] = None,
        fact_check: Optional[FactCheck] = None,
    ):
        self.select_fn = select_fn
        self.extract_fn = extract_fn
        self.sentiment_fn = sentiment_fn
        self.registry = registry or HandlerRegistry()
        self.fact_check = fact_check
        self.sessions: dict[str, _Session] = {}

    # -- session lifecycle ------------------------------------------------

    def start_session(
        self,
        schema: TaskSchema,
        cfg: Optional[EngineConfig] = None,
        ctx: Optional[norm.ReferenceContext] = None,
        session_id: Optional[str] = None,
    ) -> tuple[str, AgentAction]:
        cfg = cfg or EngineConfig()
        ctx = ctx or norm.ReferenceContext(
            reference_datetime=datetime.now(timezone.utc)
        )
        sid = session_id or uuid.uuid4().hex
        now = datetime.now(timezone.utc).isoformat()
        sess = _Session(
            session_id=sid, schema=schema, cfg=cfg, ctx=ctx,
            state=fresh_state(schema), created_at=now, last_active_at=now,
        )
        self.sessions[sid] = sess
        question = schema.slots[0].question
        if cfg.empathy_enabled:
            # at session start the schema domain is the only situation cue
            question = rewrite_with_empathy(question, schema.domain)
        action = AgentAction(
            kind=ActionKind.ask, text=question, state_snapshot=sess.state,
            slot_id=schema.slots[0].id,
        )
        self._record_agent_turn(sess, action, 0.0)
        return sid, action

    def get_session(self, session_id: str) -> _Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSession(session_id) from None

    # -- turn handling ------------------------------------------------------

    def handle_user_turn(self, session_id: str, utterance: str) -> AgentAction:
        sess = self.get_session(session_id)
        with sess.lock:
            t0 = time.perf_counter()
            if sess.state.phase == Phase.terminated:
                raise SessionTerminated(
                    sess.state.termination_reason, self._wiki_url(sess)
                )
            if sess.state.phase == Phase.dispatched:
                raise SessionTerminated(TerminationReason.user_abort,
                                        self._wiki_url(sess))
            self._record_user_turn(sess, utterance)
            sess.state = replace(
                sess.state, user_turn_count=sess.state.user_turn_count + 1
            )
            if sess.state.phase == Phase.collecting:
                action = self._collecting_turn(sess, utterance)
            else:
                action = self._confirming_turn(sess, utterance)
            sess.last_utterance = utterance
            sess.last_active_at = datetime.now(timezone.utc).isoformat()
            self._record_agent_turn(sess, action, (time.perf_counter() - t0) * 1000)
            return action

    def _collecting_turn(self, sess: _Session, utterance: str) -> AgentAction:
        state = sess.state
        pending = [sess.schema.slot(sid) for sid in state.pending][:26]
        fills, failed = self._select_and_extract(sess, pending, utterance)
        for v in fills:
            state = apply_fill(state, v)

        # clarify target: first selected-but-failed slot, else (nothing
        # selected at all) the slot we are currently asking about
        clarify_target: Optional[str] = None
        if failed:
            clarify_target = failed[0]
        elif not fills:
            remaining = [s for s in state.pending
                         if sess.schema.slot(s).required] or list(state.pending)
            if remaining:
                clarify_target = remaining[0]
        if clarify_target is not None:
            counts = dict(state.clarify_count)
            counts[clarify_target] = counts.get(clarify_target, 0) + 1
            state = replace(state, clarify_count=counts)

        sess.state = state
        term = self._run_guardrails(sess, utterance)
        if term is not None:
            return self._terminate(sess, term)

        if clarify_target is not None:
            q = sess.schema.slot(clarify_target).question
            text = f"Could you tell me {q[0].lower()}{q[1:].rstrip('?')}?"
            return AgentAction(ActionKind.clarify, text, sess.state,
                               slot_id=clarify_target)

        required_left = [s for s in sess.state.pending
                         if sess.schema.slot(s).required]
        if required_left:
            return self._ask(sess, required_left[0], utterance)
        return self._confirm_summary(sess)

    def _confirming_turn(self, sess: _Session, utterance: str) -> AgentAction:
        term = self._run_guardrails(sess, utterance)
        if term is not None:
            return self._terminate(sess, term)
        if is_affirmative(utterance):
            return self._dispatch(sess)
        # correction: let selection over the whole schema name the slot
        slots = list(sess.schema.slots)[:26]
        candidates = tuple(
            SelectionCandidate(string.ascii_lowercase[i], s.id, s.question)
            for i, s in enumerate(slots)
        )
        sel = self.select_fn(SelectionRequest(utterance=utterance,
                                              candidates=candidates))
        target = None
        for cand in candidates:
            if cand.choice_label in sel.selected:
                target = cand
                break
        if target is None:
            return self._confirm_summary(sess, preface="Sorry, I did not catch that. ")
        # reopen the named slot
        filled = dict(sess.state.filled)
        filled.pop(target.slot_id, None)
        order = [s.id for s in sess.schema.slots]
        new_pending = tuple(
            sid for sid in order
            if sid not in filled and (sid in sess.state.pending or sid == target.slot_id)
        )
        sess.state = replace(sess.state, filled=filled, pending=new_pending,
                             phase=Phase.collecting)
        result = self.extract_fn(
            ExtractionRequest(question=target.question, utterance=utterance)
        )
        if result.span is not None:
            turn_index = self._current_user_turn_index(sess)
            sess.state = apply_fill(
                sess.state,
                SlotValue(slot_id=target.slot_id, raw_span=result.span.text,
                          source_turn=turn_index),
            )
            required_left = [s for s in sess.state.pending
                             if sess.schema.slot(s).required]
            if not required_left:
                return self._confirm_summary(sess)
        return self._ask(sess, target.slot_id, utterance)

    # -- helpers -------------------------------------------------------------

    def _select_and_extract(self, sess, pending, utterance):
        if not pending or not utterance.strip():
            return [], []
        candidates = tuple(
            SelectionCandidate(string.ascii_lowercase[i], s.id, s.question)
            for i, s in enumerate(pending)
        )
        sel = self.select_fn(SelectionRequest(utterance=utterance,
                                              candidates=candidates))
        turn_index = self._current_user_turn_index(sess)
        existing_spans = {v.raw_span for v in sess.state.filled.values()}
        fills: list[SlotValue] = []
        failed: list[str] = []
        for cand in candidates:
            if cand.choice_label not in sel.selected:
                continue
            result = self.extract_fn(
                ExtractionRequest(question=cand.question, utterance=utterance)
            )
            if result.span is None:
                failed.append(cand.slot_id)
                continue
            # first-write-wins: a span already claimed by another slot is
            # likely a duplicate-entity extraction error, ignore it
            if result.span.text in existing_spans or any(
                v.raw_span == result.span.text for v in fills
            ):
                continue
            fills.append(
                SlotValue(slot_id=cand.slot_id, raw_span=result.span.text,
                          source_turn=turn_index)
            )
        return fills, failed

    def _run_guardrails(self, sess: _Session, utterance: str):
        sentiment = None
        if sess.state.user_turn_count % sess.cfg.sentiment_period == 0:
            sentiment = self.sentiment_fn(utterance)
        return check_guardrails(sess.state, sentiment, sess.cfg)

    def _ask(self, sess: _Session, slot_id: str, last_utterance: str) -> AgentAction:
        question = sess.schema.slot(slot_id).question
        if sess.cfg.empathy_enabled:
            question = rewrite_with_empathy(question, last_utterance)
        return AgentAction(ActionKind.ask, question, sess.state, slot_id=slot_id)

    def _confirm_summary(self, sess: _Session, preface: str = "") -> AgentAction:
        # normalize everything we collected before showing it back
        filled = {}
        for sid, v in sess.state.filled.items():
            kind = sess.schema.slot(sid).value_kind
            nv = norm.normalize_value(v.raw_span, kind, sess.ctx)
            filled[sid] = replace(v, normalized=nv.canonical)
        sess.state = replace(sess.state, filled=filled, phase=Phase.confirming)
        lines = []
        for slot in sess.schema.slots:
            v = filled.get(slot.id)
            if v is None:
                continue
            shown = v.raw_span if v.normalized == v.raw_span else \
                f"{v.raw_span} -> {v.normalized}"
            lines.append(f"- {slot.name}: {shown}")
        text = (
            preface + "Please confirm the collected information:\n"
            + "\n".join(lines)
            + "\nReply 'yes' to confirm, or tell me what to change."
        )
        return AgentAction(ActionKind.confirm_summary, text, sess.state)

    def _dispatch(self, sess: _Session) -> AgentAction:
        values = {}
        for sid, v in sess.state.filled.items():
            slot = sess.schema.slot(sid)
            values[slot.name] = v.normalized if v.normalized is not None else v.raw_span
        req = DispatchRequest(
            dispatch_target=sess.schema.dispatch_target, values=values,
            session_id=sess.session_id, schema_id=sess.schema.id,
        )
        if self.fact_check is not None:
            failure = self.fact_check(req)
            if failure is not None:
                slot_id, message = failure
                filled = dict(sess.state.filled)
                filled.pop(slot_id, None)
                order = [s.id for s in sess.schema.slots]
                pending = tuple(sid for sid in order if sid not in filled)
                sess.state = replace(sess.state, filled=filled, pending=pending,
                                     phase=Phase.collecting)
                q = sess.schema.slot(slot_id).question
                return AgentAction(
                    ActionKind.ask, f"{message} {q}", sess.state, slot_id=slot_id
                )
        filled = {sid: replace(v, confirmed=True)
                  for sid, v in sess.state.filled.items()}
        sess.state = replace(sess.state, filled=filled)
        receipt = self.registry.dispatch(req)
        sess.state = replace(sess.state, phase=Phase.dispatched)
        return AgentAction(
            ActionKind.dispatched,
            "All set. Your request has been submitted.",
            sess.state, receipt=receipt,
        )

    def _terminate(self, sess: _Session, reason: TerminationReason) -> AgentAction:
        sess.state = replace(sess.state, phase=Phase.terminated,
                             termination_reason=reason)
        wiki = self._wiki_url(sess)
        text = "I am ending this conversation here."
        if wiki:
            text += f" You may find this page helpful: {wiki}"
        return AgentAction(ActionKind.terminated, text, sess.state,
                           reason=reason, wiki_url=wiki)

    def _wiki_url(self, sess: _Session) -> Optional[str]:
        return sess.cfg.wiki_links.get(sess.schema.domain)

    def _record_user_turn(self, sess: _Session, text: str):
        sess.turns.append(
            Turn(index=len(sess.turns), speaker=Speaker.user, text=text,
                 timestamp=(time.monotonic() - sess.started) * 1000)
        )

    def _record_agent_turn(self, sess: _Session, action: AgentAction,
                           latency_ms: float):
        sess.turns.append(
            Turn(index=len(sess.turns), speaker=Speaker.agent, text=action.text,
                 timestamp=(time.monotonic() - sess.started) * 1000,
                 latency_ms=latency_ms)
        )

    def _current_user_turn_index(self, sess: _Session) -> int:
        for turn in reversed(sess.turns):
            if turn.speaker == Speaker.user:
                return turn.index
        return 0
