"""Task schemas, slots, dialogue state and transcripts.

These are the value types every other module speaks. All of them are
plain dataclasses treated as immutable values: state transitions build
new objects instead of mutating in place, so states can be shared
read-only across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional


class SchemaError(ValueError):
    """Raised when a schema document violates the schema format.

    ``location`` points at the offending element (e.g. ``slots[2].id``).
    """

    def __init__(self, message: str, location: str = ""):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class ValueKind(str, Enum):
    free_text = "free_text"
    date = "date"
    time = "time"
    money = "money"
    location = "location"
    category = "category"


class Phase(str, Enum):
    collecting = "collecting"
    confirming = "confirming"
    dispatched = "dispatched"
    terminated = "terminated"


class TerminationReason(str, Enum):
    repeat_limit = "repeat_limit"
    sentiment_limit = "sentiment_limit"
    user_abort = "user_abort"


class Speaker(str, Enum):
    user = "user"
    agent = "agent"


@dataclass(frozen=True)
class SlotDef:
    id: str
    name: str
    question: str
    value_kind: ValueKind = ValueKind.free_text
    required: bool = True
    category_options: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if not self.id:
            raise SchemaError("slot id must be non-empty")
        if not self.question:
            raise SchemaError("question must be non-empty", f"slot '{self.id}'")
        has_opts = bool(self.category_options)
        if (self.value_kind == ValueKind.category) != has_opts:
            raise SchemaError(
                "category_options must be present iff value_kind is category",
                f"slot '{self.id}'",
            )


@dataclass(frozen=True)
class TaskSchema:
    id: str
    domain: str
    dispatch_target: str
    slots: tuple[SlotDef, ...]

    def __post_init__(self):
        if not self.slots:
            raise SchemaError("empty schema: at least one slot required", self.id)
        seen = set()
        for i, s in enumerate(self.slots):
            if s.id in seen:
                raise SchemaError(f"duplicate slot id '{s.id}'", f"slots[{i}].id")
            seen.add(s.id)
        if not any(s.required for s in self.slots):
            raise SchemaError("schema needs at least one required slot", self.id)

    def slot(self, slot_id: str) -> SlotDef:
        for s in self.slots:
            if s.id == slot_id:
                return s
        raise KeyError(slot_id)

    @property
    def required_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.slots if s.required)


@dataclass(frozen=True)
class SlotValue:
    slot_id: str
    raw_span: str
    source_turn: int
    normalized: Optional[str] = None
    confirmed: bool = False


@dataclass(frozen=True)
class DialogueState:
    schema_id: str
    filled: dict[str, SlotValue] = field(default_factory=dict)
    pending: tuple[str, ...] = ()
    clarify_count: dict[str, int] = field(default_factory=dict)
    user_turn_count: int = 0
    phase: Phase = Phase.collecting
    termination_reason: Optional[TerminationReason] = None

    def __post_init__(self):
        overlap = set(self.filled) & set(self.pending)
        if overlap:
            raise ValueError(f"slots both filled and pending: {sorted(overlap)}")
        if (self.phase == Phase.terminated) != (self.termination_reason is not None):
            raise ValueError("phase is terminated iff termination_reason is set")


def fresh_state(schema: TaskSchema) -> DialogueState:
    return DialogueState(
        schema_id=schema.id,
        pending=tuple(s.id for s in schema.slots),
        clarify_count={s.id: 0 for s in schema.slots},
    )


def apply_fill(state: DialogueState, v: SlotValue) -> DialogueState:
    """Move a slot from pending to filled; pure, returns a new state."""
    if v.slot_id in state.filled:
        raise ValueError(f"slot '{v.slot_id}' already filled")
    if v.slot_id not in state.pending:
        raise ValueError(f"slot '{v.slot_id}' unknown or not pending")
    filled = dict(state.filled)
    filled[v.slot_id] = v
    clarify = dict(state.clarify_count)
    clarify[v.slot_id] = 0
    return replace(
        state,
        filled=filled,
        pending=tuple(s for s in state.pending if s != v.slot_id),
        clarify_count=clarify,
    )


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: Speaker
    text: str
    timestamp: float  # ms since session start
    latency_ms: Optional[float] = None

    def __post_init__(self):
        if self.latency_ms is not None and self.latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")


@dataclass(frozen=True)
class Transcript:
    schema_id: str
    turns: tuple[Turn, ...] = ()
    gold_states: Optional[tuple[dict[str, str], ...]] = None
    final_state: Optional[DialogueState] = None

    def __post_init__(self):
        indices = [t.index for t in self.turns]
        if indices != sorted(set(indices)):
            raise ValueError("turn indices must be strictly increasing")
        if self.gold_states is not None:
            n_user = sum(1 for t in self.turns if t.speaker == Speaker.user)
            if len(self.gold_states) != n_user:
                raise ValueError("gold_states must have one entry per user turn")


# --- serialization ----------------------------------------------------------

_VALUE_KINDS = {k.value for k in ValueKind}


def parse_schema(doc: str) -> TaskSchema:
    """Parse the JSON schema file format into a validated TaskSchema."""
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as e:
        raise SchemaError(f"malformed document: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError("malformed document: top level must be an object")
    for key in ("id", "domain", "dispatch_target", "slots"):
        if key not in data:
            raise SchemaError(f"missing field '{key}'")
    raw_slots = data["slots"]
    if not isinstance(raw_slots, list):
        raise SchemaError("must be a list", "slots")
    if not raw_slots:
        raise SchemaError("empty schema: at least one slot required", "slots")
    slots = []
    for i, raw in enumerate(raw_slots):
        loc = f"slots[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError("slot must be an object", loc)
        for key in ("id", "name", "question"):
            if key not in raw:
                raise SchemaError(f"missing field '{key}'", loc)
        kind = raw.get("value_kind", "free_text")
        if kind not in _VALUE_KINDS:
            raise SchemaError(f"unknown value_kind '{kind}'", f"{loc}.value_kind")
        opts = raw.get("category_options")
        try:
            slots.append(
                SlotDef(
                    id=raw["id"],
                    name=raw["name"],
                    question=raw["question"],
                    value_kind=ValueKind(kind),
                    required=bool(raw.get("required", True)),
                    category_options=tuple(opts) if opts else None,
                )
            )
        except SchemaError as e:
            raise SchemaError(str(e), loc) from e
    return TaskSchema(
        id=data["id"],
        domain=data["domain"],
        dispatch_target=data["dispatch_target"],
        slots=tuple(slots),
    )


def serialize_schema(s: TaskSchema) -> str:
    slots = []
    for sd in s.slots:
        d = {
            "id": sd.id,
            "name": sd.name,
            "question": sd.question,
            "value_kind": sd.value_kind.value,
            "required": sd.required,
        }
        if sd.category_options:
            d["category_options"] = list(sd.category_options)
        slots.append(d)
    return json.dumps(
        {
            "id": s.id,
            "domain": s.domain,
            "dispatch_target": s.dispatch_target,
            "slots": slots,
        },
        indent=2,
    )


def parse_transcript(doc: str) -> Transcript:
    """Parse the JSON transcript file format."""
    data = json.loads(doc)
    turns = tuple(
        Turn(
            index=t["index"],
            speaker=Speaker(t["speaker"]),
            text=t["text"],
            timestamp=t.get("timestamp", 0.0),
            latency_ms=t.get("latency_ms"),
        )
        for t in data.get("turns", [])
    )
    gold = data.get("gold_states")
    return Transcript(
        schema_id=data["schema_id"],
        turns=turns,
        gold_states=tuple(dict(g) for g in gold) if gold is not None else None,
    )


def serialize_transcript(t: Transcript) -> str:
    turns = []
    for turn in t.turns:
        d = {
            "index": turn.index,
            "speaker": turn.speaker.value,
            "text": turn.text,
            "timestamp": turn.timestamp,
        }
        if turn.latency_ms is not None:
            d["latency_ms"] = turn.latency_ms
        turns.append(d)
    out = {"schema_id": t.schema_id, "turns": turns}
    if t.gold_states is not None:
        out["gold_states"] = [dict(g) for g in t.gold_states]
    return json.dumps(out, indent=2)
