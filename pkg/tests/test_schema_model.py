import json

import pytest
from hypothesis import given, strategies as st

from hragent.schema_model import (
    SchemaError,
    SlotDef,
    SlotValue,
    TaskSchema,
    ValueKind,
    apply_fill,
    fresh_state,
    parse_schema,
    serialize_schema,
)


def make_schema(slot_ids, required=None):
    required = required or set(slot_ids)
    return TaskSchema(
        id="t", domain="d", dispatch_target="h",
        slots=tuple(
            SlotDef(id=s, name=s, question=f"What is {s}?", required=s in required)
            for s in slot_ids
        ),
    )


class TestParseSchema:
    def test_time_off_schema(self):
        doc = json.dumps({
            "id": "time_off", "domain": "time off", "dispatch_target": "request_time_off",
            "slots": [
                {"id": "timeOffStartDate", "name": "timeOffStartDate",
                 "question": "When is the requested time off?", "value_kind": "date"},
                {"id": "timeOffEndDate", "name": "timeOffEndDate",
                 "question": "When does the time off end?", "value_kind": "date"},
                {"id": "reason", "name": "reason",
                 "question": "What is the reason for the time off?"},
                {"id": "name", "name": "name", "question": "What is your name?"},
            ],
        })
        schema = parse_schema(doc)
        assert len(schema.slots) == 4
        assert [s.id for s in schema.slots] == [
            "timeOffStartDate", "timeOffEndDate", "reason", "name"
        ]

    def test_empty_schema(self):
        doc = json.dumps({"id": "x", "domain": "d", "dispatch_target": "h", "slots": []})
        with pytest.raises(SchemaError, match="empty schema"):
            parse_schema(doc)

    def test_duplicate_slot_id(self):
        doc = json.dumps({
            "id": "x", "domain": "d", "dispatch_target": "h",
            "slots": [
                {"id": "reason", "name": "r", "question": "Why?"},
                {"id": "reason", "name": "r2", "question": "Why again?"},
            ],
        })
        with pytest.raises(SchemaError, match="reason"):
            parse_schema(doc)

    def test_malformed_document(self):
        with pytest.raises(SchemaError, match="malformed"):
            parse_schema("{not json")

    def test_category_without_options(self):
        with pytest.raises(SchemaError, match="category_options"):
            SlotDef(id="t", name="t", question="Which?", value_kind=ValueKind.category)

    def test_category_options_roundtrip(self):
        schema = TaskSchema(
            id="t", domain="d", dispatch_target="h",
            slots=(SlotDef(id="kind", name="kind", question="Which kind?",
                           value_kind=ValueKind.category,
                           category_options=("sick", "vacation", "personal")),),
        )
        again = parse_schema(serialize_schema(schema))
        assert again.slots[0].category_options == ("sick", "vacation", "personal")


class TestSerializeRoundTrip:
    def test_round_trip_identity(self, time_off_schema):
        assert parse_schema(serialize_schema(time_off_schema)) == time_off_schema

    def test_round_trip_preserves_order(self):
        schema = make_schema(["zeta", "alpha", "mid"])
        again = parse_schema(serialize_schema(schema))
        assert [s.id for s in again.slots] == ["zeta", "alpha", "mid"]

    @given(
        st.lists(st.text(alphabet="abcdefgh", min_size=1, max_size=6),
                 min_size=1, max_size=8, unique=True)
    )
    def test_round_trip_property(self, slot_ids):
        schema = make_schema(slot_ids)
        assert parse_schema(serialize_schema(schema)) == schema


class TestApplyFill:
    def test_fill_moves_slot(self):
        schema = make_schema(["a", "b"])
        state = fresh_state(schema)
        new = apply_fill(state, SlotValue(slot_id="a", raw_span="x", source_turn=0))
        assert "a" in new.filled and "a" not in new.pending
        assert len(new.pending) == 1
        # original untouched
        assert "a" in state.pending

    def test_fill_already_filled(self):
        schema = make_schema(["a"])
        state = apply_fill(fresh_state(schema),
                           SlotValue(slot_id="a", raw_span="x", source_turn=0))
        with pytest.raises(ValueError, match="already filled"):
            apply_fill(state, SlotValue(slot_id="a", raw_span="y", source_turn=1))

    def test_fill_unknown_slot(self):
        state = fresh_state(make_schema(["a"]))
        with pytest.raises(ValueError, match="unknown"):
            apply_fill(state, SlotValue(slot_id="zzz", raw_span="x", source_turn=0))

    def test_fill_last_required_empties_required_pending(self):
        schema = make_schema(["a", "b"], required={"a"})
        state = apply_fill(fresh_state(schema),
                           SlotValue(slot_id="a", raw_span="x", source_turn=0))
        required_left = [s for s in state.pending if schema.slot(s).required]
        assert required_left == []

    @given(st.permutations(["a", "b", "c", "d"]))
    def test_filled_plus_pending_is_constant(self, fill_order):
        schema = make_schema(["a", "b", "c", "d"])
        state = fresh_state(schema)
        for i, slot_id in enumerate(fill_order):
            state = apply_fill(
                state, SlotValue(slot_id=slot_id, raw_span="v", source_turn=i)
            )
            assert len(state.filled) + len(state.pending) == 4
