import pytest

from hragent import normalize as norm
from hragent.backends import SentimentScore
from hragent.engine import (
    ActionKind,
    AgentAction,
    DialogueEngine,
    DispatchError,
    EngineConfig,
    HandlerRegistry,
    SessionTerminated,
    check_guardrails,
    is_affirmative,
    rewrite_with_empathy,
)
from hragent.schema_model import (
    DialogueState,
    Phase,
    SlotDef,
    TaskSchema,
    TerminationReason,
    fresh_state,
)

from conftest import TIME_OFF_UTTERANCE

REF = norm.ReferenceContext.from_iso("2023-10-13")


def make_engine(**kwargs):
    engine = DialogueEngine(**kwargs)
    engine.registry.register("request_time_off")
    engine.registry.register("file_medical_claim")
    return engine


class TestStartSession:
    def test_first_question(self, time_off_schema):
        engine = make_engine()
        sid, action = engine.start_session(time_off_schema)
        assert action.kind == ActionKind.ask
        assert action.text == "When is the requested time off?"

    def test_single_slot_schema(self):
        schema = TaskSchema(id="s", domain="d", dispatch_target="request_time_off",
                            slots=(SlotDef(id="x", name="x", question="What is x?"),))
        engine = make_engine()
        _, action = engine.start_session(schema)
        assert action.slot_id == "x"

    def test_empathy_on_medical_domain(self, medical_claim_schema):
        engine = make_engine()
        _, action = engine.start_session(
            medical_claim_schema, cfg=EngineConfig(empathy_enabled=True)
        )
        assert action.text.startswith("I understand that medical emergencies")


class TestHandleUserTurn:
    def test_time_off_utterance_fills_two_slots(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        action = engine.handle_user_turn(sid, TIME_OFF_UTTERANCE)
        filled = action.state_snapshot.filled
        assert set(filled) == {"timeOffStartDate", "timeOffType"}
        assert filled["timeOffStartDate"].raw_span == "next Monday"
        assert filled["timeOffType"].raw_span == "vacation day"

    def test_asks_next_required_slot_when_some_remain(self):
        schema = TaskSchema(
            id="s", domain="d", dispatch_target="request_time_off",
            slots=(
                SlotDef(id="start", name="start",
                        question="When is the requested time off?"),
                SlotDef(id="kind", name="kind",
                        question="What type of time off is being requested?"),
                SlotDef(id="approver", name="approver",
                        question="Which manager approves the request?"),
            ),
        )
        engine = make_engine()
        sid, _ = engine.start_session(schema, ctx=REF)
        action = engine.handle_user_turn(sid, TIME_OFF_UTTERANCE)
        assert action.kind == ActionKind.ask
        assert action.slot_id == "approver"

    def test_non_informative_utterance_clarifies(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        action = engine.handle_user_turn(sid, "hmm okay")
        assert action.kind == ActionKind.clarify
        assert action.state_snapshot.clarify_count[action.slot_id] == 1
        assert action.text.startswith("Could you tell me")

    def test_confirm_summary_shows_normalized(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        action = engine.handle_user_turn(
            sid, "I am taking next Thursday off as a vacation day."
        )
        assert action.kind == ActionKind.confirm_summary
        assert "next Thursday -> 2023-10-19" in action.text
        assert action.state_snapshot.phase == Phase.confirming

    def test_unknown_session(self):
        with pytest.raises(KeyError):
            make_engine().handle_user_turn("nope", "hello")

    def test_message_after_termination_raises(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        for _ in range(4):
            action = engine.handle_user_turn(sid, "hmm")
        assert action.kind == ActionKind.terminated
        with pytest.raises(SessionTerminated):
            engine.handle_user_turn(sid, "hello again")

    def test_affirmative_dispatches(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        engine.handle_user_turn(sid, "I am taking next Thursday off as a vacation day.")
        action = engine.handle_user_turn(sid, "yes")
        assert action.kind == ActionKind.dispatched
        assert action.receipt["handler_id"] == "request_time_off"
        assert action.state_snapshot.phase == Phase.dispatched

    def test_correction_reopens_slot(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        engine.handle_user_turn(sid, "I am taking next Thursday off as a vacation day.")
        action = engine.handle_user_turn(
            sid, "actually the requested time off is next Friday"
        )
        # reopened, refilled, back to confirmation with the new value
        assert action.kind == ActionKind.confirm_summary
        assert action.state_snapshot.filled["timeOffStartDate"].raw_span == "next Friday"

    def test_filled_never_decreases_while_collecting(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        sizes = []
        for utt in ["hmm", "I am taking next Monday off", "no idea", "hmm"]:
            action = engine.handle_user_turn(sid, utt)
            if action.state_snapshot.phase != Phase.collecting:
                break
            sizes.append(len(action.state_snapshot.filled))
        assert sizes == sorted(sizes)


class TestGuardrails:
    def cfg(self):
        return EngineConfig()

    def state_with_counts(self, counts, turn):
        return DialogueState(schema_id="s", pending=tuple(counts),
                             clarify_count=counts, user_turn_count=turn)

    def test_repeat_limit(self):
        state = self.state_with_counts({"start_date": 4}, turn=4)
        assert check_guardrails(state, None, self.cfg()) == TerminationReason.repeat_limit

    def test_sentiment_limit_at_scheduled_turn(self):
        state = self.state_with_counts({"a": 0}, turn=4)
        reason = check_guardrails(state, SentimentScore(0.6), self.cfg())
        assert reason == TerminationReason.sentiment_limit

    def test_sentiment_below_threshold(self):
        state = self.state_with_counts({"a": 0}, turn=4)
        assert check_guardrails(state, SentimentScore(0.4), self.cfg()) is None

    def test_unscheduled_sentiment_not_passed(self):
        # the caller skips sentiment off-schedule; reason must be None
        state = self.state_with_counts({"a": 0}, turn=3)
        assert check_guardrails(state, None, self.cfg()) is None

    def test_fourth_clarification_terminates(self, time_off_schema):
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        kinds = [engine.handle_user_turn(sid, "hmm").kind for _ in range(4)]
        assert kinds == [ActionKind.clarify] * 3 + [ActionKind.terminated]
        state = engine.get_session(sid).state
        assert state.termination_reason == TerminationReason.repeat_limit
        assert max(state.clarify_count.values()) == 4

    def test_negative_sentiment_terminates_at_turn_four(self, time_off_schema):
        engine = make_engine(sentiment_fn=lambda text: SentimentScore(0.9))
        cfg = EngineConfig(clarify_limit=10)
        sid, _ = engine.start_session(time_off_schema, cfg=cfg, ctx=REF)
        kinds = []
        for _ in range(4):
            kinds.append(engine.handle_user_turn(sid, "hmm").kind)
        assert kinds[:3] == [ActionKind.clarify] * 3
        assert kinds[3] == ActionKind.terminated
        assert engine.get_session(sid).state.termination_reason == \
            TerminationReason.sentiment_limit

    def test_termination_carries_wiki_link(self, time_off_schema):
        cfg = EngineConfig(wiki_links={"time off": "https://wiki.local/timeoff"})
        engine = make_engine()
        sid, _ = engine.start_session(time_off_schema, cfg=cfg, ctx=REF)
        for _ in range(4):
            action = engine.handle_user_turn(sid, "hmm")
        assert action.wiki_url == "https://wiki.local/timeoff"
        assert "https://wiki.local/timeoff" in action.text


class TestEmpathy:
    def test_known_pair_exact_rewrite(self):
        out = rewrite_with_empathy(
            "Can you please provide details about the incident?",
            "I had a medical emergency last week and need to file a claim.",
        )
        assert out == ("I understand that medical emergencies can be stressful. "
                       "Please share the incident details so we can assist you.")

    def test_disabled_returns_unchanged(self, time_off_schema):
        engine = make_engine()
        sid, action = engine.start_session(
            time_off_schema, cfg=EngineConfig(empathy_enabled=False)
        )
        assert action.text == "When is the requested time off?"

    def test_generic_fallback(self):
        out = rewrite_with_empathy("What is your badge number?",
                                   "I lost my badge somewhere on campus.")
        assert out.endswith("What is your badge number?")
        assert len(out) > len("What is your badge number?")

    def test_known_situations_have_acknowledgments(self):
        cases = {
            "I've received a medical bill that seems incorrect.":
                "Dealing with medical bills can be confusing.",
            "I'm getting a '404 Not Found' error on my website. What should I do?":
                "Website errors can be frustrating.",
            "My code won't compile, and I don't understand the error message.":
                "Coding errors can be challenging.",
        }
        for utterance, ack in cases.items():
            assert rewrite_with_empathy("Next question?", utterance).startswith(ack)


class TestAffirmative:
    @pytest.mark.parametrize("text,expected", [
        ("yes", True), ("Yes.", True), ("correct", True), ("yes, confirm", True),
        ("no", False), ("change the date", False), ("", False),
        ("yes but change the date", False),
    ])
    def test_word_list(self, text, expected):
        assert is_affirmative(text) is expected


class TestDispatch:
    def test_unknown_target(self):
        registry = HandlerRegistry()
        from hragent.engine import DispatchRequest

        with pytest.raises(DispatchError):
            registry.dispatch(DispatchRequest("nope", {}, "sid", "schema"))

    def test_audit_record_written(self, tmp_path, time_off_schema):
        audit = tmp_path / "audit.jsonl"
        registry = HandlerRegistry(audit_path=str(audit))
        registry.register("request_time_off")
        engine = DialogueEngine(registry=registry)
        sid, _ = engine.start_session(time_off_schema, ctx=REF)
        engine.handle_user_turn(sid, "I am taking next Thursday off as a vacation day.")
        action = engine.handle_user_turn(sid, "yes")
        assert action.receipt["payload_hash"]
        assert audit.exists() and "request_time_off" in audit.read_text()

    def test_fact_check_failure_reopens_slot(self, medical_claim_schema):
        providers = {"dr acme"}

        def fact_check(req):
            name = req.values.get("providerName", "").lower()
            if name not in providers:
                return "providerName", "I could not find that provider in our records."
            return None

        engine = DialogueEngine(fact_check=fact_check)
        engine.registry.register("file_medical_claim")
        sid, _ = engine.start_session(medical_claim_schema, ctx=REF)
        engine.handle_user_turn(
            sid,
            "The medical incident happened on October 2nd, the visit with "
            "provider Dr Unknown cost $125.50 in claim amount.",
        )
        sess = engine.get_session(sid)
        assert sess.state.phase == Phase.confirming
        action = engine.handle_user_turn(sid, "yes")
        assert action.kind == ActionKind.ask
        assert action.slot_id == "providerName"
        assert sess.state.phase == Phase.collecting
