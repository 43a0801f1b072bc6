"""Scripted end-to-end demo of the time-off dialogue.

Runs the full loop with local baseline backends: first question,
slot filling from one utterance, confirmation summary with normalized
values, and dispatch with a receipt. No network access is needed.

Usage: python3 scripts/demo_dialogue.py
"""

from pathlib import Path

from hragent import normalize as norm
from hragent.engine import ActionKind, DialogueEngine
from hragent.schema_model import parse_schema

ROOT = Path(__file__).parent.parent


def main():
    schema = parse_schema((ROOT / "schemas" / "time_off.json").read_text())
    engine = DialogueEngine()
    engine.registry.register(schema.dispatch_target)
    ctx = norm.ReferenceContext.from_iso("2023-10-13")
    sid, action = engine.start_session(schema, ctx=ctx)
    print(f"agent: {action.text}")
    for utterance in [
        "I am taking next Thursday off as a vacation day.",
        "yes",
    ]:
        print(f"user:  {utterance}")
        action = engine.handle_user_turn(sid, utterance)
        print(f"agent: {action.text}")
        if action.kind == ActionKind.dispatched:
            print(f"receipt: {action.receipt}")


if __name__ == "__main__":
    main()
