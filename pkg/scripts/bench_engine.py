"""Measure per-turn engine overhead with zero-latency mock backends.

Prints nearest-rank p50/p90/p99 and the fraction of turns under the
2 second response budget. This isolates the dialogue loop itself from
model inference time.

Usage: python3 scripts/bench_engine.py [--turns 1000]
"""

import argparse

from hragent import metrics
from hragent.backends import ExtractionResult, ExtractionSpan, SelectionResult
from hragent.engine import ActionKind, DialogueEngine
from hragent.schema_model import Phase, SlotDef, TaskSchema


def make_schema():
    return TaskSchema(
        id="bench", domain="time off", dispatch_target="request_time_off",
        slots=(
            SlotDef(id="when", name="when",
                    question="When is the requested time off?"),
            SlotDef(id="kind", name="kind",
                    question="What type of time off is being requested?"),
        ),
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--turns", type=int, default=1000)
    args = parser.parse_args()

    schema = make_schema()
    engine = DialogueEngine(
        select_fn=lambda req: SelectionResult(
            frozenset({req.candidates[0].choice_label})
        ),
        extract_fn=lambda req: ExtractionResult(ExtractionSpan("monday", 0, 6)),
    )
    engine.registry.register(schema.dispatch_target)
    sid, _ = engine.start_session(schema)
    samples = []
    while len(samples) < args.turns:
        confirming = engine.get_session(sid).state.phase == Phase.confirming
        action = engine.handle_user_turn(sid, "yes" if confirming else "monday")
        samples.append(engine.get_session(sid).turns[-1].latency_ms)
        if action.kind in (ActionKind.dispatched, ActionKind.terminated):
            sid, _ = engine.start_session(schema)

    report = metrics.latency_report(samples)
    print(f"turns: {len(samples)}")
    print(f"p50_ms: {report.p50:.3f}")
    print(f"p90_ms: {report.p90:.3f}")
    print(f"p99_ms: {report.p99:.3f}")
    print(f"fraction_under_2000ms: {report.fraction_under(2000):.4f}")


if __name__ == "__main__":
    main()
