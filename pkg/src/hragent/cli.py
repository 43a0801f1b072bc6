"""Command-line entry points: chat, serve, eval, bench, gen, filter, validate."""

from __future__ import annotations

import csv
import json
import os
import sys
from pathlib import Path

import click

from . import datagen, metrics
from . import normalize as norm
from .engine import ActionKind, DialogueEngine, EngineConfig
from .schema_model import parse_schema


@click.group()
def main():
    """Confidential, local-first HR dialogue engine."""


def _format_pairs(pairs: list[tuple[str, object]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(dict(pairs), indent=2)
    if fmt == "csv":
        return "\n".join(f"{k},{v}" for k, v in pairs)
    return "\n".join(f"{k}: {v}" for k, v in pairs)


FORMAT_OPTION = click.option(
    "--format", "fmt", type=click.Choice(["text", "csv", "json"]), default="text"
)


# --- chat -----------------------------------------------------------------------


@main.command()
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--empathy/--no-empathy", default=False)
@click.option("--reference-date", default=None,
              help="ISO date/datetime used to resolve relative dates.")
def chat(schema_path, empathy, reference_date):
    """Terminal REPL against an in-process engine."""
    schema = parse_schema(Path(schema_path).read_text())
    engine = DialogueEngine()
    engine.registry.register(schema.dispatch_target)
    cfg = EngineConfig(empathy_enabled=empathy)
    ctx = norm.ReferenceContext.from_iso(reference_date) if reference_date else None
    sid, action = engine.start_session(schema, cfg=cfg, ctx=ctx)
    click.echo(f"agent: {action.text}")
    while action.kind not in (ActionKind.dispatched, ActionKind.terminated):
        try:
            utterance = click.prompt("you", prompt_suffix=": ")
        except (EOFError, click.Abort):
            break
        action = engine.handle_user_turn(sid, utterance)
        click.echo(f"agent: {action.text}")


# --- serve ----------------------------------------------------------------------


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8700, type=int)
@click.option("--schema-dir", required=True, type=click.Path(exists=True))
@click.option("--persist-dir", default=None, type=click.Path())
@click.option("--backend-url", default=None,
              help="Remote backend base URL; default is fully local.")
@click.option("--idle-timeout", default=1800.0, type=float)
def serve(host, port, schema_dir, persist_dir, backend_url, idle_timeout):
    """Run the HTTP session service."""
    import uvicorn

    from .service import ServiceConfig, SessionService, make_app

    backend_url = backend_url or os.environ.get("HRAGENT_BACKEND_URL")
    cfg = ServiceConfig(schema_dir=schema_dir, host=host, port=port,
                        backend_url=backend_url, persistence_dir=persist_dir,
                        idle_timeout_s=idle_timeout)
    uvicorn.run(make_app(SessionService(cfg)), host=host, port=port)


# --- eval -----------------------------------------------------------------------


@main.group("eval")
def eval_group():
    """Metric reports over prediction/label files."""


def _read_jsonl(path):
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


@eval_group.command("dst")
@click.option("--pred", required=True, type=click.Path(exists=True))
@click.option("--gold", required=True, type=click.Path(exists=True))
@click.option("--macro/--no-macro", default=False)
@FORMAT_OPTION
def eval_dst(pred, gold, macro, fmt):
    """JGA/AGA from per-turn slot maps (one JSON object per line)."""
    result = metrics.dst_eval(_read_jsonl(pred), _read_jsonl(gold),
                              include_macro=macro)
    pairs = [("jga", f"{result.jga:.3f}"), ("aga", f"{result.aga:.3f}"),
             ("turns", result.turn_count),
             ("active_slots", result.active_slot_count)]
    if result.aga_macro is not None:
        pairs.append(("aga_macro", f"{result.aga_macro:.3f}"))
    click.echo(_format_pairs(pairs, fmt))


@eval_group.command("select")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="JSONL with per-line {gold: [...], pred: [...]}.")
@FORMAT_OPTION
def eval_select(data, fmt):
    """Multi-label selection precision/recall/F1, micro and macro."""
    rows = _read_jsonl(data)
    result = metrics.selection_prf(
        [(set(r["gold"]), set(r["pred"])) for r in rows]
    )
    pairs = [
        ("micro_precision", f"{result.micro_precision:.3f}"),
        ("micro_recall", f"{result.micro_recall:.3f}"),
        ("micro_f1", f"{result.micro_f1:.3f}"),
        ("macro_precision", f"{result.macro_precision:.3f}"),
        ("macro_recall", f"{result.macro_recall:.3f}"),
        ("macro_f1", f"{result.macro_f1:.3f}"),
    ]
    click.echo(_format_pairs(pairs, fmt))


@eval_group.command("extract")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="JSONL with per-line {candidate, reference}.")
@FORMAT_OPTION
def eval_extract(data, fmt):
    """Corpus-average Rouge-1 / Rouge-L over extracted spans."""
    rows = _read_jsonl(data)
    if not rows:
        raise click.ClickException("no examples")
    scores = [metrics.rouge(r["candidate"], r["reference"]) for r in rows]
    n = len(scores)
    pairs = [
        ("rouge1_f", f"{sum(s.rouge1_f for s in scores) / n:.3f}"),
        ("rougeL_f", f"{sum(s.rougeL_f for s in scores) / n:.3f}"),
        ("examples", n),
    ]
    click.echo(_format_pairs(pairs, fmt))


# --- bench ----------------------------------------------------------------------


@main.command()
@click.option("--turns", default=100, type=int)
@click.option("--mock-latency-file", default=None, type=click.Path(exists=True),
              help="CSV of latency samples in ms, one per row.")
@click.option("--schema", "schema_path", default=None, type=click.Path(exists=True))
@click.option("--script", "script_path", default=None, type=click.Path(exists=True),
              help="Utterance lines replayed cyclically against the engine.")
@click.option("--threshold-ms", default=2000.0, type=float)
@click.option("--histogram", "histogram_path", default=None, type=click.Path())
@FORMAT_OPTION
def bench(turns, mock_latency_file, schema_path, script_path, threshold_ms,
          histogram_path, fmt):
    """Latency distribution report from replayed dialogues or a sample file."""
    if mock_latency_file:
        samples = []
        with open(mock_latency_file) as f:
            for row in csv.reader(f):
                if row and row[0].replace(".", "", 1).isdigit():
                    samples.append(float(row[0]))
    else:
        if not (schema_path and script_path):
            raise click.ClickException(
                "need --schema and --script, or --mock-latency-file"
            )
        schema = parse_schema(Path(schema_path).read_text())
        lines = [l.strip() for l in Path(script_path).read_text().splitlines()
                 if l.strip()]
        samples = []
        engine = DialogueEngine()
        engine.registry.register(schema.dispatch_target)
        sid, _ = engine.start_session(schema)
        for i in range(turns):
            action = engine.handle_user_turn(sid, lines[i % len(lines)])
            sess = engine.get_session(sid)
            samples.append(sess.turns[-1].latency_ms)
            if action.kind in (ActionKind.dispatched, ActionKind.terminated):
                sid, _ = engine.start_session(schema)
    report = metrics.latency_report(samples)
    threshold_key = f"fraction_under_{threshold_ms:g}ms"
    pairs = [
        ("samples", len(report.samples)),
        ("p50_ms", f"{report.p50:g}"),
        ("p90_ms", f"{report.p90:g}"),
        ("p99_ms", f"{report.p99:g}"),
        (threshold_key, f"{report.fraction_under(threshold_ms):g}"),
    ]
    click.echo(_format_pairs(pairs, fmt))
    if histogram_path:
        Path(histogram_path).write_text(
            metrics.latency_histogram_csv(report.samples)
        )


# --- datagen --------------------------------------------------------------------


@main.command()
@click.option("--seed", default=0, type=int)
@click.option("--number1", default=4, type=int)
@click.option("--number2", default=2, type=int)
@click.option("--dry-run", is_flag=True, help="Print the prompt without any network.")
@click.option("--backend-url", default=None)
@click.option("--out", "out_path", default=None, type=click.Path())
def gen(seed, number1, number2, dry_run, backend_url, out_path):
    """Build the scenario-generation prompt; optionally call the backend."""
    spec = datagen.GenSpec(number1=number1, number2=number2)
    prompt = datagen.build_prompt(spec, rng_seed=seed)
    if dry_run:
        click.echo(prompt)
        return
    backend_url = backend_url or os.environ.get("HRAGENT_BACKEND_URL")
    if not backend_url:
        raise click.ClickException("no backend configured; use --dry-run or "
                                   "--backend-url / HRAGENT_BACKEND_URL")
    from .backends import RemoteBackend

    text = RemoteBackend(backend_url).generate(prompt, spec.sampling)
    scenarios, diagnostics = datagen.parse_scenarios(text)
    out = open(out_path, "w") if out_path else sys.stdout
    for s in scenarios:
        out.write(datagen.scenario_to_json(s) + "\n")
    if out_path:
        out.close()
    for d in diagnostics:
        click.echo(f"warning: {d}", err=True)


@main.command("filter")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--rejects", "rejects_path", default=None, type=click.Path())
@click.option("--dedup-threshold", default=0.8, type=float)
def filter_cmd(in_path, out_path, rejects_path, dedup_threshold):
    """Apply the cleaning filters to a JSONL scenario file."""
    kept = rejected = 0
    with open(in_path) as fin, open(out_path, "w") as fout:
        rej = open(rejects_path, "w") if rejects_path else None
        for line in fin:
            if not line.strip():
                continue
            scenario = datagen.scenario_from_json(line)
            verdict = datagen.filter_scenario(scenario, dedup_threshold)
            if verdict.kept:
                fout.write(datagen.scenario_to_json(scenario, verdict) + "\n")
                kept += 1
            else:
                rejected += 1
                if rej:
                    rej.write(datagen.scenario_to_json(scenario, verdict) + "\n")
        if rej:
            rej.close()
    click.echo(f"kept {kept}, rejected {rejected}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--corrected", is_flag=True,
              help="Use corrected spelling in the validation template.")
@click.option("--batch", is_flag=True, help="Group 50 triples per prompt.")
def validate(in_path, corrected, batch):
    """Emit validation prompts for (question, utterance, answer) triples."""
    triples = []
    with open(in_path) as f:
        for line in f:
            if not line.strip():
                continue
            s = datagen.scenario_from_json(line)
            questions = dict(s.questions)
            for label, answer in zip(sorted(s.output1), s.output2):
                if label in questions:
                    triples.append((questions[label], s.utterance, answer))
    if batch:
        for i in range(0, len(triples), 50):
            click.echo(datagen.build_batch_validation_prompt(
                triples[i:i + 50], corrected=corrected))
            click.echo()
    else:
        for q, t, a in triples:
            click.echo(datagen.build_validation_prompt(q, t, a, corrected=corrected))


if __name__ == "__main__":
    main()
