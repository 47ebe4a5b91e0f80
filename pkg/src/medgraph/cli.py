"""Command-line surface.

State lives in a data directory (default ``data``, overridable with
--data-dir or the DKG_DATA_DIR environment variable). Exit codes: 0 on
success, 1 on a domain error (one machine-parseable JSON error line on
stderr), 2 on usage errors.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .engine import (
    Engine,
    EngineConfig,
    build_demo_engine,
    evaluate_world,
    resolve_data_dir,
)
from .errors import MedGraphError
from .evalkit import WorldSizes, generate_world
from .extraction import Document
from .feedback import FeedbackEvent, LikertScores
from .graph import KnowledgeGraph
from .reasoning import Budget, PatientProfile, UtilityWeights


def _fail(exc: MedGraphError) -> None:
    click.echo(json.dumps({"error": exc.code, "detail": str(exc)}), err=True)
    sys.exit(1)


def _load_engine(data_dir: str | None) -> Engine:
    root = Path(resolve_data_dir(data_dir))
    if not (root / "engine.cfg").exists():
        raise click.UsageError(
            f"no engine state in {root}; run `medgraph init` first"
        )
    return Engine.load(root)


@click.group()
def main() -> None:
    """Dynamic medical knowledge graph engine."""


@main.command()
@click.option("--data-dir", default=None, help="State directory (default: data).")
@click.option("--demo", is_flag=True, help="Seed the demo graph and lexicon.")
@click.option(
    "--from-snapshot",
    "snapshot_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="Initialize the graph from an exported snapshot.",
)
def init(data_dir: str | None, demo: bool, snapshot_path: str | None) -> None:
    """Create a fresh engine state directory."""
    root = resolve_data_dir(data_dir)
    cfg = EngineConfig(data_dir=root)
    try:
        if demo:
            engine = build_demo_engine(cfg)
        else:
            engine = Engine(cfg)
        if snapshot_path:
            engine.graph = KnowledgeGraph.load(Path(snapshot_path).read_text())
        engine.save(root)
    except MedGraphError as exc:
        _fail(exc)
    click.echo(json.dumps({"initialized": str(root), "demo": demo}))


@main.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", default=None)
def ingest(corpus: str, data_dir: str | None) -> None:
    """Ingest a line-delimited corpus (one JSON document per line)."""
    engine = _load_engine(data_dir)
    documents = []
    try:
        for line in Path(corpus).read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            documents.append(
                Document(
                    doc_id=entry["doc_id"],
                    source=entry.get("source", "clinical_report"),
                    text=entry["text"],
                    context_tag=entry.get("context_tag", ""),
                )
            )
        report = engine.ingest(documents)
        engine.save()
    except MedGraphError as exc:
        _fail(exc)
    click.echo(report.to_line())


@main.command()
@click.option("--symptoms", required=True, help="Comma-separated symptom node ids.")
@click.option("--data-dir", default=None)
def diagnose(symptoms: str, data_dir: str | None) -> None:
    """Posterior disease distribution for a symptom set."""
    engine = _load_engine(data_dir)
    ids = [s for s in symptoms.split(",") if s]
    try:
        posterior = engine.diagnose_case(ids)
    except MedGraphError as exc:
        _fail(exc)
    click.echo(
        json.dumps(
            {
                "entries": [
                    {"disease": d, "probability": p} for d, p in posterior.entries
                ],
                "epsilon": posterior.epsilon,
            }
        )
    )


@main.command()
@click.option(
    "--case",
    "case_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="JSON file: {symptoms, profile?, c_max?, w1?, w2?}.",
)
@click.option("--data-dir", default=None)
def recommend(case_path: str, data_dir: str | None) -> None:
    """Treatment plan for a case file, budget-constrained when c_max is given."""
    engine = _load_engine(data_dir)
    body = json.loads(Path(case_path).read_text())
    try:
        weights = UtilityWeights(
            body.get("w1", engine.params.w1), body.get("w2", engine.params.w2)
        )
        budget = None
        if body.get("c_max") is not None:
            budget = Budget(
                c_max=body["c_max"],
                eta=body.get("eta", 0.1),
                max_iter=body.get("max_iter", 50),
            )
        posterior, plan = engine.recommend_case(
            body["symptoms"],
            profile=PatientProfile(features=body.get("profile", {})),
            budget=budget,
            weights=weights,
        )
    except MedGraphError as exc:
        _fail(exc)
    click.echo(
        json.dumps(
            {
                "posterior": [
                    {"disease": d, "probability": p} for d, p in posterior.entries
                ],
                "plan": plan.to_dict(),
            }
        )
    )


@main.command()
@click.argument("events_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--data-dir", default=None)
def feedback(events_file: str, data_dir: str | None) -> None:
    """Apply a line-delimited feedback stream and retune parameters."""
    engine = _load_engine(data_dir)
    try:
        last_audit = None
        for line in Path(events_file).read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            likert = entry.get("likert")
            event = FeedbackEvent(
                case_id=entry["case_id"],
                diagnosis_correct=bool(entry["diagnosis_correct"]),
                treatment_accepted=bool(entry["treatment_accepted"]),
                likert=LikertScores(**likert) if likert else None,
                corrected_diagnosis=entry.get("corrected_diagnosis"),
                clinician_id=entry.get("clinician_id", "unknown"),
            )
            last_audit = engine.submit_feedback(event)
        engine.save()
    except MedGraphError as exc:
        _fail(exc)
    click.echo(json.dumps({"events": len(engine.feedback_buffer), "audit": last_audit}))


@main.command(name="eval")
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--noise", default=0.0, show_default=True, type=float)
@click.option("--diseases", default=10, show_default=True, type=int)
@click.option("--symptoms", default=30, show_default=True, type=int)
@click.option("--treatments", default=15, show_default=True, type=int)
@click.option("--profiles", default=20, show_default=True, type=int)
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Also write metrics.tsv and figures here.",
)
def eval_cmd(
    seed: int,
    noise: float,
    diseases: int,
    symptoms: int,
    treatments: int,
    profiles: int,
    out_dir: str | None,
) -> None:
    """Generate a synthetic world, run the pipeline, and print the metric panel."""
    from .report import format_panel, panel_rows, render_report

    try:
        world = generate_world(
            seed,
            WorldSizes(
                diseases=diseases,
                symptoms=symptoms,
                treatments=treatments,
                profiles=profiles,
            ),
            noise,
        )
        result = evaluate_world(world)
    except MedGraphError as exc:
        _fail(exc)
    rows = panel_rows(result)
    click.echo(format_panel(rows), nl=False)
    if out_dir:
        written = render_report(result, Path(out_dir))
        click.echo(json.dumps({"written": [str(p) for p in written]}))


@main.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--data-dir", default=None)
def export(out: str, data_dir: str | None) -> None:
    """Write the current graph snapshot to a file."""
    engine = _load_engine(data_dir)
    Path(out).write_text(engine.graph.dumps())
    click.echo(json.dumps({"exported": out, "edges": engine.graph.edge_count}))


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--data-dir", default=None)
def serve(port: int, host: str, data_dir: str | None) -> None:
    """Serve the HTTP API over the stored engine state."""
    from .service import serve as run_service

    engine = _load_engine(data_dir)
    run_service(engine, host=host, port=port)


if __name__ == "__main__":
    main()
