"""Command line: corpus generation, proposal simulation, structuring,
evaluation, the incremental-learning experiment, and the API server."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .evaluation import EvalConfig, layout_regions_for_eval, match_detections, merge_reports
from .layout import canonical_json, layout_to_dict
from .service import DocumentService, PipelineConfig, run_pipeline
from .synth import (
    GenConfig,
    NoiseConfig,
    generate_corpus,
    read_proposals_jsonl,
    read_truth_jsonl,
    simulate_proposals,
    write_proposals_jsonl,
    write_truth_jsonl,
)


@click.group()
def main():
    """Document-layout structuring pipeline."""


@main.command()
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="Output truth JSONL.")
@click.option("--n-docs", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file of generator settings.")
def synth(out, n_docs, seed, config_path):
    """Generate a ground-truth corpus."""
    settings = {}
    if config_path:
        settings = json.loads(Path(config_path).read_text(encoding="utf-8"))
    settings["seed"] = seed
    docs = generate_corpus(GenConfig(**settings), n_docs=n_docs)
    write_truth_jsonl(docs, out)
    click.echo(f"wrote {len(docs)} documents to {out}")


@main.command()
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--jitter-sigma", default=0.0, show_default=True)
@click.option("--fragmentation-rate", default=0.0, show_default=True)
@click.option("--spurious-rate", default=0.0, show_default=True)
@click.option("--drop-rate", default=0.0, show_default=True)
@click.option("--score-spread", default=0.0, show_default=True)
def simulate(truth, out, seed, jitter_sigma, fragmentation_rate, spurious_rate,
             drop_rate, score_spread):
    """Simulate detector proposals from ground truth."""
    noise = NoiseConfig(
        jitter_sigma=jitter_sigma,
        fragmentation_rate=fragmentation_rate,
        spurious_rate=spurious_rate,
        drop_rate=drop_rate,
        score_spread=score_spread,
        seed=seed,
    )
    docs = read_truth_jsonl(truth)
    records = [(doc.page_id, simulate_proposals(doc, noise)) for doc in docs]
    write_proposals_jsonl(records, out)
    n = sum(len(p) for _, p in records)
    click.echo(f"wrote {n} proposals for {len(records)} documents to {out}")


@main.command()
@click.option("--proposals", "proposals_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True,
              help="Output layout JSONL.")
@click.option("--no-combine", is_flag=True,
              help="Plain NMS instead of the combine step (ablation).")
def structure(proposals_path, out, no_combine):
    """Run the structuring pipeline on a proposals file."""
    cfg = PipelineConfig(combine_enabled=not no_combine)
    records = read_proposals_jsonl(proposals_path)
    with open(out, "w", encoding="utf-8") as f:
        for page_id, proposals in records:
            layout = run_pipeline(page_id, proposals, cfg)
            f.write(canonical_json(layout_to_dict(layout)) + "\n")
    click.echo(f"wrote {len(records)} layouts to {out}")


@main.command("eval")
@click.option("--layouts", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--truth", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--iou", default=0.85, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="Report JSON (default stdout).")
def eval_cmd(layouts, truth, iou, out):
    """Score layouts against ground truth."""
    truth_docs = {d.page_id: d for d in read_truth_jsonl(truth)}
    cfg = EvalConfig(iou_threshold=iou)
    reports = []
    with open(layouts, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            layout_dict = json.loads(line)
            doc = truth_docs.get(layout_dict["page_id"])
            if doc is None:
                raise click.ClickException(f"no truth for page {layout_dict['page_id']}")
            pred = layout_regions_for_eval(layout_dict)
            reports.append(match_detections(pred, list(doc.regions), cfg))
    report = merge_reports(reports)
    text = canonical_json(report.to_dict())
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote report to {out}")
    else:
        click.echo(text)


@main.command("train-incr")
@click.option("--alpha", default=1.0, show_default=True, help="Distillation weight.")
@click.option("--new-data-rate", "-p", default=0.25, show_default=True)
@click.option("--lam", default=1.0, show_default=True, help="Multi-task weight (reported only).")
@click.option("--margin", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), help="Metrics JSON (default stdout).")
def train_incr(alpha, new_data_rate, lam, margin, seed, out):
    """Run the incremental-learning experiment (fine-tuning contrast)."""
    from .experiments import forgetting_experiment

    result = forgetting_experiment(
        seed=seed, distill_weight=alpha, new_data_rate=new_data_rate
    )
    result["multitask_weight"] = lam
    result["margin"] = margin
    text = json.dumps(result, indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote metrics to {out}")
    else:
        click.echo(text)


@main.command()
@click.option("--data-dir", envvar="DOCSTRUCT_DATA", required=True,
              type=click.Path(file_okay=False),
              help="State directory (env DOCSTRUCT_DATA).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(data_dir, host, port):
    """Start the HTTP API."""
    import uvicorn

    from .api import create_app

    app = create_app(DocumentService(data_dir))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
