"""Command-line entry points: generate, preprocess, train, evaluate,
calibrate, ablate, timeline, gradcheck, serve."""

from __future__ import annotations

import json
import time
from pathlib import Path

import click
import numpy as np

from . import harness, synth
from .dataset import load_corpus, save_corpus
from .features import ContextMask, assemble_features
from .metrics import ThresholdVector
from .nn import FocalLossConfig, grad_check
from .serialize import file_sha256
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_model


def _parse_ratio(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in text.split(":")]
    if len(parts) != 3:
        raise click.BadParameter("ratio must look like 161:20:20")
    return tuple(parts)


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p)


@click.group()
def main():
    """Per-minute treatment-activity prediction toolkit."""


@main.command()
@click.option("--cases", "n_cases", default=201, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None,
              help="Scenario JSON; defaults to the shipped scenario.")
@click.option("--out", required=True, type=click.Path())
def generate(n_cases, seed, scenario_path, out):
    """Generate a synthetic corpus (cases + manifest + ground-truth traces)."""
    if scenario_path:
        with open(scenario_path) as fh:
            scenario = synth.ScenarioConfig.from_dict(json.load(fh))
    else:
        scenario = synth.default_scenario()
    manifest, cases, traces = synth.generate_dataset(scenario, n_cases, seed)
    save_corpus(out, manifest, cases, traces)
    with open(Path(out) / "scenario.json", "w") as fh:
        json.dump(scenario.to_dict(), fh, indent=1, sort_keys=True)
    total_minutes = sum(c.n_minutes for c in cases)
    click.echo(f"wrote {len(cases)} cases ({total_minutes} minutes) to {out}")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--ratio", default="161:20:20", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--k", default=5, show_default=True)
@click.option("--out", required=True, type=click.Path())
def preprocess(corpus, ratio, seed, k, out):
    """Split + normalize + sample the corpus into cache files."""
    data = harness.prepare_corpus_dir(corpus, _parse_ratio(ratio), seed, k, cache_dir=out)
    click.echo(
        f"train/val/test samples: {len(data.train)}/{len(data.validation)}/{len(data.test)}"
    )
    click.echo(f"cache hash: {data.cache_hash}")


train_options = [
    click.option("--corpus", required=True, type=click.Path(exists=True)),
    click.option("--ratio", default="161:20:20", show_default=True),
    click.option("--seed", default=0, show_default=True),
    click.option("--k", default=5, show_default=True),
    click.option("--mask", default="full", show_default=True),
    click.option("--batch", default=64, show_default=True),
    click.option("--lr", default=1e-4, show_default=True),
    click.option("--gamma", default=2.0, show_default=True),
    click.option("--patience", default=10, show_default=True),
    click.option("--epochs", default=200, show_default=True),
    click.option("--hidden", default="256,128", show_default=True),
    click.option("--embed-dim", default=16, show_default=True),
]


def _with_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return wrap


def _config(mask, batch, lr, gamma, patience, epochs, hidden, embed_dim, seed, k):
    return TrainConfig(
        batch_size=batch,
        learning_rate=lr,
        gamma=gamma,
        max_epochs=epochs,
        patience=patience,
        seed=seed,
        mask=ContextMask.from_string(mask),
        hidden=_parse_hidden(hidden),
        embed_dim=embed_dim,
        k=k,
    )


@main.command()
@_with_options(train_options)
@click.option("--out", required=True, type=click.Path(), help="Checkpoint path.")
@click.option("--log", "log_path", type=click.Path(), default=None)
def train(corpus, ratio, seed, k, mask, batch, lr, gamma, patience, epochs, hidden,
          embed_dim, out, log_path):
    """Train one model and write a checkpoint."""
    cfg = _config(mask, batch, lr, gamma, patience, epochs, hidden, embed_dim, seed, k)
    data = harness.prepare_corpus_dir(corpus, _parse_ratio(ratio), seed, k)
    t0 = time.monotonic()
    model, history = train_model(data.train, data.validation, data.manifest, cfg, log_path)
    from .training import compute_label_weights
    from .features import stack_labels

    alpha = compute_label_weights(stack_labels(data.train))
    save_checkpoint(
        out, model, cfg, data.stats, data.manifest.catalog.content_hash(), seed, alpha
    )
    click.echo(
        f"trained {len(history.train_loss)} epochs in {time.monotonic() - t0:.1f}s; "
        f"best epoch {history.best_epoch}; checkpoint {out} "
        f"(sha256 {file_sha256(out)[:12]})"
    )


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--ratio", default="161:20:20", show_default=True)
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
def calibrate(corpus, ratio, checkpoint, out):
    """Calibrate per-label thresholds on the validation split."""
    bundle = load_checkpoint(checkpoint)
    data = harness.prepare_corpus_dir(
        corpus, _parse_ratio(ratio), bundle.preproc_seed, bundle.k
    )
    thresholds = harness.calibrate_on(bundle.model, data.validation, bundle.mask)
    with open(out, "w") as fh:
        json.dump(
            {"schema_version": 1, **thresholds.to_dict()}, fh, indent=1, sort_keys=True
        )
    click.echo(f"wrote {len(thresholds.thresholds)} thresholds to {out}")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--ratio", default="161:20:20", show_default=True)
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--thresholds", "thresholds_path", required=True, type=click.Path(exists=True))
@click.option("--split", "split_name", default="test", show_default=True,
              type=click.Choice(["train", "validation", "test"]))
@click.option("--out", type=click.Path(), default=None)
def evaluate(corpus, ratio, checkpoint, thresholds_path, split_name, out):
    """Evaluate a calibrated checkpoint on one split."""
    bundle = load_checkpoint(checkpoint)
    data = harness.prepare_corpus_dir(
        corpus, _parse_ratio(ratio), bundle.preproc_seed, bundle.k
    )
    with open(thresholds_path) as fh:
        thresholds = ThresholdVector.from_dict(json.load(fh))
    report, _, _ = harness.evaluate_model(
        bundle.model,
        data.samples_for(split_name),
        bundle.mask,
        thresholds,
        data.manifest.catalog.labels,
        split_name,
    )
    click.echo(
        f"{split_name}: weighted F1 {report.weighted_f1:.4f}, "
        f"samples F1 {report.samples_f1:.4f}"
    )
    if out:
        with open(out, "w") as fh:
            json.dump(report.to_dict(), fh, indent=1, sort_keys=True)
        click.echo(f"report written to {out}")


@main.command()
@_with_options(train_options)
@click.option("--out", required=True, type=click.Path())
def ablate(corpus, ratio, seed, k, mask, batch, lr, gamma, patience, epochs, hidden,
           embed_dim, out):
    """Run the 12-arm context ablation (the --mask flag is ignored here)."""
    cfg = _config("full", batch, lr, gamma, patience, epochs, hidden, embed_dim, seed, k)
    data = harness.prepare_corpus_dir(
        corpus, _parse_ratio(ratio), seed, k, cache_dir=Path(out) / "cache"
    )
    rows = harness.run_ablation(data, cfg, out_dir=out)
    click.echo(harness.render_ablation_table(rows))


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--thresholds", "thresholds_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@click.option("--case", "case_id", required=True)
@click.option("--cutoff", default=0.5, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def timeline(corpus, checkpoint, thresholds_path, report_path, case_id, cutoff, out):
    """Export the per-minute predicted-vs-actual grid for one case."""
    from .metrics import EvalReport

    manifest, cases = load_corpus(corpus)
    bundle = load_checkpoint(checkpoint, manifest.catalog.content_hash())
    with open(thresholds_path) as fh:
        thresholds = ThresholdVector.from_dict(json.load(fh))
    with open(report_path) as fh:
        report = EvalReport.from_dict(json.load(fh))
    case = next((c for c in cases if c.case_id == case_id), None)
    if case is None:
        raise click.ClickException(f"unknown case {case_id!r}")
    doc = harness.export_timeline(
        case, manifest, bundle.stats, bundle.k, bundle.preproc_seed,
        bundle.model, bundle.mask, thresholds, report, cutoff,
    )
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
        click.echo(f"timeline written to {out}")
    else:
        click.echo(text)


@main.command()
@click.option("--seed", default=0, show_default=True)
def gradcheck(seed):
    """Finite-difference check of the analytic gradients on a small model."""
    from .nn import ActivityPredictor
    from .features import FeatureBatch

    rng = np.random.default_rng(seed)
    model = ActivityPredictor(
        pre_width=10, post_width=5, n_labels=5, hidden=(8, 4), embed_dim=5,
        use_embedding=True, k=3, seed=seed,
    )
    batch = FeatureBatch(
        pre=rng.uniform(0, 1, size=(3, 10)),
        ids=rng.integers(0, 6, size=(3, 3)),
        post=rng.uniform(0, 1, size=(3, 5)),
    )
    targets = rng.integers(0, 2, size=(3, 5)).astype(np.float64)
    cfg = FocalLossConfig(alpha=rng.uniform(0.2, 0.8, size=5), gamma=2.0)
    err = grad_check(model, batch, targets, cfg, h=1e-5, n_coords=250, seed=seed)
    click.echo(f"max relative gradient error: {err:.3e}")
    if err >= 1e-4:
        raise click.ClickException("gradient check failed (>= 1e-4)")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--thresholds", "thresholds_path", type=click.Path(exists=True), default=None)
@click.option("--report", "report_path", type=click.Path(exists=True), default=None)
@click.option("--ui", "ui_dir", type=click.Path(), default=None,
              help="Static directory for the browser console.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(corpus, checkpoint, thresholds_path, report_path, ui_dir, host, port):
    """Serve the replay/what-if decision-support API."""
    import uvicorn

    from .service import DecisionService, create_app

    service = DecisionService(corpus, checkpoint, thresholds_path, report_path)
    app = create_app(service, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
