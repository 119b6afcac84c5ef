"""Command-line entry points: train, eval, serve, synth."""

from __future__ import annotations

import json
from pathlib import Path

import click
import yaml

from .data import AugmentConfig, generate_synthetic_dataset, save_dataset_folder
from .model import ModelConfig, SegmentationModel, load_checkpoint
from .training import TrainConfig, fit, resolve_dataset


@click.group()
def main():
    """Interactive segmentation with dense visual prompts."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="YAML file with `model:`, `train:` and `data:` sections.")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", "resume_ckpt", type=click.Path(exists=True), default=None)
def train(config_path, out_dir, resume_ckpt):
    """Train a model from a config file."""
    with open(config_path) as fh:
        raw = yaml.safe_load(fh) or {}
    model_cfg = ModelConfig(**raw.get("model", {}))
    train_raw = dict(raw.get("train", {}))
    aug_raw = train_raw.pop("augment", None)
    augment = AugmentConfig(**aug_raw) if isinstance(aug_raw, dict) else (
        AugmentConfig() if aug_raw in (None, True) else AugmentConfig.none())
    train_cfg = TrainConfig(augment=augment, data=raw.get("data"), **train_raw)
    dataset = resolve_dataset(train_cfg.data)
    resume = None
    if resume_ckpt:
        model, extras = load_checkpoint(resume_ckpt)
        if model.cfg != model_cfg:
            raise click.ClickException(
                f"checkpoint config {model.cfg} does not match --config model section")
        if "optimizer_state" not in extras:
            raise click.ClickException("checkpoint has no optimizer state; cannot resume")
        resume = extras
    else:
        model = SegmentationModel(model_cfg)
    _, metrics = fit(model, dataset, train_cfg, out_dir=out_dir, resume=resume)
    click.echo(f"finished: {len(metrics)} epoch rows, checkpoints in {out_dir}")
    if metrics:
        click.echo(json.dumps(metrics[-1]))


@main.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="eval_out", type=click.Path())
@click.option("--grid", default=None, type=int, help="Also time a grid x grid click sweep.")
@click.option("--max-clicks", default=20, show_default=True, type=int)
@click.option("--no-mask-feedback", is_flag=True, default=False,
              help="Do not feed the previous mask through prompt channel 2.")
@click.option("--seed", default=0, show_default=True, type=int)
def eval_cmd(ckpt_path, data_dir, out_dir, grid, max_clicks, no_mask_feedback, seed):
    """Run the interactive evaluation protocol over a dataset folder."""
    from .evaluation import run_benchmark

    model, _ = load_checkpoint(ckpt_path)
    report = run_benchmark(model, data_dir, out_dir, max_clicks=max_clicks,
                           mask_feedback=not no_mask_feedback, grid=grid, seed=seed)
    click.echo(json.dumps(report["aggregates"], indent=2))
    click.echo(f"wrote report.json / records.csv / timings.json to {out_dir}")


@main.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--addr", default="127.0.0.1:8000", show_default=True,
              help="HOST:PORT to bind.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Optional service YAML (env vars override it).")
@click.option("--static", "static_dir", type=click.Path(exists=True), default=None,
              help="Serve a built browser client from this directory.")
def serve(ckpt_path, addr, config_path, static_dir):
    """Start the encode-once session server."""
    from .service import ServiceConfig
    from .service import serve as run_server

    cfg = ServiceConfig.load(config_path)
    host, _, port = addr.rpartition(":")
    run_server(ckpt_path, host=host or cfg.host, port=int(port) if port else cfg.port,
               cache_budget_bytes=cfg.cache_budget_bytes, static_dir=static_dir)


@main.command()
@click.option("--n", default=64, show_default=True, type=int)
@click.option("--size", default=128, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def synth(n, size, seed, out_dir):
    """Write a synthetic dataset in the images/ + masks/ folder format."""
    samples = generate_synthetic_dataset(n, size, size, seed=seed)
    save_dataset_folder(samples, out_dir)
    click.echo(f"wrote {n} samples at {size}x{size} to {Path(out_dir).resolve()}")


if __name__ == "__main__":
    main()
