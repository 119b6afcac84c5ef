"""Loss, click-schedule simulation, and the training loop.

Training simulates clicks only: half the samples get an unordered set of
random foreground/background clicks, the rest run up to three sequential
rounds where each new click lands in the largest error region of the live
model's own (gradient-free) prediction, with the previous mask fed back
through the third prompt channel.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation
from .autodiff import Adam, DimensionError, Tensor, clip_min, log, mul, no_grad, sigmoid, sub, tsum
from .data import AugmentConfig, Sample, augment, generate_synthetic_dataset, load_folder_dataset, resize_and_pad
from .model import SegmentationModel, binarize, save_checkpoint
from .prompts import Click, MaskPrompt, PromptSet
from .simulate import simulate_iterative, simulate_random

NFL_EPS = 1e-8
PT_FLOOR = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 4
    base_lr: float = 1e-3
    decay_epoch: int = 30          # paper-scale schedule: 5e-5 -> 5e-6 after epoch 50/90
    decay_factor: float = 0.1
    gamma: float = 2.0             # focal exponent
    augment: AugmentConfig = field(default_factory=AugmentConfig.none)
    seed: int = 0
    random_click_prob: float = 0.5
    max_iter_rounds: int = 3
    max_pos_clicks: int = 4
    max_neg_clicks: int = 3
    eval_every: int = 1
    checkpoint_every: int = 10
    data: dict | str | None = None  # folder path or synthetic spec

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if not 0 <= self.decay_epoch <= self.epochs:
            raise ValueError(f"decay_epoch {self.decay_epoch} outside [0, {self.epochs}]")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")


def normalized_focal_loss(logits: Tensor, gt: np.ndarray, gamma: float = 2.0) -> Tensor:
    """Focal term renormalized by its own weight mass.

    With p_t the probability assigned to the true class per pixel:
    L = -(sum((1 - p_t)^gamma * log(p_t))) / (sum((1 - p_t)^gamma) + eps).
    gamma = 0 reduces to mean binary cross-entropy (up to eps).
    """
    gt_arr = (np.asarray(gt) > 0).astype(logits.data.dtype)
    if gt_arr.shape != logits.shape:
        raise DimensionError(f"gt shape {gt_arr.shape} != logits shape {logits.shape}")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    target = Tensor(gt_arr)
    ones = Tensor(np.ones_like(gt_arr))
    p = sigmoid(logits)
    pt = mul(p, target) + mul(sub(ones, p), sub(ones, target))
    log_pt = log(clip_min(pt, PT_FLOOR))
    if gamma == 0:
        # (1 - p_t)^0 is identically 1; skip the power op so p_t = 1 pixels
        # cannot produce 0^0 artifacts
        return -tsum(log_pt) / (float(pt.size) + NFL_EPS)
    weight = clip_min(sub(ones, pt), PT_FLOOR) ** gamma
    return -tsum(mul(weight, log_pt)) / (tsum(weight) + NFL_EPS)


@dataclass
class LossReport:
    loss: float
    clicks_used: int
    random_samples: int
    iterative_samples: int


def _simulate_prompts(model: SegmentationModel, sample: Sample, rng: np.random.Generator,
                      cfg: TrainConfig) -> tuple[PromptSet, str]:
    """One training prompt set per the mixed random/iterative schedule."""
    gt = sample.gt
    fg = int(gt.sum())
    bg = int(gt.size - fg)
    if rng.random() < cfg.random_click_prob or fg == 0:
        n_pos = min(int(rng.integers(1, cfg.max_pos_clicks + 1)), fg)
        n_neg = min(int(rng.integers(0, cfg.max_neg_clicks + 1)), bg)
        clicks = simulate_random(gt, n_pos, n_neg, seed=int(rng.integers(2 ** 31)))
        return PromptSet(clicks=clicks), "random"
    rounds = int(rng.integers(1, cfg.max_iter_rounds + 1))
    pred = np.zeros_like(gt)
    clicks: list[Click] = []
    prompts = PromptSet()
    for r in range(rounds):
        click = simulate_iterative(pred, gt)
        if click is None:
            break
        clicks.append(click)
        prompts = PromptSet(clicks=list(clicks),
                            mask=MaskPrompt(pred) if pred.any() else None)
        if r < rounds - 1:
            with no_grad():
                pred = binarize(model.forward(sample.image, prompts))
    return prompts, "iterative"


def train_step(model: SegmentationModel, batch: list[Sample], optimizer: Adam,
               cfg: TrainConfig, step_seed: int) -> LossReport:
    """Simulate, rasterize, forward, NFL, backward, one optimizer update."""
    optimizer.zero_grad()
    total = 0.0
    clicks_used = 0
    n_random = 0
    n_iter = 0
    scale = 1.0 / len(batch)
    for i, sample in enumerate(batch):
        rng = np.random.default_rng([step_seed, i])
        prompts, strategy = _simulate_prompts(model, sample, rng, cfg)
        if strategy == "random":
            n_random += 1
        else:
            n_iter += 1
        clicks_used += len(prompts.clicks)
        logits = model.forward(sample.image, prompts)
        loss = normalized_focal_loss(logits, sample.gt, cfg.gamma)
        value = loss.item()
        if not np.isfinite(value):
            raise RuntimeError(
                f"non-finite loss {value} at step seed {step_seed}, sample {sample.sample_id!r}; "
                f"logit range [{logits.data.min():.3e}, {logits.data.max():.3e}]")
        (loss * scale).backward()
        total += value
    optimizer.step()
    return LossReport(total / len(batch), clicks_used, n_random, n_iter)


def resolve_dataset(spec, target: int | None = None) -> list[Sample]:
    """A folder path or a {"synthetic": {...}} spec becomes a sample list."""
    if isinstance(spec, (str, Path)):
        samples = load_folder_dataset(spec)
        if target is not None:
            samples = [Sample(*resize_and_pad(s.image, s.gt, target, mode="train"), s.sample_id)
                       for s in samples]
        return samples
    if isinstance(spec, dict) and "synthetic" in spec:
        syn = spec["synthetic"]
        return generate_synthetic_dataset(int(syn["n"]), int(syn["h"]), int(syn["w"]),
                                          int(syn.get("seed", 0)))
    raise ValueError(f"dataset spec must be a folder path or {{'synthetic': ...}}, got {spec!r}")


def fit(model: SegmentationModel, dataset: list[Sample], cfg: TrainConfig,
        out_dir=None, resume: dict | None = None,
        optimizer: Adam | None = None) -> tuple[SegmentationModel, list[dict]]:
    """Full loop: shuffled epochs, piecewise-constant LR, periodic checkpoints
    and mIoU@1 evaluation.  All randomness derives from (seed, epoch, step),
    so resuming from a checkpoint continues bitwise-identically."""
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    schedule = [(0, cfg.base_lr), (cfg.decay_epoch, cfg.base_lr * cfg.decay_factor)]
    if optimizer is None:
        optimizer = Adam(model.parameters(), lr=cfg.base_lr, schedule=schedule)
    start_epoch = 0
    global_step = 0
    if resume:
        # moments and step come from the checkpoint; the LR schedule is
        # whatever this run's config says
        loaded = resume["optimizer_state"]
        optimizer.state.step_count = loaded.step_count
        optimizer.state.m = loaded.m
        optimizer.state.v = loaded.v
        start_epoch = resume["epoch"]
        global_step = resume["global_step"]
    metrics: list[dict] = []
    for epoch in range(start_epoch, cfg.epochs):
        optimizer.set_epoch(epoch)
        order = np.random.default_rng([cfg.seed, 1 + epoch]).permutation(len(dataset))
        epoch_losses = []
        t0 = time.perf_counter()
        for lo in range(0, len(order), cfg.batch_size):
            chunk = order[lo:lo + cfg.batch_size]
            batch = []
            for j, idx in enumerate(chunk):
                s = dataset[int(idx)]
                s = augment(s, cfg.augment, seed=[cfg.seed, 7 + global_step, j])
                img, gt = resize_and_pad(s.image, s.gt, model.cfg.input_size, mode="train")
                batch.append(Sample(img, gt, s.sample_id))
            report = train_step(model, batch, optimizer, cfg,
                                step_seed=_step_seed(cfg.seed, global_step))
            epoch_losses.append(report.loss)
            global_step += 1
        row = {
            "epoch": epoch,
            "steps": global_step,
            "mean_loss": float(np.mean(epoch_losses)),
            "lr": optimizer.state.lr,
            "seconds": round(time.perf_counter() - t0, 3),
        }
        if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0:
            row["miou1"] = evaluate_miou_at_k(model, dataset, k=1)
        metrics.append(row)
        if out_path is not None and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(model, out_path / f"epoch_{epoch + 1:04d}.ckpt", optimizer,
                            progress={"epoch": epoch + 1, "global_step": global_step})
    if out_path is not None:
        save_checkpoint(model, out_path / "model.ckpt", optimizer,
                        progress={"epoch": cfg.epochs, "global_step": global_step})
        with open(out_path / "metrics.json", "w") as fh:
            json.dump(metrics, fh, indent=2)
            fh.write("\n")
    return model, metrics


def _step_seed(seed: int, global_step: int) -> int:
    return int(np.random.default_rng([seed, 3 + global_step]).integers(2 ** 31))


def evaluate_miou_at_k(model: SegmentationModel, dataset: list[Sample], k: int = 1,
                       mask_feedback: bool = True) -> float:
    """Mean IoU after exactly k simulated clicks over model-sized samples."""
    values = []
    for s in dataset:
        img, gt = resize_and_pad(s.image, s.gt, model.cfg.input_size, mode="test")
        record = evaluation.interactive_eval(model, Sample(img, gt, s.sample_id),
                                             max_clicks=k, mask_feedback=mask_feedback)
        values.append(record.iou_at(k))
    return float(np.mean(values))
