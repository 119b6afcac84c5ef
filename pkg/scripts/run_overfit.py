#!/usr/bin/env python3
"""Overfit probe: desk-default model on a fixed 16-image synthetic set.

Reports mIoU@1 on the training set every few epochs so learning-rate and
step-budget choices can be pinned from evidence.
"""

import argparse
import time

import numpy as np

from promptseg.autodiff import Adam
from promptseg.data import AugmentConfig, generate_synthetic_dataset
from promptseg.model import ModelConfig, SegmentationModel
from promptseg.training import TrainConfig, evaluate_miou_at_k, train_step


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--steps", type=int, default=800)
    ap.add_argument("--batch", type=int, default=4)
    ap.add_argument("--eval-every", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--target", type=float, default=0.90)
    args = ap.parse_args()

    model = SegmentationModel(ModelConfig(input_size=args.size, seed=args.seed))
    data = generate_synthetic_dataset(args.n, args.size, args.size, seed=args.seed)
    cfg = TrainConfig(epochs=1, batch_size=args.batch, base_lr=args.lr, decay_epoch=0,
                      augment=AugmentConfig.none(), seed=args.seed)
    opt = Adam(model.parameters(), lr=args.lr)

    t0 = time.perf_counter()
    order_rng = np.random.default_rng(args.seed)
    losses = []
    for step in range(args.steps):
        idx = order_rng.permutation(args.n)[:args.batch]
        report = train_step(model, [data[i] for i in idx], opt, cfg, step_seed=step)
        losses.append(report.loss)
        if (step + 1) % args.eval_every == 0:
            miou = evaluate_miou_at_k(model, data, k=1)
            dt = time.perf_counter() - t0
            print(f"step {step+1:5d}  loss(avg20) {np.mean(losses[-20:]):.4f}  "
                  f"mIoU@1 {miou:.4f}  [{dt:.0f}s]", flush=True)
            if miou >= args.target:
                print(f"target {args.target} reached at step {step+1} in {dt:.0f}s")
                return
    print(f"finished {args.steps} steps in {time.perf_counter()-t0:.0f}s without reaching target")


if __name__ == "__main__":
    main()
