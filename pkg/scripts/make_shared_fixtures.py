#!/usr/bin/env python3
"""Regenerate the RLE and prompt-document fixtures shared with the browser
client's test suite.  The Python codecs are the authority; the TypeScript
side must round-trip these exact documents."""

import json
from pathlib import Path

import numpy as np

from promptseg.prompts import BoxPrompt, Click, MaskPrompt, PolygonPrompt, PromptSet, ScribblePrompt
from promptseg.rle import encode_rle

OUT = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"


def rle_cases():
    rng = np.random.default_rng(42)
    cases = []
    masks = [
        np.zeros((4, 5), dtype=np.uint8),
        np.ones((3, 3), dtype=np.uint8),
        np.eye(6, dtype=np.uint8),
    ]
    m = np.zeros((8, 8), dtype=np.uint8)
    m[2:6, 3:7] = 1
    masks.append(m)
    for _ in range(8):
        h, w = rng.integers(2, 12), rng.integers(2, 12)
        masks.append((rng.random((h, w)) > 0.5).astype(np.uint8))
    for mask in masks:
        cases.append({
            "rle": encode_rle(mask),
            "pixels": mask.reshape(-1).tolist(),
        })
    return cases


def prompt_doc():
    gt = np.zeros((6, 6), dtype=np.uint8)
    gt[1:4, 2:5] = 1
    ps = PromptSet(
        clicks=[Click(40, 60, "positive"), Click(3, 4, "negative")],
        boxes=[BoxPrompt(10, 10, 50, 80)],
        polygons=[PolygonPrompt(((0, 0), (0, 5), (4, 2)))],
        scribbles=[ScribblePrompt(((1, 1), (2, 3), (3, 3)), "negative")],
        mask=MaskPrompt(gt),
        text_embedding=np.array([0.25, -1.5], dtype=np.float32),
    )
    return ps.to_wire()


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / "rle_cases.json", "w") as fh:
        json.dump(rle_cases(), fh, indent=1)
        fh.write("\n")
    with open(OUT / "prompt_doc.json", "w") as fh:
        json.dump(prompt_doc(), fh, indent=1)
        fh.write("\n")
    print(f"wrote fixtures to {OUT}")


if __name__ == "__main__":
    main()
