"""Uncompressed run-length encoding of binary masks, row-major pixel order.

The wire form is ``{"size": [h, w], "counts": [...]}`` where counts are
alternating run lengths starting with the number of leading zeros (a mask
beginning with a foreground pixel therefore starts with a 0 count).
"""

from __future__ import annotations

import numpy as np


def encode_rle(mask: np.ndarray) -> dict:
    """Encode an H×W binary mask; round-trips exactly through decode_rle."""
    if mask.ndim != 2:
        raise ValueError(f"expected an H×W mask, got shape {mask.shape}")
    h, w = mask.shape
    flat = (np.asarray(mask).reshape(-1) != 0).astype(np.uint8)
    counts: list[int] = []
    if flat.size:
        edges = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate(([0], edges, [flat.size]))
        runs = np.diff(bounds)
        if flat[0] == 1:
            counts.append(0)
        counts.extend(int(r) for r in runs)
    return {"size": [int(h), int(w)], "counts": counts}


def decode_rle(rle: dict) -> np.ndarray:
    """Decode the wire form back to a uint8 H×W mask."""
    h, w = (int(v) for v in rle["size"])
    counts = rle.get("counts", [])
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"RLE counts sum to {total}, expected {h * w}")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos = 0
    value = 0
    for run in counts:
        if value:
            flat[pos:pos + run] = 1
        pos += run
        value ^= 1
    return flat.reshape(h, w)
