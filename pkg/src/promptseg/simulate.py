"""Automatic click simulation against ground truth.

The iterative strategy places the next click at the most interior pixel of
the largest erroneous region of the current prediction; the random strategy
samples foreground/background pixels without order.  Both are deterministic
under a fixed seed and drive training as well as NoC-style evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .autodiff import DimensionError
from .prompts import NEGATIVE, POSITIVE, Click

FALSE_POSITIVE = "false_positive"
FALSE_NEGATIVE = "false_negative"

_EIGHT = np.ones((3, 3), dtype=np.uint8)


@dataclass(frozen=True)
class ErrorRegion:
    kind: str                    # false_positive | false_negative
    pixels: np.ndarray           # boolean H×W membership mask
    area: int
    seed_pixel: tuple[int, int]  # smallest row-major member, used for ties


def _as_binary(mask: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be H×W, got shape {arr.shape}")
    return arr != 0


def error_regions(pred: np.ndarray, gt: np.ndarray) -> list[ErrorRegion]:
    """8-connected components of pred XOR gt, labeled FP or FN."""
    p = _as_binary(pred, "pred")
    g = _as_binary(gt, "gt")
    if p.shape != g.shape:
        raise DimensionError(f"pred shape {p.shape} != gt shape {g.shape}")
    regions: list[ErrorRegion] = []
    for kind, mask in ((FALSE_POSITIVE, p & ~g), (FALSE_NEGATIVE, ~p & g)):
        labels, count = ndimage.label(mask, structure=_EIGHT)
        for lab in range(1, count + 1):
            member = labels == lab
            idx = np.argwhere(member)
            seed = tuple(idx[np.lexsort((idx[:, 1], idx[:, 0]))][0])
            regions.append(ErrorRegion(kind, member, int(member.sum()),
                                       (int(seed[0]), int(seed[1]))))
    return regions


def interior_point(region_mask: np.ndarray) -> tuple[int, int]:
    """Pixel maximizing Euclidean distance to the region's in-image complement.

    Ties resolve to the smallest row-major index (argmax scan order).  A
    region covering the whole image has no complement; every pixel then
    ties and (0, 0) wins.
    """
    if region_mask.all():
        return (0, 0)
    dist = ndimage.distance_transform_edt(region_mask)
    flat = int(np.argmax(dist))
    return tuple(int(v) for v in np.unravel_index(flat, region_mask.shape))


def click_from_region(region: ErrorRegion) -> Click:
    """The region's most interior pixel; FN regions ask for positive clicks."""
    if region.area == 0:
        raise ValueError("cannot place a click in an empty region")
    row, col = interior_point(region.pixels)
    polarity = POSITIVE if region.kind == FALSE_NEGATIVE else NEGATIVE
    return Click(row, col, polarity)


def simulate_iterative(pred: np.ndarray, gt: np.ndarray) -> Click | None:
    """Next click for the largest error region, or None once pred == gt.

    Ties on area break FN-before-FP, then by smallest row-major seed pixel.
    """
    regions = error_regions(pred, gt)
    if not regions:
        return None
    kind_rank = {FALSE_NEGATIVE: 0, FALSE_POSITIVE: 1}
    best = min(regions, key=lambda r: (-r.area, kind_rank[r.kind], r.seed_pixel))
    return click_from_region(best)


def simulate_random(gt: np.ndarray, n_pos: int, n_neg: int, seed: int) -> list[Click]:
    """n_pos uniform foreground and n_neg uniform background clicks, unordered."""
    g = _as_binary(gt, "gt")
    fg = np.argwhere(g)
    bg = np.argwhere(~g)
    if n_pos > len(fg):
        raise ValueError(f"requested {n_pos} positive clicks but foreground has {len(fg)} pixels")
    if n_neg > len(bg):
        raise ValueError(f"requested {n_neg} negative clicks but background has {len(bg)} pixels")
    rng = np.random.default_rng(seed)
    clicks: list[Click] = []
    if n_pos:
        for i in rng.choice(len(fg), size=n_pos, replace=False):
            clicks.append(Click(int(fg[i, 0]), int(fg[i, 1]), POSITIVE))
    if n_neg:
        for i in rng.choice(len(bg), size=n_neg, replace=False):
            clicks.append(Click(int(bg[i, 0]), int(bg[i, 1]), NEGATIVE))
    return clicks
