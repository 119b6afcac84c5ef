"""Structured visual prompts and their three-channel dense rasterization.

Channel 0 carries positive evidence, channel 1 negative evidence, channel 2
the previous-round mask.  All conversions funnel through clicks: a box
contributes its four corners as negative clicks, a polygon its vertices,
and a scribble is resampled along its arc length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rle import decode_rle, encode_rle

POSITIVE = "positive"
NEGATIVE = "negative"

DEFAULT_CLICK_RADIUS = 5


class PromptValidationError(ValueError):
    """Raised for prompts that violate their geometric contract."""


@dataclass(frozen=True)
class Click:
    row: int
    col: int
    polarity: str = POSITIVE

    def __post_init__(self):
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise PromptValidationError(f"click polarity must be positive|negative, got {self.polarity!r}")


@dataclass(frozen=True)
class BoxPrompt:
    r0: int
    c0: int
    r1: int
    c1: int

    def __post_init__(self):
        if self.r0 > self.r1 or self.c0 > self.c1:
            raise PromptValidationError(
                f"box corners inverted: ({self.r0},{self.c0}) must be <= ({self.r1},{self.c1})")


@dataclass(frozen=True)
class PolygonPrompt:
    vertices: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple((int(r), int(c)) for r, c in self.vertices))
        if len(self.vertices) < 3:
            raise PromptValidationError(f"polygon needs >= 3 vertices, got {len(self.vertices)}")


@dataclass(frozen=True)
class ScribblePrompt:
    path: tuple[tuple[int, int], ...]
    polarity: str = POSITIVE

    def __post_init__(self):
        object.__setattr__(self, "path", tuple((int(r), int(c)) for r, c in self.path))
        if not self.path:
            raise PromptValidationError("scribble path is empty")
        if self.polarity not in (POSITIVE, NEGATIVE):
            raise PromptValidationError(f"scribble polarity must be positive|negative, got {self.polarity!r}")


@dataclass(frozen=True)
class MaskPrompt:
    mask: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mask)
        if arr.ndim != 2:
            raise PromptValidationError(f"mask prompt must be H×W, got shape {arr.shape}")
        object.__setattr__(self, "mask", (arr > 0.5).astype(np.uint8))


@dataclass
class PromptSet:
    """Everything a user has placed so far; may be empty."""

    clicks: list[Click] = field(default_factory=list)
    boxes: list[BoxPrompt] = field(default_factory=list)
    polygons: list[PolygonPrompt] = field(default_factory=list)
    scribbles: list[ScribblePrompt] = field(default_factory=list)
    mask: MaskPrompt | None = None
    text_embedding: np.ndarray | None = None

    def is_empty(self) -> bool:
        return not (self.clicks or self.boxes or self.polygons or self.scribbles
                    or self.mask is not None)

    def to_wire(self) -> dict:
        doc: dict = {
            "clicks": [{"row": c.row, "col": c.col, "polarity": c.polarity} for c in self.clicks],
            "boxes": [{"r0": b.r0, "c0": b.c0, "r1": b.r1, "c1": b.c1} for b in self.boxes],
            "polygons": [[[r, c] for r, c in p.vertices] for p in self.polygons],
            "scribbles": [{"path": [[r, c] for r, c in s.path], "polarity": s.polarity}
                          for s in self.scribbles],
        }
        if self.mask is not None:
            doc["mask_rle"] = encode_rle(self.mask.mask)
        if self.text_embedding is not None:
            doc["text_embedding"] = [float(v) for v in np.asarray(self.text_embedding).reshape(-1)]
        return doc

    @staticmethod
    def from_wire(doc: dict) -> "PromptSet":
        try:
            clicks = [Click(int(c["row"]), int(c["col"]), c.get("polarity", POSITIVE))
                      for c in doc.get("clicks", [])]
            boxes = [BoxPrompt(int(b["r0"]), int(b["c0"]), int(b["r1"]), int(b["c1"]))
                     for b in doc.get("boxes", [])]
            polygons = [PolygonPrompt(tuple((int(r), int(c)) for r, c in poly))
                        for poly in doc.get("polygons", [])]
            scribbles = [ScribblePrompt(tuple((int(r), int(c)) for r, c in s["path"]),
                                        s.get("polarity", POSITIVE))
                         for s in doc.get("scribbles", [])]
        except (KeyError, TypeError) as exc:
            raise PromptValidationError(f"malformed prompt document: {exc}") from exc
        mask = None
        if doc.get("mask_rle") is not None:
            mask = MaskPrompt(decode_rle(doc["mask_rle"]))
        text = None
        if doc.get("text_embedding") is not None:
            text = np.asarray(doc["text_embedding"], dtype=np.float32)
        return PromptSet(clicks, boxes, polygons, scribbles, mask, text)


# -- conversions to clicks -------------------------------------------------------


def box_to_clicks(box: BoxPrompt) -> list[Click]:
    """The four corners as negative clicks (corners sit outside the target)."""
    return [Click(box.r0, box.c0, NEGATIVE), Click(box.r0, box.c1, NEGATIVE),
            Click(box.r1, box.c0, NEGATIVE), Click(box.r1, box.c1, NEGATIVE)]


def polygon_to_clicks(poly: PolygonPrompt) -> list[Click]:
    """One negative click per vertex."""
    return [Click(r, c, NEGATIVE) for r, c in poly.vertices]


def scribble_to_clicks(scribble: ScribblePrompt, spacing: int = DEFAULT_CLICK_RADIUS) -> list[Click]:
    """Resample the polyline at arc-length intervals of `spacing` pixels.

    Both endpoints are always included; duplicate rounded samples collapse.
    """
    if spacing < 1:
        raise PromptValidationError(f"scribble spacing must be >= 1, got {spacing}")
    pts = [(float(r), float(c)) for r, c in scribble.path]
    if len(pts) == 1:
        pts = pts * 2
    seg_len = [math.dist(a, b) for a, b in zip(pts[:-1], pts[1:])]
    total = sum(seg_len)
    targets = [i * spacing for i in range(int(total // spacing) + 1)]
    if not targets or targets[-1] < total:
        targets.append(total)
    samples: list[tuple[int, int]] = []
    seg = 0
    acc = 0.0
    for d in targets:
        while seg < len(seg_len) - 1 and acc + seg_len[seg] < d:
            acc += seg_len[seg]
            seg += 1
        a, b = pts[seg], pts[seg + 1]
        t = 0.0 if seg_len[seg] == 0 else min(max((d - acc) / seg_len[seg], 0.0), 1.0)
        r = round(a[0] + t * (b[0] - a[0]))
        c = round(a[1] + t * (b[1] - a[1]))
        if not samples or samples[-1] != (r, c):
            samples.append((r, c))
    # collapse any later duplicates too; disk union makes them moot anyway
    seen: set[tuple[int, int]] = set()
    out = []
    for r, c in samples:
        if (r, c) not in seen:
            seen.add((r, c))
            out.append(Click(r, c, scribble.polarity))
    return out


# -- rasterization ------------------------------------------------------------------


def _check_bounds(row: int, col: int, h: int, w: int, what: str) -> None:
    if not (0 <= row < h and 0 <= col < w):
        raise PromptValidationError(f"{what} at ({row},{col}) outside {h}x{w} image")


def rasterize_click(dense_map: np.ndarray, click: Click, radius: int) -> np.ndarray:
    """Union a binary disk of `radius` into channel 0 (positive) or 1 (negative)."""
    _, h, w = dense_map.shape
    _check_bounds(click.row, click.col, h, w, "click")
    if radius < 0:
        raise PromptValidationError(f"click radius must be >= 0, got {radius}")
    channel = 0 if click.polarity == POSITIVE else 1
    r0 = max(click.row - radius, 0)
    r1 = min(click.row + radius, h - 1)
    c0 = max(click.col - radius, 0)
    c1 = min(click.col + radius, w - 1)
    rr, cc = np.ogrid[r0:r1 + 1, c0:c1 + 1]
    disk = (rr - click.row) ** 2 + (cc - click.col) ** 2 <= radius * radius
    patch = dense_map[channel, r0:r1 + 1, c0:c1 + 1]
    np.maximum(patch, disk.astype(dense_map.dtype), out=patch)
    return dense_map


def rasterize(prompts: PromptSet, h: int, w: int,
              radius: int = DEFAULT_CLICK_RADIUS) -> np.ndarray:
    """All prompts into one 3×h×w map: positive / negative / previous mask.

    Pure union per channel, so the result is idempotent and order-independent.
    """
    dense = np.zeros((3, h, w), dtype=np.float32)
    spacing = max(1, radius)
    for click in prompts.clicks:
        rasterize_click(dense, click, radius)
    for box in prompts.boxes:
        for click in box_to_clicks(box):
            _check_bounds(click.row, click.col, h, w, "box corner")
            rasterize_click(dense, click, radius)
    for poly in prompts.polygons:
        for click in polygon_to_clicks(poly):
            _check_bounds(click.row, click.col, h, w, "polygon vertex")
            rasterize_click(dense, click, radius)
    for scribble in prompts.scribbles:
        for click in scribble_to_clicks(scribble, spacing):
            _check_bounds(click.row, click.col, h, w, "scribble sample")
            rasterize_click(dense, click, radius)
    if prompts.mask is not None:
        if prompts.mask.mask.shape != (h, w):
            raise PromptValidationError(
                f"mask prompt shape {prompts.mask.mask.shape} != image {h}x{w}")
        dense[2] = prompts.mask.mask.astype(np.float32)
    return dense
