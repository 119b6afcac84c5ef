"""Samples, augmentation, resize rules, and dataset generation/loading.

The synthetic generator is the desk-scale stand-in for a real instance
corpus: each image carries one to three anti-aliased shapes over a textured
background, and the ground truth is the mask of one designated target shape
(always drawn on top).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

from .autodiff import _interp_matrix
from .prompts import PromptSet

TRAIN = "train"
TEST = "test"


@dataclass
class Sample:
    image: np.ndarray                 # (3, H, W) float32 in [0, 1]
    gt: np.ndarray                    # (H, W) uint8
    sample_id: str = ""
    prompts: PromptSet | None = None  # optional cached prompt set

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float32)
        self.gt = (np.asarray(self.gt) > 0).astype(np.uint8)
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be (3, H, W), got {self.image.shape}")
        if self.gt.shape != self.image.shape[1:]:
            raise ValueError(f"gt shape {self.gt.shape} != image spatial {self.image.shape[1:]}")


def resize_image(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (C, H, W) array (same convention as the model op)."""
    c, h, w = arr.shape
    if (h, w) == (out_h, out_w):
        return arr.copy()
    rh = _interp_matrix(h, out_h, np.float32)
    rw = _interp_matrix(w, out_w, np.float32)
    tmp = np.tensordot(rh, arr, axes=(1, 1)).transpose(1, 0, 2)
    return np.ascontiguousarray(tmp @ rw.T, dtype=np.float32)


def resize_mask(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize keeps masks binary."""
    h, w = mask.shape
    if (h, w) == (out_h, out_w):
        return mask.copy()
    rows = np.minimum((np.arange(out_h) + 0.5) * h / out_h, h - 1).astype(int)
    cols = np.minimum((np.arange(out_w) + 0.5) * w / out_w, w - 1).astype(int)
    return mask[rows][:, cols]


def resize_and_pad(image: np.ndarray, mask: np.ndarray, target: int,
                   mode: str = TRAIN) -> tuple[np.ndarray, np.ndarray]:
    """Train mode keeps aspect (longest side -> target, zero-pad bottom/right);
    test mode stretches both sides to target directly."""
    if target <= 0:
        raise ValueError(f"target must be positive, got {target}")
    if mode not in (TRAIN, TEST):
        raise ValueError(f"mode must be {TRAIN!r} or {TEST!r}, got {mode!r}")
    _, h, w = image.shape
    if mode == TEST:
        return resize_image(image, target, target), resize_mask(mask, target, target)
    scale = target / max(h, w)
    nh = max(1, round(h * scale))
    nw = max(1, round(w * scale))
    img = resize_image(image, nh, nw)
    msk = resize_mask(mask, nh, nw)
    out_img = np.zeros((3, target, target), dtype=np.float32)
    out_msk = np.zeros((target, target), dtype=np.uint8)
    out_img[:, :nh, :nw] = img
    out_msk[:nh, :nw] = msk
    return out_img, out_msk


# -- augmentation -----------------------------------------------------------------


@dataclass(frozen=True)
class AugmentConfig:
    resize_jitter: bool = True
    hflip: bool = True
    vflip: bool = True
    rot90: bool = True
    affine: bool = True            # bounded shift-scale-rotate
    color_jitter: bool = True      # per-channel gain/bias
    jitter_range: tuple[float, float] = (0.8, 1.25)
    shift_frac: float = 0.1
    scale_range: tuple[float, float] = (0.9, 1.1)
    rotate_deg: float = 15.0
    gain_range: tuple[float, float] = (0.8, 1.2)
    bias_range: tuple[float, float] = (-0.1, 0.1)

    @staticmethod
    def none() -> "AugmentConfig":
        return AugmentConfig(False, False, False, False, False, False)


def augment(sample: Sample, cfg: AugmentConfig, seed) -> Sample:
    """Apply the enabled subset; image and mask move together, per-seed stable."""
    rng = np.random.default_rng(seed)
    img = sample.image
    msk = sample.gt
    if cfg.resize_jitter:
        factor = rng.uniform(*cfg.jitter_range)
        _, h, w = img.shape
        nh, nw = max(8, round(h * factor)), max(8, round(w * factor))
        img = resize_image(img, nh, nw)
        msk = resize_mask(msk, nh, nw)
    if cfg.hflip and rng.random() < 0.5:
        img = img[:, :, ::-1].copy()
        msk = msk[:, ::-1].copy()
    if cfg.vflip and rng.random() < 0.5:
        img = img[:, ::-1, :].copy()
        msk = msk[::-1, :].copy()
    if cfg.rot90:
        k = int(rng.integers(0, 4))
        if k:
            img = np.ascontiguousarray(np.rot90(img, k, axes=(1, 2)))
            msk = np.ascontiguousarray(np.rot90(msk, k))
    if cfg.affine:
        _, h, w = img.shape
        angle = np.deg2rad(rng.uniform(-cfg.rotate_deg, cfg.rotate_deg))
        scale = rng.uniform(*cfg.scale_range)
        dy = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * h
        dx = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * w
        cos, sin = np.cos(angle) / scale, np.sin(angle) / scale
        matrix = np.array([[cos, -sin], [sin, cos]])
        center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
        offset = center - matrix @ center + np.array([dy, dx])
        img = np.stack([ndimage.affine_transform(ch, matrix, offset=offset, order=1,
                                                 mode="constant", cval=0.0)
                        for ch in img]).astype(np.float32)
        msk = ndimage.affine_transform(msk, matrix, offset=offset, order=0,
                                       mode="constant", cval=0).astype(np.uint8)
    if cfg.color_jitter:
        gain = rng.uniform(*cfg.gain_range, size=(3, 1, 1)).astype(np.float32)
        bias = rng.uniform(*cfg.bias_range, size=(3, 1, 1)).astype(np.float32)
        img = np.clip(img * gain + bias, 0.0, 1.0)
    return Sample(img, msk, sample.sample_id, sample.prompts)


# -- synthetic shapes ----------------------------------------------------------------


def _ellipse_alpha(h, w, rng) -> np.ndarray:
    cr = rng.uniform(0.2 * h, 0.8 * h)
    cc = rng.uniform(0.2 * w, 0.8 * w)
    a = rng.uniform(0.08 * h, 0.35 * h)
    b = rng.uniform(0.08 * w, 0.35 * w)
    theta = rng.uniform(0, np.pi)
    rr, cc_grid = np.mgrid[0:h, 0:w].astype(np.float32)
    y = rr - cr
    x = cc_grid - cc
    yr = y * np.cos(theta) + x * np.sin(theta)
    xr = -y * np.sin(theta) + x * np.cos(theta)
    f = (yr / a) ** 2 + (xr / b) ** 2
    return np.clip((1.0 - f) * 0.5 * min(a, b) + 0.5, 0.0, 1.0)


def _rectangle_alpha(h, w, rng) -> np.ndarray:
    r0 = rng.uniform(0.05 * h, 0.55 * h)
    c0 = rng.uniform(0.05 * w, 0.55 * w)
    r1 = r0 + rng.uniform(0.15 * h, 0.4 * h)
    c1 = c0 + rng.uniform(0.15 * w, 0.4 * w)
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float32)
    ar = np.minimum(rr - r0, r1 - rr)
    ac = np.minimum(cc - c0, c1 - cc)
    return np.clip(np.minimum(ar, ac) + 0.5, 0.0, 1.0)


def _polyline_alpha(h, w, rng) -> np.ndarray:
    n_pts = int(rng.integers(3, 6))
    pts = np.column_stack([rng.uniform(0.1 * h, 0.9 * h, n_pts),
                           rng.uniform(0.1 * w, 0.9 * w, n_pts)])
    thickness = rng.uniform(0.03, 0.08) * min(h, w)
    rr, cc = np.mgrid[0:h, 0:w].astype(np.float32)
    dist = np.full((h, w), np.inf, dtype=np.float32)
    for (r0, c0), (r1, c1) in zip(pts[:-1], pts[1:]):
        dy, dx = r1 - r0, c1 - c0
        length2 = dy * dy + dx * dx
        if length2 == 0:
            d = np.hypot(rr - r0, cc - c0)
        else:
            t = np.clip(((rr - r0) * dy + (cc - c0) * dx) / length2, 0.0, 1.0)
            d = np.hypot(rr - (r0 + t * dy), cc - (c0 + t * dx))
        dist = np.minimum(dist, d)
    return np.clip(thickness / 2.0 - dist + 0.5, 0.0, 1.0)


_SHAPES = (_ellipse_alpha, _rectangle_alpha, _polyline_alpha)


def _textured_background(h, w, rng) -> np.ndarray:
    top = rng.uniform(0.1, 0.9, size=3)
    bottom = rng.uniform(0.1, 0.9, size=3)
    ramp = np.linspace(0, 1, h, dtype=np.float32)[None, :, None]
    img = top[:, None, None] * (1 - ramp) + bottom[:, None, None] * ramp
    noise = ndimage.gaussian_filter(rng.standard_normal((3, h, w)), sigma=(0, 6, 6))
    return np.clip(img + 0.08 * noise, 0.0, 1.0).astype(np.float32)


def generate_synthetic_dataset(n: int, h: int, w: int, seed: int,
                               min_area: float = 0.01, max_area: float = 0.60) -> list[Sample]:
    """Deterministic corpus of shape-on-texture samples.

    Each image holds one to three shapes in random stacking order; the target
    is a randomly chosen shape (its visible part), so the prompt, not image
    saliency, decides what counts as foreground.
    """
    if n < 1:
        raise ValueError(f"need n >= 1 samples, got {n}")
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        gt = None
        for _ in range(64):
            n_shapes = int(rng.integers(1, 4))
            alphas = [_SHAPES[rng.integers(0, len(_SHAPES))](h, w, rng) for _ in range(n_shapes)]
            target = int(rng.integers(0, n_shapes))
            visible = alphas[target] > 0.5
            for above in alphas[target + 1:]:
                visible &= ~(above > 0.5)
            frac = visible.mean()
            if min_area <= frac <= max_area:
                gt = visible.astype(np.uint8)
                break
        if gt is None:  # fall back to the last candidate's target shape alone
            gt = (alphas[target] > 0.5).astype(np.uint8)
        img = _textured_background(h, w, rng)
        for alpha in alphas:
            color = rng.uniform(0.05, 0.95, size=(3, 1, 1)).astype(np.float32)
            img = img * (1 - alpha) + color * alpha
        samples.append(Sample(np.clip(img, 0, 1).astype(np.float32), gt, f"synthetic-{seed}-{i}"))
    return samples


# -- folder format -----------------------------------------------------------------


def load_folder_dataset(root) -> list[Sample]:
    """Read `images/NAME.png` + `masks/NAME.png` pairs (nonzero = foreground)."""
    root = Path(root)
    img_dir = root / "images"
    mask_dir = root / "masks"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise IOError(f"dataset at {root} needs images/ and masks/ directories")
    samples = []
    problems = []
    for img_path in sorted(img_dir.iterdir()):
        if img_path.suffix.lower() not in (".png", ".jpg", ".jpeg"):
            continue
        mask_path = mask_dir / (img_path.stem + ".png")
        if not mask_path.exists():
            problems.append(str(mask_path))
            continue
        try:
            img = np.asarray(Image.open(img_path).convert("RGB"), dtype=np.float32) / 255.0
            msk = np.asarray(Image.open(mask_path).convert("L"))
        except Exception:
            problems.append(str(img_path))
            continue
        samples.append(Sample(img.transpose(2, 0, 1), msk > 0, img_path.stem))
    if problems:
        raise IOError(f"unreadable or unpaired dataset files: {problems}")
    if not samples:
        raise IOError(f"no image/mask pairs found under {root}")
    return samples


def save_dataset_folder(samples: list[Sample], root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    for s in samples:
        rgb = (np.clip(s.image, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(rgb).save(root / "images" / f"{s.sample_id}.png")
        Image.fromarray((s.gt * 255).astype(np.uint8)).save(root / "masks" / f"{s.sample_id}.png")
