"""The segmentation network and its checkpoint persistence.

A plain pre-norm ViT encodes the image once into a token grid; the dense
prompt map is patch-embedded by a separate zero-initialized convolution,
added element-wise, and (optionally) mixed by up to two self-attention
blocks.  A text embedding, when supplied, conditions the fused tokens via
two cross-attention blocks.  The decoder fans the single-scale tokens into
a {1/32, 1/16, 1/8, 1/4} feature pyramid and collapses it back to
full-resolution logits.

Weights are immutable during inference, so any number of concurrent forward
passes may share one instance; training mutates weights and must be
exclusive.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import (DimensionError, Module, Parameter, Tensor, add,
                       bilinear_resize, conv2d, conv_transpose2d, gelu,
                       layer_norm, matmul, reshape, softmax, transpose)
from .prompts import PromptSet, rasterize

CHECKPOINT_MAGIC = b"PROMPTSG"
CHECKPOINT_VERSION = 1

PYRAMID_SCALES = (32, 16, 8, 4)


class CheckpointError(RuntimeError):
    """Raised when a checkpoint file cannot be trusted."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; the desk default trains on a laptop CPU in minutes."""

    input_size: int = 128
    patch_size: int = 8
    embed_dim: int = 64
    depth: int = 4
    num_heads: int = 4
    fusion_depth: int = 2          # 0 disables dense fusion (addition only)
    fusion_heads: int = 1          # single head keeps the per-prompt path cheap
    use_disk: bool = True          # False rasterizes clicks as single pixels
    click_radius: int = 5
    mlp_ratio: int = 4
    decoder_dim: int = 32
    text_dim: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.input_size % self.patch_size:
            raise ValueError(f"input_size {self.input_size} not divisible by patch_size {self.patch_size}")
        if not 0 <= self.fusion_depth <= 2:
            raise ValueError(f"fusion_depth must be in {{0,1,2}}, got {self.fusion_depth}")
        if self.embed_dim % self.num_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.embed_dim % self.fusion_heads:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by fusion_heads {self.fusion_heads}")
        for value in (self.input_size, self.patch_size, self.embed_dim, self.depth,
                      self.num_heads, self.decoder_dim, self.text_dim):
            if value <= 0:
                raise ValueError("all config dimensions must be positive")
        for scale in PYRAMID_SCALES:
            hi, lo = max(self.patch_size, scale), min(self.patch_size, scale)
            if hi % lo:
                raise ValueError(f"patch_size {self.patch_size} incompatible with 1/{scale} pyramid scale")
        if self.input_size % 32:
            raise ValueError(f"input_size {self.input_size} must be divisible by 32")

    @property
    def grid_size(self) -> int:
        return self.input_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid_size ** 2

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "ModelConfig":
        return ModelConfig(**json.loads(text))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def effective_radius(self) -> int:
        return self.click_radius if self.use_disk else 0


@dataclass(frozen=True)
class ImageEmbedding:
    """Single-pass encoder output; cheap to reuse across prompt updates."""

    tokens: Tensor            # (N, D)
    image_hash: str
    config_fingerprint: str


# -- layers ----------------------------------------------------------------------


def _xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out), dtype=np.float32)
        else:
            w = _xavier(rng, d_in, d_out, (d_in, d_out))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(d_out, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(dim, dtype=np.float32))
        self.beta = Parameter(np.zeros(dim, dtype=np.float32))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    n, d = x.shape
    return transpose(reshape(x, (n, heads, d // heads)), (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    h, n, dh = x.shape
    return reshape(transpose(x, (1, 0, 2)), (n, h * dh))


def _attend(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Scaled dot-product attention over (tokens, dim) operands."""
    dh = q.shape[-1] // heads
    qh = _split_heads(q, heads) * (1.0 / np.sqrt(dh))   # scale q, not the N x N scores
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scores = matmul(qh, transpose(kh, (0, 2, 1)))
    return _merge_heads(matmul(softmax(scores, axis=-1), vh))


class SelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.heads = heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        n, d = x.shape
        qkv = reshape(transpose(reshape(self.qkv(x), (n, 3, d)), (1, 0, 2)), (3 * n, d))
        q, k, v = _chunk3(qkv, n)
        return self.proj(_attend(q, k, v, self.heads))


def _chunk3(x: Tensor, n: int) -> tuple[Tensor, Tensor, Tensor]:
    return (_slice_rows(x, 0, n), _slice_rows(x, n, 2 * n), _slice_rows(x, 2 * n, 3 * n))


def _slice_rows(x: Tensor, lo: int, hi: int) -> Tensor:
    data = x.data[lo:hi]

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[lo:hi] = g
            x._accumulate(full)

    return ad._make(data, (x,), backward)


class CrossAttention(Module):
    """Queries from one token stream, keys/values from another.

    The output projection starts at zero so the surrounding residual is an
    identity at initialization.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.heads = heads
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng, zero_init=True)

    def __call__(self, queries: Tensor, context: Tensor) -> Tensor:
        return self.out(_attend(self.q(queries), self.k(context), self.v(context), self.heads))


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class Block(Module):
    """Pre-norm transformer block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: int, rng: np.random.Generator):
        self.ln1 = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = Mlp(dim, dim * mlp_ratio, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = add(x, self.attn(self.ln1(x)))
        return add(x, self.mlp(self.ln2(x)))


class FusionBlock(Module):
    """Pre-norm self-attention block (attention sublayer only).

    The fusion stage mixes prompt evidence across tokens; keeping it
    MLP-free keeps the per-prompt path cheap relative to the one-off
    encoder pass, which is the whole point of encode-once serving.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.ln = LayerNorm(dim)
        self.attn = SelfAttention(dim, heads, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return add(x, self.attn(self.ln(x)))


class PatchEmbed(Module):
    """Non-overlapping convolution from channels to token grid."""

    def __init__(self, in_ch: int, dim: int, patch: int, rng: np.random.Generator,
                 zero_init: bool = False):
        self.patch = patch
        fan = in_ch * patch * patch
        if zero_init:
            w = np.zeros((dim, in_ch, patch, patch), dtype=np.float32)
        else:
            w = _xavier(rng, fan, dim, (dim, in_ch, patch, patch))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(dim, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        out = conv2d(x, self.weight, self.bias, stride=self.patch, pad=0)
        d, gh, gw = out.shape
        return transpose(reshape(out, (d, gh * gw)), (1, 0))   # (N, D)


class TextBlock(Module):
    """One round of text<-tokens then tokens<-text cross-attention."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        self.ln_t = LayerNorm(dim)
        self.ln_ctx = LayerNorm(dim)
        self.text_reads = CrossAttention(dim, heads, rng)
        self.ln_x = LayerNorm(dim)
        self.ln_tq = LayerNorm(dim)
        self.tokens_read = CrossAttention(dim, heads, rng)

    def __call__(self, tokens: Tensor, text: Tensor) -> tuple[Tensor, Tensor]:
        text = add(text, self.text_reads(self.ln_t(text), self.ln_ctx(tokens)))
        tokens = add(tokens, self.tokens_read(self.ln_x(tokens), self.ln_tq(text)))
        return tokens, text


class PyramidBranch(Module):
    """One parallel path of the simple feature pyramid."""

    def __init__(self, dim: int, out_dim: int, patch: int, scale: int, rng: np.random.Generator):
        self.scale = scale
        if patch == scale:
            self.mode = "identity"
            self.weight = Parameter(_xavier(rng, dim, out_dim, (out_dim, dim, 1, 1)))
        elif patch > scale:                       # token grid is coarser: upsample
            f = patch // scale
            self.mode = "up"
            self.factor = f
            self.weight = Parameter(_xavier(rng, dim, out_dim * f * f, (dim, out_dim, f, f)))
        else:                                     # token grid is finer: downsample
            f = scale // patch
            self.mode = "down"
            self.factor = f
            self.weight = Parameter(_xavier(rng, dim * f * f, out_dim, (out_dim, dim, f, f)))
        self.bias = Parameter(np.zeros(out_dim, dtype=np.float32))

    def __call__(self, grid: Tensor) -> Tensor:
        if self.mode == "identity":
            return conv2d(grid, self.weight, self.bias, stride=1, pad=0)
        if self.mode == "up":
            return conv_transpose2d(grid, self.weight, self.bias, stride=self.factor)
        return conv2d(grid, self.weight, self.bias, stride=self.factor, pad=0)


class Decoder(Module):
    """Simple feature pyramid plus two 1x1-conv MLP stages."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        d, dd = cfg.embed_dim, cfg.decoder_dim
        self.branches = [PyramidBranch(d, dd, cfg.patch_size, s, rng) for s in PYRAMID_SCALES]
        self.stage1 = [Parameter(_xavier(rng, dd, dd, (dd, dd, 1, 1))) for _ in PYRAMID_SCALES]
        self.stage1_bias = [Parameter(np.zeros(dd, dtype=np.float32)) for _ in PYRAMID_SCALES]
        self.stage2 = Parameter(_xavier(rng, dd, dd, (dd, dd, 1, 1)))
        self.stage2_bias = Parameter(np.zeros(dd, dtype=np.float32))
        self.head = Parameter(_xavier(rng, dd, 1, (1, dd, 1, 1)))
        self.head_bias = Parameter(np.zeros(1, dtype=np.float32))

    def __call__(self, grid: Tensor, input_size: int) -> Tensor:
        quarter = input_size // 4
        fused = None
        for branch, w1, b1 in zip(self.branches, self.stage1, self.stage1_bias):
            feat = gelu(conv2d(branch(grid), w1, b1, stride=1, pad=0))
            feat = bilinear_resize(feat, quarter, quarter)
            fused = feat if fused is None else add(fused, feat)
        fused = gelu(conv2d(fused, self.stage2, self.stage2_bias, stride=1, pad=0))
        logits = conv2d(fused, self.head, self.head_bias, stride=1, pad=0)
        logits = bilinear_resize(logits, input_size, input_size)
        return reshape(logits, (input_size, input_size))


# -- the network -------------------------------------------------------------------


class SegmentationModel(Module):
    """Encode-once promptable segmentation network."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        d = cfg.embed_dim
        self.patch_embed = PatchEmbed(3, d, cfg.patch_size, rng)
        self.pos_embed = Parameter(
            (rng.standard_normal((cfg.num_tokens, d)) * 0.02).astype(np.float32))
        self.blocks = [Block(d, cfg.num_heads, cfg.mlp_ratio, rng) for _ in range(cfg.depth)]
        self.encoder_norm = LayerNorm(d)
        # zero init: an empty prompt map leaves image tokens untouched
        self.prompt_embed = PatchEmbed(3, d, cfg.patch_size, rng, zero_init=True)
        self.fusion_blocks = [FusionBlock(d, cfg.fusion_heads, rng)
                              for _ in range(cfg.fusion_depth)]
        self.text_proj = Linear(cfg.text_dim, d, rng)
        self.text_blocks = [TextBlock(d, cfg.num_heads, rng) for _ in range(2)]
        self.decoder = Decoder(cfg, rng)

    # -- stages -----------------------------------------------------------------

    def encode_image(self, image: np.ndarray) -> ImageEmbedding:
        """One full encoder pass; the result is reusable across prompts."""
        img = np.asarray(image, dtype=np.float32)
        if img.shape != (3, self.cfg.input_size, self.cfg.input_size):
            raise DimensionError(
                f"image shape {img.shape} != (3, {self.cfg.input_size}, {self.cfg.input_size})")
        x = add(self.patch_embed(Tensor(img)), self.pos_embed)
        for block in self.blocks:
            x = block(x)
        x = self.encoder_norm(x)
        return ImageEmbedding(x, image_hash(img), self.cfg.fingerprint())

    def embed_prompts(self, dense_map: np.ndarray) -> Tensor:
        dm = np.asarray(dense_map, dtype=np.float32)
        if dm.shape != (3, self.cfg.input_size, self.cfg.input_size):
            raise DimensionError(
                f"prompt map shape {dm.shape} != (3, {self.cfg.input_size}, {self.cfg.input_size})")
        return self.prompt_embed(Tensor(dm))

    def fuse(self, image_tokens: Tensor, prompt_tokens: Tensor) -> Tensor:
        if image_tokens.shape != prompt_tokens.shape:
            raise DimensionError(
                f"token shapes differ: {image_tokens.shape} vs {prompt_tokens.shape}")
        x = add(image_tokens, prompt_tokens)
        for block in self.fusion_blocks:
            x = block(x)
        return x

    def cross_attend_text(self, tokens: Tensor, text: np.ndarray | None) -> Tensor:
        if text is None:
            return tokens
        vec = np.asarray(text, dtype=np.float32).reshape(1, -1)
        if vec.shape[1] != self.cfg.text_dim:
            raise DimensionError(f"text embedding dim {vec.shape[1]} != config text_dim {self.cfg.text_dim}")
        t = self.text_proj(Tensor(vec))
        for block in self.text_blocks:
            tokens, t = block(tokens, t)
        return tokens

    def decode(self, tokens: Tensor) -> Tensor:
        n, d = tokens.shape
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise DimensionError(f"token count {n} is not a square grid")
        grid = reshape(transpose(tokens, (1, 0)), (d, side, side))
        return self.decoder(grid, self.cfg.input_size)

    # -- composition ---------------------------------------------------------------

    def predict_from_embedding(self, embedding: ImageEmbedding, prompts: PromptSet) -> Tensor:
        dense = rasterize(prompts, self.cfg.input_size, self.cfg.input_size,
                          self.cfg.effective_radius())
        fused = self.fuse(embedding.tokens, self.embed_prompts(dense))
        fused = self.cross_attend_text(fused, prompts.text_embedding)
        return self.decode(fused)

    def forward(self, image: np.ndarray, prompts: PromptSet) -> Tensor:
        return self.predict_from_embedding(self.encode_image(image), prompts)

    def parameters(self) -> dict[str, Parameter]:
        return self.named_parameters()


def image_hash(image: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(image, dtype=np.float32).tobytes()).hexdigest()[:16]


def binarize(logits: Tensor | np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Sigmoid-then-threshold; 0.5 on probabilities is 0 on logits."""
    arr = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    cut = np.log(threshold / (1.0 - threshold))
    return (arr > cut).astype(np.uint8)


# -- checkpoint io -------------------------------------------------------------------


def _write_record(buf: io.BytesIO, name: str, arr: np.ndarray) -> None:
    raw = name.encode()
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)
    buf.write(struct.pack("<B", 0 if arr.dtype == np.float32 else 1))
    buf.write(struct.pack("<B", arr.ndim))
    for dim in arr.shape:
        buf.write(struct.pack("<I", dim))
    buf.write(np.ascontiguousarray(arr).astype("<f4" if arr.dtype == np.float32 else "<f8").tobytes())


def _read_record(buf: io.BytesIO) -> tuple[str, np.ndarray]:
    (name_len,) = struct.unpack("<H", buf.read(2))
    name = buf.read(name_len).decode()
    (dtype_tag,) = struct.unpack("<B", buf.read(1))
    (ndim,) = struct.unpack("<B", buf.read(1))
    shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
    dtype = np.dtype("<f4") if dtype_tag == 0 else np.dtype("<f8")
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(buf.read(count * dtype.itemsize), dtype=dtype).reshape(shape)
    return name, data.astype(np.float32 if dtype_tag == 0 else np.float64)


def save_checkpoint(model: SegmentationModel, path, optimizer: "ad.Adam | None" = None,
                    progress: dict | None = None) -> None:
    """Versioned binary dump: config, named parameters, optional optimizer."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    config_json = model.cfg.to_json().encode()
    buf.write(struct.pack("<I", len(config_json)))
    buf.write(config_json)
    fp = model.cfg.fingerprint().encode()
    buf.write(struct.pack("<H", len(fp)))
    buf.write(fp)
    params = model.parameters()
    buf.write(struct.pack("<I", len(params)))
    for name in sorted(params):
        _write_record(buf, name, params[name].data)
    buf.write(struct.pack("<B", 1 if optimizer is not None else 0))
    if optimizer is not None:
        state = optimizer.state
        buf.write(struct.pack("<Q", state.step_count))
        buf.write(struct.pack("<d", state.lr))
        buf.write(struct.pack("<I", len(state.schedule)))
        for epoch, lr in state.schedule:
            buf.write(struct.pack("<Id", epoch, lr))
        moments = sorted(state.m)
        buf.write(struct.pack("<I", len(moments)))
        for name in moments:
            _write_record(buf, "m:" + name, state.m[name])
            _write_record(buf, "v:" + name, state.v[name])
        prog = progress or {}
        buf.write(struct.pack("<II", int(prog.get("epoch", 0)), int(prog.get("global_step", 0))))
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path) -> tuple[SegmentationModel, dict]:
    """Rebuild the model bitwise; returns (model, extras) where extras may
    carry optimizer state and training progress."""
    with open(path, "rb") as fh:
        buf = io.BytesIO(fh.read())
    magic = buf.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint file")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    (cfg_len,) = struct.unpack("<I", buf.read(4))
    cfg = ModelConfig.from_json(buf.read(cfg_len).decode())
    (fp_len,) = struct.unpack("<H", buf.read(2))
    stored_fp = buf.read(fp_len).decode()
    if stored_fp != cfg.fingerprint():
        raise CheckpointError(f"config fingerprint mismatch: file says {stored_fp}, config hashes to {cfg.fingerprint()}")
    model = SegmentationModel(cfg)
    params = model.parameters()
    (count,) = struct.unpack("<I", buf.read(4))
    seen = set()
    for _ in range(count):
        name, data = _read_record(buf)
        if name not in params:
            raise CheckpointError(f"checkpoint parameter {name!r} unknown to this architecture")
        if params[name].data.shape != data.shape:
            raise CheckpointError(
                f"parameter {name!r} shape {data.shape} != expected {params[name].data.shape}")
        params[name].data = np.ascontiguousarray(data)
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)[:4]}...")
    extras: dict = {}
    (has_opt,) = struct.unpack("<B", buf.read(1))
    if has_opt:
        (step_count,) = struct.unpack("<Q", buf.read(8))
        (lr,) = struct.unpack("<d", buf.read(8))
        (n_sched,) = struct.unpack("<I", buf.read(4))
        schedule = [struct.unpack("<Id", buf.read(12)) for _ in range(n_sched)]
        state = ad.OptimizerState(lr, [(int(e), float(v)) for e, v in schedule])
        state.step_count = step_count
        (n_moments,) = struct.unpack("<I", buf.read(4))
        for _ in range(n_moments):
            m_name, m_data = _read_record(buf)
            v_name, v_data = _read_record(buf)
            state.m[m_name[2:]] = m_data
            state.v[v_name[2:]] = v_data
        epoch, global_step = struct.unpack("<II", buf.read(8))
        extras["optimizer_state"] = state
        extras["epoch"] = epoch
        extras["global_step"] = global_step
    return model, extras
