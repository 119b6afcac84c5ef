import numpy as np
import pytest

from promptseg.autodiff import Adam, Tensor
from promptseg.data import (
    AugmentConfig, Sample, augment, generate_synthetic_dataset,
    load_folder_dataset, resize_and_pad, save_dataset_folder,
)
from promptseg.model import ModelConfig, SegmentationModel, load_checkpoint
from promptseg.training import (
    TrainConfig, fit, normalized_focal_loss, resolve_dataset, train_step,
)

from gradcheck import check_gradients

TINY = ModelConfig(input_size=32, patch_size=8, embed_dim=16, depth=1, num_heads=2,
                   fusion_depth=1, decoder_dim=8, text_dim=8, seed=0)


def tiny_train_cfg(**kw):
    base = dict(epochs=1, batch_size=2, base_lr=1e-3, decay_epoch=1,
                augment=AugmentConfig.none(), seed=0, eval_every=0)
    base.update(kw)
    return TrainConfig(**base)


# -- normalized focal loss ----------------------------------------------------------

def bce_oracle(logits, gt):
    """Direct mean binary cross-entropy, written independently in numpy."""
    p = 1.0 / (1.0 + np.exp(-logits))
    pt = np.where(gt > 0, p, 1.0 - p)
    return float(np.mean(-np.log(pt)))


def test_gamma_zero_reduces_to_bce():
    rng = np.random.default_rng(0)
    logits = rng.standard_normal((9, 11)).astype(np.float32) * 2
    gt = (rng.random((9, 11)) > 0.5).astype(np.uint8)
    loss = normalized_focal_loss(Tensor(logits.copy()), gt, gamma=0.0)
    assert loss.item() == pytest.approx(bce_oracle(logits, gt), rel=1e-5)


def test_near_perfect_prediction_vanishes():
    gt = np.ones((10, 10), dtype=np.uint8)
    logits = Tensor(np.full((10, 10), 14.0, dtype=np.float32))  # p ~ 1 - 1e-6
    assert normalized_focal_loss(logits, gt, gamma=2.0).item() < 1e-5


def test_single_pixel_half_confidence():
    # normalization cancels on one pixel: L = -log 0.5
    loss = normalized_focal_loss(Tensor(np.zeros((1, 1), dtype=np.float32)),
                                 np.ones((1, 1), dtype=np.uint8), gamma=2.0)
    assert loss.item() == pytest.approx(0.6931471805599453, rel=1e-5)


def test_nfl_shape_mismatch():
    from promptseg.autodiff import DimensionError
    with pytest.raises(DimensionError):
        normalized_focal_loss(Tensor(np.zeros((3, 3), dtype=np.float32)),
                              np.zeros((4, 4), dtype=np.uint8))


@pytest.mark.parametrize("gamma", [0.0, 1.0, 2.0])
def test_nfl_gradient_matches_finite_differences(gamma):
    rng = np.random.default_rng(3)
    gt = (rng.random((4, 5)) > 0.5).astype(np.uint8)
    logits = rng.standard_normal((4, 5)) * 1.5
    check_gradients(lambda x: normalized_focal_loss(x, gt, gamma), [logits], rng)


def test_nfl_differentiable_through_model():
    m = SegmentationModel(TINY)
    from promptseg.prompts import Click, PromptSet
    img = np.random.default_rng(1).random((3, 32, 32)).astype(np.float32)
    gt = np.zeros((32, 32), dtype=np.uint8)
    gt[10:20, 10:20] = 1
    loss = normalized_focal_loss(m.forward(img, PromptSet(clicks=[Click(15, 15)])), gt)
    loss.backward()
    grads = [p.grad for p in m.parameters().values() if p.grad is not None]
    assert grads and any(np.abs(g).sum() > 0 for g in grads)


# -- augmentation -----------------------------------------------------------------------

def checker_sample(h=24, w=20):
    rng = np.random.default_rng(4)
    img = rng.random((3, h, w)).astype(np.float32)
    gt = np.zeros((h, w), dtype=np.uint8)
    gt[4:12, 6:14] = 1
    return Sample(img, gt, "aug")


def test_all_toggles_off_is_identity():
    s = checker_sample()
    out = augment(s, AugmentConfig.none(), seed=9)
    np.testing.assert_array_equal(out.image, s.image)
    np.testing.assert_array_equal(out.gt, s.gt)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_double_flip_is_identity(seed):
    cfg = AugmentConfig(False, True, True, False, False, False)
    s = checker_sample()
    twice = augment(augment(s, cfg, seed), cfg, seed)
    np.testing.assert_array_equal(twice.image, s.image)
    np.testing.assert_array_equal(twice.gt, s.gt)


@pytest.mark.parametrize("seed", [0, 5, 11])
def test_rot90_four_times_is_identity(seed):
    cfg = AugmentConfig(False, False, False, True, False, False)
    s = checker_sample(24, 24)
    out = s
    for _ in range(4):
        out = augment(out, cfg, seed)
    np.testing.assert_array_equal(out.image, s.image)
    np.testing.assert_array_equal(out.gt, s.gt)


def test_flips_and_rot90_preserve_area():
    cfg = AugmentConfig(False, True, True, True, False, False)
    s = checker_sample(24, 24)
    for seed in range(8):
        out = augment(s, cfg, seed)
        assert out.gt.sum() == s.gt.sum()


def test_augment_deterministic_per_seed():
    cfg = AugmentConfig()
    s = checker_sample()
    a = augment(s, cfg, seed=7)
    b = augment(s, cfg, seed=7)
    np.testing.assert_array_equal(a.image, b.image)
    np.testing.assert_array_equal(a.gt, b.gt)


# -- resize_and_pad ------------------------------------------------------------------------

def test_square_input_no_padding():
    rng = np.random.default_rng(5)
    img = rng.random((3, 40, 40)).astype(np.float32)
    gt = (rng.random((40, 40)) > 0.5).astype(np.uint8)
    for mode in ("train", "test"):
        out_img, out_gt = resize_and_pad(img, gt, 32, mode=mode)
        assert out_img.shape == (3, 32, 32) and out_gt.shape == (32, 32)
    # train mode on an exact-size square is the identity
    same_img, same_gt = resize_and_pad(img, gt, 40, mode="train")
    np.testing.assert_array_equal(same_img, img)
    np.testing.assert_array_equal(same_gt, gt)


def test_aspect_preserving_pad_arithmetic():
    img = np.ones((3, 200, 100), dtype=np.float32)
    gt = np.ones((200, 100), dtype=np.uint8)
    out_img, out_gt = resize_and_pad(img, gt, 128, mode="train")
    assert out_img.shape == (3, 128, 128)
    assert (out_img[:, :, :64] > 0).all()
    assert (out_img[:, :, 64:] == 0).all()       # 64 zero-padded columns
    assert out_gt[:, :64].all() and not out_gt[:, 64:].any()


def test_test_mode_always_square():
    img = np.ones((3, 50, 90), dtype=np.float32)
    gt = np.ones((50, 90), dtype=np.uint8)
    out_img, out_gt = resize_and_pad(img, gt, 64, mode="test")
    assert out_img.shape == (3, 64, 64) and out_gt.shape == (64, 64)
    assert out_gt.all()                          # stretched, not padded


# -- synthetic data --------------------------------------------------------------------------

def test_synthetic_masks_nonempty_binary():
    for s in generate_synthetic_dataset(8, 48, 48, seed=2):
        assert set(np.unique(s.gt)) <= {0, 1}
        assert s.gt.sum() > 0
        assert s.image.dtype == np.float32
        assert 0.0 <= s.image.min() and s.image.max() <= 1.0


def test_synthetic_deterministic():
    a = generate_synthetic_dataset(4, 32, 32, seed=5)
    b = generate_synthetic_dataset(4, 32, 32, seed=5)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.image, y.image)
        np.testing.assert_array_equal(x.gt, y.gt)


def test_synthetic_target_area_band():
    samples = generate_synthetic_dataset(30, 64, 64, seed=6)
    fracs = [s.gt.mean() for s in samples]
    assert min(fracs) >= 0.01 and max(fracs) <= 0.60


def test_folder_roundtrip(tmp_path):
    samples = generate_synthetic_dataset(3, 32, 32, seed=7)
    save_dataset_folder(samples, tmp_path)
    loaded = load_folder_dataset(tmp_path)
    assert [s.sample_id for s in loaded] == sorted(s.sample_id for s in samples)
    by_id = {s.sample_id: s for s in samples}
    for s in loaded:
        np.testing.assert_array_equal(s.gt, by_id[s.sample_id].gt)
        assert np.abs(s.image - by_id[s.sample_id].image).max() < 1 / 255 + 1e-6


def test_resolve_dataset_synthetic_spec():
    samples = resolve_dataset({"synthetic": {"n": 2, "h": 32, "w": 32, "seed": 1}})
    assert len(samples) == 2


def test_resolve_dataset_bad_spec():
    with pytest.raises(ValueError):
        resolve_dataset(42)


# -- train_step -------------------------------------------------------------------------------

def test_train_step_finite_loss_and_stats():
    model = SegmentationModel(TINY)
    cfg = tiny_train_cfg()
    opt = Adam(model.parameters(), lr=cfg.base_lr)
    batch = generate_synthetic_dataset(2, 32, 32, seed=8)
    report = train_step(model, batch, opt, cfg, step_seed=123)
    assert np.isfinite(report.loss)
    assert report.random_samples + report.iterative_samples == 2
    assert report.clicks_used >= 1


def test_train_step_deterministic():
    def run():
        model = SegmentationModel(TINY)
        cfg = tiny_train_cfg()
        opt = Adam(model.parameters(), lr=cfg.base_lr)
        batch = generate_synthetic_dataset(2, 32, 32, seed=8)
        losses = [train_step(model, batch, opt, cfg, step_seed=s).loss for s in range(4)]
        return losses

    assert run() == run()


def test_loss_trajectory_decreases():
    # fixed 16-sample set; the 20-step moving average must fall over 200 steps
    model = SegmentationModel(TINY)
    cfg = tiny_train_cfg(batch_size=4)
    opt = Adam(model.parameters(), lr=2e-3)
    data = generate_synthetic_dataset(16, 32, 32, seed=9)
    losses = []
    rng = np.random.default_rng(0)
    for step in range(200):
        idx = rng.permutation(16)[:4]
        losses.append(train_step(model, [data[i] for i in idx], opt, cfg, step_seed=step).loss)
    head = float(np.mean(losses[:20]))
    tail = float(np.mean(losses[-20:]))
    assert tail < head, f"moving-average loss did not decrease: {head:.4f} -> {tail:.4f}"


# -- fit ----------------------------------------------------------------------------------------

def test_fit_lr_schedule_and_metrics_rows(tmp_path):
    model = SegmentationModel(TINY)
    data = generate_synthetic_dataset(4, 32, 32, seed=10)
    cfg = tiny_train_cfg(epochs=3, decay_epoch=2, base_lr=1e-3, eval_every=1,
                         checkpoint_every=10)
    _, metrics = fit(model, data, cfg, out_dir=tmp_path)
    assert len(metrics) == 3
    assert metrics[0]["lr"] == pytest.approx(1e-3)
    assert metrics[1]["lr"] == pytest.approx(1e-3)
    assert metrics[2]["lr"] == pytest.approx(1e-4)
    assert all("miou1" in row for row in metrics)
    assert (tmp_path / "model.ckpt").exists()
    assert (tmp_path / "metrics.json").exists()


def test_fit_resume_is_bitwise_equivalent(tmp_path):
    data = generate_synthetic_dataset(4, 32, 32, seed=11)

    def straight():
        model = SegmentationModel(TINY)
        cfg = tiny_train_cfg(epochs=2, decay_epoch=2, eval_every=0, checkpoint_every=99)
        fit(model, data, cfg, out_dir=None)
        return model

    def interrupted():
        model = SegmentationModel(TINY)
        cfg1 = tiny_train_cfg(epochs=1, decay_epoch=1, eval_every=0, checkpoint_every=1)
        fit(model, data, cfg1, out_dir=tmp_path / "stage1")
        resumed, extras = load_checkpoint(tmp_path / "stage1" / "model.ckpt")
        cfg2 = tiny_train_cfg(epochs=2, decay_epoch=2, eval_every=0, checkpoint_every=99)
        fit(resumed, data, cfg2, out_dir=None, resume=extras)
        return resumed

    a = straight()
    b = interrupted()
    for name, p in a.parameters().items():
        np.testing.assert_array_equal(p.data, b.parameters()[name].data, err_msg=name)
