import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptseg.autodiff import DimensionError
from promptseg.prompts import NEGATIVE, POSITIVE
from promptseg.simulate import (
    FALSE_NEGATIVE, FALSE_POSITIVE, ErrorRegion, click_from_region,
    error_regions, simulate_iterative, simulate_random,
)

from oracles import bf_click


def disk_mask(h, w, row, col, radius):
    rr, cc = np.mgrid[0:h, 0:w]
    return ((rr - row) ** 2 + (cc - col) ** 2 <= radius * radius).astype(np.uint8)


# -- error_regions -----------------------------------------------------------

def test_identical_masks_no_regions():
    m = disk_mask(9, 9, 4, 4, 2)
    assert error_regions(m, m) == []


def test_single_wrong_pixel():
    gt = np.zeros((5, 5), dtype=np.uint8)
    pred = gt.copy()
    pred[2, 3] = 1
    regions = error_regions(pred, gt)
    assert len(regions) == 1
    assert regions[0].kind == FALSE_POSITIVE
    assert regions[0].area == 1
    assert regions[0].seed_pixel == (2, 3)


def test_multiple_regions_areas_and_kinds():
    gt = np.zeros((12, 12), dtype=np.uint8)
    gt[1:2, 1:6] = 1          # FN blob of 5
    gt[8:9, 2:5] = 1          # FN blob of 3
    pred = np.zeros_like(gt)
    pred[4:6, 8:10] = 1       # FP blob of 4
    got = {(r.kind, r.area) for r in error_regions(pred, gt)}
    assert got == {(FALSE_NEGATIVE, 5), (FALSE_NEGATIVE, 3), (FALSE_POSITIVE, 4)}


def test_shape_mismatch():
    with pytest.raises(DimensionError):
        error_regions(np.zeros((3, 3)), np.zeros((4, 4)))


def test_diagonal_pixels_are_one_region():
    gt = np.eye(4, dtype=np.uint8)
    regions = error_regions(np.zeros((4, 4), dtype=np.uint8), gt)
    assert len(regions) == 1 and regions[0].area == 4


# -- click_from_region ----------------------------------------------------------

def test_disk_region_clicks_center():
    m = disk_mask(15, 15, 7, 7, 4).astype(bool)
    click = click_from_region(ErrorRegion(FALSE_NEGATIVE, m, int(m.sum()), (3, 7)))
    assert (click.row, click.col) == (7, 7)
    assert click.polarity == POSITIVE


def test_single_pixel_region():
    m = np.zeros((5, 5), dtype=bool)
    m[1, 3] = True
    click = click_from_region(ErrorRegion(FALSE_POSITIVE, m, 1, (1, 3)))
    assert (click.row, click.col) == (1, 3)
    assert click.polarity == NEGATIVE


def test_line_region_center_with_tie_rule():
    # 1x7 line on a height-1 image: the in-image complement is the two end
    # pixels, so distances run along the line and the middle wins; the
    # row-major tie rule never pulls the click toward the line's start.
    gt = np.zeros((1, 9), dtype=np.uint8)
    gt[0, 1:8] = 1
    click = simulate_iterative(np.zeros_like(gt), gt)
    assert (click.row, click.col) == (0, 4)


# -- simulate_iterative ------------------------------------------------------------

def test_empty_pred_disk_gt():
    gt = disk_mask(17, 17, 8, 8, 5)
    click = simulate_iterative(np.zeros_like(gt), gt)
    assert (click.row, click.col) == (8, 8)
    assert click.polarity == POSITIVE


def test_overprediction_gives_negative_click():
    gt = disk_mask(19, 19, 9, 9, 3)
    pred = disk_mask(19, 19, 9, 9, 3)
    pred[1:4, 13:17] = 1  # spurious FP blob
    click = simulate_iterative(pred, gt)
    assert click.polarity == NEGATIVE
    assert pred[click.row, click.col] == 1 and gt[click.row, click.col] == 0


def test_converged_returns_none():
    m = disk_mask(9, 9, 4, 4, 2)
    assert simulate_iterative(m, m) is None


def test_fn_before_fp_on_area_tie():
    gt = np.zeros((9, 9), dtype=np.uint8)
    gt[0:2, 0:2] = 1                       # FN of 4 (pred misses it)
    pred = np.zeros_like(gt)
    pred[6:8, 6:8] = 1                     # FP of 4
    click = simulate_iterative(pred, gt)
    assert click.polarity == POSITIVE      # FN wins the tie


@given(st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_iterative_matches_bruteforce_oracle(seed):
    rng = np.random.default_rng(seed)
    h, w = 9, 11
    gt = (rng.random((h, w)) > 0.6).astype(np.uint8)
    pred = (rng.random((h, w)) > 0.6).astype(np.uint8)
    click = simulate_iterative(pred, gt)
    oracle = bf_click(pred, gt)
    if oracle is None:
        assert click is None
    else:
        (row, col), polarity = oracle
        assert (click.row, click.col) == (row, col)
        assert click.polarity == polarity


def test_click_always_inside_error_region():
    rng = np.random.default_rng(7)
    for _ in range(40):
        gt = (rng.random((10, 10)) > 0.5).astype(np.uint8)
        pred = (rng.random((10, 10)) > 0.5).astype(np.uint8)
        click = simulate_iterative(pred, gt)
        if click is None:
            continue
        if click.polarity == POSITIVE:
            assert gt[click.row, click.col] == 1 and pred[click.row, click.col] == 0
        else:
            assert gt[click.row, click.col] == 0 and pred[click.row, click.col] == 1


def test_alternating_oracle_fix_decreases_error():
    # an oracle "model" that corrects the clicked region each round
    rng = np.random.default_rng(3)
    gt = disk_mask(20, 20, 10, 10, 6)
    gt |= disk_mask(20, 20, 3, 16, 2)
    pred = np.zeros_like(gt)
    prev_err = int((pred != gt).sum())
    for _ in range(6):
        click = simulate_iterative(pred, gt)
        if click is None:
            break
        regions = error_regions(pred, gt)
        hit = next(r for r in regions if r.pixels[click.row, click.col])
        if hit.kind == FALSE_NEGATIVE:
            pred[hit.pixels] = 1
        else:
            pred[hit.pixels] = 0
        err = int((pred != gt).sum())
        assert err < prev_err
        prev_err = err
    assert prev_err == 0


# -- simulate_random ------------------------------------------------------------

def test_random_positive_click_on_foreground():
    gt = disk_mask(12, 12, 6, 6, 3)
    clicks = simulate_random(gt, 1, 0, seed=0)
    assert len(clicks) == 1
    assert gt[clicks[0].row, clicks[0].col] == 1
    assert clicks[0].polarity == POSITIVE


def test_random_unsatisfiable_negative():
    with pytest.raises(ValueError):
        simulate_random(np.ones((4, 4), dtype=np.uint8), 0, 1, seed=0)


def test_random_unsatisfiable_positive():
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[0, 0] = 1
    with pytest.raises(ValueError):
        simulate_random(gt, 2, 0, seed=0)


def test_random_deterministic_per_seed():
    gt = disk_mask(15, 15, 7, 7, 5)
    a = simulate_random(gt, 3, 2, seed=42)
    b = simulate_random(gt, 3, 2, seed=42)
    c = simulate_random(gt, 3, 2, seed=43)
    assert a == b
    assert a != c


def test_random_without_replacement():
    gt = np.zeros((3, 3), dtype=np.uint8)
    gt[0, :] = 1
    clicks = simulate_random(gt, 3, 0, seed=1)
    assert len({(c.row, c.col) for c in clicks}) == 3
