import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lepfer.channels import (
    HOG_DIM, compute_channels, gradient_maps, hog_descriptor, hog_descriptors, stack_channels,
    window_histogram,
)


def loop_maps(img):
    """Pixel-by-pixel gradients with replicate border, hard unsigned 8-bin split."""
    h, w = img.shape
    out = np.zeros((9, h, w))
    for r in range(h):
        for c in range(w):
            gx = 0.5 * (img[r, min(c + 1, w - 1)] - img[r, max(c - 1, 0)])
            gy = 0.5 * (img[min(r + 1, h - 1), c] - img[max(r - 1, 0), c])
            m = np.sqrt(gx * gx + gy * gy)
            ang = np.arctan2(gy, gx) % np.pi
            out[0, r, c] = m
            out[1 + min(int(ang // (np.pi / 8)), 7), r, c] = m
    return out


def brute_box(maps, x0, x1, y0, y1):
    """Sum over pixel centres with x0 <= x < x1 and y0 <= y < y1."""
    h, w = maps.shape[1:]
    cols = [c for c in range(w) if x0 <= c < x1]
    rows = [r for r in range(h) if y0 <= r < y1]
    return maps[:, rows][:, :, cols].sum(axis=(1, 2))


def test_raw_maps_match_loop_oracle():
    img = np.random.default_rng(0).integers(0, 256, (13, 17)).astype(float)
    np.testing.assert_allclose(gradient_maps(img), loop_maps(img), atol=1e-12)


def test_constant_image_all_zero():
    ch = compute_channels(np.full((10, 12), 77.0))
    assert not ch.integral.any()
    assert not hog_descriptor(ch, (5, 5), 30.0).any()


def test_vertical_step_edge():
    img = np.zeros((10, 10))
    img[:, 5:] = 100
    maps = gradient_maps(img)
    cols = np.flatnonzero(maps[0].sum(axis=0))
    assert list(cols) == [4, 5]
    np.testing.assert_array_equal(maps[1], maps[0])
    assert not maps[2:].any()


def test_integral_monotone_and_bins_sum_to_magnitude():
    ch = compute_channels(np.random.default_rng(1).integers(0, 256, (20, 24)))
    assert np.all(np.diff(ch.integral, axis=1) >= 0) and np.all(np.diff(ch.integral, axis=2) >= 0)
    tot = ch.integral[:, -1, -1]
    assert abs(tot[1:].sum() - tot[0]) <= 1e-6 * tot[0]


def test_thousand_random_rectangles():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (32, 32)).astype(float)
    ch, maps = compute_channels(img), gradient_maps(img)
    for _ in range(1000):
        x0, x1 = np.sort(rng.integers(0, 33, 2))
        y0, y1 = np.sort(rng.integers(0, 33, 2))
        np.testing.assert_allclose(ch.box_sums(x0, y0, x1, y1), maps[:, y0:y1, x0:x1].sum(axis=(1, 2)), atol=1e-6)


def test_window_histogram_cases():
    rng = np.random.default_rng(3)
    img = rng.integers(0, 256, (16, 20)).astype(float)
    ch, maps = compute_channels(img), gradient_maps(img)
    full, flag = window_histogram(ch, (9.5, 7.5), 100.0)
    np.testing.assert_allclose(full, maps.sum(axis=(1, 2)), rtol=1e-12)
    assert not flag
    zero, flag = window_histogram(ch, (4.0, 4.0), 0.0)
    assert not zero.any() and not flag
    out, flag = window_histogram(ch, (-50.0, -50.0), 6.0)
    assert not out.any() and flag
    for _ in range(200):
        c = rng.uniform(-3, 22, 2)
        s = rng.uniform(0.5, 12)
        h, _ = window_histogram(ch, c, s)
        np.testing.assert_allclose(h, brute_box(maps, c[0] - s / 2, c[0] + s / 2, c[1] - s / 2, c[1] + s / 2),
                                   atol=1e-6)


def hog_oracle(img, point, iod):
    maps = loop_maps(np.asarray(img, float))
    side = iod / 3
    cell = side / 5
    x, y = point[0] - side / 2, point[1] - side / 2
    out = np.zeros((5, 5, 9))
    for i in range(5):
        for j in range(5):
            out[i, j] = brute_box(maps, x + j * cell, x + (j + 1) * cell, y + i * cell, y + (i + 1) * cell)
    h, w = img.shape
    n_cols = sum(1 for c in range(w) if x <= c < x + side)
    n_rows = sum(1 for r in range(h) if y <= r < y + side)
    norm = out[..., 0].sum() + 1e-8 * max(n_cols * n_rows, 1)
    return out.ravel() / norm


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hog_matches_cell_summing_oracle(seed):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (24, 24)).astype(float)
    p = rng.uniform(-2, 26, 2)
    iod = rng.uniform(6, 60)
    d = hog_descriptor(compute_channels(img), p, iod)
    assert d.shape == (HOG_DIM,) == (225,)
    assert np.all(np.isfinite(d)) and np.all(d >= 0)
    np.testing.assert_allclose(d, hog_oracle(img, p, iod), atol=1e-5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-500, 500))
def test_hog_invariant_to_intensity_offset(seed, shift):
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, (20, 20)).astype(float)
    pts = rng.uniform(0, 20, (4, 2))
    a = hog_descriptors(compute_channels(img), pts, 30.0)
    b = hog_descriptors(compute_channels(img + shift), pts, 30.0)
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_descriptor_extraction_is_pure():
    rng = np.random.default_rng(4)
    img = rng.integers(0, 256, (30, 30))
    pts = rng.uniform(0, 30, (8, 2))
    ch = compute_channels(img)
    once = hog_descriptors(ch, pts, 24.0)
    again = np.stack([hog_descriptor(compute_channels(img), p, 24.0) for p in pts])
    assert np.array_equal(once, again)
    assert np.array_equal(once, hog_descriptors(ch, pts, 24.0))


def test_small_image_rejected():
    with pytest.raises(ValueError):
        compute_channels(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        hog_descriptor(compute_channels(np.zeros((5, 5))), (2, 2), 0.0)


def test_stack_keeps_box_sums():
    rng = np.random.default_rng(5)
    a = compute_channels(rng.integers(0, 256, (8, 10)))
    b = compute_channels(rng.integers(0, 256, (12, 6)))
    stack, widths, heights = stack_channels([a, b])
    assert list(widths) == [10, 6] and list(heights) == [8, 12]
    S = stack[0]
    np.testing.assert_array_equal(S[:, 8, 10] - S[:, 2, 10] - S[:, 8, 3] + S[:, 2, 3], a.box_sums(3, 2, 10, 8))
