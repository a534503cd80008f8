"""Integral gradient channels and the 225-d HOG descriptor built on them.

Channel 0 holds gradient magnitude, channels 1..8 the magnitude split into
eight hard orientation bins over [0, pi).  Each channel is stored as a
zero-padded 2-D prefix sum so any axis-aligned box costs four lookups.

Pixel ``(r, c)`` has its centre at ``x = c, y = r``.  A window of side ``s``
centred on ``(x, y)`` covers the pixel centres in the half-open box
``[x - s/2, x + s/2) x [y - s/2, y + s/2)``, clipped to the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CHANNELS = 9
N_BINS = 8
HOG_CELLS = 5
HOG_DIM = HOG_CELLS * HOG_CELLS * N_CHANNELS
EPS_PER_PIXEL = 1e-8


def gradient_maps(image) -> np.ndarray:
    """Raw (non-integral) feature maps, shape (9, H, W)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a single-channel (grayscale) image")
    h, w = img.shape
    if h < 3 or w < 3:
        raise ValueError(f"image must be at least 3x3, got {w}x{h}")
    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    bins = np.minimum((theta * (N_BINS / np.pi)).astype(np.int64), N_BINS - 1)
    maps = np.zeros((N_CHANNELS, h, w))
    maps[0] = mag
    for b in range(N_BINS):
        maps[1 + b] = np.where(bins == b, mag, 0.0)
    return maps


@dataclass(frozen=True)
class IntegralChannels:
    integral: np.ndarray  # (9, H+1, W+1), zero first row/column

    @property
    def height(self) -> int:
        return self.integral.shape[1] - 1

    @property
    def width(self) -> int:
        return self.integral.shape[2] - 1

    def box_sums(self, x0, y0, x1, y1) -> np.ndarray:
        """Per-channel sums over integer boxes [x0, x1) x [y0, y1); shape (..., 9)."""
        S = self.integral
        v = S[:, y1, x1] - S[:, y0, x1] - S[:, y1, x0] + S[:, y0, x0]
        return np.moveaxis(v, 0, -1)


def compute_channels(image) -> IntegralChannels:
    maps = gradient_maps(image)
    integral = np.zeros((N_CHANNELS, maps.shape[1] + 1, maps.shape[2] + 1))
    np.cumsum(np.cumsum(maps, axis=1), axis=2, out=integral[:, 1:, 1:])
    integral.setflags(write=False)
    return IntegralChannels(integral)


def window_bounds(cx, cy, side, width, height):
    """Clipped integer bounds plus the fully-outside flag for square windows."""
    half = 0.5 * np.asarray(side, dtype=float)
    rx0, rx1 = np.ceil(cx - half), np.ceil(cx + half)
    ry0, ry1 = np.ceil(cy - half), np.ceil(cy + half)
    x0 = np.clip(rx0, 0, width).astype(np.int64)
    x1 = np.clip(rx1, 0, width).astype(np.int64)
    y0 = np.clip(ry0, 0, height).astype(np.int64)
    y1 = np.clip(ry1, 0, height).astype(np.int64)
    nonempty = (rx1 > rx0) & (ry1 > ry0)
    outside = nonempty & ((x1 <= x0) | (y1 <= y0))
    return x0, y0, x1, y1, outside


def window_histogram(ch: IntegralChannels, center, size: float):
    """Sum of each channel over a square window.

    Returns ``(hist, out_of_bounds)``; a window lying entirely outside the
    image yields a zero vector with the flag set.
    """
    cx, cy = float(center[0]), float(center[1])
    x0, y0, x1, y1, outside = window_bounds(cx, cy, size, ch.width, ch.height)
    if x1 <= x0 or y1 <= y0:
        return np.zeros(N_CHANNELS), bool(outside)
    return ch.box_sums(x0, y0, x1, y1), False


def hog_descriptors(ch: IntegralChannels, points, iod: float) -> np.ndarray:
    """Descriptors for many points at once, shape (K, 225).

    Layout is cell-row, cell-column, channel.  The whole vector is divided by
    the window's total gradient magnitude plus ``1e-8 * window area``.
    """
    if iod <= 0:
        raise ValueError("inter-ocular distance must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    side = iod / 3.0
    steps = -0.5 * side + np.arange(HOG_CELLS + 1) * (side / HOG_CELLS)
    ex = np.clip(np.ceil(pts[:, 0:1] + steps), 0, ch.width).astype(np.int64)  # (K, 6)
    ey = np.clip(np.ceil(pts[:, 1:2] + steps), 0, ch.height).astype(np.int64)
    x0, x1 = ex[:, None, :-1], ex[:, None, 1:]
    y0, y1 = ey[:, :-1, None], ey[:, 1:, None]
    # prefix-sum differences can dip a few ulps below zero
    cells = np.maximum(ch.box_sums(x0, y0, x1, y1), 0.0)  # (K, 5, 5, 9)
    total = cells[..., 0].sum(axis=(1, 2))
    area = (ex[:, -1] - ex[:, 0]) * (ey[:, -1] - ey[:, 0])
    norm = total + EPS_PER_PIXEL * np.maximum(area, 1)
    return cells.reshape(len(pts), HOG_DIM) / norm[:, None]


def hog_descriptor(ch: IntegralChannels, point, iod: float) -> np.ndarray:
    return hog_descriptors(ch, np.asarray(point, dtype=float)[None, :], iod)[0]


def stack_channels(channels: list[IntegralChannels]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack integral maps of possibly different sizes into one array.

    Smaller maps are edge-padded, which leaves every in-image box sum intact.
    Returns ``(stack, widths, heights)``.
    """
    hmax = max(c.integral.shape[1] for c in channels)
    wmax = max(c.integral.shape[2] for c in channels)
    stack = np.empty((len(channels), N_CHANNELS, hmax, wmax))
    for i, c in enumerate(channels):
        _, h, w = c.integral.shape
        stack[i] = np.pad(c.integral, ((0, 0), (0, hmax - h), (0, wmax - w)), mode="edge")
    widths = np.array([c.width for c in channels], dtype=np.int64)
    heights = np.array([c.height for c in channels], dtype=np.int64)
    return stack, widths, heights
