"""Procedurally generated digit corpus for dataset-free runs.

Renders the ten digit classes from a small bitmap font with random shifts,
rotations, stroke intensity jitter and background noise, producing
28x28 images with statistics close to handwritten-digit scans (sparse
strokes, ~0.1 mean intensity).  An event-style variant distributes spikes
of both polarities over a 34x34 sensor across 300 ms.  Everything is
deterministic given (count, seed).

This corpus is a stand-in so that experiments, sweeps and the acceptance
suite can run on machines without the real image/event datasets; point the
harness at real data via its dataset root options when available.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .data import EventSample, SENSOR_SIDE

_FONT = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11110", "00001", "00001", "01110", "00001", "00001", "11110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}


def _glyph(digit: int) -> np.ndarray:
    rows = _FONT[digit]
    return np.array([[float(c) for c in r] for r in rows])


def render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    """One jittered 28x28 rendering of a digit, intensities in [0, 1]."""
    g = np.kron(_glyph(digit), np.ones((3, 3)))          # 21 x 15
    angle = rng.uniform(-12.0, 12.0)
    g = ndimage.rotate(g, angle, reshape=False, order=1, mode="constant")
    g = ndimage.gaussian_filter(g, sigma=rng.uniform(0.4, 0.8))
    img = np.zeros((28, 28))
    dy = 3 + int(rng.integers(-2, 3))
    dx = 6 + int(rng.integers(-3, 4))
    dy = min(max(dy, 0), 28 - g.shape[0])
    dx = min(max(dx, 0), 28 - g.shape[1])
    img[dy:dy + g.shape[0], dx:dx + g.shape[1]] = g
    img *= rng.uniform(0.75, 1.0)
    img += rng.normal(0.0, 0.02, img.shape)
    np.clip(img, 0.0, 1.0, out=img)
    peak = img.max()
    if peak > 0:
        img /= max(peak, 0.6)
    return np.clip(img, 0.0, 1.0)


def make_image_set(n: int, seed: int):
    """(images, labels): n jittered digits with a balanced shuffled label mix."""
    rng = np.random.default_rng(seed)
    labels = np.tile(np.arange(10), n // 10 + 1)[:n]
    rng.shuffle(labels)
    images = np.stack([render_digit(int(d), rng) for d in labels])
    return images, labels.astype(np.uint8)


def make_event_set(n: int, seed: int, duration_ms: int = 300,
                   events_per_pixel: float = 10.0) -> list[EventSample]:
    """Event-camera style samples: per-pixel Poisson event trains, both polarities."""
    rng = np.random.default_rng(seed)
    labels = np.tile(np.arange(10), n // 10 + 1)[:n]
    rng.shuffle(labels)
    samples = []
    pad = (SENSOR_SIDE - 28) // 2
    for d in labels:
        img = render_digit(int(d), rng)
        frame = np.zeros((SENSOR_SIDE, SENSOR_SIDE))
        frame[pad:pad + 28, pad:pad + 28] = img
        ys, xs = np.nonzero(frame > 0.2)
        inten = frame[ys, xs]
        counts = rng.poisson(inten * events_per_pixel)
        total = int(counts.sum())
        x = np.repeat(xs, counts)
        y = np.repeat(ys, counts)
        t = rng.integers(0, duration_ms * 1000, size=total)
        pol = rng.integers(0, 2, size=total)
        order = np.argsort(t, kind="stable")
        samples.append(EventSample(
            x=x[order].astype(np.int64), y=y[order].astype(np.int64),
            polarity=pol[order].astype(np.int64), t=t[order].astype(np.int64),
            label=int(d)))
    return samples
