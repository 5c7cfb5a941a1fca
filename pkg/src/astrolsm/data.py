"""Dataset ingestion, encoding, and perturbation.

Supports the classic big-endian IDX image/label container, per-sample
neuromorphic AER event files (5 bytes per event: x, y, then a polarity bit
packed with a 23-bit microsecond timestamp), Poisson rate coding of images,
event-to-raster binning, and the two perturbations used by the
generalization diagnostics (heavy pixel noise, Gaussian event time shifts).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError

log = logging.getLogger(__name__)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

SENSOR_SIDE = 34                      # event-camera pixel grid
N_EVENT_CHANNELS = 2 * SENSOR_SIDE * SENSOR_SIDE  # two polarities stacked
SAMPLE_MS = 250                       # presentation length per sample
SNAPSHOT_MS = 20                      # initialization snapshot length
DEFAULT_R_MAX_HZ = 250.0              # Poisson ceiling rate at intensity 1.0
PIXEL_NOISE_SIGMA_RAW = 125.0         # in 0-255 pixel units
TIME_SHIFT_SIGMA_MS = 10.0


@dataclass
class ImageSample:
    pixels: np.ndarray  # (28, 28) float in [0, 1]
    label: int


@dataclass
class EventSample:
    x: np.ndarray        # column, 0..33
    y: np.ndarray        # row, 0..33
    polarity: np.ndarray # 0/1
    t: np.ndarray        # microseconds
    label: int

    def __len__(self):
        return len(self.t)


# ---------------------------------------------------------------------------
# IDX container
# ---------------------------------------------------------------------------

def load_idx(path):
    """Load an IDX file; returns (images, None) or (None, labels).

    Images come back as float64 in [0,1] with shape (n, rows, cols); labels
    as uint8.  Malformed files raise :class:`FormatError` with the byte
    offset where validation failed.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4:
        raise FormatError(f"{path}: truncated header at byte {len(data)}")
    magic = int.from_bytes(data[0:4], "big")
    if magic == IDX_IMAGE_MAGIC:
        if len(data) < 16:
            raise FormatError(f"{path}: truncated image header at byte {len(data)}")
        n, rows, cols = (int.from_bytes(data[o:o + 4], "big") for o in (4, 8, 12))
        expect = 16 + n * rows * cols
        if len(data) != expect:
            raise FormatError(
                f"{path}: expected {expect} bytes, file ends at byte {len(data)}")
        images = np.frombuffer(data, dtype=np.uint8, offset=16).reshape(n, rows, cols)
        return images.astype(np.float64) / 255.0, None
    if magic == IDX_LABEL_MAGIC:
        if len(data) < 8:
            raise FormatError(f"{path}: truncated label header at byte {len(data)}")
        n = int.from_bytes(data[4:8], "big")
        expect = 8 + n
        if len(data) != expect:
            raise FormatError(
                f"{path}: expected {expect} bytes, file ends at byte {len(data)}")
        return None, np.frombuffer(data, dtype=np.uint8, offset=8).copy()
    raise FormatError(f"{path}: bad magic 0x{magic:08x} at byte 0")


def load_idx_images(path) -> np.ndarray:
    images, _ = load_idx(path)
    if images is None:
        raise FormatError(f"{path}: expected an image file, found labels")
    return images


def load_idx_labels(path) -> np.ndarray:
    _, labels = load_idx(path)
    if labels is None:
        raise FormatError(f"{path}: expected a label file, found images")
    return labels


def split_train_val(n_total: int, n_val: int = 10_000):
    """Partition away the last ``n_val`` samples as the validation set.

    Returns (train_idx, val_idx); disjoint and covering range(n_total).
    """
    if n_val >= n_total:
        raise ConfigError(f"validation size {n_val} >= total {n_total}")
    idx = np.arange(n_total)
    return idx[: n_total - n_val], idx[n_total - n_val:]


# ---------------------------------------------------------------------------
# AER event files
# ---------------------------------------------------------------------------

def parse_events(raw: bytes, label: int = -1) -> EventSample:
    """Decode 5-byte AER records: x, y, polarity bit 7 + 23-bit µs timestamp."""
    if len(raw) % 5 != 0:
        raise FormatError(
            f"event stream length {len(raw)} is not a multiple of 5 bytes")
    rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 5)
    x = rec[:, 0].astype(np.int64)
    y = rec[:, 1].astype(np.int64)
    polarity = (rec[:, 2] >> 7).astype(np.int64)
    t = ((rec[:, 2].astype(np.int64) & 0x7F) << 16) \
        | (rec[:, 3].astype(np.int64) << 8) | rec[:, 4].astype(np.int64)
    return EventSample(x=x, y=y, polarity=polarity, t=t, label=label)


def load_nmnist(root) -> list[EventSample]:
    """Load per-sample event files grouped under digit-labelled directories."""
    samples = []
    for name in sorted(os.listdir(root)):
        sub = os.path.join(root, name)
        if not (os.path.isdir(sub) and name.isdigit()):
            continue
        label = int(name)
        for fn in sorted(os.listdir(sub)):
            with open(os.path.join(sub, fn), "rb") as f:
                raw = f.read()
            sample = parse_events(raw, label)
            if len(sample) == 0:
                log.warning("empty event file: %s", os.path.join(sub, fn))
            samples.append(sample)
    return samples


def events_to_raster(sample: EventSample, T: int = SAMPLE_MS) -> np.ndarray:
    """Bin events to a (T, channels) boolean raster on the 1 ms grid.

    Channel index is polarity*1156 + y*34 + x; events at or past T ms are
    dropped; multiple events in one (channel, step) bin collapse to one
    spike, which also makes the result independent of event order.
    """
    raster = np.zeros((T, N_EVENT_CHANNELS), dtype=bool)
    step = sample.t // 1000
    keep = (step >= 0) & (step < T)
    ch = sample.polarity * (SENSOR_SIDE * SENSOR_SIDE) + sample.y * SENSOR_SIDE + sample.x
    raster[step[keep], ch[keep]] = True
    return raster


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def poisson_encode(image: np.ndarray, T: int, rng: np.random.Generator,
                   r_max: float = DEFAULT_R_MAX_HZ) -> np.ndarray:
    """Bernoulli-per-step rate coding: P(spike) = intensity * r_max * 1 ms."""
    p = r_max * 1e-3
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"r_max {r_max} Hz exceeds one spike per step")
    probs = image.reshape(-1) * p
    return rng.random((T, probs.size)) < probs[None, :]


def snapshot_window(rng: np.random.Generator, total_ms: int = SAMPLE_MS,
                    width_ms: int = SNAPSHOT_MS) -> int:
    """Uniform start of a snapshot window within the sample duration."""
    return int(rng.integers(0, total_ms - width_ms + 1))


def raster_to_csr(raster: np.ndarray):
    """Convert a (T, n) boolean raster to per-step spike id lists.

    Returns (ptr, ids): ids[ptr[t]:ptr[t+1]] are the active channels at t,
    ascending.  This is the engine's input format.
    """
    t_idx, ch = np.nonzero(raster)
    order = np.lexsort((ch, t_idx))
    ptr = np.zeros(raster.shape[0] + 1, dtype=np.int64)
    np.cumsum(np.bincount(t_idx, minlength=raster.shape[0]), out=ptr[1:])
    return ptr, ch[order].astype(np.int64)


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------

def pixel_noise(rng: np.random.Generator, shape,
                sigma_raw: float = PIXEL_NOISE_SIGMA_RAW) -> np.ndarray:
    """Gaussian pixel noise drawn in raw 0-255 units, returned normalized."""
    return rng.normal(0.0, sigma_raw / 255.0, size=shape)


def perturb(sample, kind: str, rng: np.random.Generator, *,
            sigma_raw: float = PIXEL_NOISE_SIGMA_RAW,
            sigma_ms: float = TIME_SHIFT_SIGMA_MS, T: int = SAMPLE_MS):
    """Noise a sample for the generalization measure.

    ``pixel_noise``: add per-pixel Gaussian noise (sigma given in raw 0-255
    units) and re-clip to the valid range.  ``time_shift``: shift each event
    time by Gaussian milliseconds and drop events leaving [0, T).
    """
    if kind == "pixel_noise":
        noisy = np.clip(sample.pixels + pixel_noise(rng, sample.pixels.shape, sigma_raw),
                        0.0, 1.0)
        return ImageSample(pixels=noisy, label=sample.label)
    if kind == "time_shift":
        if sigma_ms == 0.0:
            shift = np.zeros(len(sample), dtype=np.int64)
        else:
            shift = np.rint(rng.normal(0.0, sigma_ms, size=len(sample)) * 1000.0).astype(np.int64)
        t = sample.t + shift
        keep = (t >= 0) & (t < T * 1000)
        return EventSample(x=sample.x[keep], y=sample.y[keep],
                           polarity=sample.polarity[keep], t=t[keep],
                           label=sample.label)
    raise ConfigError(f"unknown perturbation kind: {kind!r}")
