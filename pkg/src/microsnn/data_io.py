"""Dataset generation and ingestion: the toy spike-train approximator inputs
and target, and the MNIST-format IDX reader with constant-current encoding.

All generation is a pure function of (config, seed); reruns are
byte-identical.  Images are encoded as constant currents proportional to
pixel intensity, classification targets as one-hot constant PSC levels, and
the readout is the argmax of the time-integrated output PSC.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .signals import (
    Signal,
    SpikeTrain,
    TimeGrid,
    epsilon_kernel,
    psc_from_spikes,
)

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


class IdxFormatError(ValueError):
    """Malformed IDX file; the message carries the byte offset."""


@dataclass(frozen=True)
class ToyConfig:
    """Two-layer approximator setup: Bernoulli input trains and a target
    spike train drawn from a sinusoidal firing probability.

    ``input_gain`` scales the input PSCs injected into the first layer; the
    default of tau_s restores unit-peak input pulses, without which the
    default weight scale cannot drive any cell past threshold.
    """

    n_inputs: int = 50
    n_hidden: int = 100
    p_in: float = 0.05
    target_base: float = 0.3
    target_amp: float = 0.3
    target_omega: float = 0.03  # per-ms angular rate of the target probability
    seed: int = 0
    init_scale: float = 0.3
    init_bias: float = 0.01
    tau_s_ms: float = 20.0
    input_gain: float = 20.0

    def __post_init__(self):
        if not 0.0 <= self.p_in <= 1.0:
            raise ValueError("p_in must be a probability")
        if self.n_inputs < 1 or self.n_hidden < 1:
            raise ValueError("layer sizes must be at least 1")
        if self.tau_s_ms <= 0:
            raise ValueError("tau_s_ms must be positive")


@dataclass
class LabeledSample:
    """One training example: either signal-valued (regression) or a feature
    vector plus class label (classification, encoded lazily)."""

    input_currents: list[Signal] | None = None
    target: list[Signal] | None = None
    input_spikes: list[SpikeTrain] | None = None
    features: np.ndarray | None = None
    label: int | None = None

    def is_classification(self) -> bool:
        return self.label is not None


def gen_toy_spikes(cfg: ToyConfig, grid: TimeGrid) -> list[SpikeTrain]:
    """Seeded Bernoulli(p_in) spike trains, one per input channel."""
    rng = np.random.default_rng((cfg.seed, 0))
    fired = rng.random((cfg.n_inputs, grid.n_steps)) < cfg.p_in
    return [SpikeTrain(grid, row) for row in fired]


def gen_toy_inputs(cfg: ToyConfig, grid: TimeGrid) -> list[Signal]:
    """Input PSCs: the Bernoulli spike trains filtered by epsilon."""
    kernel = epsilon_kernel(cfg.tau_s_ms, grid)
    return [psc_from_spikes(s, kernel) for s in gen_toy_spikes(cfg, grid)]


def toy_target_probability(cfg: ToyConfig, grid: TimeGrid) -> Signal:
    """Sinusoidal firing probability ``base - amp * cos(omega * t)``, t in ms."""
    p = cfg.target_base - cfg.target_amp * np.cos(cfg.target_omega * grid.times())
    return Signal(grid, p)


def gen_toy_target(cfg: ToyConfig, grid: TimeGrid) -> Signal:
    """Target PSC: Bernoulli spikes drawn from the sinusoidal probability,
    filtered by epsilon.  Sampling the target from the same cell model
    guarantees a single output neuron can fit it."""
    p = toy_target_probability(cfg, grid).values
    if p.min() < 0.0 or p.max() > 1.0:
        raise ValueError(
            f"target probability leaves [0, 1]: range [{p.min()}, {p.max()}]"
        )
    rng = np.random.default_rng((cfg.seed, 1))
    fired = rng.random(grid.n_steps) < p
    return psc_from_spikes(SpikeTrain(grid, fired), epsilon_kernel(cfg.tau_s_ms, grid))


def toy_sample(cfg: ToyConfig, grid: TimeGrid) -> LabeledSample:
    """Complete toy example with the input gain applied to the currents."""
    spikes = gen_toy_spikes(cfg, grid)
    kernel = epsilon_kernel(cfg.tau_s_ms, grid)
    currents = [
        Signal(grid, cfg.input_gain * psc_from_spikes(s, kernel).values)
        for s in spikes
    ]
    return LabeledSample(
        input_currents=currents,
        target=[gen_toy_target(cfg, grid)],
        input_spikes=spikes,
    )


def _read_exact(f, n: int, path: str, offset: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise IdxFormatError(
            f"{path}: truncated file, wanted {n} bytes at offset {offset}, "
            f"got {len(data)}"
        )
    return data


def _read_idx_images(path) -> np.ndarray:
    path = str(path)
    with open(path, "rb") as f:
        header = _read_exact(f, 16, path, 0)
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise IdxFormatError(
                f"{path}: bad image magic {magic} at offset 0, "
                f"expected {IDX_IMAGE_MAGIC}"
            )
        raw = _read_exact(f, count * rows * cols, path, 16)
        if f.read(1):
            raise IdxFormatError(f"{path}: trailing bytes after offset {16 + len(raw)}")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    return pixels.astype(np.float64) / 255.0


def _read_idx_labels(path) -> np.ndarray:
    path = str(path)
    with open(path, "rb") as f:
        header = _read_exact(f, 8, path, 0)
        magic, count = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise IdxFormatError(
                f"{path}: bad label magic {magic} at offset 0, "
                f"expected {IDX_LABEL_MAGIC}"
            )
        raw = _read_exact(f, count, path, 8)
        if f.read(1):
            raise IdxFormatError(f"{path}: trailing bytes after offset {8 + len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).copy()


def load_mnist_idx(images_path, labels_path, limit: int | None = None) -> list[LabeledSample]:
    """Read an IDX image/label pair into samples with [0, 1] pixel vectors.

    ``limit`` caps the number of samples (0 gives an empty list).
    """
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"count mismatch: {len(images)} images vs {len(labels)} labels"
        )
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    return [
        LabeledSample(features=img, label=int(lbl))
        for img, lbl in zip(images, labels)
    ]


def write_idx_images(path, images: np.ndarray):
    """Write uint8 images (N, rows, cols) in IDX format (big-endian)."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must be (N, rows, cols)")
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def encode_image(sample: LabeledSample, grid: TimeGrid, gain: float = 1.0) -> list[Signal]:
    """Constant-current encoding: each pixel injects ``gain * intensity`` at
    every step."""
    pixels = np.asarray(sample.features, dtype=np.float64)
    if pixels.min() < 0.0 or pixels.max() > 1.0:
        raise ValueError("pixels must lie in [0, 1]")
    return [
        Signal(grid, np.full(grid.n_steps, gain * p)) for p in pixels
    ]


def encode_image_array(pixels: np.ndarray, grid: TimeGrid, gain: float = 1.0) -> np.ndarray:
    """Array form of :func:`encode_image` used by the training hot loop."""
    pixels = np.asarray(pixels, dtype=np.float64)
    return np.repeat((gain * pixels)[:, None], grid.n_steps, axis=1)


def target_from_label(
    label: int, n_classes: int, grid: TimeGrid, hi: float = 1.0, lo: float = 0.0
) -> list[Signal]:
    """One-hot constant target PSCs: ``hi`` on the label channel, ``lo``
    elsewhere.  The paired readout is :func:`predict_label`."""
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    out = []
    for i in range(n_classes):
        level = hi if i == label else lo
        out.append(Signal(grid, np.full(grid.n_steps, level)))
    return out


def target_array_from_label(
    label: int, n_classes: int, grid: TimeGrid, hi: float = 1.0, lo: float = 0.0
) -> np.ndarray:
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    target = np.full((n_classes, grid.n_steps), float(lo))
    target[label, :] = hi
    return target


def predict_label(output_psc: np.ndarray, dt_ms: float = 1.0) -> int:
    """Classification readout: argmax of the time-integrated output PSC."""
    return int(np.argmax(np.sum(output_psc, axis=1) * dt_ms))
