"""Deterministic MNIST-scale stand-in dataset.

Real MNIST cannot be fetched in this offline environment, so the reduced
classification run uses genuine handwritten digits from scikit-learn's
bundled 8x8 set, upsampled to 28x28 and augmented (integer shifts, additive
noise, intensity jitter) to the requested size.  Train and test draw from
disjoint base images, and everything is a pure function of the seed.  The
files are written in the standard IDX format and consumed through the same
loader and CLI path as real MNIST files.
"""

import os

import numpy as np

from microsnn.data_io import write_idx_images, write_idx_labels


def _base_digits():
    from sklearn.datasets import load_digits

    data = load_digits()
    images = (data.images / 16.0 * 255.0).astype(np.float64)  # (1797, 8, 8)
    return images, data.target.astype(np.uint8)


def _render(base28, rng):
    # MNIST-like variability: digits stay centered (small shifts), mild
    # intensity jitter and sensor noise
    dy, dx = rng.integers(-1, 2, size=2)
    img = np.roll(np.roll(base28, dy, axis=0), dx, axis=1)
    img = img * rng.uniform(0.85, 1.0)
    img = img + rng.normal(0.0, 8.0, img.shape)
    return np.clip(img, 0, 255).astype(np.uint8)


def make_synth_digit_idx(out_dir, n_train=10000, n_test=1000, seed=0):
    """Write train/test IDX pairs; returns the four file paths."""
    images, labels = _base_digits()
    rng = np.random.default_rng((seed, 99))
    order = rng.permutation(len(images))
    n_test_base = len(images) // 5
    test_base, train_base = order[:n_test_base], order[n_test_base:]

    def build(base_idx, count):
        out_images = np.zeros((count, 28, 28), dtype=np.uint8)
        out_labels = np.zeros(count, dtype=np.uint8)
        picks = rng.integers(0, len(base_idx), size=count)
        for i, pick in enumerate(picks):
            src = images[base_idx[pick]]
            base28 = np.zeros((28, 28))
            base28[2:26, 2:26] = np.kron(src, np.ones((3, 3)))
            out_images[i] = _render(base28, rng)
            out_labels[i] = labels[base_idx[pick]]
        return out_images, out_labels

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "train_images": os.path.join(out_dir, "train-images.idx"),
        "train_labels": os.path.join(out_dir, "train-labels.idx"),
        "test_images": os.path.join(out_dir, "test-images.idx"),
        "test_labels": os.path.join(out_dir, "test-labels.idx"),
    }
    tr_img, tr_lbl = build(train_base, n_train)
    te_img, te_lbl = build(test_base, n_test)
    write_idx_images(paths["train_images"], tr_img)
    write_idx_labels(paths["train_labels"], tr_lbl)
    write_idx_images(paths["test_images"], te_img)
    write_idx_labels(paths["test_labels"], te_lbl)
    return paths


def mnist_or_synth_paths(tmp_dir, n_train=10000, n_test=1000, seed=0):
    """Real MNIST IDX files if MICROSNN_MNIST_DIR provides them, else the
    synthetic stand-in; returns (paths dict, source tag)."""
    env_dir = os.environ.get("MICROSNN_MNIST_DIR")
    if env_dir:
        candidates = {
            "train_images": ("train-images-idx3-ubyte", "train-images.idx"),
            "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx"),
            "test_images": ("t10k-images-idx3-ubyte", "test-images.idx"),
            "test_labels": ("t10k-labels-idx1-ubyte", "test-labels.idx"),
        }
        paths = {}
        for key, names in candidates.items():
            for name in names:
                p = os.path.join(env_dir, name)
                if os.path.exists(p):
                    paths[key] = p
                    break
        if len(paths) == 4:
            return paths, "mnist"
    return make_synth_digit_idx(tmp_dir, n_train, n_test, seed), "synthetic-digits"
