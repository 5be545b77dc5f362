"""Self-contained 28x28 digit corpus for image experiments.

Builds an MNIST-shaped dataset (uint8 28x28 images, labels 0-9, standard
IDX file names) from the small scikit-learn digits set: 8x8 images are
upscaled 3x, zero-padded to 28x28, and augmented with pixel jitter. Base
images are split into train/test pools before augmentation so the two
sides never share a source image. Real MNIST files, when present, can be
loaded with the same reader.
"""

from __future__ import annotations

import os

import numpy as np

from .data import Dataset, load_idx, save_idx

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"

_SIDE = 28
_UPSCALE = 3
_PAD = 2
_MAX_SHIFT = 2


def _upscale(img8: np.ndarray) -> np.ndarray:
    """8x8 float (0..16) -> 28x28 uint8 (0..255)."""
    big = np.repeat(np.repeat(img8, _UPSCALE, axis=0), _UPSCALE, axis=1)
    out = np.zeros((_SIDE, _SIDE))
    out[_PAD:_PAD + big.shape[0], _PAD:_PAD + big.shape[1]] = big
    return np.round(out * (255.0 / 16.0)).astype(np.uint8)


def _shift(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(img)
    ys = slice(max(dy, 0), _SIDE + min(dy, 0))
    xs = slice(max(dx, 0), _SIDE + min(dx, 0))
    ys_src = slice(max(-dy, 0), _SIDE + min(-dy, 0))
    xs_src = slice(max(-dx, 0), _SIDE + min(-dx, 0))
    out[ys, xs] = img[ys_src, xs_src]
    return out


def build_surrogate_corpus(out_dir: str, seed: int = 0,
                           train_count: int = 10_000,
                           test_count: int = 2_000) -> None:
    """Write the four IDX files for a jittered digit corpus into out_dir."""
    from sklearn.datasets import load_digits

    bundle = load_digits()
    base = bundle.images
    labels = bundle.target.astype(np.uint8)
    n = base.shape[0]

    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    cut = int(round(0.8 * n))
    pools = {"train": order[:cut], "test": order[cut:]}
    upscaled = np.stack([_upscale(base[i]) for i in range(n)])

    os.makedirs(out_dir, exist_ok=True)
    for side, count, img_name, lab_name in (
        ("train", train_count, TRAIN_IMAGES, TRAIN_LABELS),
        ("test", test_count, TEST_IMAGES, TEST_LABELS),
    ):
        pool = pools[side]
        picks = rng.choice(pool, size=count, replace=True)
        shifts = rng.integers(-_MAX_SHIFT, _MAX_SHIFT + 1, size=(count, 2))
        images = np.stack([
            _shift(upscaled[i], int(dy), int(dx))
            for i, (dy, dx) in zip(picks, shifts)
        ])
        save_idx(images, labels[picks],
                 os.path.join(out_dir, img_name),
                 os.path.join(out_dir, lab_name))


def load_image_corpus(corpus_dir: str,
                      normalization_mode: str = "unit"
                      ) -> tuple[Dataset, Dataset]:
    """Read the standard train/test IDX file pairs from a directory."""
    train = load_idx(os.path.join(corpus_dir, TRAIN_IMAGES),
                     os.path.join(corpus_dir, TRAIN_LABELS),
                     normalization_mode)
    test = load_idx(os.path.join(corpus_dir, TEST_IMAGES),
                    os.path.join(corpus_dir, TEST_LABELS),
                    normalization_mode)
    return train, test


def ensure_image_corpus(cache_dir: str, seed: int = 0,
                        train_count: int = 10_000,
                        test_count: int = 2_000) -> str:
    """Return a directory holding the four IDX files.

    The SSC_MNIST_DIR environment variable, when it points at existing
    files, wins; otherwise the surrogate corpus is built (once) in
    cache_dir.
    """
    override = os.environ.get("SSC_MNIST_DIR")
    if override:
        want = [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS]
        if all(os.path.exists(os.path.join(override, f)) for f in want):
            return override
    marker = os.path.join(cache_dir, TEST_LABELS)
    if not os.path.exists(marker):
        build_surrogate_corpus(cache_dir, seed=seed,
                               train_count=train_count,
                               test_count=test_count)
    return cache_dir
