"""Labeled image folder loading: one subdirectory per class.

Class indices follow sorted directory names; files within a class are
sorted, so a dataset maps to the same tensors on every run. The sample cap
subsamples uniformly with a seeded generator.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp")


class DatasetError(ValueError):
    """The data directory does not follow the one-folder-per-class layout."""


def list_samples(root):
    """Return ([(path, label)], class_names) in deterministic order."""
    if not os.path.isdir(root):
        raise DatasetError(f"data directory {root!r} does not exist")
    class_names = sorted(
        entry for entry in os.listdir(root)
        if os.path.isdir(os.path.join(root, entry)))
    if len(class_names) < 2:
        raise DatasetError(
            f"need at least 2 class directories under {root!r}, found "
            f"{class_names}")
    samples = []
    for label, name in enumerate(class_names):
        files = sorted(
            f for f in os.listdir(os.path.join(root, name))
            if f.lower().endswith(IMAGE_EXTENSIONS))
        if not files:
            raise DatasetError(f"class directory {name!r} contains no images")
        samples += [(os.path.join(root, name, f), label) for f in files]
    return samples, class_names


def load_images(root, image_size: int, cap: int, seed: int):
    """Load up to ``cap`` images as a (n, 3, s, s) float tensor in [0, 1].

    Subsampling keeps the original deterministic order of the kept samples.
    """
    if cap < 2:
        raise DatasetError(f"sample cap must be >= 2, got {cap}")
    samples, class_names = list_samples(root)
    if len(samples) > cap:
        rng = np.random.default_rng([seed, 0xDA7A])
        keep = np.sort(rng.choice(len(samples), size=cap, replace=False))
        samples = [samples[i] for i in keep]
    images, labels = [], []
    for path, label in samples:
        with Image.open(path) as img:
            img = img.convert("RGB").resize((image_size, image_size),
                                            Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
        images.append(torch.from_numpy(arr).permute(2, 0, 1))
        labels.append(label)
    labels = np.asarray(labels, dtype=np.int64)
    present = np.unique(labels)
    if present.size < len(class_names):
        raise DatasetError(
            "sample cap left some classes without samples; raise --cap")
    return torch.stack(images), labels, class_names
