"""Desk-scale synthetic datasets for demos, evaluation and benchmarks."""

from __future__ import annotations

import numpy as np

from .data import Dataset


def gaussian_blobs(centers, points_per_blob: int, spread: float = 0.5,
                   rng_seed: int = 0) -> Dataset:
    """Isotropic Gaussian clusters, one class label per blob."""
    centers = np.asarray(centers, dtype=np.float64)
    rng = np.random.default_rng(rng_seed)
    rows, labels = [], []
    for cls, center in enumerate(centers):
        rows.append(center + spread * rng.standard_normal((points_per_blob,
                                                           len(center))))
        labels.extend([cls] * points_per_blob)
    return Dataset(np.vstack(rows), np.asarray(labels))


def two_superclusters(points_per_blob: int = 50, rng_seed: int = 0) -> Dataset:
    """Four blobs arranged as two well-separated super-clusters (2-D).

    Blobs 0 and 1 sit far on the left, 2 and 3 far on the right; the gap
    between the sides dwarfs the gap within a side, so the natural first
    cut separates left from right. Labels are blob ids (0..3); super-cluster
    membership is label // 2.
    """
    centers = [(-6.0, -2.0), (-6.0, 2.0), (6.0, -2.0), (6.0, 2.0)]
    return gaussian_blobs(centers, points_per_blob, spread=0.5, rng_seed=rng_seed)


def concentric_rings(n_points: int = 400, noise_dims: int = 4,
                     ring_noise: float = 0.1, noise_scale: float = 1.0,
                     rng_seed: int = 0) -> Dataset:
    """Two nested rings in the first two features, padded with noise features.

    The noise features carry no class signal but enough variance to swamp a
    plain Euclidean neighborhood, which is what makes the problem genuinely
    nonlinear for metric learning.
    """
    rng = np.random.default_rng(rng_seed)
    half = n_points // 2
    counts = (half, n_points - half)
    radii = (1.0, 2.2)
    rows, labels = [], []
    for cls, (count, radius) in enumerate(zip(counts, radii)):
        angles = rng.uniform(0.0, 2.0 * np.pi, size=count)
        r = radius + ring_noise * rng.standard_normal(count)
        ring = np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        noise = noise_scale * rng.standard_normal((count, noise_dims))
        rows.append(np.hstack([ring, noise]))
        labels.extend([cls] * count)
    order = rng.permutation(n_points)
    return Dataset(np.vstack(rows)[order], np.asarray(labels)[order])


def clustered_classes(n_points: int = 2100, n_classes: int = 7, dim: int = 10,
                      spread: float = 0.6, rng_seed: int = 0) -> Dataset:
    """Many-class Gaussian mixture with well-spread class centers."""
    rng = np.random.default_rng(rng_seed)
    centers = rng.uniform(-4.0, 4.0, size=(n_classes, dim))
    per = n_points // n_classes
    counts = [per + (1 if c < n_points - per * n_classes else 0)
              for c in range(n_classes)]
    rows, labels = [], []
    for cls, count in enumerate(counts):
        rows.append(centers[cls] + spread * rng.standard_normal((count, dim)))
        labels.extend([cls] * count)
    order = rng.permutation(sum(counts))
    return Dataset(np.vstack(rows)[order], np.asarray(labels)[order])
