# kdda/data/generators.py
"""
Seeded synthetic domains. Every generator is a pure function of its arguments.
"""
from typing import Sequence

import numpy as np
from aws_lambda_powertools import Logger

from kdda.data.models import DatasetError, DomainDataset

logger = Logger(service="kdda", child=True)

# Center of the two unrotated half-circles; rotations pivot around it.
_MOONS_CENTER = np.array([0.5, 0.25])


def rotation_matrix(degrees: float) -> np.ndarray:
    theta = np.deg2rad(degrees)
    return np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])


def gen_two_moons(n: int, noise_sigma: float = 0.1, rotation_deg: float = 0.0,
                  translation: Sequence[float] = (0.0, 0.0), label_flip_frac: float = 0.0,
                  seed: int = 0, domain_id: str = "source") -> DomainDataset:
    """
    Two interleaved half-circles (class 0 outer, class 1 inner) with Gaussian
    noise, centered on the origin, then rotated and translated.

    Args:
        n: Number of rows; classes get n // 2 and n - n // 2.
        noise_sigma: Standard deviation of the additive noise.
        rotation_deg: Counter-clockwise rotation about the origin.
        translation: Offset added after rotation.
        label_flip_frac: Fraction of labels flipped to the other class.
        seed: Seed for noise, flips and row order.
        domain_id: Name of the produced domain.

    Returns:
        A labeled DomainDataset with 2 classes.
    """
    if n < 2:
        raise DatasetError(f"two moons needs at least 2 rows, got {n}")
    if noise_sigma < 0:
        raise DatasetError(f"noise sigma must be non-negative, got {noise_sigma}")
    if not 0.0 <= label_flip_frac <= 1.0:
        raise DatasetError(f"label flip fraction must lie in [0, 1], got {label_flip_frac}")
    translation = np.asarray(translation, dtype=np.float64)
    if translation.shape != (2,):
        raise DatasetError(f"translation must have 2 components, got {translation.shape}")

    rng = np.random.default_rng(seed)
    n_outer = n // 2
    n_inner = n - n_outer
    outer_t = np.linspace(0.0, np.pi, n_outer)
    inner_t = np.linspace(0.0, np.pi, n_inner)
    points = np.vstack([
        np.column_stack([np.cos(outer_t), np.sin(outer_t)]),
        np.column_stack([1.0 - np.cos(inner_t), 1.0 - np.sin(inner_t) - 0.5]),
    ])
    labels = np.concatenate([np.zeros(n_outer, dtype=np.int64), np.ones(n_inner, dtype=np.int64)])

    points = points + rng.normal(0.0, noise_sigma, size=points.shape) - _MOONS_CENTER
    flips = int(round(label_flip_frac * n))
    if flips:
        flipped = rng.choice(n, size=flips, replace=False)
        labels[flipped] = 1 - labels[flipped]
    order = rng.permutation(n)
    points, labels = points[order], labels[order]

    points = points @ rotation_matrix(rotation_deg).T + translation
    params = {
        "generator": "two_moons", "n": n, "noise_sigma": noise_sigma, "rotation_deg": rotation_deg,
        "translation": translation.tolist(), "label_flip_frac": label_flip_frac, "seed": seed,
    }
    logger.debug("Generated two moons", extra={"domain": domain_id, **params})
    return DomainDataset(points, labels, domain_id, params, class_count=2)


def gen_blobs(n: int, centers, sigma: float = 0.5, seed: int = 0, domain_id: str = "source") -> DomainDataset:
    """
    Isotropic Gaussian cluster per class. `centers` is K x d; classes are
    balanced up to one row.
    """
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 1:
        raise DatasetError(f"centers must be a K x d matrix, got shape {centers.shape}")
    k = centers.shape[0]
    if n < k:
        raise DatasetError(f"need at least one row per class, got n={n} for {k} classes")
    if sigma < 0:
        raise DatasetError(f"sigma must be non-negative, got {sigma}")

    rng = np.random.default_rng(seed)
    counts = [n // k + (1 if c < n % k else 0) for c in range(k)]
    labels = np.repeat(np.arange(k), counts)
    points = centers[labels] + rng.normal(0.0, sigma, size=(n, centers.shape[1]))
    order = rng.permutation(n)
    params = {"generator": "blobs", "n": n, "centers": centers.tolist(), "sigma": sigma, "seed": seed}
    return DomainDataset(points[order], labels[order], domain_id, params, class_count=k)
