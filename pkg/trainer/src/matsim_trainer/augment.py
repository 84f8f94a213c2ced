"""Training-time image augmentations (camera-artifact simulation).

Gaussian smoothing, brightening/darkening, partial-to-full decoloring, and
additive noise, each firing independently (10% by default), deterministic
per seed.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def augment(image: np.ndarray, seed: int, probability: float = 0.1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    fire = rng.uniform(size=4)
    img = image.copy()
    if fire[0] < probability:
        sigma = rng.uniform(0.5, 2.0)
        img = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0))
    if fire[1] < probability:
        img = img * rng.uniform(0.5, 1.5)
    if fire[2] < probability:
        blend = rng.uniform(0.3, 1.0)
        gray = img @ np.array([0.299, 0.587, 0.114])
        img = img * (1.0 - blend) + gray[:, :, None] * blend
    if fire[3] < probability:
        img = img + rng.normal(0.0, rng.uniform(0.01, 0.08), size=img.shape)
    return np.clip(img, 0.0, 1.0)
