"""Panoramic environments: procedural skies and equirectangular radiance maps.

Environments light the scene and fill the background. The renderer only ever
sees a baked lat-long radiance map plus a rotation angle about the vertical
axis; procedural skies are baked once per environment and cached. Radiance
is clamped to [0, 6550] after intensity scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .image_io import read_hdr

RADIANCE_MAX = 6550.0


@dataclass(frozen=True)
class SkyBlob:
    """A soft directional light baked into a procedural sky."""

    direction: tuple
    angular_radius: float
    radiance: tuple


@dataclass(frozen=True)
class EnvironmentSpec:
    """Environment description: a procedural sky or an equirect .hdr file."""

    id: str
    kind: str = "sky"                    # "sky" | "equirect"
    horizon_color: tuple = (0.5, 0.6, 0.7)
    zenith_color: tuple = (0.15, 0.25, 0.5)
    ground_color: tuple = (0.2, 0.17, 0.14)
    blobs: tuple = ()
    equirect_path: Optional[str] = None
    intensity_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sky", "equirect"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.intensity_scale <= 0:
            raise ValueError("intensity_scale must be > 0")
        if self.kind == "equirect" and not self.equirect_path:
            raise ValueError("equirect environment needs a file path")

    def sky_radiance(self, directions: np.ndarray) -> np.ndarray:
        """Analytic sky radiance for unit direction rows (n, 3)."""
        d = np.asarray(directions, dtype=np.float64)
        z = np.clip(d[..., 2], -1.0, 1.0)
        hor = np.asarray(self.horizon_color)
        zen = np.asarray(self.zenith_color)
        gnd = np.asarray(self.ground_color)
        t = np.clip(z, 0.0, 1.0)[..., None]
        sky = hor * (1.0 - t) + zen * t
        below = np.clip(-z, 0.0, 1.0)[..., None]
        out = sky * (1.0 - below) + gnd * below
        for blob in self.blobs:
            bd = np.asarray(blob.direction, dtype=np.float64)
            bd = bd / np.linalg.norm(bd)
            cosang = np.clip(d @ bd, -1.0, 1.0)
            ang = np.arccos(cosang)
            w = np.clip(1.0 - ang / blob.angular_radius, 0.0, 1.0) ** 2
            out = out + np.asarray(blob.radiance) * w[..., None]
        return out

    def bake(self, height: int = 128) -> np.ndarray:
        """Bake to an equirect radiance map (height, 2*height, 3) float32,
        intensity-scaled and clamped to [0, RADIANCE_MAX]."""
        width = 2 * height
        if self.kind == "equirect":
            base = read_hdr(self.equirect_path).astype(np.float64)
        else:
            vs = (np.arange(height) + 0.5) / height
            us = (np.arange(width) + 0.5) / width
            theta = vs * math.pi             # 0 at zenith
            phi = us * 2.0 * math.pi
            st, ct = np.sin(theta), np.cos(theta)
            dirs = np.empty((height, width, 3))
            dirs[..., 0] = st[:, None] * np.cos(phi)[None, :]
            dirs[..., 1] = st[:, None] * np.sin(phi)[None, :]
            dirs[..., 2] = ct[:, None]
            base = self.sky_radiance(dirs)
        out = np.clip(base * self.intensity_scale, 0.0, RADIANCE_MAX)
        return np.ascontiguousarray(out.astype(np.float32))


def direction_to_equirect(direction: np.ndarray, rotation: float = 0.0) -> tuple:
    """(u, v) lookup coordinates used by the renderer for a world direction."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    phi = (math.atan2(d[1], d[0]) - rotation) % (2.0 * math.pi)
    theta = math.acos(np.clip(d[2], -1.0, 1.0))
    return phi / (2.0 * math.pi), theta / math.pi


def sample_sky(seed: int, env_id: Optional[str] = None) -> EnvironmentSpec:
    """Random procedural sky, deterministic per seed."""
    rng = np.random.default_rng(seed)
    level = float(np.exp(rng.uniform(np.log(0.25), np.log(2.5))))
    horizon = rng.uniform(0.2, 1.0, size=3) * level
    zenith = rng.uniform(0.05, 0.8, size=3) * level
    ground = rng.uniform(0.05, 0.5, size=3) * level
    blobs = []
    for _ in range(int(rng.integers(1, 4))):
        elev = rng.uniform(0.05, 1.35)
        azim = rng.uniform(0.0, 2 * math.pi)
        direction = (
            math.cos(elev) * math.cos(azim),
            math.cos(elev) * math.sin(azim),
            math.sin(elev),
        )
        radius = float(rng.uniform(0.08, 0.45))
        power = float(np.exp(rng.uniform(np.log(2.0), np.log(60.0)))) / radius
        tint = rng.uniform(0.6, 1.0, size=3)
        blobs.append(SkyBlob(direction, radius, tuple(tint * power)))
    intensity = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
    return EnvironmentSpec(
        id=env_id or f"sky:{seed}",
        kind="sky",
        horizon_color=tuple(horizon),
        zenith_color=tuple(zenith),
        ground_color=tuple(ground),
        blobs=tuple(blobs),
        intensity_scale=intensity,
    )


class EnvironmentLibrary:
    """Source of environments for scene generation.

    With no .hdr files it serves procedural skies keyed ``sky:<seed>``;
    given a directory of .hdr panoramas it serves those, keyed by filename.
    Baked maps are cached per (id, resolution).
    """

    def __init__(self, hdr_dir: Optional[str | Path] = None, bake_height: int = 128):
        self.bake_height = bake_height
        self._cache: dict = {}
        self.hdr_paths = []
        if hdr_dir is not None:
            self.hdr_paths = sorted(Path(hdr_dir).glob("*.hdr"))

    def sample_id(self, rng: np.random.Generator) -> str:
        if self.hdr_paths:
            return self.hdr_paths[int(rng.integers(len(self.hdr_paths)))].name
        return f"sky:{int(rng.integers(2**31))}"

    def spec(self, env_id: str) -> EnvironmentSpec:
        if env_id.startswith("sky:"):
            return sample_sky(int(env_id.split(":", 1)[1]), env_id=env_id)
        for p in self.hdr_paths:
            if p.name == env_id:
                return EnvironmentSpec(id=env_id, kind="equirect", equirect_path=str(p))
        raise KeyError(f"unknown environment id {env_id!r}")

    def baked(self, env_id: str) -> np.ndarray:
        key = (env_id, self.bake_height)
        if key not in self._cache:
            self._cache[key] = self.spec(env_id).bake(self.bake_height)
        return self._cache[key]


def uniform_environment(radiance: float = 1.0, height: int = 8) -> np.ndarray:
    """Constant-radiance map, the furnace-test environment."""
    return np.full((height, 2 * height, 3), radiance, dtype=np.float32)
