"""Procedural transparent vessels and their contents.

A vessel is a surface of revolution of a random 2D curve: a low-order
polynomial plus up to three sine terms, kept positive by construction
(|f(u)| + r_min). The revolved polyline runs axis -> outer wall -> rim ->
inner wall -> inner bottom -> axis, which closes into a watertight
double-walled solid in one pass. Contents are either a fill solid (liquid /
powder stand-in) occupying the bottom fraction of the interior, or a random
primitive scaled to sit inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Mesh, generate_primitive_object, make_transform, revolve_polyline, transform_mesh

#: sampling ranges (meters / radians): beaker-to-flask silhouettes at tabletop scale
POLY_COEFF_RANGE = 0.1
TRIG_AMP_MAX = 0.05
TRIG_FREQ_MAX = 6.0 * math.pi
R_MIN_RANGE = (0.02, 0.1)
HEIGHT_RANGE = (0.1, 0.3)
WALL_RANGE = (0.001, 0.005)
STRETCH_RANGE = (0.5, 2.0)
FILL_FRACTION_RANGE = (0.2, 0.8)


@dataclass(frozen=True)
class VesselProfile:
    """Radius-vs-height curve of a symmetric vessel.

    radius(u) = |sum_i a_i u^i + sum_j b_j sin(c_j u + p_j)| + r_min,
    strictly positive for u in [0, 1].
    """

    linear_coeffs: tuple = (0.0, 0.0, 0.0)
    trig_terms: tuple = ()          # (amplitude, frequency, phase) triples
    r_min: float = 0.05
    height: float = 0.2
    stretch: tuple = (1.0, 1.0)

    def __post_init__(self):
        if len(self.linear_coeffs) > 3:
            raise ValueError("at most 3 polynomial coefficients")
        if self.r_min <= 0 or self.height <= 0:
            raise ValueError("r_min and height must be positive")
        if not all(STRETCH_RANGE[0] <= s <= STRETCH_RANGE[1] for s in self.stretch):
            raise ValueError(f"stretch outside {STRETCH_RANGE}")

    def radius(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        f = np.zeros_like(u)
        for i, a in enumerate(self.linear_coeffs):
            f = f + a * u**i
        for amp, freq, phase in self.trig_terms:
            f = f + amp * np.sin(freq * u + phase)
        return np.abs(f) + self.r_min


def sample_profile(rng: np.random.Generator) -> VesselProfile:
    """Draw profile coefficients from the declared ranges."""
    n_poly = int(rng.integers(1, 4))
    coeffs = tuple(float(c) for c in rng.uniform(-POLY_COEFF_RANGE, POLY_COEFF_RANGE, size=n_poly))
    trig = []
    for _ in range(int(rng.integers(0, 4))):
        trig.append((
            float(rng.uniform(0.0, TRIG_AMP_MAX)),
            float(rng.uniform(0.5, TRIG_FREQ_MAX)),
            float(rng.uniform(0.0, 2 * math.pi)),
        ))
    stretch = (1.0, 1.0)
    if rng.uniform() < 0.5:
        stretch = (float(rng.uniform(0.7, 1.5)), float(rng.uniform(0.7, 1.5)))
    return VesselProfile(
        linear_coeffs=coeffs,
        trig_terms=tuple(trig),
        r_min=float(rng.uniform(*R_MIN_RANGE)),
        height=float(rng.uniform(*HEIGHT_RANGE)),
        stretch=stretch,
    )


def _inner_radius(profile: VesselProfile, u, wall: float) -> np.ndarray:
    return np.maximum(profile.radius(u) - wall, 0.25 * profile.r_min)


def vessel_mesh(profile: VesselProfile, wall: float, n_u: int = 64, n_theta: int = 64) -> Mesh:
    """Closed double-walled solid of revolution for the profile."""
    h = profile.height
    u = np.linspace(0.0, 1.0, n_u + 1)
    outer_r = profile.radius(u)
    # inner wall descends from the rim to one wall-thickness above the base
    zi = np.linspace(h, wall, n_u + 1)
    inner_r = _inner_radius(profile, zi / h, wall)
    rs = np.concatenate([[0.0], outer_r, inner_r, [0.0]])
    zs = np.concatenate([[0.0], u * h, zi, [wall]])
    return revolve_polyline(rs, zs, n_theta=n_theta, stretch=profile.stretch)


def interior_height(profile: VesselProfile, wall: float) -> float:
    return profile.height - wall


def fill_mesh(
    profile: VesselProfile,
    wall: float,
    fill_fraction: float,
    n_u: int = 48,
    n_theta: int = 64,
    clearance: float = 2e-4,
    top_wave: float = 0.0,
) -> Mesh:
    """Fill solid occupying the interior below ``fill_fraction`` of the
    interior height. The top face is flat, optionally perturbed by a gentle
    radial wave of amplitude ``top_wave``."""
    if not (0.0 < fill_fraction <= 1.0):
        raise ValueError("fill_fraction must be in (0, 1]")
    z0 = wall
    z1 = wall + fill_fraction * interior_height(profile, wall)
    zs_side = np.linspace(z0, z1, n_u + 1)
    rs_side = _inner_radius(profile, zs_side / profile.height, wall) - clearance
    rs_side = np.maximum(rs_side, 0.1 * profile.r_min)
    if top_wave > 0.0:
        q = np.linspace(1.0, 0.0, 9)[1:]
        top_r = rs_side[-1] * q
        top_z = z1 + top_wave * np.sin(math.pi * q) ** 2
        rs = np.concatenate([[0.0], rs_side, top_r, [0.0]])
        zs = np.concatenate([[z0], zs_side, top_z, [top_z[-1]]])
    else:
        rs = np.concatenate([[0.0], rs_side, [0.0]])
        zs = np.concatenate([[z0], zs_side, [z1]])
    return revolve_polyline(rs, zs, n_theta=n_theta, stretch=profile.stretch)


def content_object_mesh(profile: VesselProfile, wall: float, seed: int, detail: int = 24) -> Mesh:
    """A random primitive scaled and placed to sit inside the vessel."""
    obj = generate_primitive_object(seed, detail=detail)
    lo, hi = obj.bounds()
    size = hi - lo
    # fit against the tightest interior radius over the lower half
    zs = np.linspace(wall, profile.height, 33)
    r_avail = float(_inner_radius(profile, zs[:17] / profile.height, wall).min())
    h_avail = 0.6 * interior_height(profile, wall)
    s = min(1.5 * r_avail / max(size[0], 1e-9),
            1.5 * r_avail / max(size[1], 1e-9),
            h_avail / max(size[2], 1e-9)) * 0.8
    center = 0.5 * (lo + hi)
    obj = transform_mesh(obj, make_transform(scale=(s, s, s), translation=-center * s))
    lo2, _ = obj.bounds()
    drop = wall + 5e-4 - lo2[2]
    obj = transform_mesh(obj, make_transform(translation=(0.0, 0.0, drop)))
    return transform_mesh(obj, np.diag([profile.stretch[0], profile.stretch[1], 1.0, 1.0]))


def generate_vessel(
    seed: int,
    n_u: int = 64,
    n_theta: int = 64,
    content_kind: Optional[str] = None,
    profile: Optional[VesselProfile] = None,
) -> tuple:
    """Sample a vessel and its content deterministically from ``seed``.

    Returns (vessel_mesh, content_mesh, profile, info) where info records the
    sampled wall thickness, content kind, and fill fraction for manifests.
    Degenerate numeric profiles (radius dipping under r_min / 2) are
    resampled internally and never surface to the caller.
    """
    rng = np.random.default_rng(seed)
    for _ in range(16):
        prof = profile or sample_profile(rng)
        u = np.linspace(0.0, 1.0, 257)
        if np.all(prof.radius(u) >= prof.r_min / 2):
            break
        profile = None
    wall = float(rng.uniform(*WALL_RANGE))
    kind = content_kind or ("fill" if rng.uniform() < 0.5 else "object")
    fill_fraction = float(rng.uniform(*FILL_FRACTION_RANGE))
    vess = vessel_mesh(prof, wall, n_u=n_u, n_theta=n_theta)
    if kind == "fill":
        wave = float(rng.uniform(0.0, 0.002)) if rng.uniform() < 0.5 else 0.0
        content = fill_mesh(prof, wall, fill_fraction, n_u=max(16, n_u // 2),
                            n_theta=n_theta, top_wave=wave)
    else:
        content = content_object_mesh(prof, wall, seed=int(rng.integers(2**31)),
                                      detail=max(12, n_theta // 2))
    info = {"wall": wall, "content_kind": kind, "fill_fraction": fill_fraction}
    return vess, content, prof, info
