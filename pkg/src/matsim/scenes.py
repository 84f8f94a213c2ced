"""Scene descriptions and the set schedule.

A set is the dataset atom: two materials, six scenes, five blend ratios per
scene. Scenes 0-1 keep everything fixed between ratio images, scenes 2-3
re-rotate the environment per image, scenes 4-5 replace it per image. Every
image also gets a fresh uv transform for the main object. Generation is a
pure function of (seed, config): rerunning it reproduces every mesh, camera,
environment binding, and uv transform bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .environment import EnvironmentLibrary
from .errors import EmptyLibraryError, GenerationError
from .geometry import Mesh, generate_primitive_object, ground_plane, make_transform, transform_mesh
from .materials import (
    SET_RATIOS,
    TEXTURED,
    UNIFORM,
    MaterialSpec,
    sample_random_material,
)
from .vessels import VesselProfile, generate_vessel

POLICIES = ("fixed", "rotate_env", "replace_env")
POLICY_SCHEDULE = ("fixed", "fixed", "rotate_env", "rotate_env", "replace_env", "replace_env")


@dataclass(frozen=True)
class UVTransform:
    """Shading-time uv transform: uv' = scale * Rot(rotation) * uv + offset, wrapped mod 1."""

    offset: tuple = (0.0, 0.0)
    rotation: float = 0.0
    scale: float = 1.0

    def apply(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = self.scale * (c * uv[..., 0] - s * uv[..., 1]) + self.offset[0]
        v = self.scale * (s * uv[..., 0] + c * uv[..., 1]) + self.offset[1]
        return np.stack([u % 1.0, v % 1.0], axis=-1)

    @staticmethod
    def identity() -> "UVTransform":
        return UVTransform()

    def to_meta(self) -> dict:
        return {"offset": list(self.offset), "rotation": self.rotation, "scale": self.scale}


def randomize_uv(seed: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> UVTransform:
    """Fresh uv transform: offset in [0,1)^2, rotation in [0,2pi), scale in [0.5,2]."""
    if rng is None:
        rng = np.random.default_rng(seed)
    return UVTransform(
        offset=(float(rng.uniform()), float(rng.uniform())),
        rotation=float(rng.uniform(0.0, 2.0 * math.pi)),
        scale=float(rng.uniform(0.5, 2.0)),
    )


@dataclass(frozen=True)
class CameraSpec:
    position: tuple
    look_at: tuple
    vfov_deg: float

    def to_meta(self) -> dict:
        return {"position": list(self.position), "look_at": list(self.look_at),
                "vfov_deg": self.vfov_deg}


@dataclass(frozen=True)
class EnvBinding:
    """One concrete environment instance: which map, how rotated, how bright."""

    env_id: str
    rotation: float
    intensity: float = 1.0

    def to_meta(self) -> dict:
        return {"env_id": self.env_id, "rotation": self.rotation, "intensity": self.intensity}


@dataclass(frozen=True)
class VesselInfo:
    profile: VesselProfile
    glass_material: MaterialSpec
    wall: float
    content_kind: str            # "fill" | "object"
    mesh: Mesh = field(repr=False, compare=False, default=None)


@dataclass(frozen=True)
class SceneSpec:
    """Everything the renderer needs for one scene (bar the blended material)."""

    index: int
    background_policy: str
    main_object: Mesh
    main_transform: np.ndarray
    main_material_pair: tuple            # (MaterialSpec A, MaterialSpec B)
    camera: CameraSpec
    environment: EnvBinding              # binding used by ratio image 0
    env_per_image: tuple                 # 5 EnvBindings
    uv_transform: UVTransform            # transform used by ratio image 0
    uv_per_image: tuple                  # 5 UVTransforms
    ground: Optional[tuple] = None       # (plane height, MaterialSpec); generated scenes always set it
    background_objects: tuple = ()       # (Mesh, transform, MaterialSpec) triples
    vessel: Optional[VesselInfo] = None
    object_info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.background_policy not in POLICIES:
            raise ValueError(f"unknown policy {self.background_policy!r}")
        if len(self.env_per_image) != len(SET_RATIOS) or len(self.uv_per_image) != len(SET_RATIOS):
            raise ValueError("per-image schedules must cover all 5 ratios")


@dataclass(frozen=True)
class SceneSet:
    set_id: str
    seed: int
    material_a: MaterialSpec
    material_b: MaterialSpec
    scenes: tuple
    vessel: bool
    ratios: tuple = SET_RATIOS

    def __post_init__(self):
        if len(self.scenes) != 6:
            raise ValueError("a set holds exactly 6 scenes")
        if tuple(s.background_policy for s in self.scenes) != POLICY_SCHEDULE:
            raise ValueError("scenes must follow the fixed/rotate/replace 2-2-2 schedule")
        if tuple(self.ratios) != SET_RATIOS:
            raise ValueError(f"ratio list must be {SET_RATIOS}")


@dataclass
class GenConfig:
    """Everything scene generation may depend on besides the seed."""

    vessel_probability: float = 0.5
    material_kind: str = UNIFORM
    material_library: Optional[Sequence[MaterialSpec]] = None
    env_library: EnvironmentLibrary = field(default_factory=EnvironmentLibrary)
    background_object_range: tuple = (0, 4)
    mesh_detail: int = 24
    vessel_grid: tuple = (48, 48)
    frame_fraction_min: float = 0.15
    camera_retries: int = 32
    mask_probe_res: int = 48
    ground_half_extent: float = 3.0

    def to_meta(self) -> dict:
        return {
            "vessel_probability": self.vessel_probability,
            "material_kind": self.material_kind,
            "background_object_range": list(self.background_object_range),
            "mesh_detail": self.mesh_detail,
            "vessel_grid": list(self.vessel_grid),
            "frame_fraction_min": self.frame_fraction_min,
            "camera_retries": self.camera_retries,
            "mask_probe_res": self.mask_probe_res,
            "ground_half_extent": self.ground_half_extent,
            "env_bake_height": self.env_library.bake_height,
            "env_hdr_dir": str(self.env_library.hdr_paths[0].parent) if self.env_library.hdr_paths else None,
        }

    @staticmethod
    def from_meta(meta: dict) -> "GenConfig":
        lib = EnvironmentLibrary(meta.get("env_hdr_dir"), bake_height=meta.get("env_bake_height", 128))
        return GenConfig(
            vessel_probability=meta["vessel_probability"],
            material_kind=meta["material_kind"],
            env_library=lib,
            background_object_range=tuple(meta["background_object_range"]),
            mesh_detail=meta["mesh_detail"],
            vessel_grid=tuple(meta["vessel_grid"]),
            frame_fraction_min=meta["frame_fraction_min"],
            camera_retries=meta["camera_retries"],
            mask_probe_res=meta["mask_probe_res"],
            ground_half_extent=meta["ground_half_extent"],
        )


def _sample_glass(rng: np.random.Generator, mat_id: str) -> MaterialSpec:
    tint = rng.uniform(0.82, 1.0, size=3)
    return MaterialSpec(
        id=mat_id,
        kind=UNIFORM,
        base_color=tuple(tint),
        roughness=float(rng.uniform(0.0, 0.12)),
        metallic=0.0,
        transmission=float(rng.uniform(0.85, 1.0)),
        ior=float(rng.uniform(1.4, 1.55)),
    )


def _drop_to_ground(mesh: Mesh, clearance: float = 1e-4) -> Mesh:
    lo, _ = mesh.bounds()
    return transform_mesh(mesh, make_transform(translation=(0.0, 0.0, clearance - lo[2])))


def _sample_camera(rng: np.random.Generator, center, radius, frame_fraction_min, retries):
    """Camera framing: the main object's bounding sphere must subtend at
    least ``frame_fraction_min`` of the image height."""
    for _ in range(retries):
        vfov = math.radians(float(rng.uniform(35.0, 60.0)))
        frac = float(rng.uniform(max(0.25, frame_fraction_min), 0.65))
        half_ang = 0.5 * frac * vfov
        d = radius / math.sin(min(half_ang, math.pi / 2 - 1e-3))
        azim = float(rng.uniform(0.0, 2.0 * math.pi))
        elev = float(rng.uniform(math.radians(8.0), math.radians(55.0)))
        direction = np.array([
            math.cos(elev) * math.cos(azim),
            math.cos(elev) * math.sin(azim),
            math.sin(elev),
        ])
        pos = np.asarray(center) + d * direction
        jitter = rng.uniform(-0.08, 0.08, size=3) * radius
        look = np.asarray(center) + jitter
        if pos[2] < 0.02 or d < 1.05 * radius:
            continue
        # verify the subtense actually satisfied (it is, by construction)
        subtense = 2.0 * math.asin(min(1.0, radius / d)) / vfov
        if subtense >= frame_fraction_min:
            return CameraSpec(tuple(pos), tuple(look), math.degrees(vfov))
    raise GenerationError("camera framing failed after bounded retries")


def _env_schedule(rng: np.random.Generator, policy: str, lib: EnvironmentLibrary) -> tuple:
    def fresh_binding():
        return EnvBinding(
            env_id=lib.sample_id(rng),
            rotation=float(rng.uniform(0.0, 2.0 * math.pi)),
            intensity=float(np.exp(rng.uniform(np.log(0.6), np.log(1.6)))),
        )

    base = fresh_binding()
    if policy == "fixed":
        return (base,) * 5
    if policy == "rotate_env":
        out = [base]
        for _ in range(4):
            out.append(replace(base, rotation=float(rng.uniform(0.0, 2.0 * math.pi))))
        return tuple(out)
    out = [base]
    for _ in range(4):
        out.append(fresh_binding())
    return tuple(out)


def _build_scene(k: int, rng: np.random.Generator, set_id: str, pair: tuple,
                 vessel_flag: bool, config: GenConfig) -> SceneSpec:
    policy = POLICY_SCHEDULE[k]
    info: dict = {"policy": policy}
    vessel = None
    if vessel_flag:
        vseed = int(rng.integers(2**31))
        vmesh, content, profile, vinfo = generate_vessel(
            vseed, n_u=config.vessel_grid[0], n_theta=config.vessel_grid[1])
        glass = _sample_glass(rng, f"{set_id}:glass:{k}")
        vessel = VesselInfo(profile=profile, glass_material=glass,
                            wall=vinfo["wall"], content_kind=vinfo["content_kind"], mesh=vmesh)
        main = content
        info.update(kind="vessel_content", vessel_seed=vseed, **vinfo)
    else:
        oseed = int(rng.integers(2**31))
        main = generate_primitive_object(oseed, detail=config.mesh_detail)
        info.update(kind="primitive", object_seed=oseed)
    yaw = float(rng.uniform(0.0, 2.0 * math.pi))
    if vessel_flag:
        placed = transform_mesh(main, make_transform(rotation_z=yaw))
        vessel = replace(vessel, mesh=transform_mesh(vessel.mesh, make_transform(rotation_z=yaw)))
        lo, _ = vessel.mesh.bounds()
        lift = make_transform(translation=(0.0, 0.0, 1e-4 - lo[2]))
        placed = transform_mesh(placed, lift)
        vessel = replace(vessel, mesh=transform_mesh(vessel.mesh, lift))
    else:
        tilt = float(rng.uniform(0.0, math.pi))
        placed = _drop_to_ground(transform_mesh(
            main, make_transform(rotation_z=yaw, rotation_x=tilt)))
    info["yaw"] = yaw

    n_bg = int(rng.integers(config.background_object_range[0],
                            config.background_object_range[1] + 1))
    bg = []
    for b in range(n_bg):
        bseed = int(rng.integers(2**31))
        bmesh = generate_primitive_object(bseed, detail=max(10, config.mesh_detail // 2))
        dist = float(rng.uniform(0.25, 0.8))
        ang = float(rng.uniform(0.0, 2.0 * math.pi))
        byaw = float(rng.uniform(0.0, 2.0 * math.pi))
        bmesh = _drop_to_ground(transform_mesh(bmesh, make_transform(rotation_z=byaw)))
        bmesh = transform_mesh(bmesh, make_transform(
            translation=(dist * math.cos(ang), dist * math.sin(ang), 0.0)))
        bmat = sample_random_material(int(rng.integers(2**31)), kind=UNIFORM)
        bmat = replace(bmat, id=f"{set_id}:bg:{k}:{b}")
        bg.append((bmesh, np.eye(4), bmat))

    gmat = replace(sample_random_material(int(rng.integers(2**31)), kind=UNIFORM),
                   id=f"{set_id}:ground:{k}")

    center, radius = placed.bounding_sphere()
    camera = _sample_camera(rng, center, radius, config.frame_fraction_min,
                            config.camera_retries)

    env_sched = _env_schedule(rng, policy, config.env_library)
    uv_sched = tuple(randomize_uv(rng=rng) for _ in range(5))

    return SceneSpec(
        index=k,
        background_policy=policy,
        main_object=placed,
        main_transform=np.eye(4),
        main_material_pair=pair,
        camera=camera,
        environment=env_sched[0],
        env_per_image=env_sched,
        uv_transform=uv_sched[0],
        uv_per_image=uv_sched,
        ground=(0.0, gmat),
        background_objects=tuple(bg),
        vessel=vessel,
        object_info=info,
    )


def generate_scene_set(seed: int, config: Optional[GenConfig] = None) -> SceneSet:
    """Build the full 6-scene set for one seed.

    Objects, backgrounds, and environments are drawn independently per
    scene; the material pair is shared by all six scenes. Scenes whose mask
    probe comes back empty are resampled (bounded retries).
    """
    config = config or GenConfig()
    if config.material_kind == TEXTURED and not config.material_library:
        raise EmptyLibraryError("textured generation needs a material library")
    rng = np.random.default_rng(seed)
    set_id = f"{seed:08d}"
    vessel_flag = bool(rng.uniform() < config.vessel_probability)
    mat_a = replace(
        sample_random_material(int(rng.integers(2**31)), kind=config.material_kind,
                               library=config.material_library),
        id=f"{set_id}:A")
    mat_b = replace(
        sample_random_material(int(rng.integers(2**31)), kind=config.material_kind,
                               library=config.material_library),
        id=f"{set_id}:B")
    scenes = []
    for k in range(6):
        scene = None
        for attempt in range(32):
            sub = np.random.default_rng(rng.integers(2**31))
            try:
                candidate = _build_scene(k, sub, set_id, (mat_a, mat_b), vessel_flag, config)
            except GenerationError:
                continue
            if config.mask_probe_res and not _mask_probe_nonempty(candidate, config.mask_probe_res):
                continue
            scene = candidate
            break
        if scene is None:
            raise GenerationError(f"scene {k} of set {set_id} failed after bounded retries")
        scenes.append(scene)
    return SceneSet(set_id=set_id, seed=seed, material_a=mat_a, material_b=mat_b,
                    scenes=tuple(scenes), vessel=vessel_flag)


def _mask_probe_nonempty(scene: SceneSpec, res: int) -> bool:
    from .tracer import compute_mask  # local import: tracer depends on this module

    return bool(np.any(compute_mask(scene, width=res, height=res)))
