"""Scene compilation and the rendering entry points.

``render`` turns one SceneSpec plus a blended material into a linear image,
a tone-mapped 8-bit image, and the main-object mask. ``render_set`` walks a
SceneSet's 6 scenes x 5 ratios reusing geometry and BVH per scene. Output is
byte-deterministic for fixed inputs: all sampling flows from per-pixel
counter RNG, so worker count never changes a pixel.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .bvh import BVH, build_bvh
from .environment import RADIANCE_MAX, EnvironmentLibrary
from .errors import RenderError
from .geometry import Mesh, ground_plane
from .image_io import tonemap
from .materials import TEXTURED, MaterialSpec, TextureMap, mix_materials, resample_map
from .scenes import EnvBinding, SceneSpec, SceneSet, UVTransform

_ATLAS_CAP = 256
_ABSORB_REF = 0.1  # meters of travel that applies the albedo tint once
_MASK_INTERFACES = 4


@dataclass(frozen=True)
class RenderSettings:
    width: int = 512
    height: int = 512
    samples_per_pixel: int = 120
    max_bounces: int = 6
    seed: int = 0
    env_importance: bool = False

    def __post_init__(self):
        if self.samples_per_pixel < 1:
            raise ValueError("samples_per_pixel must be >= 1")
        if self.max_bounces < 1:
            raise ValueError("max_bounces must be >= 1")
        if self.width < 1 or self.height < 1:
            raise ValueError("resolution must be >= 1")

    def to_meta(self) -> dict:
        return {"width": self.width, "height": self.height,
                "samples_per_pixel": self.samples_per_pixel,
                "max_bounces": self.max_bounces, "seed": self.seed,
                "env_importance": self.env_importance}

    @staticmethod
    def from_meta(meta: dict) -> "RenderSettings":
        return RenderSettings(**meta)


@dataclass
class RenderOutput:
    image: np.ndarray        # (h, w, 3) float32 linear radiance
    image_srgb: np.ndarray   # (h, w, 3) uint8
    mask: np.ndarray         # (h, w) uint8, 255 = main-object material
    stats: dict


@dataclass
class SetRenderResult:
    images: list             # 6 lists of 5 RenderOutput
    masks: list              # 6 uint8 masks (one per scene)


def image_seed(base_seed: int, scene_index: int, ratio_index: int) -> int:
    """Per-image kernel seed: a stable mix of (base, scene, ratio)."""
    mask = (1 << 64) - 1
    h = (base_seed ^ 0x9E3779B97F4A7C15) & mask
    for part in (scene_index + 1, ratio_index + 1):
        h = int(kernels._splitmix64(np.uint64(h ^ ((part * 0xBF58476D1CE4E5B9) & mask))))
    return h & 0x7FFFFFFFFFFFFFFF


def set_worker_threads() -> None:
    """Honor the MATSIM_THREADS cap for numba's thread pool."""
    want = os.environ.get("MATSIM_THREADS")
    if not want:
        return
    import numba

    n = max(1, min(int(want), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


# ---------------------------------------------------------------------------
# compilation

@dataclass
class CompiledScene:
    p0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    tn0: np.ndarray
    tn1: np.ndarray
    tn2: np.ndarray
    tuv0: np.ndarray
    tuv1: np.ndarray
    tuv2: np.ndarray
    ttan: np.ndarray
    tri_obj: np.ndarray
    obj_kind: np.ndarray
    bvh: BVH
    materials: list          # MaterialSpec per material slot (slot 0 = main)
    n_objects: int


def _scene_objects(scene: SceneSpec):
    """(mesh, kind) pairs and the material list; slot 0 is the blended main
    material and gets patched per ratio image."""
    objects = [(scene.main_object, 0)]
    materials = [None]
    if scene.vessel is not None:
        objects.append((scene.vessel.mesh, 1))
        materials.append(scene.vessel.glass_material)
    for bmesh, _t, bmat in scene.background_objects:
        objects.append((bmesh, 2))
        materials.append(bmat)
    if scene.ground is not None:
        height, gmat = scene.ground
        objects.append((ground_plane(height), 2))
        materials.append(gmat)
    return objects, materials


def compile_scene(scene: SceneSpec) -> CompiledScene:
    objects, materials = _scene_objects(scene)
    v_list, n_list, uv_list, t_list, obj_ids = [], [], [], [], []
    offset = 0
    for oi, (mesh, _kind) in enumerate(objects):
        v_list.append(mesh.vertices)
        n_list.append(mesh.normals)
        uv_list.append(mesh.uv)
        t_list.append(mesh.triangles.astype(np.int64) + offset)
        obj_ids.append(np.full(mesh.n_triangles, oi, dtype=np.int32))
        offset += mesh.n_vertices
    verts = np.concatenate(v_list)
    normals = np.concatenate(n_list)
    uvs = np.concatenate(uv_list)
    tris = np.concatenate(t_list)
    tri_obj = np.concatenate(obj_ids)

    p0 = np.ascontiguousarray(verts[tris[:, 0]])
    p1 = verts[tris[:, 1]]
    p2 = verts[tris[:, 2]]
    e1 = np.ascontiguousarray(p1 - p0)
    e2 = np.ascontiguousarray(p2 - p0)
    tn = [np.ascontiguousarray(normals[tris[:, k]]) for k in range(3)]
    tuv = [np.ascontiguousarray(uvs[tris[:, k]]) for k in range(3)]

    duv1 = tuv[1] - tuv[0]
    duv2 = tuv[2] - tuv[0]
    det = duv1[:, 0] * duv2[:, 1] - duv2[:, 0] * duv1[:, 1]
    safe = np.abs(det) > 1e-12
    tan = np.where(
        safe[:, None],
        (e1 * duv2[:, 1:2] - e2 * duv1[:, 1:2]) / np.where(safe, det, 1.0)[:, None],
        e1,
    )
    tlen = np.linalg.norm(tan, axis=1, keepdims=True)
    tan = tan / np.where(tlen < 1e-12, 1.0, tlen)

    return CompiledScene(
        p0=p0, e1=e1, e2=e2,
        tn0=tn[0], tn1=tn[1], tn2=tn[2],
        tuv0=tuv[0], tuv1=tuv[1], tuv2=tuv[2],
        ttan=np.ascontiguousarray(tan),
        tri_obj=tri_obj,
        obj_kind=np.array([k for _m, k in objects], dtype=np.int32),
        bvh=build_bvh(p0, p0 + e1, p0 + e2),
        materials=materials,
        n_objects=len(objects),
    )


def _mean_albedo(mat: MaterialSpec) -> np.ndarray:
    if isinstance(mat.base_color, TextureMap):
        return mat.base_color.data.reshape(-1, 3).mean(axis=0)
    return np.asarray(mat.base_color, dtype=np.float64)


def build_material_atlas(materials: list):
    """Pack material maps into one (M, H, W, 9) float32 array.

    Channels: albedo RGB, roughness, metallic, transmission, encoded normal.
    Uniform materials occupy a single texel; textured maps are capped at
    _ATLAS_CAP per side.
    """
    sizes = []
    for mat in materials:
        if mat.kind == TEXTURED:
            h = min(mat.base_color.height, _ATLAS_CAP)
            w = min(mat.base_color.width, _ATLAS_CAP)
        else:
            h = w = 1
        sizes.append((h, w))
    hmax = max(h for h, _ in sizes)
    wmax = max(w for _, w in sizes)
    tex = np.zeros((len(materials), hmax, wmax, 9), dtype=np.float32)
    res = np.zeros((len(materials), 2), dtype=np.int32)
    ior = np.zeros(len(materials), dtype=np.float64)
    absorb = np.zeros((len(materials), 3), dtype=np.float64)

    def as_array(value, h, w, channels):
        if isinstance(value, TextureMap):
            m = resample_map(value, w, h)
            return m.data if channels == 3 else m.data
        if channels == 3:
            return np.broadcast_to(np.asarray(value, dtype=np.float64), (h, w, 3))
        return np.full((h, w), float(value))

    for i, mat in enumerate(materials):
        h, w = sizes[i]
        res[i] = (h, w)
        tex[i, :h, :w, 0:3] = as_array(mat.base_color, h, w, 3)
        tex[i, :h, :w, 3] = as_array(mat.roughness, h, w, 1)
        tex[i, :h, :w, 4] = as_array(mat.metallic, h, w, 1)
        tex[i, :h, :w, 5] = as_array(mat.transmission, h, w, 1)
        if mat.kind == TEXTURED and mat.normal is not None:
            tex[i, :h, :w, 6:9] = as_array(mat.normal, h, w, 3)
        else:
            tex[i, :h, :w, 6:9] = (0.5, 0.5, 1.0)
        ior[i] = mat.ior
        mean = np.clip(_mean_albedo(mat), 1e-3, 1.0)
        absorb[i] = -np.log(mean) / _ABSORB_REF
    return tex, res, ior, absorb


def _camera_basis(camera):
    pos = np.asarray(camera.position, dtype=np.float64)
    look = np.asarray(camera.look_at, dtype=np.float64)
    fwd = look - pos
    fwd = fwd / np.linalg.norm(fwd)
    up_world = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(fwd, up_world)) > 0.999:
        up_world = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up_world)
    right = right / np.linalg.norm(right)
    up = np.cross(right, fwd)
    return pos, right, up, fwd


def _uvt_rows(scene: SceneSpec, compiled: CompiledScene, main_uvt: UVTransform) -> np.ndarray:
    rows = np.zeros((compiled.n_objects, 5), dtype=np.float64)
    rows[:, 0] = 1.0  # scale
    rows[:, 1] = 1.0  # cos
    rows[0] = (main_uvt.scale, math.cos(main_uvt.rotation), math.sin(main_uvt.rotation),
               main_uvt.offset[0], main_uvt.offset[1])
    return rows


def _resolve_env(binding: EnvBinding, env_library: Optional[EnvironmentLibrary],
                 env_override: Optional[np.ndarray]) -> tuple:
    if env_override is not None:
        return np.ascontiguousarray(env_override.astype(np.float32)), float(binding.rotation)
    lib = env_library or EnvironmentLibrary()
    base = lib.baked(binding.env_id)
    scaled = np.clip(base * binding.intensity, 0.0, RADIANCE_MAX).astype(np.float32)
    return np.ascontiguousarray(scaled), float(binding.rotation)


_DUMMY_ROWS = np.zeros(1, dtype=np.float64)
_DUMMY_COND = np.zeros((1, 1), dtype=np.float64)
_DUMMY_PDF = np.zeros((1, 1), dtype=np.float64)


def _render_compiled(compiled: CompiledScene, scene: SceneSpec, material: MaterialSpec,
                     settings: RenderSettings, binding: EnvBinding, uvt: UVTransform,
                     env_library, env_override, mask: Optional[np.ndarray]) -> RenderOutput:
    set_worker_threads()
    t0 = time.perf_counter()
    materials = list(compiled.materials)
    materials[0] = material
    tex, res, ior, absorb = build_material_atlas(materials)
    env_map, rotation = _resolve_env(binding, env_library, env_override)
    pos, right, up, fwd = _camera_basis(scene.camera)
    tan_half = math.tan(math.radians(scene.camera.vfov_deg) / 2.0)
    aspect = settings.width / settings.height
    obj_mat = np.arange(compiled.n_objects, dtype=np.int32)
    uvt_rows = _uvt_rows(scene, compiled, uvt)

    if settings.env_importance:
        rows, cond, pdf = kernels.build_env_distribution(env_map)
        nee = 1
    else:
        rows, cond, pdf = _DUMMY_ROWS, _DUMMY_COND, _DUMMY_PDF
        nee = 0

    img = np.zeros((settings.height, settings.width, 3), dtype=np.float32)
    nan_rows = np.zeros(settings.height, dtype=np.int64)
    b = compiled.bvh
    kernels.render_kernel(
        img, nan_rows, settings.width, settings.height,
        settings.samples_per_pixel, settings.max_bounces,
        np.uint64(settings.seed),
        pos[0], pos[1], pos[2], right[0], right[1], right[2],
        up[0], up[1], up[2], fwd[0], fwd[1], fwd[2],
        tan_half, aspect,
        b.node_min, b.node_max, b.node_left, b.node_right, b.tri_order,
        compiled.p0, compiled.e1, compiled.e2,
        compiled.tn0, compiled.tn1, compiled.tn2,
        compiled.tuv0, compiled.tuv1, compiled.tuv2,
        compiled.ttan, compiled.tri_obj,
        obj_mat, compiled.obj_kind, uvt_rows,
        tex, res, ior, absorb,
        env_map, rotation,
        nee, rows, cond, pdf,
    )
    if mask is None:
        mask = _mask_for(compiled, scene, settings.width, settings.height, ior, obj_mat)
    if not np.any(mask):
        raise RenderError("render produced an empty main-object mask")
    stats = {
        "nan_samples": int(nan_rows.sum()),
        "seconds": round(time.perf_counter() - t0, 4),
        "spp": settings.samples_per_pixel,
        "width": settings.width,
        "height": settings.height,
        "mask_pixels": int((mask > 0).sum()),
    }
    return RenderOutput(image=img, image_srgb=tonemap(img), mask=mask, stats=stats)


def _mask_for(compiled: CompiledScene, scene: SceneSpec, width: int, height: int,
              ior=None, obj_mat=None) -> np.ndarray:
    if ior is None:
        materials = list(compiled.materials)
        materials[0] = scene.main_material_pair[0]
        _tex, _res, ior, _ab = build_material_atlas(materials)
    if obj_mat is None:
        obj_mat = np.arange(compiled.n_objects, dtype=np.int32)
    pos, right, up, fwd = _camera_basis(scene.camera)
    tan_half = math.tan(math.radians(scene.camera.vfov_deg) / 2.0)
    mask = np.zeros((height, width), dtype=np.uint8)
    b = compiled.bvh
    kernels.mask_kernel(
        mask, width, height,
        pos[0], pos[1], pos[2], right[0], right[1], right[2],
        up[0], up[1], up[2], fwd[0], fwd[1], fwd[2],
        tan_half, width / height,
        b.node_min, b.node_max, b.node_left, b.node_right, b.tri_order,
        compiled.p0, compiled.e1, compiled.e2,
        compiled.tri_obj, compiled.obj_kind, obj_mat, ior, _MASK_INTERFACES,
    )
    return mask


def compute_mask(scene: SceneSpec, width: int, height: int) -> np.ndarray:
    """Main-object mask from primary rays only (no radiance sampling)."""
    set_worker_threads()
    compiled = compile_scene(scene)
    return _mask_for(compiled, scene, width, height)


def render(scene: SceneSpec, material: MaterialSpec, settings: RenderSettings,
           env_library: Optional[EnvironmentLibrary] = None,
           env_override: Optional[np.ndarray] = None) -> RenderOutput:
    """Render one scene with the given (typically blended) main material.

    Uses the scene's base environment binding and base uv transform, i.e.
    what ratio image 0 of a set render sees.
    """
    compiled = compile_scene(scene)
    return _render_compiled(compiled, scene, material, settings, scene.environment,
                            scene.uv_transform, env_library, env_override, None)


def render_set(scene_set: SceneSet, settings: RenderSettings,
               env_library: Optional[EnvironmentLibrary] = None,
               progress=None) -> SetRenderResult:
    """Render all 6 scenes x 5 ratios of a set.

    Geometry, BVH, and the per-scene mask are computed once per scene; the
    blended main material, uv transform, environment binding, and kernel
    seed change per image. Image (k, j) uses seed
    ``image_seed(settings.seed, k, j)``.
    """
    images, masks = [], []
    for k, scene in enumerate(scene_set.scenes):
        compiled = compile_scene(scene)
        mask = _mask_for(compiled, scene, settings.width, settings.height)
        if not np.any(mask):
            raise RenderError(f"scene {k}: empty mask at render resolution")
        row = []
        for j, ratio in enumerate(scene_set.ratios):
            blended = mix_materials(scene_set.material_a, scene_set.material_b, ratio)
            s = RenderSettings(
                width=settings.width, height=settings.height,
                samples_per_pixel=settings.samples_per_pixel,
                max_bounces=settings.max_bounces,
                seed=image_seed(settings.seed, k, j),
                env_importance=settings.env_importance,
            )
            try:
                out = _render_compiled(compiled, scene, blended, s,
                                       scene.env_per_image[j], scene.uv_per_image[j],
                                       env_library, None, mask)
            except RenderError as exc:
                raise RenderError(f"scene {k}, ratio {ratio}: {exc}") from exc
            row.append(out)
            if progress is not None:
                progress(k, j)
        images.append(row)
        masks.append(mask)
    return SetRenderResult(images=images, masks=masks)
