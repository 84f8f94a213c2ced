"""On-disk dataset schema, descriptor exchange files, and validation.

Layout per set::

    set_<id>/
      metadata.json
      scene_<k>/img_r000.png ... img_r100.png   (ratio x 100, zero-padded)
      scene_<k>/mask.png

Manifests are canonical JSON (sorted keys, two-space indent) so a
serialize/parse/serialize round trip is byte-stable. Writes go through a
temp directory and a final rename: an interrupted generation never leaves a
set that validates.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from .errors import (
    DatasetValidationError,
    DescriptorFileError,
    EmptyDatasetError,
    IncompleteSetError,
    SchemaVersionError,
)
from .image_io import read_png, write_hdr, write_png
from .materials import SET_RATIOS, material_meta
from .scenes import GenConfig, SceneSet
from .similarity import DESCRIPTOR_DIM, Descriptor, ImageLabel
from .tracer import RenderSettings, SetRenderResult

SCHEMA_VERSION = "1.0"
_MAGIC = b"MSIMDESC"

RATIO_SUFFIXES = tuple(f"{int(round(r * 100)):03d}" for r in SET_RATIOS)


def ratio_filename(ratio: float) -> str:
    return f"img_r{int(round(ratio * 100)):03d}.png"


def image_ref(set_id: str, scene_index: int, ratio: float) -> str:
    return f"set_{set_id}/scene_{scene_index}/{ratio_filename(ratio)}"


def label_for_ref(ref: str) -> ImageLabel:
    """Parse a canonical image ref back into its label."""
    parts = Path(ref).parts
    if len(parts) != 3 or not parts[0].startswith("set_") or not parts[1].startswith("scene_"):
        raise ValueError(f"not a canonical dataset image ref: {ref!r}")
    ratio = int(parts[2][len("img_r"):-len(".png")]) / 100.0
    return ImageLabel(set_id=parts[0][len("set_"):],
                      scene_index=int(parts[1][len("scene_"):]),
                      ratio=ratio)


# ---------------------------------------------------------------------------
# manifests

def build_manifest(scene_set: SceneSet, settings: RenderSettings,
                   config: GenConfig) -> dict:
    scenes = []
    for s in scene_set.scenes:
        entry = {
            "index": s.index,
            "background_policy": s.background_policy,
            "camera": s.camera.to_meta(),
            "object": s.object_info,
            "environments": [b.to_meta() for b in s.env_per_image],
            "uv_transforms": [t.to_meta() for t in s.uv_per_image],
            "ground_material": material_meta(s.ground[1]) if s.ground else None,
            "background_materials": [material_meta(m) for _g, _t, m in s.background_objects],
        }
        if s.vessel is not None:
            entry["vessel"] = {
                "wall": s.vessel.wall,
                "content_kind": s.vessel.content_kind,
                "glass": material_meta(s.vessel.glass_material),
                "profile": {
                    "linear_coeffs": list(s.vessel.profile.linear_coeffs),
                    "trig_terms": [list(t) for t in s.vessel.profile.trig_terms],
                    "r_min": s.vessel.profile.r_min,
                    "height": s.vessel.profile.height,
                    "stretch": list(s.vessel.profile.stretch),
                },
            }
        else:
            entry["vessel"] = None
        scenes.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "set_id": scene_set.set_id,
        "seed": scene_set.seed,
        "vessel": scene_set.vessel,
        "ratios": list(scene_set.ratios),
        "materials": {
            "A": material_meta(scene_set.material_a),
            "B": material_meta(scene_set.material_b),
        },
        "render_settings": settings.to_meta(),
        "gen_config": config.to_meta(),
        "scenes": scenes,
    }


def manifest_text(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=2) + "\n"


def check_schema_version(manifest: dict) -> None:
    version = str(manifest.get("schema_version", ""))
    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise SchemaVersionError(f"malformed schema_version {version!r}")
    supported = int(SCHEMA_VERSION.split(".")[0])
    if major > supported:
        raise SchemaVersionError(
            f"manifest schema {version} is newer than supported {SCHEMA_VERSION}")


# ---------------------------------------------------------------------------
# writing

def write_set(scene_set: SceneSet, result: SetRenderResult, root: str | Path,
              settings: RenderSettings, config: GenConfig,
              keep_linear: bool = False, stats: bool = False) -> Path:
    """Write one rendered set atomically; returns the final set directory."""
    if len(result.images) != 6 or any(len(row) != 5 for row in result.images):
        raise IncompleteSetError("a set needs 6 scenes x 5 rendered images")
    if len(result.masks) != 6:
        raise IncompleteSetError("a set needs 6 scene masks")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    final = root / f"set_{scene_set.set_id}"
    tmp = root / f".tmp-set_{scene_set.set_id}-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    try:
        for k, row in enumerate(result.images):
            scene_dir = tmp / f"scene_{k}"
            scene_dir.mkdir()
            for ratio, out in zip(scene_set.ratios, row):
                write_png(scene_dir / ratio_filename(ratio), out.image_srgb)
                if keep_linear:
                    write_hdr(scene_dir / ratio_filename(ratio).replace(".png", ".hdr"),
                              out.image)
                if stats:
                    stats_path = scene_dir / ratio_filename(ratio).replace(".png", ".stats.json")
                    stats_path.write_text(json.dumps(out.stats, sort_keys=True, indent=2) + "\n",
                                          encoding="utf-8")
            write_png(scene_dir / "mask.png", result.masks[k])
        (tmp / "metadata.json").write_text(
            manifest_text(build_manifest(scene_set, settings, config)), encoding="utf-8")
        if final.exists():
            shutil.rmtree(final)
        os.replace(tmp, final)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)
    return final


# ---------------------------------------------------------------------------
# parsing / validation

@dataclass(frozen=True)
class SetEntry:
    set_id: str
    path: Path
    vessel: bool
    manifest: dict

    @property
    def image_refs(self) -> list:
        return [image_ref(self.set_id, k, r) for k in range(6) for r in SET_RATIOS]


@dataclass
class DatasetIndex:
    root: Path
    sets: List[SetEntry]
    errors: List[tuple] = field(default_factory=list)

    @property
    def vessel_sets(self) -> list:
        return [s for s in self.sets if s.vessel]

    @property
    def plain_sets(self) -> list:
        return [s for s in self.sets if not s.vessel]

    @property
    def image_refs(self) -> list:
        return [r for s in self.sets for r in s.image_refs]

    def labels(self) -> Dict[str, ImageLabel]:
        return {r: label_for_ref(r) for r in self.image_refs}


_POLICY_SPLIT = ("fixed", "fixed", "rotate_env", "rotate_env", "replace_env", "replace_env")


def validate_set_dir(set_dir: str | Path) -> SetEntry:
    """Full structural validation of one set directory; raises
    DatasetValidationError / SchemaVersionError with precise context."""
    set_dir = Path(set_dir)
    meta_path = set_dir / "metadata.json"
    if not meta_path.exists():
        raise DatasetValidationError(f"{set_dir.name}: missing metadata.json")
    try:
        manifest = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetValidationError(
            f"{set_dir.name}: corrupted metadata.json at line {exc.lineno}, "
            f"column {exc.colno} (offset {exc.pos}): {exc.msg}") from exc
    check_schema_version(manifest)
    set_id = manifest.get("set_id")
    if f"set_{set_id}" != set_dir.name:
        raise DatasetValidationError(
            f"{set_dir.name}: manifest set_id {set_id!r} does not match directory")
    if [round(float(r), 4) for r in manifest.get("ratios", [])] != [0.0, 0.25, 0.5, 0.75, 1.0]:
        raise DatasetValidationError(f"{set_dir.name}: ratio list must be 0/.25/.5/.75/1")
    scenes = manifest.get("scenes", [])
    if len(scenes) != 6:
        raise DatasetValidationError(f"{set_dir.name}: expected 6 scenes, found {len(scenes)}")
    policies = tuple(s.get("background_policy") for s in scenes)
    if policies != _POLICY_SPLIT:
        raise DatasetValidationError(
            f"{set_dir.name}: policy split must be 2x fixed / 2x rotate_env / 2x replace_env, "
            f"got {policies}")
    for k, scene in enumerate(scenes):
        envs = scene.get("environments", [])
        if len(envs) != 5:
            raise DatasetValidationError(f"{set_dir.name}: scene_{k} needs 5 environment bindings")
        ids = [e["env_id"] for e in envs]
        rots = [e["rotation"] for e in envs]
        policy = scene["background_policy"]
        if policy == "fixed" and (len(set(ids)) != 1 or len(set(rots)) != 1):
            raise DatasetValidationError(
                f"{set_dir.name}: scene_{k} is fixed but environment varies across images")
        if policy == "rotate_env" and len(set(ids)) != 1:
            raise DatasetValidationError(
                f"{set_dir.name}: scene_{k} rotates the environment but swaps maps")
        scene_dir = set_dir / f"scene_{k}"
        for suffix in RATIO_SUFFIXES:
            img = scene_dir / f"img_r{suffix}.png"
            if not img.exists():
                raise DatasetValidationError(f"{set_dir.name}: scene_{k} missing {img.name}")
        mask_path = scene_dir / "mask.png"
        if not mask_path.exists():
            raise DatasetValidationError(f"{set_dir.name}: scene_{k} missing mask.png")
        if not np.any(read_png(mask_path) > 0):
            raise DatasetValidationError(f"{set_dir.name}: scene_{k} mask is empty")
    return SetEntry(set_id=set_id, path=set_dir, vessel=bool(manifest.get("vessel")),
                    manifest=manifest)


def parse_dataset(root: str | Path) -> DatasetIndex:
    """Enumerate and validate every set under ``root``.

    Valid sets land in the index; invalid ones are reported per set in
    ``errors`` (never silently skipped). An empty root raises.
    """
    root = Path(root)
    if not root.exists():
        raise EmptyDatasetError(f"dataset root does not exist: {root}")
    set_dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("set_"))
    if not set_dirs:
        raise EmptyDatasetError(f"no set_* directories under {root}")
    sets, errors = [], []
    for d in set_dirs:
        try:
            sets.append(validate_set_dir(d))
        except (DatasetValidationError, SchemaVersionError) as exc:
            errors.append((d.name, str(exc)))
    return DatasetIndex(root=root, sets=sets, errors=errors)


# ---------------------------------------------------------------------------
# descriptor exchange

def write_descriptors_jsonl(path: str | Path, descriptors: Iterable[Descriptor]) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for d in descriptors:
            fh.write(json.dumps({"image_ref": d.image_ref,
                                 "descriptor": [float(x) for x in d.values]}) + "\n")


def read_descriptors_jsonl(path: str | Path) -> Dict[str, Descriptor]:
    path = Path(path)
    out: Dict[str, Descriptor] = {}
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DescriptorFileError(f"{path.name}:{ln}: bad JSON: {exc.msg}") from exc
            ref = obj.get("image_ref")
            vec = obj.get("descriptor")
            if ref is None or vec is None:
                raise DescriptorFileError(f"{path.name}:{ln}: needs image_ref and descriptor")
            if ref in out:
                raise DescriptorFileError(f"{path.name}:{ln}: duplicate image_ref {ref!r}")
            if len(vec) != DESCRIPTOR_DIM:
                raise DescriptorFileError(
                    f"{path.name}:{ln}: descriptor has {len(vec)} values, needs {DESCRIPTOR_DIM}")
            out[ref] = Descriptor(values=np.asarray(vec, dtype=np.float64), image_ref=ref)
    if not out:
        raise DescriptorFileError(f"{path.name}: no descriptors")
    return out


def write_descriptors_bin(path: str | Path, descriptors: Iterable[Descriptor]) -> None:
    """Packed alternative: 16-byte header (magic, count, dim) + little-endian
    float32 rows; image refs go to a `<name>.refs` sidecar, one per line."""
    path = Path(path)
    descs = list(descriptors)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", len(descs), DESCRIPTOR_DIM))
        for d in descs:
            fh.write(d.values.astype("<f4").tobytes())
    refs_path = path.with_name(path.name + ".refs")
    refs_path.write_text("".join(d.image_ref + "\n" for d in descs), encoding="utf-8")


def read_descriptors_bin(path: str | Path) -> Dict[str, Descriptor]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != _MAGIC:
        raise DescriptorFileError(f"{path.name}: bad magic")
    count, dim = struct.unpack("<II", raw[8:16])
    if dim != DESCRIPTOR_DIM:
        raise DescriptorFileError(f"{path.name}: dim {dim} != {DESCRIPTOR_DIM}")
    body = np.frombuffer(raw, dtype="<f4", offset=16)
    if body.size != count * dim:
        raise DescriptorFileError(f"{path.name}: truncated payload")
    refs_path = path.with_name(path.name + ".refs")
    refs = refs_path.read_text(encoding="utf-8").splitlines()
    if len(refs) != count:
        raise DescriptorFileError(f"{refs_path.name}: {len(refs)} refs for {count} vectors")
    vectors = body.reshape(count, dim).astype(np.float64)
    out: Dict[str, Descriptor] = {}
    for ref, vec in zip(refs, vectors):
        if ref in out:
            raise DescriptorFileError(f"{refs_path.name}: duplicate image_ref {ref!r}")
        vec = vec / np.linalg.norm(vec)   # float32 storage wiggle
        out[ref] = Descriptor(values=vec, image_ref=ref)
    return out


def read_descriptors(path: str | Path) -> Dict[str, Descriptor]:
    path = Path(path)
    if path.suffix == ".bin" or path.name.endswith(".desc.bin"):
        return read_descriptors_bin(path)
    return read_descriptors_jsonl(path)
