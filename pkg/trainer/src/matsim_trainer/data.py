"""Dataset-tree access and batch sampling.

Reads the on-disk set layout directly (set_<id>/metadata.json plus
scene_<k>/img_r###.png and mask.png); this package deliberately shares no
code with the generator, only its file formats. The batch sampler reproduces
the generator's published sampling contract draw for draw: equal probability
for vessel / non-vessel sets, a uniform set of that kind, then 12 distinct
images, all from numpy's PCG64 stream for the batch seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import cv2
import numpy as np

RATIOS = (0.0, 0.25, 0.5, 0.75, 1.0)
BATCH_SIZE = 12


@dataclass(frozen=True)
class SetEntry:
    set_id: str
    path: Path
    vessel: bool

    @property
    def image_refs(self) -> list:
        return [f"set_{self.set_id}/scene_{k}/img_r{int(r * 100):03d}.png"
                for k in range(6) for r in RATIOS]


@dataclass
class DatasetIndex:
    root: Path
    sets: List[SetEntry]

    @property
    def vessel_sets(self) -> list:
        return [s for s in self.sets if s.vessel]

    @property
    def plain_sets(self) -> list:
        return [s for s in self.sets if not s.vessel]

    @property
    def image_refs(self) -> list:
        return [r for s in self.sets for r in s.image_refs]


def ref_ratio(ref: str) -> float:
    name = Path(ref).name
    return int(name[len("img_r"):-len(".png")]) / 100.0


def ref_scene(ref: str) -> int:
    return int(Path(ref).parts[1][len("scene_"):])


def ref_set(ref: str) -> str:
    return Path(ref).parts[0][len("set_"):]


def load_index(root: str | Path) -> DatasetIndex:
    root = Path(root)
    sets = []
    for d in sorted(root.glob("set_*")):
        meta = d / "metadata.json"
        if not meta.exists():
            raise FileNotFoundError(f"{d.name}: missing metadata.json")
        manifest = json.loads(meta.read_text(encoding="utf-8"))
        sets.append(SetEntry(set_id=manifest["set_id"], path=d,
                             vessel=bool(manifest["vessel"])))
    if not sets:
        raise FileNotFoundError(f"no sets under {root}")
    return DatasetIndex(root=root, sets=sets)


def sample_batch(index: DatasetIndex, seed: int, batch_size: int = BATCH_SIZE) -> list:
    """Identical to the generator's contract; verified against its fixture."""
    if not index.vessel_sets or not index.plain_sets:
        missing = "vessel" if not index.vessel_sets else "non-vessel"
        raise ValueError(f"dataset has no {missing} sets")
    rng = np.random.default_rng(seed)
    want_vessel = bool(rng.integers(0, 2))
    pool = index.vessel_sets if want_vessel else index.plain_sets
    entry = pool[int(rng.integers(len(pool)))]
    refs = list(entry.image_refs)
    picked = rng.choice(len(refs), size=batch_size, replace=False)
    return [refs[i] for i in picked]


def _srgb_decode(x: np.ndarray) -> np.ndarray:
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def load_image(root: Path, ref: str) -> np.ndarray:
    raw = cv2.imread(str(root / ref), cv2.IMREAD_COLOR)
    if raw is None:
        raise IOError(f"cannot read {root / ref}")
    rgb = raw[:, :, ::-1].astype(np.float64) / 255.0
    return _srgb_decode(rgb)


def load_mask(root: Path, ref: str) -> np.ndarray:
    mask_path = root / Path(ref).parent / "mask.png"
    raw = cv2.imread(str(mask_path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise IOError(f"cannot read {mask_path}")
    return (raw > 0).astype(np.float64)


def load_batch_arrays(index: DatasetIndex, refs: list) -> tuple:
    """(images (n,h,w,3), masks (n,h,w), ratios (n,)) for one batch."""
    imgs, masks, ratios = [], [], []
    for ref in refs:
        imgs.append(load_image(index.root, ref))
        masks.append(load_mask(index.root, ref))
        ratios.append(ref_ratio(ref))
    return np.stack(imgs), np.stack(masks), np.asarray(ratios)
