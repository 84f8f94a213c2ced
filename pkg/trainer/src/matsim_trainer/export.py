"""Descriptor export in the exchange format the scoring commands read."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import cv2
import numpy as np
import torch

from .data import load_image, load_index, load_mask
from .train import batch_tensor


def _attention(img: np.ndarray, mask: np.ndarray, mode: str) -> tuple:
    if mode in ("mask", "crop_mask"):
        img = img * mask[:, :, None]
    if mode in ("crop", "crop_mask"):
        ys, xs = np.nonzero(mask > 0)
        img = img[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
        mask = mask[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    return img, mask


def export_descriptors(model: torch.nn.Module, dataset_root: str | Path,
                       out_path: str | Path, input_size: int = 64,
                       mode: str = "none", batch: int = 30) -> int:
    """Write one JSONL descriptor line per dataset image; returns the count."""
    index = load_index(dataset_root)
    model.eval()
    refs = index.image_refs
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh, torch.no_grad():
        for start in range(0, len(refs), batch):
            chunk = refs[start:start + batch]
            imgs, masks = [], []
            for ref in chunk:
                img = load_image(index.root, ref)
                mask = load_mask(index.root, ref)
                img, mask = _attention(img, mask, mode)
                imgs.append(cv2.resize(img, (input_size, input_size),
                                       interpolation=cv2.INTER_AREA))
                masks.append(cv2.resize(mask, (input_size, input_size),
                                        interpolation=cv2.INTER_NEAREST))
            x = batch_tensor(np.stack(imgs), np.stack(masks), input_size)
            desc = model(x).double().numpy()
            for ref, vec in zip(chunk, desc):
                vec = vec / np.linalg.norm(vec)
                fh.write(json.dumps({"image_ref": ref,
                                     "descriptor": [float(v) for v in vec]}) + "\n")
                written += 1
    return written


def export_benchmark_descriptors(model: torch.nn.Module, manifest_csv: str | Path,
                                 out_path: str | Path, input_size: int = 64,
                                 mode: str = "none") -> int:
    """Descriptors for a benchmark CSV (image,mask,superclass,subclass)."""
    manifest_csv = Path(manifest_csv)
    base = manifest_csv.parent
    model.eval()
    written = 0
    with open(manifest_csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    with open(out_path, "w", encoding="utf-8") as out, torch.no_grad():
        for row in rows:
            img = load_image(base, row["image"])
            raw = cv2.imread(str(base / row["mask"]), cv2.IMREAD_GRAYSCALE)
            mask = (raw > 0).astype(np.float64)
            img, mask = _attention(img, mask, mode)
            img = cv2.resize(img, (input_size, input_size), interpolation=cv2.INTER_AREA)
            mask = cv2.resize(mask, (input_size, input_size),
                              interpolation=cv2.INTER_NEAREST)
            x = batch_tensor(img[None], mask[None], input_size)
            vec = model(x).double().numpy()[0]
            vec = vec / np.linalg.norm(vec)
            out.write(json.dumps({"image_ref": row["image"],
                                  "descriptor": [float(v) for v in vec]}) + "\n")
            written += 1
    return written
