"""Training loop: AdamW over seeded 12-image batches from one set each."""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import cv2
import numpy as np
import torch

from .augment import augment
from .data import DatasetIndex, load_batch_arrays, load_index, sample_batch
from .loss import batch_loss, triplet_accuracy
from .model import EncoderConfig, build_encoder


def batch_tensor(images: np.ndarray, masks: np.ndarray, size: int) -> torch.Tensor:
    """Stack RGB + mask into the (n, 4, size, size) network input."""
    n = images.shape[0]
    out = np.empty((n, 4, size, size), dtype=np.float32)
    for i in range(n):
        img = images[i]
        m = masks[i]
        if img.shape[0] != size or img.shape[1] != size:
            img = cv2.resize(img, (size, size), interpolation=cv2.INTER_AREA)
            m = cv2.resize(m, (size, size), interpolation=cv2.INTER_NEAREST)
        out[i, :3] = img.transpose(2, 0, 1)
        out[i, 3] = m
    return torch.from_numpy(out)


def save_checkpoint(path: str | Path, model: torch.nn.Module, config: EncoderConfig,
                    step: int) -> None:
    path = Path(path)
    payload = {"state_dict": model.state_dict(), "config": vars(config), "step": step}
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path):
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config = EncoderConfig(**payload["config"])
    model = build_encoder(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, config


def train(dataset_root: str | Path, config: EncoderConfig, seed: int = 0,
          checkpoint_path: str | Path = "encoder.pt",
          log_path: str | Path | None = None,
          log_every: int = 100) -> dict:
    """Run the loop; returns {"losses", "gated", "checkpoint", "log"}.

    Batch b uses sampling seed ``seed + b`` so runs are reproducible and the
    sampled refs can be cross-checked against the generator's fixture dump.
    """
    index = load_index(dataset_root)
    torch.manual_seed(config.seed)
    model = build_encoder(config)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate,
                                  weight_decay=config.weight_decay)
    losses, gated = [], []
    log_lines = []
    t0 = time.time()
    for step in range(config.steps):
        refs = sample_batch(index, seed + step, config.batch_size)
        images, masks, ratios = load_batch_arrays(index, refs)
        if config.augment_probability > 0:
            images = np.stack([
                augment(images[i], seed=(seed + step) * 31 + i,
                        probability=config.augment_probability)
                for i in range(len(images))
            ])
        x = batch_tensor(images, masks, config.input_size)
        desc = model(x)
        scored = batch_loss(desc, torch.from_numpy(ratios))
        optimizer.zero_grad()
        scored["loss"].backward()
        optimizer.step()
        losses.append(float(scored["loss"].detach()))
        gated.append(scored["gated_fraction"])
        if (step + 1) % log_every == 0 or step + 1 == config.steps:
            window = slice(max(0, step + 1 - log_every), step + 1)
            line = {
                "step": step + 1,
                "mean_loss": float(np.mean(losses[window])),
                "gated_fraction": float(np.mean(gated[window])),
                "seconds": round(time.time() - t0, 2),
            }
            log_lines.append(line)
    save_checkpoint(checkpoint_path, model, config, config.steps)
    if log_path is not None:
        Path(log_path).write_text(
            "".join(json.dumps(l) + "\n" for l in log_lines), encoding="utf-8")
    return {"losses": losses, "gated": gated, "checkpoint": str(checkpoint_path),
            "log": log_lines}


def heldout_accuracy(model: torch.nn.Module, index: DatasetIndex, config: EncoderConfig,
                     seeds) -> float:
    """Mean non-tie triplet accuracy over seeded batches (no augmentation)."""
    model.eval()
    accs = []
    with torch.no_grad():
        for s in seeds:
            refs = sample_batch(index, s, config.batch_size)
            images, masks, ratios = load_batch_arrays(index, refs)
            x = batch_tensor(images, masks, config.input_size)
            desc = model(x)
            accs.append(triplet_accuracy(desc, torch.from_numpy(ratios)))
    return float(np.mean(accs))
