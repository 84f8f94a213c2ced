"""Image encoders: a 4-channel (RGB + mask) input, a 512-d unit descriptor out."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

DESCRIPTOR_DIM = 512


@dataclass
class EncoderConfig:
    backbone: str = "smallconv"       # or "resnet18"
    input_size: int = 64
    output_dim: int = DESCRIPTOR_DIM
    learning_rate: float = 3e-4
    weight_decay: float = 1e-4
    batch_size: int = 12
    steps: int = 2000
    augment_probability: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.output_dim != DESCRIPTOR_DIM:
            raise ValueError(f"descriptor dimension is fixed at {DESCRIPTOR_DIM}")


class SmallConvEncoder(nn.Module):
    """Compact convolutional encoder sized for CPU training runs.

    Design notes tied to the desk-scale task:
    - the whole net is normalization-free. Per-sample feature normalization
      (GroupNorm and friends) erases the absolute masked color level, which
      carries most of the blend-ratio signal at this data scale, and batch
      statistics make embeddings batch-dependent; both variants measurably
      hurt held-out ordering here. Masked raw-color pooling also keeps the
      descriptors input-dependent, so the gated loss cannot collapse them
      onto one vector;
    - features and the raw color moments are pooled inside the mask only, so
      the descriptor describes the material region, not the scene around it;
    - with no batch-coupled layers the eval-mode descriptors equal the
      train-mode ones exactly, which is what the export/loss parity contract
      needs.
    """

    def __init__(self, output_dim: int = DESCRIPTOR_DIM):
        super().__init__()
        chans = (32, 64, 128)
        layers = []
        prev = 4
        for c in chans:
            layers += [nn.Conv2d(prev, c, kernel_size=3, stride=2, padding=1), nn.GELU()]
            prev = c
        self.features = nn.Sequential(*layers)
        pooled_dim = prev + 6  # deep features + masked RGB mean and second moment
        self.head = nn.Linear(pooled_dim, output_dim, bias=False)
        self._init_mask_channel()

    def _init_mask_channel(self):
        # the mask channel starts as the mean of the RGB weights
        with torch.no_grad():
            w = self.features[0].weight
            w[:, 3] = w[:, :3].mean(dim=1)

    @staticmethod
    def _masked_pool(maps: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        w = F.adaptive_avg_pool2d(mask, maps.shape[-2:])
        return (maps * w).sum(dim=(2, 3)) / (w.sum(dim=(2, 3)) + 1e-6)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        rgb = x[:, :3]
        mask = x[:, 3:]
        h = self.features(torch.cat([rgb * 2.0 - 1.0, mask], dim=1))
        deep = self._masked_pool(h, mask)
        color = self._masked_pool(rgb, mask)
        color2 = self._masked_pool(rgb * rgb, mask)
        h = torch.cat([deep, color, color2], dim=1)
        return F.normalize(self.head(h), dim=1)


def _resnet_encoder(output_dim: int) -> nn.Module:
    import torchvision

    try:
        net = torchvision.models.resnet18(weights="IMAGENET1K_V1")
    except Exception as exc:  # pretrained weights unreachable: random init
        warnings.warn(f"pretrained weights unavailable ({exc}); using random init")
        net = torchvision.models.resnet18(weights=None)
    old = net.conv1
    conv = nn.Conv2d(4, old.out_channels, kernel_size=old.kernel_size,
                     stride=old.stride, padding=old.padding, bias=False)
    with torch.no_grad():
        conv.weight[:, :3] = old.weight
        conv.weight[:, 3] = old.weight.mean(dim=1)
    net.conv1 = conv
    net.fc = nn.Linear(net.fc.in_features, output_dim)

    class Wrapped(nn.Module):
        def __init__(self, inner):
            super().__init__()
            self.inner = inner

        def forward(self, x):
            return F.normalize(self.inner(x), dim=1)

    return Wrapped(net)


def build_encoder(config: EncoderConfig) -> nn.Module:
    torch.manual_seed(config.seed)
    if config.backbone == "smallconv":
        return SmallConvEncoder(config.output_dim)
    if config.backbone == "resnet18":
        return _resnet_encoder(config.output_dim)
    raise ValueError(f"unknown backbone {config.backbone!r}")
