"""Ground-truth similarity, match probability, the gated loss, and batch
evaluation over descriptors.

The ground-truth similarity of two images from one set is 1 - |R1 - R2| of
their blend ratios. A triplet's match probability is the two-way softmax of
the anchor-positive / anchor-negative cosine similarities at temperature t.
The loss is semi-hard: zero whenever the probability already beats a
threshold that grows with the similarity gap, -log(p) otherwise, and zero on
role ties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BatchSizeError,
    CrossSetError,
    NormError,
    RoleOrderError,
    SamplingError,
)
from .materials import SET_RATIOS

DESCRIPTOR_DIM = 512
NORM_TOL = 1e-4


@dataclass(frozen=True)
class Descriptor:
    """A 512-component unit vector attached to one image."""

    values: np.ndarray
    image_ref: str = ""

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.shape != (DESCRIPTOR_DIM,):
            raise ValueError(f"descriptor must have {DESCRIPTOR_DIM} components, got {v.shape}")
        n = float(np.linalg.norm(v))
        if abs(n - 1.0) > NORM_TOL:
            raise NormError(f"descriptor norm {n} violates unit contract (ref={self.image_ref!r})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ImageLabel:
    set_id: str
    scene_index: int
    ratio: float

    def __post_init__(self):
        if not (0 <= self.scene_index <= 5):
            raise ValueError("scene_index must be 0..5")
        if not (0.0 <= self.ratio <= 1.0):
            raise ValueError("ratio must lie in [0, 1]")


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.2
    gate_base: float = 0.5
    gate_slope: float = 0.25
    enumeration: str = "all_triples"     # or "chunks"

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.enumeration not in ("all_triples", "chunks"):
            raise ValueError(f"unknown enumeration mode {self.enumeration!r}")


@dataclass(frozen=True)
class TripletRecord:
    anchor: str
    positive: str
    negative: str
    sim_ap: float
    sim_an: float
    p_p: float
    loss: float
    gated: bool

    def __post_init__(self):
        if self.sim_ap < self.sim_an:
            raise RoleOrderError("sim_ap must be >= sim_an")
        if self.gated and self.loss != 0.0:
            raise ValueError("gated records carry zero loss")


def ground_truth_similarity(l1: ImageLabel, l2: ImageLabel) -> float:
    """1 - |R1 - R2|; only defined within one set."""
    if l1.set_id != l2.set_id:
        raise CrossSetError(f"labels from different sets: {l1.set_id!r} vs {l2.set_id!r}")
    return 1.0 - abs(l1.ratio - l2.ratio)


def cosine_similarity(d1: Descriptor, d2: Descriptor) -> float:
    """Dot product of two unit descriptors."""
    return float(np.dot(d1.values, d2.values))


def match_probability(s_ap: float, s_an: float, t: float = 0.2) -> float:
    """Two-way softmax p = e^(s_ap/t) / (e^(s_ap/t) + e^(s_an/t)).

    Computed as a stable sigmoid of the gap so large s/t never overflows.
    """
    if t <= 0:
        raise ValueError("temperature must be > 0")
    gap = (s_an - s_ap) / t
    if gap > 0:
        e = math.exp(-gap)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(gap))


def gate_threshold(sim_ap: float, sim_an: float, config: Optional[LossConfig] = None) -> float:
    config = config or LossConfig()
    return config.gate_base + (sim_ap - sim_an) * config.gate_slope


def triplet_loss(p_p: float, sim_ap: float, sim_an: float,
                 config: Optional[LossConfig] = None) -> tuple:
    """(loss, gated) for one role assignment.

    Ties (sim_ap == sim_an) are gated to zero. Otherwise the loss is zero
    when p_p clears the threshold gate_base + (sim_ap - sim_an) * gate_slope
    and -ln(p_p) below it.
    """
    config = config or LossConfig()
    if sim_ap < sim_an:
        raise RoleOrderError(f"sim_ap={sim_ap} < sim_an={sim_an}")
    if sim_ap == sim_an:
        return 0.0, True
    tau = gate_threshold(sim_ap, sim_an, config)
    if p_p > tau:
        return 0.0, True
    return -math.log(p_p), False


def assign_roles(l_a: ImageLabel, l_1: ImageLabel, l_2: ImageLabel):
    """Order two candidates into (positive, negative) against the anchor.

    Returns None on a similarity tie (the caller zeroes that triplet).
    """
    s1 = ground_truth_similarity(l_a, l_1)
    s2 = ground_truth_similarity(l_a, l_2)
    if s1 == s2:
        return None
    return (l_1, l_2) if s1 > s2 else (l_2, l_1)


def sample_batch(index, seed: int, batch_size: int = 12) -> list:
    """Draw one training batch: 12 distinct images from a single set.

    Vessel and non-vessel sets are chosen with equal probability, then a
    uniform set of that kind, then ``batch_size`` images without repetition.
    ``index`` must expose ``vessel_sets`` / ``plain_sets`` lists whose
    entries expose ``image_refs`` (30 refs each).
    """
    if not index.vessel_sets or not index.plain_sets:
        missing = "vessel" if not index.vessel_sets else "non-vessel"
        raise SamplingError(f"dataset has no {missing} sets; cannot honor equal-probability sampling")
    rng = np.random.default_rng(seed)
    want_vessel = bool(rng.integers(0, 2))
    pool = index.vessel_sets if want_vessel else index.plain_sets
    entry = pool[int(rng.integers(len(pool)))]
    refs = list(entry.image_refs)
    if len(refs) < batch_size:
        raise SamplingError(f"set {entry.set_id} has {len(refs)} images < batch size {batch_size}")
    picked = rng.choice(len(refs), size=batch_size, replace=False)
    return [refs[i] for i in picked]


def _role_assignments(n: int, mode: str):
    if mode == "all_triples":
        triples = combinations(range(n), 3)
    else:
        triples = (tuple(range(i, i + 3)) for i in range(0, n - n % 3, 3))
    for (i, j, k) in triples:
        yield (i, j, k)
        yield (j, i, k)
        yield (k, i, j)


def batch_loss(descriptors: Sequence[Descriptor], labels: Sequence[ImageLabel],
               config: Optional[LossConfig] = None) -> tuple:
    """Mean gated loss over every role assignment in the batch.

    Default enumeration walks all C(n,3) unordered triples and lets each
    member serve once as anchor. Tie assignments contribute nothing and are
    excluded from the mean; gated non-tie assignments count as zeros.
    Returns (mean_loss, [TripletRecord...]).
    """
    config = config or LossConfig()
    n = len(descriptors)
    if n != len(labels):
        raise ValueError("descriptor/label count mismatch")
    if n < 3:
        raise BatchSizeError(f"batch of {n} images cannot form a triple")
    set_ids = {l.set_id for l in labels}
    if len(set_ids) != 1:
        raise CrossSetError(f"batch mixes sets: {sorted(set_ids)}")
    values = np.stack([d.values for d in descriptors])
    cos = values @ values.T
    refs = [d.image_ref or f"#{i}" for i, d in enumerate(descriptors)]

    records = []
    total = 0.0
    counted = 0
    for (a, c1, c2) in _role_assignments(n, config.enumeration):
        s1 = ground_truth_similarity(labels[a], labels[c1])
        s2 = ground_truth_similarity(labels[a], labels[c2])
        if s1 == s2:
            records.append(TripletRecord(
                anchor=refs[a], positive=refs[c1], negative=refs[c2],
                sim_ap=s1, sim_an=s2, p_p=0.5, loss=0.0, gated=True))
            continue
        p, q = (c1, c2) if s1 > s2 else (c2, c1)
        sim_ap, sim_an = max(s1, s2), min(s1, s2)
        p_p = match_probability(float(cos[a, p]), float(cos[a, q]), config.temperature)
        loss, gated = triplet_loss(p_p, sim_ap, sim_an, config)
        records.append(TripletRecord(
            anchor=refs[a], positive=refs[p], negative=refs[q],
            sim_ap=sim_ap, sim_an=sim_an, p_p=p_p, loss=loss, gated=gated))
        total += loss
        counted += 1
    mean = total / counted if counted else 0.0
    return mean, records


def gated_fraction(records: Sequence[TripletRecord]) -> float:
    """Fraction of non-tie assignments that the gate zeroed."""
    non_tie = [r for r in records if r.sim_ap != r.sim_an]
    if not non_tie:
        return 0.0
    return sum(1 for r in non_tie if r.gated) / len(non_tie)
