"""Median-split bounding volume hierarchy over triangles.

Construction is vectorized numpy (fast enough for the tens of thousands of
triangles a scene holds); traversal lives in the numba kernels and works on
the flat arrays this builder returns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass(frozen=True)
class BVH:
    node_min: np.ndarray    # (k, 3) float64
    node_max: np.ndarray    # (k, 3) float64
    node_left: np.ndarray   # (k,) int64: internal -> left child; leaf -> -(start+1)
    node_right: np.ndarray  # (k,) int64: internal -> right child; leaf -> count
    tri_order: np.ndarray   # (m,) int64 permutation into triangle arrays


def build_bvh(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray, leaf_size: int = LEAF_SIZE) -> BVH:
    m = len(v0)
    if m == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    lo = np.minimum(np.minimum(v0, v1), v2)
    hi = np.maximum(np.maximum(v0, v1), v2)
    centroid = 0.5 * (lo + hi)
    order = np.arange(m, dtype=np.int64)

    node_min, node_max, node_left, node_right = [], [], [], []

    def alloc():
        node_min.append(None)
        node_max.append(None)
        node_left.append(0)
        node_right.append(0)
        return len(node_min) - 1

    def build(start: int, count: int) -> int:
        idx = alloc()
        sel = order[start:start + count]
        node_min[idx] = lo[sel].min(axis=0)
        node_max[idx] = hi[sel].max(axis=0)
        if count <= leaf_size:
            node_left[idx] = -(start + 1)
            node_right[idx] = count
            return idx
        c = centroid[sel]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        half = count // 2
        part = np.argpartition(c[:, axis], half)
        order[start:start + count] = sel[part]
        left = build(start, half)
        right = build(start + half, count - half)
        node_left[idx] = left
        node_right[idx] = right
        return idx

    import sys
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10000))
    try:
        build(0, m)
    finally:
        sys.setrecursionlimit(old)
    return BVH(
        node_min=np.ascontiguousarray(np.asarray(node_min, dtype=np.float64)),
        node_max=np.ascontiguousarray(np.asarray(node_max, dtype=np.float64)),
        node_left=np.asarray(node_left, dtype=np.int64),
        node_right=np.asarray(node_right, dtype=np.int64),
        tri_order=order,
    )
