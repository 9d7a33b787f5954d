"""Numpy/scipy implementations of the point-cloud kernels.

Used when the compiled extension is unavailable (or forced via
``LTA_KERNEL_BACKEND=python``). Must agree with the Cython versions:
the parity tests compare both backends on random clouds.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def voxel_keep_mask(points: np.ndarray, voxel: float) -> np.ndarray:
    """True for the first point seen in each voxel (scan order)."""
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    cells = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(cells, axis=0, return_index=True)
    mask = np.zeros(len(points), dtype=bool)
    mask[first] = True
    return mask


def link_labels(points: np.ndarray, link_distance: float) -> np.ndarray:
    """Connected-component labels linking points within ``link_distance``
    (inclusive). Labels are normalized to first-occurrence order."""
    n = len(points)
    labels = np.arange(n, dtype=np.int64)
    if n == 0:
        return labels

    parent = labels.copy()

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    tree = cKDTree(points)
    for i, j in tree.query_pairs(r=link_distance):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    remap: dict[int, int] = {}
    out = np.empty(n, dtype=np.int64)
    for i, root in enumerate(roots):
        if root not in remap:
            remap[root] = len(remap)
        out[i] = remap[root]
    return out


def knn_mean_dists(points: np.ndarray, k: int) -> np.ndarray:
    """Mean Euclidean distance from each point to its k nearest neighbours."""
    n = len(points)
    if n <= 1:
        return np.zeros(n)
    k = min(k, n - 1)
    tree = cKDTree(points)
    dists, _ = tree.query(points, k=k + 1)
    return dists[:, 1:].mean(axis=1)
