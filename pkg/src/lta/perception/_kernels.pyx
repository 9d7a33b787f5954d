# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled point-cloud kernels: voxel dedup, link clustering, kNN stats.

Semantics must match ``_kernels_py`` exactly (inclusive link distance,
first-occurrence label order); the parity tests enforce this.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, sqrt

cnp.import_array()


def voxel_keep_mask(const double[:, ::1] points, double voxel):
    cdef Py_ssize_t n = points.shape[0]
    mask = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] mask_view = mask.view(np.uint8)
    if n == 0:
        return mask
    seen = {}
    cdef Py_ssize_t i
    cdef long long cx, cy, cz
    for i in range(n):
        cx = <long long>floor(points[i, 0] / voxel)
        cy = <long long>floor(points[i, 1] / voxel)
        cz = <long long>floor(points[i, 2] / voxel)
        key = (cx, cy, cz)
        if key not in seen:
            seen[key] = i
            mask_view[i] = 1
    return mask


cdef Py_ssize_t _find(long long[::1] parent, Py_ssize_t i) nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def link_labels(const double[:, ::1] points, double link_distance):
    cdef Py_ssize_t n = points.shape[0]
    labels = np.arange(n, dtype=np.int64)
    if n == 0:
        return labels
    parent_arr = np.arange(n, dtype=np.int64)
    cdef long long[::1] parent = parent_arr
    cdef double link2 = link_distance * link_distance
    cdef double cell = link_distance

    # Spatial hash on cells of side link_distance: all pairs within the
    # link distance live in the same or an adjacent cell.
    grid = {}
    cdef Py_ssize_t i, j, idx
    cdef long long cx, cy, cz, ox, oy, oz
    cdef double dx, dy, dz, d2
    cdef Py_ssize_t ri, rj
    cells = np.empty((n, 3), dtype=np.int64)
    cdef long long[:, ::1] cells_view = cells
    for i in range(n):
        cells_view[i, 0] = <long long>floor(points[i, 0] / cell)
        cells_view[i, 1] = <long long>floor(points[i, 1] / cell)
        cells_view[i, 2] = <long long>floor(points[i, 2] / cell)
    for i in range(n):
        key = (cells_view[i, 0], cells_view[i, 1], cells_view[i, 2])
        bucket = grid.get(key)
        if bucket is None:
            grid[key] = [i]
        else:
            bucket.append(i)
    for i in range(n):
        cx = cells_view[i, 0]
        cy = cells_view[i, 1]
        cz = cells_view[i, 2]
        for ox in range(-1, 2):
            for oy in range(-1, 2):
                for oz in range(-1, 2):
                    bucket = grid.get((cx + ox, cy + oy, cz + oz))
                    if bucket is None:
                        continue
                    for idx in range(len(bucket)):
                        j = bucket[idx]
                        if j <= i:
                            continue
                        dx = points[i, 0] - points[j, 0]
                        dy = points[i, 1] - points[j, 1]
                        dz = points[i, 2] - points[j, 2]
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 <= link2:
                            ri = _find(parent, i)
                            rj = _find(parent, j)
                            if ri != rj:
                                if ri < rj:
                                    parent[rj] = ri
                                else:
                                    parent[ri] = rj
    remap = {}
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] out_view = out
    cdef Py_ssize_t root
    for i in range(n):
        root = _find(parent, i)
        val = remap.get(root)
        if val is None:
            val = len(remap)
            remap[root] = val
        out_view[i] = val
    return out


def knn_mean_dists(const double[:, ::1] points, int k):
    cdef Py_ssize_t n = points.shape[0]
    out = np.zeros(n, dtype=float)
    if n <= 1:
        return out
    if k > n - 1:
        k = n - 1
    cdef double[::1] out_view = out
    best_arr = np.empty(k, dtype=float)
    cdef double[::1] best = best_arr
    cdef Py_ssize_t i, j, m, pos
    cdef double dx, dy, dz, d2, total
    with nogil:
        for i in range(n):
            for m in range(k):
                best[m] = 1e300
            for j in range(n):
                if j == i:
                    continue
                dx = points[i, 0] - points[j, 0]
                dy = points[i, 1] - points[j, 1]
                dz = points[i, 2] - points[j, 2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best[k - 1]:
                    pos = k - 1
                    while pos > 0 and best[pos - 1] > d2:
                        best[pos] = best[pos - 1]
                        pos -= 1
                    best[pos] = d2
            total = 0.0
            for m in range(k):
                total += sqrt(best[m])
            out_view[i] = total / k
    return out
