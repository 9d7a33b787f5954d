"""Kernel backend selection: compiled Cython extension when available,
numpy/scipy fallback otherwise. ``LTA_KERNEL_BACKEND=python`` forces the
fallback (used by the parity tests and the benchmark)."""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_FORCED = os.environ.get("LTA_KERNEL_BACKEND", "").strip().lower()

if _FORCED in ("", "cython", "c"):
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        if _FORCED:
            raise
        _impl = _kernels_py
        BACKEND = "python"
else:
    _impl = _kernels_py
    BACKEND = "python"


def backend_name() -> str:
    return BACKEND


def available_backends() -> dict[str, object]:
    out: dict[str, object] = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
        out["cython"] = _kernels
    except ImportError:
        pass
    return out


def _prep(points) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))


def voxel_keep_mask(points, voxel: float) -> np.ndarray:
    return _impl.voxel_keep_mask(_prep(points), float(voxel))


def link_labels(points, link_distance: float) -> np.ndarray:
    return _impl.link_labels(_prep(points), float(link_distance))


def knn_mean_dists(points, k: int) -> np.ndarray:
    return _impl.knn_mean_dists(_prep(points), int(k))
