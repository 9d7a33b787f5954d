"""Benchmark the compiled point-cloud kernels against the numpy/scipy
fallback.

Clouds come from the simulator's own renderer (merged multi-view captures of
a cluttered tabletop), subsampled to the requested sizes, so the timings
reflect the data the kernels actually see in the perception pipeline. Each
kernel is timed on both backends and the outputs are cross-checked while
we're at it.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 2000 20000 --repeats 7
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lta.perception.kernels import available_backends
from lta.perception.pipeline import depth_to_cloud
from lta.sim.render import capture
from lta.sim.shapes import Box, Cylinder, Sphere
from lta.sim.world import NoiseConfig, SimObject, WorldState


def tabletop_cloud(seed: int) -> np.ndarray:
    """Merged raw cloud (table plane included) of a four-object scene."""
    world = WorldState(table_z=0.1, table_extent=((-0.5, 0.5), (-0.5, 0.5)),
                       seed=seed, noise=NoiseConfig(depth_sigma=0.001))
    world.add_object(SimObject(name="crate", shape=Box(w=0.12, d=0.09, h=0.06),
                               position=np.array([0.18, 0.12, 0.0]),
                               color="brown"))
    world.add_object(SimObject(name="can", shape=Cylinder(r=0.035, h=0.11),
                               position=np.array([-0.2, 0.15, 0.0]),
                               color="silver"))
    world.add_object(SimObject(name="ball", shape=Sphere(r=0.03),
                               position=np.array([-0.15, -0.2, 0.0]),
                               color="orange"))
    world.add_object(SimObject(name="puck", shape=Cylinder(r=0.04, h=0.03),
                               position=np.array([0.22, -0.16, 0.0]),
                               color="blue"))
    snap = capture(world)
    clouds = [depth_to_cloud(v.depth, v.pose).points for v in snap.views]
    return np.concatenate(clouds, axis=0)


def best_of(repeats: int, fn, *args) -> tuple[float, object]:
    """Minimum wall time over ``repeats`` calls plus the last result."""
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def check_agreement(kernel: str, outputs: dict[str, object]) -> None:
    if len(outputs) < 2:
        return
    ref = outputs["python"]
    other = outputs["cython"]
    if kernel == "knn_mean_dists":
        ok = np.allclose(ref, other, atol=1e-12)
    else:
        ok = np.array_equal(ref, other)
    if not ok:
        raise SystemExit(f"backend outputs disagree for {kernel}")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Time the point-cloud kernels on every available backend.")
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[2000, 10000, 40000],
                        help="cloud sizes to benchmark (points)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed runs per measurement; best is reported")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--voxel", type=float, default=0.002,
                        help="voxel edge for the dedup kernel (metres)")
    parser.add_argument("--link", type=float, default=0.02,
                        help="link distance for the clustering kernel (metres)")
    parser.add_argument("--knn", type=int, default=8,
                        help="neighbour count for the outlier kernel")
    args = parser.parse_args(argv)

    backends = available_backends()
    names = sorted(backends)
    if "cython" not in backends:
        print("note: compiled extension not importable; timing the "
              "python backend only")

    base = tabletop_cloud(args.seed)
    rng = np.random.default_rng(args.seed)
    print(f"rendered base cloud: {len(base)} points")
    print()

    kernel_args = {
        "voxel_keep_mask": (args.voxel,),
        "link_labels": (args.link,),
        "knn_mean_dists": (args.knn,),
    }

    header = f"{'kernel':<16}{'n':>8}" + "".join(
        f"{name + ' (ms)':>14}" for name in names)
    if len(names) == 2:
        header += f"{'speedup':>9}"
    print(header)
    print("-" * len(header))

    for size in args.sizes:
        if size <= len(base):
            pick = rng.choice(len(base), size=size, replace=False)
        else:
            pick = rng.choice(len(base), size=size, replace=True)
        # Contiguous float64, the layout the dispatcher hands to the kernels.
        cloud = np.ascontiguousarray(base[np.sort(pick)])
        for kernel, extra in kernel_args.items():
            times: dict[str, float] = {}
            outputs: dict[str, object] = {}
            for name in names:
                impl = getattr(backends[name], kernel)
                times[name], outputs[name] = best_of(
                    args.repeats, impl, cloud, *extra)
            check_agreement(kernel, outputs)
            row = f"{kernel:<16}{size:>8}" + "".join(
                f"{times[name] * 1e3:>14.2f}" for name in names)
            if len(names) == 2:
                row += f"{times['python'] / times['cython']:>8.1f}x"
            print(row)
        print()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
