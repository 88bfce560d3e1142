"""Time the numba and numpy backends of every hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once per backend untimed (JIT compile, cache warm-up),
then ``--repeat`` timed runs; the best time is reported together with the
largest absolute difference between the backends' outputs.
"""
import argparse
import time

import numpy as np

from evolab import _accel, kernels
from evolab.mesh import build_icosphere, quadrature_points, reference_quadrature
from evolab.timestep import lambda_grid


def cases():
    mesh = build_icosphere(6)
    pts = quadrature_points(mesh, reference_quadrature(4))
    normals = np.broadcast_to(mesh.face_geometry()[1][:, None, :], pts.shape)
    grid = lambda_grid()
    n = np.arange(1, 1025)
    return {
        "defect_sups (1024 x 3073)": lambda: kernels.defect_sups(n, grid, 0.5, 0.5),
        "p1_elements (level 6)": lambda: kernels.p1_elements(mesh.vertices, mesh.triangles),
        "radial_jacobian (level 6, 6 pts/face)": lambda: kernels.radial_jacobian(pts, normals),
    }


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.BACKENDS if _accel.HAVE_NUMBA else ("numpy",)
    print(f"{'kernel':40s} " + " ".join(f"{b:>10s}" for b in backends) + "   max |diff|")
    for name, fn in cases().items():
        results = {}
        for b in backends:
            with kernels.use_backend(b):
                results[b] = best_of(fn, args.repeat)
        cols = " ".join(f"{results[b][0] * 1e3:8.2f}ms" for b in backends)
        diff = max_diff(*(results[b][1] for b in backends)) if len(backends) == 2 else 0.0
        print(f"{name:40s} {cols}   {diff:.1e}")


if __name__ == "__main__":
    main()
