import numpy as np
import pytest

from lidargap.simulator import brute_force_cast, build_bvh, make_box_mesh


@pytest.fixture(scope="session", autouse=True)
def warm_ray_kernels():
    # First call JIT-compiles the cast kernels; doing it here keeps the
    # per-test runtime budgets about the algorithms, not the compiler.
    mesh = make_box_mesh(1.0, 1.0, 1.0)
    origins = np.array([[0.0, 0.0, 5.0]])
    dirs = np.array([[0.0, 0.0, -1.0]])
    build_bvh(mesh).cast(origins, dirs, 100.0)
    brute_force_cast(mesh, origins, dirs, 100.0)
