import numpy as np
import pytest

from fuselabel import accel
from fuselabel.synthetic import (
    preset_fuse_scene,
    preset_mapping_scene,
    preset_parts_scene,
    render_scene,
)


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here, not inside timed tests
    accel.warmup()


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation via normalized quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@pytest.fixture(scope="session")
def fuse_scene():
    return render_scene(preset_fuse_scene())


@pytest.fixture(scope="session")
def mapping_scene():
    return render_scene(preset_mapping_scene())


@pytest.fixture(scope="session")
def parts_scene():
    return render_scene(preset_parts_scene())
