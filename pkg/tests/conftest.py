import numpy as np
import pytest

from lidarcam_calib import synthetic as S
from lidarcam_calib.dataset import ExtractionConfig, extract_frame_pair


def extraction_config(seed=0):
    return ExtractionConfig().with_up_axis(S.LIDAR_UP).with_seed(seed)


def frame_pairs(scene, seed=0):
    cfg = extraction_config(seed)
    return [
        extract_frame_pair(f"f{i:02d}", *S.simulate_frame(scene, i), scene.intrinsics, scene.target, cfg)
        for i in range(len(scene.poses))
    ]


def random_transform(rng, angle=0.6, trans=1.0):
    from lidarcam_calib.geometry import RigidTransform

    return RigidTransform(tuple(rng.uniform(-angle, angle, 3)), tuple(rng.uniform(-trans, trans, 3)))


@pytest.fixture(scope="session")
def clean_scene():
    return S.make_scene(n_views=5, seed=1)


@pytest.fixture(scope="session")
def clean_pairs(clean_scene):
    return frame_pairs(clean_scene)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def noisy_scene():
    return S.make_scene(n_views=8, seed=3, range_sigma=0.01, pixel_sigma=0.5)


@pytest.fixture(scope="session")
def noisy_pairs(noisy_scene):
    return frame_pairs(noisy_scene)


_acceptance_key = pytest.StashKey[dict]()


@pytest.fixture
def record_criterion(request):
    """Store a one-line PASS/FAIL verdict for the end-of-run summary."""
    store = request.config.stash.setdefault(_acceptance_key, {})

    def record(number, passed, detail):
        store[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        print(store[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_acceptance_key, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for k in sorted(store):
            terminalreporter.write_line(store[k])
