import hypothesis
import numpy as np
import pytest

from flyswarm.evolution import EvolutionParams, StereoFrame
from flyswarm.stereo_geometry import CameraIntrinsics, StereoRig
from flyswarm.synth import preset_scene, render_stereo_pair

hypothesis.settings.register_profile("default", max_examples=100, deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture
def default_rig() -> StereoRig:
    return StereoRig(
        intrinsics=CameraIntrinsics(500.0, (320.0, 240.0), 640, 480),
        baseline_m=0.4,
        camera_height_m=1.2,
        z_min_m=1.0,
        z_max_m=20.0,
    )


@pytest.fixture
def symmetric_rig() -> StereoRig:
    # principal point at the exact image centre so the search volume is
    # symmetric in x and y
    return StereoRig(
        intrinsics=CameraIntrinsics(500.0, (319.5, 239.5), 640, 480),
        baseline_m=0.4,
        camera_height_m=1.2,
    )


@pytest.fixture
def small_rig() -> StereoRig:
    # 64x64 images for fast evolutionary loops
    return StereoRig(
        intrinsics=CameraIntrinsics(80.0, (32.0, 32.0), 64, 64),
        baseline_m=0.2,
        camera_height_m=0.8,
        z_min_m=0.5,
        z_max_m=5.0,
    )


@pytest.fixture(scope="session")
def session_rig() -> StereoRig:
    return StereoRig(
        intrinsics=CameraIntrinsics(500.0, (320.0, 240.0), 640, 480),
        baseline_m=0.4,
        camera_height_m=1.2,
    )


@pytest.fixture(scope="session")
def pedestrian_scene(session_rig):
    return preset_scene("pedestrian-4m", session_rig)


@pytest.fixture(scope="session")
def pedestrian_pair(pedestrian_scene, session_rig):
    return render_stereo_pair(pedestrian_scene, session_rig)


@pytest.fixture(scope="session")
def pedestrian_frame(pedestrian_pair):
    return StereoFrame(*pedestrian_pair)


@pytest.fixture
def default_params() -> EvolutionParams:
    return EvolutionParams()
