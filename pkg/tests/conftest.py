import pytest

import numpy as np

from mstat.client import RunConfig
from mstat.data import SynthSpec, generate_synthetic_tracklets
from mstat.tensor import precision

@pytest.fixture
def float64():
    with precision("float64"):
        yield

@pytest.fixture
def rng():
    return np.random.default_rng(0)

def tiny_settings(tmp_path, **overrides):
    """
    4x4 frames in 2px patches (N = 4, d = 12), one block per stage, two identities per batch
    """
    settings = {
        "frame_height_px"   : 4,
        "frame_width_px"    : 4,
        "patch_px"          : 2,
        "frames_train"      : 2,
        "frames_test"       : 2,
        "heads"             : 2,
        "depth_stage1"      : 1,
        "depth_stage2"      : 1,
        "depth_stage3"      : 1,
        "aap_proxies"       : 2,
        "asta_proxies"      : 2,
        "iap_prototypes"    : 3,
        "tps_positions"     : 1,
        "ids_per_batch"     : 2,
        "crop_padding_px"   : 1,
        "lr0"               : 1e-2,
        "epochs"            : 1,
        "checkpoint_dir"    : str(tmp_path / "checkpoints"),
        "report_dir"        : str(tmp_path / "reports")
    }

    settings.update(overrides)
    return settings

@pytest.fixture
def tiny_config(tmp_path):
    return RunConfig(**tiny_settings(tmp_path))

@pytest.fixture
def tiny_dataset():
    """
    4 train identities and 2 test identities, 2 cameras with 2 tracklets of 4 frames each
    """
    spec = SynthSpec(
        train_identities = 4,
        test_identities = 2,
        cameras = 2,
        tracklets_per_camera = 2,
        frames = 4,
        frame_height_px = 4,
        frame_width_px = 4,
        attributes = 2,
        seed = 3
    )

    return generate_synthetic_tracklets(spec)

@pytest.fixture
def make_config(tmp_path):
    return lambda **overrides: RunConfig(**tiny_settings(tmp_path, **overrides))
