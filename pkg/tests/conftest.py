import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mmtas.preprocessing import PreprocessConfig, compute_normalization_stats
from mmtas.synth import SynthConfig, generate_synthetic_dataset

TINY = SynthConfig(
    n_recordings=3,
    actions_per_recording=8,
    activities=("pick", "insert", "twist", "remove", "place"),
    objects=("usb", "gear", "peg"),
)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Three short recordings shared by most tests (generation is seeded)."""
    root = tmp_path_factory.mktemp("tiny_ds")
    recordings = generate_synthetic_dataset(TINY, 42, root)
    return root, recordings


@pytest.fixture(scope="session")
def pre_config():
    return PreprocessConfig()


@pytest.fixture(scope="session")
def tiny_stats(tiny_dataset, pre_config):
    _, recordings = tiny_dataset
    return compute_normalization_stats(recordings, pre_config)
