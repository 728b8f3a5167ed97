import numpy as np
import pytest
import torch

from vnvc.config import CodecConfig
from vnvc.pipeline import VideoCodec


@pytest.fixture(autouse=True)
def _deterministic_torch():
    torch.manual_seed(0)
    yield


@pytest.fixture(scope="session")
def tiny_codec() -> VideoCodec:
    """Untrained codec with deterministic init, shared across fast tests."""
    cfg = CodecConfig(rd_lambda=256, intra_period=4, num_frames_to_code=8, seed=11)
    codec = VideoCodec.seeded(cfg)
    codec.eval()
    return codec


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
