import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from vnvc.frames import (
    Frame,
    FeatureMap,
    MotionField,
    LatentGrid,
    RDStats,
    pad_to_multiple,
    crop_back,
    padded_size,
)


def make_frame(h, w, value=None):
    if value is None:
        return Frame(torch.rand(3, h, w))
    return Frame(torch.full((3, h, w), value))


class TestFrameValidation:
    def test_rejects_nan(self):
        pixels = torch.rand(3, 8, 8)
        pixels[0, 0, 0] = math.nan
        with pytest.raises(ValueError, match="finite"):
            Frame(pixels)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="0, 1"):
            Frame(torch.full((3, 4, 4), 1.5))

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            Frame(torch.rand(1, 8, 8))
        with pytest.raises(ValueError):
            Frame(torch.rand(3, 8))

    def test_feature_map_rejects_inf(self):
        values = torch.zeros(4, 4, 4)
        values[0, 0, 0] = math.inf
        with pytest.raises(ValueError):
            FeatureMap(values)

    def test_motion_field_channels(self):
        with pytest.raises(ValueError):
            MotionField(torch.zeros(3, 4, 4))

    def test_latent_grid_role(self):
        with pytest.raises(ValueError, match="role"):
            LatentGrid(torch.zeros(4, 2, 2), "bogus")

    def test_rdstats_total(self):
        s = RDStats(bits_motion=10, bits_contextual=20, bits_hyper=5, bpp=35 / 64)
        assert s.total_bits == 35


class TestPadding:
    def test_already_divisible(self):
        f = make_frame(64, 64)
        padded, size = pad_to_multiple(f, 16)
        assert size == (64, 64)
        assert padded.pixels.shape == (3, 64, 64)
        assert torch.equal(padded.pixels, f.pixels)

    def test_100x100_to_112(self):
        f = make_frame(100, 100)
        padded, size = pad_to_multiple(f, 16)
        assert (padded.height, padded.width) == (112, 112)
        assert size == (100, 100)

    def test_1x1_replicates_value(self):
        f = make_frame(1, 1, value=0.625)
        padded, _ = pad_to_multiple(f, 16)
        assert (padded.height, padded.width) == (16, 16)
        assert torch.all(padded.pixels == 0.625)

    def test_crop_back_identity_when_same(self):
        f = make_frame(64, 64)
        assert crop_back(f, (64, 64)) is f

    def test_crop_rejects_larger(self):
        f = make_frame(16, 16)
        with pytest.raises(ValueError):
            crop_back(f, (17, 16))

    @settings(max_examples=60, deadline=None)
    @given(h=st.integers(1, 64), w=st.integers(1, 64))
    def test_round_trip_exact(self, h, w):
        f = Frame(torch.rand(3, h, w))
        padded, size = pad_to_multiple(f, 16)
        assert padded.height % 16 == 0 and padded.width % 16 == 0
        assert padded.height == padded_size(h, 16)
        restored = crop_back(padded, size)
        assert torch.equal(restored.pixels, f.pixels)
