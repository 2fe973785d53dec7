import pytest
from hypothesis import given
from hypothesis import strategies as st

from hdrfuse.bayer import BayerPattern, ColorChannel, channel_at, channel_map, channel_masks


def test_rggb_phase_definition():
    assert channel_at(BayerPattern.RGGB, 0, 0) == ColorChannel.R
    assert channel_at(BayerPattern.RGGB, 1, 0) == ColorChannel.G
    assert channel_at(BayerPattern.RGGB, 1, 1) == ColorChannel.B
    assert channel_at(BayerPattern.RGGB, 0, 1) == ColorChannel.G


@pytest.mark.parametrize(
    "pattern,origin",
    [
        (BayerPattern.RGGB, ColorChannel.R),
        (BayerPattern.BGGR, ColorChannel.B),
        (BayerPattern.GRBG, ColorChannel.G),
        (BayerPattern.GBRG, ColorChannel.G),
    ],
)
def test_phase_origin(pattern, origin):
    assert channel_at(pattern, 0, 0) == origin


@given(
    pattern=st.sampled_from(list(BayerPattern)),
    x=st.integers(0, 1000),
    y=st.integers(0, 1000),
)
def test_two_periodic(pattern, x, y):
    assert channel_at(pattern, x, y) == channel_at(pattern, x + 2, y)
    assert channel_at(pattern, x, y) == channel_at(pattern, x, y + 2)


@given(
    pattern=st.sampled_from(list(BayerPattern)),
    x=st.integers(0, 500).map(lambda v: 2 * v),
    y=st.integers(0, 500).map(lambda v: 2 * v),
)
def test_aligned_block_census(pattern, x, y):
    # any aligned 2x2 block holds exactly 2 G, 1 R, 1 B
    block = [channel_at(pattern, x + dx, y + dy) for dx in (0, 1) for dy in (0, 1)]
    assert sum(c == ColorChannel.G for c in block) == 2
    assert sum(c == ColorChannel.R for c in block) == 1
    assert sum(c == ColorChannel.B for c in block) == 1


def test_negative_coordinates_rejected():
    with pytest.raises(ValueError):
        channel_at(BayerPattern.RGGB, -1, 0)


def test_channel_map_matches_pointwise():
    cmap = channel_map(BayerPattern.GRBG, 5, 4)
    for y in range(4):
        for x in range(5):
            assert cmap[y, x] == int(channel_at(BayerPattern.GRBG, x, y))


def test_channel_masks_tile_frame():
    masks = channel_masks(BayerPattern.BGGR, 6, 6)
    total = sum(m.astype(int) for m in masks.values())
    assert (total == 1).all()
    assert masks[ColorChannel.G].sum() == 18
