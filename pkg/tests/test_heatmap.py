import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rivetkey.errors import KeypointOutOfBounds
from rivetkey.heatmap import decode, encode


def test_encode_peak_and_values():
    hm = encode([[10.0, 10.0]], 32, 32, 3.0)[0]
    assert hm.shape == (32, 32)
    assert hm[10, 10] == 1.0
    assert hm[10, 13] == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert hm[13, 10] == pytest.approx(0.60653, abs=1e-5)
    sharp = encode([[10.0, 10.0]], 32, 32, 1.5)[0]
    assert sharp[10, 13] == pytest.approx(math.exp(-2.0), abs=1e-12)
    assert sharp[10, 13] == pytest.approx(0.13534, abs=1e-5)


def test_encode_matches_direct_formula():
    rng = np.random.default_rng(0)
    kps = rng.uniform(0, 19, (6, 2))
    hm = encode(kps, 20, 24, 2.0)
    i, j = np.mgrid[0:20, 0:24]
    for k, (x, y) in enumerate(kps):
        ref = np.exp(-((j - x) ** 2 + (i - y) ** 2) / 8.0)
        np.testing.assert_allclose(hm[k], ref, rtol=1e-12, atol=1e-300)


def test_encode_errors():
    with pytest.raises(KeypointOutOfBounds):
        encode([[32.0, 5.0]], 32, 32, 3.0)
    with pytest.raises(KeypointOutOfBounds):
        encode([[-0.1, 5.0]], 32, 32, 3.0)
    with pytest.raises(ValueError):
        encode([[5.0, 5.0]], 32, 32, 0.0)


def test_decode_delta():
    hm = np.zeros((1, 12, 12))
    hm[0, 7, 5] = 0.9
    kps, conf = decode(hm, subpixel=False)
    np.testing.assert_array_equal(kps[0], [5.0, 7.0])
    assert conf[0] == 0.9
    kps, _ = decode(hm, subpixel=True)
    np.testing.assert_allclose(kps[0], [5.0, 7.0])


def test_decode_tie_breaks_row_major():
    hm = np.zeros((10, 10))
    hm[4, 6] = hm[4, 2] = hm[7, 1] = 1.0
    kps, _ = decode(hm, subpixel=False)
    np.testing.assert_array_equal(kps[0], [2.0, 4.0])


def test_decode_flat_map():
    kps, conf = decode(np.full((1, 5, 5), 0.3))
    np.testing.assert_array_equal(kps[0], [0.0, 0.0])
    assert conf[0] == 0.3


def test_decode_known_subpixel_case():
    kp = np.array([[10.4, 20.0]])
    kps, _ = decode(encode(kp, 40, 40, 3.0))
    assert np.abs(kps - kp).max() <= 0.25


def test_subpixel_sweep_offsets():
    for sigma in (1.5, 3.0):
        for dx in np.arange(0, 0.51, 0.1):
            for dy in np.arange(0, 0.51, 0.1):
                kp = np.array([[20 + dx, 17 + dy]])
                kps, _ = decode(encode(kp, 40, 40, sigma))
                assert np.abs(kps - kp).max() <= 0.25


@settings(max_examples=100, deadline=None)
@given(st.floats(9.0, 54.0), st.floats(9.0, 54.0), st.sampled_from([1.5, 3.0]))
def test_round_trip_property(x, y, sigma):
    kp = np.array([[x, y]])
    maps = encode(kp, 64, 64, sigma)
    coarse, conf = decode(maps, subpixel=False)
    fine, _ = decode(maps, subpixel=True)
    assert np.abs(coarse - kp).max() <= 0.5
    assert np.abs(fine - kp).max() <= 0.25
    assert 0 < conf[0] <= 1
