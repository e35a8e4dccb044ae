import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from changediff import kernels

from conftest import numba_modes


@numba_modes
def test_confusion_hand_count(use_numba):
    gt = np.array([[0, 1], [1, 1]])
    pred = np.array([[0, 1], [0, 1]])
    np.testing.assert_array_equal(kernels.confusion_counts(gt, pred, 2, use_numba=use_numba), [[1, 0], [1, 2]])


@numba_modes
def test_triangle_fill_uses_pixel_centres(use_numba):
    xs = np.array([0.0, 4.0, 0.0])
    ys = np.array([0.0, 0.0, 4.0])
    got = kernels.even_odd_fill([(xs, ys)], 8, 8, use_numba=use_numba)
    yy, xx = np.mgrid[0:8, 0:8] + 0.5
    np.testing.assert_array_equal(got, (xx + yy) < 4)


def test_square_covers_exactly_its_pixels():
    xs = np.array([0.0, 10.0, 10.0, 0.0])
    ys = np.array([0.0, 0.0, 10.0, 10.0])
    assert kernels.even_odd_fill([(xs, ys)], 16, 16).sum() == 100


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_numba_and_numpy_paths_agree(k, seed):
    r = np.random.default_rng(seed)
    gt = r.integers(0, k, size=(9, 7))
    pred = r.integers(0, k, size=(9, 7))
    a = kernels.confusion_counts(gt, pred, k, use_numba=False)
    b = kernels.confusion_counts(gt, pred, k, use_numba=True)
    np.testing.assert_array_equal(a, b)
    assert a.sum() == gt.size
    rings = [(r.uniform(-2, 14, 5), r.uniform(-2, 14, 5))]
    np.testing.assert_array_equal(
        kernels.even_odd_fill(rings, 12, 12, use_numba=False), kernels.even_odd_fill(rings, 12, 12, use_numba=True)
    )
