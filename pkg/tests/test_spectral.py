import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from specklecolor.spectral import (InvalidImageError, autocorrelate, central_slice, dft2, idft2,
                                   projection_matrix, radon_project)
from conftest import random_blob_image


def brute_autocorr_linear(img):
    h, w = img.shape
    out = np.zeros((2 * h, 2 * w))
    for dy in range(-h + 1, h):
        for dx in range(-w + 1, w):
            a = img[max(0, dy):h + min(0, dy), max(0, dx):w + min(0, dx)]
            b = img[max(0, -dy):h + min(0, -dy), max(0, -dx):w + min(0, -dx)]
            out[h + dy, w + dx] = np.sum(a * b)
    return out


def test_parseval(rng):
    img = rng.random((32, 48))
    spec = dft2(img)
    assert np.isclose(np.sum(img**2), np.sum(np.abs(spec.data) ** 2) / img.size, rtol=1e-12)


@pytest.mark.parametrize("centered", [False, True])
def test_round_trip(rng, centered):
    img = rng.random((16, 24))
    back = idft2(dft2(img, centered=centered))
    np.testing.assert_allclose(back.real, img, atol=1e-12)
    assert np.max(np.abs(back.imag)) < 1e-12


def test_odd_sizes_are_padded(rng):
    img = rng.random((15, 9))
    spec = dft2(img)
    assert spec.data.shape == (16, 10)
    np.testing.assert_allclose(idft2(spec).real[:15, :9], img, atol=1e-12)


def test_centered_delta_has_flat_real_spectrum():
    img = np.zeros((16, 16))
    img[8, 8] = 1.0
    spec = dft2(img, centered=True)
    np.testing.assert_allclose(spec.data, np.ones((16, 16)), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (8, 6), elements=st.floats(0, 1e3, allow_nan=False)))
def test_round_trip_property(img):
    np.testing.assert_allclose(idft2(dft2(img, centered=True)).real, img, atol=1e-9)


def test_autocorrelation_matches_brute_force(rng):
    img = rng.random((6, 8))
    np.testing.assert_allclose(autocorrelate(img), brute_autocorr_linear(img), atol=1e-10)


def test_circular_autocorrelation_zero_lag(rng):
    img = rng.random((10, 10))
    corr = autocorrelate(img, zero_pad=False)
    assert corr.shape == (10, 10)
    assert np.isclose(corr[5, 5], np.sum(img**2))
    assert np.argmax(corr) == 5 * 10 + 5


def test_mean_subtracted_autocorrelation_sums_to_zero(rng):
    corr = autocorrelate(rng.random((12, 12)), mean_subtract=True)
    assert abs(corr.sum()) < 1e-9


def test_invalid_images():
    with pytest.raises(InvalidImageError):
        dft2(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidImageError):
        dft2(-np.ones((4, 4)))
    with pytest.raises(InvalidImageError):
        dft2(np.ones(5))


def test_radon_axis_aligned_projections(rng):
    img = rng.random((16, 16))
    p0 = radon_project(img, 0.0, 16).bins
    np.testing.assert_allclose(p0, img.sum(axis=0), atol=1e-12)
    p90 = radon_project(img, np.pi / 2, 16).bins
    np.testing.assert_allclose(p90, img.sum(axis=1), atol=1e-12)


def test_radon_preserves_mass_and_folds_angles(rng):
    img = random_blob_image(rng, 64, 24)
    for a in np.linspace(0, np.pi, 7, endpoint=False):
        assert np.isclose(radon_project(img, a, 64).bins.sum(), img.sum(), rtol=1e-12)
    a = 0.3
    np.testing.assert_allclose(radon_project(img, a + np.pi, 64).bins, radon_project(img, a, 64).bins)


def test_symmetric_blob_projects_identically():
    yy, xx = np.mgrid[0:128, 0:128] - 64
    blob = np.exp(-(xx**2 + yy**2) / (2 * 10.0**2))
    ref = radon_project(blob, 0.0, 128).bins
    for a in np.linspace(0, np.pi, 9, endpoint=False):
        p = radon_project(blob, a, 128).bins
        assert np.linalg.norm(p - ref) / np.linalg.norm(ref) < 1e-3


def test_projection_matrix_is_cached():
    a = projection_matrix((8, 8), (0.0, 0.5), 8)
    assert projection_matrix((8, 8), (0.0, 0.5), 8) is a


def test_central_slice_axis_row(rng):
    img = rng.random((32, 32))
    spec = dft2(img, centered=True)
    sl = central_slice(spec, 0.0, 32)
    np.testing.assert_allclose(sl.bins, spec.data[16, :], atol=1e-9)
    assert sl.coverage == 1.0


def test_central_slice_needs_centered_spectrum(rng):
    with pytest.raises(ValueError):
        central_slice(dft2(rng.random((8, 8))), 0.0, 8)


@pytest.mark.parametrize("angle", [0.7, np.pi / 4])
def test_central_slice_theorem_single_case(rng, angle):
    # compact object on a 4x oversampled grid so bilinear slice sampling is accurate
    img = random_blob_image(rng, 128, 16, sigma=2.0)
    spec = dft2(img, centered=True)
    proj = radon_project(img, angle, 128).bins
    ft = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(proj)))
    sl = central_slice(spec, angle, 128).bins
    assert np.linalg.norm(ft - sl) / np.linalg.norm(sl) < 0.05
