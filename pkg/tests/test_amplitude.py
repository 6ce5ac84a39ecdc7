import numpy as np
import pytest

from specklecolor.amplitude import (NOISY_AUTOCORRELATION, estimate_amplitude, fourier_amplitude,
                                    object_autocorrelation, raised_cosine_taper)
from specklecolor.forward import PsfModel, gen_speckle_psf, simulate_speckle
from specklecolor.objects import centered, glyph
from specklecolor.reconstruct import ncc_aligned
from specklecolor.spectral import autocorrelate, dft2


def test_amplitude_oracle_noiseless(rng):
    for _ in range(5):
        obj = rng.random((64, 64))
        est = fourier_amplitude(autocorrelate(obj))
        truth = np.abs(np.fft.fftshift(np.fft.fft2(obj, s=(128, 128))))
        assert np.max(np.abs(est.amplitude - truth)) / truth.max() < 1e-6
        assert est.clamp_fraction < 0.5


def test_amplitude_is_shift_invariant(rng):
    obj = np.zeros((32, 32))
    obj[8:14, 10:13] = rng.random((6, 3))
    a = fourier_amplitude(autocorrelate(obj)).amplitude
    b = fourier_amplitude(autocorrelate(np.roll(obj, (5, -4), axis=(0, 1)))).amplitude
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_taper_profile():
    t = raised_cosine_taper(64, 20, 0.5)
    assert t[32, 32] == 1.0
    assert t[32, 32 + 9] == 1.0
    assert np.isclose(t[32, 32 + 15], 0.5, atol=1e-12)
    assert t[32, 32 + 20] == 0.0
    hard = raised_cosine_taper(64, 20, 0.0)
    assert hard[32, 52] == 1.0 and hard[32, 53] == 0.0


def test_crop_validation():
    img = np.random.default_rng(0).random((64, 64))
    with pytest.raises(ValueError):
        object_autocorrelation(img, 16)
    with pytest.raises(ValueError):
        object_autocorrelation(img, 1)
    with pytest.raises(ValueError):
        object_autocorrelation(img, 4, taper=1.5)
    assert object_autocorrelation(img, 8).shape == (16, 16)


def test_noise_sets_warning(rng):
    est = fourier_amplitude(rng.normal(size=(32, 32)))
    assert est.clamp_fraction > 0.3
    noisy = fourier_amplitude(rng.normal(size=(32, 32)), max_clamp_fraction=0.1)
    assert noisy.warning == NOISY_AUTOCORRELATION


def test_speckle_amplitude_matches_object():
    obj = glyph("4", 32)
    psf = gen_speckle_psf(PsfModel(3, 512, 0.11))
    speckle = simulate_speckle(centered(obj, 64), psf)
    est = estimate_amplitude(speckle, 64, 128)
    assert est.shape == (128, 128)
    assert est.pedestal_removed
    truth = dft2(centered(obj, 128), centered=True).amplitude
    # compare inside the transfer band; the speckle OTF has no power beyond it
    yy, xx = np.mgrid[0:128, 0:128] - 64
    band = np.hypot(yy, xx) <= 12
    score = ncc_aligned(est.amplitude * band, truth * band, try_flip=False).score
    assert score > 0.9
