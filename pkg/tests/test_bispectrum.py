import numpy as np
import pytest

from specklecolor.bispectrum import (ANGLE_BLOCK, TILE_BLOCK, BispectrumSlice, RadialPhaseSlice,
                                     TileSpec, accumulate_bispectra, antisymmetrize, assemble_phase,
                                     recenter_slices, recover_slice_phase, retrieve_phase,
                                     slice_bispectrum, tile, tile_window, tiles_from_images,
                                     triangle, write_phase_csv)
from specklecolor.objects import centered, glyph
from specklecolor.spectral import RadialSignal, central_slice, dft2


def brute_bispectrum(x):
    f = np.fft.fft(x)
    n = len(x)
    out = np.zeros((n // 2 + 1, n // 2 + 1), dtype=complex)
    for u in range(1, n // 2 + 1):
        for v in range(u, n // 2 + 1):
            if u + v <= n // 2:
                out[u, v] = f[u] * f[v] * np.conj(f[(u + v) % n])
    return out


def wrap(a):
    return np.angle(np.exp(1j * a))


def test_triangle_domain():
    u, v = triangle(16)
    assert np.all(u >= 1) and np.all(u <= v) and np.all(u + v <= 8)
    assert len(u) == sum(1 for a in range(1, 9) for b in range(a, 9) if a + b <= 8)


def test_bispectrum_matches_brute_force(rng):
    for n in (4, 8, 12, 16):
        x = rng.normal(size=n)
        b = slice_bispectrum(x)
        ref = brute_bispectrum(x)
        assert np.max(np.abs(b.values - ref)) <= 1e-12 * np.max(np.abs(ref))
        assert b.n == n


def test_bispectrum_accepts_radial_signal(rng):
    sig = RadialSignal(0.4, rng.normal(size=8))
    assert slice_bispectrum(sig).angle == 0.4


def test_bispectrum_input_validation():
    with pytest.raises(ValueError):
        slice_bispectrum(np.ones(5))
    with pytest.raises(ValueError):
        slice_bispectrum(np.ones(8, dtype=complex))


def test_bispectrum_translation_invariance(rng):
    x = rng.normal(size=32)
    b = slice_bispectrum(x).values
    for s in range(1, 32):
        np.testing.assert_allclose(slice_bispectrum(np.roll(x, s)).values, b, atol=1e-9)


def test_reflection_conjugates_bispectrum(rng):
    x = rng.normal(size=16)
    mirrored = np.roll(x[::-1], 1)  # x(-t) on the circular grid
    np.testing.assert_allclose(slice_bispectrum(mirrored).values,
                               np.conj(slice_bispectrum(x).values), atol=1e-10)


def test_recursion_recovers_phase_up_to_ramp(rng):
    x = rng.normal(size=32)
    phi = np.angle(np.fft.fft(x))[:17]
    l = np.arange(17)
    rec = recover_slice_phase(slice_bispectrum(x))
    # the bispectrum never involves F(0), so bin 0 carries the gauge value only
    assert rec.phase[0] == 0.0
    assert np.max(np.abs(wrap(rec.phase[1:] - (phi - l * phi[1])[1:]))) < 1e-6
    np.testing.assert_allclose(rec.confidence, 1.0)


def test_recursion_carries_through_empty_bins():
    vals = np.zeros((5, 5), dtype=complex)
    rec = recover_slice_phase(BispectrumSlice(0.0, vals))
    np.testing.assert_array_equal(rec.phase, 0.0)
    assert rec.confidence[2:].max() == 0.0


def test_tile_counts_and_stride():
    spec = TileSpec(128, 0.9)
    assert spec.stride == 13
    assert spec.counts((512, 512)) == (30, 30)
    ts = tile(np.random.default_rng(0).random((512, 512)), spec)
    assert len(ts) == 900
    assert tuple(ts.origins[1]) == (0, 13)
    np.testing.assert_allclose(ts.tiles.mean(axis=(1, 2)), 0.0, atol=0.05)


def test_tile_spec_validation():
    with pytest.raises(ValueError):
        TileSpec(7)
    with pytest.raises(ValueError):
        TileSpec(16, 0.99)
    with pytest.raises(ValueError):
        TileSpec(64).counts((32, 32))


def test_window_peaks_at_center():
    w = tile_window(16)
    assert np.unravel_index(np.argmax(w), w.shape) == (8, 8)
    assert w[0].max() == 0.0


def test_accumulation_is_independent_of_workers(rng):
    imgs = [rng.random((32, 32)) for _ in range(2 * TILE_BLOCK + 3)]
    ts = tiles_from_images(imgs)
    angles = np.arange(2 * ANGLE_BLOCK + 1) * np.pi / 17
    one = accumulate_bispectra(ts, angles, workers=1)
    four = accumulate_bispectra(ts, angles, workers=4)
    for a, b in zip(one, four):
        assert np.array_equal(a.values, b.values)
        assert a.accumulation_count == len(imgs)


def test_accumulation_equals_mean_of_single_tile_bispectra(rng):
    from specklecolor.spectral import radon_project

    imgs = [rng.random((16, 16)) for _ in range(5)]
    ts = tiles_from_images(imgs)
    acc = accumulate_bispectra(ts, [0.3])[0]
    ref = np.mean([slice_bispectrum(radon_project(t, 0.3, 16, ).bins).values
                   if t.min() >= 0 else
                   slice_bispectrum(_signed_projection(t, 0.3)).values for t in ts.tiles], axis=0)
    np.testing.assert_allclose(acc.values, ref, atol=1e-9 * np.abs(ref).max())


def _signed_projection(t, angle):
    from specklecolor.spectral import projection_matrix

    return projection_matrix(t.shape, (angle,), t.shape[0]) @ t.ravel()


def test_monte_carlo_average_recovers_object_bispectrum_phase():
    # 1D speckle: I_m = o (*) s_m with independent random pupils; the mean
    # bispectrum phase converges to the object's inside the transfer band
    rng = np.random.default_rng(1)
    n = 64
    o = np.zeros(n)
    o[20:26] = 1
    o[30:33] = 2
    o[40] = 1.5
    k = np.fft.fftfreq(n) * n
    pupil = (np.abs(k) <= 12).astype(float)
    acc = 0
    for _ in range(400):
        s = np.abs(np.fft.ifft(pupil * np.exp(2j * np.pi * rng.random(n)))) ** 2
        img = np.fft.ifft(np.fft.fft(o) * np.fft.fft(s)).real
        acc = acc + slice_bispectrum(img - img.mean()).values
    u, v = triangle(n)
    band = u + v <= 12
    err = np.abs(np.angle(acc[u, v] * np.conj(slice_bispectrum(o).values[u, v])))[band]
    assert np.median(err) < 0.1
    assert err.max() < 0.5


def _exact_slices(obj, n_angles=64):
    spec = dft2(obj, centered=True)
    n = obj.shape[0]
    out = []
    for a in np.arange(n_angles) * np.pi / n_angles:
        cs = central_slice(spec, a, n).bins
        out.append(RadialPhaseSlice(a, np.angle(cs[n // 2:]), np.ones(n // 2)))
    return spec, out


def test_assembly_oracle():
    from scipy.ndimage import gaussian_filter

    obj = gaussian_filter(centered(glyph("4", 24), 128), 1.0)
    spec, slices = _exact_slices(obj)
    grid = assemble_phase(slices, 128, radius=2.0)
    yy, xx = np.mgrid[0:128, 0:128] - 64
    r = np.hypot(yy, xx)
    sel = grid.mask & (r > 0) & (r <= 16)
    err = np.abs(wrap(grid.phase - spec.phase))[sel]
    assert np.median(err) < 0.1
    assert grid.mask[64, 64] and grid.phase[64, 64] == 0.0


def test_assembled_phase_is_antisymmetric(rng):
    slices = [RadialPhaseSlice(a, rng.uniform(-np.pi, np.pi, 9), rng.random(9))
              for a in np.arange(8) * np.pi / 8]
    grid = assemble_phase(slices, 16, 1.5)
    core = grid.phase[1:, 1:]
    mask = grid.mask[1:, 1:]
    np.testing.assert_allclose(np.where(mask, wrap(core + core[::-1, ::-1]), 0), 0, atol=1e-12)


def test_antisymmetrize_pairs_conjugates(rng):
    z = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    out = antisymmetrize(z)
    np.testing.assert_allclose(out[1:, 1:], np.conj(out[1:, 1:][::-1, ::-1]))
    assert np.all(out[0] == 0) and np.all(out[:, 0] == 0)


def test_assembly_validation():
    s = RadialPhaseSlice(0.0, np.zeros(5), np.ones(5))
    with pytest.raises(ValueError):
        assemble_phase([s], 8)
    with pytest.raises(ValueError):
        assemble_phase([s, s], 8)


def test_recentering_removes_per_slice_ramps(rng):
    obj = centered(glyph("7", 24), 128)
    spec, slices = _exact_slices(obj)
    l = np.arange(64)
    ramped = [RadialPhaseSlice(s.angle, wrap(s.phase + 2 * np.pi * l * rng.integers(-9, 10) / 128),
                               s.confidence) for s in slices]
    a = recenter_slices(slices, spec.amplitude)
    b = recenter_slices(ramped, spec.amplitude)
    # whatever ramp remains must correspond to a sub-pixel translation
    l = np.arange(1, 20)
    for sa, sb in zip(a, b):
        shift_px = np.abs(wrap(sa.phase[1:20] - sb.phase[1:20])) * 128 / (2 * np.pi * l)
        assert shift_px.max() < 0.25


def test_retrieve_phase_recovers_upright_object():
    from specklecolor.forward import PsfModel, gen_speckle_psf, simulate_speckle

    obj = glyph("7", 32)
    psf = gen_speckle_psf(PsfModel(21, 256, 0.11))
    speckle = simulate_speckle(centered(obj, 32), psf)
    grid, slices = retrieve_phase(speckle, TileSpec(64, 0.8), angle_count=16)
    assert len(slices) == 16
    assert grid.phase.shape == (64, 64)
    assert grid.coverage > 0.3


def test_phase_csv(tmp_path):
    slices = [RadialPhaseSlice(0.5, np.array([0.0, 0.1, 0.2]), np.array([1.0, 1.0, 0.5]))]
    path = tmp_path / "phase.csv"
    write_phase_csv(slices, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "angle,l,phase,confidence"
    assert len(lines) == 4
    assert lines[3].split(",")[1] == "2"
