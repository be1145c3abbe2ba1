import pytest
import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import tibcad
import tibcad.shapefeat as sf
from tibcad.exceptions import ConfigError, DataError
from tibcad.volio import Mask, Patch, extract_patch, tile_patches

print(tibcad.__path__)

__author__ = "tibcad contributors"
__copyright__ = "tibcad contributors"
__license__ = "mit"

pixel_arrays = arrays(np.float64, (9, 9),
                      elements=st.integers(-1000, 400).map(float))


def make_patch(pixels, spacing=(1.0, 1.0)):
    n = pixels.shape[0]
    return Patch(z=0, x0=0, y0=0, n=n, pixels=pixels,
                 mask_bits=np.ones((n, n), dtype=bool), spacing=spacing)


@pytest.fixture
def fixture_quadratic_patch():
    # I = 3 x^2 - 2 y^2 + 5 x y in mm, sampled on a 0.5 x 0.8 mm grid
    y, x = np.mgrid[-10:11, -10:11].astype(np.float64)
    x_mm, y_mm = 0.5 * x, 0.8 * y
    pixels = 3 * x_mm ** 2 - 2 * y_mm ** 2 + 5 * x_mm * y_mm

    yield make_patch(pixels, spacing=(0.5, 0.8))


@pytest.fixture
def fixture_blob_patch():
    y, x = np.mgrid[-4:5, -4:5].astype(np.float64)
    pixels = -800 + 600 * np.exp(-(x ** 2 + y ** 2) / 4) + 40 * x

    yield make_patch(np.round(pixels))


class TestGaussianKernels(object):
    @pytest.mark.parametrize("sigma", [0.7, 1.5, 2.3])
    def test_moments(self, sigma):
        g0, g1, g2 = sf.gaussian_kernels(sigma)
        x = np.arange(len(g0)) - len(g0) // 2

        assert len(g0) == 2 * int(np.ceil(3 * sigma)) + 1
        assert g0.sum() == pytest.approx(1.0)
        assert g1.sum() == pytest.approx(0.0, abs=1e-12)
        assert np.sum(x * g1) == pytest.approx(1.0)
        assert g2.sum() == pytest.approx(0.0, abs=1e-12)
        assert np.sum(x * x * g2) == pytest.approx(2.0)

    def test_non_positive_sigma(self):
        with pytest.raises(ConfigError):
            sf.gaussian_kernels(0.0)


class TestHessian(object):
    def test_quadratic_surface_is_exact(self, fixture_quadratic_patch):
        ixx, iyy, ixy = sf.hessian_components(
            fixture_quadratic_patch.pixels, 1.5,
            fixture_quadratic_patch.spacing)
        inner = (slice(5, 16), slice(5, 16))

        assert ixx[inner] == pytest.approx(np.full((11, 11), 6.0))
        assert iyy[inner] == pytest.approx(np.full((11, 11), -4.0))
        assert ixy[inner] == pytest.approx(np.full((11, 11), 5.0))

    def test_eigenvalues_of_quadratic_surface(self, fixture_quadratic_patch):
        field = sf.hessian_eigen(fixture_quadratic_patch, 1.5)
        expected = np.linalg.eigvalsh(np.array([[6.0, 5.0], [5.0, -4.0]]))
        expected = expected[np.argsort(-np.abs(expected))]

        assert field.k1[10, 10] == pytest.approx(expected[0])
        assert field.k2[10, 10] == pytest.approx(expected[1])
        assert field.pixel_area == pytest.approx(0.4)

    @pytest.mark.parametrize("seed", range(5))
    def test_cubic_surfaces_match_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        y, x = np.mgrid[-12:13, -12:13].astype(np.float64)
        pixels = sum(rng.normal() * x ** a * y ** b
                     for a in range(4) for b in range(4 - a))
        field = sf.hessian_eigen(make_patch(pixels), 1.5)
        g0, _, _ = sf.gaussian_kernels(1.5)
        s = sf.separable_filter(pixels, g0, g0)

        # Kernels reach 5 pixels, differences one more
        for i in range(6, 19):
            for j in range(6, 19):
                sxx = s[i, j + 1] - 2 * s[i, j] + s[i, j - 1]
                syy = s[i + 1, j] - 2 * s[i, j] + s[i - 1, j]
                sxy = (s[i + 1, j + 1] - s[i + 1, j - 1]
                       - s[i - 1, j + 1] + s[i - 1, j - 1]) / 4
                expected = np.linalg.eigvalsh(np.array([[sxx, sxy],
                                                        [sxy, syy]]))
                actual = np.sort([field.k1[i, j], field.k2[i, j]])

                assert actual == pytest.approx(expected, abs=1e-6)

    @given(pixels=pixel_arrays)
    def test_k1_dominates(self, pixels):
        field = sf.hessian_eigen(make_patch(pixels))

        assert np.all(np.abs(field.k1) >= np.abs(field.k2))

    @given(pixels=pixel_arrays, offset=st.integers(-500, 500))
    def test_constant_offset_is_exact(self, pixels, offset):
        a = sf.hessian_eigen(make_patch(pixels))
        b = sf.hessian_eigen(make_patch(pixels + offset))

        assert np.array_equal(a.k1, b.k1)
        assert np.array_equal(a.k2, b.k2)

    @given(pixels=pixel_arrays)
    def test_quarter_turn(self, pixels):
        a = sf.curvature_maps(sf.hessian_eigen(make_patch(pixels)))
        b = sf.curvature_maps(sf.hessian_eigen(make_patch(np.rot90(pixels))))
        scale = max(1.0, np.abs(a.W).max())

        assert np.rot90(a.W) == pytest.approx(b.W, abs=1e-9 * scale)
        assert np.rot90(a.H) == pytest.approx(b.H, abs=1e-9 * scale)


class TestCurvatureMaps(object):
    @given(pixels=pixel_arrays)
    def test_energy_density(self, pixels):
        maps = sf.curvature_maps(sf.hessian_eigen(make_patch(pixels)))
        scale = max(1.0, np.abs(maps.H ** 2).max(), np.abs(maps.K).max())

        assert np.all(maps.W >= 0)
        assert maps.W == pytest.approx(maps.H ** 2 - maps.K,
                                       abs=1e-9 * scale)

    def test_sphere_like_cap_has_no_energy(self):
        field = sf.HessianField(k1=np.full((3, 3), 2.0),
                                k2=np.full((3, 3), 2.0), sigma=1.5)
        maps = sf.curvature_maps(field)

        assert np.all(maps.W == 0)
        assert maps.H == pytest.approx(np.full((3, 3), 2.0))
        assert maps.K == pytest.approx(np.full((3, 3), 4.0))

    def test_willmore_energy(self):
        field = sf.HessianField(k1=np.array([[3.0, 1.0]]),
                                k2=np.array([[1.0, 1.0]]), sigma=1.5,
                                pixel_area=0.5)
        maps = sf.curvature_maps(field)

        assert sf.willmore_energy(maps, [[True, True]]) == pytest.approx(0.5)
        assert sf.willmore_energy(maps, [[False, True]]) == 0.0

    def test_willmore_energy_empty_region(self, fixture_blob_patch):
        maps = sf.curvature_maps(sf.hessian_eigen(fixture_blob_patch))

        with pytest.raises(DataError):
            sf.willmore_energy(maps, np.zeros((9, 9), dtype=bool))
        with pytest.raises(DataError):
            sf.willmore_energy(maps, np.ones((3, 3), dtype=bool))


def bump_energy(h, sigma_mm=1.5, amplitude=100.0, width_mm=4.0):
    """Willmore energy of a Gaussian bump sampled every h mm, with the
    smoothing scale held at sigma_mm"""
    half = int(round(20 / h))
    y, x = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64) * h
    pixels = amplitude * np.exp(-(x ** 2 + y ** 2) / (2 * width_mm ** 2))
    patch = make_patch(pixels, spacing=(h, h))
    maps = sf.curvature_maps(sf.hessian_eigen(patch, sigma_mm / h))
    return sf.willmore_energy(maps, np.ones(pixels.shape, dtype=bool))


class TestWillmoreEnergy(object):
    def test_halving_the_pixel_size(self):
        coarse = bump_energy(1.0)
        fine = bump_energy(0.5)

        assert fine == pytest.approx(coarse, rel=0.1)

    def test_continuous_bump(self):
        # A^2 s^4 pi / (2 S^6) with S^2 = s^2 + sigma^2
        spread = 4.0 ** 2 + 1.5 ** 2
        expected = 100.0 ** 2 * 4.0 ** 4 * np.pi / (2 * spread ** 3)

        assert bump_energy(0.5) == pytest.approx(expected, rel=0.1)

    def test_tib_outweighs_clear_lung(self, small_phantom):
        volume, lungs, tib = small_phantom
        z, y, x = np.nonzero(tib.bits)
        z0 = z[0]
        cy = int(round(y[z == z0].mean()))
        cx = int(round(x[z == z0].mean()))
        ny, nx = volume.shape[1:]
        tib_patch = extract_patch(volume, lungs, z0,
                                  int(np.clip(cx - 4, 0, nx - 9)),
                                  int(np.clip(cy - 4, 0, ny - 9)), 9)
        clear_patch = next(
            p for p in tile_patches(volume, lungs, 9)
            if p.mask_bits.all() and p.pixels.max() < -650
            and not p.window(tib.bits).any())

        def energy(patch):
            maps = sf.curvature_maps(sf.hessian_eigen(patch, 1.5))
            return sf.willmore_energy(maps, np.ones((9, 9), dtype=bool))

        assert tib_patch.window(tib.bits).any()
        assert energy(tib_patch) > 10 * energy(clear_patch)


class TestShapeIndex(object):
    def test_umbilic_points(self):
        actual = sf.shape_index([2.0, -2.0, 0.0], [2.0, -2.0, 0.0])
        expected = np.array([1.0, -1.0, 0.0])

        assert actual == pytest.approx(expected)

    def test_saddle(self):
        assert sf.shape_index(1.0, -1.0) == pytest.approx(0.0)

    def test_formula(self):
        actual = sf.shape_index(3.0, 1.0)
        expected = 2 / np.pi * np.arctan(4.0 / -2.0)

        assert actual == pytest.approx(expected)

    @given(k1=st.floats(-1e3, 1e3), k2=st.floats(-1e3, 1e3),
           c=st.sampled_from([2.0, 4.0]))
    def test_bounded_and_scale_free(self, k1, k2, c):
        si = sf.shape_index(k1, k2)

        assert -1.0 - 1e-12 <= si <= 1.0 + 1e-12
        assert sf.shape_index(c * k1, c * k2) == si


class TestEnergyGate(object):
    def test_fit_percentiles(self):
        gate = sf.fit_energy_gate(np.arange(101.0), (5, 95))

        assert gate.w_lo == pytest.approx(5.0)
        assert gate.w_hi == pytest.approx(95.0)
        assert gate.enabled

    def test_fit_without_samples(self):
        with pytest.raises(DataError):
            sf.fit_energy_gate([])

    def test_empty_band(self):
        with pytest.raises(ConfigError):
            sf.EnergyGate(2.0, 1.0)


class TestShapeVector(object):
    def test_open_band(self, fixture_blob_patch):
        field = sf.hessian_eigen(fixture_blob_patch)
        maps = sf.curvature_maps(field)
        actual = sf.shape_vector(fixture_blob_patch, field, maps)

        assert actual.shape == (len(sf.SHAPE_FEATURE_NAMES),)
        assert np.all(np.isfinite(actual))
        assert actual[0] == pytest.approx(maps.W.sum())
        assert actual[1] == pytest.approx(maps.H.mean())

    def test_skipped_without_candidates(self, fixture_blob_patch):
        field = sf.hessian_eigen(fixture_blob_patch)
        maps = sf.curvature_maps(field)
        none = Mask((9, 9, 1), np.zeros((1, 9, 9), dtype=bool))
        gate = sf.EnergyGate(candidates=none)

        assert sf.shape_vector(fixture_blob_patch, field, maps, gate) is None

    def test_skipped_outside_band(self, fixture_blob_patch):
        field = sf.hessian_eigen(fixture_blob_patch)
        maps = sf.curvature_maps(field)
        gate = sf.EnergyGate(maps.W.max() + 1, maps.W.max() + 2)

        assert sf.shape_vector(fixture_blob_patch, field, maps, gate) is None

    def test_disabled_gate_falls_back_to_all_pixels(self, fixture_blob_patch):
        field = sf.hessian_eigen(fixture_blob_patch)
        maps = sf.curvature_maps(field)
        gate = sf.EnergyGate(maps.W.max() + 1, maps.W.max() + 2,
                             enabled=False)
        actual = sf.shape_vector(fixture_blob_patch, field, maps, gate)
        expected = sf.shape_vector(fixture_blob_patch, field, maps)

        assert np.array_equal(actual, expected)

    def test_gating_does_not_change_scores(self, fixture_blob_patch):
        field = sf.hessian_eigen(fixture_blob_patch)
        maps = sf.curvature_maps(field)
        w_lo, w_hi = np.percentile(maps.W, [20, 80])
        some = np.zeros((1, 9, 9), dtype=bool)
        some[0, 4, 4] = True
        gated = sf.EnergyGate(w_lo, w_hi, Mask((9, 9, 1), some))
        ungated = sf.EnergyGate(w_lo, w_hi, enabled=False)
        a = sf.shape_vector(fixture_blob_patch, field, maps, gated)
        b = sf.shape_vector(fixture_blob_patch, field, maps, ungated)

        assert a is not None
        assert np.array_equal(a, b)

    def test_ratios_are_clamped(self):
        patch = make_patch(np.full((9, 9), -800.0))
        field = sf.hessian_eigen(patch)
        maps = sf.curvature_maps(field)
        params = sf.ShapeParams(ratio_clamp=50.0)
        actual = sf.shape_vector(patch, field, maps, None, params)

        assert np.all(np.isfinite(actual))
        assert abs(actual[4]) <= 50.0
        assert abs(actual[6]) <= 50.0
