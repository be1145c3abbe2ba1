import pytest
import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import tibcad
import tibcad.texfeat as tf
from tibcad.exceptions import ConfigError, DataError, NoPairsError
from tibcad.volio import Patch

print(tibcad.__path__)

__author__ = "tibcad contributors"
__copyright__ = "tibcad contributors"
__license__ = "mit"

FEATURE = {name: k for k, name in enumerate(tf.GLCM_FEATURE_NAMES)}


def make_patch(pixels, spacing=(1.0, 1.0)):
    n = pixels.shape[0]
    return Patch(z=0, x0=0, y0=0, n=n, pixels=pixels,
                 mask_bits=np.ones((n, n), dtype=bool), spacing=spacing)


def brute_force_cooccurrence(binned, levels, offsets):
    counts = np.zeros((levels, levels))
    h, w = binned.shape
    for y in range(h):
        for x in range(w):
            for dx, dy in offsets:
                for sx, sy in ((dx, dy), (-dx, -dy)):
                    if 0 <= y + sy < h and 0 <= x + sx < w:
                        counts[binned[y, x], binned[y + sy, x + sx]] += 1
    return counts / counts.sum()


def brute_force_features(p):
    """The 18 statistics by direct summation over matrix entries"""
    L = p.shape[0]
    px = [sum(p[i, j] for j in range(L)) for i in range(L)]
    py = [sum(p[i, j] for i in range(L)) for j in range(L)]
    mu_x = sum((i + 1) * px[i] for i in range(L))
    mu_y = sum((j + 1) * py[j] for j in range(L))
    sigma_x = np.sqrt(sum((i + 1 - mu_x) ** 2 * px[i] for i in range(L)))
    sigma_y = np.sqrt(sum((j + 1 - mu_y) ** 2 * py[j] for j in range(L)))

    f = dict.fromkeys(tf.GLCM_FEATURE_NAMES, 0.0)
    covariance = hxy1 = hxy2 = 0.0
    p_sum = {k: 0.0 for k in range(2, 2 * L + 1)}
    p_diff = {k: 0.0 for k in range(L)}
    for i in range(L):
        for j in range(L):
            a, b, v = i + 1, j + 1, p[i, j]
            f["autocorrelation"] += a * b * v
            f["contrast"] += (a - b) ** 2 * v
            covariance += (a - mu_x) * (b - mu_y) * v
            f["cluster_prominence"] += (a + b - mu_x - mu_y) ** 4 * v
            f["cluster_shade"] += (a + b - mu_x - mu_y) ** 3 * v
            f["dissimilarity"] += abs(a - b) * v
            f["energy"] += v * v
            f["homogeneity"] += v / (1 + (a - b) ** 2)
            f["maximum_probability"] = max(f["maximum_probability"], v)
            f["variance"] += (a - mu_x) ** 2 * v
            p_sum[a + b] += v
            p_diff[abs(a - b)] += v
            q = px[i] * py[j]
            if v > 0:
                f["entropy"] -= v * np.log(v)
                hxy1 -= v * np.log(q)
            if q > 0:
                hxy2 -= q * np.log(q)

    if sigma_x * sigma_y < np.finfo(np.float64).eps:
        f["correlation"] = 1.0
    else:
        f["correlation"] = covariance / (sigma_x * sigma_y)
    f["sum_average"] = sum(k * v for k, v in p_sum.items())
    f["sum_variance"] = sum((k - f["sum_average"]) ** 2 * v
                            for k, v in p_sum.items())
    f["sum_entropy"] = -sum(v * np.log(v) for v in p_sum.values() if v > 0)
    difference_average = sum(k * v for k, v in p_diff.items())
    f["difference_variance"] = sum((k - difference_average) ** 2 * v
                                   for k, v in p_diff.items())
    f["difference_entropy"] = -sum(v * np.log(v) for v in p_diff.values()
                                   if v > 0)
    hx = -sum(v * np.log(v) for v in px if v > 0)
    hy = -sum(v * np.log(v) for v in py if v > 0)
    f["imc1"] = (f["entropy"] - hxy1) / max(hx, hy) if max(hx, hy) > 0 \
        else 0.0
    f["imc2"] = np.sqrt(max(0.0, 1 - np.exp(-2 * (hxy2 - f["entropy"]))))

    return np.array([f[name] for name in tf.GLCM_FEATURE_NAMES])


@pytest.fixture
def fixture_binned():
    binned = np.array([[0, 0, 1],
                       [1, 2, 2],
                       [0, 1, 2]])

    yield binned


@pytest.fixture
def fixture_horizontal_glcm():
    matrix = np.array([[2, 2, 0],
                       [2, 0, 2],
                       [0, 2, 2]]) / 12

    yield matrix


class TestCooccurrence(object):
    def test_hand_enumeration(self, fixture_binned, fixture_horizontal_glcm):
        actual = tf.cooccurrence(fixture_binned, 3, ((1, 0),)).matrix

        assert actual == pytest.approx(fixture_horizontal_glcm)

    @given(binned=arrays(np.int64, (7, 7), elements=st.integers(0, 7)))
    def test_matches_pair_enumeration(self, binned):
        actual = tf.cooccurrence(binned, 8).matrix
        expected = brute_force_cooccurrence(binned, 8, tf.DEFAULT_OFFSETS)

        assert actual == pytest.approx(expected)
        assert actual.sum() == pytest.approx(1.0)
        assert np.array_equal(actual, actual.T)

    def test_single_pixel_has_no_pairs(self):
        with pytest.raises(NoPairsError):
            tf.cooccurrence(np.zeros((1, 1), dtype=int), 4)

    def test_level_out_of_range(self, fixture_binned):
        with pytest.raises(DataError):
            tf.cooccurrence(fixture_binned, 2)

    def test_too_few_levels(self, fixture_binned):
        with pytest.raises(ConfigError):
            tf.cooccurrence(fixture_binned, 1)

    def test_patch_glcm_uses_window(self):
        pixels = np.full((5, 5), -2000.0)
        pixels[:, 2:] = 2000.0
        g = tf.glcm(make_patch(pixels), levels=4, offsets=((1, 0),))

        assert g.hu_window == (-1000.0, 400.0)
        assert g.matrix[0, 3] == pytest.approx(g.matrix[3, 0])
        assert g.matrix[0, 3] > 0
        assert g.matrix[1:3].sum() == 0


class TestGlcmFeatures(object):
    def test_hand_computed_values(self, fixture_horizontal_glcm):
        g = tf.Glcm(3, fixture_horizontal_glcm)
        actual = tf.glcm_features(g)
        expected = {"autocorrelation": 13 / 3,
                    "contrast": 2 / 3,
                    "correlation": 0.5,
                    "dissimilarity": 2 / 3,
                    "energy": 1 / 6,
                    "entropy": np.log(6),
                    "homogeneity": 2 / 3,
                    "maximum_probability": 1 / 6,
                    "variance": 2 / 3,
                    "sum_average": 4.0,
                    "cluster_shade": 0.0}

        for name, value in expected.items():
            assert actual[FEATURE[name]] == pytest.approx(value, abs=1e-12)

    def test_constant_image(self):
        g = tf.cooccurrence(np.full((4, 4), 2), 5)
        actual = tf.glcm_features(g)

        assert actual[FEATURE["contrast"]] == 0.0
        assert actual[FEATURE["energy"]] == pytest.approx(1.0)
        assert actual[FEATURE["entropy"]] == 0.0
        assert actual[FEATURE["homogeneity"]] == pytest.approx(1.0)
        assert actual[FEATURE["correlation"]] == 1.0
        assert actual[FEATURE["imc1"]] == 0.0
        assert actual[FEATURE["imc2"]] == 0.0
        assert actual[FEATURE["autocorrelation"]] == pytest.approx(9.0)

    @given(binned=arrays(np.int64, (9, 9), elements=st.integers(0, 31)))
    def test_features_are_finite_and_bounded(self, binned):
        actual = tf.glcm_features(tf.cooccurrence(binned, 32))

        assert actual.shape == (18,)
        assert np.all(np.isfinite(actual))
        assert -1.0 - 1e-9 <= actual[FEATURE["correlation"]] <= 1.0 + 1e-9
        assert 0.0 <= actual[FEATURE["imc2"]] <= 1.0
        assert actual[FEATURE["imc1"]] <= 1e-12
        assert 0.0 < actual[FEATURE["energy"]] <= 1.0

    @given(binned=arrays(np.int64, (6, 6), elements=st.integers(0, 5)))
    def test_matches_direct_summation(self, binned):
        g = tf.cooccurrence(binned, 6)

        assert tf.glcm_features(g) == \
            pytest.approx(brute_force_features(g.matrix), rel=1e-9, abs=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_asymmetric_matrix_matches_direct_summation(self, seed):
        rng = np.random.default_rng(seed)
        counts = rng.integers(0, 5, size=(5, 5)).astype(np.float64)
        counts[0, 4] += 1
        matrix = counts / counts.sum()

        assert tf.glcm_features(tf.Glcm(5, matrix)) == \
            pytest.approx(brute_force_features(matrix), rel=1e-9, abs=1e-6)

    @given(binned=arrays(np.int64, (7, 5), elements=st.integers(0, 7)))
    def test_transposed_image(self, binned):
        g = tf.cooccurrence(binned, 8)
        transposed = tf.cooccurrence(binned.T, 8)

        assert transposed.matrix == pytest.approx(g.matrix)
        assert tf.glcm_features(transposed) == \
            pytest.approx(tf.glcm_features(g), rel=1e-9, abs=1e-9)

    def test_default_texture_params(self):
        params = tf.TextureParams()

        assert params.levels == 32
        assert params.offsets == ((1, 0), (0, 1), (1, 1), (1, -1))
        with pytest.raises(ConfigError):
            tf.TextureParams(hu_lo=400, hu_hi=-1000)


class TestSteerable(object):
    @pytest.fixture
    def fixture_ramp_patch(self):
        # I = 7 x - 3 y in mm on a 0.5 mm grid
        y, x = np.mgrid[0:21, 0:21].astype(np.float64)
        pixels = 7 * 0.5 * x - 3 * 0.5 * y

        yield make_patch(pixels, spacing=(0.5, 0.5))

    def test_ramp_gradient(self, fixture_ramp_patch):
        rx, ry = tf.derivative_responses(fixture_ramp_patch.pixels, 1.5,
                                         fixture_ramp_patch.spacing)

        assert rx[10, 10] == pytest.approx(7.0)
        assert ry[10, 10] == pytest.approx(-3.0)

    def test_steering_is_directional_derivative(self, fixture_ramp_patch):
        rx, ry = tf.derivative_responses(fixture_ramp_patch.pixels, 1.5,
                                         fixture_ramp_patch.spacing)
        theta = np.deg2rad(60)

        assert tf.steer(rx, ry, 0) == pytest.approx(rx)
        assert tf.steer(rx, ry, 90) == pytest.approx(ry, abs=1e-9)
        assert tf.steer(rx, ry, 60)[10, 10] == \
            pytest.approx(7 * np.cos(theta) - 3 * np.sin(theta))

    def test_vertical_edge_peaks_at_zero_degrees(self):
        pixels = np.full((9, 9), -800.0)
        pixels[:, 5:] = 0.0
        actual = tf.steerable_features(make_patch(pixels))
        centre = actual.reshape(6, 9, 9)[:, 4, 4]

        assert np.argmax(np.abs(centre)) == 0
        assert centre[0] > 0
        assert centre[3] == pytest.approx(0.0, abs=1e-9)

    @given(theta=st.floats(0.0, 360.0),
           coefficients=st.tuples(*[st.integers(-9, 9)] * 5))
    def test_steering_matches_gradient_of_quadratic(self, theta,
                                                    coefficients):
        a, b, c, d, e = coefficients
        y, x = np.mgrid[-10:11, -10:11].astype(np.float64)
        x_mm, y_mm = 0.5 * x, 0.8 * y
        pixels = a * x_mm ** 2 + b * y_mm ** 2 + c * x_mm * y_mm \
            + d * x_mm + e * y_mm
        rx, ry = tf.derivative_responses(pixels, 1.5, (0.5, 0.8))
        actual = tf.steer(rx, ry, theta)
        gx = 2 * a * x_mm + c * y_mm + d
        gy = 2 * b * y_mm + c * x_mm + e
        angle = np.deg2rad(theta)
        expected = np.cos(angle) * gx + np.sin(angle) * gy
        inner = (slice(5, 16), slice(5, 16))

        assert actual[inner] == pytest.approx(expected[inner], abs=1e-9)

    def test_vector_layout(self):
        rng = np.random.default_rng(1)
        patch = make_patch(rng.normal(-800, 50, (9, 9)).round())
        actual = tf.steerable_features(patch)
        rx, ry = tf.derivative_responses(patch.pixels)

        assert actual.shape == (6 * 81,)
        assert actual[:81] == pytest.approx(rx.ravel())
        assert actual[3 * 81:4 * 81] == pytest.approx(ry.ravel(), abs=1e-9)

    def test_names(self):
        names = tf.wavelet_feature_names(9)

        assert len(names) == 6 * 81
        assert names[0] == "wavelet_0_0_0"
        assert names[81] == "wavelet_30_0_0"
        assert len(set(names)) == len(names)
