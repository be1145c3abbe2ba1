"""Texture features: gray-level co-occurrence statistics and steerable
derivative-of-Gaussian responses."""
from dataclasses import dataclass

import numpy as np

from tibcad import general as gen
from tibcad.discretization import GrayLevels
from tibcad.exceptions import ConfigError, DataError, NoPairsError
from tibcad.shapefeat import separable_filter, gaussian_kernels

DEFAULT_OFFSETS = ((1, 0), (0, 1), (1, 1), (1, -1))

GLCM_FEATURE_NAMES = ("autocorrelation", "contrast", "correlation",
                      "cluster_prominence", "cluster_shade",
                      "dissimilarity", "energy", "entropy", "homogeneity",
                      "maximum_probability", "variance", "sum_average",
                      "sum_variance", "sum_entropy", "difference_variance",
                      "difference_entropy", "imc1", "imc2")

ORIENTATIONS_DEG = (0, 30, 60, 90, 120, 150)


@dataclass(frozen=True)
class TextureParams:
    levels: int = 32
    hu_lo: float = -1000.0
    hu_hi: float = 400.0
    offsets: tuple = DEFAULT_OFFSETS
    wavelet_sigma: float = 1.5

    def __post_init__(self):
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if not self.hu_hi > self.hu_lo:
            raise ConfigError(f"empty HU window [{self.hu_lo}, "
                              f"{self.hu_hi}]")
        if len(self.offsets) == 0:
            raise ConfigError("at least one GLCM offset is required")
        if not self.wavelet_sigma > 0:
            raise ConfigError("wavelet_sigma must be positive")


@dataclass(frozen=True, eq=False)
class Glcm:
    levels: int
    matrix: np.ndarray
    offsets: tuple = DEFAULT_OFFSETS
    hu_window: tuple = None


def quantize(pixels, levels=32, hu_lo=-1000.0, hu_hi=400.0):
    """Clamps to the HU window and bins uniformly into levels gray
    levels"""
    return GrayLevels(hu_lo, hu_hi, levels).digitize(pixels)


def _pairs(binned, dx, dy):
    """Gray levels of every pixel (y, x) and its neighbour (y+dy, x+dx)
    inside the image"""
    h, w = binned.shape
    first = binned[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
    second = binned[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)]
    return first.ravel(), second.ravel()


def cooccurrence(binned, levels, offsets=DEFAULT_OFFSETS):
    """Symmetric, normalized co-occurrence matrix of an already binned
    image

    Parameters:
    -----------
    binned : np.array(int)
        2D gray levels in [0, levels)
    levels : int
        Number of gray levels
    offsets : tuple(tuple(int)) (optional)
        (dx, dy) displacements; each is counted together with its
        negation and all are pooled into one matrix

    Returns:
    --------
    glcm : Glcm
    """
    if levels < 2:
        raise ConfigError(f"levels must be >= 2, got {levels}")
    if len(offsets) == 0:
        raise ConfigError("at least one GLCM offset is required")
    binned = np.asarray(binned)
    if binned.ndim != 2:
        raise DataError("co-occurrence needs a 2D image")
    if binned.size and (binned.min() < 0 or binned.max() >= levels):
        raise DataError(f"gray levels must lie in [0, {levels})")

    counts = np.zeros((levels, levels), dtype=np.float64)
    for dx, dy in offsets:
        first, second = _pairs(binned, dx, dy)
        counts += gen.count_and_convert_pairs_to_matrix(first, second,
                                                        levels)
    if counts.sum() == 0:
        raise NoPairsError(f"no pixel pairs in a {binned.shape} image for "
                           f"offsets {tuple(offsets)}")
    counts = counts + counts.T

    return Glcm(levels=int(levels), matrix=gen.normalize(counts),
                offsets=tuple(tuple(o) for o in offsets))


def glcm(patch, levels=32, offsets=DEFAULT_OFFSETS, hu_lo=-1000.0,
         hu_hi=400.0):
    """Co-occurrence matrix of a patch quantized over [hu_lo, hu_hi]"""
    g = cooccurrence(quantize(patch.pixels, levels, hu_lo, hu_hi),
                     levels, offsets)
    return Glcm(g.levels, g.matrix, g.offsets, (float(hu_lo), float(hu_hi)))


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def glcm_features(g):
    """The 18 co-occurrence statistics, ordered as GLCM_FEATURE_NAMES

    Gray levels are numbered from 1. Logarithms are natural with
    0 log 0 = 0. Correlation of a matrix without spread in either
    marginal is 1, IMC1 is 0 when both marginal entropies vanish.
    """
    p = g.matrix
    L = g.levels
    levels = np.arange(1, L + 1, dtype=np.float64)
    i = levels[:, None]
    j = levels[None, :]

    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x = np.sum(levels * px)
    mu_y = np.sum(levels * py)
    sigma_x = np.sqrt(np.sum((levels - mu_x) ** 2 * px))
    sigma_y = np.sqrt(np.sum((levels - mu_y) ** 2 * py))

    autocorrelation = np.sum(i * j * p)
    contrast = np.sum((i - j) ** 2 * p)
    if sigma_x * sigma_y < np.finfo(np.float64).eps:
        correlation = 1.0
    else:
        correlation = np.sum((i - mu_x) * (j - mu_y) * p) \
            / (sigma_x * sigma_y)
    cluster = i + j - mu_x - mu_y
    cluster_prominence = np.sum(cluster ** 4 * p)
    cluster_shade = np.sum(cluster ** 3 * p)
    dissimilarity = np.sum(np.abs(i - j) * p)
    energy = np.sum(p ** 2)
    entropy = _entropy(p)
    homogeneity = np.sum(p / (1 + (i - j) ** 2))
    maximum_probability = p.max()
    variance = np.sum((i - mu_x) ** 2 * p)

    # p_{x+y}(k) for k = 2..2L and p_{x-y}(k) for k = 0..L-1
    k_sum = np.arange(2, 2 * L + 1, dtype=np.float64)
    p_sum = np.bincount((i + j).astype(np.int64).ravel() - 2,
                        weights=p.ravel(), minlength=2 * L - 1)
    k_diff = np.arange(0, L, dtype=np.float64)
    p_diff = np.bincount(np.abs(i - j).astype(np.int64).ravel(),
                         weights=p.ravel(), minlength=L)

    sum_average = np.sum(k_sum * p_sum)
    sum_variance = np.sum((k_sum - sum_average) ** 2 * p_sum)
    sum_entropy = _entropy(p_sum)
    difference_average = np.sum(k_diff * p_diff)
    difference_variance = np.sum((k_diff - difference_average) ** 2 * p_diff)
    difference_entropy = _entropy(p_diff)

    hx = _entropy(px)
    hy = _entropy(py)
    outer = px[:, None] * py[None, :]
    nonzero = p > 0
    hxy1 = float(-np.sum(p[nonzero] * np.log(outer[nonzero])))
    hxy2 = _entropy(outer)
    imc1 = (entropy - hxy1) / max(hx, hy) if max(hx, hy) > 0 else 0.0
    imc2 = np.sqrt(max(0.0, 1 - np.exp(-2 * (hxy2 - entropy))))

    return np.array([autocorrelation, contrast, correlation,
                     cluster_prominence, cluster_shade, dissimilarity,
                     energy, entropy, homogeneity, maximum_probability,
                     variance, sum_average, sum_variance, sum_entropy,
                     difference_variance, difference_entropy, imc1, imc2],
                    dtype=np.float64)


def derivative_responses(pixels, sigma=1.5, spacing=(1.0, 1.0)):
    """First derivative of Gaussian responses Rx, Ry in HU per mm"""
    image = np.asarray(pixels, dtype=np.float64)
    g0, g1, _ = gaussian_kernels(sigma)
    rx = separable_filter(image, g1, g0) / spacing[0]
    ry = separable_filter(image, g0, g1) / spacing[1]
    return rx, ry


def steer(rx, ry, theta_deg):
    """Response at orientation theta from the two basis responses"""
    theta = np.deg2rad(theta_deg)
    return np.cos(theta) * rx + np.sin(theta) * ry


def steerable_features(patch, sigma=1.5):
    """Steered first-derivative responses at 0, 30, ..., 150 degrees,
    concatenated orientation-major into a 6 n^2 vector"""
    rx, ry = derivative_responses(patch.pixels, sigma, patch.spacing)
    return np.concatenate([steer(rx, ry, theta).ravel()
                           for theta in ORIENTATIONS_DEG])


def wavelet_feature_names(n):
    return tuple(f"wavelet_{theta}_{y}_{x}"
                 for theta in ORIENTATIONS_DEG
                 for y in range(n) for x in range(n))
