"""Curvature-based shape features of axial patches.

The intensity surface of a patch is differentiated with separable
sampled Gaussian derivative kernels. The eigenvalues of its Hessian act
as principal curvatures, from which mean curvature H, Gaussian
curvature K and Willmore energy density W = H^2 - K follow.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from tibcad.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

SHAPE_FEATURE_NAMES = ("willmore_energy", "mean_curvature",
                       "gaussian_curvature", "shape_index", "elongation",
                       "shear", "compactness", "distortion")


@dataclass(frozen=True)
class ShapeParams:
    sigma: float = 1.5
    gate_percentiles: tuple = (5.0, 95.0)
    epsilon: float = 1e-6
    ratio_clamp: float = 100.0

    def __post_init__(self):
        lo, hi = self.gate_percentiles
        if not 0.0 <= lo <= hi <= 100.0:
            raise ConfigError("gate_percentiles must satisfy "
                              f"0 <= lo <= hi <= 100, got {lo}, {hi}")
        if not (self.epsilon > 0 and self.ratio_clamp > 0):
            raise ConfigError("epsilon and ratio_clamp must be positive")


@dataclass(frozen=True, eq=False)
class HessianField:
    """Principal curvatures per pixel, ordered |k1| >= |k2|"""
    k1: np.ndarray
    k2: np.ndarray
    sigma: float
    pixel_area: float = 1.0


@dataclass(frozen=True, eq=False)
class CurvatureMaps:
    H: np.ndarray
    K: np.ndarray
    W: np.ndarray
    pixel_area: float = 1.0


@dataclass(frozen=True)
class EnergyGate:
    """Willmore-energy band outside of which patches are skipped

    Parameters:
    -----------
    w_lo, w_hi : float
        Accepted band of the energy density W
    candidates : Mask (optional)
        Patches without any candidate voxel are skipped as well
    enabled : bool (optional)
        When False every patch is processed; defaults to True
    """
    w_lo: float = 0.0
    w_hi: float = np.inf
    candidates: object = None
    enabled: bool = True

    def __post_init__(self):
        if not self.w_lo <= self.w_hi:
            raise ConfigError(f"empty energy band [{self.w_lo}, {self.w_hi}]")


def gaussian_kernels(sigma):
    """Sampled Gaussian and derivative kernels of radius ceil(3 sigma)

    The first-derivative kernel is scaled so that its response to a
    linear ramp is exactly the slope. The second-derivative kernel has
    zero sum and responds with exactly 2 to x^2, so the Hessian of any
    quadratic or cubic surface is recovered without discretization bias.
    Kernels are used with correlation, not convolution.

    Returns:
    --------
    g0, g1, g2 : np.array
        Smoothing, first and second derivative kernels
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise ConfigError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-x * x / (2 * sigma * sigma))
    g0 = g / g.sum()

    d1 = x * g0
    g1 = d1 / np.sum(x * d1)

    m2 = np.sum(x ** 2 * g0)
    m4 = np.sum(x ** 4 * g0)
    if m4 - m2 * m2 <= 1e-12:
        raise ConfigError(f"sigma {sigma} is too small to sample a second "
                          "derivative")
    g2 = 2.0 / (m4 - m2 * m2) * (x * x - m2) * g0

    return g0, g1, g2


def separable_filter(image, row_kernel, column_kernel):
    """Correlates along x with row_kernel, then along y with
    column_kernel"""
    out = correlate1d(image, row_kernel, axis=1, mode="reflect")
    return correlate1d(out, column_kernel, axis=0, mode="reflect")


def hessian_components(pixels, sigma, spacing=(1.0, 1.0)):
    """Second derivatives Ixx, Iyy, Ixy in HU per mm^2

    Intensities are taken relative to the centre pixel, which leaves the
    derivatives unchanged but makes them exactly invariant to constant
    offsets.
    """
    image = np.asarray(pixels, dtype=np.float64)
    centre = image[image.shape[0] // 2, image.shape[1] // 2]
    image = image - centre
    g0, g1, g2 = gaussian_kernels(sigma)
    sx, sy = spacing
    ixx = separable_filter(image, g2, g0) / (sx * sx)
    iyy = correlate1d(correlate1d(image, g2, axis=0, mode="reflect"),
                      g0, axis=1, mode="reflect") / (sy * sy)
    ixy = separable_filter(image, g1, g1) / (sx * sy)

    return ixx, iyy, ixy


def hessian_eigen(patch, sigma=1.5):
    """Principal curvatures of a patch's intensity surface

    Parameters:
    -----------
    patch : Patch
    sigma : float (optional)
        Gaussian scale in pixels; defaults to 1.5

    Returns:
    --------
    field : HessianField
    """
    ixx, iyy, ixy = hessian_components(patch.pixels, sigma, patch.spacing)
    half_trace = (ixx + iyy) / 2
    root = np.sqrt(((ixx - iyy) / 2) ** 2 + ixy ** 2)
    lam_a = half_trace + root
    lam_b = half_trace - root
    a_first = np.abs(lam_a) >= np.abs(lam_b)

    return HessianField(k1=np.where(a_first, lam_a, lam_b),
                        k2=np.where(a_first, lam_b, lam_a),
                        sigma=float(sigma),
                        pixel_area=patch.pixel_area)


def curvature_maps(field):
    """Mean curvature, Gaussian curvature and Willmore energy density

    W is evaluated as ((k1 - k2) / 2)^2, which equals H^2 - K and cannot
    drop below zero through rounding.
    """
    H = (field.k1 + field.k2) / 2
    K = field.k1 * field.k2
    W = ((field.k1 - field.k2) / 2) ** 2

    return CurvatureMaps(H=H, K=K, W=W, pixel_area=field.pixel_area)


def willmore_energy(maps, region):
    """Integral of W over a pixel region, scaled by pixel area"""
    region = np.asarray(region, dtype=bool)
    if region.shape != maps.W.shape:
        raise DataError(f"region of shape {region.shape} does not match "
                        f"maps of shape {maps.W.shape}")
    if not region.any():
        raise DataError("Willmore energy of an empty region")

    return float(np.sum(maps.W[region]) * maps.pixel_area)


def shape_index(k1, k2):
    """(2 / pi) arctan((k2 + k1) / (k2 - k1)), in [-1, 1]

    Umbilic points (k1 == k2) map to sign(k1): +1 for caps, -1 for cups
    and 0 for flat points.
    """
    k1 = np.asarray(k1, dtype=np.float64)
    k2 = np.asarray(k2, dtype=np.float64)
    umbilic = k1 == k2
    with np.errstate(divide="ignore", invalid="ignore"):
        si = 2 / np.pi * np.arctan((k2 + k1) / (k2 - k1))

    return np.where(umbilic, np.sign(k1), si)


def _floored(denominator, epsilon):
    """Replaces |d| < epsilon by +-epsilon, sign of zero taken as +"""
    small = np.abs(denominator) < epsilon
    return np.where(small, np.where(denominator < 0, -epsilon, epsilon),
                    denominator)


def fit_energy_gate(w_values, percentiles=(5.0, 95.0), candidates=None):
    """Energy band spanned by the given percentiles of W sampled at known
    TIB pixels"""
    w_values = np.asarray(w_values, dtype=np.float64).ravel()
    if w_values.size == 0:
        raise DataError("no TIB pixels to fit the energy gate on")
    w_lo, w_hi = np.percentile(w_values, percentiles)
    logger.info("Energy gate fitted on %d pixels: [%g, %g]",
                w_values.size, w_lo, w_hi)

    return EnergyGate(float(w_lo), float(w_hi), candidates, True)


def shape_vector(patch, field, maps, gate=None, params=None):
    """Eight curvature features of a patch, or None when the gate skips it

    Parameters:
    -----------
    patch : Patch
    field : HessianField
        Curvatures of the patch
    maps : CurvatureMaps
        Curvature maps of the patch
    gate : EnergyGate (optional)
        Skipping rule and pixel band; defaults to an open band
    params : ShapeParams (optional)

    Returns:
    --------
    features : np.array or None
        Ordered as SHAPE_FEATURE_NAMES. Aggregates run over the pixels
        whose W lies inside the gate band; if gating is disabled and no
        pixel lies inside the band, over all pixels.
    """
    gate = gate or EnergyGate()
    params = params or ShapeParams()
    in_band = (maps.W >= gate.w_lo) & (maps.W <= gate.w_hi)

    if gate.enabled:
        if gate.candidates is not None and \
                not patch.window(gate.candidates.bits).any():
            return None
        if not in_band.any():
            return None
    region = in_band if in_band.any() else np.ones_like(in_band)

    k1 = field.k1[region]
    k2 = field.k2[region]
    eps, clamp = params.epsilon, params.ratio_clamp
    elongation = np.clip(k1 / _floored(k2, eps), -clamp, clamp)
    compactness = np.clip(1.0 / _floored(k1 * k2, eps), -clamp, clamp)

    return np.array([willmore_energy(maps, region),
                     maps.H[region].mean(),
                     maps.K[region].mean(),
                     shape_index(k1, k2).mean(),
                     elongation.mean(),
                     np.mean((k1 - k2) ** 2 / 4),
                     compactness.mean(),
                     np.mean(k1 - k2)])
