"""Ball-scale map of the lung parenchyma and candidate generation.

The scale of a lung voxel is the radius of the largest digital ball
around it in which every shell is homogeneous: at least a fraction
``fraction_threshold`` of the shell voxels lie within ``intensity_tol``
HU of the centre voxel. Tree-in-bud structures are small, so only
voxels of low scale become candidates for feature extraction.
"""
import logging
from dataclasses import dataclass

import numpy as np
import numba as nb

from tibcad.exceptions import ConfigError
from tibcad.volio import Mask, ScaleMap, check_same_dims

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BScaleParams:
    intensity_tol: float = 150.0
    fraction_threshold: float = 0.85
    r_max: int = 8
    candidate_max_scale: int = 3
    use_3d: bool = False

    def __post_init__(self):
        if not self.intensity_tol > 0:
            raise ConfigError(f"intensity_tol must be positive, got "
                              f"{self.intensity_tol}")
        if not 0.0 < self.fraction_threshold <= 1.0:
            raise ConfigError("fraction_threshold must lie in (0, 1]")
        if not 1 <= self.r_max <= 255:
            raise ConfigError(f"r_max must lie in [1, 255], got {self.r_max}")
        if not 1 <= self.candidate_max_scale <= self.r_max:
            raise ConfigError(f"candidate_max_scale must lie in [1, r_max = "
                              f"{self.r_max}], got "
                              f"{self.candidate_max_scale}")


def shell_offsets(r_max, use_3d=False):
    """Digital shells of radius 1..r_max around the origin

    Shell rho holds the offsets at Euclidean voxel distance d with
    rho - 1 < d <= rho.

    Returns:
    --------
    offsets : np.array(int64)
        (k, 3) offsets (dz, dy, dx), grouped by shell
    starts : np.array(int64)
        Shell rho spans offsets[starts[rho - 1]:starts[rho]]
    """
    span = np.arange(-r_max, r_max + 1)
    dz = span if use_3d else np.zeros(1, dtype=span.dtype)
    grid = np.stack(np.meshgrid(dz, span, span, indexing="ij"),
                    axis=-1).reshape(-1, 3)
    distance = np.sqrt((grid ** 2).sum(axis=1))
    shell = np.ceil(distance).astype(np.int64)
    keep = (shell >= 1) & (shell <= r_max)
    grid, shell = grid[keep], shell[keep]

    order = np.lexsort((grid[:, 2], grid[:, 1], grid[:, 0], shell))
    offsets = np.ascontiguousarray(grid[order], dtype=np.int64)
    starts = np.searchsorted(shell[order], np.arange(1, r_max + 2))

    return offsets, starts.astype(np.int64)


@nb.njit(cache=True)
def _ball_scale(image, lung, offsets, starts, tol, fraction, r_max):
    nz, ny, nx = image.shape
    scale = np.zeros(image.shape, dtype=np.uint8)
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not lung[z, y, x]:
                    continue
                centre = image[z, y, x]
                radius = 0
                for rho in range(1, r_max + 1):
                    total = 0
                    homogeneous = 0
                    for k in range(starts[rho - 1], starts[rho]):
                        zz = z + offsets[k, 0]
                        yy = y + offsets[k, 1]
                        xx = x + offsets[k, 2]
                        if 0 <= zz < nz and 0 <= yy < ny and 0 <= xx < nx:
                            total += 1
                            if abs(image[zz, yy, xx] - centre) <= tol:
                                homogeneous += 1
                    # Shells entirely outside the volume do not stop growth
                    if total > 0 and homogeneous / total < fraction:
                        break
                    radius = rho
                scale[z, y, x] = max(radius, 1)
    return scale


def bscale_map(volume, lung_mask, params=None):
    """Computes the ball-scale of every lung voxel

    Parameters:
    -----------
    volume : Volume
    lung_mask : Mask
    params : BScaleParams (optional)

    Returns:
    --------
    scale_map : ScaleMap
        Values in [1, r_max] inside the lungs, 0 outside
    """
    params = params or BScaleParams()
    check_same_dims(volume, lung_mask, "lung mask")
    offsets, starts = shell_offsets(params.r_max, params.use_3d)
    scale = _ball_scale(volume.voxels.astype(np.float64),
                        np.ascontiguousarray(lung_mask.bits),
                        offsets, starts, float(params.intensity_tol),
                        float(params.fraction_threshold), int(params.r_max))
    logger.debug("Ball-scale histogram %s",
                 np.bincount(scale.ravel(), minlength=params.r_max + 1))

    return ScaleMap(volume.dims, scale, volume.spacing)


def candidates(scale_map, params=None):
    """Lung voxels of small scale, 1 <= scale <= candidate_max_scale"""
    params = params or BScaleParams()
    scale = scale_map.scale
    bits = (scale >= 1) & (scale <= params.candidate_max_scale)

    return Mask(scale_map.dims, bits, scale_map.spacing)


def candidate_recall(candidate_mask, tib_mask):
    """Fraction of ground-truth TIB voxels kept as candidates; 1 when
    there is no TIB"""
    n_tib = tib_mask.count()
    if n_tib == 0:
        return 1.0
    return float(np.count_nonzero(candidate_mask.bits & tib_mask.bits)
                 / n_tib)


def lung_discard_fraction(candidate_mask, lung_mask):
    """Fraction of lung voxels the candidate filter discards"""
    n_lung = lung_mask.count()
    if n_lung == 0:
        return 0.0
    kept = np.count_nonzero(candidate_mask.bits & lung_mask.bits)
    return 1.0 - kept / n_lung
