"""Lung segmentation by fuzzy connectedness from automatically placed
seeds.

Connectivity of a voxel is the strength of the best path to any seed,
where the strength of a path is its weakest affinity link. It is
computed by best-first propagation from the seeds (a max-heap keyed on
strength, ties resolved by voxel index).
"""
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from tibcad.exceptions import ConfigError, DataError, SegmentationError
from tibcad.volio import Mask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Affinity:
    """Homogeneity x object-feature affinity between adjacent voxels

    Parameters:
    -----------
    sigma_intensity : float (optional)
        HU scale of the homogeneity kernel; defaults to 100
    sigma_object : float (optional)
        HU scale of the object-feature kernel; defaults to 200
    mean_object : float (optional)
        Expected lung intensity in HU; defaults to -750
    """
    sigma_intensity: float = 100.0
    sigma_object: float = 200.0
    mean_object: float = -750.0

    def __post_init__(self):
        if not (self.sigma_intensity > 0 and self.sigma_object > 0):
            raise ConfigError("Provided affinity sigmas should be positive, "
                              f"got {self.sigma_intensity} and "
                              f"{self.sigma_object}")

    def __call__(self, a, b):
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        homogeneity = np.exp(-(a - b) ** 2 / (2 * self.sigma_intensity ** 2))
        objectness = np.exp(-((a + b) / 2 - self.mean_object) ** 2
                            / (2 * self.sigma_object ** 2))
        return homogeneity * objectness


@dataclass(frozen=True)
class SegmentationParams:
    affinity: Affinity = field(default_factory=Affinity)
    theta: float = 0.5
    adjacency: int = 6
    air_threshold: float = -400.0
    seed_erosion: int = 2
    fill_holes: bool = True

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if self.adjacency not in (6, 26):
            raise ConfigError(f"adjacency must be 6 or 26, "
                              f"got {self.adjacency}")
        if self.seed_erosion < 0:
            raise ConfigError("seed_erosion must be >= 0")


@dataclass(frozen=True, eq=False)
class ConnectivityMap:
    """Per-voxel connectivity strength in [0, 1] relative to a seed set"""
    dims: tuple
    strength: np.ndarray


def neighbour_offsets(adjacency=6):
    """Half of the (dz, dy, dx) neighbourhood; the other half is the
    negation"""
    if adjacency == 6:
        return [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    if adjacency == 26:
        offsets = []
        for dz in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if (dz, dy, dx) > (0, 0, 0):
                        offsets.append((dz, dy, dx))
        return offsets
    raise ConfigError(f"adjacency must be 6 or 26, got {adjacency}")


def _overlap_slices(offset, shape):
    """Slices selecting voxels v (src) and v + offset (dst) for every v
    whose neighbour lies inside the volume"""
    src = tuple(slice(max(0, -d), n - max(0, d))
                for d, n in zip(offset, shape))
    dst = tuple(slice(max(0, d), n - max(0, -d))
                for d, n in zip(offset, shape))
    return src, dst


def _link_affinities(image, aff, offset):
    """Affinity of every voxel with its neighbour at +offset, -1 where
    the neighbour lies outside the volume"""
    src, dst = _overlap_slices(offset, image.shape)
    links = np.full(image.shape, -1.0)
    links[src] = aff(image[src], image[dst])
    return links


def _as_seed_indices(seeds, shape):
    seeds = np.unique(np.asarray(seeds, dtype=np.int64).ravel())
    if seeds.size == 0:
        raise DataError("seed set is empty")
    if seeds[0] < 0 or seeds[-1] >= np.prod(shape):
        raise DataError("seed index outside the volume")
    return seeds


def connectivity_map(volume, seeds, aff=None, adjacency=6):
    """Computes the fuzzy connectivity of every voxel to the seed set

    Parameters:
    -----------
    volume : Volume
    seeds : np.array(int)
        Flat indices into the (nz, ny, nx) voxel array
    aff : Affinity (optional)
        Affinity functional; defaults to Affinity()
    adjacency : int (optional)
        6 or 26; defaults to 6

    Returns:
    --------
    cmap : ConnectivityMap
    """
    aff = aff or Affinity()
    image = volume.voxels.astype(np.float64)
    shape = image.shape
    seeds = _as_seed_indices(seeds, shape)

    # Flat-index steps with forward and backward link affinities, as
    # python lists since the propagation loop indexes them one by one.
    links = []
    for offset in neighbour_offsets(adjacency):
        step = offset[0] * shape[1] * shape[2] + offset[1] * shape[2] \
            + offset[2]
        forward = _link_affinities(image, aff, offset)
        src, dst = _overlap_slices(offset, shape)
        backward = np.full(shape, -1.0)
        backward[dst] = forward[src]
        links.append((step, forward.ravel().tolist(),
                      backward.ravel().tolist()))

    size = image.size
    strength = [0.0] * size
    done = [False] * size
    heap = []
    for s in seeds.tolist():
        strength[s] = 1.0
        heap.append((-1.0, s))
    heapq.heapify(heap)

    while heap:
        neg, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        s = -neg
        for step, forward, backward in links:
            a = forward[v]
            if a >= 0.0:
                u = v + step
                if not done[u]:
                    candidate = s if s < a else a
                    if candidate > strength[u]:
                        strength[u] = candidate
                        heapq.heappush(heap, (-candidate, u))
            a = backward[v]
            if a >= 0.0:
                u = v - step
                if not done[u]:
                    candidate = s if s < a else a
                    if candidate > strength[u]:
                        strength[u] = candidate
                        heapq.heappush(heap, (-candidate, u))

    return ConnectivityMap(volume.dims,
                           np.array(strength, dtype=np.float64)
                           .reshape(shape))


def fc_segment(volume, seeds, aff=None, theta=0.5, adjacency=6):
    """Fuzzy connectedness object: voxels whose connectivity to the seeds
    is at least theta

    Returns:
    --------
    mask : Mask
    """
    if not 0.0 <= theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {theta}")
    cmap = connectivity_map(volume, seeds, aff, adjacency)

    return Mask.like(volume, cmap.strength >= theta)


def auto_seeds(volume, params=None):
    """Places one seed set per lung

    Air voxels (below params.air_threshold) are grouped in 6-connected
    components; components touching the in-plane border belong to the
    air around the body. The two largest remaining components are the
    lungs. Seeds are their eroded cores.

    Returns:
    --------
    left, right : np.array(int)
        Flat voxel indices. Radiological convention: the patient's right
        lung is the one with the smaller centroid x.
    """
    params = params or SegmentationParams()
    air = volume.voxels < params.air_threshold
    labels, n_labels = ndimage.label(air)

    border = np.unique(np.concatenate([labels[:, 0, :].ravel(),
                                       labels[:, -1, :].ravel(),
                                       labels[:, :, 0].ravel(),
                                       labels[:, :, -1].ravel()]))
    sizes = np.bincount(labels.ravel(), minlength=n_labels + 1)
    interior = [label for label in range(1, n_labels + 1)
                if label not in set(border.tolist())]
    if len(interior) < 2:
        raise SegmentationError(
            f"found {len(interior)} interior air component(s); two lungs "
            "are required")

    interior.sort(key=lambda label: (-sizes[label], label))
    seed_sets = []
    for label in interior[:2]:
        component = labels == label
        core = component
        if params.seed_erosion > 0:
            eroded = ndimage.binary_erosion(component,
                                            iterations=params.seed_erosion)
            if eroded.any():
                core = eroded
        centroid_x = np.nonzero(component)[2].mean()
        seed_sets.append((centroid_x, np.flatnonzero(core)))

    seed_sets.sort(key=lambda item: item[0])
    (_, right), (_, left) = seed_sets
    logger.debug("Placed %d left and %d right seeds", left.size, right.size)

    return left, right


def segment_lungs(volume, params=None):
    """Segments both lungs into a single mask

    Fuzzy connectedness from the union of both seed sets equals the
    union of two separate runs. Holes are filled slice by slice so that
    dense structures inside the parenchyma stay part of the lungs.

    Returns:
    --------
    lungs : Mask
    left, right : np.array(int)
        Seed sets used
    """
    params = params or SegmentationParams()
    left, right = auto_seeds(volume, params)
    mask = fc_segment(volume, np.concatenate([left, right]),
                      params.affinity, params.theta, params.adjacency)
    bits = mask.bits
    if params.fill_holes:
        bits = np.stack([ndimage.binary_fill_holes(s) for s in bits])
    logger.info("Segmented %d lung voxels", int(np.count_nonzero(bits)))

    return Mask.like(volume, bits), left, right
