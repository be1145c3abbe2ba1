"""Synthetic chest volumes with known tree-in-bud ground truth.

A phantom is an elliptic body cylinder holding two ellipsoidal lungs.
Inside the lungs thick decoy vessel trees are drawn first, then the TIB
clusters: short random branching tubes (the budding tree) with
micro-nodules attached. Every structure lies in one axial slice, which
for 5 mm slices is how such small structures show up. Generation is a
pure function of the spec: the same seed gives a bit-identical volume.
"""
import logging
from dataclasses import dataclass, fields, replace

import numpy as np
from scipy import ndimage

from tibcad import general as gen
from tibcad.exceptions import ConfigError, MissingFileError, PlacementError
from tibcad.volio import Mask, Volume, write_mask, write_volume

logger = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000

# 4-connected cross within one slice
_IN_PLANE = np.zeros((1, 3, 3), dtype=bool)
_IN_PLANE[0, 1, :] = _IN_PLANE[0, :, 1] = True


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry, intensities and structure counts of a phantom

    Relative sizes (semi axes, lung centres) are fractions of the voxel
    counts; structure sizes are in mm. Ranges are (low, high) pairs from
    which every structure draws uniformly.
    """
    dims: tuple = (64, 64, 24)
    spacing: tuple = (0.7, 0.7, 5.0)
    air_hu: float = -1000.0
    body_hu: float = 0.0
    lung_hu: float = -800.0
    noise_sigma: float = 20.0
    body_semi_axes: tuple = (0.48, 0.44)
    lung_semi_axes: tuple = (0.20, 0.38, 0.60)
    lung_centres_x: tuple = (0.285, 0.715)
    body_wall_px: int = 3
    n_tib_clusters: int = 12
    branch_segments: tuple = (3, 6)
    branch_thickness_mm: tuple = (0.6, 1.2)
    branch_length_mm: tuple = (1.5, 3.5)
    nodules_per_cluster: tuple = (4, 10)
    nodule_diameter_mm: tuple = (2.0, 3.0)
    cluster_contrast_hu: float = 600.0
    n_vessels: int = 8
    vessel_thickness_mm: tuple = (1.5, 2.5)
    vessel_length_mm: tuple = (6.0, 14.0)
    vessel_contrast_hu: float = 840.0
    seed: int = 42

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigError(f"Provided dims {self.dims} are invalid")
        if len(self.spacing) != 3 or not min(self.spacing) > 0:
            raise ConfigError(f"Provided spacing {self.spacing} is invalid")
        for name in ("n_tib_clusters", "n_vessels", "body_wall_px"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("branch_segments", "branch_thickness_mm",
                     "branch_length_mm", "nodules_per_cluster",
                     "nodule_diameter_mm", "vessel_thickness_mm",
                     "vessel_length_mm"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 <= low <= high, "
                                  f"got {(lo, hi)}")
        if self.branch_segments[0] < 1:
            raise ConfigError("a cluster needs at least one branch segment")
        lo, hi = self.nodule_diameter_mm
        if lo < 2.0 or hi > 3.0:
            raise ConfigError("micro-nodule diameters must lie in [2, 3] mm, "
                              f"got {(lo, hi)}")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be >= 0")

    @property
    def in_plane_spacing(self):
        return self.spacing[0], self.spacing[1]


def _pixel_centres(ny, nx, spacing):
    """x and y coordinates in mm of every pixel centre of a slice"""
    y, x = np.mgrid[0:ny, 0:nx]
    return x * spacing[0], y * spacing[1]


def _tube(coords, start, end, radius, min_radius=0.0):
    """Pixels within radius of the segment start-end

    With min_radius at half a pixel diagonal even the thinnest tube stays
    8-connected.
    """
    xs, ys = coords
    radius = max(radius, min_radius)
    d = np.subtract(end, start)
    length2 = float(d @ d)
    if length2 > 0:
        t = ((xs - start[0]) * d[0] + (ys - start[1]) * d[1]) / length2
        t = np.clip(t, 0.0, 1.0)
    else:
        t = np.zeros_like(xs, dtype=np.float64)
    px = start[0] + t * d[0]
    py = start[1] + t * d[1]
    return (xs - px) ** 2 + (ys - py) ** 2 <= radius ** 2


def _disc(coords, centre, radius):
    xs, ys = coords
    return (xs - centre[0]) ** 2 + (ys - centre[1]) ** 2 <= radius ** 2


def _random_direction(rng):
    angle = rng.uniform(0.0, 2 * np.pi)
    return np.array([np.cos(angle), np.sin(angle)])


def _draw_cluster(rng, spec, coords, root):
    """One TIB cluster in a slice: branching tubes plus micro-nodules"""
    half_diagonal = 0.5 * np.hypot(*spec.in_plane_spacing)
    n_segments = rng.integers(spec.branch_segments[0],
                              spec.branch_segments[1] + 1)
    radius = rng.uniform(*spec.branch_thickness_mm) / 2
    nodes = [np.asarray(root, dtype=np.float64)]
    segments = []
    bits = np.zeros(coords[0].shape, dtype=bool)
    for _ in range(n_segments):
        start = nodes[rng.integers(len(nodes))]
        end = start + rng.uniform(*spec.branch_length_mm) \
            * _random_direction(rng)
        segments.append((start, end))
        nodes.append(end)
        bits |= _tube(coords, start, end, radius, half_diagonal)

    n_nodules = rng.integers(spec.nodules_per_cluster[0],
                             spec.nodules_per_cluster[1] + 1)
    for _ in range(n_nodules):
        start, end = segments[rng.integers(len(segments))]
        on_axis = start + rng.uniform() * (end - start)
        nodule_radius = rng.uniform(*spec.nodule_diameter_mm) / 2
        # The pixel holding on_axis belongs to both nodule and tube
        reach = max(0.0, nodule_radius - half_diagonal)
        centre = on_axis + rng.uniform(0.0, reach) * _random_direction(rng)
        bits |= _disc(coords, centre, nodule_radius)

    return bits


def _draw_vessel(rng, spec, coords, root):
    """Decoy vessel tree: a thick trunk with one or two thinner
    branches"""
    half_diagonal = 0.5 * np.hypot(*spec.in_plane_spacing)
    radius = rng.uniform(*spec.vessel_thickness_mm) / 2
    direction = _random_direction(rng)
    end = root + rng.uniform(*spec.vessel_length_mm) * direction
    bits = _tube(coords, root, end, radius, half_diagonal)
    for _ in range(rng.integers(1, 3)):
        angle = rng.uniform(-np.pi / 3, np.pi / 3)
        rotation = np.array([[np.cos(angle), -np.sin(angle)],
                             [np.sin(angle), np.cos(angle)]])
        length = 0.5 * rng.uniform(*spec.vessel_length_mm)
        bits |= _tube(coords, end, end + length * (rotation @ direction),
                      0.7 * radius, half_diagonal)
    return bits


def _place(rng, allowed, draw, spec, what):
    """Draws a structure at random roots until it fits inside allowed
    as a single connected component

    Returns:
    --------
    z : int
        Slice of the structure
    bits : np.array(bool)
        (ny, nx) footprint
    """
    slices = np.flatnonzero(allowed.any(axis=(1, 2)))
    if slices.size == 0:
        raise PlacementError(f"no room left in the lungs for a {what}")
    coords = _pixel_centres(allowed.shape[1], allowed.shape[2],
                            spec.in_plane_spacing)
    eight = np.ones((3, 3), dtype=bool)
    for attempt in range(MAX_ATTEMPTS):
        z = int(slices[rng.integers(slices.size)])
        ys, xs = np.nonzero(allowed[z])
        k = rng.integers(xs.size)
        root = np.array([xs[k] * spec.spacing[0], ys[k] * spec.spacing[1]])
        bits = draw(rng, spec, coords, root)
        if not bits.any() or np.any(bits & ~allowed[z]):
            continue
        if ndimage.label(bits, structure=eight)[1] != 1:
            continue
        logger.debug("Placed %s in slice %d after %d attempt(s)", what, z,
                     attempt + 1)
        return z, bits
    raise PlacementError(f"could not place a {what} inside the lungs after "
                         f"{MAX_ATTEMPTS} attempts")


def _anatomy(spec):
    """Body and lung masks of shape (nz, ny, nx)

    The lungs stay body_wall_px pixels inside the body outline in every
    slice, so lung air never touches the air around the body.
    """
    nx, ny, nz = spec.dims
    zz, yy, xx = np.mgrid[0:nz, 0:ny, 0:nx].astype(np.float64)
    cx, cy, cz = (nx - 1) / 2, (ny - 1) / 2, (nz - 1) / 2
    bx, by = spec.body_semi_axes
    body = ((xx - cx) / (bx * nx)) ** 2 + ((yy - cy) / (by * ny)) ** 2 <= 1
    ax, ay, az = spec.lung_semi_axes
    lungs = np.zeros(body.shape, dtype=bool)
    for centre_x in spec.lung_centres_x:
        lungs |= (((xx - centre_x * (nx - 1)) / (ax * nx)) ** 2
                  + ((yy - cy) / (ay * ny)) ** 2
                  + ((zz - cz) / (az * nz)) ** 2) <= 1
    inner = body
    if spec.body_wall_px > 0:
        inner = ndimage.binary_erosion(body, structure=_IN_PLANE,
                                       iterations=spec.body_wall_px)
    return body, lungs & inner


def generate(spec=None):
    """Generates a phantom

    Parameters:
    -----------
    spec : PhantomSpec (optional)

    Returns:
    --------
    volume : Volume
    lung_mask : Mask
    tib_mask : Mask
        Exactly the voxels of the inserted TIB clusters
    """
    spec = spec or PhantomSpec()
    rng = np.random.default_rng(spec.seed)
    body, lungs = _anatomy(spec)

    vessel_room = ndimage.binary_erosion(lungs, structure=_IN_PLANE)
    tib_room = ndimage.binary_erosion(lungs, structure=_IN_PLANE,
                                      iterations=2)

    vessels = np.zeros(lungs.shape, dtype=bool)
    for _ in range(spec.n_vessels):
        z, bits = _place(rng, vessel_room, _draw_vessel, spec, "vessel")
        vessels[z] |= bits

    # Clusters keep 3 pixels in-plane and one slice away from everything
    keep_out = np.ones((3, 7, 7), dtype=bool)
    tib = np.zeros(lungs.shape, dtype=bool)
    for _ in range(spec.n_tib_clusters):
        blocked = ndimage.binary_dilation(vessels | tib, structure=keep_out)
        z, bits = _place(rng, tib_room & ~blocked, _draw_cluster, spec,
                         "TIB cluster")
        tib[z] |= bits

    image = np.full(lungs.shape, spec.air_hu, dtype=np.float64)
    image[body] = spec.body_hu
    image[lungs] = spec.lung_hu
    image[vessels] = spec.lung_hu + spec.vessel_contrast_hu
    image[tib] = spec.lung_hu + spec.cluster_contrast_hu
    image += rng.normal(0.0, spec.noise_sigma, image.shape)
    voxels = np.clip(np.rint(image), -32768, 32767).astype(np.int16)

    logger.info("Generated phantom seed %d: %d TIB voxels in %d clusters",
                spec.seed, int(tib.sum()), spec.n_tib_clusters)
    volume = Volume(spec.dims, spec.spacing, voxels)

    return volume, Mask.like(volume, lungs), Mask.like(volume, tib)


def label_patches(patches, tib_mask, tau=0.1):
    """Labels patches by their TIB overlap fraction

    Returns:
    --------
    labels : np.array(int8)
        1 when the TIB fraction reaches tau, 0 without any TIB voxel and
        -1 for the ambiguous patches in between, which are left out of
        training sets
    """
    if not 0.0 < tau <= 1.0:
        raise ConfigError(f"tau must lie in (0, 1], got {tau}")
    labels = np.zeros(len(patches), dtype=np.int8)
    for k, patch in enumerate(patches):
        overlap = np.count_nonzero(patch.window(tib_mask.bits))
        if overlap >= tau * patch.n * patch.n:
            labels[k] = 1
        elif overlap > 0:
            labels[k] = -1
    return labels


def scan_id_for(seed):
    return f"case{seed:03d}"


def generate_suite(base_spec=None, tib_seeds=range(1, 21),
                   clean_seeds=range(21, 31)):
    """Specs of an evaluation suite: TIB phantoms and clean phantoms
    (no clusters)

    Returns:
    --------
    suite : list((str, PhantomSpec))
        Scan id and spec per phantom
    """
    base_spec = base_spec or PhantomSpec()
    suite = [(scan_id_for(s), replace(base_spec, seed=int(s)))
             for s in tib_seeds]
    suite += [(scan_id_for(s), replace(base_spec, seed=int(s),
                                       n_tib_clusters=0))
              for s in clean_seeds]
    return suite


def phantom_paths(prefix):
    """Volume, lung mask and TIB mask header paths of a phantom"""
    return f"{prefix}.hdr", f"{prefix}_lungs.hdr", f"{prefix}_tib.hdr"


def write_phantom(prefix, spec=None):
    volume, lungs, tib = generate(spec)
    volume_path, lungs_path, tib_path = phantom_paths(prefix)
    write_volume(volume_path, volume)
    write_mask(lungs_path, lungs)
    write_mask(tib_path, tib)
    return volume_path, lungs_path, tib_path


def read_phantom_spec(path):
    try:
        with open(path, "r") as f:
            entries = gen.parse_key_value_text(f.read(), source=str(path))
    except FileNotFoundError:
        raise MissingFileError(f"phantom spec not found: {path}")
    defaults = PhantomSpec()
    known = {f.name for f in fields(PhantomSpec)}
    unknown = sorted(set(entries) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown phantom keys {unknown}")
    values = {key: gen.coerce_like(getattr(defaults, key), text, key)
              for key, text in entries.items()}
    return replace(defaults, **values)


def write_phantom_spec(path, spec):
    entries = {f.name: gen.format_setting(getattr(spec, f.name))
               for f in fields(spec)}
    with open(path, "w") as f:
        f.write(gen.format_key_value(entries))
