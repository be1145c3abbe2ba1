"""Volume, mask and scale-map storage plus axial patch extraction.

On disk every array is a pair of files: a plain-text header
(``name.hdr``) and a raw little-endian payload (``name.raw``)::

    dims: nx ny nz
    spacing: sx sy sz
    dtype: int16le
    order: xyz

In memory arrays are indexed ``[z, y, x]`` so that x is the fastest
varying axis, matching the payload order.
"""
import logging
import os
from dataclasses import dataclass, replace

import numpy as np

from tibcad import general as gen
from tibcad.exceptions import (ConfigError, DataError, MissingFileError,
                               VolumeFormatError)

logger = logging.getLogger(__name__)

DTYPES = {"int16le": np.dtype("<i2"),
          "uint8": np.dtype("u1")}


def _readonly(array, dtype):
    array = np.array(array, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


def _check_geometry(dims, spacing):
    dims = tuple(int(d) for d in dims)
    spacing = tuple(float(s) for s in spacing)
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"dims must be three counts >= 1, got {dims}")
    if len(spacing) != 3 or not all(s > 0 for s in spacing):
        raise VolumeFormatError("spacing must be three positive values, "
                                f"got {spacing}")
    return dims, spacing


@dataclass(frozen=True, eq=False)
class Volume:
    """CT intensities in Hounsfield Units

    Parameters:
    -----------
    dims : tuple(int)
        Voxel counts (nx, ny, nz)
    spacing : tuple(float)
        Voxel size (sx, sy, sz) in mm
    voxels : np.array(int16)
        Intensities of shape (nz, ny, nx)
    """
    dims: tuple
    spacing: tuple
    voxels: np.ndarray

    def __post_init__(self):
        dims, spacing = _check_geometry(self.dims, self.spacing)
        voxels = np.asarray(self.voxels)
        if voxels.shape != dims[::-1]:
            raise VolumeFormatError(f"voxel array of shape {voxels.shape} "
                                    f"does not match dims {dims}")
        if voxels.dtype != np.int16 and voxels.size and \
                (voxels.min() < -32768 or voxels.max() > 32767):
            raise VolumeFormatError("intensities must fit in int16")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "voxels", _readonly(voxels, np.int16))

    @property
    def shape(self):
        return self.voxels.shape


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary voxel mask paired with a Volume (lungs, labels, candidates)"""
    dims: tuple
    bits: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims, spacing = _check_geometry(self.dims, self.spacing)
        bits = np.asarray(self.bits)
        if bits.shape != dims[::-1]:
            raise VolumeFormatError(f"mask array of shape {bits.shape} "
                                    f"does not match dims {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "bits", _readonly(bits, bool))

    @classmethod
    def like(cls, volume, bits):
        return cls(volume.dims, bits, volume.spacing)

    def count(self):
        return int(np.count_nonzero(self.bits))


@dataclass(frozen=True, eq=False)
class Patch:
    """Axial n x n window of a volume and of its lung mask"""
    z: int
    x0: int
    y0: int
    n: int
    pixels: np.ndarray
    mask_bits: np.ndarray
    spacing: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.n % 2 != 1:
            raise ConfigError(f"patch size must be odd, got {self.n}")
        if np.shape(self.pixels) != (self.n, self.n) or \
                np.shape(self.mask_bits) != (self.n, self.n):
            raise DataError(f"patch arrays must be {self.n}x{self.n}")
        object.__setattr__(self, "pixels", _readonly(self.pixels,
                                                     np.asarray(
                                                         self.pixels).dtype))
        object.__setattr__(self, "mask_bits", _readonly(self.mask_bits, bool))
        object.__setattr__(self, "spacing",
                           tuple(float(s) for s in self.spacing[:2]))

    @property
    def key(self):
        return (self.z, self.y0, self.x0)

    def window(self, array3d):
        """Cuts this patch's window out of any (nz, ny, nx) array"""
        return array3d[self.z, self.y0:self.y0 + self.n,
                       self.x0:self.x0 + self.n]

    @property
    def pixel_area(self):
        return self.spacing[0] * self.spacing[1]

    def lung_filled(self):
        """This patch with every pixel outside the lungs set to the lower
        quartile of its lung pixels

        The lower quartile stays on parenchyma unless dense structures
        cover more than three quarters of the lung part. Patches entirely
        inside or entirely outside the lungs are returned unchanged.
        """
        inside = self.mask_bits
        if inside.all() or not inside.any():
            return self
        fill = np.percentile(self.pixels[inside], 25)
        return replace(self, pixels=np.where(inside, self.pixels, fill))


def header_path(path):
    root, ext = os.path.splitext(str(path))
    return root + ".hdr" if ext in (".raw", ".hdr", "") else str(path)


def raw_path(path):
    root, _ = os.path.splitext(header_path(path))
    return root + ".raw"


def read_array(path):
    """Reads a header/raw pair

    Returns:
    --------
    dims : tuple(int)
    spacing : tuple(float)
    dtype_name : str
    array : np.array
        Payload of shape (nz, ny, nx)
    """
    hdr, raw = header_path(path), raw_path(path)
    for filename in (hdr, raw):
        if not os.path.exists(filename):
            raise MissingFileError(f"file not found: {filename}")

    with open(hdr, "r") as f:
        header = gen.parse_key_value_text(f.read(), source=hdr)

    missing = [k for k in ("dims", "spacing", "dtype") if k not in header]
    if missing:
        raise VolumeFormatError(f"{hdr}: missing header keys {missing}")
    try:
        dims = tuple(int(v) for v in header["dims"].split())
        spacing = tuple(float(v) for v in header["spacing"].split())
    except ValueError:
        raise VolumeFormatError(f"{hdr}: non-numeric dims or spacing")
    dims, spacing = _check_geometry(dims, spacing)

    dtype_name = header["dtype"]
    if dtype_name not in DTYPES:
        raise VolumeFormatError(f"{hdr}: unsupported dtype {dtype_name!r}")
    if header.get("order", "xyz") != "xyz":
        raise VolumeFormatError(f"{hdr}: unsupported order "
                                f"{header['order']!r}")

    dtype = DTYPES[dtype_name]
    expected = dims[0] * dims[1] * dims[2]
    n_bytes = os.path.getsize(raw)
    if n_bytes != expected * dtype.itemsize:
        raise VolumeFormatError(
            f"{raw}: header declares {expected} values of {dtype_name} "
            f"but payload holds {n_bytes / dtype.itemsize:g}")

    array = np.fromfile(raw, dtype=dtype).reshape(dims[::-1])
    logger.debug("Read %s (%s, dims %s)", hdr, dtype_name, dims)

    return dims, spacing, dtype_name, array


def write_array(path, dims, spacing, dtype_name, array):
    hdr, raw = header_path(path), raw_path(path)
    directory = os.path.dirname(hdr)
    if directory:
        os.makedirs(directory, exist_ok=True)
    header = {"dims": " ".join(str(d) for d in dims),
              "spacing": gen.format_floats(spacing),
              "dtype": dtype_name,
              "order": "xyz"}
    with open(hdr, "w") as f:
        f.write(gen.format_key_value(header))
    np.ascontiguousarray(array, dtype=DTYPES[dtype_name]).tofile(raw)
    logger.debug("Wrote %s", hdr)

    return hdr


def read_volume(path):
    dims, spacing, dtype_name, array = read_array(path)
    if dtype_name != "int16le":
        raise VolumeFormatError(f"{path}: volume must be int16le, "
                                f"got {dtype_name}")
    return Volume(dims, spacing, array)


def write_volume(path, volume):
    return write_array(path, volume.dims, volume.spacing, "int16le",
                       volume.voxels)


def read_mask(path):
    dims, spacing, dtype_name, array = read_array(path)
    if dtype_name != "uint8":
        raise VolumeFormatError(f"{path}: mask must be uint8, "
                                f"got {dtype_name}")
    return Mask(dims, array != 0, spacing)


def write_mask(path, mask):
    return write_array(path, mask.dims, mask.spacing, "uint8",
                       mask.bits.astype(np.uint8))


def volume_digest(volume):
    """SHA-256 of geometry and payload; equal digests mean bit-identical
    volumes"""
    return gen.content_digest(volume.dims, volume.spacing, volume.voxels)


def check_same_dims(volume, mask, what="mask"):
    if tuple(volume.dims) != tuple(mask.dims):
        raise DataError(f"{what} dims {mask.dims} differ from volume dims "
                        f"{volume.dims}")


def extract_patch(volume, lung_mask, z, x0, y0, n):
    nx, ny, nz = volume.dims
    if not (0 <= z < nz and 0 <= x0 and x0 + n <= nx and
            0 <= y0 and y0 + n <= ny):
        raise DataError(f"patch at z={z}, origin=({x0}, {y0}), n={n} "
                        f"leaves the volume {volume.dims}")
    return Patch(z=z, x0=x0, y0=y0, n=n,
                 pixels=volume.voxels[z, y0:y0 + n, x0:x0 + n],
                 mask_bits=lung_mask.bits[z, y0:y0 + n, x0:x0 + n],
                 spacing=volume.spacing[:2])


def tile_origins(lung_bits, n):
    """Origins (z, y0, x0) of the non-overlapping n x n tiles that hold
    at least one mask voxel, in lexicographic order"""
    nz, ny, nx = lung_bits.shape
    ty, tx = ny // n, nx // n
    tiles = lung_bits[:, :ty * n, :tx * n].reshape(nz, ty, n, tx, n)
    occupied = tiles.any(axis=(2, 4))
    zs, iy, ix = np.nonzero(occupied)
    # np.nonzero returns C-order, which is (z, y0, x0) lexicographic
    return [(int(z), int(y) * n, int(x) * n) for z, y, x in zip(zs, iy, ix)]


def tile_patches(volume, lung_mask, n):
    """Tiles every axial slice of the lung into non-overlapping n x n
    patches

    Parameters:
    -----------
    volume : Volume
    lung_mask : Mask
        Only tiles with at least one lung voxel are emitted
    n : int
        Odd patch size, at most min(nx, ny)

    Returns:
    --------
    patches : list(Patch)
        Ordered by (z, y0, x0)
    """
    check_same_dims(volume, lung_mask, "lung mask")
    if n < 1 or n % 2 != 1:
        raise ConfigError(f"patch size must be odd, got {n}")
    nx, ny, _ = volume.dims
    if n > min(nx, ny):
        raise DataError(f"patch size {n} exceeds slice extent {nx}x{ny}")

    return [extract_patch(volume, lung_mask, z, x0, y0, n)
            for z, y0, x0 in tile_origins(lung_mask.bits, n)]


@dataclass(frozen=True, eq=False)
class ScaleMap:
    """Per-voxel ball-scale radius in voxels, 0 outside the lungs"""
    dims: tuple
    scale: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        dims, spacing = _check_geometry(self.dims, self.spacing)
        scale = np.asarray(self.scale)
        if scale.shape != dims[::-1]:
            raise VolumeFormatError(f"scale array of shape {scale.shape} "
                                    f"does not match dims {dims}")
        if scale.size and (scale.min() < 0 or scale.max() > 255):
            raise VolumeFormatError("scale values must fit in uint8")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "scale", _readonly(scale, np.uint8))


def read_scale_map(path):
    dims, spacing, dtype_name, array = read_array(path)
    if dtype_name != "uint8":
        raise VolumeFormatError(f"{path}: scale map must be uint8, "
                                f"got {dtype_name}")
    return ScaleMap(dims, array, spacing)


def write_scale_map(path, scale_map):
    return write_array(path, scale_map.dims, scale_map.spacing, "uint8",
                       scale_map.scale)
