import numpy as np

from tibcad.exceptions import ConfigError


class GrayLevels:
    """Uniform quantization of a Hounsfield window into gray levels

    Parameters:
    -----------
    lower : float (optional)
        Lower edge of the HU window; defaults to -1000
    upper : float (optional)
        Upper edge of the HU window; defaults to 400
    n_levels : int (optional)
        Number of gray levels; defaults to 32
    """

    def __init__(self, lower=-1000.0, upper=400.0, n_levels=32):
        if n_levels < 2:
            raise ConfigError(f"need at least 2 gray levels, got {n_levels}")
        if not upper > lower:
            raise ConfigError(f"empty HU window [{lower}, {upper}]")
        self.n_levels = int(n_levels)
        self.lower_bin_edge = float(lower)
        self.upper_bin_edge = float(upper)
        self.bin_range = self.upper_bin_edge - self.lower_bin_edge

    def digitize(self, values):
        """Gray level in [0, n_levels) of every value; values outside the
        window are clamped to its edges first"""
        clipped = np.clip(np.asarray(values, dtype=np.float64),
                          self.lower_bin_edge, self.upper_bin_edge)
        levels = np.floor((clipped - self.lower_bin_edge)
                          / self.bin_range * self.n_levels).astype(np.int64)

        return np.minimum(levels, self.n_levels - 1)
