import hashlib
import logging
import time
from contextlib import contextmanager

import numpy as np
import numba as nb
from fast_histogram import histogram2d

from tibcad.exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)


def count_and_convert_pairs_to_matrix(first, second, n_levels):
    """Counts frequencies of gray-level pairs via fasthistogram module
    and subsequently converts them to matrix format.

    Parameters:
    -----------
    first : np.array(int)
        Gray level of the first pixel of every pair
    second : np.array(int)
        Gray level of the second pixel of every pair
    n_levels : int
        Number of gray levels; pairs are counted in an
        n_levels x n_levels matrix

    Returns:
    --------
    counts : np.array(float)
        Pair counts, rows indexed by first, columns by second
    """
    if len(first) == 0:
        return np.zeros((n_levels, n_levels), dtype=np.float64)

    return histogram2d(np.asarray(first, dtype=np.float64),
                       np.asarray(second, dtype=np.float64),
                       range=[[0, n_levels], [0, n_levels]],
                       bins=n_levels)


@nb.njit(cache=True)
def normalize(data):
    """Normalize given data so that sum equals 1"""
    return data / np.sum(data)


def parse_key_value_text(text, source="<text>"):
    """Parses the plain-text 'key: value' format used for volume headers,
    phantom specs and pipeline configs.

    Blank lines and lines starting with '#' are ignored. Keys keep the
    order in which they appear.
    """
    entries = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" in line:
            key, value = line.split(":", 1)
        elif "=" in line:
            key, value = line.split("=", 1)
        else:
            raise DataError(f"{source}:{number}: expected 'key: value', "
                            f"got {raw_line!r}")
        key = key.strip()
        if key in entries:
            raise DataError(f"{source}:{number}: duplicate key {key!r}")
        entries[key] = value.strip()

    return entries


def format_key_value(entries):
    """Inverse of parse_key_value_text"""
    return "".join(f"{key}: {value}\n" for key, value in entries.items())


def format_floats(values):
    """Space separated floats written with repr so they read back
    bit-exactly"""
    return " ".join(repr(float(v)) for v in values)


def parse_floats(text):
    if not text.strip():
        return np.zeros(0, dtype=np.float64)
    return np.array([float(v) for v in text.split()], dtype=np.float64)


def content_digest(*parts):
    """SHA-256 over a sequence of byte strings, arrays and reprs"""
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            digest.update(str(part.dtype).encode())
            digest.update(str(part.shape).encode())
            digest.update(np.ascontiguousarray(part).tobytes())
        elif isinstance(part, bytes):
            digest.update(part)
        else:
            digest.update(repr(part).encode())
        digest.update(b"\x00")
    return digest.hexdigest()


@contextmanager
def timed(message, log=None):
    """Logs message before and the elapsed time after the block"""
    log = log or logger
    log.info("%s...", message)
    tic = time.perf_counter()
    yield
    toc = time.perf_counter()
    log.info("%s done in%s seconds", message, f"{toc - tic: 1.4f}")


TRUE_WORDS = ("true", "yes", "on", "1")
FALSE_WORDS = ("false", "no", "off", "0")


def coerce_like(default, text, key="value"):
    """Converts text to the type of default, the way settings files are
    read into parameter dataclasses

    Tuples are whitespace separated; a tuple of pairs is written as
    comma-joined groups, e.g. ``1,0 0,1``.
    """
    text = text.strip()
    try:
        if isinstance(default, bool):
            word = text.lower()
            if word in TRUE_WORDS:
                return True
            if word in FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, str):
            return text
        if isinstance(default, tuple):
            if default and isinstance(default[0], tuple):
                return tuple(tuple(int(v) for v in group.split(","))
                             for group in text.split())
            element = default[0] if default else 0.0
            return tuple(coerce_like(element, v, key) for v in text.split())
    except ValueError:
        raise ConfigError(f"Provided {key} {text!r} is not a valid "
                          f"{type(default).__name__}")
    raise ConfigError(f"{key} cannot be set from text")


def format_setting(value):
    """Inverse of coerce_like"""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return " ".join(",".join(str(v) for v in group)
                            for group in value)
        return " ".join(format_setting(v) for v in value)
    return str(value)
