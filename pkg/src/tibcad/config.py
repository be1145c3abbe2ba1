"""Pipeline configuration: one frozen dataclass per module composed into
PipelineConfig, read from a ``key: value`` file with dotted section
keys::

    patch_size: 9
    feature_mode: shape+glcm
    bscale.r_max: 8
    segmentation.affinity.sigma_intensity: 100
"""
import dataclasses
import logging
from dataclasses import dataclass, field

from tibcad import general as gen
from tibcad.bscale import BScaleParams
from tibcad.evaluation import EvalParams
from tibcad.exceptions import ConfigError, MissingFileError
from tibcad.fcseg import SegmentationParams
from tibcad.shapefeat import ShapeParams
from tibcad.svm import SvmParams
from tibcad.texfeat import TextureParams

logger = logging.getLogger(__name__)

FEATURE_MODES = ("shape", "glcm", "wavelet", "shape+glcm", "shape+wavelet")
PATCH_SIZES = (9, 13, 17)


def check_patch_size(n):
    if n % 2 != 1:
        raise ConfigError(f"Provided patch size {n} is even; patch sizes "
                          "must be odd")
    if n not in PATCH_SIZES:
        raise ConfigError(f"Provided patch size {n} is not one of "
                          f"{PATCH_SIZES}")


def check_feature_mode(mode):
    if mode not in FEATURE_MODES:
        raise ConfigError(f"Provided feature mode {mode!r} is not one of "
                          f"{FEATURE_MODES}")


@dataclass(frozen=True)
class PipelineConfig:
    """Every setting of a pipeline run

    Parameters:
    -----------
    input : str
        Volume header to score (run)
    model : str
        Model file to score with (run) or to write (train)
    manifest : str
        Scan manifest (features, compare)
    output_prefix : str
        Prefix of every written report, table and volume
    cache_dir : str
        Stage cache directory; empty disables caching
    patch_size : int
        9, 13 or 17
    feature_mode : str
        One of FEATURE_MODES
    tau : float
        Minimal TIB fraction of an abnormal patch
    gating : bool
        Skip patches without candidates or outside the energy band
    """
    input: str = ""
    model: str = ""
    manifest: str = ""
    output_prefix: str = "tibcad"
    cache_dir: str = ""
    patch_size: int = 9
    feature_mode: str = "shape+glcm"
    tau: float = 0.1
    gating: bool = True
    segmentation: SegmentationParams = field(
        default_factory=SegmentationParams)
    bscale: BScaleParams = field(default_factory=BScaleParams)
    shape: ShapeParams = field(default_factory=ShapeParams)
    texture: TextureParams = field(default_factory=TextureParams)
    svm: SvmParams = field(default_factory=SvmParams)
    evaluation: EvalParams = field(default_factory=EvalParams)

    def __post_init__(self):
        check_patch_size(self.patch_size)
        check_feature_mode(self.feature_mode)
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must lie in (0, 1], got {self.tau}")


def _apply(obj, settings, prefix=""):
    """Returns a copy of a (nested) dataclass with dotted settings
    applied"""
    by_field = {}
    for key, text in settings.items():
        head, _, rest = key.partition(".")
        by_field.setdefault(head, {})[rest] = text

    changes = {}
    names = {f.name for f in dataclasses.fields(obj)}
    for head, sub in by_field.items():
        path = prefix + head
        if head not in names:
            raise ConfigError(f"unknown configuration key {path!r}")
        current = getattr(obj, head)
        if dataclasses.is_dataclass(current):
            if "" in sub:
                raise ConfigError(f"{path!r} is a section, not a value")
            changes[head] = _apply(current, sub, path + ".")
        else:
            if set(sub) != {""}:
                raise ConfigError(f"{path!r} has no sub keys")
            changes[head] = gen.coerce_like(current, sub[""], path)

    return dataclasses.replace(obj, **changes)


def apply_settings(config, settings):
    """Applies {dotted key: text} settings; unknown keys and values that
    do not coerce raise ConfigError"""
    return _apply(config, settings)


def load_config(path=None, overrides=None):
    """Reads a config file (optional) and applies overrides on top

    Parameters:
    -----------
    path : str (optional)
        Config file in key: value format
    overrides : dict (optional)
        {dotted key: text} applied after the file, e.g. from CLI flags

    Returns:
    --------
    config : PipelineConfig
    """
    config = PipelineConfig()
    if path:
        try:
            with open(path, "r") as f:
                entries = gen.parse_key_value_text(f.read(), source=path)
        except FileNotFoundError:
            raise MissingFileError(f"config file not found: {path}")
        config = apply_settings(config, entries)
        logger.debug("Loaded %d settings from %s", len(entries), path)
    if overrides:
        config = apply_settings(config, overrides)
    return config


def config_entries(obj, prefix=""):
    """Flattens a config to {dotted key: text}, the inverse of
    apply_settings"""
    entries = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            entries.update(config_entries(value, prefix + f.name + "."))
        else:
            entries[prefix + f.name] = gen.format_setting(value)
    return entries


def write_config(path, config):
    with open(path, "w") as f:
        f.write(gen.format_key_value(config_entries(config)))
