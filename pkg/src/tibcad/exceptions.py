"""Exception hierarchy shared by all tibcad modules.

The classes also derive from the builtin exceptions that plain numpy
code would raise, so ``except ValueError`` keeps working for callers
that do not know about tibcad.
"""


class TibCadError(Exception):
    """Base class of every error raised on purpose by tibcad"""


class ConfigError(TibCadError, ValueError):
    """Invalid configuration value or unknown configuration key"""


class DataError(TibCadError, ValueError):
    """Input data is missing, malformed or inconsistent"""


class MissingFileError(DataError, FileNotFoundError):
    """A volume header, raw payload or table file does not exist"""


class VolumeFormatError(DataError):
    """Header and raw payload disagree or the header is invalid"""


class SegmentationError(DataError):
    """Lungs could not be recognised in the volume"""


class NoPairsError(DataError):
    """No pixel pair fits inside the patch for any GLCM offset"""


class PlacementError(DataError):
    """A phantom structure could not be placed inside the lungs"""


class SchemaError(DataError):
    """Feature vector does not match the schema a model was trained on"""


class SingleClassError(DataError):
    """Only one class present where both are required"""


class DegenerateStatisticsError(TibCadError, ArithmeticError):
    """A statistic is undefined for the given data (zero variance)"""


class StageError(TibCadError):
    """Error raised inside a pipeline stage, tagged with the stage name

    Parameters:
    -----------
    stage : str
        Name of the pipeline stage that failed
    cause : Exception
        Original error
    """

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4


def exit_code_for(error):
    """Maps an exception to the CLI exit code"""
    if isinstance(error, StageError):
        return exit_code_for(error.cause)
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DegenerateStatisticsError):
        return EXIT_DEGENERATE
    if isinstance(error, (DataError, FileNotFoundError)):
        return EXIT_DATA
    return 1
