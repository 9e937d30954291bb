"""Exception and warning types shared by all seqnet modules."""


class SeqnetError(Exception):
    """Base class for every error raised by seqnet."""


class DataError(SeqnetError, ValueError):
    """Malformed input data, schema mismatch or invalid parameter values."""


class ConfigError(SeqnetError, ValueError):
    """Invalid learner or benchmark configuration."""


class GraphError(SeqnetError, ValueError):
    """Structural violation: cycles, conflicting orientations, unknown nodes."""


class UntestableError(SeqnetError):
    """A conditional-independence test cannot be evaluated on the given data."""


class SeqnetWarning(UserWarning):
    pass


class UntestableWarning(SeqnetWarning):
    """An untestable configuration was skipped (edge retained / counted as non-rejection)."""


class KinshipCaveatWarning(SeqnetWarning):
    """CI tests on genotype data ignore relatedness between samples."""


KINSHIP_CAVEAT = (
    "conditional-independence tests treat samples as independent and ignore "
    "kinship; in related or inbred populations the selected markers may include "
    "spurious associations"
)
