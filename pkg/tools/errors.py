"""Exception hierarchy shared by every radscribe module."""


class RadscribeError(ValueError):
    """Base class for all errors raised by radscribe."""


class ShapeError(RadscribeError):
    """Tensor or volume dimensions do not satisfy an operation's contract."""


class ConfigError(RadscribeError):
    """A configuration document or dataclass failed validation."""


class DataError(RadscribeError):
    """Malformed corpus, manifest, volume, lexicon or checkpoint data."""


class SequenceError(RadscribeError):
    """Placeholder/visual mismatch or an assembled sequence that overflows."""


class TrainingError(RadscribeError):
    """Degenerate training input or invalid optimizer/schedule settings."""


class UsageError(RadscribeError):
    """Command-line usage problem."""
