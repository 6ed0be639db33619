class InvalidInput(ValueError):
    """Input rejected before any computation (maps to CLI exit code 2)."""


class UnsupportedStatistic(InvalidInput):
    """Statistic is not defined for the sample's dimensions or options."""


class NullTableFormatError(InvalidInput):
    """A persisted null table has a bad header or an unknown format version."""


class ConvergenceError(RuntimeError):
    pass
