"""Exception hierarchy; the CLI maps these onto exit codes."""


class DataError(Exception):
    """Bad or missing input data (exit code 2)."""


class ParseError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class UnmappedLabelError(DataError):
    pass


class PlanError(DataError):
    """Segmentation plan cannot be used as requested."""


class NumericError(Exception):
    """Training produced a non-finite loss (exit code 3)."""

    def __init__(self, message, step=None, trace=None):
        super().__init__(message)
        self.step = step
        self.trace = trace
