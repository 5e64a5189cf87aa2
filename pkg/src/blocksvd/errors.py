"""Exception hierarchy shared by every module."""


class BlockSVDError(Exception):
    """Base class for all errors raised by :mod:`blocksvd`."""


class ParseError(BlockSVDError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionError(BlockSVDError):
    pass


class UsageError(BlockSVDError):
    pass


class MemoryBudgetError(BlockSVDError):
    def __init__(self, block, nbytes, limit):
        self.block = block
        self.nbytes = nbytes
        self.limit = limit
        super().__init__(
            f"dense block {block!r} needs {nbytes} bytes, budget is {limit} bytes"
        )


class ZeroColumnError(BlockSVDError):
    pass


class ConvergenceError(BlockSVDError):
    """Iteration cap reached; carries whatever partial state is useful."""

    def __init__(self, message, residual=None, log=None, state=None):
        self.residual = residual
        self.log = log
        self.state = state
        super().__init__(message)


class RankError(BlockSVDError):
    pass


class SymmetryError(BlockSVDError):
    pass


class OrthogonalityError(BlockSVDError):
    pass


class DegenerateCutError(BlockSVDError):
    pass
