"""Exception types raised across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ContractError(ValueError):
    """A precondition of an operation was violated by the caller."""


class ParseError(ValueError):
    """An input file line could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateEdgeError(ParseError):
    pass


class SchemaError(ValueError):
    """A relation was used with inconsistent endpoint types."""


class ResolutionError(KeyError):
    """One or more node names or ids could not be resolved."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class TransformError(ValueError):
    pass


class SpecError(ValueError):
    """A generator or pipeline specification is infeasible."""


class SamplingExhaustedError(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, epoch, lr, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch} (learning rate {lr})")
        self.epoch = epoch
        self.lr = lr


class CheckpointError(ValueError):
    pass


class ConfigError(ValueError):
    pass
