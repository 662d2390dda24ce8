"""Exception types shared across the package."""


class ShapeAssemblyError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(ShapeAssemblyError):
    """An argument violated a documented precondition."""


class SingularityError(ShapeAssemblyError):
    """A geometric operation hit a degenerate configuration (e.g. zero-size cuboid)."""


class ParseError(ShapeAssemblyError):
    """Program text could not be parsed. Carries 1-based line/column."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}" if line else message)
        self.message = message
        self.line = line
        self.col = col


class ExecutionError(ShapeAssemblyError):
    """A program violated an execution rule that cannot be repaired by clamping."""

    def __init__(self, rule: str, message: str):
        super().__init__(f"[{rule}] {message}")
        self.rule = rule
        self.message = message


class ExtractionError(ShapeAssemblyError):
    """Program extraction from a part graph failed."""


class FitError(ShapeAssemblyError):
    """Continuous-parameter fitting could not run."""
