from typing import List, Optional, Tuple


class DelayedAEPError(Exception):
    """Base class for every domain error; carries the CLI exit code"""

    exit_code = 1


class InvalidMatrixError(DelayedAEPError, ValueError):
    """A matrix or probability vector failed validation"""

    exit_code = 5


class NegativeEntry(InvalidMatrixError):
    def __init__(self, row: int, col: int, value: float):
        self.row = row
        self.col = col
        self.value = value
        super().__init__(f"negative entry {value!r} at row {row}, column {col}")


class RowSumNotOne(InvalidMatrixError):
    def __init__(self, row: int, deviation: float):
        self.row = row
        self.deviation = deviation
        super().__init__(f"row {row} sums to 1 {deviation:+.3g} (tolerance exceeded)")


class SizeMismatch(InvalidMatrixError):
    def __init__(self, what: str, expected: int, actual: int):
        self.what = what
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected size {expected}, got {actual}")


class NotIrreducible(DelayedAEPError):
    exit_code = 6

    def __init__(self, source: int, target: int):
        self.source = source
        self.target = target
        super().__init__(f"matrix is not irreducible: state {target} is unreachable from state {source}")


class OverflowRisk(DelayedAEPError):
    exit_code = 7

    def __init__(self, n: int, steps: int, budget: int):
        self.n = n
        self.steps = steps
        self.budget = budget
        super().__init__(f"grid point n={n} needs {steps} steps, above the step budget of {budget}")


class ZeroProbabilityStep(DelayedAEPError):
    exit_code = 8

    def __init__(self, index: int, detail: str = ""):
        self.index = index
        message = f"path has zero probability at index {index}"
        super().__init__(f"{message} ({detail})" if detail else message)


class NonFiniteInput(DelayedAEPError):
    exit_code = 8


class ConfigParseError(DelayedAEPError):
    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ConfigValidationError(DelayedAEPError):
    exit_code = 4

    def __init__(self, errors: List[Tuple[str, str]]):
        # (field location, message) pairs, every failure not just the first
        self.errors = errors
        lines = [f"{loc or '<root>'}: {msg}" for loc, msg in errors]
        super().__init__(f"{len(errors)} validation error(s)\n  " + "\n  ".join(lines))
