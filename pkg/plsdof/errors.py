"""
errors.py
---------
Exception hierarchy for plsdof.

Input problems are ValueErrors (exit code 2), numerical problems are
ArithmeticErrors (exit code 3). The CLI relies on ``exit_code``.
"""

from typing import Optional


class PlsDofError(Exception):
    """Base class for every error raised by the package"""

    exit_code = 1

    def __str__(self) -> str:
        message = super().__str__()
        return f"{type(self).__name__}: {message}" if message else type(self).__name__


# ============================================================================
# INPUT / CONFIGURATION ERRORS (exit code 2)
# ============================================================================

class InputError(PlsDofError, ValueError):
    exit_code = 2


class NonFiniteInput(InputError):
    pass


class ZeroVarianceColumn(InputError):
    def __init__(self, index: int, name: Optional[str] = None):
        self.index = index
        label = f" ({name})" if name else ""
        super().__init__(f"column {index}{label} has zero sample variance")


class DimensionTooSmall(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class MissingTarget(InputError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"target column '{name}' not found in header")


class NonNumericCell(InputError):
    def __init__(self, row: int, col: str, value: str = ""):
        self.row = row
        self.col = col
        super().__init__(f"row {row}, column '{col}': {value!r} is not a number")


class ComponentOutOfRange(InputError):
    def __init__(self, m: int, available: int):
        self.m = m
        self.available = available
        super().__init__(f"m={m} outside 0..{available}")


class FoldTooSmall(InputError):
    pass


class SplitTooLarge(InputError):
    pass


class RankExceeded(InputError):
    pass


class ConfigError(InputError):
    pass


class JacobiansNotRetained(InputError):
    pass


# ============================================================================
# NUMERICAL ERRORS (exit code 3)
# ============================================================================

class NumericalError(PlsDofError, ArithmeticError):
    exit_code = 3


class DegenerateComponent(NumericalError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"component {index} is degenerate (Krylov space exhausted)")


class NumericalInstability(NumericalError):
    def __init__(self, m: int, dof: float):
        self.m = m
        self.dof = dof
        super().__init__(f"negative DoF {dof:.6g} at m={m}")


class SingularBasis(NumericalError):
    def __init__(self, m: int, cond: float):
        self.m = m
        self.cond = cond
        super().__init__(f"Krylov basis singular at m={m} (cond={cond:.3g})")


class EigFailure(NumericalError):
    pass


class ZeroGradient(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass


class DofExceedsN(NumericalError):
    def __init__(self, dof: float, n: int):
        self.dof = dof
        self.n = n
        super().__init__(f"DoF {dof:.6g} is not below n={n}")


class SingularSystem(NumericalError):
    pass


class DegenerateSignal(NumericalError):
    pass


class NonDeterministicFit(NumericalError):
    pass
