"""Exception taxonomy.

Two branches matter for the CLI exit-code contract: ``ValidationError``
(bad inputs, exit 2) and ``EstimationError`` (runtime failures during
fitting or estimation, exit 3).
"""


class TripleDDError(Exception):
    """Base class for all package errors."""


class ValidationError(TripleDDError):
    """Invalid user input: files, column maps, configs, flag values."""


class EstimationError(TripleDDError):
    """Failure while fitting nuisances or evaluating an estimator."""


# --- input / validation ---------------------------------------------------


class MissingColumn(ValidationError):
    def __init__(self, column: str):
        self.column = column
        super().__init__(f"required column {column!r} not found in header")


class NonBinaryIndicator(ValidationError):
    def __init__(self, column: str, row: int, value: str):
        self.column = column
        self.row = row
        super().__init__(
            f"column {column!r} must be 0/1 but data row {row} has {value!r}"
        )


class NonFiniteValue(ValidationError):
    def __init__(self, column: str, row: int, value: str):
        self.column = column
        self.row = row
        super().__init__(
            f"column {column!r} has non-finite value {value!r} at data row {row}"
        )


class EmptyFile(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


class InvalidFoldCount(ValidationError):
    pass


class InvalidB(ValidationError):
    pass


class InvalidScenario(ValidationError):
    pass


# --- fitting / estimation -------------------------------------------------


class EmptyCell(EstimationError):
    def __init__(self, cell, stratum=None):
        self.cell = cell
        self.stratum = stratum
        where = "" if stratum is None else f" in stratum {stratum}"
        super().__init__(f"cell {cell} has no observations{where}")


class NoConvergence(EstimationError):
    def __init__(self, iterations: int, grad_norm: float):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(
            f"Newton iterations did not converge after {iterations} steps "
            f"(gradient max-norm {grad_norm:.3e})"
        )


class SeparationDetected(EstimationError):
    def __init__(self, min_prob: float):
        self.min_prob = min_prob
        super().__init__(
            f"fitted propensity {min_prob:.3e} below 1e-12 at convergence; "
            "cells appear separated"
        )


class UnseenStratum(EstimationError):
    def __init__(self, stratum):
        self.stratum = stratum
        super().__init__(f"covariate pattern {stratum} was not seen at fit time")


class RankDeficient(EstimationError):
    def __init__(self, cell):
        self.cell = cell
        super().__init__(f"design matrix for cell {cell} is rank deficient")


class NoTreatedUnits(EstimationError):
    pass


class PositivityViolation(EstimationError):
    def __init__(self, min_prob: float, count: int):
        self.min_prob = min_prob
        self.count = count
        super().__init__(
            f"{count} predicted propensities below the hard 1e-12 floor "
            f"(minimum {min_prob:.3e}); rerun with clip=True to trim"
        )


class BootstrapDegenerate(EstimationError):
    pass


class DegenerateTimeShare(EstimationError):
    def __init__(self, t_share: float):
        self.t_share = t_share
        super().__init__(
            f"sample share of the post period is {t_share:.4f}; the "
            "time-share estimator requires it in (0.02, 0.98)"
        )


class EmptyTimeGroup(EstimationError):
    pass


class ScenarioDegenerate(EstimationError):
    pass
