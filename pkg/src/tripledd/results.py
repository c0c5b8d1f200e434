"""Estimate container shared by all estimators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ValidationError

# 95% normal quantile, fixed by design
Z95 = 1.959964


@dataclass
class EstimateResult:
    """Point estimate with optional influence-function or bootstrap se."""

    estimator: str
    estimate: float
    n: int
    n_treated: int
    se: float | None = None
    ci_lower: float | None = None
    ci_upper: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_treated < 1:
            raise ValidationError("result requires at least one treated unit")
        if self.se is not None and self.se < 0:
            raise ValidationError("standard error must be non-negative")
        if self.ci_lower is not None and self.ci_upper is not None:
            if not (self.ci_lower <= self.estimate <= self.ci_upper):
                raise ValidationError("confidence interval must bracket the estimate")

    def to_dict(self) -> dict:
        ci = None
        if self.ci_lower is not None and self.ci_upper is not None:
            ci = [self.ci_lower, self.ci_upper]
        return {
            "estimator": self.estimator,
            "estimate": self.estimate,
            "se": self.se,
            "ci": ci,
            "n": self.n,
            "n_treated": self.n_treated,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def normal_ci(estimate: float, se: float) -> tuple[float, float]:
    return estimate - Z95 * se, estimate + Z95 * se
