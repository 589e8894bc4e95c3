"""Certified distance intervals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class DistanceEstimate:
    """``lower <= d(x, y) <= upper``, with the curve realizing ``upper``.

    ``status`` is "converged" when the witness ends within the endpoint
    tolerance, otherwise "upper-only, unconverged" (the upper value is then
    not a valid bound and callers must not blend it into brackets).
    """

    lower: float
    upper: float
    witness: Any = None
    endpoint_gap: float = 0.0
    status: str = "converged"
    method: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.status == "converged" and self.lower > self.upper:
            # lower bounds are analytic, so a crossing means the upper side is off by rounding
            if self.lower - self.upper > 1e-9 * max(1.0, self.upper):
                raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
            self.lower = self.upper

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_json(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "width": self.width,
            "endpoint_gap": self.endpoint_gap,
            "status": self.status,
            "method": self.method,
            "diagnostics": self.diagnostics,
            "witness": self.witness.to_json() if hasattr(self.witness, "to_json") else self.witness,
        }
