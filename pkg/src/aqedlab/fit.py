"""Power-law fitting for scaling experiments."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .linalg import fit_loglog


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    points: int

    def to_dict(self) -> dict:
        return asdict(self)


def fit_exponent(points: Sequence[tuple[float, float]]) -> FitResult:
    """OLS fit of log(value) against log(n)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    if any(v <= 0 or not np.isfinite(v) for _, v in pts):
        raise FitError("values must be positive and finite")
    if len({n for n, _ in pts}) < 2:
        raise FitError("degenerate grid: all abscissae equal")
    slope, intercept, r2 = fit_loglog([n for n, _ in pts], [v for _, v in pts])
    return FitResult(slope, intercept, r2, len(pts))
