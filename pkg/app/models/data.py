from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np

from app.exceptions import DimensionMismatchError
from app.models.geometry import SensorGeometry, SourceImage, TimeGrid, _freeze


def _check_rows(values: np.ndarray, rows: int, times: TimeGrid, what: str) -> None:
    if values.shape != (rows, times.q):
        raise DimensionMismatchError(
            f"{what} values must have shape ({rows}, {times.q}), got {values.shape}"
        )


@dataclass(frozen=True)
class PressureData:
    """Sampled pressure p(s_j, t_l), one row per detector"""
    geometry: SensorGeometry
    times: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        _check_rows(self.values, self.geometry.n, self.times, "pressure")


@dataclass(frozen=True)
class MeansData:
    """Circular means m(s_j, r_l) of the source, radii sharing the time grid"""
    geometry: SensorGeometry
    radii: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        _check_rows(self.values, self.geometry.n, self.radii, "means")

    @property
    def times(self) -> TimeGrid:
        return self.radii


@dataclass(frozen=True)
class CsData:
    """Compressed measurements Y = A P; domain tells whether rows are pressures or transformed means"""
    matrix_ref: str
    times: TimeGrid
    values: np.ndarray
    domain: str = "pressure"

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 2 or self.values.shape[1] != self.times.q:
            raise DimensionMismatchError(
                f"CS data must have {self.times.q} columns, got shape {self.values.shape}"
            )
        if self.domain not in ("pressure", "means"):
            raise ValueError(f"unknown CS data domain: {self.domain}")

    @property
    def m(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class RecoveredMeans:
    """Full-sensor transformed data H recovered from compressed data by TV minimization"""
    times: TimeGrid
    values: np.ndarray
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        if self.values.ndim != 2 or self.values.shape[1] != self.times.q:
            raise DimensionMismatchError(
                f"recovered means must have {self.times.q} columns, got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("recovered means contain non-finite entries")


@dataclass(frozen=True)
class TvSliceResult:
    """Best iterate of one TV time-slice solve; objective_history[i] is the best objective after i+1 iterations"""
    solution: np.ndarray
    objective: float
    objective_history: np.ndarray
    iterations: int
    converged: bool
    lam: float


@dataclass(frozen=True)
class TwoStepResult:
    image: SourceImage
    means: RecoveredMeans
