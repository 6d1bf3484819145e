from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


def _freeze(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SensorGeometry:
    """Detectors s_j = R (cos(Omega (j-1)/n), sin(Omega (j-1)/n)) on the detection circle"""
    n: int
    R: float
    Omega: float
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positions", _freeze(self.positions))
        if self.positions.shape != (self.n, 2):
            raise ValueError(f"positions must have shape ({self.n}, 2), got {self.positions.shape}")

    @property
    def arc_weight(self) -> float:
        """Arc length R*Omega/n carried by every detector"""
        return self.R * self.Omega / self.n


@dataclass(frozen=True)
class TimeGrid:
    """Uniform samples t_l = 2R (l-1)/(q-1); sound speed is 1, so it doubles as a radial grid"""
    q: int
    R: float
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", _freeze(self.t))
        if self.t.shape != (self.q,):
            raise ValueError(f"t must have shape ({self.q},), got {self.t.shape}")

    @property
    def dt(self) -> float:
        return 2.0 * self.R / (self.q - 1)


@dataclass(frozen=True)
class ImageGrid:
    """N_r x N_r pixel centers covering [-R, R]^2"""
    n_r: int
    R: float

    @property
    def spacing(self) -> float:
        return 2.0 * self.R / self.n_r

    @property
    def centers(self) -> np.ndarray:
        return -self.R + (np.arange(self.n_r) + 0.5) * self.spacing

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """X, Y coordinate arrays indexed [row = y, column = x]"""
        return np.meshgrid(self.centers, self.centers, indexing="xy")

    def inside_mask(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.hypot(X, Y) < self.R


@dataclass(frozen=True)
class SourceImage:
    """Initial pressure u sampled on an ImageGrid, supported strictly inside the detection circle"""
    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        shape = (self.grid.n_r, self.grid.n_r)
        if self.values.shape != shape:
            raise ValueError(f"image values must have shape {shape}, got {self.values.shape}")
        if np.any(self.values[~self.grid.inside_mask()] != 0.0):
            raise ValueError("source image has support outside the detection circle")

    def __add__(self, other: "SourceImage") -> "SourceImage":
        if other.grid != self.grid:
            raise ValueError("cannot add images on different grids")
        return SourceImage(self.grid, self.values + other.values)

    def scaled(self, factor: float) -> "SourceImage":
        return SourceImage(self.grid, factor * self.values)


class DiscProfile(str, Enum):
    UNIFORM = "uniform"
    INVERSE_SQRT = "inverse-sqrt"
    SMOOTH = "smooth"


class DiscSpec(BaseModel):
    """One circular building block of a phantom"""
    model_config = ConfigDict(frozen=True)

    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = Field(..., gt=0)
    amplitude: float = 1.0
    profile: DiscProfile = DiscProfile.UNIFORM
