from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.models.geometry import _freeze


class StructureSpec(BaseModel):
    """Switch/summation structure of the CS unit: b sensors per block, g blocks per group"""
    model_config = ConfigDict(frozen=True)

    b: int = Field(4, ge=1, description="sensors per block (sharing one switch)")
    g: int = Field(4, ge=1, description="blocks per group")
    group_count: int = Field(4, ge=1)
    m0: int = Field(12, ge=1, description="measurements per group")

    @property
    def n0(self) -> int:
        return self.b * self.g

    @property
    def n(self) -> int:
        return self.n0 * self.group_count


@dataclass(frozen=True)
class SelectionList:
    """m0 rows of g entries in {0..b}: 0 switches the block off, k selects its k-th sensor"""
    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=np.int64)
        if entries.ndim != 2:
            raise ValueError(f"selection list must be 2-D, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def zeros(cls, spec: StructureSpec) -> "SelectionList":
        return cls(np.zeros((spec.m0, spec.g), dtype=np.int64))

    def to_list(self):
        return self.entries.tolist()


@dataclass(frozen=True)
class StructuredCsMatrix:
    """Admissible binary CS matrix: one group (m0 x n0) or a block-diagonal assembly of groups"""
    spec: StructureSpec
    entries: np.ndarray
    origin: Tuple[SelectionList, ...]
    label: str = "A"

    def __post_init__(self):
        object.__setattr__(self, "entries", _freeze(self.entries))
        groups = len(self.origin)
        expected = (groups * self.spec.m0, groups * self.spec.n0)
        if groups < 1 or self.entries.shape != expected:
            raise ValueError(f"matrix shape {self.entries.shape} does not match {groups} group(s) {expected}")
        if not np.all((self.entries == 0.0) | (self.entries == 1.0)):
            raise ValueError("CS matrix entries must be binary")
        b, m0, n0 = self.spec.b, self.spec.m0, self.spec.n0
        per_block = self.entries.reshape(expected[0], -1, b).sum(axis=2)
        if np.any(per_block > 1):
            raise ValueError("a measurement activates more than one sensor of a block")
        for gi in range(groups):
            rows = slice(gi * m0, (gi + 1) * m0)
            mask = np.ones(expected[1], dtype=bool)
            mask[gi * n0:(gi + 1) * n0] = False
            if np.any(self.entries[rows][:, mask] != 0.0):
                raise ValueError("assembled CS matrix is not block diagonal")

    @property
    def groups(self) -> int:
        return len(self.origin)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape

    def group(self, index: int) -> np.ndarray:
        m0, n0 = self.spec.m0, self.spec.n0
        return self.entries[index * m0:(index + 1) * m0, index * n0:(index + 1) * n0]


@dataclass(frozen=True)
class SinReport:
    """Sparse injectivity number for column subsets of size k, with its certificate"""
    k: int
    theta: float
    worst_subset: Tuple[int, ...]
    worst_vector: np.ndarray
    exhaustive: bool = True

    def __post_init__(self):
        object.__setattr__(self, "worst_vector", _freeze(self.worst_vector))


@dataclass(frozen=True)
class RipReport:
    s: int
    delta: float
    worst_subset: Tuple[int, ...]


@dataclass(frozen=True)
class DesignResult:
    """Best matrix of the randomized design search"""
    best_matrix: StructuredCsMatrix
    best_sin: float
    best_list: SelectionList
    iterations_used: int
    seed: int
    k: int
