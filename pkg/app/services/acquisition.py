import logging
from typing import Union

import numpy as np

from app.exceptions import DimensionMismatchError
from app.models.data import CsData, MeansData, PressureData
from app.models.design import StructuredCsMatrix

logger = logging.getLogger(__name__)


def apply_cs(A: StructuredCsMatrix, P: Union[PressureData, MeansData]) -> CsData:
    """
    Form compressed data Y = A P; A sums sensor rows, the time index is untouched

    Args:
        A: Admissible CS matrix (columns = sensors)
        P: Full-sensor pressure or circular means

    Returns:
        CsData in the domain of P
    """
    if A.shape[1] != P.geometry.n:
        raise DimensionMismatchError(f"CS matrix has {A.shape[1]} columns for {P.geometry.n} sensors")
    domain = "means" if isinstance(P, MeansData) else "pressure"
    return CsData(matrix_ref=A.label, times=P.times, values=A.entries @ P.values, domain=domain)


def relative_l2(a, b) -> float:
    """||a - b||_2 / ||b||_2"""
    a = np.asarray(getattr(a, "values", a), dtype=float)
    b = np.asarray(getattr(b, "values", b), dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot compare shapes {a.shape} and {b.shape}")
    reference = np.linalg.norm(b)
    if reference == 0:
        raise ValueError("relative error against a zero reference is undefined")
    return float(np.linalg.norm(a - b) / reference)


def add_noise(Y: CsData, target_rel_error: float, seed: int) -> CsData:
    """
    Add white Gaussian noise rescaled so that ||noise|| / ||Y|| equals target_rel_error

    Args:
        Y: Clean compressed data
        target_rel_error: Requested relative data error (0 returns Y)
        seed: Seed of the noise realization

    Returns:
        Noisy copy of Y
    """
    if target_rel_error < 0:
        raise ValueError(f"noise level must be non-negative, got {target_rel_error}")
    if target_rel_error == 0:
        return Y
    norm = np.linalg.norm(Y.values)
    if norm == 0:
        raise ValueError("cannot scale noise relative to zero data")

    noise = np.random.default_rng(seed).standard_normal(Y.values.shape)
    noise *= target_rel_error * norm / np.linalg.norm(noise)
    logger.info(f"Added noise at relative level {target_rel_error:.4f} to {Y.matrix_ref} data")
    return CsData(matrix_ref=Y.matrix_ref, times=Y.times, values=Y.values + noise, domain=Y.domain)
