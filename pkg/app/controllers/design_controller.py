import logging
from typing import Any, Dict

import numpy as np
from fastapi import HTTPException
from fastapi.concurrency import run_in_threadpool

from app.exceptions import CapacityError, DesignInfeasibleError
from app.models.design import StructureSpec
from app.services.csdesign import optimize_sin, rip_constant, sin_number, sin_profile
from app.services.experiment import PROFILE_KS

logger = logging.getLogger(__name__)


def http_error(e: Exception) -> HTTPException:
    """Map toolkit exceptions onto HTTP status codes"""
    if isinstance(e, CapacityError):
        return HTTPException(status_code=422, detail=str(e))
    if isinstance(e, DesignInfeasibleError):
        return HTTPException(status_code=409, detail=str(e))
    if isinstance(e, ValueError):
        return HTTPException(status_code=400, detail=str(e))
    return HTTPException(status_code=500, detail=f"Internal server error: {str(e)}")


def _matrix_from_request(request: Dict[str, Any]) -> np.ndarray:
    matrix = request.get("matrix")
    if not matrix:
        raise HTTPException(status_code=400, detail="matrix is required")
    try:
        matrix = np.array(matrix, dtype=float)
    except (TypeError, ValueError):
        raise HTTPException(status_code=400, detail="matrix must be a rectangular list of numbers")
    if matrix.ndim != 2:
        raise HTTPException(status_code=400, detail="matrix must be two-dimensional")
    return matrix


async def design_controller(request: Dict[str, Any]) -> Dict[str, Any]:
    """
    Controller logic for the randomized SIN design of one group matrix

    Args:
        request: Dictionary with b, g, m0, k, n_iter and seed (all optional)

    Returns:
        Response dictionary with the best selection list, matrix and SIN
    """
    try:
        spec = StructureSpec(
            b=request.get("b", 4),
            g=request.get("g", 4),
            group_count=1,
            m0=request.get("m0", 12),
        )
        k = int(request.get("k", 4))
        n_iter = int(request.get("n_iter", 100))
        seed = int(request.get("seed", 0))
        if n_iter > 1_000_000:
            raise HTTPException(status_code=400, detail="n_iter must not exceed 1000000")

        logger.info(f"Design request received: b={spec.b}, g={spec.g}, m0={spec.m0}, k={k}, n_iter={n_iter}")
        result = await run_in_threadpool(optimize_sin, spec, k, n_iter, seed)

        ks = [j for j in PROFILE_KS if j <= spec.n0]
        response = {
            "success": True,
            "sin": result.best_sin,
            "k": result.k,
            "seed": result.seed,
            "iterations": result.iterations_used,
            "selection_list": result.best_list.to_list(),
            "matrix": result.best_matrix.entries.astype(int).tolist(),
            "profile": await run_in_threadpool(sin_profile, result.best_matrix, ks),
        }
        logger.info(f"Design completed: SIN={result.best_sin:.6f}")
        return response

    except HTTPException:
        raise
    except Exception as e:
        logger.error(f"Error in design request: {str(e)}")
        raise http_error(e)


async def sin_controller(request: Dict[str, Any]) -> Dict[str, Any]:
    """
    Controller logic for the sparse injectivity number of a matrix

    Args:
        request: Dictionary with matrix (list of rows) and k

    Returns:
        Response dictionary with theta, the worst subset and its certificate vector
    """
    try:
        matrix = _matrix_from_request(request)
        k = request.get("k")
        if k is None:
            raise HTTPException(status_code=400, detail="k is required")

        logger.info(f"SIN request received: matrix {matrix.shape}, k={k}")
        report = await run_in_threadpool(sin_number, matrix, int(k))
        return {
            "success": True,
            "k": report.k,
            "theta": report.theta,
            "worst_subset": list(report.worst_subset),
            "worst_vector": report.worst_vector.tolist(),
        }

    except HTTPException:
        raise
    except Exception as e:
        logger.error(f"Error in SIN request: {str(e)}")
        raise http_error(e)


async def rip_controller(request: Dict[str, Any]) -> Dict[str, Any]:
    """Controller logic for the restricted isometry constant of a matrix"""
    try:
        matrix = _matrix_from_request(request)
        s = request.get("s")
        if s is None:
            raise HTTPException(status_code=400, detail="s is required")

        logger.info(f"RIP request received: matrix {matrix.shape}, s={s}")
        report = await run_in_threadpool(rip_constant, matrix, int(s))
        return {"success": True, "s": report.s, "delta": report.delta, "worst_subset": list(report.worst_subset)}

    except HTTPException:
        raise
    except Exception as e:
        logger.error(f"Error in RIP request: {str(e)}")
        raise http_error(e)
