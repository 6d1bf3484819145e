"""
Two-step reconstruction: TV recovery of the transformed full-sensor data from
compressed data, then filtered backprojection from the recovered means.

Every time slice solves

    min_h  ||A h - y||_2^2 + lambda ||D h||_1

with D the first difference across the sensor index. The slices are solved
together by a Chambolle-Pock iteration vectorized over columns: the data term
is the primal function (its prox is an exact linear solve in the eigenbasis of
A^T A) and the dual variable of lambda D is projected onto [-1, 1].

Every POLISH_INTERVAL iterations each open slice is also solved exactly on the
jump set its dual variable points at; a solution that passes the optimality
conditions ends that slice.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import lstsq, null_space

from app.exceptions import DimensionMismatchError
from app.models.config import Boundary, TvOptions
from app.models.data import CsData, RecoveredMeans, TvSliceResult, TwoStepResult
from app.models.design import StructuredCsMatrix
from app.models.geometry import ImageGrid, SensorGeometry
from app.services.wave import apply_T, fbp_from_means

logger = logging.getLogger(__name__)

# ||D||_2 <= 2 for any first-difference matrix (two unit entries per row and column)
DIFFERENCE_NORM_BOUND = 2.0
# Step-size safety factor on sigma * tau * ||lambda D||^2 < 1
STEP_FACTOR = 0.99
# Dual entries this close to +-1 mark rows allowed to jump
ACTIVE_DUAL_MARGIN = 1e-12
# Tolerance of the optimality checks on a polished slice
KKT_TOL = 1e-6
# Iterations between attempts to solve a slice exactly on its current jump set
POLISH_INTERVAL = 50

MatrixLike = Union[StructuredCsMatrix, np.ndarray]


def _entries(A: MatrixLike) -> np.ndarray:
    return np.asarray(A.entries if isinstance(A, StructuredCsMatrix) else A, dtype=float)


def difference_operator(n: int, boundary: Boundary = Boundary.CIRCULAR, group_size: Optional[int] = None) -> np.ndarray:
    """
    First-difference matrix across the sensor index

    Args:
        n: Number of sensors
        boundary: circular (row i is h[i+1 mod n] - h[i]) or per-group
            (open differences inside consecutive groups of group_size sensors)
        group_size: Sensors per group, required for per-group

    Returns:
        Dense difference matrix
    """
    if n < 1:
        raise ValueError(f"sensor count must be positive, got {n}")
    boundary = Boundary(boundary)
    if boundary == Boundary.CIRCULAR:
        eye = np.eye(n)
        return np.roll(eye, -1, axis=0) - eye

    if not group_size or n % group_size:
        raise DimensionMismatchError(f"{n} sensors do not split into groups of {group_size}")
    rows = []
    for start in range(0, n, group_size):
        for i in range(start, start + group_size - 1):
            row = np.zeros(n)
            row[i], row[i + 1] = -1.0, 1.0
            rows.append(row)
    return np.array(rows).reshape(len(rows), n)


def _objective(A: np.ndarray, D: np.ndarray, X: np.ndarray, Y: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.sum((A @ X - Y) ** 2, axis=0) + lam * np.sum(np.abs(D @ X), axis=0)


def _polish_column(A: np.ndarray, D: np.ndarray, y: np.ndarray, lam: float, p: np.ndarray) -> Optional[np.ndarray]:
    """
    Exact minimizer on the jump set of a dual iterate, or None if it fails the optimality conditions

    Rows where p sits on +-1 may jump with that sign; all other differences are
    held at zero. The reduced quadratic is solved directly and accepted only if
    the jump signs agree and a dual vector with |p| <= 1 closes stationarity.
    """
    n = A.shape[1]
    on = np.abs(p) >= 1.0 - ACTIVE_DUAL_MARGIN
    signs = np.sign(p[on])
    D_on, D_zero = D[on], D[~on]
    N = null_space(D_zero) if D_zero.shape[0] else np.eye(n)
    if N.shape[1] == 0:
        return None

    AN = A @ N
    rhs = 2.0 * AN.T @ y - lam * N.T @ (D_on.T @ signs)
    x = N @ lstsq(2.0 * AN.T @ AN, rhs)[0]

    x_scale = max(float(np.abs(x).max(initial=0.0)), np.finfo(float).tiny)
    if np.any(signs * (D_on @ x) < -KKT_TOL * x_scale):
        return None

    g = -2.0 * A.T @ (A @ x - y) / lam - D_on.T @ signs
    tolerance = KKT_TOL * (1.0 + float(np.abs(g).max(initial=0.0)))
    if D_zero.shape[0] == 0:
        return x if np.abs(g).max(initial=0.0) <= tolerance else None

    p_zero = lstsq(D_zero.T, g)[0]
    free = null_space(D_zero.T)
    if free.shape[1] == 1 and np.ptp(free[:, 0]) <= KKT_TOL * np.abs(free[:, 0]).max():
        # constant dual direction (closed circular chain): centre the range
        p_zero = p_zero - 0.5 * (p_zero.max() + p_zero.min())
    elif free.shape[1]:
        return None
    if np.abs(D_zero.T @ p_zero - g).max() > tolerance:
        return None
    if np.abs(p_zero).max(initial=0.0) > 1.0 + KKT_TOL:
        return None
    return x


def _chambolle_pock(
    A: np.ndarray,
    D: np.ndarray,
    Y: np.ndarray,
    lam: np.ndarray,
    max_iter: int,
    tol: float,
    track_history: bool = False,
):
    """Column-wise primal-dual iteration; returns best iterates, their objectives, iteration counts, convergence flags, history"""
    n, L = A.shape[1], Y.shape[1]
    mu, V = np.linalg.eigh(A.T @ A)
    coeff_y = V.T @ (A.T @ Y)
    # components in the null space of A receive nothing from the data
    coeff_y[mu <= mu.max(initial=0.0) * n * np.finfo(float).eps] = 0.0

    scale = np.abs(Y).max(axis=0, initial=0.0)
    X = np.zeros((n, L))
    X_bar = np.zeros((n, L))
    P = np.zeros((D.shape[0], L))
    best = np.zeros((n, L))
    best_objective = np.sum(Y ** 2, axis=0)
    iterations = np.zeros(L, dtype=int)
    converged = scale == 0
    history = np.zeros((max_iter, L)) if track_history else None

    # tau = S / lambda keeps the iterates positively homogeneous in (y, lambda)
    tau = np.where(converged, 1.0, scale / lam)
    sigma = STEP_FACTOR / (tau * lam ** 2 * DIFFERENCE_NORM_BOUND ** 2)

    active = np.flatnonzero(~converged)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        x, x_bar, p = X[:, active], X_bar[:, active], P[:, active]
        lam_a, tau_a, sigma_a = lam[active], tau[active], sigma[active]

        p = np.clip(p + sigma_a * lam_a * (D @ x_bar), -1.0, 1.0)
        coeff = V.T @ (x - tau_a * lam_a * (D.T @ p)) + 2.0 * tau_a * coeff_y[:, active]
        x_new = V @ (coeff / (1.0 + 2.0 * np.outer(mu, tau_a)))

        X[:, active], X_bar[:, active], P[:, active] = x_new, 2.0 * x_new - x, p

        objective = _objective(A, D, x_new, Y[:, active], lam_a)
        improved = objective < best_objective[active]
        best[:, active[improved]] = x_new[:, improved]
        best_objective[active[improved]] = objective[improved]
        iterations[active] = it

        change = np.linalg.norm(x_new - x, axis=0)
        size = np.linalg.norm(x_new, axis=0)
        done = change <= tol * np.maximum(size, np.finfo(float).tiny)
        if it % POLISH_INTERVAL == 0:
            for i in np.flatnonzero(~done):
                column = active[i]
                exact = _polish_column(A, D, Y[:, column], lam[column], p[:, i])
                if exact is None:
                    continue
                value = _objective(A, D, exact[:, None], Y[:, column:column + 1], lam[column:column + 1])[0]
                # certified minimizer; objectives stay non-increasing
                best[:, column] = exact
                best_objective[column] = min(value, best_objective[column])
                done[i] = True
        if history is not None:
            history[it - 1, active] = best_objective[active]
        converged[active[done]] = True
        active = active[~done]

    if history is not None:
        last = max(int(iterations.max(initial=0)), 1)
        history = history[:last]
        # columns that stopped early keep their final value
        for column in range(L):
            if iterations[column] < last:
                history[iterations[column]:, column] = best_objective[column]
    return best, best_objective, iterations, converged, history


def resolve_lambda(opts: TvOptions, data: np.ndarray) -> float:
    """Explicit TV weight, or lam_scale times the largest data magnitude"""
    if opts.lam is not None:
        return float(opts.lam)
    peak = float(np.max(np.abs(data), initial=0.0))
    return opts.lam_scale * peak if peak > 0 else opts.lam_scale


def _operators(A: MatrixLike, m: int, opts: TvOptions) -> Tuple[np.ndarray, np.ndarray]:
    entries = _entries(A)
    if entries.shape[0] != m:
        raise DimensionMismatchError(f"CS matrix has {entries.shape[0]} rows for {m} measurements")
    return entries, difference_operator(entries.shape[1], opts.boundary, opts.group_size)


def tv_solve_time_slice(A: MatrixLike, y, opts: TvOptions) -> TvSliceResult:
    """
    Minimize ||A h - y||^2 + lambda ||D h||_1 for one time slice

    Args:
        A: CS matrix (m x n)
        y: Compressed data of one time sample (length m)
        opts: TV weight, boundary mode and stopping rule

    Returns:
        TvSliceResult with the best iterate; hitting max_iter is reported, not raised
    """
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatchError(f"time slice must be a vector, got shape {y.shape}")
    entries, D = _operators(A, y.shape[0], opts)
    lam = resolve_lambda(opts, y)

    best, objective, iterations, converged, history = _chambolle_pock(
        entries, D, y[:, None], np.array([lam]), opts.max_iter, opts.tol, track_history=True
    )
    if not converged[0]:
        logger.warning(f"TV slice stopped at max_iter={opts.max_iter} with objective {objective[0]:.6e}")
    return TvSliceResult(
        solution=best[:, 0],
        objective=float(objective[0]),
        objective_history=history[:, 0],
        iterations=int(iterations[0]),
        converged=bool(converged[0]),
        lam=lam,
    )


def tv_recover_means(A: MatrixLike, YT: CsData, opts: TvOptions) -> RecoveredMeans:
    """
    Recover the full-sensor transformed data H column by column

    Column l of H solves the time-slice problem for column l of YT; the global
    objective is the sum of the slice objectives.
    """
    if YT.domain != "means":
        raise ValueError("TV recovery expects T-transformed CS data (domain 'means')")
    entries, D = _operators(A, YT.m, opts)
    lam = resolve_lambda(opts, YT.values)

    best, objective, iterations, converged, _ = _chambolle_pock(
        entries, D, YT.values, np.full(YT.times.q, lam), opts.max_iter, opts.tol
    )

    warnings = [
        f"slice {column} stopped at max_iter={opts.max_iter} with objective {objective[column]:.6e}"
        for column in np.flatnonzero(~converged)
    ]
    if warnings:
        logger.warning(f"{len(warnings)} of {YT.times.q} TV slices hit max_iter={opts.max_iter}")
    logger.info(f"TV recovery ({YT.matrix_ref}): lambda={lam:.3e}, total objective {objective.sum():.6e}")

    diagnostics = {
        "matrix": YT.matrix_ref,
        "lambda": lam,
        "boundary": Boundary(opts.boundary).value,
        "max_iter": opts.max_iter,
        "tol": opts.tol,
        "total_objective": float(objective.sum()),
        "converged_slices": int(converged.sum()),
        "iterations": iterations.tolist(),
        "objective": objective.tolist(),
    }
    return RecoveredMeans(times=YT.times, values=best, diagnostics=diagnostics, warnings=warnings)


def two_step_reconstruct(
    Y: CsData,
    A: StructuredCsMatrix,
    geom: SensorGeometry,
    grid: ImageGrid,
    opts: TvOptions,
) -> TwoStepResult:
    """
    Transform, recover, backproject

    Args:
        Y: Compressed pressure data (or already transformed data)
        A: CS matrix that produced Y
        geom: Full detector geometry
        grid: Reconstruction grid
        opts: TV options

    Returns:
        TwoStepResult with the image and the recovered means
    """
    if A.shape[1] != geom.n:
        raise DimensionMismatchError(f"CS matrix has {A.shape[1]} columns for {geom.n} sensors")
    YT = apply_T(Y) if Y.domain == "pressure" else Y
    H = tv_recover_means(A, YT, opts)
    return TwoStepResult(image=fbp_from_means(H, geom, grid), means=H)
