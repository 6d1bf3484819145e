import math
import logging
import itertools
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import block_diag

from app import config
from app.exceptions import CapacityError, DesignInfeasibleError, DimensionMismatchError
from app.models.design import (
    DesignResult,
    RipReport,
    SelectionList,
    SinReport,
    StructureSpec,
    StructuredCsMatrix,
)

logger = logging.getLogger(__name__)

# Subsets screened per batch of Gram eigenvalue problems
SUBSET_CHUNK = 256
# Screened values within this distance of the running minimum are recomputed by SVD
SCREEN_MARGIN = 1e-6

SeedLike = Union[int, np.random.Generator, None]


def _as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def l0_norm(x: Sequence[float]) -> int:
    """Number of nonzero entries"""
    return int(np.count_nonzero(np.asarray(x)))


def best_s_term_error(x: Sequence[float], s: int) -> float:
    """l1 norm of everything except the s largest-magnitude entries (ties keep the lower index)"""
    if s < 0:
        raise ValueError(f"sparsity level must be non-negative, got {s}")
    x = np.asarray(x, dtype=float)
    order = np.argsort(-np.abs(x), kind="stable")
    return float(np.sum(np.abs(x[order[s:]])))


@lru_cache(maxsize=32)
def _column_subsets(n_cols: int, k: int) -> np.ndarray:
    count = math.comb(n_cols, k)
    if count > config.MAX_SUBSETS:
        raise CapacityError(
            f"C({n_cols}, {k}) = {count} column subsets exceeds the exhaustive limit of {config.MAX_SUBSETS}"
        )
    subsets = np.array(list(itertools.combinations(range(n_cols), k)), dtype=np.intp).reshape(count, k)
    subsets.setflags(write=False)
    return subsets


def _as_matrix(M) -> np.ndarray:
    if isinstance(M, StructuredCsMatrix):
        M = M.entries
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D matrix, got shape {M.shape}")
    return M


def _rank_tolerance(M: np.ndarray) -> float:
    # numpy.linalg.matrix_rank default
    if M.size == 0:
        return 0.0
    return max(M.shape) * np.finfo(float).eps * np.linalg.norm(M, 2)


def _subset_sigma_min(M: np.ndarray, subsets: np.ndarray) -> np.ndarray:
    m, k = M.shape[0], subsets.shape[1]
    if k > m:
        return np.zeros(len(subsets))
    blocks = np.transpose(M[:, subsets], (1, 0, 2))
    return np.linalg.svd(blocks, compute_uv=False)[:, -1]


def sample_selection_list(spec: StructureSpec, seed: SeedLike = None) -> SelectionList:
    """Draw every entry independently and uniformly from {0, 1, ..., b}"""
    rng = _as_generator(seed)
    return SelectionList(rng.integers(0, spec.b + 1, size=(spec.m0, spec.g)))


def make_cs_matrix(selection: SelectionList, spec: StructureSpec, label: str = "A") -> StructuredCsMatrix:
    """
    Build the binary m0 x n0 group matrix of a selection list

    Args:
        selection: m0 x g list; entry k > 0 activates the k-th sensor of that block
        spec: Block/group structure

    Returns:
        StructuredCsMatrix with a 1 in column (block - 1) * b + k for every nonzero entry
    """
    entries = selection.entries
    if entries.shape != (spec.m0, spec.g):
        raise DimensionMismatchError(f"selection list shape {entries.shape} does not match ({spec.m0}, {spec.g})")
    if entries.min(initial=0) < 0 or entries.max(initial=0) > spec.b:
        raise ValueError(f"selection entries must lie in 0..{spec.b}")

    matrix = np.zeros((spec.m0, spec.n0))
    rows, blocks = np.nonzero(entries)
    matrix[rows, blocks * spec.b + entries[rows, blocks] - 1] = 1.0
    return StructuredCsMatrix(spec=spec, entries=matrix, origin=(selection,), label=label)


def assemble_block_diagonal(groups: Sequence[StructuredCsMatrix], label: Optional[str] = None) -> StructuredCsMatrix:
    """Place group matrices on the diagonal of the full measurement matrix"""
    if not groups:
        raise ValueError("need at least one group matrix")
    spec = groups[0].spec
    if any(group.spec != spec for group in groups):
        raise DimensionMismatchError("group matrices do not share one structure spec")
    if len(groups) == 1:
        return groups[0]
    origin = tuple(sel for group in groups for sel in group.origin)
    entries = block_diag(*[group.entries for group in groups])
    return StructuredCsMatrix(spec=spec, entries=entries, origin=origin, label=label or groups[0].label)


def _trivially_singular(M: np.ndarray, k: int) -> bool:
    """A zero column, or two equal columns when k >= 2, forces a vanishing SIN"""
    if np.any(~M.any(axis=0)):
        return True
    if k >= 2:
        return np.unique(M, axis=1).shape[1] < M.shape[1]
    return False


def sin_number(M, k: int, stop_below: Optional[float] = None) -> SinReport:
    """
    Sparse injectivity number: smallest singular value over all k-column submatrices

    Args:
        M: Measurement matrix (array or StructuredCsMatrix)
        k: Column-subset size; use k = 2s for recovery of s-sparse signals
        stop_below: Abandon the enumeration as soon as some subset reaches this
            value; the report is then an upper bound with exhaustive=False

    Returns:
        SinReport with theta, the minimizing subset and a unit vector attaining it
    """
    M = _as_matrix(M)
    m, n = M.shape
    if not 1 <= k <= n:
        raise ValueError(f"subset size must lie in 1..{n}, got {k}")
    subsets = _column_subsets(n, k)
    tol = _rank_tolerance(M)
    gram = M.T @ M

    best_sigma, best_index, exhaustive = np.inf, 0, True
    for start in range(0, len(subsets), SUBSET_CHUNK):
        chunk = subsets[start:start + SUBSET_CHUNK]
        if k > m:
            best_sigma, best_index = 0.0, start
        else:
            lam_min = np.linalg.eigvalsh(gram[chunk[:, :, None], chunk[:, None, :]])[:, 0]
            screened = np.sqrt(np.clip(lam_min, 0.0, None))
            lowest = float(screened.min())
            if lowest <= best_sigma + SCREEN_MARGIN:
                candidates = np.flatnonzero(screened <= lowest + SCREEN_MARGIN)
                exact = _subset_sigma_min(M, chunk[candidates])
                exact[exact <= tol] = 0.0
                i = int(np.argmin(exact))
                if exact[i] < best_sigma:
                    best_sigma, best_index = float(exact[i]), start + int(candidates[i])
        if stop_below is not None and best_sigma <= stop_below:
            exhaustive = start + SUBSET_CHUNK >= len(subsets)
            break

    subset = subsets[best_index]
    _, _, vt = np.linalg.svd(M[:, subset], full_matrices=True)
    local = vt[-1]
    local = local * np.sign(local[np.argmax(np.abs(local))])
    vector = np.zeros(n)
    vector[subset] = local
    return SinReport(k=k, theta=best_sigma, worst_subset=tuple(int(c) for c in subset),
                     worst_vector=vector, exhaustive=exhaustive)


def rip_constant(M, s: int) -> RipReport:
    """Restricted isometry constant of order s by exhaustive enumeration (no column normalization)"""
    M = _as_matrix(M)
    m, n = M.shape
    if not 1 <= s <= n:
        raise ValueError(f"RIP order must lie in 1..{n}, got {s}")
    subsets = _column_subsets(n, s)

    best_delta, best_index = -np.inf, 0
    for start in range(0, len(subsets), SUBSET_CHUNK):
        chunk = subsets[start:start + SUBSET_CHUNK]
        sigma = np.linalg.svd(np.transpose(M[:, chunk], (1, 0, 2)), compute_uv=False)
        sigma_max = sigma[:, 0]
        sigma_min = sigma[:, -1] if s <= m else np.zeros(len(chunk))
        delta = np.maximum(np.abs(sigma_max ** 2 - 1.0), np.abs(1.0 - sigma_min ** 2))
        i = int(np.argmax(delta))
        if delta[i] > best_delta:
            best_delta, best_index = float(delta[i]), start + i
    return RipReport(s=s, delta=best_delta, worst_subset=tuple(int(c) for c in subsets[best_index]))


def sin_profile(M, ks: Iterable[int] = range(1, 6)) -> List[Tuple[int, float]]:
    """SIN for several subset sizes"""
    return [(k, sin_number(M, k).theta) for k in ks]


def optimize_sin(spec: StructureSpec, k: int, n_iter: int, seed: int = 0) -> DesignResult:
    """
    Randomized search for the admissible group matrix with the largest SIN

    Every iteration draws a selection list, builds its matrix and keeps it if
    its SIN strictly beats the incumbent (initially 0).

    Args:
        spec: Block/group structure
        k: Column-subset size of the SIN
        n_iter: Number of random draws
        seed: Seed of the draw stream

    Returns:
        DesignResult; best_sin = 0 means no injective matrix was found
    """
    if n_iter < 1:
        raise ValueError(f"iteration count must be positive, got {n_iter}")
    if not 1 <= k <= spec.n0:
        raise ValueError(f"subset size must lie in 1..{spec.n0}, got {k}")
    _column_subsets(spec.n0, k)

    rng = np.random.default_rng(seed)
    best_list = SelectionList.zeros(spec)
    best_matrix = make_cs_matrix(best_list, spec, label="optimized")
    best_sin = 0.0

    for iteration in range(n_iter):
        selection = sample_selection_list(spec, rng)
        candidate = make_cs_matrix(selection, spec, label="optimized")
        if _trivially_singular(candidate.entries, k):
            continue
        report = sin_number(candidate.entries, k, stop_below=best_sin)
        if report.theta > best_sin:
            best_sin, best_list, best_matrix = report.theta, selection, candidate
            logger.debug(f"Iteration {iteration}: SIN improved to {best_sin:.6f}")

    best_sin = sin_number(best_matrix.entries, k).theta
    logger.info(f"Design search (b={spec.b}, g={spec.g}, m0={spec.m0}, k={k}, n_iter={n_iter}): SIN={best_sin:.6f}")
    return DesignResult(best_matrix=best_matrix, best_sin=best_sin, best_list=best_list,
                        iterations_used=n_iter, seed=seed, k=k)


def draw_admissible_matrix(
    spec: StructureSpec,
    k: int,
    min_sin: float = 1e-3,
    seed: SeedLike = None,
    max_draws: int = 100000,
) -> Tuple[StructuredCsMatrix, SinReport, int]:
    """
    First random admissible matrix whose SIN reaches min_sin (the unoptimized comparator)

    Returns:
        (matrix, its SinReport, number of draws used)
    """
    rng = _as_generator(seed)
    for draw in range(1, max_draws + 1):
        candidate = make_cs_matrix(sample_selection_list(spec, rng), spec, label="random")
        if _trivially_singular(candidate.entries, k) and min_sin > 0:
            continue
        report = sin_number(candidate.entries, k)
        if report.theta >= min_sin:
            logger.info(f"Random comparator accepted after {draw} draws: SIN={report.theta:.6f}")
            return candidate, report, draw
    raise DesignInfeasibleError(f"no admissible matrix with SIN >= {min_sin} in {max_draws} draws")
