"""
Acoustic forward model of the circular PAPI geometry and its inversion.

The 2D pressure of an initial source u is written through the circular means
m(s, r) of u around the detectors,

    p(s, t) = d/dt  int_0^t  r m(s, r) / sqrt(t^2 - r^2) dr,

so the forward map is "circular means -> Abel weighting -> time derivative".
The temporal transform T undoes the last two steps (antiderivative, inverse
Abel, division by r) and recovers the means from pressure rows; it acts on
the time index only and therefore commutes with any CS matrix.
"""
import logging
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_triangular
from scipy.ndimage import map_coordinates

from app.exceptions import DimensionMismatchError
from app.models.data import CsData, MeansData, PressureData, RecoveredMeans
from app.models.geometry import ImageGrid, SensorGeometry, SourceImage, TimeGrid

logger = logging.getLogger(__name__)

# Angular samples per image row used by circular_means
ANGLES_PER_PIXEL_ROW = 4
# FBP filter samples per time step in the detector-pixel distance
FBP_DISTANCE_OVERSAMPLE = 8


@lru_cache(maxsize=16)
def _abel_weights(q: int, R: float) -> np.ndarray:
    t = 2.0 * R * np.arange(q) / (q - 1)
    h = t[1] - t[0]
    weights = np.zeros((q, q))
    for ell in range(1, q):
        tl = t[ell]
        r0 = t[:ell]
        r1 = t[1:ell + 1]
        # int dr / sqrt(t^2 - r^2) and int r dr / sqrt(t^2 - r^2) over every cell
        i0 = np.arcsin(np.clip(r1 / tl, -1.0, 1.0)) - np.arcsin(r0 / tl)
        i1 = np.sqrt(np.maximum(tl * tl - r0 * r0, 0.0)) - np.sqrt(np.maximum(tl * tl - r1 * r1, 0.0))
        weights[ell, :ell] += (r1 * i0 - i1) / h
        weights[ell, 1:ell + 1] += (i1 - r0 * i0) / h
    weights.setflags(write=False)
    return weights


def abel_matrix(times: TimeGrid) -> np.ndarray:
    """
    Lower-triangular weights W with (W g)_l = int_0^{t_l} g(r) / sqrt(t_l^2 - r^2) dr

    The integral is exact for the piecewise-linear interpolant of g on the grid;
    the square-root singularity is integrated in closed form on every cell.
    """
    return _abel_weights(times.q, times.R)


@lru_cache(maxsize=16)
def _fbp_table(q: int, R: float, oversample: int) -> Tuple[np.ndarray, np.ndarray]:
    t = 2.0 * R * np.arange(q) / (q - 1)
    h = t[1] - t[0]
    count = (q - 1) * oversample + 1
    distances = 2.0 * R * np.arange(count) / (count - 1)
    # d = 0 diverges logarithmically and no pixel sits on a detector
    distances[0] = h / (2 * oversample)

    d = distances[:, None]
    lo = np.maximum(t[None, :-1], d)
    hi = np.maximum(t[None, 1:], d)
    # int dt / sqrt(t^2 - d^2) = arccosh(t/d), int t dt / sqrt(t^2 - d^2) = sqrt(t^2 - d^2)
    j0 = np.arccosh(hi / d) - np.arccosh(lo / d)
    j1 = np.sqrt(hi * hi - d * d) - np.sqrt(lo * lo - d * d)
    weights = np.zeros((len(distances), q))
    weights[:, :-1] += (t[None, 1:] * j0 - j1) / h
    weights[:, 1:] += (j1 - t[None, :-1] * j0) / h

    distances.setflags(write=False)
    weights.setflags(write=False)
    return distances, weights


def fbp_distances(times: TimeGrid, oversample: int = FBP_DISTANCE_OVERSAMPLE) -> np.ndarray:
    """Detector-pixel distances at which the FBP filter is tabulated"""
    return _fbp_table(times.q, times.R, oversample)[0]


def fbp_filter_matrix(times: TimeGrid, oversample: int = FBP_DISTANCE_OVERSAMPLE) -> np.ndarray:
    """
    Weights K with (K f)_k = int_{d_k}^{2R} f(t) / sqrt(t^2 - d_k^2) dt for piecewise-linear f

    Rows belong to fbp_distances(times, oversample); cells cut by d_k are
    integrated over their part beyond d_k.
    """
    return _fbp_table(times.q, times.R, oversample)[1]


def fbp_tail_weights(times: TimeGrid, oversample: int = FBP_DISTANCE_OVERSAMPLE) -> np.ndarray:
    """
    Contribution of t > 2R per unit of t p at the final sample

    Beyond the recording window t p decays like c / t, which integrates to
    -(t p)(2R) / (2R + sqrt(4R^2 - d^2)).
    """
    T = 2.0 * times.R
    d = fbp_distances(times, oversample)
    return -1.0 / (T + np.sqrt(np.maximum(T * T - d * d, 0.0)))


def circular_means(
    u: SourceImage,
    geom: SensorGeometry,
    radii: TimeGrid,
    n_angles: Optional[int] = None,
) -> MeansData:
    """
    Average u over circles of radius r_l centred at every detector

    Args:
        u: Source image
        geom: Detector geometry
        radii: Radial grid (the time grid, sound speed 1)
        n_angles: Angular quadrature size, default 4 * N_r

    Returns:
        MeansData with values[j, l] = (1/2pi) int u(s_j + r_l (cos phi, sin phi)) dphi
    """
    grid = u.grid
    n_angles = n_angles or ANGLES_PER_PIXEL_ROW * grid.n_r
    phi = 2.0 * np.pi * np.arange(n_angles) / n_angles
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)
    origin = grid.centers[0]
    spacing = grid.spacing
    r = radii.t[:, None]

    values = np.empty((geom.n, radii.q))
    for j, (sx, sy) in enumerate(geom.positions):
        cols = (sx + r * cos_phi - origin) / spacing
        rows = (sy + r * sin_phi - origin) / spacing
        samples = map_coordinates(
            u.values, [rows.ravel(), cols.ravel()], order=1, mode="grid-constant", cval=0.0
        )
        values[j] = samples.reshape(radii.q, n_angles).mean(axis=1)
    return MeansData(geometry=geom, radii=radii, values=values)


def _means_to_pressure(values: np.ndarray, times: TimeGrid) -> np.ndarray:
    abel = abel_matrix(times)
    integrated = (times.t * values) @ abel.T
    return np.gradient(integrated, times.dt, axis=1)


def _pressure_to_means(values: np.ndarray, times: TimeGrid) -> np.ndarray:
    abel = abel_matrix(times)
    integrated = cumulative_trapezoid(values, dx=times.dt, axis=1, initial=0.0)
    weighted = np.zeros_like(integrated)
    # r_1 = 0 carries r * m = 0, so only the lower-right block is solved
    weighted[:, 1:] = solve_triangular(abel[1:, 1:], integrated[:, 1:].T, lower=True).T
    means = np.empty_like(weighted)
    means[:, 1:] = weighted[:, 1:] / times.t[1:]
    if times.q >= 4:
        means[:, 0] = 3.0 * means[:, 1] - 3.0 * means[:, 2] + means[:, 3]
    else:
        means[:, 0] = means[:, 1]
    return means


def wave_forward(
    u: SourceImage,
    geom: SensorGeometry,
    times: TimeGrid,
    n_angles: Optional[int] = None,
) -> PressureData:
    """Simulate the sampled 2D pressure W u at every detector"""
    means = circular_means(u, geom, times, n_angles)
    logger.info(f"Forward model: {geom.n} detectors x {times.q} time samples")
    return PressureData(geometry=geom, times=times, values=_means_to_pressure(means.values, times))


def apply_T(data: Union[PressureData, CsData]) -> Union[MeansData, CsData]:
    """
    Temporal transform T: antiderivative, inverse Abel transform, division by r

    Pressure rows become circular-mean rows. CsData in the pressure domain is
    transformed row by row as well, which is the commutation A T = T A.
    """
    if isinstance(data, PressureData):
        return MeansData(geometry=data.geometry, radii=data.times,
                         values=_pressure_to_means(data.values, data.times))
    if isinstance(data, CsData):
        if data.domain != "pressure":
            raise ValueError("CS data is already in the means domain")
        return CsData(matrix_ref=data.matrix_ref, times=data.times,
                      values=_pressure_to_means(data.values, data.times), domain="means")
    raise TypeError(f"apply_T expects PressureData or CsData, got {type(data).__name__}")


def apply_T_inverse(H: Union[MeansData, RecoveredMeans], geom: SensorGeometry) -> PressureData:
    """T^-1: forward Abel weighting of r H followed by time differentiation"""
    return PressureData(geometry=geom, times=H.times, values=_means_to_pressure(H.values, H.times))


def fbp_from_pressure(
    P: PressureData,
    geom: SensorGeometry,
    grid: ImageGrid,
    tail_correction: bool = True,
) -> SourceImage:
    """
    Filtered backprojection for the circular geometry

    u(r) = -1/(pi R) sum_j (R Omega / n) int_{|r - s_j|}^inf (d/dt t p)(s_j, t) / sqrt(t^2 - |r - s_j|^2) dt

    The inner integral is evaluated exactly for piecewise-linear data on a
    distance table FBP_DISTANCE_OVERSAMPLE times finer than the time grid and
    interpolated linearly to every pixel distance. Past t = 2R it is closed
    with the far-field decay of t p unless tail_correction is False.
    """
    if P.values.shape[0] != geom.n:
        raise DimensionMismatchError(f"pressure has {P.values.shape[0]} rows for {geom.n} detectors")
    times = P.times
    weighted = times.t * P.values
    filtered = np.gradient(weighted, times.dt, axis=1) @ fbp_filter_matrix(times).T
    if tail_correction:
        filtered += np.outer(weighted[:, -1], fbp_tail_weights(times))
    distances = fbp_distances(times)

    X, Y = grid.mesh()
    image = np.zeros((grid.n_r, grid.n_r))
    for j, (sx, sy) in enumerate(geom.positions):
        image += np.interp(np.hypot(X - sx, Y - sy), distances, filtered[j])
    image *= -geom.arc_weight / (np.pi * geom.R)
    image[~grid.inside_mask()] = 0.0
    return SourceImage(grid, image)


def fbp_from_means(H: Union[MeansData, RecoveredMeans], geom: SensorGeometry, grid: ImageGrid) -> SourceImage:
    """Backproject transformed data: FBP applied to T^-1 H"""
    return fbp_from_pressure(apply_T_inverse(H, geom), geom, grid)


def pressure_inner_product(P: PressureData, V: PressureData) -> float:
    """Weighted data inner product sum_j (R Omega / n) int p v t dt (trapezoidal in t)"""
    times = P.times
    weights = np.full(times.q, times.dt)
    weights[[0, -1]] *= 0.5
    return float(P.geometry.arc_weight * np.sum(P.values * V.values * (weights * times.t)))


def image_inner_product(u: SourceImage, v: SourceImage) -> float:
    return float(u.grid.spacing ** 2 * np.sum(u.values * v.values))
