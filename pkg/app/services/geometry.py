import math
import logging
from typing import Iterable

import numpy as np

from app.models.geometry import (
    DiscProfile,
    DiscSpec,
    ImageGrid,
    SensorGeometry,
    SourceImage,
    TimeGrid,
)

logger = logging.getLogger(__name__)

# Fraction of the disc radius at which the inverse-sqrt profile is clamped
INVERSE_SQRT_CLIP = 1e-3
# Subpixels per side when rendering the named phantoms
PRESET_SUPERSAMPLE = 4


def make_sensor_geometry(n: int, R: float = 1.0, Omega: float = 2 * math.pi) -> SensorGeometry:
    """
    Place n detectors uniformly on the arc of angular coverage Omega

    Args:
        n: Number of detectors
        R: Radius of the detection circle
        Omega: Angular coverage in (0, 2*pi]

    Returns:
        SensorGeometry with s_j = R (cos(Omega (j-1)/n), sin(Omega (j-1)/n))
    """
    if n < 1:
        raise ValueError(f"detector count must be positive, got {n}")
    if R <= 0:
        raise ValueError(f"detection radius must be positive, got {R}")
    if not 0 < Omega <= 2 * math.pi:
        raise ValueError(f"angular coverage must lie in (0, 2*pi], got {Omega}")

    angles = Omega * np.arange(n) / n
    positions = R * np.column_stack([np.cos(angles), np.sin(angles)])
    return SensorGeometry(n=n, R=float(R), Omega=float(Omega), positions=positions)


def make_time_grid(q: int, R: float = 1.0) -> TimeGrid:
    """Sample [0, 2R] at q equidistant instants"""
    if q < 2:
        raise ValueError(f"time grid needs at least two samples, got {q}")
    if R <= 0:
        raise ValueError(f"detection radius must be positive, got {R}")
    return TimeGrid(q=q, R=float(R), t=2.0 * R * np.arange(q) / (q - 1))


def make_image_grid(n_r: int, R: float = 1.0) -> ImageGrid:
    if n_r < 1:
        raise ValueError(f"image size must be positive, got {n_r}")
    if R <= 0:
        raise ValueError(f"detection radius must be positive, got {R}")
    return ImageGrid(n_r=n_r, R=float(R))


def nyquist_sensor_count(n_r: int) -> int:
    """Detector count round(pi N_r / 2) needed for Shannon sampling of an N_r x N_r image"""
    if n_r < 1:
        raise ValueError(f"image size must be positive, got {n_r}")
    return int(round(math.pi * n_r / 2))


def evaluate_disc_profile(rho: np.ndarray, disc: DiscSpec) -> np.ndarray:
    """Radial profile of one disc at distances rho from its center (zero outside the disc)"""
    rho = np.asarray(rho, dtype=float)
    a = disc.radius
    inside = rho < a
    if disc.profile == DiscProfile.UNIFORM:
        values = np.ones_like(rho)
    elif disc.profile == DiscProfile.SMOOTH:
        values = (1.0 - (rho / a) ** 2) ** 2
    else:
        clipped = np.minimum(rho, a * (1.0 - INVERSE_SQRT_CLIP))
        values = 1.0 / np.sqrt(a * a - clipped * clipped)
    return np.where(inside, disc.amplitude * values, 0.0)


def make_disc_phantom(grid: ImageGrid, discs: Iterable[DiscSpec], supersample: int = 1) -> SourceImage:
    """
    Superpose disc profiles on the image grid

    Args:
        grid: Target image grid
        discs: Disc building blocks; overlapping discs add up
        supersample: Subpixels per pixel side; values are averaged over the
            supersample x supersample subpixel centres

    Returns:
        SourceImage supported inside the detection circle
    """
    if supersample < 1:
        raise ValueError(f"supersampling factor must be positive, got {supersample}")
    discs = list(discs)
    for disc in discs:
        cx, cy = disc.center
        if math.hypot(cx, cy) + disc.radius >= grid.R:
            raise ValueError(
                f"disc at {disc.center} with radius {disc.radius} is not inside the detection circle R={grid.R}"
            )

    X, Y = grid.mesh()
    offsets = ((np.arange(supersample) + 0.5) / supersample - 0.5) * grid.spacing
    values = np.zeros((grid.n_r, grid.n_r))
    for dy in offsets:
        for dx in offsets:
            for disc in discs:
                cx, cy = disc.center
                values += evaluate_disc_profile(np.hypot(X + dx - cx, Y + dy - cy), disc)
    values /= supersample ** 2
    values[~grid.inside_mask()] = 0.0
    return SourceImage(grid, values)


def phantom_discs(name: str, R: float = 1.0) -> list:
    """Disc lists of the named phantoms, scaled to the detection radius"""
    if name == "sparse":
        # centred disc plus one inverse-sqrt disc on the x-axis: detector distances to it
        # are monotone inside every quarter arc, so each group sees at most two jumps
        discs = [
            DiscSpec(center=(0.0, 0.0), radius=0.45, amplitude=1.0, profile=DiscProfile.SMOOTH),
            DiscSpec(center=(0.40, 0.0), radius=0.15, amplitude=0.15, profile=DiscProfile.INVERSE_SQRT),
        ]
    elif name == "nonsparse":
        discs = [
            DiscSpec(center=(-0.30, 0.20), radius=0.22, amplitude=0.22, profile=DiscProfile.INVERSE_SQRT),
            DiscSpec(center=(0.32, -0.12), radius=0.16, amplitude=0.16, profile=DiscProfile.INVERSE_SQRT),
            DiscSpec(center=(0.05, 0.42), radius=0.12, amplitude=0.12, profile=DiscProfile.INVERSE_SQRT),
            DiscSpec(center=(0.0, -0.45), radius=0.10, amplitude=0.6, profile=DiscProfile.UNIFORM),
        ]
    else:
        raise ValueError(f"unknown phantom preset: {name}")
    return [
        DiscSpec(center=(d.center[0] * R, d.center[1] * R), radius=d.radius * R,
                 amplitude=d.amplitude, profile=d.profile)
        for d in discs
    ]


def phantom_preset(name: str, grid: ImageGrid) -> SourceImage:
    logger.info(f"Building '{name}' phantom on a {grid.n_r}x{grid.n_r} grid")
    return make_disc_phantom(grid, phantom_discs(name, grid.R), supersample=PRESET_SUPERSAMPLE)
