"""
File formats of the experiment artifacts.

Numeric arrays are raw little-endian float64 (``<name>.bin``) next to a JSON
sidecar (``<name>.json``) describing their shape; CS matrices are integer CSV
files with a design sidecar; figures are 8-bit binary PGM.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from app.exceptions import DimensionMismatchError, StorageError
from app.models.data import CsData, MeansData, PressureData, RecoveredMeans
from app.models.design import SelectionList, StructureSpec, StructuredCsMatrix
from app.models.geometry import SensorGeometry, SourceImage
from app.services.csdesign import assemble_block_diagonal, make_cs_matrix
from app.services.geometry import make_image_grid, make_sensor_geometry, make_time_grid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2) + "\n")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise StorageError(f"missing file: {path}")
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise StorageError(f"cannot read {path}: {e}") from e


def _write_raw(path: PathLike, values: np.ndarray, sidecar: Dict[str, Any]) -> Path:
    path = Path(path).with_suffix(".bin")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.ascontiguousarray(values, dtype="<f8").tofile(path)
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    write_json(path.with_suffix(".json"), sidecar)
    logger.debug(f"Wrote {sidecar['type']} data to {path}")
    return path


def _read_raw(path: PathLike, expected_type: str):
    path = Path(path).with_suffix(".bin")
    sidecar = read_json(path.with_suffix(".json"))
    if sidecar.get("type") != expected_type:
        raise StorageError(f"{path} holds '{sidecar.get('type')}' data, expected '{expected_type}'")
    if not path.is_file():
        raise StorageError(f"missing file: {path}")
    try:
        values = np.fromfile(path, dtype="<f8")
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from e
    return values, sidecar


def _reshape(values: np.ndarray, shape, path: PathLike) -> np.ndarray:
    if values.size != int(np.prod(shape)):
        raise StorageError(f"{path} holds {values.size} values, sidecar announces shape {tuple(shape)}")
    return values.reshape(shape)


def save_image(u: SourceImage, path: PathLike) -> Path:
    return _write_raw(path, u.values, {"type": "image", "n_r": u.grid.n_r, "R": u.grid.R})


def load_image(path: PathLike) -> SourceImage:
    values, meta = _read_raw(path, "image")
    grid = make_image_grid(meta["n_r"], meta["R"])
    return SourceImage(grid, _reshape(values, (grid.n_r, grid.n_r), path))


def _geometry_sidecar(kind: str, geom: SensorGeometry, q: int) -> Dict[str, Any]:
    return {"type": kind, "n": geom.n, "q": q, "R": geom.R, "Omega": geom.Omega}


def save_pressure(P: PressureData, path: PathLike) -> Path:
    return _write_raw(path, P.values, _geometry_sidecar("pressure", P.geometry, P.times.q))


def load_pressure(path: PathLike) -> PressureData:
    values, meta = _read_raw(path, "pressure")
    geom = make_sensor_geometry(meta["n"], meta["R"], meta["Omega"])
    times = make_time_grid(meta["q"], meta["R"])
    return PressureData(geometry=geom, times=times, values=_reshape(values, (meta["n"], meta["q"]), path))


def save_means(H: Union[MeansData, RecoveredMeans], path: PathLike, geom: Optional[SensorGeometry] = None) -> Path:
    """Recovered means are stored exactly like simulated ones; they need the geometry passed in"""
    geom = geom or getattr(H, "geometry", None)
    if geom is None:
        raise ValueError("saving recovered means requires the sensor geometry")
    if H.values.shape[0] != geom.n:
        raise DimensionMismatchError(f"means have {H.values.shape[0]} rows for {geom.n} sensors")
    return _write_raw(path, H.values, _geometry_sidecar("means", geom, H.times.q))


def load_means(path: PathLike) -> MeansData:
    values, meta = _read_raw(path, "means")
    geom = make_sensor_geometry(meta["n"], meta["R"], meta["Omega"])
    radii = make_time_grid(meta["q"], meta["R"])
    return MeansData(geometry=geom, radii=radii, values=_reshape(values, (meta["n"], meta["q"]), path))


def save_csdata(Y: CsData, path: PathLike, matrix_file: str) -> Path:
    return _write_raw(path, Y.values, {"type": "csdata", "m": Y.m, "q": Y.times.q, "matrix": matrix_file})


def load_csdata(path: PathLike, R: float = 1.0) -> CsData:
    """CS sidecars carry no radius; the time grid is rebuilt on [0, 2R]"""
    values, meta = _read_raw(path, "csdata")
    times = make_time_grid(meta["q"], R)
    label = Path(meta["matrix"]).stem.replace("matrix_", "", 1)
    return CsData(matrix_ref=label, times=times, values=_reshape(values, (meta["m"], meta["q"]), path))


def save_matrix(A: StructuredCsMatrix, path: PathLike, k: int, sin: float, seed: int) -> Path:
    """
    Write the matrix as integer CSV plus a design sidecar

    Args:
        A: Assembled CS matrix
        path: CSV path; the sidecar goes next to it with suffix .json
        k: Column-subset size the design was optimized for
        sin: Sparse injectivity number of one group matrix
        seed: Seed of the design stream

    Returns:
        Path of the CSV file
    """
    path = Path(path).with_suffix(".csv")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, A.entries, fmt="%d", delimiter=",")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    spec = A.spec
    write_json(path.with_suffix(".json"), {
        "b": spec.b,
        "g": spec.g,
        "group_count": spec.group_count,
        "m0": spec.m0,
        "k": k,
        "sin": sin,
        "seed": seed,
        "label": A.label,
        "selection_lists": [sel.to_list() for sel in A.origin],
    })
    logger.info(f"Wrote {A.label} matrix {A.shape} to {path}")
    return path


def load_matrix(path: PathLike) -> StructuredCsMatrix:
    """Rebuild a matrix from its design sidecar and check it against the CSV"""
    path = Path(path).with_suffix(".csv")
    meta = read_json(path.with_suffix(".json"))
    if not path.is_file():
        raise StorageError(f"missing file: {path}")
    try:
        entries = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise StorageError(f"cannot read {path}: {e}") from e

    spec = StructureSpec(b=meta["b"], g=meta["g"], group_count=meta["group_count"], m0=meta["m0"])
    label = meta.get("label", path.stem.replace("matrix_", "", 1))
    groups = [make_cs_matrix(SelectionList(sel), spec, label=label) for sel in meta["selection_lists"]]
    A = assemble_block_diagonal(groups, label=label)
    if A.entries.shape != entries.shape or not np.array_equal(A.entries, entries):
        raise StorageError(f"{path} does not match the selection lists of its sidecar")
    return A


def write_pgm(path: PathLike, values: np.ndarray) -> Path:
    """8-bit binary PGM, min-max normalized; a constant array maps to black"""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DimensionMismatchError(f"PGM export needs a 2-D array, got shape {values.shape}")
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        pixels = np.round(255.0 * (values - lo) / (hi - lo)).astype(np.uint8)
    else:
        pixels = np.zeros(values.shape, dtype=np.uint8)
    path = Path(path).with_suffix(".pgm")
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + pixels.tobytes())
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e
    return path
