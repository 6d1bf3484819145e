"""
Experiment stages: design -> simulate -> reconstruct -> evaluate.

Every stage reads and writes artifacts in one output directory, so the stages
can run separately from the command line or back to back as a pipeline. All
randomness comes from a single master seed split into independent streams.
"""
import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.exceptions import DesignInfeasibleError, StorageError
from app.models.config import ErrorReport, ExperimentConfig, VariantErrors
from app.models.data import PressureData
from app.models.design import SelectionList, StructureSpec, StructuredCsMatrix
from app.models.geometry import SourceImage
from app.services import storage
from app.services.acquisition import add_noise, apply_cs, relative_l2
from app.services.csdesign import (
    assemble_block_diagonal,
    draw_admissible_matrix,
    make_cs_matrix,
    optimize_sin,
    sin_profile,
)
from app.services.geometry import (
    make_disc_phantom,
    make_image_grid,
    make_sensor_geometry,
    make_time_grid,
    phantom_preset,
)
from app.services.recon import two_step_reconstruct
from app.services.wave import apply_T, circular_means, fbp_from_pressure, wave_forward

logger = logging.getLogger(__name__)

STREAMS = ("design", "random", "noise_optimized", "noise_random", "noise_full")
VARIANTS = ("optimized", "random", "full")
COMPRESSED_VARIANTS = ("optimized", "random")
# A design whose SIN is below this is treated as not injective
SIN_FLOOR = 1e-10
# Sensor steps below this fraction of the slice spread are not counted as jumps
JUMP_THRESHOLD = 0.5
# Slices whose spread is below this fraction of the global peak have no jumps
JUMP_FLOOR = 0.05
PROFILE_KS = range(1, 6)


def stage_seeds(master: int) -> Dict[str, int]:
    """Independent integer seeds for every random stream, derived from the master seed"""
    children = np.random.SeedSequence(master).spawn(len(STREAMS))
    return {name: int(child.generate_state(1)[0]) for name, child in zip(STREAMS, children)}


def _group_seeds(seed: int, count: int) -> List[int]:
    return [int(child.generate_state(1)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def full_matrix(spec: StructureSpec) -> StructuredCsMatrix:
    """Identity matrix written as an admissible design: every measurement reads one sensor"""
    full_spec = spec.model_copy(update={"m0": spec.n0})
    rows = np.arange(spec.n0)
    entries = np.zeros((spec.n0, spec.g), dtype=np.int64)
    entries[rows, rows // spec.b] = rows % spec.b + 1
    group = make_cs_matrix(SelectionList(entries), full_spec, label="full")
    return assemble_block_diagonal([group] * spec.group_count, label="full")


def matrix_path(out: Path, variant: str) -> Path:
    return out / f"matrix_{variant}.csv"


def run_design(config: ExperimentConfig) -> Dict:
    """
    Optimize the group design, draw the random comparator, write all matrices

    Returns:
        Summary with the SIN of both designs and their SIN-vs-k profiles

    Raises:
        DesignInfeasibleError: the optimized SIN is numerically zero (its matrix is still written)
    """
    s = config.structure
    spec = s.spec()
    out = Path(config.output_dir)
    seeds = stage_seeds(config.seed)
    group_count = spec.group_count if s.per_group else 1
    logger.info(f"Designing {group_count} group matrix(es): b={spec.b}, g={spec.g}, m0={spec.m0}, k={s.k}")

    designs = [optimize_sin(spec, s.k, s.n_iter, seed) for seed in _group_seeds(seeds["design"], group_count)]
    groups = [d.best_matrix for d in designs] * (spec.group_count // group_count)
    optimized = assemble_block_diagonal(groups, label="optimized")
    best_sin = min(d.best_sin for d in designs)
    storage.save_matrix(optimized, matrix_path(out, "optimized"), s.k, best_sin, seeds["design"])

    if best_sin < SIN_FLOOR:
        raise DesignInfeasibleError(
            f"best SIN {best_sin:.3e} after {s.n_iter} iterations (b={spec.b}, g={spec.g}, m0={spec.m0})"
        )

    comparators = [
        draw_admissible_matrix(spec, s.k, s.random_min_sin, seed, s.random_max_draws)
        for seed in _group_seeds(seeds["random"], group_count)
    ]
    random_groups = [matrix for matrix, _, _ in comparators] * (spec.group_count // group_count)
    random_matrix = assemble_block_diagonal(random_groups, label="random")
    random_sin = min(report.theta for _, report, _ in comparators)
    storage.save_matrix(random_matrix, matrix_path(out, "random"), s.k, random_sin, seeds["random"])
    storage.save_matrix(full_matrix(spec), matrix_path(out, "full"), s.k, 1.0, 0)

    ks = [k for k in PROFILE_KS if k <= spec.n0]
    summary = {
        "k": s.k,
        "n_iter": s.n_iter,
        "seed": seeds["design"],
        "sin": best_sin,
        "random_sin": random_sin,
        "random_draws": [draws for _, _, draws in comparators],
        "profile": {
            "optimized": sin_profile(designs[0].best_matrix, ks),
            "random": sin_profile(comparators[0][0], ks),
        },
    }
    storage.write_json(out / "design.json", summary)
    logger.info(f"Design done: optimized SIN={best_sin:.4f}, random SIN={random_sin:.4f}")
    return summary


def _build_phantom(config: ExperimentConfig) -> SourceImage:
    grid = make_image_grid(config.geometry.n_r, config.geometry.R)
    if config.phantom.discs is not None:
        return make_disc_phantom(grid, config.phantom.discs)
    return phantom_preset(config.phantom.preset, grid)


def count_jumps(values: np.ndarray, group_size: int) -> int:
    """
    Largest number of significant sensor-direction jumps in any group and time slice

    A step counts when it exceeds JUMP_THRESHOLD times the spread (max - min over
    all sensors) of its slice. Slices whose spread stays below JUMP_FLOOR times
    the global peak carry no jumps at all.
    """
    n, q = values.shape
    spread = values.max(axis=0) - values.min(axis=0)
    floor = JUMP_FLOOR * np.abs(values).max(initial=0.0)
    jumps = np.abs(np.diff(values.reshape(n // group_size, group_size, q), axis=1))
    significant = (jumps > JUMP_THRESHOLD * spread) & (spread > floor)
    return int(significant.sum(axis=1).max(initial=0))


def run_simulate(config: ExperimentConfig) -> Dict:
    """
    Simulate full pressure, circular means and the (noisy) CS data of every matrix

    Returns:
        Summary with seeds, data errors and the maximum jump count
    """
    g = config.geometry
    out = Path(config.output_dir)
    seeds = stage_seeds(config.seed)
    geom = make_sensor_geometry(g.n, g.R, g.Omega)
    times = make_time_grid(g.q, g.R)

    u = _build_phantom(config)
    P = wave_forward(u, geom, times)
    means = circular_means(u, geom, times)

    storage.save_image(u, out / "phantom")
    storage.save_pressure(P, out / "pressure")
    storage.save_means(means, out / "means")
    storage.write_pgm(out / "phantom", u.values)
    storage.write_pgm(out / "pressure", P.values)
    storage.write_pgm(out / "means", means.values)

    data_errors = {}
    for variant in VARIANTS:
        A = storage.load_matrix(matrix_path(out, variant))
        Y = apply_cs(A, P)
        Y_noisy = add_noise(Y, config.noise_level, seeds[f"noise_{variant}"])
        data_errors[variant] = relative_l2(Y_noisy, Y) if config.noise_level > 0 else 0.0
        storage.save_csdata(Y_noisy, out / f"csdata_{variant}", matrix_path(out, variant).name)
        storage.write_pgm(out / f"csdata_{variant}", Y_noisy.values)

    group_size = config.structure.b * config.structure.g
    summary = {
        "phantom": config.phantom.name,
        "noise_level": config.noise_level,
        "seeds": seeds,
        "data_errors": data_errors,
        "max_jumps_per_group": count_jumps(means.values, group_size),
    }
    storage.write_json(out / "simulation.json", summary)
    logger.info(f"Simulation done: {g.n} sensors, {g.q} samples, max jumps per group {summary['max_jumps_per_group']}")
    return summary


def run_reconstruct(config: ExperimentConfig) -> ErrorReport:
    """
    Two-step reconstruction for the compressed matrices plus the full-data FBP baseline

    Errors are measured against the clean full-sensor data: the CS step against
    T of the clean pressure, the image against FBP of the clean pressure.
    """
    out = Path(config.output_dir)
    opts = config.tv_options()
    P_clean = storage.load_pressure(out / "pressure")
    geom, times = P_clean.geometry, P_clean.times
    grid = make_image_grid(config.geometry.n_r, geom.R)

    H_ref = apply_T(P_clean)
    u_ref = fbp_from_pressure(P_clean, geom, grid)

    variants = {}
    for variant in VARIANTS:
        A = storage.load_matrix(matrix_path(out, variant))
        Y = storage.load_csdata(out / f"csdata_{variant}", geom.R)
        Y_clean = apply_cs(A, P_clean)

        if variant == "full":
            P = PressureData(geometry=geom, times=times, values=A.entries.T @ Y.values)
            image = fbp_from_pressure(P, geom, grid)
            H_values = apply_T(P).values
            diagnostics = {"matrix": "full", "method": "fbp_from_pressure"}
            warnings = []
        else:
            result = two_step_reconstruct(Y, A, geom, grid, opts)
            image, H_values = result.image, result.means.values
            diagnostics, warnings = result.means.diagnostics, result.means.warnings
            storage.save_means(result.means, out / f"means_{variant}", geom)

        variants[variant] = VariantErrors(
            rel_data_error=relative_l2(Y, Y_clean),
            rel_cs_error=relative_l2(H_values, H_ref),
            rel_fbp_error=relative_l2(image, u_ref),
        )
        storage.save_image(image, out / f"image_{variant}")
        storage.write_pgm(out / f"image_{variant}", image.values)
        storage.write_json(out / f"solver_{variant}.json", {"diagnostics": diagnostics, "warnings": warnings})
        logger.info(
            f"{variant}: data {variants[variant].rel_data_error:.4f}, "
            f"cs {variants[variant].rel_cs_error:.4f}, fbp {variants[variant].rel_fbp_error:.4f}"
        )

    report = ErrorReport(phantom=config.phantom.name, noise_level=config.noise_level, variants=variants)
    storage.write_json(out / "report.json", report.model_dump())
    return report


TABLE_COLUMNS = [
    f"{variant}_{metric}"
    for variant in COMPRESSED_VARIANTS
    for metric in ("rel_data_error", "rel_cs_error", "rel_fbp_error")
]


def report_row(report: ErrorReport) -> Dict:
    row = {"run": report.label}
    for variant in COMPRESSED_VARIANTS:
        if variant not in report.variants:
            raise StorageError(f"report for {report.label} has no '{variant}' entry")
        for metric, value in report.variants[variant].model_dump().items():
            row[f"{variant}_{metric}"] = value
    return row


def run_evaluate(report_files: Sequence[Path], out_dir: Optional[Path] = None) -> List[Dict]:
    """
    Merge error reports into one table (one row per report, data/cs/fbp per compressed matrix)

    Args:
        report_files: report.json files of finished runs
        out_dir: Where table.csv and table.txt go (default: next to the first report)

    Returns:
        The table rows
    """
    if not report_files:
        raise ValueError("evaluate needs at least one report file")
    reports = [ErrorReport.model_validate(storage.read_json(path)) for path in report_files]
    rows = [report_row(report) for report in reports]

    out = Path(out_dir) if out_dir is not None else Path(report_files[0]).parent
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "table.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["run"] + TABLE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    (out / "table.txt").write_text(format_table(rows))
    logger.info(f"Wrote {len(rows)}-row error table to {out}")
    return rows


def format_table(rows: List[Dict]) -> str:
    width = max(len(row["run"]) for row in rows)
    header = (
        f"{'':<{width}}  {'optimized A':^26}  {'random A':^26}\n"
        f"{'':<{width}}  " + "  ".join(f"{name:>8}" for name in ("data", "cs", "fbp") * 2)
    )
    lines = [header]
    for row in rows:
        values = "  ".join(f"{row[column]:>8.4f}" for column in TABLE_COLUMNS)
        lines.append(f"{row['run']:<{width}}  {values}")
    return "\n".join(lines) + "\n"


def run_pipeline(config: ExperimentConfig) -> ErrorReport:
    """design, simulate, reconstruct and evaluate in one output directory"""
    run_design(config)
    run_simulate(config)
    report = run_reconstruct(config)
    run_evaluate([Path(config.output_dir) / "report.json"])
    return report
