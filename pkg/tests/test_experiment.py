import json

import numpy as np
import pytest

from app.exceptions import DesignInfeasibleError
from app.models.config import ExperimentConfig
from app.services import experiment, storage
from app.services.csdesign import sin_number
from app.services.geometry import make_image_grid, make_sensor_geometry, make_time_grid, phantom_preset
from app.services.wave import circular_means


def small_config(out, **overrides):
    data = {
        "geometry": {"n": 16, "q": 64, "n_r": 32},
        "structure": {"b": 2, "g": 2, "group_count": 4, "m0": 3, "k": 2, "n_iter": 200},
        "tv": {"max_iter": 200},
        "output_dir": str(out),
    }
    data.update(overrides)
    return ExperimentConfig.model_validate(data)


def test_stage_seeds_are_stable_and_distinct():
    seeds = experiment.stage_seeds(0)
    assert seeds == experiment.stage_seeds(0)
    assert set(seeds) == set(experiment.STREAMS)
    assert len(set(seeds.values())) == len(seeds)
    assert seeds != experiment.stage_seeds(1)


def test_full_matrix_is_identity():
    spec = ExperimentConfig().structure.spec()
    A = experiment.full_matrix(spec)
    np.testing.assert_array_equal(A.entries, np.eye(64))
    assert A.groups == 4 and A.label == "full"


def test_count_jumps():
    values = np.zeros((8, 3))
    values[2:4, 0] = 1.0
    values[:, 1] = 1.0
    values[4:, 2] = np.array([0.0, 1.0, 0.0, 1.0])
    assert experiment.count_jumps(values, 4) == 3
    assert experiment.count_jumps(np.zeros((8, 3)), 4) == 0


def test_count_jumps_ignores_small_wiggles():
    values = np.ones((16, 2))
    values[:, 0] += 1e-3 * (-1.0) ** np.arange(16)
    values[:, 1] += 0.3 * (np.arange(16) >= 6)
    values[5, 1] += 0.02
    assert experiment.count_jumps(values, 8) == 1


def test_sparse_preset_means_have_at_most_two_jumps_per_group():
    grid = make_image_grid(128)
    means = circular_means(phantom_preset("sparse", grid), make_sensor_geometry(64), make_time_grid(512))
    jumps = experiment.count_jumps(means.values, 16)
    assert 1 <= jumps <= 2


def test_config_rejects_sensor_count_mismatch():
    with pytest.raises(ValueError):
        ExperimentConfig.model_validate({"structure": {"b": 2}})


def test_tv_options_follow_noise_level():
    exact = ExperimentConfig()
    noisy = ExperimentConfig(noise_level=0.0901)
    assert exact.tv_options().lam_scale == exact.lam_scale_exact
    assert noisy.tv_options().lam_scale == noisy.lam_scale_noisy
    assert exact.tv_options().group_size == 16


def test_run_design_writes_matrices(tmp_path):
    config = small_config(tmp_path)
    summary = experiment.run_design(config)
    assert summary["sin"] > 0
    assert summary["random_sin"] >= config.structure.random_min_sin
    assert [k for k, _ in summary["profile"]["optimized"]] == [1, 2, 3, 4]

    for variant in experiment.VARIANTS:
        A = storage.load_matrix(experiment.matrix_path(tmp_path, variant))
        assert A.shape == ((16, 16) if variant == "full" else (12, 16))
    optimized = storage.load_matrix(experiment.matrix_path(tmp_path, "optimized"))
    assert sin_number(optimized.group(0), 2).theta == pytest.approx(summary["sin"])
    assert json.loads((tmp_path / "design.json").read_text())["k"] == 2


def test_per_group_design(tmp_path):
    config = small_config(tmp_path)
    config = config.model_copy(update={"structure": config.structure.model_copy(update={"per_group": True})})
    summary = experiment.run_design(config)
    assert len(summary["random_draws"]) == 4
    sidecar = json.loads((tmp_path / "matrix_optimized.json").read_text())
    assert len(sidecar["selection_lists"]) == 4


def test_infeasible_design_still_writes_matrix(tmp_path):
    config = small_config(tmp_path, structure={"b": 2, "g": 2, "group_count": 4, "m0": 1, "k": 2, "n_iter": 10})
    with pytest.raises(DesignInfeasibleError):
        experiment.run_design(config)
    assert (tmp_path / "matrix_optimized.csv").is_file()
    assert not (tmp_path / "matrix_random.csv").exists()


def test_simulate_requires_design(tmp_path):
    with pytest.raises(OSError):
        experiment.run_simulate(small_config(tmp_path))


def test_pipeline_outputs(tmp_path):
    config = small_config(tmp_path)
    report = experiment.run_pipeline(config)

    assert set(report.variants) == set(experiment.VARIANTS)
    full = report.variants["full"]
    assert full.rel_data_error == 0.0
    assert full.rel_cs_error <= 1e-12
    assert full.rel_fbp_error <= 1e-12
    for variant in experiment.COMPRESSED_VARIANTS:
        assert full.rel_fbp_error <= report.variants[variant].rel_fbp_error
        assert report.variants[variant].rel_data_error == 0.0
        assert (tmp_path / f"image_{variant}.bin").is_file()
        assert (tmp_path / f"means_{variant}.bin").is_file()
        solver = json.loads((tmp_path / f"solver_{variant}.json").read_text())
        assert solver["diagnostics"]["matrix"] == variant

    for name in ("phantom", "pressure", "means", "image_full", "csdata_optimized"):
        assert (tmp_path / f"{name}.pgm").read_bytes().startswith(b"P5\n")
    simulation = json.loads((tmp_path / "simulation.json").read_text())
    assert simulation["phantom"] == "sparse"
    assert (tmp_path / "table.csv").is_file() and (tmp_path / "table.txt").is_file()


def test_noisy_simulation_reports_data_error(tmp_path):
    config = small_config(tmp_path, noise_level=0.05)
    experiment.run_design(config)
    summary = experiment.run_simulate(config)
    for variant in experiment.VARIANTS:
        assert summary["data_errors"][variant] == pytest.approx(0.05)


def test_reconstruct_stage_after_design_and_simulate(tmp_path):
    config = small_config(tmp_path)
    experiment.run_design(config)
    experiment.run_simulate(config)
    report = experiment.run_reconstruct(config)
    assert set(report.variants) == set(experiment.VARIANTS)
    assert report.variants["full"].rel_cs_error <= 1e-12
    assert (tmp_path / "image_optimized.bin").is_file()
    assert not (tmp_path / "means_full.bin").exists()


def test_reconstruct_requires_simulated_data(tmp_path):
    with pytest.raises(OSError):
        experiment.run_reconstruct(small_config(tmp_path))


def test_evaluate_merges_reports(tmp_path):
    config = small_config(tmp_path / "run")
    experiment.run_pipeline(config)
    report = tmp_path / "run" / "report.json"

    rows = experiment.run_evaluate([report, report, report], out_dir=tmp_path / "table")
    assert len(rows) == 3
    lines = (tmp_path / "table" / "table.csv").read_text().splitlines()
    assert len(lines) == 4
    assert lines[0].split(",") == ["run"] + experiment.TABLE_COLUMNS
    assert len(experiment.TABLE_COLUMNS) == 6
    assert "sparse phantom (exact)" in (tmp_path / "table" / "table.txt").read_text()


def test_evaluate_needs_reports():
    with pytest.raises(ValueError):
        experiment.run_evaluate([])


def test_pipeline_is_deterministic(tmp_path):
    first, second = tmp_path / "first", tmp_path / "second"
    experiment.run_pipeline(small_config(first, noise_level=0.02))
    experiment.run_pipeline(small_config(second, noise_level=0.02))
    names = [path.name for path in first.iterdir() if path.suffix in (".bin", ".csv")]
    assert "table.csv" in names and "csdata_random.bin" in names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_zero_phantom_gives_zero_data(tmp_path):
    config = small_config(tmp_path, phantom={"discs": []})
    experiment.run_design(config)
    summary = experiment.run_simulate(config)
    assert summary["phantom"] == "custom"
    assert summary["max_jumps_per_group"] == 0
    assert not storage.load_pressure(tmp_path / "pressure").values.any()
    assert not storage.load_csdata(tmp_path / "csdata_optimized").values.any()


def test_default_tv_settings_converge_on_the_sparse_phantom(tmp_path):
    config = small_config(tmp_path, tv={})
    experiment.run_pipeline(config)
    for variant in experiment.COMPRESSED_VARIANTS:
        diagnostics = json.loads((tmp_path / f"solver_{variant}.json").read_text())["diagnostics"]
        assert diagnostics["max_iter"] == 2000
        assert diagnostics["converged_slices"] >= 0.95 * config.geometry.q
