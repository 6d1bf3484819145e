import itertools

import numpy as np
import pytest

from app.exceptions import CapacityError, DesignInfeasibleError, DimensionMismatchError
from app.models.design import SelectionList, StructureSpec, StructuredCsMatrix
from app.services.csdesign import (
    assemble_block_diagonal,
    best_s_term_error,
    draw_admissible_matrix,
    l0_norm,
    make_cs_matrix,
    optimize_sin,
    rip_constant,
    sample_selection_list,
    sin_number,
    sin_profile,
)

GROUP = StructureSpec(b=4, g=4, group_count=1, m0=12)


def _random_sparse_differences(rng, n, count, s):
    """Differences x1 - x2 of random s-sparse pairs"""
    diffs = np.zeros((count, n))
    rows = np.arange(count)[:, None]
    for _ in range(2):
        support = np.argsort(rng.random((count, n)), axis=1)[:, :s]
        diffs[rows, support] += rng.standard_normal((count, s))
    return diffs


def test_l0_norm():
    assert l0_norm(np.zeros(5)) == 0
    assert l0_norm([0.0, 2.0, 0.0, -1e-300]) == 2


def test_best_s_term_error():
    assert best_s_term_error([3.0, 1.0, -2.0], 1) == pytest.approx(3.0)
    assert best_s_term_error([0.0, 5.0, 0.0, -1.0], 2) == 0.0
    assert best_s_term_error([1.0, -1.0, 1.0], 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        best_s_term_error([1.0], -1)


def test_sample_selection_list_is_deterministic():
    first = sample_selection_list(GROUP, 42)
    np.testing.assert_array_equal(first.entries, sample_selection_list(GROUP, 42).entries)
    assert first.entries.shape == (12, 4)
    assert first.entries.min() >= 0 and first.entries.max() <= 4


def test_sample_selection_list_is_uniform():
    spec = StructureSpec(b=4, g=4, group_count=1, m0=25000)
    entries = sample_selection_list(spec, 3).entries
    assert (entries == 0).mean() == pytest.approx(0.2, abs=0.01)
    assert set(np.unique(entries)) == {0, 1, 2, 3, 4}


def test_make_cs_matrix_rows():
    spec = StructureSpec(b=4, g=4, group_count=1, m0=3)
    A = make_cs_matrix(SelectionList([[1, 0, 1, 2], [4, 1, 4, 0], [0, 0, 0, 0]]), spec)
    rows = ["".join(str(int(v)) for v in row) for row in A.entries]
    assert rows[0] == "1000" "0000" "1000" "0100"
    assert rows[1] == "0001" "1000" "0001" "0000"
    assert rows[2] == "0" * 16


def test_make_cs_matrix_rejects_bad_lists():
    spec = StructureSpec(b=4, g=4, group_count=1, m0=1)
    with pytest.raises(ValueError):
        make_cs_matrix(SelectionList([[5, 0, 0, 0]]), spec)
    with pytest.raises(DimensionMismatchError):
        make_cs_matrix(SelectionList([[1, 0, 0]]), spec)


def test_random_lists_give_admissible_matrices():
    for seed in range(20):
        A = make_cs_matrix(sample_selection_list(GROUP, seed), GROUP)
        assert set(np.unique(A.entries)) <= {0.0, 1.0}
        assert A.entries.reshape(12, 4, 4).sum(axis=2).max() <= 1


def test_matrix_with_two_sensors_in_one_block_is_rejected():
    spec = StructureSpec(b=2, g=1, group_count=1, m0=1)
    with pytest.raises(ValueError):
        StructuredCsMatrix(spec=spec, entries=np.array([[1.0, 1.0]]), origin=(SelectionList([[1]]),))


def test_assemble_block_diagonal(default_spec):
    groups = [make_cs_matrix(sample_selection_list(default_spec, seed), default_spec) for seed in range(4)]
    A = assemble_block_diagonal(groups)
    assert A.shape == (48, 64)
    assert A.groups == 4
    for i, group in enumerate(groups):
        np.testing.assert_array_equal(A.group(i), group.entries)
        np.testing.assert_array_equal(A.entries[i * 12:(i + 1) * 12].sum(axis=1), group.entries.sum(axis=1))
    off_diagonal = A.entries.copy()
    for i in range(4):
        off_diagonal[i * 12:(i + 1) * 12, i * 16:(i + 1) * 16] = 0
    assert not off_diagonal.any()


def test_assemble_single_group_is_unchanged():
    group = make_cs_matrix(sample_selection_list(GROUP, 0), GROUP)
    assert assemble_block_diagonal([group]) is group


def test_assemble_rejects_mixed_specs():
    other = StructureSpec(b=2, g=8, group_count=1, m0=12)
    with pytest.raises(DimensionMismatchError):
        assemble_block_diagonal([
            make_cs_matrix(sample_selection_list(GROUP, 0), GROUP),
            make_cs_matrix(sample_selection_list(other, 0), other),
        ])
    with pytest.raises(ValueError):
        assemble_block_diagonal([])


@pytest.mark.parametrize("k", [1, 4, 16])
def test_sin_of_identity(k):
    assert sin_number(np.eye(16), k).theta == pytest.approx(1.0)


def test_sin_with_duplicate_columns_is_zero():
    M = np.random.default_rng(2).standard_normal((4, 6))
    M[:, 5] = M[:, 0]
    report = sin_number(M, 2)
    assert report.theta <= 1e-12
    assert set(report.worst_subset) == {0, 5}
    assert np.linalg.norm(M @ report.worst_vector) <= 1e-12


def test_sin_with_more_columns_than_rows_is_zero():
    M = np.random.default_rng(0).standard_normal((3, 6))
    assert sin_number(M, 4).theta == 0.0


def test_sin_rejects_invalid_k():
    with pytest.raises(ValueError):
        sin_number(np.eye(4), 5)
    with pytest.raises(ValueError):
        sin_number(np.eye(4), 0)


def test_sin_capacity_limit():
    with pytest.raises(CapacityError):
        sin_number(np.zeros((5, 40)), 10)


def test_sin_certificate(random_admissible):
    for seed in range(10):
        M = random_admissible(seed)
        report = sin_number(M, 4)
        v = report.worst_vector
        assert np.linalg.norm(v) == pytest.approx(1.0)
        assert set(np.flatnonzero(v)) <= set(report.worst_subset)
        assert np.linalg.norm(M @ v) == pytest.approx(report.theta, abs=1e-10)
        assert report.exhaustive


def test_sin_bounds_random_sparse_ratios():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((4, 6))
    theta = sin_number(M, 2).theta
    diffs = _random_sparse_differences(rng, 6, 100000, 1)
    ratios = np.linalg.norm(diffs @ M.T, axis=1) / np.linalg.norm(diffs, axis=1)
    assert theta <= ratios.min() + 1e-9


def test_sin_bounds_admissible_sparse_ratios(random_admissible):
    rng = np.random.default_rng(9)
    for seed in range(10):
        M = random_admissible(seed)
        theta = sin_number(M, 4).theta
        diffs = _random_sparse_differences(rng, 16, 10000, 2)
        ratios = np.linalg.norm(diffs @ M.T, axis=1) / np.linalg.norm(diffs, axis=1)
        assert theta <= ratios.min() + 1e-9


def test_sin_is_permutation_covariant(random_admissible):
    M = random_admissible(3)
    perm = np.random.default_rng(1).permutation(16)
    assert sin_number(M[:, perm], 3).theta == pytest.approx(sin_number(M, 3).theta, abs=1e-12)


def test_sin_decreases_with_k(random_admissible):
    M = random_admissible(4)
    thetas = [theta for _, theta in sin_profile(M, range(1, 6))]
    assert all(b <= a + 1e-12 for a, b in zip(thetas, thetas[1:]))


def test_sin_does_not_decrease_with_rows(random_admissible):
    M = random_admissible(6)
    extra = np.vstack([M, np.ones((1, 16))])
    assert sin_number(extra, 4).theta >= sin_number(M, 4).theta - 1e-12


def test_sin_early_stop_is_upper_bound(random_admissible):
    M = random_admissible(8)
    exact = sin_number(M, 4)
    bounded = sin_number(M, 4, stop_below=10.0)
    assert not bounded.exhaustive
    assert bounded.theta >= exact.theta


@pytest.mark.parametrize("seed", [0, 3, 8])
def test_sin_matches_brute_force_beyond_one_chunk(random_admissible, seed):
    M = random_admissible(seed)
    # C(16, 4) = 1820 subsets span several screening chunks
    brute = min(
        np.linalg.svd(M[:, list(subset)], compute_uv=False)[-1]
        for subset in itertools.combinations(range(16), 4)
    )
    report = sin_number(M, 4)
    assert report.exhaustive
    assert report.theta == pytest.approx(brute, abs=1e-12)
    assert np.linalg.svd(M[:, list(report.worst_subset)], compute_uv=False)[-1] == pytest.approx(brute, abs=1e-12)


def test_sin_of_later_chunks_keeps_earlier_minimum():
    M = np.eye(12, 16)
    M[:, 12:] = np.eye(12)[:, :4] + np.eye(12)[:, 4:8]
    # the first chunk already holds a singular subset; later chunks must not replace it
    assert sin_number(M, 4).theta == pytest.approx(0.0, abs=1e-12)
    assert sin_number(M, 2).theta == pytest.approx(
        min(np.linalg.svd(M[:, list(s)], compute_uv=False)[-1] for s in itertools.combinations(range(16), 2)),
        abs=1e-12,
    )


def test_optimize_sin_on_default_group():
    result = optimize_sin(GROUP, k=4, n_iter=20, seed=0)
    assert result.best_sin >= 0.0
    assert result.best_sin == pytest.approx(sin_number(result.best_matrix, 4).theta, abs=1e-15)


def test_sin_of_assembly_is_group_minimum(designed_group, default_spec):
    other = make_cs_matrix(sample_selection_list(default_spec, 11), default_spec)
    groups = [designed_group.best_matrix, other]
    assembly = assemble_block_diagonal(groups)
    expected = min(sin_number(g, 2).theta for g in groups)
    assert sin_number(assembly, 2).theta == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("s", [1, 2, 3])
def test_rip_of_identity(s):
    assert rip_constant(np.eye(8), s).delta == pytest.approx(0.0, abs=1e-12)


def test_rip_with_zero_column():
    M = np.eye(5)
    M[:, 2] = 0.0
    assert rip_constant(M, 1).delta >= 1.0


def test_rip_rejects_invalid_order():
    with pytest.raises(ValueError):
        rip_constant(np.eye(3), 4)


def test_sin_and_rip_inequality(random_admissible):
    for seed in range(20):
        M = random_admissible(seed)
        theta = sin_number(M, 4).theta
        delta = rip_constant(M, 4).delta
        assert theta ** 2 >= 1.0 - delta - 1e-12


def test_identity_selection_has_unit_sin():
    spec = StructureSpec(b=4, g=4, group_count=1, m0=16)
    rows = np.arange(16)
    entries = np.zeros((16, 4), dtype=int)
    entries[rows, rows // 4] = rows % 4 + 1
    A = make_cs_matrix(SelectionList(entries), spec)
    np.testing.assert_array_equal(A.entries, np.eye(16))
    assert sin_number(A, 4).theta == pytest.approx(1.0)


def test_optimize_sin_is_deterministic():
    first = optimize_sin(GROUP, k=4, n_iter=15, seed=21)
    second = optimize_sin(GROUP, k=4, n_iter=15, seed=21)
    assert first.best_sin == second.best_sin
    np.testing.assert_array_equal(first.best_list.entries, second.best_list.entries)


def test_optimize_sin_reports_exact_sin(designed_group, default_spec):
    assert designed_group.best_sin > 0
    assert designed_group.best_sin == pytest.approx(sin_number(designed_group.best_matrix, 4).theta, abs=1e-15)
    np.testing.assert_array_equal(
        designed_group.best_matrix.entries, make_cs_matrix(designed_group.best_list, default_spec).entries
    )
    assert designed_group.iterations_used == 100


def test_optimize_sin_does_not_decrease_with_iterations():
    short = optimize_sin(GROUP, k=4, n_iter=10, seed=5)
    longer = optimize_sin(GROUP, k=4, n_iter=30, seed=5)
    assert longer.best_sin >= short.best_sin


def test_optimize_sin_rejects_bad_arguments():
    with pytest.raises(ValueError):
        optimize_sin(GROUP, k=4, n_iter=0)
    with pytest.raises(ValueError):
        optimize_sin(GROUP, k=17, n_iter=1)


def test_random_comparator_meets_threshold():
    matrix, report, draws = draw_admissible_matrix(GROUP, k=4, min_sin=1e-3, seed=0)
    assert report.theta >= 1e-3
    assert draws >= 1
    assert sin_number(matrix, 4).theta == pytest.approx(report.theta)


def test_random_comparator_gives_up():
    spec = StructureSpec(b=4, g=4, group_count=1, m0=1)
    with pytest.raises(DesignInfeasibleError):
        draw_admissible_matrix(spec, k=4, min_sin=1e-3, seed=0, max_draws=20)
