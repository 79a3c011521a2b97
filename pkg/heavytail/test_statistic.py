import csv
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from heavytail.dist import CHUNK_SIZE, AlphaStable, RngStream, Sample, StandardNormal, draw_sample, iter_sample_chunks
from heavytail.exceptions import BadConfig, DegenerateSample, InsufficientSample, NumericOverflow
from heavytail.hypotest import KAPPA_H0, SIGMA_PI
from heavytail.statistic import (
    BlockAccumulator,
    BridgePath,
    block_edges,
    build_bridge_path,
    build_walk_path,
    compute_statistic,
    merge_summaries,
    statistic_from_path,
    summarize_blocks,
    summarize_chunks,
    uncentered_statistic,
    write_path_csv,
)

HAND_SAMPLE = Sample(np.array([1.0, 2.0, 3.0, 4.0]))


def _statistic(sample: Sample, n: int) -> float:
    return compute_statistic(summarize_blocks(sample, n)).value


# -----------------------------
# HAND CASE
# -----------------------------
def test_hand_case_statistic():
    summary = summarize_blocks(HAND_SAMPLE, 2)
    assert_array_equal(summary.block_sums, [3.0, 7.0])
    assert_array_equal(summary.block_counts, [2, 2])
    assert summary.mean == 2.5
    assert compute_statistic(summary).value == 0.5


def test_hand_case_uncentered():
    assert uncentered_statistic(HAND_SAMPLE, 2).value == 21 / 58


def test_hand_case_bridge_path():
    path = build_bridge_path(HAND_SAMPLE, 2, normalizer=1.0)
    assert_array_equal(path.values, [0.0, -2.0, 0.0])
    assert_array_equal(path.grid, [0.0, 0.5, 1.0])
    assert statistic_from_path(path).value == 0.5


def test_default_normalizer_is_sqrt_m():
    path = build_bridge_path(HAND_SAMPLE, 2)
    assert path.normalizer == 2.0
    assert_array_equal(path.values, [0.0, -1.0, 0.0])


def test_zero_mean_sample_needs_no_centering():
    sample = Sample(np.array([-1.0, 1.0, -1.0, 1.0]))
    assert _statistic(sample, 4) == uncentered_statistic(sample, 4).value == 0.75
    # both block sums are 0 at n=2
    with pytest.raises(DegenerateSample):
        _statistic(sample, 2)
    with pytest.raises(DegenerateSample):
        uncentered_statistic(sample, 2)


# -----------------------------
# EXACTNESS AND INVARIANCE
# -----------------------------
def test_block_form_matches_path_form():
    rng = np.random.default_rng(20240229)
    for trial in range(1000):
        n = int(rng.integers(2, 40))
        m = n * int(rng.integers(1, 50))
        spec = StandardNormal() if trial % 2 else AlphaStable(alpha=float(rng.uniform(1.5, 2.0)))
        sample = draw_sample(spec, RngStream(17, trial), m)
        if np.ptp(sample.values) == 0:
            continue
        normalizer = float(rng.uniform(0.1, 100.0))
        block = _statistic(sample, n)
        path = statistic_from_path(build_bridge_path(sample, n, normalizer)).value
        assert path == pytest.approx(block, rel=1e-12, abs=1e-15)


def test_statistic_is_affine_invariant():
    rng = np.random.default_rng(7)
    for trial in range(1000):
        n = int(rng.integers(2, 30))
        m = int(rng.integers(n, 2000))
        sample = draw_sample(StandardNormal(), RngStream(19, trial), m)
        a = float(rng.uniform(0.5, 5.0)) * (1 if trial % 2 else -1)
        b = float(rng.uniform(-5.0, 5.0))
        moved = Sample(a * sample.values + b)
        assert _statistic(moved, n) == pytest.approx(_statistic(sample, n), rel=1e-12)


def test_statistic_under_gaussian_is_near_two_over_pi():
    sample = draw_sample(StandardNormal(), RngStream(23, 0), 10**5)
    assert abs(_statistic(sample, 100) - 2 / math.pi) < 0.2


def test_statistic_bounded_by_one():
    sample = draw_sample(AlphaStable(alpha=0.7), RngStream(23, 1), 5000)
    assert 0.0 <= _statistic(sample, 50) <= 1.0


# -----------------------------
# ERRORS
# -----------------------------
def test_constant_sample_is_degenerate():
    with pytest.raises(DegenerateSample):
        _statistic(Sample(np.full(1000, 3.7)), 10)


def test_too_few_values():
    with pytest.raises(InsufficientSample):
        summarize_blocks(HAND_SAMPLE, 5)


def test_too_few_blocks():
    with pytest.raises(BadConfig):
        summarize_blocks(HAND_SAMPLE, 1)


def test_path_needs_three_points():
    path = BridgePath(grid=np.array([0.0, 1.0]), values=np.array([0.0, 0.0]), normalizer=1.0, m=2)
    with pytest.raises(BadConfig):
        statistic_from_path(path)


@pytest.mark.parametrize("normalizer", [0.0, -1.0, math.inf, math.nan])
def test_bad_normalizer(normalizer):
    with pytest.raises(BadConfig):
        build_bridge_path(HAND_SAMPLE, 2, normalizer)


# -----------------------------
# STREAMING
# -----------------------------
def test_block_edges_floor_grid():
    assert_array_equal(block_edges(10, 3), [0, 3, 6, 10])
    assert int(np.diff(block_edges(10**9, 7)).sum()) == 10**9


def test_accumulator_holds_n_sums_whatever_m():
    assert BlockAccumulator(10, 10**9).accumulator_count == 10


def test_arbitrary_chunking_gives_the_same_summary():
    sample = draw_sample(AlphaStable(alpha=1.5), RngStream(29, 0), 10007)
    whole = summarize_blocks(sample, 13)
    rng = np.random.default_rng(3)
    cuts = np.sort(rng.choice(np.arange(1, 10007), size=40, replace=False))
    pieces = np.split(sample.values, cuts)
    split = summarize_chunks(pieces, 13, 10007)
    assert_array_equal(split.block_counts, whole.block_counts)
    assert_allclose(split.block_sums, whole.block_sums, rtol=1e-12, atol=1e-9)
    assert compute_statistic(split).value == pytest.approx(compute_statistic(whole).value, rel=1e-12)


def test_streamed_chunks_match_materialized_sample():
    stream = RngStream(29, 1)
    count = 3 * CHUNK_SIZE + 7
    streamed = summarize_chunks(iter_sample_chunks(StandardNormal(), stream, count), 100, count)
    whole = summarize_blocks(draw_sample(StandardNormal(), stream, count), 100)
    assert compute_statistic(streamed).value == pytest.approx(compute_statistic(whole).value, rel=1e-12)


def test_accumulator_rejects_overfeeding():
    accumulator = BlockAccumulator(2, 4)
    accumulator.feed([1.0, 2.0, 3.0])
    with pytest.raises(BadConfig):
        accumulator.feed([4.0, 5.0])


def test_accumulator_rejects_early_finalize():
    accumulator = BlockAccumulator(2, 4)
    accumulator.feed([1.0, 2.0])
    assert accumulator.fed == 2
    with pytest.raises(InsufficientSample):
        accumulator.finalize()


def test_merge_summaries():
    sample = draw_sample(StandardNormal(), RngStream(31, 0), 200)
    left = summarize_blocks(Sample(sample.values[:100]), 5)
    right = summarize_blocks(Sample(sample.values[100:]), 5)
    merged = merge_summaries(left, right)
    whole = summarize_blocks(sample, 10)
    assert_array_equal(merged.block_counts, whole.block_counts)
    assert_allclose(merged.block_sums, whole.block_sums, rtol=1e-13)
    assert compute_statistic(merged).value == pytest.approx(compute_statistic(whole).value, rel=1e-12)


def test_merge_summaries_needs_matching_edges():
    sample = draw_sample(StandardNormal(), RngStream(31, 1), 200)
    left = summarize_blocks(Sample(sample.values[:101]), 2)
    right = summarize_blocks(Sample(sample.values[101:]), 2)
    with pytest.raises(BadConfig):
        merge_summaries(left, right)


# -----------------------------
# PATHS
# -----------------------------
def test_bridge_endpoints_are_zero():
    sample = draw_sample(AlphaStable(alpha=1.1), RngStream(37, 0), 10**4)
    path = build_bridge_path(sample, 1000)
    assert path.n == 1000
    assert len(path.values) == 1001
    assert path.values[0] == 0.0
    assert path.values[-1] == 0.0


def test_statistic_does_not_depend_on_normalizer():
    sample = draw_sample(StandardNormal(), RngStream(37, 1), 1000)
    first = statistic_from_path(build_bridge_path(sample, 50, 1.0)).value
    second = statistic_from_path(build_bridge_path(sample, 50, 1234.5)).value
    assert first == pytest.approx(second, rel=1e-12)


def test_walk_centered_at_sample_mean_is_the_bridge():
    sample = draw_sample(StandardNormal(), RngStream(37, 2), 1000)
    walk = build_walk_path(sample, 20, float(sample.values.mean()))
    bridge = build_bridge_path(sample, 20)
    assert walk.kind == "walk"
    assert_allclose(walk.values, bridge.values, atol=1e-12)


def test_uncentered_walk_ends_at_scaled_total():
    sample = draw_sample(StandardNormal(), RngStream(37, 3), 400)
    walk = build_walk_path(sample, 4, 0.0, normalizer=1.0)
    assert walk.values[-1] == pytest.approx(math.fsum(sample.values.tolist()), abs=1e-12)


def test_path_csv():
    path = build_bridge_path(HAND_SAMPLE, 2, normalizer=1.0)
    buffer = io.StringIO()
    write_path_csv(path, buffer)
    rows = list(csv.reader(io.StringIO(buffer.getvalue())))
    assert rows[0] == ["t", "z"]
    assert rows[1:] == [["0", "0"], ["0.5", "-2"], ["1", "0"]]


def test_path_csv_round_trip(tmp_path):
    sample = draw_sample(AlphaStable(alpha=1.3), RngStream(37, 4), 500)
    path = build_bridge_path(sample, 50)
    target = tmp_path / "path.csv"
    write_path_csv(path, target)
    loaded = np.loadtxt(target, delimiter=",", skiprows=1)
    assert_array_equal(loaded[:, 0], path.grid)
    assert_array_equal(loaded[:, 1], path.values)


# -----------------------------
# FLOAT RANGE
# -----------------------------
HUGE_SAMPLE = Sample(np.array([1e308, 1e308, 1.0, 2.0] * 25))


def test_ordinary_sample_is_not_rescaled():
    summary = summarize_blocks(draw_sample(AlphaStable(alpha=1.1), RngStream(41, 0), 10**4), 10)
    assert summary.exponent == 0


def test_values_near_float_max_are_rescaled():
    summary = summarize_blocks(HUGE_SAMPLE, 10)
    assert summary.exponent > 0
    assert np.all(np.isfinite(summary.block_sums))
    assert compute_statistic(summary).value == pytest.approx(0.9, rel=1e-9)


def test_rescaling_mid_stream_matches_one_pass():
    values = np.concatenate((np.linspace(-1.0, 1.0, 60), HUGE_SAMPLE.values, np.linspace(3.0, -2.0, 40)))
    whole = summarize_blocks(Sample(values), 20)
    streamed = summarize_chunks(np.split(values, [30, 60, 130]), 20, len(values))
    assert streamed.exponent == whole.exponent
    assert compute_statistic(streamed).value == pytest.approx(compute_statistic(whole).value, rel=1e-12)


def test_merge_summaries_with_different_exponents():
    ordinary = draw_sample(StandardNormal(), RngStream(41, 1), 100)
    left = summarize_blocks(HUGE_SAMPLE, 5)
    right = summarize_blocks(ordinary, 5)
    merged = merge_summaries(left, right)
    whole = summarize_blocks(Sample(np.concatenate((HUGE_SAMPLE.values, ordinary.values))), 10)
    assert merged.exponent == left.exponent
    assert compute_statistic(merged).value == pytest.approx(compute_statistic(whole).value, rel=1e-12)


def test_huge_increments_are_squared_without_overflow():
    path = BridgePath(grid=np.linspace(0.0, 1.0, 4), values=np.array([0.0, 1e300, -1e300, 0.0]), normalizer=1.0, m=3)
    # increments 1e300, -2e300, 1e300
    assert statistic_from_path(path).value == pytest.approx(4 / 6, rel=1e-12)


def test_non_finite_values_are_refused():
    with pytest.raises(NumericOverflow):
        summarize_blocks(Sample(np.array([1.0, np.inf, 2.0, 3.0])), 2)


def test_bridge_path_refuses_overflowing_partial_sums():
    with pytest.raises(NumericOverflow):
        build_bridge_path(HUGE_SAMPLE, 10)


# -----------------------------
# CONSISTENCY (desk scale)
# -----------------------------
def _statistics(spec, m: int, n: int, scenarios: int, seed: int) -> np.ndarray:
    return np.array([
        compute_statistic(summarize_chunks(iter_sample_chunks(spec, RngStream(seed, index), m), n, m)).value
        for index in range(scenarios)
    ])


@pytest.mark.slow
def test_statistic_under_gaussian_converges_to_two_over_pi():
    values = _statistics(StandardNormal(), 10**5, 1000, 500, seed=53)
    assert abs(values.mean() - KAPPA_H0) <= 3 * SIGMA_PI / math.sqrt(1000 * 500) + 0.005


@pytest.mark.slow
def test_statistic_under_stable_drifts_to_zero():
    values = _statistics(AlphaStable(alpha=1.2), 10**5, 1000, 200, seed=59)
    assert values.mean() <= 0.2


@pytest.mark.slow
def test_centering_barely_matters_for_symmetric_stable():
    close = 0
    for index in range(200):
        sample = draw_sample(AlphaStable(alpha=1.8), RngStream(61, index), 10**6)
        close += abs(_statistic(sample, 1000) - uncentered_statistic(sample, 1000).value) <= 0.05
    assert close >= 190
