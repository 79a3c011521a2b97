"""Monte Carlo calibration and power experiments.

Every scenario draws one sample per m from its own (seed, index) stream and
reduces it once for all n; decisions for every q are taken on the stored
statistics. Results are folded in scenario order, so the output does not
depend on the number of workers.
"""

import csv
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Annotated, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, Field, PositiveInt, ValidationError, model_validator
from scipy import stats

from heavytail.dist import (
    MAX_SEED,
    DistributionSpec,
    RngStream,
    WeakDependentGaussianPower,
    describe_distribution,
    iter_sample_chunks,
    normal_quantile,
)
from heavytail.exceptions import BadConfig, FitError, HeavyTailError
from heavytail.hypotest import block_count_warning, critical_quantile, standardize
from heavytail.statistic import BlockAccumulator, compute_statistic

logger = logging.getLogger(__name__)

DESK_SCALE_MAX_M = 10**6
DEFAULT_LEVEL = 0.95

REPORT_HEADER = [
    "dist", "param", "m", "n", "q", "scenarios", "rejections",
    "err", "err_low", "err_high", "mean_stat", "std_stat",
]
HISTOGRAM_HEADER = ["bin_left", "bin_right", "count"]


class HypothesisLabel(str, Enum):
    H0 = "H0"
    H1 = "H1"
    UNKNOWN = "unknown"


# -----------------------------
# SPECS AND RESULTS
# -----------------------------
class ExperimentSpec(BaseModel):
    distribution: DistributionSpec
    m_values: List[PositiveInt] = Field(min_length=1)
    n_values: List[Annotated[int, Field(ge=2)]] = Field(min_length=1)
    q_values: List[Annotated[float, Field(gt=0, lt=1)]] = Field(min_length=1)
    scenarios: PositiveInt
    master_seed: int = Field(ge=0, le=MAX_SEED)
    hypothesis_label: HypothesisLabel = HypothesisLabel.UNKNOWN

    @model_validator(mode="after")
    def _blocks_fit_samples(self):
        too_small = [(m, n) for m in self.m_values for n in self.n_values if m < n]
        if too_small:
            m, n = too_small[0]
            raise ValueError(f"every (m, n) cell needs m >= n, got m={m} < n={n}")
        return self


class CellResult(BaseModel):
    m: int
    n: int
    q: float
    rejections: int = Field(ge=0)
    scenarios: int = Field(ge=1)
    errors: int = Field(0, ge=0)
    err: float = Field(ge=0, le=1)
    type2: float = Field(ge=0, le=1)
    mean_statistic: float
    std_statistic: float

    @property
    def valid(self) -> int:
        return self.scenarios - self.errors


class ExperimentReport(BaseModel):
    spec: ExperimentSpec
    cells: List[CellResult]


class HistogramCell(BaseModel):
    distribution: DistributionSpec
    m: PositiveInt
    n: int = Field(ge=2)
    scenarios: PositiveInt
    master_seed: int = Field(ge=0, le=MAX_SEED)

    @model_validator(mode="after")
    def _blocks_fit_sample(self):
        if self.m < self.n:
            raise ValueError(f"the cell needs m >= n, got m={self.m} < n={self.n}")
        return self


class HistogramExport(BaseModel):
    bin_edges: List[float]
    counts: List[int]
    ks_distance: float
    n: int
    reference: str = "standard normal density"


class DecayFit(BaseModel):
    amplitude: float
    rate: float
    r_squared: float
    points: int


def _validation_message(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(part) for part in err.get("loc", ()))
    return f"{where}: {err['msg']}" if where else err["msg"]


def make_experiment_spec(**fields) -> ExperimentSpec:
    try:
        return ExperimentSpec(**fields)
    except ValidationError as e:
        raise BadConfig(f"invalid experiment: {_validation_message(e)}") from e


def make_histogram_cell(**fields) -> HistogramCell:
    try:
        return HistogramCell(**fields)
    except ValidationError as e:
        raise BadConfig(f"invalid histogram cell: {_validation_message(e)}") from e


def load_experiment_spec(path) -> ExperimentSpec:
    """JSON spec file with the ExperimentSpec fields."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise BadConfig(f"cannot read experiment spec {path}: {e.strerror or e}") from e
    try:
        return ExperimentSpec.model_validate_json(text)
    except ValidationError as e:
        raise BadConfig(f"invalid experiment spec {path}: {_validation_message(e)}") from e


# -----------------------------
# SCENARIO ENGINE
# -----------------------------
@dataclass(frozen=True)
class ScenarioBatch:
    statistics: Dict[int, np.ndarray]
    errors: Dict[int, int]


def underlying_count(distribution: DistributionSpec, m: int) -> int:
    # the chain loses its first value
    if isinstance(distribution, WeakDependentGaussianPower):
        return m + 1
    return m


def _scenario_statistics(
    distribution: DistributionSpec, m: int, n_values: Tuple[int, ...], stream: RngStream
) -> Tuple[List[float], List[Optional[str]]]:
    values = [math.nan] * len(n_values)
    failures: List[Optional[str]] = [None] * len(n_values)
    try:
        accumulators = [BlockAccumulator(n, m) for n in n_values]
        for chunk in iter_sample_chunks(distribution, stream, underlying_count(distribution, m)):
            for accumulator in accumulators:
                accumulator.feed(chunk)
    except HeavyTailError as e:
        return values, [f"{type(e).__name__}: {e}"] * len(n_values)

    for i, accumulator in enumerate(accumulators):
        try:
            values[i] = compute_statistic(accumulator.finalize()).value
        except HeavyTailError as e:
            failures[i] = f"{type(e).__name__}: {e}"
            continue
        if not math.isfinite(values[i]):
            failures[i] = f"non-finite statistic {values[i]!r}"
            values[i] = math.nan
    return values, failures


def simulate_statistics(
    distribution: DistributionSpec,
    m: int,
    n_values: Sequence[int],
    scenarios: int,
    master_seed: int,
    workers: int = 1,
    stream_offset: int = 0,
) -> ScenarioBatch:
    """The statistic for each n over ``scenarios`` independent samples of size m.

    Scenario s uses stream index ``stream_offset + s``; failed scenarios are
    NaN and counted in ``errors``.
    """
    n_values = tuple(n_values)
    results = Parallel(n_jobs=workers)(
        delayed(_scenario_statistics)(distribution, m, n_values, RngStream(master_seed, stream_offset + s))
        for s in range(scenarios)
    )

    statistics = {n: np.full(scenarios, math.nan) for n in n_values}
    errors = {n: 0 for n in n_values}
    for s, (values, failures) in enumerate(results):
        for n, value, failure in zip(n_values, values, failures):
            statistics[n][s] = value
            if failure is not None:
                errors[n] += 1
                logger.debug("scenario %d (m=%d, n=%d) failed: %s", stream_offset + s, m, n, failure)
    for n, count in errors.items():
        if count:
            logger.warning("%d of %d scenarios failed at m=%d, n=%d", count, scenarios, m, n)
    return ScenarioBatch(statistics=statistics, errors=errors)


def _make_cell(m: int, n: int, q: float, statistics: np.ndarray) -> CellResult:
    # every non-finite statistic is a failed scenario
    valid = statistics[np.isfinite(statistics)]
    errors = int(statistics.size - valid.size)
    if valid.size:
        z = standardize(valid, n)
        rejections = int(np.count_nonzero(np.abs(z) > critical_quantile(q)))
        err = rejections / valid.size
        mean = float(np.mean(valid))
        std = float(np.std(valid, ddof=1)) if valid.size > 1 else 0.0
    else:
        rejections, err, mean, std = 0, 0.0, math.nan, math.nan
    return CellResult(
        m=m,
        n=n,
        q=q,
        rejections=rejections,
        scenarios=len(statistics),
        errors=errors,
        err=err,
        type2=1.0 - err,
        mean_statistic=mean,
        std_statistic=std,
    )


def run_experiment(spec: ExperimentSpec, workers: int = 1, full_scale: bool = False) -> ExperimentReport:
    largest = max(spec.m_values)
    if largest > DESK_SCALE_MAX_M and not full_scale:
        raise BadConfig(f"m={largest} exceeds the desk-scale limit {DESK_SCALE_MAX_M}; pass full_scale to run it")

    cells: List[CellResult] = []
    for position, m in enumerate(spec.m_values):
        logger.info("m=%d: %d scenarios over n=%s", m, spec.scenarios, spec.n_values)
        batch = simulate_statistics(
            spec.distribution,
            m,
            spec.n_values,
            spec.scenarios,
            spec.master_seed,
            workers=workers,
            stream_offset=position * spec.scenarios,
        )
        for n in spec.n_values:
            for message in block_count_warning(n, m):
                logger.warning(message)
            for q in spec.q_values:
                cells.append(_make_cell(m, n, q, batch.statistics[n]))
    return ExperimentReport(spec=spec, cells=cells)


# -----------------------------
# SUMMARIES OF A GRID
# -----------------------------
def err_confidence_interval(cell: CellResult, level: float = DEFAULT_LEVEL) -> Tuple[float, float]:
    """Wilson score interval for the rejection rate."""
    if not 0.0 < level < 1.0:
        raise BadConfig(f"confidence level must lie in (0, 1), got {level}")
    total = cell.valid
    if total == 0:
        return 0.0, 1.0
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    p_hat = cell.rejections / total
    denominator = 1.0 + z * z / total
    center = (p_hat + z * z / (2 * total)) / denominator
    half = z / denominator * math.sqrt(p_hat * (1 - p_hat) / total + z * z / (4 * total * total))
    low = 0.0 if cell.rejections == 0 else max(0.0, center - half)
    high = 1.0 if cell.rejections == total else min(1.0, center + half)
    return low, high


def type2_decay_fit(cells: Sequence[CellResult]) -> DecayFit:
    """Fit type2 ~ amplitude * exp(-rate * n) by least squares on log(type2)."""
    usable = []
    for cell in cells:
        if 0.0 < cell.type2 < 1.0:
            usable.append(cell)
        else:
            logger.warning("excluding n=%d from the decay fit: type2=%g", cell.n, cell.type2)
    if len(usable) < 3:
        raise FitError(f"need at least 3 cells with 0 < type2 < 1, got {len(usable)}")

    n = np.array([cell.n for cell in usable], dtype=float)
    if np.unique(n).size < 2:
        raise FitError("the decay fit needs at least two distinct n")
    fit = stats.linregress(n, np.log([cell.type2 for cell in usable]))
    return DecayFit(
        amplitude=math.exp(fit.intercept),
        rate=-fit.slope,
        r_squared=fit.rvalue**2,
        points=len(usable),
    )


def best_parameters(cells: Sequence[CellResult], q: float) -> CellResult:
    """The (m, n) cell whose rejection rate is closest to the nominal level q."""
    candidates = [cell for cell in cells if math.isclose(cell.q, q)]
    if not candidates:
        raise BadConfig(f"no cell was run at q={q}")
    return min(candidates, key=lambda cell: (abs(cell.err - q), cell.m, cell.n))


def standardized_histogram(statistics, n: int, bins: int) -> HistogramExport:
    if bins < 1:
        raise BadConfig(f"bins must be positive, got {bins}")
    values = np.asarray(statistics, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise BadConfig("no finite statistic to histogram")
    z = standardize(values, n)
    counts, edges = np.histogram(z, bins=bins)
    ks = stats.kstest(z, "norm").statistic
    return HistogramExport(
        bin_edges=edges.tolist(),
        counts=counts.tolist(),
        ks_distance=float(ks),
        n=n,
    )


def export_standardized_histogram(cell: HistogramCell, bins: int, workers: int = 1) -> HistogramExport:
    if cell.scenarios < 100:
        raise BadConfig(f"a histogram needs at least 100 scenarios, got {cell.scenarios}")
    batch = simulate_statistics(cell.distribution, cell.m, [cell.n], cell.scenarios, cell.master_seed, workers=workers)
    return standardized_histogram(batch.statistics[cell.n], cell.n, bins)


# -----------------------------
# HEURISTIC BOUNDS
# -----------------------------
def _check_alpha(alpha: float) -> None:
    if not 1.0 < alpha < 2.0:
        raise BadConfig(f"the heuristic bounds hold for 1 < alpha < 2, got {alpha}")


def heuristic_power_bound(alpha: float, q: float, n: int, c_constant: float) -> float:
    """Heuristic lower bound max(0, 1 - C / n**(2/alpha - 1)) on the power.

    Not rigorous: it assumes a symmetric stable sample with mean close to 0.
    C(alpha, q) is bounded in alpha but unknown, hence a parameter.
    """
    _check_alpha(alpha)
    if not 0.0 < q < 1.0:
        raise BadConfig(f"q must lie in (0, 1), got {q}")
    if n < 1 or c_constant <= 0:
        raise BadConfig(f"need n >= 1 and c_constant > 0, got n={n}, c_constant={c_constant}")
    return max(0.0, 1.0 - c_constant / n ** (2.0 / alpha - 1.0))


def required_blocks(alpha: float, c_constant: float, target: float) -> float:
    """Smallest n for which the heuristic power bound reaches ``target``."""
    _check_alpha(alpha)
    if not 0.0 < target < 1.0 or c_constant <= 0:
        raise BadConfig(f"need 0 < target < 1 and c_constant > 0, got {target}, {c_constant}")
    if c_constant <= 1.0 - target:
        return 1.0
    return (c_constant / (1.0 - target)) ** (1.0 / (2.0 / alpha - 1.0))


def heuristic_mean_deviation_bound(alpha: float, m: int, epsilon: float, c_constant: float) -> float:
    """Heuristic bound on P(|sample mean| > epsilon) for a centered stable sample."""
    _check_alpha(alpha)
    if m < 1 or epsilon <= 0 or c_constant <= 0:
        raise BadConfig(f"need m >= 1, epsilon > 0, c_constant > 0, got {m}, {epsilon}, {c_constant}")
    bound = c_constant / (epsilon**alpha * m ** (alpha - 1.0)) + c_constant / m ** (2.0 / alpha - 1.0)
    return min(1.0, bound)


# -----------------------------
# CSV EXPORT
# -----------------------------
def _fmt(value: float) -> str:
    return format(value, ".17g")


def _open_target(target):
    if hasattr(target, "write"):
        return target, False
    return open(target, "w", encoding="utf-8", newline=""), True


def write_report_csv(report: ExperimentReport, target, level: float = DEFAULT_LEVEL) -> None:
    kind, param = describe_distribution(report.spec.distribution)
    handle, owned = _open_target(target)
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for cell in report.cells:
            low, high = err_confidence_interval(cell, level)
            writer.writerow([
                kind, param, cell.m, cell.n, _fmt(cell.q), cell.scenarios, cell.rejections,
                _fmt(cell.err), _fmt(low), _fmt(high), _fmt(cell.mean_statistic), _fmt(cell.std_statistic),
            ])
    finally:
        if owned:
            handle.close()


def write_histogram_csv(histogram: HistogramExport, target) -> None:
    handle, owned = _open_target(target)
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(HISTOGRAM_HEADER)
        edges = histogram.bin_edges
        for left, right, count in zip(edges[:-1], edges[1:], histogram.counts):
            writer.writerow([_fmt(left), _fmt(right), count])
    finally:
        if owned:
            handle.close()
