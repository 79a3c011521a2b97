"""Normalized bivariation of the block-aggregated, mean-centered sample.

The primary route is one streaming pass into n block sums
(``BlockAccumulator``); the bridge path Z^m is built separately and gives the
same value, which the tests use as an oracle.
"""

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from heavytail.dist import Sample
from heavytail.exceptions import BadConfig, DegenerateSample, InsufficientSample, NumericOverflow

logger = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps
# deviations within this many ulps of their operands are roundoff
_ROUNDOFF_ULPS = 8.0
# scaled block sums stay below 2**_SUM_EXPONENT_LIMIT in magnitude
_SUM_EXPONENT_LIMIT = 1000
# increments above this are rescaled before squaring
_SQUARE_LIMIT = 2.0**500


@dataclass(frozen=True)
class BlockSummary:
    """Block sums and their total, all scaled by 2**-exponent."""

    n: int
    m: int
    block_sums: np.ndarray
    block_counts: np.ndarray
    total_sum: float
    exponent: int = 0

    @property
    def mean(self) -> float:
        return self.total_sum / self.m


@dataclass(frozen=True)
class StatisticValue:
    value: float
    n: int
    m: int

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class BridgePath:
    grid: np.ndarray
    values: np.ndarray
    normalizer: float
    m: int
    kind: str = "bridge"

    @property
    def n(self) -> int:
        return len(self.values) - 1


def block_edges(m: int, n: int) -> np.ndarray:
    """floor(m*i/n) for i = 0..n."""
    return np.arange(n + 1, dtype=np.int64) * m // n


def _check_blocks(m: int, n: int) -> None:
    if n < 2:
        raise BadConfig(f"the number of blocks n must be at least 2, got {n}")
    if m < n:
        raise InsufficientSample(f"a sample of {m} values cannot be split into {n} blocks")


def _neumaier_add(sums: np.ndarray, comp: np.ndarray, values: np.ndarray) -> None:
    total = sums + values
    comp += np.where(np.abs(sums) >= np.abs(values), (sums - total) + values, (values - total) + sums)
    sums[:] = total


class BlockAccumulator:
    """Incremental block sums of a sample of known length m.

    Holds exactly n compensated accumulators whatever m is; chunks may cut
    blocks anywhere. Sums are kept scaled by 2**-exponent, where the exponent
    only grows once a chunk could push a block sum out of float64 range.
    """

    def __init__(self, n: int, m: int):
        _check_blocks(m, n)
        self.n = n
        self.m = m
        self._edges = block_edges(m, n)
        self._sums = np.zeros(n)
        self._comp = np.zeros(n)
        self._fed = 0
        self._exponent = 0

    @property
    def accumulator_count(self) -> int:
        return int(self._sums.size)

    @property
    def fed(self) -> int:
        return self._fed

    @property
    def exponent(self) -> int:
        return self._exponent

    def _rescale_for(self, chunk: np.ndarray) -> np.ndarray:
        peak = float(np.max(np.abs(chunk)))
        if not math.isfinite(peak):
            raise NumericOverflow(f"sample holds a non-finite value near position {self._fed}")
        needed = math.frexp(peak)[1] + self.m.bit_length() - _SUM_EXPONENT_LIMIT
        if needed > self._exponent:
            shift = needed - self._exponent
            np.ldexp(self._sums, -shift, out=self._sums)
            np.ldexp(self._comp, -shift, out=self._comp)
            self._exponent = needed
            logger.debug("block sums rescaled by 2**-%d after %d values", self._exponent, self._fed)
        if self._exponent:
            return np.ldexp(chunk, -self._exponent)
        return chunk

    def feed(self, chunk) -> None:
        chunk = np.ascontiguousarray(chunk, dtype=np.float64).ravel()
        if chunk.size == 0:
            return
        start = self._fed
        stop = start + chunk.size
        if stop > self.m:
            raise BadConfig(f"accumulator sized for {self.m} values was fed {stop}")
        chunk = self._rescale_for(chunk)
        first = int(np.searchsorted(self._edges, start, side="right")) - 1
        last = int(np.searchsorted(self._edges, stop - 1, side="right")) - 1
        offsets = np.maximum(self._edges[first : last + 1], start) - start
        pieces = np.add.reduceat(chunk, offsets)
        block = slice(first, last + 1)
        # slices are views, updated in place
        _neumaier_add(self._sums[block], self._comp[block], pieces)
        self._fed = stop

    def finalize(self) -> BlockSummary:
        if self._fed != self.m:
            raise InsufficientSample(f"accumulator expected {self.m} values, received {self._fed}")
        total = math.fsum(np.concatenate((self._sums, self._comp)).tolist())
        return BlockSummary(
            n=self.n,
            m=self.m,
            block_sums=self._sums + self._comp,
            block_counts=np.diff(self._edges),
            total_sum=total,
            exponent=self._exponent,
        )


def summarize_blocks(sample: Sample, n: int) -> BlockSummary:
    accumulator = BlockAccumulator(n, len(sample))
    accumulator.feed(sample.values)
    return accumulator.finalize()


def summarize_chunks(chunks: Iterable[np.ndarray], n: int, m: int) -> BlockSummary:
    accumulator = BlockAccumulator(n, m)
    for chunk in chunks:
        accumulator.feed(chunk)
    return accumulator.finalize()


def merge_summaries(left: BlockSummary, right: BlockSummary) -> BlockSummary:
    """Summary of the concatenated sample, when block edges line up."""
    n, m = left.n + right.n, left.m + right.m
    counts = np.concatenate((left.block_counts, right.block_counts))
    if not np.array_equal(counts, np.diff(block_edges(m, n))):
        raise BadConfig(f"summaries over ({left.m}, {left.n}) and ({right.m}, {right.n}) do not tile ({m}, {n})")
    exponent = max(left.exponent, right.exponent)
    left_shift, right_shift = left.exponent - exponent, right.exponent - exponent
    return BlockSummary(
        n=n,
        m=m,
        block_sums=np.concatenate((np.ldexp(left.block_sums, left_shift), np.ldexp(right.block_sums, right_shift))),
        block_counts=counts,
        total_sum=math.fsum([math.ldexp(left.total_sum, left_shift), math.ldexp(right.total_sum, right_shift)]),
        exponent=exponent,
    )


# -----------------------------
# STATISTIC
# -----------------------------
def _snap_roundoff(values: np.ndarray, magnitude: np.ndarray) -> np.ndarray:
    return np.where(np.abs(values) <= _ROUNDOFF_ULPS * _EPS * magnitude, 0.0, values)


def _normalized_bivariation(increments: np.ndarray, n: int, m: int) -> StatisticValue:
    size = np.abs(increments)
    if not np.all(np.isfinite(size)):
        raise NumericOverflow("block sums left the float64 range")
    peak = float(size.max())
    if peak > _SQUARE_LIMIT:
        # the ratio is scale-free
        size = np.ldexp(size, -math.frexp(peak)[1])
    denominator = math.fsum((size * size).tolist())
    if denominator == 0.0:
        raise DegenerateSample("all centered block sums vanish (constant data?)")
    numerator = math.fsum((size[:-1] * size[1:]).tolist())
    return StatisticValue(value=numerator / denominator, n=n, m=m)


def compute_statistic(summary: BlockSummary) -> StatisticValue:
    shift = summary.block_counts * summary.mean
    deviations = summary.block_sums - shift
    deviations = _snap_roundoff(deviations, np.abs(summary.block_sums) + np.abs(shift))
    return _normalized_bivariation(deviations, summary.n, summary.m)


def uncentered_statistic(sample: Sample, n: int) -> StatisticValue:
    """Same ratio on raw block sums, i.e. assuming the sample mean is 0."""
    summary = summarize_blocks(sample, n)
    return _normalized_bivariation(summary.block_sums, summary.n, summary.m)


# -----------------------------
# PATHS
# -----------------------------
def _compensated_cumsum(values: np.ndarray) -> np.ndarray:
    out = np.zeros(len(values) + 1)
    running, comp = 0.0, 0.0
    for i, value in enumerate(values.tolist(), start=1):
        total = running + value
        if abs(running) >= abs(value):
            comp += (running - total) + value
        else:
            comp += (value - total) + running
        running = total
        out[i] = running + comp
    return out


def _partial_sums(sample: Sample, n: int) -> np.ndarray:
    m = len(sample)
    _check_blocks(m, n)
    with np.errstate(over="ignore", invalid="ignore"):
        blocks = np.add.reduceat(sample.values, block_edges(m, n)[:-1])
        partial = _compensated_cumsum(blocks)
    if not np.all(np.isfinite(partial)):
        raise NumericOverflow("partial sums of the sample left the float64 range")
    return partial


def _resolve_normalizer(normalizer: Optional[float], m: int) -> float:
    if normalizer is None:
        return math.sqrt(m)
    if not normalizer > 0 or not math.isfinite(normalizer):
        raise BadConfig(f"normalizer must be a positive real, got {normalizer!r}")
    return float(normalizer)


def build_bridge_path(sample: Sample, n: int, normalizer: Optional[float] = None) -> BridgePath:
    """Z^m(i/n) = (S_floor(m i/n) - (i/n) S_m) / normalizer; default normalizer sqrt(m)."""
    m = len(sample)
    normalizer = _resolve_normalizer(normalizer, m)
    partial = _partial_sums(sample, n)
    grid = np.arange(n + 1) / n
    drift = grid * partial[-1]
    values = _snap_roundoff(partial - drift, np.abs(partial) + np.abs(drift)) / normalizer
    values[0] = 0.0
    values[-1] = 0.0
    return BridgePath(grid=grid, values=values, normalizer=normalizer, m=m)


def build_walk_path(sample: Sample, n: int, centering: float, normalizer: Optional[float] = None) -> BridgePath:
    """Un-bridged (S_floor(m i/n) - (i/n) m centering) / normalizer."""
    m = len(sample)
    normalizer = _resolve_normalizer(normalizer, m)
    partial = _partial_sums(sample, n)
    grid = np.arange(n + 1) / n
    values = (partial - grid * m * centering) / normalizer
    return BridgePath(grid=grid, values=values, normalizer=normalizer, m=m, kind="walk")


def statistic_from_path(path: BridgePath) -> StatisticValue:
    if len(path.values) < 3:
        raise BadConfig(f"a path needs at least 3 grid points, got {len(path.values)}")
    return _normalized_bivariation(np.diff(path.values), path.n, path.m)


def write_path_csv(path: BridgePath, target) -> None:
    """``t,z`` rows, 17 significant digits; target is a path or a text handle."""
    if not hasattr(target, "write"):
        with open(target, "w", encoding="utf-8", newline="") as handle:
            write_path_csv(path, handle)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["t", "z"])
    for t, z in zip(path.grid.tolist(), path.values.tolist()):
        writer.writerow([format(t, ".17g"), format(z, ".17g")])
