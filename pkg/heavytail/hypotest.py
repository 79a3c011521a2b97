import logging
import math
from typing import ClassVar, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from heavytail.dist import Sample, normal_cdf, normal_quantile
from heavytail.exceptions import BadConfig, NumericOverflow
from heavytail.statistic import compute_statistic, summarize_blocks

logger = logging.getLogger(__name__)

# Limit of the statistic under H0 (X in DA(2)); the limit under H1 is 0
KAPPA_H0 = 2.0 / math.pi
# Asymptotic variance of sqrt(n) * (statistic - 2/pi) under H0
SIGMA_PI_SQ = 1.0 + 4.0 / math.pi - 20.0 / math.pi**2
SIGMA_PI = math.sqrt(SIGMA_PI_SQ)

ACCEPT_CONCLUSION = "X is compatible with DA(2)"
REJECT_CONCLUSION = "X ∉ DA(2); second moment infinite"


class CovarianceConstants(BaseModel):
    """Limit covariance of (bivariation, quadratic variation) of Brownian increments."""

    model_config = ConfigDict(frozen=True)

    sigma11: float = 1.0 + 4.0 / math.pi - 12.0 / math.pi**2
    sigma12: float = 4.0 / math.pi
    sigma22: float = 2.0

    def sigma_pi_sq(self) -> float:
        return self.sigma11 - (4.0 / math.pi) * self.sigma12 + (4.0 / math.pi**2) * self.sigma22


COVARIANCE = CovarianceConstants()


class TestConfig(BaseModel):
    __test__: ClassVar[bool] = False
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=2)
    q: float = Field(gt=0, lt=1)


class TestResult(BaseModel):
    __test__: ClassVar[bool] = False

    statistic: float
    z_score: float = Field(serialization_alias="z")
    p_value: float = Field(ge=0, le=1, serialization_alias="p")
    reject: bool
    n: int
    m: int
    q: float
    kappa_target: float = KAPPA_H0
    sigma_pi_sq: float = SIGMA_PI_SQ
    conclusion: str
    warnings: List[str] = []

    def to_json(self) -> str:
        """Single-line record with the stable keys statistic, z, p, reject, n, m, q."""
        keys = {"statistic", "z_score", "p_value", "reject", "n", "m", "q"}
        return self.model_dump_json(by_alias=True, include=keys)


def make_config(n: int, q: float) -> TestConfig:
    try:
        return TestConfig(n=n, q=q)
    except ValidationError as e:
        err = e.errors()[0]
        raise BadConfig(f"{err['loc'][0]}: {err['msg']}") from e


def critical_quantile(q: float) -> float:
    """z_{1-q/2}."""
    return normal_quantile(1.0 - q / 2.0)


def standardize(statistic, n: int):
    """sqrt(n) / sigma_pi * (statistic - 2/pi); works elementwise on arrays."""
    if n < 2:
        raise BadConfig(f"the number of blocks n must be at least 2, got {n}")
    return math.sqrt(n) * (statistic - KAPPA_H0) / SIGMA_PI


def critical_band(n: int, q: float) -> Tuple[float, float]:
    """Acceptance interval for the statistic; outside it H0 is rejected."""
    config = make_config(n, q)
    half_width = critical_quantile(config.q) * SIGMA_PI / math.sqrt(config.n)
    return KAPPA_H0 - half_width, KAPPA_H0 + half_width


def block_count_warning(n: int, m: int) -> List[str]:
    if n > math.sqrt(m):
        return [f"n={n} exceeds sqrt(m)={math.sqrt(m):.1f}; use n significantly smaller than m"]
    return []


def decide(statistic: float, n: int, m: int, q: float) -> TestResult:
    config = make_config(n, q)
    if not math.isfinite(statistic):
        raise NumericOverflow(f"the statistic is not a finite number: {statistic!r}")
    z = standardize(statistic, config.n)
    reject = abs(z) > critical_quantile(config.q)
    p_value = min(1.0, 2.0 * normal_cdf(-abs(z)))

    warnings = block_count_warning(config.n, m)
    logger.debug("n=%d m=%d statistic=%.12g z=%.6g reject=%s", config.n, m, statistic, z, reject)

    return TestResult(
        statistic=statistic,
        z_score=z,
        p_value=p_value,
        reject=reject,
        n=config.n,
        m=m,
        q=config.q,
        conclusion=REJECT_CONCLUSION if reject else ACCEPT_CONCLUSION,
        warnings=warnings,
    )


def run_test(sample: Sample, config: TestConfig) -> TestResult:
    summary = summarize_blocks(sample, config.n)
    value = compute_statistic(summary)
    return decide(value.value, config.n, summary.m, config.q)
