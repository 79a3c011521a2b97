"""Seeded sample generation for every law the test is calibrated on.

All generators draw from a numpy ``Generator`` keyed by
``(master_seed, stream_index)`` and produce their values in fixed-size
chunks, so a sample of 10**9 values can be streamed through the statistic
and a materialized sample is bit-identical to the streamed one.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Iterator, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError
from scipy.special import ndtr, ndtri

from heavytail.exceptions import BadConfig, InsufficientSample, SampleFormatError

logger = logging.getLogger(__name__)

CHUNK_SIZE = 2**16
MAX_SEED = 2**64 - 1


# -----------------------------
# RANDOM STREAMS
# -----------------------------
@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int

    def __post_init__(self):
        for name in ("master_seed", "stream_index"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or not 0 <= value <= MAX_SEED:
                raise BadConfig(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    def generator(self) -> np.random.Generator:
        root = np.random.SeedSequence([int(self.master_seed), int(self.stream_index)])
        return np.random.Generator(np.random.PCG64(root))


@dataclass(frozen=True)
class Sample:
    values: np.ndarray
    source: str = "memory"

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise BadConfig(f"a sample is one-dimensional, got shape {values.shape}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])


# -----------------------------
# DISTRIBUTION SPECS
# -----------------------------
class _Spec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class StandardNormal(_Spec):
    kind: Literal["normal"] = "normal"


class GaussianPower(_Spec):
    """X = |G|**-r. In DA(2) for r <= 1/2, in DA(1/r) otherwise."""

    kind: Literal["gaussian-power"] = "gaussian-power"
    r: float = Field(gt=0)


class AlphaStable(_Spec):
    kind: Literal["alpha-stable"] = "alpha-stable"
    alpha: float = Field(gt=0, le=2)
    beta: float = Field(0.0, ge=-1, le=1)
    scale: float = Field(1.0, gt=0)
    location: float = 0.0


class WeakDependentGaussianPower(_Spec):
    """Y_k = X_{k-1} / (X_{k-1} + 1) * X_k over i.i.d. X = |G|**-r."""

    kind: Literal["weak-dependent"] = "weak-dependent"
    r: float = Field(gt=0)


class ExternalFile(_Spec):
    kind: Literal["file"] = "file"
    path: str = Field(min_length=1)


DistributionSpec = Annotated[
    Union[StandardNormal, GaussianPower, AlphaStable, WeakDependentGaussianPower, ExternalFile],
    Field(discriminator="kind"),
]

_spec_adapter = TypeAdapter(DistributionSpec)


def make_distribution(**fields) -> DistributionSpec:
    try:
        return _spec_adapter.validate_python(fields)
    except ValidationError as e:
        raise BadConfig(f"invalid distribution {fields}: {_first_error(e)}") from e


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    where = ".".join(str(part) for part in err.get("loc", ()))
    return f"{where}: {err['msg']}" if where else err["msg"]


_PARAM_NAMES = {
    "normal": (),
    "gaussian-power": ("r",),
    "weak-dependent": ("r",),
    "alpha-stable": ("alpha", "beta", "scale", "location"),
}


def parse_distribution(text: str) -> DistributionSpec:
    """Parse the ``kind:param[:param...]`` mini-language.

    ``normal``, ``gaussian-power:R``, ``weak-dependent:R``,
    ``alpha-stable:ALPHA[:BETA[:SCALE[:LOC]]]``, ``file:PATH``.
    """
    kind, _, rest = text.strip().partition(":")
    if kind == "file":
        return make_distribution(kind="file", path=rest)
    if kind not in _PARAM_NAMES:
        known = ", ".join(sorted(list(_PARAM_NAMES) + ["file"]))
        raise BadConfig(f"unknown distribution kind {kind!r} (known: {known})")

    names = _PARAM_NAMES[kind]
    params = rest.split(":") if rest else []
    required = 1 if names else 0
    if not required <= len(params) <= len(names):
        raise BadConfig(f"{kind} takes {required} to {len(names)} parameters, got {len(params)} in {text!r}")
    fields = {"kind": kind}
    for name, raw in zip(names, params):
        try:
            fields[name] = float(raw)
        except ValueError:
            raise BadConfig(f"parameter {name} of {kind} is not a number: {raw!r}") from None
    return make_distribution(**fields)


def describe_distribution(spec: DistributionSpec) -> Tuple[str, str]:
    """(kind, colon-joined parameters) as used in report rows."""
    if isinstance(spec, ExternalFile):
        return spec.kind, spec.path
    values = [getattr(spec, name) for name in _PARAM_NAMES[spec.kind]]
    return spec.kind, ":".join(format(v, "g") for v in values)


def domain_of_attraction(spec: DistributionSpec) -> Optional[float]:
    """Index alpha of the domain of attraction, None when unknown (files)."""
    if isinstance(spec, StandardNormal):
        return 2.0
    if isinstance(spec, (GaussianPower, WeakDependentGaussianPower)):
        return 2.0 if spec.r <= 0.5 else 1.0 / spec.r
    if isinstance(spec, AlphaStable):
        return spec.alpha
    return None


# -----------------------------
# CHUNK GENERATORS
# -----------------------------
def _gaussian_power_chunk(rng: np.random.Generator, r: float, size: int) -> np.ndarray:
    g = rng.standard_normal(size)
    # g == 0 is redrawn, never clamped
    bad = g == 0.0
    while bad.any():
        g[bad] = rng.standard_normal(int(bad.sum()))
        bad = g == 0.0
    # values that overflow or underflow to 0 are redrawn
    with np.errstate(over="ignore", divide="ignore", under="ignore"):
        x = np.abs(g) ** -r
        bad = ~np.isfinite(x) | (x == 0.0)
        while bad.any():
            redraw = rng.standard_normal(int(bad.sum()))
            x[bad] = np.abs(redraw) ** -r
            bad = ~np.isfinite(x) | (x == 0.0)
    return x


def _alpha_stable_chunk(
    rng: np.random.Generator, alpha: float, beta: float, scale: float, location: float, size: int
) -> np.ndarray:
    # Chambers-Mallows-Stuck, Weron's form; characteristic function
    # exp(i*loc*t - scale**alpha * |t|**alpha * (1 - i*beta*sign(t)*w(t, alpha)))
    v = rng.uniform(-np.pi / 2, np.pi / 2, size)
    w = rng.standard_exponential(size)
    if alpha != 1.0:
        zeta = beta * np.tan(np.pi * alpha / 2)
        b = np.arctan(zeta) / alpha
        s = (1 + zeta**2) ** (1 / (2 * alpha))
        x = (
            s
            * np.sin(alpha * (v + b))
            / np.cos(v) ** (1 / alpha)
            * (np.cos(v - alpha * (v + b)) / w) ** ((1 - alpha) / alpha)
        )
        return scale * x + location
    half_pi_bv = np.pi / 2 + beta * v
    x = (2 / np.pi) * (half_pi_bv * np.tan(v) - beta * np.log((np.pi / 2) * w * np.cos(v) / half_pi_bv))
    return scale * x + (2 / np.pi) * beta * scale * math.log(scale) + location


def weak_dependent_chain(x: np.ndarray) -> np.ndarray:
    """Map X_1..X_k to the 1-dependent Y_2..Y_k."""
    x = np.asarray(x, dtype=np.float64)
    previous = x[:-1]
    return previous / (previous + 1.0) * x[1:]


def _chunk_sizes(count: int, chunk_size: int) -> Iterator[int]:
    produced = 0
    while produced < count:
        size = min(chunk_size, count - produced)
        produced += size
        yield size


def iter_sample_chunks(
    spec: DistributionSpec, stream: RngStream, count: int, chunk_size: int = CHUNK_SIZE
) -> Iterator[np.ndarray]:
    """Yield the values of ``draw_sample(spec, stream, count)`` chunk by chunk.

    For the weak-dependent chain ``count`` is the number of underlying X
    values, so ``count - 1`` values are produced.
    """
    if count < 1:
        raise BadConfig(f"count must be at least 1, got {count}")
    if chunk_size < 1:
        raise BadConfig(f"chunk_size must be at least 1, got {chunk_size}")

    if isinstance(spec, ExternalFile):
        values = read_sample(spec.path).values
        if len(values) < count:
            raise InsufficientSample(f"{spec.path} holds {len(values)} values, {count} requested")
        for start in range(0, count, chunk_size):
            yield values[start : min(start + chunk_size, count)]
        return

    rng = stream.generator()
    if isinstance(spec, StandardNormal):
        for size in _chunk_sizes(count, chunk_size):
            yield rng.standard_normal(size)
    elif isinstance(spec, GaussianPower):
        for size in _chunk_sizes(count, chunk_size):
            yield _gaussian_power_chunk(rng, spec.r, size)
    elif isinstance(spec, AlphaStable):
        for size in _chunk_sizes(count, chunk_size):
            yield _alpha_stable_chunk(rng, spec.alpha, spec.beta, spec.scale, spec.location, size)
    elif isinstance(spec, WeakDependentGaussianPower):
        if count < 2:
            raise BadConfig(f"the weak-dependent chain needs count >= 2, got {count}")
        carry: Optional[float] = None
        for size in _chunk_sizes(count, chunk_size):
            x = _gaussian_power_chunk(rng, spec.r, size)
            if carry is not None:
                x = np.concatenate(([carry], x))
            carry = float(x[-1])
            if len(x) > 1:
                yield weak_dependent_chain(x)
    else:
        raise BadConfig(f"unsupported distribution {spec!r}")


def draw_sample(spec: DistributionSpec, stream: RngStream, count: int) -> Sample:
    chunks = list(iter_sample_chunks(spec, stream, count))
    kind, param = describe_distribution(spec)
    label = f"{kind}:{param}" if param else kind
    if not isinstance(spec, ExternalFile):
        label = f"{label} seed={stream.master_seed} stream={stream.stream_index}"
    return Sample(np.concatenate(chunks), source=label)


def sample_standard_normal(stream: RngStream, count: int) -> Sample:
    return draw_sample(StandardNormal(), stream, count)


def sample_gaussian_power(stream: RngStream, r: float, count: int) -> Sample:
    return draw_sample(make_distribution(kind="gaussian-power", r=r), stream, count)


def sample_alpha_stable(
    stream: RngStream, alpha: float, beta: float, scale: float, location: float, count: int
) -> Sample:
    spec = make_distribution(kind="alpha-stable", alpha=alpha, beta=beta, scale=scale, location=location)
    return draw_sample(spec, stream, count)


def sample_weak_dependent(stream: RngStream, r: float, count: int) -> Sample:
    """Y_2..Y_count from ``count`` i.i.d. draws of |G|**-r (length count - 1)."""
    if count < 2:
        raise BadConfig(f"the weak-dependent chain needs count >= 2, got {count}")
    return draw_sample(make_distribution(kind="weak-dependent", r=r), stream, count)


# -----------------------------
# STANDARD NORMAL
# -----------------------------
def normal_cdf(x: float) -> float:
    return float(ndtr(x))


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise BadConfig(f"normal_quantile is defined on (0, 1), got {p!r}")
    return float(ndtri(p))


# -----------------------------
# SAMPLE FILES
# -----------------------------
def _parse_lines(path: Path) -> List[float]:
    values: List[float] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                value = float(text)
            except ValueError:
                raise SampleFormatError(f"not a decimal real: {text!r}", str(path), line_number) from None
            if not math.isfinite(value):
                raise SampleFormatError(f"non-finite value: {text!r}", str(path), line_number)
            values.append(value)
    return values


def read_sample(path: Union[str, Path]) -> Sample:
    """One decimal real per line; blank and ``#`` lines are skipped."""
    path = Path(path)
    try:
        values = _parse_lines(path)
    except OSError as e:
        raise SampleFormatError(f"cannot read sample file: {e.strerror or e}", str(path)) from e
    return Sample(np.array(values, dtype=np.float64), source=f"file:{path}")


def write_sample(sample: Sample, target) -> None:
    """Write to a path or an open text handle, 17 significant digits."""
    lines = "".join(f"{value:.17g}\n" for value in sample.values.tolist())
    if hasattr(target, "write"):
        target.write(f"# {sample.source}\n")
        target.write(lines)
        return
    with open(target, "w", encoding="utf-8") as handle:
        handle.write(f"# {sample.source}\n")
        handle.write(lines)
