"""Log-densities, samplers, derivatives, and unconstraining transforms.

Four prior families are supported: Normal, HalfNormal, Uniform, Exponential.
Each knows its log density, the analytic derivative of that log density, how
to draw from itself given a numpy Generator, and the bijection that maps an
unconstrained real coordinate onto its support (with the log-Jacobian needed
for density corrections in unconstrained space).

Conventions:
  * the second Normal parameter is a standard deviation,
  * HalfNormal is supported on [0, inf) with normalizer sqrt(2/pi)/sigma,
  * Exponential is parameterized by its rate ``lam`` (mean = 1/lam),
  * out-of-support points get log density -inf rather than an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParamValue, OutsideSupport
from .spec_schema import DistributionSpec

__all__ = [
    "Normal",
    "HalfNormal",
    "Uniform",
    "Exponential",
    "PriorDistribution",
    "IdentityTransform",
    "ExpTransform",
    "LogisticIntervalTransform",
    "Transform",
    "transform_for",
    "from_spec",
]

_LOG_2PI = math.log(2.0 * math.pi)
_NEG_INF = float("-inf")


# ---------------------------------------------------------------------------
# Transforms: unconstrained z  <->  constrained x


class IdentityTransform:
    """x = z, for distributions supported on the whole real line."""

    def forward(self, z: float) -> float:
        return z

    def inverse(self, x: float) -> float:
        return x

    def log_jacobian(self, z: float) -> float:
        return 0.0

    def dforward_dz(self, z: float) -> float:
        return 1.0

    def dlog_jacobian_dz(self, z: float) -> float:
        return 0.0


class ExpTransform:
    """x = exp(z), mapping the real line onto (0, inf)."""

    def forward(self, z: float) -> float:
        try:
            return math.exp(z)
        except OverflowError:
            return float("inf")

    def inverse(self, x: float) -> float:
        return math.log(x)

    def log_jacobian(self, z: float) -> float:
        return z

    def dforward_dz(self, z: float) -> float:
        return self.forward(z)

    def dlog_jacobian_dz(self, z: float) -> float:
        return 1.0


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _log_sigmoid(z: float) -> float:
    if z >= 0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@dataclass(frozen=True)
class LogisticIntervalTransform:
    """x = lower + (upper - lower) * logistic(z), mapping onto (lower, upper)."""

    lower: float
    upper: float

    def forward(self, z: float) -> float:
        return self.lower + (self.upper - self.lower) * _sigmoid(z)

    def inverse(self, x: float) -> float:
        p = (x - self.lower) / (self.upper - self.lower)
        return math.log(p) - math.log1p(-p)

    def log_jacobian(self, z: float) -> float:
        return math.log(self.upper - self.lower) + _log_sigmoid(z) + _log_sigmoid(-z)

    def dforward_dz(self, z: float) -> float:
        s = _sigmoid(z)
        return (self.upper - self.lower) * s * (1.0 - s)

    def dlog_jacobian_dz(self, z: float) -> float:
        return 1.0 - 2.0 * _sigmoid(z)


Transform = IdentityTransform | ExpTransform | LogisticIntervalTransform


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        _require(self.sigma > 0, f"Normal sigma must be > 0, got {self.sigma}")

    def support(self) -> tuple[float, float]:
        return (_NEG_INF, float("inf"))

    def log_pdf(self, x: float) -> float:
        t = (x - self.mu) / self.sigma
        return -0.5 * t * t - math.log(self.sigma) - 0.5 * _LOG_2PI

    def dlogpdf_dx(self, x: float) -> float:
        return -(x - self.mu) / (self.sigma * self.sigma)

    def _dlogpdf_dx_limit(self, x: float) -> float:
        return self.dlogpdf_dx(x)

    def sample(self, rng: np.random.Generator) -> float:
        return self.mu + self.sigma * rng.standard_normal()

    def transform(self) -> Transform:
        return IdentityTransform()


@dataclass(frozen=True)
class HalfNormal:
    sigma: float

    def __post_init__(self):
        _require(self.sigma > 0, f"HalfNormal sigma must be > 0, got {self.sigma}")

    def support(self) -> tuple[float, float]:
        return (0.0, float("inf"))

    def log_pdf(self, x: float) -> float:
        if x < 0:
            return _NEG_INF
        t = x / self.sigma
        return 0.5 * math.log(2.0 / math.pi) - math.log(self.sigma) - 0.5 * t * t

    def dlogpdf_dx(self, x: float) -> float:
        if x <= 0:
            raise OutsideSupport("HalfNormal", x)
        return self._dlogpdf_dx_limit(x)

    def _dlogpdf_dx_limit(self, x: float) -> float:
        return -x / (self.sigma * self.sigma)

    def sample(self, rng: np.random.Generator) -> float:
        return abs(self.sigma * rng.standard_normal())

    def transform(self) -> Transform:
        return ExpTransform()


@dataclass(frozen=True)
class Uniform:
    lower: float
    upper: float

    def __post_init__(self):
        _require(self.lower < self.upper, f"Uniform needs lower < upper, got [{self.lower}, {self.upper}]")

    def support(self) -> tuple[float, float]:
        return (self.lower, self.upper)

    def log_pdf(self, x: float) -> float:
        if x < self.lower or x > self.upper:
            return _NEG_INF
        return -math.log(self.upper - self.lower)

    def dlogpdf_dx(self, x: float) -> float:
        if x <= self.lower or x >= self.upper:
            raise OutsideSupport("Uniform", x)
        return 0.0

    def _dlogpdf_dx_limit(self, x: float) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator) -> float:
        return self.lower + (self.upper - self.lower) * rng.random()

    def transform(self) -> Transform:
        return LogisticIntervalTransform(self.lower, self.upper)


@dataclass(frozen=True)
class Exponential:
    lam: float

    def __post_init__(self):
        _require(self.lam > 0, f"Exponential lam must be > 0, got {self.lam}")

    def support(self) -> tuple[float, float]:
        return (0.0, float("inf"))

    def log_pdf(self, x: float) -> float:
        if x < 0:
            return _NEG_INF
        return math.log(self.lam) - self.lam * x

    def dlogpdf_dx(self, x: float) -> float:
        if x <= 0:
            raise OutsideSupport("Exponential", x)
        return -self.lam

    def _dlogpdf_dx_limit(self, x: float) -> float:
        return -self.lam

    def sample(self, rng: np.random.Generator) -> float:
        # inverse CDF: x = -ln(1 - u) / lam with u in [0, 1)
        return -math.log1p(-rng.random()) / self.lam

    def transform(self) -> Transform:
        return ExpTransform()


PriorDistribution = Normal | HalfNormal | Uniform | Exponential


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidParamValue(message)


def transform_for(dist: PriorDistribution) -> Transform:
    """The unconstraining bijection associated with a distribution's support."""
    return dist.transform()


def from_spec(spec: DistributionSpec) -> PriorDistribution:
    """Instantiate the distribution described by a validated DistributionSpec."""
    if spec.name == "Normal":
        return Normal(spec.params["mu"], spec.params["sigma"])
    if spec.name == "HalfNormal":
        return HalfNormal(spec.params["sigma"])
    if spec.name == "Uniform":
        return Uniform(spec.params["lower"], spec.params["upper"])
    if spec.name == "Exponential":
        return Exponential(spec.params["lam"])
    raise AssertionError(f"unreachable: {spec.name}")
