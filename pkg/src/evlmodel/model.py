"""Core EVL equations: resting points, axial elongation, lighting, response ratio.

Every function here is pure. Quantities are plain floats in the units listed
on the dataclasses; no rounding happens anywhere in this module.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

from .errors import (
    DegenerateConvergence,
    DegenerateConvergenceResponse,
    DegenerateDistance,
    InvalidDomain,
    InvalidThreshold,
    NonpositiveLighting,
)

DEFAULT_THETA = 0.1
DEFAULT_L0_LEVELS = (189.0, 527.0, 892.0)
# mid-grey (mean 0.5) maps to 987 lux, the bright setting of the cohort table
DEFAULT_LUMINANCE_GAIN = 1974.0
DEFAULT_LUMINANCE_OFFSET = 0.0


class ElongationMode(str, enum.Enum):
    """How the near-work coefficient enters the axial-length equation.

    ``LITERAL`` multiplies the elongation term by ``n``; ``UNIT`` replaces
    ``n`` by 1, which is the only reading under which the published cohort
    rows for writing (n=1.5) line up with their printed responses.
    """

    LITERAL = "literal"
    UNIT = "unit"

    @classmethod
    def parse(cls, value: "str | ElongationMode") -> "ElongationMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"literal": cls.LITERAL, "unit": cls.UNIT, "unitcoefficient": cls.UNIT}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown elongation mode {value!r}") from None


class BalanceClass(str, enum.Enum):
    BALANCED = "Balanced"
    IMBALANCED_LOW = "ImbalancedLow"
    IMBALANCED_HIGH = "ImbalancedHigh"


@dataclass(frozen=True)
class ModelConfig:
    theta: float = DEFAULT_THETA
    elongation_mode: ElongationMode = ElongationMode.LITERAL
    l0_levels: tuple = DEFAULT_L0_LEVELS
    luminance_gain: float = DEFAULT_LUMINANCE_GAIN
    luminance_offset: float = DEFAULT_LUMINANCE_OFFSET

    def __post_init__(self):
        _check_theta(self.theta)
        object.__setattr__(self, "elongation_mode", ElongationMode.parse(self.elongation_mode))
        levels = tuple(float(x) for x in self.l0_levels)
        if any(not x > 0 for x in levels):
            raise InvalidDomain(f"l0_levels must all be > 0, got {levels}")
        object.__setattr__(self, "l0_levels", levels)

    def coefficient(self, n: float) -> float:
        """Elongation coefficient used in the axial-length equation."""
        return n if self.elongation_mode is ElongationMode.LITERAL else 1.0


@dataclass(frozen=True)
class AgeGroupBaseline:
    age_lo: int
    age_hi: int
    al0: float
    p0: float
    m0: float
    w0: float

    def __post_init__(self):
        if not self.age_lo < self.age_hi:
            raise InvalidDomain(f"age_lo must be < age_hi ({self.age_lo}, {self.age_hi})")
        if not self.al0 > 0:
            raise InvalidDomain(f"al0 must be > 0, got {self.al0}")
        if not self.p0 > 0:
            raise InvalidDomain(f"p0 must be > 0, got {self.p0}")
        if not self.w0 >= 0:
            raise InvalidDomain(f"w0 must be >= 0, got {self.w0}")

    @property
    def label(self) -> str:
        return f"{self.age_lo}-{self.age_hi}"


@dataclass(frozen=True)
class NearWorkObservation:
    """One measured near-work session.

    Construction does not validate; :func:`check_observation` does, so that a
    batch can carry an invalid record and report it per record.
    """

    n: float
    t: float
    l: float
    p: float
    d: float
    w: float
    ser: Optional[float] = None


@dataclass(frozen=True)
class OcularEvaluation:
    m: float
    a: float
    v: float
    al: float
    ar: float
    vr: float
    o: float
    balance: BalanceClass


def _check_theta(theta: float) -> None:
    if not (isinstance(theta, (int, float)) and 0.0 < theta < 1.0):
        raise InvalidThreshold(f"theta must lie in (0, 1), got {theta!r}")


def resting_points(m: float, d: float) -> tuple[float, float]:
    """Resting points of accommodation and convergence for refraction ``m`` at distance ``d``."""
    if d == 1.0 or d == -1.0:
        raise DegenerateDistance(f"viewing distance d={d} makes a resting point infinite")
    if not -1.0 < d < 1.0:
        raise InvalidDomain(f"viewing distance must satisfy |d| < 1 m, got {d}")
    return m / (1.0 - d), m / (1.0 + d)


def axial_length(al0: float, coeff: float, t: float, a: float, v: float) -> float:
    """Axial length after ``t`` minutes of near work.

    ``coeff`` is whatever :meth:`ModelConfig.coefficient` returns for the
    session's near-work type.
    """
    if v == 0:
        raise DegenerateConvergence("resting point of convergence is zero")
    if t < 0:
        raise InvalidDomain(f"near-work duration must be >= 0, got {t}")
    return al0 + coeff * t * (a / v)


def refractive_error(m0: float, n: float, w: float, w0: float,
                     p: float, p0: float, l: float) -> float:
    if not l > 0:
        raise NonpositiveLighting(f"ambient lighting must be > 0 lux, got {l}")
    return m0 + n * (w - w0) * (p - p0) / l


def responses(al: float, m: float, d: float) -> tuple[float, float]:
    """Accommodative and convergence responses."""
    return al + m * (1.0 - d), al + m * (1.0 + d)


def evl_ratio(ar: float, vr: float) -> float:
    if vr == 0:
        raise DegenerateConvergenceResponse("convergence response is zero")
    return ar / vr


def classify(o: float, theta: float = DEFAULT_THETA) -> BalanceClass:
    _check_theta(theta)
    if o < 1.0 - theta:
        return BalanceClass.IMBALANCED_LOW
    if o > 1.0 + theta:
        return BalanceClass.IMBALANCED_HIGH
    return BalanceClass.BALANCED


def ratio_at_axial_length(al: float, m: float, d: float) -> float:
    """EVL ratio as a function of axial length, holding ``m`` and ``d`` fixed."""
    return evl_ratio(*responses(al, m, d))


def check_observation(obs: NearWorkObservation) -> None:
    """Raise the matching model error if ``obs`` is outside the valid domain."""
    for name in ("n", "t", "l", "p", "d", "w"):
        if not math.isfinite(getattr(obs, name)):
            raise InvalidDomain(f"{name} must be finite, got {getattr(obs, name)}")
    if not obs.l > 0:
        raise NonpositiveLighting(f"ambient lighting must be > 0 lux, got {obs.l}")
    if obs.d == 1.0:
        raise DegenerateDistance("viewing distance d=1 makes the accommodation resting point infinite")
    if not 0.0 <= obs.d < 1.0:
        raise InvalidDomain(f"viewing distance must satisfy 0 <= d < 1 m, got {obs.d}")
    if not obs.n > 0:
        raise InvalidDomain(f"near-work coefficient must be > 0, got {obs.n}")
    if obs.t < 0:
        raise InvalidDomain(f"near-work duration must be >= 0, got {obs.t}")
    if not obs.p > 0:
        raise InvalidDomain(f"pupil size must be > 0, got {obs.p}")
    if obs.w < 0:
        raise InvalidDomain(f"aberration count must be >= 0, got {obs.w}")


def evaluate_observation(baseline: AgeGroupBaseline, obs: NearWorkObservation,
                         cfg: ModelConfig = ModelConfig()) -> OcularEvaluation:
    """Run the full pipeline: M, then (A, V), then AL, then (AR, VR), then O."""
    check_observation(obs)
    m = refractive_error(baseline.m0, obs.n, obs.w, baseline.w0, obs.p, baseline.p0, obs.l)
    a, v = resting_points(m, obs.d)
    al = axial_length(baseline.al0, cfg.coefficient(obs.n), obs.t, a, v)
    ar, vr = responses(al, m, obs.d)
    o = evl_ratio(ar, vr)
    return OcularEvaluation(m=m, a=a, v=v, al=al, ar=ar, vr=vr, o=o,
                            balance=classify(o, cfg.theta))


def balance_crossing_axial_length(m: float, d: float,
                                  theta: float = DEFAULT_THETA) -> Optional[float]:
    """Axial length at which the EVL ratio reaches ``1 - theta``.

    Below the returned value the ratio is under ``1 - theta`` (ImbalancedLow);
    at or above it the pair is Balanced. Returns ``None`` when the ratio is at
    least ``1 - theta`` for every non-negative axial length.
    """
    _check_theta(theta)
    if not m > 0:
        raise InvalidDomain(f"refractive error must be > 0, got {m}")
    if not 0.0 <= d < 1.0:
        raise InvalidDomain(f"viewing distance must satisfy 0 <= d < 1 m, got {d}")
    gap = 2.0 * d - theta * (1.0 + d)
    if gap <= 0:
        return None
    return m * gap / theta


def balance_crossing_time(baseline: AgeGroupBaseline, obs: NearWorkObservation,
                          cfg: ModelConfig = ModelConfig()) -> Optional[float]:
    """Near-work duration at which the session's EVL ratio reaches ``1 - theta``.

    The ratio rises with duration, so sessions shorter than the returned time
    are ImbalancedLow and longer ones Balanced. ``0.0`` means the eye is
    already balanced at ``t = 0``; ``None`` means it never leaves the band.
    ``obs.t`` itself is ignored.
    """
    check_observation(obs)
    m = refractive_error(baseline.m0, obs.n, obs.w, baseline.w0, obs.p, baseline.p0, obs.l)
    if not m > 0:
        raise InvalidDomain(f"refractive error must be > 0 for a crossing, got {m}")
    al_star = balance_crossing_axial_length(m, obs.d, cfg.theta)
    if al_star is None:
        return None
    if al_star <= baseline.al0:
        return 0.0
    a, v = resting_points(m, obs.d)
    return (al_star - baseline.al0) / (cfg.coefficient(obs.n) * (a / v))
