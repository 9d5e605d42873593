from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple


class FitMode(Enum):
    FREE = "free"
    A_FIXED = "a-fixed"


class CurvatureSign(Enum):
    POSITIVE = "positive"
    ZERO = "zero"
    NEGATIVE = "negative"
    AMBIGUOUS = "ambiguous"


@dataclass(frozen=True)
class ExponentLaw:
    n: int
    q: float
    critical: float
    mu: float


@dataclass
class GrowthFit:
    """Least-squares fit of log N = log C + a log(lam) + b log log(lam)."""

    a: float
    b: float
    log_c: float
    residual: float
    b_stderr: float
    lam_range: Tuple[float, float]
    mode: FitMode
    a_fixed: Optional[float] = None
    a_stderr: Optional[float] = None
    condition_number: Optional[float] = None
    points: List[Tuple[float, float]] = field(default_factory=list)


@dataclass
class CurvatureVerdict:
    sign: CurvatureSign
    b: float
    distances: Dict[CurvatureSign, float]
    confidence: float
    fit: GrowthFit
    nearest: CurvatureSign = CurvatureSign.AMBIGUOUS
