from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np

from src.errors import ContractError, DomainError
from src.models.manifold import GeodesicSpec


@dataclass(frozen=True)
class KnappParams:
    """Parameters of a flat Knapp quasimode.

    ``eta_override`` replaces the eta profile (used for the vanishing-window
    surrogate); ``truncation_multiplier`` bounds the deck sum at |z| >= m*T in
    the Euclidean kernel check.
    """

    k: int
    c0: float = 0.25
    truncation_multiplier: float = 2.0
    half_window: float = 0.25
    drop_threshold: float = 1e-14
    eta_override: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.c0 < 1.0:
            raise ContractError(f"c0 must lie in (0,1), got {self.c0}")
        if int(self.k) != self.k or self.k < 2:
            raise ContractError(f"mode number k must be an integer >= 2, got {self.k}")
        if not 0.0 < self.half_window < 1.0:
            raise ContractError(f"arclength half-window must lie in (0,1), got {self.half_window}")
        if self.truncation_multiplier <= 0:
            raise ContractError("truncation multiplier must be positive")

    def frequency(self, length: float) -> float:
        lam = 2.0 * math.pi * self.k / length
        if lam <= math.e ** 2:
            raise DomainError(f"k={self.k} gives lambda={lam:.4g} <= e^2; the construction needs lambda >> e")
        return lam

    @staticmethod
    def delta(lam: float) -> float:
        return 1.0 / math.log(lam)

    @staticmethod
    def smoothing_time(lam: float) -> float:
        return math.log(lam)

    def describe(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "c0": self.c0,
            "truncation_multiplier": self.truncation_multiplier,
            "half_window": self.half_window,
            "drop_threshold": self.drop_threshold,
        }


@dataclass(frozen=True)
class TubeSpec:
    """Tube of ``radius`` about |t| <= half_window of a geodesic; no half_window means the whole closed geodesic."""

    geodesic: GeodesicSpec
    half_window: Optional[float]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ContractError(f"tube radius must be positive, got {self.radius}")
        if self.half_window is not None and not 0.0 < self.half_window < 1.0:
            raise ContractError(f"arclength half-window must lie in (0,1), got {self.half_window}")

    @classmethod
    def around(cls, geodesic: GeodesicSpec, lam: float, half_window: Optional[float] = 0.25) -> "TubeSpec":
        """Tube of radius lam^(-1/2) (log lam)^(1/2)."""
        return cls(geodesic, half_window, math.sqrt(math.log(lam) / lam))

    def arclength(self) -> float:
        if self.half_window is None:
            return self.geodesic.length
        return 2.0 * self.half_window

    def expected_volume(self, dimension: int) -> float:
        # transverse ball of dimension n-1; equals 2r when n = 2
        k = dimension - 1
        ball = math.exp(0.5 * k * math.log(math.pi) - math.lgamma(0.5 * k + 1.0))
        return self.arclength() * ball * self.radius ** k
