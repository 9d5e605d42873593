from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np

from src.errors import ContractError, DomainError
from src.models.manifold import EigenIndex, ManifoldModel


class WidthPolicy(Enum):
    UNIT = "unit"
    LOG = "log"
    CUSTOM = "custom"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SpectralWindow:
    """The frequency interval [lam, lam + width].

    A negative width is an empty window; EXPLICIT windows carry arbitrary
    bounds and are used for enumeration.
    """

    lam: float
    width: float
    policy: WidthPolicy = WidthPolicy.EXPLICIT

    def __post_init__(self):
        if not (math.isfinite(self.lam) and math.isfinite(self.width)):
            raise ContractError(f"window bounds must be finite, got [{self.lam}, {self.lam + self.width}]")
        if self.lam < 0:
            raise ContractError(f"window lower bound must be >= 0, got {self.lam}")

    @classmethod
    def between(cls, lower: float, upper: float) -> "SpectralWindow":
        return cls(float(lower), float(upper) - float(lower), WidthPolicy.EXPLICIT)

    @classmethod
    def at(cls, lam: float, policy: WidthPolicy) -> "SpectralWindow":
        """[lam, lam + delta(lam)] for the unit or log policy."""
        if not math.isfinite(lam) or lam <= 0:
            raise DomainError(f"window start must be a positive finite number, got {lam}")
        if policy is WidthPolicy.UNIT:
            return cls(float(lam), 1.0, policy)
        if policy is WidthPolicy.LOG:
            if lam <= math.e:
                raise DomainError(f"log window needs lam > e, got {lam}")
            return cls(float(lam), 1.0 / math.log(lam), policy)
        raise ContractError(f"policy {policy.value} needs an explicit width")

    @property
    def lower(self) -> float:
        return self.lam

    @property
    def upper(self) -> float:
        return self.lam + self.width

    @property
    def is_empty(self) -> bool:
        return self.width < 0

    def contains(self, frequency: float) -> bool:
        return self.lower <= frequency <= self.upper

    def describe(self) -> str:
        return f"[{self.lower:.6g}, {self.upper:.6g}] ({self.policy.value})"


@dataclass(eq=False)
class CoefficientVector:
    """Sparse eigenbasis expansion sum_j c_j e_j on one manifold.

    Missing indices are zero coefficients.
    """

    model: ManifoldModel
    coefficients: Dict[EigenIndex, complex] = field(default_factory=dict)

    def __post_init__(self):
        expected = self.model.kind
        for index in self.coefficients:
            if index.kind is not expected:
                raise ContractError(f"index {index.label} of kind {index.kind.value} does not belong to {self.model}")

    @classmethod
    def from_pairs(cls, model: ManifoldModel, pairs: Iterable[Tuple[EigenIndex, complex]]) -> "CoefficientVector":
        return cls(model, {index: complex(value) for index, value in pairs})

    def __len__(self) -> int:
        return len(self.coefficients)

    @property
    def indices(self) -> List[EigenIndex]:
        return sorted(self.coefficients, key=lambda index: index.sort_key)

    def values_for(self, indices: List[EigenIndex]) -> np.ndarray:
        return np.array([self.coefficients.get(index, 0.0) for index in indices], dtype=complex)

    def arrays(self) -> Tuple[List[EigenIndex], np.ndarray, np.ndarray]:
        """Sorted indices, their coefficients and their frequencies."""
        indices = self.indices
        values = self.values_for(indices)
        freqs = np.array([index.frequency for index in indices], dtype=float)
        return indices, values, freqs

    def l2_norm(self) -> float:
        if not self.coefficients:
            return 0.0
        return float(np.linalg.norm(np.fromiter((abs(c) for c in self.coefficients.values()), dtype=float)))

    def inner(self, other: "CoefficientVector") -> complex:
        """<self, other> with the conjugate on ``other``."""
        if other.model != self.model:
            raise ContractError("inner product of coefficient vectors on different manifolds")
        return complex(sum(c * np.conj(other.coefficients[i]) for i, c in self.coefficients.items() if i in other.coefficients))

    def scaled(self, factor: complex) -> "CoefficientVector":
        return CoefficientVector(self.model, {i: c * factor for i, c in self.coefficients.items()})

    def map_by_frequency(self, multiplier) -> "CoefficientVector":
        """Apply a diagonal multiplier m(frequency) to every coefficient."""
        return CoefficientVector(self.model, {i: c * multiplier(i.frequency) for i, c in self.coefficients.items()})

    def is_zero(self, tolerance: float = 0.0) -> bool:
        return all(abs(c) <= tolerance for c in self.coefficients.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CoefficientVector) or other.model != self.model:
            return False
        mine = {i: c for i, c in self.coefficients.items() if c != 0}
        theirs = {i: c for i, c in other.coefficients.items() if c != 0}
        return mine == theirs

    def as_mapping(self) -> Mapping[EigenIndex, complex]:
        return dict(self.coefficients)
