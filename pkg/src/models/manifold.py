from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from src.errors import ContractError


class ManifoldKind(Enum):
    TORUS = "torus"
    KLEIN_BOTTLE = "klein_bottle"
    SPHERE = "sphere"


@dataclass(frozen=True)
class ManifoldModel:
    """A model compact manifold with an explicitly known Laplace eigenbasis.

    Torus points are lattice coordinates u in [0,1)^n with physical position
    x = sum_i u_i b_i (rows of ``basis``). Klein-bottle points live on the
    fundamental square [0,1)^2. Sphere points are unit vectors in R^(n+1).
    """

    kind: ManifoldKind
    dimension: int
    basis: Optional[Tuple[Tuple[float, ...], ...]] = None

    def __post_init__(self):
        if self.dimension < 2:
            raise ContractError(f"manifold dimension must be >= 2, got {self.dimension}")
        if self.kind is ManifoldKind.TORUS:
            if self.basis is None:
                raise ContractError("torus requires lattice basis vectors")
            matrix = np.asarray(self.basis, dtype=float)
            if matrix.shape != (self.dimension, self.dimension):
                raise ContractError(f"torus basis must be {self.dimension}x{self.dimension}, got shape {matrix.shape}")
            if not np.all(np.isfinite(matrix)) or abs(np.linalg.det(matrix)) < 1e-12:
                raise ContractError("torus lattice basis is singular")
        elif self.kind is ManifoldKind.KLEIN_BOTTLE:
            if self.dimension != 2:
                raise ContractError("klein_bottle is 2-dimensional")
        elif self.basis is not None:
            raise ContractError(f"{self.kind.value} takes no lattice basis")

    @classmethod
    def torus(cls, basis: Sequence[Sequence[float]]) -> "ManifoldModel":
        rows = tuple(tuple(float(v) for v in row) for row in basis)
        return cls(ManifoldKind.TORUS, len(rows), rows)

    @classmethod
    def unit_torus(cls, n: int = 2) -> "ManifoldModel":
        return cls.torus(np.eye(n).tolist())

    @classmethod
    def klein_bottle(cls) -> "ManifoldModel":
        return cls(ManifoldKind.KLEIN_BOTTLE, 2)

    @classmethod
    def sphere(cls, n: int = 2) -> "ManifoldModel":
        return cls(ManifoldKind.SPHERE, n)

    @property
    def is_flat(self) -> bool:
        return self.kind in (ManifoldKind.TORUS, ManifoldKind.KLEIN_BOTTLE)

    @property
    def ambient_dimension(self) -> int:
        return self.dimension + 1 if self.kind is ManifoldKind.SPHERE else self.dimension

    @cached_property
    def basis_matrix(self) -> np.ndarray:
        if self.kind is ManifoldKind.TORUS:
            return np.asarray(self.basis, dtype=float)
        return np.eye(self.dimension)

    @cached_property
    def volume(self) -> float:
        if self.kind is ManifoldKind.TORUS:
            return float(abs(np.linalg.det(self.basis_matrix)))
        if self.kind is ManifoldKind.KLEIN_BOTTLE:
            return 1.0
        n = self.dimension
        # |S^n| = 2 pi^((n+1)/2) / Gamma((n+1)/2)
        return float(2.0 * math.exp(0.5 * (n + 1) * math.log(math.pi) - gammaln(0.5 * (n + 1))))

    def descriptor(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {"kind": self.kind.value, "dimension": self.dimension}
        if self.basis is not None:
            data["basis"] = [list(row) for row in self.basis]
        return data

    def descriptor_hash(self) -> str:
        payload = json.dumps(self.descriptor(), sort_keys=True)
        return hashlib.md5(payload.encode("utf-8")).hexdigest()

    def __str__(self) -> str:
        if self.kind is ManifoldKind.TORUS:
            return f"torus({self.dimension})"
        if self.kind is ManifoldKind.SPHERE:
            return f"sphere({self.dimension})"
        return "klein_bottle"


@dataclass(frozen=True)
class EigenIndex:
    """Label of one L²-normalised eigenfunction and its frequency.

    torus: lattice point m; klein_bottle: (p, q) with q >= 0 on the double
    cover, odd p only for q > 0; sphere: (l_n, ..., l_2, m) Gegenbauer chain,
    which for n = 2 is (l, m) with m < 0 selecting sin(|m| phi).
    """

    kind: ManifoldKind
    label: Tuple[int, ...]
    frequency: float = field(compare=False)

    @property
    def sort_key(self) -> Tuple[float, Tuple[int, ...]]:
        return (self.frequency, self.label)

    @property
    def degree(self) -> int:
        if self.kind is not ManifoldKind.SPHERE:
            raise ContractError("degree is defined for sphere indices only")
        return self.label[0]

    @property
    def parity(self) -> int:
        if self.kind is not ManifoldKind.KLEIN_BOTTLE:
            raise ContractError("parity is defined for klein_bottle indices only")
        return self.label[0] % 2

    def to_json(self) -> Dict[str, Any]:
        return {"label": list(self.label), "freq": self.frequency}


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Tensor-product quadrature rule stored by axes.

    Flat models use lattice coordinates on [0,1)^n with equal weights.
    Spheres use axes (cos theta_n, ..., cos theta_2, phi); ``points`` maps
    them to ambient unit vectors. Full point and weight arrays are built on
    first access only.
    """

    model: ManifoldModel
    resolution: int
    axes: Tuple[np.ndarray, ...]
    axis_weights: Tuple[np.ndarray, ...]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(axis) for axis in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def is_spherical(self) -> bool:
        return self.model.kind is ManifoldKind.SPHERE

    @cached_property
    def weights(self) -> np.ndarray:
        total = self.axis_weights[0]
        for w in self.axis_weights[1:]:
            total = np.multiply.outer(total, w)
        return total

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return self.points_from_axes(mesh)

    @property
    def total_weight(self) -> float:
        return float(np.prod([np.sum(w) for w in self.axis_weights]))

    def axis_bounds(self, axis: int) -> Tuple[float, float, bool]:
        """Return (low, high, periodic) for one coordinate axis."""
        if not self.is_spherical:
            return (0.0, 1.0, True)
        if axis == len(self.axes) - 1:
            return (0.0, 2.0 * math.pi, True)
        return (-1.0, 1.0, False)

    def points_from_axes(self, coords: Sequence[np.ndarray]) -> np.ndarray:
        """Stack per-axis coordinate arrays into points on the manifold."""
        coords = [np.asarray(c, dtype=float) for c in coords]
        if not self.is_spherical:
            return np.stack(coords, axis=-1)

        n = self.model.dimension
        phi = coords[-1]
        # coords[j] is cos(theta_{n-j}); build x_n, x_{n-1}, ..., x_2 from the top down
        ambient = [None] * (n + 1)
        radius = np.ones_like(phi)
        for j in range(n - 1):
            t = np.clip(coords[j], -1.0, 1.0)
            k = n - j
            ambient[k] = radius * t
            radius = radius * np.sqrt(np.maximum(0.0, 1.0 - t * t))
        ambient[1] = radius * np.sin(phi)
        ambient[0] = radius * np.cos(phi)
        return np.stack(ambient, axis=-1)


@dataclass(frozen=True)
class GeodesicSpec:
    """A closed geodesic and the deck transformation that translates along it.

    ``frame`` holds orthonormal rows with the geodesic direction first; the
    stabilizer acts as y -> m0 y + (length, 0, ..., 0) in that frame.
    """

    base_point: Tuple[float, ...]
    direction: Tuple[float, ...]
    length: float
    translation: Tuple[float, ...]
    orthogonal_part: Tuple[Tuple[float, ...], ...]
    lattice_direction: Tuple[int, ...]
    frame: Tuple[Tuple[float, ...], ...]
    spherical: bool = False

    @property
    def m0(self) -> np.ndarray:
        return np.asarray(self.orthogonal_part, dtype=float)

    @property
    def frame_matrix(self) -> np.ndarray:
        return np.asarray(self.frame, dtype=float)

    def point_at(self, t: np.ndarray) -> np.ndarray:
        """Physical points at arclength t (a great circle on spheres)."""
        t = np.asarray(t, dtype=float)
        if self.spherical:
            return (np.cos(t)[..., None] * np.asarray(self.base_point)
                    + np.sin(t)[..., None] * np.asarray(self.direction))
        return np.asarray(self.base_point) + t[..., None] * np.asarray(self.direction)
