"""Pointwise-evaluable quasimodes: coefficient-backed sums and closed forms."""
from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np
from scipy.fft import ifftn

from src.errors import ContractError, ResolutionError
from src.models.manifold import ManifoldKind, ManifoldModel, QuadratureGrid
from src.models.spectral_types import CoefficientVector
from src.services import manifolds
from src.services.parallel import map_chunks

EVAL_CHUNK = 4096


class QuasimodeEvaluator(ABC):
    """A function on a model manifold with a nominal frequency."""

    def __init__(self, model: ManifoldModel, frequency: float):
        self.logger = logging.getLogger(__name__)
        self.model = model
        self.frequency = float(frequency)

    @abstractmethod
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Complex values at points of shape (..., d)."""

    def required_resolution(self) -> Optional[int]:
        return None

    def check_grid(self, grid: QuadratureGrid) -> None:
        if grid.model != self.model:
            raise ContractError(f"grid on {grid.model} cannot evaluate a mode on {self.model}")
        required = self.required_resolution()
        if required is not None and grid.resolution < required:
            raise ResolutionError(
                f"grid resolution {grid.resolution} aliases a mode needing {required}", required)

    def on_grid(self, grid: QuadratureGrid, max_concurrency: int = 1) -> np.ndarray:
        """Values on every grid node, shaped like the grid."""
        points = grid.points.reshape(-1, grid.points.shape[-1])

        def block(chunk: range) -> np.ndarray:
            return self.evaluate(points[chunk.start:chunk.stop])

        parts = map_chunks(block, points.shape[0], max_concurrency, chunk_size=EVAL_CHUNK)
        return np.concatenate(parts).reshape(grid.shape) if parts else np.zeros(grid.shape, dtype=complex)

    def describe(self) -> dict:
        return {"type": type(self).__name__, "manifold": str(self.model), "frequency": self.frequency}


class CoefficientEvaluator(QuasimodeEvaluator):
    """
    Synthesises sum_j c_j e_j.

    On flat models grid values come from one FFT after shifting every mode
    by a central carrier mode; the carrier phase is restored afterwards, so
    the grid only has to resolve the spread of the modes about the carrier.
    """

    def __init__(self, coeffs: CoefficientVector, frequency: Optional[float] = None):
        indices, values, freqs = coeffs.arrays()
        if frequency is None:
            frequency = float(np.max(freqs)) if len(freqs) else 0.0
        super().__init__(coeffs.model, frequency)
        self.coeffs = coeffs
        self.indices = indices
        self.values = values
        self.labels = np.array([index.label for index in indices], dtype=np.int64).reshape(len(indices), -1)
        self.carrier = self._carrier()

    def _carrier(self) -> np.ndarray:
        if self.labels.shape[0] == 0 or not self.model.is_flat:
            return np.zeros(self.model.dimension, dtype=np.int64)
        low = self.labels.min(axis=0)
        high = self.labels.max(axis=0)
        carrier = np.floor_divide(low + high, 2)
        if self.model.kind is ManifoldKind.KLEIN_BOTTLE:
            # +q and -q both occur on the cover
            carrier[1] = 0
        return carrier

    def spread(self) -> np.ndarray:
        if self.labels.shape[0] == 0:
            return np.zeros(self.model.dimension, dtype=np.int64)
        return np.max(np.abs(self.labels - self.carrier), axis=0)

    def required_resolution(self) -> Optional[int]:
        if self.labels.shape[0] == 0:
            return manifolds.MIN_RESOLUTION
        if self.model.kind is ManifoldKind.TORUS:
            need = 4 * int(np.max(self.spread()))
        elif self.model.kind is ManifoldKind.KLEIN_BOTTLE:
            spread = self.spread()
            need = max(2 * int(spread[0]), 4 * int(spread[1]))
        else:
            need = 2 * (int(np.max(self.labels[:, 0])) + 1)
        return max(manifolds.MIN_RESOLUTION, need)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if len(self.indices) == 0:
            return np.zeros(points.shape[:-1], dtype=complex)
        flat = points.reshape(-1, points.shape[-1])
        out = np.empty(flat.shape[0], dtype=complex)
        for start in range(0, flat.shape[0], EVAL_CHUNK):
            block = flat[start:start + EVAL_CHUNK]
            out[start:start + EVAL_CHUNK] = manifolds.eval_eigenfunctions(self.model, self.indices, block) @ self.values
        return out.reshape(points.shape[:-1])

    def on_grid(self, grid: QuadratureGrid, max_concurrency: int = 1) -> np.ndarray:
        if not self.model.is_flat:
            return super().on_grid(grid, max_concurrency)
        if grid.model != self.model:
            raise ContractError(f"grid on {grid.model} cannot evaluate a mode on {self.model}")
        if len(self.indices) == 0:
            return np.zeros(grid.shape, dtype=complex)
        if self.model.kind is ManifoldKind.TORUS:
            return self._torus_synthesis(grid.resolution, max_concurrency)
        return self._klein_synthesis(grid.resolution, max_concurrency)

    def _torus_synthesis(self, resolution: int, max_concurrency: int) -> np.ndarray:
        n = self.model.dimension
        shifted = np.mod(self.labels - self.carrier, resolution)
        spectrum = np.zeros((resolution,) * n, dtype=complex)
        np.add.at(spectrum, tuple(shifted.T), self.values)
        values = ifftn(spectrum, workers=max_concurrency) * (resolution ** n / math.sqrt(self.model.volume))
        return self._apply_carrier(values, resolution, [1.0] * n)

    def _klein_synthesis(self, resolution: int, max_concurrency: int) -> np.ndarray:
        p = self.labels[:, 0]
        q = self.labels[:, 1]
        sign = np.where(p % 2 == 0, 1.0, -1.0)
        paired = q > 0
        rows = np.concatenate([p[paired], p[paired], p[~paired]]) - self.carrier[0]
        cols = np.concatenate([q[paired], -q[paired], q[~paired]])
        amps = np.concatenate([self.values[paired] / math.sqrt(2.0),
                               sign[paired] * self.values[paired] / math.sqrt(2.0),
                               self.values[~paired]])
        # y1 runs over [0, 2) on the double cover: 2N nodes, keep the first N
        spectrum = np.zeros((2 * resolution, resolution), dtype=complex)
        np.add.at(spectrum, (np.mod(rows, 2 * resolution), np.mod(cols, resolution)), amps)
        values = ifftn(spectrum, workers=max_concurrency) * (2 * resolution * resolution)
        return self._apply_carrier(values[:resolution], resolution, [0.5, 1.0])

    def _apply_carrier(self, values: np.ndarray, resolution: int, cycles: list) -> np.ndarray:
        nodes = np.arange(resolution, dtype=float) / resolution
        for axis, (m0, scale) in enumerate(zip(self.carrier, cycles)):
            if m0 == 0:
                continue
            phase = np.exp(2j * math.pi * scale * m0 * nodes)
            shape = [1] * values.ndim
            shape[axis] = resolution
            values = values * phase.reshape(shape)
        return values
