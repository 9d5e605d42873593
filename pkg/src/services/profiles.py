"""Smooth profiles for spectral multipliers and Knapp modes.

The eta and rho profiles are Fourier transforms of the standard bump
exp(-1/(1-t^2)); both are read off one tabulated transform B(sigma) of the
unit bump, rescaled and (for rho) modulated.
"""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
from scipy.fft import rfft
from scipy.interpolate import CubicSpline

from src.errors import AccuracyError, ContractError

logger = logging.getLogger(__name__)

TABLE_PADDING = 128.0
TABLE_SAMPLES = 2 ** 17
TABLE_SIGMA_MAX = 1024.0
TABLE_TOLERANCE = 1e-12
TABLE_MAX_DOUBLINGS = 4

ANGULAR_SUPPORT = 0.98
DYADIC_SUPPORT = (0.3, 3.5)


def unit_bump(t: np.ndarray) -> np.ndarray:
    """exp(-1/(1-t^2)) on (-1, 1), zero outside."""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    safe = np.where(inside, 1.0 - t * t, 1.0)
    return np.where(inside, np.exp(-1.0 / safe), 0.0)


def smooth_step(x: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    def flat(v):
        positive = v > 0
        return np.where(positive, np.exp(-1.0 / np.where(positive, v, 1.0)), 0.0)
    left, right = flat(x), flat(1.0 - x)
    return left / (left + right)


def angular_cutoff(s: np.ndarray) -> np.ndarray:
    """The profile a: equal to 1 on |s| <= 1/2 and supported in |s| < 0.98."""
    return smooth_step((ANGULAR_SUPPORT - np.abs(np.asarray(s, dtype=float))) / 0.48)


def dyadic_cutoff(s: np.ndarray) -> np.ndarray:
    """The profile beta: equal to 1 on [1/2, 2] and supported in (0.3, 3.5)."""
    s = np.asarray(s, dtype=float)
    low, high = DYADIC_SUPPORT
    return smooth_step((s - low) / 0.2) * smooth_step((high - s) / 1.5)


def _transform_samples(samples: int, padding: float) -> Tuple[np.ndarray, np.ndarray]:
    """Trapezoid values of the normalised bump transform on sigma_k = k*pi/padding."""
    h = 2.0 * padding / samples
    t = -padding + h * np.arange(samples)
    spectrum = rfft(unit_bump(t))
    k = np.arange(spectrum.shape[0])
    values = h * np.where(k % 2 == 0, 1.0, -1.0) * spectrum.real
    values = values / values[0]
    sigma = k * (math.pi / padding)
    return sigma, values


@lru_cache(maxsize=4)
def bump_transform_table(samples: int = TABLE_SAMPLES, padding: float = TABLE_PADDING,
                         sigma_max: float = TABLE_SIGMA_MAX) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Tabulate B(sigma) = int bump(t) cos(sigma t) dt / int bump, sigma in [0, sigma_max].

    The sample count doubles until two successive tables agree to
    TABLE_TOLERANCE on the kept range.

    Returns:
        (sigma grid, values, sample count used)

    Raises:
        AccuracyError: If the tables never agree
    """
    sigma, previous = _transform_samples(samples, padding)
    keep = sigma <= sigma_max
    for _ in range(TABLE_MAX_DOUBLINGS):
        samples *= 2
        _, current = _transform_samples(samples, padding)
        gap = float(np.max(np.abs(current[: keep.sum()] - previous[: keep.sum()])))
        if gap <= TABLE_TOLERANCE:
            logger.debug(f"Bump transform table converged at {samples} samples (gap {gap:.2e})")
            return sigma[keep], current[: keep.sum()], samples
        previous = current
    raise AccuracyError(f"bump transform table did not converge (last gap {gap:.3e})")


class ProfileTable:
    """Spline of s -> B(scale * s), optionally cached in an .npz sidecar."""

    def __init__(self, scale: float, cache_dir: Optional[Union[str, Path]] = None):
        if scale <= 0:
            raise ContractError(f"profile scale must be positive, got {scale}")
        self.logger = logging.getLogger(__name__)
        self.scale = float(scale)
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        s_grid, values, resolution = self._load_or_build()
        self.resolution = resolution
        self.s_max = float(s_grid[-1])
        self._grid = s_grid
        self._values = values
        self._spline = CubicSpline(s_grid, values)

    def _sidecar_path(self) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"profile_{self.scale:.12g}_{TABLE_SAMPLES}.npz"

    def _load_or_build(self) -> Tuple[np.ndarray, np.ndarray, int]:
        path = self._sidecar_path()
        if path is not None and path.exists():
            try:
                with np.load(path) as data:
                    return data["s"], data["values"], int(data["resolution"])
            except Exception as e:
                self.logger.warning(f"Error loading profile sidecar {path}: {str(e)}; rebuilding")
        sigma, values, resolution = bump_transform_table()
        s_grid = sigma / self.scale
        if path is not None:
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                np.savez(path, s=s_grid, values=values, resolution=resolution)
                self.logger.info(f"Saved profile table for scale {self.scale:g} to {path}")
            except Exception as e:
                self.logger.warning(f"Error saving profile sidecar {path}: {str(e)}")
        return s_grid, values, resolution

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.abs(np.asarray(s, dtype=float))
        inside = s <= self.s_max
        return np.where(inside, self._spline(np.where(inside, s, 0.0)), 0.0)

    def cutoff(self, threshold: float = 1e-16) -> float:
        """Smallest s beyond which every tabulated |value| is below ``threshold``."""
        above = np.nonzero(np.abs(self._values) >= threshold)[0]
        if above.size == 0:
            return 0.0
        last = min(above[-1] + 1, self._grid.size - 1)
        return float(self._grid[last])


class EtaProfile:
    """eta(s) with eta-hat the normalised bump on (-c0, c0); eta(0) = 1, eta even and real."""

    def __init__(self, c0: float = 0.25, cache_dir: Optional[Union[str, Path]] = None):
        if not 0.0 < c0 < 1.0:
            raise ContractError(f"c0 must lie in (0,1), got {c0}")
        self.c0 = c0
        self.table = ProfileTable(c0, cache_dir)

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return self.table(s)

    def cutoff(self, threshold: float = 1e-16) -> float:
        return self.table.cutoff(threshold)

    def transform(self, t: np.ndarray) -> np.ndarray:
        """eta-hat(t), normalised to unit integral."""
        norm = self.c0 * _bump_integral()
        return unit_bump(np.asarray(t, dtype=float) / self.c0) / norm


class WindowProfile:
    """
    Spectral multiplier profile rho with rho-hat a bump on [delta - delta0*delta, delta + delta0*delta].

    rho(s) = exp(i delta s) * B(delta0 * delta * s): the tabulated envelope is
    real and even, rho(0) = 1 exactly.
    """

    def __init__(self, delta: float = 1.0 / 16.0, delta0: float = 1.0 / 16.0,
                 cache_dir: Optional[Union[str, Path]] = None):
        if delta <= 0 or not 0.0 < delta0 < 1.0:
            raise ContractError(f"window profile needs delta > 0 and delta0 in (0,1), got {delta}, {delta0}")
        self.delta = delta
        self.delta0 = delta0
        self.table = ProfileTable(delta * delta0, cache_dir)

    def envelope(self, s: np.ndarray) -> np.ndarray:
        return self.table(s)

    def __call__(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.exp(1j * self.delta * s) * self.table(s)

    def decay_constant(self, order: int = 4, s_max: float = 50.0, samples: int = 2001) -> float:
        """max |rho(s)| (1+|s|)^order on |s| <= s_max."""
        s = np.linspace(-s_max, s_max, samples)
        return float(np.max(np.abs(self(s)) * (1.0 + np.abs(s)) ** order))

    def descriptor(self) -> Dict[str, Any]:
        return {"delta": self.delta, "delta0": self.delta0, "resolution": self.table.resolution}


@lru_cache(maxsize=1)
def _bump_integral() -> float:
    """int_{-1}^{1} exp(-1/(1-t^2)) dt."""
    samples = 2 ** 16
    h = 2.0 / samples
    t = -1.0 + h * np.arange(samples + 1)
    return float(h * np.sum(unit_bump(t)))


def default_smoothing_time(lam: float, c0: float = 1.0) -> float:
    """Default T = c0 log lam for smoothed projections."""
    if lam <= 1.0:
        raise ContractError(f"smoothing time needs lam > 1, got {lam}")
    return max(1.0, c0 * math.log(lam))
