"""
Explicit extremizers and the measurements made on them.

Flat manifolds get Knapp modes built from the exact Poisson-summed deck sum;
spheres get Gaussian beams and zonal functions in closed form.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import eval_legendre, gammaln, jv, roots_legendre

from src.errors import AccuracyError, CapabilityError, ContractError, DomainError, ResolutionError
from src.models.manifold import EigenIndex, GeodesicSpec, ManifoldKind, ManifoldModel, QuadratureGrid
from src.models.quasimode_params import KnappParams, TubeSpec
from src.models.spectral_types import CoefficientVector, SpectralWindow
from src.services import manifolds
from src.services.evaluators import QuasimodeEvaluator
from src.services.parallel import masked_power_sum, weighted_power_sum
from src.services.profiles import (ANGULAR_SUPPORT, DYADIC_SUPPORT, EtaProfile, angular_cutoff,
                                   dyadic_cutoff)

logger = logging.getLogger(__name__)

KERNEL_ORDER = 16
KERNEL_TOLERANCE = 1e-10
KERNEL_MAX_DOUBLINGS = 5
KERNEL_BLOCK = 4096
MAX_FREQUENCY_BOX = 20_000_000
TUBE_MIN_POINTS = 8


@lru_cache(maxsize=8)
def _eta_profile(c0: float, cache_dir: Optional[str]) -> EtaProfile:
    return EtaProfile(c0, cache_dir)


@dataclass(frozen=True)
class KnappGeometry:
    """Scales of a Knapp plate at frequency lam."""

    lam: float
    delta: float
    T: float
    scale: float
    chord: float
    theta_max: float
    r_lo: float
    r_hi: float

    @classmethod
    def build(cls, lam: float, delta: float, T: float, dimension: int, eta_cutoff: float) -> "KnappGeometry":
        chord = ANGULAR_SUPPORT * math.sqrt(delta / lam)
        low, high = DYADIC_SUPPORT
        return cls(
            lam=lam,
            delta=delta,
            T=T,
            scale=(lam * delta) ** (-(dimension - 1) / 4.0),
            chord=chord,
            theta_max=2.0 * math.asin(min(1.0, 0.5 * chord)),
            r_lo=max(low * lam, lam - eta_cutoff / T),
            r_hi=min(high * lam, lam + eta_cutoff / T),
        )

    def angular(self, chord_distance: np.ndarray) -> np.ndarray:
        return angular_cutoff(math.sqrt(self.lam / self.delta) * chord_distance)

    def radial(self, r: np.ndarray, eta) -> np.ndarray:
        return dyadic_cutoff(r / self.lam) * eta(self.T * (self.lam - r))


def knapp_amplitude(xi: np.ndarray, direction: np.ndarray, geometry: KnappGeometry, eta) -> np.ndarray:
    """a(lam^(1/2) delta^(-1/2) |xi/|xi| - u|) beta(|xi|/lam) eta(T(lam - |xi|)) at frequency vectors xi."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1)
    positive = r > 0
    unit = xi / np.where(positive, r, 1.0)[..., None]
    chord = np.linalg.norm(unit - direction, axis=-1)
    amplitude = geometry.angular(chord) * geometry.radial(r, eta)
    return np.where(positive, amplitude, 0.0)


def _frequency_box(model: ManifoldModel, geodesic: GeodesicSpec, geometry: KnappGeometry) -> np.ndarray:
    """Every cover label whose frequency vector can lie in the plate."""
    frame = geodesic.frame_matrix
    n = model.dimension
    transverse = geometry.r_hi * math.sin(min(geometry.theta_max, 0.5 * math.pi))
    axial = (geometry.r_lo * math.cos(min(geometry.theta_max, math.pi)), geometry.r_hi)
    intervals = [axial] + [(-transverse, transverse)] * (n - 1)
    corners = np.array(list(product(*intervals)), dtype=float) @ frame

    if model.kind is ManifoldKind.TORUS:
        labels = corners @ model.basis_matrix.T / (2.0 * math.pi)
    else:
        labels = corners / np.array([math.pi, 2.0 * math.pi])
    low = np.floor(labels.min(axis=0)).astype(np.int64) - 1
    high = np.ceil(labels.max(axis=0)).astype(np.int64) + 1
    size = int(np.prod(high - low + 1))
    if size > MAX_FREQUENCY_BOX:
        raise CapabilityError(f"Knapp frequency box of {size} labels exceeds {MAX_FREQUENCY_BOX}")
    ranges = [np.arange(lo, hi + 1) for lo, hi in zip(low, high)]
    return np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n)


def knapp_flat(model: ManifoldModel, geodesic: GeodesicSpec, params: KnappParams,
               cache_dir: Optional[Union[str, Path]] = None) -> CoefficientVector:
    """
    Eigenbasis expansion of the Knapp quasimode about a closed geodesic.

    The deck-group sum of the Euclidean kernel is evaluated by Poisson
    summation: on the torus every lattice mode m receives
    (lam delta)^(-(n-1)/4) (2 pi)^n vol^(-1/2) A(xi_m); on the Klein bottle
    the kernel is periodised over the translation cover and averaged with
    its glide image.

    Args:
        model: Torus or Klein bottle
        geodesic: Closed geodesic from periodic_geodesic on the same model
        params: Mode number and profile parameters
        cache_dir: Optional directory for profile sidecars

    Returns:
        CoefficientVector with entries below drop_threshold * max removed

    Raises:
        CapabilityError: If the model is not flat
        DomainError: If k is too small for lam >> e
    """
    if not model.is_flat:
        raise CapabilityError(f"Knapp modes are built on flat models only, got {model}")
    if geodesic.spherical or len(geodesic.direction) != model.dimension:
        raise ContractError(f"geodesic does not belong to {model}")

    lam = params.frequency(geodesic.length)
    delta = params.delta(lam)
    T = params.smoothing_time(lam)
    profile = _eta_profile(params.c0, str(cache_dir) if cache_dir is not None else None)
    eta = params.eta_override or profile
    geometry = KnappGeometry.build(lam, delta, T, model.dimension, profile.cutoff())
    direction = np.asarray(geodesic.direction, dtype=float)

    labels = _frequency_box(model, geodesic, geometry)
    xi = manifolds.dual_vectors(model, labels)
    amplitude = knapp_amplitude(xi, direction, geometry, eta)
    n = model.dimension

    if model.kind is ManifoldKind.TORUS:
        phase = np.exp(-1j * (xi @ np.asarray(geodesic.base_point, dtype=float)))
        values = geometry.scale * (2.0 * math.pi) ** n / math.sqrt(model.volume) * amplitude * phase
        keep_labels, keep_values = labels, values
    else:
        if any(geodesic.base_point):
            raise ContractError("klein_bottle Knapp modes need a geodesic through the origin")
        cover = geometry.scale * (2.0 * math.pi) ** 2 / 2.0 * amplitude
        table = {(int(p), int(q)): c for (p, q), c in zip(labels, cover) if c != 0.0}
        representatives = sorted({(p, abs(q)) for p, q in table if abs(q) > 0 or p % 2 == 0})
        keep_labels = np.array(representatives, dtype=np.int64).reshape(-1, 2)
        keep_values = np.empty(len(representatives), dtype=complex)
        for j, (p, q) in enumerate(representatives):
            sign = 1.0 if p % 2 == 0 else -1.0
            paired = table.get((p, q), 0.0) + sign * table.get((p, -q), 0.0)
            keep_values[j] = math.sqrt(2.0) * paired if q > 0 else paired

    magnitude = np.abs(keep_values)
    peak = float(magnitude.max()) if magnitude.size else 0.0
    if peak == 0.0:
        logger.info(f"Knapp mode k={params.k} on {model} vanishes identically")
        return CoefficientVector(model, {})
    kept = magnitude > params.drop_threshold * peak
    keep_labels, keep_values = keep_labels[kept], keep_values[kept]
    if model.kind is ManifoldKind.TORUS:
        freqs = manifolds.torus_frequencies(model, keep_labels)
    else:
        freqs = manifolds.klein_frequencies(keep_labels)
    coefficients = {
        EigenIndex(model.kind, tuple(int(v) for v in label), float(f)): complex(c)
        for label, f, c in zip(keep_labels, freqs, keep_values)
    }
    logger.info(f"Built Knapp mode k={params.k} on {model}: lam={lam:.6g}, {len(coefficients)} coefficients")
    return CoefficientVector(model, coefficients)


def _composite_gauss(low: float, high: float, panels: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(KERNEL_ORDER)
    edges = np.linspace(low, high, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * nodes).ravel(), (half[:, None] * weights).ravel()


def _sphere_average(n: int, rho: np.ndarray) -> np.ndarray:
    """int over S^(n-2) of exp(i rho v.e) dv."""
    if n == 2:
        return 2.0 * np.cos(rho)
    order = 0.5 * (n - 3)
    area = 2.0 * math.exp(0.5 * (n - 1) * math.log(math.pi) - gammaln(0.5 * (n - 1)))
    positive = rho > 1e-12
    safe = np.where(positive, rho, 1.0)
    value = (2.0 * math.pi) ** (0.5 * (n - 1)) * safe ** (-order) * jv(order, safe)
    return np.where(positive, value, area)


def knapp_kernel_rn(z: Sequence[float], lam: float, delta: float, params: KnappParams,
                    T: Optional[float] = None, cache_dir: Optional[Union[str, Path]] = None,
                    tolerance: float = KERNEL_TOLERANCE) -> complex:
    """
    Euclidean kernel K(z) = int exp(i z.xi) A(xi) d xi with the plate along e1.

    Polar tensor rule: composite Gauss-Legendre in r and in the angle to e1,
    with the remaining sphere integrated by a Bessel function. Panel counts
    double until two successive values agree to ``tolerance`` times the L^1
    size of the integrand.

    Raises:
        DomainError: If lam <= e
        AccuracyError: If the refinement does not settle
    """
    if lam <= math.e:
        raise DomainError(f"kernel needs lam > e, got {lam}")
    z = np.asarray(z, dtype=float).reshape(-1)
    n = z.size
    if n < 2:
        raise ContractError(f"kernel point needs at least 2 coordinates, got {n}")
    if T is None:
        T = params.smoothing_time(lam)
    profile = _eta_profile(params.c0, str(cache_dir) if cache_dir is not None else None)
    eta = params.eta_override or profile
    geometry = KnappGeometry.build(lam, delta, T, n, profile.cutoff())
    if geometry.r_hi <= geometry.r_lo:
        return 0j

    axial = float(z[0])
    transverse = float(np.linalg.norm(z[1:]))
    span = geometry.r_hi - geometry.r_lo
    r_panels = max(8, int(math.ceil(span * (abs(axial) + params.c0 * T + 1.0) / math.pi)))
    swing = geometry.r_hi * (abs(axial) * geometry.theta_max ** 2 / 2.0 + transverse * geometry.theta_max)
    theta_panels = max(4, int(math.ceil(swing / math.pi)))

    def integrate(r_count: int, theta_count: int) -> Tuple[complex, float]:
        r, wr = _composite_gauss(geometry.r_lo, geometry.r_hi, r_count)
        theta, wt = _composite_gauss(0.0, geometry.theta_max, theta_count)
        radial = geometry.radial(r, eta) * r ** (n - 1) * wr
        angular = geometry.angular(2.0 * np.sin(0.5 * theta)) * np.sin(theta) ** (n - 2) * wt
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        total = 0j
        for start in range(0, r.size, KERNEL_BLOCK):
            block = r[start:start + KERNEL_BLOCK, None]
            phase = np.exp(1j * axial * block * cos_t) * _sphere_average(n, transverse * block * sin_t)
            total += complex(radial[start:start + KERNEL_BLOCK] @ (phase @ angular))
        size = float(np.sum(np.abs(radial)) * np.sum(np.abs(angular))) * float(_sphere_average(n, np.zeros(1))[0])
        return total, size

    # each axis is doubled on its own until doubling it no longer moves the value
    computed: Dict[Tuple[int, int], Tuple[complex, float]] = {}

    def value_at(r_count: int, theta_count: int) -> Tuple[complex, float]:
        if (r_count, theta_count) not in computed:
            computed[(r_count, theta_count)] = integrate(r_count, theta_count)
        return computed[(r_count, theta_count)]

    for _ in range(KERNEL_MAX_DOUBLINGS):
        base, size = value_at(r_panels, theta_panels)
        finer_r, _ = value_at(2 * r_panels, theta_panels)
        finer_theta, _ = value_at(r_panels, 2 * theta_panels)
        gap_r, gap_theta = abs(finer_r - base), abs(finer_theta - base)
        if gap_r <= tolerance * size and gap_theta <= tolerance * size:
            return finer_r
        if gap_r > tolerance * size:
            r_panels *= 2
        if gap_theta > tolerance * size:
            theta_panels *= 2
    raise AccuracyError(
        f"kernel quadrature at z={z.tolist()} did not settle: gaps {gap_r:.3e}, {gap_theta:.3e}, scale {size:.3e}")


def defect(model: ManifoldModel, lam: float, coeffs: CoefficientVector) -> float:
    """Exact ||(Delta + lam^2) f||_2 from the coefficients."""
    if coeffs.model != model:
        raise ContractError(f"coefficients on {coeffs.model} do not belong to {model}")
    if not coeffs.coefficients:
        return 0.0
    _, values, freqs = coeffs.arrays()
    return float(np.linalg.norm((lam * lam - freqs * freqs) * values))


def quasimode_budget(model: ManifoldModel, lam: float, coeffs: CoefficientVector, delta: float) -> float:
    """||f||_2 + (lam delta)^(-1) ||(Delta + lam^2) f||_2."""
    if lam <= 0 or delta <= 0:
        raise DomainError(f"budget needs lam > 0 and delta > 0, got {lam}, {delta}")
    return coeffs.l2_norm() + defect(model, lam, coeffs) / (lam * delta)


def spectral_localization(coeffs: CoefficientVector, lam: float, T: float, K: float) -> float:
    """Fraction of the coefficient l^2 mass within K/T of lam."""
    if not coeffs.coefficients:
        return 1.0
    _, values, freqs = coeffs.arrays()
    weights = np.abs(values) ** 2
    total = float(np.sum(weights))
    inside = float(np.sum(weights[np.abs(freqs - lam) <= K / T]))
    return inside / total


class ClosedFormEvaluator(QuasimodeEvaluator):
    """Closed-form sphere mode of a fixed degree."""

    def __init__(self, model: ManifoldModel, degree: int):
        if degree < 1:
            raise ContractError(f"degree must be >= 1, got {degree}")
        super().__init__(model, manifolds.sphere_frequency(model.dimension, degree))
        self.degree = degree

    def required_resolution(self) -> Optional[int]:
        return max(manifolds.MIN_RESOLUTION, self.degree + 2)

    def to_coefficients(self, window: SpectralWindow, grid: QuadratureGrid) -> CoefficientVector:
        """Project onto the eigenbasis of ``window`` by quadrature."""
        self.check_grid(grid)
        indices = manifolds.enumerate_window(self.model, window)
        if not indices:
            return CoefficientVector(self.model, {})
        points = grid.points.reshape(-1, grid.points.shape[-1])
        weights = np.ravel(grid.weights)
        values = np.ravel(self.on_grid(grid))
        basis = manifolds.eval_eigenfunctions(self.model, indices, points)
        coefficients = (np.conj(basis) * weights[:, None]).T @ values
        peak = float(np.max(np.abs(coefficients)))
        return CoefficientVector(self.model, {
            index: complex(c) for index, c in zip(indices, coefficients) if abs(c) > 1e-12 * peak
        })


@lru_cache(maxsize=256)
def beam_normalization(n: int, l: int) -> float:
    """||(x1 + i x2)^l||_2 on S^n by quadrature, cross-checked against the closed form."""
    model = ManifoldModel.sphere(n)
    grid = manifolds.quadrature_grid(model, max(manifolds.MIN_RESOLUTION, l + 2))
    points = grid.points
    radius = np.sqrt(points[..., 0] ** 2 + points[..., 1] ** 2)
    squared = weighted_power_sum(radius, grid.weights, 2.0 * l)
    closed = math.exp(math.log(2.0) + 0.5 * (n + 1) * math.log(math.pi) + gammaln(l + 1.0) - gammaln(l + 0.5 * (n + 1)))
    if abs(squared - closed) > 1e-8 * closed:
        logger.warning(f"Beam normalization for n={n}, l={l}: quadrature {squared:.12g} vs closed form {closed:.12g}")
    return math.sqrt(squared)


class GaussianBeam(ClosedFormEvaluator):
    """L^2-normalised (x1 + i x2)^l on S^n, concentrated on the x1x2 great circle."""

    def __init__(self, n: int, l: int):
        super().__init__(ManifoldModel.sphere(n), l)
        self.norm = beam_normalization(n, l)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return (points[..., 0] + 1j * points[..., 1]) ** self.degree / self.norm

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "degree": self.degree}


class ZonalHarmonic(ClosedFormEvaluator):
    """sqrt((2l+1)/4 pi) P_l(x . pole) on S^2."""

    def __init__(self, l: int, pole: Optional[Sequence[float]] = None):
        super().__init__(ManifoldModel.sphere(2), l)
        pole = np.array([0.0, 0.0, 1.0]) if pole is None else np.asarray(pole, dtype=float)
        length = float(np.linalg.norm(pole))
        if pole.shape != (3,) or length == 0.0:
            raise ContractError(f"pole must be a nonzero vector in R^3, got {pole}")
        self.pole = pole / length
        self.peak = math.sqrt((2 * l + 1) / (4.0 * math.pi))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        cosine = np.clip(np.asarray(points, dtype=float) @ self.pole, -1.0, 1.0)
        return (self.peak * eval_legendre(self.degree, cosine)).astype(complex)

    def describe(self) -> Dict[str, Any]:
        return {**super().describe(), "degree": self.degree, "pole": self.pole.tolist()}


def gaussian_beam(n: int, l: int) -> GaussianBeam:
    return GaussianBeam(n, l)


def zonal(n: int, l: int, pole: Optional[Sequence[float]] = None) -> ZonalHarmonic:
    if n != 2:
        raise CapabilityError(f"zonal functions are implemented on S^2 only, got n={n}")
    return ZonalHarmonic(l, pole)


def _deck_images(model: ManifoldModel, physical: np.ndarray) -> List[np.ndarray]:
    if model.kind is ManifoldKind.TORUS:
        basis = model.basis_matrix
        shifts = product((-1, 0, 1), repeat=model.dimension)
        return [physical + np.asarray(shift, dtype=float) @ basis for shift in shifts]
    images = []
    for j in range(-2, 3):
        for b in range(-2, 3):
            sign = -1.0 if j % 2 else 1.0
            images.append(np.stack([physical[..., 0] + j, sign * (physical[..., 1] + b)], axis=-1))
    return images


def tube_mask(model: ManifoldModel, tube: TubeSpec, points: np.ndarray) -> np.ndarray:
    """Boolean mask of the points lying in the tube (minimal image on flat models)."""
    points = np.asarray(points, dtype=float)
    geodesic = tube.geodesic
    if model.kind is ManifoldKind.SPHERE:
        along = points @ np.asarray(geodesic.base_point)
        across = points @ np.asarray(geodesic.direction)
        distance = np.arccos(np.clip(np.hypot(along, across), 0.0, 1.0))
        inside = distance <= tube.radius
        if tube.half_window is not None:
            inside &= np.abs(np.arctan2(across, along)) <= tube.half_window
        return inside

    if tube.half_window is None:
        t_lo, t_hi = 0.0, geodesic.length
    else:
        t_lo, t_hi = -tube.half_window, tube.half_window
    physical = manifolds.lattice_to_physical(model, points)
    base = np.asarray(geodesic.base_point, dtype=float)
    frame = geodesic.frame_matrix
    inside = np.zeros(points.shape[:-1], dtype=bool)
    for image in _deck_images(model, physical):
        local = (image - base) @ frame.T
        t = local[..., 0]
        radial = np.linalg.norm(local[..., 1:], axis=-1)
        inside |= (t >= t_lo) & (t <= t_hi) & (radial <= tube.radius)
    return inside


def _tube_reach(model: ManifoldModel) -> float:
    if model.kind is ManifoldKind.SPHERE:
        return math.pi
    return float(np.max(np.linalg.norm(model.basis_matrix, axis=1)))


def tube_resolution(model: ManifoldModel, tube: TubeSpec) -> int:
    """Smallest grid resolution putting 8 points across the tube."""
    reach = _tube_reach(model)
    return max(manifolds.MIN_RESOLUTION, int(math.ceil(TUBE_MIN_POINTS * reach / (2.0 * tube.radius))))


def _check_tube_resolution(grid: QuadratureGrid, tube: TubeSpec) -> None:
    across = 2.0 * tube.radius * grid.resolution / _tube_reach(grid.model)
    if across < TUBE_MIN_POINTS * (1.0 - 1e-12):
        required = tube_resolution(grid.model, tube)
        raise ResolutionError(
            f"grid resolution {grid.resolution} puts {across:.2f} points across a tube of radius {tube.radius:.4g}",
            required)


def tube_mass(evaluator: QuasimodeEvaluator, tube: TubeSpec, grid: QuadratureGrid, max_concurrency: int = 1) -> float:
    """
    L^2 mass of a mode inside a tube.

    Raises:
        ResolutionError: If fewer than 8 grid points lie across the tube
    """
    evaluator.check_grid(grid)
    _check_tube_resolution(grid, tube)
    mask = tube_mask(grid.model, tube, grid.points)
    values = evaluator.on_grid(grid, max_concurrency)
    return math.sqrt(masked_power_sum(values, grid.weights, mask, 2.0, max_concurrency))


def deck_invariance_check(model: ManifoldModel, evaluator: QuasimodeEvaluator, samples: int = 256,
                          seed: int = 0, rng: Optional[np.random.Generator] = None) -> float:
    """Largest |psi(g y) - psi(y)| over random y and deck generators g, relative to max |psi(y)|.

    Sample points come from ``rng`` when given, else from a Philox generator keyed by ``seed``.
    """
    if not model.is_flat:
        raise CapabilityError(f"deck invariance is checked on flat models only, got {model}")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(seed))
    points = rng.random((samples, model.dimension))
    base = evaluator.evaluate(points)
    peak = float(np.max(np.abs(base)))
    if peak == 0.0:
        return 0.0
    worst = 0.0
    for generator in manifolds.deck_generators(model):
        worst = max(worst, float(np.max(np.abs(evaluator.evaluate(generator(points)) - base))))
    return worst / peak


def l1_lower_ratio(evaluator: QuasimodeEvaluator, lam: float, n: int, grid: QuadratureGrid,
                   max_concurrency: int = 1) -> float:
    """||psi||_1 lam^((n-1)/4) / ||psi||_2 by quadrature."""
    evaluator.check_grid(grid)
    values = evaluator.on_grid(grid, max_concurrency)
    l1 = weighted_power_sum(values, grid.weights, 1.0, max_concurrency)
    l2 = math.sqrt(weighted_power_sum(values, grid.weights, 2.0, max_concurrency))
    if l2 == 0.0:
        logger.warning(f"L1 ratio requested for a vanishing {type(evaluator).__name__}")
        return 0.0
    return l1 * lam ** ((n - 1) / 4.0) / l2


def _to_model_points(model: ManifoldModel, physical: np.ndarray) -> np.ndarray:
    if model.is_flat:
        return manifolds.physical_to_lattice(model, physical)
    return physical


def pointwise_axis_profile(evaluator: QuasimodeEvaluator, geodesic: GeodesicSpec, half_window: float = 0.25,
                           samples: int = 32) -> Tuple[np.ndarray, np.ndarray]:
    """|psi| at ``samples`` arclengths |t| <= half_window along the geodesic."""
    t = np.linspace(-half_window, half_window, samples)
    points = _to_model_points(evaluator.model, geodesic.point_at(t))
    return t, np.abs(evaluator.evaluate(points))


def transverse_gradient_max(evaluator: QuasimodeEvaluator, tube: TubeSpec, lam: float,
                            samples_t: int = 16, samples_r: int = 5) -> float:
    """Largest transverse gradient over tube samples, by central differences at step 1e-2/lam."""
    model = evaluator.model
    if not model.is_flat:
        raise CapabilityError(f"transverse gradients are sampled on flat models only, got {model}")
    geodesic = tube.geodesic
    frame = geodesic.frame_matrix
    reach = tube.half_window if tube.half_window is not None else 0.5 * geodesic.length
    centers = geodesic.point_at(np.linspace(-reach, reach, samples_t))
    offsets = np.linspace(-tube.radius, tube.radius, samples_r)
    samples = [centers + s * frame[j] for j in range(1, model.dimension) for s in offsets]
    points = np.concatenate(samples, axis=0)

    step = 1e-2 / lam
    squared = np.zeros(points.shape[0])
    for j in range(1, model.dimension):
        forward = evaluator.evaluate(_to_model_points(model, points + step * frame[j]))
        backward = evaluator.evaluate(_to_model_points(model, points - step * frame[j]))
        squared += np.abs((forward - backward) / (2.0 * step)) ** 2
    return float(np.sqrt(squared.max()))


class QuasimodeRecordBuilder:
    """
    Builds, validates, writes and reads the JSON record of a quasimode:
    {manifold, type, params, lambda, coeffs: [{label, re, im}]}.
    """

    REQUIRED_FIELDS = {"manifold", "type", "params", "lambda", "coeffs"}

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def create_record(self, model: ManifoldModel, mode_type: str, params: Dict[str, Any], lam: float,
                      coeffs: CoefficientVector) -> Dict[str, Any]:
        try:
            entries = [
                {"label": list(index.label), "re": float(value.real), "im": float(value.imag)}
                for index, value in zip(*coeffs.arrays()[:2])
            ]
            return {
                "manifold": model.descriptor(),
                "type": mode_type,
                "params": dict(params),
                "lambda": float(lam),
                "coeffs": entries,
                "metadata": {"count": len(entries), "l2_norm": coeffs.l2_norm()},
            }
        except Exception as e:
            self.logger.error(f"Error creating quasimode record: {str(e)}")
            raise

    def validate_record(self, record: Dict[str, Any]) -> bool:
        try:
            if not isinstance(record, dict) or not self.REQUIRED_FIELDS.issubset(record.keys()):
                return False
            for entry in record["coeffs"]:
                if not isinstance(entry, dict) or not {"label", "re", "im"}.issubset(entry.keys()):
                    return False
                if not all(isinstance(v, int) for v in entry["label"]):
                    return False
            return math.isfinite(float(record["lambda"]))
        except Exception as e:
            self.logger.error(f"Error validating quasimode record: {str(e)}")
            return False

    def write(self, record: Dict[str, Any], path: Union[str, Path]) -> Path:
        path = Path(path)
        if not self.validate_record(record):
            raise ContractError(f"refusing to write an invalid quasimode record to {path}")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(record, f, indent=2)
        self.logger.info(f"Wrote {record['type']} record with {len(record['coeffs'])} coefficients to {path}")
        return path

    def load(self, path: Union[str, Path]) -> Tuple[Dict[str, Any], CoefficientVector]:
        """Read a record back and rebuild its coefficient vector."""
        with open(path, "r") as f:
            record = json.load(f)
        if not self.validate_record(record):
            raise ContractError(f"{path} is not a quasimode record")
        descriptor = record["manifold"]
        model = _model_from_descriptor(descriptor)
        coeffs = {
            manifolds.make_index(model, entry["label"]): complex(entry["re"], entry["im"])
            for entry in record["coeffs"]
        }
        return record, CoefficientVector(model, coeffs)


def _model_from_descriptor(descriptor: Dict[str, Any]) -> ManifoldModel:
    kind = ManifoldKind(descriptor["kind"])
    if kind is ManifoldKind.TORUS:
        return ManifoldModel.torus(descriptor["basis"])
    if kind is ManifoldKind.KLEIN_BOTTLE:
        return ManifoldModel.klein_bottle()
    return ManifoldModel.sphere(int(descriptor["dimension"]))
