"""Spectral windows, projectors, smoothed multipliers and norm measurements."""
from __future__ import annotations

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from src.errors import ContractError, DomainError, EmptyWindowError, ValidationError
from src.models.manifold import ManifoldKind, ManifoldModel, QuadratureGrid
from src.models.spectral_types import CoefficientVector, SpectralWindow, WidthPolicy
from src.services import manifolds
from src.services.evaluators import CoefficientEvaluator, QuasimodeEvaluator
from src.services.parallel import map_chunks, weighted_power_sum
from src.services.profiles import WindowProfile

logger = logging.getLogger(__name__)

KERNEL_CHUNK = 8192
SUP_SEEDS = 8


def window_width(lam: float, policy: WidthPolicy, custom: Optional[Callable[[float], float]] = None,
                 samples: Optional[Sequence[float]] = None) -> float:
    """
    Width delta(lam) of a spectral window.

    Args:
        lam: Window start
        policy: UNIT, LOG or CUSTOM
        custom: delta function for the CUSTOM policy
        samples: Other lambda values of the run, used to validate a custom delta

    Returns:
        The realised width

    Raises:
        DomainError: If lam <= e under the log policy
        ValidationError: If a custom delta exceeds 1 or lam*delta decreases
    """
    if policy in (WidthPolicy.UNIT, WidthPolicy.LOG):
        return SpectralWindow.at(lam, policy).width
    if policy is WidthPolicy.CUSTOM:
        if not math.isfinite(lam) or lam <= 0:
            raise DomainError(f"window start must be a positive finite number, got {lam}")
        if custom is None:
            raise ValidationError("custom width policy needs a delta function")
        grid = sorted(set([float(lam)] + [float(s) for s in (samples or [])]))
        widths = [float(custom(x)) for x in grid]
        for x, width in zip(grid, widths):
            if not (0.0 < width <= 1.0):
                raise ValidationError(f"custom delta({x:g}) = {width:g} is outside (0, 1]")
        products = [x * w for x, w in zip(grid, widths)]
        for (x0, p0), (x1, p1) in zip(zip(grid, products), zip(grid[1:], products[1:])):
            if p1 < p0:
                raise ValidationError(f"lam*delta(lam) decreases between {x0:g} and {x1:g}")
        return widths[grid.index(float(lam))]
    raise ContractError(f"policy {policy.value} has no width rule")


def policy_window(lam: float, policy: WidthPolicy, custom: Optional[Callable[[float], float]] = None,
                  samples: Optional[Sequence[float]] = None) -> SpectralWindow:
    return SpectralWindow(float(lam), window_width(lam, policy, custom, samples), policy)


def _check_model(model: ManifoldModel, coeffs: CoefficientVector) -> None:
    if coeffs.model != model:
        raise ContractError(f"coefficients on {coeffs.model} do not belong to {model}")


def project(model: ManifoldModel, window: SpectralWindow, coeffs: CoefficientVector) -> CoefficientVector:
    """Keep the coefficients whose frequency lies in the window."""
    _check_model(model, coeffs)
    kept = {index: c for index, c in coeffs.coefficients.items() if window.contains(index.frequency)}
    return CoefficientVector(model, kept)


def smooth_project(model: ManifoldModel, profile: WindowProfile, T: float, lam: float,
                   coeffs: CoefficientVector) -> CoefficientVector:
    """Apply the multiplier rho(T(lam - lam_j)) to every coefficient."""
    if T < 1.0:
        raise ContractError(f"smoothing time T must be >= 1, got {T}")
    _check_model(model, coeffs)
    if not coeffs.coefficients:
        return CoefficientVector(model, {})
    indices = list(coeffs.coefficients)
    freqs = np.array([index.frequency for index in indices])
    multipliers = profile(T * (lam - freqs))
    return CoefficientVector(model, {index: coeffs.coefficients[index] * complex(m)
                                     for index, m in zip(indices, multipliers)})


def _validate_q(q: float) -> float:
    q = float(q)
    if not q > 1.0:
        raise DomainError(f"Lebesgue exponent must lie in (1, inf], got {q}")
    return q


def refine_maximum(function: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid,
                   flat_index: int, start_value: float) -> Tuple[float, np.ndarray]:
    """
    One local refinement pass around a grid argmax.

    Each coordinate in turn is optimised by bounded golden-section search over
    the neighbouring grid cells; the other coordinates stay fixed.

    Returns:
        (best value, best axis coordinates)
    """
    position = np.unravel_index(flat_index, grid.shape)
    coords = np.array([axis[i] for axis, i in zip(grid.axes, position)], dtype=float)
    best = start_value

    for axis_number, axis in enumerate(grid.axes):
        i = position[axis_number]
        low_bound, high_bound, periodic = grid.axis_bounds(axis_number)
        if len(axis) > 1:
            step_low = axis[i] - axis[i - 1] if i > 0 else (axis[1] - axis[0] if periodic else axis[0] - low_bound)
            step_high = axis[i + 1] - axis[i] if i + 1 < len(axis) else (axis[-1] - axis[-2] if periodic else high_bound - axis[-1])
        else:
            step_low = step_high = 0.0
        low, high = coords[axis_number] - step_low, coords[axis_number] + step_high
        if not periodic:
            low, high = max(low, low_bound), min(high, high_bound)
        if high <= low:
            continue

        def negative(x: float, axis_number=axis_number) -> float:
            trial = coords.copy()
            trial[axis_number] = x
            point = grid.points_from_axes([np.array([v]) for v in trial])
            return -float(function(point)[0])

        result = minimize_scalar(negative, bounds=(low, high), method="bounded",
                                 options={"xatol": 1e-12 * max(1.0, high - low)})
        for candidate in (result.x, low, high):
            value = -negative(candidate)
            if value > best:
                best = value
                coords[axis_number] = candidate
    return best, coords


def sup_seeds(magnitude: np.ndarray, grid: QuadratureGrid, count: int = SUP_SEEDS) -> List[int]:
    """
    Flat grid indices to refine from for a sup norm.

    The ``count`` largest grid values, plus the best node on each edge row of
    every non-periodic axis. Edge rows border the sphere poles, where a narrow
    peak can fall between the outermost Gauss nodes.
    """
    seeds = set(np.argsort(magnitude, axis=None)[-count:].tolist())
    for axis in range(magnitude.ndim):
        if grid.axis_bounds(axis)[2]:
            continue
        for edge in (0, magnitude.shape[axis] - 1):
            row = np.take(magnitude, [edge], axis=axis)
            position = list(np.unravel_index(int(np.argmax(row)), row.shape))
            position[axis] = edge
            seeds.add(int(np.ravel_multi_index(tuple(position), magnitude.shape)))
    return sorted(seeds)


def lq_norm(evaluator: QuasimodeEvaluator, q: float, grid: QuadratureGrid, max_concurrency: int = 1) -> float:
    """
    (sum_i w_i |psi(x_i)|^q)^(1/q), or the refined maximum for q = inf.

    Raises:
        DomainError: If q <= 1
        ResolutionError: If the grid aliases a coefficient-backed evaluator
    """
    q = _validate_q(q)
    evaluator.check_grid(grid)
    values = evaluator.on_grid(grid, max_concurrency)
    if math.isinf(q):
        magnitude = np.abs(values)

        def modulus(pts: np.ndarray) -> np.ndarray:
            return np.abs(evaluator.evaluate(pts))

        return max(refine_maximum(modulus, grid, seed, float(magnitude.flat[seed]))[0]
                   for seed in sup_seeds(magnitude, grid))
    total = weighted_power_sum(values, grid.weights, q, max_concurrency)
    return total ** (1.0 / q)


def kernel_resolution(model: ManifoldModel, indices) -> int:
    labels = np.array([index.label for index in indices], dtype=np.int64)
    if model.kind is ManifoldKind.SPHERE:
        need = 2 * (int(labels[:, 0].max()) + 1)
    elif model.kind is ManifoldKind.KLEIN_BOTTLE:
        need = max(2 * int(np.abs(labels[:, 0]).max()), 4 * int(labels[:, 1].max()))
    else:
        need = 4 * int(np.abs(labels).max())
    return max(manifolds.MIN_RESOLUTION, need)


def kernel_maximizer(model: ManifoldModel, window: SpectralWindow, resolution: Optional[int] = None,
                     max_concurrency: int = 1) -> Tuple[float, np.ndarray]:
    """
    Maximise the diagonal kernel sum_j |e_j(x)|^2 over a window.

    Returns:
        (sqrt of the maximum, maximizing point), or (0, None) for an empty window
    """
    indices = manifolds.enumerate_window(model, window)
    if not indices:
        return 0.0, None
    if model.kind is ManifoldKind.TORUS:
        # every |e_m| equals vol^(-1/2)
        return math.sqrt(len(indices) / model.volume), np.zeros(model.dimension)

    grid = manifolds.quadrature_grid(model, resolution or kernel_resolution(model, indices))
    points = grid.points.reshape(-1, grid.points.shape[-1])

    def kernel(pts: np.ndarray) -> np.ndarray:
        values = manifolds.eval_eigenfunctions(model, indices, pts)
        return np.sum(np.abs(values) ** 2, axis=-1)

    def block(chunk: range) -> np.ndarray:
        return kernel(points[chunk.start:chunk.stop])

    diagonal = np.concatenate(map_chunks(block, points.shape[0], max_concurrency, chunk_size=KERNEL_CHUNK))
    flat_index = int(np.argmax(diagonal))
    best, coords = refine_maximum(kernel, grid, flat_index, float(diagonal[flat_index]))
    point = grid.points_from_axes([np.array([c]) for c in coords])[0]
    logger.debug(f"Kernel maximum {best:.6g} on {model} over {len(indices)} modes at grid {grid.resolution}")
    return math.sqrt(best), point


def opnorm_2_to_inf(model: ManifoldModel, window: SpectralWindow, resolution: Optional[int] = None,
                    max_concurrency: int = 1) -> float:
    """The exact L^2 -> L^inf norm of the window projector; 0 for an empty window."""
    value, point = kernel_maximizer(model, window, resolution, max_concurrency)
    if point is None:
        logger.info(f"Empty window {window.describe()} on {model}")
    return value


def coherent_candidate(model: ManifoldModel, window: SpectralWindow, point: np.ndarray) -> CoefficientVector:
    """Unit vector with coefficients proportional to conj(e_j(point))."""
    indices = manifolds.enumerate_window(model, window)
    if not indices:
        return CoefficientVector(model, {})
    values = manifolds.eval_eigenfunctions(model, indices, np.asarray(point, dtype=float)[None, :])[0]
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise EmptyWindowError(f"every eigenfunction of {window.describe()} vanishes at {point}")
    return CoefficientVector(model, {index: complex(np.conj(v) / norm) for index, v in zip(indices, values)})


def opnorm_lower_bound(model: ManifoldModel, window: SpectralWindow, q: float,
                       candidates: Sequence[CoefficientVector], grid: QuadratureGrid,
                       max_concurrency: int = 1) -> float:
    """
    Certified lower bound max ||P phi||_q / ||P phi||_2 over candidates.

    Raises:
        ContractError: If no candidates are given
        EmptyWindowError: If every candidate projects to zero
    """
    q = _validate_q(q)
    if not candidates:
        raise ContractError("opnorm_lower_bound needs at least one candidate")
    best: Optional[float] = None
    skipped = 0
    for candidate in candidates:
        projected = project(model, window, candidate)
        norm2 = projected.l2_norm()
        if norm2 <= 1e-12 * max(1.0, candidate.l2_norm()):
            skipped += 1
            continue
        ratio = lq_norm(CoefficientEvaluator(projected), q, grid, max_concurrency) / norm2
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise EmptyWindowError(f"all {len(candidates)} candidates vanish in {window.describe()}")
    if skipped:
        logger.info(f"Skipped {skipped} candidates with zero projection in {window.describe()}")
    return best


def l2_from_grid(evaluator: QuasimodeEvaluator, grid: QuadratureGrid, max_concurrency: int = 1) -> float:
    """Quadrature L^2 norm, used by Parseval checks."""
    return lq_norm(evaluator, 2.0, grid, max_concurrency)


def grid_inner_products(model: ManifoldModel, indices, grid: QuadratureGrid) -> np.ndarray:
    """Gram matrix <e_i, e_j> by quadrature."""
    points = grid.points.reshape(-1, grid.points.shape[-1])
    weights = np.ravel(grid.weights)
    values = manifolds.eval_eigenfunctions(model, indices, points)
    return (values * weights[:, None]).T @ np.conj(values)
