"""Exact Laplace eigenbases, quadrature grids and closed geodesics on the model manifolds."""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
from scipy.special import eval_gegenbauer, gammaln, roots_jacobi, roots_legendre

from src.errors import CapabilityError, ContractError
from src.models.manifold import EigenIndex, GeodesicSpec, ManifoldKind, ManifoldModel, QuadratureGrid
from src.models.spectral_types import SpectralWindow

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 8
MAX_SPHERE_DEGREE = 200


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------

def _expand_segments(outer: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    counts = np.maximum(end - start + 1, 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros((0, outer.shape[1] + 1), dtype=np.int64)
    rows = np.repeat(outer, counts, axis=0)
    first = np.repeat(start, counts)
    offsets = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    return np.column_stack([rows, first + offsets]).astype(np.int64)


def lattice_points_in_shell(gram: np.ndarray, lower: float, upper: float) -> np.ndarray:
    """Integer vectors m with lower^2 - slack <= m^T gram m <= upper^2 + slack.

    The outer n-1 coordinates run over a bounding box; the last coordinate is
    solved from the quadratic, excluding the inner ball. The result is a
    superset by at most one layer and must be filtered exactly by the caller.
    """
    n = gram.shape[0]
    inverse = np.linalg.inv(gram)
    bounds = np.floor(upper * np.sqrt(np.diag(inverse))).astype(np.int64) + 1
    if n == 1:
        outer = np.zeros((1, 0), dtype=np.int64)
    else:
        ranges = [np.arange(-b, b + 1) for b in bounds[:-1]]
        outer = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, n - 1)

    a = gram[-1, -1]
    b = outer @ gram[-1, :-1] if n > 1 else np.zeros(1)
    c = np.einsum("ij,jk,ik->i", outer, gram[:-1, :-1], outer) if n > 1 else np.zeros(1)

    disc_hi = b * b - a * (c - upper * upper)
    keep = disc_hi >= 0
    outer, b, c, disc_hi = outer[keep], b[keep], c[keep], disc_hi[keep]
    logger.debug(f"lattice slab sweep over {len(outer)} outer vectors, radius {upper:.6g}")
    root = np.sqrt(disc_hi)
    start = np.ceil((-b - root) / a).astype(np.int64) - 1
    end = np.floor((-b + root) / a).astype(np.int64) + 1

    if lower <= 0:
        return _expand_segments(outer, start, end)

    disc_lo = b * b - a * (c - lower * lower)
    inner = disc_lo > 0
    root_lo = np.sqrt(np.where(inner, disc_lo, 0.0))
    s1 = np.floor((-b - root_lo) / a).astype(np.int64) + 1
    s2 = np.ceil((-b + root_lo) / a).astype(np.int64) - 1
    end1 = np.where(inner, np.minimum(end, s1), end)
    start2 = np.where(inner, np.maximum(np.maximum(start, s2), end1 + 1), end + 1)
    first = _expand_segments(outer, start, end1)
    second = _expand_segments(outer, start2, end)
    return np.concatenate([first, second], axis=0)


def torus_gram(model: ManifoldModel) -> np.ndarray:
    """Quadratic form A with frequency(m)^2 = m^T A m."""
    basis = model.basis_matrix
    return 4.0 * math.pi ** 2 * np.linalg.inv(basis @ basis.T)


def _is_unit_lattice(model: ManifoldModel) -> bool:
    return np.array_equal(model.basis_matrix, np.eye(model.dimension))


def torus_frequencies(model: ManifoldModel, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, model.dimension)
    if _is_unit_lattice(model):
        return 2.0 * math.pi * np.sqrt(np.sum(labels * labels, axis=1).astype(float))
    gram = torus_gram(model)
    return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", labels, gram, labels), 0.0))


def dual_vectors(model: ManifoldModel, labels: np.ndarray) -> np.ndarray:
    """Physical frequency vectors of plane waves (torus, or the Klein double cover)."""
    labels = np.asarray(labels, dtype=float).reshape(-1, model.dimension)
    if model.kind is ManifoldKind.TORUS:
        return 2.0 * math.pi * labels @ np.linalg.inv(model.basis_matrix).T
    if model.kind is ManifoldKind.KLEIN_BOTTLE:
        return np.column_stack([math.pi * labels[:, 0], 2.0 * math.pi * labels[:, 1]])
    raise CapabilityError(f"{model} has no dual lattice")


def klein_frequencies(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, 2)
    return math.pi * np.sqrt((labels[:, 0] ** 2 + 4 * labels[:, 1] ** 2).astype(float))


def sphere_frequency(n: int, l: int) -> float:
    return math.sqrt(l * (l + n - 1))


def sphere_degree_dimension(n: int, l: int) -> int:
    return math.comb(l + n, n) - (math.comb(l + n - 2, n) if l >= 2 else 0)


@lru_cache(maxsize=512)
def sphere_chains(n: int, l: int) -> Tuple[Tuple[int, ...], ...]:
    """Gegenbauer chain labels (l_n, ..., l_2, m) of the degree-l harmonics on S^n."""
    if n == 2:
        return tuple((l, m) for m in range(-l, l + 1))
    chains: List[Tuple[int, ...]] = []
    for inner in range(l + 1):
        chains.extend((l,) + chain for chain in sphere_chains(n - 1, inner))
    return tuple(chains)


def _window_bounds(window: SpectralWindow) -> Tuple[float, float]:
    return window.lower, window.upper


def _enumerate_torus(model: ManifoldModel, lower: float, upper: float) -> List[EigenIndex]:
    labels = lattice_points_in_shell(torus_gram(model), lower, upper)
    freqs = torus_frequencies(model, labels)
    keep = (freqs >= lower) & (freqs <= upper)
    return [EigenIndex(ManifoldKind.TORUS, tuple(int(v) for v in m), float(f)) for m, f in zip(labels[keep], freqs[keep])]


def _enumerate_klein(lower: float, upper: float) -> List[EigenIndex]:
    """
    Klein bottle labels (p, q) with q > 0, or q = 0 and p even.

    The closed form that eval_eigenfunctions uses for a label,
    exp(i pi p y1) (e^{2 pi i q y2} + (-1)^p e^{-2 pi i q y2}) / sqrt(2),
    is the torus-cover exponential for (p, q) averaged with its glide image
    and renormalised. The basis is the group-averaged torus pair, not a
    separate construction.
    """
    gram = np.diag([math.pi ** 2, 4.0 * math.pi ** 2])
    labels = lattice_points_in_shell(gram, lower, upper)
    p, q = labels[:, 0], labels[:, 1]
    # group averaging kills odd p on the q = 0 axis and identifies (p, q) with (p, -q)
    keep = (q > 0) | ((q == 0) & (p % 2 == 0))
    labels = labels[keep]
    freqs = klein_frequencies(labels)
    inside = (freqs >= lower) & (freqs <= upper)
    return [EigenIndex(ManifoldKind.KLEIN_BOTTLE, (int(a), int(b)), float(f)) for (a, b), f in zip(labels[inside], freqs[inside])]


def _enumerate_sphere(model: ManifoldModel, lower: float, upper: float) -> List[EigenIndex]:
    n = model.dimension
    top = int(math.floor((-(n - 1) + math.sqrt((n - 1) ** 2 + 4.0 * upper * upper)) / 2.0)) + 1
    indices = []
    for l in range(0, top + 1):
        freq = sphere_frequency(n, l)
        if lower <= freq <= upper:
            if n == 2 and l > MAX_SPHERE_DEGREE:
                raise CapabilityError(f"sphere degrees above {MAX_SPHERE_DEGREE} are not supported")
            indices.extend(EigenIndex(ManifoldKind.SPHERE, chain, freq) for chain in sphere_chains(n, l))
    return indices


def enumerate_window(model: ManifoldModel, interval: SpectralWindow) -> List[EigenIndex]:
    """
    List every eigenbasis index whose frequency lies in the closed window.

    Args:
        model: Manifold whose spectrum is enumerated
        interval: Window [lower, upper]; an inverted window is empty

    Returns:
        Indices sorted by frequency, then label

    Raises:
        CapabilityError: If the manifold kind has no enumerator
    """
    lower, upper = _window_bounds(interval)
    if interval.is_empty:
        return []
    if model.kind is ManifoldKind.TORUS:
        indices = _enumerate_torus(model, lower, upper)
    elif model.kind is ManifoldKind.KLEIN_BOTTLE:
        indices = _enumerate_klein(lower, upper)
    elif model.kind is ManifoldKind.SPHERE:
        indices = _enumerate_sphere(model, lower, upper)
    else:
        raise CapabilityError(f"no enumerator for manifold kind {model.kind}")
    indices.sort(key=lambda index: index.sort_key)
    logger.debug(f"Enumerated {len(indices)} indices of {model} in {interval.describe()}")
    return indices


def make_index(model: ManifoldModel, label: Sequence[int]) -> EigenIndex:
    """Build a validated EigenIndex from a bare label."""
    label = tuple(int(v) for v in label)
    _check_label(model, label)
    if model.kind is ManifoldKind.TORUS:
        freq = float(torus_frequencies(model, np.array([label]))[0])
    elif model.kind is ManifoldKind.KLEIN_BOTTLE:
        freq = float(klein_frequencies(np.array([label]))[0])
    else:
        freq = sphere_frequency(model.dimension, label[0])
    return EigenIndex(model.kind, label, freq)


def _check_label(model: ManifoldModel, label: Tuple[int, ...]) -> None:
    if model.kind is ManifoldKind.TORUS:
        if len(label) != model.dimension:
            raise ContractError(f"torus({model.dimension}) label needs {model.dimension} entries, got {label}")
    elif model.kind is ManifoldKind.KLEIN_BOTTLE:
        if len(label) != 2:
            raise ContractError(f"klein_bottle label needs (p, q), got {label}")
        p, q = label
        if q < 0 or (q == 0 and p % 2 != 0):
            raise ContractError(f"klein_bottle label {label} is not an orbit representative")
    else:
        n = model.dimension
        if len(label) != n:
            raise ContractError(f"sphere({n}) label needs {n} entries, got {label}")
        degrees = label[:-1]
        if any(d < 0 for d in degrees) or any(degrees[i] < degrees[i + 1] for i in range(len(degrees) - 1)):
            raise ContractError(f"sphere label {label} is not a Gegenbauer chain")
        if abs(label[-1]) > degrees[-1]:
            raise ContractError(f"sphere label {label} has order exceeding its degree")


def _check_index(model: ManifoldModel, index: EigenIndex) -> None:
    if index.kind is not model.kind:
        raise ContractError(f"index of kind {index.kind.value} does not belong to {model}")
    _check_label(model, index.label)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def _legendre_columns(t: np.ndarray, s: np.ndarray, wanted: Dict[int, Iterable[int]]) -> Dict[Tuple[int, int], np.ndarray]:
    """Fully normalised associated Legendre functions P̄_l^m(cos theta).

    ``s`` is sin(theta) >= 0. The recurrence runs upward in l for each order
    m, starting from the diagonal, and keeps only the requested degrees.
    """
    results: Dict[Tuple[int, int], np.ndarray] = {}
    diagonal = np.full_like(t, math.sqrt(1.0 / (4.0 * math.pi)))
    max_m = max(wanted) if wanted else -1
    for m in range(0, max_m + 1):
        if m > 0:
            diagonal = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * (-s) * diagonal
        degrees = set(wanted.get(m, ()))
        if not degrees:
            continue
        top = max(degrees)
        prev2 = None
        prev1 = diagonal
        if m in degrees:
            results[(m, m)] = prev1
        for l in range(m, top):
            if l == m:
                current = math.sqrt(2.0 * m + 3.0) * t * prev1
            else:
                an = math.sqrt((2.0 * l + 1.0) * (2.0 * l + 3.0) / ((l + 1.0 + m) * (l + 1.0 - m)))
                bn = math.sqrt((2.0 * l + 3.0) * (l - m) * (l + m) / ((2.0 * l - 1.0) * (l + 1.0 + m) * (l + 1.0 - m)))
                current = an * t * prev1 - bn * prev2
            prev2, prev1 = prev1, current
            if l + 1 in degrees:
                results[(l + 1, m)] = current
    return results


def _real_harmonics_s2(pairs: Sequence[Tuple[int, int]], xyz: np.ndarray) -> np.ndarray:
    """Real orthonormal Y_{l,m} on S^2 at unit vectors ``xyz``; m < 0 selects sin."""
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    t = np.clip(z, -1.0, 1.0)
    s = np.sqrt(np.maximum(0.0, x * x + y * y))
    phi = np.arctan2(y, x)
    wanted: Dict[int, set] = {}
    for l, m in pairs:
        wanted.setdefault(abs(m), set()).add(l)
    table = _legendre_columns(t, s, wanted)
    out = np.empty(t.shape + (len(pairs),), dtype=float)
    for j, (l, m) in enumerate(pairs):
        base = table[(l, abs(m))]
        if m == 0:
            out[..., j] = base
        elif m > 0:
            out[..., j] = math.sqrt(2.0) * base * np.cos(m * phi)
        else:
            out[..., j] = math.sqrt(2.0) * base * np.sin(-m * phi)
    return out


@lru_cache(maxsize=4096)
def _gegenbauer_norm(k: int, upper: int, lower: int) -> float:
    """Normaliser of sin^lower(theta) C^(lower+(k-1)/2)_(upper-lower)(cos theta) on S^k."""
    mu = lower + 0.5 * (k - 1)
    d = upper - lower
    log_h = (math.log(math.pi) + (1.0 - 2.0 * mu) * math.log(2.0) + gammaln(d + 2.0 * mu)
             - gammaln(d + 1.0) - math.log(d + mu) - 2.0 * gammaln(mu))
    return math.exp(-0.5 * log_h)


def _sphere_values(model: ManifoldModel, labels: Sequence[Tuple[int, ...]], points: np.ndarray) -> np.ndarray:
    n = model.dimension
    if points.shape[-1] != n + 1:
        raise ContractError(f"sphere({n}) points need {n + 1} ambient coordinates, got {points.shape[-1]}")
    if n == 2:
        return _real_harmonics_s2([tuple(label) for label in labels], points)

    # partial radii r_k = |x_0..x_k|
    squares = np.cumsum(points * points, axis=-1)
    radii = np.sqrt(squares)
    cosines: Dict[int, np.ndarray] = {}
    sines: Dict[int, np.ndarray] = {}
    for k in range(3, n + 1):
        r_k, r_prev = radii[..., k], radii[..., k - 1]
        safe = r_k > 0
        cosines[k] = np.where(safe, points[..., k] / np.where(safe, r_k, 1.0), 1.0)
        sines[k] = np.where(safe, r_prev / np.where(safe, r_k, 1.0), 0.0)
    r2 = radii[..., 2]
    safe2 = r2 > 0
    base = np.where(safe2[..., None], points[..., :3] / np.where(safe2, r2, 1.0)[..., None], np.array([0.0, 0.0, 1.0]))

    unique_pairs = sorted({(label[-2], label[-1]) for label in labels})
    s2_values = _real_harmonics_s2(unique_pairs, base)
    s2_column = {pair: j for j, pair in enumerate(unique_pairs)}

    factors: Dict[Tuple[int, int, int], np.ndarray] = {}
    out = np.empty(points.shape[:-1] + (len(labels),), dtype=float)
    for j, label in enumerate(labels):
        value = s2_values[..., s2_column[(label[-2], label[-1])]].copy()
        degrees = label[:-1]  # l_n, ..., l_2
        for pos in range(n - 2):
            k = n - pos
            upper, lower = degrees[pos], degrees[pos + 1]
            key = (k, upper, lower)
            if key not in factors:
                alpha = lower + 0.5 * (k - 1)
                factors[key] = (_gegenbauer_norm(k, upper, lower) * sines[k] ** lower
                                * eval_gegenbauer(upper - lower, alpha, cosines[k]))
            value *= factors[key]
        out[..., j] = value
    return out


def eval_eigenfunctions(model: ManifoldModel, indices: Sequence[EigenIndex], points: np.ndarray) -> np.ndarray:
    """
    Evaluate several normalised eigenfunctions at many points.

    Args:
        model: Manifold the indices belong to
        indices: Eigenbasis indices
        points: Array of shape (..., d) in the model's coordinates

    Returns:
        Complex array of shape (..., len(indices))
    """
    points = np.asarray(points, dtype=float)
    for index in indices:
        _check_index(model, index)
    if len(indices) == 0:
        return np.zeros(points.shape[:-1] + (0,), dtype=complex)
    labels = np.array([index.label for index in indices], dtype=np.int64)

    if model.kind is ManifoldKind.TORUS:
        if points.shape[-1] != model.dimension:
            raise ContractError(f"torus points need {model.dimension} lattice coordinates")
        phase = 2.0 * math.pi * (points @ labels.T.astype(float))
        return np.exp(1j * phase) / math.sqrt(model.volume)

    if model.kind is ManifoldKind.KLEIN_BOTTLE:
        if points.shape[-1] != 2:
            raise ContractError("klein_bottle points need 2 coordinates")
        p = labels[:, 0].astype(float)
        q = labels[:, 1].astype(float)
        y1, y2 = points[..., 0:1], points[..., 1:2]
        sign = np.where(labels[:, 0] % 2 == 0, 1.0, -1.0)
        carrier = np.exp(1j * math.pi * p * y1)
        paired = (np.exp(2j * math.pi * q * y2) + sign * np.exp(-2j * math.pi * q * y2)) / math.sqrt(2.0)
        return carrier * np.where(labels[:, 1] > 0, paired, 1.0)

    if model.kind is ManifoldKind.SPHERE:
        return _sphere_values(model, [tuple(label) for label in labels], points).astype(complex)

    raise CapabilityError(f"no evaluator for manifold kind {model.kind}")


def eval_eigenfunction(model: ManifoldModel, index: EigenIndex, point: Sequence[float]) -> complex:
    """Value of one L²-normalised eigenfunction at one point."""
    values = eval_eigenfunctions(model, [index], np.asarray(point, dtype=float)[None, :])
    return complex(values[0, 0])


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def quadrature_grid(model: ManifoldModel, resolution: int) -> QuadratureGrid:
    """
    Build the tensor quadrature rule for a model.

    Flat models get the uniform N^n grid on the fundamental domain; S^n gets
    Gauss-Jacobi nodes in each cos(theta_k) and 2N uniform nodes in phi.

    Raises:
        ContractError: If resolution is below the minimum
    """
    if int(resolution) != resolution or resolution < MIN_RESOLUTION:
        raise ContractError(f"quadrature resolution must be an integer >= {MIN_RESOLUTION}, got {resolution}")
    resolution = int(resolution)

    if model.is_flat:
        nodes = np.arange(resolution, dtype=float) / resolution
        axes = tuple(nodes for _ in range(model.dimension))
        weights = [np.full(resolution, 1.0 / resolution) for _ in range(model.dimension)]
        weights[0] = weights[0] * model.volume
        return QuadratureGrid(model, resolution, axes, tuple(weights))

    if model.kind is ManifoldKind.SPHERE:
        axes, weights = [], []
        for k in range(model.dimension, 1, -1):
            alpha = 0.5 * (k - 2)
            if alpha == 0.0:
                t, w = roots_legendre(resolution)
            else:
                t, w = roots_jacobi(resolution, alpha, alpha)
            axes.append(np.asarray(t, dtype=float))
            weights.append(np.asarray(w, dtype=float))
        n_phi = 2 * resolution
        axes.append(2.0 * math.pi * np.arange(n_phi, dtype=float) / n_phi)
        weights.append(np.full(n_phi, 2.0 * math.pi / n_phi))
        return QuadratureGrid(model, resolution, tuple(axes), tuple(weights))

    raise CapabilityError(f"no quadrature for manifold kind {model.kind}")


# ---------------------------------------------------------------------------
# Geodesics and deck maps
# ---------------------------------------------------------------------------

def _complete_frame(direction: np.ndarray) -> np.ndarray:
    n = direction.shape[0]
    seed = np.column_stack([direction, np.eye(n)])
    q, _ = np.linalg.qr(seed)
    if np.dot(q[:, 0], direction) < 0:
        q = -q
    return q.T


def periodic_geodesic(model: ManifoldModel, direction: Sequence[int]) -> GeodesicSpec:
    """
    Closed geodesic through the origin of a flat model.

    Args:
        model: Torus or Klein bottle
        direction: Primitive lattice vector (torus), or (1, 0) for the glide
            axis and (0, 1) for the e2 axis (Klein bottle)

    Returns:
        GeodesicSpec with length and stabilizer data

    Raises:
        CapabilityError: If the model is not flat
        ContractError: If the direction does not close up
    """
    if not model.is_flat:
        raise CapabilityError(f"periodic geodesics are implemented on flat models only, got {model}")
    raw = np.asarray(direction, dtype=float).reshape(-1)
    if raw.shape[0] != model.dimension or not np.all(np.isfinite(raw)):
        raise ContractError(f"direction must have {model.dimension} entries, got {tuple(direction)}")
    if not np.allclose(raw, np.round(raw), atol=0.0, rtol=0.0):
        raise ContractError(f"direction {tuple(direction)} is not a lattice vector; the geodesic does not close")
    p = np.round(raw).astype(np.int64)
    if not np.any(p):
        raise ContractError("direction must be nonzero")
    if math.gcd(*[abs(int(v)) for v in p]) != 1:
        raise ContractError(f"direction {tuple(p)} is not primitive")

    n = model.dimension
    if model.kind is ManifoldKind.TORUS:
        vector = model.basis_matrix.T @ p.astype(float)
        length = float(np.linalg.norm(vector))
        unit = vector / length
        m0 = np.eye(n)
    else:
        if tuple(p) in ((1, 0), (-1, 0)):
            unit = np.array([1.0, 0.0]) * p[0]
            m0 = np.diag([1.0, -1.0])
        elif tuple(p) in ((0, 1), (0, -1)):
            unit = np.array([0.0, 1.0]) * p[1]
            m0 = np.eye(2)
        else:
            raise ContractError(f"klein_bottle closed directions are the glide axis e1 and the e2 axis, got {tuple(p)}")
        length = 1.0
    frame = _complete_frame(unit)
    translation = (length,) + (0.0,) * (n - 1)
    return GeodesicSpec(
        base_point=(0.0,) * n,
        direction=tuple(float(v) for v in unit),
        length=length,
        translation=translation,
        orthogonal_part=tuple(tuple(float(v) for v in row) for row in m0),
        lattice_direction=tuple(int(v) for v in p),
        frame=tuple(tuple(float(v) for v in row) for row in frame),
    )


def great_circle(model: ManifoldModel, plane: Tuple[int, int] = (0, 1)) -> GeodesicSpec:
    """The great circle of S^n in the span of two ambient axes."""
    if model.kind is not ManifoldKind.SPHERE:
        raise CapabilityError(f"great circles live on spheres, got {model}")
    first, second = plane
    size = model.ambient_dimension
    if first == second or not (0 <= first < size and 0 <= second < size):
        raise ContractError(f"plane axes must be two distinct ambient axes below {size}, got {plane}")
    axes = np.eye(size)
    order = [first, second] + [i for i in range(size) if i not in plane]
    return GeodesicSpec(
        base_point=tuple(axes[first]),
        direction=tuple(axes[second]),
        length=2.0 * math.pi,
        translation=(2.0 * math.pi,) + (0.0,) * (model.dimension - 1),
        orthogonal_part=tuple(tuple(row) for row in np.eye(model.dimension)),
        lattice_direction=(),
        frame=tuple(tuple(axes[i]) for i in order),
        spherical=True,
    )


def klein_alpha(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return np.stack([points[..., 0] + 1.0, -points[..., 1]], axis=-1)


def klein_beta(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    return np.stack([points[..., 0], points[..., 1] + 1.0], axis=-1)


def deck_generators(model: ManifoldModel) -> List[Callable[[np.ndarray], np.ndarray]]:
    """Generators of the deck group acting on fundamental-domain coordinates."""
    if model.kind is ManifoldKind.KLEIN_BOTTLE:
        return [klein_alpha, klein_beta]
    if model.kind is ManifoldKind.TORUS:
        def shift(axis: int) -> Callable[[np.ndarray], np.ndarray]:
            def apply(points: np.ndarray) -> np.ndarray:
                moved = np.array(points, dtype=float, copy=True)
                moved[..., axis] += 1.0
                return moved
            return apply
        return [shift(axis) for axis in range(model.dimension)]
    raise CapabilityError(f"{model} has no deck group")


def lattice_to_physical(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    """Map fundamental-domain coordinates to physical coordinates."""
    points = np.asarray(points, dtype=float)
    if model.kind is ManifoldKind.TORUS:
        return points @ model.basis_matrix
    return points


def physical_to_lattice(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if model.kind is ManifoldKind.TORUS:
        return points @ np.linalg.inv(model.basis_matrix)
    return points
