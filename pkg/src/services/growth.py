"""Exponent law, log-corrected growth fits and the curvature classifier."""
from __future__ import annotations

import logging
import math
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConditioningError, ContractError, DomainError, RangeError
from src.models.growth_types import CurvatureSign, CurvatureVerdict, ExponentLaw, FitMode, GrowthFit

logger = logging.getLogger(__name__)

FREE_FIT_CONDITION_WARNING = 1e6
FREE_FIT_MAX_STDERR = 1e-2
NOISE_LEVEL = 0.05


def critical_exponent(n: int) -> float:
    """q_c = 2(n+1)/(n-1)."""
    if int(n) != n or n < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {n}")
    return 2.0 * (n + 1) / (n - 1)


def mu(q: float, n: int) -> float:
    """
    Universal growth exponent of the unit-window projector in L^q.

    Raises:
        DomainError: If q <= 2 or n < 2
    """
    qc = critical_exponent(n)
    q = float(q)
    if not q > 2.0:
        raise DomainError(f"exponent q must exceed 2, got {q}")
    if math.isinf(q):
        return 0.5 * (n - 1)
    if q <= qc:
        return 0.5 * (n - 1) * (0.5 - 1.0 / q)
    return n * (0.5 - 1.0 / q) - 0.5


def exponent_law(q: float, n: int) -> ExponentLaw:
    return ExponentLaw(n=n, q=float(q), critical=critical_exponent(n), mu=mu(q, n))


def theoretical_log_exponent(q: float, n: int, sign: CurvatureSign) -> float:
    """
    Power of log(lam) in the growth of log-window quasimode norms.

    Raises:
        RangeError: If q > q_c
    """
    qc = critical_exponent(n)
    value = mu(q, n)
    if q > qc:
        raise RangeError(
            f"q={q} exceeds q_c={qc:g}: supercritical exponents do not distinguish between the two geometries")
    if sign is CurvatureSign.POSITIVE:
        return 0.0
    if sign is CurvatureSign.ZERO:
        return -value
    if sign is CurvatureSign.NEGATIVE:
        return -0.5
    raise ContractError(f"no theoretical exponent for {sign.value}")


def _prepare(points: Sequence[Tuple[float, float]], minimum: int, span: float) -> Tuple[np.ndarray, np.ndarray]:
    data = np.asarray(points, dtype=float).reshape(-1, 2)
    if data.shape[0] < minimum:
        raise ContractError(f"fit needs at least {minimum} points, got {data.shape[0]}")
    lam, values = data[:, 0], data[:, 1]
    if not np.all(np.isfinite(data)):
        raise DomainError("fit points must be finite")
    if np.any(lam <= math.e ** 2):
        raise DomainError(f"fit needs lam > e^2, got min {lam.min():.6g}")
    if np.any(values <= 0):
        raise DomainError("fit needs positive values")
    ratio = lam.max() / lam.min()
    if ratio == 1.0:
        raise ConditioningError("all lam values coincide; the design is degenerate")
    if ratio < span:
        raise ContractError(f"lam values span a factor {ratio:.4g}, need at least {span:g}")
    return lam, values


def _stderr(design: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    dof = design.shape[0] - design.shape[1]
    variance = float(residuals @ residuals) / dof if dof > 0 else 0.0
    return np.sqrt(np.maximum(np.diag(variance * np.linalg.inv(design.T @ design)), 0.0))


def fit_log_exponent(points: Sequence[Tuple[float, float]], a_fixed: float) -> GrowthFit:
    """
    Fit log N - a_fixed log lam = log C + b log log lam.

    Args:
        points: (lam, N) pairs, at least 4, lam > e^2, spanning a factor >= 8
        a_fixed: Imposed power of lam

    Returns:
        GrowthFit in a-fixed mode

    Raises:
        ConditioningError: If the design is degenerate
    """
    lam, values = _prepare(points, 4, 8.0)
    loglog = np.log(np.log(lam))
    design = np.column_stack([np.ones_like(loglog), loglog])
    target = np.log(values) - a_fixed * np.log(lam)
    solution, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 2:
        raise ConditioningError("log log lam is constant over the sample")
    residuals = target - design @ solution
    errors = _stderr(design, residuals)
    return GrowthFit(
        a=float(a_fixed),
        b=float(solution[1]),
        log_c=float(solution[0]),
        residual=float(np.sqrt(np.mean(residuals ** 2))),
        b_stderr=float(errors[1]),
        lam_range=(float(lam.min()), float(lam.max())),
        mode=FitMode.A_FIXED,
        a_fixed=float(a_fixed),
        condition_number=float(np.linalg.cond(design)),
        points=[(float(x), float(y)) for x, y in zip(lam, values)],
    )


def fit_free(points: Sequence[Tuple[float, float]]) -> GrowthFit:
    """
    Joint fit of log N = log C + a log lam + b log log lam.

    Raises:
        ContractError: With fewer than 6 points or a span below 64
        ConditioningError: If b cannot be identified to 1e-2
    """
    lam, values = _prepare(points, 6, 64.0)
    log_lam = np.log(lam)
    design = np.column_stack([np.ones_like(log_lam), log_lam, np.log(log_lam)])
    condition = float(np.linalg.cond(design))
    if condition > FREE_FIT_CONDITION_WARNING:
        logger.warning(f"Free growth fit design is ill-conditioned (condition number {condition:.3g})")
    target = np.log(values)
    solution, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 3:
        raise ConditioningError("log lam and log log lam are collinear over the sample")
    residuals = target - design @ solution
    errors = _stderr(design, residuals)
    if errors[2] > FREE_FIT_MAX_STDERR:
        raise ConditioningError(f"log exponent is unidentifiable: standard error {errors[2]:.3g} > {FREE_FIT_MAX_STDERR}")
    return GrowthFit(
        a=float(solution[1]),
        b=float(solution[2]),
        log_c=float(solution[0]),
        residual=float(np.sqrt(np.mean(residuals ** 2))),
        b_stderr=float(errors[2]),
        lam_range=(float(lam.min()), float(lam.max())),
        mode=FitMode.FREE,
        a_stderr=float(errors[1]),
        condition_number=condition,
        points=[(float(x), float(y)) for x, y in zip(lam, values)],
    )


def classify(q: float, n: int, points: Sequence[Tuple[float, float]]) -> CurvatureVerdict:
    """
    Curvature sign whose log exponent is nearest the a-fixed fit.

    The verdict is AMBIGUOUS when the two nearest theoretical values both lie
    within twice the fitted standard error of b.

    Raises:
        RangeError: If q > q_c
    """
    theoretical = {sign: theoretical_log_exponent(q, n, sign)
                   for sign in (CurvatureSign.POSITIVE, CurvatureSign.ZERO, CurvatureSign.NEGATIVE)}
    fit = fit_log_exponent(points, mu(q, n))
    distances = {sign: abs(fit.b - value) for sign, value in theoretical.items()}
    ranked = sorted(distances, key=distances.get)
    nearest, runner_up = ranked[0], ranked[1]
    confidence = distances[runner_up] - distances[nearest]
    sign = nearest
    if distances[runner_up] <= 2.0 * fit.b_stderr:
        sign = CurvatureSign.AMBIGUOUS
        logger.info(f"Classification ambiguous: b={fit.b:.4f} +/- {fit.b_stderr:.4f}")
    return CurvatureVerdict(sign=sign, b=fit.b, distances=distances, confidence=confidence, fit=fit, nearest=nearest)


def synthetic_growth(lams: Sequence[float], a: float, b: float, constant: float = 1.0,
                     noise: float = 0.0, rng: Optional[np.random.Generator] = None) -> list:
    """(lam, C lam^a (log lam)^b (1 + U(-noise, noise))) samples."""
    lams = np.asarray(lams, dtype=float)
    values = constant * lams ** a * np.log(lams) ** b
    if noise > 0:
        if rng is None:
            raise ContractError("noisy samples need a generator")
        values = values * (1.0 + rng.uniform(-noise, noise, size=lams.shape))
    return [(float(x), float(y)) for x, y in zip(lams, values)]


def fit_report(q: float, n: int, fit: GrowthFit, verdict: Optional[CurvatureVerdict] = None) -> Dict[str, Any]:
    """JSON-ready report of a fit and, when given, its verdict."""
    report: Dict[str, Any] = {
        "q": q if math.isfinite(q) else "inf",
        "n": n,
        "mode": fit.mode.value,
        "a_fixed": fit.a_fixed,
        "a": fit.a,
        "b": fit.b,
        "b_stderr": fit.b_stderr,
        "log_c": fit.log_c,
        "residual": fit.residual,
        "lam_range": list(fit.lam_range),
        "condition_number": fit.condition_number,
        "points": [list(p) for p in fit.points],
    }
    if verdict is not None:
        report["verdict"] = verdict.sign.value
        report["nearest"] = verdict.nearest.value
        report["confidence"] = verdict.confidence
        report["distances"] = {sign.value: d for sign, d in verdict.distances.items()}
    return report
