"""
Tests for spectral windows, projectors and the L^2 -> L^q norm measurements.
"""
import logging
import math

import numpy as np
import pytest

from src.errors import ContractError, DomainError, EmptyWindowError, ResolutionError, ValidationError
from src.models.manifold import ManifoldModel
from src.models.spectral_types import CoefficientVector, SpectralWindow, WidthPolicy
from src.services import manifolds, spectral
from src.services.evaluators import CoefficientEvaluator
from src.services.profiles import WindowProfile

logger = logging.getLogger("spectral_test")

TORUS = ManifoldModel.unit_torus(2)


def _random_vector(model, window, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    indices = manifolds.enumerate_window(model, window)
    values = rng.normal(size=len(indices)) + 1j * rng.normal(size=len(indices))
    return CoefficientVector(model, dict(zip(indices, values)))


def _vector(model, labels):
    return CoefficientVector(model, {manifolds.make_index(model, label): 1.0 + 0j for label in labels})


def test_window_widths():
    assert spectral.window_width(10.0, WidthPolicy.UNIT) == 1.0
    assert spectral.window_width(math.e ** 3, WidthPolicy.LOG) == pytest.approx(1.0 / 3.0)
    assert spectral.window_width(10.0, WidthPolicy.CUSTOM, lambda x: 0.5) == 0.5
    window = spectral.policy_window(100.0, WidthPolicy.LOG)
    assert window.upper == pytest.approx(100.0 + 1.0 / math.log(100.0))


def test_window_width_errors():
    with pytest.raises(DomainError):
        spectral.window_width(2.0, WidthPolicy.LOG)
    with pytest.raises(DomainError):
        spectral.window_width(-1.0, WidthPolicy.UNIT)
    with pytest.raises(ValidationError):
        spectral.window_width(10.0, WidthPolicy.CUSTOM)
    with pytest.raises(ValidationError):
        spectral.window_width(10.0, WidthPolicy.CUSTOM, lambda x: 2.0)
    # lam * delta(lam) = 1/lam decreases
    with pytest.raises(ValidationError):
        spectral.window_width(10.0, WidthPolicy.CUSTOM, lambda x: 1.0 / x ** 2, samples=[20.0])


def test_project_keeps_window_modes():
    coeffs = _vector(TORUS, [(1, 0), (0, 1), (1, 1), (0, 0)])
    window = SpectralWindow.between(2 * math.pi, 2 * math.pi + 0.1)
    kept = spectral.project(TORUS, window, coeffs)
    assert sorted(index.label for index in kept.coefficients) == [(0, 1), (1, 0)]


def test_projector_is_idempotent_self_adjoint_and_commuting():
    base = SpectralWindow.between(0.0, 2 * math.pi * 4)
    f = _random_vector(TORUS, base, 1)
    g = _random_vector(TORUS, base, 2)
    first = SpectralWindow.between(5.0, 15.0)
    second = SpectralWindow.between(10.0, 20.0)

    once = spectral.project(TORUS, first, f)
    assert spectral.project(TORUS, first, once) == once
    assert once.inner(g) == pytest.approx(f.inner(spectral.project(TORUS, first, g)), abs=1e-12)
    assert (spectral.project(TORUS, first, spectral.project(TORUS, second, f))
            == spectral.project(TORUS, second, spectral.project(TORUS, first, f)))


def test_project_rejects_foreign_coefficients():
    coeffs = _vector(ManifoldModel.klein_bottle(), [(2, 0)])
    with pytest.raises(ContractError):
        spectral.project(TORUS, SpectralWindow.between(0.0, 10.0), coeffs)


def test_smooth_project_leaves_the_center_mode():
    coeffs = _vector(TORUS, [(1, 0), (3, 0)])
    smoothed = spectral.smooth_project(TORUS, WindowProfile(), 2.0, 2 * math.pi, coeffs)
    center = manifolds.make_index(TORUS, (1, 0))
    assert abs(smoothed.coefficients[center] - 1.0) <= 1e-12
    with pytest.raises(ContractError):
        spectral.smooth_project(TORUS, WindowProfile(), 0.5, 2 * math.pi, coeffs)


def test_single_eigenfunction_norms():
    evaluator = CoefficientEvaluator(_vector(TORUS, [(3, 4)]))
    grid = manifolds.quadrature_grid(TORUS, evaluator.required_resolution())
    for q in (2.0, 4.0, 6.0, math.inf):
        assert spectral.lq_norm(evaluator, q, grid) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(DomainError):
        spectral.lq_norm(evaluator, 1.0, grid)


def test_coarse_grid_raises_resolution_error():
    evaluator = CoefficientEvaluator(_vector(TORUS, [(10, 0), (-10, 0)]))
    assert evaluator.required_resolution() == 40
    with pytest.raises(ResolutionError) as excinfo:
        spectral.lq_norm(evaluator, 6.0, manifolds.quadrature_grid(TORUS, 16))
    assert excinfo.value.required_resolution == 40


def test_lq_norms_increase_with_q():
    coeffs = _random_vector(TORUS, SpectralWindow.between(0.0, 2 * math.pi * 3), 3)
    evaluator = CoefficientEvaluator(coeffs)
    grid = manifolds.quadrature_grid(TORUS, evaluator.required_resolution())
    norms = [spectral.lq_norm(evaluator, q, grid) for q in (2.0, 4.0, 6.0, math.inf)]
    assert norms[0] == pytest.approx(coeffs.l2_norm(), rel=1e-12)
    assert norms == sorted(norms)


def test_torus_opnorm_is_root_of_the_count():
    rng = np.random.Generator(np.random.Philox(11))
    for lam in rng.uniform(5.0, 200.0, size=50):
        window = SpectralWindow.at(float(lam), WidthPolicy.UNIT)
        count = len(manifolds.enumerate_window(TORUS, window))
        assert spectral.opnorm_2_to_inf(TORUS, window) == pytest.approx(math.sqrt(count), abs=1e-12)


def test_empty_window_has_zero_norm():
    window = SpectralWindow.between(0.5, 1.0)
    assert spectral.opnorm_2_to_inf(TORUS, window) == 0.0
    assert spectral.kernel_maximizer(TORUS, window) == (0.0, None)


def test_sphere_opnorm_matches_addition_theorem():
    sphere = ManifoldModel.sphere(2)
    window = SpectralWindow.between(3.4, 3.5)
    assert spectral.opnorm_2_to_inf(sphere, window) == pytest.approx(math.sqrt(7.0 / (4.0 * math.pi)), rel=1e-8)


def test_coherent_candidate_attains_the_torus_norm():
    window = SpectralWindow.between(2 * math.pi * 5, 2 * math.pi * 5 + 1.0)
    exact, point = spectral.kernel_maximizer(TORUS, window)
    assert exact == pytest.approx(math.sqrt(20.0))
    candidate = spectral.coherent_candidate(TORUS, window, point)
    assert candidate.l2_norm() == pytest.approx(1.0)
    evaluator = CoefficientEvaluator(candidate)
    grid = manifolds.quadrature_grid(TORUS, evaluator.required_resolution())
    bound = spectral.opnorm_lower_bound(TORUS, window, math.inf, [candidate], grid)
    assert bound == pytest.approx(exact, rel=1e-6)


def test_single_eigenfunction_lower_bound_is_one():
    window = SpectralWindow.between(10 * math.pi - 0.1, 10 * math.pi + 0.1)
    candidate = _vector(TORUS, [(3, 4)])
    grid = manifolds.quadrature_grid(TORUS, 16)
    assert spectral.opnorm_lower_bound(TORUS, window, math.inf, [candidate], grid) == pytest.approx(1.0)
    assert spectral.opnorm_lower_bound(TORUS, window, 6.0, [candidate], grid) == pytest.approx(1.0)


def test_lower_bound_errors():
    window = SpectralWindow.between(10 * math.pi - 0.1, 10 * math.pi + 0.1)
    grid = manifolds.quadrature_grid(TORUS, 16)
    with pytest.raises(ContractError):
        spectral.opnorm_lower_bound(TORUS, window, 6.0, [], grid)
    with pytest.raises(EmptyWindowError):
        spectral.opnorm_lower_bound(TORUS, window, 6.0, [_vector(TORUS, [(1, 0)])], grid)


def test_sphere_eigenfunctions_stay_below_the_exact_norm():
    sphere = ManifoldModel.sphere(2)
    window = SpectralWindow.between(4.4, 4.5)
    exact = spectral.opnorm_2_to_inf(sphere, window)
    indices = manifolds.enumerate_window(sphere, window)
    grid = manifolds.quadrature_grid(sphere, 10)
    for index in indices:
        candidate = CoefficientVector(sphere, {index: 1.0 + 0j})
        bound = spectral.opnorm_lower_bound(sphere, window, math.inf, [candidate], grid)
        assert bound <= exact + 1e-12


def test_nested_klein_windows_have_nested_norms():
    klein = ManifoldModel.klein_bottle()
    wide = SpectralWindow.at(50.0, WidthPolicy.UNIT)
    narrow = SpectralWindow.at(50.0, WidthPolicy.LOG)
    assert spectral.opnorm_2_to_inf(klein, narrow) <= spectral.opnorm_2_to_inf(klein, wide) + 1e-9


@pytest.mark.parametrize("lam", [30.0, 120.0, 400.0])
def test_unit_window_is_covered_by_log_windows(lam):
    width = 1.0 / math.log(lam)
    pieces = math.ceil(math.log(lam)) + 1
    whole = spectral.opnorm_2_to_inf(TORUS, SpectralWindow.at(lam, WidthPolicy.UNIT))
    parts = [spectral.opnorm_2_to_inf(TORUS, SpectralWindow.between(lam + j * width, lam + (j + 1) * width))
             for j in range(pieces)]
    assert whole <= math.sqrt(pieces) * max(parts) + 1e-12
