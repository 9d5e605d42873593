"""
Tests for the explicit quasimodes: flat Knapp modes, the Euclidean Knapp
kernel, sphere beams and zonal functions, tube masses and JSON records.
"""
import logging
import math

import numpy as np
import pytest

from src.errors import CapabilityError, ContractError, DomainError, ResolutionError
from src.models.manifold import ManifoldModel
from src.models.quasimode_params import KnappParams, TubeSpec
from src.models.spectral_types import CoefficientVector, SpectralWindow
from src.services import manifolds, quasimodes, spectral
from src.services.evaluators import CoefficientEvaluator, QuasimodeEvaluator

logger = logging.getLogger("quasimodes_test")

TORUS = ManifoldModel.unit_torus(2)
KLEIN = ManifoldModel.klein_bottle()
SPHERE = ManifoldModel.sphere(2)


class ShiftedEvaluator(QuasimodeEvaluator):
    """Adds a small non-periodic term to another evaluator."""

    def __init__(self, inner: QuasimodeEvaluator, size: float):
        super().__init__(inner.model, inner.frequency)
        self.inner = inner
        self.size = size

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return self.inner.evaluate(points) + self.size * np.exp(1j * math.pi * points[..., 0])


@pytest.fixture(scope="module")
def torus_mode():
    geodesic = manifolds.periodic_geodesic(TORUS, (1, 0))
    params = KnappParams(k=64)
    coeffs = quasimodes.knapp_flat(TORUS, geodesic, params)
    return geodesic, params, coeffs


@pytest.fixture(scope="module")
def klein_mode():
    geodesic = manifolds.periodic_geodesic(KLEIN, (1, 0))
    params = KnappParams(k=64)
    coeffs = quasimodes.knapp_flat(KLEIN, geodesic, params)
    return geodesic, params, coeffs


def test_knapp_params_validation():
    with pytest.raises(DomainError):
        KnappParams(k=2).frequency(2.0)
    with pytest.raises(ContractError):
        KnappParams(k=1)
    with pytest.raises(ContractError):
        KnappParams(k=8, c0=1.5)
    assert KnappParams(k=8).frequency(1.0) == pytest.approx(16 * math.pi)


@pytest.mark.parametrize("mode_name", ["torus_mode", "klein_mode"])
def test_knapp_parseval(mode_name, request):
    geodesic, params, coeffs = request.getfixturevalue(mode_name)
    assert len(coeffs) > 0
    evaluator = CoefficientEvaluator(coeffs, params.frequency(geodesic.length))
    grid = manifolds.quadrature_grid(coeffs.model, evaluator.required_resolution())
    from_grid = spectral.l2_from_grid(evaluator, grid)
    logger.info(f"{coeffs.model}: {len(coeffs)} coefficients, l2 {coeffs.l2_norm():.6g} vs grid {from_grid:.6g}")
    assert abs(from_grid - coeffs.l2_norm()) <= 1e-6 * coeffs.l2_norm()


@pytest.mark.parametrize("mode_name", ["torus_mode", "klein_mode"])
def test_knapp_mode_is_deck_invariant(mode_name, request):
    geodesic, params, coeffs = request.getfixturevalue(mode_name)
    evaluator = CoefficientEvaluator(coeffs)
    assert quasimodes.deck_invariance_check(coeffs.model, evaluator, samples=128, seed=3) <= 1e-8


def test_deck_check_catches_a_non_periodic_term(torus_mode):
    _, _, coeffs = torus_mode
    broken = ShiftedEvaluator(CoefficientEvaluator(coeffs), 1e-2)
    assert quasimodes.deck_invariance_check(TORUS, broken, samples=64, seed=3) > 1e-8


def test_knapp_mode_concentrates_near_its_frequency(torus_mode):
    geodesic, params, coeffs = torus_mode
    lam = params.frequency(geodesic.length)
    T = params.smoothing_time(lam)
    values = [quasimodes.spectral_localization(coeffs, lam, T, K) for K in (0.5, 2.0, 20.0)]
    assert values == sorted(values)
    assert values[-1] >= 0.95


def test_knapp_mode_on_a_sphere_is_refused():
    circle = manifolds.great_circle(SPHERE)
    with pytest.raises(CapabilityError):
        quasimodes.knapp_flat(SPHERE, circle, KnappParams(k=64))
    with pytest.raises(CapabilityError):
        quasimodes.deck_invariance_check(SPHERE, quasimodes.gaussian_beam(2, 4))


def test_knapp_mode_needs_its_own_geodesic():
    geodesic = manifolds.periodic_geodesic(ManifoldModel.unit_torus(3), (1, 0, 0))
    with pytest.raises(ContractError):
        quasimodes.knapp_flat(TORUS, geodesic, KnappParams(k=64))


def test_defect_and_budget_of_an_eigenfunction():
    index = manifolds.make_index(TORUS, (3, 4))
    coeffs = CoefficientVector(TORUS, {index: 1.0 + 0j})
    lam = index.frequency
    assert quasimodes.defect(TORUS, lam, coeffs) == 0.0
    assert quasimodes.quasimode_budget(TORUS, lam, coeffs, 0.5) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        quasimodes.quasimode_budget(TORUS, lam, coeffs, 0.0)


def test_kernel_at_the_origin_is_real_and_dominant():
    lam = 50.0
    delta = KnappParams.delta(lam)
    params = KnappParams(k=2)
    origin = quasimodes.knapp_kernel_rn([0.0, 0.0], lam, delta, params)
    assert origin.real > 0
    assert abs(origin.imag) <= 1e-10 * abs(origin)
    away = quasimodes.knapp_kernel_rn([0.0, 1.0], lam, delta, params)
    assert abs(away) < abs(origin)
    with pytest.raises(DomainError):
        quasimodes.knapp_kernel_rn([0.0, 0.0], 2.0, 0.5, params)


def test_beam_is_normalised():
    beam = quasimodes.gaussian_beam(2, 10)
    grid = manifolds.quadrature_grid(SPHERE, beam.required_resolution())
    assert spectral.lq_norm(beam, 2.0, grid) == pytest.approx(1.0, rel=1e-10)
    assert beam.frequency == pytest.approx(math.sqrt(110.0))


def test_zonal_peak_is_the_pole_value():
    zonal = quasimodes.zonal(2, 5)
    grid = manifolds.quadrature_grid(SPHERE, zonal.required_resolution())
    assert spectral.lq_norm(zonal, math.inf, grid) == pytest.approx(math.sqrt(11.0 / (4.0 * math.pi)), rel=1e-12)
    with pytest.raises(CapabilityError):
        quasimodes.zonal(3, 5)


@pytest.mark.parametrize("l", [10, 40, 160])
def test_zonal_sup_reaches_the_pole_on_a_coarse_grid(l):
    zonal = quasimodes.zonal(2, l)
    grid = manifolds.quadrature_grid(SPHERE, zonal.required_resolution())
    peak = math.sqrt((2 * l + 1) / (4.0 * math.pi))
    assert spectral.lq_norm(zonal, math.inf, grid) == pytest.approx(peak, rel=1e-9)


def test_zonal_projects_onto_its_own_harmonic():
    zonal = quasimodes.zonal(2, 5)
    window = SpectralWindow.between(math.sqrt(30.0) - 0.01, math.sqrt(30.0) + 0.01)
    coeffs = zonal.to_coefficients(window, manifolds.quadrature_grid(SPHERE, 8))
    target = manifolds.make_index(SPHERE, (5, 0))
    assert abs(coeffs.coefficients[target] - 1.0) <= 1e-10
    others = [abs(c) for index, c in coeffs.coefficients.items() if index != target]
    assert sum(others) <= 1e-10


def test_beam_tube_needs_a_fine_grid():
    beam = quasimodes.gaussian_beam(2, 20)
    tube = TubeSpec(manifolds.great_circle(SPHERE), None, 0.05)
    with pytest.raises(ResolutionError):
        quasimodes.tube_mass(beam, tube, manifolds.quadrature_grid(SPHERE, 22))
    fine = manifolds.quadrature_grid(SPHERE, quasimodes.tube_resolution(SPHERE, tube))
    assert 0.0 < quasimodes.tube_mass(beam, tube, fine) <= 1.0 + 1e-12


def test_knapp_tube_mass(torus_mode):
    geodesic, params, coeffs = torus_mode
    lam = params.frequency(geodesic.length)
    evaluator = CoefficientEvaluator(coeffs, lam)
    tube = TubeSpec.around(geodesic, lam, None)
    wider = TubeSpec(geodesic, None, 2.0 * tube.radius)
    resolution = max(evaluator.required_resolution(), quasimodes.tube_resolution(TORUS, tube))
    grid = manifolds.quadrature_grid(TORUS, resolution)
    inner = quasimodes.tube_mass(evaluator, tube, grid)
    outer = quasimodes.tube_mass(evaluator, wider, grid)
    assert 0.0 < inner <= outer <= coeffs.l2_norm() * (1.0 + 1e-9)


def test_tube_volume():
    tube = TubeSpec(manifolds.periodic_geodesic(TORUS, (1, 0)), 0.25, 0.1)
    assert tube.expected_volume(2) == pytest.approx(0.1)
    with pytest.raises(ContractError):
        TubeSpec(tube.geodesic, 0.25, 0.0)


def test_record_roundtrip(tmp_path, torus_mode):
    geodesic, params, coeffs = torus_mode
    builder = quasimodes.QuasimodeRecordBuilder()
    record = builder.create_record(TORUS, "knapp", params.describe(), params.frequency(geodesic.length), coeffs)
    path = builder.write(record, tmp_path / "records" / "knapp_k64.json")
    loaded, restored = builder.load(path)
    assert loaded["type"] == "knapp"
    assert restored == coeffs


def test_invalid_record_is_refused(tmp_path):
    builder = quasimodes.QuasimodeRecordBuilder()
    assert not builder.validate_record({"type": "knapp"})
    with pytest.raises(ContractError):
        builder.write({"type": "knapp"}, tmp_path / "bad.json")
    (tmp_path / "other.json").write_text('{"coeffs": []}')
    with pytest.raises(ContractError):
        builder.load(tmp_path / "other.json")
