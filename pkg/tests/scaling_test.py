"""
Scaling checks across frequency: Knapp modes on the flat torus and Klein
bottle, the Euclidean Knapp kernel, and sphere beams and zonal harmonics.

These build modes up to lam ~ 2.6e4 and take a little longer than the unit
tests.
"""
import json
import logging
import math

import numpy as np
import pandas as pd
import pytest

from src.models.experiment import ExperimentConfig
from src.models.manifold import ManifoldModel
from src.models.quasimode_params import KnappParams, TubeSpec
from src.services import experiment_runner, growth, manifolds, quasimodes, spectral
from src.services.evaluators import CoefficientEvaluator

logger = logging.getLogger("scaling_test")

TORUS = ManifoldModel.unit_torus(2)
SPHERE = ManifoldModel.sphere(2)


@pytest.fixture(scope="module")
def knapp_rows():
    geodesic = manifolds.periodic_geodesic(TORUS, (1, 0))
    rows = []
    for power in range(6, 13):
        params = KnappParams(k=2 ** power)
        lam = params.frequency(geodesic.length)
        delta = params.delta(lam)
        coeffs = quasimodes.knapp_flat(TORUS, geodesic, params)
        evaluator = CoefficientEvaluator(coeffs, lam)
        tube = TubeSpec.around(geodesic, lam, 0.25)
        resolution = max(evaluator.required_resolution(), quasimodes.tube_resolution(TORUS, tube))
        grid = manifolds.quadrature_grid(TORUS, resolution)
        row = {
            "lam": lam,
            "l2": coeffs.l2_norm(),
            "budget": quasimodes.quasimode_budget(TORUS, lam, coeffs, delta),
            "norm6": spectral.lq_norm(evaluator, 6.0, grid),
            "tube": quasimodes.tube_mass(evaluator, tube, grid),
            "l1": quasimodes.l1_lower_ratio(evaluator, lam, 2, grid),
            "axis": quasimodes.pointwise_axis_profile(evaluator, geodesic, 0.25)[1].min(),
            "gradient": quasimodes.transverse_gradient_max(evaluator, tube, lam),
        }
        logger.info(f"k={params.k}: {row}")
        rows.append(row)
    return rows


def test_knapp_budget_is_bounded(knapp_rows):
    budgets = np.array([row["budget"] for row in knapp_rows])
    spread = (budgets.max() - budgets.min()) / (budgets.max() + budgets.min())
    assert spread <= 0.25


def test_knapp_l6_follows_the_flat_rate(knapp_rows):
    scaled = np.array([
        row["norm6"] / (row["lam"] ** (1.0 / 6.0) * math.log(row["lam"]) ** (-1.0 / 6.0) * row["l2"])
        for row in knapp_rows
    ])
    assert scaled.max() / scaled.min() <= 4.0


def test_knapp_l6_log_exponent(knapp_rows):
    points = [(row["lam"], row["norm6"] / row["l2"]) for row in knapp_rows]
    fit = growth.fit_log_exponent(points, growth.mu(6, 2))
    logger.info(f"fitted log exponent b={fit.b:.4f} +/- {fit.b_stderr:.4f}")
    assert abs(fit.b + 1.0 / 6.0) <= 0.15


def _band(values):
    values = np.asarray(values, dtype=float)
    assert values.min() > 0
    return values.max() / values.min()


def test_knapp_tube_mass_is_stable(knapp_rows):
    masses = np.array([row["tube"] / row["l2"] for row in knapp_rows])
    logger.info(f"tube mass fractions {masses}")
    assert (masses.max() - masses.min()) / (masses.max() + masses.min()) <= 0.3


def test_knapp_l1_stays_away_from_zero(knapp_rows):
    ratios = [row["l1"] * math.log(row["lam"]) ** (-0.25) for row in knapp_rows]
    assert _band(ratios) <= 2.0


def test_knapp_axis_amplitude_and_transverse_gradient(knapp_rows):
    axis, gradient = [], []
    for row in knapp_rows:
        spread = row["lam"] * KnappParams.delta(row["lam"])
        axis.append(row["axis"] / (row["l2"] * spread ** 0.25))
        gradient.append(row["gradient"] / (row["l2"] * spread ** 0.75))
    logger.info(f"axis ratios {axis}, gradient ratios {gradient}")
    assert _band(axis) <= 2.0
    assert _band(gradient) <= 3.0


@pytest.fixture(scope="module")
def klein_rows():
    klein = ManifoldModel.klein_bottle()
    geodesic = manifolds.periodic_geodesic(klein, (1, 0))
    rows = []
    for power in range(6, 11):
        params = KnappParams(k=2 ** power)
        lam = params.frequency(geodesic.length)
        coeffs = quasimodes.knapp_flat(klein, geodesic, params)
        evaluator = CoefficientEvaluator(coeffs, lam)
        grid = manifolds.quadrature_grid(klein, evaluator.required_resolution())
        rows.append({
            "lam": lam,
            "l2": coeffs.l2_norm(),
            "budget": quasimodes.quasimode_budget(klein, lam, coeffs, params.delta(lam)),
            "norm6": spectral.lq_norm(evaluator, 6.0, grid),
        })
    logger.info(f"Klein rows {rows}")
    return rows


def test_klein_knapp_budget_matches_the_torus_behaviour(klein_rows):
    budgets = np.array([row["budget"] for row in klein_rows])
    assert (budgets.max() - budgets.min()) / (budgets.max() + budgets.min()) <= 0.25


def test_klein_knapp_l6_follows_the_flat_rate(klein_rows):
    scaled = [row["norm6"] / (row["lam"] ** (1.0 / 6.0) * math.log(row["lam"]) ** (-1.0 / 6.0) * row["l2"])
              for row in klein_rows]
    assert _band(scaled) <= 4.0


def _transverse_envelope(lam, params):
    delta = KnappParams.delta(lam)
    origin = abs(quasimodes.knapp_kernel_rn([0.0, 0.0], lam, delta, params))
    values = [abs(quasimodes.knapp_kernel_rn([0.0, z], lam, delta, params)) for z in np.linspace(1.0, 3.0, 9)]
    return max(values) / origin


def test_kernel_transverse_decay_sharpens_with_frequency():
    params = KnappParams(k=2)
    envelopes = [_transverse_envelope(math.e ** power, params) for power in (4, 5, 6)]
    logger.info(f"transverse envelopes {envelopes}")
    assert envelopes[0] > envelopes[1] > envelopes[2]


def test_kernel_vanishes_far_along_the_axis():
    params = KnappParams(k=2)
    lam = math.e ** 6
    delta = KnappParams.delta(lam)
    T = params.smoothing_time(lam)
    origin = abs(quasimodes.knapp_kernel_rn([0.0, 0.0], lam, delta, params))
    far = abs(quasimodes.knapp_kernel_rn([4.0 * T, 0.0], lam, delta, params))
    assert far / origin <= 1e-6


@pytest.mark.parametrize("l", [40, 80])
def test_beam_mass_sits_in_a_shrinking_tube(l):
    beam = quasimodes.gaussian_beam(2, l)
    tube = TubeSpec(manifolds.great_circle(SPHERE), None, beam.frequency ** -0.4)
    resolution = max(beam.required_resolution(), quasimodes.tube_resolution(SPHERE, tube))
    mass = quasimodes.tube_mass(beam, tube, manifolds.quadrature_grid(SPHERE, resolution))
    assert mass >= 0.97


def test_beam_norm_ratios_are_bounded():
    l1_ratios, l6_ratios = [], []
    for l in (10, 20, 40, 80):
        beam = quasimodes.gaussian_beam(2, l)
        grid = manifolds.quadrature_grid(SPHERE, 3 * l + 2)
        lam = beam.frequency
        l1_ratios.append(quasimodes.l1_lower_ratio(beam, lam, 2, grid))
        l6_ratios.append(spectral.lq_norm(beam, 6.0, grid) / lam ** (1.0 / 6.0))
    logger.info(f"L1 ratios {l1_ratios}, L6 ratios {l6_ratios}")
    assert max(l1_ratios) / min(l1_ratios) <= 1.5
    assert max(l6_ratios) / min(l6_ratios) <= 2.0


SPHERE_DEGREES = [10, 20, 40, 60, 80, 160]


@pytest.fixture(scope="module")
def sphere_scan(tmp_path_factory):
    root = tmp_path_factory.mktemp("sphere_scan")
    config = ExperimentConfig.from_dict({
        "schema_version": 1,
        "experiment": "beam-scan",
        "manifold": {"kind": "sphere", "dimension": 2},
        "parameters": {"l": SPHERE_DEGREES, "q": [6, "inf"]},
        "output": {"directory": str(root / "scan")},
    })
    experiment_runner.run(config, 1, root / "cache")
    return root, pd.read_csv(root / "scan" / "beam_scan.csv")


@pytest.mark.parametrize("family, column, power", [
    ("zonal", "norm_q6", 1.0 / 6.0),
    ("zonal", "norm_qinf", 0.5),
    ("beam", "norm_q6", 1.0 / 6.0),
    ("beam", "norm_qinf", 0.25),
])
def test_sphere_norms_follow_their_rates(sphere_scan, family, column, power):
    _, table = sphere_scan
    rows = table[(table["family"] == family) & (table["l"] <= 60)]
    assert sorted(rows["l"]) == [10, 20, 40, 60]
    ratios = rows[column] / (rows["lam"] ** power * rows["l2_norm"])
    logger.info(f"{family} {column} ratios {list(ratios)}")
    assert _band(ratios) <= 2.5


@pytest.mark.parametrize("family", ["beam", "zonal"])
def test_sphere_families_classify_as_positive(sphere_scan, family):
    root, _ = sphere_scan
    out = root / f"classify_{family}"
    config = ExperimentConfig.from_dict({
        "schema_version": 1,
        "experiment": "classify",
        "manifold": {"kind": "sphere", "dimension": 2},
        "parameters": {
            "input": str(root / "scan" / "beam_scan.csv"),
            "column": "norm_q6",
            "normalize_by": "l2_norm",
            "where": {"family": family},
            "q": 6,
        },
        "output": {"directory": str(out)},
    })
    experiment_runner.run(config, 1, root / "cache")
    with open(out / "fit_report.json") as f:
        report = json.load(f)
    logger.info(f"{family}: b={report['b']:.4f} +/- {report['b_stderr']:.4f}")
    assert len(report["points"]) == len(SPHERE_DEGREES)
    assert report["verdict"] == "positive"
    assert report["confidence"] > 0
