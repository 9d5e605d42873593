"""
Tests for the smooth profiles: the eta and rho transforms, the cutoffs and
the on-disk profile sidecars.
"""
import logging
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from src.errors import ContractError
from src.services import profiles
from src.services.profiles import EtaProfile, WindowProfile

logger = logging.getLogger("profiles_test")


def test_window_profile_is_one_at_zero():
    rho = WindowProfile()
    assert abs(rho(np.array([0.0]))[0] - 1.0) <= 1e-12


def test_window_profile_decays():
    rho = WindowProfile()
    constant = rho.decay_constant()
    logger.info(f"rho decay constant (order 4): {constant:.4g}")
    assert math.isfinite(constant)
    assert abs(rho(np.array([50.0]))[0]) * 51.0 ** 4 <= constant
    s = np.linspace(0.0, 40.0, 81)
    assert np.allclose(rho.envelope(s), rho.envelope(-s))


def test_eta_is_even_and_normalised():
    eta = EtaProfile(0.25)
    s = np.linspace(0.0, 60.0, 121)
    assert eta(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(eta(s), eta(-s))
    assert np.all(np.abs(eta(s)) <= 1.0 + 1e-6)


def test_eta_transform_has_unit_mass_and_support():
    eta = EtaProfile(0.25)
    t = np.linspace(-0.25, 0.25, 20001)
    assert trapezoid(eta.transform(t), t) == pytest.approx(1.0, abs=1e-6)
    assert eta.transform(np.array([0.3]))[0] == 0.0
    assert np.all(eta.transform(t) >= 0.0)


def test_eta_cutoff_is_finite():
    eta = EtaProfile(0.25)
    cutoff = eta.cutoff()
    assert 0.0 < cutoff <= eta.table.s_max
    assert abs(eta(np.array([cutoff * 1.01]))[0]) < 1e-15


def test_profile_parameter_errors():
    with pytest.raises(ContractError):
        EtaProfile(1.5)
    with pytest.raises(ContractError):
        WindowProfile(delta=-1.0)
    with pytest.raises(ContractError):
        profiles.default_smoothing_time(1.0)


def test_cutoff_values():
    assert profiles.angular_cutoff(np.array([0.4]))[0] == 1.0
    assert profiles.angular_cutoff(np.array([-0.5]))[0] == 1.0
    assert profiles.angular_cutoff(np.array([0.98]))[0] == 0.0
    assert profiles.dyadic_cutoff(np.array([1.0]))[0] == 1.0
    assert profiles.dyadic_cutoff(np.array([2.0]))[0] == 1.0
    assert profiles.dyadic_cutoff(np.array([0.5]))[0] == 1.0
    assert profiles.dyadic_cutoff(np.array([0.3]))[0] == 0.0
    assert profiles.dyadic_cutoff(np.array([3.5]))[0] == 0.0


def test_default_smoothing_time():
    assert profiles.default_smoothing_time(math.e ** 3) == pytest.approx(3.0)
    assert profiles.default_smoothing_time(2.0) == 1.0


def test_profile_sidecar_is_written_and_reused(tmp_path):
    first = EtaProfile(0.25, tmp_path)
    sidecar = tmp_path / "profile_0.25_131072.npz"
    assert sidecar.exists()

    stamp = sidecar.stat().st_mtime_ns
    second = EtaProfile(0.25, tmp_path)
    assert sidecar.stat().st_mtime_ns == stamp
    s = np.linspace(0.0, 30.0, 61)
    assert np.array_equal(first(s), second(s))


def test_corrupt_sidecar_is_rebuilt(tmp_path):
    sidecar = tmp_path / "profile_0.25_131072.npz"
    sidecar.write_bytes(b"not an npz archive")
    eta = EtaProfile(0.25, tmp_path)
    assert eta(np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-12)
    with np.load(sidecar) as data:
        assert "values" in data.files
