"""
Tests for the experiment harness: config validation, the spectrum cache,
the experiment pipelines, resumption and the CLI exit codes.
"""
import json
import logging
import math

import numpy as np
import pandas as pd
import pytest

from main import main
from src.errors import CapabilityError, ContractError, StageError, ValidationError
from src.models.experiment import ExperimentConfig
from src.models.manifold import ManifoldModel
from src.models.spectral_types import SpectralWindow
from src.services import experiment_runner, growth
from src.services.result_writer import ResultWriter
from src.services.spectrum_cache import SpectrumCache

logger = logging.getLogger("harness_test")

TORUS = {"kind": "torus", "dimension": 2}


def _config(experiment, parameters, out_dir, manifold=None, **extra):
    data = {
        "schema_version": 1,
        "experiment": experiment,
        "manifold": manifold or TORUS,
        "parameters": parameters,
        "output": {"directory": str(out_dir)},
    }
    data.update(extra)
    return data


def _write_config(path, data):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data))
    return path


def _run(data, tmp_path):
    config = ExperimentConfig.from_dict(data)
    return experiment_runner.run(config, 1, tmp_path / "cache")


@pytest.fixture
def restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers = handlers
    root.setLevel(level)


# ----------------------------------------------------------------------
# Spectrum cache
# ----------------------------------------------------------------------

def test_spectrum_cache_hits_and_misses(tmp_path):
    cache = SpectrumCache(tmp_path)
    model = ManifoldModel.unit_torus(2)
    first = cache.cache_spectrum(model, 30.0)
    second = cache.cache_spectrum(model, 30.0)
    smaller = cache.cache_spectrum(model, 20.0)
    assert not first.hit and second.hit and smaller.hit
    assert second.indices == first.indices
    assert all(index.frequency <= 20.0 for index in smaller.indices)
    assert cache.stats() == {"hits": 2, "misses": 1}


def test_corrupt_spectrum_cache_is_rebuilt(tmp_path):
    cache = SpectrumCache(tmp_path)
    model = ManifoldModel.klein_bottle()
    expected = cache.cache_spectrum(model, 25.0).indices
    cache._cache_file(model).write_text("not json\n")
    rebuilt = cache.cache_spectrum(model, 25.0)
    assert not rebuilt.hit
    assert rebuilt.indices == expected


def test_spectrum_cache_errors(tmp_path):
    cache = SpectrumCache(tmp_path)
    model = ManifoldModel.unit_torus(2)
    with pytest.raises(ContractError):
        cache.cache_spectrum(model, -1.0)
    assert cache.cache_spectrum(model, 0.0).count == 0
    handle = cache.cache_spectrum(model, 10.0)
    with pytest.raises(ContractError):
        handle.window(SpectralWindow.between(5.0, 12.0))


# ----------------------------------------------------------------------
# Config validation
# ----------------------------------------------------------------------

def test_config_rejects_bad_input(tmp_path):
    good = _config("spectrum", {"lam_max": 10.0}, tmp_path / "out")
    ExperimentConfig.from_dict(good)

    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({**good, "colour": "blue"})
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({**good, "schema_version": 2})
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict(_config("knapp-scan", {"k": []}, tmp_path / "out"))
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict(_config("opnorm", {"lams": [10.0], "q": [2, 2]}, tmp_path / "out"))
    with pytest.raises(CapabilityError):
        ExperimentConfig.from_dict(_config("knapp-scan", {"k": [64]}, tmp_path / "out",
                                           manifold={"kind": "sphere", "dimension": 2}))


def test_config_hash_ignores_the_output_directory(tmp_path):
    first = ExperimentConfig.from_dict(_config("spectrum", {"lam_max": 10.0}, tmp_path / "a"))
    second = ExperimentConfig.from_dict(_config("spectrum", {"lam_max": 10.0}, tmp_path / "b"))
    third = ExperimentConfig.from_dict(_config("spectrum", {"lam_max": 11.0}, tmp_path / "a"))
    assert first.config_hash() == second.config_hash()
    assert first.config_hash() != third.config_hash()


# ----------------------------------------------------------------------
# Pipelines
# ----------------------------------------------------------------------

def test_spectrum_run_writes_table_and_manifest(tmp_path):
    out = tmp_path / "out"
    manifest = _run(_config("spectrum", {"lam_max": 2 * math.pi * 3.01}, out), tmp_path)

    table = pd.read_csv(out / "spectrum.csv")
    assert len(table) == 29
    assert list(table.columns) == ["label_1", "label_2", "frequency"]

    with open(out / "manifest.json") as f:
        written = json.load(f)
    assert written["status"] == "complete"
    assert written["outputs"]["spectrum.csv"] == ResultWriter.file_digest(out / "spectrum.csv")
    assert manifest.outputs == written["outputs"]
    assert set(written["stage_seconds"]) == {"spectrum", "write"}


def test_spectrum_runs_are_reproducible(tmp_path):
    first = _run(_config("spectrum", {"lam_max": 40.0}, tmp_path / "one"), tmp_path)
    second = _run(_config("spectrum", {"lam_max": 40.0}, tmp_path / "two"), tmp_path)
    assert first.outputs == second.outputs
    assert second.cache["hits"] == 1


def _opnorm_config(out):
    lams = [2 * math.pi * math.sqrt(5.0) - 0.5, 2 * math.pi * 5.0 - 0.5]
    return _config("opnorm", {"lams": lams, "q": [6, "inf"]}, out)


def test_opnorm_run_and_resume(tmp_path):
    out = tmp_path / "out"
    _run(_opnorm_config(out), tmp_path)
    path = out / "opnorm.csv"
    before = path.read_bytes()

    table = pd.read_csv(path)
    assert len(table) == 6
    exact = table[table["method"] == "exact"]
    assert sorted(exact["count"]) == [8, 12]
    for _, row in exact.iterrows():
        assert row["norm"] == pytest.approx(math.sqrt(row["count"]), rel=1e-12)
    bounds = table[table["method"] == "lower_bound"]
    assert (bounds["norm"] > 0).all()
    for count, group in table.groupby("count"):
        sup = group[group["q"] == math.inf]
        exact_norm = sup[sup["method"] == "exact"]["norm"].iloc[0]
        bound = sup[sup["method"] == "lower_bound"]["norm"].iloc[0]
        assert bound <= exact_norm * (1 + 1e-9)
        assert bound == pytest.approx(exact_norm, rel=1e-6)

    manifest = _run(_opnorm_config(out), tmp_path)
    assert path.read_bytes() == before
    assert manifest.cache["resumed_rows"] == 6
    assert (out / "opnorm_runtime.csv").exists()


def test_kernel_decay_is_one_at_the_origin(tmp_path):
    out = tmp_path / "out"
    _run(_config("kernel-decay", {"lams": [20.0], "z_perp": [0.0, 2.0]}, out), tmp_path)
    table = pd.read_csv(out / "kernel_decay.csv")
    origin = table[table["z_perp"] == 0.0]["ratio"].iloc[0]
    away = table[table["z_perp"] == 2.0]["ratio"].iloc[0]
    assert origin == pytest.approx(1.0)
    assert away < 1.0


def test_knapp_scan_is_deterministic(tmp_path):
    params = {"k": [64, 128], "export_records": True}
    first = _run(_config("knapp-scan", params, tmp_path / "one"), tmp_path)
    second = _run(_config("knapp-scan", params, tmp_path / "two"), tmp_path)
    assert first.outputs == second.outputs
    assert "records/knapp_k64.json" in first.outputs

    table = pd.read_csv(tmp_path / "one" / "knapp_scan.csv")
    assert list(table["k"]) == [64, 128]
    assert (table["deck_invariance"] <= 1e-8).all()
    assert (table["localization"] >= 0.95).all()


def test_beam_scan_rows(tmp_path):
    out = tmp_path / "out"
    sphere = {"kind": "sphere", "dimension": 2}
    _run(_config("beam-scan", {"l": [4, 8]}, out, manifold=sphere), tmp_path)
    table = pd.read_csv(out / "beam_scan.csv")
    assert len(table) == 4
    assert list(table.columns) == ["family", "l", "lam", "resolution", "l2_norm",
                                   "norm_q6", "norm_qinf", "l1_ratio", "tube_mass"]
    assert np.allclose(table["l2_norm"], 1.0, rtol=1e-9)

    zonal_rows = table[table["family"] == "zonal"]
    assert zonal_rows["tube_mass"].isna().all()
    for _, row in zonal_rows.iterrows():
        assert row["norm_qinf"] == pytest.approx(math.sqrt((2 * row["l"] + 1) / (4 * math.pi)), rel=1e-9)
    beam_rows = table[table["family"] == "beam"]
    assert ((beam_rows["tube_mass"] > 0) & (beam_rows["tube_mass"] <= 1 + 1e-9)).all()


def test_beam_scan_sup_only(tmp_path):
    out = tmp_path / "out"
    sphere = {"kind": "sphere", "dimension": 2}
    _run(_config("beam-scan", {"l": [10, 40], "q": ["inf"], "families": ["zonal"]}, out, manifold=sphere), tmp_path)
    table = pd.read_csv(out / "beam_scan.csv")
    assert list(table["l"]) == [10, 40]
    for _, row in table.iterrows():
        assert row["norm_qinf"] == pytest.approx(math.sqrt((2 * row["l"] + 1) / (4 * math.pi)), rel=1e-9)



def _growth_table(directory, b):
    points = growth.synthetic_growth(np.geomspace(1e2, 1e8, 12), 1.0 / 6.0, b, constant=0.7)
    directory.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(points, columns=["lam", "norm"]).to_csv(directory / "growth.csv", index=False)


def test_classify_from_a_relative_input(tmp_path):
    data_dir = tmp_path / "data"
    _growth_table(data_dir, -1.0 / 6.0)
    config_path = _write_config(data_dir / "classify.json", _config(
        "classify", {"input": "growth.csv", "column": "norm", "q": 6}, tmp_path / "out"))
    experiment_runner.run(ExperimentConfig.load(config_path), 1, tmp_path / "cache")

    with open(tmp_path / "out" / "fit_report.json") as f:
        report = json.load(f)
    assert report["verdict"] == "zero"
    assert report["b"] == pytest.approx(-1.0 / 6.0, abs=1e-8)
    assert report["mu"] == pytest.approx(1.0 / 6.0)
    assert report["input"] == "growth.csv"


def test_fit_with_a_fixed_exponent(tmp_path):
    data_dir = tmp_path / "data"
    _growth_table(data_dir, -0.5)
    config_path = _write_config(data_dir / "fit.json", _config(
        "fit", {"input": "growth.csv", "column": "norm", "q": "inf"}, tmp_path / "out"))
    experiment_runner.run(ExperimentConfig.load(config_path), 1, tmp_path / "cache")

    with open(tmp_path / "out" / "fit_report.json") as f:
        report = json.load(f)
    assert report["mode"] == "a-fixed"
    assert report["a"] == 0.5
    assert report["q"] == "inf"


def test_missing_column_fails_the_stage(tmp_path):
    data_dir = tmp_path / "data"
    _growth_table(data_dir, 0.0)
    config_path = _write_config(data_dir / "fit.json", _config(
        "fit", {"input": "growth.csv", "column": "missing", "q": 6}, tmp_path / "out"))
    with pytest.raises(StageError) as excinfo:
        experiment_runner.run(ExperimentConfig.load(config_path), 1, tmp_path / "cache")
    assert excinfo.value.stage == "validate"
    assert excinfo.value.exit_code == 2
    assert not (tmp_path / "out" / "fit_report.json").exists()


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, monkeypatch, restore_logging):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("SCLAB_CACHE_DIR", str(tmp_path / "cache"))

    empty = _write_config(tmp_path / "empty.json", _config("knapp-scan", {"k": []}, tmp_path / "empty_out"))
    assert main(["knapp-scan", "--config", str(empty)]) == 2
    assert not (tmp_path / "empty_out").exists()

    spectrum = _write_config(tmp_path / "spectrum.json", _config("spectrum", {"lam_max": 20.0}, "results"))
    assert main(["opnorm", "--config", str(spectrum)]) == 2
    assert main(["spectrum", "--config", str(tmp_path / "absent.json")]) == 2

    sphere = _write_config(tmp_path / "sphere.json", _config(
        "knapp-scan", {"k": [64]}, "results", manifold={"kind": "sphere", "dimension": 2}))
    assert main(["knapp-scan", "--config", str(sphere)]) == 4

    assert main(["spectrum", "--config", str(spectrum), "--out", str(tmp_path / "cli_out")]) == 0
    assert (tmp_path / "cli_out" / "spectrum.csv").exists()
    assert (tmp_path / "cache").is_dir()
