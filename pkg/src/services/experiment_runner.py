"""
Experiment pipelines behind the sclab CLI.

Each experiment kind runs as a sequence of named stages. Scans write their
table and a partial manifest after every completed row, so an interrupted
run picks up where it stopped when started again with the same config.
"""
from __future__ import annotations

import json
import math
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Set

import numpy as np

from src import __version__
from src.errors import ContractError, SclabError, StageError, ValidationError
from src.logging_config import get_module_logger
from src.models.experiment import ExperimentConfig, ExperimentKind, RunManifest, exponent_label
from src.models.growth_types import FitMode
from src.models.manifold import ManifoldKind
from src.models.quasimode_params import KnappParams, TubeSpec
from src.models.spectral_types import CoefficientVector, SpectralWindow, WidthPolicy
from src.services import growth, manifolds, quasimodes, spectral
from src.services.evaluators import CoefficientEvaluator
from src.services.result_writer import ResultWriter
from src.services.spectrum_cache import SpectrumCache, SpectrumHandle

MANIFEST_NAME = "manifest.json"
REPORT_NAME = "fit_report.json"
RUNTIME_NAME = "opnorm_runtime.csv"


class ProgressHandler:
    """Logs step/message progress and accumulates wall time per stage."""

    def __init__(self):
        self.logger = get_module_logger(__name__)
        self.stage_seconds: Dict[str, float] = {}
        self.current_stage: Optional[str] = None
        self._last_step: Optional[str] = None

    def update_progress(self, step: str, message: str, current_substep: Optional[int] = None,
                        total_substeps: Optional[int] = None) -> None:
        self._last_step = step
        if current_substep is not None and total_substeps is not None:
            self.logger.info(f"[{step}] {message} ({current_substep}/{total_substeps})")
        else:
            self.logger.info(f"[{step}] {message}")

    def update_substep(self, current: int, total: int, message: Optional[str] = None) -> None:
        step = self._last_step or "run"
        self.update_progress(step, message or "working", current, total)

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        self.current_stage = name
        self.update_progress(name, "started")
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = time.perf_counter() - start
            self.stage_seconds[name] = self.stage_seconds.get(name, 0.0) + elapsed
            self.logger.debug(f"Stage {name} took {elapsed:.3f}s")


class ExperimentRunner:
    """Runs one validated ExperimentConfig and writes its outputs and manifest."""

    def __init__(self, config: ExperimentConfig, max_concurrency: int = 1,
                 cache_dir: Optional[Path] = None):
        self.logger = get_module_logger(__name__)
        self.config = config
        self.params = config.parameters
        self.model = config.manifold.to_model()
        self.max_concurrency = max(1, int(max_concurrency))
        self.cache_dir = Path(cache_dir) if cache_dir is not None else Path(".sclab_cache")
        self.out_dir = Path(config.output_dir)
        self.writer = ResultWriter()
        self.cache = SpectrumCache(self.cache_dir)
        self.records = quasimodes.QuasimodeRecordBuilder()
        self.progress = ProgressHandler()
        self.manifest = RunManifest(config.config_hash(), __version__, config.experiment.value)
        self._written: Set[Path] = set()
        self._row_parameters: Dict[str, Any] = {}
        self._resumed_rows = 0

    # ------------------------------------------------------------------
    # Entry point
    # ------------------------------------------------------------------

    def run(self) -> RunManifest:
        """
        Execute the configured pipeline.

        Returns:
            The final RunManifest, also written to manifest.json

        Raises:
            StageError: Wrapping any sclab error, after partial outputs are removed
        """
        pipelines: Dict[ExperimentKind, Callable[[], None]] = {
            ExperimentKind.SPECTRUM: self._run_spectrum,
            ExperimentKind.OPNORM: self._run_opnorm,
            ExperimentKind.KNAPP_SCAN: self._run_knapp_scan,
            ExperimentKind.BEAM_SCAN: self._run_beam_scan,
            ExperimentKind.KERNEL_DECAY: self._run_kernel_decay,
            ExperimentKind.FIT: self._run_fit,
            ExperimentKind.CLASSIFY: self._run_fit,
        }
        self.logger.info(f"Starting {self.config.experiment.value} on {self.model} into {self.out_dir}")
        self.manifest.started_at = datetime.now(timezone.utc).isoformat()
        try:
            pipelines[self.config.experiment]()
            self.manifest.status = "complete"
            self._finish_manifest()
            self.logger.info(f"Finished {self.config.experiment.value}: {len(self.manifest.outputs)} outputs")
            return self.manifest
        except SclabError as e:
            stage = self.progress.current_stage or "setup"
            self.logger.error(f"Stage {stage} failed: {str(e)}")
            self._remove_partial_outputs()
            raise StageError(stage, e, dict(self._row_parameters)) from e
        except Exception as e:
            self.logger.error(f"Unexpected failure in {self.config.experiment.value}: {str(e)}")
            self._remove_partial_outputs()
            raise

    # ------------------------------------------------------------------
    # Output bookkeeping
    # ------------------------------------------------------------------

    def _output(self, name: str) -> Path:
        path = self.out_dir / name
        self._written.add(path)
        return path

    def _remove_partial_outputs(self) -> None:
        for path in sorted(self._written, reverse=True):
            try:
                if path.is_file():
                    path.unlink()
            except OSError as e:
                self.logger.warning(f"Could not remove partial output {path}: {str(e)}")
        records = self.out_dir / "records"
        if records.is_dir() and not any(records.iterdir()):
            records.rmdir()
        if self.out_dir.is_dir() and not any(self.out_dir.iterdir()):
            self.out_dir.rmdir()
        self.logger.info(f"Removed {len(self._written)} partial outputs")

    def _write_manifest(self) -> None:
        self.manifest.stage_seconds = dict(self.progress.stage_seconds)
        self.manifest.cache = {**self.cache.stats(), "resumed_rows": self._resumed_rows}
        self.writer.write_json(self._output(MANIFEST_NAME), self.manifest.to_dict())

    def _finish_manifest(self) -> None:
        self.manifest.finished_at = datetime.now(timezone.utc).isoformat()
        self.manifest.outputs = {
            str(path.relative_to(self.out_dir)): self.writer.file_digest(path)
            for path in sorted(self._written) if path.name != MANIFEST_NAME and path.is_file()
        }
        self._write_manifest()

    def _previous_manifest(self) -> Optional[RunManifest]:
        path = self.out_dir / MANIFEST_NAME
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                previous = RunManifest.from_dict(json.load(f))
        except Exception as e:
            self.logger.warning(f"Ignoring unreadable manifest {path}: {str(e)}")
            return None
        if previous.config_hash != self.manifest.config_hash or previous.tool_version != __version__:
            self.logger.info("Existing manifest belongs to another config or version; starting afresh")
            return None
        return previous

    def _row_generator(self, row: int) -> np.random.Generator:
        """Counter-based stream for one scan row, keyed by the config seed."""
        return np.random.Generator(np.random.Philox(key=self.config.seed, counter=[0, 0, 0, row]))

    def _scan(self, table: str, columns: Sequence[str], keys: Sequence[str],
              compute: Callable[[int, str], List[Dict[str, Any]]], key_of: Callable[[Dict[str, Any]], str]) -> None:
        """
        Compute one group of rows per key, reusing rows a previous run completed.

        The table and a partial manifest are rewritten after every computed key.
        """
        path = self._output(table)
        done: Dict[str, List[Dict[str, Any]]] = {}
        previous = self._previous_manifest()
        if previous is not None and path.exists():
            for row in self.writer.read_rows(path):
                done.setdefault(key_of(row), []).append(row)
            done = {key: rows for key, rows in done.items() if key in set(previous.completed)}
            if done:
                self.logger.info(f"Resuming {table}: {len(done)} of {len(keys)} groups already complete")

        rows: List[Dict[str, Any]] = []
        self.manifest.completed = []
        for position, key in enumerate(keys):
            if key in done:
                rows.extend(done[key])
                self._resumed_rows += len(done[key])
            else:
                self.progress.update_substep(position + 1, len(keys), f"computing {key}")
                rows.extend(compute(position, key))
                self.writer.write_csv(path, columns, rows)
            self.manifest.completed.append(key)
            self._write_manifest()
        self.writer.write_csv(path, columns, rows)

    # ------------------------------------------------------------------
    # spectrum
    # ------------------------------------------------------------------

    def _run_spectrum(self) -> None:
        with self.progress.stage("spectrum"):
            handle = self.cache.cache_spectrum(self.model, self.params["lam_max"])
            width = self.model.dimension
            columns = [f"label_{i + 1}" for i in range(width)] + ["frequency"]
            rows = []
            for index in handle.indices:
                row: Dict[str, Any] = {f"label_{i + 1}": v for i, v in enumerate(index.label)}
                row["frequency"] = index.frequency
                rows.append(row)
        with self.progress.stage("write"):
            self.writer.write_csv(self._output(self.config.experiment.table_name), columns, rows)
            self.logger.info(f"{handle.count} eigenvalues of {self.model} up to {handle.lam_max:g}")

    # ------------------------------------------------------------------
    # opnorm
    # ------------------------------------------------------------------

    def _run_opnorm(self) -> None:
        policy = WidthPolicy(self.params["policy"])
        with self.progress.stage("validate"):
            windows = [spectral.policy_window(lam, policy) for lam in self.params["lams"]]
        with self.progress.stage("spectrum"):
            handle = self.cache.cache_spectrum(self.model, max(w.upper for w in windows))

        columns = ["manifold", "lam", "width", "delta_policy", "count", "q", "method", "norm",
                   "grid_resolution", "empty"]
        timings: List[Dict[str, Any]] = []
        by_key = {repr(w.lam): w for w in windows}

        def compute(position: int, key: str) -> List[Dict[str, Any]]:
            return self._opnorm_rows(by_key[key], handle, timings)

        with self.progress.stage("opnorm"):
            self._scan(self.config.experiment.table_name, columns, list(by_key), compute,
                       lambda row: repr(float(row["lam"])))
        with self.progress.stage("write"):
            self.writer.write_csv(self._output(RUNTIME_NAME), ["lam", "q", "method", "runtime_ms"], timings)

    def _opnorm_rows(self, window: SpectralWindow, handle: SpectrumHandle,
                     timings: List[Dict[str, Any]]) -> List[Dict[str, Any]]:
        self._row_parameters = {"lam": window.lam, "width": window.width}
        indices = handle.window(window)
        base = {"manifold": str(self.model), "lam": window.lam, "width": window.width,
                "delta_policy": window.policy.value, "count": len(indices)}
        rows = []

        start = time.perf_counter()
        exact, point = spectral.kernel_maximizer(self.model, window, self.params["resolution"], self.max_concurrency)
        resolution = self.params["resolution"] or (spectral.kernel_resolution(self.model, indices) if indices else 0)
        rows.append({**base, "q": math.inf, "method": "exact", "norm": exact,
                     "grid_resolution": resolution, "empty": int(not indices)})
        timings.append({"lam": window.lam, "q": math.inf, "method": "exact",
                        "runtime_ms": 1000.0 * (time.perf_counter() - start)})

        candidates = self._opnorm_candidates(window, indices, point) if indices else []
        grid = None
        if candidates:
            resolution = self.params["resolution"] or max(
                [CoefficientEvaluator(spectral.project(self.model, window, c)).required_resolution()
                 for c in candidates] + [self._power_resolution(index.degree) for index in indices
                                         if self.model.kind is ManifoldKind.SPHERE])
            grid = manifolds.quadrature_grid(self.model, resolution)
        for q in self.params["q"]:
            start = time.perf_counter()
            if grid is None:
                norm, used = 0.0, 0
            else:
                norm = spectral.opnorm_lower_bound(self.model, window, q, candidates, grid, self.max_concurrency)
                used = grid.resolution
            rows.append({**base, "q": q, "method": "lower_bound", "norm": norm,
                         "grid_resolution": used, "empty": int(grid is None)})
            timings.append({"lam": window.lam, "q": q, "method": "lower_bound",
                            "runtime_ms": 1000.0 * (time.perf_counter() - start)})
        return rows

    def _power_resolution(self, degree: int) -> int:
        """
        Gauss nodes for a degree-l sphere polynomial.

        Finite even q get exact |psi|^q quadrature; q = inf gets at least 2l+2
        nodes so the central lobe of a zonal peak is sampled.
        """
        needed = [manifolds.MIN_RESOLUTION]
        needed += [int(math.ceil(q * degree / 2.0)) + 1 for q in self.params["q"] if math.isfinite(q)]
        if any(math.isinf(q) for q in self.params["q"]):
            needed.append(2 * degree + 2)
        return max(needed)

    def _opnorm_candidates(self, window: SpectralWindow, indices, point) -> List[CoefficientVector]:
        wanted = self.params["candidates"]
        candidates: List[CoefficientVector] = []
        if "coherent" in wanted and point is not None:
            candidates.append(spectral.coherent_candidate(self.model, window, point))
        if "eigenfunctions" in wanted:
            candidates.extend(CoefficientVector(self.model, {index: 1.0 + 0j}) for index in indices)
        degrees = sorted({index.degree for index in indices}) if self.model.kind is ManifoldKind.SPHERE else []
        for degree in degrees:
            closed_forms = []
            if "beam" in wanted:
                closed_forms.append(quasimodes.gaussian_beam(self.model.dimension, degree))
            if "zonal" in wanted:
                closed_forms.append(quasimodes.zonal(self.model.dimension, degree))
            for evaluator in closed_forms:
                grid = manifolds.quadrature_grid(self.model, evaluator.required_resolution())
                candidates.append(evaluator.to_coefficients(window, grid))
        return candidates

    # ------------------------------------------------------------------
    # knapp-scan
    # ------------------------------------------------------------------

    def _run_knapp_scan(self) -> None:
        p = self.params
        with self.progress.stage("validate"):
            geodesic = manifolds.periodic_geodesic(self.model, p["direction"])
            settings = {k: self._knapp_params(k) for k in p["k"]}
            for params in settings.values():
                params.frequency(geodesic.length)

        norm_columns = [f"norm_q{exponent_label(q)}" for q in p["q"]]
        columns = (["k", "lam", "delta", "resolution", "coefficients", "l2_norm", "defect", "budget"]
                   + norm_columns + ["l1_ratio", "tube_mass", "localization", "deck_invariance"])

        def compute(position: int, key: str) -> List[Dict[str, Any]]:
            k = int(key.split("=")[1])
            return [self._knapp_row(settings[k], geodesic, position)]

        with self.progress.stage("knapp"):
            self._scan(self.config.experiment.table_name, columns, [f"k={k}" for k in p["k"]], compute,
                       lambda row: f"k={int(row['k'])}")

    def _knapp_params(self, k: int) -> KnappParams:
        p = self.params
        return KnappParams(k=k, c0=float(p["c0"]), half_window=float(p["half_window"]),
                           drop_threshold=float(p["drop_threshold"]))

    def _knapp_row(self, params: KnappParams, geodesic, position: int) -> Dict[str, Any]:
        p = self.params
        lam = params.frequency(geodesic.length)
        self._row_parameters = {"k": params.k, "lam": lam}
        delta = params.delta(lam)
        coeffs = quasimodes.knapp_flat(self.model, geodesic, params, self.cache_dir)
        evaluator = CoefficientEvaluator(coeffs, lam)
        tube = TubeSpec.around(geodesic, lam, params.half_window)
        resolution = p["resolution"] or max(evaluator.required_resolution(),
                                            quasimodes.tube_resolution(self.model, tube))
        self._row_parameters["resolution"] = resolution
        grid = manifolds.quadrature_grid(self.model, resolution)

        row: Dict[str, Any] = {
            "k": params.k,
            "lam": lam,
            "delta": delta,
            "resolution": resolution,
            "coefficients": len(coeffs),
            "l2_norm": coeffs.l2_norm(),
            "defect": quasimodes.defect(self.model, lam, coeffs),
            "budget": quasimodes.quasimode_budget(self.model, lam, coeffs, delta),
        }
        for q in p["q"]:
            row[f"norm_q{exponent_label(q)}"] = spectral.lq_norm(evaluator, q, grid, self.max_concurrency)
        row["l1_ratio"] = quasimodes.l1_lower_ratio(evaluator, lam, self.model.dimension, grid, self.max_concurrency)
        row["tube_mass"] = quasimodes.tube_mass(evaluator, tube, grid, self.max_concurrency)
        row["localization"] = quasimodes.spectral_localization(coeffs, lam, params.smoothing_time(lam),
                                                               float(p["localization_K"]))
        row["deck_invariance"] = quasimodes.deck_invariance_check(
            self.model, evaluator, p["deck_samples"], rng=self._row_generator(position))

        if p["export_records"]:
            record = self.records.create_record(self.model, "knapp", params.describe(), lam, coeffs)
            self.records.write(record, self._output(f"records/knapp_k{params.k}.json"))
        return row

    # ------------------------------------------------------------------
    # beam-scan
    # ------------------------------------------------------------------

    def _run_beam_scan(self) -> None:
        p = self.params
        n = self.model.dimension
        with self.progress.stage("validate"):
            circle = manifolds.great_circle(self.model)
        norm_columns = [f"norm_q{exponent_label(q)}" for q in p["q"]]
        columns = ["family", "l", "lam", "resolution", "l2_norm"] + norm_columns + ["l1_ratio", "tube_mass"]
        keys = [f"{family}:l={l}" for family in p["families"] for l in p["l"]]

        def compute(position: int, key: str) -> List[Dict[str, Any]]:
            family, degree = key.split(":l=")
            return [self._beam_row(family, int(degree), n, circle)]

        with self.progress.stage("beams"):
            self._scan(self.config.experiment.table_name, columns, keys, compute,
                       lambda row: f"{row['family']}:l={int(row['l'])}")

    def _beam_row(self, family: str, degree: int, n: int, circle) -> Dict[str, Any]:
        p = self.params
        self._row_parameters = {"family": family, "l": degree}
        if family == "beam":
            evaluator = quasimodes.gaussian_beam(n, degree)
        else:
            evaluator = quasimodes.zonal(n, degree)
        lam = evaluator.frequency
        resolution = p["resolution"] or max(evaluator.required_resolution(), self._power_resolution(degree))
        tube = None
        if family == "beam":
            tube = TubeSpec(circle, None, lam ** (-float(p["tube_exponent"])))
            if p["resolution"] is None:
                resolution = max(resolution, quasimodes.tube_resolution(self.model, tube))
        self._row_parameters["resolution"] = resolution
        grid = manifolds.quadrature_grid(self.model, resolution)

        row: Dict[str, Any] = {"family": family, "l": degree, "lam": lam, "resolution": resolution,
                               "l2_norm": spectral.lq_norm(evaluator, 2.0, grid, self.max_concurrency)}
        for q in p["q"]:
            row[f"norm_q{exponent_label(q)}"] = spectral.lq_norm(evaluator, q, grid, self.max_concurrency)
        row["l1_ratio"] = quasimodes.l1_lower_ratio(evaluator, lam, n, grid, self.max_concurrency)
        # zonal functions peak at the poles; no tube
        row["tube_mass"] = (quasimodes.tube_mass(evaluator, tube, grid, self.max_concurrency)
                            if tube is not None else math.nan)
        return row

    # ------------------------------------------------------------------
    # kernel-decay
    # ------------------------------------------------------------------

    def _run_kernel_decay(self) -> None:
        p = self.params
        n = self.model.dimension
        # the Euclidean kernel depends on c0 only; k is a placeholder
        params = KnappParams(k=2, c0=float(p["c0"]))
        columns = ["lam", "z1", "z_perp", "ratio"]
        by_key = {repr(lam): lam for lam in p["lams"]}

        def compute(position: int, key: str) -> List[Dict[str, Any]]:
            lam = by_key[key]
            self._row_parameters = {"lam": lam}
            delta = KnappParams.delta(lam)
            origin = abs(quasimodes.knapp_kernel_rn(np.zeros(n), lam, delta, params, cache_dir=self.cache_dir))
            if origin == 0.0:
                raise ContractError(f"kernel vanishes at the origin for lam={lam:g}")
            rows = []
            for z1 in p["z1"]:
                for z_perp in p["z_perp"]:
                    self._row_parameters = {"lam": lam, "z1": z1, "z_perp": z_perp}
                    z = np.zeros(n)
                    z[0], z[1] = z1, z_perp
                    value = abs(quasimodes.knapp_kernel_rn(z, lam, delta, params, cache_dir=self.cache_dir))
                    rows.append({"lam": lam, "z1": z1, "z_perp": z_perp, "ratio": value / origin})
            return rows

        with self.progress.stage("kernel"):
            self._scan(self.config.experiment.table_name, columns, list(by_key), compute,
                       lambda row: repr(float(row["lam"])))

    # ------------------------------------------------------------------
    # fit / classify
    # ------------------------------------------------------------------

    def _fit_points(self) -> List[tuple]:
        p = self.params
        path = self.config.resolve_input(p["input"])
        if not path.exists():
            raise ValidationError(f"input table {path} does not exist")
        frame = self.writer.read_csv(path)
        needed = [p["lam_column"], p["column"]] + ([p["normalize_by"]] if p["normalize_by"] else [])
        needed += list(p["where"])
        missing = [c for c in needed if c not in frame.columns]
        if missing:
            raise ValidationError(f"input table {path} has no column(s) {', '.join(missing)}")
        for column, value in p["where"].items():
            frame = frame[frame[column] == value]
        if "empty" in frame.columns:
            skipped = int((frame["empty"] == 1).sum())
            if skipped:
                self.logger.info(f"Skipping {skipped} empty-window rows of {path}")
            frame = frame[frame["empty"] != 1]
        values = frame[p["column"]].to_numpy(dtype=float)
        if p["normalize_by"]:
            values = values / frame[p["normalize_by"]].to_numpy(dtype=float)
        lams = frame[p["lam_column"]].to_numpy(dtype=float)
        self.logger.info(f"Read {len(lams)} points from {path} column {p['column']}")
        return list(zip(lams.tolist(), values.tolist()))

    def _run_fit(self) -> None:
        p = self.params
        q, n = p["q"], self.model.dimension
        with self.progress.stage("validate"):
            points = self._fit_points()
            law = growth.exponent_law(q, n)
        with self.progress.stage("fit"):
            self._row_parameters = {"q": q, "n": n, "points": len(points)}
            if self.config.experiment is ExperimentKind.CLASSIFY:
                verdict = growth.classify(q, n, points)
                report = growth.fit_report(q, n, verdict.fit, verdict)
                self.logger.info(f"Verdict {verdict.sign.value} (b={verdict.b:.4f}, confidence {verdict.confidence:.4f})")
            else:
                if p["mode"] == FitMode.FREE.value:
                    fit = growth.fit_free(points)
                else:
                    a = law.mu if p["a_fixed"] is None else float(p["a_fixed"])
                    fit = growth.fit_log_exponent(points, a)
                report = growth.fit_report(q, n, fit)
                self.logger.info(f"Fit a={fit.a:.4f}, b={fit.b:.4f} +/- {fit.b_stderr:.4f}")
        with self.progress.stage("write"):
            report["input"] = p["input"]
            report["column"] = p["column"]
            report["normalize_by"] = p["normalize_by"]
            report["mu"] = law.mu
            report["critical_exponent"] = law.critical
            self.writer.write_json(self._output(REPORT_NAME), report)


def run(config: ExperimentConfig, max_concurrency: int = 1, cache_dir: Optional[Path] = None) -> RunManifest:
    """Run ``config`` and return its manifest."""
    return ExperimentRunner(config, max_concurrency, cache_dir).run()
