from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from src.errors import CapabilityError, ValidationError
from src.models.manifold import ManifoldKind, ManifoldModel

SCHEMA_VERSION = 1
REQUIRED = object()

TOP_LEVEL_KEYS = {"schema_version", "experiment", "manifold", "parameters", "output", "seed"}
MANIFOLD_KEYS = {"kind", "dimension", "basis"}
OUTPUT_KEYS = {"directory"}


class ExperimentKind(Enum):
    SPECTRUM = "spectrum"
    OPNORM = "opnorm"
    KNAPP_SCAN = "knapp-scan"
    BEAM_SCAN = "beam-scan"
    FIT = "fit"
    CLASSIFY = "classify"
    KERNEL_DECAY = "kernel-decay"

    @property
    def table_name(self) -> str:
        return self.value.replace("-", "_") + ".csv"


# Allowed parameter keys per experiment kind, with defaults
PARAMETER_DEFAULTS: Dict[ExperimentKind, Dict[str, Any]] = {
    ExperimentKind.SPECTRUM: {"lam_max": REQUIRED},
    ExperimentKind.OPNORM: {
        "lams": REQUIRED,
        "policy": "unit",
        "q": ["inf"],
        "candidates": ["coherent"],
        "resolution": None,
    },
    ExperimentKind.KNAPP_SCAN: {
        "k": REQUIRED,
        "q": [6],
        "direction": None,
        "c0": 0.25,
        "half_window": 0.25,
        "drop_threshold": 1e-14,
        "localization_K": 20.0,
        "deck_samples": 256,
        "resolution": None,
        "export_records": False,
    },
    ExperimentKind.BEAM_SCAN: {
        "l": REQUIRED,
        "q": [6, "inf"],
        "families": ["beam", "zonal"],
        "tube_exponent": 0.4,
        "resolution": None,
    },
    ExperimentKind.KERNEL_DECAY: {
        "lams": REQUIRED,
        "z1": [0.0],
        "z_perp": REQUIRED,
        "c0": 0.25,
    },
    ExperimentKind.FIT: {
        "input": REQUIRED,
        "column": REQUIRED,
        "lam_column": "lam",
        "normalize_by": None,
        "where": {},
        "q": REQUIRED,
        "mode": "a-fixed",
        "a_fixed": None,
    },
    ExperimentKind.CLASSIFY: {
        "input": REQUIRED,
        "column": REQUIRED,
        "lam_column": "lam",
        "normalize_by": None,
        "where": {},
        "q": REQUIRED,
    },
}


def parse_exponent(value: Any) -> float:
    """A Lebesgue exponent from a number or the string "inf"."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ValidationError(f"exponent {value!r} is neither a number nor 'inf'")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"exponent {value!r} is neither a number nor 'inf'")
    return float(value)


def exponent_label(q: float) -> str:
    return "inf" if math.isinf(q) else format(q, "g")


def _positive_int_list(name: str, values: Any, minimum: int) -> List[int]:
    if not isinstance(values, list) or not values:
        raise ValidationError(f"parameter '{name}' must be a non-empty list")
    parsed = []
    for value in values:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            raise ValidationError(f"parameter '{name}' entries must be integers >= {minimum}, got {value!r}")
        parsed.append(value)
    if len(set(parsed)) != len(parsed):
        raise ValidationError(f"parameter '{name}' has repeated entries")
    return parsed


def _float_list(name: str, values: Any, lower: Optional[float] = None, strict: bool = True) -> List[float]:
    if not isinstance(values, list) or not values:
        raise ValidationError(f"parameter '{name}' must be a non-empty list")
    parsed = []
    for value in values:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValidationError(f"parameter '{name}' entries must be finite numbers, got {value!r}")
        if lower is not None and (value <= lower if strict else value < lower):
            bound = ">" if strict else ">="
            raise ValidationError(f"parameter '{name}' entries must be {bound} {lower:g}, got {value!r}")
        parsed.append(float(value))
    return parsed


def _exponent_list(name: str, values: Any, lower: float) -> List[float]:
    if not isinstance(values, list) or not values:
        raise ValidationError(f"parameter '{name}' must be a non-empty list")
    parsed = [parse_exponent(v) for v in values]
    for q in parsed:
        if not q > lower:
            raise ValidationError(f"parameter '{name}' entries must exceed {lower:g}, got {q}")
    if len(set(parsed)) != len(parsed):
        raise ValidationError(f"parameter '{name}' has repeated entries")
    return parsed


def _check_unknown(section: str, given: Mapping[str, Any], allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown key(s) in {section}: {', '.join(unknown)}")


@dataclass(frozen=True)
class ManifoldConfig:
    kind: ManifoldKind
    dimension: int = 2
    basis: Optional[Tuple[Tuple[float, ...], ...]] = None

    @classmethod
    def from_dict(cls, data: Any) -> "ManifoldConfig":
        if not isinstance(data, dict):
            raise ValidationError("'manifold' must be an object")
        _check_unknown("manifold", data, MANIFOLD_KEYS)
        try:
            kind = ManifoldKind(data.get("kind"))
        except ValueError:
            choices = ", ".join(k.value for k in ManifoldKind)
            raise ValidationError(f"manifold kind must be one of {choices}, got {data.get('kind')!r}")
        dimension = data.get("dimension", 2)
        if isinstance(dimension, bool) or not isinstance(dimension, int) or dimension < 2:
            raise ValidationError(f"manifold dimension must be an integer >= 2, got {dimension!r}")
        basis = data.get("basis")
        if basis is not None:
            if kind is not ManifoldKind.TORUS:
                raise ValidationError(f"{kind.value} takes no lattice basis")
            try:
                basis = tuple(tuple(float(v) for v in row) for row in basis)
            except (TypeError, ValueError):
                raise ValidationError("torus basis must be a list of numeric rows")
        return cls(kind, dimension, basis)

    def to_model(self) -> ManifoldModel:
        if self.kind is ManifoldKind.TORUS:
            if self.basis is None:
                return ManifoldModel.unit_torus(self.dimension)
            return ManifoldModel.torus(self.basis)
        if self.kind is ManifoldKind.KLEIN_BOTTLE:
            return ManifoldModel.klein_bottle()
        return ManifoldModel.sphere(self.dimension)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment description.

    ``parameters`` holds the kind's parameter block with defaults filled in
    and exponents parsed; ``source_dir`` resolves relative input paths.
    """

    experiment: ExperimentKind
    manifold: ManifoldConfig
    parameters: Dict[str, Any]
    output_dir: str = "results"
    seed: int = 0
    schema_version: int = SCHEMA_VERSION
    raw: Dict[str, Any] = field(default_factory=dict, compare=False, repr=False)
    source_dir: Optional[Path] = field(default=None, compare=False, repr=False)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path} is not valid JSON: {e}")
        except OSError as e:
            raise ValidationError(f"cannot read config {path}: {e}")
        return cls.from_dict(data, source_dir=path.resolve().parent)

    @classmethod
    def from_dict(cls, data: Any, source_dir: Optional[Path] = None) -> "ExperimentConfig":
        """
        Parse and validate a configuration object.

        Raises:
            ValidationError: On unknown keys, a wrong schema version or any
                out-of-range parameter
            CapabilityError: If the experiment cannot run on the manifold
        """
        if not isinstance(data, dict):
            raise ValidationError("configuration must be a JSON object")
        _check_unknown("configuration", data, TOP_LEVEL_KEYS)
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValidationError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        try:
            kind = ExperimentKind(data.get("experiment"))
        except ValueError:
            choices = ", ".join(k.value for k in ExperimentKind)
            raise ValidationError(f"experiment must be one of {choices}, got {data.get('experiment')!r}")

        manifold = ManifoldConfig.from_dict(data.get("manifold"))
        output = data.get("output", {})
        if not isinstance(output, dict):
            raise ValidationError("'output' must be an object")
        _check_unknown("output", output, OUTPUT_KEYS)
        output_dir = output.get("directory", "results")
        if not isinstance(output_dir, str) or not output_dir:
            raise ValidationError("output.directory must be a non-empty string")
        seed = data.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")

        parameters = _validate_parameters(kind, manifold, data.get("parameters", {}))
        return cls(kind, manifold, parameters, output_dir, seed, SCHEMA_VERSION, dict(data), source_dir)

    def with_output_dir(self, directory: str) -> "ExperimentConfig":
        return ExperimentConfig(self.experiment, self.manifold, self.parameters, directory, self.seed,
                                self.schema_version, self.raw, self.source_dir)

    def resolve_input(self, value: str) -> Path:
        path = Path(value)
        if path.is_absolute() or self.source_dir is None:
            return path
        return self.source_dir / path

    def config_hash(self) -> str:
        """SHA-256 of the canonical configuration, ignoring the output directory."""
        canonical = {key: value for key, value in self.raw.items() if key != "output"}
        payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _validate_parameters(kind: ExperimentKind, manifold: ManifoldConfig, given: Any) -> Dict[str, Any]:
    if not isinstance(given, dict):
        raise ValidationError("'parameters' must be an object")
    defaults = PARAMETER_DEFAULTS[kind]
    _check_unknown(f"parameters of {kind.value}", given, defaults)
    params: Dict[str, Any] = {}
    for key, default in defaults.items():
        if key in given:
            params[key] = given[key]
        elif default is REQUIRED:
            raise ValidationError(f"{kind.value} needs parameter '{key}'")
        else:
            params[key] = default

    resolution = params.get("resolution")
    if resolution is not None and (isinstance(resolution, bool) or not isinstance(resolution, int) or resolution < 8):
        raise ValidationError(f"resolution must be an integer >= 8, got {resolution!r}")
    flat = manifold.kind in (ManifoldKind.TORUS, ManifoldKind.KLEIN_BOTTLE)

    if kind is ExperimentKind.SPECTRUM:
        lam_max = params["lam_max"]
        if isinstance(lam_max, bool) or not isinstance(lam_max, (int, float)) or not 0 <= lam_max < math.inf:
            raise ValidationError(f"lam_max must be a finite number >= 0, got {lam_max!r}")
        params["lam_max"] = float(lam_max)

    elif kind is ExperimentKind.OPNORM:
        params["lams"] = _float_list("lams", params["lams"], 0.0)
        if params["policy"] not in ("unit", "log"):
            raise ValidationError(f"policy must be 'unit' or 'log', got {params['policy']!r}")
        if params["policy"] == "log" and min(params["lams"]) <= math.e:
            raise ValidationError("the log policy needs every lam > e")
        params["q"] = _exponent_list("q", params["q"], 1.0)
        candidates = params["candidates"]
        allowed = {"coherent", "eigenfunctions", "beam", "zonal"}
        if not isinstance(candidates, list) or not candidates or not set(candidates) <= allowed:
            raise ValidationError(f"candidates must be a non-empty subset of {sorted(allowed)}")
        if {"beam", "zonal"} & set(candidates) and manifold.kind is not ManifoldKind.SPHERE:
            raise CapabilityError("beam and zonal candidates live on spheres")
        if "zonal" in candidates and manifold.dimension != 2:
            raise CapabilityError("zonal candidates are implemented on S^2 only")

    elif kind is ExperimentKind.KNAPP_SCAN:
        if not flat:
            raise CapabilityError(f"knapp-scan runs on flat manifolds, got {manifold.kind.value}")
        params["k"] = _positive_int_list("k", params["k"], 2)
        params["q"] = _exponent_list("q", params["q"], 1.0)
        if params["direction"] is None:
            params["direction"] = [1] + [0] * (manifold.dimension - 1)
        direction = params["direction"]
        if (not isinstance(direction, list) or len(direction) != manifold.dimension
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in direction)):
            raise ValidationError(f"direction must be {manifold.dimension} integers, got {direction!r}")
        if not 0.0 < _number("c0", params["c0"]) < 1.0:
            raise ValidationError(f"c0 must lie in (0, 1), got {params['c0']}")
        if not 0.0 < _number("half_window", params["half_window"]) < 1.0:
            raise ValidationError(f"half_window must lie in (0, 1), got {params['half_window']}")
        if not 0.0 <= _number("drop_threshold", params["drop_threshold"]) < 1.0:
            raise ValidationError(f"drop_threshold must lie in [0, 1), got {params['drop_threshold']}")
        if not _number("localization_K", params["localization_K"]) > 0:
            raise ValidationError("localization_K must be positive")
        samples = params["deck_samples"]
        if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
            raise ValidationError(f"deck_samples must be a positive integer, got {samples!r}")
        if not isinstance(params["export_records"], bool):
            raise ValidationError("export_records must be true or false")

    elif kind is ExperimentKind.BEAM_SCAN:
        if manifold.kind is not ManifoldKind.SPHERE:
            raise CapabilityError(f"beam-scan runs on spheres, got {manifold.kind.value}")
        params["l"] = _positive_int_list("l", params["l"], 1)
        params["q"] = _exponent_list("q", params["q"], 1.0)
        families = params["families"]
        if not isinstance(families, list) or not families or not set(families) <= {"beam", "zonal"}:
            raise ValidationError("families must be a non-empty subset of ['beam', 'zonal']")
        if "zonal" in families and manifold.dimension != 2:
            raise CapabilityError("zonal functions are implemented on S^2 only")
        if not 0.0 < _number("tube_exponent", params["tube_exponent"]) < 0.5:
            raise ValidationError(f"tube_exponent must lie in (0, 0.5), got {params['tube_exponent']}")

    elif kind is ExperimentKind.KERNEL_DECAY:
        params["lams"] = _float_list("lams", params["lams"], math.e)
        params["z1"] = _float_list("z1", params["z1"])
        params["z_perp"] = _float_list("z_perp", params["z_perp"], 0.0, strict=False)
        if not 0.0 < _number("c0", params["c0"]) < 1.0:
            raise ValidationError(f"c0 must lie in (0, 1), got {params['c0']}")

    else:
        for key in ("input", "column", "lam_column"):
            if not isinstance(params[key], str) or not params[key]:
                raise ValidationError(f"parameter '{key}' must be a non-empty string")
        if params["normalize_by"] is not None and not isinstance(params["normalize_by"], str):
            raise ValidationError("normalize_by must be a column name")
        if not isinstance(params["where"], dict):
            raise ValidationError("where must map column names to required values")
        params["q"] = parse_exponent(params["q"])
        if not params["q"] > 2.0:
            raise ValidationError(f"growth exponents need q > 2, got {params['q']}")
        if kind is ExperimentKind.FIT:
            if params["mode"] not in ("a-fixed", "free"):
                raise ValidationError(f"mode must be 'a-fixed' or 'free', got {params['mode']!r}")
            if params["a_fixed"] is not None:
                _number("a_fixed", params["a_fixed"])
    return params


def _number(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ValidationError(f"parameter '{name}' must be a finite number, got {value!r}")
    return float(value)


@dataclass
class RunManifest:
    """What a run did: config identity, stage timings, cache use and output digests."""

    config_hash: str
    tool_version: str
    experiment: str
    status: str = "partial"
    started_at: Optional[str] = None
    finished_at: Optional[str] = None
    stage_seconds: Dict[str, float] = field(default_factory=dict)
    cache: Dict[str, int] = field(default_factory=lambda: {"hits": 0, "misses": 0})
    completed: List[str] = field(default_factory=list)
    outputs: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "tool_version": self.tool_version,
            "experiment": self.experiment,
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "stage_seconds": dict(self.stage_seconds),
            "cache": dict(self.cache),
            "completed": list(self.completed),
            "outputs": dict(self.outputs),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                config_hash=data["config_hash"],
                tool_version=data["tool_version"],
                experiment=data["experiment"],
                status=data.get("status", "partial"),
                started_at=data.get("started_at"),
                finished_at=data.get("finished_at"),
                stage_seconds=dict(data.get("stage_seconds", {})),
                cache=dict(data.get("cache", {"hits": 0, "misses": 0})),
                completed=list(data.get("completed", [])),
                outputs=dict(data.get("outputs", {})),
            )
        except (KeyError, TypeError) as e:
            raise ValidationError(f"manifest is missing {e}")
