import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from src.errors import ContractError
from src.models.manifold import EigenIndex, ManifoldModel
from src.models.spectral_types import SpectralWindow
from src.services import manifolds


@dataclass
class SpectrumHandle:
    """Materialized spectrum of ``model`` on [0, lam_max]."""

    model: ManifoldModel
    lam_max: float
    indices: List[EigenIndex] = field(default_factory=list)
    path: Optional[Path] = None
    hit: bool = False

    @property
    def count(self) -> int:
        return len(self.indices)

    def window(self, window: SpectralWindow) -> List[EigenIndex]:
        """Cached indices inside ``window``; the window must lie below lam_max."""
        if window.upper > self.lam_max:
            raise ContractError(f"window {window.describe()} reaches past the cached lam_max={self.lam_max:g}")
        return [index for index in self.indices if window.contains(index.frequency)]


class SpectrumCache:
    """
    Stores enumerated spectra as JSON-lines files keyed by the manifold descriptor.

    The first line of each file is a header {descriptor, lam_max, count};
    every following line is [label..., frequency]. A file enumerated up to
    some lam_max answers every request at or below it.
    """

    def __init__(self, cache_dir: Union[str, Path] = ".sclab_cache"):
        self.logger = logging.getLogger(__name__)
        self.cache_dir = Path(cache_dir)
        self.hits = 0
        self.misses = 0

    def _get_cache_key(self, model: ManifoldModel) -> str:
        return model.descriptor_hash()

    def _cache_file(self, model: ManifoldModel) -> Path:
        return self.cache_dir / f"spectrum_{self._get_cache_key(model)}.jsonl"

    def load_cache(self, model: ManifoldModel) -> Optional[SpectrumHandle]:
        """Read the cache file of ``model``; None when absent or unreadable."""
        cache_file = self._cache_file(model)
        if not cache_file.exists():
            return None
        try:
            with open(cache_file, "r") as f:
                header = json.loads(f.readline())
                if header.get("descriptor") != model.descriptor():
                    raise ValueError("descriptor does not match the requested manifold")
                indices = []
                for line in f:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    label = tuple(int(v) for v in entry[:-1])
                    indices.append(EigenIndex(model.kind, label, float(entry[-1])))
            if len(indices) != int(header["count"]):
                raise ValueError(f"header promises {header['count']} entries, file holds {len(indices)}")
            return SpectrumHandle(model, float(header["lam_max"]), indices, cache_file)
        except Exception as e:
            self.logger.warning(f"Error loading spectrum cache {cache_file}: {str(e)}; rebuilding")
            return None

    def save_cache(self, handle: SpectrumHandle) -> Path:
        cache_file = self._cache_file(handle.model)
        staging = cache_file.with_suffix(".jsonl.tmp")
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            with open(staging, "w") as f:
                header = {"descriptor": handle.model.descriptor(), "lam_max": handle.lam_max, "count": handle.count}
                f.write(json.dumps(header, sort_keys=True) + "\n")
                for index in handle.indices:
                    f.write(json.dumps(list(index.label) + [index.frequency]) + "\n")
            os.replace(staging, cache_file)
            self.logger.info(f"Saved {handle.count} eigenvalues of {handle.model} up to {handle.lam_max:g} to cache")
            return cache_file
        except Exception as e:
            self.logger.error(f"Error saving spectrum cache: {str(e)}")
            raise

    def cache_spectrum(self, model: ManifoldModel, lam_max: float) -> SpectrumHandle:
        """
        Materialize every eigenvalue of ``model`` in [0, lam_max].

        Args:
            model: Manifold whose spectrum is cached
            lam_max: Upper frequency; 0 gives an empty handle

        Returns:
            SpectrumHandle with ``hit`` set when the file already covered lam_max

        Raises:
            ContractError: If lam_max is negative or not finite
        """
        lam_max = float(lam_max)
        if not lam_max >= 0.0 or lam_max == float("inf"):
            raise ContractError(f"lam_max must be a finite number >= 0, got {lam_max}")
        if lam_max == 0.0:
            return SpectrumHandle(model, 0.0)

        cached = self.load_cache(model)
        if cached is not None and cached.lam_max >= lam_max:
            self.hits += 1
            indices = [index for index in cached.indices if index.frequency <= lam_max]
            self.logger.info(f"Spectrum cache hit for {model}: {len(indices)} eigenvalues up to {lam_max:g}")
            return SpectrumHandle(model, lam_max, indices, cached.path, hit=True)

        self.misses += 1
        indices = manifolds.enumerate_window(model, SpectralWindow.between(0.0, lam_max))
        handle = SpectrumHandle(model, lam_max, indices)
        handle.path = self.save_cache(handle)
        return handle

    def stats(self) -> Dict[str, int]:
        return {"hits": self.hits, "misses": self.misses}
