import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import pandas as pd

FLOAT_FORMAT = "%.17g"


class ResultWriter:
    """Writes result tables and reports with a byte-stable layout."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def write_csv(self, path: Union[str, Path], columns: Sequence[str], rows: Sequence[Dict[str, Any]]) -> Path:
        """
        Save rows as CSV with every float at 17 significant digits.

        Args:
            path: Destination file
            columns: Column order; every row must provide each column
            rows: Row mappings

        Returns:
            The written path
        """
        path = Path(path)
        try:
            frame = pd.DataFrame([[row[c] for c in columns] for row in rows], columns=list(columns))
            path.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
            self.logger.info(f"Table with {len(frame)} rows saved to {path}")
            return path
        except Exception as e:
            self.logger.error(f"Error saving table {path}: {str(e)}")
            raise

    def read_csv(self, path: Union[str, Path]) -> pd.DataFrame:
        """Read a table written by write_csv; floats round-trip exactly."""
        try:
            return pd.read_csv(path, float_precision="round_trip")
        except Exception as e:
            self.logger.error(f"Error reading table {path}: {str(e)}")
            raise

    def read_rows(self, path: Union[str, Path]) -> List[Dict[str, Any]]:
        frame = self.read_csv(path)
        return [{column: _native(value) for column, value in row.items()} for row in frame.to_dict("records")]

    def write_json(self, path: Union[str, Path], data: Dict[str, Any]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, sort_keys=True)
                f.write("\n")
            self.logger.info(f"Report saved to {path}")
            return path
        except Exception as e:
            self.logger.error(f"Error saving report {path}: {str(e)}")
            raise

    @staticmethod
    def file_digest(path: Union[str, Path]) -> str:
        """SHA-256 of the file contents."""
        digest = hashlib.sha256()
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                digest.update(block)
        return digest.hexdigest()


def _native(value: Any) -> Any:
    # numpy scalars from pandas back to int/float/str
    return value.item() if hasattr(value, "item") else value
