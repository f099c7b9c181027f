from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from data_types.errors import ConfigError
from handlers.base import BaseIO
from utils.logger import Logger

COLUMNS = ["method", "gamma", "mu", "rho", "error", "iterations", "residual"]


class ReportTable(BaseIO):
    def __init__(self, records: list[dict], config_path: str = None):
        """
        Comparison table over run records, one row per record.

        Columns are method, gamma, mu, rho, error (against the ground truth,
        when the record has one), iterations, residual and the estimate
        entries a1_1, a1_2, ... in row-major order. Rows are sorted by gamma.

        gamma, mu and rho come from the result only. Methods that take no
        penalty weight (ls, silverman, realize, asymptotics) leave them empty
        and sort last, whatever defaults the record's hyperparams carry.
        """
        super().__init__(config_path)
        if not records:
            raise ConfigError("no run records to tabulate", field="records")
        self.records = records
        self.logger = Logger(__name__)
        self.float_format = self.load_from_config("CSV").get("float_format", "%.17g")

    @staticmethod
    def _row(record: dict) -> dict:
        result = record.get("result") or {}
        report = result.get("report") or {}
        row = {
            "method": record.get("method"),
            "gamma": result.get("gamma"),
            "mu": result.get("mu"),
            "rho": result.get("rho"),
            "error": record.get("error_vs_ground_truth"),
            "iterations": report.get("iterations"),
            "residual": result.get(
                "stationarity_residual", (report.get("grad_norms") or [None])[-1]
            ),
        }
        if result.get("A") is not None:
            estimate = np.atleast_2d(np.asarray(result["A"], dtype=float))
            for (i, j), value in np.ndenumerate(estimate):
                row[f"a{i + 1}_{j + 1}"] = value
        return row

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([self._row(record) for record in self.records])
        frame = frame.reindex(
            columns=COLUMNS + [column for column in frame.columns if column not in COLUMNS]
        )
        # stable sort keeps record order among equal gammas
        return frame.sort_values("gamma", kind="mergesort", na_position="last").reset_index(drop=True)

    def write(self, path: Optional[Union[str, Path]] = None) -> str:
        """Writes the table to `path` and returns the CSV text."""
        text = self.to_frame().to_csv(index=False, float_format=self.float_format)
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            self.logger.info(f"report table with {len(self.records)} rows written to {path}")
        return text
