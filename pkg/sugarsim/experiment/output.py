"""CSV and manifest writer for runs and sweeps."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import pandas as pd

from .. import __version__
from ..config import ScenarioConfig, config_digest
from ..engine.metrics import TYPE_KEYS, MetricsFrame, frames_to_dataframe
from .sweep import ResultTable, SweepSpec, spec_summary

logger = logging.getLogger(__name__)

TIMESERIES_FILE = "timeseries.csv"
SWEEP_FILE = "sweep.csv"
MANIFEST_FILE = "manifest.json"


class OutputWriter:
    """Writes result files into one output directory.

    Files contain no timestamps, so identical inputs give identical bytes.
    """

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    def _prepare(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _write_csv(self, frame: pd.DataFrame, name: str) -> Path:
        path = self.out_dir / name
        frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
        logger.debug(f"Wrote {len(frame)} rows to {path}")
        return path

    def _write_manifest(self, payload: dict[str, Any]) -> Path:
        path = self.out_dir / MANIFEST_FILE
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        return path

    def write_run(self, frames: Sequence[MetricsFrame], config: ScenarioConfig) -> list[Path]:
        """Write timeseries.csv (one row per step) and manifest.json.

        Returns:
            Paths written
        """
        self._prepare()
        paths = [self._write_csv(frames_to_dataframe(frames), TIMESERIES_FILE)]
        paths.append(self._write_manifest({
            "kind": "run",
            "package": "sugarsim",
            "version": __version__,
            "scenario": config.name,
            "config_sha256": config_digest(config),
            "seeds": [config.seed],
            "steps": frames[-1].step if frames else 0,
        }))
        logger.info(f"Run outputs written to {self.out_dir}")
        return paths

    def write_sweep(self, table: ResultTable, spec: SweepSpec) -> list[Path]:
        """Write sweep.csv, plot_exit_fraction*.csv and manifest.json.

        Returns:
            Paths written
        """
        self._prepare()
        paths = [self._write_csv(table.to_dataframe(), SWEEP_FILE)]
        paths.append(self._write_csv(table.plot_data("exit_fraction"), "plot_exit_fraction.csv"))
        for key in TYPE_KEYS:
            metric = f"exit_fraction_{key}"
            paths.append(self._write_csv(table.plot_data(metric), f"plot_{metric}.csv"))

        manifest = {
            "kind": "sweep",
            "package": "sugarsim",
            "version": __version__,
            "scenario": spec.base.name,
            "config_sha256": config_digest(spec.base),
            "failed_points": len(table.failures),
        }
        manifest.update(spec_summary(spec))
        paths.append(self._write_manifest(manifest))
        logger.info(f"Sweep outputs written to {self.out_dir}")
        return paths


def emit_outputs(
    result: Union[Sequence[MetricsFrame], ResultTable],
    out_dir: Union[str, Path],
    *,
    config: Optional[ScenarioConfig] = None,
    spec: Optional[SweepSpec] = None,
) -> list[Path]:
    """Write a run's frames (with its config) or a sweep table (with its spec).

    Raises:
        ValueError: If the matching config or spec is missing
        OSError: If the directory or a file cannot be written
    """
    writer = OutputWriter(out_dir)
    if isinstance(result, ResultTable):
        if spec is None:
            raise ValueError("a sweep table needs its SweepSpec")
        return writer.write_sweep(result, spec)
    if config is None:
        raise ValueError("run frames need their ScenarioConfig")
    return writer.write_run(result, config)
