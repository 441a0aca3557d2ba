"""Single-lever batch sweeps across seeds."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from numbers import Real
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

from ..config import SUGAR, ScenarioConfig, ScenarioError, get_lever, set_lever
from ..engine.metrics import TYPE_KEYS, MetricsFrame
from ..engine.simulation import run

logger = logging.getLogger(__name__)

RESULT_COLUMNS = [
    "value",
    "seed",
    "steps",
    "exit_fraction",
    *(f"exit_fraction_{key}" for key in TYPE_KEYS),
    *(f"mean_savings_{key}" for key in TYPE_KEYS),
    "mean_sugar_price",
    "total_dues",
    "error",
]


@dataclass
class SweepSpec:
    """One varied lever, its values and the seeds each value is run with."""
    base: ScenarioConfig
    parameter: str
    values: list[Any]
    seeds: list[int]
    steps: Optional[int] = None

    def validate(self) -> None:
        """Raises ScenarioError for an empty sweep or an unknown lever path."""
        if not self.values:
            raise ScenarioError("sweep needs at least one value")
        if not self.seeds:
            raise ScenarioError("sweep needs at least one seed")
        if len(set(self.seeds)) != len(self.seeds):
            raise ScenarioError(f"duplicate seeds in {self.seeds}")
        current = get_lever(self.base, self.parameter)
        if isinstance(current, (dict, list)):
            raise ScenarioError(f"{self.parameter} is a section, not a single lever")

    def points(self) -> list[tuple[Any, int]]:
        """(value, seed) pairs in output order."""
        return [(value, seed) for value in _ordered(self.values) for seed in sorted(self.seeds)]


def _ordered(values: Sequence[Any]) -> list[Any]:
    if all(isinstance(v, Real) and not isinstance(v, bool) for v in values):
        return sorted(values)
    return list(values)


@dataclass
class ResultRow:
    """Summary of one (value, seed) run; metrics are NaN when the run failed."""
    value: Any
    seed: int
    steps: int = 0
    exit_fraction: float = math.nan
    exit_fraction_by_type: dict[str, float] = field(default_factory=dict)
    mean_savings_by_type: dict[str, float] = field(default_factory=dict)
    mean_sugar_price: float = math.nan
    total_dues: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def to_record(self) -> dict[str, Any]:
        record = {
            "value": self.value,
            "seed": self.seed,
            "steps": self.steps,
            "exit_fraction": self.exit_fraction,
        }
        for key in TYPE_KEYS:
            record[f"exit_fraction_{key}"] = self.exit_fraction_by_type.get(key, math.nan)
        for key in TYPE_KEYS:
            record[f"mean_savings_{key}"] = self.mean_savings_by_type.get(key, math.nan)
        record["mean_sugar_price"] = self.mean_sugar_price
        record["total_dues"] = self.total_dues
        record["error"] = self.error
        return record


@dataclass
class ResultTable:
    """One row per (value, seed), sorted by value then seed."""
    parameter: str
    rows: list[ResultRow] = field(default_factory=list)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_record() for row in self.rows], columns=RESULT_COLUMNS)

    @property
    def failures(self) -> list[ResultRow]:
        return [row for row in self.rows if not row.ok]

    def plot_data(self, metric: str = "exit_fraction") -> pd.DataFrame:
        """Mean and sample standard deviation of ``metric`` per lever value.

        Failed runs are left out; a value seen in a single run has sd 0.
        """
        frame = self.to_dataframe()
        frame = frame[frame["error"] == ""]
        if frame.empty:
            return pd.DataFrame(columns=["x", "mean", "sd", "n"])
        stats = frame.groupby("value", sort=False)[metric].agg(["mean", "std", "count"])
        return pd.DataFrame({
            "x": stats.index.to_list(),
            "mean": stats["mean"].to_numpy(dtype=float),
            "sd": stats["std"].fillna(0.0).to_numpy(dtype=float),
            "n": stats["count"].to_numpy(dtype=int),
        })


def summarize_run(value: Any, seed: int, frames: Sequence[MetricsFrame]) -> ResultRow:
    """Reduce a run's frames to its sweep row."""
    last = frames[-1]
    prices = [frame.price[SUGAR] for frame in frames if SUGAR in frame.price]
    return ResultRow(
        value=value,
        seed=seed,
        steps=last.step,
        exit_fraction=last.exit_fraction(),
        exit_fraction_by_type={key: last.exit_fraction(key) for key in TYPE_KEYS},
        mean_savings_by_type=dict(last.mean_savings),
        mean_sugar_price=float(np.mean(prices)) if prices else math.nan,
        total_dues=last.mill_dues,
    )


def run_point(base: ScenarioConfig, parameter: str, value: Any, seed: int, steps: Optional[int] = None) -> ResultRow:
    """Run one sweep point; any failure becomes the row's error text."""
    try:
        config = set_lever(base, parameter, value)
        config = config.model_copy(update={"seed": seed})
        frames = run(config, steps=steps)
        return summarize_run(value, seed, frames)
    except Exception as e:
        logger.warning(f"Sweep point {parameter}={value!r} seed {seed} failed: {e}")
        return ResultRow(value=value, seed=seed, error=f"{type(e).__name__}: {e}")


def run_sweep(spec: SweepSpec, parallelism: int = 1) -> ResultTable:
    """Run every (value, seed) point of ``spec``.

    Rows come back sorted by (value, seed) whatever the parallelism, so the
    table depends only on ``spec``.

    Args:
        spec: Sweep to run
        parallelism: Worker processes; 1 runs in this process

    Returns:
        ResultTable with one row per point
    """
    spec.validate()
    points = spec.points()
    logger.info(
        f"Sweeping {spec.parameter} over {len(spec.values)} values x "
        f"{len(spec.seeds)} seeds with {parallelism} workers"
    )

    results: dict[int, ResultRow] = {}
    if parallelism <= 1 or len(points) == 1:
        for index, (value, seed) in enumerate(points):
            results[index] = run_point(spec.base, spec.parameter, value, seed, spec.steps)
            logger.info(f"Point {index + 1}/{len(points)}: {spec.parameter}={value!r} seed {seed}")
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as executor:
            futures = {
                executor.submit(run_point, spec.base, spec.parameter, value, seed, spec.steps): index
                for index, (value, seed) in enumerate(points)
            }
            for future in as_completed(futures):
                index = futures[future]
                results[index] = future.result()
                value, seed = points[index]
                logger.info(f"Point {index + 1}/{len(points)} done: {spec.parameter}={value!r} seed {seed}")

    table = ResultTable(parameter=spec.parameter, rows=[results[i] for i in range(len(points))])
    if table.failures:
        logger.warning(f"{len(table.failures)} of {len(points)} sweep points failed")
    return table


def spec_summary(spec: SweepSpec) -> dict[str, Any]:
    """Plain description of a sweep for manifests."""
    return {
        "parameter": spec.parameter,
        "values": list(_ordered(spec.values)),
        "seeds": sorted(spec.seeds),
        "steps": spec.steps if spec.steps is not None else spec.base.steps,
    }
