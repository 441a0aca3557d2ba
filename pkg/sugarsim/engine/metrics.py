"""Per-step metric frames."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from ..agents.farmer import FarmerState, FarmerType
from ..agents.mill import MillState
from ..market.pricing import MarketBook
from ..market.storage import StorageLedger

TYPE_KEYS = tuple(t.value for t in FarmerType)


@dataclass
class MetricsFrame:
    """Snapshot of the economy at the end of a step."""
    step: int
    mean_savings: dict[str, float] = field(default_factory=dict)
    median_savings: dict[str, float] = field(default_factory=dict)
    exited: dict[str, int] = field(default_factory=dict)
    population: dict[str, int] = field(default_factory=dict)
    price: dict[str, float] = field(default_factory=dict)
    sales: dict[str, float] = field(default_factory=dict)
    stock: dict[str, float] = field(default_factory=dict)
    harvested: dict[str, float] = field(default_factory=dict)
    mill_dues: float = 0.0
    mill_savings: float = 0.0
    sugar_output: float = 0.0
    ethanol_output: float = 0.0
    cane_bought: float = 0.0
    cane_dumped: float = 0.0
    storage_occupied: float = 0.0

    def exit_fraction(self, farmer_type: Optional[str] = None) -> float:
        """Share of farmers (of one type, or all) that have exited."""
        if farmer_type is None:
            total = sum(self.population.values())
            gone = sum(self.exited.values())
        else:
            total = self.population.get(farmer_type, 0)
            gone = self.exited.get(farmer_type, 0)
        return gone / total if total else 0.0

    def to_row(self) -> dict[str, Any]:
        """Flat row with a stable column order."""
        row: dict[str, Any] = {"step": self.step}
        for key in TYPE_KEYS:
            row[f"mean_savings_{key}"] = self.mean_savings.get(key, 0.0)
        for key in TYPE_KEYS:
            row[f"median_savings_{key}"] = self.median_savings.get(key, 0.0)
        for key in TYPE_KEYS:
            row[f"exited_{key}"] = self.exited.get(key, 0)
        row["exit_fraction"] = self.exit_fraction()
        for commodity in self.price:
            row[f"price_{commodity}"] = self.price[commodity]
            row[f"sales_{commodity}"] = self.sales.get(commodity, 0.0)
            row[f"stock_{commodity}"] = self.stock.get(commodity, 0.0)
        for crop in self.harvested:
            row[f"harvest_{crop}"] = self.harvested[crop]
        row["mill_dues"] = self.mill_dues
        row["mill_savings"] = self.mill_savings
        row["sugar_output"] = self.sugar_output
        row["ethanol_output"] = self.ethanol_output
        row["cane_bought"] = self.cane_bought
        row["cane_dumped"] = self.cane_dumped
        row["storage_occupied"] = self.storage_occupied
        return row


def collect_frame(
    step: int,
    farmers: Sequence[FarmerState],
    books: Mapping[str, MarketBook],
    mill: Optional[MillState],
    storage: StorageLedger,
    *,
    harvested: Mapping[str, float],
    cane_dumped: float = 0.0,
    sugar_output: float = 0.0,
    ethanol_output: float = 0.0,
    cane_bought: float = 0.0,
) -> MetricsFrame:
    frame = MetricsFrame(step=step)
    for farmer_type in FarmerType:
        key = farmer_type.value
        members = [f for f in farmers if f.farmer_type is farmer_type]
        savings = np.array([f.savings for f in members], dtype=float)
        frame.population[key] = len(members)
        frame.exited[key] = sum(1 for f in members if f.exited)
        frame.mean_savings[key] = float(savings.mean()) if len(savings) else 0.0
        frame.median_savings[key] = float(np.median(savings)) if len(savings) else 0.0

    for commodity, book in books.items():
        frame.price[commodity] = book.price
        frame.sales[commodity] = book.sale_history[-1] if book.sale_history else 0.0
        frame.stock[commodity] = book.current_stock

    frame.harvested = dict(harvested)
    if mill is not None:
        frame.mill_dues = mill.total_dues()
        frame.mill_savings = mill.savings
    frame.sugar_output = sugar_output
    frame.ethanol_output = ethanol_output
    frame.cane_bought = cane_bought
    frame.cane_dumped = cane_dumped
    frame.storage_occupied = float(sum(lot.quantity for lot in storage.lots))
    return frame


def frames_to_dataframe(frames: Sequence[MetricsFrame]) -> pd.DataFrame:
    """One row per frame, columns in MetricsFrame.to_row order."""
    return pd.DataFrame([frame.to_row() for frame in frames])
