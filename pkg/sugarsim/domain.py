"""Static objects shared by every agent: crops, labor, storage facility and the inflation clock."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ContractViolation(ValueError):
    """Raised when an operation is called outside its preconditions."""


class StrictModel(BaseModel):
    """Base for every scenario model: unknown keys are rejected."""
    model_config = ConfigDict(extra="forbid")


class Buyer(Enum):
    """Who buys a crop's produce."""
    MILL = "mill"
    MARKET = "market"


def apply_inflation(value: float, steps: int, rate: float) -> float:
    """Compound ``value`` by ``rate`` once per step.

    Args:
        value: Base amount (non-negative)
        steps: Number of elapsed steps
        rate: Fractional increase per step

    Returns:
        value * (1 + rate) ** steps

    Raises:
        ContractViolation: If steps or value is negative
    """
    if steps < 0:
        raise ContractViolation(f"inflation steps must be >= 0, got {steps}")
    if value < 0:
        raise ContractViolation(f"inflation base value must be >= 0, got {value}")
    if steps == 0:
        return value
    return value * (1.0 + rate) ** steps


class CropSpec(StrictModel):
    """Agronomic and economic parameters of one crop."""
    id: str
    end_cycle: int = Field(ge=1)
    harvest_cycle: int = Field(ge=1)
    fert_pest_cost: float = Field(ge=0)          # per ha per step
    labor_requirement: float = Field(ge=0)       # labor units per ha per step
    water_requirement: float = Field(ge=0)       # water units per ha per step
    labor_flexibility: float = Field(ge=0, le=1)
    water_flexibility: float = Field(ge=0, le=1)
    prone_to_pest: int = Field(ge=1)
    produce: float = Field(ge=0)                 # per ha per harvest
    initial_cost: float = Field(ge=0)            # per ha
    minimum_produce: Optional[float] = Field(default=None, ge=0)
    crop_mult_factor: float = Field(default=1.0, ge=0)
    buyer: Buyer = Buyer.MARKET

    @model_validator(mode="after")
    def _check_cycles(self) -> "CropSpec":
        if self.harvest_cycle > self.end_cycle:
            raise ValueError(
                f"crop '{self.id}': harvest_cycle ({self.harvest_cycle}) "
                f"exceeds end_cycle ({self.end_cycle})"
            )
        if self.end_cycle % self.harvest_cycle != 0:
            raise ValueError(
                f"crop '{self.id}': end_cycle ({self.end_cycle}) is not a "
                f"multiple of harvest_cycle ({self.harvest_cycle})"
            )
        return self

    @property
    def harvests_per_crop(self) -> int:
        return self.end_cycle // self.harvest_cycle

    @property
    def needs_water(self) -> bool:
        return self.water_requirement > 0


class StorageFacilitySpec(StrictModel):
    """Per-crop storage capacity, fee scale, spoilage and shelf life."""
    capacity: dict[str, float] = Field(default_factory=dict)
    fee_multiplier: dict[str, float] = Field(default_factory=dict)
    loss_rate: dict[str, float] = Field(default_factory=dict)
    expiration: dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_ranges(self) -> "StorageFacilitySpec":
        for crop, cap in self.capacity.items():
            if cap < 0:
                raise ValueError(f"storage capacity for '{crop}' must be >= 0")
        for crop, fee in self.fee_multiplier.items():
            if fee < 0:
                raise ValueError(f"storage fee_multiplier for '{crop}' must be >= 0")
        for crop, rate in self.loss_rate.items():
            if not 0 <= rate < 1:
                raise ValueError(f"storage loss_rate for '{crop}' must be in [0, 1)")
        for crop, steps in self.expiration.items():
            if steps < 1:
                raise ValueError(f"storage expiration for '{crop}' must be >= 1")
        return self

    def crops(self) -> list[str]:
        """Crops with non-zero storage capacity, sorted by id."""
        return sorted(c for c, cap in self.capacity.items() if cap > 0)


@dataclass
class LaborMarket:
    """Per-crop wages, inflated from their base values each step."""
    base_wages: dict[str, float]
    rate_per_step: float = 0.0001
    wages: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for crop, wage in self.base_wages.items():
            if wage <= 0:
                raise ContractViolation(f"wage for '{crop}' must be > 0, got {wage}")
        if not self.wages:
            self.wages = dict(self.base_wages)

    def advance(self, step: int) -> None:
        self.wages = {
            crop: apply_inflation(base, step, self.rate_per_step)
            for crop, base in self.base_wages.items()
        }

    def wage(self, crop_id: str) -> float:
        try:
            return self.wages[crop_id]
        except KeyError:
            raise ContractViolation(f"no wage configured for crop '{crop_id}'") from None


@dataclass
class InflationClock:
    """Tracks the step count that all inflated quantities are derived from."""
    rate_per_step: float = 0.0001
    current_step: int = 0

    def __post_init__(self):
        if self.rate_per_step < 0 or not math.isfinite(self.rate_per_step):
            raise ContractViolation(f"inflation rate must be >= 0, got {self.rate_per_step}")

    def tick(self) -> int:
        self.current_step += 1
        return self.current_step

    def inflate(self, value: float) -> float:
        return apply_inflation(value, self.current_step, self.rate_per_step)
