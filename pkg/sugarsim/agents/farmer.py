"""Farmer agents: state, land allocation, crop choice, crop care, harvest and exit."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from ..config import FarmerProfile
from ..domain import ContractViolation, CropSpec

logger = logging.getLogger(__name__)


class FarmerType(Enum):
    """Farmer categories by savings and water access."""
    TYPE1 = "type1"  # low savings, needs water
    TYPE2 = "type2"  # water-sufficient
    TYPE3 = "type3"  # water surplus, lends water

    @property
    def storage_priority(self) -> int:
        """Lower is served first by the storage agent."""
        return {FarmerType.TYPE3: 0, FarmerType.TYPE2: 1, FarmerType.TYPE1: 2}[self]


class WaterSource(Enum):
    """Where a planted crop's water comes from."""
    OWN = "own"
    AGENT = "agent"
    LENDER = "lender"
    RAIN = "rain"


@dataclass
class HarvestRecord:
    """Revenue collected for one harvest while its income window is open."""
    crop: str
    step: int
    quantity: float
    revenue: float = 0.0


@dataclass
class PlantingState:
    """What a farmer currently has in the ground."""
    crop: Optional[str] = None
    land_allocated: dict[str, float] = field(default_factory=dict)
    planted_at: int = 0
    quality: float = 1.0
    missed_pesticide_steps: int = 0
    steps_to_harvest: int = 0
    harvests_done: int = 0
    lender_crop_share: Optional[float] = None
    lender_id: Optional[int] = None
    water_source: Optional[WaterSource] = None
    water_volume: float = 0.0  # per step, committed by the water provider

    @property
    def planted(self) -> bool:
        return self.crop is not None

    @property
    def area(self) -> float:
        if self.crop is None:
            return 0.0
        return self.land_allocated.get(self.crop, 0.0)

    def clear(self) -> None:
        self.crop = None
        self.land_allocated = {}
        self.quality = 1.0
        self.missed_pesticide_steps = 0
        self.steps_to_harvest = 0
        self.harvests_done = 0
        self.lender_crop_share = None
        self.lender_id = None
        self.water_source = None
        self.water_volume = 0.0


@dataclass
class Expectations:
    """Learned per-crop income expectation and land upper limit."""
    income_expectation: dict[str, float] = field(default_factory=dict)
    upper_limit: dict[str, float] = field(default_factory=dict)
    last_harvest: dict[str, HarvestRecord] = field(default_factory=dict)


@dataclass
class FarmerState:
    """One farmer's evolving economic state."""
    id: int
    farmer_type: FarmerType
    family_size: int
    savings: float
    per_person_charge: float  # per month, inflation adjusted
    safety_buffer: float
    land: float
    credit_rating: float
    info_noise_sigma: float
    water_endowment: float
    savings_history: deque = field(default_factory=lambda: deque(maxlen=16))
    exited: bool = False
    exit_step: Optional[int] = None
    locality: int = 0
    base_per_person_charge: float = 0.0
    base_safety_buffer: float = 0.0
    inventory: dict[str, float] = field(default_factory=dict)
    planting: PlantingState = field(default_factory=PlantingState)
    expectations: Expectations = field(default_factory=Expectations)

    @property
    def account(self) -> str:
        return f"farmer:{self.id}"

    @property
    def needs_water(self) -> bool:
        return self.farmer_type is FarmerType.TYPE1

    def family_charge(self, months_per_step: int) -> float:
        """Family expense for one step."""
        return self.per_person_charge * self.family_size * months_per_step


def init_farmer(
    farmer_type: FarmerType,
    rng: np.random.Generator,
    profile: FarmerProfile,
    *,
    farmer_id: int = 0,
    base_credit_rating: float = 20.0,
    min_land: float = 0.1,
    safety_buffer_fraction: float = 0.10,
    water_per_ha: float = 0.0,
    surplus_per_ha: float = 0.0,
    history_len: int = 16,
) -> FarmerState:
    """Draw a new farmer from its type profile.

    Draw order is family size, savings, land, so the same generator state
    always yields the same farmer.

    Args:
        farmer_type: Farmer category
        rng: Population random stream
        profile: Savings, land and charge distribution for this type
        farmer_id: Sequential id
        base_credit_rating: Type1 rating; other types scale it by the profile multiplier
        min_land: Truncation floor for land draws
        safety_buffer_fraction: Share of initial savings kept as buffer
        water_per_ha: Own water per ha for water-sufficient types
        surplus_per_ha: Extra lendable water per ha for Type3
        history_len: Savings ring buffer capacity

    Returns:
        Fresh FarmerState
    """
    family_size = int(rng.integers(4, 7))
    savings = max(float(rng.normal(profile.savings_mean, profile.savings_sd)), 0.0)
    land = max(float(rng.normal(profile.land_mean, profile.land_sd)), min_land)

    if farmer_type is FarmerType.TYPE1:
        water = 0.0
    elif farmer_type is FarmerType.TYPE2:
        water = land * water_per_ha
    else:
        water = land * (water_per_ha + surplus_per_ha)

    safety_buffer = safety_buffer_fraction * savings
    history: deque = deque(maxlen=max(history_len, 2))
    history.append(savings)
    return FarmerState(
        id=farmer_id,
        farmer_type=farmer_type,
        family_size=family_size,
        savings=savings,
        per_person_charge=profile.per_person_charge,
        safety_buffer=safety_buffer,
        land=land,
        credit_rating=base_credit_rating * profile.credit_multiplier,
        info_noise_sigma=profile.info_noise_sigma,
        water_endowment=water,
        savings_history=history,
        base_per_person_charge=profile.per_person_charge,
        base_safety_buffer=safety_buffer,
    )


def perceive(
    true_value: float,
    sigma: float,
    rng: np.random.Generator,
    non_negative: bool = True,
) -> float:
    """Observe a value through Gaussian noise; exact when sigma is 0."""
    if sigma < 0:
        raise ContractViolation(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return true_value
    value = true_value + float(rng.normal(0.0, sigma))
    return max(value, 0.0) if non_negative else value


def update_upper_limit(
    savings_window: Sequence[float],
    land_allocated: float,
    land: float,
    previous: Optional[float] = None,
) -> float:
    """Scale last cycle's allocation by the trend of savings over the cycle.

    The slope is the raw least-squares slope of savings per step, squashed by
    arctan into a factor in (0, 2). With fewer than two points the previous
    limit is kept (or ``land`` if there is none).
    """
    if land_allocated < 0:
        raise ContractViolation(f"land_allocated must be >= 0, got {land_allocated}")
    if len(savings_window) < 2:
        return land if previous is None else previous

    y = np.asarray(savings_window, dtype=float)
    x = np.arange(len(y), dtype=float)
    slope = float(np.polyfit(x, y, 1)[0])
    factor = 1.0 + 2.0 * math.atan(slope) / math.pi
    return max(min(land_allocated * factor, land), 0.0)


def _per_step_cost(crop: CropSpec, wage: float, water_price: float, with_water: bool) -> float:
    cost = crop.labor_requirement * wage + crop.fert_pest_cost
    if with_water:
        cost += crop.water_requirement * water_price
    return cost


def allocate_land(
    farmer: FarmerState,
    crop: CropSpec,
    *,
    loan_estimate: float,
    wage: float,
    water_price: float,
    months_per_step: int,
    with_water: bool,
    per_cycle_costs: bool = False,
) -> float:
    """Land the farmer can afford to put under ``crop``.

    The budget is savings plus obtainable loans, less the safety buffer and
    the family charge for one harvest cycle. The default denominator adds the
    one-off initial cost to a single step of running costs; with
    ``per_cycle_costs`` the running costs cover the whole harvest cycle.
    Type2 and Type3 farmers pass ``with_water=False``.
    """
    budget = (
        farmer.savings + loan_estimate - farmer.safety_buffer
        - farmer.family_charge(months_per_step) * crop.harvest_cycle
    )
    running = _per_step_cost(crop, wage, water_price, with_water)
    if per_cycle_costs:
        running *= crop.harvest_cycle
    per_ha = crop.initial_cost + running

    upper = farmer.expectations.upper_limit.get(crop.id, farmer.land)
    upper = min(upper, farmer.land)
    if per_ha <= 0:
        return max(upper, 0.0)
    return max(min(budget / per_ha, upper), 0.0)


def estimate_revenue(crop: CropSpec, land_alloc: float, income_expectation: float) -> float:
    return crop.harvests_per_crop * crop.produce * land_alloc * income_expectation


def estimate_profit(
    crop: CropSpec,
    land_alloc: float,
    income_expectation: float,
    *,
    wage: float,
    water_price: float,
    with_water: bool,
) -> float:
    """Expected profit of growing ``crop`` on ``land_alloc`` ha to its end cycle.

    Fertilizer and pesticide costs are not part of the estimate.
    """
    if land_alloc < 0:
        raise ContractViolation(f"land_alloc must be >= 0, got {land_alloc}")
    if land_alloc == 0:
        return 0.0
    cost = crop.initial_cost + crop.labor_requirement * crop.end_cycle * wage
    if with_water:
        cost += crop.water_requirement * water_price * crop.end_cycle
    return estimate_revenue(crop, land_alloc, income_expectation) - land_alloc * cost


def rank_crops(profits: Mapping[str, float]) -> list[str]:
    """Crop ids by descending profit, ties by ascending id."""
    return sorted(profits, key=lambda crop_id: (-profits[crop_id], crop_id))


def rescale_for_water(
    land_allocated: Mapping[str, float],
    water_received: float,
    water_requested: Mapping[str, float],
    water_needs: Optional[Mapping[str, float]] = None,
) -> dict[str, float]:
    """Shrink each allocation by the fraction of requested water actually received.

    Crops with no water requirement keep their allocation.

    Raises:
        ContractViolation: If water_received is negative or a water-needing
            crop has a zero request
    """
    if water_received < 0:
        raise ContractViolation(f"water_received must be >= 0, got {water_received}")
    scaled = {}
    for crop_id, land in land_allocated.items():
        requested = water_requested.get(crop_id, 0.0)
        needs = water_needs.get(crop_id, 0.0) if water_needs is not None else requested
        if requested <= 0:
            if needs > 0 and land > 0:
                raise ContractViolation(
                    f"crop '{crop_id}' needs water but no water was requested for it"
                )
            scaled[crop_id] = land
            continue
        scaled[crop_id] = land * min(water_received, requested) / requested
    return scaled


class OfferResponse(Enum):
    ACCEPT = "accept"
    COUNTER_NOTIFY = "counter_notify"


@dataclass
class OfferDecision:
    response: OfferResponse
    counter_crop: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.response is OfferResponse.ACCEPT


def net_offer_profit(profit: float, revenue: float, produce_share: float) -> float:
    """Profit of a lender's offer after handing over the produce share."""
    return profit - produce_share * revenue


def evaluate_lender_offer(
    offered_net_profit: float,
    rainfed_profits: Mapping[str, float],
) -> OfferDecision:
    """Accept a lender's crop unless some rain-fed crop earns strictly more.

    On refusal the best such rain-fed crop (ties by id) is named.
    """
    better = {c: p for c, p in rainfed_profits.items() if p > offered_net_profit}
    if not better:
        return OfferDecision(OfferResponse.ACCEPT)
    return OfferDecision(OfferResponse.COUNTER_NOTIFY, rank_crops(better)[0])


def compute_total_expense(
    remaining_steps: int,
    crop: CropSpec,
    land_allocated: float,
    *,
    wage: float,
    water_price: float,
    family_charge: float,
    planted: bool,
    with_water: bool,
) -> float:
    """Money needed to carry ``crop`` to the end of its cycle.

    Args:
        remaining_steps: Steps until the end cycle completes (negative counts as 0)
        crop: The crop grown or about to be planted
        land_allocated: Area under the crop
        wage: Current labor wage for the crop
        water_price: Price per water unit (ignored unless with_water)
        family_charge: Family expense per step
        planted: Whether the initial cost is already paid
        with_water: Whether water is bought

    Returns:
        Total expense over the remaining steps
    """
    remaining = max(remaining_steps, 0)
    per_step = (
        land_allocated * (crop.labor_requirement * wage + crop.fert_pest_cost)
        + family_charge
    )
    if with_water:
        per_step += land_allocated * crop.water_requirement * water_price
    total = remaining * per_step
    if not planted:
        total += crop.initial_cost * land_allocated
    return total


def apply_resource_shortfall(quality: float, flexibility: float, used: float, needed: float) -> float:
    """Reduce crop quality after a partially paid water or labor bill."""
    if needed <= 0:
        if used > 0:
            raise ContractViolation("resource used although none was needed")
        return quality
    if used < 0 or used > needed * (1 + 1e-12):
        raise ContractViolation(f"used ({used}) must be within [0, needed={needed}]")
    ratio = min(used / needed, 1.0)
    return max(quality - (1.0 - flexibility * ratio), 0.0)


def apply_pesticide_step(planting: PlantingState, paid: bool, prone_to_pest: int) -> PlantingState:
    """Track consecutive unpaid pesticide steps; too many kill the crop."""
    if not planting.planted:
        raise ContractViolation("pesticide step on an unplanted field")
    if paid:
        planting.missed_pesticide_steps = 0
    else:
        planting.missed_pesticide_steps += 1
        if planting.missed_pesticide_steps > prone_to_pest:
            planting.quality = 0.0
    return planting


@dataclass
class HarvestResult:
    quantity: float
    farmer_share: float
    lender_share: float
    crop_finished: bool


def harvest(planting: PlantingState, crop: CropSpec) -> HarvestResult:
    """Collect a due harvest and split off the water lender's share.

    Resets the harvest countdown. ``crop_finished`` is set once the crop has
    given all the harvests of its end cycle.

    Raises:
        ContractViolation: If the harvest is not due or the crop is dead
    """
    if planting.crop != crop.id:
        raise ContractViolation(f"harvesting '{crop.id}' but '{planting.crop}' is planted")
    if planting.steps_to_harvest != 0:
        raise ContractViolation(
            f"harvest of '{crop.id}' due in {planting.steps_to_harvest} steps"
        )
    if planting.quality <= 0:
        raise ContractViolation(f"crop '{crop.id}' is dead")

    quantity = planting.quality * crop.produce * planting.land_allocated.get(crop.id, 0.0)
    share = planting.lender_crop_share or 0.0
    lender = quantity * share
    planting.steps_to_harvest = crop.harvest_cycle
    planting.harvests_done += 1
    return HarvestResult(
        quantity=quantity,
        farmer_share=quantity - lender,
        lender_share=lender,
        crop_finished=planting.harvests_done >= crop.harvests_per_crop,
    )


def update_income_expectation(previous: float, revenue_in_window: float, stock_produced: float) -> float:
    """Revenue per unit of the last harvest; unchanged if nothing was produced."""
    if stock_produced <= 0:
        return previous
    return revenue_in_window / stock_produced


def storage_decision(
    current_price: float,
    price_history: Sequence[float],
    savings: float,
    storage_fee: float,
    on_hand: float,
    *,
    budget_fraction: float = 0.10,
    memory: int = 5,
) -> float:
    """Quantity to put into storage instead of selling now."""
    if on_hand <= 0 or len(price_history) < memory:
        return 0.0
    average = float(np.mean(price_history[-memory:]))
    if current_price >= average:
        return 0.0
    if storage_fee <= 0:
        return on_hand
    budget = budget_fraction * max(savings, 0.0)
    return min(on_hand, budget / storage_fee)


def check_exit(
    farmer: FarmerState,
    months_per_step: int,
    *,
    exit_steps: int = 4,
    step: Optional[int] = None,
) -> bool:
    """Mark the farmer exited if savings no longer cover ``exit_steps`` of family expense."""
    if farmer.exited:
        return True
    threshold = exit_steps * farmer.family_charge(months_per_step)
    if farmer.savings < threshold:
        farmer.exited = True
        farmer.exit_step = step
        logger.debug(
            f"Farmer {farmer.id} ({farmer.farmer_type.value}) exits: "
            f"savings {farmer.savings:.0f} < {threshold:.0f}"
        )
        return True
    return False
