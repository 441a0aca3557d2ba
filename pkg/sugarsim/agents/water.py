"""Water market: crop-dictating Type3 lenders and the price-charging water agent."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from ..domain import ContractViolation


@dataclass
class WaterRequest:
    """A Type1 farmer's application for water, listing every crop it would grow."""
    farmer_id: int
    water_requirement: dict[str, float] = field(default_factory=dict)
    estimated_produce: dict[str, float] = field(default_factory=dict)
    land_willing: dict[str, float] = field(default_factory=dict)


@dataclass
class WaterAllocation:
    """Water granted to one farmer.

    Lender allocations dictate a crop and take a produce share; water agent
    allocations carry a unit price and no crop.
    """
    farmer_id: int
    volume: float
    crop: Optional[str] = None
    produce_share: Optional[float] = None
    unit_price: Optional[float] = None
    lender_id: Optional[int] = None
    estimated_produce: float = 0.0


@dataclass
class LenderPool:
    """A lender's spare water and the requests it may serve."""
    lender_id: int
    available_water: float
    requests: list[WaterRequest] = field(default_factory=list)
    committed_produce: dict[str, float] = field(default_factory=dict)


def lender_produce_share(volume: float, required: float, share_factor: float) -> float:
    """Produce fraction owed for lending ``volume`` of ``required`` water."""
    if required <= 0:
        return 0.0
    return min(share_factor * volume / required, 1.0)


def crop_priority(crop_values: Mapping[str, float]) -> list[str]:
    """Crops by descending price * produce, ties by crop id."""
    return sorted(crop_values, key=lambda c: (-crop_values[c], c))


def allocate_with_crop(
    available_water: float,
    requests: Sequence[WaterRequest],
    crop_values: Mapping[str, float],
    minimum_produce: Mapping[str, float],
    *,
    share_factor: float = 0.25,
    lender_id: Optional[int] = None,
) -> list[WaterAllocation]:
    """Assign water and a dictated crop to applicants.

    Crops are tried from most to least valuable. For each crop, applicants
    that can grow it are served largest estimated produce first until water
    runs out, the last one partially with prorated produce. The first crop
    whose summed produce reaches its minimum wins; otherwise nothing is
    allocated.

    Args:
        available_water: Lender's spare water
        requests: Applicants
        crop_values: Crop id -> price * produce from the lender's view
        minimum_produce: Crop id -> minimum total produce (missing means 0)
        share_factor: Produce share for lending all of a request's water
        lender_id: Recorded on every allocation

    Returns:
        Allocations for the chosen crop, or an empty list
    """
    if not requests:
        return []

    for crop in crop_priority(crop_values):
        applicants = [
            r for r in requests if r.water_requirement.get(crop, 0.0) > 0
        ]
        if not applicants:
            continue
        applicants.sort(key=lambda r: (-r.estimated_produce.get(crop, 0.0), r.farmer_id))

        water = available_water
        total = 0.0
        allocations: list[WaterAllocation] = []
        for request in applicants:
            if water <= 0:
                break
            required = request.water_requirement[crop]
            produce = request.estimated_produce.get(crop, 0.0)
            if required <= water:
                volume = required
                water -= required
            else:
                volume = water
                produce = produce * water / required
                water = 0.0
            total += produce
            allocations.append(WaterAllocation(
                farmer_id=request.farmer_id,
                volume=volume,
                crop=crop,
                produce_share=lender_produce_share(volume, required, share_factor),
                lender_id=lender_id,
                estimated_produce=produce,
            ))

        if total >= minimum_produce.get(crop, 0.0):
            return allocations
    return []


def reallocate_round(
    pools: Sequence[LenderPool],
    crop_values: Mapping[str, float],
    minimum_produce: Mapping[str, float],
    *,
    share_factor: float = 0.25,
) -> list[WaterAllocation]:
    """Run one allocation round across lenders in id order.

    Each lender's minimum produce is reduced by what its already-served
    farmers have committed. A farmer is served by at most one lender per
    round: later lenders skip farmers an earlier lender has taken.
    """
    served: set[int] = set()
    result: list[WaterAllocation] = []
    for pool in sorted(pools, key=lambda p: p.lender_id):
        pending = [r for r in pool.requests if r.farmer_id not in served]
        if not pending or pool.available_water <= 0:
            continue
        adjusted = {
            crop: max(minimum_produce.get(crop, 0.0) - pool.committed_produce.get(crop, 0.0), 0.0)
            for crop in crop_values
        }
        allocations = allocate_with_crop(
            pool.available_water, pending, crop_values, adjusted,
            share_factor=share_factor, lender_id=pool.lender_id,
        )
        for allocation in allocations:
            served.add(allocation.farmer_id)
        result.extend(allocations)
    return result


def water_agent_allocate(
    available_water: float,
    requests: Mapping[int, float],
    unit_price: float,
) -> list[WaterAllocation]:
    """Sell water to requesters in ascending farmer id until it runs out."""
    if unit_price < 0:
        raise ContractViolation(f"water unit price must be >= 0, got {unit_price}")
    water = available_water
    allocations = []
    for farmer_id in sorted(requests):
        if water <= 0:
            break
        wanted = requests[farmer_id]
        if wanted <= 0:
            continue
        volume = min(wanted, water)
        water -= volume
        allocations.append(WaterAllocation(farmer_id=farmer_id, volume=volume, unit_price=unit_price))
    return allocations
