"""Storage agent: fee setting, spoilage, expiry and priority admission."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..agents.farmer import FarmerType
from ..domain import StorageFacilitySpec
from .pricing import set_price_absolute


@dataclass
class StorageLot:
    owner_id: int
    owner_type: FarmerType
    crop: str
    quantity: float
    age: int = 0


@dataclass
class StorageRequest:
    owner_id: int
    owner_type: FarmerType
    crop: str
    quantity: float


@dataclass
class AdmissionResult:
    admitted: list[tuple[StorageRequest, float]] = field(default_factory=list)
    returned: list[tuple[StorageRequest, float]] = field(default_factory=list)
    spoiled: dict[str, float] = field(default_factory=dict)
    expired: list[StorageLot] = field(default_factory=list)


@dataclass
class StorageLedger:
    """Lots held by the storage agent plus the history its fees are priced from."""
    spec: StorageFacilitySpec
    lots: list[StorageLot] = field(default_factory=list)
    fees: dict[str, float] = field(default_factory=dict)
    request_history: dict[str, list[float]] = field(default_factory=dict)
    remaining_history: dict[str, list[float]] = field(default_factory=dict)

    @property
    def account(self) -> str:
        return "storage"

    def occupied(self, crop: str) -> float:
        return sum(lot.quantity for lot in self.lots if lot.crop == crop)

    def remaining(self, crop: str) -> float:
        return max(self.spec.capacity.get(crop, 0.0) - self.occupied(crop), 0.0)

    def fee(self, crop: str) -> float:
        return self.fees.get(crop, self.spec.fee_multiplier.get(crop, 0.0))

    def remove(self, lot: StorageLot) -> None:
        self.lots.remove(lot)

    def age_lots(self) -> tuple[dict[str, float], list[StorageLot]]:
        """Spoil every lot by its loss rate, age it, and purge expired lots."""
        spoiled: dict[str, float] = {}
        expired = []
        kept = []
        for lot in self.lots:
            loss = lot.quantity * self.spec.loss_rate.get(lot.crop, 0.0)
            lot.quantity -= loss
            lot.age += 1
            spoiled[lot.crop] = spoiled.get(lot.crop, 0.0) + loss
            if lot.age > self.spec.expiration.get(lot.crop, 1):
                expired.append(lot)
                spoiled[lot.crop] += lot.quantity
            else:
                kept.append(lot)
        self.lots = kept
        return spoiled, expired


def storage_price(
    request_history: Sequence[float],
    remaining_history: Sequence[float],
    fee_multiplier: float,
) -> float:
    """Per-unit fee priced like a commodity: requests play sales, free capacity plays stock."""
    return set_price_absolute(request_history, remaining_history, fee_multiplier, fee_multiplier)


def storage_admit_and_age(ledger: StorageLedger, requests: Sequence[StorageRequest]) -> AdmissionResult:
    """Age existing lots, then admit new requests by owner priority.

    Type3 owners are served before Type2 and Type1, ties by owner id. What
    does not fit is returned for immediate sale.
    """
    result = AdmissionResult()
    result.spoiled, result.expired = ledger.age_lots()

    crops = sorted({r.crop for r in requests} | set(ledger.spec.crops()))
    free = {crop: ledger.remaining(crop) for crop in crops}
    for crop in crops:
        requested = sum(r.quantity for r in requests if r.crop == crop)
        ledger.request_history.setdefault(crop, []).append(requested)
        ledger.remaining_history.setdefault(crop, []).append(free[crop])

    ordered = sorted(requests, key=lambda r: (r.owner_type.storage_priority, r.owner_id))
    for request in ordered:
        if request.quantity <= 0:
            continue
        accepted = min(request.quantity, free[request.crop])
        if accepted > 0:
            free[request.crop] -= accepted
            ledger.lots.append(StorageLot(request.owner_id, request.owner_type, request.crop, accepted))
            result.admitted.append((request, accepted))
        if accepted < request.quantity:
            result.returned.append((request, request.quantity - accepted))
    return result
