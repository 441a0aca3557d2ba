"""Sugar mill: cane requirement, acquisition at FRP with dues, and processing."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

from ..domain import ContractViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MillYields:
    """Output units per input unit."""
    juice: float
    molasses: float
    sugar: float
    ethanol_from_molasses: float
    ethanol_from_juice: float

    def __post_init__(self):
        for name in ("juice", "molasses", "sugar", "ethanol_from_molasses", "ethanol_from_juice"):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"mill yield '{name}' must be > 0")


@dataclass(frozen=True)
class ProcessingCosts:
    """Cost per unit of input along each processing path."""
    cane_processing: float = 0.0      # per unit cane (juice + molasses)
    molasses_to_ethanol: float = 0.0  # per unit molasses
    juice_to_ethanol: float = 0.0     # per unit juice


class EthanolMode(Enum):
    """Whether juice may be diverted to ethanol."""
    FREE = "free"
    MOLASSES_ONLY = "molasses_only"


@dataclass
class Due:
    """Money the mill owes a farmer for cane delivered without full payment."""
    farmer_id: int
    quantity: float
    frp: float
    amount_owed: float
    step: int


@dataclass
class Purchase:
    farmer_id: int
    quantity: float
    paid: float
    owed: float


@dataclass
class Acquisition:
    purchases: list[Purchase] = field(default_factory=list)
    dues: list[Due] = field(default_factory=list)

    @property
    def quantity(self) -> float:
        return sum(p.quantity for p in self.purchases)

    @property
    def paid(self) -> float:
        return sum(p.paid for p in self.purchases)


@dataclass
class ProcessResult:
    sugar: float
    ethanol: float
    total_cost: float


@dataclass
class MillState:
    """The single sugar mill."""
    yields: MillYields
    costs: ProcessingCosts
    savings: float
    maintenance_reserve: float
    collection_threshold: float
    estimated_sugar_requirement: float
    credit_rating: float = 50.0
    e: float = 0.0
    dues: deque = field(default_factory=deque)
    delivered_value: float = 0.0
    paid_on_delivery: float = 0.0
    dues_settled: float = 0.0
    sugar_output: float = 0.0
    ethanol_output: float = 0.0
    cane_bought: float = 0.0

    @property
    def account(self) -> str:
        return "mill"

    @property
    def free_funds(self) -> float:
        return max(self.savings - self.maintenance_reserve, 0.0)

    def total_dues(self) -> float:
        return sum(d.amount_owed for d in self.dues)


def decide_ethanol_mode(juice_to_ethanol_cost: float, ethanol_price: float) -> EthanolMode:
    """Stop diverting juice when making ethanol from it costs more than ethanol sells for."""
    if juice_to_ethanol_cost < 0 or ethanol_price < 0:
        raise ContractViolation("ethanol cost and price must be >= 0")
    if juice_to_ethanol_cost > ethanol_price:
        return EthanolMode.MOLASSES_ONLY
    return EthanolMode.FREE


def _molasses_only(ethanol: float, sugar: float, y: MillYields) -> tuple[float, float]:
    sc = max(ethanol / (y.molasses * y.ethanol_from_molasses), sugar / (y.juice * y.sugar))
    return sc, 0.0


def required_sugarcane(
    ethanol_requirement: float,
    sugar_requirement: float,
    yields: MillYields,
    mode: EthanolMode,
) -> tuple[float, float]:
    """Least cane that meets both the ethanol and the sugar requirement.

    Returns:
        (sc, e): cane quantity and the fraction of juice diverted to ethanol
    """
    if ethanol_requirement < 0 or sugar_requirement < 0:
        raise ContractViolation("ethanol and sugar requirements must be >= 0")
    y = yields
    if mode is EthanolMode.MOLASSES_ONLY:
        return _molasses_only(ethanol_requirement, sugar_requirement, y)

    sc = (ethanol_requirement + sugar_requirement * y.ethanol_from_juice / y.sugar) / (
        y.juice * y.ethanol_from_juice + y.molasses * y.ethanol_from_molasses
    )
    if sc <= 0:
        return 0.0, 0.0
    e = 1.0 - sugar_requirement / (sc * y.juice * y.sugar)
    if e < 0:
        return _molasses_only(ethanol_requirement, sugar_requirement, y)
    return sc, min(e, 1.0)


def diversion_for_cane(sc: float, ethanol_requirement: float, yields: MillYields, mode: EthanolMode) -> float:
    """Juice fraction that best meets the ethanol requirement from ``sc`` cane."""
    if sc <= 0 or mode is EthanolMode.MOLASSES_ONLY:
        return 0.0
    y = yields
    needed = ethanol_requirement / sc - y.molasses * y.ethanol_from_molasses
    return min(max(needed / (y.juice * y.ethanol_from_juice), 0.0), 1.0)


def process(sc: float, e: float, yields: MillYields, costs: ProcessingCosts) -> ProcessResult:
    """Crush ``sc`` cane, diverting fraction ``e`` of the juice to ethanol."""
    if sc < 0:
        raise ContractViolation(f"cane quantity must be >= 0, got {sc}")
    if not 0.0 <= e <= 1.0:
        raise ContractViolation(f"juice diversion e must be in [0, 1], got {e}")
    y = yields
    juice = sc * y.juice
    molasses = sc * y.molasses
    sugar = juice * (1.0 - e) * y.sugar
    ethanol = juice * e * y.ethanol_from_juice + molasses * y.ethanol_from_molasses
    cost = (
        sc * costs.cane_processing
        + molasses * costs.molasses_to_ethanol
        + juice * e * costs.juice_to_ethanol
    )
    return ProcessResult(sugar=sugar, ethanol=ethanol, total_cost=cost)


def affordable_cane(sc: float, e: float, yields: MillYields, costs: ProcessingCosts, funds: float) -> float:
    """Largest part of ``sc`` whose processing at diversion ``e`` fits within ``funds``."""
    full = process(sc, e, yields, costs).total_cost
    if full <= funds:
        return sc
    if funds <= 0:
        return 0.0
    # cost is linear in cane at fixed e
    return sc * funds / full


def estimate_sugar_requirement(sales: Sequence[float], default: float, window: int = 4) -> float:
    """Trailing mean of sugar sales, or ``default`` until the window fills."""
    if len(sales) < window:
        return default
    recent = sales[-window:]
    return sum(recent) / window


def gate_offers(
    offers: Mapping[int, float],
    localities: Mapping[int, int],
    threshold: float,
) -> dict[int, float]:
    """Keep only offers from localities whose total offered cane reaches ``threshold``."""
    totals: dict[int, float] = {}
    for farmer_id, quantity in offers.items():
        locality = localities[farmer_id]
        totals[locality] = totals.get(locality, 0.0) + quantity
    return {
        farmer_id: quantity
        for farmer_id, quantity in offers.items()
        if quantity > 0 and totals[localities[farmer_id]] >= threshold
    }


def acquire(
    sc_needed: float,
    offers: Mapping[int, float],
    frp: float,
    funds: float,
    step: int = 0,
) -> Acquisition:
    """Buy cane from the largest offers first and pay what funds allow.

    Args:
        sc_needed: Cane the mill wants this step
        offers: Farmer id -> cane offered (already gated)
        frp: Price per unit cane
        funds: Money available above the maintenance reserve
        step: Delivery step recorded on new dues

    Returns:
        Purchases with the paid part, plus dues for the unpaid part
    """
    result = Acquisition()
    remaining = max(sc_needed, 0.0)
    funds = max(funds, 0.0)
    for farmer_id in sorted(offers, key=lambda f: (-offers[f], f)):
        if remaining <= 0:
            break
        quantity = min(offers[farmer_id], remaining)
        if quantity <= 0:
            continue
        remaining -= quantity
        bill = quantity * frp
        paid = min(bill, funds)
        funds -= paid
        owed = bill - paid
        result.purchases.append(Purchase(farmer_id, quantity, paid, owed))
        if owed > 0:
            result.dues.append(Due(farmer_id, quantity, frp, owed, step))
    return result


def settle_dues(
    mill: MillState,
    funds: float,
    skip: Optional[Callable[[int], bool]] = None,
) -> list[tuple[Due, float]]:
    """Pay dues oldest first from ``funds``; the oldest is paid in full before any newer one.

    Dues for which ``skip(farmer_id)`` is true are left untouched.

    Returns:
        (due, amount) pairs to transfer; the dues are already reduced
    """
    payments = []
    for due in list(mill.dues):
        if funds <= 0:
            break
        if skip is not None and skip(due.farmer_id):
            continue
        amount = min(due.amount_owed, funds)
        funds -= amount
        due.amount_owed -= amount
        payments.append((due, amount))
        if due.amount_owed > 0:
            break
    mill.dues = deque(d for d in mill.dues if d.amount_owed > 1e-9)
    return payments
