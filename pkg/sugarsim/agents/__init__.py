"""Agents of the supply chain: farmers, water providers, the loan agent and the mill."""
from .credit import LoanAccount, LoanBook, LoanKind, LoanSplit, PaymentOutcome
from .farmer import (
    Expectations,
    FarmerState,
    FarmerType,
    HarvestRecord,
    OfferDecision,
    OfferResponse,
    PlantingState,
    WaterSource,
)
from .mill import Due, EthanolMode, MillState, MillYields, ProcessingCosts
from .water import LenderPool, WaterAllocation, WaterRequest

__all__ = [
    "Due",
    "EthanolMode",
    "Expectations",
    "FarmerState",
    "FarmerType",
    "HarvestRecord",
    "LenderPool",
    "LoanAccount",
    "LoanBook",
    "LoanKind",
    "LoanSplit",
    "MillState",
    "MillYields",
    "OfferDecision",
    "OfferResponse",
    "PaymentOutcome",
    "PlantingState",
    "ProcessingCosts",
    "WaterAllocation",
    "WaterRequest",
    "WaterSource",
]
