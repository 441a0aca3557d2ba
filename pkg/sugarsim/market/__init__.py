"""Market side of the economy: pricing, consumers, trade, policy and storage."""

from .factory import create_pricer, list_pricing_modes
from .pricing import BasePricer, MarketBook, StepFlows, consumer_demand
from .storage import StorageLedger, StorageLot, StorageRequest
from .trade import TradeParams

__all__ = [
    "BasePricer",
    "MarketBook",
    "StepFlows",
    "StorageLedger",
    "StorageLot",
    "StorageRequest",
    "TradeParams",
    "consumer_demand",
    "create_pricer",
    "list_pricing_modes",
]
