"""Market books, the two price-setting rules and consumer demand."""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..domain import ContractViolation

# Newest first
PRICE_WEIGHTS = (0.4, 0.3, 0.2, 0.1)
PRICE_BASE_FLOOR = 0.1
# Trend prices never fall below this share of the initial price
TREND_PRICE_FLOOR = 0.01

_INFLOWS = ("production", "imports", "withdrawals")
_OUTFLOWS = ("sales", "exports", "deposits")


@dataclass
class StepFlows:
    """Stock movements of one commodity during one step."""
    opening: float = 0.0
    production: float = 0.0
    imports: float = 0.0
    withdrawals: float = 0.0
    sales: float = 0.0
    exports: float = 0.0
    deposits: float = 0.0
    closing: float = 0.0

    def expected_closing(self) -> float:
        return (
            self.opening + self.production + self.imports + self.withdrawals
            - self.sales - self.exports - self.deposits
        )


@dataclass
class MarketBook:
    """Price, sale and stock histories of one commodity (newest last)."""
    commodity: str
    initial_price: float
    usual_demand: float
    current_stock: float = 0.0
    price_history: list[float] = field(default_factory=list)
    sale_history: list[float] = field(default_factory=list)
    stock_history: list[float] = field(default_factory=list)
    flows: list[StepFlows] = field(default_factory=list)

    @property
    def price(self) -> float:
        return self.price_history[-1] if self.price_history else self.initial_price

    @property
    def previous_price(self) -> float:
        if len(self.price_history) >= 2:
            return self.price_history[-2]
        return self.price

    def open_step(self) -> StepFlows:
        flows = StepFlows(opening=self.current_stock)
        self.flows.append(flows)
        return flows

    def close_step(self) -> None:
        if self.flows:
            self.flows[-1].closing = self.current_stock

    def move(self, kind: str, quantity: float) -> float:
        """Record a stock movement and return the quantity actually moved.

        Outflows are capped by the stock on hand.
        """
        if quantity <= 0:
            return 0.0
        if not self.flows:
            self.open_step()
        flows = self.flows[-1]
        if kind in _INFLOWS:
            self.current_stock += quantity
        elif kind in _OUTFLOWS:
            quantity = min(quantity, self.current_stock)
            self.current_stock -= quantity
        else:
            raise ContractViolation(f"unknown stock movement '{kind}'")
        setattr(flows, kind, getattr(flows, kind) + quantity)
        return quantity

    def past_sales(self, window: int = 4) -> float:
        """Sales over the last ``window`` steps, padding missing steps with usual demand."""
        recent = self.sale_history[-window:]
        return float(sum(recent)) + (window - len(recent)) * self.usual_demand

    def check_flows(self, rel_tol: float = 1e-9) -> bool:
        """Verify the stock identity for every recorded step."""
        for flows in self.flows:
            scale = max(abs(flows.opening), abs(flows.closing), 1.0)
            if not math.isclose(flows.expected_closing(), flows.closing, rel_tol=rel_tol, abs_tol=rel_tol * scale):
                return False
        return True


def _check_non_negative(values: Sequence[float], name: str) -> None:
    for value in values:
        if value < 0:
            raise ContractViolation(f"{name} history contains a negative value: {value}")


def set_price_absolute(
    sale_history: Sequence[float],
    stock_history: Sequence[float],
    crop_mult_factor: float,
    fallback_price: float,
) -> float:
    """Price from the recent share of stock that was sold.

    Each of the last four steps contributes ``2 * sale / stock`` (0 when the
    stock was empty), weighted newest first. The weighted base is floored at
    0.1 and squared before scaling by ``crop_mult_factor``. With fewer than
    four steps of history ``fallback_price`` is returned.
    """
    n = len(PRICE_WEIGHTS)
    if len(sale_history) < n or len(stock_history) < n:
        return fallback_price
    sales = np.asarray(sale_history[-n:][::-1], dtype=float)
    stocks = np.asarray(stock_history[-n:][::-1], dtype=float)
    _check_non_negative(sales, "sale")
    _check_non_negative(stocks, "stock")

    ratios = np.divide(sales, stocks, out=np.zeros(n), where=stocks > 0)
    base = float(np.dot(PRICE_WEIGHTS, 2.0 * ratios))
    return crop_mult_factor * max(base, PRICE_BASE_FLOOR) ** 2


def sale_deviations(sale_history: Sequence[float], usual_demand: float) -> list[float]:
    """Percent deviation of each step's sale from usual demand, oldest first."""
    return [100.0 * (sale - usual_demand) / usual_demand for sale in sale_history]


def set_price_trend(previous_price: float, deviations: Sequence[float]) -> float:
    """Move the previous price by the recency-weighted sale deviation.

    Args:
        previous_price: Last price
        deviations: Percent sale deviations, oldest first

    Returns:
        previous_price unchanged until four deviations are known
    """
    n = len(PRICE_WEIGHTS)
    if len(deviations) < n:
        return previous_price
    newest_first = list(deviations[-n:])[::-1]
    change = sum(w * d for w, d in zip(PRICE_WEIGHTS, newest_first)) / 100.0
    return previous_price * (1.0 + change)


def consumer_demand(
    price_now: float,
    price_prev: float,
    past4_sales: float,
    usual_demand: float,
    variation_limit: Optional[float] = 0.5,
) -> float:
    """Demand this step given the last price move and recent purchases.

    Demand falls as the price rises and when consumers have bought more than
    usual over the last four steps. The result is clamped to
    ``usual_demand * (1 +/- variation_limit)``; ``None`` disables the band.
    """
    if price_now <= 0 or price_prev <= 0:
        raise ContractViolation("prices must be > 0 for consumer demand")
    if usual_demand <= 0:
        raise ContractViolation("usual demand must be > 0")
    price_factor = 1.0 - (price_now - price_prev) / price_now
    usual_window = 4.0 * usual_demand
    stock_factor = 1.0 - (past4_sales - usual_window) / usual_window
    demand = max(price_factor, 0.0) * max(stock_factor, 0.0) * usual_demand
    if variation_limit is not None:
        low = usual_demand * max(1.0 - variation_limit, 0.0)
        high = usual_demand * (1.0 + variation_limit)
        demand = min(max(demand, low), high)
    return demand


class BasePricer(ABC):
    """Abstract base class for market price rules."""

    mode_name: str = "base"

    @abstractmethod
    def price(self, book: MarketBook, crop_mult_factor: float) -> float:
        """Price for the coming step."""
        pass


class AbsolutePricer(BasePricer):
    """Price from the sold share of stock over the last four steps."""

    mode_name = "absolute"

    def price(self, book: MarketBook, crop_mult_factor: float) -> float:
        return set_price_absolute(
            book.sale_history, book.stock_history, crop_mult_factor, book.initial_price
        )


class TrendPricer(BasePricer):
    """Previous price nudged by recent sale deviations from usual demand."""

    mode_name = "trend"

    def price(self, book: MarketBook, crop_mult_factor: float) -> float:
        deviations = sale_deviations(book.sale_history[-len(PRICE_WEIGHTS):], book.usual_demand)
        price = set_price_trend(book.price, deviations)
        return max(price, TREND_PRICE_FLOOR * book.initial_price)
