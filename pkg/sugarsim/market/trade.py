"""Import-export agent and the policy agent that tunes it."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

from ..config import TradeConfig
from ..domain import ContractViolation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TradeParams:
    """Trade response of one commodity to the gap between price and usual price."""
    factor_of_import: float
    factor_of_export: float
    maximum_import: float
    maximum_export: float
    import_tax: float
    export_tax: float
    usual_price: float

    @classmethod
    def from_config(cls, config: TradeConfig, usual_price: float) -> "TradeParams":
        return cls(
            factor_of_import=config.factor_of_import,
            factor_of_export=config.factor_of_export,
            maximum_import=config.maximum_import,
            maximum_export=config.maximum_export,
            import_tax=config.import_tax,
            export_tax=config.export_tax,
            usual_price=usual_price,
        )


def import_export_step(price: float, params: TradeParams) -> tuple[float, float]:
    """Import when the price is above usual, export when below.

    Returns:
        (import_qty, export_qty); at most one is non-zero
    """
    if params.usual_price <= 0:
        raise ContractViolation("usual price must be > 0")
    gap = price - params.usual_price
    if gap > 0:
        return min(params.factor_of_import * gap, params.maximum_import), 0.0
    if gap < 0:
        return 0.0, min(params.factor_of_export * -gap, params.maximum_export)
    return 0.0, 0.0


def policy_step(
    history: Sequence[tuple[float, float]],
    params: TradeParams,
    *,
    delta: float = 0.1,
    window: int = 5,
    threshold: int = 2,
) -> TradeParams:
    """Make trade easier in whichever direction it keeps happening.

    Args:
        history: (import_qty, export_qty) per step, oldest first
        params: Current trade parameters
        delta: Relative adjustment
        window: Steps inspected
        threshold: Events needed (strictly more) to trigger an adjustment

    Returns:
        Adjusted parameters (a new object)
    """
    recent = list(history)[-window:]
    imports = sum(1 for imp, _ in recent if imp > 0)
    exports = sum(1 for _, exp in recent if exp > 0)
    up, down = 1.0 + delta, 1.0 - delta

    if imports > threshold:
        params = replace(
            params,
            import_tax=params.import_tax * down,
            maximum_import=params.maximum_import * up,
            factor_of_import=params.factor_of_import * up,
            export_tax=params.export_tax * up,
        )
    if exports > threshold:
        params = replace(
            params,
            export_tax=params.export_tax * down,
            maximum_export=params.maximum_export * up,
            factor_of_export=params.factor_of_export * up,
            import_tax=params.import_tax * up,
        )
    return params
