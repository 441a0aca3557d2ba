"""Factory for creating price rules."""
from __future__ import annotations

from .pricing import AbsolutePricer, BasePricer, TrendPricer


def create_pricer(mode: str) -> BasePricer:
    """Create the price rule for a scenario's pricing_mode.

    Args:
        mode: "absolute" or "trend"

    Returns:
        A pricer instance

    Raises:
        ValueError: If the mode is unknown
    """
    factories = {
        "absolute": lambda: AbsolutePricer(),
        "trend": lambda: TrendPricer(),
    }

    factory = factories.get(mode)
    if factory is None:
        raise ValueError(f"Unknown pricing mode: {mode}")

    return factory()


def list_pricing_modes() -> list[str]:
    """List all available pricing modes."""
    return ["absolute", "trend"]
