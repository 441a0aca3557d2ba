"""sugarsim: multi-agent simulation of the sugar-sugarcane supply chain."""

__version__ = "0.1.0"
