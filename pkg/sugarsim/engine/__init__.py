"""Simulation engine: scheduler, money ledger, random streams, metrics and checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ledger import AuditReport, Ledger, LedgerImbalanceError, TransferKind, audit_ledger
from .metrics import MetricsFrame, collect_frame, frames_to_dataframe
from .rng import RandomStreams
from .simulation import (
    SimulationState,
    check_invariants,
    init_population,
    init_state,
    run,
    step,
)

__all__ = [
    "AuditReport",
    "CheckpointError",
    "Ledger",
    "LedgerImbalanceError",
    "MetricsFrame",
    "RandomStreams",
    "SimulationState",
    "TransferKind",
    "audit_ledger",
    "check_invariants",
    "collect_frame",
    "frames_to_dataframe",
    "init_population",
    "init_state",
    "load_checkpoint",
    "run",
    "save_checkpoint",
    "step",
]
