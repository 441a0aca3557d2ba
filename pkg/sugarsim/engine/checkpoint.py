"""Checkpoint files: a versioned pickle envelope around a SimulationState."""
from __future__ import annotations

import logging
import pickle
from pathlib import Path
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:
    from .simulation import SimulationState

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "sugarsim-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file is not a readable sugarsim checkpoint."""


def save_checkpoint(state: "SimulationState", path: Union[str, Path]) -> Path:
    """Write ``state`` between steps.

    The file holds ``{"format", "version", "step", "state"}``; only load
    checkpoints you wrote yourself, as unpickling runs arbitrary code.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    envelope = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": state.step,
        "state": state,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        pickle.dump(envelope, f, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)
    logger.info(f"Checkpoint at step {state.step} written to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> "SimulationState":
    """Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: If the file is not a sugarsim checkpoint of a supported version
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            envelope = pickle.load(f)
    except (pickle.UnpicklingError, EOFError) as e:
        raise CheckpointError(f"{path}: not a checkpoint ({e})") from e

    if not isinstance(envelope, dict) or envelope.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a sugarsim checkpoint")
    if envelope.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {envelope.get('version')} is not supported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    return envelope["state"]
