"""Global double-entry money ledger.

Every currency movement in a run is a transfer from one named account to
another. Agents that hold money register themselves as the holder of their
account, and the ledger keeps their ``savings`` attribute in step with the
journal. Money entering or leaving the modelled economy goes through
``env:*`` accounts, so the sum over all accounts stays 0.
"""
from __future__ import annotations

import logging
import math
from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator, Mapping, Optional

import numpy as np

logger = logging.getLogger(__name__)


class TransferKind(Enum):
    ENDOWMENT = "endowment"
    FAMILY_EXPENSE = "family_expense"
    LABOR = "labor"
    WATER = "water"
    FERT_PEST = "fert_pest"
    INITIAL_COST = "initial_cost"
    CROP_SALE = "crop_sale"
    CANE_PAYMENT = "cane_payment"
    DUE_PAYMENT = "due_payment"
    LOAN_DISBURSEMENT = "loan_disbursement"
    LOAN_REPAYMENT = "loan_repayment"
    SEIZURE = "seizure"
    SEIZURE_REFUND = "seizure_refund"
    STORAGE_FEE = "storage_fee"
    CONSUMER_PURCHASE = "consumer_purchase"
    SUGAR_SALE = "sugar_sale"
    ETHANOL_SALE = "ethanol_sale"
    PROCESSING = "processing"
    IMPORT = "import"
    EXPORT = "export"
    TAX = "tax"


_KINDS = list(TransferKind)
_KIND_CODES = {kind: code for code, kind in enumerate(_KINDS)}

# Environment accounts: sources and sinks outside the modelled agents.
ENV_ENDOWMENT = "env:endowment"
ENV_HOUSEHOLD = "env:household"
ENV_LABOR = "env:labor"
ENV_INPUTS = "env:inputs"
ENV_PROCESSING = "env:processing"
ENV_ETHANOL = "env:ethanol"
ENV_IMPORT = "env:import"
ENV_EXPORT = "env:export"
ENV_LAND_MARKET = "env:land_market"
ENV_CONSUMERS = "env:consumers"

ENVIRONMENT_ACCOUNTS = (
    ENV_ENDOWMENT, ENV_HOUSEHOLD, ENV_LABOR, ENV_INPUTS, ENV_PROCESSING,
    ENV_ETHANOL, ENV_IMPORT, ENV_EXPORT, ENV_LAND_MARKET, ENV_CONSUMERS,
)


class LedgerImbalanceError(RuntimeError):
    """Raised when the ledger fails an audit."""

    def __init__(self, message: str, transfers: Optional[list["Transfer"]] = None):
        super().__init__(message)
        self.transfers = transfers or []


@dataclass
class Account:
    """Plain money holder for agents without other state."""
    name: str
    savings: float = 0.0


@dataclass(frozen=True)
class Transfer:
    step: int
    payer: str
    payee: str
    amount: float
    kind: TransferKind


class Ledger:
    """Append-only transfer journal with interned account names."""

    def __init__(self):
        self._names: list[str] = []
        self._index: dict[str, int] = {}
        self._holders: list[Any] = []
        self._step = array("l")
        self._payer = array("l")
        self._payee = array("l")
        self._amount = array("d")
        self._kind = array("B")
        self._step_start: dict[int, int] = {}
        # Per account: balance implied by the journal, and money moved through it
        self._journal = array("d")
        self._turnover = array("d")

    def open_account(self, name: str, holder: Any = None) -> Any:
        """Register an account; the holder must expose a mutable ``savings``."""
        if name in self._index:
            raise ValueError(f"account already open: {name}")
        if holder is None:
            holder = Account(name)
        self._index[name] = len(self._names)
        self._names.append(name)
        self._holders.append(holder)
        self._journal.append(0.0)
        self._turnover.append(0.0)
        return holder

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._amount)

    @property
    def accounts(self) -> list[str]:
        return list(self._names)

    def holder(self, name: str) -> Any:
        return self._holders[self._index[name]]

    def balance(self, name: str) -> float:
        return self.holder(name).savings

    def transfer(self, step: int, payer: str, payee: str, amount: float, kind: TransferKind) -> float:
        """Move ``amount`` from payer to payee; zero amounts are not journaled.

        Raises:
            LedgerImbalanceError: On a negative or non-finite amount, a
                self-transfer or a step earlier than the last journaled one
        """
        if not math.isfinite(amount) or amount < 0:
            raise LedgerImbalanceError(f"invalid transfer amount {amount!r} ({payer} -> {payee})")
        if amount == 0:
            return 0.0
        if payer == payee:
            raise LedgerImbalanceError(f"self transfer on {payer}")
        if self._step and step < self._step[-1]:
            raise LedgerImbalanceError(f"ledger is append-only: step {step} after {self._step[-1]}")

        i = self._index[payer]
        j = self._index[payee]
        self._holders[i].savings -= amount
        self._holders[j].savings += amount
        self._journal[i] -= amount
        self._journal[j] += amount
        self._turnover[i] += amount
        self._turnover[j] += amount

        if step not in self._step_start:
            self._step_start[step] = len(self._amount)
        self._step.append(step)
        self._payer.append(i)
        self._payee.append(j)
        self._amount.append(amount)
        self._kind.append(_KIND_CODES[kind])
        return amount

    def _transfer_at(self, k: int) -> Transfer:
        return Transfer(
            step=self._step[k],
            payer=self._names[self._payer[k]],
            payee=self._names[self._payee[k]],
            amount=self._amount[k],
            kind=_KINDS[self._kind[k]],
        )

    def transfers(self, step: Optional[int] = None) -> Iterator[Transfer]:
        if step is None:
            for k in range(len(self._amount)):
                yield self._transfer_at(k)
            return
        start = self._step_start.get(step)
        if start is None:
            return
        for k in range(start, len(self._amount)):
            if self._step[k] != step:
                break
            yield self._transfer_at(k)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(step, payer index, payee index, amount) as numpy arrays."""
        return (
            np.array(self._step, dtype=np.int64),
            np.array(self._payer, dtype=np.int64),
            np.array(self._payee, dtype=np.int64),
            np.array(self._amount, dtype=np.float64),
        )

    def journal_balance(self, name: str) -> float:
        """Balance of ``name`` implied by the journal alone."""
        return self._journal[self._index[name]]

    def check_step(self, step: int) -> float:
        """Reconcile every holder's savings with the journal after ``step``.

        Money that appeared in or vanished from a holder without a transfer
        since the last check shows up here.

        Returns:
            Largest absolute difference between holder and journal (0.0 when
            nothing moved outside the journal)

        Raises:
            LedgerImbalanceError: Naming the accounts that disagree, with
                their transfers of ``step``
        """
        if not self._holders:
            return 0.0
        held = np.fromiter((h.savings for h in self._holders), dtype=np.float64, count=len(self._holders))
        gap = np.abs(held - np.array(self._journal, dtype=np.float64))
        tolerance = 1e-9 * np.array(self._turnover, dtype=np.float64) + 1e-6
        off = np.flatnonzero(~(gap <= tolerance))
        if len(off):
            names = {self._names[int(i)] for i in off}
            involved = [t for t in self.transfers(step) if t.payer in names or t.payee in names]
            shown = ", ".join(sorted(names)[:5])
            raise LedgerImbalanceError(
                f"ledger imbalance at step {step}: {len(off)} accounts disagree with the journal ({shown})",
                involved,
            )
        return float(gap.max())


@dataclass
class AuditReport:
    """Outcome of a full ledger audit."""
    transfer_count: int = 0
    step_volume: dict[int, float] = field(default_factory=dict)
    global_total: float = 0.0
    problems: list[str] = field(default_factory=list)
    offending: list[Transfer] = field(default_factory=list)

    @property
    def balanced(self) -> bool:
        return not self.problems

    def raise_if_unbalanced(self) -> None:
        if self.problems:
            raise LedgerImbalanceError("; ".join(self.problems[:10]), self.offending)


def audit_ledger(ledger: Ledger, exited: Optional[Mapping[str, int]] = None) -> AuditReport:
    """Audit every transfer and reconcile account holders against the journal.

    Args:
        ledger: Ledger to audit
        exited: Account name -> exit step; such accounts must not appear in
            any transfer after that step

    Returns:
        AuditReport; ``balanced`` is true when no problem was found
    """
    report = AuditReport(transfer_count=len(ledger))
    steps, payer, payee, amount = ledger.arrays()

    invalid = ~np.isfinite(amount) | (amount <= 0) | (payer == payee)
    for k in np.flatnonzero(invalid):
        report.offending.append(ledger._transfer_at(int(k)))
    if report.offending:
        report.problems.append(f"{len(report.offending)} transfers with invalid amount or endpoints")

    for step in sorted(ledger._step_start):
        report.step_volume[int(step)] = math.fsum(amount[steps == step].tolist())

    n = len(ledger.accounts)
    inflow = np.bincount(payee, weights=amount, minlength=n) if len(amount) else np.zeros(n)
    outflow = np.bincount(payer, weights=amount, minlength=n) if len(amount) else np.zeros(n)
    turnover = inflow + outflow
    balances = []
    for idx, name in enumerate(ledger.accounts):
        recorded = ledger.balance(name)
        balances.append(recorded)
        expected = inflow[idx] - outflow[idx]
        tolerance = 1e-9 * turnover[idx] + 1e-6
        if abs(ledger.journal_balance(name) - expected) > tolerance:
            report.problems.append(f"running balance of {name} does not replay from the journal")
        if abs(recorded - expected) > tolerance:
            report.problems.append(
                f"account {name} holds {recorded!r} but the journal gives {expected!r}"
            )

    report.global_total = math.fsum(balances)
    if abs(report.global_total) > 1e-9 * float(turnover.sum()) + 1e-6:
        report.problems.append(f"accounts sum to {report.global_total!r}, not 0")

    if exited:
        index = {name: i for i, name in enumerate(ledger.accounts)}
        for name, exit_step in exited.items():
            i = index.get(name)
            if i is None:
                continue
            late = np.flatnonzero(((payer == i) | (payee == i)) & (steps > exit_step))
            if len(late):
                report.problems.append(f"{name} transacts after exiting at step {exit_step}")
                report.offending.extend(ledger._transfer_at(int(k)) for k in late)

    if report.problems:
        logger.warning(f"Ledger audit found {len(report.problems)} problems")
    return report
