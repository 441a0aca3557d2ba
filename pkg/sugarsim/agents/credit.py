"""Loan agent: credit and collateral loans, installments, defaults and seizure."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

from ..domain import ContractViolation

logger = logging.getLogger(__name__)


class LoanKind(Enum):
    """Loan categories; collateral loans are repaid first."""
    COLLATERAL = "collateral"
    CREDIT = "credit"


@dataclass
class LoanAccount:
    """One loan between the bank and a borrower account."""
    borrower: str
    kind: LoanKind
    principal: float
    rate_per_step: float
    term: int
    installment: float
    outstanding: float
    opened_at: int = 0
    defaults: int = 0
    collateral_value: float = 0.0
    pledged_land: float = 0.0
    closed: bool = False
    seized: bool = False

    @property
    def active(self) -> bool:
        return not self.closed


@dataclass
class LoanSplit:
    """How an expense is covered by the two loan kinds."""
    credit: float
    collateral: float
    shortfall: float


@dataclass
class PaymentOutcome:
    """Result of one installment attempt."""
    amount_paid: float
    rating: float
    penalty: float = 0.0
    seized: bool = False
    refund: float = 0.0


def annual_to_step_rate(annual_rate: float, months_per_step: int) -> float:
    """Convert an annual rate to a per-step rate by simple division."""
    return annual_rate * months_per_step / 12.0


def request_loan(
    expense: float,
    credit_rating: float,
    collateral_value: float,
    credit_unit: float = 1000.0,
) -> LoanSplit:
    """Split an expense between a credit loan (preferred) and a collateral loan.

    Args:
        expense: Amount needed
        credit_rating: Borrower rating; the credit cap is rating * credit_unit
        collateral_value: Value of unpledged collateral
        credit_unit: Currency per rating point

    Returns:
        LoanSplit; the two loans together may fall short of the expense
    """
    if expense < 0:
        raise ContractViolation(f"loan expense must be >= 0, got {expense}")
    cap = max(credit_rating, 0.0) * credit_unit
    credit = min(expense, cap)
    collateral = min(expense - credit, max(collateral_value, 0.0))
    return LoanSplit(credit=credit, collateral=collateral, shortfall=expense - credit - collateral)


def compute_installment(principal: float, rate_per_step: float, term: int) -> float:
    """Amortized installment per step."""
    if term < 1:
        raise ContractViolation(f"loan term must be >= 1, got {term}")
    if principal <= 0:
        return 0.0
    if rate_per_step == 0:
        return principal / term
    return principal * rate_per_step / (1.0 - (1.0 + rate_per_step) ** (-term))


def record_payment(
    account: LoanAccount,
    paid: bool,
    rating: float,
    *,
    penalty_fraction: float = 0.2,
    seizure_limit: int = 4,
    rating_increase: float = 2.0,
    rating_decrease: float = 8.0,
) -> PaymentOutcome:
    """Apply one step of interest and either an installment or a default.

    Ratings move only for credit loans and never fall below 0. A collateral
    loan whose defaults exceed ``seizure_limit`` is closed by seizing the
    collateral; any value above the outstanding balance is refunded.
    """
    if not account.active:
        raise ContractViolation(f"loan of {account.borrower} is closed")

    interest = account.outstanding * account.rate_per_step
    if paid:
        amount = min(account.installment, account.outstanding + interest)
        account.outstanding = max(account.outstanding + interest - amount, 0.0)
        if account.kind is LoanKind.CREDIT:
            rating += rating_increase
        if account.outstanding <= 1e-9:
            account.outstanding = 0.0
            account.closed = True
        return PaymentOutcome(amount_paid=amount, rating=rating)

    account.defaults += 1
    if account.kind is LoanKind.CREDIT:
        rating = max(rating - rating_decrease, 0.0)

    if account.kind is LoanKind.COLLATERAL and account.defaults > seizure_limit:
        refund = max(account.collateral_value - account.outstanding, 0.0)
        account.outstanding = 0.0
        account.closed = True
        account.seized = True
        logger.debug(f"Collateral of {account.borrower} seized, refund {refund:.2f}")
        return PaymentOutcome(amount_paid=0.0, rating=rating, seized=True, refund=refund)

    penalty = penalty_fraction * account.installment
    account.outstanding += interest + penalty
    return PaymentOutcome(amount_paid=0.0, rating=rating, penalty=penalty)


def early_close(account: LoanAccount, savings: float, reserve_needed: float) -> bool:
    """Whether the borrower can repay the loan in full and keep ``reserve_needed``."""
    if account.outstanding <= 0:
        return True
    return savings - account.outstanding >= reserve_needed


@dataclass
class LoanBook:
    """All loans issued by the bank, grouped by borrower account."""
    accounts: dict[str, list[LoanAccount]] = field(default_factory=dict)

    def open(
        self,
        borrower: str,
        kind: LoanKind,
        principal: float,
        rate_per_step: float,
        term: int,
        step: int,
        *,
        collateral_value: float = 0.0,
        pledged_land: float = 0.0,
    ) -> LoanAccount:
        account = LoanAccount(
            borrower=borrower,
            kind=kind,
            principal=principal,
            rate_per_step=rate_per_step,
            term=term,
            installment=compute_installment(principal, rate_per_step, term),
            outstanding=principal,
            opened_at=step,
            collateral_value=collateral_value,
            pledged_land=pledged_land,
        )
        self.accounts.setdefault(borrower, []).append(account)
        return account

    def active(self, borrower: str) -> list[LoanAccount]:
        """Active loans of a borrower in repayment order (collateral first)."""
        loans = [a for a in self.accounts.get(borrower, []) if a.active]
        return sorted(loans, key=lambda a: 0 if a.kind is LoanKind.COLLATERAL else 1)

    def active_of_kind(self, borrower: str, kind: LoanKind) -> Optional[LoanAccount]:
        for account in self.active(borrower):
            if account.kind is kind:
                return account
        return None

    def pledged_land(self, borrower: str) -> float:
        return sum(a.pledged_land for a in self.active(borrower))

    def outstanding(self, borrower: Optional[str] = None) -> float:
        return sum(a.outstanding for a in self._iter(borrower) if a.active)

    def _iter(self, borrower: Optional[str]) -> Iterator[LoanAccount]:
        if borrower is not None:
            yield from self.accounts.get(borrower, [])
            return
        for loans in self.accounts.values():
            yield from loans
