"""Tests for the loan agent."""
import pytest

from sugarsim.agents.credit import (
    LoanAccount,
    LoanBook,
    LoanKind,
    annual_to_step_rate,
    compute_installment,
    early_close,
    record_payment,
    request_loan,
)
from sugarsim.domain import ContractViolation


def make_loan(kind=LoanKind.CREDIT, **overrides) -> LoanAccount:
    fields = dict(
        borrower="farmer:0", kind=kind, principal=1000, rate_per_step=0.0,
        term=10, installment=100, outstanding=1000,
    )
    fields.update(overrides)
    return LoanAccount(**fields)


class TestRequestLoan:
    """Splitting an expense between credit and collateral loans."""

    def test_zero_expense(self):
        split = request_loan(0, 30, 100000)
        assert (split.credit, split.collateral) == (0, 0)

    def test_credit_then_collateral(self):
        split = request_loan(50000, 30, 100000, credit_unit=1000)
        assert (split.credit, split.collateral, split.shortfall) == (30000, 20000, 0)

    def test_shortfall(self):
        split = request_loan(200000, 30, 100000, credit_unit=1000)
        assert (split.credit, split.collateral, split.shortfall) == (30000, 100000, 70000)

    def test_zero_rating_gives_no_credit(self):
        split = request_loan(5000, 0, 100000)
        assert split.credit == 0
        assert split.collateral == 5000

    def test_negative_expense(self):
        with pytest.raises(ContractViolation):
            request_loan(-1, 30, 0)


class TestInstallment:
    """Amortized repayments."""

    def test_zero_rate(self):
        assert compute_installment(1000, 0, 10) == pytest.approx(100)

    def test_one_percent(self):
        assert compute_installment(1000, 0.01, 10) == pytest.approx(105.582, abs=1e-3)

    def test_zero_principal(self):
        assert compute_installment(0, 0.01, 10) == 0

    def test_bad_term(self):
        with pytest.raises(ContractViolation, match="term"):
            compute_installment(1000, 0.01, 0)

    def test_annual_rates_per_step(self):
        """Four-month steps take a third of the annual rate."""
        assert annual_to_step_rate(0.12, 4) == pytest.approx(0.04)
        assert annual_to_step_rate(0.08, 1) == pytest.approx(0.08 / 12)


class TestRecordPayment:
    """Ratings, penalties and seizure."""

    def test_on_time_credit_payment(self):
        loan = make_loan()
        outcome = record_payment(loan, True, 50)
        assert outcome.rating == 52
        assert outcome.amount_paid == 100
        assert loan.outstanding == pytest.approx(900)

    def test_credit_default(self):
        loan = make_loan()
        outcome = record_payment(loan, False, 50)
        assert outcome.rating == 42
        assert outcome.penalty == pytest.approx(20)
        assert loan.outstanding == pytest.approx(1020)
        assert loan.defaults == 1

    def test_rating_never_negative(self):
        assert record_payment(make_loan(), False, 3).rating == 0

    def test_collateral_payment_leaves_rating(self):
        outcome = record_payment(make_loan(LoanKind.COLLATERAL), True, 50)
        assert outcome.rating == 50

    def test_interest_accrues(self):
        loan = make_loan(rate_per_step=0.01, installment=compute_installment(1000, 0.01, 10))
        record_payment(loan, True, 50)
        assert loan.outstanding == pytest.approx(1010 - loan.installment)

    def test_fifth_collateral_default_seizes(self):
        """Collateral 100000 against 60000 outstanding refunds 40000."""
        loan = make_loan(LoanKind.COLLATERAL, outstanding=60000, collateral_value=100000, defaults=4)
        outcome = record_payment(loan, False, 50)
        assert outcome.seized
        assert outcome.refund == pytest.approx(40000)
        assert loan.closed and loan.seized

    def test_fourth_default_does_not_seize(self):
        loan = make_loan(LoanKind.COLLATERAL, collateral_value=100000, defaults=3)
        assert not record_payment(loan, False, 50).seized
        assert loan.active

    def test_final_installment_closes(self):
        loan = make_loan(outstanding=100)
        record_payment(loan, True, 50)
        assert loan.closed
        assert loan.outstanding == 0

    def test_closed_loan(self):
        loan = make_loan(closed=True)
        with pytest.raises(ContractViolation, match="closed"):
            record_payment(loan, True, 50)


class TestEarlyClose:

    def test_reserve_not_covered(self):
        assert not early_close(make_loan(outstanding=900), 1000, 200)

    def test_reserve_covered(self):
        assert early_close(make_loan(outstanding=900), 1200, 200)

    def test_nothing_outstanding(self):
        assert early_close(make_loan(outstanding=0), 0, 1000)


class TestLoanBook:
    """The bank's loan register."""

    def test_collateral_loans_come_first(self):
        book = LoanBook()
        book.open("farmer:1", LoanKind.CREDIT, 1000, 0.01, 6, 0)
        book.open("farmer:1", LoanKind.COLLATERAL, 2000, 0.01, 6, 0, pledged_land=0.5)
        kinds = [loan.kind for loan in book.active("farmer:1")]
        assert kinds == [LoanKind.COLLATERAL, LoanKind.CREDIT]

    def test_totals(self):
        book = LoanBook()
        book.open("farmer:1", LoanKind.CREDIT, 1000, 0.0, 10, 0)
        book.open("farmer:2", LoanKind.COLLATERAL, 2000, 0.0, 10, 0, pledged_land=0.5)
        assert book.outstanding() == 3000
        assert book.outstanding("farmer:2") == 2000
        assert book.pledged_land("farmer:2") == 0.5
        assert book.active_of_kind("farmer:1", LoanKind.COLLATERAL) is None

    def test_installment_set_on_open(self):
        loan = LoanBook().open("mill", LoanKind.CREDIT, 1000, 0.0, 10, 3)
        assert loan.installment == pytest.approx(100)
        assert loan.opened_at == 3

    def test_closed_loans_drop_out(self):
        book = LoanBook()
        loan = book.open("farmer:1", LoanKind.CREDIT, 100, 0.0, 1, 0)
        record_payment(loan, True, 20)
        assert book.active("farmer:1") == []
        assert book.outstanding() == 0
