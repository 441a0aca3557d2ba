"""Tests for the sugar mill."""
from collections import deque

import numpy as np
import pytest

from sugarsim.agents.mill import (
    Due,
    EthanolMode,
    MillState,
    MillYields,
    ProcessingCosts,
    acquire,
    affordable_cane,
    decide_ethanol_mode,
    diversion_for_cane,
    estimate_sugar_requirement,
    gate_offers,
    process,
    required_sugarcane,
    settle_dues,
)
from sugarsim.domain import ContractViolation

SMALL_YIELDS = MillYields(juice=0.2, molasses=0.04, sugar=0.5,
                          ethanol_from_molasses=0.25, ethanol_from_juice=0.5)


def grid_minimum(ethanol, sugar, y: MillYields, step=1e-3) -> float:
    """Least cane meeting both requirements over a grid of diversion fractions."""
    best = np.inf
    for e in np.arange(0.0, 1.0, step):
        sugar_per_cane = y.juice * (1 - e) * y.sugar
        ethanol_per_cane = y.juice * e * y.ethanol_from_juice + y.molasses * y.ethanol_from_molasses
        best = min(best, max(sugar / sugar_per_cane, ethanol / ethanol_per_cane))
    return best


def refined_grid_minimum(ethanol, sugar, y: MillYields) -> float:
    """Grid minimum over e, refined to steps of 1e-7 around the coarse best point."""
    def cane(e):
        sugar_per_cane = y.juice * (1 - e) * y.sugar
        ethanol_per_cane = y.juice * e * y.ethanol_from_juice + y.molasses * y.ethanol_from_molasses
        with np.errstate(divide="ignore"):
            return np.maximum(sugar / sugar_per_cane, ethanol / ethanol_per_cane)

    coarse = np.linspace(0.0, 1.0, 1001)
    values = cane(coarse)
    centre = coarse[int(np.argmin(values))]
    fine = np.linspace(max(centre - 1e-3, 0.0), min(centre + 1e-3, 1.0), 20001)
    return float(min(values.min(), cane(fine).min()))


def make_mill(**overrides) -> MillState:
    fields = dict(
        yields=SMALL_YIELDS, costs=ProcessingCosts(), savings=1000.0,
        maintenance_reserve=0.0, collection_threshold=0.0, estimated_sugar_requirement=0.0,
    )
    fields.update(overrides)
    return MillState(**fields)


class TestEthanolMode:
    """Diverting juice only while it pays."""

    def test_too_expensive(self):
        assert decide_ethanol_mode(60, 51) is EthanolMode.MOLASSES_ONLY

    def test_cheap_enough(self):
        assert decide_ethanol_mode(40, 51) is EthanolMode.FREE

    def test_equal_cost_is_free(self):
        assert decide_ethanol_mode(51, 51) is EthanolMode.FREE


class TestRequiredSugarcane:
    """Minimum cane for the ethanol and sugar requirements."""

    def test_sugar_only(self):
        sc, e = required_sugarcane(0, 50, SMALL_YIELDS, EthanolMode.MOLASSES_ONLY)
        assert sc == pytest.approx(50 / (0.2 * 0.5))
        assert e == 0

    def test_molasses_only(self):
        yields = MillYields(juice=0.2, molasses=0.1, sugar=0.5,
                            ethanol_from_molasses=0.1, ethanol_from_juice=0.5)
        sc, e = required_sugarcane(100, 50, yields, EthanolMode.MOLASSES_ONLY)
        assert sc == pytest.approx(max(100 / 0.01, 50 / 0.1))
        assert e == 0

    def test_free_diversion_closed_form(self):
        sc, e = required_sugarcane(100, 50, SMALL_YIELDS, EthanolMode.FREE)
        assert sc == pytest.approx(1363.6364, rel=1e-6)
        assert e == pytest.approx(0.63333, rel=1e-4)
        result = process(sc, e, SMALL_YIELDS, ProcessingCosts())
        assert result.ethanol == pytest.approx(100)
        assert result.sugar == pytest.approx(50)

    def test_sugar_heavy_falls_back_to_no_diversion(self):
        """When molasses alone covers ethanol, no juice is diverted."""
        sc, e = required_sugarcane(1, 500, SMALL_YIELDS, EthanolMode.FREE)
        assert e == 0
        assert sc == pytest.approx(500 / 0.1)

    @pytest.mark.parametrize("ethanol,sugar", [(100, 50), (10, 200), (500, 5), (0, 80), (80, 0)])
    def test_matches_grid_search(self, ethanol, sugar):
        sc, _ = required_sugarcane(ethanol, sugar, SMALL_YIELDS, EthanolMode.FREE)
        grid = grid_minimum(ethanol, sugar, SMALL_YIELDS)
        assert sc <= grid * (1 + 1e-9)
        assert grid <= sc * 1.01

    def test_random_instances_near_grid_minimum(self):
        """Closed form meets both requirements and is never beaten by a fine grid."""
        rng = np.random.default_rng(31)
        for _ in range(1000):
            y = MillYields(*(float(v) for v in rng.uniform(0.05, 0.5, size=5)))
            ethanol, sugar = (float(v) for v in np.exp(rng.uniform(np.log(10), np.log(1000), size=2)))
            sc, e = required_sugarcane(ethanol, sugar, y, EthanolMode.FREE)
            result = process(sc, e, y, ProcessingCosts())
            if e > 0:
                assert result.ethanol == pytest.approx(ethanol, rel=1e-9)
            else:
                assert result.ethanol >= ethanol * (1 - 1e-9)
            assert result.sugar >= sugar * (1 - 1e-9)

            grid = refined_grid_minimum(ethanol, sugar, y)
            assert sc <= grid * (1 + 1e-9)
            assert grid <= sc * 1.002

    def test_negative_requirement(self):
        with pytest.raises(ContractViolation):
            required_sugarcane(-1, 0, SMALL_YIELDS, EthanolMode.FREE)

    def test_zero_yield_rejected(self):
        with pytest.raises(ContractViolation, match="yield"):
            MillYields(juice=0, molasses=0.04, sugar=0.5,
                       ethanol_from_molasses=0.25, ethanol_from_juice=0.5)


class TestProcess:
    """Crushing cane into sugar and ethanol."""

    def setup_method(self):
        # yj * ys = 0.1, ym * yem = 0.01
        self.yields = MillYields(juice=0.2, molasses=0.1, sugar=0.5,
                                 ethanol_from_molasses=0.1, ethanol_from_juice=0.5)

    def test_no_cane(self):
        result = process(0, 0.5, self.yields, ProcessingCosts(1, 1, 1))
        assert (result.sugar, result.ethanol, result.total_cost) == (0, 0, 0)

    def test_no_diversion(self):
        result = process(10000, 0, self.yields, ProcessingCosts())
        assert result.sugar == pytest.approx(1000)
        assert result.ethanol == pytest.approx(100)

    def test_full_diversion(self):
        assert process(10000, 1, self.yields, ProcessingCosts()).sugar == 0

    def test_costs(self):
        result = process(100, 0.5, self.yields, ProcessingCosts(2, 3, 4))
        # 100 cane, 10 molasses, 20 juice of which 10 diverted
        assert result.total_cost == pytest.approx(200 + 30 + 40)

    def test_diversion_out_of_range(self):
        with pytest.raises(ContractViolation, match="diversion"):
            process(10, 1.5, self.yields, ProcessingCosts())

    def test_diversion_for_bought_cane(self):
        sc, e = required_sugarcane(100, 50, SMALL_YIELDS, EthanolMode.FREE)
        assert diversion_for_cane(sc, 100, SMALL_YIELDS, EthanolMode.FREE) == pytest.approx(e)
        assert diversion_for_cane(sc, 100, SMALL_YIELDS, EthanolMode.MOLASSES_ONLY) == 0


class TestAffordableCane:
    """Crushing only what the mill can pay to process."""

    def setup_method(self):
        self.yields = MillYields(juice=0.2, molasses=0.1, sugar=0.5,
                                 ethanol_from_molasses=0.1, ethanol_from_juice=0.5)
        self.costs = ProcessingCosts(2, 3, 4)

    def test_everything_fits(self):
        # 100 cane at e=0.5 costs 270
        assert affordable_cane(100, 0.5, self.yields, self.costs, 300) == 100

    def test_partial(self):
        sc = affordable_cane(100, 0.5, self.yields, self.costs, 135)
        assert sc == pytest.approx(50)
        assert process(sc, 0.5, self.yields, self.costs).total_cost == pytest.approx(135)

    @pytest.mark.parametrize("funds", [0, -10])
    def test_no_funds(self, funds):
        assert affordable_cane(100, 0.5, self.yields, self.costs, funds) == 0

    def test_free_processing(self):
        assert affordable_cane(100, 0.5, self.yields, ProcessingCosts(), 0) == 100


class TestSugarRequirement:

    def test_flat_sales(self):
        assert estimate_sugar_requirement([100] * 4, 70) == 100

    def test_mean_of_window(self):
        assert estimate_sugar_requirement([1, 80, 100, 120, 100], 70) == 100

    def test_short_history(self):
        assert estimate_sugar_requirement([100, 100], 70) == 70


class TestAcquisition:
    """Buying cane at FRP with dues for what cannot be paid."""

    def test_locality_gate(self):
        offers = {1: 100, 2: 100, 3: 300}
        localities = {1: 0, 2: 0, 3: 1}
        assert gate_offers(offers, localities, 250) == {3: 300}

    def test_partial_payment_becomes_due(self):
        result = acquire(100, {1: 100}, frp=10, funds=600, step=4)
        assert result.paid == 600
        assert [(d.farmer_id, d.amount_owed, d.step) for d in result.dues] == [(1, 400, 4)]

    def test_largest_offers_first(self):
        result = acquire(150, {1: 50, 2: 120}, frp=1, funds=1000)
        assert [(p.farmer_id, p.quantity) for p in result.purchases] == [(2, 120), (1, 30)]

    def test_oldest_due_settled_first(self):
        mill = make_mill(dues=deque([Due(1, 10, 1, 50, 1), Due(2, 10, 1, 50, 2)]))
        payments = settle_dues(mill, 70)
        assert [(d.farmer_id, amount) for d, amount in payments] == [(1, 50), (2, 20)]
        assert [(d.farmer_id, d.amount_owed) for d in mill.dues] == [(2, 30)]

    def test_skipped_dues_stay(self):
        mill = make_mill(dues=deque([Due(1, 10, 1, 50, 1), Due(2, 10, 1, 50, 2)]))
        payments = settle_dues(mill, 100, skip=lambda farmer_id: farmer_id == 1)
        assert [d.farmer_id for d, _ in payments] == [2]
        assert mill.total_dues() == 50

    def test_free_funds_respect_reserve(self):
        assert make_mill(savings=1000, maintenance_reserve=400).free_funds == 600
        assert make_mill(savings=100, maintenance_reserve=400).free_funds == 0
