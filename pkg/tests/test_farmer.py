"""Tests for farmer decisions: land, profit, crop care, harvest, storage and exit."""
import math

import numpy as np
import pytest

from sugarsim.agents.farmer import (
    FarmerState,
    FarmerType,
    PlantingState,
    allocate_land,
    apply_pesticide_step,
    apply_resource_shortfall,
    check_exit,
    compute_total_expense,
    estimate_profit,
    evaluate_lender_offer,
    harvest,
    init_farmer,
    perceive,
    rank_crops,
    rescale_for_water,
    storage_decision,
    update_income_expectation,
    update_upper_limit,
)
from sugarsim.config import FarmersConfig
from sugarsim.domain import ContractViolation, CropSpec


def make_crop(**overrides) -> CropSpec:
    fields = dict(
        id="cane", end_cycle=3, harvest_cycle=3, fert_pest_cost=500,
        labor_requirement=1, water_requirement=1, labor_flexibility=0.8,
        water_flexibility=0.7, prone_to_pest=2, produce=50, initial_cost=1000,
    )
    fields.update(overrides)
    return CropSpec(**fields)


def make_farmer(**overrides) -> FarmerState:
    fields = dict(
        id=0, farmer_type=FarmerType.TYPE1, family_size=4, savings=100000,
        per_person_charge=5000, safety_buffer=10000, land=10, credit_rating=20,
        info_noise_sigma=0, water_endowment=0,
    )
    fields.update(overrides)
    return FarmerState(**fields)


def planted(crop_id="cane", land=2.0, **overrides) -> PlantingState:
    planting = PlantingState(crop=crop_id, land_allocated={crop_id: land})
    for name, value in overrides.items():
        setattr(planting, name, value)
    return planting


class TestInitFarmer:
    """Drawing farmers from their type profiles."""

    def test_same_seed_same_farmer(self):
        profile = FarmersConfig().type1
        a = init_farmer(FarmerType.TYPE1, np.random.default_rng(5), profile)
        b = init_farmer(FarmerType.TYPE1, np.random.default_rng(5), profile)
        assert (a.savings, a.land, a.family_size) == (b.savings, b.land, b.family_size)

    def test_type1_mean_savings(self):
        """Type1 savings centre on 5 lakh."""
        profile = FarmersConfig().type1
        rng = np.random.default_rng(11)
        n = 4000
        savings = [init_farmer(FarmerType.TYPE1, rng, profile).savings for _ in range(n)]
        assert abs(np.mean(savings) - 500000) < 4 * profile.savings_sd / math.sqrt(n)

    def test_type2_mean_land(self):
        profile = FarmersConfig().type2
        rng = np.random.default_rng(12)
        n = 4000
        land = [init_farmer(FarmerType.TYPE2, rng, profile).land for _ in range(n)]
        assert abs(np.mean(land) - 3.0) < 4 * profile.land_sd / math.sqrt(n)

    def test_land_floor_and_family_size(self):
        profile = FarmersConfig().type1.model_copy(update={"land_mean": 0.0, "land_sd": 0.0})
        farmer = init_farmer(FarmerType.TYPE1, np.random.default_rng(0), profile, min_land=0.1)
        assert farmer.land == 0.1
        assert 4 <= farmer.family_size <= 6

    def test_water_by_type(self):
        rng = np.random.default_rng(0)
        cfg = FarmersConfig()
        t1 = init_farmer(FarmerType.TYPE1, rng, cfg.type1, water_per_ha=600, surplus_per_ha=100)
        t2 = init_farmer(FarmerType.TYPE2, rng, cfg.type2, water_per_ha=600, surplus_per_ha=100)
        t3 = init_farmer(FarmerType.TYPE3, rng, cfg.type3, water_per_ha=600, surplus_per_ha=100)
        assert t1.water_endowment == 0
        assert t2.water_endowment == pytest.approx(600 * t2.land)
        assert t3.water_endowment == pytest.approx(700 * t3.land)

    def test_credit_rating_scaled_by_type(self):
        rng = np.random.default_rng(0)
        cfg = FarmersConfig()
        t1 = init_farmer(FarmerType.TYPE1, rng, cfg.type1, base_credit_rating=20)
        t2 = init_farmer(FarmerType.TYPE2, rng, cfg.type2, base_credit_rating=20)
        assert t1.credit_rating == 20
        assert t2.credit_rating == 40

    def test_safety_buffer_share_of_savings(self):
        farmer = init_farmer(FarmerType.TYPE2, np.random.default_rng(3), FarmersConfig().type2,
                             safety_buffer_fraction=0.1)
        assert farmer.safety_buffer == pytest.approx(0.1 * farmer.savings)
        assert list(farmer.savings_history) == [farmer.savings]


class TestPerceive:
    """Gaussian observation noise."""

    def test_zero_noise(self):
        assert perceive(100, 0, np.random.default_rng(0)) == 100

    def test_unit_noise_statistics(self):
        rng = np.random.default_rng(1)
        samples = np.array([perceive(100, 1, rng) for _ in range(20000)])
        assert samples.mean() == pytest.approx(100, abs=0.05)
        assert samples.std() == pytest.approx(1, abs=0.05)

    def test_non_negative(self):
        rng = np.random.default_rng(2)
        assert all(perceive(0.5, 10, rng) >= 0 for _ in range(1000))

    def test_negative_sigma(self):
        with pytest.raises(ContractViolation):
            perceive(1, -1, np.random.default_rng(0))


class TestUpdateUpperLimit:
    """Savings-trend scaling of the land upper limit."""

    def test_flat_savings(self):
        assert update_upper_limit([100, 100, 100], 2, 4) == pytest.approx(2)

    def test_unit_slope(self):
        """arctan(1) = pi/4 gives factor 1.5."""
        assert update_upper_limit([0, 1, 2], 2, 4) == pytest.approx(3)

    def test_falling_savings(self):
        expected = 2 * (1 + 2 * math.atan(-10) / math.pi)
        assert update_upper_limit([100, 90, 80], 2, 4) == pytest.approx(expected)
        assert expected == pytest.approx(0.1270, abs=1e-4)

    def test_capped_by_land(self):
        assert update_upper_limit([0, 1000, 2000], 3, 4) <= 4

    def test_short_window_keeps_previous(self):
        assert update_upper_limit([100], 2, 4, previous=1.5) == 1.5
        assert update_upper_limit([], 2, 4) == 4


class TestAllocateLand:
    """Affordable land per crop."""

    def setup_method(self):
        # labor 1 x wage 1000, water 1 x price 500, fert_pest 500, initial 1000
        self.crop = make_crop()
        self.kwargs = dict(loan_estimate=0, wage=1000, water_price=500,
                           months_per_step=1, with_water=True)

    def test_upper_limit_binds(self):
        """Budget 30000 over 3000 per ha allows 10 ha; the limit of 5 wins."""
        farmer = make_farmer()
        farmer.expectations.upper_limit["cane"] = 5
        assert allocate_land(farmer, self.crop, **self.kwargs) == pytest.approx(5)

    def test_no_budget(self):
        farmer = make_farmer(savings=10000)
        farmer.expectations.upper_limit["cane"] = 5
        assert allocate_land(farmer, self.crop, **self.kwargs) == 0

    def test_budget_binds(self):
        farmer = make_farmer(land=20)
        farmer.expectations.upper_limit["cane"] = 20
        assert allocate_land(farmer, self.crop, **self.kwargs) == pytest.approx(10)

    def test_loans_extend_budget(self):
        farmer = make_farmer(land=20)
        kwargs = dict(self.kwargs, loan_estimate=3000)
        assert allocate_land(farmer, self.crop, **kwargs) == pytest.approx(11)

    def test_without_water_costs(self):
        farmer = make_farmer(land=20)
        kwargs = dict(self.kwargs, with_water=False)
        assert allocate_land(farmer, self.crop, **kwargs) == pytest.approx(12)

    def test_per_cycle_costs(self):
        """Running costs over the whole harvest cycle: 1000 + 3 * 2000 per ha."""
        farmer = make_farmer(land=20)
        kwargs = dict(self.kwargs, per_cycle_costs=True)
        assert allocate_land(farmer, self.crop, **kwargs) == pytest.approx(30000 / 7000)


class TestEstimateProfit:
    """Expected profit to the end cycle."""

    def setup_method(self):
        self.crop = make_crop(end_cycle=6, harvest_cycle=3, produce=10, initial_cost=500,
                              labor_requirement=50, water_requirement=20)

    def test_hand_evaluation(self):
        profit = estimate_profit(self.crop, 2, 100, wage=1, water_price=1, with_water=True)
        assert profit == pytest.approx(4000 - 1840)

    def test_pure_cost(self):
        profit = estimate_profit(self.crop, 2, 0, wage=1, water_price=1, with_water=True)
        assert profit == pytest.approx(-1840)

    def test_zero_land(self):
        assert estimate_profit(self.crop, 0, 100, wage=1, water_price=1, with_water=True) == 0

    def test_negative_land(self):
        with pytest.raises(ContractViolation):
            estimate_profit(self.crop, -1, 100, wage=1, water_price=1, with_water=True)


class TestRankCrops:

    def test_descending(self):
        assert rank_crops({"A": 5, "B": 9}) == ["B", "A"]

    def test_ties_by_id(self):
        assert rank_crops({"B": 5, "A": 5}) == ["A", "B"]

    def test_single_and_empty(self):
        assert rank_crops({"A": 1}) == ["A"]
        assert rank_crops({}) == []


class TestRescaleForWater:
    """Shrinking allocations to the water actually received."""

    def test_full_water(self):
        assert rescale_for_water({"a": 4}, 6, {"a": 6}) == {"a": 4}

    def test_no_water(self):
        assert rescale_for_water({"a": 4}, 0, {"a": 6}) == {"a": 0}

    def test_half_water(self):
        assert rescale_for_water({"a": 4}, 3, {"a": 6}) == {"a": pytest.approx(2)}

    def test_rainfed_untouched(self):
        assert rescale_for_water({"a": 4, "r": 3}, 3, {"a": 6})["r"] == 3

    def test_zero_request_for_water_crop(self):
        with pytest.raises(ContractViolation, match="needs water"):
            rescale_for_water({"a": 4}, 1, {"a": 0}, water_needs={"a": 10})


class TestEvaluateLenderOffer:
    """Lender offers against rain-fed alternatives."""

    def test_no_rainfed_crops(self):
        assert evaluate_lender_offer(80, {}).accepted

    def test_better_rainfed_crop(self):
        decision = evaluate_lender_offer(80, {"millet": 100})
        assert not decision.accepted
        assert decision.counter_crop == "millet"

    def test_worse_rainfed_crop(self):
        assert evaluate_lender_offer(80, {"millet": 50}).accepted

    def test_equal_profit_accepts(self):
        assert evaluate_lender_offer(80, {"millet": 80}).accepted


class TestComputeTotalExpense:
    """Money needed to finish a crop."""

    def setup_method(self):
        # per step on 1 ha: labor 10000 + water 2000 + fert 5000, family 5000
        self.crop = make_crop(labor_requirement=1, water_requirement=2000,
                              fert_pest_cost=5000, initial_cost=5000)
        self.kwargs = dict(wage=10000, water_price=1, family_charge=5000, with_water=True)

    def test_nothing_left(self):
        assert compute_total_expense(0, self.crop, 1, planted=True, **self.kwargs) == 0

    def test_planted(self):
        assert compute_total_expense(3, self.crop, 1, planted=True, **self.kwargs) == pytest.approx(66000)

    def test_unplanted_adds_initial_cost(self):
        assert compute_total_expense(3, self.crop, 1, planted=False, **self.kwargs) == pytest.approx(71000)


class TestResourceShortfall:
    """Quality loss from partly paid water or labor."""

    def test_fully_paid(self):
        assert apply_resource_shortfall(0.9, 1.0, 10, 10) == pytest.approx(0.9)

    def test_nothing_paid(self):
        assert apply_resource_shortfall(1.0, 0.8, 0, 10) == 0

    def test_half_paid(self):
        assert apply_resource_shortfall(1.0, 0.8, 5, 10) == pytest.approx(0.4)

    def test_used_without_need(self):
        with pytest.raises(ContractViolation):
            apply_resource_shortfall(1.0, 0.8, 1, 0)


class TestPesticideStep:
    """Consecutive missed pesticide payments."""

    def test_three_misses_kill(self):
        planting = planted()
        for _ in range(3):
            apply_pesticide_step(planting, False, prone_to_pest=2)
        assert planting.quality == 0

    def test_alternating_never_kills(self):
        planting = planted()
        for paid in [False, True] * 5:
            apply_pesticide_step(planting, paid, prone_to_pest=2)
            assert planting.quality == 1

    def test_always_paid(self):
        planting = planted()
        for _ in range(4):
            apply_pesticide_step(planting, True, prone_to_pest=1)
        assert planting.missed_pesticide_steps == 0

    def test_unplanted_field(self):
        with pytest.raises(ContractViolation):
            apply_pesticide_step(PlantingState(), True, prone_to_pest=1)


class TestHarvest:
    """Harvest quantities and the lender's share."""

    def test_ideal_conditions(self):
        result = harvest(planted(), make_crop())
        assert result.quantity == pytest.approx(100)
        assert result.crop_finished

    def test_reduced_quality(self):
        assert harvest(planted(quality=0.4), make_crop()).quantity == pytest.approx(40)

    def test_lender_share(self):
        result = harvest(planted(lender_crop_share=0.25), make_crop())
        assert result.farmer_share == pytest.approx(75)
        assert result.lender_share == pytest.approx(25)

    def test_not_due(self):
        with pytest.raises(ContractViolation, match="due in"):
            harvest(planted(steps_to_harvest=1), make_crop())

    def test_multi_harvest_crop(self):
        """A crop with two harvests resets its countdown after the first."""
        crop = make_crop(end_cycle=6, harvest_cycle=3)
        planting = planted()
        first = harvest(planting, crop)
        assert not first.crop_finished
        assert planting.steps_to_harvest == 3
        planting.steps_to_harvest = 0
        assert harvest(planting, crop).crop_finished


class TestIncomeExpectation:

    def test_revenue_per_unit(self):
        assert update_income_expectation(200, 27500, 100) == pytest.approx(275)

    def test_nothing_produced(self):
        assert update_income_expectation(200, 0, 0) == 200


class TestStorageDecision:
    """Whether to store instead of selling."""

    def test_price_not_below_average(self):
        assert storage_decision(100, [90] * 5, 10000, 5, 500) == 0

    def test_budget_limits_storage(self):
        """10% of 10000 savings buys storage for 200 units at 5 each."""
        assert storage_decision(80, [100] * 5, 10000, 5, 500) == pytest.approx(200)

    def test_everything_stored_if_affordable(self):
        assert storage_decision(80, [100] * 5, 10000, 5, 150) == pytest.approx(150)

    def test_short_history_sells_all(self):
        assert storage_decision(80, [100] * 4, 10000, 5, 500) == 0


class TestCheckExit:
    """Leaving farming when savings run low."""

    def test_below_threshold(self):
        farmer = make_farmer(savings=79999)
        assert check_exit(farmer, months_per_step=1, step=7)
        assert farmer.exited and farmer.exit_step == 7

    def test_at_threshold_stays(self):
        farmer = make_farmer(savings=80000)
        assert not check_exit(farmer, months_per_step=1)
        assert not farmer.exited

    def test_well_above(self):
        assert not check_exit(make_farmer(savings=800000), months_per_step=1)

    def test_exit_is_permanent(self):
        farmer = make_farmer(savings=0)
        check_exit(farmer, months_per_step=1, step=1)
        farmer.savings = 10 ** 9
        assert check_exit(farmer, months_per_step=1, step=2)
        assert farmer.exit_step == 1
