"""Tests for crops, storage facility spec, labor and inflation."""
import pytest
from pydantic import ValidationError

from sugarsim.domain import (
    ContractViolation,
    CropSpec,
    InflationClock,
    LaborMarket,
    StorageFacilitySpec,
    apply_inflation,
)


def _crop(**overrides):
    fields = dict(
        id="cane", end_cycle=6, harvest_cycle=3, fert_pest_cost=100,
        labor_requirement=1, water_requirement=10, labor_flexibility=0.8,
        water_flexibility=0.7, prone_to_pest=2, produce=50, initial_cost=500,
    )
    fields.update(overrides)
    return CropSpec(**fields)


class TestApplyInflation:
    """Compounding of base values."""

    def test_zero_steps_is_identity(self):
        """No elapsed steps leaves the value alone."""
        assert apply_inflation(5000, 0, 0.0001) == 5000

    def test_one_step(self):
        assert apply_inflation(5000, 1, 0.0001) == pytest.approx(5000.5, rel=1e-12)

    def test_two_steps_compound(self):
        """Two steps compound rather than add."""
        assert apply_inflation(100, 2, 0.0001) == pytest.approx(100 * 1.0001 ** 2, rel=1e-12)

    def test_negative_steps_rejected(self):
        with pytest.raises(ContractViolation, match="steps"):
            apply_inflation(100, -1, 0.0001)

    def test_negative_value_rejected(self):
        with pytest.raises(ContractViolation, match="base value"):
            apply_inflation(-1, 1, 0.0001)


class TestCropSpec:
    """Crop parameter validation."""

    def test_harvests_per_crop(self):
        assert _crop().harvests_per_crop == 2

    def test_harvest_cycle_must_divide_end_cycle(self):
        with pytest.raises(ValidationError, match="not a multiple"):
            _crop(end_cycle=7)

    def test_harvest_cycle_longer_than_end_cycle(self):
        with pytest.raises(ValidationError, match="exceeds end_cycle"):
            _crop(end_cycle=2)

    def test_flexibility_range(self):
        with pytest.raises(ValidationError):
            _crop(labor_flexibility=1.5)

    def test_unknown_field_rejected(self):
        """Typos in crop definitions are errors, not silently ignored."""
        with pytest.raises(ValidationError):
            _crop(produse=10)

    def test_rainfed_crop(self):
        assert not _crop(water_requirement=0).needs_water


class TestStorageFacilitySpec:
    """Storage capacity, fee, loss and expiry validation."""

    def test_loss_rate_must_be_below_one(self):
        with pytest.raises(ValidationError, match="loss_rate"):
            StorageFacilitySpec(capacity={"a": 10}, loss_rate={"a": 1.0})

    def test_expiration_positive(self):
        with pytest.raises(ValidationError, match="expiration"):
            StorageFacilitySpec(capacity={"a": 10}, expiration={"a": 0})

    def test_crops_with_capacity(self):
        """Only crops with capacity are storable, in id order."""
        spec = StorageFacilitySpec(capacity={"b": 5, "a": 10, "c": 0})
        assert spec.crops() == ["a", "b"]


class TestLaborMarket:
    """Inflated per-crop wages."""

    def test_wages_inflate_from_base(self):
        labor = LaborMarket(base_wages={"cane": 1000.0}, rate_per_step=0.01)
        labor.advance(2)
        assert labor.wage("cane") == pytest.approx(1000 * 1.01 ** 2)
        labor.advance(3)
        assert labor.wage("cane") == pytest.approx(1000 * 1.01 ** 3)

    def test_unknown_crop(self):
        labor = LaborMarket(base_wages={"cane": 1000.0})
        with pytest.raises(ContractViolation, match="no wage"):
            labor.wage("rice")

    def test_non_positive_wage_rejected(self):
        with pytest.raises(ContractViolation):
            LaborMarket(base_wages={"cane": 0.0})


class TestInflationClock:

    def test_tick_and_inflate(self):
        clock = InflationClock(rate_per_step=0.0001)
        assert clock.inflate(5000) == 5000
        clock.tick()
        assert clock.current_step == 1
        assert clock.inflate(5000) == pytest.approx(5000.5)

    def test_negative_rate_rejected(self):
        with pytest.raises(ContractViolation):
            InflationClock(rate_per_step=-0.1)
