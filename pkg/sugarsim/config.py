"""Scenario and runtime configuration for sugarsim."""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .domain import Buyer, CropSpec, StorageFacilitySpec, StrictModel


def _find_project_root() -> Optional[Path]:
    """Find project root by looking for .env or pyproject.toml."""
    current = Path.cwd()
    for _ in range(10):
        if (current / ".env").exists() or (current / "pyproject.toml").exists():
            return current
        parent = current.parent
        if parent == current:
            break
        current = parent
    return None


def _load_dotenv_files():
    """Load .env files from project directory and home config."""
    project_root = _find_project_root()
    if project_root:
        env_file = project_root / ".env"
        if env_file.exists():
            load_dotenv(env_file, override=False)

    cwd_env = Path.cwd() / ".env"
    if cwd_env.exists():
        load_dotenv(cwd_env, override=False)

    # Lowest priority
    home_env = Path.home() / ".sugarsim" / ".env"
    if home_env.exists():
        load_dotenv(home_env, override=False)


_load_dotenv_files()


class ScenarioError(ValueError):
    """Raised when a scenario cannot be loaded or fails validation."""


# --- farmers and population -------------------------------------------------

class FarmerProfile(StrictModel):
    """Initial-state distribution for one farmer type."""
    savings_mean: float = Field(ge=0)
    savings_sd: float = Field(ge=0)
    land_mean: float = Field(gt=0)
    land_sd: float = Field(ge=0)
    per_person_charge: float = Field(ge=0)   # per month
    info_noise_sigma: float = Field(ge=0)
    credit_multiplier: float = Field(default=1.0, ge=0)


class FarmersConfig(StrictModel):
    """Farmer behaviour constants and per-type profiles."""
    type1: FarmerProfile = Field(default_factory=lambda: FarmerProfile(
        savings_mean=500000, savings_sd=10000, land_mean=1.5, land_sd=0.5,
        per_person_charge=5000, info_noise_sigma=5.0, credit_multiplier=1.0,
    ))
    type2: FarmerProfile = Field(default_factory=lambda: FarmerProfile(
        savings_mean=3000000, savings_sd=500000, land_mean=3.0, land_sd=1.0,
        per_person_charge=8000, info_noise_sigma=1.0, credit_multiplier=2.0,
    ))
    type3: FarmerProfile = Field(default_factory=lambda: FarmerProfile(
        savings_mean=5000000, savings_sd=500000, land_mean=4.5, land_sd=1.0,
        per_person_charge=8000, info_noise_sigma=0.0, credit_multiplier=2.0,
    ))
    min_land: float = Field(default=0.1, gt=0)
    min_planting_area: float = Field(default=0.01, ge=0)
    safety_buffer_fraction: float = Field(default=0.10, ge=0, le=1)
    storage_budget_fraction: float = Field(default=0.10, ge=0, le=1)
    exit_steps: int = Field(default=4, ge=1)
    income_window: int = Field(default=2, ge=0)
    price_memory: int = Field(default=5, ge=1)


class PopulationConfig(StrictModel):
    """Population size, type split and locality grouping."""
    size: int = Field(default=500, ge=0)
    type1_fraction: float = Field(default=0.7, ge=0, le=1)
    type2_fraction: float = Field(default=0.2, ge=0, le=1)
    type3_fraction: float = Field(default=0.1, ge=0, le=1)
    locality_size: int = Field(default=100, ge=1)
    stagger_initial_planting: bool = True

    @model_validator(mode="after")
    def _check_fractions(self) -> "PopulationConfig":
        total = self.type1_fraction + self.type2_fraction + self.type3_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"type fractions must sum to 1, got {total:.12g}")
        return self


# --- market side ------------------------------------------------------------

class TradeConfig(StrictModel):
    """Import/export response and taxes for one commodity."""
    factor_of_import: float = Field(default=2.0, ge=0)
    factor_of_export: float = Field(default=2.0, ge=0)
    maximum_import: float = Field(default=2000.0, ge=0)
    maximum_export: float = Field(default=2000.0, ge=0)
    import_tax: float = Field(default=0.1, ge=0)
    export_tax: float = Field(default=0.0, ge=0)


class CommodityConfig(StrictModel):
    """A commodity traded through the market agent."""
    id: str
    crop_mult_factor: Optional[float] = Field(default=None, ge=0)
    initial_price: float = Field(gt=0)
    usual_demand: float = Field(gt=0)
    demand_variation_limit: Optional[float] = Field(default=0.5, ge=0)
    demand_noise_sigma: float = Field(default=0.0, ge=0)
    initial_stock: float = Field(default=0.0, ge=0)
    import_price: float = Field(default=0.0, ge=0)
    export_price: float = Field(default=0.0, ge=0)
    trade: TradeConfig = Field(default_factory=TradeConfig)


class PolicyConfig(StrictModel):
    """Policy levers swept in experiments."""
    frp: float = Field(default=275.0, ge=0)
    msp: dict[str, float] = Field(default_factory=dict)
    ethanol_requirement: float = Field(default=150000.0, ge=0)
    ethanol_price: float = Field(default=51.0, ge=0)
    policy_delta: float = Field(default=0.1, ge=0, lt=1)
    trade_window: int = Field(default=5, ge=1)


class WaterConfig(StrictModel):
    """Water agent and Type3 lender parameters."""
    agent_present: bool = True
    agent_price: float = Field(default=2.5, ge=0)
    agent_capacity: float = Field(default=150000.0, ge=0)
    lender_share_factor: float = Field(default=0.25, ge=0, le=1)
    type3_surplus_per_ha: float = Field(default=600.0, ge=0)
    reallocation_rounds: int = Field(default=3, ge=1)


class LoanConfig(StrictModel):
    """Loan agent parameters."""
    credit_annual_rate: float = Field(default=0.12, ge=0)
    collateral_annual_rate: float = Field(default=0.08, ge=0)
    credit_unit: float = Field(default=1000.0, ge=0)
    type1_base_rating: float = Field(default=20.0, ge=0)
    term_steps: int = Field(default=6, ge=1)
    penalty_fraction: float = Field(default=0.2, ge=0)
    seizure_default_limit: int = Field(default=4, ge=0)
    land_value_per_ha: float = Field(default=300000.0, ge=0)
    max_pledge_fraction: float = Field(default=0.9, ge=0, le=1)
    rating_increase: float = Field(default=2.0, ge=0)
    rating_decrease: float = Field(default=8.0, ge=0)


class MillYieldsConfig(StrictModel):
    """Output units per input unit along each processing path."""
    juice: float = Field(default=0.9, gt=0)
    molasses: float = Field(default=0.045, gt=0)
    sugar: float = Field(default=0.12, gt=0)
    ethanol_from_molasses: float = Field(default=25.0, gt=0)
    ethanol_from_juice: float = Field(default=7.8, gt=0)


class MillCostsConfig(StrictModel):
    """Processing cost per unit of input."""
    cane_processing: float = Field(default=20.0, ge=0)
    molasses_to_ethanol: float = Field(default=100.0, ge=0)
    juice_to_ethanol: float = Field(default=150.0, ge=0)


class MillConfig(StrictModel):
    """Sugar mill parameters."""
    yields: MillYieldsConfig = Field(default_factory=MillYieldsConfig)
    costs: MillCostsConfig = Field(default_factory=MillCostsConfig)
    initial_savings: float = Field(default=20000000.0, ge=0)
    maintenance_reserve: float = Field(default=2000000.0, ge=0)
    collection_threshold: float = Field(default=500.0, ge=0)
    credit_rating: float = Field(default=50.0, ge=0)
    credit_unit: float = Field(default=100000.0, ge=0)
    sales_window: int = Field(default=4, ge=1)
    net_of_stock: bool = True


# --- defaults -----------------------------------------------------------------

def _default_crops() -> list[CropSpec]:
    return [
        CropSpec(
            id="sugarcane", end_cycle=3, harvest_cycle=3, fert_pest_cost=6000,
            labor_requirement=1.0, water_requirement=600, labor_flexibility=0.8,
            water_flexibility=0.7, prone_to_pest=1, produce=750, initial_cost=40000,
            minimum_produce=2000, crop_mult_factor=275, buyer=Buyer.MILL,
        ),
        CropSpec(
            id="potato", end_cycle=1, harvest_cycle=1, fert_pest_cost=12000,
            labor_requirement=1.5, water_requirement=400, labor_flexibility=0.7,
            water_flexibility=0.6, prone_to_pest=1, produce=100, initial_cost=30000,
            minimum_produce=500, crop_mult_factor=1000, buyer=Buyer.MARKET,
        ),
        CropSpec(
            id="millet", end_cycle=1, harvest_cycle=1, fert_pest_cost=3000,
            labor_requirement=1.0, water_requirement=0, labor_flexibility=0.9,
            water_flexibility=1.0, prone_to_pest=1, produce=20, initial_cost=8000,
            crop_mult_factor=2500, buyer=Buyer.MARKET,
        ),
    ]


def _default_commodities() -> list[CommodityConfig]:
    return [
        CommodityConfig(
            id="sugar", crop_mult_factor=3500, initial_price=3500, usual_demand=6000,
            import_price=3200, export_price=2600,
        ),
        CommodityConfig(
            id="potato", initial_price=1000, usual_demand=8000,
            import_price=900, export_price=1100,
            trade=TradeConfig(factor_of_import=5.0, factor_of_export=5.0,
                              maximum_import=1000.0, maximum_export=1000.0),
        ),
        CommodityConfig(
            id="millet", initial_price=2500, usual_demand=1000,
            import_price=2400, export_price=2600,
            trade=TradeConfig(maximum_import=200.0, maximum_export=200.0),
        ),
    ]


def _default_storage() -> StorageFacilitySpec:
    return StorageFacilitySpec(
        capacity={"potato": 4000, "millet": 1000},
        fee_multiplier={"potato": 20, "millet": 30},
        loss_rate={"potato": 0.03, "millet": 0.01},
        expiration={"potato": 3, "millet": 6},
    )


SUGAR = "sugar"


class ScenarioConfig(StrictModel):
    """Full description of one simulation scenario."""
    name: str = "scenario"
    crops: list[CropSpec] = Field(default_factory=_default_crops)
    labor_wages: dict[str, float] = Field(default_factory=lambda: {
        "sugarcane": 10000.0, "potato": 10000.0, "millet": 8000.0,
    })
    commodities: list[CommodityConfig] = Field(default_factory=_default_commodities)
    population: PopulationConfig = Field(default_factory=PopulationConfig)
    farmers: FarmersConfig = Field(default_factory=FarmersConfig)
    policy: PolicyConfig = Field(default_factory=PolicyConfig)
    water: WaterConfig = Field(default_factory=WaterConfig)
    loans: LoanConfig = Field(default_factory=LoanConfig)
    mill: MillConfig = Field(default_factory=MillConfig)
    storage: StorageFacilitySpec = Field(default_factory=_default_storage)
    months_per_step: int = Field(default=4, ge=1)
    inflation_rate: float = Field(default=0.0001, ge=0)
    pricing_mode: Literal["absolute", "trend"] = "absolute"
    per_cycle_costs: bool = False
    steps: int = Field(default=50, ge=0)
    seed: int = Field(default=0, ge=0)
    audit_every_step: bool = True

    @model_validator(mode="after")
    def _check_references(self) -> "ScenarioConfig":
        crop_ids = [c.id for c in self.crops]
        if len(set(crop_ids)) != len(crop_ids):
            raise ValueError(f"duplicate crop ids in {crop_ids}")
        commodity_ids = [c.id for c in self.commodities]
        if len(set(commodity_ids)) != len(commodity_ids):
            raise ValueError(f"duplicate commodity ids in {commodity_ids}")

        known = set(crop_ids)
        for crop_id, wage in self.labor_wages.items():
            if crop_id not in known:
                raise ValueError(f"labor_wages references unknown crop '{crop_id}'")
            if wage <= 0:
                raise ValueError(f"labor wage for '{crop_id}' must be > 0")
        for crop in self.crops:
            if crop.id not in self.labor_wages:
                raise ValueError(f"crop '{crop.id}' has no labor wage")
            if crop.buyer is Buyer.MARKET and crop.id not in commodity_ids:
                raise ValueError(f"market crop '{crop.id}' has no commodity entry")
        if any(c.buyer is Buyer.MILL for c in self.crops) and SUGAR not in commodity_ids:
            raise ValueError("mill crops require a 'sugar' commodity")

        for commodity in self.commodities:
            if commodity.id != SUGAR and commodity.id not in known:
                raise ValueError(f"commodity '{commodity.id}' matches no crop")
            if self.commodity_mult_factor(commodity.id) <= 0:
                raise ValueError(f"commodity '{commodity.id}' needs a pricing coefficient > 0")
        for section, mapping in (
            ("storage.capacity", self.storage.capacity),
            ("storage.fee_multiplier", self.storage.fee_multiplier),
            ("storage.loss_rate", self.storage.loss_rate),
            ("storage.expiration", self.storage.expiration),
            ("policy.msp", self.policy.msp),
        ):
            for crop_id in mapping:
                if crop_id not in known:
                    raise ValueError(f"{section} references unknown crop '{crop_id}'")
        return self

    def crop(self, crop_id: str) -> CropSpec:
        for crop in self.crops:
            if crop.id == crop_id:
                return crop
        raise ScenarioError(f"unknown crop id: {crop_id}")

    def commodity(self, commodity_id: str) -> CommodityConfig:
        for commodity in self.commodities:
            if commodity.id == commodity_id:
                return commodity
        raise ScenarioError(f"unknown commodity id: {commodity_id}")

    def mill_crops(self) -> list[CropSpec]:
        return [c for c in self.crops if c.buyer is Buyer.MILL]

    def has_mill(self) -> bool:
        return bool(self.mill_crops())

    def commodity_mult_factor(self, commodity_id: str) -> float:
        """Pricing coefficient, falling back to the matching crop's."""
        commodity = self.commodity(commodity_id)
        if commodity.crop_mult_factor is not None:
            return commodity.crop_mult_factor
        if commodity_id == SUGAR:
            return commodity.initial_price
        return self.crop(commodity_id).crop_mult_factor

    def initial_income_expectation(self, crop_id: str) -> float:
        """FRP for mill crops, else MSP when set, else the initial market price."""
        crop = self.crop(crop_id)
        if crop.buyer is Buyer.MILL:
            return self.policy.frp
        if crop_id in self.policy.msp:
            return self.policy.msp[crop_id]
        return self.commodity(crop_id).initial_price


class RuntimeSettings(BaseSettings):
    """Process-level settings read from SUGARSIM_* environment variables."""
    model_config = SettingsConfigDict(env_prefix="SUGARSIM_", extra="ignore")

    out_dir: Path = Path("out")
    jobs: int = 1
    log_level: str = "INFO"


def get_runtime_settings() -> RuntimeSettings:
    """Get runtime settings from the environment."""
    return RuntimeSettings()


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"  {loc}: {item['msg']}")
    return "\n".join(lines)


def parse_scenario(data: dict, source: str = "<scenario>") -> ScenarioConfig:
    """Validate a raw scenario mapping.

    Raises:
        ScenarioError: With one ``loc: msg`` line per validation problem
    """
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be a mapping, got {type(data).__name__}")
    try:
        return ScenarioConfig(**data)
    except ValidationError as e:
        raise ScenarioError(f"{source} is invalid:\n{_format_validation_error(e)}") from e


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Load and validate a scenario file.

    Args:
        path: YAML scenario file

    Returns:
        Validated scenario with all defaults filled

    Raises:
        ScenarioError: If the file is missing, unparsable or invalid
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: cannot parse YAML: {e}") from e

    if isinstance(data, dict):
        _override_from_env(data)

    return parse_scenario(data, source=str(path))


def save_scenario(config: ScenarioConfig, path: Union[str, Path]) -> None:
    """Save a scenario to a YAML file."""
    with open(path, "w", encoding="utf-8") as f:
        yaml.dump(
            config.model_dump(mode="json"),
            f,
            default_flow_style=False,
            allow_unicode=True,
            sort_keys=False
        )


def _override_from_env(data: dict) -> None:
    """Override scenario values from environment variables."""
    env_mappings = {
        "SUGARSIM_SEED": ("seed",),
        "SUGARSIM_STEPS": ("steps",),
        "SUGARSIM_POPULATION": ("population", "size"),
    }

    for env_var, path in env_mappings.items():
        value = os.environ.get(env_var)
        if value:
            _set_nested(data, path, value)


def _set_nested(data: dict, path: tuple, value: Any) -> None:
    """Set a nested dictionary value."""
    for key in path[:-1]:
        data = data.setdefault(key, {})
    data[path[-1]] = value


def set_lever(config: ScenarioConfig, path: str, value: Any) -> ScenarioConfig:
    """Return a copy of ``config`` with the dotted ``path`` set to ``value``.

    The whole scenario is re-validated, so a bad value raises ScenarioError.
    """
    data = config.model_dump(mode="json")
    keys = tuple(path.split("."))
    cursor: Any = data
    for key in keys[:-1]:
        if not isinstance(cursor, dict) or key not in cursor:
            raise ScenarioError(f"unknown parameter path: {path}")
        cursor = cursor[key]
    if not isinstance(cursor, dict) or keys[-1] not in cursor:
        raise ScenarioError(f"unknown parameter path: {path}")
    _set_nested(data, keys, value)
    return parse_scenario(data, source=f"{path}={value!r}")


def config_digest(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form of a validated scenario."""
    canonical = json.dumps(
        config.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def get_lever(config: ScenarioConfig, path: str) -> Any:
    """Current value at a dotted parameter path.

    Raises:
        ScenarioError: If the path does not name a scenario field
    """
    cursor: Any = config.model_dump(mode="json")
    for key in path.split("."):
        if not isinstance(cursor, dict) or key not in cursor:
            raise ScenarioError(f"unknown parameter path: {path}")
        cursor = cursor[key]
    return cursor
