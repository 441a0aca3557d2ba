"""Deterministic step scheduler for the sugar supply-chain economy.

One step runs ten phases in a fixed order:

1. inflation of wages, family charges, buffers and storage fee scales
2. market and storage pricing
3. stored-lot releases, then consumer demand and sales
4. imports and exports
5. trade policy adjustment
6. mill: requirement, financing, cane purchase, processing, dues
7. farmers in id order: bills, harvest, sales, loans, exit
8. planting decisions
9. water market (water agent, then Type3 lenders) and Type1 planting
10. metrics frame

Every currency movement goes through the Ledger; the state holds nothing
that is not rebuilt from it between steps, so a pickled state resumes
bit-identically.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..agents.credit import (
    LoanAccount,
    LoanBook,
    LoanKind,
    annual_to_step_rate,
    early_close,
    record_payment,
    request_loan,
)
from ..agents.farmer import (
    FarmerState,
    FarmerType,
    HarvestRecord,
    WaterSource,
    allocate_land,
    apply_pesticide_step,
    apply_resource_shortfall,
    check_exit,
    compute_total_expense,
    estimate_profit,
    estimate_revenue,
    evaluate_lender_offer,
    harvest,
    init_farmer,
    net_offer_profit,
    perceive,
    rank_crops,
    rescale_for_water,
    storage_decision,
    update_income_expectation,
    update_upper_limit,
)
from ..agents.mill import (
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
from ..agents.water import LenderPool, WaterRequest, reallocate_round, water_agent_allocate
from ..config import SUGAR, ScenarioConfig
from ..domain import Buyer, ContractViolation, CropSpec, InflationClock, LaborMarket, apply_inflation
from ..market.factory import create_pricer
from ..market.pricing import MarketBook, consumer_demand
from ..market.storage import StorageLedger, StorageRequest, storage_admit_and_age, storage_price
from ..market.trade import TradeParams, import_export_step, policy_step
from .checkpoint import save_checkpoint
from .ledger import (
    ENV_CONSUMERS,
    ENV_ENDOWMENT,
    ENV_ETHANOL,
    ENV_EXPORT,
    ENV_HOUSEHOLD,
    ENV_IMPORT,
    ENV_INPUTS,
    ENV_LABOR,
    ENV_LAND_MARKET,
    ENV_PROCESSING,
    ENVIRONMENT_ACCOUNTS,
    Account,
    Ledger,
    TransferKind,
)
from .metrics import MetricsFrame, collect_frame
from .rng import RandomStreams

logger = logging.getLogger(__name__)

BANK = "bank"
MARKET = "market"
STORAGE = "storage"
WATER_AGENT = "water_agent"
GOVERNMENT = "government"

AGENT_ACCOUNTS = (BANK, MARKET, STORAGE, WATER_AGENT, GOVERNMENT)


@dataclass
class WaterCommitment:
    """Standing per-step water supply for one farmer's crop."""
    farmer_id: int
    provider: Optional[int]  # lender id, None for the water agent
    crop: str
    volume: float
    produce: float = 0.0


@dataclass
class WaterBook:
    """Active water commitments with running totals per provider."""
    commitments: dict[int, WaterCommitment] = field(default_factory=dict)
    agent_total: float = 0.0
    lender_totals: dict[int, float] = field(default_factory=dict)
    lender_produce: dict[int, dict[str, float]] = field(default_factory=dict)

    def commit(self, commitment: WaterCommitment) -> None:
        self.release(commitment.farmer_id)
        self.commitments[commitment.farmer_id] = commitment
        if commitment.provider is None:
            self.agent_total += commitment.volume
            return
        lender = commitment.provider
        self.lender_totals[lender] = self.lender_totals.get(lender, 0.0) + commitment.volume
        produce = self.lender_produce.setdefault(lender, {})
        produce[commitment.crop] = produce.get(commitment.crop, 0.0) + commitment.produce

    def release(self, farmer_id: int) -> Optional[WaterCommitment]:
        commitment = self.commitments.pop(farmer_id, None)
        if commitment is None:
            return None
        if commitment.provider is None:
            self.agent_total = max(self.agent_total - commitment.volume, 0.0)
            return commitment
        lender = commitment.provider
        self.lender_totals[lender] = max(self.lender_totals.get(lender, 0.0) - commitment.volume, 0.0)
        produce = self.lender_produce.get(lender, {})
        produce[commitment.crop] = max(produce.get(commitment.crop, 0.0) - commitment.produce, 0.0)
        return commitment


@dataclass
class StepTotals:
    """Physical quantities accumulated during the current step."""
    harvested: dict[str, float] = field(default_factory=dict)
    cane_dumped: float = 0.0
    cane_bought: float = 0.0
    sugar_output: float = 0.0
    ethanol_output: float = 0.0


@dataclass
class PlantingPlan:
    """One farmer's land allocation and profit estimate per crop for this step."""
    land: dict[str, float]
    profits: dict[str, float]
    ranking: list[str]
    water_price: float


@dataclass
class SimulationState:
    """Everything a run carries from one step to the next."""
    config: ScenarioConfig
    step: int
    farmers: list[FarmerState]
    mill: Optional[MillState]
    market: dict[str, MarketBook]
    storage: StorageLedger
    loans: LoanBook
    trade: dict[str, TradeParams]
    trade_history: dict[str, list[tuple[float, float]]]
    rng: RandomStreams
    ledger: Ledger
    clock: InflationClock
    labor: LaborMarket
    water: WaterBook = field(default_factory=WaterBook)
    accounts: dict[str, Account] = field(default_factory=dict)
    metrics: list[MetricsFrame] = field(default_factory=list)

    def exited_accounts(self) -> dict[str, int]:
        """Account name -> exit step for every exited farmer."""
        return {
            f.account: f.exit_step for f in self.farmers
            if f.exited and f.exit_step is not None
        }


def _type_counts(n: int, config: ScenarioConfig) -> tuple[int, int, int]:
    pop = config.population
    n1 = int(math.floor(pop.type1_fraction * n + 1e-9))
    n2 = int(math.floor(pop.type2_fraction * n + 1e-9))
    return n1, n2, n - n1 - n2


def init_population(config: ScenarioConfig, rng: np.random.Generator) -> list[FarmerState]:
    """Draw the farmer population.

    Types are split by floor of the configured fractions (remainder to Type3)
    and shuffled over sequential ids, so every locality mixes all types.
    """
    n = config.population.size
    if n < 0:
        raise ContractViolation(f"population size must be >= 0, got {n}")
    n1, n2, n3 = _type_counts(n, config)
    kinds = [FarmerType.TYPE1] * n1 + [FarmerType.TYPE2] * n2 + [FarmerType.TYPE3] * n3
    order = rng.permutation(n) if n else np.zeros(0, dtype=int)

    farmers_cfg = config.farmers
    profiles = {
        FarmerType.TYPE1: farmers_cfg.type1,
        FarmerType.TYPE2: farmers_cfg.type2,
        FarmerType.TYPE3: farmers_cfg.type3,
    }
    water_per_ha = max((c.water_requirement for c in config.crops), default=0.0)
    history_len = max(max((c.harvest_cycle for c in config.crops), default=1), 2) + 1

    farmers = []
    for farmer_id in range(n):
        kind = kinds[int(order[farmer_id])]
        farmer = init_farmer(
            kind, rng, profiles[kind],
            farmer_id=farmer_id,
            base_credit_rating=config.loans.type1_base_rating,
            min_land=farmers_cfg.min_land,
            safety_buffer_fraction=farmers_cfg.safety_buffer_fraction,
            water_per_ha=water_per_ha,
            surplus_per_ha=config.water.type3_surplus_per_ha,
            history_len=history_len,
        )
        farmer.locality = farmer_id // config.population.locality_size
        farmers.append(farmer)
    return farmers


def init_state(config: ScenarioConfig) -> SimulationState:
    """Build step 0: population, agents, opening balances and the first planting."""
    streams = RandomStreams(config.seed)
    farmers = init_population(config, streams.population)

    for farmer in farmers:
        for crop in config.crops:
            expected = config.initial_income_expectation(crop.id)
            farmer.expectations.income_expectation[crop.id] = perceive(
                expected, farmer.info_noise_sigma, streams.perception
            )

    mill = None
    if config.has_mill():
        m = config.mill
        mill = MillState(
            yields=MillYields(**m.yields.model_dump()),
            costs=ProcessingCosts(**m.costs.model_dump()),
            savings=m.initial_savings,
            maintenance_reserve=m.maintenance_reserve,
            collection_threshold=m.collection_threshold,
            estimated_sugar_requirement=config.commodity(SUGAR).usual_demand,
            credit_rating=m.credit_rating,
        )

    ledger = Ledger()
    accounts: dict[str, Account] = {}
    for name in ENVIRONMENT_ACCOUNTS + AGENT_ACCOUNTS:
        accounts[name] = ledger.open_account(name)

    opening: list[tuple[str, float]] = []
    for farmer in farmers:
        ledger.open_account(farmer.account, farmer)
        opening.append((farmer.account, farmer.savings))
        farmer.savings = 0.0
    if mill is not None:
        ledger.open_account(mill.account, mill)
        opening.append((mill.account, mill.savings))
        mill.savings = 0.0
    for name, amount in opening:
        ledger.transfer(0, ENV_ENDOWMENT, name, amount, TransferKind.ENDOWMENT)

    market = {
        c.id: MarketBook(
            commodity=c.id,
            initial_price=c.initial_price,
            usual_demand=c.usual_demand,
            current_stock=c.initial_stock,
        )
        for c in config.commodities
    }
    state = SimulationState(
        config=config,
        step=0,
        farmers=farmers,
        mill=mill,
        market=market,
        storage=StorageLedger(spec=config.storage),
        loans=LoanBook(),
        trade={c.id: TradeParams.from_config(c.trade, c.initial_price) for c in config.commodities},
        trade_history={c.id: [] for c in config.commodities},
        rng=streams,
        ledger=ledger,
        clock=InflationClock(rate_per_step=config.inflation_rate),
        labor=LaborMarket(base_wages=dict(config.labor_wages), rate_per_step=config.inflation_rate),
        accounts=accounts,
    )

    sim = Simulation(state)
    sim.initial_planting()
    if config.audit_every_step:
        ledger.check_step(0)
    state.metrics.append(sim.frame())
    logger.info(
        f"Initialized '{config.name}': {len(farmers)} farmers, "
        f"{len(config.crops)} crops, seed {config.seed}"
    )
    return state


class Simulation:
    """Runs the phases of one step against a SimulationState."""

    def __init__(self, state: SimulationState):
        self.state = state
        self.config = state.config
        self.crops: dict[str, CropSpec] = {c.id: c for c in self.config.crops}
        self.mill_crop_ids = [c.id for c in self.config.mill_crops()]
        self.pricer = create_pricer(self.config.pricing_mode)
        self.months = self.config.months_per_step
        self.totals = StepTotals(harvested={c: 0.0 for c in self.crops})

    # --- helpers --------------------------------------------------------------

    @property
    def step(self) -> int:
        return self.state.step

    def _transfer(self, payer: str, payee: str, amount: float, kind: TransferKind) -> float:
        return self.state.ledger.transfer(self.step, payer, payee, amount, kind)

    def _pay_capped(self, farmer: FarmerState, payee: str, amount: float, kind: TransferKind) -> float:
        """Pay as much of ``amount`` as the farmer's savings allow."""
        paid = min(max(amount, 0.0), max(farmer.savings, 0.0))
        return self._transfer(farmer.account, payee, paid, kind)

    def _wage(self, crop_id: str) -> float:
        return self.state.labor.wage(crop_id)

    def _agent_price(self) -> float:
        water = self.config.water
        return water.agent_price if water.agent_present else 0.0

    def _remaining_expense(self, farmer: FarmerState) -> float:
        planting = farmer.planting
        if not planting.planted:
            return 0.0
        crop = self.crops[planting.crop]
        remaining = planting.planted_at + crop.end_cycle - self.step + 1
        with_water = planting.water_source is WaterSource.AGENT
        return compute_total_expense(
            remaining, crop, planting.area,
            wage=self._wage(crop.id),
            water_price=self._agent_price(),
            family_charge=farmer.family_charge(self.months),
            planted=True,
            with_water=with_water,
        )

    def _collateral_capacity(self, farmer: FarmerState) -> float:
        loans = self.config.loans
        free = loans.max_pledge_fraction * farmer.land - self.state.loans.pledged_land(farmer.account)
        return max(free, 0.0) * loans.land_value_per_ha

    def _loan_estimate(self, farmer: FarmerState) -> float:
        book = self.state.loans
        estimate = 0.0
        if book.active_of_kind(farmer.account, LoanKind.CREDIT) is None:
            estimate += max(farmer.credit_rating, 0.0) * self.config.loans.credit_unit
        if book.active_of_kind(farmer.account, LoanKind.COLLATERAL) is None:
            estimate += self._collateral_capacity(farmer)
        return estimate

    def _borrow(self, farmer: FarmerState, amount: float) -> float:
        """Request loans for ``amount``; returns the sum disbursed."""
        if amount <= 0:
            return 0.0
        cfg = self.config.loans
        book = self.state.loans
        rating = farmer.credit_rating
        if book.active_of_kind(farmer.account, LoanKind.CREDIT) is not None:
            rating = 0.0
        collateral = 0.0
        if book.active_of_kind(farmer.account, LoanKind.COLLATERAL) is None:
            collateral = self._collateral_capacity(farmer)

        split = request_loan(amount, rating, collateral, cfg.credit_unit)
        disbursed = 0.0
        if split.credit > 0:
            book.open(
                farmer.account, LoanKind.CREDIT, split.credit,
                annual_to_step_rate(cfg.credit_annual_rate, self.months), cfg.term_steps, self.step,
            )
            disbursed += self._transfer(BANK, farmer.account, split.credit, TransferKind.LOAN_DISBURSEMENT)
        if split.collateral > 0 and cfg.land_value_per_ha > 0:
            book.open(
                farmer.account, LoanKind.COLLATERAL, split.collateral,
                annual_to_step_rate(cfg.collateral_annual_rate, self.months), cfg.term_steps, self.step,
                collateral_value=split.collateral,
                pledged_land=split.collateral / cfg.land_value_per_ha,
            )
            disbursed += self._transfer(BANK, farmer.account, split.collateral, TransferKind.LOAN_DISBURSEMENT)
        return disbursed

    def _service_loan(self, holder, loan: LoanAccount) -> None:
        cfg = self.config.loans
        due = min(loan.installment, loan.outstanding * (1.0 + loan.rate_per_step))
        paid = holder.savings >= due
        outcome = record_payment(
            loan, paid, holder.credit_rating,
            penalty_fraction=cfg.penalty_fraction,
            seizure_limit=cfg.seizure_default_limit,
            rating_increase=cfg.rating_increase,
            rating_decrease=cfg.rating_decrease,
        )
        holder.credit_rating = outcome.rating
        if outcome.amount_paid > 0:
            self._transfer(holder.account, BANK, outcome.amount_paid, TransferKind.LOAN_REPAYMENT)
        if outcome.seized:
            self._seize(holder, loan, outcome.refund)

    def _seize(self, farmer: FarmerState, loan: LoanAccount, refund: float) -> None:
        self._transfer(ENV_LAND_MARKET, BANK, loan.collateral_value, TransferKind.SEIZURE)
        self._transfer(BANK, farmer.account, refund, TransferKind.SEIZURE_REFUND)
        farmer.land = max(farmer.land - loan.pledged_land, 0.0)
        limits = farmer.expectations.upper_limit
        for crop_id in limits:
            limits[crop_id] = min(limits[crop_id], farmer.land)
        planting = farmer.planting
        for crop_id, area in planting.land_allocated.items():
            planting.land_allocated[crop_id] = min(area, farmer.land)
        logger.debug(f"Farmer {farmer.id} lost {loan.pledged_land:.3f} ha to seizure")

    # --- income windows ------------------------------------------------------

    def _credit_revenue(self, farmer: FarmerState, crop_id: str, amount: float) -> None:
        record = farmer.expectations.last_harvest.get(crop_id)
        if record is not None and self.step - record.step <= self.config.farmers.income_window:
            record.revenue += amount

    def _finalize_window(self, farmer: FarmerState, record: HarvestRecord) -> None:
        ie = farmer.expectations.income_expectation
        ie[record.crop] = update_income_expectation(ie.get(record.crop, 0.0), record.revenue, record.quantity)

    def _open_window(self, farmer: FarmerState, crop_id: str, quantity: float) -> None:
        windows = farmer.expectations.last_harvest
        previous = windows.pop(crop_id, None)
        if previous is not None:
            self._finalize_window(farmer, previous)
        windows[crop_id] = HarvestRecord(crop=crop_id, step=self.step, quantity=quantity)

    def _close_windows(self, farmer: FarmerState) -> None:
        windows = farmer.expectations.last_harvest
        for crop_id in sorted(windows):
            record = windows[crop_id]
            if self.step - record.step >= self.config.farmers.income_window:
                self._finalize_window(farmer, record)
                del windows[crop_id]

    # --- selling ---------------------------------------------------------------

    def _sell(self, farmer: FarmerState, crop_id: str, quantity: float, flow: str = "production") -> float:
        book = self.state.market[crop_id]
        moved = book.move(flow, quantity)
        value = self._transfer(MARKET, farmer.account, moved * book.price, TransferKind.CROP_SALE)
        self._credit_revenue(farmer, crop_id, value)
        return value

    # --- phase 1 ---------------------------------------------------------------

    def _inflate(self) -> None:
        s = self.state
        s.clock.current_step = self.step
        s.labor.advance(self.step)
        rate = self.config.inflation_rate
        for farmer in s.farmers:
            if farmer.exited:
                continue
            farmer.per_person_charge = apply_inflation(farmer.base_per_person_charge, self.step, rate)
            farmer.safety_buffer = apply_inflation(farmer.base_safety_buffer, self.step, rate)
        for book in s.market.values():
            book.open_step()

    # --- phase 2 ---------------------------------------------------------------

    def _price(self) -> None:
        s = self.state
        for commodity_id, book in s.market.items():
            price = self.pricer.price(book, self.config.commodity_mult_factor(commodity_id))
            book.price_history.append(price)

        spec = s.storage.spec
        for crop_id in spec.crops():
            multiplier = s.clock.inflate(spec.fee_multiplier.get(crop_id, 0.0))
            s.storage.fees[crop_id] = storage_price(
                s.storage.request_history.get(crop_id, []),
                s.storage.remaining_history.get(crop_id, []),
                multiplier,
            )

    # --- phase 3 ---------------------------------------------------------------

    def _release_stored(self) -> None:
        s = self.state
        cfg = self.config.farmers
        for lot in list(s.storage.lots):
            owner = s.farmers[lot.owner_id]
            if owner.exited:
                s.storage.remove(lot)
                continue
            book = s.market[lot.crop]
            history = book.price_history[:-1]
            price = perceive(book.price, owner.info_noise_sigma, s.rng.perception)
            if len(history) >= cfg.price_memory and price < float(np.mean(history[-cfg.price_memory:])):
                fee = s.storage.fee(lot.crop) * lot.quantity
                if fee <= cfg.storage_budget_fraction * max(owner.savings, 0.0):
                    self._transfer(owner.account, STORAGE, fee, TransferKind.STORAGE_FEE)
                    continue
            s.storage.remove(lot)
            self._sell(owner, lot.crop, lot.quantity, flow="withdrawals")

    def _consume(self) -> None:
        s = self.state
        for commodity_id, book in s.market.items():
            commodity = self.config.commodity(commodity_id)
            demand = consumer_demand(
                book.price, book.previous_price, book.past_sales(4),
                book.usual_demand, commodity.demand_variation_limit,
            )
            if commodity.demand_noise_sigma > 0:
                noise = 1.0 + float(s.rng.demand.normal(0.0, commodity.demand_noise_sigma))
                demand = max(demand * noise, 0.0)
            stock_before = book.current_stock
            sold = book.move("sales", demand)
            book.sale_history.append(sold)
            book.stock_history.append(stock_before)
            self._transfer(ENV_CONSUMERS, MARKET, sold * book.price, TransferKind.CONSUMER_PURCHASE)

    # --- phases 4 and 5 --------------------------------------------------------

    def _trade(self) -> None:
        s = self.state
        for commodity_id, book in s.market.items():
            commodity = self.config.commodity(commodity_id)
            params = replace(s.trade[commodity_id], usual_price=s.clock.inflate(commodity.initial_price))
            s.trade[commodity_id] = params
            imports, exports = import_export_step(book.price, params)

            if imports > 0:
                book.move("imports", imports)
                cost = imports * commodity.import_price
                self._transfer(MARKET, ENV_IMPORT, cost, TransferKind.IMPORT)
                self._transfer(MARKET, GOVERNMENT, cost * params.import_tax, TransferKind.TAX)
            if exports > 0:
                exports = book.move("exports", exports)
                revenue = exports * commodity.export_price
                self._transfer(ENV_EXPORT, MARKET, revenue, TransferKind.EXPORT)
                self._transfer(MARKET, GOVERNMENT, revenue * params.export_tax, TransferKind.TAX)
            s.trade_history[commodity_id].append((imports, exports))

    def _policy(self) -> None:
        s = self.state
        policy = self.config.policy
        for commodity_id in s.market:
            s.trade[commodity_id] = policy_step(
                s.trade_history[commodity_id], s.trade[commodity_id],
                delta=policy.policy_delta, window=policy.trade_window,
            )

    # --- phase 6 ---------------------------------------------------------------

    def _mill_finance(self, mill: MillState, estimated_need: float) -> None:
        book = self.state.loans
        for loan in book.active(mill.account):
            if loan.opened_at < self.step:
                self._service_loan(mill, loan)
        if mill.savings >= estimated_need or book.active_of_kind(mill.account, LoanKind.CREDIT) is not None:
            return
        cap = max(mill.credit_rating, 0.0) * self.config.mill.credit_unit
        amount = min(estimated_need - mill.savings, cap)
        if amount <= 0:
            return
        loans = self.config.loans
        book.open(
            mill.account, LoanKind.CREDIT, amount,
            annual_to_step_rate(loans.credit_annual_rate, self.months), loans.term_steps, self.step,
        )
        self._transfer(BANK, mill.account, amount, TransferKind.LOAN_DISBURSEMENT)
        logger.debug(f"Mill borrowed {amount:.0f} at step {self.step}")

    def _take_cane(self, farmer: FarmerState, quantity: float) -> dict[str, float]:
        taken = {}
        for crop_id in self.mill_crop_ids:
            if quantity <= 0:
                break
            held = farmer.inventory.get(crop_id, 0.0)
            q = min(held, quantity)
            if q > 0:
                farmer.inventory[crop_id] = held - q
                taken[crop_id] = q
                quantity -= q
        return taken

    def _run_mill(self) -> None:
        s = self.state
        mill = s.mill
        if mill is None:
            return
        cfg = self.config.mill
        policy = self.config.policy
        sugar = s.market[SUGAR]

        requirement = estimate_sugar_requirement(sugar.sale_history, sugar.usual_demand, cfg.sales_window)
        if cfg.net_of_stock:
            requirement = max(requirement - sugar.current_stock, 0.0)
        mill.estimated_sugar_requirement = requirement

        cost_per_litre = mill.costs.juice_to_ethanol / mill.yields.ethanol_from_juice
        mode = decide_ethanol_mode(cost_per_litre, policy.ethanol_price)
        cane_needed, e = required_sugarcane(policy.ethanol_requirement, requirement, mill.yields, mode)
        need = cane_needed * policy.frp + process(cane_needed, e, mill.yields, mill.costs).total_cost
        self._mill_finance(mill, need)

        offers = {}
        for farmer in s.farmers:
            if farmer.exited:
                continue
            held = sum(farmer.inventory.get(c, 0.0) for c in self.mill_crop_ids)
            if held > 0:
                offers[farmer.id] = held
        localities = {fid: s.farmers[fid].locality for fid in offers}
        eligible = gate_offers(offers, localities, mill.collection_threshold)
        acquisition = acquire(cane_needed, eligible, policy.frp, mill.free_funds, self.step)

        for purchase in acquisition.purchases:
            farmer = s.farmers[purchase.farmer_id]
            taken = self._take_cane(farmer, purchase.quantity)
            paid = self._transfer(mill.account, farmer.account, purchase.paid, TransferKind.CANE_PAYMENT)
            for crop_id, quantity in taken.items():
                self._credit_revenue(farmer, crop_id, paid * quantity / purchase.quantity)
        mill.dues.extend(acquisition.dues)
        bought = acquisition.quantity
        mill.delivered_value += bought * policy.frp
        mill.paid_on_delivery += acquisition.paid

        dumped = 0.0
        for farmer in s.farmers:
            for crop_id in self.mill_crop_ids:
                dumped += farmer.inventory.pop(crop_id, 0.0)

        e_actual = diversion_for_cane(bought, policy.ethanol_requirement, mill.yields, mode)
        processed = affordable_cane(bought, e_actual, mill.yields, mill.costs, mill.free_funds)
        if processed < bought:
            logger.debug(f"Step {self.step} mill can only afford to crush {processed:.0f} of {bought:.0f} cane")
            dumped += bought - processed
        result = process(processed, e_actual, mill.yields, mill.costs)
        mill.e = e_actual
        mill.cane_bought += bought
        mill.sugar_output += result.sugar
        mill.ethanol_output += result.ethanol
        self._transfer(mill.account, ENV_PROCESSING, result.total_cost, TransferKind.PROCESSING)
        sugar.move("production", result.sugar)
        self._transfer(MARKET, mill.account, result.sugar * sugar.price, TransferKind.SUGAR_SALE)
        self._transfer(ENV_ETHANOL, mill.account, result.ethanol * policy.ethanol_price, TransferKind.ETHANOL_SALE)

        payments = settle_dues(mill, mill.free_funds, skip=lambda fid: s.farmers[fid].exited)
        for due, amount in payments:
            self._transfer(mill.account, s.farmers[due.farmer_id].account, amount, TransferKind.DUE_PAYMENT)
            mill.dues_settled += amount

        self.totals.cane_bought = bought
        self.totals.cane_dumped = dumped
        self.totals.sugar_output = result.sugar
        self.totals.ethanol_output = result.ethanol
        logger.debug(
            f"Step {self.step} mill: need {cane_needed:.0f}, bought {bought:.0f}, "
            f"dumped {dumped:.0f}, e={e_actual:.3f}, dues {mill.total_dues():.0f}"
        )

    # --- phase 7 ---------------------------------------------------------------

    def _release_water(self, farmer: FarmerState) -> None:
        self.state.water.release(farmer.id)

    def _end_crop(self, farmer: FarmerState, crop: CropSpec) -> None:
        planting = farmer.planting
        window = list(farmer.savings_history)[-crop.harvest_cycle:]
        farmer.expectations.upper_limit[crop.id] = update_upper_limit(
            window, planting.area, farmer.land,
            previous=farmer.expectations.upper_limit.get(crop.id),
        )
        self._release_water(farmer)
        planting.clear()

    def _tend_crop(self, farmer: FarmerState) -> None:
        s = self.state
        planting = farmer.planting
        crop = self.crops[planting.crop]
        area = planting.area
        wage = self._wage(crop.id)

        expense = self._remaining_expense(farmer)
        if farmer.savings < expense:
            self._borrow(farmer, expense - max(farmer.savings, 0.0))

        if planting.water_source is WaterSource.AGENT:
            owed = planting.water_volume * self._agent_price()
            paid = self._pay_capped(farmer, WATER_AGENT, owed, TransferKind.WATER)
            if paid < owed:
                planting.quality = apply_resource_shortfall(planting.quality, crop.water_flexibility, paid, owed)

        owed = crop.labor_requirement * wage * area
        paid = self._pay_capped(farmer, ENV_LABOR, owed, TransferKind.LABOR)
        if paid < owed:
            planting.quality = apply_resource_shortfall(planting.quality, crop.labor_flexibility, paid, owed)

        cost = crop.fert_pest_cost * area
        affordable = farmer.savings >= cost
        if affordable:
            self._transfer(farmer.account, ENV_INPUTS, cost, TransferKind.FERT_PEST)
        apply_pesticide_step(planting, affordable, crop.prone_to_pest)

        planting.steps_to_harvest -= 1
        if planting.quality <= 0:
            logger.debug(f"Farmer {farmer.id}: {crop.id} died at step {self.step}")
            self._end_crop(farmer, crop)
            return
        if planting.steps_to_harvest > 0:
            return

        planting.steps_to_harvest = 0
        result = harvest(planting, crop)
        self.totals.harvested[crop.id] += result.quantity
        farmer.inventory[crop.id] = farmer.inventory.get(crop.id, 0.0) + result.farmer_share
        if result.lender_share > 0 and planting.lender_id is not None:
            lender = s.farmers[planting.lender_id]
            if not lender.exited:
                lender.inventory[crop.id] = lender.inventory.get(crop.id, 0.0) + result.lender_share
        self._open_window(farmer, crop.id, result.farmer_share)
        if result.crop_finished:
            self._end_crop(farmer, crop)

    def _sell_or_store(self, farmer: FarmerState, requests: list[StorageRequest]) -> None:
        s = self.state
        cfg = self.config.farmers
        for crop_id in sorted(farmer.inventory):
            crop = self.crops[crop_id]
            if crop.buyer is Buyer.MILL:
                continue
            quantity = farmer.inventory.pop(crop_id)
            if quantity <= 0:
                continue
            stored = 0.0
            if s.storage.spec.capacity.get(crop_id, 0.0) > 0:
                book = s.market[crop_id]
                price = perceive(book.price, farmer.info_noise_sigma, s.rng.perception)
                stored = storage_decision(
                    price, book.price_history[:-1], farmer.savings,
                    s.storage.fee(crop_id), quantity,
                    budget_fraction=cfg.storage_budget_fraction, memory=cfg.price_memory,
                )
            if stored > 0:
                requests.append(StorageRequest(farmer.id, farmer.farmer_type, crop_id, stored))
            if quantity - stored > 0:
                self._sell(farmer, crop_id, quantity - stored)

    def _service_farmer_loans(self, farmer: FarmerState) -> None:
        book = self.state.loans
        for loan in book.active(farmer.account):
            if loan.opened_at < self.step:
                self._service_loan(farmer, loan)

        reserve = self._remaining_expense(farmer) + farmer.safety_buffer
        for loan in book.active(farmer.account):
            if loan.opened_at < self.step and early_close(loan, farmer.savings, reserve):
                self._transfer(farmer.account, BANK, loan.outstanding, TransferKind.LOAN_REPAYMENT)
                loan.outstanding = 0.0
                loan.closed = True

    def _retire(self, farmer: FarmerState) -> None:
        self._release_water(farmer)
        farmer.planting.clear()
        farmer.inventory.clear()
        farmer.expectations.last_harvest.clear()

    def _tend_farms(self) -> None:
        s = self.state
        cfg = self.config.farmers
        requests: list[StorageRequest] = []
        for farmer in s.farmers:
            if farmer.exited:
                continue
            self._pay_capped(farmer, ENV_HOUSEHOLD, farmer.family_charge(self.months), TransferKind.FAMILY_EXPENSE)
            if farmer.planting.planted:
                self._tend_crop(farmer)
            self._sell_or_store(farmer, requests)
            self._service_farmer_loans(farmer)
            self._close_windows(farmer)
            farmer.savings_history.append(farmer.savings)
            if check_exit(farmer, self.months, exit_steps=cfg.exit_steps, step=self.step):
                self._retire(farmer)

        requests = [r for r in requests if not s.farmers[r.owner_id].exited]
        result = storage_admit_and_age(s.storage, requests)
        for request, quantity in result.returned:
            self._sell(s.farmers[request.owner_id], request.crop, quantity)

    # --- phases 8 and 9 --------------------------------------------------------

    def _plan(self, farmer: FarmerState) -> Optional[PlantingPlan]:
        s = self.state
        min_area = self.config.farmers.min_planting_area
        water_price = 0.0
        if farmer.needs_water:
            water_price = perceive(self._agent_price(), farmer.info_noise_sigma, s.rng.perception)
        loan_estimate = self._loan_estimate(farmer)

        land: dict[str, float] = {}
        profits: dict[str, float] = {}
        for crop in self.config.crops:
            with_water = farmer.needs_water and crop.needs_water
            wage = self._wage(crop.id)
            area = allocate_land(
                farmer, crop,
                loan_estimate=loan_estimate, wage=wage, water_price=water_price,
                months_per_step=self.months, with_water=with_water,
                per_cycle_costs=self.config.per_cycle_costs,
            )
            if area < min_area or area <= 0:
                continue
            profit = estimate_profit(
                crop, area, farmer.expectations.income_expectation.get(crop.id, 0.0),
                wage=wage, water_price=water_price, with_water=with_water,
            )
            if profit > 0:
                land[crop.id] = area
                profits[crop.id] = profit
        if not profits:
            return None
        return PlantingPlan(land=land, profits=profits, ranking=rank_crops(profits), water_price=water_price)

    def _plant(
        self,
        farmer: FarmerState,
        crop_id: str,
        area: float,
        source: WaterSource,
        *,
        lender_id: Optional[int] = None,
        share: Optional[float] = None,
        volume: float = 0.0,
    ) -> bool:
        """Borrow for the expense shortfall, pay the initial cost and plant."""
        if area < self.config.farmers.min_planting_area or area <= 0:
            return False
        crop = self.crops[crop_id]
        with_water = source is WaterSource.AGENT
        expense = compute_total_expense(
            crop.end_cycle, crop, area,
            wage=self._wage(crop_id),
            water_price=self._agent_price(),
            family_charge=farmer.family_charge(self.months),
            planted=False,
            with_water=with_water,
        )
        shortfall = expense - (farmer.savings - farmer.safety_buffer)
        if shortfall > 0:
            self._borrow(farmer, shortfall)
        initial = crop.initial_cost * area
        if farmer.savings < initial:
            return False
        self._transfer(farmer.account, ENV_INPUTS, initial, TransferKind.INITIAL_COST)

        planting = farmer.planting
        planting.clear()
        planting.crop = crop_id
        planting.land_allocated = {crop_id: area}
        planting.planted_at = self.step
        planting.steps_to_harvest = crop.harvest_cycle
        planting.water_source = source
        planting.lender_id = lender_id
        planting.lender_crop_share = share
        planting.water_volume = volume
        return True

    def _plant_best(self, farmer: FarmerState, plan: PlantingPlan, crop_ids: list[str], source: WaterSource) -> bool:
        for crop_id in crop_ids:
            if self._plant(farmer, crop_id, plan.land[crop_id], source):
                return True
        return False

    def _plant_rainfed(self, farmer: FarmerState, plan: PlantingPlan, first: Optional[str] = None) -> bool:
        """Plant the best affordable rain-fed crop, trying ``first`` before the ranking."""
        crop_ids = self._rainfed(plan)
        if first is not None:
            crop_ids = [first] + [c for c in crop_ids if c != first]
        return self._plant_best(farmer, plan, crop_ids, WaterSource.RAIN)

    def _rainfed(self, plan: PlantingPlan) -> list[str]:
        return [c for c in plan.ranking if not self.crops[c].needs_water]

    def _water_crops(self, plan: PlantingPlan) -> list[str]:
        return [c for c in plan.ranking if self.crops[c].needs_water]

    def _decide_planting(self) -> None:
        s = self.state
        pending: list[tuple[FarmerState, PlantingPlan]] = []
        for farmer in s.farmers:
            if farmer.exited or farmer.planting.planted:
                continue
            plan = self._plan(farmer)
            if plan is None:
                continue
            if not farmer.needs_water:
                self._plant_best(farmer, plan, plan.ranking, WaterSource.OWN)
            elif not self.crops[plan.ranking[0]].needs_water:
                self._plant_rainfed(farmer, plan)
            else:
                pending.append((farmer, plan))
        self._water_market(pending)

    def _water_market(self, pending: list[tuple[FarmerState, PlantingPlan]]) -> None:
        if not pending:
            return
        unserved = pending
        if self.config.water.agent_present:
            unserved = self._serve_from_agent(pending)
        unserved = self._serve_from_lenders(unserved)
        for farmer, plan in unserved:
            self._plant_rainfed(farmer, plan)

    def _serve_from_agent(
        self, pending: list[tuple[FarmerState, PlantingPlan]]
    ) -> list[tuple[FarmerState, PlantingPlan]]:
        s = self.state
        water_cfg = self.config.water
        wants = {}
        for farmer, plan in pending:
            top = self._water_crops(plan)[0]
            wants[farmer.id] = self.crops[top].water_requirement * plan.land[top]

        available = max(water_cfg.agent_capacity - s.water.agent_total, 0.0)
        allocations = water_agent_allocate(available, wants, water_cfg.agent_price)
        by_id = {farmer.id: (farmer, plan) for farmer, plan in pending}
        served = set()
        for allocation in allocations:
            farmer, plan = by_id[allocation.farmer_id]
            served.add(farmer.id)
            water_crops = {c: plan.land[c] for c in self._water_crops(plan)}
            requested = {c: self.crops[c].water_requirement * area for c, area in water_crops.items()}
            rescaled = rescale_for_water(water_crops, allocation.volume, requested)

            options = {}
            for crop_id, area in rescaled.items():
                if area < self.config.farmers.min_planting_area or area <= 0:
                    continue
                options[crop_id] = estimate_profit(
                    self.crops[crop_id], area,
                    farmer.expectations.income_expectation.get(crop_id, 0.0),
                    wage=self._wage(crop_id), water_price=plan.water_price, with_water=True,
                )
            for crop_id in self._rainfed(plan):
                options[crop_id] = plan.profits[crop_id]
            options = {c: p for c, p in options.items() if p > 0}
            if not options:
                continue

            best = rank_crops(options)[0]
            crop = self.crops[best]
            if crop.needs_water:
                area = rescaled[best]
                volume = crop.water_requirement * area
                if self._plant(farmer, best, area, WaterSource.AGENT, volume=volume):
                    s.water.commit(WaterCommitment(farmer.id, None, best, volume))
                else:
                    self._plant_rainfed(farmer, plan)
            else:
                self._plant_rainfed(farmer, plan, first=best)
        return [(f, p) for f, p in pending if f.id not in served]

    def _lendable_water(self, lender: FarmerState) -> float:
        own = 0.0
        if lender.planting.planted:
            own = self.crops[lender.planting.crop].water_requirement * lender.planting.area
        committed = self.state.water.lender_totals.get(lender.id, 0.0)
        return max(lender.water_endowment - own - committed, 0.0)

    def _lender_crop_values(self) -> dict[str, float]:
        values = {}
        for crop in self.config.crops:
            if not crop.needs_water:
                continue
            if crop.buyer is Buyer.MILL:
                price = self.config.policy.frp
            else:
                price = self.state.market[crop.id].price
            values[crop.id] = price * crop.produce
        return values

    def _serve_from_lenders(
        self, pending: list[tuple[FarmerState, PlantingPlan]]
    ) -> list[tuple[FarmerState, PlantingPlan]]:
        s = self.state
        water_cfg = self.config.water
        if not pending:
            return pending

        lenders: dict[int, list[FarmerState]] = {}
        for farmer in s.farmers:
            if farmer.farmer_type is FarmerType.TYPE3 and not farmer.exited:
                lenders.setdefault(farmer.locality, []).append(farmer)

        by_id = {farmer.id: (farmer, plan) for farmer, plan in pending}
        requests: dict[int, list[WaterRequest]] = {}
        for farmer, plan in pending:
            request = WaterRequest(farmer_id=farmer.id)
            for crop_id in self._water_crops(plan):
                crop = self.crops[crop_id]
                area = plan.land[crop_id]
                request.water_requirement[crop_id] = crop.water_requirement * area
                request.estimated_produce[crop_id] = crop.produce * area
                request.land_willing[crop_id] = area
            requests.setdefault(farmer.locality, []).append(request)

        crop_values = self._lender_crop_values()
        minimum = {c.id: c.minimum_produce or 0.0 for c in self.config.crops}
        waiting = set(by_id)
        counter_notified = 0

        for _ in range(water_cfg.reallocation_rounds):
            pools = []
            for locality in sorted(requests):
                open_requests = [r for r in requests[locality] if r.farmer_id in waiting]
                if not open_requests:
                    continue
                for lender in lenders.get(locality, []):
                    available = self._lendable_water(lender)
                    if available > 0:
                        pools.append(LenderPool(
                            lender.id, available, open_requests,
                            dict(s.water.lender_produce.get(lender.id, {})),
                        ))
            if not pools:
                break
            allocations = reallocate_round(
                pools, crop_values, minimum, share_factor=water_cfg.lender_share_factor
            )
            if not allocations:
                break

            for allocation in allocations:
                farmer, plan = by_id[allocation.farmer_id]
                waiting.discard(farmer.id)
                crop = self.crops[allocation.crop]
                area = allocation.volume / crop.water_requirement
                expectation = farmer.expectations.income_expectation.get(crop.id, 0.0)
                profit = estimate_profit(
                    crop, area, expectation,
                    wage=self._wage(crop.id), water_price=0.0, with_water=False,
                )
                net = net_offer_profit(
                    profit, estimate_revenue(crop, area, expectation), allocation.produce_share
                )
                rainfed = {c: plan.profits[c] for c in self._rainfed(plan)}
                decision = evaluate_lender_offer(net, rainfed)
                if decision.accepted:
                    planted = self._plant(
                        farmer, crop.id, area, WaterSource.LENDER,
                        lender_id=allocation.lender_id,
                        share=allocation.produce_share,
                        volume=allocation.volume,
                    )
                    if planted:
                        s.water.commit(WaterCommitment(
                            farmer.id, allocation.lender_id, crop.id,
                            allocation.volume, allocation.estimated_produce,
                        ))
                    else:
                        self._plant_rainfed(farmer, plan)
                else:
                    counter_notified += 1
                    self._plant_rainfed(farmer, plan, first=decision.counter_crop)

        if counter_notified:
            logger.debug(f"Step {self.step}: {counter_notified} lender offers refused for rain-fed crops")
        return [by_id[fid] for fid in sorted(waiting)]

    # --- phase 10 --------------------------------------------------------------

    def frame(self) -> MetricsFrame:
        s = self.state
        return collect_frame(
            self.step, s.farmers, s.market, s.mill, s.storage,
            harvested=self.totals.harvested,
            cane_dumped=self.totals.cane_dumped,
            sugar_output=self.totals.sugar_output,
            ethanol_output=self.totals.ethanol_output,
            cane_bought=self.totals.cane_bought,
        )

    # --- drivers -----------------------------------------------------------------

    def initial_planting(self) -> None:
        """Plant at step 0, optionally staggering harvest countdowns."""
        s = self.state
        self._decide_planting()
        if not self.config.population.stagger_initial_planting:
            return
        for farmer in s.farmers:
            planting = farmer.planting
            if not planting.planted:
                continue
            crop = self.crops[planting.crop]
            offset = int(s.rng.population.integers(0, crop.harvest_cycle))
            planting.steps_to_harvest = crop.harvest_cycle - offset
            planting.planted_at = -offset

    def advance(self) -> SimulationState:
        s = self.state
        s.step += 1
        self._inflate()
        self._price()
        self._release_stored()
        self._consume()
        self._trade()
        self._policy()
        self._run_mill()
        self._tend_farms()
        self._decide_planting()
        for book in s.market.values():
            book.close_step()
        if self.config.audit_every_step:
            s.ledger.check_step(s.step)
        s.metrics.append(self.frame())
        return s


def step(state: SimulationState) -> SimulationState:
    """Advance ``state`` by one step in place and return it.

    Raises:
        LedgerImbalanceError: If a holder's savings moved outside the ledger
    """
    return Simulation(state).advance()


def run(
    config: Optional[ScenarioConfig] = None,
    *,
    steps: Optional[int] = None,
    resume: Optional[SimulationState] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    checkpoint_every: int = 0,
) -> list[MetricsFrame]:
    """Run a scenario up to ``steps`` (default: the scenario's) and return all frames.

    Args:
        config: Scenario to initialize from; ignored when resuming
        steps: Last step to reach
        resume: State to continue instead of initializing
        checkpoint_path: Where to write checkpoints
        checkpoint_every: Checkpoint interval in steps (0 disables)

    Returns:
        One MetricsFrame per step, starting with step 0
    """
    if resume is None:
        if config is None:
            raise ContractViolation("run needs a config or a state to resume")
        state = init_state(config)
    else:
        state = resume
    target = state.config.steps if steps is None else steps

    logger.info(f"Running '{state.config.name}' from step {state.step} to {target}")
    while state.step < target:
        step(state)
        if checkpoint_path is not None and checkpoint_every > 0 and state.step % checkpoint_every == 0:
            save_checkpoint(state, checkpoint_path)

    last = state.metrics[-1]
    logger.info(
        f"Finished '{state.config.name}' at step {state.step}: "
        f"exit fraction {last.exit_fraction():.3f}"
    )
    return state.metrics


def check_invariants(state: SimulationState) -> list[str]:
    """List violated state invariants (empty when the state is sound)."""
    problems = []
    tol = 1e-9
    for farmer in state.farmers:
        quality = farmer.planting.quality
        if not 0.0 <= quality <= 1.0:
            problems.append(f"farmer {farmer.id}: quality {quality} outside [0, 1]")
        allocated = sum(farmer.planting.land_allocated.values())
        if allocated > farmer.land + tol:
            problems.append(f"farmer {farmer.id}: {allocated} ha allocated on {farmer.land} ha")
        for crop_id, limit in farmer.expectations.upper_limit.items():
            if limit > farmer.land + tol:
                problems.append(f"farmer {farmer.id}: upper limit for {crop_id} exceeds land")
        if farmer.land <= 0:
            problems.append(f"farmer {farmer.id}: no land left")
        if farmer.exited and (farmer.planting.planted or any(farmer.inventory.values())):
            problems.append(f"farmer {farmer.id}: exited but still holds crops")

    spec = state.storage.spec
    for crop_id in {lot.crop for lot in state.storage.lots}:
        occupied = state.storage.occupied(crop_id)
        if occupied > spec.capacity.get(crop_id, 0.0) * (1 + tol) + tol:
            problems.append(f"storage of {crop_id} holds {occupied} over capacity")

    for commodity_id, book in state.market.items():
        if book.current_stock < -tol:
            problems.append(f"market stock of {commodity_id} is negative")
        if not book.check_flows():
            problems.append(f"stock flows of {commodity_id} do not reconcile")

    if state.mill is not None and any(d.amount_owed < 0 for d in state.mill.dues):
        problems.append("mill holds a negative due")

    frames = state.metrics
    for previous, current in zip(frames, frames[1:]):
        for key, count in current.exited.items():
            if count < previous.exited.get(key, 0):
                problems.append(f"exited {key} fell from step {previous.step} to {current.step}")
    return problems
