//! The four planning frameworks over one hub.
//!
//! All four size the same assets on the same purchase grid and price them
//! over the same growth horizon; they differ in who controls dispatch and
//! what signal keeps emissions down:
//!
//! * [`solve_f1`] — cooperative planning: one agent picks the build and the
//!   dispatch together under an annual emissions cap. Also available as a
//!   cut-generating decomposition, [`solve_f1_benders`], which solves one
//!   dispatch subproblem per year and rebuilds the master from value and
//!   feasibility cuts.
//! * [`solve_f2`] — carbon-tax search: the builder-operator pays a tax on
//!   positive annual emissions and the outer loop bisects for the smallest
//!   rate that brings every year under the cap.
//! * [`solve_f3`] — builder/operator planning: the builder sizes the hub,
//!   a self-interested operator dispatches it at market prices, and the
//!   operator's optimality conditions are folded into the builder's model
//!   so the cap binds on what the operator will actually do.
//! * [`solve_f4`] — social-cost pricing: the builder of [`solve_f3`] is
//!   charged an undiscounted valuation per tonne instead of a cap, and the
//!   outer loop bisects for the smallest valuation that meets the target.
//!
//! Every result is re-priced independently of the solver that produced it:
//! cooperative plans by fresh capped year dispatches, builder/operator
//! plans by the operator's own cheapest-then-cleanest response. Reported
//! totals come from that re-pricing, never from the solver's objective.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duality::{
    add_invest_objective, add_plan_vars, append_strong_duality_day, check_day_exactness,
    day_big_m, DualDayBlock, PlanVars,
};
use crate::hub::{Hub, Topology};
use crate::operation::{
    append_day_dispatch, evaluate_plan, plan_sensitivity, CapacityVars, DayContext, DayLayout,
    DispatchMode, EvalOptions, InvestmentPlan, OperationError, PlanGradient,
};
use crate::scenarios::{compound, grow_years, ScenarioSet};
use crate::solver::{
    solve_lp, solve_milp, ImprovementHook, LpError, LpOptions, MilpOptions, MilpSolution,
    MilpStatus, Model, RowSense, VarId, VarKind, WarmStart,
};

/// Largest rate the price searches will try, yen per tonne.
pub const PRICE_CEILING: f64 = (1u64 << 20) as f64;

/// Horizon economics shared by every framework.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicConfig {
    /// Horizon length in years; everything is built in year zero.
    pub years: usize,
    /// Annual discount rate on operating cash flows; year one is
    /// discounted once.
    pub discount_rate: f64,
    /// Annual growth of traded prices, imports and feed-in alike.
    pub fuel_growth: f64,
    /// Annual growth of demand.
    pub demand_growth: f64,
    /// Emissions ceiling per year, tonnes of CO2-equivalent. `None` runs
    /// the unconstrained baseline.
    pub emission_cap: Option<f64>,
    /// Externally imposed carbon rate, yen per tonne. When set, the
    /// price-searching frameworks evaluate at this rate instead of
    /// searching for one.
    pub carbon_price: Option<f64>,
}

impl Default for EconomicConfig {
    /// Twenty years at ten percent, prices growing two percent a year and
    /// demand four, no cap, no imposed rate.
    fn default() -> Self {
        EconomicConfig {
            years: 20,
            discount_rate: 0.10,
            fuel_growth: 0.02,
            demand_growth: 0.04,
            emission_cap: None,
            carbon_price: None,
        }
    }
}

impl EconomicConfig {
    /// One scenario set per horizon year, escalated from the base year.
    pub fn expand(&self, base: &ScenarioSet) -> Vec<ScenarioSet> {
        grow_years(base, self.years.max(1), self.fuel_growth, self.demand_growth)
    }

    /// Discount factor per year, year one discounted once.
    fn discounts(&self) -> Vec<f64> {
        (0..self.years.max(1))
            .map(|y| 1.0 / compound(self.discount_rate, y + 1))
            .collect()
    }

    /// Feasibility slack on the cap check, tonnes.
    fn cap_slack(&self) -> f64 {
        1e-6 * self.emission_cap.map_or(1.0, |c| c.abs().max(1.0))
    }
}

/// Solver knobs shared by every framework.
#[derive(Debug, Clone)]
pub struct FrameworkOptions {
    pub milp: MilpOptions,
    /// Interval width at which the price searches stop, yen per tonne.
    pub price_tolerance: f64,
    /// Cut rounds the decomposed cooperative solve may spend.
    pub benders_iterations: usize,
    /// How many times a too-tight multiplier box may be widened (tenfold
    /// each time) before the run gives up.
    pub big_m_escalations: usize,
    /// Offer neighbor-search improvements on every new incumbent of the
    /// builder/operator solves.
    pub use_hook: bool,
    /// Plans offered to the solver as candidate incumbents.
    pub warm_starts: Vec<InvestmentPlan>,
}

impl Default for FrameworkOptions {
    fn default() -> Self {
        FrameworkOptions {
            milp: MilpOptions::default(),
            price_tolerance: 0.5,
            benders_iterations: 50,
            big_m_escalations: 3,
            use_hook: true,
            warm_starts: Vec::new(),
        }
    }
}

/// One priced solve inside a bisection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriceProbe {
    /// Rate this probe was solved at, yen per tonne.
    pub price: f64,
    pub plan: InvestmentPlan,
    /// Heaviest year after independent re-pricing, tonnes.
    pub max_year_emissions: f64,
    /// Investment plus discounted net operating cost, excluding any
    /// carbon charge.
    pub total_ex_carbon: f64,
    /// Whether every year stayed under the cap.
    pub feasible: bool,
    /// Relative optimality gap of the probe's solve.
    pub gap: f64,
}

/// A solved framework run. Costs and emissions are re-priced independently
/// of the solver that produced the plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameworkResult {
    /// Which framework produced this: "f1", "f1-benders", "f2", "f3", "f4".
    pub framework: String,
    /// Cap the run was solved against, tonnes per year.
    pub emission_cap: Option<f64>,
    pub plan: InvestmentPlan,
    pub invest: f64,
    /// Net out-of-pocket operating cost per year: purchases minus export
    /// revenue, no carbon charges.
    pub annual_operate: Vec<f64>,
    /// Tonnes emitted per year.
    pub annual_emissions: Vec<f64>,
    /// Carbon charges actually billed per year; only the tax framework
    /// bills anything.
    pub annual_tax: Vec<f64>,
    pub operate_npv: f64,
    pub tax_npv: f64,
    /// `invest + operate_npv + tax_npv`.
    pub total: f64,
    pub max_year_emissions: f64,
    /// Rate found or applied by the price-searching frameworks.
    pub carbon_price: Option<f64>,
    /// Planner objective as solved; for the social-cost framework this
    /// includes the emission valuation, which is not a billed cost.
    pub objective: f64,
    /// Relative optimality gap of the defining solve.
    pub gap: f64,
    /// "optimal" or "budget-exhausted".
    pub status: String,
    /// Outer iterations spent: bisection probes or cut rounds; one for
    /// single-shot solves.
    pub iterations: usize,
    /// Every probe of a price search, in the order they ran.
    pub probes: Vec<PriceProbe>,
    /// Adjacent probe prices where emissions rose as the rate rose.
    /// Expected empty; reported rather than assumed away.
    pub non_monotone: Vec<(f64, f64)>,
    /// Labels of warm starts the defining solve accepted.
    pub warm_starts_used: Vec<String>,
    /// Multiplier-box widenings the builder/operator solves needed.
    pub big_m_escalations: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Error)]
pub enum FrameworkError {
    /// The cap is below what any plan on the grid can achieve. The
    /// certificate is the cheapest plan at the achievable floor.
    #[error(
        "no plan can keep every year under {cap} t; the cleanest plan still reaches {floor:.6} t \
         in its heaviest year"
    )]
    InfeasibleCap {
        cap: f64,
        floor: f64,
        certificate: Box<FrameworkResult>,
    },
    /// The price search hit its ceiling with the target still missed.
    #[error(
        "no rate up to {ceiling} yen/t brings emissions under the cap; cleanest probe reached \
         {achieved:.6} t"
    )]
    PriceCeiling {
        ceiling: f64,
        achieved: f64,
        probes: Vec<PriceProbe>,
    },
    #[error("{0}")]
    Solver(String),
    #[error(transparent)]
    Operation(#[from] OperationError),
}

/// Dispatches on a framework id as used in run files and result documents.
pub fn solve_framework(
    id: &str,
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    match id {
        "f1" => solve_f1(hub, topo, base, econ, opts),
        "f1-benders" => solve_f1_benders(hub, topo, base, econ, opts),
        "f2" => solve_f2(hub, topo, base, econ, opts),
        "f3" => solve_f3(hub, topo, base, econ, opts),
        "f4" => solve_f4(hub, topo, base, econ, opts),
        other => Err(FrameworkError::Solver(format!(
            "unknown framework {other:?}; expected f1, f1-benders, f2, f3, or f4"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.

fn npv(disc: &[f64], annual: &[f64]) -> f64 {
    disc.iter().zip(annual).map(|(d, a)| d * a).sum()
}

fn worst_year(annual: &[f64]) -> f64 {
    if annual.is_empty() {
        0.0
    } else {
        annual.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Emission terms of one year, day weights applied.
fn weighted_emission_terms<'a>(
    set: &ScenarioSet,
    layouts: impl Iterator<Item = &'a DayLayout>,
) -> Vec<(VarId, f64)> {
    let mut terms = Vec::new();
    for (d, layout) in layouts.enumerate() {
        let w = set.days[d].weight as f64;
        for &(v, c) in &layout.emission_terms {
            terms.push((v, w * c));
        }
    }
    terms
}

fn accepted_warm(sol: &MilpSolution) -> Vec<String> {
    sol.warm_start_report
        .iter()
        .filter(|(_, r)| r.is_ok())
        .map(|(label, _)| label.clone())
        .collect()
}

/// Full-length candidate vectors for a model whose integer variables are
/// the sizing bits; the continuous part is re-optimized on acceptance.
fn warm_vectors(
    model: &Model,
    vars: &PlanVars,
    hub: &Hub,
    plans: &[InvestmentPlan],
) -> Vec<WarmStart> {
    plans
        .iter()
        .enumerate()
        .map(|(i, plan)| {
            let mut values = vec![0.0; model.var_count()];
            let (pins, _) = vars.encode(hub, plan);
            for (v, x) in pins {
                values[v] = x;
            }
            WarmStart::new(format!("offered-plan-{}", i + 1), values)
        })
        .collect()
}

fn detect_non_monotone(probes: &[PriceProbe]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<&PriceProbe> = probes.iter().collect();
    sorted.sort_by(|a, b| a.price.total_cmp(&b.price));
    let mut out = Vec::new();
    for pair in sorted.windows(2) {
        let slack = 1e-6 * (1.0 + pair[0].max_year_emissions.abs());
        if pair[1].max_year_emissions > pair[0].max_year_emissions + slack {
            out.push((pair[0].price, pair[1].price));
        }
    }
    out
}

/// Everything a framework hands over for final assembly.
struct ResultParts {
    framework: &'static str,
    emission_cap: Option<f64>,
    plan: InvestmentPlan,
    annual_operate: Vec<f64>,
    annual_emissions: Vec<f64>,
    /// Bills `max(rate * emissions, 0)` per year when set.
    tax_rate: Option<f64>,
    carbon_price: Option<f64>,
    objective: f64,
    gap: f64,
    optimal: bool,
    iterations: usize,
    probes: Vec<PriceProbe>,
    warm_starts_used: Vec<String>,
    big_m_escalations: usize,
}

fn finish(hub: &Hub, econ: &EconomicConfig, started: Instant, parts: ResultParts) -> FrameworkResult {
    let disc = econ.discounts();
    let invest = parts.plan.invest_cost(hub);
    let annual_tax: Vec<f64> = match parts.tax_rate {
        Some(rate) => parts.annual_emissions.iter().map(|&e| (rate * e).max(0.0)).collect(),
        None => vec![0.0; parts.annual_emissions.len()],
    };
    let operate_npv = npv(&disc, &parts.annual_operate);
    let tax_npv = npv(&disc, &annual_tax);
    FrameworkResult {
        framework: parts.framework.to_string(),
        emission_cap: parts.emission_cap,
        invest,
        max_year_emissions: worst_year(&parts.annual_emissions),
        plan: parts.plan,
        annual_operate: parts.annual_operate,
        annual_emissions: parts.annual_emissions,
        annual_tax,
        operate_npv,
        tax_npv,
        total: invest + operate_npv + tax_npv,
        carbon_price: parts.carbon_price,
        objective: parts.objective,
        gap: parts.gap,
        status: if parts.optimal { "optimal" } else { "budget-exhausted" }.to_string(),
        iterations: parts.iterations,
        non_monotone: detect_non_monotone(&parts.probes),
        probes: parts.probes,
        warm_starts_used: parts.warm_starts_used,
        big_m_escalations: parts.big_m_escalations,
        wall_ms: started.elapsed().as_millis() as u64,
    }
}

/// A plan pulled out of a planning solve, before re-pricing.
struct SolvedCore {
    plan: InvestmentPlan,
    objective: f64,
    gap: f64,
    optimal: bool,
    warm_used: Vec<String>,
    escalations: usize,
}

enum SolveOutcome {
    Solved(SolvedCore),
    /// The model admits no plan at all; the caller decides whether that
    /// means the cap or the network.
    Infeasible,
}

// ---------------------------------------------------------------------------
// Cooperative planning (f1): one agent builds and dispatches.

struct JointBuild {
    model: Model,
    vars: PlanVars,
    /// Dispatch handles, `[year][day]`.
    layouts: Vec<Vec<DayLayout>>,
}

/// Assembles the cooperative planning model: sizing bits, one dispatch
/// block per typical day per year at discounted day weights, optional
/// annual caps, and an optional annual tax on positive emissions.
/// `objective_weight` scales every cost term; zero leaves a pure
/// feasibility body for probes that bring their own objective.
fn build_joint(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    cap: Option<f64>,
    tax_rate: Option<f64>,
    objective_weight: f64,
) -> Result<JointBuild, OperationError> {
    let disc = econ.discounts();
    let mut model = Model::new(format!("{} cooperative plan", hub.name));
    let vars = add_plan_vars(&mut model, hub);
    add_invest_objective(&mut model, hub, &vars, objective_weight);

    let mut layouts = Vec::with_capacity(years.len());
    for (y, set) in years.iter().enumerate() {
        let mut year_layouts = Vec::with_capacity(set.days.len());
        for d in 0..set.days.len() {
            let ctx = DayContext::new(hub, topo, set, d);
            let w = set.days[d].weight as f64;
            let layout = append_day_dispatch(
                &mut model,
                &ctx,
                &vars.caps,
                objective_weight * w * disc[y],
                0.0,
                &format!("y{}d{}", y + 1, d + 1),
            )
            .map_err(|e| e.scoped(&format!("year {}", y + 1)))?;
            year_layouts.push(layout);
        }

        let annual = weighted_emission_terms(set, year_layouts.iter());
        if let Some(cap) = cap {
            model.add_row_in(
                "plan.cap",
                format!("plan.cap.y{}", y + 1),
                RowSense::Le,
                annual.clone(),
                cap,
            );
        }
        if let Some(rate) = tax_rate {
            // The bill is max(rate * emissions, 0): an epigraph variable
            // that the objective pushes down onto whichever branch binds.
            let t = model.add_var_in(
                "tax",
                format!("tax.y{}", y + 1),
                VarKind::Continuous,
                0.0,
                f64::INFINITY,
                objective_weight * disc[y],
            );
            let mut terms: Vec<(VarId, f64)> = annual.iter().map(|&(v, c)| (v, rate * c)).collect();
            terms.push((t, -1.0));
            model.add_row_in("tax.bind", format!("tax.bind.y{}", y + 1), RowSense::Le, terms, 0.0);
        }
        layouts.push(year_layouts);
    }
    Ok(JointBuild { model, vars, layouts })
}

fn solve_joint_core(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    cap: Option<f64>,
    tax_rate: Option<f64>,
    opts: &FrameworkOptions,
) -> Result<SolveOutcome, FrameworkError> {
    let build = build_joint(hub, topo, years, econ, cap, tax_rate, 1.0)?;
    let warm = warm_vectors(&build.model, &build.vars, hub, &opts.warm_starts);
    let sol = solve_milp(&build.model, &opts.milp, &warm, None);
    match sol.status {
        MilpStatus::Infeasible => Ok(SolveOutcome::Infeasible),
        MilpStatus::Unbounded => Err(FrameworkError::Solver(
            "cooperative planning model is unbounded; a price series must be badly scaled".into(),
        )),
        _ => match sol.values.as_ref() {
            None => Err(FrameworkError::Solver(format!(
                "no plan found within the node budget; proven lower bound {:.6}",
                sol.bound
            ))),
            Some(values) => Ok(SolveOutcome::Solved(SolvedCore {
                plan: build.vars.decode(hub, values),
                objective: sol.objective,
                gap: sol.gap,
                optimal: sol.status == MilpStatus::Optimal,
                warm_used: accepted_warm(&sol),
                escalations: 0,
            })),
        },
    }
}

/// Cleanest build achievable on the sizing grid: minimizes the heaviest
/// year's emissions with costs ignored. Used to certify infeasible caps.
fn joint_emission_floor(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<(f64, InvestmentPlan), FrameworkError> {
    let mut build = build_joint(hub, topo, years, econ, None, None, 0.0)?;
    let eps = build.model.add_var_in(
        "floor",
        "floor.worst-year",
        VarKind::Continuous,
        f64::NEG_INFINITY,
        f64::INFINITY,
        1.0,
    );
    for (y, set) in years.iter().enumerate() {
        let mut terms = weighted_emission_terms(set, build.layouts[y].iter());
        terms.push((eps, -1.0));
        build.model.add_row_in("floor", format!("floor.y{}", y + 1), RowSense::Le, terms, 0.0);
    }
    let sol = solve_milp(&build.model, &opts.milp, &[], None);
    match sol.status {
        MilpStatus::Optimal => Ok((sol.objective, build.vars.decode(hub, sol.expect_values()))),
        MilpStatus::Infeasible => Err(FrameworkError::Operation(OperationError::Infeasible {
            context: "emissions floor probe".into(),
            detail: "no plan on the sizing grid can serve the demands at any emission level".into(),
        })),
        MilpStatus::Unbounded => Err(FrameworkError::Solver(
            "emissions floor probe is unbounded; an emission intensity must be badly scaled".into(),
        )),
        MilpStatus::BudgetExhausted => Err(FrameworkError::Solver(format!(
            "emissions floor probe exhausted its node budget; the floor is above {:.6} t",
            sol.bound
        ))),
    }
}

/// One year of cooperative dispatch at a fixed plan, all typical days in
/// one program coupled by the annual cap.
struct YearSolve {
    layouts: Vec<DayLayout>,
    solution: crate::solver::LpSolution,
    cost: f64,
    emissions: f64,
}

enum YearFailure {
    /// No dispatch serves this year at the plan. The cut prices how the
    /// shortfall responds to each capacity.
    Infeasible { shortfall: f64, cut: PlanGradient },
    Error(OperationError),
}

fn solve_year(
    hub: &Hub,
    topo: &Topology,
    set: &ScenarioSet,
    plan: &InvestmentPlan,
    cap: Option<f64>,
    lp: &LpOptions,
) -> Result<YearSolve, YearFailure> {
    let caps = CapacityVars::fixed(plan);
    let mut model = Model::new(format!("{} year dispatch", hub.name));
    let mut layouts = Vec::with_capacity(set.days.len());
    for d in 0..set.days.len() {
        let ctx = DayContext::new(hub, topo, set, d);
        let w = set.days[d].weight as f64;
        let layout = append_day_dispatch(&mut model, &ctx, &caps, w, 0.0, &format!("d{}", d + 1))
            .map_err(YearFailure::Error)?;
        layouts.push(layout);
    }
    if let Some(cap) = cap {
        let terms = weighted_emission_terms(set, layouts.iter());
        model.add_row_in("year.cap", "year.cap", RowSense::Le, terms, cap);
    }
    match solve_lp(&model, lp, None) {
        Ok(solution) => {
            let mut cost = 0.0;
            let mut emissions = 0.0;
            for (d, layout) in layouts.iter().enumerate() {
                let w = set.days[d].weight as f64;
                cost += w * layout.cost(&solution.values);
                emissions += w * layout.emissions(&solution.values);
            }
            Ok(YearSolve { layouts, solution, cost, emissions })
        }
        Err(LpError::Infeasible { phase1, farkas }) => {
            let mut cut = PlanGradient::zero(hub);
            for (d, layout) in layouts.iter().enumerate() {
                let ctx = DayContext::new(hub, topo, set, d);
                cut.add(&plan_sensitivity(&ctx, layout, &farkas).map_err(YearFailure::Error)?);
            }
            Err(YearFailure::Infeasible { shortfall: phase1, cut })
        }
        Err(LpError::Unbounded { .. }) => Err(YearFailure::Error(OperationError::Unbounded {
            context: "year dispatch".into(),
        })),
        Err(other) => Err(YearFailure::Error(OperationError::Solver {
            context: "year dispatch".into(),
            detail: other.to_string(),
        })),
    }
}

/// Cost and emissions of one year at a fixed plan, tie-broken cleanest
/// among cost-optimal dispatches so reports never depend on which vertex
/// the solver happened to stop at.
fn year_report(
    hub: &Hub,
    topo: &Topology,
    set: &ScenarioSet,
    plan: &InvestmentPlan,
    cap: Option<f64>,
    lp: &LpOptions,
) -> Result<(f64, f64), OperationError> {
    let first = match solve_year(hub, topo, set, plan, cap, lp) {
        Ok(first) => first,
        Err(YearFailure::Infeasible { shortfall, .. }) => {
            return Err(OperationError::Infeasible {
                context: "year dispatch".into(),
                detail: format!("shortfall {shortfall:.6}"),
            })
        }
        Err(YearFailure::Error(e)) => return Err(e),
    };
    if first.layouts.iter().all(|l| l.emission_terms.is_empty()) {
        return Ok((first.cost, first.emissions));
    }

    let caps = CapacityVars::fixed(plan);
    let mut model = Model::new(format!("{} year tie-break", hub.name));
    let mut layouts = Vec::with_capacity(set.days.len());
    let mut pin = Vec::new();
    for d in 0..set.days.len() {
        let ctx = DayContext::new(hub, topo, set, d);
        let w = set.days[d].weight as f64;
        let layout = append_day_dispatch(&mut model, &ctx, &caps, 0.0, 0.0, &format!("d{}", d + 1))?;
        for &(v, c) in &layout.cost_terms {
            pin.push((v, w * c));
        }
        layouts.push(layout);
    }
    if let Some(cap) = cap {
        let terms = weighted_emission_terms(set, layouts.iter());
        model.add_row_in("year.cap", "year.cap", RowSense::Le, terms, cap);
    }
    model.add_row_in(
        "year.cost-pin",
        "year.cost-pin",
        RowSense::Le,
        pin,
        first.cost + 1e-7 * (1.0 + first.cost.abs()),
    );
    for (d, layout) in layouts.iter().enumerate() {
        let w = set.days[d].weight as f64;
        for &(v, c) in &layout.emission_terms {
            model.add_obj(v, w * c);
        }
    }
    let solution = solve_lp(&model, lp, None).map_err(|e| OperationError::Solver {
        context: "year tie-break".into(),
        detail: e.to_string(),
    })?;
    let mut emissions = 0.0;
    for (d, layout) in layouts.iter().enumerate() {
        emissions += set.days[d].weight as f64 * layout.emissions(&solution.values);
    }
    Ok((first.cost, emissions))
}

/// Independent annual re-pricing under cooperative dispatch.
fn cooperative_report(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    plan: &InvestmentPlan,
    cap: Option<f64>,
    lp: &LpOptions,
) -> Result<(Vec<f64>, Vec<f64>), OperationError> {
    let outs: Result<Vec<(f64, f64)>, OperationError> = years
        .par_iter()
        .enumerate()
        .map(|(y, set)| {
            year_report(hub, topo, set, plan, cap, lp)
                .map_err(|e| e.scoped(&format!("year {}", y + 1)))
        })
        .collect();
    let outs = outs?;
    Ok((outs.iter().map(|o| o.0).collect(), outs.iter().map(|o| o.1).collect()))
}

/// Names the achievable emissions floor and prices the cheapest
/// cooperative plan at that floor, the two halves of an unreachable-cap
/// report.
fn cooperative_floor_certificate(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<(f64, FrameworkResult), FrameworkError> {
    let started = Instant::now();
    let (floor, _) = joint_emission_floor(hub, topo, years, econ, opts)?;
    let cert_cap = floor + 1e-9 * floor.abs().max(1.0);
    match solve_joint_core(hub, topo, years, econ, Some(cert_cap), None, opts)? {
        SolveOutcome::Solved(core) => {
            let (annual_operate, annual_emissions) =
                cooperative_report(hub, topo, years, &core.plan, Some(cert_cap), &opts.milp.lp)?;
            let certificate = finish(
                hub,
                econ,
                started,
                ResultParts {
                    framework: "f1",
                    emission_cap: Some(cert_cap),
                    plan: core.plan,
                    annual_operate,
                    annual_emissions,
                    tax_rate: None,
                    carbon_price: None,
                    objective: core.objective,
                    gap: core.gap,
                    optimal: core.optimal,
                    iterations: 1,
                    probes: Vec::new(),
                    warm_starts_used: core.warm_used,
                    big_m_escalations: 0,
                },
            );
            Ok((floor, certificate))
        }
        SolveOutcome::Infeasible => Err(FrameworkError::Solver(format!(
            "floor probe reports {floor:.6} t achievable but no plan meets it when asked \
             directly"
        ))),
    }
}

/// Cooperative planning: a single agent sizes the hub and dispatches it,
/// minimizing investment plus discounted net operating cost with every
/// year held under the cap. An unreachable cap comes back as
/// [`FrameworkError::InfeasibleCap`] carrying the cheapest plan at the
/// achievable floor.
pub fn solve_f1(
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    let started = Instant::now();
    let years = econ.expand(base);
    match solve_joint_core(hub, topo, &years, econ, econ.emission_cap, None, opts)? {
        SolveOutcome::Solved(core) => {
            let (annual_operate, annual_emissions) =
                cooperative_report(hub, topo, &years, &core.plan, econ.emission_cap, &opts.milp.lp)?;
            Ok(finish(
                hub,
                econ,
                started,
                ResultParts {
                    framework: "f1",
                    emission_cap: econ.emission_cap,
                    plan: core.plan,
                    annual_operate,
                    annual_emissions,
                    tax_rate: None,
                    carbon_price: None,
                    objective: core.objective,
                    gap: core.gap,
                    optimal: core.optimal,
                    iterations: 1,
                    probes: Vec::new(),
                    warm_starts_used: core.warm_used,
                    big_m_escalations: 0,
                },
            ))
        }
        SolveOutcome::Infeasible => {
            let Some(cap) = econ.emission_cap else {
                return Err(FrameworkError::Operation(OperationError::Infeasible {
                    context: "planning".into(),
                    detail: "no plan on the sizing grid can serve the demands".into(),
                }));
            };
            let (floor, certificate) = cooperative_floor_certificate(hub, topo, &years, econ, opts)?;
            Err(FrameworkError::InfeasibleCap { cap, floor, certificate: Box::new(certificate) })
        }
    }
}

// ---------------------------------------------------------------------------
// Cooperative planning by cut generation.

/// A cost no dispatch of this year can beat: all export revenue at best
/// feed-in plus anything the market pays the hub to take, both at the
/// largest buildable capacities. Zero for hubs that can only spend.
fn year_cost_floor(hub: &Hub, set: &ScenarioSet) -> f64 {
    let mut floor = 0.0;
    for day in &set.days {
        let w = day.weight as f64;
        for conn in &hub.connections {
            let key = conn.series.as_deref().unwrap_or(&hub.energies[conn.energy].name);
            let Some(slice) = day.slices.get(key) else { continue };
            let cap = conn.cap_max();
            let mut revenue = 0.0;
            for t in 0..set.periods {
                if conn.exportable {
                    revenue += slice.feedin[t].max(0.0) * cap;
                }
                if conn.importable {
                    revenue += (-slice.price[t]).max(0.0) * slice.availability[t].max(0.0) * cap;
                }
            }
            floor -= w * set.dt_hours * revenue;
        }
    }
    floor
}

/// Terms of `Σ sensitivity · capacity` over the master's sizing bits,
/// plus the constant the fixed parts contribute.
fn sensitivity_terms(vars: &PlanVars, g: &PlanGradient) -> (Vec<(VarId, f64)>, f64) {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let groups: [(&[crate::operation::LinExpr], &[f64]); 4] = [
        (&vars.caps.connections, &g.connection_caps),
        (&vars.caps.converters, &g.converter_units),
        (&vars.caps.storage_power, &g.storage_power),
        (&vars.caps.storage_energy, &g.storage_energy),
    ];
    for (exprs, coefs) in groups {
        for (expr, &k) in exprs.iter().zip(coefs.iter()) {
            if k == 0.0 {
                continue;
            }
            constant += k * expr.constant;
            for &(v, c) in &expr.terms {
                terms.push((v, k * c));
            }
        }
    }
    (terms, constant)
}

/// Cooperative planning by cut generation: a master program over the
/// sizing bits and one value variable per year, tightened by cost
/// subgradients from feasible year dispatches and by shortfall prices
/// from infeasible ones, until the master's guess prices itself.
pub fn solve_f1_benders(
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    let started = Instant::now();
    let years = econ.expand(base);
    let disc = econ.discounts();
    let cap = econ.emission_cap;

    let mut master = Model::new(format!("{} master", hub.name));
    let vars = add_plan_vars(&mut master, hub);
    add_invest_objective(&mut master, hub, &vars, 1.0);
    let theta: Vec<VarId> = years
        .iter()
        .enumerate()
        .map(|(y, set)| {
            master.add_var_in(
                "theta",
                format!("theta.y{}", y + 1),
                VarKind::Continuous,
                year_cost_floor(hub, set),
                f64::INFINITY,
                disc[y],
            )
        })
        .collect();

    let mut warm = warm_vectors(&master, &vars, hub, &opts.warm_starts);
    let mut best: Option<(InvestmentPlan, f64)> = None;
    let mut lower = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut optimal = false;
    let mut warm_used = Vec::new();
    let gap_tol = opts.milp.gap_tol.max(1e-9);

    for round in 0..opts.benders_iterations {
        iterations = round + 1;
        let sol = solve_milp(&master, &opts.milp, &warm, None);
        match sol.status {
            MilpStatus::Infeasible => {
                // The shortfall cuts ruled out every plan on the grid.
                let Some(cap) = cap else {
                    return Err(FrameworkError::Operation(OperationError::Infeasible {
                        context: "planning".into(),
                        detail: "no plan on the sizing grid can serve the demands".into(),
                    }));
                };
                let (floor, certificate) =
                    cooperative_floor_certificate(hub, topo, &years, econ, opts)?;
                return Err(FrameworkError::InfeasibleCap {
                    cap,
                    floor,
                    certificate: Box::new(certificate),
                });
            }
            MilpStatus::Unbounded => {
                return Err(FrameworkError::Solver(
                    "master program is unbounded; a year cost floor must be missing".into(),
                ))
            }
            _ => {}
        }
        let Some(values) = sol.values.clone() else {
            return Err(FrameworkError::Solver(format!(
                "master found no plan within its node budget (bound {:.6})",
                sol.bound
            )));
        };
        lower = lower.max(sol.bound);
        warm_used = accepted_warm(&sol);
        let plan = vars.decode(hub, &values);

        let year_outs: Vec<Result<YearSolve, YearFailure>> = years
            .par_iter()
            .map(|set| solve_year(hub, topo, set, &plan, cap, &opts.milp.lp))
            .collect();

        let mut cuts = 0;
        let mut upper = plan.invest_cost(hub);
        let mut all_feasible = true;
        for (y, out) in year_outs.into_iter().enumerate() {
            match out {
                Ok(year) => {
                    upper += disc[y] * year.cost;
                    let mut g = PlanGradient::zero(hub);
                    for (d, layout) in year.layouts.iter().enumerate() {
                        let ctx = DayContext::new(hub, topo, &years[y], d);
                        g.add(
                            &plan_sensitivity(&ctx, layout, &year.solution.duals)
                                .map_err(FrameworkError::Operation)?,
                        );
                    }
                    if values[theta[y]] < year.cost - 1e-9 * (1.0 + year.cost.abs()) {
                        // value cut: theta >= cost + g . (q - q_hat)
                        let (mut terms, constant) = sensitivity_terms(&vars, &g);
                        for term in &mut terms {
                            term.1 = -term.1;
                        }
                        terms.push((theta[y], 1.0));
                        master.add_row_in(
                            "cut.value",
                            format!("cut.value.r{}.y{}", round + 1, y + 1),
                            RowSense::Ge,
                            terms,
                            year.cost - g.dot(&plan) + constant,
                        );
                        cuts += 1;
                    }
                }
                Err(YearFailure::Infeasible { shortfall, cut }) => {
                    all_feasible = false;
                    // shortfall cut: shortfall + g . (q - q_hat) <= 0
                    let (terms, constant) = sensitivity_terms(&vars, &cut);
                    master.add_row_in(
                        "cut.shortfall",
                        format!("cut.shortfall.r{}.y{}", round + 1, y + 1),
                        RowSense::Le,
                        terms,
                        cut.dot(&plan) - constant - shortfall,
                    );
                    cuts += 1;
                }
                Err(YearFailure::Error(e)) => {
                    return Err(FrameworkError::Operation(e.scoped(&format!("year {}", y + 1))))
                }
            }
        }

        if all_feasible {
            if best.as_ref().map_or(true, |(_, ub)| upper < *ub) {
                best = Some((plan.clone(), upper));
            }
            let mut next = warm_vectors(&master, &vars, hub, &opts.warm_starts);
            next.extend(warm_vectors(&master, &vars, hub, std::slice::from_ref(&plan)));
            warm = next;
        }
        if let Some((_, ub)) = &best {
            if (ub - lower) / ub.abs().max(1.0) <= gap_tol {
                optimal = true;
                break;
            }
        }
        if cuts == 0 && all_feasible {
            // The master's guess already prices itself: nothing to add.
            optimal = true;
            break;
        }
    }

    let Some((plan, upper)) = best else {
        return Err(FrameworkError::Solver(format!(
            "cut loop found no feasible plan in {iterations} rounds; master bound {lower:.6}"
        )));
    };
    let (annual_operate, annual_emissions) =
        cooperative_report(hub, topo, &years, &plan, cap, &opts.milp.lp)?;
    Ok(finish(
        hub,
        econ,
        started,
        ResultParts {
            framework: "f1-benders",
            emission_cap: cap,
            plan,
            annual_operate,
            annual_emissions,
            tax_rate: None,
            carbon_price: None,
            objective: upper,
            gap: (upper - lower) / upper.abs().max(1.0),
            optimal,
            iterations,
            probes: Vec::new(),
            warm_starts_used: warm_used,
            big_m_escalations: 0,
        },
    ))
}

// ---------------------------------------------------------------------------
// Price searches (f2, f4 share the bisection).

/// One priced solve with everything the outer loop and the final report
/// need.
#[derive(Clone)]
struct Priced {
    probe: PriceProbe,
    annual_operate: Vec<f64>,
    annual_emissions: Vec<f64>,
    objective: f64,
    optimal: bool,
    warm_used: Vec<String>,
    escalations: usize,
}

/// Doubles from 1 yen/t to the first compliant rate, then bisects until
/// the bracket is narrower than `tol`. Returns the cheapest compliant
/// probe along with the full log.
fn bisect_rate(
    tol: f64,
    mut probe: impl FnMut(f64) -> Result<Priced, FrameworkError>,
) -> Result<(Priced, Vec<PriceProbe>), FrameworkError> {
    let mut probes = Vec::new();
    let mut run = |rate: f64, probes: &mut Vec<PriceProbe>| -> Result<Priced, FrameworkError> {
        let out = probe(rate)?;
        probes.push(out.probe.clone());
        Ok(out)
    };

    let base = run(0.0, &mut probes)?;
    if base.probe.feasible {
        return Ok((base, probes));
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut chosen;
    loop {
        let out = run(hi, &mut probes)?;
        if out.probe.feasible {
            chosen = out;
            break;
        }
        if hi >= PRICE_CEILING {
            let achieved = probes
                .iter()
                .map(|p| p.max_year_emissions)
                .fold(f64::INFINITY, f64::min);
            return Err(FrameworkError::PriceCeiling { ceiling: PRICE_CEILING, achieved, probes });
        }
        lo = hi;
        hi = (hi * 2.0).min(PRICE_CEILING);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let out = run(mid, &mut probes)?;
        if out.probe.feasible {
            hi = mid;
            chosen = out;
        } else {
            lo = mid;
        }
    }
    Ok((chosen, probes))
}

/// Carbon-tax planning: the builder-operator pays `rate` yen per tonne on
/// positive annual emissions and re-plans; the bisection finds the
/// smallest rate whose re-verified plan keeps every year under the cap.
/// With `econ.carbon_price` set the search is skipped and that rate is
/// evaluated directly; with no cap the baseline rate is zero.
pub fn solve_f2(
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    let started = Instant::now();
    let years = econ.expand(base);
    let slack = econ.cap_slack();

    let probe = |rate: f64| -> Result<Priced, FrameworkError> {
        let core = match solve_joint_core(hub, topo, &years, econ, None, Some(rate), opts)? {
            SolveOutcome::Solved(core) => core,
            SolveOutcome::Infeasible => {
                return Err(FrameworkError::Operation(OperationError::Infeasible {
                    context: "taxed planning".into(),
                    detail: "no plan on the sizing grid can serve the demands".into(),
                }))
            }
        };
        // The operator re-prices the plan facing the same tax; cheapest
        // first, cleanest among cost-optimal.
        let eval = evaluate_plan(
            hub,
            topo,
            &years,
            &core.plan,
            &EvalOptions {
                discount_rate: econ.discount_rate,
                carbon_price: rate,
                mode: DispatchMode::CostThenEmissions,
                lp: opts.milp.lp.clone(),
            },
        )?;
        let feasible = match econ.emission_cap {
            Some(cap) => eval.annual_emissions.iter().all(|&e| e <= cap + slack),
            None => true,
        };
        Ok(Priced {
            probe: PriceProbe {
                price: rate,
                plan: core.plan,
                max_year_emissions: worst_year(&eval.annual_emissions),
                total_ex_carbon: eval.invest + eval.operate_npv,
                feasible,
                gap: core.gap,
            },
            annual_operate: eval.annual_operate,
            annual_emissions: eval.annual_emissions,
            objective: core.objective,
            optimal: core.optimal,
            warm_used: core.warm_used,
            escalations: 0,
        })
    };

    let (chosen, probes) = match (econ.carbon_price, econ.emission_cap) {
        (Some(rate), _) => {
            let out = probe(rate)?;
            let log = vec![out.probe.clone()];
            (out, log)
        }
        (None, None) => {
            let out = probe(0.0)?;
            let log = vec![out.probe.clone()];
            (out, log)
        }
        (None, Some(_)) => bisect_rate(opts.price_tolerance, probe)?,
    };

    let rate = chosen.probe.price;
    let iterations = probes.len();
    Ok(finish(
        hub,
        econ,
        started,
        ResultParts {
            framework: "f2",
            emission_cap: econ.emission_cap,
            plan: chosen.probe.plan.clone(),
            annual_operate: chosen.annual_operate,
            annual_emissions: chosen.annual_emissions,
            tax_rate: Some(rate),
            carbon_price: Some(rate),
            objective: chosen.objective,
            gap: chosen.probe.gap,
            optimal: chosen.optimal,
            iterations,
            probes,
            warm_starts_used: chosen.warm_used,
            big_m_escalations: 0,
        },
    ))
}

// ---------------------------------------------------------------------------
// Builder/operator planning (f3) and social-cost pricing (f4).

struct BilevelBuild {
    model: Model,
    vars: PlanVars,
    /// Optimality-condition blocks, `[year][day]`.
    blocks: Vec<Vec<DualDayBlock>>,
}

/// Assembles the builder's model with the operator's response folded in:
/// sizing bits, one dispatch-plus-optimality block per typical day per
/// year, optional annual caps on the operator's emissions, and an
/// optional undiscounted valuation charged per tonne. `box_scale` widens
/// every multiplier box beyond its price-derived default.
fn build_bilevel(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    cap: Option<f64>,
    valuation: f64,
    box_scale: f64,
    objective_weight: f64,
) -> Result<BilevelBuild, OperationError> {
    let disc = econ.discounts();
    let mut model = Model::new(format!("{} builder plan", hub.name));
    let vars = add_plan_vars(&mut model, hub);
    add_invest_objective(&mut model, hub, &vars, objective_weight);

    let mut blocks = Vec::with_capacity(years.len());
    for (y, set) in years.iter().enumerate() {
        let mut year_blocks = Vec::with_capacity(set.days.len());
        for d in 0..set.days.len() {
            let ctx = DayContext::new(hub, topo, set, d);
            let w = set.days[d].weight as f64;
            let big_m = day_big_m(&ctx, 0.0)? * box_scale;
            let block = append_strong_duality_day(
                &mut model,
                &ctx,
                &vars,
                objective_weight * w * disc[y],
                big_m,
                &format!("y{}d{}", y + 1, d + 1),
            )
            .map_err(|e| e.scoped(&format!("year {}", y + 1)))?;
            if valuation != 0.0 {
                for &(v, c) in &block.layout.emission_terms {
                    model.add_obj(v, objective_weight * valuation * w * c);
                }
            }
            year_blocks.push(block);
        }
        if let Some(cap) = cap {
            let terms = weighted_emission_terms(set, year_blocks.iter().map(|b| &b.layout));
            model.add_row_in("plan.cap", format!("plan.cap.y{}", y + 1), RowSense::Le, terms, cap);
        }
        blocks.push(year_blocks);
    }
    Ok(BilevelBuild { model, vars, blocks })
}

/// Solves the builder/operator model, widening the multiplier boxes
/// tenfold whenever the embedded dispatch fails its audit against an
/// independent re-solve, up to `opts.big_m_escalations` times.
fn solve_bilevel_core(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    cap: Option<f64>,
    valuation: f64,
    opts: &FrameworkOptions,
) -> Result<SolveOutcome, FrameworkError> {
    let mut box_scale = 1.0;
    let mut escalations = 0;
    loop {
        let build = build_bilevel(hub, topo, years, econ, cap, valuation, box_scale, 1.0)?;
        let warm = warm_vectors(&build.model, &build.vars, hub, &opts.warm_starts);
        let eval = EvalOptions {
            discount_rate: econ.discount_rate,
            carbon_price: 0.0,
            mode: DispatchMode::CostThenEmissions,
            lp: opts.milp.lp.clone(),
        };
        let hook_vars = build.vars.clone();
        let hook_cap = econ.emission_cap;
        let mut propose = |trigger: &[f64]| -> Option<Vec<f64>> {
            let (rough, _) = hook_vars.decode(hub, trigger).snapped(hub);
            let improved =
                crate::search::neighbor_search(hub, topo, years, &rough, 2, hook_cap, &eval)
                    .ok()?
                    .0;
            let (pins, _) = hook_vars.encode(hub, &improved);
            let mut proposal = trigger.to_vec();
            for (v, x) in pins {
                proposal[v] = x;
            }
            Some(proposal)
        };
        let hook: Option<ImprovementHook<'_>> =
            if opts.use_hook { Some(&mut propose) } else { None };
        let sol = solve_milp(&build.model, &opts.milp, &warm, hook);

        match sol.status {
            MilpStatus::Infeasible => {
                // Either the cap is unreachable or the multiplier boxes
                // are clipping every optimal dual vector; widen before
                // concluding anything.
                if escalations < opts.big_m_escalations {
                    escalations += 1;
                    box_scale *= 10.0;
                    continue;
                }
                return Ok(SolveOutcome::Infeasible);
            }
            MilpStatus::Unbounded => {
                return Err(FrameworkError::Solver(
                    "builder model is unbounded; a price series must be badly scaled".into(),
                ))
            }
            _ => {}
        }
        let Some(values) = sol.values.clone() else {
            return Err(FrameworkError::Solver(format!(
                "no plan found within the node budget; proven lower bound {:.6}",
                sol.bound
            )));
        };
        let plan = build.vars.decode(hub, &values);

        let mut flagged = None;
        'audit: for (y, set) in years.iter().enumerate() {
            for d in 0..set.days.len() {
                let ctx = DayContext::new(hub, topo, set, d);
                if let Some(msg) =
                    check_day_exactness(&ctx, &plan, &build.blocks[y][d], &values, &opts.milp.lp)?
                {
                    flagged = Some(format!("year {} day {}: {msg}", y + 1, d + 1));
                    break 'audit;
                }
            }
        }
        if let Some(msg) = flagged {
            if escalations < opts.big_m_escalations {
                escalations += 1;
                box_scale *= 10.0;
                continue;
            }
            return Err(FrameworkError::Solver(format!(
                "embedded dispatch still failed its audit after {escalations} box widenings: {msg}"
            )));
        }
        return Ok(SolveOutcome::Solved(SolvedCore {
            plan,
            objective: sol.objective,
            gap: sol.gap,
            optimal: sol.status == MilpStatus::Optimal,
            warm_used: accepted_warm(&sol),
            escalations,
        }));
    }
}

/// Cleanest build achievable when a self-interested operator runs the
/// dispatch: minimizes the heaviest year's emissions over plans whose
/// embedded dispatch is operator-optimal.
fn bilevel_emission_floor(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<(f64, InvestmentPlan), FrameworkError> {
    let mut box_scale = 1.0;
    let mut escalations = 0;
    loop {
        let mut build = build_bilevel(hub, topo, years, econ, None, 0.0, box_scale, 0.0)?;
        let eps = build.model.add_var_in(
            "floor",
            "floor.worst-year",
            VarKind::Continuous,
            f64::NEG_INFINITY,
            f64::INFINITY,
            1.0,
        );
        for (y, set) in years.iter().enumerate() {
            let mut terms = weighted_emission_terms(set, build.blocks[y].iter().map(|b| &b.layout));
            terms.push((eps, -1.0));
            build.model.add_row_in("floor", format!("floor.y{}", y + 1), RowSense::Le, terms, 0.0);
        }
        let sol = solve_milp(&build.model, &opts.milp, &[], None);
        match sol.status {
            MilpStatus::Optimal => {
                let values = sol.expect_values();
                let plan = build.vars.decode(hub, values);
                let mut flagged = false;
                'audit: for (y, set) in years.iter().enumerate() {
                    for d in 0..set.days.len() {
                        let ctx = DayContext::new(hub, topo, set, d);
                        if check_day_exactness(&ctx, &plan, &build.blocks[y][d], values, &opts.milp.lp)?
                            .is_some()
                        {
                            flagged = true;
                            break 'audit;
                        }
                    }
                }
                if flagged && escalations < opts.big_m_escalations {
                    escalations += 1;
                    box_scale *= 10.0;
                    continue;
                }
                if flagged {
                    return Err(FrameworkError::Solver(
                        "emissions floor probe failed its dispatch audit at every box width".into(),
                    ));
                }
                return Ok((sol.objective, plan));
            }
            MilpStatus::Infeasible => {
                if escalations < opts.big_m_escalations {
                    escalations += 1;
                    box_scale *= 10.0;
                    continue;
                }
                return Err(FrameworkError::Operation(OperationError::Infeasible {
                    context: "emissions floor probe".into(),
                    detail: "no plan on the sizing grid can serve the demands under \
                             operator-optimal dispatch"
                        .into(),
                }));
            }
            MilpStatus::Unbounded => {
                return Err(FrameworkError::Solver(
                    "emissions floor probe is unbounded; an emission intensity must be badly \
                     scaled"
                        .into(),
                ))
            }
            MilpStatus::BudgetExhausted => {
                return Err(FrameworkError::Solver(format!(
                    "emissions floor probe exhausted its node budget; the floor is above {:.6} t",
                    sol.bound
                )))
            }
        }
    }
}

/// Prices one builder/operator plan the way it will actually run: the
/// operator dispatches cheapest-first, cleanest among cost-optimal.
fn operator_report(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    plan: &InvestmentPlan,
    econ: &EconomicConfig,
    lp: &LpOptions,
) -> Result<(Vec<f64>, Vec<f64>), FrameworkError> {
    let eval = evaluate_plan(
        hub,
        topo,
        years,
        plan,
        &EvalOptions {
            discount_rate: econ.discount_rate,
            carbon_price: 0.0,
            mode: DispatchMode::CostThenEmissions,
            lp: lp.clone(),
        },
    )?;
    Ok((eval.annual_operate, eval.annual_emissions))
}

/// Builder/operator planning: the builder minimizes investment plus the
/// discounted cost of the operator's market-price dispatch, with every
/// year of that dispatch held under the cap. The operator's optimality
/// conditions live inside the model, so the cap restricts what the
/// operator will actually emit, not what a cooperative dispatcher could.
pub fn solve_f3(
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    let started = Instant::now();
    let years = econ.expand(base);
    match solve_bilevel_core(hub, topo, &years, econ, econ.emission_cap, 0.0, opts)? {
        SolveOutcome::Solved(core) => {
            let (annual_operate, annual_emissions) =
                operator_report(hub, topo, &years, &core.plan, econ, &opts.milp.lp)?;
            if let Some(cap) = econ.emission_cap {
                let worst = worst_year(&annual_emissions);
                if worst > cap + econ.cap_slack() {
                    return Err(FrameworkError::Solver(format!(
                        "re-verified operator emissions {worst:.6} t exceed the {cap} t cap; \
                         the embedded dispatch cannot be operator-optimal"
                    )));
                }
            }
            Ok(finish(
                hub,
                econ,
                started,
                ResultParts {
                    framework: "f3",
                    emission_cap: econ.emission_cap,
                    plan: core.plan,
                    annual_operate,
                    annual_emissions,
                    tax_rate: None,
                    carbon_price: None,
                    objective: core.objective,
                    gap: core.gap,
                    optimal: core.optimal,
                    iterations: 1,
                    probes: Vec::new(),
                    warm_starts_used: core.warm_used,
                    big_m_escalations: core.escalations,
                },
            ))
        }
        SolveOutcome::Infeasible => {
            let Some(cap) = econ.emission_cap else {
                return Err(FrameworkError::Operation(OperationError::Infeasible {
                    context: "planning".into(),
                    detail: "no plan on the sizing grid can serve the demands".into(),
                }));
            };
            let (floor, _) = bilevel_emission_floor(hub, topo, &years, econ, opts)?;
            let cert_cap = floor + 1e-9 * floor.abs().max(1.0);
            let certificate =
                match solve_bilevel_core(hub, topo, &years, econ, Some(cert_cap), 0.0, opts)? {
                    SolveOutcome::Solved(core) => {
                        let (annual_operate, annual_emissions) =
                            operator_report(hub, topo, &years, &core.plan, econ, &opts.milp.lp)?;
                        finish(
                            hub,
                            econ,
                            started,
                            ResultParts {
                                framework: "f3",
                                emission_cap: Some(cert_cap),
                                plan: core.plan,
                                annual_operate,
                                annual_emissions,
                                tax_rate: None,
                                carbon_price: None,
                                objective: core.objective,
                                gap: core.gap,
                                optimal: core.optimal,
                                iterations: 1,
                                probes: Vec::new(),
                                warm_starts_used: core.warm_used,
                                big_m_escalations: core.escalations,
                            },
                        )
                    }
                    SolveOutcome::Infeasible => {
                        return Err(FrameworkError::Solver(format!(
                            "floor probe reports {floor:.6} t achievable but no plan meets it \
                             when asked directly"
                        )))
                    }
                };
            Err(FrameworkError::InfeasibleCap { cap, floor, certificate: Box::new(certificate) })
        }
    }
}

/// Social-cost pricing: the builder of [`solve_f3`] loses its cap and is
/// instead charged an undiscounted valuation per tonne of the operator's
/// emissions — a planning signal, not a billed cost. The bisection finds
/// the smallest valuation whose re-verified plan meets the cap. With
/// `econ.carbon_price` set the search is skipped; with no cap the
/// baseline valuation is zero.
pub fn solve_f4(
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    let started = Instant::now();
    let years = econ.expand(base);
    let slack = econ.cap_slack();

    let probe = |rate: f64| -> Result<Priced, FrameworkError> {
        let core = match solve_bilevel_core(hub, topo, &years, econ, None, rate, opts)? {
            SolveOutcome::Solved(core) => core,
            SolveOutcome::Infeasible => {
                return Err(FrameworkError::Operation(OperationError::Infeasible {
                    context: "priced planning".into(),
                    detail: "no plan on the sizing grid can serve the demands".into(),
                }))
            }
        };
        let (annual_operate, annual_emissions) =
            operator_report(hub, topo, &years, &core.plan, econ, &opts.milp.lp)?;
        let feasible = match econ.emission_cap {
            Some(cap) => annual_emissions.iter().all(|&e| e <= cap + slack),
            None => true,
        };
        let total_ex_carbon = core.plan.invest_cost(hub) + npv(&econ.discounts(), &annual_operate);
        Ok(Priced {
            probe: PriceProbe {
                price: rate,
                plan: core.plan,
                max_year_emissions: worst_year(&annual_emissions),
                total_ex_carbon,
                feasible,
                gap: core.gap,
            },
            annual_operate,
            annual_emissions,
            objective: core.objective,
            optimal: core.optimal,
            warm_used: core.warm_used,
            escalations: core.escalations,
        })
    };

    let (chosen, probes) = match (econ.carbon_price, econ.emission_cap) {
        (Some(rate), _) => {
            let out = probe(rate)?;
            let log = vec![out.probe.clone()];
            (out, log)
        }
        (None, None) => {
            let out = probe(0.0)?;
            let log = vec![out.probe.clone()];
            (out, log)
        }
        (None, Some(_)) => bisect_rate(opts.price_tolerance, probe)?,
    };

    let iterations = probes.len();
    Ok(finish(
        hub,
        econ,
        started,
        ResultParts {
            framework: "f4",
            emission_cap: econ.emission_cap,
            plan: chosen.probe.plan.clone(),
            annual_operate: chosen.annual_operate,
            annual_emissions: chosen.annual_emissions,
            tax_rate: None,
            carbon_price: Some(chosen.probe.price),
            objective: chosen.objective,
            gap: chosen.probe.gap,
            optimal: chosen.optimal,
            iterations,
            probes,
            warm_starts_used: chosen.warm_used,
            big_m_escalations: chosen.escalations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_boiler, two_boiler_scenarios};
    use crate::hub::{Energy, GridConnection, Hub};
    use crate::scenarios::DaySlice;
    use std::collections::BTreeMap;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * b.abs().max(1.0)
    }

    fn flat_econ(cap: Option<f64>) -> EconomicConfig {
        EconomicConfig {
            years: 1,
            discount_rate: 0.0,
            fuel_growth: 0.0,
            demand_growth: 0.0,
            emission_cap: cap,
            carbon_price: None,
        }
    }

    fn flat_slice(periods: usize) -> DaySlice {
        DaySlice {
            price: vec![0.0; periods],
            feedin: vec![0.0; periods],
            emissions: vec![0.0; periods],
            availability: vec![1.0; periods],
            demand: vec![0.0; periods],
        }
    }

    fn one_day_set(periods: usize, slices: Vec<(&str, DaySlice)>) -> ScenarioSet {
        let mut map = BTreeMap::new();
        for (k, s) in slices {
            map.insert(k.to_string(), s);
        }
        ScenarioSet {
            dt_hours: 1.0,
            periods,
            total_days: 365,
            days: vec![crate::scenarios::TypicalDay { weight: 365, source_day: 1, slices: map }],
        }
    }

    // -----------------------------------------------------------------
    // Closed-form oracle for the two-boiler fixture. Gas is the cheap,
    // dirty heat path (50 yen, 0.181 t/MWh at 90%), electricity the dear,
    // cleaner one (100 yen, 0.1 t/MWh at 100%), so every optimizer rides
    // the hourly gas burn `g` as high as its limits allow:
    //   cost/year = 730 (100 - 40 g),  tonnes/year = 730 (0.1 + 0.091 g).

    const HOURS: f64 = 730.0;

    #[derive(Clone, Copy)]
    struct BoilerPoint {
        total: f64,
        emissions: f64,
    }

    /// Annual outcome at one plan, or `None` if the plan cannot serve the
    /// load (or, given a budget, cannot respect it). `cooperative` burns
    /// only as much gas as the budget allows; the operator burns to the
    /// installed limit and the budget merely vetoes the plan.
    fn boiler_point(
        gas_cap: f64,
        eb: f64,
        ab: f64,
        budget: Option<f64>,
        cooperative: bool,
    ) -> Option<BoilerPoint> {
        let g_room = gas_cap.min(2.0 * ab).min(1.0 / 0.9);
        let g_need = ((1.0 - eb.min(3.75)) / 0.9).max(0.0);
        if g_need > g_room + 1e-12 {
            return None;
        }
        let g = if cooperative {
            match budget {
                None => g_room,
                Some(e) => {
                    let allowed = (e / HOURS - 0.1) / 0.091;
                    if allowed < g_need - 1e-12 {
                        return None;
                    }
                    g_room.min(allowed)
                }
            }
        } else {
            if let Some(e) = budget {
                if HOURS * (0.1 + 0.091 * g_room) > e + 1e-9 {
                    return None;
                }
            }
            g_room
        };
        Some(BoilerPoint {
            total: 1000.0 * eb + 800.0 * ab + HOURS * (100.0 - 40.0 * g),
            emissions: HOURS * (0.1 + 0.091 * g),
        })
    }

    /// Cheapest total over the whole sizing grid.
    fn best_boiler_total(budget: Option<f64>, cooperative: bool) -> f64 {
        let mut best = f64::INFINITY;
        for eb in 0..=15u32 {
            for ab in 0..=15u32 {
                for gs in 0..=15u32 {
                    if let Some(p) = boiler_point(
                        0.25 * gs as f64,
                        eb as f64,
                        ab as f64,
                        budget,
                        cooperative,
                    ) {
                        best = best.min(p.total);
                    }
                }
            }
        }
        best
    }

    /// Smallest per-tonne valuation at which some budget-respecting plan
    /// beats every budget-violating one, assuming operator dispatch: the
    /// exact switching point a bisection over valuations must find.
    fn valuation_threshold(budget: f64) -> f64 {
        let mut feasible = Vec::new();
        let mut violating = Vec::new();
        for eb in 0..=15u32 {
            for ab in 0..=15u32 {
                for gs in 0..=15u32 {
                    if let Some(p) =
                        boiler_point(0.25 * gs as f64, eb as f64, ab as f64, None, false)
                    {
                        if p.emissions <= budget + 1e-9 {
                            feasible.push(p);
                        } else {
                            violating.push(p);
                        }
                    }
                }
            }
        }
        let mut threshold = f64::INFINITY;
        for f in &feasible {
            let mut need = 0.0_f64;
            for v in &violating {
                need = need.max((f.total - v.total) / (v.emissions - f.emissions));
            }
            threshold = threshold.min(need);
        }
        threshold
    }

    #[test]
    fn a_cheap_dirty_hub_builds_the_gas_boiler() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let r = solve_f1(&hub, &topo, &set, &flat_econ(None), &FrameworkOptions::default())
            .expect("uncapped plan");
        let oracle = best_boiler_total(None, true);
        assert!(close(oracle, 800.0 + HOURS * (100.0 - 40.0 / 0.9)));
        assert!(close(r.total, oracle), "total {} vs oracle {}", r.total, oracle);
        assert_eq!(r.plan.converter_units[0], 0.0, "no electric boiler: {:?}", r.plan);
        assert!(r.plan.converter_units[1] >= 1.0);
        assert_eq!(r.status, "optimal");
        assert!(close(r.max_year_emissions, HOURS * (0.1 + 0.091 / 0.9)));
    }

    #[test]
    fn caps_push_the_plan_electric() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        for cap in [73.0, 100.0, 150.0] {
            let r = solve_f1(&hub, &topo, &set, &flat_econ(Some(cap)), &opts)
                .unwrap_or_else(|e| panic!("cap {cap}: {e}"));
            let oracle = best_boiler_total(Some(cap), true);
            assert!(
                close(r.total, oracle),
                "cap {cap}: total {} vs oracle {}",
                r.total,
                oracle
            );
            for &e in &r.annual_emissions {
                assert!(e <= cap + 1e-6 * cap.max(1.0), "cap {cap}: year at {e}");
            }
        }
        // A partially used gas boiler undercuts both pure plans at 100 t.
        let at_100 = best_boiler_total(Some(100.0), true);
        assert!(at_100 < 67_000.0, "partial burn should beat {at_100}");
        let g = (100.0 / HOURS - 0.1) / 0.091;
        assert!(close(at_100, 1800.0 + HOURS * (100.0 - 40.0 * g)));
        // At 73 t the budget forbids any gas at all.
        assert!(close(best_boiler_total(Some(73.0), true), 74_000.0));
        // At 150 t the cap is loose enough to change nothing.
        assert!(close(best_boiler_total(Some(150.0), true), best_boiler_total(None, true)));
    }

    #[test]
    fn the_cut_loop_matches_the_monolith() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        for cap in [None, Some(100.0), Some(73.0)] {
            let mono = solve_f1(&hub, &topo, &set, &flat_econ(cap), &opts).expect("monolith");
            let cuts =
                solve_f1_benders(&hub, &topo, &set, &flat_econ(cap), &opts).expect("cut loop");
            assert!(
                close(cuts.total, mono.total),
                "cap {cap:?}: cut loop {} vs monolith {}",
                cuts.total,
                mono.total
            );
            assert_eq!(cuts.status, "optimal", "cap {cap:?}");
            assert!(cuts.iterations <= 50, "cap {cap:?} took {}", cuts.iterations);
        }
    }

    #[test]
    fn an_idle_hub_converges_immediately() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let mut elec = flat_slice(2);
        elec.price = vec![100.0; 2];
        let mut gas = flat_slice(2);
        gas.price = vec![50.0; 2];
        let heat = flat_slice(2); // nothing demanded
        let set = one_day_set(2, vec![("electricity", elec), ("gas", gas), ("heat", heat)]);
        let r = solve_f1_benders(&hub, &topo, &set, &flat_econ(None), &FrameworkOptions::default())
            .expect("idle hub");
        assert_eq!(r.iterations, 1, "first guess should already price itself");
        assert!(close(r.total, 0.0), "idle total {}", r.total);
        assert_eq!(r.status, "optimal");
    }

    #[test]
    fn the_switching_price_is_found_within_tolerance() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        let r = solve_f2(&hub, &topo, &set, &flat_econ(Some(100.0)), &opts).expect("tax search");

        // Below the switching rate the taxed optimum is the full-burn gas
        // plan; above it the electric boiler wins outright, so the search
        // must stop within one tolerance of the indifference point.
        let op_gas = HOURS * (100.0 - 40.0 / 0.9);
        let e_gas = HOURS * (0.1 + 0.091 / 0.9);
        let switching = ((1000.0 + HOURS * 100.0) - (800.0 + op_gas)) / (e_gas - 73.0);
        assert!((switching - 442.2703).abs() < 1e-3);
        let rate = r.carbon_price.expect("rate");
        assert!(
            (rate - switching).abs() <= opts.price_tolerance + 1e-9,
            "rate {rate} vs switching point {switching}"
        );
        assert_eq!(r.plan.converter_units, vec![1.0, 0.0]);
        assert!(close(r.max_year_emissions, 73.0));
        assert!(close(r.total - r.tax_npv, 74_000.0));
        assert!(r.non_monotone.is_empty(), "{:?}", r.non_monotone);
        assert_eq!(r.iterations, r.probes.len());

        // A cap the untaxed baseline already meets needs no tax at all.
        let loose =
            solve_f2(&hub, &topo, &set, &flat_econ(Some(147.0)), &opts).expect("loose cap");
        assert_eq!(loose.carbon_price, Some(0.0));
        assert_eq!(loose.iterations, 1);
        assert!(close(loose.total, best_boiler_total(None, true)));
    }

    #[test]
    fn a_fixed_rate_skips_the_search() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let mut econ = flat_econ(None);
        econ.carbon_price = Some(500.0);
        let r = solve_f2(&hub, &topo, &set, &econ, &FrameworkOptions::default())
            .expect("fixed rate");
        assert_eq!(r.iterations, 1);
        assert_eq!(r.probes.len(), 1);
        assert_eq!(r.carbon_price, Some(500.0));
        assert_eq!(r.plan.converter_units, vec![1.0, 0.0]);
        assert!(close(r.annual_tax[0], 500.0 * 73.0));
        assert!(close(r.total, 74_000.0 + 500.0 * 73.0));
    }

    #[test]
    fn negative_intensity_stays_bounded_under_tax() {
        // A digester feed with a negative emission factor next to a
        // sellable grid connection: if negative annual emissions could be
        // monetized, an enormous rate would pay the hub to churn energy.
        // The bill is floored at zero, so the model must stay bounded and
        // idle instead.
        let hub = Hub {
            name: "digester".into(),
            energies: vec![Energy { name: "electricity".into(), demanded: false }],
            connections: vec![
                GridConnection {
                    name: "grid".into(),
                    energy: 0,
                    importable: true,
                    exportable: true,
                    cap_step: 0.25,
                    cap_bits: 4,
                    invest: 1.0,
                    series: None,
                },
                GridConnection {
                    name: "digester-feed".into(),
                    energy: 0,
                    importable: true,
                    exportable: false,
                    cap_step: 0.25,
                    cap_bits: 4,
                    invest: 1.0,
                    series: Some("digester-gas".into()),
                },
            ],
            converters: vec![],
            storages: vec![],
        };
        hub.validate().expect("digester hub");
        let topo = hub.topology().expect("topology");
        let mut grid = flat_slice(2);
        grid.price = vec![10.0; 2];
        grid.feedin = vec![5.0; 2];
        grid.emissions = vec![0.5; 2];
        let mut feed = flat_slice(2);
        feed.price = vec![8.0; 2];
        feed.emissions = vec![-0.5; 2];
        let set = one_day_set(2, vec![("electricity", grid), ("digester-gas", feed)]);
        let mut econ = flat_econ(None);
        econ.carbon_price = Some(1e6);
        let r = solve_f2(&hub, &topo, &set, &econ, &FrameworkOptions::default())
            .expect("bounded at an enormous rate");
        assert_eq!(r.status, "optimal");
        assert!(close(r.total, 0.0), "idle is optimal, got {}", r.total);
        assert!(r.annual_tax.iter().all(|&t| t == 0.0), "{:?}", r.annual_tax);
    }

    #[test]
    fn the_builder_defends_against_a_greedy_operator() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        for cap in [73.0, 100.0, 146.8111] {
            let r = solve_f3(&hub, &topo, &set, &flat_econ(Some(cap)), &opts)
                .unwrap_or_else(|e| panic!("cap {cap}: {e}"));
            let oracle = best_boiler_total(Some(cap), false);
            assert!(
                close(r.total, oracle),
                "cap {cap}: total {} vs operator oracle {}",
                r.total,
                oracle
            );
            assert!(r.max_year_emissions <= cap + 1e-6 * cap.max(1.0));
        }
        // The cooperative planner throttles a big gas boiler below its
        // capacity; the builder facing a greedy operator cannot, so the
        // same cap costs it strictly more.
        let coop = solve_f1(&hub, &topo, &set, &flat_econ(Some(100.0)), &opts).expect("f1");
        let defended = solve_f3(&hub, &topo, &set, &flat_econ(Some(100.0)), &opts).expect("f3");
        assert!(close(defended.total, 67_500.0));
        assert!(defended.total > coop.total + 1_000.0);
    }

    #[test]
    fn social_pricing_meets_the_target() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        let r = solve_f4(&hub, &topo, &set, &flat_econ(Some(100.0)), &opts).expect("valuation");
        let threshold = valuation_threshold(100.0);
        // The electric boiler only has to outbid the full-burn gas plan;
        // the throttled mixed plan would need a steeper valuation and
        // must not be what the search converged on.
        assert!((threshold - 442.2703).abs() < 1e-3, "threshold {threshold}");
        let rate = r.carbon_price.expect("rate");
        assert!(
            (rate - threshold).abs() <= opts.price_tolerance + 1e-9,
            "rate {rate} vs threshold {threshold}"
        );
        assert_eq!(r.plan.converter_units, vec![1.0, 0.0]);
        assert!(close(r.total, 74_000.0));
        assert!(r.max_year_emissions <= 100.0 + 1e-4);
        assert!(r.non_monotone.is_empty(), "{:?}", r.non_monotone);
        assert!(r.tax_npv == 0.0, "a valuation is not a bill");
    }

    #[test]
    fn ordering_of_the_frameworks_holds() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        for cap in [100.0, 73.0] {
            let econ = flat_econ(Some(cap));
            let f1 = solve_f1(&hub, &topo, &set, &econ, &opts).expect("f1");
            let f2 = solve_f2(&hub, &topo, &set, &econ, &opts).expect("f2");
            let f3 = solve_f3(&hub, &topo, &set, &econ, &opts).expect("f3");
            let f4 = solve_f4(&hub, &topo, &set, &econ, &opts).expect("f4");
            let slack = 1e-6 * f4.total.abs().max(1.0);
            assert!(
                f1.total <= f3.total + slack,
                "cap {cap}: cooperative {} should not exceed defended {}",
                f1.total,
                f3.total
            );
            assert!(
                f3.total <= f4.total + slack,
                "cap {cap}: defended {} should not exceed valuation-priced {}",
                f3.total,
                f4.total
            );
            assert!(
                f1.total <= f2.total - f2.tax_npv + slack,
                "cap {cap}: cooperative {} should not exceed taxed-ex-bill {}",
                f1.total,
                f2.total - f2.tax_npv
            );
        }
    }

    #[test]
    fn an_unreachable_cap_names_its_floor() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let opts = FrameworkOptions::default();
        match solve_f1(&hub, &topo, &set, &flat_econ(Some(10.0)), &opts) {
            Err(FrameworkError::InfeasibleCap { cap, floor, certificate }) => {
                assert_eq!(cap, 10.0);
                assert!(close(floor, 73.0), "floor {floor}");
                assert!(close(certificate.total, 74_000.0), "certificate {}", certificate.total);
                assert_eq!(certificate.plan.converter_units, vec![1.0, 0.0]);
            }
            other => panic!("expected an infeasible-cap report, got {other:?}"),
        }
        match solve_f3(&hub, &topo, &set, &flat_econ(Some(10.0)), &opts) {
            Err(FrameworkError::InfeasibleCap { floor, certificate, .. }) => {
                assert!(close(floor, 73.0), "floor {floor}");
                assert!(close(certificate.total, 74_000.0), "certificate {}", certificate.total);
            }
            other => panic!("expected an infeasible-cap report, got {other:?}"),
        }
    }

    #[test]
    fn exhausted_budgets_are_reported_honestly() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let mut opts = FrameworkOptions::default();
        opts.milp.node_budget = 1;
        opts.warm_starts = vec![InvestmentPlan {
            connection_caps: vec![3.75, 0.0],
            converter_units: vec![1.0, 0.0],
            storage_power: vec![],
            storage_energy: vec![],
        }];
        let r = solve_f1(&hub, &topo, &set, &flat_econ(Some(100.0)), &opts)
            .expect("the offered plan keeps the run alive");
        assert_eq!(r.status, "budget-exhausted");
        assert!(close(r.total, 74_000.0), "total {}", r.total);
        assert!(r.gap > 1e-3, "an unproven answer must keep its gap, got {}", r.gap);
        assert_eq!(r.warm_starts_used, vec!["offered-plan-1".to_string()]);
    }
}
