//! Operator-side dispatch: given a built hub and an investment plan, solve
//! one typical day at a time as a linear program.
//!
//! The day model is the contract the rest of the crate leans on. Each
//! constraint family gets its own row group and its own slot in
//! [`DayLayout`], so callers can read shadow prices family by family,
//! price marginal demand, or rebuild the same rows with capacities as
//! decision variables instead of constants (see [`CapacityVars`]). All
//! dispatch quantities are free variables with every bound written as an
//! explicit row — that way each bound owns a named multiplier, which the
//! exactness checks and the single-level reformulation both depend on.
//!
//! Sign conventions: branch flows are megawatts tail to head; the storage
//! net branch is positive when the reservoir drains. Costs are yen for the
//! day as played, with export revenue negative; annual and discounted
//! figures are assembled by [`evaluate_plan`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hub::{Hub, Topology};
use crate::scenarios::{compound, DaySlice, ScenarioSet, TypicalDay};
use crate::solver::{
    solve_lp, LpError, LpOptions, LpSolution, Model, RowId, RowSense, VarId, VarKind,
};

#[derive(Debug, Error)]
pub enum OperationError {
    #[error("{context}: no series named {key:?} (needed by {needs})")]
    MissingSeries {
        context: String,
        key: String,
        needs: String,
    },
    #[error("{context}: no feasible dispatch ({detail})")]
    Infeasible { context: String, detail: String },
    #[error("{context}: dispatch model is unbounded")]
    Unbounded { context: String },
    #[error("{context}: solver gave up ({detail})")]
    Solver { context: String, detail: String },
}

impl OperationError {
    /// Prefixes the error context, e.g. with the year being evaluated.
    pub(crate) fn scoped(self, prefix: &str) -> OperationError {
        let scope = |context: String| format!("{prefix}: {context}");
        match self {
            OperationError::MissingSeries { context, key, needs } => {
                OperationError::MissingSeries { context: scope(context), key, needs }
            }
            OperationError::Infeasible { context, detail } => {
                OperationError::Infeasible { context: scope(context), detail }
            }
            OperationError::Unbounded { context } => {
                OperationError::Unbounded { context: scope(context) }
            }
            OperationError::Solver { context, detail } => {
                OperationError::Solver { context: scope(context), detail }
            }
        }
    }
}

/// Sizing decision for every asset in a hub, in physical units: megawatts
/// for connections and storage power, megawatt hours for storage energy,
/// unit counts for converters. Values are continuous here; the planning
/// layers keep them on the purchase grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentPlan {
    pub connection_caps: Vec<f64>,
    pub converter_units: Vec<f64>,
    pub storage_power: Vec<f64>,
    pub storage_energy: Vec<f64>,
}

impl InvestmentPlan {
    pub fn zero(hub: &Hub) -> InvestmentPlan {
        InvestmentPlan {
            connection_caps: vec![0.0; hub.connections.len()],
            converter_units: vec![0.0; hub.converters.len()],
            storage_power: vec![0.0; hub.storages.len()],
            storage_energy: vec![0.0; hub.storages.len()],
        }
    }

    /// Everything at the largest size its encoding can express.
    pub fn max_build(hub: &Hub) -> InvestmentPlan {
        InvestmentPlan {
            connection_caps: hub.connections.iter().map(|c| c.cap_max()).collect(),
            converter_units: hub.converters.iter().map(|g| g.max_units() as f64).collect(),
            storage_power: hub.storages.iter().map(|s| s.power_max()).collect(),
            storage_energy: hub.storages.iter().map(|s| s.energy_max()).collect(),
        }
    }

    /// One-off purchase cost of the plan.
    pub fn invest_cost(&self, hub: &Hub) -> f64 {
        let mut total = 0.0;
        for (c, cap) in hub.connections.iter().zip(&self.connection_caps) {
            total += c.invest * cap;
        }
        for (g, units) in hub.converters.iter().zip(&self.converter_units) {
            total += g.invest * units;
        }
        for (s, (p, e)) in hub
            .storages
            .iter()
            .zip(self.storage_power.iter().zip(&self.storage_energy))
        {
            total += s.invest_power * p + s.invest_energy * e;
        }
        total
    }

    /// Rounds every quantity down onto its purchase grid and clamps it into
    /// range, reporting what moved. Used to sanitize warm starts that were
    /// produced outside the optimizer.
    pub fn snapped(&self, hub: &Hub) -> (InvestmentPlan, Vec<String>) {
        let mut warnings = Vec::new();
        let mut snap = |value: f64, step: f64, max: f64, what: String| -> f64 {
            let grid = if step > 0.0 {
                (value / step).floor() * step
            } else {
                value
            };
            let out = grid.clamp(0.0, max);
            if (out - value).abs() > 1e-9 * value.abs().max(1.0) {
                warnings.push(format!("{what}: {value} adjusted to {out}"));
            }
            out
        };
        let plan = InvestmentPlan {
            connection_caps: hub
                .connections
                .iter()
                .zip(&self.connection_caps)
                .map(|(c, &v)| snap(v, c.cap_step, c.cap_max(), format!("connection {}", c.name)))
                .collect(),
            converter_units: hub
                .converters
                .iter()
                .zip(&self.converter_units)
                .map(|(g, &v)| snap(v, 1.0, g.max_units() as f64, format!("converter {}", g.name)))
                .collect(),
            storage_power: hub
                .storages
                .iter()
                .zip(&self.storage_power)
                .map(|(s, &v)| {
                    snap(v, s.power_step, s.power_max(), format!("storage {} power", s.name))
                })
                .collect(),
            storage_energy: hub
                .storages
                .iter()
                .zip(&self.storage_energy)
                .map(|(s, &v)| {
                    snap(v, s.energy_step, s.energy_max(), format!("storage {} energy", s.name))
                })
                .collect(),
        };
        (plan, warnings)
    }
}

/// A capacity expressed over model variables: `terms + constant`. A fixed
/// plan is the special case with no terms, which lets the same row builder
/// serve both dispatch-only models and joint planning models where
/// capacities are decision variables.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(value: f64) -> LinExpr {
        LinExpr { terms: Vec::new(), constant: value }
    }
}

/// One capacity expression per sizable asset, in the same order as the hub
/// lists them.
#[derive(Debug, Clone)]
pub struct CapacityVars {
    pub connections: Vec<LinExpr>,
    pub converters: Vec<LinExpr>,
    pub storage_power: Vec<LinExpr>,
    pub storage_energy: Vec<LinExpr>,
}

impl CapacityVars {
    pub fn fixed(plan: &InvestmentPlan) -> CapacityVars {
        let consts = |v: &[f64]| v.iter().map(|&x| LinExpr::constant(x)).collect();
        CapacityVars {
            connections: consts(&plan.connection_caps),
            converters: consts(&plan.converter_units),
            storage_power: consts(&plan.storage_power),
            storage_energy: consts(&plan.storage_energy),
        }
    }
}

/// Everything needed to pose one typical day: the hub, its wiring, the
/// day's series, and the time grid.
#[derive(Clone, Copy)]
pub struct DayContext<'a> {
    pub hub: &'a Hub,
    pub topo: &'a Topology,
    pub day: &'a TypicalDay,
    pub dt: f64,
    pub periods: usize,
}

impl<'a> DayContext<'a> {
    pub fn new(
        hub: &'a Hub,
        topo: &'a Topology,
        set: &'a ScenarioSet,
        day: usize,
    ) -> DayContext<'a> {
        DayContext {
            hub,
            topo,
            day: &set.days[day],
            dt: set.dt_hours,
            periods: set.periods,
        }
    }

    fn context_label(&self) -> String {
        format!("typical day {}", self.day.source_day)
    }

    /// Series a connection trades against: its override if set, otherwise
    /// its carrier's series.
    pub fn connection_slice(&self, c: usize) -> Result<&'a DaySlice, OperationError> {
        let conn = &self.hub.connections[c];
        let key = conn.series.as_deref().unwrap_or(&self.hub.energies[conn.energy].name);
        self.day.slices.get(key).ok_or_else(|| OperationError::MissingSeries {
            context: self.context_label(),
            key: key.to_string(),
            needs: format!("connection {}", conn.name),
        })
    }

    /// Load series for a carrier, if one was supplied.
    pub fn demand_slice(&self, energy: usize) -> Option<&'a DaySlice> {
        self.day.slices.get(&self.hub.energies[energy].name)
    }
}

/// Variable and row handles for one appended day, grouped by constraint
/// family. Outer index is the entity (branch, storage, connection, carrier),
/// inner index is the period.
#[derive(Debug, Clone)]
pub struct DayLayout {
    pub periods: usize,
    /// Branch flows.
    pub flow: Vec<Vec<VarId>>,
    /// Storage contents at the end of each period.
    pub soc: Vec<Vec<VarId>>,
    /// Export quantities, one series per exportable connection.
    pub export: Vec<Vec<VarId>>,
    /// Connection ids behind each `export` entry.
    pub exporters: Vec<usize>,

    /// Flow conservation and device couplings (equalities, one per balance
    /// row per period).
    pub balance_rows: Vec<Vec<RowId>>,
    /// Cyclic storage bookkeeping (equalities).
    pub soc_rows: Vec<Vec<RowId>>,
    /// Storage content floor and ceiling.
    pub soc_floor_rows: Vec<Vec<RowId>>,
    pub soc_cap_rows: Vec<Vec<RowId>>,
    /// Converter input limited by installed units.
    pub conv_cap_rows: Vec<Vec<RowId>>,
    /// Storage net flow limited by power rating, each direction.
    pub sto_out_rows: Vec<Vec<RowId>>,
    pub sto_in_rows: Vec<Vec<RowId>>,
    /// Import limited by contracted capacity times availability; `None` for
    /// connections that cannot import.
    pub import_cap_rows: Vec<Option<Vec<RowId>>>,
    /// Delivered flow equals demand plus exports; `None` for carriers with
    /// nothing to deliver.
    pub delivery_rows: Vec<Option<Vec<RowId>>>,
    /// Export floor and ceiling, parallel to `exporters`.
    pub export_floor_rows: Vec<Vec<RowId>>,
    pub export_cap_rows: Vec<Vec<RowId>>,
    /// Nonnegativity of real branch flows; the storage net branch gets a
    /// vacuous row here so every branch owns exactly one row per period.
    pub flow_floor_rows: Vec<Vec<RowId>>,

    /// Objective terms at unit weight: fuel purchases minus export revenue.
    pub cost_terms: Vec<(VarId, f64)>,
    /// Tonnes of CO2-equivalent per unit of each import flow over the day.
    pub emission_terms: Vec<(VarId, f64)>,
}

impl DayLayout {
    /// Emissions of a solved day, in tonnes.
    pub fn emissions(&self, values: &[f64]) -> f64 {
        self.emission_terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Out-of-pocket operating cost of a solved day, in yen.
    pub fn cost(&self, values: &[f64]) -> f64 {
        self.cost_terms.iter().map(|&(v, c)| c * values[v]).sum()
    }
}

/// Appends one day's dispatch block to `model`.
///
/// Capacities enter through `caps`; pass [`CapacityVars::fixed`] to bake in
/// a plan, or expressions over planning variables to couple the day to an
/// investment decision. The day's trading cost lands on the objective
/// scaled by `obj_weight`, and `carbon_price` (yen per tonne) is charged on
/// top of fuel prices at the same weight. Rows and variables are named
/// under `tag` so several days can share one model.
pub fn append_day_dispatch(
    model: &mut Model,
    ctx: &DayContext,
    caps: &CapacityVars,
    obj_weight: f64,
    carbon_price: f64,
    tag: &str,
) -> Result<DayLayout, OperationError> {
    let topo = ctx.topo;
    let hub = ctx.hub;
    let t_count = ctx.periods;
    let dt = ctx.dt;
    let inf = f64::INFINITY;

    // Dispatch variables. Everything is free; bounds live in rows below so
    // each carries a named multiplier.
    let flow: Vec<Vec<VarId>> = topo
        .branches
        .iter()
        .map(|b| {
            (0..t_count)
                .map(|t| {
                    model.add_var_in(
                        &format!("{tag}.flow"),
                        format!("{tag}.v[{}][{t}]", b.name),
                        VarKind::Continuous,
                        -inf,
                        inf,
                        0.0,
                    )
                })
                .collect()
        })
        .collect();
    let soc: Vec<Vec<VarId>> = hub
        .storages
        .iter()
        .map(|s| {
            (0..t_count)
                .map(|t| {
                    model.add_var_in(
                        &format!("{tag}.soc"),
                        format!("{tag}.q[{}][{t}]", s.name),
                        VarKind::Continuous,
                        -inf,
                        inf,
                        0.0,
                    )
                })
                .collect()
        })
        .collect();
    let exporters: Vec<usize> = (0..hub.connections.len())
        .filter(|&c| hub.connections[c].exportable)
        .collect();
    let export: Vec<Vec<VarId>> = exporters
        .iter()
        .map(|&c| {
            (0..t_count)
                .map(|t| {
                    model.add_var_in(
                        &format!("{tag}.export"),
                        format!("{tag}.r[{}][{t}]", hub.connections[c].name),
                        VarKind::Continuous,
                        -inf,
                        inf,
                        0.0,
                    )
                })
                .collect()
        })
        .collect();

    // Objective and emission bookkeeping over import and export flows.
    let mut cost_terms: Vec<(VarId, f64)> = Vec::new();
    let mut emission_terms: Vec<(VarId, f64)> = Vec::new();
    for c in 0..hub.connections.len() {
        if let Some(l) = topo.import_branch[c] {
            let slice = ctx.connection_slice(c)?;
            for t in 0..t_count {
                cost_terms.push((flow[l][t], slice.price[t] * dt));
                if slice.emissions[t] != 0.0 {
                    emission_terms.push((flow[l][t], slice.emissions[t] * dt));
                }
            }
        }
    }
    for (x, &c) in exporters.iter().enumerate() {
        let slice = ctx.connection_slice(c)?;
        for t in 0..t_count {
            cost_terms.push((export[x][t], -slice.feedin[t] * dt));
        }
    }
    for &(v, c) in &cost_terms {
        model.add_obj(v, obj_weight * c);
    }
    if carbon_price != 0.0 {
        for &(v, c) in &emission_terms {
            model.add_obj(v, obj_weight * carbon_price * c);
        }
    }

    // A `Le` row `lhs <= factor * cap + rhs0`, with the capacity moved onto
    // the left when it is an expression over variables.
    let cap_row = |model: &mut Model,
                       group: String,
                       name: String,
                       mut lhs: Vec<(VarId, f64)>,
                       factor: f64,
                       cap: &LinExpr,
                       rhs0: f64|
     -> RowId {
        for &(v, c) in &cap.terms {
            lhs.push((v, -factor * c));
        }
        model.add_row_in(&group, name, RowSense::Le, lhs, factor * cap.constant + rhs0)
    };

    // Conservation and efficiency couplings.
    let balance_rows: Vec<Vec<RowId>> = topo
        .balance
        .iter()
        .map(|row| {
            (0..t_count)
                .map(|t| {
                    let terms = row.terms.iter().map(|&(l, c)| (flow[l][t], c)).collect();
                    model.add_row_in(
                        &format!("{tag}.balance"),
                        format!("{tag}.balance[{}][{t}]", row.name),
                        RowSense::Eq,
                        terms,
                        0.0,
                    )
                })
                .collect()
        })
        .collect();

    // Storage content: next = previous - net outflow, wrapped around the
    // day so the reservoir ends where it started.
    let mut soc_rows = Vec::new();
    let mut soc_floor_rows = Vec::new();
    let mut soc_cap_rows = Vec::new();
    let mut sto_out_rows = Vec::new();
    let mut sto_in_rows = Vec::new();
    for (g, s) in hub.storages.iter().enumerate() {
        let net = topo.storage_net[g];
        let mut rows_t = Vec::new();
        let mut lo_t = Vec::new();
        let mut hi_t = Vec::new();
        let mut out_t = Vec::new();
        let mut in_t = Vec::new();
        for t in 0..t_count {
            let prev = (t + t_count - 1) % t_count;
            rows_t.push(model.add_row_in(
                &format!("{tag}.soc"),
                format!("{tag}.soc[{}][{t}]", s.name),
                RowSense::Eq,
                vec![(soc[g][t], 1.0), (soc[g][prev], -1.0), (flow[net][t], dt)],
                0.0,
            ));
            lo_t.push(model.add_row_in(
                &format!("{tag}.soc-floor"),
                format!("{tag}.soc-floor[{}][{t}]", s.name),
                RowSense::Ge,
                vec![(soc[g][t], 1.0)],
                0.0,
            ));
            hi_t.push(cap_row(
                model,
                format!("{tag}.soc-cap"),
                format!("{tag}.soc-cap[{}][{t}]", s.name),
                vec![(soc[g][t], 1.0)],
                1.0,
                &caps.storage_energy[g],
                0.0,
            ));
            out_t.push(cap_row(
                model,
                format!("{tag}.sto-out"),
                format!("{tag}.sto-out[{}][{t}]", s.name),
                vec![(flow[net][t], 1.0)],
                1.0,
                &caps.storage_power[g],
                0.0,
            ));
            in_t.push(cap_row(
                model,
                format!("{tag}.sto-in"),
                format!("{tag}.sto-in[{}][{t}]", s.name),
                vec![(flow[net][t], -1.0)],
                1.0,
                &caps.storage_power[g],
                0.0,
            ));
        }
        soc_rows.push(rows_t);
        soc_floor_rows.push(lo_t);
        soc_cap_rows.push(hi_t);
        sto_out_rows.push(out_t);
        sto_in_rows.push(in_t);
    }

    // Converter throughput limited by installed units.
    let conv_cap_rows: Vec<Vec<RowId>> = hub
        .converters
        .iter()
        .enumerate()
        .map(|(g, conv)| {
            (0..t_count)
                .map(|t| {
                    let lhs = topo.converter_inputs[g]
                        .iter()
                        .map(|&l| (flow[l][t], 1.0))
                        .collect();
                    cap_row(
                        model,
                        format!("{tag}.conv-cap"),
                        format!("{tag}.conv-cap[{}][{t}]", conv.name),
                        lhs,
                        conv.unit_size,
                        &caps.converters[g],
                        0.0,
                    )
                })
                .collect()
        })
        .collect();

    // Imports limited by contracted capacity, derated by availability.
    let mut import_cap_rows: Vec<Option<Vec<RowId>>> = Vec::new();
    for (c, conn) in hub.connections.iter().enumerate() {
        match topo.import_branch[c] {
            None => import_cap_rows.push(None),
            Some(l) => {
                let slice = ctx.connection_slice(c)?;
                let rows = (0..t_count)
                    .map(|t| {
                        cap_row(
                            model,
                            format!("{tag}.import-cap"),
                            format!("{tag}.import-cap[{}][{t}]", conn.name),
                            vec![(flow[l][t], 1.0)],
                            slice.availability[t],
                            &caps.connections[c],
                            0.0,
                        )
                    })
                    .collect();
                import_cap_rows.push(Some(rows));
            }
        }
    }

    // Delivered flow covers demand and exports.
    let mut delivery_rows: Vec<Option<Vec<RowId>>> = Vec::new();
    for (m, energy) in hub.energies.iter().enumerate() {
        let Some(l) = topo.delivery_branch[m] else {
            delivery_rows.push(None);
            continue;
        };
        let slice = ctx.demand_slice(m);
        if energy.demanded && slice.is_none() {
            return Err(OperationError::MissingSeries {
                context: ctx.context_label(),
                key: energy.name.clone(),
                needs: format!("demand on carrier {}", energy.name),
            });
        }
        let rows = (0..t_count)
            .map(|t| {
                let mut terms = vec![(flow[l][t], 1.0)];
                for (x, &c) in exporters.iter().enumerate() {
                    if hub.connections[c].energy == m {
                        terms.push((export[x][t], -1.0));
                    }
                }
                let demand = slice.map_or(0.0, |s| s.demand[t]);
                model.add_row_in(
                    &format!("{tag}.delivery"),
                    format!("{tag}.delivery[{}][{t}]", energy.name),
                    RowSense::Eq,
                    terms,
                    demand,
                )
            })
            .collect();
        delivery_rows.push(Some(rows));
    }

    // Export bounds.
    let mut export_floor_rows = Vec::new();
    let mut export_cap_rows = Vec::new();
    for (x, &c) in exporters.iter().enumerate() {
        let conn = &hub.connections[c];
        let mut lo_t = Vec::new();
        let mut hi_t = Vec::new();
        for t in 0..t_count {
            lo_t.push(model.add_row_in(
                &format!("{tag}.export-floor"),
                format!("{tag}.export-floor[{}][{t}]", conn.name),
                RowSense::Ge,
                vec![(export[x][t], 1.0)],
                0.0,
            ));
            hi_t.push(cap_row(
                model,
                format!("{tag}.export-cap"),
                format!("{tag}.export-cap[{}][{t}]", conn.name),
                vec![(export[x][t], 1.0)],
                1.0,
                &caps.connections[c],
                0.0,
            ));
        }
        export_floor_rows.push(lo_t);
        export_cap_rows.push(hi_t);
    }

    // Real flows stay nonnegative. The storage net branch is signed, but
    // still gets a vacuous row so every branch has one multiplier per
    // period and layouts stay rectangular.
    let flow_floor_rows: Vec<Vec<RowId>> = topo
        .branches
        .iter()
        .enumerate()
        .map(|(l, b)| {
            (0..t_count)
                .map(|t| {
                    let coef = if b.real { 1.0 } else { 0.0 };
                    model.add_row_in(
                        &format!("{tag}.flow-floor"),
                        format!("{tag}.flow-floor[{}][{t}]", b.name),
                        RowSense::Ge,
                        vec![(flow[l][t], coef)],
                        0.0,
                    )
                })
                .collect()
        })
        .collect();

    Ok(DayLayout {
        periods: t_count,
        flow,
        soc,
        export,
        exporters,
        balance_rows,
        soc_rows,
        soc_floor_rows,
        soc_cap_rows,
        conv_cap_rows,
        sto_out_rows,
        sto_in_rows,
        import_cap_rows,
        delivery_rows,
        export_floor_rows,
        export_cap_rows,
        flow_floor_rows,
        cost_terms,
        emission_terms,
    })
}

/// What the operator optimizes within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchMode {
    /// Cheapest dispatch, ties broken by the solver.
    Cost,
    /// Cheapest dispatch, then the cleanest one among cost-optimal
    /// dispatches. Used wherever results must not depend on how the solver
    /// happens to break a tie. The tie-break pins the first-pass objective
    /// with a hair of slack, so the reported cost can sit up to 1e-7
    /// relative above the pure cost optimum; cost, emissions, and the
    /// returned dispatch always describe the same point.
    CostThenEmissions,
}

/// One solved typical day at fixed capacities.
#[derive(Debug)]
pub struct DayDispatch {
    /// Out-of-pocket cost in yen (fuel minus export revenue, no carbon
    /// charge).
    pub cost: f64,
    /// Emitted tonnes of CO2-equivalent.
    pub emissions: f64,
    pub model: Model,
    pub layout: DayLayout,
    pub solution: LpSolution,
}

impl DayDispatch {
    /// Willingness to pay for one more megawatt of demand on a carrier in
    /// one period, in yen per megawatt hour — the carrier's internal price.
    pub fn marginal_price(&self, energy: usize, t: usize) -> Option<f64> {
        let rows = self.layout.delivery_rows[energy].as_ref()?;
        Some(self.solution.duals[rows[t]])
    }
}

fn lp_failure(ctx: &DayContext, err: LpError) -> OperationError {
    let context = ctx.context_label();
    match err {
        LpError::Infeasible { phase1, .. } => OperationError::Infeasible {
            context,
            detail: format!("shortfall {phase1:.6}"),
        },
        LpError::Unbounded { .. } => OperationError::Unbounded { context },
        other => OperationError::Solver { context, detail: other.to_string() },
    }
}

/// Solves one typical day at fixed capacities.
///
/// `carbon_price` is charged per tonne inside the operator's objective, so
/// a priced operator dispatches differently; the returned `cost` stays
/// out-of-pocket only.
pub fn solve_day(
    ctx: &DayContext,
    plan: &InvestmentPlan,
    mode: DispatchMode,
    carbon_price: f64,
    options: &LpOptions,
) -> Result<DayDispatch, OperationError> {
    let caps = CapacityVars::fixed(plan);
    let mut model = Model::new(format!("{} day {}", ctx.hub.name, ctx.day.source_day));
    let layout = append_day_dispatch(&mut model, ctx, &caps, 1.0, carbon_price, "day")?;
    let solution = solve_lp(&model, options, None).map_err(|e| lp_failure(ctx, e))?;

    let mut dispatch = DayDispatch {
        cost: layout.cost(&solution.values),
        emissions: layout.emissions(&solution.values),
        model,
        layout,
        solution,
    };
    if mode == DispatchMode::Cost || dispatch.layout.emission_terms.is_empty() {
        return Ok(dispatch);
    }

    // Second pass: pin the achieved objective and minimize emissions within
    // it. The pin gets a hair of slack so re-solving stays feasible.
    let best = dispatch.model.objective_value(&dispatch.solution.values);
    let mut clean = Model::new(format!("{} day {} tie-break", ctx.hub.name, ctx.day.source_day));
    let layout = append_day_dispatch(&mut clean, ctx, &caps, 0.0, 0.0, "day")?;
    let mut pin = layout.cost_terms.clone();
    if carbon_price != 0.0 {
        for &(v, c) in &layout.emission_terms {
            pin.push((v, carbon_price * c));
        }
    }
    clean.add_row_in(
        "day.cost-pin",
        "day.cost-pin",
        RowSense::Le,
        pin,
        best + 1e-7 * (1.0 + best.abs()),
    );
    for &(v, c) in &layout.emission_terms {
        clean.add_obj(v, c);
    }
    let solution = solve_lp(&clean, options, None).map_err(|e| lp_failure(ctx, e))?;
    dispatch.cost = layout.cost(&solution.values);
    dispatch.emissions = layout.emissions(&solution.values);
    dispatch.model = clean;
    dispatch.layout = layout;
    dispatch.solution = solution;
    Ok(dispatch)
}

/// Checks that a scenario set carries every series the hub will ask for:
/// one per connection (under its override name if any) and one per demanded
/// carrier.
pub fn check_scenarios(hub: &Hub, set: &ScenarioSet) -> Result<(), OperationError> {
    for (d, day) in set.days.iter().enumerate() {
        let context = format!("typical day {} (index {d})", day.source_day);
        for conn in &hub.connections {
            let key = conn.series.as_deref().unwrap_or(&hub.energies[conn.energy].name);
            if !day.slices.contains_key(key) {
                return Err(OperationError::MissingSeries {
                    context,
                    key: key.to_string(),
                    needs: format!("connection {}", conn.name),
                });
            }
        }
        for energy in &hub.energies {
            if energy.demanded && !day.slices.contains_key(&energy.name) {
                return Err(OperationError::MissingSeries {
                    context,
                    key: energy.name.clone(),
                    needs: format!("demand on carrier {}", energy.name),
                });
            }
        }
    }
    Ok(())
}

/// Knobs for plan evaluation.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    /// Annual discount rate applied to operating cash flows; year 1 is
    /// discounted once.
    pub discount_rate: f64,
    /// Carbon price the operator sees, yen per tonne.
    pub carbon_price: f64,
    pub mode: DispatchMode,
    pub lp: LpOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            discount_rate: 0.10,
            carbon_price: 0.0,
            mode: DispatchMode::Cost,
            lp: LpOptions::default(),
        }
    }
}

/// Cost of owning and running a plan over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub invest: f64,
    /// Out-of-pocket operating cost per year, yen, net of export revenue.
    pub annual_operate: Vec<f64>,
    /// Emitted tonnes per year.
    pub annual_emissions: Vec<f64>,
    /// Discounted operating cost over all years.
    pub operate_npv: f64,
    /// Discounted carbon charges, zero when the operator sees no price.
    pub carbon_npv: f64,
    /// `invest + operate_npv + carbon_npv`.
    pub total: f64,
}

/// Prices a plan over the whole horizon: every typical day of every year is
/// dispatched independently (in parallel), day costs are expanded by their
/// weights into annual figures, and annual figures are discounted.
pub fn evaluate_plan(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    plan: &InvestmentPlan,
    options: &EvalOptions,
) -> Result<CostBreakdown, OperationError> {
    let mut jobs = Vec::new();
    for (y, set) in years.iter().enumerate() {
        for d in 0..set.days.len() {
            jobs.push((y, d));
        }
    }
    let solved: Result<Vec<_>, _> = jobs
        .par_iter()
        .map(|&(y, d)| {
            let ctx = DayContext::new(hub, topo, &years[y], d);
            solve_day(&ctx, plan, options.mode, options.carbon_price, &options.lp)
                .map(|out| (y, years[y].days[d].weight as f64, out.cost, out.emissions))
                .map_err(|e| e.scoped(&format!("year {}", y + 1)))
        })
        .collect();

    let mut annual_operate = vec![0.0; years.len()];
    let mut annual_emissions = vec![0.0; years.len()];
    for (y, weight, cost, emissions) in solved? {
        annual_operate[y] += weight * cost;
        annual_emissions[y] += weight * emissions;
    }

    let mut operate_npv = 0.0;
    let mut carbon_npv = 0.0;
    for y in 0..years.len() {
        let disc = 1.0 / compound(options.discount_rate, y + 1);
        operate_npv += disc * annual_operate[y];
        carbon_npv += disc * options.carbon_price * annual_emissions[y];
    }
    let invest = plan.invest_cost(hub);
    Ok(CostBreakdown {
        invest,
        annual_operate,
        annual_emissions,
        operate_npv,
        carbon_npv,
        total: invest + operate_npv + carbon_npv,
    })
}

/// Shadow prices of one solved day, mapped so that every inequality
/// multiplier is reported nonnegative: for `<=` rows and equalities the
/// solver's sensitivity is negated, for `>=` rows it is kept. Layout
/// mirrors [`DayLayout`].
#[derive(Debug, Clone)]
pub struct DayDuals {
    pub balance: Vec<Vec<f64>>,
    pub soc: Vec<Vec<f64>>,
    pub soc_floor: Vec<Vec<f64>>,
    pub soc_cap: Vec<Vec<f64>>,
    pub conv_cap: Vec<Vec<f64>>,
    pub sto_out: Vec<Vec<f64>>,
    pub sto_in: Vec<Vec<f64>>,
    pub import_cap: Vec<Option<Vec<f64>>>,
    pub delivery: Vec<Option<Vec<f64>>>,
    pub export_floor: Vec<Vec<f64>>,
    pub export_cap: Vec<Vec<f64>>,
    pub flow_floor: Vec<Vec<f64>>,
}

/// Reads the day's multipliers out of a solution.
pub fn extract_duals(layout: &DayLayout, solution: &LpSolution) -> DayDuals {
    let neg = |rows: &Vec<Vec<RowId>>| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|per_t| per_t.iter().map(|&r| -solution.duals[r]).collect())
            .collect()
    };
    let pos = |rows: &Vec<Vec<RowId>>| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|per_t| per_t.iter().map(|&r| solution.duals[r]).collect())
            .collect()
    };
    DayDuals {
        balance: neg(&layout.balance_rows),
        soc: neg(&layout.soc_rows),
        soc_floor: pos(&layout.soc_floor_rows),
        soc_cap: neg(&layout.soc_cap_rows),
        conv_cap: neg(&layout.conv_cap_rows),
        sto_out: neg(&layout.sto_out_rows),
        sto_in: neg(&layout.sto_in_rows),
        import_cap: layout
            .import_cap_rows
            .iter()
            .map(|rows| rows.as_ref().map(|per_t| per_t.iter().map(|&r| -solution.duals[r]).collect()))
            .collect(),
        delivery: layout
            .delivery_rows
            .iter()
            .map(|rows| rows.as_ref().map(|per_t| per_t.iter().map(|&r| -solution.duals[r]).collect()))
            .collect(),
        export_floor: pos(&layout.export_floor_rows),
        export_cap: neg(&layout.export_cap_rows),
        flow_floor: pos(&layout.flow_floor_rows),
    }
}

/// Value of the day's multipliers against its resource limits — by strong
/// duality this equals the day's objective, which makes it the standing
/// cross-check on the sign mapping and on the row structure itself.
pub fn dual_objective(
    ctx: &DayContext,
    plan: &InvestmentPlan,
    duals: &DayDuals,
) -> Result<f64, OperationError> {
    let hub = ctx.hub;
    let mut total = 0.0;
    for (g, conv) in hub.converters.iter().enumerate() {
        let cap = conv.unit_size * plan.converter_units[g];
        total -= cap * duals.conv_cap[g].iter().sum::<f64>();
    }
    for (g, _) in hub.storages.iter().enumerate() {
        total -= plan.storage_energy[g] * duals.soc_cap[g].iter().sum::<f64>();
        total -= plan.storage_power[g]
            * (duals.sto_out[g].iter().sum::<f64>() + duals.sto_in[g].iter().sum::<f64>());
    }
    for (c, _) in hub.connections.iter().enumerate() {
        if let Some(rho) = &duals.import_cap[c] {
            let slice = ctx.connection_slice(c)?;
            for t in 0..ctx.periods {
                total -= plan.connection_caps[c] * slice.availability[t] * rho[t];
            }
        }
    }
    for (x, phi) in duals.export_cap.iter().enumerate() {
        let conn = exporter_connection(hub, x);
        total -= plan.connection_caps[conn] * phi.iter().sum::<f64>();
    }
    for (m, mu) in duals.delivery.iter().enumerate() {
        let Some(mu) = mu else { continue };
        let demand = ctx.demand_slice(m);
        for t in 0..ctx.periods {
            total -= demand.map_or(0.0, |s| s.demand[t]) * mu[t];
        }
    }
    Ok(total)
}

fn exporter_connection(hub: &Hub, x: usize) -> usize {
    (0..hub.connections.len())
        .filter(|&c| hub.connections[c].exportable)
        .nth(x)
        .expect("exporter index in range")
}

/// Sensitivity of the day's cost to each capacity, from the solved duals.
/// Entries are nonpositive: capacity never hurts the operator. These are
/// exact subgradients of the day's value function, which is what the
/// decomposition layer cuts on.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGradient {
    pub connection_caps: Vec<f64>,
    pub converter_units: Vec<f64>,
    pub storage_power: Vec<f64>,
    pub storage_energy: Vec<f64>,
}

impl PlanGradient {
    pub fn zero(hub: &Hub) -> PlanGradient {
        PlanGradient {
            connection_caps: vec![0.0; hub.connections.len()],
            converter_units: vec![0.0; hub.converters.len()],
            storage_power: vec![0.0; hub.storages.len()],
            storage_energy: vec![0.0; hub.storages.len()],
        }
    }

    /// Accumulates another sensitivity, axis by axis.
    pub fn add(&mut self, other: &PlanGradient) {
        let pairs = [
            (&mut self.connection_caps, &other.connection_caps),
            (&mut self.converter_units, &other.converter_units),
            (&mut self.storage_power, &other.storage_power),
            (&mut self.storage_energy, &other.storage_energy),
        ];
        for (mine, theirs) in pairs {
            for (m, t) in mine.iter_mut().zip(theirs) {
                *m += t;
            }
        }
    }

    /// Inner product with a plan read as a point in capacity space.
    pub fn dot(&self, plan: &InvestmentPlan) -> f64 {
        let pairs = [
            (&self.connection_caps, &plan.connection_caps),
            (&self.converter_units, &plan.converter_units),
            (&self.storage_power, &plan.storage_power),
            (&self.storage_energy, &plan.storage_energy),
        ];
        pairs
            .iter()
            .map(|(g, q)| g.iter().zip(q.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }
}

/// Weights any row-indexed vector (duals, Farkas certificates) by each
/// capacity's coefficient in the rows it appears on. Fed the solved duals
/// this is the cost gradient; fed an infeasibility certificate it gives the
/// coefficients of a feasibility cut.
pub fn plan_sensitivity(
    ctx: &DayContext,
    layout: &DayLayout,
    row_weights: &[f64],
) -> Result<PlanGradient, OperationError> {
    let hub = ctx.hub;
    let mut connection_caps = vec![0.0; hub.connections.len()];
    for (c, rows) in layout.import_cap_rows.iter().enumerate() {
        if let Some(rows) = rows {
            let slice = ctx.connection_slice(c)?;
            for (t, &r) in rows.iter().enumerate() {
                connection_caps[c] += slice.availability[t] * row_weights[r];
            }
        }
    }
    for (x, rows) in layout.export_cap_rows.iter().enumerate() {
        let c = layout.exporters[x];
        for &r in rows {
            connection_caps[c] += row_weights[r];
        }
    }
    let converter_units = hub
        .converters
        .iter()
        .enumerate()
        .map(|(g, conv)| {
            conv.unit_size * layout.conv_cap_rows[g].iter().map(|&r| row_weights[r]).sum::<f64>()
        })
        .collect();
    let storage_power = (0..hub.storages.len())
        .map(|g| {
            layout.sto_out_rows[g]
                .iter()
                .chain(&layout.sto_in_rows[g])
                .map(|&r| row_weights[r])
                .sum::<f64>()
        })
        .collect();
    let storage_energy = (0..hub.storages.len())
        .map(|g| layout.soc_cap_rows[g].iter().map(|&r| row_weights[r]).sum::<f64>())
        .collect();
    Ok(PlanGradient {
        connection_caps,
        converter_units,
        storage_power,
        storage_energy,
    })
}

pub fn plan_gradients(
    ctx: &DayContext,
    layout: &DayLayout,
    solution: &LpSolution,
) -> Result<PlanGradient, OperationError> {
    plan_sensitivity(ctx, layout, &solution.duals)
}
