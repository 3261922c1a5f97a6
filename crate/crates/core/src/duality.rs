//! Exactness-preserving single-level planning blocks.
//!
//! Planning is naturally bilevel: the planner sizes assets, the operator
//! dispatches them at least cost. Because the operator's problem is a
//! linear program, it can be replaced by its own optimality conditions:
//! keep the dispatch rows, add one multiplier per row with its sign
//! domain, add one stationarity equality per dispatch quantity, and pin
//! primal cost to dual value. A dispatch satisfying all of that is
//! operator-optimal by strong duality — no approximation involved.
//!
//! Capacities are bought in binary steps ([`BitGrid`]), so the multiplier
//! times capacity terms in the dual value become binary-times-continuous
//! products. Each product is replaced by an auxiliary variable fenced by
//! the standard three-row envelope, which is exact when one factor is
//! binary and the other lives in a known interval — hence the big-M
//! bound on every multiplier and the post-solve re-check that the block's
//! dispatch really was optimal ([`check_day_exactness`]).
//!
//! The storage content floor pairs with the same rating bits as the
//! ceiling even though its products never reach the value expression;
//! keeping both sides makes the block sizes match the closed-form counts
//! in [`crate::solver::complexity`] exactly.

use serde::{Deserialize, Serialize};

use crate::hub::Hub;
use crate::operation::{
    append_day_dispatch, CapacityVars, DayContext, DayLayout, InvestmentPlan, LinExpr,
    OperationError,
};
use crate::solver::{Model, RowId, RowSense, VarId, VarKind};

/// A quantity purchasable in `2^bits - 1` steps of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitGrid {
    pub step: f64,
    pub bits: usize,
}

impl BitGrid {
    pub fn max_value(&self) -> f64 {
        self.step * ((1u64 << self.bits) - 1) as f64
    }

    /// Contribution of the n-th bit, lowest first.
    pub fn weight(&self, n: usize) -> f64 {
        self.step * (1u64 << n) as f64
    }

    /// Value of a bit vector (lowest bit first).
    pub fn decode(&self, bits: &[f64]) -> f64 {
        bits.iter()
            .enumerate()
            .map(|(n, &b)| b.round() * self.weight(n))
            .sum()
    }

    /// Bit vector (lowest first) for a value, rounding down onto the grid
    /// and clamping into range. The flag reports whether the value was
    /// representable as given.
    pub fn encode(&self, value: f64) -> (Vec<f64>, bool) {
        let steps_exact = value / self.step;
        let max_steps = (1u64 << self.bits) - 1;
        let steps = (steps_exact + 1e-9).floor().max(0.0).min(max_steps as f64) as u64;
        let exact = (steps as f64 * self.step - value).abs() <= 1e-9 * value.abs().max(1.0);
        let bits = (0..self.bits)
            .map(|n| if steps >> n & 1 == 1 { 1.0 } else { 0.0 })
            .collect();
        (bits, exact)
    }
}

/// The binary sizing variables of a whole hub, plus the capacity
/// expressions they induce for the dispatch rows.
#[derive(Debug, Clone)]
pub struct PlanVars {
    pub connection_bits: Vec<Vec<VarId>>,
    pub converter_bits: Vec<Vec<VarId>>,
    pub storage_power_bits: Vec<Vec<VarId>>,
    pub storage_energy_bits: Vec<Vec<VarId>>,
    pub caps: CapacityVars,
}

/// Grids for every sizable asset of a hub, in hub order.
pub fn hub_grids(hub: &Hub) -> (Vec<BitGrid>, Vec<BitGrid>, Vec<BitGrid>, Vec<BitGrid>) {
    (
        hub.connections
            .iter()
            .map(|c| BitGrid { step: c.cap_step, bits: c.cap_bits })
            .collect(),
        hub.converters
            .iter()
            .map(|g| BitGrid { step: 1.0, bits: g.unit_bits })
            .collect(),
        hub.storages
            .iter()
            .map(|s| BitGrid { step: s.power_step, bits: s.power_bits })
            .collect(),
        hub.storages
            .iter()
            .map(|s| BitGrid { step: s.energy_step, bits: s.energy_bits })
            .collect(),
    )
}

/// Adds the sizing bits for every asset. Investment cost is not charged
/// here; see [`add_invest_objective`].
pub fn add_plan_vars(model: &mut Model, hub: &Hub) -> PlanVars {
    let mut bits_for = |group: &str, name: &str, grid: &BitGrid| -> (Vec<VarId>, LinExpr) {
        let ids: Vec<VarId> = (0..grid.bits)
            .map(|n| {
                model.add_var_in(group, format!("{name}.bit{n}"), VarKind::Binary, 0.0, 1.0, 0.0)
            })
            .collect();
        let expr = LinExpr {
            terms: ids.iter().enumerate().map(|(n, &v)| (v, grid.weight(n))).collect(),
            constant: 0.0,
        };
        (ids, expr)
    };

    let (conn_grids, conv_grids, power_grids, energy_grids) = hub_grids(hub);
    let mut connection_bits = Vec::new();
    let mut connections = Vec::new();
    for (c, grid) in hub.connections.iter().zip(&conn_grids) {
        let (ids, expr) = bits_for("bits.connection", &format!("cap[{}]", c.name), grid);
        connection_bits.push(ids);
        connections.push(expr);
    }
    let mut converter_bits = Vec::new();
    let mut converters = Vec::new();
    for (g, grid) in hub.converters.iter().zip(&conv_grids) {
        let (ids, expr) = bits_for("bits.converter", &format!("units[{}]", g.name), grid);
        converter_bits.push(ids);
        converters.push(expr);
    }
    let mut storage_power_bits = Vec::new();
    let mut storage_power = Vec::new();
    let mut storage_energy_bits = Vec::new();
    let mut storage_energy = Vec::new();
    for ((s, pg), eg) in hub.storages.iter().zip(&power_grids).zip(&energy_grids) {
        let (ids, expr) = bits_for("bits.sto-power", &format!("power[{}]", s.name), pg);
        storage_power_bits.push(ids);
        storage_power.push(expr);
        let (ids, expr) = bits_for("bits.sto-energy", &format!("energy[{}]", s.name), eg);
        storage_energy_bits.push(ids);
        storage_energy.push(expr);
    }

    PlanVars {
        connection_bits,
        converter_bits,
        storage_power_bits,
        storage_energy_bits,
        caps: CapacityVars {
            connections,
            converters,
            storage_power,
            storage_energy,
        },
    }
}

impl PlanVars {
    /// Reads the purchased sizes out of a solution.
    pub fn decode(&self, hub: &Hub, values: &[f64]) -> InvestmentPlan {
        let (conn, conv, power, energy) = hub_grids(hub);
        let read = |bits: &[Vec<VarId>], grids: &[BitGrid]| -> Vec<f64> {
            bits.iter()
                .zip(grids)
                .map(|(ids, g)| {
                    let vals: Vec<f64> = ids.iter().map(|&v| values[v]).collect();
                    g.decode(&vals)
                })
                .collect()
        };
        InvestmentPlan {
            connection_caps: read(&self.connection_bits, &conn),
            converter_units: read(&self.converter_bits, &conv),
            storage_power: read(&self.storage_power_bits, &power),
            storage_energy: read(&self.storage_energy_bits, &energy),
        }
    }

    /// Bit assignments reproducing a plan, snapping it onto the purchase
    /// grid first; the warnings say what moved.
    pub fn encode(&self, hub: &Hub, plan: &InvestmentPlan) -> (Vec<(VarId, f64)>, Vec<String>) {
        let (snapped, warnings) = plan.snapped(hub);
        let (conn, conv, power, energy) = hub_grids(hub);
        let mut out = Vec::new();
        let mut put = |bits: &[Vec<VarId>], grids: &[BitGrid], values: &[f64]| {
            for ((ids, g), &v) in bits.iter().zip(grids).zip(values) {
                let (pattern, exact) = g.encode(v);
                debug_assert!(exact, "snapped value must sit on its grid");
                out.extend(ids.iter().copied().zip(pattern));
            }
        };
        put(&self.connection_bits, &conn, &snapped.connection_caps);
        put(&self.converter_bits, &conv, &snapped.converter_units);
        put(&self.storage_power_bits, &power, &snapped.storage_power);
        put(&self.storage_energy_bits, &energy, &snapped.storage_energy);
        (out, warnings)
    }
}

/// Charges each asset's purchase price on its bits, scaled by `weight`.
pub fn add_invest_objective(model: &mut Model, hub: &Hub, vars: &PlanVars, weight: f64) {
    let (conn, conv, power, energy) = hub_grids(hub);
    let mut charge = |bits: &[Vec<VarId>], grids: &[BitGrid], price: &dyn Fn(usize) -> f64| {
        for (i, (ids, g)) in bits.iter().zip(grids).enumerate() {
            for (n, &v) in ids.iter().enumerate() {
                model.add_obj(v, weight * price(i) * g.weight(n));
            }
        }
    };
    charge(&vars.connection_bits, &conn, &|i| hub.connections[i].invest);
    charge(&vars.converter_bits, &conv, &|i| hub.converters[i].invest);
    charge(&vars.storage_power_bits, &power, &|i| hub.storages[i].invest_power);
    charge(&vars.storage_energy_bits, &energy, &|i| hub.storages[i].invest_energy);
}

/// Multiplier bound for one day's dispatch: ten times the steepest price
/// in play, which leaves room for a couple of lossy conversion hops. The
/// post-solve check catches the cases where this is still too tight.
pub fn day_big_m(ctx: &DayContext, carbon_price: f64) -> Result<f64, OperationError> {
    let mut scale: f64 = 0.0;
    for c in 0..ctx.hub.connections.len() {
        let slice = ctx.connection_slice(c)?;
        for t in 0..ctx.periods {
            scale = scale
                .max(slice.price[t].abs() + carbon_price.abs() * slice.emissions[t].abs())
                .max(slice.feedin[t].abs());
        }
    }
    Ok((10.0 * ctx.dt * scale).max(1.0))
}

/// One linearized multiplier-times-bit product. `weight` is its
/// coefficient in the dual value; the storage-floor twins carry zero.
#[derive(Debug, Clone, Copy)]
pub struct Product {
    pub multiplier: VarId,
    pub bit: VarId,
    pub value: VarId,
    pub weight: f64,
}

/// Handles into one day's single-level block.
#[derive(Debug)]
pub struct DualDayBlock {
    pub layout: DayLayout,
    /// First primal row of the block; rows run contiguously from here.
    pub first_row: RowId,
    /// Multiplier variable per primal row of the block, in row order.
    pub multipliers: Vec<VarId>,
    pub stationarity_rows: Vec<RowId>,
    pub products: Vec<Product>,
    /// Fixed-limit terms of the dual value (multiplier, coefficient).
    pub value_rows: Vec<(VarId, f64)>,
    /// Primal cost equals dual value.
    pub cost_match_row: RowId,
    pub big_m: f64,
}

impl DualDayBlock {
    /// Multiplier owned by one of the block's primal rows.
    pub fn multiplier_of(&self, row: RowId) -> VarId {
        self.multipliers[row - self.first_row]
    }
}

/// Appends one day's dispatch rows together with the optimality conditions
/// that make any feasible point operator-optimal.
///
/// `plan_vars` supplies the capacity expressions over sizing bits; the
/// day's trading cost lands on the objective scaled by `obj_weight`, as in
/// [`append_day_dispatch`]. `big_m` bounds every multiplier; take it from
/// [`day_big_m`] and escalate if [`check_day_exactness`] complains.
pub fn append_strong_duality_day(
    model: &mut Model,
    ctx: &DayContext,
    plan_vars: &PlanVars,
    obj_weight: f64,
    big_m: f64,
    tag: &str,
) -> Result<DualDayBlock, OperationError> {
    let var_start = model.var_count();
    let row_start = model.row_count();
    let layout = append_day_dispatch(model, ctx, &plan_vars.caps, obj_weight, 0.0, tag)?;
    let var_end = model.var_count();
    let row_end = model.row_count();

    // Operator's own cost vector, independent of the planner's weighting.
    let mut unit_cost = vec![0.0; var_end - var_start];
    for &(v, c) in &layout.cost_terms {
        unit_cost[v - var_start] += c;
    }

    // One multiplier per row. Inequalities get the sign that makes their
    // multiplier nonnegative; equalities stay free within the box.
    let mut multipliers = Vec::with_capacity(row_end - row_start);
    let mut row_sign = Vec::with_capacity(row_end - row_start);
    for r in row_start..row_end {
        let row = model.row(r);
        let (lo, sign) = match row.sense {
            RowSense::Le => (0.0, -1.0),
            RowSense::Ge => (0.0, 1.0),
            RowSense::Eq => (-big_m, 1.0),
        };
        let group = row.group.replace(tag, &format!("{tag}.dual"));
        let name = format!("dual.{}", row.name);
        row_sign.push(sign);
        multipliers.push(model.add_var_in(&group, name, VarKind::Continuous, lo, big_m, 0.0));
    }

    // Walk the primal rows once, splitting each coefficient by which side
    // of the bilevel divide its variable lives on: dispatch coefficients
    // feed the stationarity rows, sizing-bit coefficients become products
    // in the dual value.
    let mut stationarity: Vec<Vec<(VarId, f64)>> =
        vec![Vec::new(); var_end - var_start];
    // Dual value, as `linear in multipliers + linear in products`.
    let mut value_linear: Vec<(VarId, f64)> = Vec::new();
    let mut value_products: Vec<(usize, VarId, f64)> = Vec::new(); // (row offset, bit, weight)
    for r in row_start..row_end {
        let row = model.row(r);
        let sign = row_sign[r - row_start];
        let mu = multipliers[r - row_start];
        if row.rhs != 0.0 {
            value_linear.push((mu, sign * row.rhs));
        }
        for &(v, a) in &row.terms {
            if v >= var_start {
                if a != 0.0 {
                    stationarity[v - var_start].push((mu, sign * a));
                }
            } else {
                // Capacity bit on the left with coefficient `-k`; on the
                // right it contributes `k * bit` to the row's limit, hence
                // `sign * k * (mu * bit)` to the dual value.
                debug_assert!(matches!(row.sense, RowSense::Le));
                value_products.push((r - row_start, v, sign * -a));
            }
        }
    }

    // The content floor mirrors the ceiling's rating bits with weight
    // zero, purely so block sizes match the published accounting.
    for (g, bits) in plan_vars.storage_energy_bits.iter().enumerate() {
        for t in 0..ctx.periods {
            let r = layout.soc_floor_rows[g][t] - row_start;
            for &b in bits {
                value_products.push((r, b, 0.0));
            }
        }
    }

    // Stationarity: multipliers balance the operator's cost on every
    // dispatch quantity.
    let dispatch_names: Vec<String> =
        (var_start..var_end).map(|v| model.var(v).name.clone()).collect();
    let stationarity_rows = stationarity
        .into_iter()
        .enumerate()
        .map(|(j, terms)| {
            model.add_row_in(
                &format!("{tag}.stationarity"),
                format!("{tag}.stationarity[{}]", dispatch_names[j]),
                RowSense::Eq,
                terms,
                unit_cost[j],
            )
        })
        .collect();

    // Linearized products with their three-row envelopes.
    let mut products = Vec::with_capacity(value_products.len());
    let mut value_terms = value_linear.clone();
    for &(r, bit, weight) in &value_products {
        let mu = multipliers[r];
        let w = model.add_var_in(
            &format!("{tag}.product"),
            format!("{tag}.w[{}]", products.len()),
            VarKind::Continuous,
            0.0,
            big_m,
            0.0,
        );
        model.add_row_in(
            &format!("{tag}.envelope"),
            format!("{tag}.envelope-cap[{}]", products.len()),
            RowSense::Le,
            vec![(w, 1.0), (bit, -big_m)],
            0.0,
        );
        model.add_row_in(
            &format!("{tag}.envelope"),
            format!("{tag}.envelope-mu[{}]", products.len()),
            RowSense::Le,
            vec![(w, 1.0), (mu, -1.0)],
            0.0,
        );
        model.add_row_in(
            &format!("{tag}.envelope"),
            format!("{tag}.envelope-floor[{}]", products.len()),
            RowSense::Le,
            vec![(mu, 1.0), (w, -1.0), (bit, big_m)],
            big_m,
        );
        if weight != 0.0 {
            value_terms.push((w, weight));
        }
        products.push(Product { multiplier: mu, bit, value: w, weight });
    }

    // Strong duality: what the dispatch costs the operator equals what the
    // limits are worth. This single row is what forces every feasible
    // point of the block to be an operator-optimal dispatch.
    let mut match_terms: Vec<(VarId, f64)> = layout.cost_terms.clone();
    for (v, c) in value_terms {
        match_terms.push((v, -c));
    }
    let cost_match_row = model.add_row_in(
        &format!("{tag}.cost-match"),
        format!("{tag}.cost-match"),
        RowSense::Eq,
        match_terms,
        0.0,
    );

    Ok(DualDayBlock {
        layout,
        first_row: row_start,
        multipliers,
        stationarity_rows,
        products,
        value_rows: value_linear,
        cost_match_row,
        big_m,
    })
}

/// Checks that the dispatch a solved block settled on really is the
/// operator's optimum for the plan it encodes, by re-solving the day as a
/// plain LP and comparing costs. `Some` carries the discrepancy and means
/// the multiplier box distorted the block — rebuild with a larger
/// `big_m`. (Multiplier positions themselves are not diagnostic: under
/// degeneracy a vertex legitimately parks unused multipliers on the box,
/// so this comparison is the escalation trigger instead.)
pub fn check_day_exactness(
    ctx: &DayContext,
    plan: &InvestmentPlan,
    block: &DualDayBlock,
    values: &[f64],
    lp: &crate::solver::LpOptions,
) -> Result<Option<String>, OperationError> {
    use crate::operation::{solve_day, DispatchMode};
    let embedded = block.layout.cost(values);
    let independent = solve_day(ctx, plan, DispatchMode::Cost, 0.0, lp)?.cost;
    if (embedded - independent).abs() > 1e-6 * (1.0 + independent.abs()) {
        Ok(Some(format!(
            "embedded dispatch costs {embedded:.6} but the day's optimum is {independent:.6}; \
             multiplier box {:.3} is suspect",
            block.big_m
        )))
    } else {
        Ok(None)
    }
}
