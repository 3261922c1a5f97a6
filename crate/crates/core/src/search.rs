//! Plan-space improvement search, emission/cost frontier sweeps, and
//! warm-start selection.
//!
//! The planning models decide sizes exactly; the helpers here move around
//! them. [`neighbor_search`] polishes a plan by stepping along the
//! purchase grid, one or two axes at a time, keeping every accepted step
//! feasible and strictly cheaper — useful on its own and as the
//! improvement hook the planning solves consult on each new incumbent.
//! [`pareto_sweep`] traces cost against a ladder of emission targets and
//! lets neighboring targets lend each other solutions and proven bounds.
//! [`pick_warm_start`] chooses a starting plan from a pool under a given
//! per-tonne valuation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frameworks::{
    solve_framework, EconomicConfig, FrameworkError, FrameworkOptions, FrameworkResult,
};
use crate::hub::{Hub, Topology};
use crate::operation::{evaluate_plan, EvalOptions, InvestmentPlan, OperationError};
use crate::scenarios::ScenarioSet;

/// One accepted move of [`neighbor_search`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchStep {
    pub plan: InvestmentPlan,
    /// Investment plus discounted operating (and, if priced, carbon) cost
    /// after the move.
    pub total: f64,
    /// Heaviest year after the move, tonnes.
    pub max_year_emissions: f64,
}

#[derive(Clone, Copy)]
enum AxisKind {
    Connection,
    Converter,
    StoragePower,
    StorageEnergy,
}

/// One sizing decision: where it lives in the plan, how far one purchase
/// step moves it, and how far the bit encoding lets it go.
struct Axis {
    kind: AxisKind,
    index: usize,
    step: f64,
    max: f64,
}

fn axes(hub: &Hub) -> Vec<Axis> {
    let mut out = Vec::new();
    for (index, c) in hub.connections.iter().enumerate() {
        out.push(Axis { kind: AxisKind::Connection, index, step: c.cap_step, max: c.cap_max() });
    }
    for (index, c) in hub.converters.iter().enumerate() {
        out.push(Axis {
            kind: AxisKind::Converter,
            index,
            step: 1.0,
            max: c.max_units() as f64,
        });
    }
    for (index, s) in hub.storages.iter().enumerate() {
        out.push(Axis {
            kind: AxisKind::StoragePower,
            index,
            step: s.power_step,
            max: s.power_max(),
        });
        out.push(Axis {
            kind: AxisKind::StorageEnergy,
            index,
            step: s.energy_step,
            max: s.energy_max(),
        });
    }
    out
}

/// The plan one purchase step away along `axis`, or `None` when that
/// leaves the grid.
fn nudged(plan: &InvestmentPlan, axis: &Axis, direction: f64) -> Option<InvestmentPlan> {
    let mut plan = plan.clone();
    let slot = match axis.kind {
        AxisKind::Connection => &mut plan.connection_caps[axis.index],
        AxisKind::Converter => &mut plan.converter_units[axis.index],
        AxisKind::StoragePower => &mut plan.storage_power[axis.index],
        AxisKind::StorageEnergy => &mut plan.storage_energy[axis.index],
    };
    let next = *slot + direction * axis.step;
    if next < -1e-9 || next > axis.max + 1e-9 {
        return None;
    }
    *slot = next.clamp(0.0, axis.max);
    Some(plan)
}

/// Every move of the given order: single steps, and for order two every
/// pair of distinct axes in all four sign combinations.
fn moves(axis_count: usize, order: usize) -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for i in 0..axis_count {
        for s in [1.0, -1.0] {
            out.push(vec![(i, s)]);
        }
    }
    if order >= 2 {
        for i in 0..axis_count {
            for j in i + 1..axis_count {
                for si in [1.0, -1.0] {
                    for sj in [1.0, -1.0] {
                        out.push(vec![(i, si), (j, sj)]);
                    }
                }
            }
        }
    }
    out
}

struct Scored {
    total: f64,
    worst: f64,
}

/// Prices one plan; `None` means it cannot serve the load or busts the
/// cap, which disqualifies it without being an error.
fn score(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    plan: &InvestmentPlan,
    cap: Option<f64>,
    eval: &EvalOptions,
) -> Result<Option<Scored>, OperationError> {
    match evaluate_plan(hub, topo, years, plan, eval) {
        Ok(b) => {
            let worst = if b.annual_emissions.is_empty() {
                0.0
            } else {
                b.annual_emissions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            if let Some(cap) = cap {
                if worst > cap + 1e-6 * cap.abs().max(1.0) {
                    return Ok(None);
                }
            }
            Ok(Some(Scored { total: b.total, worst }))
        }
        Err(OperationError::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Improves `start` by repeated grid steps until no neighbor of the given
/// order is both feasible and strictly cheaper.
///
/// Every accepted move lowers the total, so the walk terminates; the
/// trace records each move. Among improving neighbors the one giving the
/// most cost reduction per tonne of added emissions wins, with moves that
/// do not add emissions preferred outright; remaining ties go to the
/// larger reduction, then the earliest move in enumeration order, so the
/// walk is deterministic. A `start` that cannot serve the load — or
/// already busts `cap` — comes back unchanged with an empty trace.
pub fn neighbor_search(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    start: &InvestmentPlan,
    order: usize,
    cap: Option<f64>,
    eval: &EvalOptions,
) -> Result<(InvestmentPlan, Vec<SearchStep>), OperationError> {
    let (mut current, _) = start.snapped(hub);
    let Some(mut standing) = score(hub, topo, years, &current, cap, eval)? else {
        return Ok((current, Vec::new()));
    };
    let axes = axes(hub);
    let moves = moves(axes.len(), order.max(1));
    let mut trace = Vec::new();

    loop {
        let candidates: Vec<InvestmentPlan> = moves
            .iter()
            .filter_map(|mv| {
                let mut plan = current.clone();
                for &(axis, sign) in mv {
                    plan = nudged(&plan, &axes[axis], sign)?;
                }
                Some(plan)
            })
            .collect();
        let scored: Vec<Option<Scored>> = candidates
            .par_iter()
            .map(|plan| score(hub, topo, years, plan, cap, eval))
            .collect::<Result<_, _>>()?;

        let gain_floor = 1e-9 * (1.0 + standing.total.abs());
        let rise_floor = 1e-9 * (1.0 + standing.worst.abs());
        let mut best: Option<(f64, f64, usize)> = None; // (ratio, gain, index)
        for (k, s) in scored.iter().enumerate() {
            let Some(s) = s else { continue };
            let gain = standing.total - s.total;
            if gain <= gain_floor {
                continue;
            }
            let rise = s.worst - standing.worst;
            let ratio = if rise <= rise_floor { f64::INFINITY } else { gain / rise };
            let better = match &best {
                None => true,
                Some((br, bg, bk)) => match ratio.total_cmp(br) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => gain > *bg || (gain == *bg && k < *bk),
                },
            };
            if better {
                best = Some((ratio, gain, k));
            }
        }
        let Some((_, _, k)) = best else { break };
        current = candidates[k].clone();
        standing = score(hub, topo, years, &current, cap, eval)?
            .expect("an accepted move was scored feasible");
        trace.push(SearchStep {
            plan: current.clone(),
            total: standing.total,
            max_year_emissions: standing.worst,
        });
    }
    Ok((current, trace))
}

/// Picks from `pool` the plan with the smallest investment plus
/// discounted operating cost plus `price` times total (undiscounted)
/// emissions. Plans that cannot serve the load are skipped; ties go to
/// the earliest candidate.
pub fn pick_warm_start(
    hub: &Hub,
    topo: &Topology,
    years: &[ScenarioSet],
    pool: &[InvestmentPlan],
    price: f64,
    eval: &EvalOptions,
) -> Result<InvestmentPlan, OperationError> {
    if pool.is_empty() {
        return Err(OperationError::Solver {
            context: "warm-start pick".into(),
            detail: "the candidate pool is empty".into(),
        });
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, plan) in pool.iter().enumerate() {
        let b = match evaluate_plan(hub, topo, years, plan, eval) {
            Ok(b) => b,
            Err(OperationError::Infeasible { .. }) => continue,
            Err(e) => return Err(e),
        };
        let value =
            b.invest + b.operate_npv + price * b.annual_emissions.iter().sum::<f64>();
        if best.map_or(true, |(v, _)| value < v) {
            best = Some((value, i));
        }
    }
    match best {
        Some((_, i)) => Ok(pool[i].clone()),
        None => Err(OperationError::Infeasible {
            context: "warm-start pick".into(),
            detail: "no candidate in the pool can serve the demands".into(),
        }),
    }
}

/// One rung of an emissions/cost frontier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParetoPoint {
    /// Emissions ceiling this rung was solved against, tonnes per year.
    pub target: f64,
    /// The defining run, possibly inherited from a tighter rung; `None`
    /// when this rung failed and nothing could stand in.
    pub result: Option<FrameworkResult>,
    /// Cheapest total known to respect this target.
    pub upper: f64,
    /// Largest total proven necessary; minus infinity when nothing is
    /// proven.
    pub lower: f64,
    /// "solved", "inherited-from-tighter", "bound-from-looser", or
    /// "failed: ..." when the rung's own solve failed.
    pub source: String,
}

impl ParetoPoint {
    /// Relative width between the known and the proven total.
    pub fn gap(&self) -> f64 {
        if self.upper.is_infinite() || self.lower.is_infinite() {
            f64::INFINITY
        } else {
            (self.upper - self.lower) / self.upper.abs().max(1.0)
        }
    }
}

/// What this run proved the capped optimum cannot beat. The price
/// searches prove nothing about the capped problem — their objective
/// carries the charge — so only the cap-constrained frameworks report a
/// finite bound.
fn proven_bound(r: &FrameworkResult) -> f64 {
    match r.framework.as_str() {
        "f1" | "f1-benders" | "f3" => r.objective - r.gap * r.objective.abs().max(1.0),
        _ => f64::NEG_INFINITY,
    }
}

/// Lets neighboring rungs help each other, tightest target first: a
/// tighter rung's plan also respects any looser target, so a cheaper one
/// replaces the looser rung's answer; and a looser rung is a relaxation,
/// so its proven bound also holds for every tighter rung.
fn share_bounds(points: &mut [ParetoPoint]) {
    points.sort_by(|a, b| a.target.total_cmp(&b.target));
    for k in 1..points.len() {
        let (tighter, rest) = points.split_at_mut(k);
        let donor = &tighter[k - 1];
        let here = &mut rest[0];
        if donor.upper < here.upper {
            if let Some(r) = &donor.result {
                // Inheriting re-checks the plan against this rung's own
                // target; emissions are already independently re-priced.
                if r.max_year_emissions <= here.target + 1e-6 * here.target.abs().max(1.0) {
                    here.upper = donor.upper;
                    here.result = Some(r.clone());
                    here.source = "inherited-from-tighter".into();
                }
            }
        }
    }
    for k in (0..points.len().saturating_sub(1)).rev() {
        let donor = points[k + 1].lower;
        if donor > points[k].lower + 1e-9 * donor.abs().max(1.0) {
            points[k].lower = donor;
            points[k].source = "bound-from-looser".into();
        }
    }
}

/// Solves the unconstrained baseline whose heaviest year fixes the scale
/// of a target ladder.
pub fn sweep_baseline(
    framework: &str,
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
) -> Result<FrameworkResult, FrameworkError> {
    let mut uncapped = econ.clone();
    uncapped.emission_cap = None;
    solve_framework(framework, hub, topo, base, &uncapped, opts)
}

/// Traces cost against an explicit list of emission targets for one
/// framework: rungs solve independently (in parallel), failures are
/// recorded on their rung rather than aborting the sweep, and finally the
/// rungs exchange solutions and bounds. Points come back sorted tightest
/// target first. Sharing one target list across frameworks makes their
/// frontiers comparable row by row.
pub fn pareto_sweep_targets(
    framework: &str,
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
    targets: &[f64],
) -> Result<Vec<ParetoPoint>, FrameworkError> {
    if targets.is_empty() {
        return Err(FrameworkError::Solver("a sweep needs at least one target".into()));
    }
    let mut points: Vec<ParetoPoint> = targets
        .par_iter()
        .map(|&target| {
            let mut rung = econ.clone();
            rung.emission_cap = Some(target);
            match solve_framework(framework, hub, topo, base, &rung, opts) {
                Ok(r) => ParetoPoint {
                    target,
                    upper: r.total,
                    lower: proven_bound(&r),
                    result: Some(r),
                    source: "solved".into(),
                },
                Err(e) => ParetoPoint {
                    target,
                    result: None,
                    upper: f64::INFINITY,
                    lower: f64::NEG_INFINITY,
                    source: format!("failed: {e}"),
                },
            }
        })
        .collect();
    share_bounds(&mut points);
    Ok(points)
}

/// Traces cost against a ladder of emission targets for one framework:
/// the unconstrained baseline fixes the scale, targets are the baseline's
/// heaviest year scaled by `k / resolution` for `k = 1..=resolution`, and
/// the rungs then solve as in [`pareto_sweep_targets`].
pub fn pareto_sweep(
    framework: &str,
    hub: &Hub,
    topo: &Topology,
    base: &ScenarioSet,
    econ: &EconomicConfig,
    opts: &FrameworkOptions,
    resolution: usize,
) -> Result<Vec<ParetoPoint>, FrameworkError> {
    if resolution == 0 {
        return Err(FrameworkError::Solver("a sweep needs a resolution of at least 1".into()));
    }
    let baseline = sweep_baseline(framework, hub, topo, base, econ, opts)?;
    let scale = baseline.max_year_emissions;
    let targets: Vec<f64> = (1..=resolution)
        .map(|k| scale * k as f64 / resolution as f64)
        .collect();
    pareto_sweep_targets(framework, hub, topo, base, econ, opts, &targets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{two_boiler, two_boiler_scenarios};
    use crate::operation::DispatchMode;
    use crate::solver::LpOptions;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-6 * b.abs().max(1.0)
    }

    fn plain_eval() -> EvalOptions {
        EvalOptions {
            discount_rate: 0.0,
            carbon_price: 0.0,
            mode: DispatchMode::CostThenEmissions,
            lp: LpOptions::default(),
        }
    }

    fn plan(caps: [f64; 2], units: [f64; 2]) -> InvestmentPlan {
        InvestmentPlan {
            connection_caps: caps.to_vec(),
            converter_units: units.to_vec(),
            storage_power: vec![],
            storage_energy: vec![],
        }
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

    #[test]
    fn the_search_walks_from_electric_to_mixed() {
        // From the all-electric plan under a 100 t cap, no single grid
        // step helps: a gas boiler alone adds investment without fuel,
        // and gas capacity alone has nothing to burn through. The paired
        // move finds both at once and stops exactly where the next gas
        // step would bust the cap.
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let years = vec![two_boiler_scenarios()];
        let start = plan([3.75, 0.0], [1.0, 0.0]);

        let (stalled, steps) =
            neighbor_search(&hub, &topo, &years, &start, 1, Some(100.0), &plain_eval())
                .expect("order one");
        assert_eq!(stalled, start, "single steps cannot leave the electric plan");
        assert!(steps.is_empty());

        let (best, steps) =
            neighbor_search(&hub, &topo, &years, &start, 2, Some(100.0), &plain_eval())
                .expect("order two");
        assert_eq!(best.converter_units, vec![1.0, 1.0]);
        assert_eq!(best.connection_caps[1], 0.25);
        assert_eq!(steps.len(), 1);
        assert!(close(steps[0].total, 67_500.0), "total {}", steps[0].total);
        assert!(close(steps[0].max_year_emissions, 730.0 * (0.1 + 0.091 * 0.25)));
        let mut last = f64::INFINITY;
        for s in &steps {
            assert!(s.total < last, "every accepted move must cut cost");
            last = s.total;
        }
    }

    #[test]
    fn an_optimal_start_stays_put() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let years = vec![two_boiler_scenarios()];
        let start = plan([3.75, 0.25], [1.0, 1.0]);
        let (best, steps) =
            neighbor_search(&hub, &topo, &years, &start, 2, Some(100.0), &plain_eval())
                .expect("search");
        assert_eq!(best, start);
        assert!(steps.is_empty());
    }

    #[test]
    fn a_hopeless_start_is_returned_unchanged() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let years = vec![two_boiler_scenarios()];
        // Nothing built: the load cannot be served at all.
        let dead = InvestmentPlan::zero(&hub);
        let (back, steps) =
            neighbor_search(&hub, &topo, &years, &dead, 2, None, &plain_eval()).expect("search");
        assert_eq!(back, dead);
        assert!(steps.is_empty());
        // Feasible network, but already over the cap: also handed back.
        let hot = plan([3.75, 0.0], [1.0, 0.0]);
        let (back, steps) =
            neighbor_search(&hub, &topo, &years, &hot, 2, Some(50.0), &plain_eval())
                .expect("search");
        assert_eq!(back, hot);
        assert!(steps.is_empty());
    }

    #[test]
    fn the_warm_start_pick_follows_the_price() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let years = vec![two_boiler_scenarios()];
        let gas = plan([0.0, 1.25], [0.0, 1.0]);
        let electric = plan([3.75, 0.0], [1.0, 0.0]);
        let pool = vec![gas.clone(), electric.clone()];

        let free = pick_warm_start(&hub, &topo, &years, &pool, 0.0, &plain_eval()).expect("pick");
        assert_eq!(free, gas, "with free carbon the cheap dirty plan wins");
        let dear =
            pick_warm_start(&hub, &topo, &years, &pool, 1000.0, &plain_eval()).expect("pick");
        assert_eq!(dear, electric, "at 1000 yen/t the clean plan wins");

        let only = pick_warm_start(&hub, &topo, &years, &pool[..1].to_vec(), 5.0, &plain_eval())
            .expect("pick");
        assert_eq!(only, gas, "a pool of one picks that one");

        let mixed_pool = vec![InvestmentPlan::zero(&hub), electric.clone()];
        let alive =
            pick_warm_start(&hub, &topo, &years, &mixed_pool, 0.0, &plain_eval()).expect("pick");
        assert_eq!(alive, electric, "plans that cannot serve are skipped");

        let err = pick_warm_start(
            &hub,
            &topo,
            &years,
            &[InvestmentPlan::zero(&hub)],
            0.0,
            &plain_eval(),
        );
        assert!(err.is_err(), "an all-dead pool is an error");
    }

    #[test]
    fn the_frontier_inherits_across_targets() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let points = pareto_sweep(
            "f1",
            &hub,
            &topo,
            &set,
            &flat_econ(None),
            &FrameworkOptions::default(),
            2,
        )
        .expect("sweep");
        assert_eq!(points.len(), 2);
        assert!(close(points[0].target, 0.5 * points[1].target));
        assert!(close(points[0].upper, 74_000.0), "tight rung {}", points[0].upper);
        assert_eq!(points[0].source, "solved");
        assert!(points[1].upper < 42_000.0, "loose rung {}", points[1].upper);
        assert_eq!(points[1].source, "solved");
        for p in &points {
            assert!(p.gap() <= 1e-6, "rung at {} has gap {}", p.target, p.gap());
            let r = p.result.as_ref().expect("both rungs solve");
            assert!(r.max_year_emissions <= p.target + 1e-6 * p.target);
        }

        // Substitution rules, exercised directly: a cheaper tight-rung
        // answer stands in for a looser rung, and a looser rung's proven
        // bound transfers to a tighter one.
        let donor = points[0].result.clone().expect("donor result");
        let mut synthetic = vec![
            ParetoPoint {
                target: 100.0,
                upper: 74_000.0,
                lower: 74_000.0,
                result: Some(donor),
                source: "solved".into(),
            },
            ParetoPoint {
                target: 150.0,
                upper: 80_000.0,
                lower: f64::NEG_INFINITY,
                result: None,
                source: "failed: node budget".into(),
            },
        ];
        share_bounds(&mut synthetic);
        assert_eq!(synthetic[1].source, "inherited-from-tighter");
        assert!(close(synthetic[1].upper, 74_000.0));
        assert!(synthetic[1].result.is_some());

        let mut synthetic = vec![
            ParetoPoint {
                target: 50.0,
                upper: f64::INFINITY,
                lower: f64::NEG_INFINITY,
                result: None,
                source: "failed: cap below floor".into(),
            },
            ParetoPoint {
                target: 100.0,
                upper: 74_000.0,
                lower: 74_000.0,
                result: None,
                source: "solved".into(),
            },
        ];
        share_bounds(&mut synthetic);
        assert_eq!(synthetic[0].source, "bound-from-looser");
        assert!(close(synthetic[0].lower, 74_000.0));
        assert!(synthetic[0].upper.is_infinite(), "no solution can cross to a tighter rung");
    }

    #[test]
    fn a_sweep_needs_a_resolution() {
        let hub = two_boiler();
        let topo = hub.topology().unwrap();
        let set = two_boiler_scenarios();
        let out = pareto_sweep(
            "f1",
            &hub,
            &topo,
            &set,
            &flat_econ(None),
            &FrameworkOptions::default(),
            0,
        );
        assert!(out.is_err());
    }
}
