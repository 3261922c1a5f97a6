//! Branch and bound for mixed-integer models.
//!
//! Best-first search on the LP relaxation bound with deterministic
//! tie-breaking (older node first), branching on the most fractional integer
//! variable (lowest id on ties). Every incumbent — whether found by the
//! search itself, handed in as a warm start, or proposed by the improvement
//! hook — is validated the same way: integer variables are fixed to exact
//! integers and the continuous completion is re-solved, so no external input
//! can ever smuggle an infeasible or mispriced point into the result.
//!
//! A relaxation point that is integral only within tolerance does not close
//! its node by itself: a constraint sitting on a knife edge can admit 1-1e-7
//! but reject exactly 1, so the node is fathomed only when the exact-integer
//! completion confirms the relaxation bound. Otherwise the entry whose
//! rounding moved is branched on exactly, isolating the rejected value while
//! the rest of the subtree stays open.

use super::model::{Model, VarId};
use super::simplex::{solve_relaxation, Basis, LpError, LpOptions};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub lp: LpOptions,
    /// Maximum number of branch-and-bound nodes to process.
    pub node_budget: usize,
    /// Distance from an integer below which a value counts as integral.
    pub int_tol: f64,
    /// Relative gap at which the search stops and reports optimality.
    pub gap_tol: f64,
    /// Cap on improvement-hook invocations per solve.
    pub hook_budget: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        MilpOptions {
            lp: LpOptions::default(),
            node_budget: 100_000,
            int_tol: 1e-6,
            gap_tol: 1e-9,
            hook_budget: 256,
        }
    }
}

/// A candidate point offered to the solver before the search starts.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub label: String,
    /// Full-length variable vector; only the integer entries are binding,
    /// the continuous part is re-optimized.
    pub values: Vec<f64>,
}

impl WarmStart {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        WarmStart {
            label: label.into(),
            values,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    /// Incumbent proven optimal within the gap tolerance.
    Optimal,
    /// Search stopped on a budget; `bound` is still a valid lower bound.
    BudgetExhausted,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Best point found, integer entries exactly integral. None when no
    /// feasible point was found.
    pub values: Option<Vec<f64>>,
    /// Objective of `values` (infinity when none).
    pub objective: f64,
    /// Proven lower bound on the optimum.
    pub bound: f64,
    /// `(objective - bound) / max(1, |objective|)`.
    pub gap: f64,
    pub nodes: usize,
    pub lp_pivots: usize,
    /// Per warm start: accepted objective or the reason it was rejected.
    pub warm_start_report: Vec<(String, Result<f64, String>)>,
    pub hook_calls: usize,
    pub hook_accepted: usize,
}

impl MilpSolution {
    /// The incumbent vector, for callers that already checked the status.
    pub fn expect_values(&self) -> &[f64] {
        self.values
            .as_deref()
            .expect("no incumbent; check MilpStatus before reading values")
    }
}

/// Improvement hook: given the point that triggered the call (the root
/// relaxation or a fresh incumbent), may propose a better full-length point.
/// Proposals are validated by fix-and-resolve before acceptance.
pub type ImprovementHook<'a> = &'a mut dyn FnMut(&[f64]) -> Option<Vec<f64>>;

struct Node {
    bound: f64,
    id: usize,
    overrides: Vec<(VarId, f64, f64)>,
    basis: Rc<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so pop() yields the lowest bound,
    // breaking ties toward the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

pub fn solve_milp(
    model: &Model,
    options: &MilpOptions,
    warm_starts: &[WarmStart],
    hook: Option<ImprovementHook<'_>>,
) -> MilpSolution {
    Search {
        model,
        opts: options,
        int_ids: model.integer_var_ids(),
        incumbent: None,
        hook,
        hook_calls: 0,
        hook_accepted: 0,
        lp_pivots: 0,
        nodes: 0,
        warm_report: Vec::new(),
    }
    .run(warm_starts)
}

struct Search<'a, 'h> {
    model: &'a Model,
    opts: &'a MilpOptions,
    int_ids: Vec<VarId>,
    incumbent: Option<(Vec<f64>, f64)>,
    hook: Option<ImprovementHook<'h>>,
    hook_calls: usize,
    hook_accepted: usize,
    lp_pivots: usize,
    nodes: usize,
    warm_report: Vec<(String, Result<f64, String>)>,
}

impl<'a, 'h> Search<'a, 'h> {
    fn run(mut self, warm_starts: &[WarmStart]) -> MilpSolution {
        for ws in warm_starts {
            let outcome = self.offer(&ws.values, None);
            if let Ok(obj) = outcome {
                self.warm_report.push((ws.label.clone(), Ok(obj)));
            } else {
                self.warm_report.push((ws.label.clone(), outcome));
            }
        }

        let root = match solve_relaxation(self.model, &self.opts.lp, None, &[]) {
            Ok(sol) => sol,
            Err(LpError::Infeasible { .. }) => {
                return self.finish(MilpStatus::Infeasible, f64::INFINITY)
            }
            Err(LpError::Unbounded { .. }) => {
                return self.finish(MilpStatus::Unbounded, f64::NEG_INFINITY)
            }
            Err(_) => return self.finish(MilpStatus::BudgetExhausted, f64::NEG_INFINITY),
        };
        self.lp_pivots += root.pivots;
        self.nodes += 1;

        // Root hook call: triggered by the incumbent if a warm start supplied
        // one, otherwise by the (possibly fractional) relaxation point.
        let root_values = root.values.clone();
        self.run_hook(&root_values);

        let mut heap: BinaryHeap<Node> = BinaryHeap::new();
        let mut next_id = 0usize;
        let mut stall_lb = f64::INFINITY;

        let root_open = if self.most_fractional(&root.values).is_some() {
            true
        } else {
            // Integral root: validated through fix-and-resolve so the stored
            // integers are exact. The node stays open unless the completion
            // confirms the bound — a knife-edge point can be feasible at
            // 1 - 1e-7 yet infeasible (or costlier) at exactly 1.
            let completed = self.offer(&root.values, Some(&root.basis));
            if self.confirms(&completed, root.objective) {
                false
            } else if self.rounding_split(&root.values, &[]).is_some() {
                true
            } else {
                stall_lb = stall_lb.min(root.objective);
                false
            }
        };
        if root_open {
            heap.push(Node {
                bound: root.objective,
                id: next_id,
                overrides: Vec::new(),
                basis: Rc::new(root.basis),
            });
            next_id += 1;
        } else {
            let lb = root.objective.min(stall_lb);
            return self.finish_with_bound(lb, &heap, stall_lb);
        }

        while let Some(node) = heap.pop() {
            let lb = node
                .bound
                .min(heap.peek().map(|n| n.bound).unwrap_or(f64::INFINITY))
                .min(stall_lb);
            if let Some((_, inc)) = &self.incumbent {
                let gap = (inc - lb) / inc.abs().max(1.0);
                if gap <= self.opts.gap_tol {
                    return self.finish_with_bound(lb, &heap, stall_lb);
                }
                if node.bound >= inc - self.opts.gap_tol * inc.abs().max(1.0) {
                    continue; // cannot improve on the incumbent
                }
            }
            if self.nodes >= self.opts.node_budget {
                let lb = lb.min(node.bound);
                return self.finish_with_bound(lb, &heap, stall_lb);
            }

            // Re-solve from the node's own basis; this is a handful of pivots
            // at most and avoids storing full value vectors per node.
            let sol = match solve_relaxation(
                self.model,
                &self.opts.lp,
                Some(&node.basis),
                &node.overrides,
            ) {
                Ok(sol) => sol,
                Err(LpError::Infeasible { .. }) => continue,
                Err(_) => {
                    stall_lb = stall_lb.min(node.bound);
                    continue;
                }
            };
            self.lp_pivots += sol.pivots;
            self.nodes += 1;

            let picked = match self.most_fractional(&sol.values) {
                Some(pick) => Some(pick),
                None => {
                    // Integral within tolerance. Fathoming is only sound once
                    // the exact-integer completion confirms the relaxation
                    // bound; otherwise the rounding moved off a knife edge
                    // and the subtree may still hold the optimum at some
                    // other assignment, so split the offending entry exactly.
                    let completed = self.offer(&sol.values, Some(&sol.basis));
                    if self.confirms(&completed, sol.objective) {
                        None
                    } else {
                        let split = self.rounding_split(&sol.values, &node.overrides);
                        if split.is_none() {
                            // Exact integers disagreeing with their own
                            // completion: numerical trouble. Keep the bound
                            // honest instead of pretending the node closed.
                            stall_lb = stall_lb.min(node.bound);
                        }
                        split
                    }
                }
            };
            let Some((var, x)) = picked else { continue };

            let (lo, hi) = self.effective_bounds(var, &node.overrides);
            let shared = Rc::new(sol.basis);
            for (clo, chi) in [(lo, x.floor()), (x.ceil(), hi)] {
                if clo > chi {
                    continue;
                }
                let mut overrides = node.overrides.clone();
                overrides.push((var, clo, chi));
                match solve_relaxation(self.model, &self.opts.lp, Some(&shared), &overrides) {
                    Ok(child) => {
                        self.lp_pivots += child.pivots;
                        if self.most_fractional(&child.values).is_some() {
                            let dominated = self
                                .incumbent
                                .as_ref()
                                .map(|(_, inc)| {
                                    child.objective
                                        >= inc - self.opts.gap_tol * inc.abs().max(1.0)
                                })
                                .unwrap_or(false);
                            if !dominated {
                                heap.push(Node {
                                    bound: child.objective,
                                    id: next_id,
                                    overrides,
                                    basis: Rc::new(child.basis),
                                });
                                next_id += 1;
                            }
                        } else {
                            let completed = self.offer(&child.values, Some(&child.basis));
                            if !self.confirms(&completed, child.objective) {
                                // Unconfirmed rounding: keep the child open so
                                // a node-level visit can split the offending
                                // entry, unless the bound already rules the
                                // subtree out.
                                let dominated = self
                                    .incumbent
                                    .as_ref()
                                    .map(|(_, inc)| {
                                        child.objective
                                            >= inc - self.opts.gap_tol * inc.abs().max(1.0)
                                    })
                                    .unwrap_or(false);
                                if dominated {
                                    // Sound: the subtree cannot improve on
                                    // the incumbent.
                                } else if self.rounding_split(&child.values, &overrides).is_some() {
                                    heap.push(Node {
                                        bound: child.objective,
                                        id: next_id,
                                        overrides,
                                        basis: Rc::new(child.basis),
                                    });
                                    next_id += 1;
                                } else {
                                    stall_lb = stall_lb.min(child.objective);
                                }
                            }
                        }
                    }
                    Err(LpError::Infeasible { .. }) => {}
                    Err(_) => stall_lb = stall_lb.min(node.bound),
                }
            }
        }

        self.finish_with_bound(f64::INFINITY, &heap, stall_lb)
    }

    /// Effective bounds of a variable under a node's override stack
    /// (later entries win, matching how the LP applies them).
    fn effective_bounds(&self, var: VarId, overrides: &[(VarId, f64, f64)]) -> (f64, f64) {
        let v = self.model.var(var);
        let mut lo = v.lower;
        let mut hi = v.upper;
        for &(o, l, h) in overrides {
            if o == var {
                lo = l;
                hi = h;
            }
        }
        (lo, hi)
    }

    /// Whether an exact-integer completion confirms a relaxation bound: it
    /// succeeded and costs no more than the bound (small relative slack for
    /// solver noise). Only then may an integral-within-tolerance node close.
    fn confirms(&self, completed: &Result<f64, String>, bound: f64) -> bool {
        matches!(completed, Ok(obj) if *obj <= bound + 1e-7 * (1.0 + bound.abs()))
    }

    /// Integer entry farthest from its nearest integer among those not
    /// exactly integral: the branch point when a within-tolerance "integral"
    /// point fails its exact completion. Only entries whose floor/ceil split
    /// strictly shrinks both children qualify, so bound-noise values (1e-16
    /// past an endpoint) cannot reproduce the parent and loop forever.
    fn rounding_split(
        &self,
        x: &[f64],
        overrides: &[(VarId, f64, f64)],
    ) -> Option<(VarId, f64)> {
        let mut best: Option<(VarId, f64, f64)> = None;
        for &v in &self.int_ids {
            let frac = (x[v] - x[v].round()).abs();
            if frac == 0.0 {
                continue;
            }
            let (lo, hi) = self.effective_bounds(v, overrides);
            let (fl, ce) = (x[v].floor(), x[v].ceil());
            if fl < lo || ce > hi || fl >= hi || ce <= lo {
                continue;
            }
            let better = best.map(|(_, _, bf)| frac > bf).unwrap_or(true);
            if better {
                best = Some((v, x[v], frac));
            }
        }
        best.map(|(v, x, _)| (v, x))
    }

    /// Most fractional integer variable, or None when the point is integral.
    fn most_fractional(&self, x: &[f64]) -> Option<(VarId, f64)> {
        let mut best: Option<(VarId, f64, f64)> = None;
        for &v in &self.int_ids {
            let frac = (x[v] - x[v].round()).abs();
            if frac > self.opts.int_tol {
                let better = best.map(|(_, _, bf)| frac > bf + 1e-15).unwrap_or(true);
                if better {
                    best = Some((v, x[v], frac));
                }
            }
        }
        best.map(|(v, x, _)| (v, x))
    }

    /// Validates a candidate by fixing its integer entries to exact integers
    /// and re-solving the continuous completion; accepts it as incumbent if
    /// strictly better. Returns the completion objective or a reason.
    fn offer(&mut self, candidate: &[f64], warm: Option<&Basis>) -> Result<f64, String> {
        if candidate.len() != self.model.var_count() {
            return Err(format!(
                "length mismatch: got {}, model has {} variables",
                candidate.len(),
                self.model.var_count()
            ));
        }
        let mut fixes = Vec::with_capacity(self.int_ids.len());
        for &v in &self.int_ids {
            let x = candidate[v];
            let r = x.round();
            if (x - r).abs() > self.opts.int_tol {
                return Err(format!("variable {} is not integral ({})", v, x));
            }
            let var = self.model.var(v);
            if r < var.lower - 1e-9 || r > var.upper + 1e-9 {
                return Err(format!(
                    "variable {} value {} outside bounds [{}, {}]",
                    v, r, var.lower, var.upper
                ));
            }
            fixes.push((v, r, r));
        }
        match solve_relaxation(self.model, &self.opts.lp, warm, &fixes) {
            Ok(sol) => {
                self.lp_pivots += sol.pivots;
                let obj = sol.objective;
                let better = self
                    .incumbent
                    .as_ref()
                    .map(|(_, inc)| obj < inc - 1e-12 * (1.0 + inc.abs()))
                    .unwrap_or(true);
                if better {
                    self.incumbent = Some((sol.values.clone(), obj));
                    let trigger = sol.values;
                    self.run_hook(&trigger);
                }
                Ok(obj)
            }
            Err(LpError::Infeasible { .. }) => Err("completion infeasible".into()),
            Err(LpError::Unbounded { .. }) => Err("completion unbounded".into()),
            Err(e) => Err(format!("completion failed: {e}")),
        }
    }

    /// One hook invocation per triggering event; an accepted proposal is a
    /// new incumbent and triggers the next call through `offer`.
    fn run_hook(&mut self, trigger: &[f64]) {
        if self.hook.is_none() || self.hook_calls >= self.opts.hook_budget {
            return;
        }
        self.hook_calls += 1;
        let proposal = (self.hook.as_mut().unwrap())(trigger);
        if let Some(p) = proposal {
            let before = self.incumbent.as_ref().map(|(_, o)| *o);
            if self.offer(&p, None).is_ok() {
                let after = self.incumbent.as_ref().map(|(_, o)| *o);
                if after != before {
                    self.hook_accepted += 1;
                }
            }
        }
    }

    fn finish(self, status: MilpStatus, bound: f64) -> MilpSolution {
        let (values, objective) = match &self.incumbent {
            Some((v, o)) => (Some(v.clone()), *o),
            None => (None, f64::INFINITY),
        };
        let gap = if values.is_some() {
            ((objective - bound) / objective.abs().max(1.0)).max(0.0)
        } else {
            f64::INFINITY
        };
        MilpSolution {
            status,
            values,
            objective,
            bound,
            gap,
            nodes: self.nodes,
            lp_pivots: self.lp_pivots,
            warm_start_report: self.warm_report,
            hook_calls: self.hook_calls,
            hook_accepted: self.hook_accepted,
        }
    }

    /// Final bookkeeping once the search stops: the proven bound is the best
    /// of the open nodes, any stalled nodes, and the incumbent itself.
    fn finish_with_bound(
        self,
        lb_hint: f64,
        heap: &BinaryHeap<Node>,
        stall_lb: f64,
    ) -> MilpSolution {
        let open = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        let mut lb = lb_hint.min(open).min(stall_lb);
        match &self.incumbent {
            Some((_, inc)) => {
                lb = lb.min(*inc);
                let gap = ((*inc - lb) / inc.abs().max(1.0)).max(0.0);
                let status = if gap <= self.opts.gap_tol {
                    MilpStatus::Optimal
                } else {
                    MilpStatus::BudgetExhausted
                };
                self.finish(status, lb)
            }
            None => {
                if lb.is_infinite() && lb > 0.0 {
                    self.finish(MilpStatus::Infeasible, lb)
                } else {
                    self.finish(MilpStatus::BudgetExhausted, lb)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::model::{Model, RowSense, VarKind};

    fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> Model {
        let mut m = Model::new("knapsack");
        let mut terms = Vec::new();
        for (i, (&p, &w)) in values.iter().zip(weights).enumerate() {
            let v = m.add_var(format!("take{i}"), VarKind::Binary, 0.0, 1.0, -p);
            terms.push((v, w));
        }
        m.add_row("cap", RowSense::Le, terms, cap);
        m
    }

    /// Exhaustive reference for small knapsacks.
    fn knapsack_best(values: &[f64], weights: &[f64], cap: f64) -> f64 {
        let n = values.len();
        let mut best = 0.0f64;
        for mask in 0u32..(1 << n) {
            let mut w = 0.0;
            let mut p = 0.0;
            for i in 0..n {
                if mask >> i & 1 == 1 {
                    w += weights[i];
                    p += values[i];
                }
            }
            if w <= cap {
                best = best.max(p);
            }
        }
        -best
    }

    const P10: [f64; 10] = [9.0, 14.0, 5.0, 11.0, 7.0, 3.0, 12.0, 6.0, 10.0, 8.0];
    const W10: [f64; 10] = [6.0, 9.0, 3.0, 7.0, 5.0, 2.0, 8.0, 4.0, 6.5, 5.5];

    #[test]
    fn knapsack_matches_enumeration() {
        let m = knapsack(&P10, &W10, 23.0);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        let expect = knapsack_best(&P10, &W10, 23.0);
        assert!(
            (sol.objective - expect).abs() < 1e-9,
            "got {}, want {}",
            sol.objective,
            expect
        );
        let x = sol.expect_values();
        for &v in x {
            assert!((v - v.round()).abs() < 1e-12, "non-integral entry {v}");
        }
        let weight: f64 = x.iter().zip(&W10).map(|(x, w)| x * w).sum();
        assert!(weight <= 23.0 + 1e-9);
        assert!(sol.gap <= 1e-9);
    }

    #[test]
    fn larger_knapsack_closes_gap_within_node_budget() {
        let p: Vec<f64> = (0..12).map(|i| ((i * 37) % 19 + 3) as f64).collect();
        let w: Vec<f64> = (0..12).map(|i| ((i * 23) % 17 + 2) as f64).collect();
        let cap = w.iter().sum::<f64>() * 0.45;
        let m = knapsack(&p, &w, cap);
        let opts = MilpOptions {
            node_budget: 1 << 13,
            ..MilpOptions::default()
        };
        let sol = solve_milp(&m, &opts, &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!(sol.nodes <= 1 << 13);
        let expect = knapsack_best(&p, &w, cap);
        assert!((sol.objective - expect).abs() < 1e-9);
        assert!(sol.gap <= 1e-9);
    }

    #[test]
    fn fractional_relaxation_forces_branching() {
        // Relaxation packs 1.5 units; integrality allows only one.
        let mut m = Model::new("pair");
        let a = m.add_var("a", VarKind::Binary, 0.0, 1.0, -1.0);
        let b = m.add_var("b", VarKind::Binary, 0.0, 1.0, -1.0);
        m.add_row("cap", RowSense::Le, vec![(a, 2.0), (b, 2.0)], 3.0);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9);
        assert!(sol.nodes >= 2, "expected branching, got {} nodes", sol.nodes);
    }

    #[test]
    fn general_integer_bounds_tighten() {
        let mut m = Model::new("ints");
        let x = m.add_var("x", VarKind::Integer, 0.0, 10.0, -1.0);
        let y = m.add_var("y", VarKind::Integer, 0.0, 10.0, -1.0);
        m.add_row("cap", RowSense::Le, vec![(x, 1.0), (y, 1.0)], 2.5);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.objective + 2.0).abs() < 1e-9);
        let v = sol.expect_values();
        assert!((v[0] + v[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_accepted_and_reported() {
        let m = knapsack(&P10, &W10, 23.0);
        // Solve once to learn the optimum, then hand it in as a warm start.
        let first = solve_milp(&m, &MilpOptions::default(), &[], None);
        let ws = WarmStart::new("known-best", first.expect_values().to_vec());
        let sol = solve_milp(&m, &MilpOptions::default(), &[ws], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert_eq!(sol.warm_start_report.len(), 1);
        let (label, outcome) = &sol.warm_start_report[0];
        assert_eq!(label, "known-best");
        let obj = *outcome.as_ref().expect("warm start should complete");
        assert!((obj - first.objective).abs() < 1e-9);
        assert!((sol.objective - first.objective).abs() < 1e-9);
    }

    #[test]
    fn warm_start_rejections_carry_reasons() {
        let m = knapsack(&P10, &W10, 23.0);
        let n = m.var_count();
        let bad = vec![
            WarmStart::new("short", vec![0.0; n - 1]),
            WarmStart::new("fractional", {
                let mut v = vec![0.0; n];
                v[0] = 0.5;
                v
            }),
            WarmStart::new("out-of-bounds", {
                let mut v = vec![0.0; n];
                v[0] = 3.0;
                v
            }),
            WarmStart::new("overweight", vec![1.0; n]),
        ];
        let sol = solve_milp(&m, &MilpOptions::default(), &bad, None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        let reasons: Vec<&str> = sol
            .warm_start_report
            .iter()
            .map(|(_, r)| r.as_ref().err().map(|s| s.as_str()).unwrap_or("ok"))
            .collect();
        assert!(reasons[0].contains("length"));
        assert!(reasons[1].contains("not integral"));
        assert!(reasons[2].contains("bounds"));
        assert!(reasons[3].contains("infeasible"));
    }

    #[test]
    fn hook_proposals_are_validated_not_trusted() {
        let m = knapsack(&P10, &W10, 23.0);
        let expect = knapsack_best(&P10, &W10, 23.0);
        let n = m.var_count();
        // A hostile hook: wrong lengths, infeasible points, and non-integral
        // garbage. None of it may corrupt the result.
        let mut calls = 0usize;
        let mut hostile = |_: &[f64]| -> Option<Vec<f64>> {
            calls += 1;
            Some(match calls % 3 {
                0 => vec![1.0; n],       // violates the capacity row
                1 => vec![0.25; n],      // not integral
                _ => vec![0.0; n + 2],   // wrong length
            })
        };
        let sol = solve_milp(&m, &MilpOptions::default(), &[], Some(&mut hostile));
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.objective - expect).abs() < 1e-9);
        assert_eq!(sol.hook_accepted, 0);
        assert!(sol.hook_calls >= 1);
        assert!(calls >= 1);
    }

    #[test]
    fn helpful_hook_shortcuts_the_search() {
        let m = knapsack(&P10, &W10, 23.0);
        let reference = solve_milp(&m, &MilpOptions::default(), &[], None);
        let best = reference.expect_values().to_vec();
        let mut helpful = move |_: &[f64]| Some(best.clone());
        let sol = solve_milp(&m, &MilpOptions::default(), &[], Some(&mut helpful));
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.objective - reference.objective).abs() < 1e-9);
        assert_eq!(sol.hook_accepted, 1);
        assert!(sol.nodes <= reference.nodes);
    }

    #[test]
    fn infeasible_model_reported() {
        let mut m = Model::new("inf");
        let x = m.add_var("x", VarKind::Binary, 0.0, 1.0, 1.0);
        m.add_row("impossible", RowSense::Ge, vec![(x, 1.0)], 2.0);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Infeasible);
        assert!(sol.values.is_none());
        assert!(sol.bound.is_infinite() && sol.bound > 0.0);
    }

    #[test]
    fn unbounded_relaxation_reported() {
        let mut m = Model::new("unb");
        let b = m.add_var("b", VarKind::Binary, 0.0, 1.0, 0.0);
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, -1.0);
        m.add_row("tie", RowSense::Le, vec![(b, 1.0), (x, -1.0)], 1.0);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Unbounded);
    }

    #[test]
    fn pure_lp_passes_through() {
        let mut m = Model::new("lp");
        let x = m.add_var("x", VarKind::Continuous, 0.0, 4.0, -1.0);
        m.add_row("pad", RowSense::Le, vec![(x, 1.0)], 10.0);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!((sol.objective + 4.0).abs() < 1e-9);
        assert_eq!(sol.nodes, 1);
    }

    #[test]
    fn node_budget_yields_valid_bound() {
        let p: Vec<f64> = (0..14).map(|i| ((i * 31) % 23 + 2) as f64).collect();
        let w: Vec<f64> = (0..14).map(|i| ((i * 29) % 19 + 3) as f64).collect();
        let cap = w.iter().sum::<f64>() * 0.5;
        let m = knapsack(&p, &w, cap);
        let starved = MilpOptions {
            node_budget: 3,
            ..MilpOptions::default()
        };
        let sol = solve_milp(&m, &starved, &[], None);
        let full = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(full.status, MilpStatus::Optimal);
        // Bound from the starved run must bracket the true optimum.
        assert!(sol.bound <= full.objective + 1e-9);
        if let Some(_) = sol.values {
            assert!(sol.objective >= full.objective - 1e-9);
        }
    }

    #[test]
    fn determinism_identical_runs() {
        let m = knapsack(&P10, &W10, 23.0);
        let a = solve_milp(&m, &MilpOptions::default(), &[], None);
        let b = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.lp_pivots, b.lp_pivots);
        assert_eq!(a.expect_values(), b.expect_values());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    /// Knife-edge capacity: the row admits y = 1 - 5e-7 — integral within
    /// tolerance — but rejects exactly 1, so the rounded completion is
    /// infeasible. The node must not be fathomed on that failure; the true
    /// optimum sits elsewhere in the same subtree (z = 1, objective -5).
    fn knife_edge() -> Model {
        let mut m = Model::new("knife");
        let w = m.add_var("w", VarKind::Binary, 0.0, 1.0, -3.0);
        let x = m.add_var("x", VarKind::Binary, 0.0, 1.0, -1.0);
        let y = m.add_var("y", VarKind::Binary, 0.0, 1.0, -10.0);
        let z = m.add_var("z", VarKind::Binary, 0.0, 1.0, -5.0);
        m.add_row("half", RowSense::Le, vec![(w, 2.0)], 1.0);
        m.add_row("edge", RowSense::Le, vec![(y, 1.0), (z, 0.6)], 1.0 - 5e-7);
        m.add_row("xy", RowSense::Le, vec![(x, 1.0), (y, 1.0)], 1.0);
        m.add_row("xz", RowSense::Le, vec![(x, 1.0), (z, 1.0)], 1.0);
        m
    }

    #[test]
    fn knife_edge_rounding_keeps_the_subtree_alive() {
        let sol = solve_milp(&knife_edge(), &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!(
            (sol.objective + 5.0).abs() < 1e-9,
            "got {}, want -5",
            sol.objective
        );
        assert_eq!(sol.expect_values(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(sol.gap <= 1e-9);
    }

    #[test]
    fn integral_root_with_failing_completion_still_solves() {
        // Without the fractional decoy the root relaxation itself lands on
        // the knife edge; the search must recover instead of giving up.
        let mut m = Model::new("knife-root");
        let x = m.add_var("x", VarKind::Binary, 0.0, 1.0, -1.0);
        let y = m.add_var("y", VarKind::Binary, 0.0, 1.0, -10.0);
        let z = m.add_var("z", VarKind::Binary, 0.0, 1.0, -5.0);
        m.add_row("edge", RowSense::Le, vec![(y, 1.0), (z, 0.6)], 1.0 - 5e-7);
        m.add_row("xy", RowSense::Le, vec![(x, 1.0), (y, 1.0)], 1.0);
        m.add_row("xz", RowSense::Le, vec![(x, 1.0), (z, 1.0)], 1.0);
        let sol = solve_milp(&m, &MilpOptions::default(), &[], None);
        assert_eq!(sol.status, MilpStatus::Optimal);
        assert!(
            (sol.objective + 5.0).abs() < 1e-9,
            "got {}, want -5",
            sol.objective
        );
        assert_eq!(sol.expect_values(), &[0.0, 0.0, 1.0]);
        assert!(sol.gap <= 1e-9);
    }
}
