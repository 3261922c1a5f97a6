//! Two-phase primal simplex on a dense tableau.
//!
//! Construction: finite lower bounds are shifted out, free variables are
//! split into positive/negative parts, finite upper bounds become internal
//! rows, and every row receives an artificial column so the starting basis is
//! always the identity. Phase 1 minimizes the artificial sum; phase 2 the
//! real objective. Pricing is Dantzig's rule with lowest-index tie-breaks,
//! falling back to Bland's rule for good after a long run of degenerate
//! pivots so cycling cannot occur. Rows and the objective are scaled to unit
//! max-magnitude before solving; duals, reduced costs, and certificates are
//! mapped back to the model as written.
//!
//! Dual convention: `duals[i]` is the shadow price ∂objective/∂rhs of row `i`
//! exactly as the row appears in the model, so `<=` rows get non-positive and
//! `>=` rows non-negative duals at an optimum of a minimization.

use super::model::{Model, RowSense, VarId};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct LpOptions {
    /// Absolute feasibility tolerance on scaled rows.
    pub feas_tol: f64,
    /// Reduced-cost tolerance for optimality on the scaled objective.
    pub opt_tol: f64,
    /// Hard cap on simplex pivots before giving up.
    pub pivot_budget: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-8,
            opt_tol: 1e-9,
            pivot_budget: 200_000,
            bland_after: 2_000,
        }
    }
}

/// Identity of a basis member, stable across models of identical layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKey {
    /// Positive piece of a structural variable.
    VarPos(VarId),
    /// Negative piece of a split free variable.
    VarNeg(VarId),
    /// Slack of a model row.
    Slack(usize),
    /// Slack of an internal upper-bound row for a variable.
    UpperSlack(VarId),
    /// Artificial of a row (only present in degenerate/redundant rows).
    Artificial(usize),
}

/// A simplex basis, one key per row, reusable as a warm start.
#[derive(Debug, Clone)]
pub struct Basis(pub Vec<BasisKey>);

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Shadow price per model row, in as-written orientation.
    pub duals: Vec<f64>,
    /// Reduced cost per model variable (`c - Aᵀy`).
    pub reduced_costs: Vec<f64>,
    pub basis: Basis,
    pub pivots: usize,
}

#[derive(Debug, Error)]
pub enum LpError {
    /// No feasible point. `farkas[i]` is the phase-1 shadow price of row `i`;
    /// the phase-1 value is a convex function of the right-hand sides, so
    /// `phase1 + Σ farkas·Δrhs ≤ 0` is a valid requirement on any feasible
    /// perturbation.
    #[error("infeasible (phase-1 residual {phase1:.3e})")]
    Infeasible { phase1: f64, farkas: Vec<f64> },
    /// Objective unbounded below along `ray` (a feasible direction).
    #[error("unbounded")]
    Unbounded { ray: Vec<f64> },
    #[error("pivot budget exhausted after {0} pivots")]
    PivotBudget(usize),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Solves the continuous model. Integer variables must be fixed.
pub fn solve_lp(
    model: &Model,
    options: &LpOptions,
    warm: Option<&Basis>,
) -> Result<LpSolution, LpError> {
    for id in model.integer_var_ids() {
        let v = model.var(id);
        if v.lower != v.upper {
            return Err(LpError::InvalidModel(format!(
                "variable {} is integral and unfixed; relax or fix it first",
                id
            )));
        }
    }
    solve_relaxation(model, options, warm, &[])
}

/// Solves the model with integrality dropped and per-variable bound
/// overrides applied (used by branch and bound).
pub(crate) fn solve_relaxation(
    model: &Model,
    options: &LpOptions,
    warm: Option<&Basis>,
    bound_overrides: &[(VarId, f64, f64)],
) -> Result<LpSolution, LpError> {
    let std = StdForm::build(model, bound_overrides)?;
    let mut tab = Tableau::new(&std, options);
    if let Some(b) = warm {
        tab.crash_basis(b, &std);
    }
    tab.run(&std, model)
}

/// Which structural column(s) represent a model variable.
#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// Fixed by equal bounds; value recorded directly.
    Fixed(f64),
    /// `x = lower + z`.
    Shifted { col: usize, lower: f64 },
    /// `x = upper - z` (no finite lower bound).
    Mirrored { col: usize, upper: f64 },
    /// `x = z_pos - z_neg` (free).
    Split { pos: usize, neg: usize },
}

/// What a standard-form row means.
#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Model(usize),
    /// Internal `z_col <= span` row for the upper bound of a variable.
    Upper(VarId),
}

struct StdForm {
    ncols: usize,
    cols: Vec<ColMap>,
    /// Dense rows over structural columns, already scaled and oriented.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    sense: Vec<RowSense>, // Le or Eq only
    origin: Vec<RowOrigin>,
    /// Sign flip applied to the row relative to the model orientation.
    row_sign: Vec<f64>,
    row_scale: Vec<f64>,
    c: Vec<f64>,
    obj_scale: f64,
    nvars: usize,
}

impl StdForm {
    fn build(model: &Model, overrides: &[(VarId, f64, f64)]) -> Result<StdForm, LpError> {
        let nvars = model.var_count();
        let mut lower: Vec<f64> = model.vars().iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = model.vars().iter().map(|v| v.upper).collect();
        for &(v, lo, hi) in overrides {
            lower[v] = lo;
            upper[v] = hi;
        }
        for v in 0..nvars {
            if lower[v] > upper[v] + 1e-12 {
                return Err(LpError::Infeasible {
                    phase1: lower[v] - upper[v],
                    farkas: vec![0.0; model.row_count()],
                });
            }
        }

        let mut cols = Vec::with_capacity(nvars);
        let mut ncols = 0usize;
        for v in 0..nvars {
            let (lo, hi) = (lower[v], upper[v]);
            let map = if lo == hi || (hi - lo).abs() < 1e-14 {
                ColMap::Fixed(lo)
            } else if lo.is_finite() {
                let col = ncols;
                ncols += 1;
                ColMap::Shifted { col, lower: lo }
            } else if hi.is_finite() {
                let col = ncols;
                ncols += 1;
                ColMap::Mirrored { col, upper: hi }
            } else {
                let pos = ncols;
                let neg = ncols + 1;
                ncols += 2;
                ColMap::Split { pos, neg }
            };
            cols.push(map);
        }

        // Objective over structural columns plus the constant picked up from
        // fixed values and bound shifts. Clamping the scale at 1 keeps tiny
        // objectives as they are instead of inflating them.
        let max_obj = model
            .vars()
            .iter()
            .map(|v| v.obj.abs())
            .fold(0.0f64, f64::max);
        let obj_scale = if max_obj > 1.0 { max_obj } else { 1.0 };
        // The constant picked up by fixed values and bound shifts is dropped
        // here; the reported objective is recomputed from model data.
        let mut c = vec![0.0; ncols];
        for v in 0..nvars {
            let cv = model.var(v).obj / obj_scale;
            match cols[v] {
                ColMap::Fixed(_) => {}
                ColMap::Shifted { col, .. } => c[col] += cv,
                ColMap::Mirrored { col, .. } => c[col] -= cv,
                ColMap::Split { pos, neg } => {
                    c[pos] += cv;
                    c[neg] -= cv;
                }
            }
        }

        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut sense: Vec<RowSense> = Vec::new();
        let mut origin: Vec<RowOrigin> = Vec::new();
        let mut row_sign: Vec<f64> = Vec::new();
        let mut row_scale: Vec<f64> = Vec::new();

        for (i, row) in model.rows().iter().enumerate() {
            let mut dense = vec![0.0; ncols];
            let mut rhs = row.rhs;
            for &(v, coef) in &row.terms {
                match cols[v] {
                    ColMap::Fixed(val) => rhs -= coef * val,
                    ColMap::Shifted { col, lower } => {
                        dense[col] += coef;
                        rhs -= coef * lower;
                    }
                    ColMap::Mirrored { col, upper } => {
                        dense[col] -= coef;
                        rhs -= coef * upper;
                    }
                    ColMap::Split { pos, neg } => {
                        dense[pos] += coef;
                        dense[neg] -= coef;
                    }
                }
            }
            let mut sign = 1.0;
            let s = match row.sense {
                RowSense::Le => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
                RowSense::Ge => {
                    sign = -1.0;
                    for x in dense.iter_mut() {
                        *x = -*x;
                    }
                    rhs = -rhs;
                    RowSense::Le
                }
            };
            let scale = dense
                .iter()
                .map(|x| x.abs())
                .fold(0.0f64, f64::max)
                .max(1e-12);
            let scale = if scale < 1e-9 { 1.0 } else { scale };
            for x in dense.iter_mut() {
                *x /= scale;
            }
            rhs /= scale;
            a.push(dense);
            b.push(rhs);
            sense.push(s);
            origin.push(RowOrigin::Model(i));
            row_sign.push(sign);
            row_scale.push(scale);
        }

        // Internal rows for finite upper bounds of non-fixed variables.
        for v in 0..nvars {
            let span = match cols[v] {
                ColMap::Shifted { col, lower } if upper[v].is_finite() => {
                    Some((col, upper[v] - lower))
                }
                _ => None,
            };
            if let Some((col, span)) = span {
                let mut dense = vec![0.0; ncols];
                dense[col] = 1.0;
                a.push(dense);
                b.push(span);
                sense.push(RowSense::Le);
                origin.push(RowOrigin::Upper(v));
                row_sign.push(1.0);
                row_scale.push(1.0);
            }
        }

        Ok(StdForm {
            ncols,
            cols,
            a,
            b,
            sense,
            origin,
            row_sign,
            row_scale,
            c,
            obj_scale,
            nvars,
        })
    }
}

/// Dense tableau over columns `[structural | slacks | artificials | rhs]`,
/// with two cost rows while phase 1 is active.
struct Tableau {
    m: usize,
    /// Column offsets.
    nslack: usize,
    width: usize,
    slack_col: Vec<Option<usize>>, // per row
    /// -1 where the row was negated to make its right-hand side nonnegative.
    row_flip: Vec<f64>,
    t: Vec<f64>,
    /// Basis column per row.
    basis: Vec<usize>,
    cost: Vec<f64>,   // phase-2 cost row (reduced costs), width wide
    cost1: Vec<f64>,  // phase-1 cost row
    in_phase1: bool,
    pivots: usize,
    degenerate_run: usize,
    bland: bool,
    feas_tol: f64,
    opt_tol: f64,
    pivot_budget: usize,
    bland_after: usize,
}

impl Tableau {
    fn new(std: &StdForm, options: &LpOptions) -> Tableau {
        let m = std.a.len();
        let nslack = std
            .sense
            .iter()
            .filter(|s| matches!(s, RowSense::Le))
            .count();
        let width = std.ncols + nslack + m + 1;
        let mut t = vec![0.0; m * width];
        let mut slack_col = vec![None; m];
        let mut row_flip = vec![1.0; m];
        let mut basis = vec![0usize; m];
        let mut next_slack = std.ncols;
        for i in 0..m {
            let row = &mut t[i * width..(i + 1) * width];
            row[..std.ncols].copy_from_slice(&std.a[i]);
            if matches!(std.sense[i], RowSense::Le) {
                row[next_slack] = 1.0;
                slack_col[i] = Some(next_slack);
                next_slack += 1;
            }
            row[width - 1] = std.b[i];
            // Negative right-hand sides are negated before the artificial is
            // placed, so the artificial always starts basic at a value >= 0.
            if row[width - 1] < 0.0 {
                for x in row.iter_mut() {
                    *x = -*x;
                }
                row_flip[i] = -1.0;
            }
            row[std.ncols + nslack + i] = 1.0;
            basis[i] = std.ncols + nslack + i;
        }

        // Phase-1 costs: sum of artificials, expressed as reduced costs under
        // the artificial basis (subtract each row from the zero cost row).
        let mut cost1 = vec![0.0; width];
        for i in 0..m {
            for j in 0..width {
                cost1[j] -= t[i * width + j];
            }
        }
        for i in 0..m {
            cost1[std.ncols + nslack + i] = 0.0;
        }

        let mut cost = vec![0.0; width];
        cost[..std.ncols].copy_from_slice(&std.c);

        Tableau {
            m,
            nslack,
            width,
            slack_col,
            row_flip,
            t,
            basis,
            cost,
            cost1,
            in_phase1: true,
            pivots: 0,
            degenerate_run: 0,
            bland: false,
            feas_tol: options.feas_tol,
            opt_tol: options.opt_tol,
            pivot_budget: options.pivot_budget,
            bland_after: options.bland_after.min(3 * (m + std.ncols) + 10),
        }
    }

    fn art_col(&self, row: usize) -> usize {
        self.width - 1 - self.m + row
    }

    fn ncols_struct(&self) -> usize {
        self.width - 1 - self.m - self.nslack
    }

    fn is_artificial(&self, col: usize) -> bool {
        col >= self.width - 1 - self.m
    }

    /// Best-effort installation of a previous basis: pivot its columns in
    /// while they are sign-compatible, leaving artificials elsewhere.
    fn crash_basis(&mut self, warm: &Basis, std: &StdForm) {
        let mut wanted: Vec<usize> = Vec::new();
        for key in &warm.0 {
            let col = match *key {
                BasisKey::VarPos(v) => match std.cols.get(v) {
                    Some(ColMap::Shifted { col, .. }) | Some(ColMap::Mirrored { col, .. }) => {
                        Some(*col)
                    }
                    Some(ColMap::Split { pos, .. }) => Some(*pos),
                    _ => None,
                },
                BasisKey::VarNeg(v) => match std.cols.get(v) {
                    Some(ColMap::Split { neg, .. }) => Some(*neg),
                    _ => None,
                },
                BasisKey::Slack(r) => {
                    let idx = std
                        .origin
                        .iter()
                        .position(|o| matches!(o, RowOrigin::Model(i) if *i == r));
                    idx.and_then(|i| self.slack_col[i])
                }
                BasisKey::UpperSlack(v) => {
                    let idx = std
                        .origin
                        .iter()
                        .position(|o| matches!(o, RowOrigin::Upper(u) if *u == v));
                    idx.and_then(|i| self.slack_col[i])
                }
                BasisKey::Artificial(_) => None,
            };
            if let Some(c) = col {
                wanted.push(c);
            }
        }
        for col in wanted {
            if self.basis.contains(&col) {
                continue;
            }
            // Standard minimum-ratio test keeps every basic value >= 0; the
            // pivot is only taken when the winning row still holds an
            // artificial, otherwise installing this column would evict a
            // column the warm basis also wants.
            let w = self.width;
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * w + col];
                if a > 1e-7 {
                    let ratio = self.t[i * w + w - 1] / a;
                    let wins = match best {
                        None => true,
                        Some((bi, br)) => {
                            ratio < br - 1e-12
                                || ((ratio - br).abs() <= 1e-12
                                    && self.is_artificial(self.basis[i])
                                    && !self.is_artificial(self.basis[bi]))
                        }
                    };
                    if wins {
                        best = Some((i, ratio));
                    }
                }
            }
            if let Some((row, _)) = best {
                if self.is_artificial(self.basis[row]) {
                    self.pivot(row, col);
                }
            }
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width;
        let p = self.t[row * w + col];
        debug_assert!(p.abs() > 1e-12);
        let inv = 1.0 / p;
        for j in 0..w {
            self.t[row * w + j] *= inv;
        }
        self.t[row * w + col] = 1.0;
        for i in 0..self.m {
            if i == row {
                continue;
            }
            let f = self.t[i * w + col];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * self.t[row * w + j];
                }
                self.t[i * w + col] = 0.0;
            }
        }
        let f1 = self.cost1[col];
        if f1 != 0.0 {
            for j in 0..w {
                self.cost1[j] -= f1 * self.t[row * w + j];
            }
            self.cost1[col] = 0.0;
        }
        let f2 = self.cost[col];
        if f2 != 0.0 {
            for j in 0..w {
                self.cost[j] -= f2 * self.t[row * w + j];
            }
            self.cost[col] = 0.0;
        }
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Entering column under the active cost row, or None when optimal.
    fn price(&self) -> Option<usize> {
        let costs = if self.in_phase1 { &self.cost1 } else { &self.cost };
        let limit = self.width - 1;
        let enter_ok = |j: usize| -> bool {
            // Artificials may never re-enter; in phase 2 they are frozen.
            !self.is_artificial(j)
        };
        if self.bland {
            (0..limit).find(|&j| enter_ok(j) && costs[j] < -self.opt_tol)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..limit {
                if !enter_ok(j) {
                    continue;
                }
                let d = costs[j];
                if d < -self.opt_tol && best.map(|(_, bd)| d < bd).unwrap_or(true) {
                    best = Some((j, d));
                }
            }
            best.map(|(j, _)| j)
        }
    }

    /// Leaving row for an entering column, or None when unbounded.
    fn ratio_test(&self, col: usize) -> Option<usize> {
        let w = self.width;
        // Degenerate artificial rows must not block or regrow: if a basic
        // artificial sits at zero with any nonzero coefficient under the
        // entering column, kick it out first with a zero-length pivot.
        for i in 0..self.m {
            if self.is_artificial(self.basis[i]) {
                let a = self.t[i * w + col];
                let rhs = self.t[i * w + w - 1];
                if rhs.abs() <= self.feas_tol && a.abs() > 1e-9 {
                    return Some(i);
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.t[i * w + col];
            if a > 1e-9 {
                let ratio = self.t[i * w + w - 1] / a;
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        let better = ratio < br - 1e-12
                            || ((ratio - br).abs() <= 1e-12 && {
                                if self.bland {
                                    self.basis[i] < self.basis[bi]
                                } else {
                                    // Prefer kicking artificials, then larger
                                    // pivots for stability.
                                    let ai = self.is_artificial(self.basis[i]);
                                    let ab = self.is_artificial(self.basis[bi]);
                                    ai && !ab
                                        || (ai == ab
                                            && self.t[i * w + col].abs()
                                                > self.t[bi * w + col].abs())
                                }
                            });
                        if better {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn objective_now(&self) -> f64 {
        let costs = if self.in_phase1 { &self.cost1 } else { &self.cost };
        -costs[self.width - 1]
    }

    fn iterate(&mut self) -> Result<(), StopReason> {
        loop {
            // Phase 1 is done the moment the artificial sum hits zero; there
            // is no need to price it to exact phase-1 optimality.
            if self.in_phase1 && self.objective_now() <= self.feas_tol {
                return Ok(());
            }
            let Some(col) = self.price() else {
                return Ok(());
            };
            let Some(row) = self.ratio_test(col) else {
                return Err(StopReason::Unbounded(col));
            };
            if self.pivots >= self.pivot_budget {
                return Err(StopReason::Budget);
            }
            let before = self.objective_now();
            self.pivot(row, col);
            let after = self.objective_now();
            if (before - after).abs() <= 1e-12 * (1.0 + before.abs()) {
                self.degenerate_run += 1;
                if self.degenerate_run > self.bland_after {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }
        }
    }

    fn run(mut self, std: &StdForm, model: &Model) -> Result<LpSolution, LpError> {
        // Phase 1.
        match self.iterate() {
            Ok(()) => {}
            Err(StopReason::Budget) => return Err(LpError::PivotBudget(self.pivots)),
            Err(StopReason::Unbounded(_)) => {
                // Phase-1 objective is bounded below by zero; cannot happen
                // with exact arithmetic. Treat as a numerical failure.
                return Err(LpError::PivotBudget(self.pivots));
            }
        }
        let phase1 = self.objective_now();
        if phase1 > self.feas_tol * 10.0 {
            let farkas = self.extract_duals(std, model, true);
            return Err(LpError::Infeasible { phase1, farkas });
        }
        // Pivot artificials out of the basis where possible.
        for i in 0..self.m {
            if self.is_artificial(self.basis[i]) {
                let w = self.width;
                let limit = w - 1 - self.m;
                if let Some(col) = (0..limit).find(|&j| self.t[i * w + j].abs() > 1e-7) {
                    self.pivot(i, col);
                }
            }
        }
        self.in_phase1 = false;
        self.degenerate_run = 0;
        self.bland = false;
        match self.iterate() {
            Ok(()) => {}
            Err(StopReason::Budget) => return Err(LpError::PivotBudget(self.pivots)),
            Err(StopReason::Unbounded(col)) => {
                let ray = self.extract_ray(std, col);
                return Err(LpError::Unbounded { ray });
            }
        }
        Ok(self.extract_solution(std, model))
    }


    fn extract_solution(&self, std: &StdForm, model: &Model) -> LpSolution {
        let mut z = vec![0.0; std.ncols];
        for (i, &bcol) in self.basis.iter().enumerate() {
            if bcol < std.ncols {
                z[bcol] = self.t[i * self.width + self.width - 1];
            }
        }
        let mut values = vec![0.0; std.nvars];
        for v in 0..std.nvars {
            values[v] = match std.cols[v] {
                ColMap::Fixed(val) => val,
                ColMap::Shifted { col, lower } => lower + z[col],
                ColMap::Mirrored { col, upper } => upper - z[col],
                ColMap::Split { pos, neg } => z[pos] - z[neg],
            };
        }
        let duals = self.extract_duals(std, model, false);
        // Reduced costs from first principles: c - Aᵀy over model data.
        let mut reduced = vec![0.0; std.nvars];
        for v in 0..std.nvars {
            reduced[v] = model.var(v).obj;
        }
        for (i, row) in model.rows().iter().enumerate() {
            let y = duals[i];
            if y != 0.0 {
                for &(v, coef) in &row.terms {
                    reduced[v] -= y * coef;
                }
            }
        }
        let objective = model.objective_value(&values);
        let basis = Basis(
            self.basis
                .iter()
                .enumerate()
                .map(|(i, &col)| self.key_of(std, i, col))
                .collect(),
        );
        LpSolution {
            values,
            objective,
            duals,
            reduced_costs: reduced,
            basis,
            pivots: self.pivots,
        }
    }

    fn key_of(&self, std: &StdForm, row: usize, col: usize) -> BasisKey {
        let ncols = self.ncols_struct();
        if col < ncols {
            for (v, map) in std.cols.iter().enumerate() {
                match *map {
                    ColMap::Shifted { col: c, .. } | ColMap::Mirrored { col: c, .. }
                        if c == col =>
                    {
                        return BasisKey::VarPos(v)
                    }
                    ColMap::Split { pos, neg } => {
                        if pos == col {
                            return BasisKey::VarPos(v);
                        }
                        if neg == col {
                            return BasisKey::VarNeg(v);
                        }
                    }
                    _ => {}
                }
            }
            BasisKey::Artificial(row)
        } else if col < ncols + self.nslack {
            // Find which std row owns this slack.
            for (i, sc) in self.slack_col.iter().enumerate() {
                if *sc == Some(col) {
                    return match std.origin[i] {
                        RowOrigin::Model(r) => BasisKey::Slack(r),
                        RowOrigin::Upper(v) => BasisKey::UpperSlack(v),
                    };
                }
            }
            BasisKey::Artificial(row)
        } else {
            BasisKey::Artificial(row)
        }
    }

    /// Shadow prices per model row from the artificial columns of the active
    /// cost row, mapped through row signs and scaling.
    fn extract_duals(&self, std: &StdForm, model: &Model, phase1: bool) -> Vec<f64> {
        let costs = if phase1 { &self.cost1 } else { &self.cost };
        let obj_scale = if phase1 { 1.0 } else { std.obj_scale };
        let mut duals = vec![0.0; model.row_count()];
        for i in 0..self.m {
            // The artificial columns started out as the identity, so the
            // multiplier of tableau row i is its artificial's cost minus the
            // stored reduced cost: artificials carry cost 1 in phase 1 and 0
            // in phase 2. Undo the rhs-sign normalization, the >= flip, and
            // the row/objective scaling to express it per model row.
            let base = if phase1 { 1.0 } else { 0.0 };
            let y_tab = base - costs[self.art_col(i)];
            if let RowOrigin::Model(r) = std.origin[i] {
                duals[r] = y_tab * self.row_flip[i] * obj_scale * std.row_sign[i]
                    / std.row_scale[i];
            }
        }
        duals
    }

    /// Feasible descent direction in model-variable space for an entering
    /// column with no blocking row.
    fn extract_ray(&self, std: &StdForm, col: usize) -> Vec<f64> {
        let mut dz = vec![0.0; std.ncols];
        if col < std.ncols {
            dz[col] = 1.0;
        }
        for i in 0..self.m {
            let bcol = self.basis[i];
            if bcol < std.ncols {
                dz[bcol] = -self.t[i * self.width + col];
            }
        }
        let mut dir = vec![0.0; std.nvars];
        for v in 0..std.nvars {
            dir[v] = match std.cols[v] {
                ColMap::Fixed(_) => 0.0,
                ColMap::Shifted { col, .. } => dz[col],
                ColMap::Mirrored { col, .. } => -dz[col],
                ColMap::Split { pos, neg } => dz[pos] - dz[neg],
            };
        }
        dir
    }
}

enum StopReason {
    Unbounded(usize),
    Budget,
}

impl LpSolution {
    /// Residual report used by property tests: primal feasibility, dual sign
    /// conditions, complementary slackness, and the strong-duality identity
    /// `cᵀx = yᵀb + dᵀx`.
    pub fn verify(&self, model: &Model) -> VerifyReport {
        let x = &self.values;
        let mut primal = 0.0f64;
        let mut comp = 0.0f64;
        let mut dual_sign = 0.0f64;
        let mut ytb = 0.0;
        for (i, row) in model.rows().iter().enumerate() {
            let lhs: f64 = row.terms.iter().map(|&(v, c)| c * x[v]).sum();
            let y = self.duals[i];
            ytb += y * row.rhs;
            let scale = 1.0 + row.rhs.abs() + lhs.abs();
            match row.sense {
                RowSense::Le => {
                    primal = primal.max((lhs - row.rhs) / scale);
                    dual_sign = dual_sign.max(y);
                    comp = comp.max((y * (row.rhs - lhs)).abs() / scale);
                }
                RowSense::Ge => {
                    primal = primal.max((row.rhs - lhs) / scale);
                    dual_sign = dual_sign.max(-y);
                    comp = comp.max((y * (lhs - row.rhs)).abs() / scale);
                }
                RowSense::Eq => {
                    primal = primal.max((lhs - row.rhs).abs() / scale);
                }
            }
        }
        let mut dtx = 0.0;
        for v in 0..model.var_count() {
            let var = model.var(v);
            primal = primal.max(var.lower - x[v]);
            primal = primal.max(x[v] - var.upper);
            dtx += self.reduced_costs[v] * x[v];
        }
        let gap = (self.objective - ytb - dtx).abs()
            / (1.0 + self.objective.abs());
        VerifyReport {
            primal_residual: primal,
            dual_sign_residual: dual_sign,
            comp_slack_residual: comp,
            duality_gap: gap,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyReport {
    pub primal_residual: f64,
    pub dual_sign_residual: f64,
    pub comp_slack_residual: f64,
    pub duality_gap: f64,
}

impl VerifyReport {
    pub fn ok(&self, tol: f64) -> bool {
        self.primal_residual <= tol
            && self.dual_sign_residual <= tol
            && self.comp_slack_residual <= tol * 10.0
            && self.duality_gap <= tol * 10.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::model::{Model, RowSense, VarKind};

    fn opts() -> LpOptions {
        LpOptions::default()
    }

    /// Classic two-variable product-mix model with a known optimum and
    /// hand-computed shadow prices.
    #[test]
    fn product_mix_optimum_and_duals() {
        let mut m = Model::new("mix");
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, -3.0);
        let y = m.add_var("y", VarKind::Continuous, 0.0, f64::INFINITY, -5.0);
        m.add_row("r1", RowSense::Le, vec![(x, 1.0)], 4.0);
        m.add_row("r2", RowSense::Le, vec![(y, 2.0)], 12.0);
        m.add_row("r3", RowSense::Le, vec![(x, 3.0), (y, 2.0)], 18.0);
        let sol = solve_lp(&m, &opts(), None).unwrap();
        assert!((sol.objective + 36.0).abs() < 1e-9);
        assert!((sol.values[x] - 2.0).abs() < 1e-9);
        assert!((sol.values[y] - 6.0).abs() < 1e-9);
        assert!(sol.duals[0].abs() < 1e-9);
        assert!((sol.duals[1] + 1.5).abs() < 1e-9);
        assert!((sol.duals[2] + 1.0).abs() < 1e-9);
        assert!(sol.verify(&m).ok(1e-8));
    }

    /// Equality plus inequality with a free variable; duals solved by hand:
    /// x = (b1+b2)/2, y = (b1-b2)/2, obj = (3 b1 - b2)/2.
    #[test]
    fn equality_free_variable_duals() {
        let mut m = Model::new("eqfree");
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, 1.0);
        let y = m.add_var("y", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY, 2.0);
        m.add_row("sum", RowSense::Eq, vec![(x, 1.0), (y, 1.0)], 10.0);
        m.add_row("diff", RowSense::Le, vec![(x, 1.0), (y, -1.0)], 2.0);
        let sol = solve_lp(&m, &opts(), None).unwrap();
        assert!((sol.objective - 14.0).abs() < 1e-9);
        assert!((sol.values[x] - 6.0).abs() < 1e-9);
        assert!((sol.values[y] - 4.0).abs() < 1e-9);
        assert!((sol.duals[0] - 1.5).abs() < 1e-9);
        assert!((sol.duals[1] + 0.5).abs() < 1e-9);
        assert!(sol.verify(&m).ok(1e-8));
    }

    #[test]
    fn infeasible_yields_certificate() {
        let mut m = Model::new("inf");
        let x = m.add_var("x", VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY, 0.0);
        m.add_row("lo", RowSense::Ge, vec![(x, 1.0)], 2.0);
        m.add_row("hi", RowSense::Le, vec![(x, 1.0)], 1.0);
        match solve_lp(&m, &opts(), None) {
            Err(LpError::Infeasible { phase1, farkas }) => {
                assert!((phase1 - 1.0).abs() < 1e-6, "phase1 = {phase1}");
                // The residual is max(0, b_lo - b_hi), so the shadow prices
                // are exactly +1 on the lower row and -1 on the upper row:
                // raising the upper bound by 1 closes the gap, and a slack
                // certificate entry would wrongly rule out feasible repairs.
                assert!((farkas[0] - 1.0).abs() < 1e-6, "farkas = {farkas:?}");
                assert!((farkas[1] + 1.0).abs() < 1e-6, "farkas = {farkas:?}");
                let predicted = phase1 + farkas[1] * 1.0;
                assert!(predicted <= 1e-6, "farkas = {farkas:?}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_yields_ray() {
        let mut m = Model::new("unb");
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, -1.0);
        let y = m.add_var("y", VarKind::Continuous, 0.0, f64::INFINITY, 0.0);
        m.add_row("tie", RowSense::Le, vec![(x, 1.0), (y, -1.0)], 1.0);
        match solve_lp(&m, &opts(), None) {
            Err(LpError::Unbounded { ray }) => {
                // Direction must be feasible and improving.
                assert!(ray[0] > 1e-9);
                assert!(ray[0] - ray[1] <= 1e-9);
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    /// Beale's classic cycling example; Dantzig pricing cycles on it without
    /// an anti-cycling fallback. Optimum is -1/20.
    #[test]
    fn beale_cycling_example_terminates() {
        let mut m = Model::new("beale");
        let x4 = m.add_var("x4", VarKind::Continuous, 0.0, f64::INFINITY, -0.75);
        let x5 = m.add_var("x5", VarKind::Continuous, 0.0, f64::INFINITY, 150.0);
        let x6 = m.add_var("x6", VarKind::Continuous, 0.0, f64::INFINITY, -0.02);
        let x7 = m.add_var("x7", VarKind::Continuous, 0.0, f64::INFINITY, 6.0);
        m.add_row(
            "r1",
            RowSense::Le,
            vec![(x4, 0.25), (x5, -60.0), (x6, -0.04), (x7, 9.0)],
            0.0,
        );
        m.add_row(
            "r2",
            RowSense::Le,
            vec![(x4, 0.5), (x5, -90.0), (x6, -0.02), (x7, 3.0)],
            0.0,
        );
        m.add_row("r3", RowSense::Le, vec![(x6, 1.0)], 1.0);
        let sol = solve_lp(&m, &opts(), None).unwrap();
        assert!((sol.objective + 0.05).abs() < 1e-9, "obj = {}", sol.objective);
        assert!(sol.verify(&m).ok(1e-8));
    }

    #[test]
    fn fixed_integers_are_substituted() {
        let mut m = Model::new("fixed");
        let b = m.add_var("b", VarKind::Binary, 1.0, 1.0, 5.0);
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, 1.0);
        m.add_row("link", RowSense::Ge, vec![(x, 1.0), (b, 2.0)], 3.0);
        let sol = solve_lp(&m, &opts(), None).unwrap();
        assert!((sol.values[b] - 1.0).abs() < 1e-12);
        assert!((sol.values[x] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 6.0).abs() < 1e-9);
    }

    #[test]
    fn unfixed_integer_rejected_by_lp() {
        let mut m = Model::new("badlp");
        m.add_var("b", VarKind::Binary, 0.0, 1.0, 1.0);
        assert!(matches!(
            solve_lp(&m, &opts(), None),
            Err(LpError::InvalidModel(_))
        ));
    }

    #[test]
    fn mirrored_variable_upper_bound_only() {
        // x <= 5 with no lower bound, minimize -x -> x = 5.
        let mut m = Model::new("mirror");
        let x = m.add_var("x", VarKind::Continuous, f64::NEG_INFINITY, 5.0, -1.0);
        m.add_row("pad", RowSense::Ge, vec![(x, 1.0)], -100.0);
        let sol = solve_lp(&m, &opts(), None).unwrap();
        assert!((sol.values[x] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn warm_basis_reuse_is_consistent() {
        let mut m = Model::new("warm");
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, -1.0);
        let y = m.add_var("y", VarKind::Continuous, 0.0, f64::INFINITY, -2.0);
        m.add_row("cap", RowSense::Le, vec![(x, 1.0), (y, 1.0)], 10.0);
        m.add_row("mix", RowSense::Le, vec![(x, 2.0), (y, 1.0)], 15.0);
        let cold = solve_lp(&m, &opts(), None).unwrap();
        let warm = solve_lp(&m, &opts(), Some(&cold.basis)).unwrap();
        assert!((cold.objective - warm.objective).abs() < 1e-9);
        assert!(warm.pivots <= cold.pivots);
    }

    #[test]
    fn determinism_identical_runs() {
        let mut m = Model::new("det");
        let x = m.add_var("x", VarKind::Continuous, 0.0, 4.0, -1.0);
        let y = m.add_var("y", VarKind::Continuous, 0.0, 4.0, -1.0);
        m.add_row("r", RowSense::Le, vec![(x, 1.0), (y, 1.0)], 6.0);
        let a = solve_lp(&m, &opts(), None).unwrap();
        let b = solve_lp(&m, &opts(), None).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.pivots, b.pivots);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    mod random_lps {
        use super::*;
        use proptest::prelude::*;

        #[derive(Debug, Clone)]
        struct Instance {
            nvars: usize,
            costs: Vec<f64>,
            rows: Vec<(u8, Vec<f64>, f64)>, // sense tag, coefficients, margin
            anchor: Vec<f64>,               // known feasible point
        }

        /// Instances built around a known interior point so they are always
        /// feasible, and box bounds keep them bounded.
        fn instances() -> impl Strategy<Value = Instance> {
            (1usize..=5, 1usize..=6)
                .prop_flat_map(|(nvars, nrows)| {
                    let costs = proptest::collection::vec(-10.0..10.0f64, nvars);
                    let anchor = proptest::collection::vec(0.0..5.0f64, nvars);
                    let row = (
                        0u8..3,
                        proptest::collection::vec(-5.0..5.0f64, nvars),
                        0.0..3.0f64,
                    );
                    let rows = proptest::collection::vec(row, nrows);
                    (Just(nvars), costs, rows, anchor)
                })
                .prop_map(|(nvars, costs, rows, anchor)| Instance {
                    nvars,
                    costs,
                    rows,
                    anchor,
                })
        }

        fn build(inst: &Instance) -> Model {
            let mut m = Model::new("random");
            for v in 0..inst.nvars {
                m.add_var(format!("x{v}"), VarKind::Continuous, 0.0, 10.0, inst.costs[v]);
            }
            for (i, (tag, coefs, margin)) in inst.rows.iter().enumerate() {
                let at_anchor: f64 = coefs
                    .iter()
                    .enumerate()
                    .map(|(v, c)| c * inst.anchor[v])
                    .sum();
                let terms: Vec<(usize, f64)> =
                    coefs.iter().cloned().enumerate().collect();
                let (sense, rhs) = match tag % 3 {
                    0 => (RowSense::Le, at_anchor + margin),
                    1 => (RowSense::Ge, at_anchor - margin),
                    _ => (RowSense::Eq, at_anchor),
                };
                m.add_row(format!("r{i}"), sense, terms, rhs);
            }
            m
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            /// Every solve of a feasible bounded instance must terminate at a
            /// point that passes the full optimality certificate and must not
            /// be beaten by the anchor point it was built around.
            #[test]
            fn certificate_holds_on_random_instances(inst in instances()) {
                let m = build(&inst);
                let sol = solve_lp(&m, &opts(), None).unwrap();
                let report = sol.verify(&m);
                prop_assert!(
                    report.ok(1e-6),
                    "certificate failed: {report:?}"
                );
                let anchor_obj = m.objective_value(&inst.anchor);
                prop_assert!(sol.objective <= anchor_obj + 1e-6);
            }
        }
    }
}
