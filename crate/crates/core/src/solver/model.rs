//! Linear model container shared by the LP and MILP layers.
//!
//! Variables carry bounds, an integrality kind, and a group label; rows carry
//! a sense, a right-hand side, and sparse coefficients. Groups exist so that
//! builders can tally what they emitted (useful for size accounting) and so
//! that text dumps stay readable.

use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Index of a variable within its [`Model`].
pub type VarId = usize;
/// Index of a row within its [`Model`].
pub type RowId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    pub fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Var {
    pub name: String,
    pub group: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub group: String,
    pub sense: RowSense,
    pub rhs: f64,
    /// Sparse coefficients, deduplicated and sorted by variable id.
    pub terms: Vec<(VarId, f64)>,
}

/// A linear optimization model, always minimizing.
#[derive(Debug, Clone, Default)]
pub struct Model {
    pub name: String,
    vars: Vec<Var>,
    rows: Vec<Row>,
}

impl Model {
    pub fn new(name: impl Into<String>) -> Self {
        Model {
            name: name.into(),
            vars: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        obj: f64,
    ) -> VarId {
        assert!(!lower.is_nan() && !upper.is_nan() && obj.is_finite());
        self.vars.push(Var {
            name: name.into(),
            group: String::new(),
            kind,
            lower,
            upper,
            obj,
        });
        self.vars.len() - 1
    }

    pub fn add_var_in(
        &mut self,
        group: &str,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        obj: f64,
    ) -> VarId {
        let id = self.add_var(name, kind, lower, upper, obj);
        self.vars[id].group = group.to_string();
        id
    }

    /// Adds a row. Duplicate variable mentions are summed.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        sense: RowSense,
        terms: Vec<(VarId, f64)>,
        rhs: f64,
    ) -> RowId {
        assert!(rhs.is_finite(), "row rhs must be finite");
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (v, c) in terms {
            assert!(v < self.vars.len(), "row references unknown variable");
            assert!(c.is_finite(), "row coefficient must be finite");
            *merged.entry(v).or_insert(0.0) += c;
        }
        self.rows.push(Row {
            name: name.into(),
            group: String::new(),
            sense,
            rhs,
            terms: merged.into_iter().collect(),
        });
        self.rows.len() - 1
    }

    pub fn add_row_in(
        &mut self,
        group: &str,
        name: impl Into<String>,
        sense: RowSense,
        terms: Vec<(VarId, f64)>,
        rhs: f64,
    ) -> RowId {
        let id = self.add_row(name, sense, terms, rhs);
        self.rows[id].group = group.to_string();
        id
    }

    pub fn set_obj(&mut self, var: VarId, obj: f64) {
        assert!(obj.is_finite());
        self.vars[var].obj = obj;
    }

    pub fn add_obj(&mut self, var: VarId, obj: f64) {
        assert!(obj.is_finite());
        self.vars[var].obj += obj;
    }

    pub fn var(&self, id: VarId) -> &Var {
        &self.vars[id]
    }

    pub fn row(&self, id: RowId) -> &Row {
        &self.rows[id]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn integer_var_ids(&self) -> Vec<VarId> {
        (0..self.vars.len())
            .filter(|&v| self.vars[v].kind != VarKind::Continuous)
            .collect()
    }

    /// Number of variables whose group starts with `prefix`.
    pub fn tally_vars(&self, prefix: &str) -> usize {
        self.vars.iter().filter(|v| v.group.starts_with(prefix)).count()
    }

    /// Number of rows whose group starts with `prefix`.
    pub fn tally_rows(&self, prefix: &str) -> usize {
        self.rows.iter().filter(|r| r.group.starts_with(prefix)).count()
    }

    /// Objective value of a point, ignoring feasibility.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.obj * xi).sum()
    }

    /// Largest violation of rows and bounds at a point.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for v in 0..self.vars.len() {
            worst = worst.max(self.vars[v].lower - x[v]);
            worst = worst.max(x[v] - self.vars[v].upper);
        }
        for row in &self.rows {
            let lhs: f64 = row.terms.iter().map(|&(v, c)| c * x[v]).sum();
            let viol = match row.sense {
                RowSense::Le => lhs - row.rhs,
                RowSense::Ge => row.rhs - lhs,
                RowSense::Eq => (lhs - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Plain-text dump of the model, one row per line.
    pub fn lp_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "\\ model {}", self.name);
        out.push_str("minimize\n ");
        for (i, v) in self.vars.iter().enumerate() {
            if v.obj != 0.0 {
                let _ = write!(out, " {:+} {}", v.obj, ident(&v.name, i));
            }
        }
        out.push_str("\nsubject to\n");
        for row in &self.rows {
            let _ = write!(out, "  {}:", row.name);
            for &(v, c) in &row.terms {
                let _ = write!(out, " {:+} {}", c, ident(&self.vars[v].name, v));
            }
            let _ = writeln!(out, " {} {}", row.sense.symbol(), row.rhs);
        }
        out.push_str("bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            if v.lower != f64::NEG_INFINITY || v.upper != f64::INFINITY {
                let lo = if v.lower == f64::NEG_INFINITY {
                    "-inf".to_string()
                } else {
                    format!("{}", v.lower)
                };
                let hi = if v.upper == f64::INFINITY {
                    "+inf".to_string()
                } else {
                    format!("{}", v.upper)
                };
                let _ = writeln!(out, "  {} <= {} <= {}", lo, ident(&v.name, i), hi);
            } else {
                let _ = writeln!(out, "  {} free", ident(&v.name, i));
            }
        }
        let bins: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind != VarKind::Continuous)
            .map(|(i, v)| ident(&v.name, i))
            .collect();
        if !bins.is_empty() {
            out.push_str("integers\n  ");
            out.push_str(&bins.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }
}

fn ident(name: &str, id: usize) -> String {
    if name.is_empty() {
        format!("x{id}")
    } else {
        name.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_duplicate_terms_and_tallies_groups() {
        let mut m = Model::new("t");
        let x = m.add_var_in("flow", "x", VarKind::Continuous, 0.0, 10.0, 1.0);
        let y = m.add_var_in("bits", "y", VarKind::Binary, 0.0, 1.0, 0.0);
        let r = m.add_row("r0", RowSense::Le, vec![(x, 1.0), (x, 2.0), (y, 1.0)], 5.0);
        assert_eq!(m.row(r).terms, vec![(x, 3.0), (y, 1.0)]);
        assert_eq!(m.tally_vars("flow"), 1);
        assert_eq!(m.tally_vars("bits"), 1);
        assert_eq!(m.integer_var_ids(), vec![y]);
    }

    #[test]
    fn text_dump_lists_rows_and_bounds() {
        let mut m = Model::new("dump");
        let x = m.add_var("x", VarKind::Continuous, 0.0, f64::INFINITY, 2.0);
        m.add_row("cap", RowSense::Le, vec![(x, 1.0)], 4.0);
        let text = m.lp_text();
        assert!(text.contains("minimize"));
        assert!(text.contains("cap: +1 x <= 4"));
        assert!(text.contains("0 <= x <= +inf"));
    }

    #[test]
    fn violation_measures_rows_and_bounds() {
        let mut m = Model::new("viol");
        let x = m.add_var("x", VarKind::Continuous, 0.0, 1.0, 0.0);
        m.add_row("eq", RowSense::Eq, vec![(x, 2.0)], 1.0);
        assert!((m.max_violation(&[0.75]) - 0.5).abs() < 1e-12);
        assert!((m.max_violation(&[-0.25]) - 1.5).abs() < 1e-12);
    }
}
