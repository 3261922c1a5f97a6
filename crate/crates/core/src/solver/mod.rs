//! Self-contained LP/MILP engine.
//!
//! The engine is deliberately dense and deterministic: models at planning
//! scale are a few hundred rows, and reproducibility matters more than raw
//! speed. `model` holds the problem container, `simplex` a two-phase primal
//! simplex with dual extraction and infeasibility/unboundedness certificates,
//! `milp` a best-first branch-and-bound with warm starts and an incumbent
//! improvement hook, and `complexity` the closed-form size accounting for the
//! single-level planning model.

pub mod complexity;
pub mod milp;
pub mod model;
pub mod simplex;

pub use complexity::{count_complexity, ComplexityCounts, ModelDims};
pub use milp::{solve_milp, ImprovementHook, MilpOptions, MilpSolution, MilpStatus, WarmStart};
pub use model::{Model, RowId, RowSense, VarId, VarKind};
pub use simplex::{solve_lp, Basis, LpError, LpOptions, LpSolution};
