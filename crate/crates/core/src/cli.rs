//! Command-line front end: ingest hub and time-series files, run framework
//! solves and frontier sweeps, and emit reports and CSV artifacts.
//!
//! Five subcommands, long-form flags only. `validate` and `reduce-days`
//! work straight from data files; `solve`, `pareto`, and `report` read a
//! run manifest (TOML) so a study is reproducible from one file. Exit
//! codes are part of the contract: 0 success, 1 data or validation
//! failure (including an unreachable emission target, which comes with a
//! certificate), 2 usage, 3 solver budget exhausted with bounds emitted.
//!
//! Everything written here is deterministic for a fixed manifest and seed:
//! solves are collected in manifest order regardless of thread scheduling,
//! and all file writes funnel through the command's own thread.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::frameworks::{
    solve_framework, EconomicConfig, FrameworkError, FrameworkOptions, FrameworkResult,
};
use crate::hub::{Hub, Topology};
use crate::operation::{solve_day, DayContext, DispatchMode};
use crate::scenarios::{reduce_days, ScenarioSet, SeriesBundle, YearSeries};
use crate::search::{pareto_sweep_targets, sweep_baseline, ParetoPoint};
use crate::solver::{count_complexity, ModelDims};

/// Column order of every frontier CSV this tool writes.
pub const FRONTIER_HEADER: &str =
    "target_tCO2e,total_cost,invest_cost,net_operate_cost,carbon_price,achieved_tCO2e,gap,source";

const FRAMEWORK_IDS: [&str; 5] = ["f1", "f1-benders", "f2", "f3", "f4"];

/// Runs the tool and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate(args) => cmd_validate(&args),
        Command::ReduceDays(args) => cmd_reduce_days(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Pareto(args) => cmd_pareto(&args),
        Command::Report(args) => cmd_report(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hubplan",
    version,
    about = "Sizes a multi-energy hub's equipment under emission-policy regimes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a hub description and its data files without solving anything
    Validate(ValidateArgs),
    /// Compress a year of data into weighted typical days
    #[command(name = "reduce-days")]
    ReduceDays(ReduceDaysArgs),
    /// Run one framework from a manifest and write its result artifacts
    Solve(ManifestArgs),
    /// Trace cost against a ladder of emission targets, one CSV per framework
    Pareto(ManifestArgs),
    /// Tabulate previously written results and forecast model size
    Report(ManifestArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Hub description file (TOML)
    #[arg(long)]
    hub: PathBuf,
    /// Data series as NAME=PATH pairs; NAME is a carrier or a connection's
    /// series override
    #[arg(long = "series", value_name = "NAME=PATH")]
    series: Vec<String>,
    /// Hours per dispatch period in the series files
    #[arg(long, default_value_t = 1.0)]
    dt_hours: f64,
}

#[derive(Args)]
struct ReduceDaysArgs {
    /// Data series as NAME=PATH pairs
    #[arg(long = "series", value_name = "NAME=PATH")]
    series: Vec<String>,
    /// Hours per dispatch period in the series files
    #[arg(long, default_value_t = 1.0)]
    dt_hours: f64,
    /// Typical days to keep
    #[arg(long, default_value_t = 10)]
    typical_days: usize,
    /// Clustering seed; same data, same seed, same result
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the reduced scenario set (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ManifestArgs {
    /// Run manifest (TOML); paths inside it resolve relative to it
    #[arg(long)]
    manifest: PathBuf,
}

// ---------------------------------------------------------------------------
// Errors and exit codes.

enum CliError {
    /// Bad input data or a validation failure; exit 1.
    Data(String),
    /// The request itself is malformed; exit 2.
    Usage(String),
    /// The solver ran out of budget or failed; bounds were emitted where
    /// available; exit 3.
    Solver(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Usage(m) | CliError::Solver(m) => m,
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

// ---------------------------------------------------------------------------
// Run manifests.

/// One study, reproducible from this file plus the data it references.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunManifest {
    /// Hub description file.
    hub: PathBuf,
    /// Where artifacts land; created if missing.
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    /// Clustering seed, recorded in every result document.
    #[serde(default)]
    seed: u64,
    /// Hours per dispatch period in the series files.
    #[serde(default = "default_dt_hours")]
    dt_hours: f64,
    /// Worker threads for concurrent solves; 0 means one per core.
    #[serde(default)]
    threads: usize,
    /// Carrier or override name to CSV path.
    series: BTreeMap<String, PathBuf>,
    #[serde(default)]
    reduction: ReductionSection,
    #[serde(default)]
    economics: EconomicsSection,
    solve: Option<SolveSection>,
    pareto: Option<ParetoSection>,
    #[serde(default)]
    tolerances: TolerancesSection,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_dt_hours() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ReductionSection {
    typical_days: usize,
}

impl Default for ReductionSection {
    fn default() -> Self {
        ReductionSection { typical_days: 10 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EconomicsSection {
    years: usize,
    discount_rate: f64,
    fuel_growth: f64,
    demand_growth: f64,
    emission_cap: Option<f64>,
    carbon_price: Option<f64>,
}

impl Default for EconomicsSection {
    fn default() -> Self {
        let d = EconomicConfig::default();
        EconomicsSection {
            years: d.years,
            discount_rate: d.discount_rate,
            fuel_growth: d.fuel_growth,
            demand_growth: d.demand_growth,
            emission_cap: d.emission_cap,
            carbon_price: d.carbon_price,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolveSection {
    framework: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ParetoSection {
    /// Frameworks to sweep; empty falls back to `[solve] framework`.
    frameworks: Vec<String>,
    /// Evenly spaced targets up to the first framework's unconstrained
    /// heaviest year.
    resolution: Option<usize>,
    /// Explicit targets instead; shared by every swept framework.
    targets: Option<Vec<f64>>,
}

impl Default for ParetoSection {
    fn default() -> Self {
        ParetoSection {
            frameworks: Vec::new(),
            resolution: None,
            targets: None,
        }
    }
}

/// Every solver knob a run may override; anything unset keeps its default.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TolerancesSection {
    price: Option<f64>,
    gap: Option<f64>,
    integrality: Option<f64>,
    feasibility: Option<f64>,
    optimality: Option<f64>,
    node_budget: Option<usize>,
    pivot_budget: Option<usize>,
    benders_iterations: Option<usize>,
    big_m_escalations: Option<usize>,
    use_hook: Option<bool>,
}

impl TolerancesSection {
    fn apply(&self, opts: &mut FrameworkOptions) {
        if let Some(v) = self.price {
            opts.price_tolerance = v;
        }
        if let Some(v) = self.gap {
            opts.milp.gap_tol = v;
        }
        if let Some(v) = self.integrality {
            opts.milp.int_tol = v;
        }
        if let Some(v) = self.feasibility {
            opts.milp.lp.feas_tol = v;
        }
        if let Some(v) = self.optimality {
            opts.milp.lp.opt_tol = v;
        }
        if let Some(v) = self.node_budget {
            opts.milp.node_budget = v;
        }
        if let Some(v) = self.pivot_budget {
            opts.milp.lp.pivot_budget = v;
        }
        if let Some(v) = self.benders_iterations {
            opts.benders_iterations = v;
        }
        if let Some(v) = self.big_m_escalations {
            opts.big_m_escalations = v;
        }
        if let Some(v) = self.use_hook {
            opts.use_hook = v;
        }
    }
}

/// A manifest loaded, checked, and reduced — ready to solve.
struct LoadedRun {
    hub: Hub,
    topo: Topology,
    set: ScenarioSet,
    econ: EconomicConfig,
    opts: FrameworkOptions,
    seed: u64,
    output_dir: PathBuf,
    solve: Option<SolveSection>,
    pareto: Option<ParetoSection>,
}

fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("invalid manifest {}: {e}", path.display())))
}

fn load_run(manifest_path: &Path) -> Result<LoadedRun, CliError> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |p: &Path| -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    if manifest.threads > 0 {
        // First builder wins; a second call in the same process is a no-op.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(manifest.threads)
            .build_global();
    }

    let hub = Hub::from_toml_path(&resolve(&manifest.hub)).map_err(data_err)?;
    let topo = hub.topology().map_err(data_err)?;

    let mut bundle = SeriesBundle::new(manifest.dt_hours);
    for (name, path) in &manifest.series {
        let series = YearSeries::read_csv(&resolve(path)).map_err(data_err)?;
        bundle.insert(name.clone(), series).map_err(data_err)?;
    }
    check_coverage(&hub, &bundle)?;

    let set = reduce_days(&bundle, manifest.reduction.typical_days, manifest.seed)
        .map_err(data_err)?;

    let e = &manifest.economics;
    if !(e.discount_rate.is_finite() && e.discount_rate > -1.0) {
        return Err(CliError::Data(format!(
            "discount_rate must be a finite rate above -100%, got {}",
            e.discount_rate
        )));
    }
    let econ = EconomicConfig {
        years: e.years,
        discount_rate: e.discount_rate,
        fuel_growth: e.fuel_growth,
        demand_growth: e.demand_growth,
        emission_cap: e.emission_cap,
        carbon_price: e.carbon_price,
    };

    let mut opts = FrameworkOptions::default();
    manifest.tolerances.apply(&mut opts);

    Ok(LoadedRun {
        hub,
        topo,
        set,
        econ,
        opts,
        seed: manifest.seed,
        output_dir: resolve(&manifest.output_dir),
        solve: manifest.solve,
        pareto: manifest.pareto,
    })
}

/// Every connection and demand must find its series, and every series must
/// belong to something — an unused name is almost always a typo.
fn check_coverage(hub: &Hub, bundle: &SeriesBundle) -> Result<(), CliError> {
    let mut wanted: BTreeMap<String, String> = BTreeMap::new();
    for c in &hub.connections {
        let key = c.series.clone().unwrap_or_else(|| hub.energies[c.energy].name.clone());
        wanted.insert(key, format!("connection '{}'", c.name));
    }
    for e in &hub.energies {
        if e.demanded {
            wanted.entry(e.name.clone()).or_insert_with(|| format!("demand on '{}'", e.name));
        }
    }
    for (key, owner) in &wanted {
        if !bundle.series.contains_key(key) {
            return Err(CliError::Data(format!(
                "{owner} needs a series named '{key}' but none was provided"
            )));
        }
    }
    for key in bundle.series.keys() {
        if !wanted.contains_key(key) {
            return Err(CliError::Data(format!(
                "series '{key}' matches no carrier or connection of hub '{}'",
                hub.name
            )));
        }
    }
    Ok(())
}

fn check_framework_id(id: &str) -> Result<(), CliError> {
    if FRAMEWORK_IDS.contains(&id) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown framework '{id}'; expected one of {}",
            FRAMEWORK_IDS.join(", ")
        )))
    }
}

// ---------------------------------------------------------------------------
// validate

fn parse_series_pairs(pairs: &[String]) -> Result<Vec<(String, PathBuf)>, CliError> {
    let mut out = Vec::with_capacity(pairs.len());
    for raw in pairs {
        match raw.split_once('=') {
            Some((name, path)) if !name.is_empty() && !path.is_empty() => {
                out.push((name.to_string(), PathBuf::from(path)));
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "--series takes NAME=PATH, got '{raw}'"
                )))
            }
        }
    }
    Ok(out)
}

fn load_bundle(pairs: &[(String, PathBuf)], dt_hours: f64) -> Result<SeriesBundle, CliError> {
    let mut bundle = SeriesBundle::new(dt_hours);
    for (name, path) in pairs {
        let series = YearSeries::read_csv(path).map_err(data_err)?;
        bundle.insert(name.clone(), series).map_err(data_err)?;
    }
    Ok(bundle)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32, CliError> {
    let hub = Hub::from_toml_path(&args.hub).map_err(data_err)?;
    let topo = hub.topology().map_err(data_err)?;
    let pairs = parse_series_pairs(&args.series)?;
    let bundle = load_bundle(&pairs, args.dt_hours)?;
    if !pairs.is_empty() {
        check_coverage(&hub, &bundle)?;
    }
    println!(
        "hub '{}': {} carriers, {} connections, {} converters, {} storages; \
         {} branches, {} balance rows",
        hub.name,
        hub.energies.len(),
        hub.connections.len(),
        hub.converters.len(),
        hub.storages.len(),
        topo.branches.len(),
        topo.balance.len(),
    );
    if !pairs.is_empty() {
        println!(
            "series: {} of {} days x {} periods, all consistent",
            bundle.series.len(),
            bundle.days(),
            bundle.periods(),
        );
    }
    println!("ok");
    Ok(0)
}

// ---------------------------------------------------------------------------
// reduce-days

fn cmd_reduce_days(args: &ReduceDaysArgs) -> Result<i32, CliError> {
    let pairs = parse_series_pairs(&args.series)?;
    if pairs.is_empty() {
        return Err(CliError::Usage("reduce-days needs at least one --series".into()));
    }
    let bundle = load_bundle(&pairs, args.dt_hours)?;
    let set = reduce_days(&bundle, args.typical_days, args.seed).map_err(data_err)?;
    let json = serde_json::to_string_pretty(&set)
        .map_err(|e| CliError::Data(format!("cannot encode scenario set: {e}")))?;
    write_file(&args.out, &json)?;
    println!(
        "{} days reduced to {} typical days (seed {}):",
        set.total_days,
        set.days.len(),
        args.seed
    );
    for day in &set.days {
        println!("  day {} stands for {} days", day.source_day, day.weight);
    }
    println!("wrote {}", args.out.display());
    Ok(0)
}

// ---------------------------------------------------------------------------
// solve

/// On-disk wrapper around a framework result; the seed makes the run
/// reproducible and the version pins the tool that wrote it.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultDocument {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub result: FrameworkResult,
}

fn cmd_solve(args: &ManifestArgs) -> Result<i32, CliError> {
    let run = load_run(&args.manifest)?;
    let id = match &run.solve {
        Some(s) => s.framework.clone(),
        None => {
            return Err(CliError::Usage(
                "the manifest has no [solve] section with a framework id".into(),
            ))
        }
    };
    check_framework_id(&id)?;
    fs::create_dir_all(&run.output_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", run.output_dir.display())))?;

    match solve_framework(&id, &run.hub, &run.topo, &run.set, &run.econ, &run.opts) {
        Ok(result) => {
            let exhausted = result.status != "optimal";
            write_result_artifacts(&run, &id, &result)?;
            if exhausted {
                eprintln!(
                    "solver budget exhausted: objective {} proven within gap {}",
                    result.objective, result.gap
                );
                Ok(3)
            } else {
                println!(
                    "{id}: total {} (invest {}, operating NPV {}), heaviest year {} t",
                    result.total, result.invest, result.operate_npv, result.max_year_emissions
                );
                Ok(0)
            }
        }
        Err(FrameworkError::InfeasibleCap { cap, floor, certificate }) => {
            let doc = ResultDocument {
                tool: "hubplan".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                seed: run.seed,
                result: *certificate,
            };
            let path = run.output_dir.join(format!("{id}.infeasible.json"));
            write_file(&path, &to_json(&doc)?)?;
            Err(CliError::Data(format!(
                "no plan can keep every year under {cap} t; the cleanest plan still reaches \
                 {floor:.6} t (certificate in {})",
                path.display()
            )))
        }
        Err(FrameworkError::PriceCeiling { ceiling, achieved, probes }) => {
            let path = run.output_dir.join(format!("{id}.probes.json"));
            write_file(&path, &to_json(&probes)?)?;
            Err(CliError::Data(format!(
                "no rate up to {ceiling} yen/t reaches the target; cleanest probe {achieved:.6} t \
                 (probe log in {})",
                path.display()
            )))
        }
        Err(FrameworkError::Operation(e)) => Err(CliError::Data(e.to_string())),
        Err(FrameworkError::Solver(m)) => Err(CliError::Solver(m)),
    }
}

fn write_result_artifacts(run: &LoadedRun, id: &str, result: &FrameworkResult) -> Result<(), CliError> {
    let doc = ResultDocument {
        tool: "hubplan".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: run.seed,
        result: result.clone(),
    };
    write_file(&run.output_dir.join(format!("{id}.result.json")), &to_json(&doc)?)?;
    write_file(
        &run.output_dir.join(format!("{id}.summary.txt")),
        &summary_text(run, id, result),
    )?;
    write_file(
        &run.output_dir.join(format!("{id}.dispatch.csv")),
        &dispatch_csv(run, result)?,
    )?;
    Ok(())
}

fn summary_text(run: &LoadedRun, id: &str, r: &FrameworkResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "framework: {id}");
    let _ = writeln!(s, "hub: {}", run.hub.name);
    let _ = writeln!(s, "seed: {}", run.seed);
    let _ = writeln!(s, "status: {}", r.status);
    let _ = writeln!(
        s,
        "emission cap: {}",
        r.emission_cap.map_or("none".into(), |c| format!("{c} t/year"))
    );
    let _ = writeln!(s, "plan:");
    for (c, cap) in run.hub.connections.iter().zip(&r.plan.connection_caps) {
        let _ = writeln!(s, "  {}: {} MW", c.name, cap);
    }
    for (g, units) in run.hub.converters.iter().zip(&r.plan.converter_units) {
        let _ = writeln!(s, "  {}: {} units of {} MW", g.name, units, g.unit_size);
    }
    for (i, st) in run.hub.storages.iter().enumerate() {
        let _ = writeln!(
            s,
            "  {}: {} MW / {} MWh",
            st.name, r.plan.storage_power[i], r.plan.storage_energy[i]
        );
    }
    let _ = writeln!(s, "invest: {}", r.invest);
    let _ = writeln!(s, "operating NPV: {}", r.operate_npv);
    let _ = writeln!(s, "carbon charges NPV: {}", r.tax_npv);
    let _ = writeln!(s, "total: {}", r.total);
    let _ = writeln!(s, "heaviest year: {} t", r.max_year_emissions);
    let _ = writeln!(
        s,
        "carbon price: {}",
        r.carbon_price.map_or("none".into(), |p| format!("{p} yen/t"))
    );
    let _ = writeln!(s, "objective: {}", r.objective);
    let _ = writeln!(s, "gap: {}", r.gap);
    let _ = writeln!(s, "iterations: {}", r.iterations);
    if !r.non_monotone.is_empty() {
        let _ = writeln!(s, "non-monotone probe pairs: {:?}", r.non_monotone);
    }
    if !r.warm_starts_used.is_empty() {
        let _ = writeln!(s, "warm starts used: {}", r.warm_starts_used.join(", "));
    }
    s
}

/// Re-dispatches the found plan year by year and dumps every real branch
/// flow. The tax framework's operator dispatches under its found rate;
/// everyone else dispatches on cost alone.
fn dispatch_csv(run: &LoadedRun, r: &FrameworkResult) -> Result<String, CliError> {
    let price = if r.framework == "f2" {
        r.carbon_price.unwrap_or(0.0)
    } else {
        0.0
    };
    let years = run.econ.expand(&run.set);
    let real = run.topo.real_branches();
    let mut csv = String::from("year,day,source_day,weight,hour,branch,flow_mw\n");
    for (y, set) in years.iter().enumerate() {
        for d in 0..set.days.len() {
            let ctx = DayContext::new(&run.hub, &run.topo, set, d);
            let out = solve_day(
                &ctx,
                &r.plan,
                DispatchMode::CostThenEmissions,
                price,
                &run.opts.milp.lp,
            )
            .map_err(|e| CliError::Data(e.to_string()))?;
            let day = &set.days[d];
            for t in 0..set.periods {
                for &b in &real {
                    let flow = out.solution.values[out.layout.flow[b][t]];
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{}",
                        y + 1,
                        d + 1,
                        day.source_day,
                        day.weight,
                        t,
                        run.topo.branches[b].name,
                        flow,
                    );
                }
            }
        }
    }
    Ok(csv)
}

// ---------------------------------------------------------------------------
// pareto

fn cmd_pareto(args: &ManifestArgs) -> Result<i32, CliError> {
    let run = load_run(&args.manifest)?;
    let section = match &run.pareto {
        Some(p) => p,
        None => {
            return Err(CliError::Usage(
                "the manifest has no [pareto] section".into(),
            ))
        }
    };
    let mut frameworks = section.frameworks.clone();
    if frameworks.is_empty() {
        if let Some(s) = &run.solve {
            frameworks.push(s.framework.clone());
        }
    }
    if frameworks.is_empty() {
        return Err(CliError::Usage(
            "[pareto] names no frameworks and there is no [solve] framework to fall back on"
                .into(),
        ))
    }
    for id in &frameworks {
        check_framework_id(id)?;
    }

    let targets: Vec<f64> = match (&section.targets, section.resolution) {
        (Some(t), _) if !t.is_empty() => {
            for &v in t {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::Data(format!(
                        "targets must be positive and finite, got {v}"
                    )));
                }
            }
            let mut t = t.clone();
            t.sort_by(f64::total_cmp);
            t
        }
        (_, Some(resolution)) => {
            if resolution == 0 {
                return Err(CliError::Usage("resolution must be at least 1".into()));
            }
            // One shared ladder, scaled by the first framework's
            // unconstrained heaviest year, so frontiers align row by row.
            let baseline =
                sweep_baseline(&frameworks[0], &run.hub, &run.topo, &run.set, &run.econ, &run.opts)
                    .map_err(framework_err)?;
            (1..=resolution)
                .map(|k| baseline.max_year_emissions * k as f64 / resolution as f64)
                .collect()
        }
        _ => {
            return Err(CliError::Usage(
                "[pareto] needs either targets or a resolution".into(),
            ))
        }
    };

    fs::create_dir_all(&run.output_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", run.output_dir.display())))?;

    let mut all_points: Vec<(String, Vec<ParetoPoint>)> = Vec::new();
    for id in &frameworks {
        let points =
            pareto_sweep_targets(id, &run.hub, &run.topo, &run.set, &run.econ, &run.opts, &targets)
                .map_err(framework_err)?;
        write_file(
            &run.output_dir.join(format!("{id}.frontier.csv")),
            &frontier_csv(&points),
        )?;
        all_points.push((id.clone(), points));
    }
    if all_points.len() > 1 {
        write_file(
            &run.output_dir.join("frontier_combined.csv"),
            &combined_csv(&all_points),
        )?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "seed: {}", run.seed);
    let mut any_solved = false;
    for (id, points) in &all_points {
        let solved = points.iter().filter(|p| p.result.is_some()).count();
        any_solved |= solved > 0;
        let _ = writeln!(summary, "{id}: {solved} of {} targets solved", points.len());
        for p in points {
            let _ = writeln!(summary, "  {} t -> {} ({})", p.target, p.upper, p.source);
        }
    }
    write_file(&run.output_dir.join("pareto.summary.txt"), &summary)?;
    print!("{summary}");

    if any_solved {
        Ok(0)
    } else {
        Err(CliError::Data("no target was solved by any framework".into()))
    }
}

fn framework_err(e: FrameworkError) -> CliError {
    match e {
        FrameworkError::Solver(m) => CliError::Solver(m),
        other => CliError::Data(other.to_string()),
    }
}

fn frontier_csv(points: &[ParetoPoint]) -> String {
    let mut csv = String::from(FRONTIER_HEADER);
    csv.push('\n');
    for p in points {
        let (invest, operate, price, achieved) = match &p.result {
            Some(r) => (
                fmt_opt(Some(r.invest)),
                fmt_opt(Some(r.operate_npv)),
                fmt_opt(r.carbon_price),
                fmt_opt(Some(r.max_year_emissions)),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let total = if p.upper.is_finite() {
            format!("{}", p.upper)
        } else {
            String::new()
        };
        let gap = if p.gap().is_finite() {
            format!("{}", p.gap())
        } else {
            String::new()
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            p.target, total, invest, operate, price, achieved, gap, p.source
        );
    }
    csv
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v}"))
}

/// One row per target, one total column per framework, for side-by-side
/// comparison. All sweeps ran the same ladder, so rows align by index.
fn combined_csv(all: &[(String, Vec<ParetoPoint>)]) -> String {
    let mut csv = String::from("target_tCO2e");
    for (id, _) in all {
        let _ = write!(csv, ",{id}_total");
    }
    csv.push('\n');
    let rows = all.first().map_or(0, |(_, p)| p.len());
    for k in 0..rows {
        let _ = write!(csv, "{}", all[0].1[k].target);
        for (_, points) in all {
            if points[k].upper.is_finite() {
                let _ = write!(csv, ",{}", points[k].upper);
            } else {
                csv.push(',');
            }
        }
        csv.push('\n');
    }
    csv
}

// ---------------------------------------------------------------------------
// report

fn cmd_report(args: &ManifestArgs) -> Result<i32, CliError> {
    let run = load_run(&args.manifest)?;

    // Candidate frameworks: whatever the manifest mentions anywhere.
    let mut ids: Vec<String> = Vec::new();
    if let Some(s) = &run.solve {
        ids.push(s.framework.clone());
    }
    if let Some(p) = &run.pareto {
        ids.extend(p.frameworks.iter().cloned());
    }
    ids.sort();
    ids.dedup();

    // Rows in the shape of a cost-breakdown table: target, total,
    // investment, net operational.
    let mut rows: Vec<(String, String, f64, f64, f64)> = Vec::new();
    for id in &ids {
        let result_path = run.output_dir.join(format!("{id}.result.json"));
        if let Ok(text) = fs::read_to_string(&result_path) {
            let doc: ResultDocument = serde_json::from_str(&text).map_err(|e| {
                CliError::Data(format!("cannot parse {}: {e}", result_path.display()))
            })?;
            let r = doc.result;
            let target = r.emission_cap.map_or("unconstrained".into(), |c| format!("{c:.3}"));
            rows.push((id.clone(), target, r.total, r.invest, r.operate_npv));
        }
        let frontier_path = run.output_dir.join(format!("{id}.frontier.csv"));
        if let Ok(text) = fs::read_to_string(&frontier_path) {
            for row in parse_frontier(&text, &frontier_path)? {
                rows.push((id.clone(), format!("{:.3}", row.0), row.1, row.2, row.3));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "nothing to report in {}; run solve or pareto first",
            run.output_dir.display()
        )));
    }

    let mut out = String::new();
    let _ = writeln!(out, "cost breakdown by framework and emission target");
    let _ = writeln!(
        out,
        "{:<12} {:>16} {:>16} {:>16} {:>18}",
        "framework", "target [t]", "total [yen]", "invest [yen]", "operating [yen]"
    );
    for (id, target, total, invest, operate) in &rows {
        let _ = writeln!(
            out,
            "{id:<12} {target:>16} {total:>16.2} {invest:>16.2} {operate:>18.2}"
        );
    }

    let dims = model_dims(&run);
    let counts = count_complexity(&dims);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "single-level model size forecast (symmetric-role formulas, family-max bit widths)"
    );
    let _ = writeln!(
        out,
        "  {} scenario days x {} periods x {} years",
        dims.scenarios, dims.periods, dims.years
    );
    let _ = writeln!(out, "  integer sizing decisions: {}", counts.integer_vars);
    let _ = writeln!(out, "  binary variables: {}", counts.binary_vars);
    let _ = writeln!(out, "  continuous variables: {}", counts.continuous_vars);
    let _ = writeln!(out, "  constraint rows: {}", counts.constraint_rows);

    write_file(&run.output_dir.join("report.txt"), &out)?;
    print!("{out}");
    Ok(0)
}

/// Reads back the frontier rows this tool wrote: (target, total, invest,
/// operate) for rows whose rung produced a result.
fn parse_frontier(text: &str, path: &Path) -> Result<Vec<(f64, f64, f64, f64)>, CliError> {
    let bad = |line: usize, m: String| {
        CliError::Data(format!("{} line {line}: {m}", path.display()))
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == FRONTIER_HEADER => {}
        Some((_, h)) => return Err(bad(1, format!("bad header '{h}'"))),
        None => return Err(bad(1, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 8 {
            return Err(bad(i + 1, format!("expected 8 fields, found {}", fields.len())));
        }
        if fields[1].is_empty() {
            continue; // failed rung
        }
        let num = |k: usize| -> Result<f64, CliError> {
            fields[k]
                .parse()
                .map_err(|_| bad(i + 1, format!("column {}: not a number: '{}'", k + 1, fields[k])))
        };
        rows.push((num(0)?, num(1)?, num(2)?, num(3)?));
    }
    Ok(rows)
}

/// Structural dimensions for the size forecast. The closed forms assume
/// every energy has one connection and uniform bit widths, so bit widths
/// enter at their family maximum; the forecast is an upper bound for
/// leaner hubs.
fn model_dims(run: &LoadedRun) -> ModelDims {
    let hub = &run.hub;
    ModelDims {
        energies: hub.energies.len(),
        branches: run.topo.branches.len(),
        out_ports: run.topo.out_port_count(),
        converters: hub.converters.len(),
        storages: hub.storages.len(),
        scenarios: run.set.days.len(),
        periods: run.set.periods,
        years: run.econ.years.max(1),
        cap_bits: hub.connections.iter().map(|c| c.cap_bits).max().unwrap_or(0),
        power_bits: hub.storages.iter().map(|s| s.power_bits).max().unwrap_or(0),
        energy_bits: hub.storages.iter().map(|s| s.energy_bits).max().unwrap_or(0),
        unit_bits: hub.converters.iter().map(|c| c.unit_bits).max().unwrap_or(0),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot encode result: {e}")))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    fs::write(path, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}
