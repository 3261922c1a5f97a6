//! C ABI over the planning optimizer.
//!
//! Everything crosses the boundary through opaque handles and status
//! codes. A non-zero status leaves a human-readable message in a
//! thread-local slot readable via [`hp_last_error`]; the message stays
//! valid until the next `hp_` call on the same thread. Handles are freed
//! by their matching `_free` function and by nothing else; passing a
//! handle to any other library's allocator is undefined. All functions
//! catch Rust panics and turn them into [`HpStatus::Panic`] rather than
//! unwinding across the boundary.
//!
//! The matching C header is generated into `include/hubplan.h` at build
//! time and committed with the crate.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use hubplan::frameworks::{
    solve_framework, EconomicConfig, FrameworkError, FrameworkOptions, FrameworkResult,
};
use hubplan::hub::{Hub, Topology};
use hubplan::scenarios::{reduce_days, ScenarioSet, SeriesBundle, YearSeries};

/// Outcome of a call. Zero is success; anything else is an error whose
/// message is readable through `hp_last_error`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HpStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Input data failed to parse or validate.
    Data = 3,
    /// The request itself was malformed, e.g. an unknown framework id.
    Usage = 4,
    /// No plan can reach the requested emission target.
    Unreachable = 5,
    /// A solver budget ran out before the answer was proven.
    Budget = 6,
    /// An internal invariant failed; the library state is still sound but
    /// the call produced nothing.
    Panic = 7,
}

/// A validated hub together with its flow topology.
pub struct HpHub {
    hub: Hub,
    topo: Topology,
}

/// A reduced set of weighted typical days.
pub struct HpScenarios {
    set: ScenarioSet,
}

/// A solved framework run.
pub struct HpResult {
    result: FrameworkResult,
}

/// Horizon economics in plain C shape. Negative `emission_cap` means no
/// cap; negative `carbon_price` means no externally imposed rate.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HpEconomics {
    /// Horizon length in years; everything is built in year zero.
    pub years: u32,
    /// Annual discount rate on operating cash flows.
    pub discount_rate: f64,
    /// Annual growth of traded prices.
    pub fuel_growth: f64,
    /// Annual growth of demand.
    pub demand_growth: f64,
    /// Emission ceiling per year in tonnes; negative for none.
    pub emission_cap: f64,
    /// Imposed carbon rate in yen per tonne; negative for none.
    pub carbon_price: f64,
}

/// The headline figures of a solved run.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HpSummary {
    /// Investment cost, yen.
    pub invest: f64,
    /// Discounted net operating cost, yen.
    pub operate_npv: f64,
    /// Discounted carbon charges, yen.
    pub tax_npv: f64,
    /// Investment plus both discounted streams, yen.
    pub total: f64,
    /// Heaviest year's emissions, tonnes.
    pub max_year_emissions: f64,
    /// Carbon rate the run settled on, yen per tonne; negative if none.
    pub carbon_price: f64,
    /// Objective value of the defining solve.
    pub objective: f64,
    /// Relative optimality gap of the defining solve.
    pub gap: f64,
    /// Outer iterations spent: probes, cut rounds, or one.
    pub iterations: u32,
    /// True when the run proved optimality within tolerance.
    pub optimal: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: HpStatus, message: &str) -> HpStatus {
    set_error(message);
    status
}

/// Runs a closure with panics converted to `HpStatus::Panic`.
fn guarded(f: impl FnOnce() -> HpStatus) -> HpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".to_string());
            fail(HpStatus::Panic, &message)
        }
    }
}

/// # Safety
/// `ptr` must be null or a NUL-terminated string.
unsafe fn utf8_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, HpStatus> {
    if ptr.is_null() {
        return Err(fail(HpStatus::NullArgument, &format!("{name} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(HpStatus::InvalidUtf8, &format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, HpStatus> {
    // Safety: the caller promised a writable location; null is the only
    // unchecked misuse we can catch.
    match unsafe { ptr.as_mut() } {
        Some(slot) => Ok(slot),
        None => Err(fail(HpStatus::NullArgument, &format!("{name} is null"))),
    }
}

fn framework_status(e: &FrameworkError) -> HpStatus {
    match e {
        FrameworkError::InfeasibleCap { .. } | FrameworkError::PriceCeiling { .. } => {
            HpStatus::Unreachable
        }
        FrameworkError::Solver(_) => HpStatus::Budget,
        FrameworkError::Operation(_) => HpStatus::Data,
    }
}

// ---------------------------------------------------------------------------
// Library-wide.

/// Version of the library as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on this thread. Never null; empty
/// before the first failure. Valid until the next `hp_` call on the same
/// thread.
#[no_mangle]
pub extern "C" fn hp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must have come from an `hp_` function documented to transfer
/// ownership, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------------------
// Hubs.

/// Parses and validates a hub description file (TOML). On success stores a
/// new handle in `out`; free it with `hp_hub_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_hub_from_toml_file(
    path: *const c_char,
    out: *mut *mut HpHub,
) -> HpStatus {
    guarded(|| {
        let (path, out) = match (utf8_arg(path, "path"), out_arg(out, "out")) {
            (Ok(p), Ok(o)) => (p, o),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        match Hub::from_toml_path(Path::new(path)) {
            Ok(hub) => match hub.topology() {
                Ok(topo) => {
                    *out = Box::into_raw(Box::new(HpHub { hub, topo }));
                    HpStatus::Ok
                }
                Err(e) => fail(HpStatus::Data, &e.to_string()),
            },
            Err(e) => fail(HpStatus::Data, &e.to_string()),
        }
    })
}

/// Like `hp_hub_from_toml_file` but parsing an in-memory TOML string.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_hub_from_toml_str(
    text: *const c_char,
    out: *mut *mut HpHub,
) -> HpStatus {
    guarded(|| {
        let (text, out) = match (utf8_arg(text, "text"), out_arg(out, "out")) {
            (Ok(t), Ok(o)) => (t, o),
            (Err(e), _) | (_, Err(e)) => return e,
        };
        match Hub::from_toml_str(text).and_then(|hub| {
            let topo = hub.topology()?;
            Ok(HpHub { hub, topo })
        }) {
            Ok(handle) => {
                *out = Box::into_raw(Box::new(handle));
                HpStatus::Ok
            }
            Err(e) => fail(HpStatus::Data, &e.to_string()),
        }
    })
}

/// Releases a hub handle. Null is ignored.
///
/// # Safety
/// `hub` must have come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_hub_free(hub: *mut HpHub) {
    if !hub.is_null() {
        drop(Box::from_raw(hub));
    }
}

// ---------------------------------------------------------------------------
// Scenarios.

/// Loads one CSV data series per name and reduces the year to
/// `typical_days` weighted typical days. `names` and `paths` are parallel
/// arrays of length `count`; each name is a carrier or a connection's
/// series override, matching the hub the scenarios will be solved with.
/// On success stores a new handle in `out`; free it with
/// `hp_scenarios_free`.
///
/// # Safety
/// `names` and `paths` must point to `count` NUL-terminated strings each;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_scenarios_load(
    names: *const *const c_char,
    paths: *const *const c_char,
    count: usize,
    dt_hours: f64,
    typical_days: usize,
    seed: u64,
    out: *mut *mut HpScenarios,
) -> HpStatus {
    guarded(|| {
        let out = match out_arg(out, "out") {
            Ok(o) => o,
            Err(e) => return e,
        };
        if count > 0 && (names.is_null() || paths.is_null()) {
            return fail(HpStatus::NullArgument, "names or paths is null");
        }
        let mut bundle = SeriesBundle::new(dt_hours);
        for i in 0..count {
            let name = match utf8_arg(*names.add(i), "names[i]") {
                Ok(n) => n,
                Err(e) => return e,
            };
            let path = match utf8_arg(*paths.add(i), "paths[i]") {
                Ok(p) => p,
                Err(e) => return e,
            };
            let series = match YearSeries::read_csv(&PathBuf::from(path)) {
                Ok(s) => s,
                Err(e) => return fail(HpStatus::Data, &e.to_string()),
            };
            if let Err(e) = bundle.insert(name, series) {
                return fail(HpStatus::Data, &e.to_string());
            }
        }
        match reduce_days(&bundle, typical_days, seed) {
            Ok(set) => {
                *out = Box::into_raw(Box::new(HpScenarios { set }));
                HpStatus::Ok
            }
            Err(e) => fail(HpStatus::Data, &e.to_string()),
        }
    })
}

/// Number of typical days in a scenario handle.
///
/// # Safety
/// `scenarios` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_scenarios_day_count(scenarios: *const HpScenarios) -> usize {
    scenarios.as_ref().map_or(0, |s| s.set.days.len())
}

/// Releases a scenario handle. Null is ignored.
///
/// # Safety
/// `scenarios` must have come from this library and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_scenarios_free(scenarios: *mut HpScenarios) {
    if !scenarios.is_null() {
        drop(Box::from_raw(scenarios));
    }
}

// ---------------------------------------------------------------------------
// Solving.

/// The default horizon: twenty years at ten percent, prices growing two
/// percent a year and demand four, no cap, no imposed rate.
#[no_mangle]
pub extern "C" fn hp_economics_default() -> HpEconomics {
    let d = EconomicConfig::default();
    HpEconomics {
        years: d.years as u32,
        discount_rate: d.discount_rate,
        fuel_growth: d.fuel_growth,
        demand_growth: d.demand_growth,
        emission_cap: -1.0,
        carbon_price: -1.0,
    }
}

/// Solves one framework — "f1", "f1-benders", "f2", "f3", or "f4" — for
/// the given hub, scenarios, and economics. On success stores a new handle
/// in `out`; free it with `hp_result_free`.
///
/// # Safety
/// All handles must be live handles from this library; `framework` must be
/// a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_solve(
    hub: *const HpHub,
    scenarios: *const HpScenarios,
    framework: *const c_char,
    economics: *const HpEconomics,
    out: *mut *mut HpResult,
) -> HpStatus {
    guarded(|| {
        let out = match out_arg(out, "out") {
            Ok(o) => o,
            Err(e) => return e,
        };
        let (Some(hub), Some(scenarios), Some(economics)) =
            (hub.as_ref(), scenarios.as_ref(), economics.as_ref())
        else {
            return fail(HpStatus::NullArgument, "hub, scenarios, or economics is null");
        };
        let framework = match utf8_arg(framework, "framework") {
            Ok(f) => f,
            Err(e) => return e,
        };
        if !["f1", "f1-benders", "f2", "f3", "f4"].contains(&framework) {
            return fail(HpStatus::Usage, &format!("unknown framework '{framework}'"));
        }
        if economics.years == 0 {
            return fail(HpStatus::Usage, "years must be at least 1");
        }
        let econ = EconomicConfig {
            years: economics.years as usize,
            discount_rate: economics.discount_rate,
            fuel_growth: economics.fuel_growth,
            demand_growth: economics.demand_growth,
            emission_cap: (economics.emission_cap >= 0.0).then_some(economics.emission_cap),
            carbon_price: (economics.carbon_price >= 0.0).then_some(economics.carbon_price),
        };
        match solve_framework(
            framework,
            &hub.hub,
            &hub.topo,
            &scenarios.set,
            &econ,
            &FrameworkOptions::default(),
        ) {
            Ok(result) => {
                *out = Box::into_raw(Box::new(HpResult { result }));
                HpStatus::Ok
            }
            Err(e) => fail(framework_status(&e), &e.to_string()),
        }
    })
}

// ---------------------------------------------------------------------------
// Results.

/// Copies the headline figures of a solved run into `summary`.
///
/// # Safety
/// `result` must be a live handle from this library; `summary` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_summary(
    result: *const HpResult,
    summary: *mut HpSummary,
) -> HpStatus {
    guarded(|| {
        let summary = match out_arg(summary, "summary") {
            Ok(s) => s,
            Err(e) => return e,
        };
        let Some(handle) = result.as_ref() else {
            return fail(HpStatus::NullArgument, "result is null");
        };
        let r = &handle.result;
        *summary = HpSummary {
            invest: r.invest,
            operate_npv: r.operate_npv,
            tax_npv: r.tax_npv,
            total: r.total,
            max_year_emissions: r.max_year_emissions,
            carbon_price: r.carbon_price.unwrap_or(-1.0),
            objective: r.objective,
            gap: r.gap,
            iterations: r.iterations as u32,
            optimal: r.status == "optimal",
        };
        HpStatus::Ok
    })
}

/// Sizes of the solved plan's three device families: connections,
/// converters, storages.
///
/// # Safety
/// `result` must be a live handle; the three out-pointers must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_plan_counts(
    result: *const HpResult,
    connections: *mut usize,
    converters: *mut usize,
    storages: *mut usize,
) -> HpStatus {
    guarded(|| {
        let (Ok(n_conn), Ok(n_conv), Ok(n_sto)) = (
            out_arg(connections, "connections"),
            out_arg(converters, "converters"),
            out_arg(storages, "storages"),
        ) else {
            return HpStatus::NullArgument;
        };
        let Some(handle) = result.as_ref() else {
            return fail(HpStatus::NullArgument, "result is null");
        };
        *n_conn = handle.result.plan.connection_caps.len();
        *n_conv = handle.result.plan.converter_units.len();
        *n_sto = handle.result.plan.storage_power.len();
        HpStatus::Ok
    })
}

/// Contracted capacity of connection `index`, megawatts.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_connection_cap(
    result: *const HpResult,
    index: usize,
    out: *mut f64,
) -> HpStatus {
    plan_entry(result, out, |p| p.connection_caps.get(index).copied())
}

/// Installed units of converter `index`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_converter_units(
    result: *const HpResult,
    index: usize,
    out: *mut f64,
) -> HpStatus {
    plan_entry(result, out, |p| p.converter_units.get(index).copied())
}

/// Power rating of storage `index`, megawatts.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_storage_power(
    result: *const HpResult,
    index: usize,
    out: *mut f64,
) -> HpStatus {
    plan_entry(result, out, |p| p.storage_power.get(index).copied())
}

/// Energy rating of storage `index`, megawatt hours.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_storage_energy(
    result: *const HpResult,
    index: usize,
    out: *mut f64,
) -> HpStatus {
    plan_entry(result, out, |p| p.storage_energy.get(index).copied())
}

unsafe fn plan_entry(
    result: *const HpResult,
    out: *mut f64,
    get: impl FnOnce(&hubplan::operation::InvestmentPlan) -> Option<f64>,
) -> HpStatus {
    guarded(|| {
        let out = match out_arg(out, "out") {
            Ok(o) => o,
            Err(e) => return e,
        };
        let Some(handle) = result.as_ref() else {
            return fail(HpStatus::NullArgument, "result is null");
        };
        match get(&handle.result.plan) {
            Some(v) => {
                *out = v;
                HpStatus::Ok
            }
            None => fail(HpStatus::Usage, "plan index out of range"),
        }
    })
}

/// Serializes the full result to JSON. On success stores a newly allocated
/// string in `out`; free it with `hp_string_free`.
///
/// # Safety
/// `result` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hp_result_to_json(
    result: *const HpResult,
    out: *mut *mut c_char,
) -> HpStatus {
    guarded(|| {
        let out = match out_arg(out, "out") {
            Ok(o) => o,
            Err(e) => return e,
        };
        let Some(handle) = result.as_ref() else {
            return fail(HpStatus::NullArgument, "result is null");
        };
        match serde_json::to_string_pretty(&handle.result) {
            Ok(json) => match CString::new(json) {
                Ok(c) => {
                    *out = c.into_raw();
                    HpStatus::Ok
                }
                Err(_) => fail(HpStatus::Panic, "serialized JSON contained a NUL byte"),
            },
            Err(e) => fail(HpStatus::Panic, &e.to_string()),
        }
    })
}

/// Releases a result handle. Null is ignored.
///
/// # Safety
/// `result` must have come from this library and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn hp_result_free(result: *mut HpResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
