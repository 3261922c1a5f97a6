//! Exercises the C ABI from Rust: the full parse-load-solve-read cycle,
//! every error path that maps to a status code, and the generated header.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use hubplan_ffi::*;

fn c(text: &str) -> CString {
    CString::new(text).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(hp_last_error()) }
        .to_string_lossy()
        .into_owned()
}

/// Hub, scenario, and result handles for the reference study, solved
/// through the C surface.
fn solve_reference(framework: &str, emission_cap: f64) -> (HpStatus, *mut HpResult) {
    let dir = tempfile::tempdir().unwrap();
    hubplan::fixtures::write_fixture_files(dir.path()).unwrap();

    let hub_path = c(dir.path().join("hub.toml").to_str().unwrap());
    let mut hub: *mut HpHub = ptr::null_mut();
    let status = unsafe { hp_hub_from_toml_file(hub_path.as_ptr(), &mut hub) };
    assert_eq!(status, HpStatus::Ok, "{}", last_error());

    let names: Vec<CString> = ["electricity", "gas", "heat"].iter().map(|n| c(n)).collect();
    let paths: Vec<CString> = ["electricity", "gas", "heat"]
        .iter()
        .map(|n| c(dir.path().join(format!("{n}.csv")).to_str().unwrap()))
        .collect();
    let name_ptrs: Vec<*const c_char> = names.iter().map(|s| s.as_ptr()).collect();
    let path_ptrs: Vec<*const c_char> = paths.iter().map(|s| s.as_ptr()).collect();
    let mut scenarios: *mut HpScenarios = ptr::null_mut();
    let status = unsafe {
        hp_scenarios_load(
            name_ptrs.as_ptr(),
            path_ptrs.as_ptr(),
            3,
            1.0,
            1,
            0,
            &mut scenarios,
        )
    };
    assert_eq!(status, HpStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { hp_scenarios_day_count(scenarios) }, 1);

    let mut econ = hp_economics_default();
    econ.emission_cap = emission_cap;
    let fw = c(framework);
    let mut result: *mut HpResult = ptr::null_mut();
    let status = unsafe { hp_solve(hub, scenarios, fw.as_ptr(), &econ, &mut result) };

    unsafe {
        hp_scenarios_free(scenarios);
        hp_hub_free(hub);
    }
    (status, result)
}

#[test]
fn version_is_a_static_string() {
    let v = unsafe { CStr::from_ptr(hp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn solves_the_reference_study_end_to_end() {
    let (status, result) = solve_reference("f1", -1.0);
    assert_eq!(status, HpStatus::Ok, "{}", last_error());

    let mut summary = HpSummary {
        invest: 0.0,
        operate_npv: 0.0,
        tax_npv: 0.0,
        total: 0.0,
        max_year_emissions: 0.0,
        carbon_price: 0.0,
        objective: 0.0,
        gap: 0.0,
        iterations: 0,
        optimal: false,
    };
    assert_eq!(unsafe { hp_result_summary(result, &mut summary) }, HpStatus::Ok);
    assert!(summary.optimal);
    assert!((summary.invest - 1600.0).abs() < 1e-9, "invest {}", summary.invest);
    assert!(summary.total > 0.0);
    assert!(summary.carbon_price < 0.0, "no rate was imposed or searched");

    let (mut n_conn, mut n_conv, mut n_sto) = (0usize, 0usize, 0usize);
    assert_eq!(
        unsafe { hp_result_plan_counts(result, &mut n_conn, &mut n_conv, &mut n_sto) },
        HpStatus::Ok
    );
    assert_eq!((n_conn, n_conv, n_sto), (2, 2, 0));

    let mut units = -1.0;
    assert_eq!(unsafe { hp_result_converter_units(result, 1, &mut units) }, HpStatus::Ok);
    assert_eq!(units, 2.0, "the run settles on two gas boiler units");
    assert_eq!(
        unsafe { hp_result_converter_units(result, 9, &mut units) },
        HpStatus::Usage,
        "out-of-range index"
    );

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(unsafe { hp_result_to_json(result, &mut json) }, HpStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { hp_string_free(json) };
    let parsed: hubplan::frameworks::FrameworkResult = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.framework, "f1");
    assert!((parsed.total - summary.total).abs() <= 1e-9 * summary.total);

    unsafe { hp_result_free(result) };
}

#[test]
fn null_arguments_are_reported_not_crashed() {
    let mut hub: *mut HpHub = ptr::null_mut();
    assert_eq!(
        unsafe { hp_hub_from_toml_file(ptr::null(), &mut hub) },
        HpStatus::NullArgument
    );
    assert!(last_error().contains("null"), "{}", last_error());

    let path = c("hub.toml");
    assert_eq!(
        unsafe { hp_hub_from_toml_file(path.as_ptr(), ptr::null_mut()) },
        HpStatus::NullArgument
    );

    let mut json: *mut std::ffi::c_char = ptr::null_mut();
    assert_eq!(
        unsafe { hp_result_to_json(ptr::null(), &mut json) },
        HpStatus::NullArgument
    );
}

#[test]
fn bad_data_and_bad_requests_get_distinct_codes() {
    let text = c("name = \"x\"\n[[energies]\n");
    let mut hub: *mut HpHub = ptr::null_mut();
    assert_eq!(
        unsafe { hp_hub_from_toml_str(text.as_ptr(), &mut hub) },
        HpStatus::Data
    );
    assert!(!last_error().is_empty());

    let (status, _) = solve_reference("f9", -1.0);
    assert_eq!(status, HpStatus::Usage);
    assert!(last_error().contains("f9"), "{}", last_error());
}

#[test]
fn an_unreachable_cap_is_its_own_status() {
    let (status, _) = solve_reference("f1", 100.0);
    assert_eq!(status, HpStatus::Unreachable, "{}", last_error());
    assert!(last_error().contains("100"), "{}", last_error());
}

#[test]
fn the_committed_header_matches_the_surface() {
    let header = include_str!("../include/hubplan.h");
    for symbol in [
        "HP_STATUS_OK",
        "HP_STATUS_UNREACHABLE",
        "typedef struct HpHub HpHub;",
        "typedef struct HpScenarios HpScenarios;",
        "typedef struct HpResult HpResult;",
        "hp_hub_from_toml_file",
        "hp_scenarios_load",
        "hp_solve",
        "hp_result_summary",
        "hp_result_to_json",
        "hp_string_free",
        "hp_last_error",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}
