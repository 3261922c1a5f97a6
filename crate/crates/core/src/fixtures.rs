//! Worked example hubs used across the test suite and shipped as starter
//! files.
//!
//! `two_boiler` is deliberately tiny: three carriers, two competing heat
//! paths, no storage. Every plan it admits can be enumerated by hand, which
//! makes it the reference instance for exactness checks. `campus` is a
//! fuller hub — four carriers, seven converters, four storages, a rooftop
//! generator — sized like a district energy system.

use std::path::Path;

use crate::hub::{
    Converter, ConverterOutput, Energy, GridConnection, Hub, Storage,
};
use crate::scenarios::{reduce_days, ScenarioError, ScenarioSet, SeriesBundle, YearSeries};

/// Three carriers, two boilers, no storage; heat is the only demand.
///
/// Electricity import costs more per megawatt hour than gas but the electric
/// boiler wastes nothing, so cheap-versus-clean trade-offs show up even at
/// this size. Connection capacity is free so plans differ only in devices
/// and contracted steps.
pub fn two_boiler() -> Hub {
    let electricity = 0;
    let gas = 1;
    let heat = 2;
    Hub {
        name: "two-boiler".into(),
        energies: vec![
            Energy {
                name: "electricity".into(),
                demanded: false,
            },
            Energy {
                name: "gas".into(),
                demanded: false,
            },
            Energy {
                name: "heat".into(),
                demanded: true,
            },
        ],
        connections: vec![
            GridConnection {
                name: "grid-electricity".into(),
                energy: electricity,
                importable: true,
                exportable: false,
                cap_step: 0.25,
                cap_bits: 4,
                invest: 0.0,
                series: None,
            },
            GridConnection {
                name: "grid-gas".into(),
                energy: gas,
                importable: true,
                exportable: false,
                cap_step: 0.25,
                cap_bits: 4,
                invest: 0.0,
                series: None,
            },
        ],
        converters: vec![
            Converter {
                name: "electric-boiler".into(),
                input: electricity,
                outputs: vec![ConverterOutput {
                    energy: heat,
                    efficiency: 1.0,
                }],
                unit_size: 1.0,
                unit_bits: 4,
                invest: 1000.0,
            },
            Converter {
                name: "gas-boiler".into(),
                input: gas,
                outputs: vec![ConverterOutput {
                    energy: heat,
                    efficiency: 0.9,
                }],
                unit_size: 2.0,
                unit_bits: 4,
                invest: 800.0,
            },
        ],
        storages: vec![],
    }
}

/// The `two_boiler` hub in its on-disk form.
pub fn two_boiler_toml() -> String {
    r#"name = "two-boiler"

[[energies]]
name = "electricity"

[[energies]]
name = "gas"

[[energies]]
name = "heat"
demand = true

[[grid]]
name = "grid-electricity"
energy = "electricity"
import = true
cap_step = 0.25
cap_bits = 4

[[grid]]
name = "grid-gas"
energy = "gas"
import = true
cap_step = 0.25
cap_bits = 4

[[converters]]
name = "electric-boiler"
input = "electricity"
output = [{ energy = "heat", efficiency = 1.0 }]
unit_size = 1.0
unit_bits = 4
invest = 1000.0

[[converters]]
name = "gas-boiler"
input = "gas"
output = [{ energy = "heat", efficiency = 0.9 }]
unit_size = 2.0
unit_bits = 4
invest = 800.0
"#
    .to_string()
}

/// District-scale hub: electricity, heat, and cooling demands, gas as an
/// intermediate carrier, a rooftop generator on its own connection, and a
/// storage on every carrier.
pub fn campus() -> Hub {
    let electricity = 0;
    let heat = 1;
    let cooling = 2;
    let gas = 3;
    Hub {
        name: "campus".into(),
        energies: vec![
            Energy {
                name: "electricity".into(),
                demanded: true,
            },
            Energy {
                name: "heat".into(),
                demanded: true,
            },
            Energy {
                name: "cooling".into(),
                demanded: true,
            },
            Energy {
                name: "gas".into(),
                demanded: false,
            },
        ],
        connections: vec![
            GridConnection {
                name: "grid-electricity".into(),
                energy: electricity,
                importable: true,
                exportable: true,
                cap_step: 0.5,
                cap_bits: 10,
                invest: 120.0,
                series: None,
            },
            GridConnection {
                name: "rooftop-pv".into(),
                energy: electricity,
                importable: true,
                exportable: false,
                cap_step: 0.1,
                cap_bits: 10,
                invest: 900.0,
                series: Some("rooftop-pv".into()),
            },
            GridConnection {
                name: "grid-gas".into(),
                energy: gas,
                importable: true,
                exportable: false,
                cap_step: 0.5,
                cap_bits: 10,
                invest: 40.0,
                series: None,
            },
            GridConnection {
                name: "district-heat".into(),
                energy: heat,
                importable: true,
                exportable: false,
                cap_step: 0.5,
                cap_bits: 8,
                invest: 60.0,
                series: None,
            },
        ],
        converters: vec![
            Converter {
                name: "cogenerator".into(),
                input: gas,
                outputs: vec![
                    ConverterOutput {
                        energy: electricity,
                        efficiency: 0.35,
                    },
                    ConverterOutput {
                        energy: heat,
                        efficiency: 0.45,
                    },
                ],
                unit_size: 0.5,
                unit_bits: 4,
                invest: 550.0,
            },
            Converter {
                name: "gas-boiler".into(),
                input: gas,
                outputs: vec![ConverterOutput {
                    energy: heat,
                    efficiency: 0.9,
                }],
                unit_size: 0.5,
                unit_bits: 4,
                invest: 45.0,
            },
            Converter {
                name: "electric-heater".into(),
                input: electricity,
                outputs: vec![ConverterOutput {
                    energy: heat,
                    efficiency: 0.98,
                }],
                unit_size: 0.5,
                unit_bits: 4,
                invest: 35.0,
            },
            Converter {
                name: "heat-pump".into(),
                input: electricity,
                outputs: vec![ConverterOutput {
                    energy: heat,
                    efficiency: 3.5,
                }],
                unit_size: 0.25,
                unit_bits: 4,
                invest: 180.0,
            },
            Converter {
                name: "chiller".into(),
                input: electricity,
                outputs: vec![ConverterOutput {
                    energy: cooling,
                    efficiency: 4.0,
                }],
                unit_size: 0.25,
                unit_bits: 4,
                invest: 120.0,
            },
            Converter {
                name: "absorption-chiller".into(),
                input: heat,
                outputs: vec![ConverterOutput {
                    energy: cooling,
                    efficiency: 0.7,
                }],
                unit_size: 0.5,
                unit_bits: 4,
                invest: 90.0,
            },
            Converter {
                name: "gas-synthesizer".into(),
                input: electricity,
                outputs: vec![ConverterOutput {
                    energy: gas,
                    efficiency: 0.6,
                }],
                unit_size: 0.5,
                unit_bits: 4,
                invest: 300.0,
            },
        ],
        storages: vec![
            Storage {
                name: "battery".into(),
                energy: electricity,
                charge_efficiency: 0.95,
                discharge_efficiency: 0.95,
                power_step: 0.25,
                power_bits: 4,
                energy_step: 0.5,
                energy_bits: 6,
                invest_power: 140.0,
                invest_energy: 70.0,
            },
            Storage {
                name: "heat-tank".into(),
                energy: heat,
                charge_efficiency: 0.9,
                discharge_efficiency: 0.9,
                power_step: 0.25,
                power_bits: 4,
                energy_step: 0.5,
                energy_bits: 6,
                invest_power: 30.0,
                invest_energy: 15.0,
            },
            Storage {
                name: "ice-bank".into(),
                energy: cooling,
                charge_efficiency: 0.9,
                discharge_efficiency: 0.9,
                power_step: 0.25,
                power_bits: 4,
                energy_step: 0.5,
                energy_bits: 6,
                invest_power: 50.0,
                invest_energy: 25.0,
            },
            Storage {
                name: "gas-tank".into(),
                energy: gas,
                charge_efficiency: 0.98,
                discharge_efficiency: 0.98,
                power_step: 0.25,
                power_bits: 4,
                energy_step: 0.5,
                energy_bits: 6,
                invest_power: 20.0,
                invest_energy: 10.0,
            },
        ],
    }
}

/// Tariff and load series for `two_boiler`: a stylized two-period day
/// repeated all year, so every annual figure is just 365 times the daily
/// one and can be checked by hand.
///
/// Electricity imports at 100 ¥/MWh with 0.1 t/MWh; gas at 50 ¥/MWh with
/// 0.181 t/MWh. Heat demand is one megawatt in both periods. Nothing is
/// exportable and every connection is always available.
pub fn two_boiler_bundle() -> SeriesBundle {
    let days = 365;
    let periods = 2;
    let mut bundle = SeriesBundle::new(1.0);

    let mut elec = YearSeries::flat(days, periods);
    let mut gas = YearSeries::flat(days, periods);
    let mut heat = YearSeries::flat(days, periods);
    for d in 0..days {
        for t in 0..periods {
            let i = elec.at(d, t);
            elec.price[i] = 100.0;
            elec.emissions[i] = 0.1;
            gas.price[i] = 50.0;
            gas.emissions[i] = 0.181;
            heat.demand[i] = 1.0;
        }
    }
    bundle.insert("electricity", elec).unwrap();
    bundle.insert("gas", gas).unwrap();
    bundle.insert("heat", heat).unwrap();
    bundle
}

/// `two_boiler_bundle` collapsed to its single typical day (all 365 days
/// are identical, so one cluster loses nothing).
pub fn two_boiler_scenarios() -> ScenarioSet {
    reduce_days(&two_boiler_bundle(), 1, 0).expect("fixture bundle reduces")
}

/// Synthetic but shaped year for `campus`: hourly resolution, seasonal and
/// diurnal structure, all closed-form in day and hour so tests are
/// reproducible without data files.
///
/// Electricity has a day/night tariff and a feed-in price below the import
/// price; gas and district heat cost more in winter; photovoltaic
/// availability follows a daylight bell scaled by season; electric demand
/// peaks in the afternoon, heat in winter mornings, cooling on summer
/// afternoons.
pub fn campus_bundle() -> SeriesBundle {
    let days = 365;
    let periods = 24;
    let mut bundle = SeriesBundle::new(1.0);

    // Season runs 0 (midwinter) to 1 (midsummer) and back.
    let season = |d: usize| {
        let phase = (d as f64 + 0.5) / 365.0 * std::f64::consts::TAU;
        0.5 - 0.5 * phase.cos()
    };

    let mut elec = YearSeries::flat(days, periods);
    let mut pv = YearSeries::flat(days, periods);
    let mut gas = YearSeries::flat(days, periods);
    let mut heat = YearSeries::flat(days, periods);
    let mut cooling = YearSeries::flat(days, periods);

    for d in 0..days {
        let s = season(d);
        for t in 0..periods {
            let i = d * periods + t;
            let daytime = (8..=21).contains(&t);

            elec.price[i] = if daytime { 700.0 } else { 350.0 };
            elec.feedin[i] = 250.0;
            elec.emissions[i] = 0.55;
            let evening = (-((t as f64 - 18.0) / 4.0).powi(2)).exp();
            elec.demand[i] = 2.0 + 1.5 * evening + 0.5 * s;

            // Daylight bell between 06:00 and 18:00, stronger in summer.
            let hour = t as f64 + 0.5;
            let sun = ((hour - 6.0) / 12.0 * std::f64::consts::PI).sin();
            pv.availability[i] = (sun.max(0.0) * (0.45 + 0.55 * s)).min(1.0);

            gas.price[i] = 280.0 + 60.0 * (1.0 - s);
            gas.emissions[i] = 0.181;

            heat.price[i] = 380.0 + 80.0 * (1.0 - s);
            heat.emissions[i] = 0.05;
            let morning = (-((t as f64 - 7.0) / 3.0).powi(2)).exp();
            heat.demand[i] = (1.0 - s) * (1.2 + 2.2 * morning) + 0.2;

            let afternoon = (-((t as f64 - 15.0) / 4.0).powi(2)).exp();
            cooling.demand[i] = s * (0.8 + 2.6 * afternoon);
        }
    }

    bundle.insert("electricity", elec).unwrap();
    bundle.insert("rooftop-pv", pv).unwrap();
    bundle.insert("gas", gas).unwrap();
    bundle.insert("heat", heat).unwrap();
    bundle.insert("cooling", cooling).unwrap();
    bundle
}

/// Writes the `two_boiler` study to `dir` as the files the command line
/// expects: `hub.toml`, one CSV per carrier, and a ready-to-run
/// `manifest.toml`. The directory must already exist.
pub fn write_fixture_files(dir: &Path) -> Result<(), ScenarioError> {
    let io_err = |path: &Path, source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    };

    let hub_path = dir.join("hub.toml");
    std::fs::write(&hub_path, two_boiler_toml()).map_err(|e| io_err(&hub_path, e))?;

    for (name, series) in &two_boiler_bundle().series {
        series.write_csv(&dir.join(format!("{name}.csv")))?;
    }

    // All 365 days are identical, so one typical day is exact.
    let manifest = r#"hub = "hub.toml"
output_dir = "out"
seed = 0
dt_hours = 1.0

[series]
electricity = "electricity.csv"
gas = "gas.csv"
heat = "heat.csv"

[reduction]
typical_days = 1

[economics]
years = 20
discount_rate = 0.10
fuel_growth = 0.02
demand_growth = 0.04

[solve]
framework = "f1"

[pareto]
frameworks = ["f1", "f1-benders"]
resolution = 4
"#;
    let manifest_path = dir.join("manifest.toml");
    std::fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))
}
