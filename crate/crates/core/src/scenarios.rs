//! Time-series data and typical-day reduction.
//!
//! Dispatch is priced against five series per carrier — import price,
//! feed-in remuneration, emission intensity, capacity availability, and
//! demand — sampled over a full year of days. Solving every calendar day is
//! wasteful, so a year is compressed to a handful of representative days by
//! clustering: days are embedded as feature vectors (every series, every
//! period, normalized per column), clustered, and each cluster is
//! represented by its medoid — an actual day from the data, never a
//! synthetic average — weighted by the number of days it stands for.
//! Weights are kept as integer day counts so probabilities stay exact.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Csv {
        path: String,
        line: usize,
        message: String,
    },
    #[error("series '{name}' has {got} {what}, expected {want}")]
    Inconsistent {
        name: String,
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("asked for {wanted} typical days but only {distinct} distinct days exist")]
    TooFewDistinctDays { distinct: usize, wanted: usize },
    #[error("{0}")]
    Invalid(String),
}

pub const SERIES_HEADER: &str = "day,hour,price,feedin,emissions,availability,demand";

/// One carrier's year of data, day-major (`day * periods + hour`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSeries {
    pub days: usize,
    pub periods: usize,
    pub price: Vec<f64>,
    pub feedin: Vec<f64>,
    pub emissions: Vec<f64>,
    pub availability: Vec<f64>,
    pub demand: Vec<f64>,
}

impl YearSeries {
    /// An all-zero series with availability one, for carriers that are
    /// neither traded nor demanded.
    pub fn flat(days: usize, periods: usize) -> YearSeries {
        let n = days * periods;
        YearSeries {
            days,
            periods,
            price: vec![0.0; n],
            feedin: vec![0.0; n],
            emissions: vec![0.0; n],
            availability: vec![1.0; n],
            demand: vec![0.0; n],
        }
    }

    pub fn at(&self, day: usize, hour: usize) -> usize {
        debug_assert!(day < self.days && hour < self.periods);
        day * self.periods + hour
    }

    /// Reads the strict on-disk form: exact header, then one row per
    /// day/hour in order, days numbered from 1 and hours from 0.
    pub fn read_csv(path: &Path) -> Result<YearSeries, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_csv(&text, &path.display().to_string())
    }

    pub fn parse_csv(text: &str, path: &str) -> Result<YearSeries, ScenarioError> {
        let err = |line: usize, message: String| ScenarioError::Csv {
            path: path.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == SERIES_HEADER => {}
            Some((_, h)) => {
                return Err(err(1, format!("bad header '{h}', expected '{SERIES_HEADER}'")))
            }
            None => return Err(err(1, "empty file".into())),
        }

        let mut rows: Vec<(usize, usize, [f64; 5])> = Vec::new();
        for (i, raw) in lines {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(err(
                    line_no,
                    format!("expected 7 fields, found {}", fields.len()),
                ));
            }
            let day: usize = fields[0]
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("column 1 (day): not an integer: '{}'", fields[0])))?;
            let hour: usize = fields[1]
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("column 2 (hour): not an integer: '{}'", fields[1])))?;
            let mut vals = [0.0f64; 5];
            for (k, name) in ["price", "feedin", "emissions", "availability", "demand"]
                .iter()
                .enumerate()
            {
                let cell = fields[k + 2].trim();
                let v: f64 = cell.parse().map_err(|_| {
                    err(
                        line_no,
                        format!("column {} ({name}): not a number: '{cell}'", k + 3),
                    )
                })?;
                if !v.is_finite() {
                    return Err(err(
                        line_no,
                        format!("column {} ({name}): must be finite", k + 3),
                    ));
                }
                vals[k] = v;
            }
            if !(0.0..=1.0).contains(&vals[3]) {
                return Err(err(
                    line_no,
                    format!("column 6 (availability): must be within [0, 1], got {}", vals[3]),
                ));
            }
            if vals[4] < 0.0 {
                return Err(err(
                    line_no,
                    format!("column 7 (demand): must be nonnegative, got {}", vals[4]),
                ));
            }
            rows.push((day, hour, vals));
        }
        if rows.is_empty() {
            return Err(err(2, "no data rows".into()));
        }

        let periods = rows.iter().take_while(|(d, _, _)| *d == 1).count();
        if periods == 0 {
            return Err(err(2, "first data row must be day 1".into()));
        }
        let days = rows.len() / periods;
        if days * periods != rows.len() {
            return Err(err(
                rows.len() + 1,
                format!(
                    "row count {} is not a whole number of {periods}-hour days",
                    rows.len()
                ),
            ));
        }
        let mut out = YearSeries::flat(days, periods);
        for (n, (day, hour, vals)) in rows.iter().enumerate() {
            let (want_day, want_hour) = (n / periods + 1, n % periods);
            if *day != want_day || *hour != want_hour {
                return Err(err(
                    n + 2,
                    format!("expected day {want_day} hour {want_hour}, found day {day} hour {hour}"),
                ));
            }
            let idx = n;
            out.price[idx] = vals[0];
            out.feedin[idx] = vals[1];
            out.emissions[idx] = vals[2];
            out.availability[idx] = vals[3];
            out.demand[idx] = vals[4];
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.days * self.periods * 40);
        s.push_str(SERIES_HEADER);
        s.push('\n');
        for d in 0..self.days {
            for t in 0..self.periods {
                let i = self.at(d, t);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    d + 1,
                    t,
                    self.price[i],
                    self.feedin[i],
                    self.emissions[i],
                    self.availability[i],
                    self.demand[i]
                );
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_csv()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// All series of a study plus the dispatch step length.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesBundle {
    pub dt_hours: f64,
    pub series: BTreeMap<String, YearSeries>,
}

impl SeriesBundle {
    pub fn new(dt_hours: f64) -> SeriesBundle {
        SeriesBundle {
            dt_hours,
            series: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, series: YearSeries) -> Result<(), ScenarioError> {
        let name = name.into();
        if let Some((_, first)) = self.series.iter().next() {
            if series.days != first.days {
                return Err(ScenarioError::Inconsistent {
                    name,
                    what: "days",
                    got: series.days,
                    want: first.days,
                });
            }
            if series.periods != first.periods {
                return Err(ScenarioError::Inconsistent {
                    name,
                    what: "periods",
                    got: series.periods,
                    want: first.periods,
                });
            }
        }
        self.series.insert(name, series);
        Ok(())
    }

    pub fn days(&self) -> usize {
        self.series.values().next().map(|s| s.days).unwrap_or(0)
    }

    pub fn periods(&self) -> usize {
        self.series.values().next().map(|s| s.periods).unwrap_or(0)
    }
}

/// One carrier's slice of a typical day (each vector has `periods` entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySlice {
    pub price: Vec<f64>,
    pub feedin: Vec<f64>,
    pub emissions: Vec<f64>,
    pub availability: Vec<f64>,
    pub demand: Vec<f64>,
}

/// A representative day: a medoid picked from the data, standing for
/// `weight` calendar days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalDay {
    /// Calendar days this pattern stands for.
    pub weight: u32,
    /// Which day of the source year was chosen (numbered from 1).
    pub source_day: usize,
    pub slices: BTreeMap<String, DaySlice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub dt_hours: f64,
    pub periods: usize,
    /// Sum of all weights (the length of the source year in days).
    pub total_days: u32,
    pub days: Vec<TypicalDay>,
}

impl ScenarioSet {
    pub fn probability(&self, day: usize) -> f64 {
        self.days[day].weight as f64 / self.total_days as f64
    }

    pub fn slice<'a>(&'a self, day: usize, series: &str) -> &'a DaySlice {
        &self.days[day].slices[series]
    }
}

/// Compresses a year to `k` typical days.
///
/// Clustering is k-means on z-scored features (constant columns dropped)
/// with greedy farthest-point style seeding, repeated over 50 seeded
/// restarts; the best inertia wins, and each cluster is then snapped to its
/// medoid. Same bundle, same `k`, same `seed` — byte-identical result.
pub fn reduce_days(bundle: &SeriesBundle, k: usize, seed: u64) -> Result<ScenarioSet, ScenarioError> {
    if bundle.series.is_empty() {
        return Err(ScenarioError::Invalid("no series to reduce".into()));
    }
    if k == 0 {
        return Err(ScenarioError::Invalid("need at least one typical day".into()));
    }
    let days = bundle.days();
    let periods = bundle.periods();

    // Feature matrix: one row per day, all series and parameters side by
    // side. BTreeMap order makes the layout reproducible.
    let width = bundle.series.len() * 5 * periods;
    let mut feats: Vec<Vec<f64>> = vec![Vec::with_capacity(width); days];
    for series in bundle.series.values() {
        for param in [
            &series.price,
            &series.feedin,
            &series.emissions,
            &series.availability,
            &series.demand,
        ] {
            for (d, row) in feats.iter_mut().enumerate() {
                row.extend_from_slice(&param[d * periods..(d + 1) * periods]);
            }
        }
    }

    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for f in &feats {
        if !distinct.iter().any(|g| *g == f) {
            distinct.push(f);
        }
    }
    if distinct.len() < k {
        return Err(ScenarioError::TooFewDistinctDays {
            distinct: distinct.len(),
            wanted: k,
        });
    }

    // Z-score per column; constant columns carry no signal and are dropped
    // by giving them zero weight.
    let mut norm = vec![vec![0.0f64; width]; days];
    for c in 0..width {
        let mean = feats.iter().map(|f| f[c]).sum::<f64>() / days as f64;
        let var = feats.iter().map(|f| (f[c] - mean) * (f[c] - mean)).sum::<f64>() / days as f64;
        let sd = var.sqrt();
        if sd > 1e-12 {
            for d in 0..days {
                norm[d][c] = (feats[d][c] - mean) / sd;
            }
        }
    }

    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None; // inertia, assignment
    for _restart in 0..50 {
        // Seeding: first center uniform, then each next center picked with
        // probability proportional to squared distance from the nearest
        // chosen center.
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
        centers.push(norm[rng.gen_range(0..days)].clone());
        let mut d2: Vec<f64> = norm.iter().map(|f| dist2(f, &centers[0])).collect();
        while centers.len() < k {
            let total: f64 = d2.iter().sum();
            let next = if total <= 1e-18 {
                rng.gen_range(0..days)
            } else {
                let mut target = rng.gen::<f64>() * total;
                let mut pick = days - 1;
                for (d, &w) in d2.iter().enumerate() {
                    target -= w;
                    if target <= 0.0 {
                        pick = d;
                        break;
                    }
                }
                pick
            };
            centers.push(norm[next].clone());
            for d in 0..days {
                d2[d] = d2[d].min(dist2(&norm[d], centers.last().unwrap()));
            }
        }

        let mut assign = vec![0usize; days];
        for _iter in 0..100 {
            let mut moved = false;
            for d in 0..days {
                let mut best_c = 0;
                let mut best_d = f64::INFINITY;
                for (c, center) in centers.iter().enumerate() {
                    let dd = dist2(&norm[d], center);
                    if dd < best_d - 1e-15 {
                        best_d = dd;
                        best_c = c;
                    }
                }
                if assign[d] != best_c {
                    assign[d] = best_c;
                    moved = true;
                }
            }
            let mut sums = vec![vec![0.0f64; width]; k];
            let mut counts = vec![0usize; k];
            for d in 0..days {
                counts[assign[d]] += 1;
                for (v, x) in sums[assign[d]].iter_mut().zip(&norm[d]) {
                    *v += x;
                }
            }
            for c in 0..k {
                if counts[c] == 0 {
                    // Re-seed an empty cluster on the day farthest from its
                    // assigned center.
                    let far = (0..days)
                        .max_by(|&a, &b| {
                            dist2(&norm[a], &centers[assign[a]])
                                .total_cmp(&dist2(&norm[b], &centers[assign[b]]))
                        })
                        .unwrap();
                    centers[c] = norm[far].clone();
                    moved = true;
                } else {
                    for (j, v) in centers[c].iter_mut().enumerate() {
                        *v = sums[c][j] / counts[c] as f64;
                    }
                }
            }
            if !moved {
                break;
            }
        }

        let inertia: f64 = (0..days).map(|d| dist2(&norm[d], &centers[assign[d]])).sum();
        let better = best
            .as_ref()
            .map(|(bi, _)| inertia < bi - 1e-12)
            .unwrap_or(true);
        if better {
            best = Some((inertia, assign));
        }
    }

    let (_, assign) = best.unwrap();

    // Snap each cluster to its medoid: the member day closest to the
    // cluster mean, lowest index on ties.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (d, &c) in assign.iter().enumerate() {
        groups[c].push(d);
    }
    let mut picked: Vec<(usize, u32)> = Vec::new(); // (medoid day, weight)
    for members in groups.iter().filter(|m| !m.is_empty()) {
        let mut mean = vec![0.0f64; width];
        for &d in members {
            for (v, x) in mean.iter_mut().zip(&norm[d]) {
                *v += x;
            }
        }
        for v in mean.iter_mut() {
            *v /= members.len() as f64;
        }
        let medoid = *members
            .iter()
            .min_by(|&&a, &&b| dist2(&norm[a], &mean).total_cmp(&dist2(&norm[b], &mean)))
            .unwrap();
        picked.push((medoid, members.len() as u32));
    }
    picked.sort_by_key(|&(d, _)| d);

    let days_out = picked
        .iter()
        .map(|&(medoid, weight)| {
            let slices = bundle
                .series
                .iter()
                .map(|(name, s)| {
                    let lo = medoid * periods;
                    let hi = lo + periods;
                    (
                        name.clone(),
                        DaySlice {
                            price: s.price[lo..hi].to_vec(),
                            feedin: s.feedin[lo..hi].to_vec(),
                            emissions: s.emissions[lo..hi].to_vec(),
                            availability: s.availability[lo..hi].to_vec(),
                            demand: s.demand[lo..hi].to_vec(),
                        },
                    )
                })
                .collect();
            TypicalDay {
                weight,
                source_day: medoid + 1,
                slices,
            }
        })
        .collect();

    Ok(ScenarioSet {
        dt_hours: bundle.dt_hours,
        periods,
        total_days: days as u32,
        days: days_out,
    })
}

/// `(1 + rate)^periods` by repeated multiplication. A `powi` call here
/// would be allowed to differ in the last bit between builds, and every
/// escalated price and discount factor flows into files that must
/// reproduce byte for byte.
pub fn compound(rate: f64, periods: usize) -> f64 {
    let mut factor = 1.0;
    for _ in 0..periods {
        factor *= 1.0 + rate;
    }
    factor
}

/// Escalates a base scenario set over the planning horizon: traded prices
/// (import and feed-in) grow with the fuel trend, demand with the demand
/// trend; emission intensities and availabilities stay put. Year 1 is the
/// base year unchanged.
pub fn grow_years(
    base: &ScenarioSet,
    years: usize,
    fuel_growth: f64,
    demand_growth: f64,
) -> Vec<ScenarioSet> {
    (0..years)
        .map(|y| {
            let fuel = compound(fuel_growth, y);
            let load = compound(demand_growth, y);
            let mut set = base.clone();
            for day in &mut set.days {
                for slice in day.slices.values_mut() {
                    for v in slice.price.iter_mut() {
                        *v *= fuel;
                    }
                    for v in slice.feedin.iter_mut() {
                        *v *= fuel;
                    }
                    for v in slice.demand.iter_mut() {
                        *v *= load;
                    }
                }
            }
            set
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_with_patterns(days: usize, periods: usize, pattern: impl Fn(usize, usize) -> f64) -> YearSeries {
        let mut s = YearSeries::flat(days, periods);
        for d in 0..days {
            for t in 0..periods {
                let i = s.at(d, t);
                s.demand[i] = pattern(d, t);
                s.price[i] = 100.0 + pattern(d, t);
            }
        }
        s
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = series_with_patterns(3, 4, |d, t| (d * 10 + t) as f64 + 0.125);
        let text = s.to_csv();
        let back = YearSeries::parse_csv(&text, "mem").unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let e = YearSeries::parse_csv("day,hour,price\n", "mem").unwrap_err();
        assert!(e.to_string().contains("bad header"));
    }

    #[test]
    fn csv_rejects_non_numeric_cell_with_location() {
        let text = format!("{SERIES_HEADER}\n1,0,10,0,0,1,abc\n");
        let e = YearSeries::parse_csv(&text, "mem").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("mem:2"), "{msg}");
        assert!(msg.contains("demand"), "{msg}");
    }

    #[test]
    fn csv_rejects_out_of_order_rows() {
        let text = format!("{SERIES_HEADER}\n1,0,1,0,0,1,0\n1,2,1,0,0,1,0\n");
        let e = YearSeries::parse_csv(&text, "mem").unwrap_err();
        assert!(e.to_string().contains("expected day 1 hour 1"), "{e}");
    }

    #[test]
    fn csv_rejects_availability_outside_unit_interval() {
        let text = format!("{SERIES_HEADER}\n1,0,1,0,0,1.5,0\n");
        let e = YearSeries::parse_csv(&text, "mem").unwrap_err();
        assert!(e.to_string().contains("availability"), "{e}");
    }

    /// Two exact repeating patterns must be recovered perfectly: their own
    /// days as medoids, their day counts as weights.
    #[test]
    fn two_pattern_year_reduces_exactly() {
        let mut bundle = SeriesBundle::new(1.0);
        // 200 "winter" days then 165 "summer" days.
        bundle
            .insert(
                "heat",
                series_with_patterns(365, 4, |d, t| {
                    if d < 200 {
                        3.0 + t as f64
                    } else {
                        1.0 + 0.5 * t as f64
                    }
                }),
            )
            .unwrap();
        let set = reduce_days(&bundle, 2, 7).unwrap();
        assert_eq!(set.total_days, 365);
        let mut weights: Vec<u32> = set.days.iter().map(|d| d.weight).collect();
        weights.sort();
        assert_eq!(weights, vec![165, 200]);
        assert_eq!(set.days.iter().map(|d| d.weight).sum::<u32>(), 365);
        // Medoids are real days of the right regime.
        for day in &set.days {
            let winter = day.source_day <= 200;
            let expect = if winter { vec![3.0, 4.0, 5.0, 6.0] } else { vec![1.0, 1.5, 2.0, 2.5] };
            assert_eq!(day.slices["heat"].demand, expect);
            if winter {
                assert_eq!(day.weight, 200);
            } else {
                assert_eq!(day.weight, 165);
            }
        }
        // Probabilities are exact rationals of the day counts.
        let p: Vec<f64> = (0..2).map(|i| set.probability(i)).collect();
        assert!(p.contains(&(200.0 / 365.0)));
        assert!(p.contains(&(165.0 / 365.0)));
    }

    #[test]
    fn reduction_is_deterministic_per_seed() {
        let mut bundle = SeriesBundle::new(1.0);
        bundle
            .insert(
                "elec",
                series_with_patterns(365, 6, |d, t| ((d % 7) * 3 + t) as f64),
            )
            .unwrap();
        let a = reduce_days(&bundle, 4, 42).unwrap();
        let b = reduce_days(&bundle, 4, 42).unwrap();
        assert_eq!(a, b);
        let json_a = serde_json::to_string(&a).unwrap();
        let json_b = serde_json::to_string(&b).unwrap();
        assert_eq!(json_a, json_b);
    }

    #[test]
    fn asking_for_more_days_than_patterns_fails() {
        let mut bundle = SeriesBundle::new(1.0);
        bundle
            .insert("flat", series_with_patterns(365, 4, |_, t| t as f64))
            .unwrap();
        match reduce_days(&bundle, 2, 1) {
            Err(ScenarioError::TooFewDistinctDays { distinct, wanted }) => {
                assert_eq!(distinct, 1);
                assert_eq!(wanted, 2);
            }
            other => panic!("expected too-few-distinct error, got {other:?}"),
        }
    }

    #[test]
    fn bundle_rejects_mismatched_shapes() {
        let mut bundle = SeriesBundle::new(1.0);
        bundle.insert("a", YearSeries::flat(365, 4)).unwrap();
        assert!(matches!(
            bundle.insert("b", YearSeries::flat(365, 6)),
            Err(ScenarioError::Inconsistent { what: "periods", .. })
        ));
        assert!(matches!(
            bundle.insert("c", YearSeries::flat(200, 4)),
            Err(ScenarioError::Inconsistent { what: "days", .. })
        ));
    }

    #[test]
    fn growth_scales_prices_and_demand_only() {
        let mut bundle = SeriesBundle::new(1.0);
        let mut s = YearSeries::flat(365, 2);
        for i in 0..365 * 2 {
            s.price[i] = 100.0;
            s.feedin[i] = 40.0;
            s.emissions[i] = 0.2;
            s.demand[i] = 5.0;
        }
        bundle.insert("elec", s).unwrap();
        let base = reduce_days(&bundle, 1, 3).unwrap();
        let years = grow_years(&base, 3, 0.02, 0.04);
        assert_eq!(years.len(), 3);
        let slice = |y: usize| &years[y].days[0].slices["elec"];
        assert_eq!(slice(0).price[0], 100.0);
        assert!((slice(2).price[0] - 100.0 * 1.02f64.powi(2)).abs() < 1e-12);
        assert!((slice(2).feedin[0] - 40.0 * 1.02f64.powi(2)).abs() < 1e-12);
        assert!((slice(2).demand[0] - 5.0 * 1.04f64.powi(2)).abs() < 1e-12);
        assert_eq!(slice(2).emissions[0], 0.2);
        assert_eq!(slice(2).availability[0], 1.0);
    }

    #[test]
    fn scenario_set_serde_round_trip() {
        let mut bundle = SeriesBundle::new(0.5);
        bundle
            .insert("elec", series_with_patterns(10, 3, |d, t| (d + t) as f64))
            .unwrap();
        let set = reduce_days(&bundle, 3, 11).unwrap();
        let json = serde_json::to_string_pretty(&set).unwrap();
        let back: ScenarioSet = serde_json::from_str(&json).unwrap();
        assert_eq!(set, back);
    }
}
