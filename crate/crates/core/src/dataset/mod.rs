//! Turbine time-series ingestion, alignment, and covariate engineering.
//!
//! Three SCADA series — the upgraded reference turbine (REF), the baseline
//! control turbine (CTR-b), and the neutral covariate-supplying turbine
//! (CTR-n) — are inner-joined on timestamp. Each surviving record carries the
//! REF and CTR-b power responses plus six engineered covariates sourced per
//! the modelling convention: wind speed, its one-step difference, and power
//! from CTR-n; direction and air density from REF; hour of day from the
//! timestamp. Rows missing any required field are dropped.

mod ingest;

use std::io::Write;

use chrono::{DateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::DataError;

pub use ingest::{ingest_series, ColumnMapping};

/// Specific gas constant of dry air, J kg⁻¹ K⁻¹.
pub const R_DRY_AIR: f64 = 287.05;

/// Analysis period relative to the upgrade boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Period {
    /// Before the upgrade.
    P1,
    /// After the upgrade.
    P2,
}

impl std::fmt::Display for Period {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Period::P1 => f.write_str("P1"),
            Period::P2 => f.write_str("P2"),
        }
    }
}

/// One raw SCADA row. Any measurement may be missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRow {
    pub timestamp: DateTime<Utc>,
    pub wind_speed: Option<f64>,
    pub power: Option<f64>,
    pub direction: Option<f64>,
    pub temperature: Option<f64>,
    pub pressure: Option<f64>,
}

/// A single turbine's time series, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TurbineSeries {
    pub turbine_id: String,
    pub rows: Vec<RawRow>,
}

impl TurbineSeries {
    /// Build a series from rows, sorting by timestamp and rejecting duplicates.
    pub fn new(turbine_id: impl Into<String>, mut rows: Vec<RawRow>) -> Result<Self, DataError> {
        rows.sort_by_key(|r| r.timestamp);
        for pair in rows.windows(2) {
            if pair[0].timestamp == pair[1].timestamp {
                return Err(DataError::DuplicateTimestamp(pair[0].timestamp));
            }
        }
        Ok(Self { turbine_id: turbine_id.into(), rows })
    }

    /// Check that successive timestamps advance by whole multiples of the cadence.
    fn check_cadence(&self, cadence_seconds: u32) -> Result<(), DataError> {
        let mismatch = || DataError::CadenceMismatch {
            turbine_id: self.turbine_id.clone(),
            cadence_seconds,
        };
        if cadence_seconds == 0 {
            return Err(mismatch());
        }
        for pair in self.rows.windows(2) {
            let dt = (pair[1].timestamp - pair[0].timestamp).num_seconds();
            if dt <= 0 || dt % i64::from(cadence_seconds) != 0 {
                return Err(mismatch());
            }
        }
        Ok(())
    }
}

/// The six candidate covariates, in their canonical order.
///
/// `Direction` and `Hour` are circular and expand to a sin/cos column pair,
/// but count as one logical variable throughout selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Covariate {
    /// V-CTRn: wind speed at the neutral turbine, m/s.
    WindSpeed,
    /// dV-CTRn: one-cadence wind speed difference at the neutral turbine, m/s.
    WindSpeedDelta,
    /// PW-CTRn: power output of the neutral turbine, kW.
    NeutralPower,
    /// Direction: wind direction at the reference turbine, sin/cos encoded.
    Direction,
    /// Density: air density from reference-turbine temperature and pressure, kg/m³.
    Density,
    /// Hour: hour of the day, sin/cos encoded.
    Hour,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::WindSpeed => "V-CTRn",
            Covariate::WindSpeedDelta => "dV-CTRn",
            Covariate::NeutralPower => "PW-CTRn",
            Covariate::Direction => "Direction",
            Covariate::Density => "Density",
            Covariate::Hour => "Hour",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        candidate_covariates().into_iter().find(|c| c.name() == name)
    }

    /// Number of numeric columns this logical variable expands to.
    pub fn expanded_dim(self) -> usize {
        match self {
            Covariate::Direction | Covariate::Hour => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for Covariate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Covariate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Covariate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Covariate::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown covariate {name:?}")))
    }
}

/// The candidate covariates in canonical order (p = 6 logical variables).
pub fn candidate_covariates() -> [Covariate; 6] {
    [
        Covariate::WindSpeed,
        Covariate::WindSpeedDelta,
        Covariate::NeutralPower,
        Covariate::Direction,
        Covariate::Density,
        Covariate::Hour,
    ]
}

/// Expanded column names for a covariate subset.
pub fn expanded_column_names(variables: &[Covariate]) -> Vec<String> {
    let mut names = Vec::new();
    for v in variables {
        match v.expanded_dim() {
            1 => names.push(v.name().to_string()),
            _ => {
                names.push(format!("{}.sin", v.name()));
                names.push(format!("{}.cos", v.name()));
            }
        }
    }
    names
}

/// Total numeric width of a covariate subset.
pub fn expanded_dim(variables: &[Covariate]) -> usize {
    variables.iter().map(|v| v.expanded_dim()).sum()
}

/// Engineered covariate values of one aligned record, fully expanded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    pub v_ctrn: f64,
    pub dv_ctrn: f64,
    pub pw_ctrn: f64,
    pub direction_sin: f64,
    pub direction_cos: f64,
    pub density: f64,
    pub hour_sin: f64,
    pub hour_cos: f64,
}

impl Covariates {
    /// Append the expanded values of `variables`, in order, onto `out`.
    pub fn push_expanded(&self, variables: &[Covariate], out: &mut Vec<f64>) {
        for v in variables {
            match v {
                Covariate::WindSpeed => out.push(self.v_ctrn),
                Covariate::WindSpeedDelta => out.push(self.dv_ctrn),
                Covariate::NeutralPower => out.push(self.pw_ctrn),
                Covariate::Direction => {
                    out.push(self.direction_sin);
                    out.push(self.direction_cos);
                }
                Covariate::Density => out.push(self.density),
                Covariate::Hour => {
                    out.push(self.hour_sin);
                    out.push(self.hour_cos);
                }
            }
        }
    }
}

/// One time-aligned record with engineered covariates and a period label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignedRecord {
    pub timestamp: DateTime<Utc>,
    /// REF power, kW — the response of the reference model.
    pub y_ref: f64,
    /// CTR-b power, kW — response of the baseline model and the binning variable.
    pub y_ctrb: f64,
    pub covariates: Covariates,
    pub period: Period,
}

/// Which turbine plays which role in an aligned dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurbineRoles {
    pub reference: String,
    pub baseline: String,
    pub neutral: String,
}

/// Time-aligned multi-turbine dataset, sorted by timestamp.
///
/// Period-1 records form a prefix (every P1 timestamp precedes the boundary),
/// so [`AlignedDataset::p1`] and [`AlignedDataset::p2`] are plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub records: Vec<AlignedRecord>,
    pub cadence_seconds: u32,
    pub boundary: DateTime<Utc>,
    pub roles: TurbineRoles,
}

impl AlignedDataset {
    pub fn p1(&self) -> &[AlignedRecord] {
        let split = self.records.partition_point(|r| r.period == Period::P1);
        &self.records[..split]
    }

    pub fn p2(&self) -> &[AlignedRecord] {
        let split = self.records.partition_point(|r| r.period == Period::P1);
        &self.records[split..]
    }

    /// Export the aligned records as a single audit CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "timestamp",
            "y_ref",
            "y_ctrb",
            "v_ctrn",
            "dv_ctrn",
            "pw_ctrn",
            "direction_sin",
            "direction_cos",
            "density",
            "hour_sin",
            "hour_cos",
            "period",
        ])?;
        for r in &self.records {
            let c = &r.covariates;
            w.write_record([
                r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                r.y_ref.to_string(),
                r.y_ctrb.to_string(),
                c.v_ctrn.to_string(),
                c.dv_ctrn.to_string(),
                c.pw_ctrn.to_string(),
                c.direction_sin.to_string(),
                c.direction_cos.to_string(),
                c.density.to_string(),
                c.hour_sin.to_string(),
                c.hour_cos.to_string(),
                r.period.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn positive(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite() && *x > 0.0)
}

fn finite(v: Option<f64>) -> Option<f64> {
    v.filter(|x| x.is_finite())
}

/// Unit-circle encoding of an angle given as a fraction of the full turn.
fn circular(fraction: f64) -> (f64, f64) {
    let theta = std::f64::consts::TAU * fraction;
    (theta.sin(), theta.cos())
}

/// Inner-join the three role series on timestamp and engineer covariates.
///
/// dV-CTRn exists only where the neutral series has a wind-speed reading
/// exactly one cadence earlier; air density is `pressure / (R_DRY_AIR * temperature)`
/// from the reference turbine's sensors. Rows missing any required field are
/// dropped, so the output count never exceeds the smallest input count.
pub fn align(
    reference: &TurbineSeries,
    baseline: &TurbineSeries,
    neutral: &TurbineSeries,
    boundary: DateTime<Utc>,
    cadence_seconds: u32,
) -> Result<AlignedDataset, DataError> {
    for series in [reference, baseline, neutral] {
        if series.rows.is_empty() {
            return Err(DataError::EmptySeries(series.turbine_id.clone()));
        }
        series.check_cadence(cadence_seconds)?;
    }

    let index_of = |series: &TurbineSeries| -> std::collections::HashMap<i64, usize> {
        series
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.timestamp.timestamp(), i))
            .collect()
    };
    let baseline_idx = index_of(baseline);
    let neutral_idx = index_of(neutral);

    let cadence = i64::from(cadence_seconds);
    let mut records = Vec::new();
    for ref_row in &reference.rows {
        let t = ref_row.timestamp.timestamp();
        let Some(&bi) = baseline_idx.get(&t) else { continue };
        let Some(&ni) = neutral_idx.get(&t) else { continue };
        let neutral_row = &neutral.rows[ni];

        // dV-CTRn needs the neutral reading exactly one cadence earlier.
        let dv_ctrn = match (
            finite(neutral_row.wind_speed),
            neutral_idx
                .get(&(t - cadence))
                .and_then(|&pi| finite(neutral.rows[pi].wind_speed)),
        ) {
            (Some(now), Some(prev)) => Some(now - prev),
            _ => None,
        };

        let required = (
            finite(ref_row.power),
            finite(baseline.rows[bi].power),
            finite(neutral_row.wind_speed),
            dv_ctrn,
            finite(neutral_row.power),
            finite(ref_row.direction),
            positive(ref_row.temperature),
            positive(ref_row.pressure),
        );
        let (
            Some(y_ref),
            Some(y_ctrb),
            Some(v_ctrn),
            Some(dv_ctrn),
            Some(pw_ctrn),
            Some(direction_deg),
            Some(temperature),
            Some(pressure),
        ) = required
        else {
            continue;
        };

        let (direction_sin, direction_cos) = circular(direction_deg.rem_euclid(360.0) / 360.0);
        let seconds_of_day = f64::from(ref_row.timestamp.time().num_seconds_from_midnight());
        let (hour_sin, hour_cos) = circular(seconds_of_day / 86_400.0);

        records.push(AlignedRecord {
            timestamp: ref_row.timestamp,
            y_ref,
            y_ctrb,
            covariates: Covariates {
                v_ctrn,
                dv_ctrn,
                pw_ctrn,
                direction_sin,
                direction_cos,
                density: pressure / (R_DRY_AIR * temperature),
                hour_sin,
                hour_cos,
            },
            period: if ref_row.timestamp < boundary { Period::P1 } else { Period::P2 },
        });
    }

    for period in [Period::P1, Period::P2] {
        if !records.iter().any(|r| r.period == period) {
            return Err(DataError::EmptyPeriod(period));
        }
    }

    Ok(AlignedDataset {
        records,
        cadence_seconds,
        boundary,
        roles: TurbineRoles {
            reference: reference.turbine_id.clone(),
            baseline: baseline.turbine_id.clone(),
            neutral: neutral.turbine_id.clone(),
        },
    })
}
