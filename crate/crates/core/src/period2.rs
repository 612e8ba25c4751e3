//! Period-2 analysis: Effect/Offset/Gain curves, the annualized gain, and
//! its bootstrap confidence interval.
//!
//! Both the reference and baseline models keep the covariates chosen in
//! Period 1. For each model the Period-1 BIAS curve comes from 5-fold CV and
//! the Period-2 curve from a single model trained on all Period-1 data; the
//! period-over-period change of the reference curve (Effect) minus that of
//! the baseline curve (Offset) isolates the upgrade's bin-wise Gain. The
//! annualized figure weights Gain by the long-term annual hours spent in
//! each power bin and divides by AEP. Uncertainty comes from resampling the
//! pooled records with replacement, re-partitioning by timestamp, and
//! re-running the whole quantification per replicate.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AlignedDataset, AlignedRecord, Covariate, Period};
use crate::error::AnalysisError;
use crate::evaluation::{
    bin_id_for, bin_mid, cv_evaluate, make_folds, single_split_evaluate, BiasCurve, BinSpec,
    FoldPlan, Target,
};
use crate::kernel::KGridBounds;

/// Hours in an average year (365.25 days).
pub const HOURS_PER_YEAR: f64 = 8766.0;

/// Default number of bootstrap replicates.
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 10;

/// Default confidence level of the bootstrap interval.
pub const DEFAULT_CI_LEVEL: f64 = 0.8;

/// Minimum fraction of replicates that must succeed for a CI to be formed.
pub const BOOTSTRAP_SUCCESS_FRACTION: f64 = 0.8;

/// Long-term annual power frequency: hours per year spent in each power bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFrequency {
    /// `(bin_id, hours)`, sorted by bin id; all hours nonnegative.
    pub bins: Vec<(i64, f64)>,
    pub bin_width: f64,
}

impl PowerFrequency {
    pub fn total_hours(&self) -> f64 {
        self.bins.iter().map(|(_, h)| h).sum()
    }

    pub fn hours_for(&self, bin_id: i64) -> f64 {
        self.bins
            .iter()
            .find(|(id, _)| *id == bin_id)
            .map_or(0.0, |(_, h)| *h)
    }

    /// Read a two-column `bin_mid,hours` CSV on the given bin width.
    pub fn read_csv<R: std::io::Read>(reader: R, bin_width: f64) -> Result<Self, AnalysisError> {
        let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let invalid = |line: usize, reason: &str| AnalysisError::InvalidPowerFrequency {
            line,
            reason: reason.to_string(),
        };
        let mut bins = Vec::new();
        for (i, record) in csv_reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| invalid(line, &e.to_string()))?;
            let field = |col: usize, name: &str| -> Result<f64, AnalysisError> {
                record
                    .get(col)
                    .and_then(|c| c.trim().parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| invalid(line, &format!("unparseable {name}")))
            };
            let mid = field(0, "bin_mid")?;
            let hours = field(1, "hours")?;
            if hours < 0.0 {
                return Err(invalid(line, "negative hours"));
            }
            let id_real = mid / bin_width - 0.5;
            let id = id_real.round();
            if (id_real - id).abs() > 1e-6 {
                return Err(invalid(line, "bin_mid not centred on the bin width"));
            }
            bins.push((id as i64, hours));
        }
        bins.sort_by_key(|(id, _)| *id);
        for pair in bins.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(AnalysisError::InvalidPowerFrequency {
                    line: 0,
                    reason: format!("duplicate bin_mid for bin {}", pair[0].0),
                });
            }
        }
        Ok(Self { bins, bin_width })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_mid", "hours"]).map_err(std::io::Error::other)?;
        for &(id, hours) in &self.bins {
            w.write_record([bin_mid(id, self.bin_width).to_string(), hours.to_string()])
                .map_err(std::io::Error::other)?;
        }
        w.flush()
    }
}

/// Empirical annual power frequency of a measured power series, scaled so
/// the total is one year of hours. A stand-in for long-term historical data,
/// and labelled as such by callers.
pub fn empirical_power_frequency(powers: &[f64], bin_width: f64) -> PowerFrequency {
    let mut counts: std::collections::BTreeMap<i64, usize> = std::collections::BTreeMap::new();
    for &p in powers {
        *counts.entry(bin_id_for(p, bin_width)).or_default() += 1;
    }
    let total: usize = counts.values().sum();
    let bins = counts
        .into_iter()
        .map(|(id, c)| (id, HOURS_PER_YEAR * c as f64 / total.max(1) as f64))
        .collect();
    PowerFrequency { bins, bin_width }
}

/// The Period-1 (CV-averaged) and Period-2 (single-split) BIAS curves of one
/// model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodCurves {
    pub p1: BiasCurve,
    pub p2: BiasCurve,
}

/// Compute both period curves for one target on explicit record slices.
/// Period 2 needs no data splitting: one model trained on all of Period 1 is
/// evaluated on all of Period 2.
pub fn period_curves_on(
    p1: &[AlignedRecord],
    p2: &[AlignedRecord],
    target: Target,
    variables: &[Covariate],
    folds: &FoldPlan,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<PeriodCurves, AnalysisError> {
    if p1.is_empty() {
        return Err(crate::error::DataError::EmptyPeriod(Period::P1).into());
    }
    if p2.is_empty() {
        return Err(crate::error::DataError::EmptyPeriod(Period::P2).into());
    }
    let cv = cv_evaluate(p1, target, variables, folds, k_bounds, bins)?;
    let p2_curve = single_split_evaluate(p1, p2, target, variables, k_bounds, bins)?;
    Ok(PeriodCurves { p1: cv.cv_bias_curve, p2: p2_curve })
}

/// As [`period_curves_on`] over a full dataset.
pub fn period_curves(
    dataset: &AlignedDataset,
    target: Target,
    variables: &[Covariate],
    folds: &FoldPlan,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<PeriodCurves, AnalysisError> {
    period_curves_on(dataset.p1(), dataset.p2(), target, variables, folds, k_bounds, bins)
}

/// One retained bin of the gain decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainBin {
    pub bin_id: i64,
    pub bin_mid: f64,
    /// Period-over-period change of the reference model's BIAS, kW.
    pub effect: f64,
    /// The same change for the baseline model, kW.
    pub offset: f64,
    /// `effect − offset`, kW.
    pub gain: f64,
    /// Smallest residual count among the four source curves.
    pub count: usize,
}

/// A bin excluded from the gain curves, with the curves it was missing from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcludedBin {
    pub bin_id: i64,
    pub bin_mid: f64,
    pub missing_from: Vec<String>,
}

/// Effect/Offset/Gain over the intersection of bins retained in all four
/// BIAS curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainCurves {
    pub bins: Vec<GainBin>,
    pub bin_width: f64,
    pub excluded: Vec<ExcludedBin>,
}

/// Bin-wise `Effect = REF_p2 − REF_p1`, `Offset = CTRB_p2 − CTRB_p1`,
/// `Gain = Effect − Offset`. Bins outside the four-curve intersection are
/// listed with the curves they were missing from.
pub fn effect_offset_gain(
    ref_p1: &BiasCurve,
    ref_p2: &BiasCurve,
    ctrb_p1: &BiasCurve,
    ctrb_p2: &BiasCurve,
) -> Result<GainCurves, AnalysisError> {
    let width = ref_p1.bin_width;
    for curve in [ref_p2, ctrb_p1, ctrb_p2] {
        if curve.bin_width != width {
            return Err(crate::error::EvalError::BinWidthMismatch(width, curve.bin_width).into());
        }
    }

    let labelled: [(&str, &BiasCurve); 4] = [
        ("ref_p1", ref_p1),
        ("ref_p2", ref_p2),
        ("ctrb_p1", ctrb_p1),
        ("ctrb_p2", ctrb_p2),
    ];
    let mut all_ids: Vec<i64> = labelled
        .iter()
        .flat_map(|(_, c)| c.bins.iter().map(|b| b.bin_id))
        .collect();
    all_ids.sort_unstable();
    all_ids.dedup();

    let mut bins = Vec::new();
    let mut excluded = Vec::new();
    for id in all_ids {
        let missing: Vec<String> = labelled
            .iter()
            .filter(|(_, c)| c.bin(id).is_none())
            .map(|(name, _)| name.to_string())
            .collect();
        if missing.is_empty() {
            let get = |c: &BiasCurve| c.bin(id).expect("intersection checked").bias;
            let count = labelled
                .iter()
                .map(|(_, c)| c.bin(id).expect("intersection checked").count)
                .min()
                .unwrap_or(0);
            let effect = get(ref_p2) - get(ref_p1);
            let offset = get(ctrb_p2) - get(ctrb_p1);
            bins.push(GainBin {
                bin_id: id,
                bin_mid: bin_mid(id, width),
                effect,
                offset,
                gain: effect - offset,
                count,
            });
        } else {
            excluded.push(ExcludedBin {
                bin_id: id,
                bin_mid: bin_mid(id, width),
                missing_from: missing,
            });
        }
    }
    Ok(GainCurves { bins, bin_width: width, excluded })
}

/// Annualized gain and the share of π hours its retained bins cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnualizedGain {
    /// `Σ π_b · Gain_b / AEP`, a fraction of annual energy production.
    pub gain_fraction: f64,
    /// Fraction of total π hours that falls in retained gain bins; the rest
    /// contributed zero rather than being renormalized away.
    pub pi_coverage: f64,
}

/// Weight the gain curve by annual bin hours and divide by AEP (kWh).
pub fn annualized_gain(
    gain: &GainCurves,
    pi: &PowerFrequency,
    aep_kwh: f64,
) -> Result<AnnualizedGain, AnalysisError> {
    if !(aep_kwh > 0.0) {
        return Err(AnalysisError::NonpositiveAep(aep_kwh));
    }
    let energy: f64 = gain.bins.iter().map(|b| pi.hours_for(b.bin_id) * b.gain).sum();
    let covered: f64 = gain.bins.iter().map(|b| pi.hours_for(b.bin_id)).sum();
    let total = pi.total_hours();
    Ok(AnnualizedGain {
        gain_fraction: energy / aep_kwh,
        pi_coverage: if total > 0.0 { covered / total } else { 0.0 },
    })
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Number of replicates, B.
    pub replicates: usize,
    pub ci_level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: DEFAULT_BOOTSTRAP_REPLICATES,
            ci_level: DEFAULT_CI_LEVEL,
            seed: 0,
        }
    }
}

/// A replicate that failed, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub reason: String,
}

/// Bootstrap distribution of the annualized gain and its percentile CI.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Gains of successful replicates in replicate order.
    pub gains: Vec<f64>,
    pub failures: Vec<ReplicateFailure>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// 1-based order-statistic indices of the percentile interval: drop
/// `⌊α·B⌋` values from each tail, where `α = (1 − level)/2`. For B = 10 at
/// the 80% level this is the drop-lowest/drop-greatest construction, i.e.
/// the 2nd and 9th order statistics.
pub fn percentile_indices(b: usize, ci_level: f64) -> (usize, usize) {
    let alpha = (1.0 - ci_level) / 2.0;
    // nudge past float fuzz so e.g. 0.1 × 10 cannot land just below 1
    let drop = (alpha * b as f64 + 1e-9).floor() as usize;
    (drop + 1, b - drop)
}

fn percentile_interval(gains: &[f64], ci_level: f64) -> (f64, f64) {
    let mut sorted = gains.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = percentile_indices(sorted.len(), ci_level);
    (sorted[lo - 1], sorted[hi - 1])
}

/// One bootstrap replicate: resample the pooled records with replacement,
/// re-partition by timestamp, and recompute the annualized gain with the
/// Period-1 variable choice held fixed.
fn replicate_gain(
    records: &[AlignedRecord],
    variables: &[Covariate],
    sample_seed: u64,
    fold_seed: u64,
    pi: &PowerFrequency,
    aep_kwh: f64,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<f64, AnalysisError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sample_seed);
    let n = records.len();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for _ in 0..n {
        let record = records[rng.random_range(0..n)];
        match record.period {
            Period::P1 => p1.push(record),
            Period::P2 => p2.push(record),
        }
    }
    if p2.is_empty() {
        return Err(crate::error::DataError::EmptyPeriod(Period::P2).into());
    }
    let folds = make_folds(p1.len(), fold_seed).map_err(AnalysisError::Eval)?;

    let reference =
        period_curves_on(&p1, &p2, Target::Reference, variables, &folds, k_bounds, bins)?;
    let baseline =
        period_curves_on(&p1, &p2, Target::Baseline, variables, &folds, k_bounds, bins)?;
    let gain = effect_offset_gain(&reference.p1, &reference.p2, &baseline.p1, &baseline.p2)?;
    if gain.bins.is_empty() {
        return Err(AnalysisError::EmptyGainCurve);
    }
    Ok(annualized_gain(&gain, pi, aep_kwh)?.gain_fraction)
}

/// Run the full bootstrap. Replicates are independent (and run in parallel)
/// but their seeds derive deterministically from the master seed, so the
/// result is a pure function of the inputs.
pub fn bootstrap_gain(
    dataset: &AlignedDataset,
    variables: &[Covariate],
    config: &BootstrapConfig,
    pi: &PowerFrequency,
    aep_kwh: f64,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<BootstrapResult, AnalysisError> {
    if config.replicates < 2 {
        return Err(AnalysisError::TooFewReplicates(config.replicates));
    }
    if !(config.ci_level > 0.0 && config.ci_level < 1.0) {
        return Err(AnalysisError::InvalidCiLevel(config.ci_level));
    }

    let mut master = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let seeds: Vec<(u64, u64)> =
        (0..config.replicates).map(|_| (master.random(), master.random())).collect();

    let outcomes: Vec<Result<f64, String>> = seeds
        .par_iter()
        .map(|&(sample_seed, fold_seed)| {
            replicate_gain(
                &dataset.records,
                variables,
                sample_seed,
                fold_seed,
                pi,
                aep_kwh,
                k_bounds,
                bins,
            )
            .map_err(|e| e.to_string())
        })
        .collect();

    let mut gains = Vec::new();
    let mut failures = Vec::new();
    for (g, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(gain) => gains.push(gain),
            Err(reason) => failures.push(ReplicateFailure { replicate: g + 1, reason }),
        }
    }

    let required =
        (BOOTSTRAP_SUCCESS_FRACTION * config.replicates as f64).ceil() as usize;
    if gains.len() < required {
        return Err(AnalysisError::BootstrapInsufficient {
            succeeded: gains.len(),
            total: config.replicates,
            required,
        });
    }
    let (ci_low, ci_high) = percentile_interval(&gains, config.ci_level);
    Ok(BootstrapResult {
        gains,
        failures,
        ci_low,
        ci_high,
        ci_level: config.ci_level,
        replicates: config.replicates,
        seed: config.seed,
    })
}

/// The full Period-2 deliverable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub gain_curves: GainCurves,
    pub bias_p1_ref: BiasCurve,
    pub bias_p2_ref: BiasCurve,
    pub bias_p1_ctrb: BiasCurve,
    pub bias_p2_ctrb: BiasCurve,
    pub annualized: AnnualizedGain,
    pub aep_kwh: f64,
    pub bootstrap: Option<BootstrapResult>,
}

/// Point estimate plus optional bootstrap, assembled into a report.
#[allow(clippy::too_many_arguments)]
pub fn analyze_gain(
    dataset: &AlignedDataset,
    variables: &[Covariate],
    fold_seed: u64,
    k_bounds: &KGridBounds,
    bins: BinSpec,
    pi: &PowerFrequency,
    aep_kwh: f64,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<GainReport, AnalysisError> {
    let folds = make_folds(dataset.p1().len(), fold_seed).map_err(AnalysisError::Eval)?;
    let reference =
        period_curves(dataset, Target::Reference, variables, &folds, k_bounds, bins)?;
    let baseline =
        period_curves(dataset, Target::Baseline, variables, &folds, k_bounds, bins)?;
    let gain_curves =
        effect_offset_gain(&reference.p1, &reference.p2, &baseline.p1, &baseline.p2)?;
    if gain_curves.bins.is_empty() {
        return Err(AnalysisError::EmptyGainCurve);
    }
    let annualized = annualized_gain(&gain_curves, pi, aep_kwh)?;
    let bootstrap = bootstrap
        .map(|cfg| bootstrap_gain(dataset, variables, cfg, pi, aep_kwh, k_bounds, bins))
        .transpose()?;

    Ok(GainReport {
        gain_curves,
        bias_p1_ref: reference.p1,
        bias_p2_ref: reference.p2,
        bias_p1_ctrb: baseline.p1,
        bias_p2_ctrb: baseline.p2,
        annualized,
        aep_kwh,
        bootstrap,
    })
}
