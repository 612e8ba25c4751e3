//! 5-fold cross-validation and the three performance measures.
//!
//! RMSE and BIAS summarize a prediction set; the BIAS curve bins test
//! residuals by the baseline control turbine's measured power (100 kW bins by
//! default) and takes the per-bin median. Fold-level metrics average into
//! `CV_*` values, and two curves subtract bin-wise into a DIFF curve.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{expanded_column_names, expanded_dim, AlignedRecord, Covariate};
use crate::error::EvalError;
use crate::kernel::{self, DesignMatrix, KGridBounds};

/// Number of CV folds; each fold tests on 20% and trains on 80%.
pub const FOLD_COUNT: usize = 5;

/// A bin must be retained in at least this many folds to enter the averaged
/// CV curve.
pub const MIN_FOLD_PRESENCE: usize = 3;

/// Default residual-binning width, kW.
pub const DEFAULT_BIN_WIDTH_KW: f64 = 100.0;

/// Bins with fewer residuals than this are dropped; a near-empty median is noise.
pub const DEFAULT_MIN_BIN_COUNT: usize = 5;

/// BIAS denominator guard: Σŷ must exceed this many kW per test row.
pub const BIAS_DENOMINATOR_EPS_PER_ROW: f64 = 1e-6;

/// Which measured power a model predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Target {
    /// REF power — the upgraded turbine.
    Reference,
    /// CTR-b power — the baseline control turbine.
    Baseline,
}

impl Target {
    #[inline]
    pub fn response(self, record: &AlignedRecord) -> f64 {
        match self {
            Target::Reference => record.y_ref,
            Target::Baseline => record.y_ctrb,
        }
    }
}

/// A seeded balanced partition of Period-1 record indices into 5 folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    fold_of: Vec<u8>,
    seed: u64,
}

/// Assign each of `n_p1` records to one of 5 folds uniformly at random, with
/// fold sizes differing by at most one. Reproducible from the seed.
pub fn make_folds(n_p1: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if n_p1 < FOLD_COUNT {
        return Err(EvalError::TooFewRecords(n_p1));
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_p1).collect();
    order.shuffle(&mut rng);
    let mut fold_of = vec![0u8; n_p1];
    for (position, &index) in order.iter().enumerate() {
        fold_of[index] = (position % FOLD_COUNT) as u8 + 1;
    }
    Ok(FoldPlan { fold_of, seed })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, index: usize) -> u8 {
        self.fold_of[index]
    }

    pub fn test_indices(&self, fold: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: u8) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// One out-of-sample prediction: truth, estimate, and the binning power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionEntry {
    pub record_index: usize,
    pub y_true: f64,
    pub y_hat: f64,
    /// CTR-b measured power of the record — the BIAS-curve binning variable.
    pub bin_power: f64,
}

/// A set of out-of-sample predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionSet {
    pub entries: Vec<PredictionEntry>,
}

/// Root mean square error of the residuals `y − ŷ`.
pub fn rmse(preds: &PredictionSet) -> Result<f64, EvalError> {
    if preds.entries.is_empty() {
        return Err(EvalError::EmptyPredictionSet);
    }
    let sse: f64 = preds.entries.iter().map(|e| (e.y_true - e.y_hat).powi(2)).sum();
    Ok((sse / preds.entries.len() as f64).sqrt())
}

/// Signed relative bias `Σ(ŷ − y) / Σŷ`; positive means over-prediction.
/// Returned as a fraction; the ×100 formatting belongs to reporting.
pub fn bias_pct(preds: &PredictionSet) -> Result<f64, EvalError> {
    if preds.entries.is_empty() {
        return Err(EvalError::EmptyPredictionSet);
    }
    let denominator: f64 = preds.entries.iter().map(|e| e.y_hat).sum();
    let floor = BIAS_DENOMINATOR_EPS_PER_ROW * preds.entries.len() as f64;
    if denominator.abs() <= floor {
        return Err(EvalError::DegenerateDenominator {
            sum: denominator,
            n: preds.entries.len(),
        });
    }
    let numerator: f64 = preds.entries.iter().map(|e| e.y_hat - e.y_true).sum();
    Ok(numerator / denominator)
}

/// Residual binning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinSpec {
    pub width_kw: f64,
    pub min_count: usize,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self { width_kw: DEFAULT_BIN_WIDTH_KW, min_count: DEFAULT_MIN_BIN_COUNT }
    }
}

#[inline]
pub fn bin_id_for(power_kw: f64, width_kw: f64) -> i64 {
    (power_kw / width_kw).floor() as i64
}

#[inline]
pub fn bin_mid(bin_id: i64, width_kw: f64) -> f64 {
    (bin_id as f64 + 0.5) * width_kw
}

/// One retained bin of a BIAS curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBin {
    pub bin_id: i64,
    pub bin_mid: f64,
    /// Median residual (or curve value), kW.
    pub bias: f64,
    pub count: usize,
}

/// Per-bin median residuals indexed by control-turbine power bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasCurve {
    pub bins: Vec<BiasBin>,
    pub bin_width: f64,
}

impl BiasCurve {
    pub fn bin(&self, bin_id: i64) -> Option<&BiasBin> {
        self.bins.iter().find(|b| b.bin_id == bin_id)
    }

    /// Largest |value| over retained bins; +∞ for an empty curve, so a pair
    /// without common bins can never pass a threshold on this quantity.
    pub fn max_abs(&self) -> f64 {
        if self.bins.is_empty() {
            f64::INFINITY
        } else {
            self.bins.iter().map(|b| b.bias.abs()).fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

/// Exact median; even counts average the two central order statistics.
fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Bin residuals by `floor(bin_power / width)` and take per-bin medians,
/// dropping bins with fewer than `min_count` residuals.
pub fn bias_curve(preds: &PredictionSet, spec: BinSpec) -> BiasCurve {
    let mut grouped: std::collections::BTreeMap<i64, Vec<f64>> = std::collections::BTreeMap::new();
    for e in &preds.entries {
        grouped
            .entry(bin_id_for(e.bin_power, spec.width_kw))
            .or_default()
            .push(e.y_true - e.y_hat);
    }
    let bins = grouped
        .into_iter()
        .filter(|(_, residuals)| residuals.len() >= spec.min_count)
        .map(|(bin_id, mut residuals)| BiasBin {
            bin_id,
            bin_mid: bin_mid(bin_id, spec.width_kw),
            bias: median(&mut residuals),
            count: residuals.len(),
        })
        .collect();
    BiasCurve { bins, bin_width: spec.width_kw }
}

/// Bin-wise difference over the intersection of retained bins; counts take
/// the smaller side.
pub fn curve_diff(a: &BiasCurve, b: &BiasCurve) -> Result<BiasCurve, EvalError> {
    if a.bin_width != b.bin_width {
        return Err(EvalError::BinWidthMismatch(a.bin_width, b.bin_width));
    }
    let bins = a
        .bins
        .iter()
        .filter_map(|bin_a| {
            b.bin(bin_a.bin_id).map(|bin_b| BiasBin {
                bin_id: bin_a.bin_id,
                bin_mid: bin_a.bin_mid,
                bias: bin_a.bias - bin_b.bias,
                count: bin_a.count.min(bin_b.count),
            })
        })
        .collect();
    Ok(BiasCurve { bins, bin_width: a.bin_width })
}

/// Average curves bin-wise over the folds where each bin is retained,
/// dropping bins present in fewer than `min_presence` curves. Counts sum over
/// the contributing folds.
pub fn average_curves(curves: &[&BiasCurve], min_presence: usize, bin_width: f64) -> BiasCurve {
    let mut grouped: std::collections::BTreeMap<i64, (Vec<f64>, usize)> =
        std::collections::BTreeMap::new();
    for curve in curves {
        for bin in &curve.bins {
            let slot = grouped.entry(bin.bin_id).or_default();
            slot.0.push(bin.bias);
            slot.1 += bin.count;
        }
    }
    let bins = grouped
        .into_iter()
        .filter(|(_, (values, _))| values.len() >= min_presence)
        .map(|(bin_id, (values, count))| BiasBin {
            bin_id,
            bin_mid: bin_mid(bin_id, bin_width),
            bias: values.iter().sum::<f64>() / values.len() as f64,
            count,
        })
        .collect();
    BiasCurve { bins, bin_width }
}

/// Metrics of one fold's test predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldMetrics {
    pub fold: u8,
    pub rmse: f64,
    pub bias: f64,
    pub curve: BiasCurve,
}

/// Fold-averaged CV measures.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvMetrics {
    pub cv_rmse: f64,
    pub cv_bias: f64,
    pub cv_bias_curve: BiasCurve,
    pub per_fold: Vec<FoldMetrics>,
}

/// Flatten the selected covariates of `records` into a row-major buffer.
pub fn design_rows(records: &[&AlignedRecord], variables: &[Covariate]) -> Vec<f64> {
    let mut flat = Vec::with_capacity(records.len() * expanded_dim(variables));
    for r in records {
        r.covariates.push_expanded(variables, &mut flat);
    }
    flat
}

fn fit_on(
    records: &[&AlignedRecord],
    target: Target,
    variables: &[Covariate],
    k_bounds: &KGridBounds,
) -> Result<kernel::KernelModel, EvalError> {
    let matrix = DesignMatrix::standardize(
        expanded_column_names(variables),
        design_rows(records, variables),
    )?;
    let responses: Vec<f64> = records.iter().map(|r| target.response(r)).collect();
    let grid = k_bounds.grid_for(records.len())?;
    Ok(kernel::fit(matrix, responses, &grid)?)
}

/// Fit on training records, predict the test records.
pub fn predict_records(
    model: &kernel::KernelModel,
    records: &[&AlignedRecord],
    indices: &[usize],
    target: Target,
    variables: &[Covariate],
) -> Result<PredictionSet, EvalError> {
    let raws: Vec<Vec<f64>> = records
        .iter()
        .map(|r| {
            let mut raw = Vec::with_capacity(expanded_dim(variables));
            r.covariates.push_expanded(variables, &mut raw);
            raw
        })
        .collect();
    let y_hat = model.predict_batch(&raws).map_err(EvalError::Kernel)?;
    let entries = records
        .iter()
        .zip(indices)
        .zip(y_hat)
        .map(|((r, &record_index), y_hat)| PredictionEntry {
            record_index,
            y_true: target.response(r),
            y_hat,
            bin_power: r.y_ctrb,
        })
        .collect();
    Ok(PredictionSet { entries })
}

/// Run the full 5-fold evaluation of one model specification on Period-1
/// records: per fold, fit on the other four folds (re-selecting k by GCV on
/// that training split), predict the held-out fold, and compute the three
/// measures; then average.
pub fn cv_evaluate(
    p1: &[AlignedRecord],
    target: Target,
    variables: &[Covariate],
    folds: &FoldPlan,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<CvMetrics, EvalError> {
    if variables.is_empty() {
        return Err(EvalError::NoVariables);
    }
    if folds.len() != p1.len() {
        return Err(EvalError::FoldPlanMismatch { plan: folds.len(), records: p1.len() });
    }

    let per_fold: Vec<FoldMetrics> = (1..=FOLD_COUNT as u8)
        .into_par_iter()
        .map(|fold| -> Result<FoldMetrics, EvalError> {
            let train_idx = folds.train_indices(fold);
            let test_idx = folds.test_indices(fold);
            let train: Vec<&AlignedRecord> = train_idx.iter().map(|&i| &p1[i]).collect();
            let test: Vec<&AlignedRecord> = test_idx.iter().map(|&i| &p1[i]).collect();
            let model = fit_on(&train, target, variables, k_bounds)?;
            let preds = predict_records(&model, &test, &test_idx, target, variables)?;
            Ok(FoldMetrics {
                fold,
                rmse: rmse(&preds)?,
                bias: bias_pct(&preds)?,
                curve: bias_curve(&preds, bins),
            })
        })
        .collect::<Result<_, _>>()?;

    let mean = |f: &dyn Fn(&FoldMetrics) -> f64| {
        per_fold.iter().map(|m| f(m)).sum::<f64>() / per_fold.len() as f64
    };
    let curves: Vec<&BiasCurve> = per_fold.iter().map(|m| &m.curve).collect();
    Ok(CvMetrics {
        cv_rmse: mean(&|m| m.rmse),
        cv_bias: mean(&|m| m.bias),
        cv_bias_curve: average_curves(&curves, MIN_FOLD_PRESENCE, bins.width_kw),
        per_fold,
    })
}

/// Fit one model on all of `train` and evaluate it on all of `test` — the
/// single-split evaluation used for Period-2 prediction.
pub fn single_split_evaluate(
    train: &[AlignedRecord],
    test: &[AlignedRecord],
    target: Target,
    variables: &[Covariate],
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<BiasCurve, EvalError> {
    if variables.is_empty() {
        return Err(EvalError::NoVariables);
    }
    let train_refs: Vec<&AlignedRecord> = train.iter().collect();
    let test_refs: Vec<&AlignedRecord> = test.iter().collect();
    let indices: Vec<usize> = (0..test.len()).collect();
    let model = fit_on(&train_refs, target, variables, k_bounds)?;
    let preds = predict_records(&model, &test_refs, &indices, target, variables)?;
    Ok(bias_curve(&preds, bins))
}
