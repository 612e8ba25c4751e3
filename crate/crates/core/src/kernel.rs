//! Adaptive Nadaraya-Watson kernel regression.
//!
//! The regressor predicts `f(x) = Σ ω_i(x)·y_i` with Gaussian weights
//! `ω_i(x) ∝ K(‖x − x_i‖ / R_x)` whose bandwidth adapts to local data
//! density: `R_x = d_x(k) / 3`, the k-th nearest training distance divided by
//! a fixed factor. The single free parameter `k` is chosen by minimizing the
//! generalized cross-validation criterion
//! `GCV(k) = n⁻¹‖(I − M)y‖² / (n⁻¹ tr(I − M))²` over a grid, where `M` is the
//! smoother matrix whose rows are the training-point weight vectors.
//!
//! Distances are taken in z-scored coordinates; the standardization computed
//! from the training rows is stored in the model so evaluation points are
//! mapped identically. The grid scan streams row by row instead of
//! materializing `M`, which keeps fitting O(n²) in memory-light form; the
//! explicit [`smoother_matrix`] is retained as the direct matrix route.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::KernelError;

/// Fixed divisor of the k-th neighbor distance in the adaptive bandwidth.
pub const BANDWIDTH_DIVISOR: f64 = 3.0;

/// Floor applied to the bandwidth when the k-th neighbor is coincident,
/// in standardized units. Duplicate covariate rows (routine under bootstrap
/// resampling) would otherwise divide by zero.
pub const BANDWIDTH_FLOOR: f64 = 1e-8;

/// A smoother with `tr(I − M)` at or below this is treated as interpolating;
/// the corresponding k is inadmissible.
pub const TRACE_EPSILON: f64 = 1e-8;

/// Kernel argument beyond which `exp(−a²/2)` underflows f64; the weight is
/// taken as exactly zero.
pub const KERNEL_ARG_CUTOFF: f64 = 40.0;

/// Default neighbor-count grid bounds: `{3, …, min(100, n−1)}`.
pub const DEFAULT_K_MIN: usize = 3;
pub const DEFAULT_K_MAX: usize = 100;

const GAUSS_NORM: f64 = 0.398_942_280_401_432_7; // 1/sqrt(2π)

/// Standard normal density kernel.
#[inline]
pub fn gaussian_kernel(a: f64) -> f64 {
    if a > KERNEL_ARG_CUTOFF {
        0.0
    } else {
        GAUSS_NORM * (-0.5 * a * a).exp()
    }
}

/// Per-column training statistics used for z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub stdev: f64,
}

/// Standardized training covariates, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
    column_names: Vec<String>,
    standardization: Vec<ColumnStats>,
}

impl DesignMatrix {
    /// Build from raw rows (flat row-major), z-scoring each column with its
    /// own mean and population standard deviation. Constant columns are
    /// rejected: a zero spread makes the Euclidean distance undefined.
    pub fn standardize(column_names: Vec<String>, raw: Vec<f64>) -> Result<Self, KernelError> {
        let d = column_names.len();
        if d == 0 || raw.len() % d != 0 {
            return Err(KernelError::RaggedMatrix { len: raw.len(), columns: d });
        }
        let n = raw.len() / d;
        if n < 2 {
            return Err(KernelError::TooFewRows(n));
        }

        let mut stats = Vec::with_capacity(d);
        for c in 0..d {
            let mean = (0..n).map(|r| raw[r * d + c]).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (raw[r * d + c] - mean).powi(2)).sum::<f64>() / n as f64;
            let stdev = var.sqrt();
            if stdev <= 0.0 || !stdev.is_finite() {
                return Err(KernelError::ConstantColumn { name: column_names[c].clone() });
            }
            stats.push(ColumnStats { mean, stdev });
        }

        let mut data = raw;
        for r in 0..n {
            for c in 0..d {
                let s = stats[c];
                data[r * d + c] = (data[r * d + c] - s.mean) / s.stdev;
            }
        }
        Ok(Self { data, n, d, column_names, standardization: stats })
    }

    /// Build from rows already in standardized coordinates (mean 0, sd 1 are
    /// recorded, so points pass through unchanged).
    pub fn pre_standardized(column_names: Vec<String>, data: Vec<f64>) -> Result<Self, KernelError> {
        let d = column_names.len();
        if d == 0 || data.len() % d != 0 {
            return Err(KernelError::RaggedMatrix { len: data.len(), columns: d });
        }
        let n = data.len() / d;
        if n < 2 {
            return Err(KernelError::TooFewRows(n));
        }
        let standardization = vec![ColumnStats { mean: 0.0, stdev: 1.0 }; d];
        Ok(Self { data, n, d, column_names, standardization })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.d
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn standardization(&self) -> &[ColumnStats] {
        &self.standardization
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Map a raw point into this matrix's standardized coordinates.
    pub fn standardize_point(&self, raw: &[f64]) -> Result<Vec<f64>, KernelError> {
        if raw.len() != self.d {
            return Err(KernelError::DimensionMismatch { expected: self.d, got: raw.len() });
        }
        Ok(raw
            .iter()
            .zip(&self.standardization)
            .map(|(v, s)| (v - s.mean) / s.stdev)
            .collect())
    }

    fn check_k(&self, k: usize) -> Result<(), KernelError> {
        if k == 0 || k > self.n {
            return Err(KernelError::KOutOfRange { k, max: self.n });
        }
        Ok(())
    }

    /// Distances from `x` (standardized coordinates) to every training row.
    fn distances(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n).map(|i| euclidean(x, self.row(i))));
    }
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// k-th smallest value of `values` (1-based k), via in-place selection.
fn kth_smallest(values: &mut [f64], k: usize) -> f64 {
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Adaptive bandwidth at `x`: the k-th nearest training distance divided by
/// [`BANDWIDTH_DIVISOR`], floored at [`BANDWIDTH_FLOOR`]. When `x` is itself
/// a training point its zero self-distance participates in the ranking.
pub fn adaptive_bandwidth(x: &[f64], training_x: &DesignMatrix, k: usize) -> Result<f64, KernelError> {
    if x.len() != training_x.d {
        return Err(KernelError::DimensionMismatch { expected: training_x.d, got: x.len() });
    }
    training_x.check_k(k)?;
    let mut dists = Vec::with_capacity(training_x.n);
    training_x.distances(x, &mut dists);
    Ok(bandwidth_from(kth_smallest(&mut dists, k)))
}

#[inline]
fn bandwidth_from(kth_distance: f64) -> f64 {
    (kth_distance / BANDWIDTH_DIVISOR).max(BANDWIDTH_FLOOR)
}

/// Normalized Gaussian weights over the training rows at evaluation point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub evaluation_point: Vec<f64>,
}

/// Eq.-style weight computation: `ω_i(x) = K(‖x−x_i‖/R_x) / Σ_j K(‖x−x_j‖/R_x)`.
pub fn weights_at(x: &[f64], training_x: &DesignMatrix, k: usize) -> Result<WeightVector, KernelError> {
    if x.len() != training_x.d {
        return Err(KernelError::DimensionMismatch { expected: training_x.d, got: x.len() });
    }
    training_x.check_k(k)?;
    let mut dists = Vec::with_capacity(training_x.n);
    training_x.distances(x, &mut dists);
    let mut ranked = dists.clone();
    let bandwidth = bandwidth_from(kth_smallest(&mut ranked, k));

    let mut weights: Vec<f64> = dists.iter().map(|d| gaussian_kernel(d / bandwidth)).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(WeightVector { weights, evaluation_point: x.to_vec() })
}

/// The n×n smoother matrix `M` with `M[a][b] = ω_b(x_a)`; every row sums to 1.
pub fn smoother_matrix(training_x: &DesignMatrix, k: usize) -> Result<Vec<Vec<f64>>, KernelError> {
    training_x.check_k(k)?;
    (0..training_x.n)
        .map(|a| weights_at(training_x.row(a), training_x, k).map(|w| w.weights))
        .collect()
}

/// One grid entry's GCV outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GcvOutcome {
    /// The Eq.-form criterion value.
    Value(f64),
    /// `tr(I − M)` fell at or below [`TRACE_EPSILON`]; k is inadmissible.
    Saturated,
}

/// Per-row contribution to GCV: the training residual `y_a − Σ_b M[a][b]·y_b`
/// and the self-weight `M[a][a]`.
fn row_gcv_terms(
    training_x: &DesignMatrix,
    y: &[f64],
    a: usize,
    grid: &[usize],
    max_k: usize,
) -> Vec<(f64, f64)> {
    let n = training_x.n;
    let xa = training_x.row(a);
    let mut dists = Vec::with_capacity(n);
    training_x.distances(xa, &mut dists);

    // One selection pass yields the k-th distance for every grid entry.
    let mut ranked = dists.clone();
    let (head, nth) = {
        let (lo, nth, _) = ranked.select_nth_unstable_by(max_k - 1, f64::total_cmp);
        lo.sort_unstable_by(f64::total_cmp);
        (&*lo, *nth)
    };
    let kth_distance = |k: usize| if k == max_k { nth } else { head[k - 1] };

    grid.iter()
        .map(|&k| {
            let bandwidth = bandwidth_from(kth_distance(k));
            let mut numerator = 0.0;
            let mut denominator = 0.0;
            let mut self_weight = 0.0;
            for (i, &dist) in dists.iter().enumerate() {
                let arg = dist / bandwidth;
                if arg <= KERNEL_ARG_CUTOFF {
                    let w = (-0.5 * arg * arg).exp();
                    numerator += w * y[i];
                    denominator += w;
                    if i == a {
                        self_weight = w;
                    }
                }
            }
            (y[a] - numerator / denominator, self_weight / denominator)
        })
        .collect()
}

/// Evaluate GCV for every k in `grid` in one streaming pass over the rows.
fn gcv_scan(
    training_x: &DesignMatrix,
    y: &[f64],
    grid: &[usize],
) -> Result<Vec<(usize, GcvOutcome)>, KernelError> {
    let n = training_x.n;
    if y.len() != n {
        return Err(KernelError::ResponseLengthMismatch { rows: n, responses: y.len() });
    }
    for &k in grid {
        if k == 0 || k > n - 1 {
            return Err(KernelError::KOutOfRange { k, max: n - 1 });
        }
    }
    let max_k = *grid.iter().max().ok_or(KernelError::EmptyKGrid)?;

    let per_row: Vec<Vec<(f64, f64)>> = (0..n)
        .into_par_iter()
        .map(|a| row_gcv_terms(training_x, y, a, grid, max_k))
        .collect();

    Ok(grid
        .iter()
        .enumerate()
        .map(|(gi, &k)| {
            let mut rss = 0.0;
            let mut trace = 0.0;
            for row in &per_row {
                let (residual, self_ratio) = row[gi];
                rss += residual * residual;
                trace += 1.0 - self_ratio;
            }
            let n_f = n as f64;
            if trace <= TRACE_EPSILON {
                (k, GcvOutcome::Saturated)
            } else {
                (k, GcvOutcome::Value((rss / n_f) / (trace / n_f).powi(2)))
            }
        })
        .collect())
}

/// GCV criterion for a single k, streamed from per-point residuals and an
/// accumulated trace.
pub fn gcv(training_x: &DesignMatrix, y: &[f64], k: usize) -> Result<f64, KernelError> {
    match gcv_scan(training_x, y, &[k])?[0].1 {
        GcvOutcome::Value(v) => Ok(v),
        GcvOutcome::Saturated => {
            // Recover the offending trace for the error message.
            let m = smoother_matrix(training_x, k)?;
            let trace = m.iter().enumerate().map(|(a, row)| 1.0 - row[a]).sum();
            Err(KernelError::SaturatedSmoother { k, trace })
        }
    }
}

/// A fitted adaptive kernel regressor.
#[derive(Debug, Clone)]
pub struct KernelModel {
    training_x: DesignMatrix,
    training_y: Vec<f64>,
    k: usize,
    k_grid: Vec<usize>,
    gcv_trace: Vec<(usize, GcvOutcome)>,
    y_min: f64,
    y_max: f64,
}

impl KernelModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_grid(&self) -> &[usize] {
        &self.k_grid
    }

    pub fn gcv_trace(&self) -> &[(usize, GcvOutcome)] {
        &self.gcv_trace
    }

    pub fn training_x(&self) -> &DesignMatrix {
        &self.training_x
    }

    pub fn training_y(&self) -> &[f64] {
        &self.training_y
    }

    /// Predict at a point given in raw (unstandardized) coordinates.
    ///
    /// The result is a convex combination of training responses and is
    /// clamped onto `[min y, max y]` to keep that exact under rounding.
    pub fn predict(&self, raw: &[f64]) -> Result<f64, KernelError> {
        let z = self.training_x.standardize_point(raw)?;
        Ok(self.predict_standardized(&z))
    }

    fn predict_standardized(&self, z: &[f64]) -> f64 {
        let mut dists = Vec::with_capacity(self.training_x.n);
        self.training_x.distances(z, &mut dists);
        let mut ranked = dists.clone();
        let bandwidth = bandwidth_from(kth_smallest(&mut ranked, self.k));

        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for (i, &dist) in dists.iter().enumerate() {
            let arg = dist / bandwidth;
            if arg <= KERNEL_ARG_CUTOFF {
                let w = (-0.5 * arg * arg).exp();
                numerator += w * self.training_y[i];
                denominator += w;
            }
        }
        (numerator / denominator).clamp(self.y_min, self.y_max)
    }

    /// Predict a batch of raw points in parallel, preserving order.
    pub fn predict_batch(&self, raws: &[Vec<f64>]) -> Result<Vec<f64>, KernelError> {
        raws.par_iter().map(|raw| self.predict(raw)).collect()
    }

    /// Export the `(k, GCV)` trace as CSV for diagnostics.
    pub fn write_gcv_trace_csv<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "gcv", "saturated"]).map_err(csv_io)?;
        for (k, outcome) in &self.gcv_trace {
            let (value, saturated) = match outcome {
                GcvOutcome::Value(v) => (v.to_string(), "false"),
                GcvOutcome::Saturated => (String::new(), "true"),
            };
            w.write_record([k.to_string(), value, saturated.to_string()]).map_err(csv_io)?;
        }
        w.flush()
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Fit the regressor: evaluate GCV over `k_grid` and keep the minimizing k
/// (ties broken toward the smallest, favouring the smoother fit).
pub fn fit(
    training_x: DesignMatrix,
    training_y: Vec<f64>,
    k_grid: &[usize],
) -> Result<KernelModel, KernelError> {
    if k_grid.is_empty() {
        return Err(KernelError::EmptyKGrid);
    }
    let mut grid: Vec<usize> = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let trace = gcv_scan(&training_x, &training_y, &grid)?;
    let mut best: Option<(usize, f64)> = None;
    for &(k, outcome) in &trace {
        if let GcvOutcome::Value(v) = outcome {
            if best.is_none_or(|(_, bv)| v < bv) {
                best = Some((k, v));
            }
        }
    }
    let (k, _) = best.ok_or(KernelError::NoAdmissibleK)?;

    let (y_min, y_max) = training_y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(KernelModel {
        training_x,
        training_y,
        k,
        k_grid: grid,
        gcv_trace: trace,
        y_min,
        y_max,
    })
}

/// Grid bounds from which a concrete grid is clamped per training size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KGridBounds {
    pub min: usize,
    pub max: usize,
}

impl Default for KGridBounds {
    fn default() -> Self {
        Self { min: DEFAULT_K_MIN, max: DEFAULT_K_MAX }
    }
}

impl KGridBounds {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    /// The concrete grid `{min, …, min(max, n−1)}` for `n` training rows.
    pub fn grid_for(&self, n_train: usize) -> Result<Vec<usize>, KernelError> {
        let upper = self.max.min(n_train.saturating_sub(1));
        if self.min == 0 || self.min > upper {
            return Err(KernelError::KOutOfRange { k: self.min, max: upper });
        }
        Ok((self.min..=upper).collect())
    }
}

/// The default grid `{3, …, min(100, n−1)}`.
pub fn default_k_grid(n_train: usize) -> Vec<usize> {
    KGridBounds::default().grid_for(n_train).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_1d(points: &[f64]) -> DesignMatrix {
        DesignMatrix::pre_standardized(vec!["x".into()], points.to_vec()).unwrap()
    }

    #[test]
    fn bandwidth_from_sorted_distances() {
        // distances from 0 to {0, 1, 2} are {0, 1, 2}; the 2nd smallest is 1
        let tx = matrix_1d(&[0.0, 1.0, 2.0]);
        let r = adaptive_bandwidth(&[0.0], &tx, 2).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coincident_kth_neighbor_hits_floor() {
        let tx = matrix_1d(&[1.0, 1.0]);
        let r = adaptive_bandwidth(&[1.0], &tx, 2).unwrap();
        assert_eq!(r, BANDWIDTH_FLOOR);
    }

    #[test]
    fn bandwidth_scales_with_coordinates() {
        let tx = matrix_1d(&[0.0, 1.0, 2.0, 5.0]);
        let scaled = matrix_1d(&[0.0, 2.5, 5.0, 12.5]);
        let r = adaptive_bandwidth(&[1.0], &tx, 3).unwrap();
        let r_scaled = adaptive_bandwidth(&[2.5], &scaled, 3).unwrap();
        assert!((r_scaled - 2.5 * r).abs() < 1e-12);
    }

    #[test]
    fn weights_normalize_and_match_hand_values() {
        let tx = matrix_1d(&[0.0, 1.0, 2.0]);
        let w = weights_at(&[0.0], &tx, 2).unwrap();
        let sum: f64 = w.weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // R = 1/3 so the kernel arguments are {0, 3, 6}
        assert!((w.weights[0] - 0.98901).abs() < 1e-4);
        assert!((w.weights[1] - 0.01098).abs() < 1e-4);
        assert!((w.weights[2] - 1.5e-8).abs() < 1e-8);
    }

    #[test]
    fn single_training_point_gets_unit_weight() {
        // n = 1 is below the matrix minimum; the two-point equidistant case
        // plays the same normalization role.
        let tx = matrix_1d(&[-1.0, 1.0]);
        let w = weights_at(&[0.0], &tx, 1).unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12);
        assert!((w.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn smoother_rows_sum_to_one_and_match_predictions() {
        let tx = matrix_1d(&[0.0, 0.3, 1.1, 2.0, 2.2]);
        let y = vec![5.0, 6.0, 4.0, 8.0, 7.5];
        let m = smoother_matrix(&tx, 3).unwrap();
        for (a, row) in m.iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let via_matrix: f64 = row.iter().zip(&y).map(|(w, yi)| w * yi).sum();
            let via_weights: f64 = weights_at(tx.row(a), &tx, 3)
                .unwrap()
                .weights
                .iter()
                .zip(&y)
                .map(|(w, yi)| w * yi)
                .sum();
            assert!((via_matrix - via_weights).abs() < 1e-10);
        }
    }

    #[test]
    fn symmetric_two_point_smoother() {
        let tx = matrix_1d(&[-1.0, 1.0]);
        let m = smoother_matrix(&tx, 1).unwrap();
        assert!((m[0][0] - m[1][1]).abs() < 1e-12);
        assert!((m[0][1] - m[1][0]).abs() < 1e-12);
    }

    #[test]
    fn gcv_zero_for_constant_response() {
        // k = 1 always saturates at training points (the self-distance is the
        // nearest), so the admissible grid starts at 2.
        let tx = matrix_1d(&[0.0, 0.7, 1.4, 2.8]);
        let y = vec![3.0; 4];
        for k in 2..=3 {
            assert!(gcv(&tx, &y, k).unwrap().abs() < 1e-20);
        }
        assert!(matches!(gcv(&tx, &y, 1), Err(KernelError::SaturatedSmoother { k: 1, .. })));
    }

    #[test]
    fn gcv_matches_matrix_form() {
        let tx = DesignMatrix::pre_standardized(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.1, 0.9, 1.2, 1.7, 0.3, 2.4, 2.2, 0.5, 0.8, 1.9, 1.1],
        )
        .unwrap();
        let y = vec![2.0, 4.5, 3.0, 6.0, 1.5, 5.0];
        for k in 1..=5 {
            let m = smoother_matrix(&tx, k).unwrap();
            let n = y.len() as f64;
            let rss: f64 = (0..y.len())
                .map(|a| {
                    let fitted: f64 = m[a].iter().zip(&y).map(|(w, yi)| w * yi).sum();
                    (y[a] - fitted).powi(2)
                })
                .sum();
            let trace: f64 = (0..y.len()).map(|a| 1.0 - m[a][a]).sum();
            match gcv(&tx, &y, k) {
                Ok(streamed) => {
                    let matrix_form = (rss / n) / (trace / n).powi(2);
                    assert!(
                        (matrix_form - streamed).abs() < 1e-10,
                        "k={k}: {matrix_form} vs {streamed}"
                    );
                }
                Err(KernelError::SaturatedSmoother { .. }) => {
                    assert!(trace <= TRACE_EPSILON, "k={k} flagged saturated but tr = {trace}");
                }
                Err(other) => panic!("unexpected error at k={k}: {other}"),
            }
        }
    }

    #[test]
    fn hand_computed_three_point_gcv() {
        // Three 1-D points with k = 1: all bandwidths come from coincidence-free
        // nearest neighbors, so every quantity is a short closed-form expression.
        let tx = matrix_1d(&[0.0, 1.0, 3.0]);
        let y = [1.0, 2.0, 6.0];
        let kernel = |a: f64| (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();

        let mut m = [[0.0f64; 3]; 3];
        let points: [f64; 3] = [0.0, 1.0, 3.0];
        for a in 0..3 {
            let mut dists: Vec<f64> = points.iter().map(|p| (p - points[a]).abs()).collect();
            dists.sort_by(f64::total_cmp);
            let r = dists[0].max(1e-8) / 3.0;
            let r = r.max(BANDWIDTH_FLOOR);
            let raw: Vec<f64> =
                points.iter().map(|p| kernel((p - points[a]).abs() / r)).collect();
            let total: f64 = raw.iter().sum();
            for b in 0..3 {
                m[a][b] = raw[b] / total;
            }
        }
        // dists[0] is the self distance 0, so R hits the floor and M = I: the
        // k = 1 smoother interpolates and must be flagged as saturated.
        assert!(matches!(gcv(&tx, &y.to_vec(), 1), Err(KernelError::SaturatedSmoother { .. })));
        let _ = m;

        // k = 2 gives R_a = d_a(2)/3; spell out GCV for that case.
        let mut m2 = [[0.0f64; 3]; 3];
        for a in 0..3 {
            let mut dists: Vec<f64> = points.iter().map(|p| (p - points[a]).abs()).collect();
            dists.sort_by(f64::total_cmp);
            let r = dists[1] / 3.0;
            let raw: Vec<f64> =
                points.iter().map(|p| kernel((p - points[a]).abs() / r)).collect();
            let total: f64 = raw.iter().sum();
            for b in 0..3 {
                m2[a][b] = raw[b] / total;
            }
        }
        let rss: f64 = (0..3)
            .map(|a| {
                let fitted: f64 = (0..3).map(|b| m2[a][b] * y[b]).sum();
                (y[a] - fitted).powi(2)
            })
            .sum();
        let trace: f64 = (0..3).map(|a| 1.0 - m2[a][a]).sum();
        let expected = (rss / 3.0) / (trace / 3.0).powi(2);
        let got = gcv(&tx, &y.to_vec(), 2).unwrap();
        assert!((expected - got).abs() < 1e-10);
    }

    #[test]
    fn constant_response_predicts_constant() {
        let tx = matrix_1d(&[0.0, 1.0, 2.0, 3.5]);
        let model = fit(tx, vec![7.0; 4], &[1, 2, 3]).unwrap();
        for x in [-5.0, 0.0, 1.7, 99.0] {
            assert_eq!(model.predict(&[x]).unwrap(), 7.0);
        }
    }

    #[test]
    fn prediction_concentrates_on_coincident_points() {
        // A duplicated training point drives the k-th distance to zero, the
        // bandwidth to its floor, and all weight onto the coincident points.
        let tx = matrix_1d(&[7.0, 7.0, 30.0, 60.0]);
        let y = vec![5.0, 5.0, 9.0, 1.0];
        let model = fit(tx.clone(), y.clone(), &[2]).unwrap();
        let prediction = model.predict(&[7.0]).unwrap();
        assert!((prediction - 5.0).abs() < 1e-6);
        // agree with the weight-sum route
        let w = weights_at(&[7.0], &tx, 2).unwrap();
        let by_weights: f64 = w.weights.iter().zip(&y).map(|(w, yi)| w * yi).sum();
        assert!((prediction - by_weights).abs() < 1e-10);
    }

    #[test]
    fn predictions_stay_in_convex_hull() {
        let tx = matrix_1d(&[0.0, 0.5, 1.5, 2.0, 4.0]);
        let y = vec![3.0, -1.0, 2.0, 9.0, 4.0];
        let model = fit(tx, y, &[2, 3]).unwrap();
        for i in -20..40 {
            let p = model.predict(&[i as f64 * 0.25]).unwrap();
            assert!((-1.0..=9.0).contains(&p));
        }
    }

    #[test]
    fn singleton_grid_is_forced() {
        let tx = matrix_1d(&[0.0, 1.0, 2.0, 3.0]);
        let model = fit(tx, vec![0.0, 1.0, 0.5, 2.0], &[2]).unwrap();
        assert_eq!(model.k(), 2);
        assert_eq!(model.gcv_trace().len(), 1);
    }

    #[test]
    fn fit_is_deterministic() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x + 0.1 * (x * 5.0).cos()).collect();
        let grid: Vec<usize> = (2..=12).collect();
        let a = fit(matrix_1d(&xs), ys.clone(), &grid).unwrap();
        let b = fit(matrix_1d(&xs), ys, &grid).unwrap();
        assert_eq!(a.k(), b.k());
        for ((ka, va), (kb, vb)) in a.gcv_trace().iter().zip(b.gcv_trace()) {
            assert_eq!(ka, kb);
            match (va, vb) {
                (GcvOutcome::Value(x), GcvOutcome::Value(y)) => assert_eq!(x, y),
                (GcvOutcome::Saturated, GcvOutcome::Saturated) => {}
                _ => panic!("trace mismatch"),
            }
        }
    }

    #[test]
    fn gcv_selection_tracks_out_of_sample_error() {
        // Smooth 1-D function with noise: the GCV-selected k must be within
        // 5% of the best achievable held-out RMSE over the grid.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let f = |x: f64| (x * 1.3).sin() * 4.0 + 0.5 * x;
        let train_x: Vec<f64> = (0..120).map(|_| rng.random::<f64>() * 6.0).collect();
        let train_y: Vec<f64> =
            train_x.iter().map(|&x| f(x) + rng.random::<f64>() - 0.5).collect();
        let test_x: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 6.0).collect();
        let test_y: Vec<f64> = test_x.iter().map(|&x| f(x) + rng.random::<f64>() - 0.5).collect();

        let grid: Vec<usize> = (2..=20).collect();
        let oos_rmse = |k: usize| -> f64 {
            let model = fit(matrix_1d(&train_x), train_y.clone(), &[k]).unwrap();
            let sse: f64 = test_x
                .iter()
                .zip(&test_y)
                .map(|(&x, &y)| (model.predict(&[x]).unwrap() - y).powi(2))
                .sum();
            (sse / test_x.len() as f64).sqrt()
        };
        let best = grid.iter().map(|&k| oos_rmse(k)).fold(f64::INFINITY, f64::min);
        let selected = fit(matrix_1d(&train_x), train_y.clone(), &grid).unwrap().k();
        assert!(oos_rmse(selected) <= 1.05 * best);
    }

    #[test]
    fn shift_homogeneity_and_scale_invariance_of_argmin() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64 * 0.71).fract() * 5.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x - 2.0).powi(2)).collect();
        let grid: Vec<usize> = (2..=10).collect();
        let base = fit(matrix_1d(&xs), ys.clone(), &grid).unwrap();

        let shifted = fit(
            matrix_1d(&xs),
            ys.iter().map(|y| y + 13.0).collect(),
            &grid,
        )
        .unwrap();
        for x in [0.3, 1.1, 2.9, 4.4] {
            let p0 = base.predict(&[x]).unwrap();
            let p1 = shifted.predict(&[x]).unwrap();
            assert!((p1 - p0 - 13.0).abs() < 1e-9);
        }

        let scaled = fit(
            matrix_1d(&xs),
            ys.iter().map(|y| y * 7.0).collect(),
            &grid,
        )
        .unwrap();
        assert_eq!(scaled.k(), base.k());
        for ((_, a), (_, b)) in base.gcv_trace().iter().zip(scaled.gcv_trace()) {
            if let (GcvOutcome::Value(va), GcvOutcome::Value(vb)) = (a, b) {
                assert!((vb / va - 49.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn permutation_invariance() {
        let xs = [0.0, 0.9, 1.7, 2.6, 3.1, 4.8];
        let ys = [2.0, 1.0, 4.0, 3.0, 5.0, 0.5];
        let perm = [3usize, 0, 5, 1, 4, 2];
        let px: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();
        let py: Vec<f64> = perm.iter().map(|&i| ys[i]).collect();
        let a = fit(matrix_1d(&xs), ys.to_vec(), &[3]).unwrap();
        let b = fit(matrix_1d(&px), py, &[3]).unwrap();
        for x in [-1.0, 0.4, 2.0, 3.3, 6.0] {
            assert!((a.predict(&[x]).unwrap() - b.predict(&[x]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn standardization_recorded_and_applied() {
        let raw = vec![10.0, 100.0, 20.0, 300.0, 30.0, 500.0, 40.0, 700.0];
        let tx = DesignMatrix::standardize(vec!["a".into(), "b".into()], raw).unwrap();
        assert_eq!(tx.n_rows(), 4);
        let s = tx.standardization();
        assert!((s[0].mean - 25.0).abs() < 1e-12);
        // population sd of {10,20,30,40}
        assert!((s[0].stdev - 125.0f64.sqrt()).abs() < 1e-12);
        let z = tx.standardize_point(&[25.0, 400.0]).unwrap();
        assert!(z[0].abs() < 1e-12 && z[1].abs() < 1e-12);
    }

    #[test]
    fn constant_column_rejected() {
        let err = DesignMatrix::standardize(
            vec!["a".into(), "b".into()],
            vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0],
        )
        .unwrap_err();
        assert!(matches!(err, KernelError::ConstantColumn { name } if name == "b"));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let tx = matrix_1d(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            fit(tx, vec![1.0, 2.0, 3.0], &[2]).unwrap().predict(&[1.0, 2.0]),
            Err(KernelError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn grid_bounds_clamp_to_training_size() {
        let b = KGridBounds::default();
        assert_eq!(b.grid_for(12).unwrap(), (3..=11).collect::<Vec<_>>());
        assert_eq!(default_k_grid(500).last(), Some(&100));
        assert!(b.grid_for(3).is_err());
    }

    #[test]
    fn gcv_trace_csv_roundtrip() {
        let tx = matrix_1d(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let model = fit(tx, vec![0.0, 1.0, 4.0, 9.0, 16.0], &[1, 2, 3, 4]).unwrap();
        let mut buf = Vec::new();
        model.write_gcv_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("k,gcv,saturated\n"));
        assert_eq!(text.lines().count(), 1 + model.gcv_trace().len());
    }
}
