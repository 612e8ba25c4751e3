//! Period-1 analysis: backward-elimination variable selection and
//! control-turbine pair assessment.
//!
//! Selection starts from all six candidate covariates, repeatedly evaluates
//! every single-variable deletion by CV_RMSE of the reference model, and
//! accepts the best deletion only while it strictly improves on the current
//! optimum. Circular sin/cos pairs are removed atomically. Pair assessment
//! compares the reference and baseline models' BIAS curves fold by fold; a
//! pair whose averaged |DIFF| stays within 10 kW on every retained bin is
//! considered to satisfy the shared-unknown-effect assumption.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{candidate_covariates, AlignedDataset, Covariate};
use crate::error::EvalError;
use crate::evaluation::{
    average_curves, curve_diff, cv_evaluate, BiasCurve, BinSpec, CvMetrics, FoldPlan, Target,
    MIN_FOLD_PRESENCE,
};
use crate::kernel::KGridBounds;

/// A pair's averaged |DIFF_b| must stay at or below this on every retained bin.
pub const PAIR_DIFF_LIMIT_KW: f64 = 10.0;

/// One pass of the elimination loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionStep {
    /// Candidate set at the start of the step.
    pub candidate_set: Vec<Covariate>,
    /// The variable removed by this step, if the step was accepted.
    pub removed: Option<Covariate>,
    /// CV_RMSE of each single-deletion model evaluated in this pass.
    pub deletion_cv: Vec<(Covariate, f64)>,
    /// CV_RMSE backing this step: the full model's value for the initial
    /// step, the best deletion's value afterwards.
    pub chosen_cv: f64,
    pub accepted: bool,
}

/// Full record of a backward-elimination run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTrace {
    pub steps: Vec<SelectionStep>,
    pub final_set: Vec<Covariate>,
}

impl SelectionTrace {
    /// CV_RMSE of the accepted model sequence, starting at the full model.
    pub fn accepted_cv_sequence(&self) -> Vec<f64> {
        self.steps.iter().filter(|s| s.accepted).map(|s| s.chosen_cv).collect()
    }
}

/// Backward elimination over the six candidate covariates for the reference
/// model. The fold plan is fixed across all candidate evaluations so that
/// CV_RMSE comparisons are paired.
pub fn select_variables(
    dataset: &AlignedDataset,
    folds: &FoldPlan,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<SelectionTrace, EvalError> {
    select_variables_on(dataset.p1(), folds, k_bounds, bins)
}

/// As [`select_variables`], over an explicit Period-1 record slice.
pub fn select_variables_on(
    p1: &[crate::dataset::AlignedRecord],
    folds: &FoldPlan,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<SelectionTrace, EvalError> {
    let evaluate = |variables: &[Covariate]| -> Result<f64, EvalError> {
        Ok(cv_evaluate(p1, Target::Reference, variables, folds, k_bounds, bins)?.cv_rmse)
    };

    let mut current: Vec<Covariate> = candidate_covariates().to_vec();
    let mut best_cv = evaluate(&current)?;
    let mut steps = vec![SelectionStep {
        candidate_set: current.clone(),
        removed: None,
        deletion_cv: Vec::new(),
        chosen_cv: best_cv,
        accepted: true,
    }];

    while current.len() > 1 {
        let deletion_cv: Vec<(Covariate, f64)> = current
            .par_iter()
            .map(|&out| {
                let reduced: Vec<Covariate> =
                    current.iter().copied().filter(|&v| v != out).collect();
                evaluate(&reduced).map(|cv| (out, cv))
            })
            .collect::<Result<_, _>>()?;

        // argmin over deletions; the first minimum wins on ties, matching the
        // positional argmin over l = 1..q.
        let (best_var, best_deletion_cv) = deletion_cv
            .iter()
            .copied()
            .reduce(|best, cand| if cand.1 < best.1 { cand } else { best })
            .expect("candidate set is nonempty");

        let accepted = best_deletion_cv < best_cv;
        steps.push(SelectionStep {
            candidate_set: current.clone(),
            removed: accepted.then_some(best_var),
            deletion_cv,
            chosen_cv: best_deletion_cv,
            accepted,
        });
        if !accepted {
            break;
        }
        current.retain(|&v| v != best_var);
        best_cv = best_deletion_cv;
    }

    Ok(SelectionTrace { steps, final_set: current })
}

/// Assessment of one CTR-b/CTR-n candidate pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAssessment {
    pub ctrb_id: String,
    pub ctrn_id: String,
    pub ref_metrics: CvMetrics,
    pub ctrb_metrics: CvMetrics,
    /// Fold-averaged DIFF curve (REF BIAS minus CTR-b BIAS, bin-wise).
    pub diff_curve: BiasCurve,
    pub max_abs_diff: f64,
    pub passes_10kw: bool,
}

/// Fit the reference and baseline models on one pair's aligned dataset and
/// summarize their BIAS-curve difference. Both models share the covariates
/// and the fold plan; DIFF is taken per fold and then averaged.
pub fn assess_pair(
    dataset: &AlignedDataset,
    variables: &[Covariate],
    folds: &FoldPlan,
    k_bounds: &KGridBounds,
    bins: BinSpec,
) -> Result<PairAssessment, EvalError> {
    let p1 = dataset.p1();
    let ref_metrics = cv_evaluate(p1, Target::Reference, variables, folds, k_bounds, bins)?;
    let ctrb_metrics = cv_evaluate(p1, Target::Baseline, variables, folds, k_bounds, bins)?;

    let fold_diffs: Vec<BiasCurve> = ref_metrics
        .per_fold
        .iter()
        .zip(&ctrb_metrics.per_fold)
        .map(|(r, c)| curve_diff(&r.curve, &c.curve))
        .collect::<Result<_, _>>()?;
    let diff_refs: Vec<&BiasCurve> = fold_diffs.iter().collect();
    let diff_curve = average_curves(&diff_refs, MIN_FOLD_PRESENCE, bins.width_kw);
    let max_abs_diff = diff_curve.max_abs();

    Ok(PairAssessment {
        ctrb_id: dataset.roles.baseline.clone(),
        ctrn_id: dataset.roles.neutral.clone(),
        ref_metrics,
        ctrb_metrics,
        diff_curve,
        max_abs_diff,
        passes_10kw: max_abs_diff <= PAIR_DIFF_LIMIT_KW,
    })
}

/// Deterministic pair ranking: pairs meeting the 10 kW criterion first, then
/// smaller |DIFF| maximum, then reference-model CV_RMSE, then |CV_BIAS|, with
/// a lexicographic turbine-id tiebreak.
pub fn rank_pairs(mut assessments: Vec<PairAssessment>) -> Vec<PairAssessment> {
    assessments.sort_by(|a, b| {
        b.passes_10kw
            .cmp(&a.passes_10kw)
            .then_with(|| a.max_abs_diff.total_cmp(&b.max_abs_diff))
            .then_with(|| a.ref_metrics.cv_rmse.total_cmp(&b.ref_metrics.cv_rmse))
            .then_with(|| a.ref_metrics.cv_bias.abs().total_cmp(&b.ref_metrics.cv_bias.abs()))
            .then_with(|| (&a.ctrb_id, &a.ctrn_id).cmp(&(&b.ctrb_id, &b.ctrn_id)))
    });
    assessments
}
