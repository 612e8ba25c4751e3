//! Quantify the power-production gain of a passive-device upgrade on a wind
//! turbine from SCADA data alone.
//!
//! The approach fits adaptive kernel-regression power models to a
//! test/control/neutral turbine triple. Period-1 (pre-upgrade) analysis picks
//! the covariates and the control pair; Period-2 analysis turns the
//! period-over-period change of each model's binned residuals into
//! Effect/Offset/Gain curves, annualizes the gain against a long-term power
//! frequency, and bootstraps a confidence interval.
//!
//! Modules follow the pipeline:
//! [`dataset`] → [`kernel`] → [`evaluation`] → [`period1`] → [`period2`],
//! with [`synthgen`] supplying seeded synthetic farms whose true gain is
//! known analytically.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod kernel;
pub mod period1;
pub mod period2;
pub mod synthgen;

pub use dataset::{
    align, candidate_covariates, ingest_series, AlignedDataset, AlignedRecord, ColumnMapping,
    Covariate, Covariates, Period, TurbineRoles, TurbineSeries,
};
pub use error::{AnalysisError, DataError, EvalError, KernelError, SynthError};
pub use evaluation::{
    bias_curve, bias_pct, curve_diff, cv_evaluate, make_folds, rmse, BiasCurve, BinSpec, CvMetrics,
    FoldPlan, PredictionSet, Target,
};
pub use kernel::{
    adaptive_bandwidth, default_k_grid, fit, gcv, smoother_matrix, weights_at, DesignMatrix,
    GcvOutcome, KGridBounds, KernelModel, WeightVector,
};
pub use period1::{
    assess_pair, rank_pairs, select_variables, PairAssessment, SelectionStep, SelectionTrace,
};
pub use period2::{
    analyze_gain, annualized_gain, bootstrap_gain, effect_offset_gain, empirical_power_frequency,
    period_curves, AnnualizedGain, BootstrapConfig, BootstrapResult, GainCurves, GainReport,
    PowerFrequency,
};
pub use synthgen::{generate, analytic_gain_fraction, FarmScenario, SynthOutput, TruthRecord};
