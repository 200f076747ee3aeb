//! Motifs across adjacent layers: features that pass through, appear or
//! disappear; quasi logic gates; the error projection of disappearing
//! features; summaries of ablation effects.

mod ablation;
mod calibrate;
mod classify;
mod curve;
mod gates;
mod projection;

pub use ablation::{
    ablation_bins, load_ablation_records, quantile, read_ablation_records, write_ablation_records, AblationRecord,
    AblationSummary, BinSummary,
};
pub use calibrate::{
    calibrate_threshold, Calibration, CalibrationConfig, Judge, ProbePair, ProbeRecord, ScriptedJudge, TerminalJudge,
};
pub use classify::{
    classify_features, BackwardClass, ClassificationReport, FeatureClassification, ForwardClass, LayerCounts, Neighbor,
};
pub use curve::{neighbor_threshold_curve, CurvePoint};
pub use gates::{find_gates, GateCandidate, GateKind, GateOptions, DEFAULT_GATE_MIN_SIM};
pub use projection::{
    disappearance_projection, select_disappearing, slope_through_origin, DisappearanceSample, FeatureSlope,
    ProjectionOptions, ProjectionReport,
};

/// Threshold for "very similar" next-layer features.
pub const DEFAULT_CLASSIFY_THRESHOLD: f64 = 0.95;
