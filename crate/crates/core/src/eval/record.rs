//! Attack result types shared by every attack family and the experiment
//! runner.

use crate::imaging::{NormReport, RgbImage};
use serde::{Deserialize, Serialize};

/// Per-iteration accounting of a single attack run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttackTrace {
    /// Target-class confidence at each evaluated iteration.
    pub confidence: Vec<f64>,
    /// Optimizer iterations executed (Adam steps, or L-BFGS rounds).
    pub iterations: usize,
    /// Total L-BFGS steps (texture attacks only).
    pub lbfgs_steps: usize,
    /// Whether an L-BFGS line search failed and cut a round short.
    pub line_search_failure: bool,
    /// Free-form events (early stops, aborts).
    pub notes: Vec<String>,
}

/// Outcome of one attack on one image.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub original: RgbImage,
    pub adversarial: RgbImage,
    pub ground_truth: usize,
    pub target: usize,
    /// True iff the victim classifies the adversarial image as the target
    /// at record time.
    pub success: bool,
    /// Final softmax probability of the target class.
    pub final_confidence: f64,
    pub norms: NormReport,
    pub trace: AttackTrace,
    pub wall_clock_secs: f64,
}
