use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{run_trial, FailureCause, Scenario, TrialResult};
use crate::LogError;

/// Per-trial line of a campaign summary. Errors that were never measured
/// are `None` rather than NaN so the record stays valid JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub success: bool,
    pub cause: Option<FailureCause>,
    pub steps: usize,
    pub final_err_px: Option<f64>,
    pub capture_step: Option<usize>,
    pub pos_err_m: Option<f64>,
    pub yaw_err_deg: Option<f64>,
}

impl From<&TrialResult> for TrialSummary {
    fn from(r: &TrialResult) -> Self {
        Self {
            seed: r.seed,
            success: r.success,
            cause: r.cause,
            steps: r.steps,
            final_err_px: r.final_err_px.is_finite().then_some(r.final_err_px),
            capture_step: r.capture_step,
            pos_err_m: r.pos_err_m,
            yaw_err_deg: r.yaw_err_deg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub scenario: String,
    pub n_trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    /// Mean final pixel error over trials that reported one.
    pub mean_final_err_px: Option<f64>,
    /// Failure counts by cause.
    pub causes: BTreeMap<String, usize>,
    pub trials: Vec<TrialSummary>,
}

impl CampaignSummary {
    pub fn from_results(scenario: &str, results: &[TrialResult]) -> Self {
        let trials: Vec<TrialSummary> = results.iter().map(TrialSummary::from).collect();
        let n = trials.len();
        let successes = trials.iter().filter(|t| t.success).count();
        let mut causes = BTreeMap::new();
        for c in trials.iter().filter_map(|t| t.cause) {
            *causes.entry(c.name().to_string()).or_insert(0) += 1;
        }
        let errs: Vec<f64> = trials.iter().filter_map(|t| t.final_err_px).collect();
        Self {
            scenario: scenario.to_string(),
            n_trials: n,
            successes,
            success_rate: if n > 0 { successes as f64 / n as f64 } else { 0.0 },
            mean_steps: if n > 0 {
                trials.iter().map(|t| t.steps as f64).sum::<f64>() / n as f64
            } else {
                0.0
            },
            mean_final_err_px: (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64),
            causes,
            trials,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LogError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Runs one trial per seed, in seed-list order.
pub fn run_campaign(sc: &Scenario, seeds: &[u64]) -> CampaignSummary {
    let results: Vec<TrialResult> = seeds.iter().map(|&s| run_trial(sc, s)).collect();
    CampaignSummary::from_results(&sc.name, &results)
}
