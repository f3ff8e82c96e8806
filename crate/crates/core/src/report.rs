//! Run summaries written as TOML.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::ShapeEstimate;
use crate::io::TruthRecord;
use crate::kinematics::{node_positions, ShapeState};
use crate::metrics::{angle_errors, mean_std, node_mae, AngleKind};
use crate::model::StructureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleSummary {
    pub strut: usize,
    /// `"theta"` or `"phi"`.
    pub angle: String,
    pub actual: f64,
    pub estimated: f64,
    /// Absent when the actual angle is too close to zero.
    pub percent_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSummary {
    pub matched_frames: usize,
    /// Mean over frames of the gauge-aligned node MAE.
    pub node_mae_mm: f64,
    pub node_mae_raw_mm: f64,
    pub node_mae_max_mm: f64,
    pub center_mae_mm: f64,
    /// Angle comparison for the last matched frame.
    pub angles: Vec<AngleSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames_accepted: usize,
    pub frames_estimated: usize,
    pub rejected_malformed: usize,
    pub rejected_out_of_order: usize,
    pub frames_overwritten: usize,
    pub cold_starts: usize,
    pub degenerate_frames: usize,
    pub energy_mean: f64,
    pub iterations_mean: f64,
    pub wall_time_s: f64,
    pub truth: Option<TruthSummary>,
}

impl RunSummary {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::SpecFile(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::SpecFile(e.to_string()))
    }
}

/// Per-frame comparison against ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub timestamp: f64,
    pub node_mae: f64,
    pub node_mae_raw: f64,
    pub center_mae: f64,
}

/// Collects per-frame results into a [`RunSummary`].
#[derive(Debug, Clone)]
pub struct SummaryBuilder {
    spec: StructureSpec,
    truth: HashMap<u64, ShapeState>,
    energies: Vec<f64>,
    iterations: Vec<f64>,
    wall_time: f64,
    scores: Vec<FrameScore>,
    last_angles: Vec<AngleSummary>,
}

impl SummaryBuilder {
    pub fn new(spec: StructureSpec, truth: Option<Vec<TruthRecord>>) -> Self {
        let truth = truth
            .unwrap_or_default()
            .into_iter()
            .map(|r| (r.timestamp.to_bits(), r.state))
            .collect();
        Self {
            spec,
            truth,
            energies: Vec::new(),
            iterations: Vec::new(),
            wall_time: 0.0,
            scores: Vec::new(),
            last_angles: Vec::new(),
        }
    }

    pub fn has_truth(&self) -> bool {
        !self.truth.is_empty()
    }

    /// Records one estimate; returns its score when ground truth exists for
    /// exactly this timestamp.
    pub fn add(&mut self, timestamp: f64, est: &ShapeEstimate) -> Result<Option<FrameScore>> {
        self.energies.push(est.energy());
        self.iterations.push(est.iterations as f64);
        self.wall_time += est.wall_time;
        let Some(truth) = self.truth.get(&timestamp.to_bits()) else {
            return Ok(None);
        };
        let truth_nodes = node_positions(truth, &self.spec)?;
        let score = FrameScore {
            timestamp,
            node_mae: node_mae(&est.nodes, &truth_nodes, true)?,
            node_mae_raw: node_mae(&est.nodes, &truth_nodes, false)?,
            center_mae: node_mae(&est.state.centers, &truth.centers, true)?,
        };
        self.last_angles = angle_errors(&est.state, truth, &self.spec)?
            .into_iter()
            .map(|r| AngleSummary {
                strut: r.strut,
                angle: match r.kind {
                    AngleKind::Yaw => "theta".into(),
                    AngleKind::Inclination => "phi".into(),
                },
                actual: r.actual,
                estimated: r.estimated,
                percent_error: r.percent_error,
            })
            .collect();
        self.scores.push(score);
        Ok(Some(score))
    }

    pub fn scores(&self) -> &[FrameScore] {
        &self.scores
    }

    /// Counters not known to the builder are filled in by the caller.
    pub fn finish(&self) -> RunSummary {
        let truth = (!self.scores.is_empty()).then(|| {
            let mm = |f: fn(&FrameScore) -> f64| {
                mean_std(&self.scores.iter().map(|s| f(s) * 1e3).collect::<Vec<_>>()).0
            };
            TruthSummary {
                matched_frames: self.scores.len(),
                node_mae_mm: mm(|s| s.node_mae),
                node_mae_raw_mm: mm(|s| s.node_mae_raw),
                node_mae_max_mm: self
                    .scores
                    .iter()
                    .map(|s| s.node_mae * 1e3)
                    .fold(0.0, f64::max),
                center_mae_mm: mm(|s| s.center_mae),
                angles: self.last_angles.clone(),
            }
        });
        RunSummary {
            frames_estimated: self.energies.len(),
            energy_mean: mean_std(&self.energies).0,
            iterations_mean: mean_std(&self.iterations).0,
            wall_time_s: self.wall_time,
            truth,
            ..RunSummary::default()
        }
    }
}
