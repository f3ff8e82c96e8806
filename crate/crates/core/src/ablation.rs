//! Side-by-side comparison of the three optimizers on noisy readings of one
//! equilibrium shape.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::estimator::{Estimator, EstimatorConfig, Optimizer, OptimizerMemory};
use crate::kinematics::{node_positions, ShapeState};
use crate::metrics::{mean_std, node_mae};
use crate::model::StructureSpec;
use crate::simulate::{equilibrium_oracle, synth_inclinations, NoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub trials: usize,
    /// White noise on every reading, radians.
    pub sigma_phi: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Steps timed for the per-step figure.
    pub timing_steps: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            sigma_phi: 0.01,
            restarts: 16,
            seed: 0,
            timing_steps: 2000,
        }
    }
}

/// One optimizer's figures over all trials. Lengths in millimetres, times in
/// milliseconds, energies in joules.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerReport {
    pub optimizer: String,
    pub trials: usize,
    pub failures: usize,
    pub node_mae_mm_mean: f64,
    pub node_mae_mm_std: f64,
    pub energy_mean: f64,
    pub energy_std: f64,
    pub step_time_ms: f64,
    pub time_to_convergence_ms_mean: f64,
    pub iterations_mean: f64,
    #[serde(skip)]
    pub node_mae_mm: Vec<f64>,
}

/// Mean time of one outer step from `state`, in milliseconds.
pub fn time_per_step(estimator: &Estimator, state: &ShapeState, steps: usize) -> Result<f64> {
    let mut s = state.clone();
    let mut memory = OptimizerMemory::new();
    let start = Instant::now();
    for _ in 0..steps.max(1) {
        estimator.step(&mut s, &mut memory)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / steps.max(1) as f64)
}

/// Every optimizer sees the same noisy readings and the same restart seeds
/// in a given trial.
pub fn run_ablation(
    spec: &StructureSpec,
    optimizers: &[Optimizer],
    config: &AblationConfig,
) -> Result<Vec<OptimizerReport>> {
    let truth = equilibrium_oracle(spec, None, None)?;
    let truth_nodes = node_positions(&truth, spec)?;
    let readings = (0..config.trials)
        .map(|t| {
            let noise = NoiseModel::new(
                config.sigma_phi,
                Vec::new(),
                config.seed.wrapping_add(t as u64),
            );
            synth_inclinations(&truth, &noise, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(optimizers.len());
    for &opt in optimizers {
        let mut maes = Vec::new();
        let mut energies = Vec::new();
        let mut ttcs = Vec::new();
        let mut iterations = Vec::new();
        let mut failures = 0;
        for (t, frame) in readings.iter().enumerate() {
            let cfg = EstimatorConfig {
                restarts: config.restarts,
                seed: config.seed.wrapping_add(t as u64),
                ..EstimatorConfig::tuned(opt)
            };
            let estimator = Estimator::new(spec.clone(), cfg)?;
            match estimator.estimate(&frame.phis, None) {
                Ok(est) => {
                    maes.push(node_mae(&est.nodes, &truth_nodes, true)? * 1e3);
                    energies.push(est.energy());
                    ttcs.push(est.time_to_convergence.unwrap_or(est.wall_time) * 1e3);
                    iterations.push(est.iterations as f64);
                }
                Err(crate::Error::AllDegenerate { .. }) => failures += 1,
                Err(e) => return Err(e),
            }
        }
        let estimator = Estimator::new(spec.clone(), EstimatorConfig::tuned(opt))?;
        let step_time_ms = time_per_step(&estimator, &truth, config.timing_steps)?;
        let (mae_mean, mae_std) = mean_std(&maes);
        let (energy_mean, energy_std) = mean_std(&energies);
        reports.push(OptimizerReport {
            optimizer: opt.name().to_string(),
            trials: config.trials,
            failures,
            node_mae_mm_mean: mae_mean,
            node_mae_mm_std: mae_std,
            energy_mean,
            energy_std,
            step_time_ms,
            time_to_convergence_ms_mean: mean_std(&ttcs).0,
            iterations_mean: mean_std(&iterations).0,
            node_mae_mm: maes,
        });
    }
    Ok(reports)
}

/// Whether two optimizers' mean errors differ by at most twice the larger
/// of their trial standard deviations.
pub fn agree(a: &OptimizerReport, b: &OptimizerReport) -> bool {
    (a.node_mae_mm_mean - b.node_mae_mm_mean).abs()
        <= 2.0 * a.node_mae_mm_std.max(b.node_mae_mm_std)
}

/// Plain-text table, one row per optimizer.
pub fn render_table(reports: &[OptimizerReport]) -> String {
    let mut out = String::from(
        "optimizer  node MAE [mm]      energy [J]          step [ms]  to converge [ms]  failures\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{:<9}  {:>7.3} ± {:<7.3}  {:>8.5} ± {:<8.5}  {:>9.5}  {:>16.3}  {}/{}\n",
            r.optimizer,
            r.node_mae_mm_mean,
            r.node_mae_mm_std,
            r.energy_mean,
            r.energy_std,
            r.step_time_ms,
            r.time_to_convergence_ms_mean,
            r.failures,
            r.trials
        ));
    }
    out
}
