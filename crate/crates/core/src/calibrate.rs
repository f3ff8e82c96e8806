//! Cable stiffness identification by seeded random search.
//!
//! The shape minimizing the cable energy does not change when every stiffness
//! is multiplied by the same factor, whatever the rest lengths: the energy
//! just scales. Shape observations therefore pin down stiffness *ratios*
//! between groups of cables, never the overall level.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::kinematics::Vec3;
use crate::metrics::node_mae;
use crate::model::{ensure_valid, StructureSpec};

/// Measured inclinations together with the true node cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub phis: Vec<f64>,
    pub reference_nodes: Vec<Vec3>,
}

/// Cables sharing one stiffness value, and the range searched for it (N/m).
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessGroup {
    pub cables: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProblem {
    pub spec: StructureSpec,
    pub observations: Vec<Observation>,
    /// Must cover every cable exactly once.
    pub groups: Vec<StiffnessGroup>,
    /// Randomly sampled candidates.
    pub budget: usize,
    /// Extra pattern-search evaluations around the best sample.
    pub refine: usize,
    pub seed: u64,
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Per cable, N/m.
    pub stiffness: Vec<f64>,
    /// Per group, N/m.
    pub group_values: Vec<f64>,
    /// Mean gauge-aligned node distance, m.
    pub objective: f64,
    pub evaluations: usize,
}

/// One group holding every cable.
pub fn tied_uniform(spec: &StructureSpec, lower: f64, upper: f64) -> Vec<StiffnessGroup> {
    vec![StiffnessGroup {
        cables: (0..spec.cable_count()).collect(),
        lower,
        upper,
    }]
}

/// Two groups: cables joining nodes on the same end of their struts, and
/// cables joining opposite ends. Empty groups are dropped.
pub fn tied_by_layer(spec: &StructureSpec, lower: f64, upper: f64) -> Vec<StiffnessGroup> {
    let m = spec.strut_count();
    let (same, cross): (Vec<usize>, Vec<usize>) = (0..spec.cable_count())
        .partition(|&k| (spec.cables[k].node_a < m) == (spec.cables[k].node_b < m));
    [same, cross]
        .into_iter()
        .filter(|g| !g.is_empty())
        .map(|cables| StiffnessGroup {
            cables,
            lower,
            upper,
        })
        .collect()
}

/// One group per cable.
pub fn per_cable(spec: &StructureSpec, lower: f64, upper: f64) -> Vec<StiffnessGroup> {
    (0..spec.cable_count())
        .map(|k| StiffnessGroup {
            cables: vec![k],
            lower,
            upper,
        })
        .collect()
}

impl CalibrationProblem {
    pub fn validate(&self) -> Result<()> {
        ensure_valid(&self.spec)?;
        self.estimator.validate()?;
        let fail = |m: String| Err(Error::Calibration(m));
        if self.observations.is_empty() {
            return fail("at least one observation is required".into());
        }
        if self.budget == 0 {
            return fail("budget must be at least 1".into());
        }
        if self.groups.is_empty() {
            return fail("no stiffness groups".into());
        }
        let mut seen = vec![0usize; self.spec.cable_count()];
        for (g, group) in self.groups.iter().enumerate() {
            if !(group.lower > 0.0 && group.lower <= group.upper && group.upper.is_finite()) {
                return fail(format!(
                    "group {g}: bounds [{}, {}] must be positive and ordered",
                    group.lower, group.upper
                ));
            }
            for &k in &group.cables {
                match seen.get_mut(k) {
                    Some(n) => *n += 1,
                    None => return fail(format!("group {g}: cable {k} does not exist")),
                }
            }
        }
        if let Some(k) = seen.iter().position(|&n| n != 1) {
            return fail(format!("cable {k} must belong to exactly one group"));
        }
        for (i, obs) in self.observations.iter().enumerate() {
            if obs.phis.len() != self.spec.strut_count()
                || obs.reference_nodes.len() != self.spec.node_count()
            {
                return fail(format!("observation {i} does not match the structure"));
            }
        }
        Ok(())
    }

    /// Per-cable stiffness vector for the given per-group values.
    pub fn expand(&self, group_values: &[f64]) -> Vec<f64> {
        let mut k = vec![0.0; self.spec.cable_count()];
        for (group, &v) in self.groups.iter().zip(group_values) {
            for &c in &group.cables {
                k[c] = v;
            }
        }
        k
    }

    /// Whether a single group scales every cable at once on a structure
    /// without rest lengths. The objective is then constant in that value.
    pub fn scale_only(&self) -> bool {
        self.groups.len() == 1 && self.spec.all_zero_rest_length()
    }
}

/// Mean gauge-aligned node distance over all observations for the given
/// per-cable stiffness.
pub fn evaluate_objective(problem: &CalibrationProblem, stiffness: &[f64]) -> Result<f64> {
    let spec = problem.spec.clone().with_stiffnesses(stiffness)?;
    let estimator = Estimator::new(spec, problem.estimator.clone())?;
    let mut total = 0.0;
    for obs in &problem.observations {
        let est = estimator.estimate(&obs.phis, None)?;
        total += node_mae(&est.nodes, &obs.reference_nodes, true)?;
    }
    Ok(total / problem.observations.len() as f64)
}

fn sample(rng: &mut ChaCha8Rng, groups: &[StiffnessGroup]) -> Vec<f64> {
    // log-uniform, so each decade of the range is searched equally
    groups
        .iter()
        .map(|g| {
            if g.lower == g.upper {
                g.lower
            } else {
                rng.random_range(g.lower.ln()..g.upper.ln()).exp()
            }
        })
        .collect()
}

/// Scores candidates in parallel and keeps the lowest objective, ties going
/// to the earlier candidate. Failed estimates disqualify a candidate.
fn best_of(problem: &CalibrationProblem, candidates: &[Vec<f64>]) -> Option<(usize, f64)> {
    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|c| evaluate_objective(problem, &problem.expand(c)).ok())
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    best
}

/// Random search over the groups' ranges, optionally followed by a pattern
/// search that halves its log-step whenever no neighbour improves.
pub fn fit_stiffness(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    problem.validate()?;
    if problem.scale_only() {
        return Err(Error::ScaleUnidentifiable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let candidates: Vec<Vec<f64>> = (0..problem.budget)
        .map(|_| sample(&mut rng, &problem.groups))
        .collect();
    let (index, mut objective) = best_of(problem, &candidates).ok_or_else(|| {
        Error::Calibration(format!(
            "all {} candidates produced degenerate estimates",
            problem.budget
        ))
    })?;
    let mut values = candidates[index].clone();
    let mut evaluations = problem.budget;

    let mut step = 0.25f64;
    while evaluations < problem.budget + problem.refine && step > 1e-4 {
        let mut neighbours = Vec::new();
        for g in 0..values.len() {
            for dir in [1.0, -1.0] {
                let group = &problem.groups[g];
                let mut n = values.clone();
                n[g] = (values[g] * (dir * step).exp()).clamp(group.lower, group.upper);
                if n[g] != values[g] {
                    neighbours.push(n);
                }
            }
        }
        let room = problem.budget + problem.refine - evaluations;
        neighbours.truncate(room);
        if neighbours.is_empty() {
            step *= 0.5;
            continue;
        }
        evaluations += neighbours.len();
        match best_of(problem, &neighbours) {
            Some((i, s)) if s < objective => {
                values = neighbours[i].clone();
                objective = s;
            }
            _ => step *= 0.5,
        }
    }

    Ok(CalibrationResult {
        stiffness: problem.expand(&values),
        group_values: values,
        objective,
        evaluations,
    })
}
