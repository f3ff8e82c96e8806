//! Energy-minimizing shape estimation.
//!
//! Each outer step updates the yaw block first and the center block second,
//! recomputing gradients before every inner update. Inclinations are inputs
//! and never change. Without an explicit initialization the estimator runs
//! several seeded random starts and keeps the lowest-energy result that is
//! not degenerate.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::energy::{evaluate_unchecked, Evaluation};
use crate::error::{Error, Result};
use crate::kinematics::{check_inclinations, nodes_unchecked, wrap_angle, ShapeState, Vec3};
use crate::model::{build_connectivity, ConnectivityMatrices, StructureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Optimizer {
    Gd,
    Sgdm,
    Adam,
}

impl Optimizer {
    pub const ALL: [Optimizer; 3] = [Optimizer::Gd, Optimizer::Sgdm, Optimizer::Adam];

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Gd => "gd",
            Optimizer::Sgdm => "sgdm",
            Optimizer::Adam => "adam",
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Optimizer::Gd),
            "sgdm" => Ok(Optimizer::Sgdm),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Outer step budget.
    pub steps: usize,
    /// Yaw learning rate.
    pub lr_theta: f64,
    /// Center learning rate.
    pub lr_p: f64,
    /// Yaw updates per outer step.
    pub inner_theta: usize,
    /// Center updates per outer step.
    pub inner_p: usize,
    pub optimizer: Optimizer,
    /// SGDM momentum coefficient.
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Convergence threshold on the Euclidean norm of the center gradient, N.
    pub grad_tol_p: f64,
    /// Convergence threshold on the yaw gradient norm, N m.
    pub grad_tol_theta: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr_theta: 1e-4,
            lr_p: 5e-4,
            inner_theta: 1,
            inner_p: 1,
            optimizer: Optimizer::Gd,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_tol_p: 1e-3,
            grad_tol_theta: 1e-3,
            restarts: 5,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr_theta > 0.0 && self.lr_p > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam epsilon must be positive");
        }
        if !(self.grad_tol_p >= 0.0 && self.grad_tol_theta >= 0.0) {
            return bad("gradient tolerances must be non-negative");
        }
        Ok(())
    }

    /// Settings that drive a solve to tight stationarity: a step size per
    /// optimizer near the largest that stays stable on the prism, gradient
    /// tolerance `1e-6` and a generous step budget.
    pub fn tuned(optimizer: Optimizer) -> Self {
        let lr = match optimizer {
            Optimizer::Gd => 3e-3,
            Optimizer::Sgdm => 3e-4,
            Optimizer::Adam => 1e-2,
        };
        Self {
            steps: 20_000,
            lr_theta: lr,
            lr_p: lr,
            optimizer,
            grad_tol_p: 1e-6,
            grad_tol_theta: 1e-6,
            ..Self::default()
        }
    }

    pub fn with_optimizer(mut self, optimizer: Optimizer) -> Self {
        self.optimizer = optimizer;
        self
    }
}

/// Per-block optimizer state: momentum buffer or Adam moments.
#[derive(Debug, Clone, Default, PartialEq)]
struct BlockMemory {
    first: Vec<f64>,
    second: Vec<f64>,
    t: i32,
}

impl BlockMemory {
    fn update(&mut self, x: &mut [f64], g: &[f64], lr: f64, cfg: &EstimatorConfig) {
        if self.first.len() != g.len() {
            self.first = vec![0.0; g.len()];
            self.second = vec![0.0; g.len()];
            self.t = 0;
        }
        match cfg.optimizer {
            Optimizer::Gd => {
                for (xi, gi) in x.iter_mut().zip(g) {
                    *xi -= lr * gi;
                }
            }
            Optimizer::Sgdm => {
                for ((xi, gi), vi) in x.iter_mut().zip(g).zip(&mut self.first) {
                    *vi = cfg.momentum * *vi + gi;
                    *xi -= lr * *vi;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for i in 0..x.len() {
                    self.first[i] = b1 * self.first[i] + (1.0 - b1) * g[i];
                    self.second[i] = b2 * self.second[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    x[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
                }
            }
        }
    }
}

/// Optimizer state carried between steps. Fresh memory is all zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerMemory {
    theta: BlockMemory,
    p: BlockMemory,
}

impl OptimizerMemory {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DegeneracyReason {
    /// Two strut centers closer than 10% of the longest strut.
    Collapse,
    /// Zero-rest-length structure at (numerically) zero energy.
    ZeroEnergy,
    /// Energy or a coordinate stopped being finite; the step size is too
    /// large for this structure.
    Diverged,
}

impl fmt::Display for DegeneracyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DegeneracyReason::Collapse => f.write_str("collapse"),
            DegeneracyReason::ZeroEnergy => f.write_str("zero-energy"),
            DegeneracyReason::Diverged => f.write_str("diverged"),
        }
    }
}

/// Fraction of the longest strut below which two centers count as collapsed.
pub const COLLAPSE_FRACTION: f64 = 0.1;
/// Energy below which a zero-rest-length structure counts as collapsed, J.
pub const ZERO_ENERGY: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEstimate {
    pub state: ShapeState,
    pub nodes: Vec<Vec3>,
    /// Energy before the first step and after every step, J.
    pub energy_trace: Vec<f64>,
    pub grad_norm_p: f64,
    pub grad_norm_theta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cable index when a step hit a zero-length cable with positive rest length.
    pub singular: Option<usize>,
    pub degeneracy: Vec<DegeneracyReason>,
    /// Which random start produced this result, if any.
    pub restart: Option<usize>,
    /// Seconds.
    pub wall_time: f64,
    /// Seconds from start until both gradient norms dropped below tolerance.
    pub time_to_convergence: Option<f64>,
}

impl ShapeEstimate {
    pub fn energy(&self) -> f64 {
        *self
            .energy_trace
            .last()
            .expect("trace holds the initial energy")
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degeneracy.is_empty()
    }

    /// Equality ignoring the timing fields.
    pub fn same_solution(&self, other: &ShapeEstimate) -> bool {
        let strip = |e: &ShapeEstimate| ShapeEstimate {
            wall_time: 0.0,
            time_to_convergence: e.time_to_convergence.map(|_| 0.0),
            ..e.clone()
        };
        strip(self) == strip(other)
    }
}

/// Degeneracy reasons for a state at the given energy; empty when healthy.
pub fn detect_degenerate_state(
    state: &ShapeState,
    energy: f64,
    spec: &StructureSpec,
) -> Vec<DegeneracyReason> {
    let mut reasons = Vec::new();
    let finite = energy.is_finite()
        && state
            .centers
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
        && state.thetas.iter().all(|t| t.is_finite());
    if !finite {
        return vec![DegeneracyReason::Diverged];
    }
    let threshold = COLLAPSE_FRACTION * spec.max_strut_length();
    let c = &state.centers;
    let collapsed = (0..c.len()).any(|i| (0..i).any(|j| (c[i] - c[j]).norm() < threshold));
    if collapsed {
        reasons.push(DegeneracyReason::Collapse);
    }
    if spec.all_zero_rest_length() && energy < ZERO_ENERGY {
        reasons.push(DegeneracyReason::ZeroEnergy);
    }
    reasons
}

pub fn detect_degenerate(estimate: &ShapeEstimate, spec: &StructureSpec) -> Vec<DegeneracyReason> {
    detect_degenerate_state(&estimate.state, estimate.energy(), spec)
}

/// Estimator bound to one structure.
#[derive(Debug, Clone)]
pub struct Estimator {
    spec: StructureSpec,
    conn: ConnectivityMatrices,
    config: EstimatorConfig,
}

impl Estimator {
    pub fn new(spec: StructureSpec, config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        let conn = build_connectivity(&spec)?;
        Ok(Self { spec, conn, config })
    }

    pub fn spec(&self) -> &StructureSpec {
        &self.spec
    }

    pub fn connectivity(&self) -> &ConnectivityMatrices {
        &self.conn
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn with_config(&self, config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            ..self.clone()
        })
    }

    pub fn evaluate(&self, state: &ShapeState) -> Result<Evaluation> {
        state.check(&self.spec)?;
        evaluate_unchecked(state, &self.spec, &self.conn)
    }

    /// One outer step. On error `state` and `memory` are left untouched.
    pub fn step(&self, state: &mut ShapeState, memory: &mut OptimizerMemory) -> Result<()> {
        state.check(&self.spec)?;
        self.step_from(state, memory, None)
    }

    fn step_from(
        &self,
        state: &mut ShapeState,
        memory: &mut OptimizerMemory,
        current: Option<Evaluation>,
    ) -> Result<()> {
        let cfg = &self.config;
        let mut next = state.clone();
        let mut mem = memory.clone();
        let mut current = current;
        for _ in 0..cfg.inner_theta {
            let ev = match current.take() {
                Some(ev) => ev,
                None => evaluate_unchecked(&next, &self.spec, &self.conn)?,
            };
            mem.theta
                .update(&mut next.thetas, &ev.grad_theta, cfg.lr_theta, cfg);
            next.normalize_angles();
        }
        for _ in 0..cfg.inner_p {
            let ev = match current.take() {
                Some(ev) => ev,
                None => evaluate_unchecked(&next, &self.spec, &self.conn)?,
            };
            let grad: Vec<f64> = ev.grad_p.iter().flat_map(|g| [g.x, g.y, g.z]).collect();
            let mut p = next.center_vector();
            mem.p.update(&mut p, &grad, cfg.lr_p, cfg);
            for (c, chunk) in next.centers.iter_mut().zip(p.chunks_exact(3)) {
                *c = Vec3::new(chunk[0], chunk[1], chunk[2]);
            }
        }
        *state = next;
        *memory = mem;
        Ok(())
    }

    fn below_tolerance(&self, ev: &Evaluation) -> bool {
        ev.grad_p_norm() < self.config.grad_tol_p
            && ev.grad_theta_norm() < self.config.grad_tol_theta
    }

    /// Runs at most `max_steps` steps from `init` with fresh optimizer memory.
    pub fn solve_from(&self, init: ShapeState, max_steps: usize) -> Result<ShapeEstimate> {
        init.check(&self.spec)?;
        let start = Instant::now();
        let mut state = init;
        state.normalize_angles();
        let mut memory = OptimizerMemory::new();
        let mut ev = evaluate_unchecked(&state, &self.spec, &self.conn);
        let mut trace = Vec::new();
        let mut singular = None;
        let mut iterations = 0;
        let mut converged = false;
        let mut time_to_convergence = None;
        let mut last = None;
        loop {
            let current = match ev {
                Ok(current) => current,
                Err(Error::SingularConfiguration { cable }) => {
                    singular = Some(cable);
                    break;
                }
                Err(e) => return Err(e),
            };
            trace.push(current.energy);
            if !current.energy.is_finite() {
                last = Some(current);
                break;
            }
            if self.below_tolerance(&current) {
                converged = true;
                time_to_convergence = Some(start.elapsed().as_secs_f64());
                last = Some(current);
                break;
            }
            if iterations >= max_steps {
                last = Some(current);
                break;
            }
            match self.step_from(&mut state, &mut memory, Some(current.clone())) {
                Ok(()) => {}
                Err(Error::SingularConfiguration { cable }) => {
                    singular = Some(cable);
                    last = Some(current);
                    break;
                }
                Err(e) => return Err(e),
            }
            iterations += 1;
            ev = evaluate_unchecked(&state, &self.spec, &self.conn);
        }
        if trace.is_empty() {
            // the initial state itself is singular; report its energy
            let report = crate::energy::total_energy(&state, &self.spec, &self.conn)?;
            trace.push(report.total);
        }
        let (grad_norm_p, grad_norm_theta) = last
            .as_ref()
            .map(|e| (e.grad_p_norm(), e.grad_theta_norm()))
            .unwrap_or((f64::NAN, f64::NAN));
        let nodes = nodes_unchecked(&state, &self.spec.strut_lengths);
        let degeneracy = detect_degenerate_state(&state, *trace.last().unwrap(), &self.spec);
        Ok(ShapeEstimate {
            state,
            nodes,
            energy_trace: trace,
            grad_norm_p,
            grad_norm_theta,
            iterations,
            converged,
            singular,
            degeneracy,
            restart: None,
            wall_time: start.elapsed().as_secs_f64(),
            time_to_convergence,
        })
    }

    /// Random initial state for restart `index`: centers uniform in a box of
    /// half-width `2 max L` around the origin, yaw uniform in `(-pi, pi]`.
    pub fn random_init(&self, phis: &[f64], index: usize) -> ShapeState {
        random_init(&self.spec, phis, self.config.seed, index)
    }

    /// Solves for centers and yaw angles given measured inclinations.
    ///
    /// With `init`, a single run starts there and its result is returned even
    /// when degenerate. Without it, `restarts` random starts run in parallel
    /// and the lowest-energy healthy result wins, ties going to the lower
    /// restart index.
    pub fn estimate(&self, phis: &[f64], init: Option<&ShapeState>) -> Result<ShapeEstimate> {
        let mb = self.spec.strut_count();
        if phis.len() != mb {
            return Err(Error::Dimension {
                context: "inclination angles",
                expected: mb,
                actual: phis.len(),
            });
        }
        check_inclinations(phis)?;
        if let Some(init) = init {
            let mut start = init.clone();
            start.phis = phis.to_vec();
            return self.solve_from(start, self.config.steps);
        }
        let start = Instant::now();
        let runs: Vec<Result<ShapeEstimate>> = (0..self.config.restarts)
            .into_par_iter()
            .map(|i| {
                let mut est = self.solve_from(self.random_init(phis, i), self.config.steps)?;
                est.restart = Some(i);
                Ok(est)
            })
            .collect();
        let mut best: Option<ShapeEstimate> = None;
        let mut reasons = Vec::new();
        for run in runs {
            let est = run?;
            if est.is_degenerate() || est.singular.is_some() {
                reasons.extend(est.degeneracy.iter().map(|r| r.to_string()));
                if let Some(c) = est.singular {
                    reasons.push(format!("singular cable {c}"));
                }
                continue;
            }
            if best.as_ref().is_none_or(|b| est.energy() < b.energy()) {
                best = Some(est);
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        match best {
            Some(mut est) => {
                est.wall_time = elapsed;
                Ok(est)
            }
            None => {
                reasons.sort();
                reasons.dedup();
                Err(Error::AllDegenerate {
                    restarts: self.config.restarts,
                    reason: reasons.join(", "),
                })
            }
        }
    }
}

pub fn random_init(spec: &StructureSpec, phis: &[f64], seed: u64, index: usize) -> ShapeState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let half = 2.0 * spec.max_strut_length();
    let mb = spec.strut_count();
    let centers = (0..mb)
        .map(|_| {
            Vec3::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                rng.random_range(-half..half),
            )
        })
        .collect();
    let thetas = (0..mb)
        .map(|_| wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
        .collect();
    ShapeState::new(centers, thetas, phis.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_prism, taut_prism, CableSpec};
    use approx::assert_relative_eq;

    fn near_prism(phi: f64) -> ShapeState {
        let thetas = vec![3.11, 1.57, 0.02, -1.54];
        let centers = thetas
            .iter()
            .map(|&t: &f64| 0.04 * Vec3::new(-t.sin(), t.cos(), 0.0))
            .collect();
        ShapeState::new(centers, thetas, vec![phi; 4])
    }

    #[test]
    fn default_config_matches_reference_parameters() {
        let c = EstimatorConfig::default();
        assert_eq!(c.steps, 300);
        assert_eq!(c.lr_theta, 0.0001);
        assert_eq!(c.lr_p, 0.0005);
        assert_eq!((c.inner_theta, c.inner_p), (1, 1));
        assert_eq!(c.restarts, 5);
        assert_eq!(c.optimizer, Optimizer::Gd);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = EstimatorConfig::default();
        for cfg in [
            EstimatorConfig {
                lr_p: 0.0,
                ..base.clone()
            },
            EstimatorConfig {
                steps: 0,
                ..base.clone()
            },
            EstimatorConfig {
                restarts: 0,
                ..base.clone()
            },
            EstimatorConfig {
                adam_beta2: 1.0,
                ..base.clone()
            },
        ] {
            assert!(Estimator::new(builtin_prism(), cfg).is_err());
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_for_every_optimizer() {
        // single strut without cables: all gradients vanish identically
        let spec = StructureSpec {
            name: String::new(),
            strut_lengths: vec![0.3],
            cables: vec![],
        };
        for opt in Optimizer::ALL {
            let est = Estimator::new(spec.clone(), EstimatorConfig::default().with_optimizer(opt))
                .unwrap();
            let mut state = ShapeState::new(vec![Vec3::new(0.1, 0.2, 0.3)], vec![0.5], vec![1.0]);
            let before = state.clone();
            let mut mem = OptimizerMemory::new();
            est.step(&mut state, &mut mem).unwrap();
            assert_eq!(state, before, "{opt}");
        }
    }

    #[test]
    fn one_gd_step_is_plain_gradient_descent() {
        let spec = taut_prism();
        let cfg = EstimatorConfig::default();
        let est = Estimator::new(spec.clone(), cfg.clone()).unwrap();
        let state = near_prism(0.95);

        // expected update assembled by hand from the energy-module gradients
        let conn = build_connectivity(&spec).unwrap();
        let g_theta = crate::energy::grad_theta(&state, &spec, &conn).unwrap();
        let mut mid = state.clone();
        for (t, g) in mid.thetas.iter_mut().zip(&g_theta) {
            *t -= cfg.lr_theta * g;
        }
        let g_p = crate::energy::grad_p(&mid, &spec, &conn).unwrap();
        let expected: Vec<Vec3> = mid
            .centers
            .iter()
            .zip(&g_p)
            .map(|(c, g)| c - cfg.lr_p * g)
            .collect();

        let mut s = state.clone();
        est.step(&mut s, &mut OptimizerMemory::new()).unwrap();
        for i in 0..4 {
            assert_relative_eq!(s.thetas[i], wrap_angle(mid.thetas[i]), epsilon = 1e-15);
            assert_relative_eq!(s.centers[i], expected[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn small_steps_descend() {
        let est = Estimator::new(taut_prism(), EstimatorConfig::default()).unwrap();
        let mut s = near_prism(0.95);
        let e0 = est.evaluate(&s).unwrap().energy;
        est.step(&mut s, &mut OptimizerMemory::new()).unwrap();
        assert!(est.evaluate(&s).unwrap().energy <= e0);
    }

    #[test]
    fn trace_length_and_nodes() {
        let cfg = EstimatorConfig {
            steps: 17,
            ..Default::default()
        };
        let est = Estimator::new(taut_prism(), cfg).unwrap();
        let r = est.estimate(&[0.95; 4], Some(&near_prism(0.5))).unwrap();
        assert_eq!(r.iterations, 17);
        assert_eq!(r.energy_trace.len(), r.iterations + 1);
        assert_eq!(
            r.nodes,
            crate::kinematics::node_positions(&r.state, est.spec()).unwrap()
        );
        assert_eq!(r.state.phis, vec![0.95; 4]);
    }

    #[test]
    fn collapsed_init_is_stationary_and_flagged() {
        let est = Estimator::new(builtin_prism(), EstimatorConfig::default()).unwrap();
        let collapsed = ShapeState::new(
            vec![Vec3::new(0.1, -0.2, 0.3); 4],
            vec![0.7; 4],
            vec![0.95; 4],
        );
        let ev = est.evaluate(&collapsed).unwrap();
        assert!(ev.grad_p_norm() < 1e-12 && ev.grad_theta_norm() < 1e-12);
        let r = est.estimate(&[0.95; 4], Some(&collapsed)).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.state.centers, collapsed.centers);
        assert_eq!(r.degeneracy, vec![DegeneracyReason::Collapse]);
    }

    #[test]
    fn single_strut_never_collapses() {
        let spec = StructureSpec {
            name: String::new(),
            strut_lengths: vec![0.3],
            cables: vec![],
        };
        let state = ShapeState::new(vec![Vec3::zeros()], vec![0.0], vec![0.2]);
        assert!(detect_degenerate_state(&state, 1.0, &spec).is_empty());
    }

    #[test]
    fn zero_energy_is_flagged_only_without_rest_lengths() {
        let spec = builtin_prism();
        let state = near_prism(0.9);
        assert_eq!(
            detect_degenerate_state(&state, 0.0, &spec),
            vec![DegeneracyReason::ZeroEnergy]
        );
        assert!(detect_degenerate_state(&state, 0.0, &taut_prism()).is_empty());
    }

    #[test]
    fn singular_step_leaves_state_unchanged() {
        // two parallel struts; the cable joins coincident top nodes
        let spec = StructureSpec {
            name: String::new(),
            strut_lengths: vec![0.2, 0.2],
            cables: vec![
                CableSpec::new(0, 1, 10.0, 0.1),
                CableSpec::new(2, 3, 10.0, 0.0),
            ],
        };
        let est = Estimator::new(spec, EstimatorConfig::default()).unwrap();
        let mut state = ShapeState::new(vec![Vec3::zeros(); 2], vec![0.0; 2], vec![0.3; 2]);
        let before = state.clone();
        let mut mem = OptimizerMemory::new();
        assert!(matches!(
            est.step(&mut state, &mut mem),
            Err(Error::SingularConfiguration { cable: 0 })
        ));
        assert_eq!(state, before);
        let r = est.estimate(&[0.3, 0.3], Some(&before)).unwrap();
        assert_eq!(r.singular, Some(0));
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn restarts_are_deterministic() {
        let cfg = EstimatorConfig {
            steps: 200,
            optimizer: Optimizer::Adam,
            lr_theta: 0.02,
            lr_p: 0.005,
            ..Default::default()
        };
        let est = Estimator::new(taut_prism(), cfg).unwrap();
        let phis = [0.95, 0.96, 0.95, 0.96];
        let a = est.estimate(&phis, None);
        let b = est.estimate(&phis, None);
        match (a, b) {
            (Ok(a), Ok(b)) => assert!(a.same_solution(&b)),
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            _ => panic!("runs disagree"),
        }
    }

    #[test]
    fn estimate_rejects_bad_inputs() {
        let est = Estimator::new(taut_prism(), EstimatorConfig::default()).unwrap();
        assert!(matches!(
            est.estimate(&[0.9; 3], None),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            est.estimate(&[0.9, 0.9, 4.0, 0.9], None),
            Err(Error::InclinationOutOfRange { strut: 2, .. })
        ));
    }

    #[test]
    fn optimizer_names_round_trip() {
        for opt in Optimizer::ALL {
            assert_eq!(opt.name().parse::<Optimizer>().unwrap(), opt);
        }
        assert!("lbfgs".parse::<Optimizer>().is_err());
    }

    #[test]
    fn oversized_step_is_reported_as_divergence() {
        let cfg = EstimatorConfig {
            lr_p: 0.05,
            lr_theta: 0.05,
            steps: 2000,
            restarts: 2,
            ..EstimatorConfig::default()
        };
        let est = Estimator::new(builtin_prism(), cfg).unwrap();
        let run = est.solve_from(near_prism(0.95), 2000).unwrap();
        assert_eq!(run.degeneracy, vec![DegeneracyReason::Diverged]);
        assert!(!run.converged);
        match est.estimate(&[0.95; 4], None) {
            Err(Error::AllDegenerate { reason, .. }) => assert!(reason.contains("diverged")),
            other => panic!("{other:?}"),
        }
    }
}
