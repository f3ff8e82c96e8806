//! Synthetic ground truth: equilibrium shapes, IMU-level inclination noise and
//! deformation trajectories.
//!
//! The equilibrium oracle is deliberately separate from [`crate::energy`]. It
//! parameterizes each strut by its center and unit axis, evaluates the cable
//! energy with its own loop, and differentiates it by central differences, so
//! agreement with the analytic gradients is evidence rather than tautology.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::estimator::detect_degenerate_state;
use crate::io::{render_frame, render_truth, InclinationFrame, TruthRecord};
use crate::kinematics::{
    check_inclinations, inclination_of, node_positions, wrap_angle, ShapeState, Vec3,
};
use crate::metrics::{align_proper, centroid};
use crate::model::{ensure_valid, StructureSpec};

/// Fixed-step settings for [`equilibrium_oracle_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Step on the centers, m²/J. The step on the axes is this divided by the
    /// squared half-length of the longest strut.
    pub step: f64,
    pub max_iterations: usize,
    /// Stationarity norm below which the search stops.
    pub tolerance: f64,
    /// Central difference step.
    pub fd_step: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: 2e-3,
            max_iterations: 400_000,
            tolerance: 1e-6,
            fd_step: 1e-6,
        }
    }
}

struct OracleProblem<'a> {
    spec: &'a StructureSpec,
    m: usize,
}

impl OracleProblem<'_> {
    fn energy(&self, centers: &[Vec3], axes: &[Vec3]) -> f64 {
        let m = self.m;
        let node = |n: usize| {
            let (s, sign) = if n < m { (n, 1.0) } else { (n - m, -1.0) };
            centers[s] + sign * 0.5 * self.spec.strut_lengths[s] * axes[s]
        };
        self.spec
            .cables
            .iter()
            .map(|c| {
                let stretch = (node(c.node_b) - node(c.node_a)).norm() - c.rest_length;
                0.5 * c.stiffness * stretch * stretch
            })
            .sum()
    }

    /// Central differences with respect to every center and axis coordinate.
    fn fd_gradient(
        &self,
        centers: &mut [Vec3],
        axes: &mut [Vec3],
        h: f64,
    ) -> (Vec<Vec3>, Vec<Vec3>) {
        let mut gc = vec![Vec3::zeros(); self.m];
        let mut ga = vec![Vec3::zeros(); self.m];
        for i in 0..self.m {
            for k in 0..3 {
                let saved = centers[i][k];
                centers[i][k] = saved + h;
                let up = self.energy(centers, axes);
                centers[i][k] = saved - h;
                let down = self.energy(centers, axes);
                centers[i][k] = saved;
                gc[i][k] = (up - down) / (2.0 * h);

                let saved = axes[i][k];
                axes[i][k] = saved + h;
                let up = self.energy(centers, axes);
                axes[i][k] = saved - h;
                let down = self.energy(centers, axes);
                axes[i][k] = saved;
                ga[i][k] = (up - down) / (2.0 * h);
            }
        }
        (gc, ga)
    }
}

fn axis(phi: f64, theta: f64) -> Vec3 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vec3::new(sp * ct, sp * st, cp)
}

fn rotate_z(v: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

/// Hand-built starting shape: struts fanned around the vertical axis, each
/// leaning at `phis[i]`, centers on a small ring.
pub fn prism_like_init(spec: &StructureSpec, phis: Option<&[f64]>) -> ShapeState {
    let m = spec.strut_count();
    let radius = 0.05 / 0.37 * spec.max_strut_length();
    let mut centers = Vec::with_capacity(m);
    let mut thetas = Vec::with_capacity(m);
    for i in 0..m {
        let theta = wrap_angle(std::f64::consts::PI - std::f64::consts::TAU * i as f64 / m as f64);
        let around = theta + std::f64::consts::FRAC_PI_2;
        centers.push(radius * Vec3::new(around.cos(), around.sin(), 0.0));
        thetas.push(theta);
    }
    let phis = match phis {
        Some(p) => p.to_vec(),
        None => vec![0.9; m],
    };
    ShapeState::new(centers, thetas, phis)
}

/// [`equilibrium_oracle_with`] using the default settings.
pub fn equilibrium_oracle(
    spec: &StructureSpec,
    anchor_phis: Option<&[f64]>,
    init: Option<&ShapeState>,
) -> Result<ShapeState> {
    equilibrium_oracle_with(spec, anchor_phis, init, &OracleConfig::default())
}

/// Minimum-energy shape near `init` (or near [`prism_like_init`]).
///
/// Without `anchor_phis` every strut axis moves on the unit sphere. With it,
/// each axis is held on the cone of its anchored inclination and only turns
/// about the vertical. The result is centered so its centroid is the origin.
pub fn equilibrium_oracle_with(
    spec: &StructureSpec,
    anchor_phis: Option<&[f64]>,
    init: Option<&ShapeState>,
    config: &OracleConfig,
) -> Result<ShapeState> {
    ensure_valid(spec)?;
    let m = spec.strut_count();
    if let Some(a) = anchor_phis {
        if a.len() != m {
            return Err(Error::Dimension {
                context: "anchor inclinations",
                expected: m,
                actual: a.len(),
            });
        }
        check_inclinations(a)?;
    }
    let start = match init {
        Some(s) => {
            s.check(spec)?;
            let mut s = s.clone();
            if let Some(a) = anchor_phis {
                s.phis = a.to_vec();
            }
            s
        }
        None => prism_like_init(spec, anchor_phis),
    };
    let problem = OracleProblem { spec, m };
    let mut centers = start.centers.clone();
    let mut axes: Vec<Vec3> = (0..m)
        .map(|i| axis(start.phis[i], start.thetas[i]))
        .collect();
    let half = 0.5 * spec.max_strut_length();
    let step_axis = config.step / (half * half);

    let mut residual = f64::INFINITY;
    for _ in 0..config.max_iterations {
        let (gc, ga) = problem.fd_gradient(&mut centers, &mut axes, config.fd_step);
        let mut sq = 0.0;
        let mut axis_moves = Vec::with_capacity(m);
        for i in 0..m {
            sq += gc[i].norm_squared();
            if anchor_phis.is_some() {
                let dyaw = ga[i].dot(&Vec3::new(-axes[i].y, axes[i].x, 0.0));
                sq += dyaw * dyaw;
                axis_moves.push((dyaw, Vec3::zeros()));
            } else {
                let tangent = ga[i] - ga[i].dot(&axes[i]) * axes[i];
                sq += tangent.norm_squared();
                axis_moves.push((0.0, tangent));
            }
        }
        residual = sq.sqrt();
        if residual < config.tolerance {
            return Ok(finish(centers, &axes, anchor_phis));
        }
        for i in 0..m {
            centers[i] -= config.step * gc[i];
            let (dyaw, tangent) = axis_moves[i];
            if anchor_phis.is_some() {
                axes[i] = rotate_z(&axes[i], -step_axis * dyaw);
            } else {
                axes[i] = (axes[i] - step_axis * tangent).normalize();
            }
        }
    }
    Err(Error::OracleFailed {
        grad_norm: residual,
        iterations: config.max_iterations,
    })
}

fn finish(centers: Vec<Vec3>, axes: &[Vec3], anchor_phis: Option<&[f64]>) -> ShapeState {
    let mid = centroid(&centers);
    let centers = centers.into_iter().map(|c| c - mid).collect();
    let thetas = axes.iter().map(|q| q.y.atan2(q.x)).collect();
    let phis = match anchor_phis {
        Some(a) => a.to_vec(),
        // the axes are renormalized every step, so this cannot fail
        None => axes
            .iter()
            .map(|q| inclination_of(&q.normalize()).unwrap_or(0.0))
            .collect(),
    };
    ShapeState::new(centers, thetas, phis)
}

/// IMU model at the inclination level: constant per-strut bias plus white
/// Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation, radians.
    pub sigma_phi: f64,
    /// Per-strut offsets, radians. Empty means no bias.
    pub bias_phi: Vec<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn exact() -> Self {
        Self {
            sigma_phi: 0.0,
            bias_phi: Vec::new(),
            seed: 0,
        }
    }

    pub fn new(sigma_phi: f64, bias_phi: Vec<f64>, seed: u64) -> Self {
        Self {
            sigma_phi,
            bias_phi,
            seed,
        }
    }

    pub fn validate(&self, strut_count: usize) -> Result<()> {
        if !(self.sigma_phi >= 0.0 && self.sigma_phi.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.sigma_phi
            )));
        }
        if !self.bias_phi.is_empty() && self.bias_phi.len() != strut_count {
            return Err(Error::Dimension {
                context: "inclination bias",
                expected: strut_count,
                actual: self.bias_phi.len(),
            });
        }
        Ok(())
    }

    pub fn sampler(&self) -> Result<NoiseSampler> {
        NoiseSampler::new(self.clone())
    }
}

/// Stateful draw sequence for one [`NoiseModel`].
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    model: NoiseModel,
    normal: Normal<f64>,
    rng: ChaCha8Rng,
}

impl NoiseSampler {
    pub fn new(model: NoiseModel) -> Result<Self> {
        model.validate(model.bias_phi.len())?;
        let normal = Normal::new(0.0, model.sigma_phi)
            .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
        let rng = ChaCha8Rng::seed_from_u64(model.seed);
        Ok(Self { model, normal, rng })
    }

    pub fn sample(&mut self, state: &ShapeState, timestamp: f64) -> Result<InclinationFrame> {
        self.model.validate(state.strut_count())?;
        let phis = state
            .phis
            .iter()
            .enumerate()
            .map(|(i, &phi)| {
                let bias = self.model.bias_phi.get(i).copied().unwrap_or(0.0);
                let noise = if self.model.sigma_phi > 0.0 {
                    self.normal.sample(&mut self.rng)
                } else {
                    0.0
                };
                (phi + bias + noise).clamp(0.0, std::f64::consts::PI)
            })
            .collect();
        Ok(InclinationFrame::new(timestamp, phis))
    }
}

/// One noisy reading of `state`, drawn from a fresh sampler.
pub fn synth_inclinations(
    state: &ShapeState,
    noise: &NoiseModel,
    timestamp: f64,
) -> Result<InclinationFrame> {
    NoiseSampler::new(noise.clone())?.sample(state, timestamp)
}

/// Deformation programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Stationary,
    /// One cable of each group shortened to 80 %.
    Lateral,
    /// Two interconnecting cables shortened to 85 %.
    Angular,
    /// Every inclination raised by 30 degrees.
    Tilted,
    /// Lateral deformation applied and then released.
    Recovery,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Stationary,
        Scenario::Lateral,
        Scenario::Angular,
        Scenario::Tilted,
        Scenario::Recovery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Stationary => "stationary",
            Scenario::Lateral => "lateral",
            Scenario::Angular => "angular",
            Scenario::Tilted => "tilted",
            Scenario::Recovery => "recovery",
        }
    }

    /// Deformation amount in `[0, 1]` at normalized time `u`.
    pub fn progress(self, u: f64) -> f64 {
        let ramp = |a: f64, b: f64| smoothstep((u - a) / (b - a));
        match self {
            Scenario::Stationary => 0.0,
            Scenario::Lateral | Scenario::Angular | Scenario::Tilted => ramp(1.0 / 3.0, 2.0 / 3.0),
            Scenario::Recovery => ramp(0.2, 0.4) - ramp(0.6, 0.8),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario `{s}`")))
    }
}

pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

pub const TILT: f64 = std::f64::consts::PI / 6.0;

/// Structure whose equilibrium is the deformed end of `scenario`.
pub fn perturbed_spec(spec: &StructureSpec, scenario: Scenario) -> StructureSpec {
    let m = spec.strut_count();
    let mut out = spec.clone();
    let (cables, factor): (Vec<usize>, f64) = match scenario {
        Scenario::Lateral | Scenario::Recovery => (vec![0, m, 2 * m], 0.8),
        Scenario::Angular => (vec![2 * m, 2 * m + 1], 0.85),
        Scenario::Stationary | Scenario::Tilted => (Vec::new(), 1.0),
    };
    let count = out.cables.len();
    for k in cables.into_iter().filter(|&k| k < count) {
        out.cables[k].rest_length *= factor;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub timestamp: f64,
    pub truth: ShapeState,
    pub frame: InclinationFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scenario: Scenario,
    pub frames: Vec<TrajectoryFrame>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Writes the inclination stream and the ground-truth sidecar.
    pub fn write<S: Write, T: Write>(&self, stream: &mut S, truth: &mut T) -> Result<()> {
        writeln!(stream, "# scenario {}", self.scenario)?;
        writeln!(truth, "# scenario {}", self.scenario)?;
        for f in &self.frames {
            writeln!(stream, "{}", render_frame(&f.frame))?;
            let record = TruthRecord {
                timestamp: f.timestamp,
                state: f.truth.clone(),
            };
            writeln!(truth, "{}", render_truth(&record))?;
        }
        Ok(())
    }
}

fn check_endpoint(state: &ShapeState, spec: &StructureSpec) -> Result<()> {
    let conn = crate::model::build_connectivity(spec)?;
    let energy = crate::energy::total_energy(state, spec, &conn)?.total;
    let reasons = detect_degenerate_state(state, energy, spec);
    if reasons.is_empty() {
        Ok(())
    } else {
        Err(Error::OracleDegenerate {
            reason: reasons
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        })
    }
}

/// Base and deformed equilibria for a scenario, with the deformed one moved
/// into the gauge that best overlays it on the base.
pub fn scenario_endpoints(
    spec: &StructureSpec,
    scenario: Scenario,
) -> Result<(ShapeState, ShapeState)> {
    let base = equilibrium_oracle(spec, None, None)?;
    check_endpoint(&base, spec)?;
    let target = match scenario {
        Scenario::Stationary => return Ok((base.clone(), base)),
        Scenario::Tilted => {
            let anchor: Vec<f64> = base
                .phis
                .iter()
                .map(|p| (p + TILT).min(std::f64::consts::PI))
                .collect();
            equilibrium_oracle(spec, Some(&anchor), Some(&base))?
        }
        _ => equilibrium_oracle(&perturbed_spec(spec, scenario), None, Some(&base))?,
    };
    check_endpoint(&target, spec)?;
    let gauge = align_proper(
        &node_positions(&target, spec)?,
        &node_positions(&base, spec)?,
    )?;
    Ok((base, gauge.apply_state(&target)))
}

/// Straight-line blend of centers and inclinations, shortest-arc blend of
/// yaw angles.
pub fn interpolate(a: &ShapeState, b: &ShapeState, s: f64) -> ShapeState {
    let centers = a
        .centers
        .iter()
        .zip(&b.centers)
        .map(|(x, y)| x + s * (y - x))
        .collect();
    let thetas = a
        .thetas
        .iter()
        .zip(&b.thetas)
        .map(|(x, y)| wrap_angle(x + s * wrap_angle(y - x)))
        .collect();
    let phis = a
        .phis
        .iter()
        .zip(&b.phis)
        .map(|(x, y)| x + s * (y - x))
        .collect();
    ShapeState::new(centers, thetas, phis)
}

/// Frames at `k / rate` for `k < round(duration * rate)`. Only the two
/// endpoint shapes are equilibria; intermediate shapes are blends.
pub fn make_trajectory(
    spec: &StructureSpec,
    scenario: Scenario,
    duration: f64,
    rate: f64,
    noise: &NoiseModel,
) -> Result<Trajectory> {
    if !(duration > 0.0 && duration.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "duration and rate must be positive, got {duration} s at {rate} Hz"
        )));
    }
    let count = (duration * rate).round() as usize;
    if count == 0 {
        return Err(Error::InvalidConfig(format!(
            "{duration} s at {rate} Hz yields no frames"
        )));
    }
    noise.validate(spec.strut_count())?;
    let (base, target) = scenario_endpoints(spec, scenario)?;
    let mut sampler = noise.sampler()?;
    let mut frames = Vec::with_capacity(count);
    for k in 0..count {
        let timestamp = k as f64 / rate;
        let truth = interpolate(&base, &target, scenario.progress(timestamp / duration));
        let frame = sampler.sample(&truth, timestamp)?;
        frames.push(TrajectoryFrame {
            timestamp,
            truth,
            frame,
        });
    }
    Ok(Trajectory { scenario, frames })
}
