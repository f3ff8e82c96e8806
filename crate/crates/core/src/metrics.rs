//! Shape comparison modulo the symmetries of the energy.
//!
//! With inclinations fixed, the energy is unchanged by any translation, by a
//! rotation about the gravity axis, and by a reflection through a vertical
//! plane (which maps yaw `theta` to `-theta`). Estimates are therefore only
//! defined up to this group, and comparisons against a reference first move
//! the estimate by the best element of it. Tilts are never part of the group:
//! inclinations are measured.

use crate::error::{Error, Result};
use crate::kinematics::{node_positions, wrap_angle, ShapeState, Vec3};
use crate::model::StructureSpec;

/// `x -> Rz(yaw) M x + translation`, where `M` flips `y` when `mirrored`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaugeTransform {
    pub translation: Vec3,
    /// Radians, in `(-pi, pi]`.
    pub yaw: f64,
    pub mirrored: bool,
}

impl Default for GaugeTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl GaugeTransform {
    pub fn identity() -> Self {
        Self {
            translation: Vec3::zeros(),
            yaw: 0.0,
            mirrored: false,
        }
    }

    pub fn new(translation: Vec3, yaw: f64, mirrored: bool) -> Self {
        Self {
            translation,
            yaw: wrap_angle(yaw),
            mirrored,
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        let y = if self.mirrored { -x.y } else { x.y };
        let (s, c) = self.yaw.sin_cos();
        Vec3::new(c * x.x - s * y, s * x.x + c * y, x.z) + self.translation
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// The same transform acting on a strut state: centers move, yaw angles
    /// shift (and flip sign when mirrored), inclinations are untouched.
    pub fn apply_state(&self, state: &ShapeState) -> ShapeState {
        ShapeState {
            centers: self.apply_all(&state.centers),
            thetas: state.thetas.iter().map(|&t| self.apply_yaw(t)).collect(),
            phis: state.phis.clone(),
        }
    }

    pub fn apply_yaw(&self, theta: f64) -> f64 {
        let t = if self.mirrored { -theta } else { theta };
        wrap_angle(t + self.yaw)
    }
}

fn check_pair(est: &[Vec3], reference: &[Vec3]) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::Dimension {
            context: "point cloud",
            expected: reference.len(),
            actual: est.len(),
        });
    }
    if est.is_empty() {
        return Err(Error::Dimension {
            context: "point cloud",
            expected: 1,
            actual: 0,
        });
    }
    Ok(())
}

/// Weighted closed-form fit of a transform with fixed handedness.
fn fit(est: &[Vec3], reference: &[Vec3], weights: &[f64], mirrored: bool) -> GaugeTransform {
    let flip = |p: &Vec3| {
        if mirrored {
            Vec3::new(p.x, -p.y, p.z)
        } else {
            *p
        }
    };
    let total: f64 = weights.iter().sum();
    let mut ce = Vec3::zeros();
    let mut cr = Vec3::zeros();
    for ((e, r), w) in est.iter().zip(reference).zip(weights) {
        ce += *w * flip(e);
        cr += *w * r;
    }
    ce /= total;
    cr /= total;
    let (mut cross, mut dot) = (0.0, 0.0);
    for ((e, r), w) in est.iter().zip(reference).zip(weights) {
        let a = flip(e) - ce;
        let b = r - cr;
        cross += w * (a.x * b.y - a.y * b.x);
        dot += w * (a.x * b.x + a.y * b.y);
    }
    let yaw = if cross == 0.0 && dot == 0.0 {
        0.0
    } else {
        cross.atan2(dot)
    };
    let rotated = GaugeTransform::new(Vec3::zeros(), yaw, false).apply(&ce);
    GaugeTransform::new(cr - rotated, yaw, mirrored)
}

fn sum_squared(t: &GaugeTransform, est: &[Vec3], reference: &[Vec3]) -> f64 {
    est.iter()
        .zip(reference)
        .map(|(e, r)| (t.apply(e) - r).norm_squared())
        .sum()
}

fn mean_distance(t: &GaugeTransform, est: &[Vec3], reference: &[Vec3]) -> f64 {
    est.iter()
        .zip(reference)
        .map(|(e, r)| (t.apply(e) - r).norm())
        .sum::<f64>()
        / est.len() as f64
}

/// Least-squares transform taking `est_nodes` onto `ref_nodes`. Translation
/// comes from the centroids and yaw from the horizontal cross/dot
/// correlation; the mirrored fit is used only when strictly better.
pub fn align(est_nodes: &[Vec3], ref_nodes: &[Vec3]) -> Result<GaugeTransform> {
    check_pair(est_nodes, ref_nodes)?;
    let ones = vec![1.0; est_nodes.len()];
    let proper = fit(est_nodes, ref_nodes, &ones, false);
    let mirrored = fit(est_nodes, ref_nodes, &ones, true);
    if sum_squared(&mirrored, est_nodes, ref_nodes) < sum_squared(&proper, est_nodes, ref_nodes) {
        Ok(mirrored)
    } else {
        Ok(proper)
    }
}

/// Least-squares transform restricted to translation and yaw.
pub fn align_proper(est_nodes: &[Vec3], ref_nodes: &[Vec3]) -> Result<GaugeTransform> {
    check_pair(est_nodes, ref_nodes)?;
    Ok(fit(
        est_nodes,
        ref_nodes,
        &vec![1.0; est_nodes.len()],
        false,
    ))
}

/// Iteratively reweighted fit minimizing the mean distance, started from
/// `start`. Each iteration cannot increase the objective.
fn refine_mean_distance(
    est: &[Vec3],
    reference: &[Vec3],
    start: GaugeTransform,
) -> (GaugeTransform, f64) {
    let mut best = start;
    let mut best_cost = mean_distance(&best, est, reference);
    let floor = 1e-15 * (1.0 + best_cost);
    for _ in 0..500 {
        let weights: Vec<f64> = est
            .iter()
            .zip(reference)
            .map(|(e, r)| 1.0 / (best.apply(e) - r).norm().max(floor))
            .collect();
        let next = fit(est, reference, &weights, best.mirrored);
        let cost = mean_distance(&next, est, reference);
        if !(cost < best_cost) {
            break;
        }
        let gain = best_cost - cost;
        best = next;
        best_cost = cost;
        if gain <= 1e-15 * best_cost.max(1e-300) {
            break;
        }
    }
    (best, best_cost)
}

/// Transform minimizing the mean node distance, and that distance.
pub fn align_mean_distance(
    est_nodes: &[Vec3],
    ref_nodes: &[Vec3],
) -> Result<(GaugeTransform, f64)> {
    check_pair(est_nodes, ref_nodes)?;
    let ones = vec![1.0; est_nodes.len()];
    let mut best = (GaugeTransform::identity(), f64::INFINITY);
    for mirrored in [false, true] {
        let starts = [
            fit(est_nodes, ref_nodes, &ones, mirrored),
            GaugeTransform::new(Vec3::zeros(), 0.0, mirrored),
        ];
        for start in starts {
            let candidate = refine_mean_distance(est_nodes, ref_nodes, start);
            if candidate.1 < best.1 {
                best = candidate;
            }
        }
    }
    Ok(best)
}

/// Mean Euclidean distance between corresponding points, meters. With
/// `aligned`, the estimate is first moved by the symmetry that minimizes it.
pub fn node_mae(est_nodes: &[Vec3], ref_nodes: &[Vec3], aligned: bool) -> Result<f64> {
    check_pair(est_nodes, ref_nodes)?;
    if aligned {
        Ok(align_mean_distance(est_nodes, ref_nodes)?.1)
    } else {
        Ok(mean_distance(
            &GaugeTransform::identity(),
            est_nodes,
            ref_nodes,
        ))
    }
}

/// Which angle a record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleKind {
    Yaw,
    Inclination,
}

/// Actual angles below this magnitude make a percentage error meaningless.
pub const NEAR_ZERO_ANGLE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleRecord {
    pub strut: usize,
    pub kind: AngleKind,
    pub actual: f64,
    pub estimated: f64,
    /// `None` when `|actual|` is below [`NEAR_ZERO_ANGLE`].
    pub percent_error: Option<f64>,
}

/// `|actual - estimated| / |actual| * 100`, with the difference wrapped into
/// `(-pi, pi]`; undefined for near-zero `actual`.
pub fn percent_error(actual: f64, estimated: f64) -> Option<f64> {
    if actual.abs() < NEAR_ZERO_ANGLE {
        None
    } else {
        Some(wrap_angle(actual - estimated).abs() / actual.abs() * 100.0)
    }
}

/// Per-strut yaw and inclination errors. Yaw is compared after moving the
/// estimate by its least-squares alignment onto the reference.
pub fn angle_errors(
    est: &ShapeState,
    reference: &ShapeState,
    spec: &StructureSpec,
) -> Result<Vec<AngleRecord>> {
    let est_nodes = node_positions(est, spec)?;
    let ref_nodes = node_positions(reference, spec)?;
    let gauge = align(&est_nodes, &ref_nodes)?;
    let mut out = Vec::with_capacity(2 * est.strut_count());
    for i in 0..est.strut_count() {
        let actual = reference.thetas[i];
        let estimated = gauge.apply_yaw(est.thetas[i]);
        out.push(AngleRecord {
            strut: i,
            kind: AngleKind::Yaw,
            actual,
            estimated,
            percent_error: percent_error(actual, estimated),
        });
    }
    for i in 0..est.strut_count() {
        let actual = reference.phis[i];
        let estimated = est.phis[i];
        out.push(AngleRecord {
            strut: i,
            kind: AngleKind::Inclination,
            actual,
            estimated,
            percent_error: percent_error(actual, estimated),
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rotation about the gravity axis through `pivot`.
pub fn rotate_about(points: &[Vec3], pivot: &Vec3, yaw: f64) -> Vec<Vec3> {
    let r = GaugeTransform::new(Vec3::zeros(), yaw, false);
    points
        .iter()
        .map(|p| r.apply(&(p - pivot)) + pivot)
        .collect()
}

pub(crate) fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}
