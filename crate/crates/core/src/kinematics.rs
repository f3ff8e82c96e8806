//! Strut parameters to orientations and node positions.
//!
//! Gravity points along `-z`. A strut with inclination `phi` and yaw `theta`
//! has axis `q = (sin phi cos theta, sin phi sin theta, cos phi)`; its `+q`
//! node sits at `p + L/2 q` and its `-q` node at `p - L/2 q`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::model::StructureSpec;

pub type Vec3 = Vector3<f64>;

/// Pose of a single strut.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrutPose {
    pub center: Vec3,
    pub phi: f64,
    pub theta: f64,
}

/// Decision variables (`centers`, `thetas`) plus the measured inclinations.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeState {
    pub centers: Vec<Vec3>,
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
}

impl ShapeState {
    pub fn new(centers: Vec<Vec3>, thetas: Vec<f64>, phis: Vec<f64>) -> Self {
        Self {
            centers,
            thetas,
            phis,
        }
    }

    pub fn strut_count(&self) -> usize {
        self.thetas.len()
    }

    pub fn pose(&self, strut: usize) -> StrutPose {
        StrutPose {
            center: self.centers[strut],
            phi: self.phis[strut],
            theta: self.thetas[strut],
        }
    }

    /// Checks arity against `spec` and the inclination range.
    pub fn check(&self, spec: &StructureSpec) -> Result<()> {
        let mb = spec.strut_count();
        for (context, actual) in [
            ("strut centers", self.centers.len()),
            ("yaw angles", self.thetas.len()),
            ("inclination angles", self.phis.len()),
        ] {
            if actual != mb {
                return Err(Error::Dimension {
                    context,
                    expected: mb,
                    actual,
                });
            }
        }
        check_inclinations(&self.phis)
    }

    pub fn orientations(&self) -> Vec<Vec3> {
        self.phis
            .iter()
            .zip(&self.thetas)
            .map(|(&phi, &theta)| orientation(phi, theta))
            .collect()
    }

    /// Wraps every yaw angle into `(-pi, pi]`.
    pub fn normalize_angles(&mut self) {
        for t in &mut self.thetas {
            *t = wrap_angle(*t);
        }
    }

    /// Concatenated `p` vector, `3 m_b` long.
    pub fn center_vector(&self) -> Vec<f64> {
        flatten(&self.centers)
    }
}

pub fn check_inclinations(phis: &[f64]) -> Result<()> {
    for (strut, &value) in phis.iter().enumerate() {
        if !(0.0..=PI).contains(&value) {
            return Err(Error::InclinationOutOfRange { strut, value });
        }
    }
    Ok(())
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[inline]
pub(crate) fn orientation(phi: f64, theta: f64) -> Vec3 {
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Vec3::new(sp * ct, sp * st, cp)
}

#[inline]
pub(crate) fn orientation_dtheta(phi: f64, theta: f64) -> Vec3 {
    let sp = phi.sin();
    let (st, ct) = theta.sin_cos();
    Vec3::new(-sp * st, sp * ct, 0.0)
}

/// Unit strut axis from inclination and yaw.
pub fn orientation_from_angles(phi: f64, theta: f64) -> Result<Vec3> {
    check_inclinations(&[phi])?;
    Ok(orientation(phi, theta))
}

/// Derivative of the strut axis with respect to yaw. The z-component is
/// always zero, and the whole vector vanishes at `phi = 0`.
pub fn orientation_jacobian_theta(phi: f64, theta: f64) -> Result<Vec3> {
    check_inclinations(&[phi])?;
    Ok(orientation_dtheta(phi, theta))
}

/// Inclination of a unit axis relative to the vertical, in `[0, pi]`.
pub fn inclination_of(q: &Vec3) -> Result<f64> {
    let norm = q.norm();
    if !((norm - 1.0).abs() <= 1e-9) {
        return Err(Error::NotUnit { norm });
    }
    Ok(q.z.clamp(-1.0, 1.0).acos())
}

/// Node positions: node `i` is `p_i + L_i/2 q_i`, node `i + m_b` is
/// `p_i - L_i/2 q_i`.
pub fn node_positions(state: &ShapeState, spec: &StructureSpec) -> Result<Vec<Vec3>> {
    state.check(spec)?;
    Ok(nodes_unchecked(state, &spec.strut_lengths))
}

pub(crate) fn nodes_unchecked(state: &ShapeState, lengths: &[f64]) -> Vec<Vec3> {
    let mb = lengths.len();
    let mut nodes = vec![Vec3::zeros(); 2 * mb];
    for i in 0..mb {
        let half = 0.5 * lengths[i] * orientation(state.phis[i], state.thetas[i]);
        nodes[i] = state.centers[i] + half;
        nodes[i + mb] = state.centers[i] - half;
    }
    nodes
}

/// Assembly matrices `A = [I | I]` and `B = [L/2 | -L/2]`, both
/// `3 m_b x 3 n`, so that `n = A^T p + B^T q`.
pub fn assembly_matrices(spec: &StructureSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let mb = spec.strut_count();
    let rows = 3 * mb;
    let mut a = DMatrix::zeros(rows, 2 * rows);
    let mut b = DMatrix::zeros(rows, 2 * rows);
    for i in 0..mb {
        let half = 0.5 * spec.strut_lengths[i];
        for axis in 0..3 {
            let r = 3 * i + axis;
            a[(r, r)] = 1.0;
            a[(r, r + rows)] = 1.0;
            b[(r, r)] = half;
            b[(r, r + rows)] = -half;
        }
    }
    (a, b)
}

pub fn flatten(points: &[Vec3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

pub fn unflatten(values: &[f64]) -> Result<Vec<Vec3>> {
    if !values.len().is_multiple_of(3) {
        return Err(Error::Dimension {
            context: "coordinate vector",
            expected: values.len() / 3 * 3 + 3,
            actual: values.len(),
        });
    }
    Ok(values
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect())
}
