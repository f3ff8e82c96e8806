//! Cable elastic energy and its analytic gradients.
//!
//! Each cable is a two-sided linear spring, `e_k = K_k (|d_k| - b_k)^2 / 2`,
//! with `d_k` the difference of its two node positions. With every
//! `b_k = 0` this is the quadratic form `m_s^T K m_s / 2`.
//!
//! Gradients flow back through the incidence matrix: the per-cable force
//! `f_k = K_k (1 - b_k / |d_k|) d_k` is scattered onto nodes by `Cs^T`,
//! folded onto strut centers by `A` and onto axes by `B`, and the axis
//! gradient is projected on `dq/dtheta` for the yaw gradient.

use crate::error::{Error, Result};
use crate::kinematics::{nodes_unchecked, orientation_dtheta, ShapeState, Vec3};
use crate::model::{ConnectivityMatrices, StructureSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// Joules.
    pub total: f64,
    pub per_cable: Vec<f64>,
    /// Meters.
    pub cable_lengths: Vec<f64>,
}

/// Energy and both gradients at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub energy: f64,
    pub grad_p: Vec<Vec3>,
    pub grad_theta: Vec<f64>,
}

impl Evaluation {
    pub fn grad_p_norm(&self) -> f64 {
        self.grad_p
            .iter()
            .map(|g| g.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    pub fn grad_theta_norm(&self) -> f64 {
        self.grad_theta.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn check_conn(spec: &StructureSpec, conn: &ConnectivityMatrices) -> Result<()> {
    if conn.cable_count() != spec.cable_count() {
        return Err(Error::Dimension {
            context: "connectivity rows",
            expected: spec.cable_count(),
            actual: conn.cable_count(),
        });
    }
    if conn.node_count() != spec.node_count() {
        return Err(Error::Dimension {
            context: "connectivity columns",
            expected: spec.node_count(),
            actual: conn.node_count(),
        });
    }
    Ok(())
}

/// Cable vectors `d_k = n_a - n_b` for every row of `Cs`.
pub fn cable_vectors(nodes: &[Vec3], conn: &ConnectivityMatrices) -> Result<Vec<Vec3>> {
    if nodes.len() != conn.node_count() {
        return Err(Error::Dimension {
            context: "node vector",
            expected: conn.node_count(),
            actual: nodes.len(),
        });
    }
    Ok(conn
        .cable_ends()
        .iter()
        .map(|&(a, b)| nodes[a] - nodes[b])
        .collect())
}

pub fn total_energy(
    state: &ShapeState,
    spec: &StructureSpec,
    conn: &ConnectivityMatrices,
) -> Result<EnergyReport> {
    state.check(spec)?;
    check_conn(spec, conn)?;
    let nodes = nodes_unchecked(state, &spec.strut_lengths);
    let vectors = cable_vectors(&nodes, conn)?;
    let mut per_cable = Vec::with_capacity(vectors.len());
    let mut cable_lengths = Vec::with_capacity(vectors.len());
    for (d, cable) in vectors.iter().zip(&spec.cables) {
        let length = d.norm();
        let stretch = length - cable.rest_length;
        per_cable.push(0.5 * cable.stiffness * stretch * stretch);
        cable_lengths.push(length);
    }
    Ok(EnergyReport {
        total: per_cable.iter().sum(),
        per_cable,
        cable_lengths,
    })
}

/// Gradient of the energy with respect to each strut center.
pub fn grad_p(
    state: &ShapeState,
    spec: &StructureSpec,
    conn: &ConnectivityMatrices,
) -> Result<Vec<Vec3>> {
    Ok(evaluate(state, spec, conn)?.grad_p)
}

/// Gradient of the energy with respect to each yaw angle.
pub fn grad_theta(
    state: &ShapeState,
    spec: &StructureSpec,
    conn: &ConnectivityMatrices,
) -> Result<Vec<f64>> {
    Ok(evaluate(state, spec, conn)?.grad_theta)
}

/// Energy and both gradients in one pass.
pub fn evaluate(
    state: &ShapeState,
    spec: &StructureSpec,
    conn: &ConnectivityMatrices,
) -> Result<Evaluation> {
    state.check(spec)?;
    check_conn(spec, conn)?;
    evaluate_unchecked(state, spec, conn)
}

pub(crate) fn evaluate_unchecked(
    state: &ShapeState,
    spec: &StructureSpec,
    conn: &ConnectivityMatrices,
) -> Result<Evaluation> {
    let mb = spec.strut_count();
    let nodes = nodes_unchecked(state, &spec.strut_lengths);
    let mut node_grad = vec![Vec3::zeros(); nodes.len()];
    let mut energy = 0.0;
    for (k, (&(a, b), cable)) in conn.cable_ends().iter().zip(&spec.cables).enumerate() {
        let d = nodes[a] - nodes[b];
        let force = if cable.rest_length == 0.0 {
            energy += 0.5 * cable.stiffness * d.norm_squared();
            cable.stiffness * d
        } else {
            let length = d.norm();
            if length == 0.0 {
                return Err(Error::SingularConfiguration { cable: k });
            }
            let stretch = length - cable.rest_length;
            energy += 0.5 * cable.stiffness * stretch * stretch;
            (cable.stiffness * stretch / length) * d
        };
        node_grad[a] += force;
        node_grad[b] -= force;
    }
    let mut grad_p = Vec::with_capacity(mb);
    let mut grad_theta = Vec::with_capacity(mb);
    for i in 0..mb {
        let (top, bottom) = (node_grad[i], node_grad[i + mb]);
        grad_p.push(top + bottom);
        let grad_q = 0.5 * spec.strut_lengths[i] * (top - bottom);
        grad_theta.push(grad_q.dot(&orientation_dtheta(state.phis[i], state.thetas[i])));
    }
    Ok(Evaluation {
        energy,
        grad_p,
        grad_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{flatten, unflatten};
    use crate::model::{build_connectivity, builtin_prism, taut_prism, CableSpec};
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn two_node_spec(rest: f64) -> StructureSpec {
        // one vertical strut of length 0.25; the cable spans its two ends
        StructureSpec {
            name: String::new(),
            strut_lengths: vec![0.25],
            cables: vec![CableSpec::new(0, 1, 64.0, rest)],
        }
    }

    fn vertical() -> ShapeState {
        ShapeState::new(vec![Vec3::zeros()], vec![0.0], vec![0.0])
    }

    #[test]
    fn single_cable_energy() {
        let spec = two_node_spec(0.0);
        let conn = build_connectivity(&spec).unwrap();
        let r = total_energy(&vertical(), &spec, &conn).unwrap();
        assert_relative_eq!(r.total, 2.0, max_relative = 1e-14);
        assert_relative_eq!(r.cable_lengths[0], 0.25);

        let spec = two_node_spec(0.22);
        let r = total_energy(&vertical(), &spec, &conn).unwrap();
        assert_relative_eq!(r.total, 0.0288, max_relative = 1e-12);
    }

    #[test]
    fn cable_vector_cases() {
        let spec = two_node_spec(0.0);
        let conn = build_connectivity(&spec).unwrap();
        let same = cable_vectors(&[Vec3::x(), Vec3::x()], &conn).unwrap();
        assert_eq!(same[0], Vec3::zeros());
        let d = cable_vectors(&[Vec3::x(), Vec3::zeros()], &conn).unwrap();
        assert_eq!(d[0], Vec3::x());
        assert!(cable_vectors(&[Vec3::x()], &conn).is_err());
    }

    #[test]
    fn cable_vectors_match_dense_product_per_axis() {
        let spec = builtin_prism();
        let conn = build_connectivity(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nodes: Vec<Vec3> = (0..8)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let vectors = cable_vectors(&nodes, &conn).unwrap();
        for axis in 0..3 {
            let column = DVector::from_iterator(8, nodes.iter().map(|n| n[axis]));
            let product = conn.cs() * column;
            for (k, v) in vectors.iter().enumerate() {
                assert_eq!(product[k], v[axis]);
            }
        }
    }

    #[test]
    fn zero_length_with_rest_length_is_singular() {
        // a zero-length strut is not a valid spec, so build the coincident
        // endpoints from two struts instead
        let spec = StructureSpec {
            name: String::new(),
            strut_lengths: vec![0.2, 0.2],
            cables: vec![CableSpec::new(0, 1, 10.0, 0.1)],
        };
        let conn = build_connectivity(&spec).unwrap();
        let state = ShapeState::new(vec![Vec3::zeros(); 2], vec![0.0; 2], vec![0.0; 2]);
        assert!(matches!(
            evaluate(&state, &spec, &conn),
            Err(Error::SingularConfiguration { cable: 0 })
        ));
        // the energy itself is still defined
        assert!(total_energy(&state, &spec, &conn).is_ok());
        let spec0 = spec.clone().with_rest_lengths(0.0);
        let g = evaluate(&state, &spec0, &conn).unwrap();
        assert_eq!(g.energy, 0.0);
    }

    fn random_state(rng: &mut impl Rng) -> ShapeState {
        ShapeState::new(
            (0..4)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                    )
                })
                .collect(),
            (0..4).map(|_| rng.random_range(-PI..PI)).collect(),
            (0..4).map(|_| rng.random_range(0.1..PI - 0.1)).collect(),
        )
    }

    /// Central differences of `total_energy` over the packed `(p, theta)`
    /// vector; independent of the analytic gradient path.
    fn finite_difference(state: &ShapeState, spec: &StructureSpec) -> Vec<f64> {
        let conn = build_connectivity(spec).unwrap();
        let e = |s: &ShapeState| total_energy(s, spec, &conn).unwrap().total;
        let mut out = Vec::new();
        let p = state.center_vector();
        for j in 0..p.len() {
            let h = 1e-6 * p[j].abs().max(1.0);
            let mut plus = p.clone();
            plus[j] += h;
            let mut minus = p.clone();
            minus[j] -= h;
            let sp = ShapeState {
                centers: unflatten(&plus).unwrap(),
                ..state.clone()
            };
            let sm = ShapeState {
                centers: unflatten(&minus).unwrap(),
                ..state.clone()
            };
            out.push((e(&sp) - e(&sm)) / (2.0 * h));
        }
        for i in 0..state.thetas.len() {
            let h = 1e-6 * state.thetas[i].abs().max(1.0);
            let mut sp = state.clone();
            sp.thetas[i] += h;
            let mut sm = state.clone();
            sm.thetas[i] -= h;
            out.push((e(&sp) - e(&sm)) / (2.0 * h));
        }
        out
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [builtin_prism(), taut_prism()] {
            let conn = build_connectivity(&spec).unwrap();
            for _ in 0..25 {
                let state = random_state(&mut rng);
                let ev = evaluate(&state, &spec, &conn).unwrap();
                let mut analytic = flatten(&ev.grad_p);
                analytic.extend(&ev.grad_theta);
                let fd = finite_difference(&state, &spec);
                let scale = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
                let err = analytic
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(err <= 1e-6 * scale, "err {err} scale {scale}");
            }
        }
    }

    #[test]
    fn pole_strut_has_zero_yaw_gradient() {
        let spec = taut_prism();
        let conn = build_connectivity(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = random_state(&mut rng);
        state.phis[2] = 0.0;
        let g = grad_theta(&state, &spec, &conn).unwrap();
        assert_eq!(g[2], 0.0);
        assert!(g[0] != 0.0);
    }

    #[test]
    fn cables_at_rest_length_give_zero_energy_and_gradient() {
        // a single horizontal strut whose cable spans it at exactly L
        let spec = two_node_spec(0.25);
        let conn = build_connectivity(&spec).unwrap();
        let state = ShapeState::new(vec![Vec3::new(0.1, 0.2, 0.3)], vec![0.4], vec![1.0]);
        let ev = evaluate(&state, &spec, &conn).unwrap();
        assert!(ev.energy < 1e-30);
        assert!(ev.grad_p[0].norm() < 1e-14);
        assert!(ev.grad_theta[0].abs() < 1e-14);
    }

    #[test]
    fn report_totals_and_signs() {
        let spec = taut_prism();
        let conn = build_connectivity(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let state = random_state(&mut rng);
            let r = total_energy(&state, &spec, &conn).unwrap();
            let sum: f64 = r.per_cable.iter().sum();
            assert_relative_eq!(r.total, sum, max_relative = 1e-12);
            assert!(r.per_cable.iter().all(|&e| e >= 0.0));
            let ev = evaluate(&state, &spec, &conn).unwrap();
            assert_relative_eq!(ev.energy, r.total, max_relative = 1e-12);
        }
    }

    #[test]
    fn mismatched_connectivity_is_rejected() {
        let spec = builtin_prism();
        let other = build_connectivity(&two_node_spec(0.0)).unwrap();
        let state = ShapeState::new(vec![Vec3::zeros(); 4], vec![0.0; 4], vec![0.5; 4]);
        assert!(total_energy(&state, &spec, &other).is_err());
        assert!(evaluate(&state, &spec, &other).is_err());
    }
}
