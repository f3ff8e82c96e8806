use tensegrity_core::calibrate::{
    evaluate_objective, fit_stiffness, tied_by_layer, tied_uniform, CalibrationProblem, Observation,
};
use tensegrity_core::kinematics::node_positions;
use tensegrity_core::model::taut_prism;
use tensegrity_core::simulate::{equilibrium_oracle, synth_inclinations};
use tensegrity_core::{EstimatorConfig, NoiseModel, Optimizer, StructureSpec};

fn observations(truth_spec: &StructureSpec, count: u64) -> Vec<Observation> {
    let truth = equilibrium_oracle(truth_spec, None, None).unwrap();
    let nodes = node_positions(&truth, truth_spec).unwrap();
    (0..count)
        .map(|seed| Observation {
            phis: synth_inclinations(&truth, &NoiseModel::new(0.005, Vec::new(), seed), 0.0)
                .unwrap()
                .phis,
            reference_nodes: nodes.clone(),
        })
        .collect()
}

fn estimator() -> EstimatorConfig {
    EstimatorConfig {
        restarts: 16,
        ..EstimatorConfig::tuned(Optimizer::Adam)
    }
}

#[test]
fn uniform_search_matches_true_objective() {
    let spec = taut_prism();
    let problem = CalibrationProblem {
        observations: observations(&spec, 3),
        groups: tied_uniform(&spec, 10.0, 200.0),
        spec: spec.clone(),
        budget: 8,
        refine: 0,
        seed: 3,
        estimator: estimator(),
    };
    let fitted = fit_stiffness(&problem).unwrap();
    let at_truth = evaluate_objective(&problem, &[64.0; 12]).unwrap();
    assert!(
        fitted.objective <= 1.1 * at_truth,
        "{} vs {at_truth}",
        fitted.objective
    );
    let again = evaluate_objective(&problem, &fitted.stiffness).unwrap();
    assert!((again - fitted.objective).abs() <= 1e-12);
}

#[test]
fn layer_ratio_is_recovered() {
    let base = taut_prism();
    let mut k = vec![64.0; 8];
    k.extend([192.0; 4]);
    let truth_spec = base.clone().with_stiffnesses(&k).unwrap();
    let problem = CalibrationProblem {
        observations: observations(&truth_spec, 2),
        groups: tied_by_layer(&base, 10.0, 400.0),
        spec: base,
        budget: 24,
        refine: 40,
        seed: 5,
        estimator: estimator(),
    };
    let fitted = fit_stiffness(&problem).unwrap();
    let ratio = fitted.group_values[1] / fitted.group_values[0];
    let at_truth = evaluate_objective(&problem, &k).unwrap();
    assert!(
        fitted.objective <= 1.1 * at_truth + 1e-4,
        "{} vs {at_truth}",
        fitted.objective
    );
    assert!((ratio / 3.0 - 1.0).abs() < 0.25, "ratio {ratio}");
}
