//! Real-time shape reconstruction of Class-1 tensegrity structures from the
//! inclination angle of each strut.
//!
//! Strut yaw angles and center positions are not measured; they are found by
//! minimizing the elastic energy stored in the cables, with inclinations held
//! at their measured values.

pub mod ablation;
pub mod calibrate;
pub mod energy;
pub mod error;
pub mod estimator;
pub mod io;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod report;
pub mod simulate;
pub mod stream;

pub use error::{Error, Result};
pub use estimator::{Estimator, EstimatorConfig, Optimizer, ShapeEstimate};
pub use io::InclinationFrame;
pub use kinematics::{ShapeState, StrutPose, Vec3};
pub use metrics::{align, node_mae, GaugeTransform};
pub use model::{CableSpec, ConnectivityMatrices, StructureSpec};
pub use simulate::{equilibrium_oracle, make_trajectory, NoiseModel, Scenario, Trajectory};
