//! Benchmarks live in `benches/`; run them with `cargo bench -p tensegrity-bench`.

use tensegrity_core::model::taut_prism;
use tensegrity_core::{equilibrium_oracle, ShapeState, StructureSpec};

/// The taut prism and its equilibrium, the fixture every benchmark uses.
pub fn fixture() -> (StructureSpec, ShapeState) {
    let spec = taut_prism();
    let state = equilibrium_oracle(&spec, None, None).expect("taut prism has an equilibrium");
    (spec, state)
}
