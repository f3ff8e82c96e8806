//! Structure description and signed incidence matrices.
//!
//! Node numbering is fixed: strut `i` owns node `i` (its `+q` end) and node
//! `i + m_b` (its `-q` end), so a structure with `m_b` struts has `2 m_b`
//! nodes. Incidence matrices are stored at node granularity (`m x n`) and
//! applied to each coordinate axis separately.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strut length of the bundled four-strut prism, meters.
pub const PRISM_STRUT_LENGTH: f64 = 0.37;
/// Physical cable length of the bundled prism, meters.
pub const PRISM_CABLE_LENGTH: f64 = 0.22;
/// Spring constant of the bundled prism cables, N/m (0.064 N/mm).
pub const PRISM_STIFFNESS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CableSpec {
    /// Node receiving the `+1` entry of the incidence row.
    #[serde(rename = "a")]
    pub node_a: usize,
    /// Node receiving the `-1` entry.
    #[serde(rename = "b")]
    pub node_b: usize,
    /// Stiffness `K_k`, N/m.
    #[serde(rename = "k")]
    pub stiffness: f64,
    /// Rest length `b_k`, meters.
    #[serde(rename = "b0", default)]
    pub rest_length: f64,
}

impl CableSpec {
    pub fn new(node_a: usize, node_b: usize, stiffness: f64, rest_length: f64) -> Self {
        Self {
            node_a,
            node_b,
            stiffness,
            rest_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    #[serde(default)]
    pub name: String,
    pub strut_lengths: Vec<f64>,
    #[serde(default)]
    pub cables: Vec<CableSpec>,
}

impl StructureSpec {
    pub fn strut_count(&self) -> usize {
        self.strut_lengths.len()
    }

    pub fn node_count(&self) -> usize {
        2 * self.strut_count()
    }

    pub fn cable_count(&self) -> usize {
        self.cables.len()
    }

    pub fn max_strut_length(&self) -> f64 {
        self.strut_lengths.iter().copied().fold(0.0, f64::max)
    }

    pub fn stiffnesses(&self) -> Vec<f64> {
        self.cables.iter().map(|c| c.stiffness).collect()
    }

    /// True when every cable has zero rest length.
    pub fn all_zero_rest_length(&self) -> bool {
        self.cables.iter().all(|c| c.rest_length == 0.0)
    }

    pub fn with_rest_lengths(mut self, rest_length: f64) -> Self {
        for c in &mut self.cables {
            c.rest_length = rest_length;
        }
        self
    }

    pub fn with_stiffnesses(mut self, stiffness: &[f64]) -> Result<Self> {
        if stiffness.len() != self.cables.len() {
            return Err(Error::Dimension {
                context: "stiffness vector",
                expected: self.cables.len(),
                actual: stiffness.len(),
            });
        }
        for (c, &k) in self.cables.iter_mut().zip(stiffness) {
            c.stiffness = k;
        }
        Ok(self)
    }

    /// Parses the TOML structure file format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::SpecFile(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::SpecFile(e.to_string()))
    }
}

/// One reason a [`StructureSpec`] is malformed.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStruts,
    NonPositiveStrutLength {
        strut: usize,
        length: f64,
    },
    NodeOutOfRange {
        cable: usize,
        node: usize,
        node_count: usize,
    },
    DegenerateCable {
        cable: usize,
        node: usize,
    },
    NonPositiveStiffness {
        cable: usize,
        stiffness: f64,
    },
    NegativeRestLength {
        cable: usize,
        rest_length: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NoStruts => write!(f, "structure has no struts"),
            Violation::NonPositiveStrutLength { strut, length } => {
                write!(f, "strut {strut} has non-positive length {length}")
            }
            Violation::NodeOutOfRange {
                cable,
                node,
                node_count,
            } => write!(
                f,
                "cable {cable} references node {node}, but the structure has {node_count} nodes"
            ),
            Violation::DegenerateCable { cable, node } => {
                write!(f, "cable {cable} connects node {node} to itself")
            }
            Violation::NonPositiveStiffness { cable, stiffness } => {
                write!(f, "cable {cable} has non-positive stiffness {stiffness}")
            }
            Violation::NegativeRestLength { cable, rest_length } => {
                write!(f, "cable {cable} has negative rest length {rest_length}")
            }
        }
    }
}

/// Returns every invariant violation of `spec`; empty when well-formed.
pub fn validate_spec(spec: &StructureSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if spec.strut_lengths.is_empty() {
        out.push(Violation::NoStruts);
    }
    for (strut, &length) in spec.strut_lengths.iter().enumerate() {
        // written so that NaN is rejected too
        if !(length > 0.0 && length.is_finite()) {
            out.push(Violation::NonPositiveStrutLength { strut, length });
        }
    }
    let node_count = spec.node_count();
    for (cable, c) in spec.cables.iter().enumerate() {
        for node in [c.node_a, c.node_b] {
            if node >= node_count {
                out.push(Violation::NodeOutOfRange {
                    cable,
                    node,
                    node_count,
                });
            }
        }
        if c.node_a == c.node_b {
            out.push(Violation::DegenerateCable {
                cable,
                node: c.node_a,
            });
        }
        if !(c.stiffness > 0.0 && c.stiffness.is_finite()) {
            out.push(Violation::NonPositiveStiffness {
                cable,
                stiffness: c.stiffness,
            });
        }
        if !(c.rest_length >= 0.0 && c.rest_length.is_finite()) {
            out.push(Violation::NegativeRestLength {
                cable,
                rest_length: c.rest_length,
            });
        }
    }
    out
}

pub(crate) fn ensure_valid(spec: &StructureSpec) -> Result<()> {
    let violations = validate_spec(spec);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSpec(violations))
    }
}

/// Signed incidence of cables (`cs`, `m_s x n`) and struts (`cb`, `m_b x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrices {
    cs: DMatrix<f64>,
    cb: DMatrix<f64>,
    cable_ends: Vec<(usize, usize)>,
}

impl ConnectivityMatrices {
    pub fn cs(&self) -> &DMatrix<f64> {
        &self.cs
    }

    pub fn cb(&self) -> &DMatrix<f64> {
        &self.cb
    }

    /// `(plus, minus)` column of each cable row, in row order.
    pub fn cable_ends(&self) -> &[(usize, usize)] {
        &self.cable_ends
    }

    pub fn cable_count(&self) -> usize {
        self.cable_ends.len()
    }

    pub fn node_count(&self) -> usize {
        self.cs.ncols()
    }
}

pub fn build_connectivity(spec: &StructureSpec) -> Result<ConnectivityMatrices> {
    ensure_valid(spec)?;
    let n = spec.node_count();
    let mb = spec.strut_count();
    let mut cs = DMatrix::zeros(spec.cable_count(), n);
    let mut cable_ends = Vec::with_capacity(spec.cable_count());
    for (u, c) in spec.cables.iter().enumerate() {
        cs[(u, c.node_a)] = 1.0;
        cs[(u, c.node_b)] = -1.0;
        cable_ends.push((c.node_a, c.node_b));
    }
    let mut cb = DMatrix::zeros(mb, n);
    for i in 0..mb {
        cb[(i, i)] = 1.0;
        cb[(i, i + mb)] = -1.0;
    }
    Ok(ConnectivityMatrices { cs, cb, cable_ends })
}

/// The four-strut, twelve-cable Class-1 prism with zero rest lengths.
///
/// Cable order is upper loop, bottom loop, then the four interconnecting
/// cables, which reproduces the published one-axis incidence matrix row for
/// row.
pub fn builtin_prism() -> StructureSpec {
    const ENDS: [(usize, usize); 12] = [
        (0, 1),
        (1, 2),
        (2, 3),
        (3, 0),
        (4, 5),
        (5, 6),
        (6, 7),
        (7, 4),
        (0, 5),
        (1, 6),
        (2, 7),
        (3, 4),
    ];
    StructureSpec {
        name: "class1-prism-4".to_string(),
        strut_lengths: vec![PRISM_STRUT_LENGTH; 4],
        cables: ENDS
            .iter()
            .map(|&(a, b)| CableSpec::new(a, b, PRISM_STIFFNESS, 0.0))
            .collect(),
    }
}

/// The bundled prism pre-tensioned with every rest length at 90% of the
/// physical cable length. Its free equilibrium is a taut, non-degenerate
/// prism, unlike the zero-rest-length model whose global minimum collapses.
pub fn taut_prism() -> StructureSpec {
    let mut spec = builtin_prism().with_rest_lengths(0.9 * PRISM_CABLE_LENGTH);
    spec.name = "class1-prism-4-taut".to_string();
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prism_is_valid() {
        let spec = builtin_prism();
        assert_eq!(spec.strut_count(), 4);
        assert_eq!(spec.cable_count(), 12);
        assert!(spec.cables.iter().all(|c| c.stiffness == 64.0));
        assert!(spec.all_zero_rest_length());
        assert!(validate_spec(&spec).is_empty());
        assert!(validate_spec(&taut_prism()).is_empty());
    }

    #[test]
    fn degenerate_cable_is_reported_once() {
        let mut spec = builtin_prism();
        spec.cables[3].node_b = spec.cables[3].node_a;
        let v = validate_spec(&spec);
        assert_eq!(v, vec![Violation::DegenerateCable { cable: 3, node: 3 }]);
        assert!(v[0].to_string().contains("cable 3"));
    }

    #[test]
    fn zero_length_strut_is_reported() {
        let mut spec = builtin_prism();
        spec.strut_lengths[2] = 0.0;
        let v = validate_spec(&spec);
        assert_eq!(
            v,
            vec![Violation::NonPositiveStrutLength {
                strut: 2,
                length: 0.0
            }]
        );
        assert!(v[0].to_string().contains("strut 2"));
    }

    #[test]
    fn out_of_range_and_bad_parameters() {
        let spec = StructureSpec {
            name: String::new(),
            strut_lengths: vec![1.0],
            cables: vec![CableSpec::new(0, 5, -1.0, -0.5)],
        };
        let v = validate_spec(&spec);
        assert_eq!(v.len(), 3);
        assert!(matches!(v[0], Violation::NodeOutOfRange { node: 5, .. }));
        assert!(matches!(v[1], Violation::NonPositiveStiffness { .. }));
        assert!(matches!(v[2], Violation::NegativeRestLength { .. }));
        assert!(matches!(
            build_connectivity(&spec),
            Err(Error::InvalidSpec(ref list)) if list.len() == 3
        ));
    }

    #[test]
    fn minimal_structure() {
        let spec = StructureSpec {
            name: "single".into(),
            strut_lengths: vec![0.5],
            cables: vec![],
        };
        let conn = build_connectivity(&spec).unwrap();
        assert_eq!(conn.cs().nrows(), 0);
        assert_eq!(conn.cb().nrows(), 1);
        assert_eq!(conn.cb()[(0, 0)], 1.0);
        assert_eq!(conn.cb()[(0, 1)], -1.0);
    }

    #[test]
    fn empty_strut_list_is_invalid() {
        let spec = StructureSpec {
            name: String::new(),
            strut_lengths: vec![],
            cables: vec![],
        };
        assert_eq!(validate_spec(&spec), vec![Violation::NoStruts]);
    }

    #[test]
    fn toml_round_trip() {
        let spec = taut_prism();
        let text = spec.to_toml_string().unwrap();
        assert!(text.contains("b0"));
        let back = StructureSpec::from_toml_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn toml_rest_length_defaults_to_zero() {
        let text = "name = \"pair\"\nstrut_lengths = [1.0, 1.0]\n\
                    [[cables]]\na = 0\nb = 1\nk = 10.0\n";
        let spec = StructureSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.cables[0].rest_length, 0.0);
        assert!(StructureSpec::from_toml_str("strut_lengths = 3").is_err());
    }
}
