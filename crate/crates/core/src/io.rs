//! Line-oriented text formats.
//!
//! Every record is one line of single-space separated decimal numbers with a
//! `.` radix, terminated by `\n`. Numbers are written in the shortest form
//! that parses back to the identical `f64`, so render followed by parse is
//! lossless. Files may also contain blank lines and `#` comment lines, which
//! readers skip.
//!
//! | record   | fields                                                   |
//! |----------|----------------------------------------------------------|
//! | frame    | `t phi_1 .. phi_m`                                       |
//! | estimate | `t converged energy x_1 y_1 z_1 .. x_n y_n z_n`          |
//! | truth    | `t px_1 py_1 pz_1 .. pz_m theta_1 .. theta_m phi_1 .. phi_m` |

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::estimator::ShapeEstimate;
use crate::kinematics::{ShapeState, Vec3};

/// Timestamped inclination measurements, one per strut.
#[derive(Debug, Clone, PartialEq)]
pub struct InclinationFrame {
    /// Seconds.
    pub timestamp: f64,
    /// Radians, each in `[0, pi]`.
    pub phis: Vec<f64>,
}

impl InclinationFrame {
    pub fn new(timestamp: f64, phis: Vec<f64>) -> Self {
        Self { timestamp, phis }
    }
}

/// Writes `value` so that parsing the text gives back the same bits.
pub fn push_number(out: &mut String, value: f64) {
    let magnitude = value.abs();
    if value == 0.0 || (1e-5..1e16).contains(&magnitude) || !value.is_finite() {
        let _ = write!(out, "{value}");
    } else {
        let _ = write!(out, "{value:e}");
    }
}

fn join_numbers(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        push_number(&mut out, v);
    }
    out
}

fn parse_numbers(line: &str, line_no: usize) -> Result<Vec<f64>> {
    line.split_ascii_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("'{tok}' is not a number"),
            })
        })
        .collect()
}

fn arity_error(line_no: usize, what: &str, expected: usize, actual: usize) -> Error {
    Error::Parse {
        line: line_no,
        reason: format!("{what} needs {expected} fields, found {actual}"),
    }
}

pub fn render_frame(frame: &InclinationFrame) -> String {
    join_numbers(std::iter::once(frame.timestamp).chain(frame.phis.iter().copied()))
}

/// Parses one frame line carrying `expected_arity` inclinations.
pub fn parse_frame(line: &str, expected_arity: usize, line_no: usize) -> Result<InclinationFrame> {
    let values = parse_numbers(line, line_no)?;
    if values.len() != expected_arity + 1 {
        return Err(arity_error(
            line_no,
            "frame",
            expected_arity + 1,
            values.len(),
        ));
    }
    let timestamp = values[0];
    if !timestamp.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("timestamp {timestamp} is not finite"),
        });
    }
    let phis = values[1..].to_vec();
    for (i, &phi) in phis.iter().enumerate() {
        if !(0.0..=std::f64::consts::PI).contains(&phi) {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("inclination {phi} of strut {i} is outside [0, pi]"),
            });
        }
    }
    Ok(InclinationFrame { timestamp, phis })
}

/// One emitted estimate as read back from text.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub timestamp: f64,
    pub converged: bool,
    pub energy: f64,
    pub nodes: Vec<Vec3>,
}

impl EstimateRecord {
    pub fn from_estimate(timestamp: f64, estimate: &ShapeEstimate) -> Self {
        Self {
            timestamp,
            converged: estimate.converged,
            energy: estimate.energy(),
            nodes: estimate.nodes.clone(),
        }
    }
}

pub fn render_estimate(record: &EstimateRecord) -> String {
    let head = [
        record.timestamp,
        if record.converged { 1.0 } else { 0.0 },
        record.energy,
    ];
    join_numbers(
        head.into_iter()
            .chain(record.nodes.iter().flat_map(|n| [n.x, n.y, n.z])),
    )
}

pub fn parse_estimate(line: &str, node_count: usize, line_no: usize) -> Result<EstimateRecord> {
    let values = parse_numbers(line, line_no)?;
    let expected = 3 + 3 * node_count;
    if values.len() != expected {
        return Err(arity_error(
            line_no,
            "estimate record",
            expected,
            values.len(),
        ));
    }
    let converged = match values[1] {
        1.0 => true,
        0.0 => false,
        v => {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("converged flag must be 0 or 1, found {v}"),
            })
        }
    };
    Ok(EstimateRecord {
        timestamp: values[0],
        converged,
        energy: values[2],
        nodes: values[3..]
            .chunks_exact(3)
            .map(|c| Vec3::new(c[0], c[1], c[2]))
            .collect(),
    })
}

/// Writes one estimate record line.
pub fn emit_estimate<W: Write>(
    sink: &mut W,
    timestamp: f64,
    estimate: &ShapeEstimate,
) -> Result<()> {
    let line = render_estimate(&EstimateRecord::from_estimate(timestamp, estimate));
    writeln!(sink, "{line}")?;
    Ok(())
}

/// Ground-truth record accompanying a simulated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub timestamp: f64,
    pub state: ShapeState,
}

pub fn render_truth(record: &TruthRecord) -> String {
    let s = &record.state;
    join_numbers(
        std::iter::once(record.timestamp)
            .chain(s.centers.iter().flat_map(|c| [c.x, c.y, c.z]))
            .chain(s.thetas.iter().copied())
            .chain(s.phis.iter().copied()),
    )
}

pub fn parse_truth(line: &str, strut_count: usize, line_no: usize) -> Result<TruthRecord> {
    let values = parse_numbers(line, line_no)?;
    let m = strut_count;
    let expected = 1 + 5 * m;
    if values.len() != expected {
        return Err(arity_error(line_no, "truth record", expected, values.len()));
    }
    let centers = values[1..1 + 3 * m]
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect();
    let thetas = values[1 + 3 * m..1 + 4 * m].to_vec();
    let phis = values[1 + 4 * m..].to_vec();
    Ok(TruthRecord {
        timestamp: values[0],
        state: ShapeState::new(centers, thetas, phis),
    })
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Content lines of a text stream with their 1-based line numbers.
pub fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if is_skippable(&l) => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(Error::Io(e))),
        })
}

/// Reads a whole frame file. Malformed lines are returned as errors in
/// place, so callers can count rejects and continue.
pub fn read_frames<R: BufRead>(reader: R, arity: usize) -> Result<Vec<Result<InclinationFrame>>> {
    let mut out = Vec::new();
    for item in content_lines(reader) {
        let (no, line) = item?;
        out.push(parse_frame(&line, arity, no));
    }
    Ok(out)
}

pub fn read_truth<R: BufRead>(reader: R, strut_count: usize) -> Result<Vec<TruthRecord>> {
    content_lines(reader)
        .map(|item| {
            let (no, line) = item?;
            parse_truth(&line, strut_count, no)
        })
        .collect()
}

pub fn read_estimates<R: BufRead>(reader: R, node_count: usize) -> Result<Vec<EstimateRecord>> {
    content_lines(reader)
        .map(|item| {
            let (no, line) = item?;
            parse_estimate(&line, node_count, no)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_table_inclinations() {
        let f = parse_frame("0.00 0.95 0.96 0.95 0.96", 4, 1).unwrap();
        assert_eq!(f.timestamp, 0.0);
        assert_eq!(f.phis, vec![0.95, 0.96, 0.95, 0.96]);
    }

    #[test]
    fn rejects_wrong_arity() {
        let e = parse_frame("0.0 0.5 0.5", 4, 7).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 7, .. }));
        assert!(e.to_string().contains("needs 5 fields"));
    }

    #[test]
    fn rejects_out_of_range_and_garbage() {
        let e = parse_frame("0.0 4.0 0.5 0.5 0.5", 4, 2).unwrap_err();
        assert!(e.to_string().contains("outside [0, pi]"));
        assert!(parse_frame("0.0 0.5 x 0.5 0.5", 4, 3).is_err());
        assert!(parse_frame("nan 0.5 0.5 0.5 0.5", 4, 3).is_err());
        assert!(parse_frame("0 NaN 0.5 0.5 0.5", 4, 3).is_err());
    }

    #[test]
    fn estimate_record_field_count() {
        let rec = EstimateRecord {
            timestamp: 1.5,
            converged: true,
            energy: 0.597,
            nodes: vec![Vec3::new(0.1, 0.2, 0.3); 8],
        };
        let line = render_estimate(&rec);
        assert_eq!(line.split(' ').count(), 1 + 1 + 1 + 24);
        assert_eq!(parse_estimate(&line, 8, 1).unwrap(), rec);
        assert!(parse_estimate(&line, 7, 1).is_err());
        assert!(parse_estimate(&line.replacen(" 1 ", " 2 ", 1), 8, 1).is_err());
    }

    #[test]
    fn reader_skips_comments_and_keeps_line_numbers() {
        let text = "# header\n0 0.1 0.2\n\n1 0.1\n2 0.3 0.4\n";
        let frames = read_frames(text.as_bytes(), 2).unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames[0].is_ok());
        assert!(matches!(frames[1], Err(Error::Parse { line: 4, .. })));
        assert_eq!(frames[2].as_ref().unwrap().timestamp, 2.0);
    }

    #[test]
    fn small_and_large_numbers_round_trip() {
        for v in [1e-300, -2.5e-7, 1e20, f64::MIN_POSITIVE, 0.1 + 0.2, -0.0] {
            let mut s = String::new();
            push_number(&mut s, v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn frames_round_trip(t in finite(), phis in prop::collection::vec(0.0..=PI, 1..8)) {
            let f = InclinationFrame::new(t, phis);
            let back = parse_frame(&render_frame(&f), f.phis.len(), 1).unwrap();
            prop_assert_eq!(back.timestamp.to_bits(), f.timestamp.to_bits());
            for (a, b) in back.phis.iter().zip(&f.phis) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn estimates_round_trip(t in finite(), e in finite(), c in any::<bool>(),
                                xs in prop::collection::vec(finite(), 24)) {
            let rec = EstimateRecord {
                timestamp: t,
                converged: c,
                energy: e,
                nodes: xs.chunks_exact(3).map(|v| Vec3::new(v[0], v[1], v[2])).collect(),
            };
            let back = parse_estimate(&render_estimate(&rec), 8, 1).unwrap();
            prop_assert_eq!(render_estimate(&back), render_estimate(&rec));
            prop_assert_eq!(back, rec);
        }
    }
}
