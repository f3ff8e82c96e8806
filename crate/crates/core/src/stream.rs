//! Frame-by-frame tracking and line-protocol ingestion.
//!
//! The ingestion side and the solver side meet in a [`LatestSlot`]: ingestion
//! overwrites whole frames, the solver takes the newest one. A frame is moved
//! in and out under one lock, so the solver never sees a mix of two frames.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::estimator::{Estimator, ShapeEstimate};
use crate::io::{parse_frame, InclinationFrame};
use crate::kinematics::ShapeState;

/// Sent to a client that connects while another is being served.
pub const BUSY_MESSAGE: &str = "ERR busy: one client at a time\n";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub accepted: usize,
    pub malformed: usize,
    pub out_of_order: usize,
}

impl IngestStats {
    pub fn rejected(&self) -> usize {
        self.malformed + self.out_of_order
    }
}

/// Validates lines into frames, rejecting malformed ones and timestamps
/// that do not increase.
#[derive(Debug, Clone)]
pub struct FrameFilter {
    arity: usize,
    last_timestamp: Option<f64>,
    stats: IngestStats,
}

#[derive(Debug)]
pub enum LineOutcome {
    Frame(InclinationFrame),
    /// Blank or comment line.
    Skipped,
    Rejected(Error),
}

impl FrameFilter {
    pub fn new(arity: usize) -> Self {
        Self {
            arity,
            last_timestamp: None,
            stats: IngestStats::default(),
        }
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn accept_line(&mut self, line: &str, line_no: usize) -> LineOutcome {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return LineOutcome::Skipped;
        }
        match parse_frame(trimmed, self.arity, line_no) {
            Ok(frame) => {
                if self.last_timestamp.is_some_and(|t| frame.timestamp <= t) {
                    self.stats.out_of_order += 1;
                    LineOutcome::Rejected(Error::Parse {
                        line: line_no,
                        reason: format!(
                            "timestamp {} does not follow {}",
                            frame.timestamp,
                            self.last_timestamp.unwrap_or(f64::NAN)
                        ),
                    })
                } else {
                    self.last_timestamp = Some(frame.timestamp);
                    self.stats.accepted += 1;
                    LineOutcome::Frame(frame)
                }
            }
            Err(e) => {
                self.stats.malformed += 1;
                LineOutcome::Rejected(e)
            }
        }
    }
}

#[derive(Debug, Default)]
struct SlotState {
    frame: Option<InclinationFrame>,
    closed: bool,
    overwritten: usize,
}

/// Single-frame mailbox with overwrite semantics.
#[derive(Debug, Default)]
pub struct LatestSlot {
    state: Mutex<SlotState>,
    ready: Condvar,
}

impl LatestSlot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces any frame the solver has not taken yet.
    pub fn put(&self, frame: InclinationFrame) {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        if s.frame.replace(frame).is_some() {
            s.overwritten += 1;
        }
        self.ready.notify_one();
    }

    /// No more frames will arrive; a pending frame can still be taken.
    pub fn close(&self) {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        s.closed = true;
        self.ready.notify_all();
    }

    /// Blocks for the newest frame; `None` once closed and drained.
    pub fn take(&self) -> Option<InclinationFrame> {
        let mut s = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if let Some(f) = s.frame.take() {
                return Some(f);
            }
            if s.closed {
                return None;
            }
            s = self.ready.wait(s).unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Frames replaced before the solver saw them.
    pub fn overwritten(&self) -> usize {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .overwritten
    }
}

/// Reads lines into `slot` until end of input, then closes it. A partial
/// last line without its newline is discarded.
pub fn ingest_lines<R: BufRead>(reader: R, arity: usize, slot: &LatestSlot) -> Result<IngestStats> {
    let mut filter = FrameFilter::new(arity);
    let mut reader = reader;
    let mut buf = String::new();
    let mut line_no = 0;
    let outcome = loop {
        buf.clear();
        match reader.read_line(&mut buf) {
            Ok(0) => break Ok(()),
            Ok(_) => {
                line_no += 1;
                if !buf.ends_with('\n') {
                    break Ok(());
                }
                if let LineOutcome::Frame(f) = filter.accept_line(&buf, line_no) {
                    slot.put(f);
                }
            }
            Err(e) => break Err(Error::Io(e)),
        }
    };
    slot.close();
    outcome.map(|()| filter.stats())
}

/// Listens on `listener`, serves the first client into `slot` and returns
/// once it disconnects. Anyone connecting meanwhile receives
/// [`BUSY_MESSAGE`] and is dropped.
pub fn serve_ingest(
    listener: TcpListener,
    arity: usize,
    slot: Arc<LatestSlot>,
) -> Result<IngestStats> {
    let (client, _) = listener.accept()?;
    let done = Arc::new(AtomicBool::new(false));
    let refuser = {
        let listener = listener.try_clone()?;
        let done = Arc::clone(&done);
        listener.set_nonblocking(true)?;
        thread::spawn(move || {
            while !done.load(Ordering::Acquire) {
                match listener.accept() {
                    Ok((mut extra, _)) => {
                        let _ = extra.set_nonblocking(false);
                        let _ = extra.write_all(BUSY_MESSAGE.as_bytes());
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        })
    };
    let stats = ingest_lines(BufReader::new(client), arity, &slot);
    done.store(true, Ordering::Release);
    let _ = refuser.join();
    stats
}

/// Connects to `addr` and sends `lines`, each terminated by a newline.
pub fn send_lines(addr: &str, lines: &[String]) -> Result<()> {
    let mut stream = TcpStream::connect(addr)?;
    for line in lines {
        stream.write_all(line.as_bytes())?;
        stream.write_all(b"\n")?;
    }
    stream.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerConfig {
    /// Step budget for a solve started from the previous frame's shape.
    pub warm_steps: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self { warm_steps: 50 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackStats {
    pub estimated: usize,
    pub cold_starts: usize,
    /// Frames for which every start was degenerate.
    pub degenerate: usize,
}

/// Estimates a sequence of frames, each starting from the previous answer.
/// The first frame, and any frame whose warm solve degenerates, uses the
/// estimator's multi-start instead.
#[derive(Debug, Clone)]
pub struct Tracker {
    estimator: Estimator,
    config: TrackerConfig,
    previous: Option<ShapeState>,
    stats: TrackStats,
}

impl Tracker {
    pub fn new(estimator: Estimator, config: TrackerConfig) -> Self {
        Self {
            estimator,
            config,
            previous: None,
            stats: TrackStats::default(),
        }
    }

    pub fn stats(&self) -> TrackStats {
        self.stats
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    /// `Ok(None)` when the frame could not be estimated without degeneracy.
    pub fn process(&mut self, frame: &InclinationFrame) -> Result<Option<ShapeEstimate>> {
        if let Some(prev) = &self.previous {
            let mut start = prev.clone();
            start.phis = frame.phis.clone();
            start.check(self.estimator.spec())?;
            let est = self.estimator.solve_from(start, self.config.warm_steps)?;
            if !est.is_degenerate() && est.singular.is_none() {
                return Ok(Some(self.keep(est)));
            }
        }
        self.stats.cold_starts += 1;
        match self.estimator.estimate(&frame.phis, None) {
            Ok(est) => Ok(Some(self.keep(est))),
            Err(Error::AllDegenerate { .. }) => {
                self.stats.degenerate += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn keep(&mut self, est: ShapeEstimate) -> ShapeEstimate {
        self.previous = Some(est.state.clone());
        self.stats.estimated += 1;
        est
    }
}

/// Drains `slot` through `tracker`, passing each result to `sink`.
pub fn run_solver<F>(tracker: &mut Tracker, slot: &LatestSlot, mut sink: F) -> Result<()>
where
    F: FnMut(&InclinationFrame, Option<&ShapeEstimate>) -> Result<()>,
{
    while let Some(frame) = slot.take() {
        let est = tracker.process(&frame)?;
        sink(&frame, est.as_ref())?;
    }
    Ok(())
}

/// Estimates every valid line of `reader` in order, without skipping. Used
/// for recorded streams, where nothing is gained by dropping frames.
pub fn track_lines<R, F>(reader: R, tracker: &mut Tracker, mut sink: F) -> Result<IngestStats>
where
    R: BufRead,
    F: FnMut(&InclinationFrame, Option<&ShapeEstimate>) -> Result<()>,
{
    let mut filter = FrameFilter::new(tracker.estimator().spec().strut_count());
    for (i, line) in reader.lines().enumerate() {
        if let LineOutcome::Frame(frame) = filter.accept_line(&line?, i + 1) {
            let est = tracker.process(&frame)?;
            sink(&frame, est.as_ref())?;
        }
    }
    Ok(filter.stats())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::render_frame;

    fn line(t: f64) -> String {
        render_frame(&InclinationFrame::new(t, vec![0.95, 0.96, 0.95, 0.96]))
    }

    #[test]
    fn filter_counts_rejects() {
        let mut f = FrameFilter::new(4);
        assert!(matches!(
            f.accept_line(&line(0.0), 1),
            LineOutcome::Frame(_)
        ));
        assert!(matches!(
            f.accept_line("0.1 0.5 0.5", 2),
            LineOutcome::Rejected(_)
        ));
        assert!(matches!(
            f.accept_line(&line(0.0), 3),
            LineOutcome::Rejected(_)
        ));
        assert!(matches!(f.accept_line("# note", 4), LineOutcome::Skipped));
        assert!(matches!(
            f.accept_line(&line(0.2), 5),
            LineOutcome::Frame(_)
        ));
        let s = f.stats();
        assert_eq!(
            (s.accepted, s.malformed, s.out_of_order, s.rejected()),
            (2, 1, 1, 2)
        );
    }

    #[test]
    fn slot_keeps_only_the_newest() {
        let slot = LatestSlot::new();
        for t in 0..5 {
            slot.put(InclinationFrame::new(t as f64, vec![0.5]));
        }
        slot.close();
        assert_eq!(slot.take().unwrap().timestamp, 4.0);
        assert!(slot.take().is_none());
        assert_eq!(slot.overwritten(), 4);
    }

    #[test]
    fn partial_last_line_is_dropped() {
        let text = format!("{}\n{}", line(0.0), line(1.0));
        let slot = LatestSlot::new();
        let stats = ingest_lines(text.as_bytes(), 4, &slot).unwrap();
        assert_eq!(stats.accepted, 1);
        assert_eq!(slot.take().unwrap().timestamp, 0.0);
    }

    #[test]
    fn frames_are_never_torn() {
        let slot = Arc::new(LatestSlot::new());
        let writer = {
            let slot = Arc::clone(&slot);
            thread::spawn(move || {
                for k in 0..20_000 {
                    let v = k as f64;
                    slot.put(InclinationFrame::new(v, vec![v; 8]));
                }
                slot.close();
            })
        };
        let mut last = -1.0;
        while let Some(f) = slot.take() {
            assert!(f.phis.iter().all(|&p| p == f.timestamp));
            assert!(f.timestamp > last);
            last = f.timestamp;
        }
        writer.join().unwrap();
        assert_eq!(last, 19_999.0);
    }
}
