use std::io::Read;
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use tensegrity_core::io::render_frame;
use tensegrity_core::stream::{serve_ingest, LatestSlot, BUSY_MESSAGE};
use tensegrity_core::InclinationFrame;

fn lines(n: usize) -> Vec<String> {
    (0..n)
        .map(|k| {
            render_frame(&InclinationFrame::new(
                k as f64 * 0.02,
                vec![0.95, 0.96, 0.95, 0.96],
            ))
        })
        .collect()
}

/// Serves one session, draining the slot on the caller's side so that
/// nothing is overwritten, and returns (frames received, stats).
fn session(payload: Vec<String>) -> (usize, tensegrity_core::stream::IngestStats) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let slot = Arc::new(LatestSlot::new());
    let server = {
        let slot = Arc::clone(&slot);
        thread::spawn(move || serve_ingest(listener, 4, slot).unwrap())
    };
    let client = thread::spawn(move || {
        use std::io::Write;
        let mut s = TcpStream::connect(addr).unwrap();
        for l in payload {
            s.write_all(l.as_bytes()).unwrap();
            s.write_all(b"\n").unwrap();
            // paced so the reader below sees every frame
            thread::sleep(Duration::from_micros(300));
        }
    });
    let mut received = 0;
    while slot.take().is_some() {
        received += 1;
    }
    client.join().unwrap();
    let stats = server.join().unwrap();
    assert_eq!(received + slot.overwritten(), stats.accepted);
    (received + slot.overwritten(), stats)
}

#[test]
fn hundred_lines_hundred_frames() {
    let (frames, stats) = session(lines(100));
    assert_eq!(frames, 100);
    assert_eq!(stats.rejected(), 0);
}

#[test]
fn malformed_line_is_counted() {
    let mut payload = lines(100);
    payload[37] = "0.74 0.95 0.96".into();
    let (frames, stats) = session(payload);
    assert_eq!(frames, 99);
    assert_eq!(stats.malformed, 1);
}

#[test]
fn second_client_is_refused() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let slot = Arc::new(LatestSlot::new());
    let server = {
        let slot = Arc::clone(&slot);
        thread::spawn(move || serve_ingest(listener, 4, slot).unwrap())
    };
    let first = TcpStream::connect(addr).unwrap();
    thread::sleep(Duration::from_millis(50));
    let mut second = TcpStream::connect(addr).unwrap();
    second
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    let mut reply = String::new();
    second.read_to_string(&mut reply).unwrap();
    assert_eq!(reply, BUSY_MESSAGE);
    drop(first);
    let stats = server.join().unwrap();
    assert_eq!(stats.accepted, 0);
}
