//! Wall-clock inference timing and an optional RSS sampling meter.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crate::records::mean_std;

/// Times `run` over the full evaluation pass: two warm-up passes excluded,
/// then `repeats` measured passes. Returns (mean, std) in seconds.
pub fn measure_inference(run: &mut dyn FnMut(), repeats: usize) -> (f64, f64) {
    for _ in 0..2 {
        run();
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        run();
        samples.push(t0.elapsed().as_secs_f64());
    }
    mean_std(&samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeterKind {
    None,
    RssSampler,
    External,
}

/// One resident-set sample; timestamps are monotone by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterSample {
    pub elapsed: Duration,
    pub rss_bytes: u64,
}

/// Background sampler polling `/proc/self/status` VmRSS every 50 ms.
/// Platform-dependent: on systems without procfs it reports nothing.
pub struct RssMeter {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<Vec<MeterSample>>>,
}

fn read_vm_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    for line in status.lines() {
        if let Some(rest) = line.strip_prefix("VmRSS:") {
            let kb: u64 = rest.trim().trim_end_matches("kB").trim().parse().ok()?;
            return Some(kb * 1024);
        }
    }
    None
}

impl RssMeter {
    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let begin = Instant::now();
            let mut samples = Vec::new();
            while !flag.load(Ordering::Relaxed) {
                if let Some(rss) = read_vm_rss_bytes() {
                    samples.push(MeterSample {
                        elapsed: begin.elapsed(),
                        rss_bytes: rss,
                    });
                }
                std::thread::sleep(Duration::from_millis(50));
            }
            samples
        });
        Self {
            stop,
            handle: Some(handle),
        }
    }

    /// Stops sampling; returns the peak RSS seen, if any.
    pub fn stop(mut self) -> (Option<u64>, Vec<MeterSample>) {
        self.stop.store(true, Ordering::Relaxed);
        let samples = self
            .handle
            .take()
            .and_then(|h| h.join().ok())
            .unwrap_or_default();
        let peak = samples.iter().map(|s| s.rss_bytes).max();
        (peak, samples)
    }
}

impl Drop for RssMeter {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
