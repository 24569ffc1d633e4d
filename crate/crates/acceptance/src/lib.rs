//! Shared harness for the acceptance criteria in `tests/acceptance.rs`.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use batchelor_core::geometry::TorusSegment;
use batchelor_core::torus::{ConeKind, ConeSpec, MapParams, TorusPoint};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Map parameters for a valid `a`.
pub fn p(a: f64) -> MapParams<f64> {
    MapParams::new(a).unwrap()
}

static SERIAL: Mutex<()> = Mutex::new(());

/// Criteria run one at a time so each wall-time budget is measured without contention.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Print the criterion line and fail the test unless it passed within `budget`.
pub fn report(n: u32, pass: bool, started: Instant, budget: Duration, detail: String) {
    let elapsed = started.elapsed();
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    // Written to the raw handle so the line shows without --nocapture.
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n}: {} {detail} [{:.1}s of {:.0}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(ok, "criterion {n} failed: {detail}");
}

/// Random segment in the stable cone with length in `(0, max_len]`.
pub fn random_stable(rng: &mut ChaCha8Rng, q: &MapParams<f64>, max_len: f64) -> TorusSegment<f64> {
    let cone = ConeSpec::standard(ConeKind::Stable, q);
    let anchor = TorusPoint::new(rng.gen(), rng.gen());
    let len = max_len * (1.0 - rng.gen::<f64>());
    TorusSegment::new(anchor, cone.vector(rng.gen_range(-1.0..=1.0)), len)
}
