//! Files, command line and HTTP service around `shapenergy-core`.
//!
//! On-disk layout of a dataset directory: `manifest.json`, `labels.csv` and one
//! `img_<id>.pgm` per sample. A training run directory holds `run.json`, a
//! `checkpoint/` (JSON manifest plus little-endian `params.bin`), the training history,
//! metrics and per-sample predictions.

pub mod checkpoint;
pub mod cli;
pub mod epw;
pub mod error;
pub mod pgm;
pub mod report;
pub mod serve;
pub mod store;

pub use error::{Error, Result};

use std::time::Instant;

/// Version stamped into every manifest and HTTP response.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Wall clock for step timing.
#[derive(Clone, Copy, Debug)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for StdClock {
    fn default() -> Self {
        Self::new()
    }
}

impl shapenergy_core::train::Clock for StdClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Lower-case hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
