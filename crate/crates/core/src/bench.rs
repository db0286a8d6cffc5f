//! Wall-clock timings of the covariance and eigen-decomposition kernels.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dimred::{covariance, eigen_sym};
use crate::error::Result;
use crate::rng::PathRng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSizes {
    pub cov_rows: usize,
    pub cov_dim: usize,
    pub eigen_dim: usize,
}

impl Default for BenchSizes {
    fn default() -> Self {
        Self {
            cov_rows: 32768,
            cov_dim: 1024,
            eigen_dim: 1024,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub name: String,
    pub rows: usize,
    pub dim: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub sizes: BenchSizes,
    pub threads: usize,
    pub timings: Vec<Timing>,
    /// Skipped measurements and why.
    pub notes: Vec<String>,
}

/// Available memory in bytes, when the platform reports it.
fn available_memory() -> Option<u64> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn fits_in_memory(bytes: u64) -> bool {
    available_memory().is_none_or(|avail| 2 * bytes <= avail)
}

fn time<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Times `covariance` on a random `cov_rows x cov_dim` matrix, and the
/// Jacobi solver and nalgebra's symmetric eigen-solver on a random
/// `eigen_dim` covariance.
pub fn run(sizes: BenchSizes, seed: u64) -> Result<BenchReport> {
    let mut report = BenchReport {
        sizes,
        threads: rayon::current_num_threads(),
        timings: Vec::new(),
        notes: Vec::new(),
    };
    let (m, n) = (sizes.cov_rows, sizes.cov_dim);
    let cov_bytes = (m * n + 2 * n * n) as u64 * 8;
    if fits_in_memory(cov_bytes) {
        let mut rng = PathRng::new(seed, 0, 0);
        let rows = DMatrix::from_fn(m, n, |_, _| rng.normal());
        let (_, secs) = time(|| covariance(&rows, false))?;
        report.timings.push(Timing {
            name: "covariance".into(),
            rows: m,
            dim: n,
            seconds: secs,
        });
    } else {
        report.notes.push(format!("covariance skipped: needs about {} MiB", cov_bytes >> 20));
    }

    let k = sizes.eigen_dim;
    let eig_bytes = (8 * k * k) as u64 * 8;
    if fits_in_memory(eig_bytes) {
        let mut rng = PathRng::new(seed, 1, 0);
        let a = DMatrix::from_fn(2 * k, k, |_, _| rng.normal());
        let c = covariance(&a, false)?;
        let (_, secs) = time(|| eigen_sym(&c))?;
        report.timings.push(Timing {
            name: "eigen_jacobi".into(),
            rows: k,
            dim: k,
            seconds: secs,
        });
        let (_, secs) = time(|| Ok(c.clone().symmetric_eigen()))?;
        report.timings.push(Timing {
            name: "eigen_nalgebra".into(),
            rows: k,
            dim: k,
            seconds: secs,
        });
    } else {
        report.notes.push(format!("eigen skipped: needs about {} MiB", eig_bytes >> 20));
    }
    Ok(report)
}
