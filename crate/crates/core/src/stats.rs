//! Aggregation of run samples.
//!
//! Sums are taken in run-index order with compensated summation, so a batch
//! summarizes to the same bits however its runs were scheduled or ordered.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::SampleRecord;
use crate::{Error, Result};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Completed (uncapped) runs.
    pub runs: usize,
    pub capped: usize,
    /// Mean, standard deviation and maximum of the per-run peak population.
    pub avg_particles: f64,
    pub sd_particles: f64,
    pub max_particles: usize,
    /// Filled in by the caller that timed the batch.
    pub wall_time_s: f64,
}

/// Neumaier-compensated sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mut s = CompensatedSum::default();
    xs.iter().for_each(|&x| s.add(x));
    let mean = s.value() / k;
    let mut ss = CompensatedSum::default();
    xs.iter().for_each(|&x| ss.add((x - mean) * (x - mean)));
    let sd = if xs.len() > 1 { libm::sqrt(ss.value() / (k - 1.0)) } else { 0.0 };
    (mean, sd)
}

fn completed(records: &[SampleRecord]) -> Vec<&SampleRecord> {
    let mut done: Vec<&SampleRecord> = records.iter().filter(|r| r.estimate.is_some()).collect();
    done.sort_by_key(|r| r.run);
    done
}

pub fn summarize(records: &[SampleRecord]) -> Result<EstimateSummary> {
    let done = completed(records);
    let capped = records.len() - done.len();
    if done.is_empty() && capped > 0 {
        return Err(Error::Unstable { capped });
    }
    if done.len() < 2 {
        return Err(Error::InsufficientData(format!("{} completed runs, need at least 2", done.len())));
    }
    let samples: Vec<f64> = done.iter().map(|r| r.estimate.unwrap_or(0.0)).collect();
    let (estimate, sd) = mean_and_sd(&samples);
    let std_error = sd / libm::sqrt(samples.len() as f64);
    let peaks: Vec<f64> = done.iter().map(|r| r.max_population as f64).collect();
    let (avg_particles, sd_particles) = mean_and_sd(&peaks);
    Ok(EstimateSummary {
        estimate,
        std_error,
        ci_low: estimate - Z_95 * std_error,
        ci_high: estimate + Z_95 * std_error,
        runs: samples.len(),
        capped,
        avg_particles,
        sd_particles,
        max_particles: done.iter().map(|r| r.max_population).max().unwrap_or(0),
        wall_time_s: 0.0,
    })
}

/// Least-squares slope of `-log p` against `n`.
pub fn decay_rate(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("decay rate needs at least two points".into()));
    }
    if let Some(&(n, p)) = points.iter().find(|(_, p)| p.is_nan() || *p <= 0.0) {
        return Err(Error::InsufficientData(format!("nonpositive estimate {p} at n = {n}")));
    }
    let k = points.len() as f64;
    let xm = points.iter().map(|p| p.0).sum::<f64>() / k;
    let ym = points.iter().map(|p| -libm::log(p.1)).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - xm) * (-libm::log(p.1) - ym)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all points share the same n".into()));
    }
    Ok(sxy / sxx)
}

/// `-(1/n) log(mean of s^2)` over completed runs.
pub fn second_moment_rate(records: &[SampleRecord], n: u32) -> Result<f64> {
    let done = completed(records);
    if done.len() < 2 {
        return Err(Error::InsufficientData(format!("{} completed runs, need at least 2", done.len())));
    }
    let mut s = CompensatedSum::default();
    for r in &done {
        let x = r.estimate.unwrap_or(0.0);
        s.add(x * x);
    }
    let m2 = s.value() / done.len() as f64;
    if m2.is_nan() || m2 <= 0.0 {
        return Err(Error::InsufficientData("every sample is zero".into()));
    }
    Ok(-libm::log(m2) / n as f64)
}
