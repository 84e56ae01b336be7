//! Splitting mechanisms.
//!
//! A mechanism is a finite law over entries; entry `j` is chosen with
//! probability `q_j` and produces `r(j) = weights.len()` offspring, the `i`-th
//! receiving its parent's weight times `weights[i]`. The resulting estimator is
//! unbiased exactly when `E[sum_i w_i(M)] = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::uniform;
use crate::{Error, Result};

/// Tolerance used when checking that probabilities sum to one.
pub const PROBABILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismEntry {
    pub probability: f64,
    pub weights: Vec<f64>,
}

impl MechanismEntry {
    pub fn offspring(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMechanism")]
pub struct SplittingMechanism {
    entries: Vec<MechanismEntry>,
    bound: usize,
}

#[derive(Deserialize)]
struct RawMechanism {
    entries: Vec<MechanismEntry>,
    bound: usize,
}

impl TryFrom<RawMechanism> for SplittingMechanism {
    type Error = Error;
    fn try_from(raw: RawMechanism) -> Result<Self> {
        SplittingMechanism::new(raw.entries, raw.bound)
    }
}

impl SplittingMechanism {
    pub fn new(entries: Vec<MechanismEntry>, bound: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidMechanism("no entries".into()));
        }
        let mut total = 0.0;
        for (j, e) in entries.iter().enumerate() {
            if !(e.probability.is_finite() && e.probability >= 0.0) {
                return Err(Error::InvalidMechanism(format!("entry {j}: bad probability {}", e.probability)));
            }
            if e.offspring() > bound {
                return Err(Error::InvalidMechanism(format!(
                    "entry {j}: {} offspring exceeds bound {bound}",
                    e.offspring()
                )));
            }
            if e.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(Error::InvalidMechanism(format!("entry {j}: weights must be nonnegative")));
            }
            total += e.probability;
        }
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::InvalidMechanism(format!("probabilities sum to {total}")));
        }
        Ok(Self { entries, bound })
    }

    /// Two-point law with mean offspring `u` and every weight `1/u`:
    /// `ceil(u)` offspring with probability `u - floor(u)`, otherwise
    /// `floor(u)`. Integer `u` gives a single deterministic entry.
    pub fn canonical(u: f64) -> Result<Self> {
        if !(u.is_finite() && u >= 1.0) {
            return Err(Error::InvalidMechanism(format!("canonical mechanism needs u >= 1, got {u}")));
        }
        let lo = libm::floor(u);
        let hi = libm::ceil(u);
        let w = 1.0 / u;
        let entry = |count: f64, probability: f64| MechanismEntry { probability, weights: vec![w; count as usize] };
        let entries = if lo == hi { vec![entry(lo, 1.0)] } else { vec![entry(hi, u - lo), entry(lo, hi - u)] };
        Ok(Self { entries, bound: hi as usize })
    }

    pub fn entries(&self) -> &[MechanismEntry] {
        &self.entries
    }

    /// A priori bound on the offspring count.
    pub fn bound(&self) -> usize {
        self.bound
    }

    /// `E[sum_i w_i(M)]`.
    pub fn expected_total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.probability * e.weights.iter().sum::<f64>()).sum()
    }

    pub fn is_unbiased(&self, tol: f64) -> bool {
        (self.expected_total_weight() - 1.0).abs() <= tol
    }

    /// `E[r(M)]`.
    pub fn mean_offspring(&self) -> f64 {
        self.entries.iter().map(|e| e.probability * e.offspring() as f64).sum()
    }

    /// `E[sum_i w_i(M)^2]`.
    pub fn weight_second_moment(&self) -> f64 {
        self.entries.iter().map(|e| e.probability * e.weights.iter().map(|w| w * w).sum::<f64>()).sum()
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> &MechanismEntry {
        if self.entries.len() == 1 {
            return &self.entries[0];
        }
        let mut u = uniform(rng);
        for e in &self.entries[..self.entries.len() - 1] {
            if u < e.probability {
                return e;
            }
            u -= e.probability;
        }
        &self.entries[self.entries.len() - 1]
    }
}
