//! Markov chain models.
//!
//! The continuous-time queueing networks are simulated through their embedded
//! jump chains: every step is one transition, chosen with probability
//! proportional to its rate among the transitions enabled in the current
//! state. Hitting probabilities are unchanged by this time change.
//!
//! Four families are supported:
//!
//! * a two-station tandem Jackson network whose queues share one buffer
//!   (target: total population reaches `n`),
//! * the same network with separate buffers (target: both queues reach `n`),
//! * a tandem network whose rates are modulated by a two-state switching
//!   process, with either buffer arrangement,
//! * the partial sums of i.i.d. bivariate standard normals, where the target
//!   is a union of half-spaces for the sample mean after `n` steps.
//!
//! Queueing problems ask for the probability of reaching the target before the
//! network empties. From the empty state the only possible event is an
//! arrival, so runs start at the post-arrival state `(1, 0)` and the taboo set
//! is the empty network.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Deref;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::rng::{standard_normal_pair, uniform};
use crate::{Error, Result};

/// Arrival and service rates of a two-station tandem network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TandemRates {
    pub lambda: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl TandemRates {
    pub const fn new(lambda: f64, mu1: f64, mu2: f64) -> Self {
        Self { lambda, mu1, mu2 }
    }

    fn validate(&self, what: &str) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu1", self.mu1), ("mu2", self.mu2)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidModel(format!("{what}{name} must be positive, got {v}")));
            }
        }
        if self.lambda >= self.mu1.min(self.mu2) {
            return Err(Error::InvalidModel(format!(
                "{what}network is unstable: lambda {} >= min(mu1, mu2) {}",
                self.lambda,
                self.mu1.min(self.mu2)
            )));
        }
        Ok(())
    }

    /// `log(mu_i / lambda)` for both stations.
    pub fn log_ratios(&self) -> [f64; 2] {
        [libm::log(self.mu1 / self.lambda), libm::log(self.mu2 / self.lambda)]
    }
}

/// Rates in force while the modulating process is in one of its states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRates {
    pub rates: TandemRates,
    /// Rate of leaving this modulation state.
    pub switch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Buffer {
    /// Target: `x1 + x2 >= n`.
    Shared,
    /// Target: `x1 >= n` and `x2 >= n`.
    Separate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum ModelKind {
    Tandem { rates: TandemRates, buffer: Buffer },
    Modulated { modes: [ModeRates; 2], buffer: Buffer, initial_mode: u8 },
    GaussianMean { normals: Vec<[f64; 2]> },
}

/// Family tag, as used in configuration files and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    TandemShared,
    TandemSeparate,
    ModulatedTandem,
    GaussianMean,
}

/// A validated model together with its large-deviation parameter `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    kind: ModelKind,
    n: u32,
}

/// A point of the underlying chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelState {
    Tandem { x1: u32, x2: u32 },
    Modulated { x1: u32, x2: u32, mode: u8 },
    Gaussian { sum: [f64; 2], step: u32 },
}

/// Small fixed-capacity vector of scaled coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; 3],
    dim: usize,
}

impl Point {
    pub fn new(values: &[f64]) -> Self {
        assert!(values.len() <= 3, "points have at most three coordinates");
        let mut coords = [0.0; 3];
        coords[..values.len()].copy_from_slice(values);
        Self { coords, dim: values.len() }
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.coords[..self.dim]
    }
}

/// Outgoing transitions of a state of a finite-jump model.
#[derive(Debug, Clone, Copy)]
pub struct Transitions {
    items: [(ModelState, f64); 4],
    len: usize,
    total: f64,
}

impl Transitions {
    fn new() -> Self {
        Self { items: [(ModelState::Tandem { x1: 0, x2: 0 }, 0.0); 4], len: 0, total: 0.0 }
    }

    fn push(&mut self, to: ModelState, rate: f64) {
        self.items[self.len] = (to, rate);
        self.len += 1;
        self.total += rate;
    }

    /// Total rate out of the state.
    pub fn total_rate(&self) -> f64 {
        self.total
    }

    /// Target states with their raw rates.
    pub fn rates(&self) -> &[(ModelState, f64)] {
        &self.items[..self.len]
    }

    /// Target states with embedded-chain probabilities.
    pub fn probabilities(&self) -> impl Iterator<Item = (ModelState, f64)> + '_ {
        self.rates().iter().map(move |&(s, r)| (s, r / self.total))
    }

    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> ModelState {
        let mut u = uniform(rng) * self.total;
        for &(s, r) in &self.items[..self.len - 1] {
            if u < r {
                return s;
            }
            u -= r;
        }
        self.items[self.len - 1].0
    }
}

fn tandem_moves(t: &mut Transitions, x1: u32, x2: u32, rates: &TandemRates, wrap: impl Fn(u32, u32) -> ModelState) {
    t.push(wrap(x1 + 1, x2), rates.lambda);
    if x1 > 0 {
        t.push(wrap(x1 - 1, x2 + 1), rates.mu1);
    }
    if x2 > 0 {
        t.push(wrap(x1, x2 - 1), rates.mu2);
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidModel("n must be at least 1".into()));
        }
        match &kind {
            ModelKind::Tandem { rates, .. } => rates.validate("")?,
            ModelKind::Modulated { modes, initial_mode, .. } => {
                for (i, m) in modes.iter().enumerate() {
                    m.rates.validate(&format!("mode {}: ", i + 1))?;
                    if !(m.switch.is_finite() && m.switch > 0.0) {
                        return Err(Error::InvalidModel(format!(
                            "mode {}: switch rate must be positive, got {}",
                            i + 1,
                            m.switch
                        )));
                    }
                }
                if !matches!(initial_mode, 1 | 2) {
                    return Err(Error::InvalidModel(format!("initial_mode must be 1 or 2, got {initial_mode}")));
                }
            }
            ModelKind::GaussianMean { normals } => {
                if normals.is_empty() {
                    return Err(Error::InvalidModel("at least one half-space normal is required".into()));
                }
                for p in normals {
                    if !(p[0].is_finite() && p[1].is_finite()) || p[0] == 0.0 && p[1] == 0.0 {
                        return Err(Error::InvalidModel(format!("invalid half-space normal {p:?}")));
                    }
                }
            }
        }
        Ok(Self { kind, n })
    }

    pub fn tandem_shared(rates: TandemRates, n: u32) -> Result<Self> {
        Self::new(ModelKind::Tandem { rates, buffer: Buffer::Shared }, n)
    }

    pub fn tandem_separate(rates: TandemRates, n: u32) -> Result<Self> {
        Self::new(ModelKind::Tandem { rates, buffer: Buffer::Separate }, n)
    }

    pub fn modulated(modes: [ModeRates; 2], buffer: Buffer, n: u32) -> Result<Self> {
        Self::new(ModelKind::Modulated { modes, buffer, initial_mode: 1 }, n)
    }

    pub fn gaussian_mean(normals: Vec<[f64; 2]>, n: u32) -> Result<Self> {
        Self::new(ModelKind::GaussianMean { normals }, n)
    }

    /// Same model with a different `n`.
    pub fn with_n(&self, n: u32) -> Result<Self> {
        Self::new(self.kind.clone(), n)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn family(&self) -> Family {
        match &self.kind {
            ModelKind::Tandem { buffer: Buffer::Shared, .. } => Family::TandemShared,
            ModelKind::Tandem { buffer: Buffer::Separate, .. } => Family::TandemSeparate,
            ModelKind::Modulated { .. } => Family::ModulatedTandem,
            ModelKind::GaussianMean { .. } => Family::GaussianMean,
        }
    }

    /// Dimension of [`ModelSpec::scaled_position`].
    pub fn dimension(&self) -> usize {
        match self.kind {
            ModelKind::GaussianMean { .. } => 3,
            _ => 2,
        }
    }

    pub fn start_state(&self) -> ModelState {
        match &self.kind {
            ModelKind::Tandem { .. } => ModelState::Tandem { x1: 1, x2: 0 },
            ModelKind::Modulated { initial_mode, .. } => ModelState::Modulated { x1: 1, x2: 0, mode: *initial_mode },
            ModelKind::GaussianMean { .. } => ModelState::Gaussian { sum: [0.0, 0.0], step: 0 },
        }
    }

    fn buffer_hit(buffer: Buffer, x1: u32, x2: u32, n: u32) -> bool {
        match buffer {
            Buffer::Shared => x1 + x2 >= n,
            Buffer::Separate => x1 >= n && x2 >= n,
        }
    }

    fn gaussian_hit(normals: &[[f64; 2]], sum: &[f64; 2], n: u32) -> bool {
        let nf = n as f64;
        normals.iter().any(|p| p[0] * sum[0] / nf + p[1] * sum[1] / nf >= 1.0)
    }

    /// Membership in the target set `B`.
    pub fn in_target(&self, state: &ModelState) -> bool {
        match (&self.kind, state) {
            (ModelKind::Tandem { buffer, .. }, ModelState::Tandem { x1, x2 })
            | (ModelKind::Modulated { buffer, .. }, ModelState::Modulated { x1, x2, .. }) => {
                Self::buffer_hit(*buffer, *x1, *x2, self.n)
            }
            (ModelKind::GaussianMean { normals }, ModelState::Gaussian { sum, step }) => {
                *step == self.n && Self::gaussian_hit(normals, sum, self.n)
            }
            _ => false,
        }
    }

    /// Membership in the taboo set `A`.
    pub fn in_taboo(&self, state: &ModelState) -> bool {
        match (&self.kind, state) {
            (ModelKind::Tandem { .. }, ModelState::Tandem { x1: 0, x2: 0 })
            | (ModelKind::Modulated { .. }, ModelState::Modulated { x1: 0, x2: 0, .. }) => {
                // The empty network is never in B because n >= 1.
                true
            }
            (ModelKind::GaussianMean { normals }, ModelState::Gaussian { sum, step }) => {
                *step == self.n && !Self::gaussian_hit(normals, sum, self.n)
            }
            _ => false,
        }
    }

    pub fn is_absorbed(&self, state: &ModelState) -> bool {
        self.in_target(state) || self.in_taboo(state)
    }

    /// Coordinates divided by `n`. The modulation state is not exposed; the
    /// Gaussian model appends the scaled time `j / n`.
    pub fn scaled_position(&self, state: &ModelState) -> Point {
        let nf = self.n as f64;
        match state {
            ModelState::Tandem { x1, x2 } | ModelState::Modulated { x1, x2, .. } => {
                Point::new(&[*x1 as f64 / nf, *x2 as f64 / nf])
            }
            ModelState::Gaussian { sum, step } => Point::new(&[sum[0] / nf, sum[1] / nf, *step as f64 / nf]),
        }
    }

    fn check_state(&self, state: &ModelState) -> Result<()> {
        let ok = match (&self.kind, state) {
            (ModelKind::Tandem { .. }, ModelState::Tandem { .. }) => true,
            (ModelKind::Modulated { .. }, ModelState::Modulated { mode, .. }) => matches!(mode, 1 | 2),
            (ModelKind::GaussianMean { .. }, ModelState::Gaussian { step, .. }) => *step <= self.n,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::StateMismatch)
        }
    }

    /// Enabled transitions out of a state of a queueing model, ignoring
    /// absorption. Gaussian states have a continuous law and are rejected.
    pub fn transitions(&self, state: &ModelState) -> Result<Transitions> {
        self.check_state(state)?;
        let mut t = Transitions::new();
        match (&self.kind, *state) {
            (ModelKind::Tandem { rates, .. }, ModelState::Tandem { x1, x2 }) => {
                tandem_moves(&mut t, x1, x2, rates, |x1, x2| ModelState::Tandem { x1, x2 });
            }
            (ModelKind::Modulated { modes, .. }, ModelState::Modulated { x1, x2, mode }) => {
                let m = &modes[mode as usize - 1];
                tandem_moves(&mut t, x1, x2, &m.rates, |x1, x2| ModelState::Modulated { x1, x2, mode });
                t.push(ModelState::Modulated { x1, x2, mode: 3 - mode }, m.switch);
            }
            _ => return Err(Error::Unsupported("gaussian model has no finite transition list".into())),
        }
        Ok(t)
    }

    /// One step of the embedded chain.
    pub fn step<R: RngCore + ?Sized>(&self, state: &ModelState, rng: &mut R) -> Result<ModelState> {
        self.check_state(state)?;
        if self.is_absorbed(state) {
            return Err(Error::AbsorbedState);
        }
        Ok(self.step_unchecked(state, rng))
    }

    /// [`ModelSpec::step`] without the contract checks; the engine calls this
    /// on states it already knows to be live.
    #[inline]
    pub(crate) fn step_unchecked<R: RngCore + ?Sized>(&self, state: &ModelState, rng: &mut R) -> ModelState {
        match (&self.kind, *state) {
            (ModelKind::GaussianMean { .. }, ModelState::Gaussian { sum, step }) => {
                let z = standard_normal_pair(rng);
                ModelState::Gaussian { sum: [sum[0] + z[0], sum[1] + z[1]], step: step + 1 }
            }
            _ => match self.transitions(state) {
                Ok(t) => t.sample(rng),
                Err(_) => unreachable!("state family checked by caller"),
            },
        }
    }

    /// Large-deviation decay rate `W` of the hitting probability from the
    /// origin, where it is known in closed form.
    pub fn decay_rate_at_origin(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Tandem { rates, buffer: Buffer::Shared } => {
                let [r1, r2] = rates.log_ratios();
                Some(r1.min(r2))
            }
            ModelKind::Tandem { rates, buffer: Buffer::Separate } => {
                let [r1, r2] = rates.log_ratios();
                Some(r1 + r2)
            }
            ModelKind::Modulated { .. } => None,
            ModelKind::GaussianMean { normals } => {
                normals.iter().map(|p| 0.5 / (p[0] * p[0] + p[1] * p[1])).reduce(f64::min)
            }
        }
    }

    /// Sample points on the boundary of the scaled target set, used to check
    /// that a candidate subsolution is nonpositive there. `resolution` points
    /// are placed along each boundary face (corners included).
    pub fn boundary_probes(&self, resolution: usize) -> Vec<Point> {
        let k = resolution.max(2);
        let ts = (0..k).map(move |i| i as f64 / (k - 1) as f64);
        let mut probes = Vec::new();
        let buffer = match &self.kind {
            ModelKind::Tandem { buffer, .. } | ModelKind::Modulated { buffer, .. } => Some(*buffer),
            ModelKind::GaussianMean { .. } => None,
        };
        match buffer {
            Some(Buffer::Shared) => {
                probes.extend(ts.map(|t| Point::new(&[t, 1.0 - t])));
            }
            Some(Buffer::Separate) => {
                // Faces {x1 = 1, x2 in [1, 2]} and {x2 = 1, x1 in [1, 2]}.
                for t in ts {
                    probes.push(Point::new(&[1.0, 1.0 + t]));
                    probes.push(Point::new(&[1.0 + t, 1.0]));
                }
            }
            None => {
                let ModelKind::GaussianMean { normals } = &self.kind else { unreachable!() };
                // At t = 1, walk each hyperplane <p, x> = 1 over a window of
                // half-width 2 around its foot point.
                for p in normals {
                    let norm2 = p[0] * p[0] + p[1] * p[1];
                    let foot = [p[0] / norm2, p[1] / norm2];
                    let norm = libm::sqrt(norm2);
                    let dir = [-p[1] / norm, p[0] / norm];
                    for t in ts.clone() {
                        let s = 4.0 * t - 2.0;
                        probes.push(Point::new(&[foot[0] + s * dir[0], foot[1] + s * dir[1], 1.0]));
                    }
                }
            }
        }
        probes
    }
}
