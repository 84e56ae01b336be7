//! Importance functions, level schemes and subsolution checks.
//!
//! A subsolution is represented as the pointwise minimum of affine pieces
//! times a scale factor in `(0, 1]`. Scales below one give strict
//! subsolutions: slightly worse variance decay in exchange for uniformly
//! bounded particle populations.
//!
//! An [`ImportanceScheme`] couples a subsolution with a level width `delta`
//! and the mean offspring number `u`. The importance function is
//! `V = delta * W / log(u)`, so that `log(u) / delta * V` is the subsolution
//! itself; this is the relation under which the splitting scheme is stable.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::models::{Buffer, ModelKind, ModelSpec, Point, TandemRates};
use crate::{Error, Result};

/// `offset + <gradient, x>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub offset: f64,
    pub gradient: Vec<f64>,
}

impl AffinePiece {
    pub fn new(offset: f64, gradient: Vec<f64>) -> Self {
        Self { offset, gradient }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.gradient.iter().zip(x).map(|(g, x)| g * x).sum::<f64>()
    }
}

/// Pointwise minimum of affine pieces, multiplied by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubsolution")]
pub struct Subsolution {
    pieces: Vec<AffinePiece>,
    scale: f64,
}

#[derive(Deserialize)]
struct RawSubsolution {
    pieces: Vec<AffinePiece>,
    #[serde(default = "unit_scale")]
    scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<RawSubsolution> for Subsolution {
    type Error = Error;
    fn try_from(raw: RawSubsolution) -> Result<Self> {
        Subsolution::new(raw.pieces, raw.scale)
    }
}

impl Subsolution {
    pub fn new(pieces: Vec<AffinePiece>, scale: f64) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::InvalidSubsolution("at least one piece is required".into()));
        };
        let dim = first.gradient.len();
        if dim == 0 {
            return Err(Error::InvalidSubsolution("gradients must be nonempty".into()));
        }
        for (i, p) in pieces.iter().enumerate() {
            if p.gradient.len() != dim {
                return Err(Error::InvalidSubsolution(format!(
                    "piece {i} has dimension {}, piece 0 has {dim}",
                    p.gradient.len()
                )));
            }
            if !p.offset.is_finite() || p.gradient.iter().any(|g| !g.is_finite()) {
                return Err(Error::InvalidSubsolution(format!("piece {i} has non-finite coefficients")));
            }
        }
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::InvalidSubsolution(format!("scale must lie in (0, 1], got {scale}")));
        }
        Ok(Self { pieces, scale })
    }

    pub fn affine(offset: f64, gradient: Vec<f64>) -> Result<Self> {
        Self::new(alloc::vec![AffinePiece::new(offset, gradient)], 1.0)
    }

    pub fn with_scale(&self, scale: f64) -> Result<Self> {
        Self::new(self.pieces.clone(), scale)
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn dimension(&self) -> usize {
        self.pieces[0].gradient.len()
    }

    /// `scale * min_i (c_i + <g_i, x>)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), got: x.len() });
        }
        Ok(self.value(x))
    }

    #[inline]
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        let m = self.pieces.iter().map(|p| p.value(x)).fold(f64::INFINITY, f64::min);
        self.scale * m
    }

    /// Scaled gradient of piece `i`.
    pub fn piece_gradient(&self, i: usize) -> Vec<f64> {
        self.pieces[i].gradient.iter().map(|g| g * self.scale).collect()
    }

    /// Index of the piece attaining the minimum at `x`.
    pub fn active_piece(&self, x: &[f64]) -> usize {
        let mut best = 0;
        for (i, p) in self.pieces.iter().enumerate() {
            if p.value(x) < self.pieces[best].value(x) {
                best = i;
            }
        }
        best
    }

    /// The subsolution whose value at the origin equals the decay rate of the
    /// model's hitting probability, where one is known:
    ///
    /// * shared buffer: `rho_min * (1 - x1 - x2)` with `rho_i = log(mu_i / lambda)`,
    /// * separate buffers: `rho1 + rho2 - rho1 x1 - rho2 x2`,
    /// * Gaussian mean: the minimum over half-spaces `<p, x> >= 1` of
    ///   `-<a, x> + |a|^2 - (1 - t)|a|^2 / 2` with `a = p / |p|^2`.
    ///
    /// Modulated networks have no closed form; their subsolutions are supplied
    /// numerically.
    pub fn optimal_for(spec: &ModelSpec) -> Option<Self> {
        match spec.kind() {
            ModelKind::Tandem { rates, buffer: Buffer::Shared } => {
                let [r1, r2] = rates.log_ratios();
                let rho = r1.min(r2);
                Self::affine(rho, alloc::vec![-rho, -rho]).ok()
            }
            ModelKind::Tandem { rates, buffer: Buffer::Separate } => {
                let [r1, r2] = rates.log_ratios();
                Self::affine(r1 + r2, alloc::vec![-r1, -r2]).ok()
            }
            ModelKind::GaussianMean { normals } => {
                let pieces = normals
                    .iter()
                    .map(|p| {
                        let norm2 = p[0] * p[0] + p[1] * p[1];
                        let a = [p[0] / norm2, p[1] / norm2];
                        let a2 = a[0] * a[0] + a[1] * a[1];
                        AffinePiece::new(0.5 * a2, alloc::vec![-a[0], -a[1], 0.5 * a2])
                    })
                    .collect();
                Self::new(pieces, 1.0).ok()
            }
            ModelKind::Modulated { .. } => None,
        }
    }

    /// `gamma - gamma * min(x1, x2)` with `gamma = rho1 + rho2`: the rescaled
    /// indicator of the separate-buffer target. It is *not* a subsolution and
    /// gives an unstable splitting scheme.
    pub fn min_coordinate(rates: &TandemRates) -> Self {
        let [r1, r2] = rates.log_ratios();
        let g = r1 + r2;
        Self {
            pieces: alloc::vec![AffinePiece::new(g, alloc::vec![-g, 0.0]), AffinePiece::new(g, alloc::vec![0.0, -g]),],
            scale: 1.0,
        }
    }
}

/// Hamiltonians against which subsolution gradients are checked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum Hamiltonian {
    /// `-[lambda (e^{-p1} - 1) + mu1 (e^{p1 - p2} - 1) + mu2 (e^{p2} - 1)]`.
    Tandem(TandemRates),
    /// Time-augmented sample-mean problem with quadratic running cost. For a
    /// momentum `(s1, s2, w_t)` this is `w_t - |s|^2 / 2`.
    GaussianTime,
}

impl Hamiltonian {
    pub fn for_model(spec: &ModelSpec) -> Option<Self> {
        match spec.kind() {
            ModelKind::Tandem { rates, .. } => Some(Self::Tandem(*rates)),
            ModelKind::GaussianMean { .. } => Some(Self::GaussianTime),
            ModelKind::Modulated { .. } => None,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Self::Tandem(_) => 2,
            Self::GaussianTime => 3,
        }
    }

    pub fn eval(&self, p: &[f64]) -> Result<f64> {
        if p.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), got: p.len() });
        }
        let h = match self {
            Self::Tandem(r) => {
                let e = |z: f64| libm::expm1(z);
                -(r.lambda * e(-p[0]) + r.mu1 * e(p[0] - p[1]) + r.mu2 * e(p[1]))
            }
            Self::GaussianTime => p[2] - 0.5 * (p[0] * p[0] + p[1] * p[1]),
        };
        if h.is_finite() {
            Ok(h)
        } else {
            Err(Error::HamiltonianOverflow)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceCheck {
    pub piece: usize,
    /// Scaled gradient of the piece.
    pub gradient: Vec<f64>,
    /// `None` when the Hamiltonian overflowed.
    pub hamiltonian: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCheck {
    pub point: Vec<f64>,
    pub value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub pieces: Vec<PieceCheck>,
    pub boundary: Vec<ProbeCheck>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn failing_pieces(&self) -> impl Iterator<Item = &PieceCheck> {
        self.pieces.iter().filter(|p| !p.pass)
    }

    pub fn failing_probes(&self) -> impl Iterator<Item = &ProbeCheck> {
        self.boundary.iter().filter(|p| !p.pass)
    }
}

/// Default tolerance for Hamiltonian sign checks.
pub const HAMILTONIAN_TOL: f64 = 1e-9;

/// Checks a min-of-affine candidate: every piece must have a gradient with
/// nonnegative Hamiltonian (the minimum of subsolutions is a subsolution),
/// and the candidate must be nonpositive on the boundary of the target set.
pub fn verify_subsolution(
    candidate: &Subsolution,
    hamiltonian: &Hamiltonian,
    probes: &[Point],
    tol: f64,
) -> Result<VerificationReport> {
    if probes.is_empty() {
        return Err(Error::InvalidSubsolution("no boundary probes given".into()));
    }
    if candidate.dimension() != hamiltonian.dimension() {
        return Err(Error::DimensionMismatch { expected: hamiltonian.dimension(), got: candidate.dimension() });
    }
    let pieces: Vec<PieceCheck> = (0..candidate.pieces().len())
        .map(|i| {
            let gradient = candidate.piece_gradient(i);
            let h = hamiltonian.eval(&gradient).ok();
            PieceCheck { piece: i, pass: h.is_some_and(|h| h >= -tol), hamiltonian: h, gradient }
        })
        .collect();
    let boundary = probes
        .iter()
        .map(|p| {
            let value = candidate.evaluate(p)?;
            Ok(ProbeCheck { point: p.to_vec(), value, pass: value <= tol })
        })
        .collect::<Result<Vec<_>>>()?;
    let pass = pieces.iter().all(|p| p.pass) && boundary.iter().all(|p| p.pass);
    Ok(VerificationReport { pieces, boundary, pass })
}

/// Importance function `V = delta * W / log(u)` with its level width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScheme {
    subsolution: Subsolution,
    delta: f64,
    mean_offspring: f64,
    factor: f64,
}

impl ImportanceScheme {
    pub fn from_subsolution(subsolution: Subsolution, delta: f64, mean_offspring: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidScheme(format!("level width must be positive, got {delta}")));
        }
        if !(mean_offspring.is_finite() && mean_offspring > 1.0) {
            return Err(Error::InvalidScheme(format!(
                "mean offspring must exceed 1 for splitting to occur, got {mean_offspring}"
            )));
        }
        let factor = delta / libm::log(mean_offspring);
        Ok(Self { subsolution, delta, mean_offspring, factor })
    }

    pub fn subsolution(&self) -> &Subsolution {
        &self.subsolution
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mean_offspring(&self) -> f64 {
        self.mean_offspring
    }

    pub fn dimension(&self) -> usize {
        self.subsolution.dimension()
    }

    /// Importance function `V(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.factor * self.subsolution.evaluate(x)?)
    }

    #[inline]
    pub(crate) fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.subsolution.value(x)
    }

    /// Number of stages `ceil(n V(start) / delta)`.
    pub fn level_count(&self, n: u32, start: &[f64]) -> Result<u32> {
        let v = self.evaluate(start)?;
        if v.is_nan() || v <= 0.0 {
            return Err(Error::StartBelowFirstLevel { value: v });
        }
        let levels = libm::ceil(n as f64 * v / self.delta);
        if levels > u32::MAX as f64 {
            return Err(Error::InvalidScheme(format!("{levels} levels")));
        }
        Ok(levels as u32)
    }

    /// Stopping level of stage `stage` out of `levels`: `(levels - stage) delta / n`.
    #[inline]
    pub fn threshold(&self, n: u32, levels: u32, stage: u32) -> f64 {
        (levels - stage) as f64 * self.delta / n as f64
    }

    /// Whether a particle at `position` has finished stage `stage`. The last
    /// stage ends only in the target set; taboo entry is handled by the caller.
    #[inline]
    pub fn stage_stopped(&self, n: u32, levels: u32, stage: u32, position: &[f64], in_target: bool) -> bool {
        in_target || (stage < levels && self.value(position) <= self.threshold(n, levels, stage))
    }
}
