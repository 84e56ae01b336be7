//! Reference values for checking the splitting engine.
//!
//! * [`run_sfb`]: the fully branching variant of the algorithm, in which the
//!   taboo set absorbs instead of killing and every particle splits at every
//!   stage. Its population grows exponentially, so it is only usable on tiny
//!   instances, but its weights have a simple product structure.
//! * [`exact_hitting_probability`]: first-passage probabilities of the queueing
//!   models from the linear equations `p = P p`, `p = 1` on the target and
//!   `p = 0` on the taboo set, solved by Gauss-Seidel sweeps.
//! * [`gaussian_exact`]: the sample-mean probability in closed form up to a
//!   one-dimensional integral.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{evolve, prepare, Evolution, SampleRecord, Start};
use crate::importance::ImportanceScheme;
use crate::mechanism::SplittingMechanism;
use crate::models::{Buffer, ModelKind, ModelSpec, ModelState};
use crate::rng::particle_rng;
use crate::{Error, Result};

/// Largest expected final population `E[r(M)]^L` [`run_sfb`] accepts.
pub const DEFAULT_SFB_BUDGET: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfbRecord {
    pub record: SampleRecord,
    /// `sum_j w_{r,j}^2` over every particle of generation `r` (index 0 is the
    /// initial particle).
    pub square_weight_sums: Vec<f64>,
}

/// One run of the fully branching algorithm.
pub fn run_sfb(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    mechanism: &SplittingMechanism,
    seed: u64,
    budget: f64,
) -> Result<SfbRecord> {
    let mut record = SampleRecord {
        run: 0,
        seed,
        estimate: None,
        levels: 0,
        generation_sizes: vec![1],
        max_population: 1,
        steps: 0,
        capped: false,
    };
    let mut square_weight_sums = vec![1.0];
    let levels = match prepare(spec, scheme)? {
        Start::Decided(s) => {
            record.estimate = Some(s);
            return Ok(SfbRecord { record, square_weight_sums });
        }
        Start::Stages(levels) => levels,
    };
    let expected = libm::pow(mechanism.mean_offspring(), levels as f64);
    if expected > budget {
        return Err(Error::BudgetExceeded(format!(
            "fully branching run expects {expected:.3e} leaves over {levels} stages (budget {budget:.3e})"
        )));
    }
    record.levels = levels;

    let mut generation: Vec<(ModelState, f64)> = vec![(spec.start_state(), 1.0)];
    let mut next = Vec::new();
    for stage in 1..=levels {
        next.clear();
        for (index, &(state, weight)) in generation.iter().enumerate() {
            let mut rng = particle_rng(seed, stage, index as u32);
            let Evolution::Stopped(state) =
                evolve(spec, scheme, levels, stage, state, true, &mut rng, &mut record.steps)
            else {
                unreachable!("absorbing evolution never kills")
            };
            let entry = mechanism.sample(&mut rng);
            next.extend(entry.weights.iter().map(|w| (state, weight * w)));
        }
        core::mem::swap(&mut generation, &mut next);
        record.generation_sizes.push(generation.len() as u32);
        record.max_population = record.max_population.max(generation.len());
        square_weight_sums.push(generation.iter().map(|p| p.1 * p.1).sum());
    }
    record.estimate = Some(generation.iter().filter(|(s, _)| spec.in_target(s)).map(|p| p.1).sum());
    Ok(SfbRecord { record, square_weight_sums })
}

/// Default truncation, in multiples of `n`, for separate-buffer state spaces.
pub const DEFAULT_TRUNCATION: u32 = 4;
/// Relative change per sweep at which the Gauss-Seidel solve stops.
pub const SOLVE_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 1_000_000;

/// Hitting probabilities over the enumerated (possibly truncated) state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingProbabilities {
    pub n: u32,
    /// Truncation multiple used for separate buffers; `None` when the state
    /// space is finite without truncation.
    pub truncation: Option<u32>,
    /// Largest queue length represented.
    pub extent: u32,
    pub modes: u8,
    pub sweeps: usize,
    /// Largest relative residual `|p - P p| / p` over live states at exit.
    pub residual: f64,
    /// Relative change of the start value when the truncation grows by one;
    /// `None` when no truncation was needed.
    pub sensitivity: Option<f64>,
    values: Vec<f64>,
}

impl HittingProbabilities {
    fn index(extent: u32, x1: u32, x2: u32, mode: u8) -> usize {
        let side = extent as usize + 1;
        ((mode as usize - 1) * side + x1 as usize) * side + x2 as usize
    }

    /// `p(state)`, or `None` outside the enumerated space.
    pub fn get(&self, state: &ModelState) -> Option<f64> {
        let (x1, x2, mode) = match *state {
            ModelState::Tandem { x1, x2 } => (x1, x2, 1),
            ModelState::Modulated { x1, x2, mode } => (x1, x2, mode),
            ModelState::Gaussian { .. } => return None,
        };
        if x1 > self.extent || x2 > self.extent || mode == 0 || mode > self.modes {
            return None;
        }
        Some(self.values[Self::index(self.extent, x1, x2, mode)])
    }
}

enum Cell {
    Outside,
    Taboo,
    Target,
    Live,
}

/// A live state: its index, outgoing `(index, probability)` pairs and how
/// many of them are used.
type LiveState = (usize, [(usize, f64); 4], usize);

fn solve_grid(spec: &ModelSpec, extent: u32) -> Result<(Vec<f64>, usize, f64)> {
    let (modes, buffer) = match spec.kind() {
        ModelKind::Tandem { buffer, .. } => (1u8, *buffer),
        ModelKind::Modulated { buffer, .. } => (2u8, *buffer),
        ModelKind::GaussianMean { .. } => return Err(Error::Unsupported("linear solve needs a queueing model".into())),
    };
    let state_of = |x1, x2, mode| match modes {
        1 => ModelState::Tandem { x1, x2 },
        _ => ModelState::Modulated { x1, x2, mode },
    };
    let classify = |s: &ModelState| -> Cell {
        let (x1, x2) = match *s {
            ModelState::Tandem { x1, x2 } | ModelState::Modulated { x1, x2, .. } => (x1, x2),
            ModelState::Gaussian { .. } => unreachable!(),
        };
        if x1 > extent || x2 > extent || (buffer == Buffer::Shared && x1 + x2 > spec.n()) {
            Cell::Outside
        } else if spec.in_target(s) {
            Cell::Target
        } else if spec.in_taboo(s) {
            Cell::Taboo
        } else {
            Cell::Live
        }
    };

    let size = (extent as usize + 1) * (extent as usize + 1) * modes as usize;
    let mut values = vec![0.0; size];
    // Live states with their outgoing (index, probability) lists.
    let mut live: Vec<LiveState> = Vec::new();
    for mode in 1..=modes {
        for x1 in 0..=extent {
            for x2 in 0..=extent {
                let s = state_of(x1, x2, mode);
                let idx = HittingProbabilities::index(extent, x1, x2, mode);
                match classify(&s) {
                    Cell::Target => values[idx] = 1.0,
                    Cell::Live => {
                        let t = spec.transitions(&s)?;
                        let mut out = [(usize::MAX, 0.0); 4];
                        let mut k = 0;
                        for (to, p) in t.probabilities() {
                            // Leaving the truncated space counts as failure.
                            if matches!(classify(&to), Cell::Outside) {
                                continue;
                            }
                            let (y1, y2, m) = match to {
                                ModelState::Tandem { x1, x2 } => (x1, x2, 1),
                                ModelState::Modulated { x1, x2, mode } => (x1, x2, mode),
                                ModelState::Gaussian { .. } => unreachable!(),
                            };
                            out[k] = (HittingProbabilities::index(extent, y1, y2, m), p);
                            k += 1;
                        }
                        live.push((idx, out, k));
                    }
                    Cell::Taboo | Cell::Outside => {}
                }
            }
        }
    }
    // Sweep from the target side inwards so values propagate in few passes.
    live.reverse();

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for (idx, out, k) in &live {
            let new: f64 = out[..*k].iter().map(|&(j, p)| p * values[j]).sum();
            let old = values[*idx];
            if new > 0.0 {
                change = change.max((new - old).abs() / new);
            }
            values[*idx] = new;
        }
        if change <= SOLVE_TOL {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps, change });
        }
    }
    let residual = live
        .iter()
        .map(|(idx, out, k)| {
            let v = values[*idx];
            let r: f64 = out[..*k].iter().map(|&(j, p)| p * values[j]).sum();
            if v > 0.0 {
                (r - v).abs() / v
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    Ok((values, sweeps, residual))
}

/// First-passage probabilities of a queueing model by linear solve.
///
/// Shared-buffer spaces `{x1 + x2 <= n}` are finite and solved exactly.
/// Separate-buffer spaces are truncated at `truncation * n` per coordinate,
/// with exits treated as taboo; the solve is repeated one multiple further
/// out to report the sensitivity to this choice.
pub fn exact_hitting_probability(spec: &ModelSpec, truncation: u32) -> Result<HittingProbabilities> {
    let (modes, buffer) = match spec.kind() {
        ModelKind::Tandem { buffer, .. } => (1, *buffer),
        ModelKind::Modulated { buffer, .. } => (2, *buffer),
        ModelKind::GaussianMean { .. } => {
            return Err(Error::Unsupported("use gaussian_exact for the sample-mean model".into()))
        }
    };
    let n = spec.n();
    let start = spec.start_state();
    match buffer {
        Buffer::Shared => {
            let (values, sweeps, residual) = solve_grid(spec, n)?;
            Ok(HittingProbabilities {
                n,
                truncation: None,
                extent: n,
                modes,
                sweeps,
                residual,
                sensitivity: None,
                values,
            })
        }
        Buffer::Separate => {
            if truncation < 2 {
                return Err(Error::InvalidModel(format!(
                    "truncation must be at least 2 multiples of n, got {truncation}"
                )));
            }
            let extent = truncation
                .checked_mul(n)
                .ok_or_else(|| Error::BudgetExceeded("truncated state space too large".into()))?;
            let (values, sweeps, residual) = solve_grid(spec, extent)?;
            let mut out = HittingProbabilities {
                n,
                truncation: Some(truncation),
                extent,
                modes,
                sweeps,
                residual,
                sensitivity: None,
                values,
            };
            let (wider, _, _) = solve_grid(spec, extent + n)?;
            let here = out.get(&start).unwrap_or(0.0);
            let side = extent + n;
            let (x1, x2, m) = match start {
                ModelState::Tandem { x1, x2 } => (x1, x2, 1),
                ModelState::Modulated { x1, x2, mode } => (x1, x2, mode),
                ModelState::Gaussian { .. } => unreachable!(),
            };
            let there = wider[HittingProbabilities::index(side, x1, x2, m)];
            out.sensitivity = Some(if there > 0.0 { (there - here).abs() / there } else { 0.0 });
            Ok(out)
        }
    }
}

/// `P(Z >= x)` for a standard normal `Z`.
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

fn normal_density(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * x * x)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `int_a^b f` by adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Start from a fixed partition so narrow features are not missed.
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(lo + 0.5 * h), f(hi));
            let whole = simpson(lo, hi, fa, fm, fb);
            adaptive_simpson(&f, lo, hi, fa, fm, fb, whole, tol / PANELS as f64, 40)
        })
        .sum()
}

/// `P(Z1 >= a1, Z2 >= a2)` for standard normals with correlation `rho`.
pub fn bivariate_normal_tail(a1: f64, a2: f64, rho: f64, tol: f64) -> f64 {
    if rho >= 1.0 {
        return normal_tail(a1.max(a2));
    }
    if rho <= -1.0 {
        // Z2 = -Z1: a1 <= Z1 <= -a2.
        return (normal_tail(a1) - normal_tail(-a2)).max(0.0);
    }
    let s = libm::sqrt(1.0 - rho * rho);
    let f = |z: f64| normal_density(z) * normal_tail((a2 - rho * z) / s);
    // The density is below e^-80 of its value at a1 beyond a1 + 12.
    integrate(f, a1, a1 + 12.0, tol)
}

/// `P(S_n in C)` for the sample mean of `n` bivariate standard normals and
/// `C` a union of one or two half-spaces `<p_i, x> >= 1`.
pub fn gaussian_exact(spec: &ModelSpec) -> Result<f64> {
    let ModelKind::GaussianMean { normals } = spec.kind() else {
        return Err(Error::Unsupported("gaussian_exact needs the sample-mean model".into()));
    };
    let n = spec.n() as f64;
    let norm = |p: &[f64; 2]| libm::sqrt(p[0] * p[0] + p[1] * p[1]);
    // <p, S_n> ~ N(0, |p|^2 / n).
    let level = |p: &[f64; 2]| libm::sqrt(n) / norm(p);
    match normals.as_slice() {
        [p] => Ok(normal_tail(level(p))),
        [p, q] => {
            let (a1, a2) = (level(p), level(q));
            let rho = (p[0] * q[0] + p[1] * q[1]) / (norm(p) * norm(q));
            let single = normal_tail(a1) + normal_tail(a2);
            let joint = bivariate_normal_tail(a1, a2, rho, 1e-10 * single);
            Ok(single - joint)
        }
        _ => Err(Error::Unsupported(format!("closed form covers one or two half-spaces, got {}", normals.len()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::importance::Subsolution;
    use crate::models::{ModeRates, TandemRates};
    use crate::rng::run_seed;

    const LN_2: f64 = core::f64::consts::LN_2;

    fn shared(n: u32) -> ModelSpec {
        ModelSpec::tandem_shared(TandemRates::new(1.0, 4.5, 4.5), n).unwrap()
    }

    fn start_value(spec: &ModelSpec, sol: &HittingProbabilities) -> f64 {
        sol.get(&spec.start_state()).unwrap()
    }

    #[test]
    fn two_state_hand_solution() {
        let spec = shared(2);
        let sol = exact_hitting_probability(&spec, DEFAULT_TRUNCATION).unwrap();
        let p = (1.0 / 5.5) * (1.0 + 4.5 / 5.5);
        assert!((start_value(&spec, &sol) - p).abs() < 1e-12);
        assert_eq!(sol.get(&ModelState::Tandem { x1: 0, x2: 0 }), Some(0.0));
        assert_eq!(sol.get(&ModelState::Tandem { x1: 2, x2: 0 }), Some(1.0));
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn shared_buffer_reference_values() {
        for (n, want) in [(30, 2.63e-18), (40, 1.03e-24), (50, 3.80e-31)] {
            let spec = shared(n);
            let got = start_value(&spec, &exact_hitting_probability(&spec, DEFAULT_TRUNCATION).unwrap());
            assert!((got / want - 1.0).abs() < 0.01, "n={n}: {got:e} vs {want:e}");
        }
    }

    #[test]
    fn separate_buffer_reference_value_and_truncation() {
        let spec = ModelSpec::tandem_separate(TandemRates::new(1.0, 3.0, 2.0), 10).unwrap();
        let sol = exact_hitting_probability(&spec, DEFAULT_TRUNCATION).unwrap();
        let got = start_value(&spec, &sol);
        assert!((got / 9.64e-8 - 1.0).abs() < 0.01, "{got:e}");
        assert!(sol.sensitivity.unwrap() < 1e-3);
        let doubled = exact_hitting_probability(&spec, 2 * DEFAULT_TRUNCATION).unwrap();
        assert!((start_value(&spec, &doubled) / got - 1.0).abs() < 1e-3);
    }

    #[test]
    fn shared_probabilities_decrease_in_n() {
        let mut last = 1.0;
        for n in 2..=20 {
            let spec = shared(n);
            let p = start_value(&spec, &exact_hitting_probability(&spec, DEFAULT_TRUNCATION).unwrap());
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn solution_is_a_probability() {
        let spec = ModelSpec::modulated(
            [
                ModeRates { rates: TandemRates::new(1.0, 3.5, 2.5), switch: 0.2 },
                ModeRates { rates: TandemRates::new(1.0, 4.5, 4.5), switch: 0.5 },
            ],
            Buffer::Shared,
            8,
        )
        .unwrap();
        let sol = exact_hitting_probability(&spec, DEFAULT_TRUNCATION).unwrap();
        for mode in [1, 2] {
            for x1 in 0..=8 {
                for x2 in 0..=8 - x1 {
                    let s = ModelState::Modulated { x1, x2, mode };
                    let p = sol.get(&s).unwrap();
                    assert!((0.0..=1.0).contains(&p));
                    if spec.in_target(&s) {
                        assert_eq!(p, 1.0);
                    }
                    if spec.in_taboo(&s) {
                        assert_eq!(p, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn gaussian_values() {
        let two = |n| ModelSpec::gaussian_mean(vec![[0.6, 0.8], [0.6, -0.8]], n).unwrap();
        for (n, want) in [(20, 7.75e-6), (30, 4.33e-8), (40, 2.54e-10)] {
            let got = gaussian_exact(&two(n)).unwrap();
            assert!((got / want - 1.0).abs() < 0.01, "n={n}: {got:e}");
        }
        let one = ModelSpec::gaussian_mean(vec![[0.6, 0.8]], 20).unwrap();
        assert!((gaussian_exact(&one).unwrap() / 3.872e-6 - 1.0).abs() < 1e-3);
        assert!(gaussian_exact(&shared(3)).is_err());
    }

    #[test]
    fn bivariate_tail_against_known_values() {
        // Independent margins factorize.
        let t = bivariate_normal_tail(1.0, 0.5, 0.0, 1e-14);
        assert!((t - normal_tail(1.0) * normal_tail(0.5)).abs() < 1e-12);
        // Orthant probability at zero: 1/4 + asin(rho) / (2 pi).
        for rho in [-0.9, -0.28, 0.3, 0.8] {
            let t = bivariate_normal_tail(0.0, 0.0, rho, 1e-14);
            let want = 0.25 + libm::asin(rho) / (2.0 * core::f64::consts::PI);
            assert!((t - want).abs() < 1e-9, "rho {rho}: {t} vs {want}");
        }
    }

    fn sfb_setup(n: u32, u: f64) -> (ModelSpec, ImportanceScheme, SplittingMechanism) {
        let spec = shared(n);
        let scheme = ImportanceScheme::from_subsolution(Subsolution::optimal_for(&spec).unwrap(), LN_2, 2.0).unwrap();
        (spec, scheme, SplittingMechanism::canonical(u).unwrap())
    }

    #[test]
    fn sfb_start_in_target_and_budget() {
        let (spec, scheme, mech) = sfb_setup(1, 2.0);
        assert_eq!(run_sfb(&spec, &scheme, &mech, 0, DEFAULT_SFB_BUDGET).unwrap().record.estimate, Some(1.0));
        let (spec, scheme, mech) = sfb_setup(30, 2.0);
        assert!(matches!(run_sfb(&spec, &scheme, &mech, 0, DEFAULT_SFB_BUDGET), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn sfb_square_weights_deterministic_for_integer_u() {
        // Every particle splits in two at every stage with weights 1/2.
        let (spec, scheme, mech) = sfb_setup(4, 2.0);
        let rec = run_sfb(&spec, &scheme, &mech, 1, DEFAULT_SFB_BUDGET).unwrap();
        assert!(rec.record.levels >= 5);
        assert!((rec.square_weight_sums[5] - 0.03125).abs() < 1e-15);
        for (k, s) in rec.square_weight_sums.iter().enumerate() {
            assert!((s - 0.5f64.powi(k as i32)).abs() < 1e-15);
        }
    }

    #[test]
    fn sfb_mean_matches_exact() {
        let (spec, scheme, mech) = sfb_setup(2, 2.5);
        let k = 40_000u64;
        let xs: Vec<f64> = (0..k)
            .map(|i| {
                run_sfb(&spec, &scheme, &mech, run_seed(21, i), DEFAULT_SFB_BUDGET).unwrap().record.estimate.unwrap()
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / k as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k as f64 - 1.0);
        let se = (var / k as f64).sqrt();
        assert!((mean - 0.330578).abs() < 4.0 * se, "{mean} se {se}");
    }
}
