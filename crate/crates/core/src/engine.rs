//! The splitting algorithm.
//!
//! Generations are processed breadth first. Generation `r` holds the
//! particles that reached the stage-`r` level, each with its position and
//! weight; once generation `r` is built, generation `r - 1` is dropped. A
//! particle that enters the taboo set is killed on the spot. At the last stage
//! particles stop only in the target set and are not split again, and the
//! sample is the total weight that arrived there.
//!
//! A particle that lands past several thresholds at once stops after zero
//! steps in each of the following stages and therefore splits once per level
//! crossed.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::importance::ImportanceScheme;
use crate::mechanism::SplittingMechanism;
use crate::models::{ModelSpec, ModelState};
use crate::rng::particle_rng;
use crate::{Error, Result};

pub const DEFAULT_PARTICLE_CAP: usize = 1_000_000;

/// Output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Index of the run within its batch.
    pub run: u64,
    pub seed: u64,
    /// Total weight reaching the target; `None` when the run was capped.
    pub estimate: Option<f64>,
    /// Number of stages `L`.
    pub levels: u32,
    /// Particle count of every generation, starting with generation 0.
    pub generation_sizes: Vec<u32>,
    pub max_population: usize,
    pub steps: u64,
    pub capped: bool,
}

pub(crate) enum Evolution {
    Killed,
    Stopped(ModelState),
}

/// Where a run starts: either already decided, or with `levels` stages to go.
pub(crate) enum Start {
    Decided(f64),
    Stages(u32),
}

pub(crate) fn prepare(spec: &ModelSpec, scheme: &ImportanceScheme) -> Result<Start> {
    if scheme.dimension() != spec.dimension() {
        return Err(Error::DimensionMismatch { expected: spec.dimension(), got: scheme.dimension() });
    }
    let start = spec.start_state();
    if spec.in_target(&start) {
        return Ok(Start::Decided(1.0));
    }
    if spec.in_taboo(&start) {
        return Ok(Start::Decided(0.0));
    }
    match scheme.level_count(spec.n(), &spec.scaled_position(&start)) {
        Ok(levels) => Ok(Start::Stages(levels)),
        // Already below the first level: a single stage that runs to the target.
        Err(Error::StartBelowFirstLevel { .. }) => Ok(Start::Stages(1)),
        Err(e) => Err(e),
    }
}

/// Runs one particle through stage `stage`. With `absorbing` set, taboo
/// entry stops the particle instead of killing it.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn evolve<R: RngCore + ?Sized>(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    levels: u32,
    stage: u32,
    mut state: ModelState,
    absorbing: bool,
    rng: &mut R,
    steps: &mut u64,
) -> Evolution {
    let n = spec.n();
    loop {
        if spec.in_taboo(&state) {
            return if absorbing { Evolution::Stopped(state) } else { Evolution::Killed };
        }
        let position = spec.scaled_position(&state);
        if scheme.stage_stopped(n, levels, stage, &position, spec.in_target(&state)) {
            return Evolution::Stopped(state);
        }
        state = spec.step_unchecked(&state, rng);
        *steps += 1;
    }
}

/// One run of the splitting algorithm.
///
/// The mechanism is not required to be unbiased; biased mechanisms are
/// useful for studying particle growth.
pub fn run_sa(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    mechanism: &SplittingMechanism,
    seed: u64,
    particle_cap: usize,
) -> Result<SampleRecord> {
    run(spec, scheme, mechanism, seed, particle_cap, None)
}

/// [`run_sa`] that also returns the weights of the particles that reached the
/// target, in generation order.
pub fn run_sa_traced(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    mechanism: &SplittingMechanism,
    seed: u64,
    particle_cap: usize,
) -> Result<(SampleRecord, Vec<f64>)> {
    let mut arrived = Vec::new();
    let record = run(spec, scheme, mechanism, seed, particle_cap, Some(&mut arrived))?;
    Ok((record, arrived))
}

fn run(
    spec: &ModelSpec,
    scheme: &ImportanceScheme,
    mechanism: &SplittingMechanism,
    seed: u64,
    particle_cap: usize,
    trace: Option<&mut Vec<f64>>,
) -> Result<SampleRecord> {
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
    let levels = match prepare(spec, scheme)? {
        Start::Decided(s) => {
            record.estimate = Some(s);
            if let Some(t) = trace {
                if s > 0.0 {
                    t.push(s);
                }
            }
            return Ok(record);
        }
        Start::Stages(levels) => levels,
    };
    record.levels = levels;

    let mut generation: Vec<(ModelState, f64)> = vec![(spec.start_state(), 1.0)];
    let mut next: Vec<(ModelState, f64)> = Vec::new();
    for stage in 1..=levels {
        next.clear();
        for (index, &(state, weight)) in generation.iter().enumerate() {
            let mut rng = particle_rng(seed, stage, index as u32);
            let Evolution::Stopped(state) =
                evolve(spec, scheme, levels, stage, state, false, &mut rng, &mut record.steps)
            else {
                continue;
            };
            if stage == levels {
                next.push((state, weight));
                continue;
            }
            let entry = mechanism.sample(&mut rng);
            if next.len() + entry.offspring() > particle_cap {
                record.capped = true;
                record.max_population = particle_cap + 1;
                record.generation_sizes.push((next.len() + entry.offspring()) as u32);
                return Ok(record);
            }
            next.extend(entry.weights.iter().map(|w| (state, weight * w)));
        }
        core::mem::swap(&mut generation, &mut next);
        record.generation_sizes.push(generation.len() as u32);
        record.max_population = record.max_population.max(generation.len());
        if generation.is_empty() {
            break;
        }
    }
    // Only the final generation can be nonempty here, and all of it is in B.
    record.estimate = Some(generation.iter().map(|p| p.1).sum());
    if let Some(t) = trace {
        t.extend(generation.iter().map(|p| p.1));
    }
    Ok(record)
}
