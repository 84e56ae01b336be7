//! The `run`, `check` and `oracle` commands, callable without the CLI.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use levelsplit_core::importance::{verify_subsolution, ProbeCheck, VerificationReport, HAMILTONIAN_TOL};
use levelsplit_core::models::Family;
use levelsplit_core::oracle::{exact_hitting_probability, gaussian_exact};
use levelsplit_core::rng::run_seed;
use levelsplit_core::stats::{decay_rate, second_moment_rate, summarize};
use levelsplit_core::{Buffer, Error, ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::batch::run_timed_batch;
use crate::config::ExperimentConfig;
use crate::report::{grid, sci, RunResults, RunRow};

/// Exit status of `run` when some run hit the particle cap.
pub const EXIT_CAPPED: u8 = 2;
/// Exit status of `check` when the candidate is not a subsolution.
pub const EXIT_CHECK_FAILED: u8 = 3;

/// Largest state count the oracle will enumerate (both solves included).
pub const ORACLE_STATE_BUDGET: u64 = 4_000_000;

/// Command-line overrides of configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<u64>,
    pub workers: Option<usize>,
    pub cap: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(r) = self.runs {
            config.runs = r;
        }
        if let Some(w) = self.workers {
            config.workers = Some(w);
        }
        if let Some(c) = self.cap {
            config.cap = c;
        }
        if let Some(o) = &self.out {
            config.out = Some(o.clone());
        }
    }
}

/// Loads a configuration file and applies overrides, revalidating after.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    overrides.apply(&mut config);
    let text = serde_json::to_string(&config)?;
    ExperimentConfig::parse(&text).context("after applying command-line overrides")
}

/// Runs every configured `n`. Batch `n` uses master seed `mix(seed, n)`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResults> {
    let exp = config.build()?;
    let workers = config.workers();
    let mut rows = Vec::with_capacity(exp.models.len());
    for spec in &exp.models {
        let n = spec.n();
        let (records, secs) = run_timed_batch(
            spec,
            &exp.scheme,
            &exp.mechanism,
            config.runs,
            run_seed(config.seed, n as u64),
            workers,
            config.cap,
        )
        .with_context(|| format!("running n = {n}"))?;
        let capped = records.iter().filter(|r| r.capped).count();
        let levels = records.first().map_or(0, |r| r.levels);
        let (summary, note) = match summarize(&records) {
            Ok(mut s) => {
                s.wall_time_s = secs;
                (Some(s), None)
            }
            Err(e @ (Error::Unstable { .. } | Error::InsufficientData(_))) => (None, Some(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let note = note.or_else(|| {
            (capped > 0).then(|| format!("{capped} of {} runs hit the particle cap {}", config.runs, config.cap))
        });
        rows.push(RunRow {
            n,
            levels,
            summary,
            capped,
            second_moment_rate: second_moment_rate(&records, n).ok(),
            note,
        });
    }
    let points: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.summary.as_ref().map(|s| (r.n as f64, s.estimate))).collect();
    Ok(RunResults { config: config.clone(), decay_rate: decay_rate(&points).ok(), rows })
}

/// `run`: prints the table and writes `results.json` and `results.csv`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<(RunResults, u8)> {
    let results = run_experiment(config)?;
    let out = prepare_out(config)?;
    results.write_json(&out.join("results.json"))?;
    results.write_csv(&out.join("results.csv"))?;
    print!("{}", results.render());
    let status = if results.any_capped() {
        eprintln!("instability: some runs hit the particle cap; see the table notes");
        EXIT_CAPPED
    } else {
        0
    };
    Ok((results, status))
}

fn prepare_out(config: &ExperimentConfig) -> Result<PathBuf> {
    let out = config.out_dir();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    /// Whether per-piece Hamiltonian checks were possible (false for
    /// modulated models, which are checked on the boundary only).
    pub hamiltonian_checked: bool,
    pub verification: VerificationReport,
    /// Decay rate `W(0)` of the target probability, where known.
    pub decay_rate_at_origin: Option<f64>,
    /// `W̄(0)`, scale included.
    pub subsolution_at_origin: f64,
    /// `W(0) + W̄(0) * (-log E sum w^2) / log E r`.
    pub predicted_second_moment_rate: Option<f64>,
}

impl CheckReport {
    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.name);
        if self.hamiltonian_checked {
            let mut lines = vec![
                ("piece".to_string(), vec![]),
                ("gradient".to_string(), vec![]),
                ("H(gradient)".to_string(), vec![]),
                ("verdict".to_string(), vec![]),
            ];
            for p in &self.verification.pieces {
                let g: Vec<String> = p.gradient.iter().map(|x| format!("{x:.4}")).collect();
                lines[0].1.push(p.piece.to_string());
                lines[1].1.push(format!("({})", g.join(", ")));
                lines[2].1.push(p.hamiltonian.map_or("overflow".into(), |h| format!("{h:.3e}")));
                lines[3].1.push(if p.pass { "ok" } else { "VIOLATED" }.into());
            }
            out += &grid(&lines);
        } else {
            out += "no Hamiltonian for this model family: boundary check only\n";
        }
        let bad: Vec<&ProbeCheck> = self.verification.failing_probes().collect();
        let total = self.verification.boundary.len();
        if bad.is_empty() {
            out += &format!("boundary: nonpositive at all {total} probes\n");
        } else {
            let worst = bad.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("nonempty");
            out += &format!(
                "boundary: positive at {} of {total} probes (worst {:.4} at {:?})\n",
                bad.len(),
                worst.value,
                worst.point
            );
        }
        for p in self.verification.failing_pieces() {
            out += &format!("piece {} violates the subsolution inequality\n", p.piece);
        }
        out += &format!("W̄(0) = {:.5}\n", self.subsolution_at_origin);
        match (self.decay_rate_at_origin, self.predicted_second_moment_rate) {
            (Some(w), Some(r)) => out += &format!("W(0) = {w:.5}; predicted second-moment rate {r:.5}\n"),
            _ => out += "W(0) unknown in closed form; no predicted rate\n",
        }
        out += if self.verification.pass { "verdict: PASS\n" } else { "verdict: FAIL\n" };
        out
    }
}

/// Verifies the configured subsolution against the first configured model.
pub fn check_experiment(config: &ExperimentConfig) -> Result<CheckReport> {
    let exp = config.build()?;
    let spec = &exp.models[0];
    let probes = spec.boundary_probes(config.probe_resolution);
    let (verification, hamiltonian_checked) = match &exp.hamiltonian {
        Some(h) => (verify_subsolution(&exp.subsolution, h, &probes, HAMILTONIAN_TOL)?, true),
        None => {
            let boundary = probes
                .iter()
                .map(|p| {
                    let value = exp.subsolution.evaluate(p)?;
                    Ok(ProbeCheck { point: p.to_vec(), value, pass: value <= HAMILTONIAN_TOL })
                })
                .collect::<levelsplit_core::Result<Vec<_>>>()?;
            let pass = boundary.iter().all(|p| p.pass);
            (VerificationReport { pieces: vec![], boundary, pass }, false)
        }
    };
    let origin = vec![0.0; spec.dimension()];
    let at_origin = exp.subsolution.evaluate(&origin)?;
    let growth = -exp.mechanism.weight_second_moment().ln() / exp.mechanism.mean_offspring().ln();
    let w = spec.decay_rate_at_origin();
    Ok(CheckReport {
        name: config.name.clone(),
        hamiltonian_checked,
        verification,
        decay_rate_at_origin: w,
        subsolution_at_origin: at_origin,
        predicted_second_moment_rate: w.map(|w| w + at_origin * growth),
    })
}

/// `check`: prints the report and writes `check.json`.
pub fn cmd_check(config: &ExperimentConfig) -> Result<(CheckReport, u8)> {
    let report = check_experiment(config)?;
    let out = prepare_out(config)?;
    std::fs::write(out.join("check.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    print!("{}", report.render());
    let status = if report.verification.pass { 0 } else { EXIT_CHECK_FAILED };
    Ok((report, status))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub n: u32,
    pub value: f64,
    /// `linear-solve` or `closed-form`.
    pub method: String,
    pub sweeps: Option<usize>,
    pub residual: Option<f64>,
    /// Relative change under one more multiple of truncation.
    pub sensitivity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResults {
    pub name: String,
    pub rows: Vec<OracleRow>,
    pub decay_rate: Option<f64>,
}

impl OracleResults {
    pub fn render(&self) -> String {
        let mut lines = vec![
            ("n".to_string(), vec![]),
            ("Exact value".to_string(), vec![]),
            ("Method".to_string(), vec![]),
            ("Truncation sensitivity".to_string(), vec![]),
        ];
        for r in &self.rows {
            lines[0].1.push(r.n.to_string());
            lines[1].1.push(sci(r.value));
            lines[2].1.push(r.method.clone());
            lines[3].1.push(r.sensitivity.map_or("-".into(), |s| format!("{s:.1e}")));
        }
        let mut out = format!("{}\n{}", self.name, grid(&lines));
        if let Some(d) = self.decay_rate {
            out += &format!("decay rate (slope of -log value): {d:.4}\n");
        }
        out
    }
}

fn oracle_states(spec: &ModelSpec, truncation: u32) -> u64 {
    let n = spec.n() as u64;
    let (modes, buffer) = match spec.kind() {
        ModelKind::Tandem { buffer, .. } => (1, *buffer),
        ModelKind::Modulated { buffer, .. } => (2, *buffer),
        ModelKind::GaussianMean { .. } => return 0,
    };
    let side = |extent: u64| (extent + 1) * (extent + 1) * modes;
    match buffer {
        Buffer::Shared => side(n),
        Buffer::Separate => side(truncation as u64 * n) + side((truncation as u64 + 1) * n),
    }
}

pub fn oracle_experiment(config: &ExperimentConfig) -> Result<OracleResults> {
    let exp = config.build()?;
    let mut rows = Vec::new();
    for spec in &exp.models {
        let n = spec.n();
        if spec.family() == Family::GaussianMean {
            rows.push(OracleRow {
                n,
                value: gaussian_exact(spec)?,
                method: "closed-form".into(),
                sweeps: None,
                residual: None,
                sensitivity: None,
            });
            continue;
        }
        let states = oracle_states(spec, config.truncation);
        if states > ORACLE_STATE_BUDGET {
            bail!("n = {n}: refusing to enumerate {states} states (budget {ORACLE_STATE_BUDGET})");
        }
        let sol = exact_hitting_probability(spec, config.truncation).with_context(|| format!("solving n = {n}"))?;
        rows.push(OracleRow {
            n,
            value: sol.get(&spec.start_state()).unwrap_or(0.0),
            method: "linear-solve".into(),
            sweeps: Some(sol.sweeps),
            residual: Some(sol.residual),
            sensitivity: sol.sensitivity,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.value)).collect();
    Ok(OracleResults { name: config.name.clone(), decay_rate: decay_rate(&points).ok(), rows })
}

/// `oracle`: prints exact values and writes `oracle.json`.
pub fn cmd_oracle(config: &ExperimentConfig) -> Result<OracleResults> {
    let results = oracle_experiment(config)?;
    let out = prepare_out(config)?;
    std::fs::write(out.join("oracle.json"), serde_json::to_string_pretty(&results)? + "\n")?;
    print!("{}", results.render());
    Ok(results)
}
