//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Every batch uses master seed `mix(1, n)`, the same rule as `levelsplit run`
//! with `"seed": 1`, so each line can be reproduced from the bundled presets.

use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::Instant;

use levelsplit::batch::{default_workers, run_batch, run_timed_batch};
use levelsplit_core::importance::Hamiltonian;
use levelsplit_core::oracle::{
    exact_hitting_probability, gaussian_exact, run_sfb, DEFAULT_SFB_BUDGET, DEFAULT_TRUNCATION,
};
use levelsplit_core::rng::run_seed;
use levelsplit_core::stats::{decay_rate, second_moment_rate, summarize};
use levelsplit_core::{
    run_sa, Buffer, EstimateSummary, ImportanceScheme, ModeRates, ModelSpec, SampleRecord, SplittingMechanism,
    Subsolution, TandemRates,
};

const MASTER: u64 = 1;
const RUNS: u64 = 20_000;

type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn shared(n: u32) -> ModelSpec {
    ModelSpec::tandem_shared(TandemRates::new(1.0, 4.5, 4.5), n).unwrap()
}

fn separate(n: u32) -> ModelSpec {
    ModelSpec::tandem_separate(TandemRates::new(1.0, 3.0, 2.0), n).unwrap()
}

fn scheme(w: Subsolution, u: f64) -> (ImportanceScheme, SplittingMechanism) {
    (ImportanceScheme::from_subsolution(w, LN_2, u).unwrap(), SplittingMechanism::canonical(u).unwrap())
}

fn batch(spec: &ModelSpec, w: &Subsolution, runs: u64, cap: usize) -> (Vec<SampleRecord>, f64) {
    let (s, m) = scheme(w.clone(), 2.0);
    run_timed_batch(spec, &s, &m, runs, run_seed(MASTER, spec.n() as u64), default_workers(), cap).unwrap()
}

fn summary(records: &[SampleRecord], secs: f64) -> EstimateSummary {
    let mut s = summarize(records).unwrap();
    s.wall_time_s = secs;
    s
}

fn z(s: &EstimateSummary, target: f64) -> f64 {
    (s.estimate - target).abs() / s.std_error
}

fn describe(s: &EstimateSummary, target: f64) -> String {
    format!(
        "estimate {:.3e} SE {:.2e} vs {target:.3e} (|z| = {:.2}); avg particles {:.1}, max {}; {:.1} s",
        s.estimate,
        s.std_error,
        z(s, target),
        s.avg_particles,
        s.max_particles,
        s.wall_time_s
    )
}

fn small_instance() -> Outcome {
    let spec = shared(2);
    let (records, secs) = batch(&spec, &Subsolution::optimal_for(&spec).unwrap(), 100_000, 1_000_000);
    let s = summary(&records, secs);
    outcome(z(&s, 0.330578) < 4.0 && secs < 10.0, describe(&s, 0.330578))
}

/// Shared buffer at n = 30; the records are reused by the second-moment criterion.
fn shared_optimal(records: &mut Vec<SampleRecord>) -> Outcome {
    let spec = shared(30);
    let (rs, secs) = batch(&spec, &Subsolution::optimal_for(&spec).unwrap(), RUNS, 1_000_000);
    let s = summary(&rs, secs);
    *records = rs;
    let tens = (10.0..100.0).contains(&s.avg_particles);
    outcome(z(&s, 2.63e-18) < 3.0 && tens && secs < 300.0, describe(&s, 2.63e-18))
}

fn separate_optimal() -> Outcome {
    let spec = separate(10);
    let (rs, secs) = batch(&spec, &Subsolution::optimal_for(&spec).unwrap(), RUNS, 1_000_000);
    let s = summary(&rs, secs);
    outcome(z(&s, 9.64e-8) < 3.0, describe(&s, 9.64e-8))
}

fn modulated_shared() -> Outcome {
    let modes = [
        ModeRates { rates: TandemRates::new(1.0, 3.5, 2.5), switch: 0.2 },
        ModeRates { rates: TandemRates::new(1.0, 4.5, 4.5), switch: 0.5 },
    ];
    let spec = ModelSpec::modulated(modes, Buffer::Shared, 30).unwrap();
    let w = Subsolution::affine(1.00029, vec![-1.00029, -1.00029]).unwrap();
    let (rs, secs) = batch(&spec, &w, RUNS, 1_000_000);
    let s = summary(&rs, secs);
    outcome(z(&s, 6.36e-13) < 3.0, describe(&s, 6.36e-13))
}

fn gaussian_mean() -> Outcome {
    let spec = ModelSpec::gaussian_mean(vec![[0.6, 0.8], [0.6, -0.8]], 20).unwrap();
    let (rs, secs) = batch(&spec, &Subsolution::optimal_for(&spec).unwrap(), 100_000, 1_000_000);
    let s = summary(&rs, secs);
    let exact = gaussian_exact(&spec).unwrap();
    let rel = (exact / 7.75e-6 - 1.0).abs();
    outcome(
        z(&s, 7.75e-6) < 3.0 && rel < 0.01,
        format!("{}; closed form {exact:.4e} ({:.2}% off)", describe(&s, 7.75e-6), 100.0 * rel),
    )
}

fn oracle_value(spec: &ModelSpec) -> f64 {
    exact_hitting_probability(spec, DEFAULT_TRUNCATION).unwrap().get(&spec.start_state()).unwrap()
}

fn rate_diagnostics() -> Outcome {
    let pts: Vec<(f64, f64)> = [10, 20, 30].iter().map(|&n| (n as f64, oracle_value(&separate(n)))).collect();
    let sep = decay_rate(&pts).unwrap();
    let limit = 4.5f64.ln();
    let shared_pts: Vec<(f64, f64)> = (1..=6).map(|k| (10.0 * k as f64, oracle_value(&shared(10 * k)))).collect();
    let slopes: Vec<f64> = shared_pts.windows(2).map(|w| decay_rate(w).unwrap()).collect();
    let monotone = slopes.windows(2).all(|w| w[0] < w[1]) && slopes.iter().all(|&s| s < limit);
    let shown: Vec<String> = slopes.iter().map(|s| format!("{s:.4}")).collect();
    outcome(
        (sep - 1.79).abs() <= 0.02 && monotone,
        format!("separate slope {sep:.4} (limit {:.4}); shared slopes [{}] -> {limit:.4}", 6f64.ln(), shown.join(", ")),
    )
}

fn second_moment(records: &[SampleRecord]) -> Outcome {
    let n = 30;
    let rate = second_moment_rate(records, n).unwrap();
    let s = summarize(records).unwrap();
    let first = -s.estimate.ln() / n as f64;
    let bound = 2.0 * first;
    // Delta-method standard errors of both sides, on the log scale.
    let sq: Vec<f64> = records.iter().filter_map(|r| r.estimate).map(|x| x * x).collect();
    let k = sq.len() as f64;
    let m2 = sq.iter().sum::<f64>() / k;
    let sd2 = (sq.iter().map(|x| (x - m2).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let slack = 4.0 * ((sd2 / k.sqrt()) / m2 + 2.0 * s.std_error / s.estimate) / n as f64;
    let rel = (rate / bound - 1.0).abs();
    outcome(
        rel < 0.15 && rate <= bound + slack,
        format!("rate {rate:.4} vs 2 x {first:.4} = {bound:.4} ({:.1}% off, slack {slack:.4})", 100.0 * rel),
    )
}

fn stability() -> Outcome {
    let spec = separate(20);
    let u = Subsolution::min_coordinate(&TandemRates::new(1.0, 3.0, 2.0));
    let (rs, _) = batch(&spec, &u, 100, 100_000);
    let capped = rs.iter().filter(|r| r.capped).count();
    let (rs, secs) = batch(&spec, &Subsolution::optimal_for(&spec).unwrap(), RUNS, 1_000_000);
    let s = summary(&rs, secs);
    outcome(
        capped >= 1 && s.max_particles < 10_000,
        format!("U: {capped} of 100 runs capped at 1e5; W̄: max particles {} over {RUNS} runs", s.max_particles),
    )
}

fn strict_subsolution() -> Outcome {
    let spec = shared(50);
    let w = Subsolution::optimal_for(&spec).unwrap();
    let (rs, secs) = batch(&spec, &w, RUNS, 1_000_000);
    let full = summary(&rs, secs);
    let (rs, secs) = batch(&spec, &w.with_scale(0.93).unwrap(), RUNS, 1_000_000);
    let strict = summary(&rs, secs);
    outcome(
        strict.avg_particles < 0.5 * full.avg_particles && z(&strict, 3.80e-31) < 4.0,
        format!(
            "avg particles {:.1} (scale 0.93) vs {:.1} (scale 1); {}",
            strict.avg_particles,
            full.avg_particles,
            describe(&strict, 3.80e-31)
        ),
    )
}

fn properties() -> Outcome {
    let mut failures = Vec::new();

    for k in 0..=80 {
        let u = 1.0 + k as f64 * 0.125;
        let m = SplittingMechanism::canonical(u).unwrap();
        let ok = (m.mean_offspring() - u).abs() < 1e-12
            && m.is_unbiased(1e-12)
            && (m.weight_second_moment() - 1.0 / u).abs() < 1e-12;
        if !ok {
            failures.push(format!("canonical({u})"));
        }
    }

    let specs = [
        shared(10),
        separate(10),
        ModelSpec::tandem_separate(TandemRates::new(1.0, 2.0, 3.0), 10).unwrap(),
        ModelSpec::gaussian_mean(vec![[0.6, 0.8], [0.6, -0.8]], 10).unwrap(),
    ];
    let mut worst_root = 0.0f64;
    for spec in &specs {
        let h = Hamiltonian::for_model(spec).unwrap();
        let w = Subsolution::optimal_for(spec).unwrap();
        for i in 0..w.pieces().len() {
            worst_root = worst_root.max(h.eval(&w.piece_gradient(i)).unwrap().abs());
        }
    }
    if worst_root >= 1e-10 {
        failures.push(format!("Hamiltonian root {worst_root:e}"));
    }

    // Fully branching vs splitting, paired by seed.
    let spec = shared(2);
    let (s, m) = scheme(Subsolution::optimal_for(&spec).unwrap(), 2.5);
    let runs = 40_000u64;
    let diffs: Vec<f64> = (0..runs)
        .map(|i| {
            let seed = run_seed(MASTER, i);
            let a = run_sfb(&spec, &s, &m, seed, DEFAULT_SFB_BUDGET).unwrap().record.estimate.unwrap();
            let b = run_sa(&spec, &s, &m, seed, 1_000_000).unwrap().estimate.unwrap();
            a - b
        })
        .collect();
    let mean = diffs.iter().sum::<f64>() / runs as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
    let paired_z = mean.abs() / (sd / (runs as f64).sqrt());
    if paired_z >= 4.0 {
        failures.push(format!("SFB/SA paired |z| = {paired_z:.2}"));
    }

    // E[sum of squared weights in generation k] = (E sum_i w_i(M)^2)^k.
    let mut worst_identity = 0.0f64;
    for u in [2.0, 2.5] {
        let spec = shared(6);
        let (s, m) = scheme(Subsolution::optimal_for(&spec).unwrap(), u);
        let runs = 4_000u64;
        let sums: Vec<Vec<f64>> = (0..runs)
            .map(|i| run_sfb(&spec, &s, &m, run_seed(MASTER + 1, i), DEFAULT_SFB_BUDGET).unwrap().square_weight_sums)
            .collect();
        for kappa in 1..=8usize {
            let xs: Vec<f64> = sums.iter().map(|v| v[kappa]).collect();
            let mean = xs.iter().sum::<f64>() / runs as f64;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt();
            let want = m.weight_second_moment().powi(kappa as i32);
            let dev = (mean - want).abs();
            let zz = if sd > 0.0 {
                dev / (sd / (runs as f64).sqrt())
            } else if dev < 1e-15 {
                0.0
            } else {
                f64::INFINITY
            };
            worst_identity = worst_identity.max(zz);
        }
    }
    if worst_identity >= 4.0 {
        failures.push(format!("second-moment identity |z| = {worst_identity:.2}"));
    }

    // Bitwise determinism across worker counts.
    let spec = separate(10);
    let (s, m) = scheme(Subsolution::optimal_for(&spec).unwrap(), 2.0);
    let one = run_batch(&spec, &s, &m, 2_000, MASTER, 1, 1_000_000).unwrap();
    let many = run_batch(&spec, &s, &m, 2_000, MASTER, 4, 1_000_000).unwrap();
    let deterministic =
        one == many && summarize(&one).unwrap().estimate.to_bits() == summarize(&many).unwrap().estimate.to_bits();
    if !deterministic {
        failures.push("worker-count determinism".into());
    }

    let detail = format!(
        "max |H| at optimal gradients {worst_root:.1e}; SFB/SA paired |z| {paired_z:.2}; \
         identity worst |z| {worst_identity:.2}; determinism {deterministic}{}",
        if failures.is_empty() { String::new() } else { format!("; failed: {}", failures.join(", ")) }
    );
    outcome(failures.is_empty(), detail)
}

fn main() -> ExitCode {
    let mut shared_records = Vec::new();
    let criteria: Vec<Criterion> = vec![
        ("small-instance oracle agreement (n = 2)", Box::new(small_instance)),
        ("shared-buffer reproduction (n = 30, optimal scheme)", Box::new(|| shared_optimal(&mut shared_records))),
        ("separate-buffer reproduction (n = 10, optimal scheme)", Box::new(separate_optimal)),
        ("modulated shared-buffer reproduction (n = 30)", Box::new(modulated_shared)),
        ("Gaussian sample-mean reproduction (n = 20)", Box::new(gaussian_mean)),
        ("rate diagnostics", Box::new(rate_diagnostics)),
    ];
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{verdict}  {name}: {}", o.detail);
    };
    let start = Instant::now();
    for (name, f) in criteria {
        report(name, f());
    }
    report("second-moment rate (optimal scheme, n = 30)", second_moment(&shared_records));
    report("stability dichotomy (n = 20)", stability());
    report("strict subsolution control (scale 0.93, n = 50)", strict_subsolution());
    report("property suites", properties());
    println!("acceptance: {} criteria failed; {:.1} s", failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
