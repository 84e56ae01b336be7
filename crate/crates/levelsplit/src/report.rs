//! Result documents and their renderings (terminal table, CSV).

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use levelsplit_core::EstimateSummary;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const CSV_HEADER: [&str; 9] =
    ["n", "estimate", "stderr", "ci_lo", "ci_hi", "time_s", "avg_particles", "sd_particles", "max_particles"];

/// One `n` of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub n: u32,
    pub levels: u32,
    /// Absent when every run was capped (or too few completed).
    pub summary: Option<EstimateSummary>,
    pub capped: usize,
    pub second_moment_rate: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub config: ExperimentConfig,
    pub rows: Vec<RunRow>,
    /// Least-squares slope of `-log(estimate)` against `n`.
    pub decay_rate: Option<f64>,
}

impl RunResults {
    pub fn any_capped(&self) -> bool {
        self.rows.iter().any(|r| r.capped > 0)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(CSV_HEADER)?;
        for row in &self.rows {
            let cells: Vec<String> = match &row.summary {
                Some(s) => vec![
                    row.n.to_string(),
                    format!("{:e}", s.estimate),
                    format!("{:e}", s.std_error),
                    format!("{:e}", s.ci_low),
                    format!("{:e}", s.ci_high),
                    s.wall_time_s.to_string(),
                    s.avg_particles.to_string(),
                    s.sd_particles.to_string(),
                    s.max_particles.to_string(),
                ],
                None => std::iter::once(row.n.to_string()).chain(std::iter::repeat_n(String::new(), 8)).collect(),
            };
            w.write_record(&cells)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Terminal table: one column per `n`, one row per statistic.
    pub fn render(&self) -> String {
        let mut lines: Vec<(String, Vec<String>)> = vec![
            ("n".into(), vec![]),
            ("Estimate".into(), vec![]),
            ("Std. Err.".into(), vec![]),
            ("95% C.I.".into(), vec![]),
            ("Time Taken (s)".into(), vec![]),
            ("Average no. particles".into(), vec![]),
            ("S.D. no. particles".into(), vec![]),
            ("Max no. particles".into(), vec![]),
            ("Capped runs".into(), vec![]),
        ];
        for row in &self.rows {
            let cells = match &row.summary {
                Some(s) => [
                    row.n.to_string(),
                    sci(s.estimate),
                    sci(s.std_error),
                    format!("({}, {})", sci(s.ci_low), sci(s.ci_high)),
                    format!("{:.2}", s.wall_time_s),
                    format!("{:.1}", s.avg_particles),
                    format!("{:.1}", s.sd_particles),
                    s.max_particles.to_string(),
                    row.capped.to_string(),
                ],
                None => {
                    let dash = || "-".to_string();
                    [
                        row.n.to_string(),
                        "unstable".into(),
                        dash(),
                        dash(),
                        dash(),
                        dash(),
                        dash(),
                        dash(),
                        row.capped.to_string(),
                    ]
                }
            };
            for (line, cell) in lines.iter_mut().zip(cells) {
                line.1.push(cell);
            }
        }
        let mut out = format!("{}\n", self.config.name);
        out += &grid(&lines);
        if let Some(rate) = self.decay_rate {
            let _ = writeln!(out, "decay rate (slope of -log estimate): {rate:.4}");
        }
        for row in &self.rows {
            if let Some(r) = row.second_moment_rate {
                let _ = writeln!(out, "n = {}: second-moment rate {r:.4}", row.n);
            }
            if let Some(note) = &row.note {
                let _ = writeln!(out, "n = {}: {note}", row.n);
            }
        }
        out
    }
}

/// Three significant digits, `2.63e-18` style.
pub fn sci(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.2e}")
}

/// Boxed grid with a labelled first column and a rule under the header line.
pub fn grid(lines: &[(String, Vec<String>)]) -> String {
    let cols = lines.iter().map(|l| l.1.len()).max().unwrap_or(0);
    let label_w = lines.iter().map(|l| l.0.chars().count()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| lines.iter().filter_map(|l| l.1.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let rule = |l: char, m: char, r: char| {
        let mut s = String::new();
        s.push(l);
        s.push_str(&"─".repeat(label_w + 2));
        for w in &widths {
            s.push(m);
            s.push_str(&"─".repeat(w + 2));
        }
        s.push(r);
        s.push('\n');
        s
    };
    let mut out = rule('┌', '┬', '┐');
    for (i, (label, cells)) in lines.iter().enumerate() {
        let _ = write!(out, "│ {label:<label_w$} ");
        for (c, w) in widths.iter().enumerate() {
            let cell = cells.get(c).map(String::as_str).unwrap_or("");
            let _ = write!(out, "│ {cell:>w$} ");
        }
        out.push_str("│\n");
        if i == 0 && lines.len() > 1 {
            out += &rule('├', '┼', '┤');
        }
    }
    out += &rule('└', '┴', '┘');
    out
}
