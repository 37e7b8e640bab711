use std::io::Write;

use crate::error::Result;

/// One measured quantity of one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub check: String,
    pub trial: usize,
    pub metric: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of a set of checks; passes when every row does (an empty report passes).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<CheckRow>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    /// Records `metric ≤ tolerance`. NaN never passes.
    pub fn record(&mut self, check: &str, trial: usize, metric: f64, tolerance: f64) {
        self.rows.push(CheckRow {
            check: check.to_string(),
            trial,
            metric,
            tolerance,
            pass: metric <= tolerance,
        });
    }

    /// Records a lower bound, `metric ≥ threshold`.
    pub fn record_at_least(&mut self, check: &str, trial: usize, metric: f64, threshold: f64) {
        self.rows.push(CheckRow {
            check: check.to_string(),
            trial,
            metric,
            tolerance: threshold,
            pass: metric >= threshold,
        });
    }

    pub fn extend(&mut self, other: Report) {
        self.rows.extend(other.rows);
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest metric recorded under `check`.
    pub fn worst(&self, check: &str) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.check == check)
            .map(|r| r.metric)
            .fold(None, |acc, m| {
                Some(acc.map_or(m, |a: f64| if m.is_nan() { m } else { a.max(m) }))
            })
    }

    pub fn check_passed(&self, check: &str) -> bool {
        self.rows.iter().filter(|r| r.check == check).all(|r| r.pass)
    }

    /// Distinct check names in first-seen order.
    pub fn checks(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !names.contains(&r.check.as_str()) {
                names.push(&r.check);
            }
        }
        names
    }

    /// One line per check: name, trials, worst metric, tolerance, PASS/FAIL.
    pub fn summary(&self) -> Vec<String> {
        self.checks()
            .into_iter()
            .map(|c| {
                let rows: Vec<&CheckRow> = self.rows.iter().filter(|r| r.check == c).collect();
                let failed = rows.iter().filter(|r| !r.pass).count();
                format!(
                    "{:<28} trials {:>4}  worst {:>11.3e}  tol {:>9.1e}  {}",
                    c,
                    rows.len(),
                    self.worst(c).unwrap_or(0.0),
                    rows[0].tolerance,
                    if failed == 0 {
                        "PASS".to_string()
                    } else {
                        format!("FAIL ({failed})")
                    }
                )
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "check,trial,metric,tolerance,pass")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:e},{:e},{}",
                r.check,
                r.trial,
                r.metric,
                r.tolerance,
                if r.pass { "pass" } else { "fail" }
            )?;
        }
        out.flush()?;
        Ok(())
    }
}
