//! Per-`k` comparison of measured errors against the evaluated bounds.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::linalg::fmt17;

/// Seed-averaged errors may exceed an expectation bound by this factor
/// before a violation is declared.
pub const MSE_SLACK: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundRow {
    pub k: u64,
    /// Seed-averaged `(1/N) Σ_v ‖θ_v − θ*‖²`.
    pub mse: f64,
    pub mse_rhs: Option<f64>,
    /// Largest consensus error over seeds.
    pub consensus_error: f64,
    pub consensus_rhs: Option<f64>,
    /// Largest drift `‖θ̄_k − θ̄_{k−τ}‖` over seeds and its bound.
    pub drift_lhs: Option<f64>,
    pub drift_rhs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// A failing theorem-level verdict makes the run fail.
    pub theorem_level: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundReport {
    pub label: String,
    pub rows: Vec<BoundRow>,
    pub constants: Vec<(String, f64)>,
    pub verdicts: Vec<Verdict>,
}

impl BoundReport {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into(), ..Self::default() }
    }

    pub fn constant(&mut self, name: &str, value: f64) {
        self.constants.push((name.to_string(), value));
    }

    pub fn verdict(&mut self, name: &str, pass: bool, theorem_level: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { name: name.into(), pass, theorem_level, detail: detail.into() });
    }

    /// `mse ≤ MSE_SLACK · rhs` on every row carrying a bound.
    pub fn mse_dominated(&self) -> bool {
        self.rows.iter().all(|r| r.mse_rhs.is_none_or(|b| r.mse <= MSE_SLACK * b))
    }

    pub fn consensus_dominated(&self) -> bool {
        self.rows.iter().all(|r| r.consensus_rhs.is_none_or(|b| r.consensus_error <= b))
    }

    pub fn theorem_failure(&self) -> bool {
        self.verdicts.iter().any(|v| v.theorem_level && !v.pass)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,mse,mse_rhs,consensus_error,consensus_rhs,drift_lhs,drift_rhs")?;
        let opt = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k,
                fmt17(r.mse),
                opt(r.mse_rhs),
                fmt17(r.consensus_error),
                opt(r.consensus_rhs),
                opt(r.drift_lhs),
                opt(r.drift_rhs)
            )?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}]", self.label);
        for (name, value) in &self.constants {
            let _ = writeln!(s, "  {name:<24} {}", fmt17(*value));
        }
        for v in &self.verdicts {
            let tag = if v.pass { "PASS" } else { "FAIL" };
            let level = if v.theorem_level { " (theorem)" } else { "" };
            let _ = writeln!(s, "  {tag} {}{level}: {}", v.name, v.detail);
        }
        s
    }
}
