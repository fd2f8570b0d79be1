//! Structured pass/fail records for statistical verification runs.

use serde::{Deserialize, Serialize};

/// How a recorded statistic is compared against its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    /// Pass iff statistic > threshold (p-value above alpha).
    Above,
    /// Pass iff statistic <= threshold (p-value at or below alpha for a
    /// negative control, or a deviation bound).
    AtMost,
    /// Pass iff |statistic| <= threshold.
    AbsAtMost,
}

impl Gate {
    pub fn eval(self, statistic: f64, threshold: f64) -> bool {
        match self {
            Gate::Above => statistic > threshold,
            Gate::AtMost => statistic <= threshold,
            Gate::AbsAtMost => statistic.abs() <= threshold,
        }
    }
}

/// One scalar check inside a report. The pass flag is a pure function of
/// (statistic, threshold, gate), so a reader can re-derive it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRecord {
    pub label: String,
    pub statistic: f64,
    pub threshold: f64,
    pub gate: Gate,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub standard_error: Option<f64>,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Outcome of one named verification: every statistic, threshold and
/// standard error that went into the decision, plus the seed and replica
/// count that produced it.
///
/// Wall-clock time is kept in memory for console summaries but not
/// serialized: reports must be byte-identical for identical (config, seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub seed: u64,
    pub replicas: u64,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>, seed: u64, replicas: u64) -> Self {
        VerificationReport {
            name: name.into(),
            seed,
            replicas,
            checks: Vec::new(),
            passed: true,
            wall_clock_secs: 0.0,
        }
    }

    pub fn push(&mut self, mut check: CheckRecord) {
        check.passed = check.gate.eval(check.statistic, check.threshold);
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn check(
        &mut self,
        label: impl Into<String>,
        statistic: f64,
        threshold: f64,
        gate: Gate,
    ) -> &mut Self {
        self.push(CheckRecord {
            label: label.into(),
            statistic,
            threshold,
            gate,
            standard_error: None,
            passed: false,
            note: None,
        });
        self
    }

    pub fn check_with_se(
        &mut self,
        label: impl Into<String>,
        statistic: f64,
        threshold: f64,
        gate: Gate,
        se: f64,
    ) -> &mut Self {
        self.push(CheckRecord {
            label: label.into(),
            statistic,
            threshold,
            gate,
            standard_error: Some(se),
            passed: false,
            note: None,
        });
        self
    }

    pub fn note_last(&mut self, note: impl Into<String>) {
        if let Some(c) = self.checks.last_mut() {
            c.note = Some(note.into());
        }
    }

    /// Recompute the pass flag from the recorded numbers alone.
    pub fn recomputed_pass(&self) -> bool {
        self.checks.iter().all(|c| c.gate.eval(c.statistic, c.threshold))
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} ({} checks, seed {}, {:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.checks.len(),
            self.seed,
            self.wall_clock_secs
        )
    }
}
