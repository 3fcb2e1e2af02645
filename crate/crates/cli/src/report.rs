use serde::Serialize;
use toral_rigidity::conjugacy::RigidityVerdict;

use crate::config::ExperimentConfig;

/// One numeric claim with the operation, tolerance and horizon behind it.
#[derive(Clone, Debug, Serialize)]
pub struct Claim {
    pub check: String,
    pub value: String,
    pub tolerance: Option<f64>,
    pub horizon: String,
    pub op: &'static str,
    pub pass: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StageStatus {
    Completed,
    Failed(String),
    Skipped(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub name: &'static str,
    pub status: StageStatus,
    pub seconds: f64,
    pub claims: Vec<Claim>,
    pub artifacts: Vec<String>,
}

impl StageSummary {
    pub fn new(name: &'static str) -> Self {
        Self {
            name,
            status: StageStatus::Completed,
            seconds: 0.0,
            claims: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn skipped(name: &'static str, why: impl Into<String>) -> Self {
        Self {
            status: StageStatus::Skipped(why.into()),
            ..Self::new(name)
        }
    }

    pub fn claim(
        &mut self,
        op: &'static str,
        check: impl Into<String>,
        value: impl std::fmt::Display,
        tolerance: Option<f64>,
        horizon: impl Into<String>,
        pass: Option<bool>,
    ) {
        self.claims.push(Claim {
            check: check.into(),
            value: value.to_string(),
            tolerance,
            horizon: horizon.into(),
            op,
            pass,
        });
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub stages: Vec<StageSummary>,
    pub verdict: Option<RigidityVerdict>,
    pub total_seconds: f64,
}

impl RunReport {
    pub fn stage(&self, name: &str) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("experiment {} (seed {})\n", self.config.name, self.config.seed);
        for st in &self.stages {
            let status = match &st.status {
                StageStatus::Completed => "completed".to_string(),
                StageStatus::Failed(e) => format!("FAILED: {e}"),
                StageStatus::Skipped(why) => format!("skipped: {why}"),
            };
            s.push_str(&format!("\n[{}] {} ({:.2}s)\n", st.name, status, st.seconds));
            for c in &st.claims {
                let tol = c.tolerance.map_or(String::new(), |t| format!(", tol {t:.1e}"));
                let mark = match c.pass {
                    Some(true) => " ok",
                    Some(false) => " FAIL",
                    None => "",
                };
                s.push_str(&format!(
                    "  {}: {}{} [{}{}; {}]\n",
                    c.check, c.value, mark, c.horizon, tol, c.op
                ));
            }
            for a in &st.artifacts {
                s.push_str(&format!("  -> {a}\n"));
            }
        }
        match &self.verdict {
            Some(v) => {
                s.push_str(&format!("\nverdict: {}\n", class_name(v)));
                for e in &v.evidence {
                    s.push_str(&format!("  {e}\n"));
                }
            }
            None => s.push_str("\nverdict: not reached (periodic data unavailable)\n"),
        }
        s.push_str(&format!("\ntotal {:.2}s\n", self.total_seconds));
        s
    }
}

pub fn class_name(v: &RigidityVerdict) -> &'static str {
    use toral_rigidity::conjugacy::RigidityClass::*;
    match v.class {
        RigidExpected => "RIGID_EXPECTED",
        CounterexampleRegime => "COUNTEREXAMPLE_REGIME",
        Obstructed => "OBSTRUCTED",
        Inconclusive => "INCONCLUSIVE",
    }
}
