//! The JSON document printed on standard output. Field order is fixed so
//! reports can be diffed.

use serde::Serialize;
use tnsolve::oracle::OracleResult;
use tnsolve::problems::ProblemKind;
use tnsolve::{ProblemSpec, Solution};

/// Process exit codes.
pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    /// The parsed spec, enough to rerun the command.
    pub spec: ProblemSpec,
    pub summary: SpecSummary,
    pub config: ConfigReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<Solution>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<u128>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReport>,
    pub timings: Timings,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpecSummary {
    pub family: String,
    pub kind: ProblemKind,
    pub dims: Vec<usize>,
    pub states: u128,
}

impl SpecSummary {
    pub fn of(spec: &ProblemSpec) -> Self {
        SpecSummary {
            family: spec.family().to_string(),
            kind: spec.kind(),
            dims: spec.variable_dims(),
            states: spec.state_count(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigReport {
    pub tau_requested: Option<f64>,
    /// The constant the reported solution was extracted at.
    pub tau_final: Option<f64>,
    pub mode: Mode,
    pub escalation: bool,
    pub layer_limit: Option<usize>,
    pub tolerance: f64,
    pub oracle_budget: u128,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plus,
    Phase,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub assignment: Vec<usize>,
    pub feasible: bool,
    pub cost: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleStatus {
    Ran,
    /// The state space is over `--oracle-budget`; no comparison was made.
    BudgetExceeded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Enumerate,
    KnapsackDp,
}

/// Listed optimal assignments are capped; `optimal_count` has the total.
pub const MAX_LISTED_OPTIMA: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub status: OracleStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<OracleMethod>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feasible: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_cost: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub optimal: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimal_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<u128>,
    /// Whether the solver result matches the oracle (`solve --check`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agrees: Option<bool>,
}

impl OracleReport {
    pub fn budget_exceeded() -> Self {
        OracleReport {
            status: OracleStatus::BudgetExceeded,
            method: None,
            feasible: None,
            best_cost: None,
            optimal: Vec::new(),
            optimal_count: None,
            evaluations: None,
            agrees: None,
        }
    }

    pub fn ran(method: OracleMethod, result: &OracleResult) -> Self {
        OracleReport {
            status: OracleStatus::Ran,
            method: Some(method),
            feasible: Some(result.is_feasible()),
            best_cost: result.best_cost,
            optimal: result
                .argmin
                .iter()
                .take(MAX_LISTED_OPTIMA)
                .cloned()
                .collect(),
            optimal_count: Some(result.argmin.len()),
            evaluations: Some(result.evaluations),
            agrees: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    /// Per extraction step for `solve`, per repetition for `bench`.
    pub iterations: Vec<f64>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.oracle.as_ref().and_then(|o| o.agrees) == Some(false) {
            return EXIT_ERROR;
        }
        let feasible = if let Some(s) = &self.solution {
            s.feasible
        } else if let Some(c) = self.count {
            c > 0
        } else if let Some(v) = &self.verification {
            v.feasible
        } else if let Some(f) = self.oracle.as_ref().and_then(|o| o.feasible) {
            f
        } else {
            return EXIT_ERROR;
        };
        if feasible {
            EXIT_FEASIBLE
        } else {
            EXIT_INFEASIBLE
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
