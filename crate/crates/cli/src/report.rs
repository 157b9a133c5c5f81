use serde::Serialize;
use serde_json::{json, Value};

use frozen_planet::error::Error;

/// Exit status: every requested residual within tolerance.
pub const EXIT_OK: i32 = 0;
/// A residual or certified property exceeded its tolerance.
pub const EXIT_TOLERANCE: i32 = 1;
/// Invalid input, configuration or domain.
pub const EXIT_DOMAIN: i32 = 2;

/// One tolerance check: `value` must not exceed `tol` (or must be true for flags).
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub tol: Value,
    pub ok: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value: json!(value),
            tol: json!(tol),
            ok: value < tol,
        }
    }

    /// `value` must exceed `floor`.
    pub fn above(name: &str, value: f64, floor: f64) -> Self {
        Self {
            name: name.into(),
            value: json!(value),
            tol: json!(floor),
            ok: value > floor,
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: json!(ok),
            tol: Value::Null,
            ok,
        }
    }

    pub fn equals<T: Serialize + PartialEq>(name: &str, value: T, expected: T) -> Self {
        Self {
            name: name.into(),
            ok: value == expected,
            value: json!(value),
            tol: json!(expected),
        }
    }
}

/// What a subcommand returns: checks plus a free-form result payload.
pub struct Outcome {
    pub checks: Vec<Check>,
    pub result: Value,
}

impl Outcome {
    pub fn status(&self) -> i32 {
        if self.checks.iter().all(|c| c.ok) {
            EXIT_OK
        } else {
            EXIT_TOLERANCE
        }
    }
}

/// Numerical failures count as tolerance violations; everything else is a domain error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonConvergence { .. }
        | Error::Singular { .. }
        | Error::ContinuationStuck { .. }
        | Error::Tracking { .. }
        | Error::DegeneratePoint { .. } => EXIT_TOLERANCE,
        _ => EXIT_DOMAIN,
    }
}

pub fn summary(header: &Value, outcome: &Outcome) -> Value {
    let failed: Vec<&str> = outcome
        .checks
        .iter()
        .filter(|c| !c.ok)
        .map(|c| c.name.as_str())
        .collect();
    json!({
        "header": header,
        "status": if failed.is_empty() { "ok" } else { "tolerance-violation" },
        "failed": failed,
        "checks": outcome.checks,
        "result": outcome.result,
    })
}

pub fn error_summary(header: &Value, err: &Error) -> Value {
    json!({
        "header": header,
        "status": if exit_code(err) == EXIT_TOLERANCE { "tolerance-violation" } else { "domain-error" },
        "error": err.to_string(),
    })
}
