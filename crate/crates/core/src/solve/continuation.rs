use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive step control: halve on failure, double after a run of successes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPolicy {
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    /// Consecutive accepted steps before the step doubles.
    pub grow_after: usize,
    /// Cap on attempted steps (accepted or not).
    pub max_attempts: usize,
}

impl StepPolicy {
    pub fn new(initial: f64, max: f64) -> Self {
        Self {
            initial,
            min: 1e-6,
            max,
            grow_after: 3,
            max_attempts: 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.initial >= self.min && self.max >= self.initial) {
            return Err(Error::Config(format!(
                "step policy needs 0 < min ≤ initial ≤ max, got {} / {} / {}",
                self.min, self.initial, self.max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathPoint<C> {
    pub param: f64,
    /// Step that led here; zero for the starting point.
    pub step: f64,
    pub cert: C,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepFailure {
    pub param: f64,
    pub step: f64,
    pub reason: String,
}

/// An ordered list of solutions along a parameter interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationPath<C> {
    pub points: Vec<PathPoint<C>>,
    pub failures: Vec<StepFailure>,
    pub completed: bool,
    pub target: f64,
}

impl<C> ContinuationPath<C> {
    pub fn last(&self) -> &PathPoint<C> {
        self.points.last().expect("a path starts with its initial point")
    }

    /// Number of accepted steps (excluding the starting point).
    pub fn accepted(&self) -> usize {
        self.points.len() - 1
    }

    pub fn attempted(&self) -> usize {
        self.accepted() + self.failures.len()
    }

    /// The path if it reached its target, otherwise a continuation-stuck error.
    pub fn into_result(self) -> Result<Self> {
        if self.completed {
            return Ok(self);
        }
        let reason = self
            .failures
            .last()
            .map(|f| f.reason.clone())
            .unwrap_or_else(|| "attempt budget exhausted".into());
        Err(Error::ContinuationStuck {
            at: self.last().param,
            accepted: self.accepted(),
            reason,
        })
    }
}

/// Follow a solution from `p0` to `p1`, seeding each solve with the previous solution.
///
/// `solve(param, previous)` must return a certified solution at `param` or an error.
/// The returned path records every failure; it is incomplete if the step underflows
/// `policy.min` or the attempt budget runs out.
pub fn continuation<C, F>(
    p0: f64,
    p1: f64,
    initial: C,
    policy: &StepPolicy,
    mut solve: F,
) -> Result<ContinuationPath<C>>
where
    F: FnMut(f64, &C) -> Result<C>,
{
    policy.validate()?;
    let direction = if p1 >= p0 { 1.0 } else { -1.0 };
    let mut path = ContinuationPath {
        points: vec![PathPoint {
            param: p0,
            step: 0.0,
            cert: initial,
        }],
        failures: Vec::new(),
        completed: p0 == p1,
        target: p1,
    };
    let mut step = policy.initial;
    let mut streak = 0;
    while !path.completed {
        if path.attempted() >= policy.max_attempts {
            break;
        }
        let here = path.last().param;
        let remaining = (p1 - here).abs();
        let h = step.min(remaining);
        let next = if h == remaining { p1 } else { here + direction * h };
        match solve(next, &path.last().cert) {
            Ok(cert) => {
                log::debug!("continuation accepted {next} (step {h:.3e})");
                path.points.push(PathPoint {
                    param: next,
                    step: h,
                    cert,
                });
                path.completed = next == p1;
                streak += 1;
                if streak >= policy.grow_after {
                    step = (2.0 * step).min(policy.max);
                    streak = 0;
                }
            }
            Err(e) => {
                log::debug!("continuation rejected {next} (step {h:.3e}): {e}");
                path.failures.push(StepFailure {
                    param: next,
                    step: h,
                    reason: e.to_string(),
                });
                streak = 0;
                step = 0.5 * h;
                if step < policy.min {
                    break;
                }
            }
        }
    }
    Ok(path)
}
