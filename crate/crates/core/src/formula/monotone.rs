use serde::{Deserialize, Serialize};

use super::ast::Term;
use super::env::ParameterEnv;
use super::eval::evaluate_term;
use super::FormulaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Monotonicity {
    Holds,
    /// First adjacent pair of samples that breaks strict monotonicity.
    Violated {
        index: usize,
        first: (f64, f64),
        second: (f64, f64),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub param: String,
    pub direction: Direction,
    /// `(param value, term value)` at each sample point.
    pub samples: Vec<(f64, f64)>,
    pub outcome: Monotonicity,
    pub note: String,
}

impl MonotonicityReport {
    pub fn holds(&self) -> bool {
        self.outcome == Monotonicity::Holds
    }
}

/// Sample `term` at `samples` evenly spaced values of `param` in `[lo, hi]`
/// and check the sequence is strictly monotone in `direction`.
///
/// Every other parameter in the term must be bound in `env`.
pub fn check_monotone(
    term: &Term,
    param: &str,
    lo: f64,
    hi: f64,
    samples: usize,
    direction: Direction,
    env: &ParameterEnv,
) -> Result<MonotonicityReport, FormulaError> {
    if samples < 2 {
        return Err(FormulaError::InvalidArgument(format!("samples must be >= 2, got {samples}")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(FormulaError::InvalidArgument(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    let symbols = term.free_symbols();
    if let Some(s) = symbols.signals.iter().next() {
        return Err(FormulaError::InvalidArgument(format!("term references signal {s}")));
    }
    if let Some(missing) = symbols.params.iter().find(|p| *p != param && !env.contains(p)) {
        return Err(FormulaError::UnboundParam(missing.clone()));
    }

    let mut env = env.clone();
    let unit = env.parameter(param).map(|p| p.unit.clone()).unwrap_or_default();
    let mut points = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = if i == samples - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (samples - 1) as f64
        };
        env.insert(param, x, unit.clone())?;
        let y = evaluate_term(term, &env)?.ok_or_else(|| FormulaError::UnboundParam(param.to_string()))?;
        points.push((x, y));
    }

    let outcome = points
        .windows(2)
        .position(|w| match direction {
            Direction::Increasing => !(w[1].1 > w[0].1),
            Direction::Decreasing => !(w[1].1 < w[0].1),
        })
        .map_or(Monotonicity::Holds, |index| Monotonicity::Violated {
            index,
            first: points[index],
            second: points[index + 1],
        });

    Ok(MonotonicityReport {
        param: param.to_string(),
        direction,
        samples: points,
        outcome,
        note: format!("sampled check at {samples} points, not a proof"),
    })
}
