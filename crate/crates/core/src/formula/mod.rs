//! Evidence formula language: bounded first-order formulas over sampled
//! traces with arithmetic comparisons and named parameters.

mod ast;
mod env;
mod eval;
mod monotone;
mod parse;
mod trace;

use thiserror::Error;

pub use ast::{ArithOp, CmpOp, Domain, Formula, Quantifier, Symbols, Term};
pub use env::{Parameter, ParameterEnv};
pub use eval::{evaluate, evaluate_detailed, evaluate_term, Evaluation, TriBool};
pub use monotone::{check_monotone, Direction, Monotonicity, MonotonicityReport};
pub use parse::{parse_formula, parse_term};
pub use trace::{Column, Trace, TraceError};

/// "A false positive never gets the AGV hit from behind": whenever the rear
/// agent keeps at least its braking distance and a false detection
/// (confirmed by fusion) triggers a stop, the gap stays positive for the
/// whole braking window.
pub const REAR_GAP_FORMULA: &str = "forall t in trace: (d_agv_rear(t) >= d_b_rear and fp_ml(t) and detected_fusion(t)) -> (forall t2 in [t, t + t_b_agv]: d_agv_rear(t2) > 0)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("unbound variable {name} at {line}:{col}")]
    UnboundVariable { name: String, line: usize, col: usize },
    #[error("formula quantifies over a trace but none was supplied")]
    MissingTrace,
    #[error("division by zero")]
    DivisionByZero,
    #[error("time {t} outside trace span [{first}, {last}]")]
    TimeOutOfRange { t: f64, first: f64, last: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("signal {name} is not {expected}")]
    SignalType { name: String, expected: &'static str },
    #[error("non-finite value for {0}")]
    NonFinite(String),
    #[error("unbound parameter {0}")]
    UnboundParam(String),
    #[error("{0}")]
    InvalidArgument(String),
}
