//! Three-valued evaluation over a parameter environment and a finite trace.
//!
//! Quantifiers range over trace sample times. A parameter or signal name
//! that cannot be resolved turns the enclosing atom Unknown; connectives
//! follow the strong Kleene tables.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{ArithOp, Domain, Formula, Quantifier, Term};
use super::env::ParameterEnv;
use super::trace::{Column, Trace};
use super::FormulaError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TriBool {
    True,
    False,
    Unknown,
}

impl TriBool {
    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Self {
        match self {
            TriBool::True => TriBool::False,
            TriBool::False => TriBool::True,
            TriBool::Unknown => TriBool::Unknown,
        }
    }

    pub fn and(self, other: Self) -> Self {
        match (self, other) {
            (TriBool::False, _) | (_, TriBool::False) => TriBool::False,
            (TriBool::True, TriBool::True) => TriBool::True,
            _ => TriBool::Unknown,
        }
    }

    pub fn or(self, other: Self) -> Self {
        match (self, other) {
            (TriBool::True, _) | (_, TriBool::True) => TriBool::True,
            (TriBool::False, TriBool::False) => TriBool::False,
            _ => TriBool::Unknown,
        }
    }

    pub fn implies(self, other: Self) -> Self {
        self.not().or(other)
    }
}

impl From<bool> for TriBool {
    fn from(b: bool) -> Self {
        if b {
            TriBool::True
        } else {
            TriBool::False
        }
    }
}

impl fmt::Display for TriBool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TriBool::True => "true",
            TriBool::False => "false",
            TriBool::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// Result of an evaluation plus, when the outermost quantifier decided the
/// result (a falsified `forall` or a satisfied `exists`), the variable
/// bindings of the deciding instance, outermost first.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: TriBool,
    pub witness: Vec<(String, f64)>,
}

struct Ctx<'a> {
    env: &'a ParameterEnv,
    trace: Option<&'a Trace>,
    vars: Vec<(&'a str, f64)>,
}

impl<'a> Ctx<'a> {
    fn var(&self, name: &str) -> Option<f64> {
        self.vars.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    fn trace(&self) -> Result<&'a Trace, FormulaError> {
        self.trace.ok_or(FormulaError::MissingTrace)
    }

    fn term(&self, t: &Term) -> Result<Option<f64>, FormulaError> {
        Ok(match t {
            Term::Num(v) => Some(*v),
            Term::Var(name) => Some(
                self.var(name)
                    .ok_or_else(|| FormulaError::UnboundVariable { name: name.clone(), line: 0, col: 0 })?,
            ),
            Term::Param(name) => self.env.get(name),
            Term::Signal(name, arg) => {
                let trace = self.trace()?;
                let Some(at) = self.term(arg)? else { return Ok(None) };
                match trace.column(name) {
                    None => None,
                    Some(Column::Num(v)) => Some(v[lookup(trace, at)?]),
                    Some(Column::Bool(_)) => {
                        return Err(FormulaError::SignalType { name: name.clone(), expected: "numeric" })
                    }
                }
            }
            Term::Arith(op, l, r) => {
                let (Some(a), Some(b)) = (self.term(l)?, self.term(r)?) else {
                    return Ok(None);
                };
                let v = match op {
                    ArithOp::Add => a + b,
                    ArithOp::Sub => a - b,
                    ArithOp::Mul => a * b,
                    ArithOp::Div => {
                        if b == 0.0 {
                            return Err(FormulaError::DivisionByZero);
                        }
                        a / b
                    }
                };
                if v.is_nan() {
                    return Err(FormulaError::NonFinite(t.to_string()));
                }
                Some(v)
            }
        })
    }

    /// Sample times a quantifier ranges over; `None` when an interval bound
    /// is unknown.
    fn domain(&self, d: &Domain) -> Result<Option<Vec<f64>>, FormulaError> {
        let trace = self.trace()?;
        match d {
            Domain::Trace => Ok(Some((0..trace.len()).map(|k| trace.time(k)).collect())),
            Domain::Interval(lo, hi) => {
                let (Some(lo), Some(hi)) = (self.term(lo)?, self.term(hi)?) else {
                    return Ok(None);
                };
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(FormulaError::InvalidInterval { lo, hi });
                }
                Ok(Some(trace.indices_in(lo, hi).map(|k| trace.time(k)).collect()))
            }
        }
    }

    fn eval(&mut self, f: &'a Formula) -> Result<TriBool, FormulaError> {
        Ok(match f {
            Formula::Literal(b) => (*b).into(),
            Formula::Not(a) => self.eval(a)?.not(),
            Formula::And(a, b) => {
                let l = self.eval(a)?;
                l.and(self.eval(b)?)
            }
            Formula::Or(a, b) => {
                let l = self.eval(a)?;
                l.or(self.eval(b)?)
            }
            Formula::Implies(a, b) => {
                let l = self.eval(a)?;
                l.implies(self.eval(b)?)
            }
            Formula::Compare(op, l, r) => match (self.term(l)?, self.term(r)?) {
                (Some(a), Some(b)) => op.apply(a, b).into(),
                _ => TriBool::Unknown,
            },
            Formula::BoolSignal(name, arg) => {
                let trace = self.trace()?;
                let Some(at) = self.term(arg)? else {
                    return Ok(TriBool::Unknown);
                };
                match trace.column(name) {
                    None => TriBool::Unknown,
                    Some(Column::Bool(v)) => v[lookup(trace, at)?].into(),
                    Some(Column::Num(_)) => {
                        return Err(FormulaError::SignalType { name: name.clone(), expected: "boolean" })
                    }
                }
            }
            Formula::Quant { q, var, domain, body } => {
                let Some(times) = self.domain(domain)? else {
                    return Ok(TriBool::Unknown);
                };
                let mut acc = match q {
                    Quantifier::Forall => TriBool::True,
                    Quantifier::Exists => TriBool::False,
                };
                for t in times {
                    self.vars.push((var.as_str(), t));
                    let v = self.eval(body);
                    self.vars.pop();
                    acc = match q {
                        Quantifier::Forall => acc.and(v?),
                        Quantifier::Exists => acc.or(v?),
                    };
                }
                acc
            }
        })
    }

    fn witness(&mut self, f: &'a Formula, out: &mut Vec<(String, f64)>) -> Result<(), FormulaError> {
        let Formula::Quant { q, var, domain, body } = f else {
            return Ok(());
        };
        let target = match q {
            Quantifier::Forall => TriBool::False,
            Quantifier::Exists => TriBool::True,
        };
        let Some(times) = self.domain(domain)? else { return Ok(()) };
        for t in times {
            self.vars.push((var.as_str(), t));
            let v = self.eval(body)?;
            if v == target {
                out.push((var.clone(), t));
                let r = self.witness(body, out);
                self.vars.pop();
                return r;
            }
            self.vars.pop();
        }
        Ok(())
    }
}

fn lookup(trace: &Trace, t: f64) -> Result<usize, FormulaError> {
    trace.index_at(t).ok_or(FormulaError::TimeOutOfRange {
        t,
        first: trace.t0(),
        last: trace.t_last(),
    })
}

/// Evaluate `f` under `env`, quantifying over `trace` where needed.
pub fn evaluate(f: &Formula, env: &ParameterEnv, trace: Option<&Trace>) -> Result<TriBool, FormulaError> {
    if trace.is_none() && f.uses_trace() {
        return Err(FormulaError::MissingTrace);
    }
    Ctx { env, trace, vars: Vec::new() }.eval(f)
}

/// Like [`evaluate`], also reporting the deciding instance of the outermost
/// quantifier chain.
pub fn evaluate_detailed(
    f: &Formula,
    env: &ParameterEnv,
    trace: Option<&Trace>,
) -> Result<Evaluation, FormulaError> {
    if trace.is_none() && f.uses_trace() {
        return Err(FormulaError::MissingTrace);
    }
    let mut ctx = Ctx { env, trace, vars: Vec::new() };
    let value = ctx.eval(f)?;
    let mut witness = Vec::new();
    let decided = matches!(
        (f, value),
        (Formula::Quant { q: Quantifier::Forall, .. }, TriBool::False)
            | (Formula::Quant { q: Quantifier::Exists, .. }, TriBool::True)
    );
    if decided {
        ctx.witness(f, &mut witness)?;
    }
    Ok(Evaluation { value, witness })
}

/// Evaluate a closed numeric term (no signals, no time variables).
pub fn evaluate_term(t: &Term, env: &ParameterEnv) -> Result<Option<f64>, FormulaError> {
    if t.uses_trace() {
        return Err(FormulaError::MissingTrace);
    }
    Ctx { env, trace: None, vars: Vec::new() }.term(t)
}
