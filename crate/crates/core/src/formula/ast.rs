use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn apply(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> char {
        match self {
            ArithOp::Add => '+',
            ArithOp::Sub => '-',
            ArithOp::Mul => '*',
            ArithOp::Div => '/',
        }
    }
}

/// Numeric expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Num(f64),
    /// A quantified time variable.
    Var(String),
    /// A named constant from the parameter environment.
    Param(String),
    /// A numeric trace signal sampled at a time expression.
    Signal(String, Box<Term>),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Every sample time of the trace.
    Trace,
    /// Sample times in `[lo, hi]`, endpoints included.
    Interval(Term, Term),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Literal(bool),
    Quant {
        q: Quantifier,
        var: String,
        domain: Domain,
        body: Box<Formula>,
    },
    Implies(Box<Formula>, Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Compare(CmpOp, Term, Term),
    /// A boolean trace signal sampled at a time expression.
    BoolSignal(String, Term),
}

/// Parameter and signal names a formula refers to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Symbols {
    pub params: BTreeSet<String>,
    pub signals: BTreeSet<String>,
}

impl Term {
    fn collect(&self, out: &mut Symbols) {
        match self {
            Term::Num(_) | Term::Var(_) => {}
            Term::Param(p) => {
                out.params.insert(p.clone());
            }
            Term::Signal(s, arg) => {
                out.signals.insert(s.clone());
                arg.collect(out);
            }
            Term::Arith(_, l, r) => {
                l.collect(out);
                r.collect(out);
            }
        }
    }

    pub fn free_symbols(&self) -> Symbols {
        let mut s = Symbols::default();
        self.collect(&mut s);
        s
    }

    pub fn mentions_var(&self) -> bool {
        match self {
            Term::Var(_) => true,
            Term::Num(_) | Term::Param(_) => false,
            Term::Signal(_, a) => a.mentions_var(),
            Term::Arith(_, l, r) => l.mentions_var() || r.mentions_var(),
        }
    }

    pub fn uses_trace(&self) -> bool {
        match self {
            Term::Signal(..) => true,
            Term::Num(_) | Term::Var(_) | Term::Param(_) => false,
            Term::Arith(_, l, r) => l.uses_trace() || r.uses_trace(),
        }
    }
}

impl Formula {
    fn collect(&self, out: &mut Symbols) {
        match self {
            Formula::Literal(_) => {}
            Formula::Quant { domain, body, .. } => {
                if let Domain::Interval(lo, hi) = domain {
                    lo.collect(out);
                    hi.collect(out);
                }
                body.collect(out);
            }
            Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect(out);
                b.collect(out);
            }
            Formula::Not(a) => a.collect(out),
            Formula::Compare(_, l, r) => {
                l.collect(out);
                r.collect(out);
            }
            Formula::BoolSignal(s, arg) => {
                out.signals.insert(s.clone());
                arg.collect(out);
            }
        }
    }

    /// Exact sets of parameter and signal names appearing in the formula.
    pub fn free_symbols(&self) -> Symbols {
        let mut s = Symbols::default();
        self.collect(&mut s);
        s
    }

    /// Whether evaluation needs a trace.
    pub fn uses_trace(&self) -> bool {
        match self {
            Formula::Literal(_) => false,
            Formula::Quant { .. } | Formula::BoolSignal(..) => true,
            Formula::Implies(a, b) | Formula::And(a, b) | Formula::Or(a, b) => {
                a.uses_trace() || b.uses_trace()
            }
            Formula::Not(a) => a.uses_trace(),
            Formula::Compare(_, l, r) => l.uses_trace() || r.uses_trace(),
        }
    }
}

fn fmt_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    // `{:?}` is the shortest representation that parses back to the same bits.
    write!(f, "{v:?}")
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Num(v) => fmt_num(*v, f),
            Term::Var(v) | Term::Param(v) => f.write_str(v),
            Term::Signal(s, arg) => write!(f, "{s}({arg})"),
            Term::Arith(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Trace => f.write_str("trace"),
            Domain::Interval(lo, hi) => write!(f, "[{lo}, {hi}]"),
        }
    }
}

/// Fully parenthesized form; parsing it yields a structurally equal AST.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Literal(b) => write!(f, "{b}"),
            Formula::Quant { q, var, domain, body } => {
                let kw = match q {
                    Quantifier::Forall => "forall",
                    Quantifier::Exists => "exists",
                };
                write!(f, "({kw} {var} in {domain}: {body})")
            }
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::And(a, b) => write!(f, "({a} and {b})"),
            Formula::Or(a, b) => write!(f, "({a} or {b})"),
            Formula::Not(a) => write!(f, "(not {a})"),
            Formula::Compare(op, l, r) => write!(f, "{l} {} {r}", op.symbol()),
            Formula::BoolSignal(s, arg) => write!(f, "{s}({arg})"),
        }
    }
}
