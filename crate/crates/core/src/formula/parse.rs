//! Recursive-descent parser for the evidence formula language.
//!
//! ```text
//! formula  ::= implies
//! implies  ::= or [ "->" implies ]
//! or       ::= and { "or" and }
//! and      ::= unary { "and" unary }
//! unary    ::= "not" unary | quant | atom
//! quant    ::= ("forall" | "exists") IDENT "in" domain ":" formula
//! domain   ::= "trace" | "[" term "," term "]"
//! atom     ::= "true" | "false" | term CMP term | IDENT "(" term ")" | "(" formula ")"
//! term     ::= mul { ("+" | "-") mul }
//! mul      ::= neg { ("*" | "/") neg }
//! neg      ::= "-" neg | primary
//! primary  ::= NUMBER | IDENT "(" term ")" | IDENT | "(" term ")"
//! CMP      ::= "<" | "<=" | ">" | ">=" | "==" | "!="
//! ```
//!
//! An identifier bound by an enclosing quantifier is a time variable;
//! any other bare identifier is a parameter. `IDENT(...)` is a signal
//! lookup whose argument must mention a bound variable.

use super::ast::{ArithOp, CmpOp, Domain, Formula, Quantifier, Term};
use super::FormulaError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Forall,
    Exists,
    In,
    Trace,
    And,
    Or,
    Not,
    True,
    False,
    Arrow,
    Cmp(CmpOp),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, FormulaError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| FormulaError::Syntax { line, col, message: msg };
    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let mut advance = 1;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            advance = j - i;
            match word.as_str() {
                "forall" => Tok::Forall,
                "exists" => Tok::Exists,
                "in" => Tok::In,
                "trace" => Tok::Trace,
                "and" => Tok::And,
                "or" => Tok::Or,
                "not" => Tok::Not,
                "true" => Tok::True,
                "false" => Tok::False,
                _ => Tok::Ident(word),
            }
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j < chars.len() && chars[j] == '.' {
                j += 1;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let text: String = chars[i..j].iter().collect();
            advance = j - i;
            let v: f64 = text
                .parse()
                .map_err(|_| err(line, col, format!("bad number {text:?}")))?;
            Tok::Num(v)
        } else {
            let next = chars.get(i + 1).copied();
            let mut two = |t| {
                advance = 2;
                t
            };
            match (c, next) {
                ('-', Some('>')) => two(Tok::Arrow),
                ('<', Some('=')) => two(Tok::Cmp(CmpOp::Le)),
                ('>', Some('=')) => two(Tok::Cmp(CmpOp::Ge)),
                ('=', Some('=')) => two(Tok::Cmp(CmpOp::Eq)),
                ('!', Some('=')) => two(Tok::Cmp(CmpOp::Ne)),
                ('<', _) => Tok::Cmp(CmpOp::Lt),
                ('>', _) => Tok::Cmp(CmpOp::Gt),
                ('+', _) => Tok::Plus,
                ('-', _) => Tok::Minus,
                ('*', _) => Tok::Star,
                ('/', _) => Tok::Slash,
                ('(', _) => Tok::LParen,
                (')', _) => Tok::RParen,
                ('[', _) => Tok::LBracket,
                (']', _) => Tok::RBracket,
                (',', _) => Tok::Comma,
                (':', _) => Tok::Colon,
                _ => return Err(err(line, col, format!("unexpected character {c:?}"))),
            }
        };
        out.push(Token {
            tok,
            line: start_line,
            col: start_col,
        });
        i += advance;
        col += advance;
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scope: Vec<String>,
}

type PResult<T> = Result<T, FormulaError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let t = &self.toks[self.pos];
        Err(FormulaError::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn formula(&mut self) -> PResult<Formula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::Implies(Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<Formula> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Formula> {
        let mut lhs = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let rhs = self.unary()?;
            lhs = Formula::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Formula> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                Ok(Formula::Not(Box::new(self.unary()?)))
            }
            Tok::Forall | Tok::Exists => self.quant(),
            _ => self.atom(),
        }
    }

    fn quant(&mut self) -> PResult<Formula> {
        let q = match self.bump().tok {
            Tok::Forall => Quantifier::Forall,
            _ => Quantifier::Exists,
        };
        let var = match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                name
            }
            other => return self.error(format!("expected variable name, found {}", describe(&other))),
        };
        self.expect(Tok::In, "'in'")?;
        let domain = match self.peek() {
            Tok::Trace => {
                self.bump();
                Domain::Trace
            }
            Tok::LBracket => {
                self.bump();
                let lo = self.term()?;
                self.expect(Tok::Comma, "','")?;
                let hi = self.term()?;
                self.expect(Tok::RBracket, "']'")?;
                Domain::Interval(lo, hi)
            }
            other => return self.error(format!("expected 'trace' or '[', found {}", describe(other))),
        };
        self.expect(Tok::Colon, "':'")?;
        self.scope.push(var.clone());
        let body = self.formula();
        self.scope.pop();
        Ok(Formula::Quant {
            q,
            var,
            domain,
            body: Box::new(body?),
        })
    }

    fn atom(&mut self) -> PResult<Formula> {
        match self.peek() {
            Tok::True => {
                self.bump();
                return Ok(Formula::Literal(true));
            }
            Tok::False => {
                self.bump();
                return Ok(Formula::Literal(false));
            }
            _ => {}
        }
        let save = self.pos;
        match self.term() {
            Ok(lhs) => {
                if let Tok::Cmp(op) = *self.peek() {
                    self.bump();
                    let rhs = self.term()?;
                    return Ok(Formula::Compare(op, lhs, rhs));
                }
                if let Term::Signal(name, arg) = lhs {
                    return Ok(Formula::BoolSignal(name, *arg));
                }
            }
            Err(e @ FormulaError::UnboundVariable { .. }) => return Err(e),
            Err(_) => {}
        }
        self.pos = save;
        if *self.peek() == Tok::LParen {
            self.bump();
            let inner = self.formula()?;
            self.expect(Tok::RParen, "')'")?;
            return Ok(inner);
        }
        self.error(format!("expected a formula, found {}", describe(self.peek())))
    }

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul()?;
            lhs = Term::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn mul(&mut self) -> PResult<Term> {
        let mut lhs = self.neg()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.neg()?;
            lhs = Term::Arith(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn neg(&mut self) -> PResult<Term> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(match self.neg()? {
                Term::Num(v) => Term::Num(-v),
                other => Term::Arith(ArithOp::Sub, Box::new(Term::Num(0.0)), Box::new(other)),
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Term> {
        let tok = self.toks[self.pos].clone();
        match tok.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Term::Num(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let arg = self.term()?;
                    self.expect(Tok::RParen, "')'")?;
                    if !arg.mentions_var() {
                        return match arg.free_symbols().params.into_iter().next() {
                            Some(unbound) => Err(FormulaError::UnboundVariable {
                                name: unbound,
                                line: tok.line,
                                col: tok.col,
                            }),
                            None => Err(FormulaError::Syntax {
                                line: tok.line,
                                col: tok.col,
                                message: format!(
                                    "time argument of {name} must reference a quantified variable"
                                ),
                            }),
                        };
                    }
                    return Ok(Term::Signal(name, Box::new(arg)));
                }
                if self.scope.contains(&name) {
                    Ok(Term::Var(name))
                } else {
                    Ok(Term::Param(name))
                }
            }
            Tok::LParen => {
                self.bump();
                let inner = self.term()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            other => self.error(format!("expected a term, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier {s:?}"),
        Tok::Num(v) => format!("number {v}"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

/// Parse formula text into an AST.
pub fn parse_formula(text: &str) -> Result<Formula, FormulaError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        scope: Vec::new(),
    };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after formula", describe(p.peek())));
    }
    Ok(f)
}

/// Parse a standalone numeric term (no quantified variables in scope).
pub fn parse_term(text: &str) -> Result<Term, FormulaError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        scope: Vec::new(),
    };
    let t = p.term()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after term", describe(p.peek())));
    }
    Ok(t)
}
