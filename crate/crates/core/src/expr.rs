//! A small expression language for user-supplied coefficient functions.
//!
//! Grammar: numeric literals, variables `x` and `y`, binary `+ - * / ^`
//! (with `^` right-associative and binding tighter than unary minus),
//! unary minus, the functions `sin cos exp log sqrt abs`, and parentheses.
//! Parsing is recursive descent with byte-accurate error offsets, so the
//! CLI can point at the offending character in a config file.

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }
}

/// Parsed expression tree. Immutable and cheap to share.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Arc<Expr>),
    Call(Func, Arc<Expr>),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("domain error in `{subexpr}`: {message}")]
    Domain { subexpr: String, message: String },
    #[error("expression references y but no y value was supplied")]
    MissingY,
}

// ---------------------------------------------------------------- parsing

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Add, Arc::new(lhs), Arc::new(rhs));
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Bin(BinOp::Sub, Arc::new(lhs), Arc::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // term := factor (('*'|'/') factor)*
    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Mul, Arc::new(lhs), Arc::new(rhs));
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = Expr::Bin(BinOp::Div, Arc::new(lhs), Arc::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // factor := '-' factor | power  (so ^ binds tighter than unary minus)
    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(Expr::Neg(Arc::new(inner)));
        }
        self.power()
    }

    // power := atom ('^' factor)?   right-associative
    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Arc::new(base), Arc::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.err(format!("unexpected character `{}`", c as char))),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_digit() || self.bytes[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent part, e.g. 1e-4
        if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.bytes.len() && matches!(self.bytes[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = mark; // `e` was the start of an identifier, back off
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map(Expr::Num)
            .map_err(|_| ExprError::Syntax {
                offset: start,
                message: format!("invalid number `{text}`"),
            })
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        match name {
            "x" => return Ok(Expr::Var(Var::X)),
            "y" => return Ok(Expr::Var(Var::Y)),
            _ => {}
        }
        let func = match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => {
                return Err(ExprError::UnknownIdentifier {
                    name: name.to_string(),
                    offset: start,
                })
            }
        };
        if self.peek() != Some(b'(') {
            return Err(self.err(format!("expected `(` after `{name}`")));
        }
        self.pos += 1;
        let arg = self.expr()?;
        if self.peek() != Some(b')') {
            return Err(self.err("expected `)`"));
        }
        self.pos += 1;
        Ok(Expr::Call(func, Arc::new(arg)))
    }
}

/// Parse an expression from source text.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser::new(src);
    if p.peek().is_none() {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let e = p.expr()?;
    if let Some(c) = p.peek() {
        return Err(p.err(format!("trailing input starting at `{}`", c as char)));
    }
    Ok(e)
}

// ------------------------------------------------------------- evaluation

impl Expr {
    /// Evaluate at `x` (and `y` for 2D expressions).
    pub fn eval(&self, x: f64, y: Option<f64>) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::Var(Var::X) => x,
            Expr::Var(Var::Y) => y.ok_or(ExprError::MissingY)?,
            Expr::Neg(inner) => -inner.eval(x, y)?,
            Expr::Call(f, arg) => {
                let a = arg.eval(x, y)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.domain_error("log of a nonpositive value"));
                        }
                        a.ln()
                    }
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(self.domain_error("sqrt of a negative value"));
                        }
                        a.sqrt()
                    }
                    Func::Abs => a.abs(),
                }
            }
            Expr::Bin(op, lhs, rhs) => {
                let a = lhs.eval(x, y)?;
                let b = rhs.eval(x, y)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(self.domain_error("division by zero"));
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let r = a.powf(b);
                        if !r.is_finite() {
                            return Err(self.domain_error("non-finite power"));
                        }
                        r
                    }
                }
            }
        };
        Ok(v)
    }

    /// True if the tree mentions the variable `y`.
    pub fn uses_y(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == Var::Y,
            Expr::Neg(e) | Expr::Call(_, e) => e.uses_y(),
            Expr::Bin(_, a, b) => a.uses_y() || b.uses_y(),
        }
    }

    fn domain_error(&self, message: &str) -> ExprError {
        ExprError::Domain {
            subexpr: self.to_string(),
            message: message.to_string(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Neg(_) => 3,
            Expr::Bin(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, e: &Expr, wrap: bool) -> fmt::Result {
            if wrap {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            Expr::Num(c) => {
                if *c == c.trunc() && c.abs() < 1e15 {
                    write!(f, "{c:.1}")
                } else {
                    write!(f, "{c:e}")
                }
            }
            Expr::Var(Var::X) => write!(f, "x"),
            Expr::Var(Var::Y) => write!(f, "y"),
            Expr::Neg(inner) => {
                write!(f, "-")?;
                child(f, inner, inner.precedence() < self.precedence())
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
            Expr::Bin(op, lhs, rhs) => {
                let prec = self.precedence();
                let (sym, wrap_equal_rhs) = match op {
                    BinOp::Add => ("+", false),
                    BinOp::Sub => ("-", true),
                    BinOp::Mul => ("*", false),
                    BinOp::Div => ("/", true),
                    BinOp::Pow => ("^", false),
                };
                // `^` is right-associative: wrap an equal-precedence lhs
                let wrap_lhs = if *op == BinOp::Pow {
                    lhs.precedence() <= prec
                } else {
                    lhs.precedence() < prec
                };
                let wrap_rhs =
                    rhs.precedence() < prec || (wrap_equal_rhs && rhs.precedence() == prec);
                child(f, lhs, wrap_lhs)?;
                write!(f, "{sym}")?;
                child(f, rhs, wrap_rhs)
            }
        }
    }
}

// ------------------------------------------------------------- positivity

/// Minimum of `e` over the given sample points `(x, optional y)`.
///
/// Callers reject a coefficient function as invalid when the returned
/// minimum is `<= 0`. At least 100 samples are required so the check has a
/// chance of seeing sign changes.
pub fn check_positivity(e: &Expr, samples: &[(f64, Option<f64>)]) -> Result<f64, ExprError> {
    assert!(samples.len() >= 100, "positivity check needs >= 100 samples");
    let mut min = f64::INFINITY;
    for &(x, y) in samples {
        let v = e.eval(x, y)?;
        if v < min {
            min = v;
        }
    }
    Ok(min)
}

/// `n` midpoint samples of the unit interval, for 1D positivity checks.
pub fn unit_interval_samples(n: usize) -> Vec<(f64, Option<f64>)> {
    (0..n)
        .map(|i| ((i as f64 + 0.5) / n as f64, None))
        .collect()
}
