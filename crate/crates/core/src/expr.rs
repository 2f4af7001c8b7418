//! A small expression language for writing contrast functions by hand.
//!
//! Variables `x1..xn` address the first slot (ζ) and `y1..yn` the second
//! slot (ξ) of a pair-groupoid arrow. Supported: numeric literals, `+ - * /`,
//! `^` with an integer literal exponent, unary minus, and the functions
//! `exp log sin cos sqrt`. Precedence from tightest: `^`, unary minus,
//! `* /`, `+ -`; equal precedence associates to the left. There is no
//! implicit multiplication.

use std::fmt;

use thiserror::Error;

use crate::jets::{check_dim, Jet3, JetError, SmoothFn};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at line {line}, column {column} (offset {offset})")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source.
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty expression")]
    Empty,
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("variable `{name}` out of range for dimension {dim}")]
    VariableOutOfRange { name: String, dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

/// First (`x`, ζ) or second (`y`, ξ) slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based coordinate index within the slot.
    Var(Slot, usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

/// A parsed expression together with the slot dimension it was checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprAst {
    pub root: Expr,
    pub dim: usize,
}

impl fmt::Display for Expr {
    /// Canonical, fully parenthesised form. Re-parsing it yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v:?}"),
            Expr::Var(Slot::First, i) => write!(f, "x{}", i + 1),
            Expr::Var(Slot::Second, i) => write!(f, "y{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, n) => write!(f, "({a}^{n})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl fmt::Display for ExprAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text = &src[start..i];
                let v: f64 = text.parse().map_err(|_| {
                    error_at(src, start, ParseErrorKind::Syntax(format!("malformed number `{text}`")))
                })?;
                lx.toks.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(src[start..i].to_string()), start));
            } else {
                let tok = match c {
                    '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => {
                        return Err(error_at(
                            src,
                            i,
                            ParseErrorKind::Syntax(format!("unexpected character `{c}`")),
                        ))
                    }
                };
                lx.toks.push((tok, i));
                i += c.len_utf8();
            }
        }
        lx.toks.push((Tok::End, lx.src.len()));
        Ok(lx.toks)
    }
}

fn error_at(src: &str, offset: usize, kind: ParseErrorKind) -> ParseError {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = offset - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    ParseError { kind, offset, line, column }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        error_at(self.src, self.offset(), kind)
    }

    fn unexpected(&self) -> ParseError {
        let what = match self.peek() {
            Tok::End => "unexpected end of input".to_string(),
            Tok::Num(v) => format!("unexpected number {v}"),
            Tok::Ident(s) => format!("unexpected identifier `{s}`"),
            Tok::Op(c) => format!("unexpected `{c}`"),
            Tok::LParen => "unexpected `(`".to_string(),
            Tok::RParen => "unexpected `)`".to_string(),
        };
        self.err(ParseErrorKind::Syntax(what))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let mut base = self.primary()?;
        while *self.peek() == Tok::Op('^') {
            self.bump();
            let negative = if *self.peek() == Tok::Op('-') {
                self.bump();
                true
            } else {
                false
            };
            let n = match self.peek() {
                Tok::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => *v as i32,
                _ => {
                    return Err(self.err(ParseErrorKind::Syntax(
                        "exponent must be an integer literal".into(),
                    )))
                }
            };
            self.bump();
            base = Expr::Pow(Box::new(base), if negative { -n } else { n });
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected());
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return Err(self.unexpected());
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.unexpected());
                    }
                    self.bump();
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match name.as_str() {
                    "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Const(std::f64::consts::E)),
                    _ => {}
                }
                self.variable(&name, start)
            }
            _ => Err(self.unexpected()),
        }
    }

    fn variable(&self, name: &str, start: usize) -> Result<Expr, ParseError> {
        let slot = match name.as_bytes()[0] {
            b'x' => Slot::First,
            b'y' => Slot::Second,
            _ => {
                return Err(error_at(
                    self.src,
                    start,
                    ParseErrorKind::UnknownIdentifier(name.to_string()),
                ))
            }
        };
        let idx: usize = name[1..].parse().map_err(|_| {
            error_at(self.src, start, ParseErrorKind::UnknownIdentifier(name.to_string()))
        })?;
        if idx == 0 || idx > self.dim {
            return Err(error_at(
                self.src,
                start,
                ParseErrorKind::VariableOutOfRange { name: name.to_string(), dim: self.dim },
            ));
        }
        Ok(Expr::Var(slot, idx - 1))
    }
}

/// Parse `src` against slot dimension `dim`.
pub fn parse(src: &str, dim: usize) -> Result<ExprAst, ParseError> {
    if src.trim().is_empty() {
        return Err(error_at(src, 0, ParseErrorKind::Empty));
    }
    let toks = Lexer::run(src)?;
    let mut p = Parser { src, toks, pos: 0, dim };
    let root = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected());
    }
    Ok(ExprAst { root, dim })
}

impl Expr {
    fn eval_jet(&self, x: &[Jet3], dim: usize) -> Result<Jet3, JetError> {
        Ok(match self {
            Expr::Const(v) => Jet3::constant(*v),
            Expr::Var(Slot::First, i) => x[*i],
            Expr::Var(Slot::Second, i) => x[dim + i],
            Expr::Neg(a) => -a.eval_jet(x, dim)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval_jet(x, dim)?;
                let b = b.eval_jet(x, dim)?;
                let (v, op) = match op {
                    BinOp::Add => (a + b, "addition"),
                    BinOp::Sub => (a - b, "subtraction"),
                    BinOp::Mul => (a * b, "multiplication"),
                    BinOp::Div => (a.checked_div(&b)?, "division"),
                };
                if !v.is_finite() {
                    return Err(JetError::NonFinite { op });
                }
                v
            }
            Expr::Pow(a, n) => a.eval_jet(x, dim)?.powi(*n)?,
            Expr::Call(func, a) => {
                let a = a.eval_jet(x, dim)?;
                match func {
                    Func::Exp => a.exp()?,
                    Func::Log => a.ln()?,
                    Func::Sin => a.sin()?,
                    Func::Cos => a.cos()?,
                    Func::Sqrt => a.sqrt()?,
                }
            }
        })
    }

    /// Plain floating-point evaluation; `None` where the jet path would error.
    pub fn eval_plain(&self, x: &[f64], dim: usize) -> Option<f64> {
        let v = match self {
            Expr::Const(v) => *v,
            Expr::Var(Slot::First, i) => x[*i],
            Expr::Var(Slot::Second, i) => x[dim + i],
            Expr::Neg(a) => -a.eval_plain(x, dim)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval_plain(x, dim)?;
                let b = b.eval_plain(x, dim)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b == 0.0 => return None,
                    BinOp::Div => a / b,
                }
            }
            Expr::Pow(a, n) => {
                let a = a.eval_plain(x, dim)?;
                if *n < 0 && a == 0.0 {
                    return None;
                }
                a.powi(*n)
            }
            Expr::Call(func, a) => {
                let a = a.eval_plain(x, dim)?;
                match func {
                    Func::Exp => a.exp(),
                    Func::Log if a > 0.0 => a.ln(),
                    Func::Sqrt if a > 0.0 => a.sqrt(),
                    Func::Log | Func::Sqrt => return None,
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                }
            }
        };
        v.is_finite().then_some(v)
    }
}

/// Evaluate on jets; `inputs` holds both slots, `x` first then `y`.
pub fn eval_jet(ast: &ExprAst, inputs: &[Jet3]) -> Result<Jet3, JetError> {
    check_dim(2 * ast.dim, inputs.len())?;
    ast.root.eval_jet(inputs, ast.dim)
}

impl SmoothFn for ExprAst {
    fn arity(&self) -> usize {
        2 * self.dim
    }

    fn eval(&self, x: &[Jet3]) -> Result<Jet3, JetError> {
        eval_jet(self, x)
    }
}
