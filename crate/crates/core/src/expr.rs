//! Coefficient expressions.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?
//! unary  := '-' unary | atom
//! atom   := number | symbol | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and unary minus binds tighter than the base of
//! `^`, so `-2^2` is `4` and `2^3^2` is `512`. Symbols are `r`, `x1`..`xN`,
//! `pi` and `e`; functions are `exp ln sin cos sqrt abs min max pow`.

use std::fmt;

use crate::error::{Error, Result};

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
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
    Pow,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
            Func::Pow => "pow",
        }
    }

    fn check_arity(self, got: usize) -> Result<()> {
        let ok = match self {
            Func::Min | Func::Max => got >= 2,
            Func::Pow => got == 2,
            _ => got == 1,
        };
        if ok {
            return Ok(());
        }
        let expected = match self {
            Func::Min | Func::Max => "at least 2",
            Func::Pow => "2",
            _ => "1",
        };
        Err(Error::Arity {
            name: self.name().to_string(),
            expected: expected.to_string(),
            got,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Radius,
    /// Cartesian coordinate, zero-based (`x1` is `Coord(0)`).
    Coord(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Evaluation point. `x` may be empty for purely radial evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Point<'a> {
    pub r: f64,
    pub x: &'a [f64],
}

impl<'a> Point<'a> {
    pub fn radial(r: f64) -> Point<'static> {
        Point { r, x: &[] }
    }

    pub fn cartesian(x: &'a [f64]) -> Point<'a> {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        Point { r, x }
    }
}

impl Expr {
    /// Evaluates the expression. A coordinate that is not present in `p`
    /// evaluates to NaN, which callers surface as a non-finite error.
    pub fn eval(&self, p: Point<'_>) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Radius => p.r,
            Expr::Coord(i) => p.x.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(e) => -e.eval(p),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(p), b.eval(p));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let first = args[0].eval(p);
                match f {
                    Func::Exp => first.exp(),
                    Func::Ln => first.ln(),
                    Func::Sin => first.sin(),
                    Func::Cos => first.cos(),
                    Func::Sqrt => first.sqrt(),
                    Func::Abs => first.abs(),
                    Func::Pow => first.powf(args[1].eval(p)),
                    Func::Min => args[1..].iter().fold(first, |m, e| m.min(e.eval(p))),
                    Func::Max => args[1..].iter().fold(first, |m, e| m.max(e.eval(p))),
                }
            }
        }
    }

    /// True when the expression depends on the point only through `r`.
    pub fn is_radial(&self) -> bool {
        self.max_coord().is_none()
    }

    /// Largest zero-based coordinate index referenced, if any.
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Num(_) | Expr::Radius => None,
            Expr::Coord(i) => Some(*i),
            Expr::Neg(e) => e.max_coord(),
            Expr::Binary(_, a, b) => a.max_coord().max(b.max_coord()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_coord).max(),
        }
    }
}

/// Fully parenthesized rendering; re-parses to an equivalent tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Radius => write!(f, "r"),
            Expr::Coord(i) => write!(f, "x{}", i + 1),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(text: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer {
            src: text.as_bytes(),
            pos: 0,
        };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Tok::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Tok, usize)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = self.src.get(self.pos) else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == b'.' {
            return self.number().map(|v| (Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self
                .src
                .get(self.pos)
                .is_some_and(|b| b.is_ascii_alphanumeric() || *b == b'_')
            {
                self.pos += 1;
            }
            let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
            return Ok((Tok::Ident(s.to_string()), start));
        }
        if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            return Ok((Tok::Op(c as char), start));
        }
        Err(Error::Syntax {
            pos: start,
            msg: format!("unexpected character `{}`", c as char),
        })
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let digits = |lx: &mut Lexer<'_>| {
            let s = lx.pos;
            while lx.src.get(lx.pos).is_some_and(u8::is_ascii_digit) {
                lx.pos += 1;
            }
            lx.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(Error::Syntax {
                pos: start,
                msg: "malformed number".into(),
            });
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2e` or `2exp(...)` is not an exponent; leave it to the parser.
                self.pos = save;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        s.parse::<f64>().map_err(|_| Error::Syntax {
            pos: start,
            msg: format!("malformed number `{s}`"),
        })
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    at: usize,
}

/// Parses an expression, rejecting trailing input.
pub fn parse_expression(text: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: Lexer::tokenize(text)?,
        at: 0,
    };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(Error::Syntax {
            pos: p.pos(),
            msg: format!("unexpected trailing {}", describe(t)),
        }),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == &Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(Error::Syntax {
                pos: self.pos(),
                msg: format!("expected `{c}`, found {}", describe(self.peek())),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr> {
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

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.unary()?;
        if self.peek() == &Tok::Op('^') {
            self.bump();
            let exp = self.factor()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == &Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        let pos = self.pos();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == &Tok::Op('(') {
                    let func = Func::lookup(&name)
                        .ok_or_else(|| Error::UnknownFunction { name: name.clone(), pos })?;
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while self.peek() == &Tok::Op(',') {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(')')?;
                    func.check_arity(args.len())?;
                    return Ok(Expr::Call(func, args));
                }
                symbol(&name, pos)
            }
            t => Err(Error::Syntax {
                pos,
                msg: format!("expected a value, found {}", describe(&t)),
            }),
        }
    }
}

fn symbol(name: &str, pos: usize) -> Result<Expr> {
    match name {
        "r" => return Ok(Expr::Radius),
        "pi" => return Ok(Expr::Num(std::f64::consts::PI)),
        "e" => return Ok(Expr::Num(std::f64::consts::E)),
        _ => {}
    }
    if let Some(idx) = name.strip_prefix('x') {
        if let Ok(k) = idx.parse::<usize>() {
            if k >= 1 && !idx.starts_with('0') {
                return Ok(Expr::Coord(k - 1));
            }
        }
    }
    Err(Error::UnknownSymbol {
        name: name.to_string(),
        pos,
    })
}
