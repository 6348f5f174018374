//! Closed-form scalar expressions of `(x, y, z)` with exact gradients.
//!
//! Expressions are evaluated in forward mode on [`Dual`] numbers, so every
//! analytic permittivity entry comes with its exact spatial derivatives.
//!
//! Grammar (usual precedence, `^` right associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x' | 'y' | 'z' | 'x1' | 'x2' | 'x3' | 'pi'
//!        | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func  := sin | cos | exp | ln | sqrt | tanh | bump
//! ```
//!
//! `bump(cx, cy, cz, rx, ry, rz)` is the C¹ tensor bump
//! `Π_d (1 − s_d²)²` with `s_d = (x_d − c_d)/r_d`, zero outside the box of
//! half-widths `r`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value with its gradient with respect to `(x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; 3],
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Self { v, d: [0.0; 3] }
    }

    pub fn variable(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 3];
        d[axis] = 1.0;
        Self { v, d }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        Self { v: f, d: self.d.map(|g| df * g) }
    }

    pub fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }

    pub fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v)
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn tanh(self) -> Self {
        let t = self.v.tanh();
        self.chain(t, 1.0 - t * t)
    }

    pub fn powf(self, p: f64) -> Self {
        if p == 0.0 {
            return Dual::constant(1.0);
        }
        self.chain(self.v.powf(p), p * self.v.powf(p - 1.0))
    }

    pub fn pow(self, other: Dual) -> Self {
        if other.d == [0.0; 3] {
            self.powf(other.v)
        } else {
            (other * self.ln()).exp()
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: std::array::from_fn(|k| self.d[k] + o.d[k]) }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: std::array::from_fn(|k| self.d[k] - o.d[k]) }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: std::array::from_fn(|k| self.d[k] * o.v + self.v * o.d[k]) }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        Dual { v: self.v * inv, d: std::array::from_fn(|k| (self.d[k] * o.v - self.v * o.d[k]) * inv * inv) }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: self.d.map(|g| -g) }
    }
}

/// Compactly supported C¹ tensor bump `amplitude · Π_d (1 − s_d²)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    pub radius: [f64; 3],
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

/// sup |d/ds (1 − s²)²| on [−1, 1], attained at s = 1/√3.
pub(crate) const BUMP_PROFILE_SLOPE: f64 = 1.539_600_717_839_002; // 8 / (3√3)

impl Bump {
    pub fn new(center: [f64; 3], radius: [f64; 3]) -> Self {
        Self { center, radius, amplitude: 1.0 }
    }

    pub fn eval(&self, x: [f64; 3]) -> Dual {
        let mut f = [0.0; 3];
        let mut df = [0.0; 3];
        for d in 0..3 {
            let s = (x[d] - self.center[d]) / self.radius[d];
            if s.abs() >= 1.0 {
                return Dual::constant(0.0);
            }
            let q = 1.0 - s * s;
            f[d] = q * q;
            df[d] = -4.0 * s * q / self.radius[d];
        }
        let a = self.amplitude;
        Dual {
            v: a * f[0] * f[1] * f[2],
            d: [a * df[0] * f[1] * f[2], a * f[0] * df[1] * f[2], a * f[0] * f[1] * df[2]],
        }
    }

    /// Exact `max(sup|ξ|, max_k sup|∂_k ξ|)`.
    pub fn w1inf_norm(&self) -> f64 {
        let min_r = self.radius.iter().cloned().fold(f64::INFINITY, f64::min);
        self.amplitude.abs() * 1f64.max(BUMP_PROFILE_SLOPE / min_r)
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || self.radius.iter().any(|&r| !(r > 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    Tanh,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn apply(self, a: Dual) -> Dual {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Exp => a.exp(),
            Func::Ln => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Tanh => a.tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Neg(Arc<Expr>),
    Call(Func, Arc<Expr>),
    Bump(Bump),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, x: [f64; 3]) -> Dual {
        match self {
            Expr::Const(c) => Dual::constant(*c),
            Expr::Coord(k) => Dual::variable(x[*k], *k),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => a.eval(x).pow(b.eval(x)),
            Expr::Neg(a) => -a.eval(x),
            Expr::Call(f, a) => f.apply(a.eval(x)),
            Expr::Bump(b) => b.eval(x),
        }
    }

    /// Value of an expression without coordinates, after folding.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            Expr::Coord(_) | Expr::Bump(_) => None,
            Expr::Add(a, b) => Some(a.as_constant()? + b.as_constant()?),
            Expr::Sub(a, b) => Some(a.as_constant()? - b.as_constant()?),
            Expr::Mul(a, b) => match (a.as_constant(), b.as_constant()) {
                (Some(0.0), _) | (_, Some(0.0)) => Some(0.0),
                (Some(p), Some(q)) => Some(p * q),
                _ => None,
            },
            Expr::Div(a, b) => Some(a.as_constant()? / b.as_constant()?),
            Expr::Pow(a, b) => Some(a.as_constant()?.powf(b.as_constant()?)),
            Expr::Neg(a) => Some(-a.as_constant()?),
            Expr::Call(f, a) => Some(f.apply(Dual::constant(a.as_constant()?)).v),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    /// `a·self + b·other` with trivial terms dropped.
    pub fn combine(a: f64, lhs: &Expr, b: f64, rhs: &Expr) -> Expr {
        let scaled = |c: f64, e: &Expr| -> Option<Expr> {
            if c == 0.0 || e.is_zero() {
                None
            } else if let Some(v) = e.as_constant() {
                Some(Expr::Const(c * v))
            } else if c == 1.0 {
                Some(e.clone())
            } else {
                Some(Expr::Mul(Arc::new(Expr::Const(c)), Arc::new(e.clone())))
            }
        };
        match (scaled(a, lhs), scaled(b, rhs)) {
            (None, None) => Expr::Const(0.0),
            (Some(e), None) | (None, Some(e)) => e,
            (Some(Expr::Const(p)), Some(Expr::Const(q))) => Expr::Const(p + q),
            (Some(p), Some(q)) => Expr::Add(Arc::new(p), Arc::new(q)),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Coord(k) => write!(f, "{}", ["x", "y", "z"][*k]),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bump(b) => {
                let c = b.center;
                let r = b.radius;
                if b.amplitude != 1.0 {
                    write!(f, "{:?} * ", b.amplitude)?;
                }
                write!(f, "bump({:?}, {:?}, {:?}, {:?}, {:?}, {:?})", c[0], c[1], c[2], r[0], r[1], r[2])
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Arc::new(lhs), Arc::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Arc::new(lhs), Arc::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Arc::new(lhs), Arc::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Arc::new(lhs), Arc::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Arc::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Expr::Pow(Arc::new(base), Arc::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let rest = &self.src[start..];
                let mut end = 0;
                let bytes = rest.as_bytes();
                while end < bytes.len() {
                    let b = bytes[end];
                    let exp_sign = (b == b'+' || b == b'-') && end > 0 && matches!(bytes[end - 1], b'e' | b'E');
                    if b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || exp_sign {
                        end += 1;
                    } else {
                        break;
                    }
                }
                let v: f64 = rest[..end].parse().map_err(|_| self.error("malformed number"))?;
                self.pos += end;
                Ok(Expr::Const(v))
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let rest = &self.src[start..];
                let end = rest.find(|c: char| !c.is_ascii_alphanumeric() && c != '_').unwrap_or(rest.len());
                let ident = &rest[..end];
                self.pos += end;
                match ident {
                    "x" | "x1" => Ok(Expr::Coord(0)),
                    "y" | "x2" => Ok(Expr::Coord(1)),
                    "z" | "x3" => Ok(Expr::Coord(2)),
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    _ => {
                        let func = match ident {
                            "sin" => Some(Func::Sin),
                            "cos" => Some(Func::Cos),
                            "exp" => Some(Func::Exp),
                            "ln" => Some(Func::Ln),
                            "sqrt" => Some(Func::Sqrt),
                            "tanh" => Some(Func::Tanh),
                            "bump" => None,
                            _ => {
                                self.pos = start;
                                return Err(self.error(&format!("unknown identifier `{ident}`")));
                            }
                        };
                        let args = self.arguments()?;
                        match func {
                            Some(f) if args.len() == 1 => Ok(Expr::Call(f, Arc::new(args.into_iter().next().unwrap()))),
                            Some(_) => Err(self.error(&format!("`{ident}` takes one argument"))),
                            None => {
                                let vals: Option<Vec<f64>> = args.iter().map(Expr::as_constant).collect();
                                match vals {
                                    Some(v) if v.len() == 6 => {
                                        let bump = Bump::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]);
                                        if bump.is_zero() {
                                            return Err(self.error("bump radii must be positive"));
                                        }
                                        Ok(Expr::Bump(bump))
                                    }
                                    _ => Err(self.error("bump takes six constant arguments (center, radii)")),
                                }
                            }
                        }
                    }
                }
            }
            _ => Err(self.error("expected a number, variable, function or '('")),
        }
    }

    fn arguments(&mut self) -> Result<Vec<Expr>> {
        if !self.eat('(') {
            return Err(self.error("expected '('"));
        }
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        if !self.eat(')') {
            return Err(self.error("expected ')'"));
        }
        Ok(args)
    }
}
