use std::fmt;

use crate::interval::Interval;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// Scalar expression over the state variables `x_1 .. x_n` (stored 0-based).
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn var(k: usize) -> Expr {
        Expr::Var(k)
    }

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn pow(self, k: i32) -> Expr {
        Expr::Pow(Box::new(self), k)
    }

    pub fn call(f: Func, e: Expr) -> Expr {
        Expr::Call(f, Box::new(e))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(k) => *x
                .get(*k)
                .ok_or(Error::DimensionMismatch { expected: k + 1, got: x.len() })?,
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d == 0.0 {
                    return Err(Error::Domain("division by zero".into()));
                }
                a.eval(x)? / d
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x)?;
                if *k < 0 && base == 0.0 {
                    return Err(Error::Domain("negative power of zero".into()));
                }
                base.powi(*k)
            }
            Expr::Call(f, a) => {
                let v = a.eval(x)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(Error::Domain(format!("sqrt of negative value {v}")));
                        }
                        v.sqrt()
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(Error::Domain(format!("non-finite value in `{self}`")));
        }
        Ok(v)
    }

    /// Natural interval extension over a box.
    pub fn eval_interval(&self, cube: &[Interval]) -> Result<Interval> {
        let v = match self {
            Expr::Const(c) => Interval::point(*c),
            Expr::Var(k) => *cube
                .get(*k)
                .ok_or(Error::DimensionMismatch { expected: k + 1, got: cube.len() })?,
            Expr::Neg(a) => -a.eval_interval(cube)?,
            Expr::Add(a, b) => a.eval_interval(cube)? + b.eval_interval(cube)?,
            Expr::Sub(a, b) => a.eval_interval(cube)? - b.eval_interval(cube)?,
            Expr::Mul(a, b) => {
                // Squares written as products keep their sign information.
                if a == b {
                    a.eval_interval(cube)?.powi(2)?
                } else {
                    a.eval_interval(cube)? * b.eval_interval(cube)?
                }
            }
            Expr::Div(a, b) => a.eval_interval(cube)?.div(b.eval_interval(cube)?)?,
            Expr::Pow(a, k) => a.eval_interval(cube)?.powi(*k)?,
            Expr::Call(f, a) => {
                let v = a.eval_interval(cube)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => v.sqrt()?,
                }
            }
        };
        if v.lo.is_nan() || v.hi.is_nan() {
            return Err(Error::Domain(format!("undefined interval value in `{self}`")));
        }
        Ok(v)
    }

    /// The value when the expression mentions no variable.
    pub fn as_constant(&self) -> Option<f64> {
        if self.max_var().is_some() {
            return None;
        }
        self.eval(&[]).ok()
    }

    /// Largest 0-based variable index used.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(k) => Some(*k),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(p), Some(q)) => Some(p.max(q)),
                    (p, q) => p.or(q),
                }
            }
        }
    }

    /// `(coeffs, offset)` when the expression is affine in `x_1 .. x_n`.
    pub fn affine(&self, n: usize) -> Option<(Vec<f64>, f64)> {
        match self {
            Expr::Const(c) => Some((vec![0.0; n], *c)),
            Expr::Var(k) => {
                let mut v = vec![0.0; n];
                *v.get_mut(*k)? = 1.0;
                Some((v, 0.0))
            }
            Expr::Neg(a) => {
                let (v, c) = a.affine(n)?;
                Some((v.iter().map(|t| -t).collect(), -c))
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let (va, ca) = a.affine(n)?;
                let (vb, cb) = b.affine(n)?;
                let s = if matches!(self, Expr::Add(..)) { 1.0 } else { -1.0 };
                Some((va.iter().zip(&vb).map(|(p, q)| p + s * q).collect(), ca + s * cb))
            }
            Expr::Mul(a, b) => {
                if let Some(k) = a.as_constant() {
                    let (v, c) = b.affine(n)?;
                    Some((v.iter().map(|t| k * t).collect(), k * c))
                } else if let Some(k) = b.as_constant() {
                    let (v, c) = a.affine(n)?;
                    Some((v.iter().map(|t| k * t).collect(), k * c))
                } else {
                    None
                }
            }
            Expr::Div(a, b) => {
                let k = b.as_constant()?;
                if k == 0.0 {
                    return None;
                }
                let (v, c) = a.affine(n)?;
                Some((v.iter().map(|t| t / k).collect(), c / k))
            }
            Expr::Pow(a, 1) => a.affine(n),
            Expr::Pow(_, 0) => Some((vec![0.0; n], 1.0)),
            _ => self.as_constant().map(|c| (vec![0.0; n], c)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if c.is_sign_negative() => 2,
            _ => 5,
        }
    }

    fn write_with(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let paren = self.precedence() < min_prec;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Expr::Const(c) => write_number(f, *c)?,
            Expr::Var(k) => write!(f, "x{}", k + 1)?,
            Expr::Neg(a) => {
                f.write_str("-")?;
                // `-` directly before a literal would be read back as a
                // negative constant, so literals get parentheses.
                let inner = if matches!(**a, Expr::Const(_)) { 6 } else { 3 };
                a.write_with(f, inner)?;
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                a.write_with(f, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                b.write_with(f, 2)?;
            }
            Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.write_with(f, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                b.write_with(f, 3)?;
            }
            Expr::Pow(a, k) => {
                a.write_with(f, 5)?;
                write!(f, "^{k}")?;
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write_with(f, 0)?;
                f.write_str(")")?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.fract() == 0.0 && c.abs() < 1e15 && !(c == 0.0 && c.is_sign_negative()) {
        write!(f, "{}", c as i64)
    } else {
        write!(f, "{c:?}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write_with(f, 0)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $variant:ident) => {
        impl std::ops::$tr for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}
binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}
