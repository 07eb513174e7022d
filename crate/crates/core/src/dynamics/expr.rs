//! Expression trees for system right-hand sides: exact evaluation, interval
//! evaluation, symbolic differentiation and dependency analysis.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::interval::Interval;

/// Reduced rational exponent `num / den` with `den > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidSystem("zero denominator in exponent".into()));
        }
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
        let s = if den < 0 { -1 } else { 1 };
        Ok(Rational {
            num: s * num / g,
            den: s * den / g,
        })
    }

    pub fn integer(k: i64) -> Self {
        Rational { num: k, den: 1 }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// The exponent as an `i32`, when it is an integer of moderate size.
    pub fn as_int(&self) -> Option<i32> {
        (self.den == 1).then(|| i32::try_from(self.num).ok()).flatten()
    }

    fn minus_one(&self) -> Option<Self> {
        let num = self.num.checked_sub(self.den)?;
        Rational::new(num, self.den).ok()
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.den, self.num < 0) {
            (1, false) => write!(f, "{}", self.num),
            (1, true) => write!(f, "({})", self.num),
            _ => write!(f, "({}/{})", self.num, self.den),
        }
    }
}

/// One node of a right-hand-side expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Pow(Box<Expr>, Rational),
    Sqrt(Box<Expr>),
    Cbrt(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

use Expr::*;

// Simplifying constructors. They fold constants and drop neutral elements,
// which keeps the symbolic derivatives small enough for interval evaluation.

pub fn constant(c: f64) -> Expr {
    Const(c)
}

pub fn var(i: usize) -> Expr {
    Var(i)
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => Const(x + y),
        (Const(x), _) if *x == 0.0 => b,
        (_, Const(y)) if *y == 0.0 => a,
        _ => Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    add(a, neg(b))
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Const(x) => Const(-x),
        Neg(inner) => *inner,
        a => Neg(Box::new(a)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => Const(x * y),
        (Const(x), _) | (_, Const(x)) if *x == 0.0 => Const(0.0),
        (Const(x), _) if *x == 1.0 => b,
        (_, Const(y)) if *y == 1.0 => a,
        (Const(x), _) if *x == -1.0 => neg(b),
        (_, Const(y)) if *y == -1.0 => neg(a),
        (_, Const(_)) => mul(b, a),
        (Const(x), Mul(l, r)) if matches!(**l, Const(_)) => {
            let Const(y) = **l else { unreachable!() };
            mul(Const(x * y), (**r).clone())
        }
        _ if a == b => pow(a, Rational::integer(2)),
        _ => Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) if *y != 0.0 => Const(x / y),
        (Const(x), _) if *x == 0.0 => Const(0.0),
        (_, Const(y)) if *y == 1.0 => a,
        _ => Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, p: Rational) -> Expr {
    if p == Rational::integer(1) {
        return a;
    }
    if p == Rational::integer(0) {
        return Const(1.0);
    }
    if let Const(x) = a {
        if let Ok(v) = pow_value(x, p) {
            return Const(v);
        }
    }
    Pow(Box::new(a), p)
}

pub fn sqrt(a: Expr) -> Expr {
    match a {
        Const(x) if x >= 0.0 => Const(x.sqrt()),
        a => Sqrt(Box::new(a)),
    }
}

pub fn cbrt(a: Expr) -> Expr {
    match a {
        Const(x) => Const(x.cbrt()),
        a => Cbrt(Box::new(a)),
    }
}

pub fn sin(a: Expr) -> Expr {
    match a {
        Const(x) => Const(x.sin()),
        a => Sin(Box::new(a)),
    }
}

pub fn cos(a: Expr) -> Expr {
    match a {
        Const(x) => Const(x.cos()),
        a => Cos(Box::new(a)),
    }
}

pub fn exp(a: Expr) -> Expr {
    match a {
        Const(x) => Const(x.exp()),
        a => Exp(Box::new(a)),
    }
}

/// `y^p` on the reals: integer exponents accept any `y` (nonzero when
/// negative), fractional exponents require `y ≥ 0` (`y > 0` when negative).
pub(crate) fn pow_value(y: f64, p: Rational) -> std::result::Result<f64, ()> {
    match p.as_int() {
        Some(k) => {
            if k < 0 && y == 0.0 {
                Err(())
            } else {
                Ok(y.powi(k))
            }
        }
        None => {
            let pv = p.value();
            if y < 0.0 || (pv < 0.0 && y == 0.0) {
                return Err(());
            }
            // Square and cube roots are correctly rounded; powf is not.
            Ok(match (p.den(), i32::try_from(p.num())) {
                (2, Ok(k)) => y.sqrt().powi(k),
                (3, Ok(k)) => y.cbrt().powi(k),
                _ => y.powf(pv),
            })
        }
    }
}

pub(crate) fn pow_interval(y: Interval, p: Rational) -> Option<Interval> {
    match p.as_int() {
        Some(k) => y.powi(k),
        None => {
            // Monotone on the admissible domain y ≥ 0.
            y.powf(p.value())?;
            let (a, b) = (pow_value(y.lo, p).ok()?, pow_value(y.hi, p).ok()?);
            Some(Interval::new(a.min(b), a.max(b)))
        }
    }
}

impl Expr {
    fn domain_err(&self, value: f64) -> Error {
        let mut node = self.to_string();
        if node.len() > 96 {
            node.truncate(93);
            node.push_str("...");
        }
        Error::Domain { node, value }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(match self {
            Const(c) => *c,
            Var(i) => *x.get(*i).ok_or_else(|| {
                Error::Dimension(format!("variable x{i} but point has {} entries", x.len()))
            })?,
            Add(a, b) => a.eval(x)? + b.eval(x)?,
            Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Div(a, b) => {
                let d = b.eval(x)?;
                if d == 0.0 {
                    return Err(self.domain_err(d));
                }
                a.eval(x)? / d
            }
            Neg(a) => -a.eval(x)?,
            Pow(a, p) => {
                let y = a.eval(x)?;
                pow_value(y, *p).map_err(|_| self.domain_err(y))?
            }
            Sqrt(a) => {
                let y = a.eval(x)?;
                if y < 0.0 {
                    return Err(self.domain_err(y));
                }
                y.sqrt()
            }
            Cbrt(a) => a.eval(x)?.cbrt(),
            Sin(a) => a.eval(x)?.sin(),
            Cos(a) => a.eval(x)?.cos(),
            Exp(a) => a.eval(x)?.exp(),
        })
    }

    /// Natural interval extension over a box of input intervals.
    pub fn eval_interval(&self, x: &[Interval]) -> Result<Interval> {
        Ok(match self {
            Const(c) => Interval::point(*c),
            Var(i) => *x.get(*i).ok_or_else(|| {
                Error::Dimension(format!("variable x{i} but box has {} axes", x.len()))
            })?,
            Add(a, b) => a.eval_interval(x)? + b.eval_interval(x)?,
            Mul(a, b) => a.eval_interval(x)? * b.eval_interval(x)?,
            Div(a, b) => {
                let d = b.eval_interval(x)?;
                a.eval_interval(x)?
                    .div(&d)
                    .ok_or_else(|| self.domain_err(0.0))?
            }
            Neg(a) => -a.eval_interval(x)?,
            Pow(a, p) => {
                let y = a.eval_interval(x)?;
                pow_interval(y, *p).ok_or_else(|| self.domain_err(y.lo))?
            }
            Sqrt(a) => {
                let y = a.eval_interval(x)?;
                y.sqrt().ok_or_else(|| self.domain_err(y.lo))?
            }
            Cbrt(a) => a.eval_interval(x)?.cbrt(),
            Sin(a) => a.eval_interval(x)?.sin(),
            Cos(a) => a.eval_interval(x)?.cos(),
            Exp(a) => a.eval_interval(x)?.exp(),
        })
    }

    /// Symbolic partial derivative with respect to `x_v`.
    pub fn diff(&self, v: usize) -> Expr {
        match self {
            Const(_) => Const(0.0),
            Var(i) => Const(if *i == v { 1.0 } else { 0.0 }),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Neg(a) => neg(a.diff(v)),
            Mul(a, b) => add(
                mul(a.diff(v), (**b).clone()),
                mul((**a).clone(), b.diff(v)),
            ),
            Div(a, b) => {
                let db = b.diff(v);
                if db == Const(0.0) {
                    div(a.diff(v), (**b).clone())
                } else {
                    div(
                        sub(
                            mul(a.diff(v), (**b).clone()),
                            mul((**a).clone(), db),
                        ),
                        pow((**b).clone(), Rational::integer(2)),
                    )
                }
            }
            Pow(a, p) => {
                let da = a.diff(v);
                if da == Const(0.0) {
                    return Const(0.0);
                }
                let lowered = match p.minus_one() {
                    Some(q) => pow((**a).clone(), q),
                    // Exponent arithmetic overflowed; fall back to y^p / y.
                    None => div(self.clone(), (**a).clone()),
                };
                mul(mul(Const(p.value()), lowered), da)
            }
            Sqrt(a) => div(a.diff(v), mul(Const(2.0), self.clone())),
            Cbrt(a) => div(
                a.diff(v),
                mul(Const(3.0), pow(self.clone(), Rational::integer(2))),
            ),
            Sin(a) => mul(cos((**a).clone()), a.diff(v)),
            Cos(a) => neg(mul(sin((**a).clone()), a.diff(v))),
            Exp(a) => mul(self.clone(), a.diff(v)),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Const(_) | Var(_) => vec![],
            Add(a, b) | Mul(a, b) | Div(a, b) => vec![a, b],
            Neg(a) | Pow(a, _) | Sqrt(a) | Cbrt(a) | Sin(a) | Cos(a) | Exp(a) => vec![a],
        }
    }

    /// Every variable index referenced by the tree.
    pub fn variables(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        if let Var(i) = self {
            out.insert(*i);
        }
        for c in self.children() {
            c.collect_vars(out);
        }
    }

    /// Variables that appear under a nonlinear node. Variables entering only
    /// through sums, negations and scaling by constants are excluded.
    pub fn nonlinear_variables(&self) -> BTreeSet<usize> {
        self.dependencies().1
    }

    fn dependencies(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        match self {
            Const(_) => Default::default(),
            Var(i) => ([*i].into(), BTreeSet::new()),
            Add(a, b) => {
                let (mut va, mut na) = a.dependencies();
                let (vb, nb) = b.dependencies();
                va.extend(vb);
                na.extend(nb);
                (va, na)
            }
            Neg(a) => a.dependencies(),
            Mul(a, b) => {
                let (va, na) = a.dependencies();
                let (vb, nb) = b.dependencies();
                if va.is_empty() {
                    (vb, nb)
                } else if vb.is_empty() {
                    (va, na)
                } else {
                    let all: BTreeSet<usize> = va.union(&vb).copied().collect();
                    (all.clone(), all)
                }
            }
            Div(a, b) => {
                let (va, na) = a.dependencies();
                let vb = b.variables();
                if vb.is_empty() {
                    (va, na)
                } else {
                    let all: BTreeSet<usize> = va.union(&vb).copied().collect();
                    (all.clone(), all)
                }
            }
            Pow(a, p) if *p == Rational::integer(1) => a.dependencies(),
            Pow(a, _) | Sqrt(a) | Cbrt(a) | Sin(a) | Cos(a) | Exp(a) => {
                let v = a.variables();
                (v.clone(), v)
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.variables().is_empty()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    fn precedence(&self) -> u8 {
        match self {
            Add(..) => 1,
            Mul(..) | Div(..) => 2,
            Neg(_) => 3,
            Pow(..) => 4,
            Const(c) if c.is_sign_negative() => 0,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.precedence();
        let paren = p < min;
        if paren {
            f.write_str("(")?;
        }
        match self {
            Const(c) => write!(f, "{c:?}")?,
            Var(i) => write!(f, "x{i}")?,
            Add(a, b) => {
                a.fmt_prec(f, 1)?;
                match &**b {
                    Neg(inner) => {
                        f.write_str(" - ")?;
                        inner.fmt_prec(f, 2)?;
                    }
                    _ => {
                        f.write_str(" + ")?;
                        b.fmt_prec(f, 2)?;
                    }
                }
            }
            Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                f.write_str(" * ")?;
                b.fmt_prec(f, 3)?;
            }
            Div(a, b) => {
                a.fmt_prec(f, 2)?;
                f.write_str(" / ")?;
                b.fmt_prec(f, 3)?;
            }
            Neg(a) => {
                f.write_str("-")?;
                a.fmt_prec(f, 3)?;
            }
            Pow(a, p) => {
                a.fmt_prec(f, 5)?;
                write!(f, "^{p}")?;
            }
            Sqrt(a) => write!(f, "sqrt({a})")?,
            Cbrt(a) => write!(f, "cbrt({a})")?,
            Sin(a) => write!(f, "sin({a})")?,
            Cos(a) => write!(f, "cos({a})")?,
            Exp(a) => write!(f, "exp({a})")?,
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
