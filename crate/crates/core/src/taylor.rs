//! Certified first-order enclosures of reference functions on a box.
//!
//! The main entry point builds, for each output, an affine function
//! `f(c) + a·(x - c)` plus a remainder interval. It walks the expression
//! tree once: affine nodes are propagated exactly, products keep their
//! quadratic cross term as remainder, and every elementary function is
//! replaced by a tangent line with a certified local remainder on the node's
//! input range. Where the Hessian of the whole output can be bounded, the
//! Lagrange band `±½ M ‖δ‖²` is intersected with the compositional one.

use crate::dynamics::expr::{pow_value, Expr, Rational};
use crate::dynamics::DynamicalSystem;
use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;
use crate::interval::Interval;

/// Affine lower and upper bounds of a vector function on a box:
/// `a_low·x + b_low ≤ f(x) ≤ a_up·x + b_up` for every `x` in `bx`.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifiedEnclosure {
    pub bx: Hyperrectangle,
    pub a_low: Vec<Vec<f64>>,
    pub a_up: Vec<Vec<f64>>,
    pub b_low: Vec<f64>,
    pub b_up: Vec<f64>,
}

/// One row of a [`CertifiedEnclosure`].
#[derive(Clone, Debug, PartialEq)]
pub struct AffineBand {
    pub a_low: Vec<f64>,
    pub a_up: Vec<f64>,
    pub b_low: f64,
    pub b_up: f64,
}

impl AffineBand {
    /// `max_x (upper(x) - lower(x))` over the box.
    pub fn width(&self, bx: &Hyperrectangle) -> f64 {
        let slope_gap: f64 = self
            .a_up
            .iter()
            .zip(&self.a_low)
            .zip(bx.radius())
            .map(|((u, l), d)| (u - l).abs() * d)
            .sum();
        let at_center: f64 = self
            .a_up
            .iter()
            .zip(&self.a_low)
            .zip(bx.center())
            .map(|((u, l), c)| (u - l) * c)
            .sum();
        self.b_up - self.b_low + at_center + slope_gap
    }

    pub fn lower_at(&self, x: &[f64]) -> f64 {
        dot(&self.a_low, x) + self.b_low
    }

    pub fn upper_at(&self, x: &[f64]) -> f64 {
        dot(&self.a_up, x) + self.b_up
    }

    /// Band whose two faces share the slope `a` (centered at `c`) and
    /// differ by the remainder `rem`.
    fn from_centered(c: &[f64], value: f64, a: Vec<f64>, rem: Interval) -> Self {
        let offset = value - dot(&a, c);
        AffineBand {
            a_low: a.clone(),
            a_up: a,
            b_low: offset + rem.lo,
            b_up: offset + rem.hi,
        }
    }
}

impl CertifiedEnclosure {
    pub fn from_rows(bx: Hyperrectangle, rows: Vec<AffineBand>) -> Self {
        let mut e = CertifiedEnclosure {
            bx,
            a_low: Vec::with_capacity(rows.len()),
            a_up: Vec::with_capacity(rows.len()),
            b_low: Vec::with_capacity(rows.len()),
            b_up: Vec::with_capacity(rows.len()),
        };
        for r in rows {
            e.a_low.push(r.a_low);
            e.a_up.push(r.a_up);
            e.b_low.push(r.b_low);
            e.b_up.push(r.b_up);
        }
        e
    }

    pub fn m(&self) -> usize {
        self.b_low.len()
    }

    pub fn row(&self, j: usize) -> AffineBand {
        AffineBand {
            a_low: self.a_low[j].clone(),
            a_up: self.a_up[j].clone(),
            b_low: self.b_low[j],
            b_up: self.b_up[j],
        }
    }

    /// Maximum gap between the upper and lower face of output `j`.
    pub fn width(&self, j: usize) -> f64 {
        self.row(j).width(&self.bx)
    }
}

pub(crate) fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

/// Tangent-line relaxation of a scalar function on an interval:
/// `slope·y + intercept + r_min ≤ g(y) ≤ slope·y + intercept + r_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarRelaxation {
    pub slope: f64,
    pub intercept: f64,
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ElementaryKind {
    Sqrt,
    Cbrt,
    Sin,
    Cos,
    Exp,
    Pow(Rational),
    Recip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Curvature {
    Convex,
    Concave,
    Mixed,
}

impl ElementaryKind {
    fn value(self, y: f64) -> f64 {
        match self {
            ElementaryKind::Sqrt => y.sqrt(),
            ElementaryKind::Cbrt => y.cbrt(),
            ElementaryKind::Sin => y.sin(),
            ElementaryKind::Cos => y.cos(),
            ElementaryKind::Exp => y.exp(),
            ElementaryKind::Pow(p) => pow_value(y, p).unwrap_or(f64::NAN),
            ElementaryKind::Recip => 1.0 / y,
        }
    }

    fn derivative(self, y: f64) -> f64 {
        match self {
            ElementaryKind::Sqrt => 0.5 / y.sqrt(),
            ElementaryKind::Cbrt => 1.0 / (3.0 * y.cbrt() * y.cbrt()),
            ElementaryKind::Sin => y.cos(),
            ElementaryKind::Cos => -y.sin(),
            ElementaryKind::Exp => y.exp(),
            ElementaryKind::Pow(p) => match p.as_int() {
                Some(0) => 0.0,
                Some(k) => k as f64 * y.powi(k - 1),
                None => p.value() * y.powf(p.value() - 1.0),
            },
            ElementaryKind::Recip => -1.0 / (y * y),
        }
    }

    fn range(self, y: Interval) -> Option<Interval> {
        match self {
            ElementaryKind::Sqrt => y.sqrt(),
            ElementaryKind::Cbrt => Some(y.cbrt()),
            ElementaryKind::Sin => Some(y.sin()),
            ElementaryKind::Cos => Some(y.cos()),
            ElementaryKind::Exp => Some(y.exp()),
            ElementaryKind::Pow(p) => crate::dynamics::expr::pow_interval(y, p),
            ElementaryKind::Recip => y.recip(),
        }
    }

    fn defined_on(self, y: Interval) -> bool {
        match self {
            ElementaryKind::Sqrt => y.lo >= 0.0,
            ElementaryKind::Recip => !y.contains(0.0),
            ElementaryKind::Pow(p) => match p.as_int() {
                Some(k) if k < 0 => !y.contains(0.0),
                Some(_) => true,
                None if p.value() < 0.0 => y.lo > 0.0,
                None => y.lo >= 0.0,
            },
            _ => true,
        }
    }

    /// Enclosure of `g''` on `y`; `None` where it is unbounded.
    fn second_derivative(self, y: Interval) -> Option<Interval> {
        match self {
            ElementaryKind::Sin => Some(-y.sin()),
            ElementaryKind::Cos => Some(-y.cos()),
            ElementaryKind::Exp => Some(y.exp()),
            ElementaryKind::Pow(p) => match p.as_int() {
                Some(k) => {
                    let c = (k as f64) * (k as f64 - 1.0);
                    Some(y.powi(k - 2)?.scale(c))
                }
                None => {
                    let pv = p.value();
                    if pv < 2.0 && y.lo <= 0.0 {
                        return None;
                    }
                    Some(y.powf(pv - 2.0)?.scale(pv * (pv - 1.0)))
                }
            },
            ElementaryKind::Recip => Some(y.powi(-3)?.scale(2.0)),
            ElementaryKind::Sqrt | ElementaryKind::Cbrt => None,
        }
    }

    fn curvature(self, y: Interval) -> Curvature {
        let by_sign = |lo: f64, hi: f64| {
            if lo >= 0.0 {
                Curvature::Convex
            } else if hi <= 0.0 {
                Curvature::Concave
            } else {
                Curvature::Mixed
            }
        };
        match self {
            ElementaryKind::Exp => Curvature::Convex,
            ElementaryKind::Sqrt => Curvature::Concave,
            ElementaryKind::Cbrt => {
                if y.lo >= 0.0 {
                    Curvature::Concave
                } else if y.hi <= 0.0 {
                    Curvature::Convex
                } else {
                    Curvature::Mixed
                }
            }
            ElementaryKind::Recip => {
                if y.lo > 0.0 {
                    Curvature::Convex
                } else {
                    Curvature::Concave
                }
            }
            ElementaryKind::Pow(p) => match p.as_int() {
                Some(k) => {
                    let c = (k as f64) * (k as f64 - 1.0);
                    if c == 0.0 {
                        return Curvature::Convex;
                    }
                    let base = if c > 0.0 { Curvature::Convex } else { Curvature::Concave };
                    if k % 2 == 0 || y.lo >= 0.0 {
                        base
                    } else if y.hi <= 0.0 {
                        flip(base)
                    } else {
                        Curvature::Mixed
                    }
                }
                None => {
                    let pv = p.value();
                    if pv * (pv - 1.0) >= 0.0 {
                        Curvature::Convex
                    } else {
                        Curvature::Concave
                    }
                }
            },
            ElementaryKind::Sin | ElementaryKind::Cos => {
                let g2 = self.second_derivative(y).expect("trig curvature is bounded");
                by_sign(g2.lo, g2.hi)
            }
        }
    }
}

fn flip(c: Curvature) -> Curvature {
    match c {
        Curvature::Convex => Curvature::Concave,
        Curvature::Concave => Curvature::Convex,
        Curvature::Mixed => Curvature::Mixed,
    }
}

/// Tangent-line relaxation of `func` at `center` over `interval`.
///
/// Convex pieces use the tangent as exact lower face and the larger endpoint
/// gap as upper face, concave pieces mirror this, and mixed-curvature pieces
/// take the Lagrange band from an interval bound on `g''` and clip it so the
/// band does not leave the range of `g` on the interval. `cbrt` across zero
/// falls back to the constant band between its endpoint values.
pub fn expand_elementary(
    func: ElementaryKind,
    interval: Interval,
    center: f64,
) -> Result<ScalarRelaxation> {
    let (lo, hi) = (interval.lo, interval.hi);
    if !(lo <= hi) {
        return Err(Error::InvalidInterval { lo, hi });
    }
    if !interval.contains(center) {
        return Err(Error::InvalidInterval { lo: center, hi: center });
    }
    if !func.defined_on(interval) {
        return Err(Error::Domain {
            node: format!("{func:?}"),
            value: lo,
        });
    }
    let gy0 = func.value(center);
    if func == ElementaryKind::Cbrt && lo < 0.0 && hi > 0.0 {
        return Ok(ScalarRelaxation {
            slope: 0.0,
            intercept: gy0,
            r_min: lo.cbrt() - gy0,
            r_max: hi.cbrt() - gy0,
        });
    }
    let slope = if lo == hi && !func.derivative(center).is_finite() {
        0.0
    } else {
        func.derivative(center)
    };
    if !slope.is_finite() {
        return Err(Error::NonDifferentiable {
            node: format!("{func:?} at {center}"),
        });
    }
    let intercept = gy0 - slope * center;
    if lo == hi {
        return Ok(ScalarRelaxation { slope, intercept, r_min: 0.0, r_max: 0.0 });
    }
    // Remainder of the tangent at y, measured relative to g(y0) to keep the
    // cancellation small.
    let gap = |y: f64| (func.value(y) - gy0) - slope * (y - center);
    let (r_min, r_max) = match func.curvature(interval) {
        Curvature::Convex => (0.0, gap(lo).max(gap(hi)).max(0.0)),
        Curvature::Concave => (gap(lo).min(gap(hi)).min(0.0), 0.0),
        Curvature::Mixed => {
            let g2 = func.second_derivative(interval).ok_or_else(|| {
                Error::EnclosureUnavailable(format!("{func:?} has unbounded curvature on {interval}"))
            })?;
            let sq = (lo - center).powi(2).max((hi - center).powi(2));
            let mut r_min = 0.5 * g2.lo.min(0.0) * sq;
            let mut r_max = 0.5 * g2.hi.max(0.0) * sq;
            if let Some(range) = func.range(interval) {
                // Keep the band inside [L, U]: r ≥ L - max tangent, r ≤ U - min tangent.
                let (e_lo, e_hi) = (slope * (lo - center), slope * (hi - center));
                let (t_lo, t_hi) = (e_lo.min(e_hi), e_lo.max(e_hi));
                r_min = r_min.max(range.lo - gy0 - t_hi);
                r_max = r_max.min(range.hi - gy0 - t_lo);
                if r_min > r_max {
                    let mid = 0.5 * (r_min + r_max);
                    r_min = mid;
                    r_max = mid;
                }
            }
            (r_min, r_max)
        }
    };
    Ok(ScalarRelaxation { slope, intercept, r_min, r_max })
}

/// `g(x) ∈ value + a·(x - c) + rem` for all `x` in the box.
#[derive(Clone, Debug)]
struct Form {
    value: f64,
    a: Vec<f64>,
    rem: Interval,
    /// Enclosure of the node's values on the box.
    range: Interval,
}

impl Form {
    fn constant(k: f64, n: usize) -> Self {
        Form { value: k, a: vec![0.0; n], rem: Interval::point(0.0), range: Interval::point(k) }
    }

    fn is_constant(&self) -> bool {
        self.a.iter().all(|a| *a == 0.0) && self.rem.lo == 0.0 && self.rem.hi == 0.0
    }

    fn linear_mag(&self, delta: &[f64]) -> f64 {
        self.a.iter().zip(delta).map(|(a, d)| a.abs() * d).sum()
    }

    /// Intersects `range` with the form's own range and clips the remainder
    /// so the affine band stays inside `range`.
    fn tighten(mut self, range: Interval, delta: &[f64]) -> Self {
        let lin = self.linear_mag(delta);
        let own = Interval::new(self.value - lin + self.rem.lo, self.value + lin + self.rem.hi);
        self.range = range.clip(&own);
        let allowed = Interval::new(
            self.range.lo - (self.value + lin),
            self.range.hi - (self.value - lin),
        );
        self.rem = self.rem.clip(&allowed);
        self
    }

    fn scaled(&self, k: f64) -> Self {
        Form {
            value: self.value * k,
            a: self.a.iter().map(|a| a * k).collect(),
            rem: self.rem.scale(k),
            range: self.range.scale(k),
        }
    }
}

fn kind_of(e: &Expr) -> Option<(ElementaryKind, &Expr)> {
    Some(match e {
        Expr::Sqrt(a) => (ElementaryKind::Sqrt, a),
        Expr::Cbrt(a) => (ElementaryKind::Cbrt, a),
        Expr::Sin(a) => (ElementaryKind::Sin, a),
        Expr::Cos(a) => (ElementaryKind::Cos, a),
        Expr::Exp(a) => (ElementaryKind::Exp, a),
        Expr::Pow(a, p) => (ElementaryKind::Pow(*p), a),
        _ => return None,
    })
}

struct Compositional<'a> {
    c: &'a [f64],
    delta: &'a [f64],
}

impl Compositional<'_> {
    fn n(&self) -> usize {
        self.c.len()
    }

    fn form(&self, e: &Expr) -> Result<Form> {
        let n = self.n();
        Ok(match e {
            Expr::Const(k) => Form::constant(*k, n),
            Expr::Var(i) => {
                let mut a = vec![0.0; n];
                a[*i] = 1.0;
                Form {
                    value: self.c[*i],
                    a,
                    rem: Interval::point(0.0),
                    range: Interval::new(self.c[*i] - self.delta[*i], self.c[*i] + self.delta[*i]),
                }
            }
            Expr::Add(x, y) => {
                let (fx, fy) = (self.form(x)?, self.form(y)?);
                let f = Form {
                    value: fx.value + fy.value,
                    a: fx.a.iter().zip(&fy.a).map(|(p, q)| p + q).collect(),
                    rem: fx.rem + fy.rem,
                    range: fx.range + fy.range,
                };
                let r = f.range;
                f.tighten(r, self.delta)
            }
            Expr::Neg(x) => self.form(x)?.scaled(-1.0),
            Expr::Mul(x, y) => {
                let (fx, fy) = (self.form(x)?, self.form(y)?);
                let value = fx.value * fy.value;
                self.product(fx, fy, value)?
            }
            Expr::Div(x, y) => {
                let (fx, fy) = (self.form(x)?, self.form(y)?);
                let value = fx.value / fy.value;
                if !value.is_finite() || fy.range.contains(0.0) {
                    return Err(Error::Domain { node: e.to_string(), value: 0.0 });
                }
                let inv = self.elementary(ElementaryKind::Recip, fy, e)?;
                self.product(fx, inv, value)?
            }
            _ => {
                let (kind, arg) = kind_of(e).expect("all node kinds covered");
                let inner = self.form(arg)?;
                self.elementary(kind, inner, e)?
            }
        })
    }

    /// `x·y`, returned around `value` (the exact product at the center).
    fn product(&self, x: Form, y: Form, value: f64) -> Result<Form> {
        let range = x.range * y.range;
        if x.is_constant() {
            return Ok(self.rebase(y.scaled(x.value), value).tighten(range, self.delta));
        }
        if y.is_constant() {
            return Ok(self.rebase(x.scaled(y.value), value).tighten(range, self.delta));
        }
        let n = self.n();
        let a: Vec<f64> = (0..n).map(|i| x.value * y.a[i] + y.value * x.a[i]).collect();
        // Bilinear term (a_x·h)(a_y·h) with h = x - c: squares on the diagonal,
        // symmetric cross terms off it.
        let mut quad = Interval::point(0.0);
        for i in 0..n {
            let d = self.delta[i];
            if d == 0.0 {
                continue;
            }
            quad = quad + Interval::new(0.0, d * d).scale(x.a[i] * y.a[i]);
            for k in i + 1..n {
                let cross = (x.a[i] * y.a[k] + x.a[k] * y.a[i]).abs() * d * self.delta[k];
                quad = quad + Interval::symmetric(cross);
            }
        }
        let lx = Interval::symmetric(x.linear_mag(self.delta));
        let ly = Interval::symmetric(y.linear_mag(self.delta));
        let rem = quad
            + y.rem.scale(x.value)
            + x.rem.scale(y.value)
            + lx * y.rem
            + ly * x.rem
            + x.rem * y.rem
            + Interval::point(x.value * y.value - value);
        Ok(Form { value, a, rem, range }.tighten(range, self.delta))
    }

    fn rebase(&self, mut f: Form, value: f64) -> Form {
        f.rem = f.rem + Interval::point(f.value - value);
        f.value = value;
        f
    }

    fn elementary(&self, kind: ElementaryKind, inner: Form, node: &Expr) -> Result<Form> {
        let y_range = inner.range;
        if !kind.defined_on(y_range) {
            return Err(Error::Domain { node: node.to_string(), value: y_range.lo });
        }
        let range = kind.range(y_range).ok_or_else(|| Error::Domain {
            node: node.to_string(),
            value: y_range.lo,
        })?;
        let value = kind.value(inner.value);
        let mut y0 = inner.value.clamp(y_range.lo, y_range.hi);
        if !kind.derivative(y0).is_finite() && y_range.lo < y_range.hi {
            y0 = y_range.mid();
        }
        let rel = expand_elementary(kind, y_range, y0)?;
        // g(y) ∈ g(y0) + s·(y - y0) + r with y = inner.value + a·h + inner.rem.
        let gy0 = kind.value(y0);
        let base = gy0 + rel.slope * (inner.value - y0);
        let f = Form {
            value,
            a: inner.a.iter().map(|a| a * rel.slope).collect(),
            rem: inner.rem.scale(rel.slope)
                + Interval::new(rel.r_min, rel.r_max)
                + Interval::point(base - value),
            range,
        };
        if !f.value.is_finite() || !f.rem.lo.is_finite() || !f.rem.hi.is_finite() {
            return Err(Error::EnclosureUnavailable(format!("non-finite bound at `{node}`")));
        }
        Ok(f.tighten(range, self.delta))
    }
}

fn degenerate(bx: &Hyperrectangle) -> bool {
    bx.radius().iter().all(|r| *r == 0.0)
}

/// Certified enclosure of output `j` of `sys` on `bx`.
pub fn taylor_expand_output(sys: &DynamicalSystem, j: usize, bx: &Hyperrectangle) -> Result<AffineBand> {
    if bx.dim() != sys.n {
        return Err(Error::Dimension(format!(
            "box has {} axes, system has {}",
            bx.dim(),
            sys.n
        )));
    }
    let c = bx.center();
    let delta = bx.radius();
    if degenerate(bx) {
        let v = sys.evaluate_output(j, c)?;
        return Ok(AffineBand::from_centered(c, v, vec![0.0; sys.n], Interval::point(0.0)));
    }
    let comp = Compositional { c, delta }.form(&sys.outputs[j]);
    let lagrange = sys.hessian_bound(j, bx).and_then(|m| {
        let g = sys.gradient(j, c)?;
        let v = sys.evaluate_output(j, c)?;
        let d2: f64 = delta.iter().map(|d| d * d).sum();
        Ok((v, g, 0.5 * m * d2))
    });
    match (comp, lagrange) {
        (Ok(f), Ok((v, g, r))) => {
            // Re-express the Lagrange band around the compositional slope and
            // keep the intersection.
            let tilt: f64 = g.iter().zip(&f.a).zip(delta).map(|((g, a), d)| (g - a).abs() * d).sum();
            let lag = Interval::symmetric(r + tilt) + Interval::point(v - f.value);
            let rem = f.rem.clip(&lag);
            Ok(AffineBand::from_centered(c, f.value, f.a, rem))
        }
        (Ok(f), Err(_)) => Ok(AffineBand::from_centered(c, f.value, f.a, f.rem)),
        (Err(_), Ok((v, g, r))) => Ok(AffineBand::from_centered(c, v, g, Interval::symmetric(r))),
        (Err(e), Err(_)) => Err(Error::EnclosureUnavailable(format!(
            "{} output {j} on {:?}..{:?}: {e}",
            sys.name,
            bx.lower(),
            bx.upper()
        ))),
    }
}

/// Certified enclosure of every output of `sys` on `bx`.
pub fn taylor_expand(sys: &DynamicalSystem, bx: &Hyperrectangle) -> Result<CertifiedEnclosure> {
    let rows = (0..sys.m)
        .map(|j| taylor_expand_output(sys, j, bx))
        .collect::<Result<Vec<_>>>()?;
    Ok(CertifiedEnclosure::from_rows(bx.clone(), rows))
}

/// Constant band `f(c) ± L·‖δ‖∞` from an ∞-norm Lipschitz constant.
pub fn lipschitz_relaxation(
    f_at_center: &[f64],
    lipschitz: f64,
    bx: &Hyperrectangle,
) -> Result<CertifiedEnclosure> {
    if !(lipschitz >= 0.0) {
        return Err(Error::Config(format!(
            "Lipschitz constant must be nonnegative, got {lipschitz}"
        )));
    }
    let m_inf = bx.radius().iter().fold(0.0f64, |a, r| a.max(*r));
    let spread = lipschitz * m_inf;
    let n = bx.dim();
    let rows = f_at_center
        .iter()
        .map(|v| AffineBand {
            a_low: vec![0.0; n],
            a_up: vec![0.0; n],
            b_low: v - spread,
            b_up: v + spread,
        })
        .collect();
    Ok(CertifiedEnclosure::from_rows(bx.clone(), rows))
}
