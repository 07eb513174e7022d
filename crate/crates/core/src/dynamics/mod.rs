//! Dynamical systems given as expression trees.

pub mod builtin;
pub mod config;
pub mod expr;
pub mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;
use crate::interval::Interval;

pub use builtin::{builtin_systems, lookup_system, quadratic_flow};
pub use config::SystemConfig;
pub use expr::{Expr, Rational};
pub use parse::parse_expr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeKind {
    /// `dx/dt = f(x)`
    Continuous,
    /// `x[k+1] = f(x[k])`
    Discrete,
}

impl fmt::Display for TimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimeKind::Continuous => "continuous",
            TimeKind::Discrete => "discrete",
        })
    }
}

/// A map `f: R^n -> R^m` together with the box it is certified over.
///
/// Symbolic first and second derivatives are built once at construction;
/// the type is immutable afterwards and can be shared between workers.
#[derive(Clone, Debug)]
pub struct DynamicalSystem {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub outputs: Vec<Expr>,
    pub domain: Hyperrectangle,
    pub default_epsilon: f64,
    /// Tighter tolerance used for the larger networks, where one exists.
    pub large_epsilon: Option<f64>,
    pub time_kind: TimeKind,
    jacobian: Vec<Vec<Expr>>,
    hessian: Vec<Vec<Vec<Expr>>>,
    nonlinear: Vec<BTreeSet<usize>>,
}

impl DynamicalSystem {
    pub fn new(
        name: impl Into<String>,
        outputs: Vec<Expr>,
        domain: Hyperrectangle,
        default_epsilon: f64,
        time_kind: TimeKind,
    ) -> Result<Self> {
        let name = name.into();
        let n = domain.dim();
        let m = outputs.len();
        if m == 0 {
            return Err(Error::InvalidSystem(format!("{name}: no outputs")));
        }
        for (j, e) in outputs.iter().enumerate() {
            if let Some(&i) = e.variables().iter().find(|&&i| i >= n) {
                return Err(Error::InvalidSystem(format!(
                    "{name}: output {j} references x{i} but the domain has {n} axes"
                )));
            }
        }
        if let Some(i) = domain.radius().iter().position(|r| *r <= 0.0) {
            return Err(Error::InvalidSystem(format!(
                "{name}: domain radius along axis {i} must be positive"
            )));
        }
        if !(default_epsilon > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "{name}: epsilon must be positive"
            )));
        }
        let jacobian: Vec<Vec<Expr>> = outputs
            .iter()
            .map(|e| (0..n).map(|i| e.diff(i)).collect())
            .collect();
        let hessian = jacobian
            .iter()
            .map(|row| {
                row.iter()
                    .map(|d| (0..n).map(|k| d.diff(k)).collect())
                    .collect()
            })
            .collect();
        let nonlinear = outputs.iter().map(|e| e.nonlinear_variables()).collect();
        Ok(DynamicalSystem {
            name,
            n,
            m,
            outputs,
            domain,
            default_epsilon,
            large_epsilon: None,
            time_kind,
            jacobian,
            hessian,
            nonlinear,
        })
    }

    pub fn with_large_epsilon(mut self, eps: f64) -> Self {
        self.large_epsilon = Some(eps);
        self
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "{} expects {} inputs, got {}",
                self.name,
                self.n,
                x.len()
            )));
        }
        Ok(())
    }

    /// `f(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.outputs.iter().map(|e| e.eval(x)).collect()
    }

    /// `f_j(x)`.
    pub fn evaluate_output(&self, j: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.outputs[j].eval(x)
    }

    /// Symbolic Jacobian evaluated at `x` (`m × n`, row-major).
    pub fn jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.m).map(|j| self.gradient(j, x)).collect()
    }

    /// Gradient of output `j` at `x`.
    pub fn gradient(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        self.jacobian[j]
            .iter()
            .map(|d| {
                let v = d.eval(x).map_err(|e| match e {
                    Error::Domain { node, .. } => Error::NonDifferentiable { node },
                    other => other,
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonDifferentiable {
                        node: self.outputs[j].to_string(),
                    })
                }
            })
            .collect()
    }

    /// Per output, the inputs that enter through a nonlinear node.
    pub fn dependency_graph(&self) -> &[BTreeSet<usize>] {
        &self.nonlinear
    }

    /// Symbolic second derivative `∂²f_j / ∂x_i ∂x_k`.
    pub fn hessian_entry(&self, j: usize, i: usize, k: usize) -> &Expr {
        &self.hessian[j][i][k]
    }

    /// ∞-norm Lipschitz constant of `f_j` on `bx`: `Σ_i sup |∂f_j/∂x_i|`.
    pub fn lipschitz_bound(&self, j: usize, bx: &Hyperrectangle) -> Result<f64> {
        let ivs = bx.intervals();
        let mut total = 0.0;
        for d in &self.jacobian[j] {
            let mag = d.eval_interval(&ivs)?.mag();
            if !mag.is_finite() {
                return Err(Error::NonDifferentiable { node: d.to_string() });
            }
            total += mag;
        }
        Ok(total)
    }

    /// Upper bound on the spectral norm of the Hessian of `f_j` over `bx`.
    ///
    /// Every second derivative is enclosed by interval evaluation, and
    /// `‖H‖₂ ≤ √(‖H‖₁ ‖H‖∞)` is applied to the matrix of elementwise
    /// magnitudes.
    pub fn hessian_bound(&self, j: usize, bx: &Hyperrectangle) -> Result<f64> {
        if bx.dim() != self.n {
            return Err(Error::Dimension(format!(
                "box has {} axes, system has {}",
                bx.dim(),
                self.n
            )));
        }
        let ivs = bx.intervals();
        let mut mags = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for k in 0..self.n {
                let h = &self.hessian[j][i][k];
                if let Expr::Const(c) = h {
                    mags[i][k] = c.abs();
                    continue;
                }
                let iv: Interval = h.eval_interval(&ivs).map_err(|e| {
                    Error::NotTwiceDifferentiable {
                        output: j,
                        detail: e.to_string(),
                    }
                })?;
                let mag = iv.mag();
                if !mag.is_finite() {
                    return Err(Error::NotTwiceDifferentiable {
                        output: j,
                        detail: format!("unbounded second derivative d2/dx{i}dx{k}"),
                    });
                }
                mags[i][k] = mag;
            }
        }
        let norm1 = (0..self.n)
            .map(|k| (0..self.n).map(|i| mags[i][k]).sum::<f64>())
            .fold(0.0, f64::max);
        let norm_inf = mags
            .iter()
            .map(|row| row.iter().sum::<f64>())
            .fold(0.0, f64::max);
        Ok((norm1 * norm_inf).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(name: &str) -> DynamicalSystem {
        lookup_system(name).unwrap()
    }

    fn one_dim(src: &str, lo: f64, hi: f64) -> DynamicalSystem {
        let e = parse_expr(src, &[]).unwrap();
        let d = Hyperrectangle::from_bounds(&[lo], &[hi]).unwrap();
        DynamicalSystem::new("t", vec![e], d, 0.1, TimeKind::Continuous).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(sys("WaterTank").evaluate(&[1.0]).unwrap(), vec![0.5]);
        assert_eq!(sys("JetEngine").evaluate(&[0.0, 0.0]).unwrap(), vec![-0.1, 0.0]);
        assert_eq!(
            sys("SteamGovernor").evaluate(&[0.0, 0.0, 0.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn evaluate_domain_error() {
        let err = sys("WaterTank").evaluate(&[-1.0]).unwrap_err();
        assert!(matches!(err, Error::Domain { ref node, value } if node == "sqrt(x0)" && value == -1.0));
    }

    #[test]
    fn jacobian_examples() {
        assert_eq!(sys("WaterTank").jacobian(&[1.0]).unwrap(), vec![vec![-0.5]]);
        assert_eq!(
            sys("JetEngine").jacobian(&[1.0, 0.0]).unwrap(),
            vec![vec![-4.5, -1.0], vec![3.0, -1.0]]
        );
        let lin = one_dim("3*x0", -1.0, 1.0);
        assert_eq!(lin.jacobian(&[0.7]).unwrap(), vec![vec![3.0]]);
        assert!(matches!(
            sys("WaterTank").jacobian(&[0.0]),
            Err(Error::NonDifferentiable { .. })
        ));
    }

    #[test]
    fn dependency_examples() {
        let jet = sys("JetEngine");
        assert_eq!(jet.dependency_graph()[0], [0].into());
        assert!(jet.dependency_graph()[1].is_empty());
        let ex = sys("Exponential");
        assert_eq!(ex.dependency_graph()[0], [1].into());
        assert!(ex.dependency_graph()[1].is_empty());
        let lin = one_dim("3*x0 - 1", -1.0, 1.0);
        assert!(lin.dependency_graph()[0].is_empty());
    }

    #[test]
    fn hessian_bound_examples() {
        let sq = one_dim("x0^2", 0.0, 1.0);
        assert_eq!(sq.hessian_bound(0, &sq.domain).unwrap(), 2.0);
        let wt = sys("WaterTank");
        let b = Hyperrectangle::from_bounds(&[0.5], &[1.5]).unwrap();
        let m = wt.hessian_bound(0, &b).unwrap();
        assert!((m - 0.5f64.powf(-1.5) / 4.0).abs() < 1e-12, "{m}");
        assert!((m - 0.70711).abs() < 1e-5);
        let aff = one_dim("2*x0 + 1", -3.0, 3.0);
        assert_eq!(aff.hessian_bound(0, &aff.domain).unwrap(), 0.0);
        let b0 = Hyperrectangle::from_bounds(&[0.0], &[1.0]).unwrap();
        assert!(matches!(
            wt.hessian_bound(0, &b0),
            Err(Error::NotTwiceDifferentiable { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_systems() {
        let d = Hyperrectangle::from_bounds(&[0.0], &[1.0]).unwrap();
        let e = parse_expr("x1", &[]).unwrap();
        assert!(DynamicalSystem::new("bad", vec![e], d.clone(), 0.1, TimeKind::Continuous).is_err());
        let flat = Hyperrectangle::new(vec![0.0], vec![0.0]).unwrap();
        let e = parse_expr("x0", &[]).unwrap();
        assert!(DynamicalSystem::new("flat", vec![e], flat, 0.1, TimeKind::Continuous).is_err());
    }
}
