//! Declarative system definitions.
//!
//! ```toml
//! name = "damped"
//! time = "continuous"
//! epsilon = 0.05
//! variables = ["x", "v"]
//! outputs = ["v", "-x - 0.3*v + 0.1*sin(x)"]
//!
//! [domain]
//! lower = [-1.0, -1.0]
//! upper = [1.0, 1.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_expr, DynamicalSystem, TimeKind};
use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    #[serde(default = "default_time")]
    pub time: TimeKind,
    pub epsilon: f64,
    #[serde(default)]
    pub large_epsilon: Option<f64>,
    /// Input names; when absent, inputs are written `x0, x1, ...`.
    #[serde(default)]
    pub variables: Vec<String>,
    pub outputs: Vec<String>,
    pub domain: DomainConfig,
}

fn default_time() -> TimeKind {
    TimeKind::Continuous
}

impl SystemConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(src, s.start))
                .unwrap_or((0, 0));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&src)
    }

    pub fn build(&self) -> Result<DynamicalSystem> {
        let n = self.domain.lower.len();
        if self.domain.upper.len() != n {
            return Err(Error::InvalidSystem(format!(
                "{}: domain.lower has {n} entries, domain.upper has {}",
                self.name,
                self.domain.upper.len()
            )));
        }
        if !self.variables.is_empty() && self.variables.len() != n {
            return Err(Error::InvalidSystem(format!(
                "{}: {} variables for a {n}-dimensional domain",
                self.name,
                self.variables.len()
            )));
        }
        let outputs = self
            .outputs
            .iter()
            .enumerate()
            .map(|(j, s)| {
                parse_expr(s, &self.variables).map_err(|e| {
                    Error::InvalidSystem(format!("{}: output {j}: {e}", self.name))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let domain = Hyperrectangle::from_bounds(&self.domain.lower, &self.domain.upper)?;
        let sys = DynamicalSystem::new(self.name.clone(), outputs, domain, self.epsilon, self.time)?;
        Ok(match self.large_epsilon {
            Some(e) if e > 0.0 => sys.with_large_epsilon(e),
            Some(_) => {
                return Err(Error::InvalidSystem(format!(
                    "{}: large_epsilon must be positive",
                    self.name
                )))
            }
            None => sys,
        })
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAMPED: &str = r#"
name = "damped"
epsilon = 0.05
variables = ["x", "v"]
outputs = ["v", "-x - 0.3*v"]

[domain]
lower = [-1.0, -2.0]
upper = [1.0, 2.0]
"#;

    #[test]
    fn builds_system() {
        let sys = SystemConfig::from_toml(DAMPED).unwrap().build().unwrap();
        assert_eq!((sys.n, sys.m), (2, 2));
        assert_eq!(sys.time_kind, TimeKind::Continuous);
        assert_eq!(sys.evaluate(&[1.0, 1.0]).unwrap(), vec![1.0, -1.3]);
        assert!(sys.dependency_graph().iter().all(|s| s.is_empty()));
    }

    #[test]
    fn reports_position_of_toml_errors() {
        let err = SystemConfig::from_toml("name = \"a\"\nepsilon = \n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_inconsistent_definitions() {
        let bad_vars = DAMPED.replace("[\"x\", \"v\"]", "[\"x\"]");
        assert!(SystemConfig::from_toml(&bad_vars).unwrap().build().is_err());
        let bad_expr = DAMPED.replace("-x - 0.3*v", "-x - w");
        assert!(SystemConfig::from_toml(&bad_expr).unwrap().build().is_err());
        let unknown_key = format!("{DAMPED}\nextra = 1\n");
        assert!(SystemConfig::from_toml(&unknown_key).is_err());
    }
}
