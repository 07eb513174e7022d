//! The benchmark systems shipped with the verifier.

use std::f64::consts::PI;

use super::{parse_expr, DynamicalSystem, TimeKind};
use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;

/// Gravitational parameter, dry mass and exhaust velocity of the low-thrust
/// spacecraft, in normalised units.
pub const SPACECRAFT_MU: f64 = 1.0;
pub const SPACECRAFT_M0: f64 = 1.0;
pub const SPACECRAFT_V_EXHAUST: f64 = 2.0;

/// Quadratic system parameters and sampling step.
pub const QUADRATIC_MU: f64 = -0.05;
pub const QUADRATIC_LAMBDA: f64 = -1.0;
pub const QUADRATIC_DT: f64 = 0.02;

const VAN_DER_POL_MU: f64 = 1.0;

fn build(
    name: &str,
    vars: &[&str],
    outputs: &[String],
    lower: &[f64],
    upper: &[f64],
    eps: f64,
    eps_large: Option<f64>,
    time_kind: TimeKind,
) -> DynamicalSystem {
    let names: Vec<String> = vars.iter().map(|s| s.to_string()).collect();
    let exprs = outputs
        .iter()
        .map(|s| parse_expr(s, &names).unwrap_or_else(|e| panic!("builtin {name}: {e}")))
        .collect();
    let domain = Hyperrectangle::from_bounds(lower, upper).expect("builtin domain");
    let sys = DynamicalSystem::new(name, exprs, domain, eps, time_kind).expect("builtin system");
    match eps_large {
        Some(e) => sys.with_large_epsilon(e),
        None => sys,
    }
}

fn s(x: &str) -> String {
    x.to_string()
}

/// Closed-form discrete map of the quadratic system advanced by `steps`
/// sampling periods (`steps = 1` is the one-step map; `steps = 0` is the
/// identity).
pub fn quadratic_flow(steps: usize) -> DynamicalSystem {
    let t = QUADRATIC_DT * steps as f64;
    let (mu, lam) = (QUADRATIC_MU, QUADRATIC_LAMBDA);
    let k = lam / (2.0 * mu - lam);
    let x1 = format!("x1 * {:?}", (mu * t).exp());
    let x2 = format!(
        "(x2 + {k:?} * x1^2) * {:?} - {k:?} * x1^2 * {:?}",
        (lam * t).exp(),
        (2.0 * mu * t).exp()
    );
    let name = if steps == 1 {
        "QuadraticSystem".to_string()
    } else {
        format!("QuadraticSystem[t={steps}]")
    };
    build(
        &name,
        &["x1", "x2"],
        &[x1, x2],
        &[-0.5, -0.5],
        &[0.5, 0.5],
        0.1,
        None,
        TimeKind::Discrete,
    )
}

/// All benchmark systems with their certification domains and tolerances.
pub fn builtin_systems() -> Vec<DynamicalSystem> {
    use TimeKind::Continuous as C;
    vec![
        build(
            "WaterTank",
            &["x"],
            &[s("1.5 - sqrt(x)")],
            &[0.1],
            &[10.0],
            0.097,
            Some(0.007),
            C,
        ),
        build(
            "JetEngine",
            &["x", "y"],
            &[s("-y - 1.5*x^2 - 0.5*x^3 - 0.1"), s("3*x - y")],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.039,
            Some(0.012),
            C,
        ),
        build(
            "SteamGovernor",
            &["x", "y", "z"],
            &[
                s("y"),
                s("0.5*z^2*sin(2*x) - sin(x) - 3*y"),
                s("-(cos(x) - 1)"),
            ],
            &[-1.0; 3],
            &[1.0; 3],
            0.105,
            Some(0.06),
            C,
        ),
        build(
            "Exponential",
            &["x", "y"],
            &[s("-sin(exp(y^3 + 1)) - y^2"), s("-x")],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.112,
            Some(0.04),
            C,
        ),
        build(
            "NL1",
            &["x", "y"],
            &[s("y"), s("sqrt(x)")],
            &[0.0, -1.0],
            &[1.0, 1.0],
            0.11,
            Some(0.03),
            C,
        ),
        build(
            "NL2",
            &["x", "y"],
            &[s("x^2 + y"), s("(x^2)^(1/3) - x")],
            &[-1.0, -1.0],
            &[1.0, 1.0],
            0.081,
            Some(0.02),
            C,
        ),
        build(
            "VanDerPol",
            &["x1", "x2"],
            &[
                s("x2"),
                format!("{VAN_DER_POL_MU:?} * (1 - x1^2) * x2 - x1"),
            ],
            &[-3.0, -3.0],
            &[3.0, 3.0],
            0.25,
            None,
            C,
        ),
        build(
            "Sine2D",
            &["x", "y"],
            &[s("sin(0.5 * y)"), s("-sin(1.0 * x)")],
            &[-PI, -PI],
            &[PI, PI],
            0.02,
            None,
            C,
        ),
        build(
            "NonlinearOscillator",
            &["x"],
            &[s("-1.0*x - 0.5*x^3 + 0.3*sin(x)")],
            &[-3.0],
            &[3.0],
            0.165,
            None,
            C,
        ),
        build(
            "Lorenz",
            &["x", "y", "z"],
            &[
                s("10 * (y - x)"),
                s("x * (28 - z) - y"),
                format!("x * y - {:?} * z", 8.0 / 3.0),
            ],
            &[-30.0, -30.0, 0.0],
            &[30.0, 30.0, 60.0],
            0.6,
            None,
            C,
        ),
        build(
            "LowThrustSpacecraft",
            &["r", "theta", "vr", "vt", "dm", "T", "alpha"],
            &[
                s("vr"),
                s("vt / r"),
                format!(
                    "-{SPACECRAFT_MU:?} / r^2 + vt^2 / r + T * cos(alpha) / ({SPACECRAFT_M0:?} + dm)"
                ),
                format!("-(vr * vt) / r + T * sin(alpha) / ({SPACECRAFT_M0:?} + dm)"),
                format!("-T / {SPACECRAFT_V_EXHAUST:?}"),
            ],
            &[0.9, -PI, -0.1, 0.9, 0.0, 0.0, -PI],
            &[1.1, PI, 0.1, 1.1, 0.1, 0.1, PI],
            0.1,
            None,
            C,
        ),
        quadratic_flow(1),
    ]
}

fn normalise(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

/// Case- and separator-insensitive lookup (`water_tank`, `WaterTank`, ...).
pub fn lookup_system(name: &str) -> Result<DynamicalSystem> {
    let key = normalise(name);
    let canonical = match key.as_str() {
        "nonlipschitzvectorfield1" | "nonlipschitz1" => "nl1".to_string(),
        "nonlipschitzvectorfield2" | "nonlipschitz2" => "nl2".to_string(),
        "vanderpoloscillator" => "vanderpol".to_string(),
        "lorenzattractor" => "lorenz".to_string(),
        "quadratic" => "quadraticsystem".to_string(),
        "exponentialsystem" => "exponential".to_string(),
        _ => key,
    };
    builtin_systems()
        .into_iter()
        .find(|s| normalise(&s.name) == canonical)
        .ok_or_else(|| Error::UnknownSystem(name.to_string()))
}
