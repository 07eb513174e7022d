//! The per-box check: certify, falsify, or ask for a split.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crown::{argmax_corner, max_affine, BoundNet, LinearBound};
use crate::dynamics::DynamicalSystem;
use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;
use crate::network::Network;
use crate::taylor::{lipschitz_relaxation, taylor_expand_output, AffineBand, CertifiedEnclosure};

/// Certification requires every residual bound below `ε - CERT_MARGIN`.
pub const CERT_MARGIN: f64 = 1e-12;

type Evaluator = dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync;

/// The function a network is checked against.
pub enum Reference {
    Analytic(DynamicalSystem),
    Network { net: Network, bounds: BoundNet },
    /// Black-box function with a known ∞-norm Lipschitz constant.
    Lipschitz {
        n: usize,
        m: usize,
        lipschitz: f64,
        eval: Box<Evaluator>,
    },
}

impl fmt::Debug for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Analytic(s) => write!(f, "Analytic({})", s.name),
            Reference::Network { net, .. } => write!(f, "Network({}→{})", net.n(), net.m()),
            Reference::Lipschitz { n, m, lipschitz, .. } => {
                write!(f, "Lipschitz({n}→{m}, L={lipschitz})")
            }
        }
    }
}

impl Reference {
    pub fn analytic(sys: DynamicalSystem) -> Self {
        Reference::Analytic(sys)
    }

    pub fn network(net: Network) -> Self {
        let bounds = BoundNet::new(&net);
        Reference::Network { net, bounds }
    }

    pub fn lipschitz<F>(n: usize, m: usize, lipschitz: f64, eval: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::Config(format!("invalid Lipschitz constant {lipschitz}")));
        }
        Ok(Reference::Lipschitz { n, m, lipschitz, eval: Box::new(eval) })
    }

    pub fn n(&self) -> usize {
        match self {
            Reference::Analytic(s) => s.n,
            Reference::Network { net, .. } => net.n(),
            Reference::Lipschitz { n, .. } => *n,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            Reference::Analytic(s) => s.m,
            Reference::Network { net, .. } => net.m(),
            Reference::Lipschitz { m, .. } => *m,
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Reference::Analytic(s) => s.evaluate(x),
            Reference::Network { net, .. } => net.forward(x),
            Reference::Lipschitz { eval, .. } => eval(x),
        }
    }

    pub fn evaluate_output(&self, j: usize, x: &[f64]) -> Result<f64> {
        match self {
            Reference::Analytic(s) => s.evaluate_output(j, x),
            _ => Ok(self.evaluate(x)?[j]),
        }
    }

    /// Certified affine band of output `j` on `bx`.
    ///
    /// Analytic references fall back from the Taylor enclosure to a
    /// Lipschitz band from interval gradients, and then to the plain
    /// interval range, when the function is not smooth enough on the box.
    pub fn enclosure(&self, j: usize, bx: &Hyperrectangle) -> Result<AffineBand> {
        match self {
            Reference::Analytic(sys) => match taylor_expand_output(sys, j, bx) {
                Ok(band) => Ok(band),
                Err(Error::EnclosureUnavailable(_)) => analytic_fallback(sys, j, bx),
                Err(e) => Err(e),
            },
            Reference::Network { bounds, .. } => {
                let nb = bounds.neuron_bounds(bx, false)?;
                let m = bounds.m();
                let mut c = vec![0.0; 2 * m];
                c[j] = 1.0;
                c[m + j] = -1.0;
                let lin = bounds.upper_linear(&c, &[0.0, 0.0], &nb)?;
                Ok(AffineBand {
                    a_up: lin.row(0).to_vec(),
                    b_up: lin.b[0],
                    a_low: lin.row(1).iter().map(|v| -v).collect(),
                    b_low: -lin.b[1],
                })
            }
            Reference::Lipschitz { lipschitz, eval, .. } => {
                let fc = eval(bx.center())?;
                Ok(lipschitz_relaxation(&fc, *lipschitz, bx)?.row(j))
            }
        }
    }
}

fn analytic_fallback(sys: &DynamicalSystem, j: usize, bx: &Hyperrectangle) -> Result<AffineBand> {
    if let Ok(l) = sys.lipschitz_bound(j, bx) {
        let fc = sys.evaluate_output(j, bx.center())?;
        return Ok(lipschitz_relaxation(&[fc], l, bx)?.row(0));
    }
    let range = sys.outputs[j].eval_interval(&bx.intervals()).map_err(|e| {
        Error::EnclosureUnavailable(format!("{} output {j}: {e}", sys.name))
    })?;
    Ok(AffineBand {
        a_low: vec![0.0; bx.dim()],
        a_up: vec![0.0; bx.dim()],
        b_low: range.lo,
        b_up: range.hi,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationTask {
    pub bx: Hyperrectangle,
    pub j: usize,
    pub epsilon: f64,
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitReason {
    /// The reference enclosure alone is wider than ε.
    Remainder,
    /// The bound on `|f - N|` is inconclusive.
    Residual,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Certified,
    Falsified { x: Vec<f64>, error: f64 },
    /// `excess` is how far the failing bound exceeds ε; used to order work
    /// in early-stop mode.
    Split { axis: usize, reason: SplitReason, excess: f64 },
}

/// Knobs of the per-box check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckConfig {
    /// Uniform samples tried as counterexamples per inconclusive box.
    pub samples: usize,
    pub seed: u64,
    /// Tighten intermediate bounds with backward passes.
    pub tight_bounds: bool,
    /// Axes narrower than this are never split.
    pub min_width: Vec<f64>,
}

impl CheckConfig {
    pub fn new(min_width: Vec<f64>) -> Self {
        CheckConfig { samples: 8, seed: 0, tight_bounds: false, min_width }
    }
}

/// A reference, a network, and the state they share across boxes.
pub struct Verifier {
    pub reference: Reference,
    pub net: Network,
    bounds: BoundNet,
    pub config: CheckConfig,
}

impl fmt::Debug for Verifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Verifier")
            .field("reference", &self.reference)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

/// Upper bounds on the two residuals of output `j` over a box.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBounds {
    /// `max (upper face - N_j)`.
    pub upper: f64,
    /// `max (N_j - lower face)`.
    pub lower: f64,
    /// Coefficients of the affine functions whose maxima these are.
    pub upper_coef: Vec<f64>,
    pub lower_coef: Vec<f64>,
    /// The two residuals evaluated exactly at the box center.
    pub upper_center: f64,
    pub lower_center: f64,
}

fn mix(mut h: u64, v: u64) -> u64 {
    // splitmix64 finaliser over a running hash
    h ^= v.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Seed for the sampler of one task, independent of scheduling.
fn task_seed(seed: u64, bx: &Hyperrectangle, j: usize) -> u64 {
    let mut h = mix(seed, j as u64);
    for v in bx.lower_ref().iter().chain(bx.upper_ref()) {
        h = mix(h, v.to_bits());
    }
    h
}

impl Verifier {
    pub fn new(reference: Reference, net: Network, config: CheckConfig) -> Result<Self> {
        if reference.n() != net.n() || reference.m() != net.m() {
            return Err(Error::Dimension(format!(
                "reference is {}→{} but network is {}→{}",
                reference.n(),
                reference.m(),
                net.n(),
                net.m()
            )));
        }
        if config.min_width.len() != net.n() {
            return Err(Error::Config(format!(
                "min_width has {} entries for {} inputs",
                config.min_width.len(),
                net.n()
            )));
        }
        let bounds = BoundNet::new(&net);
        Ok(Verifier { reference, net, bounds, config })
    }

    pub fn n(&self) -> usize {
        self.net.n()
    }

    pub fn m(&self) -> usize {
        self.net.m()
    }

    /// Sound upper bounds on both residuals between the band and `N_j`.
    pub fn residual_bounds(&self, band: &AffineBand, bx: &Hyperrectangle, j: usize) -> Result<ResidualBounds> {
        let nb = self.bounds.neuron_bounds(bx, self.config.tight_bounds)?;
        let m = self.m();
        let mut c = vec![0.0; 2 * m];
        c[j] = -1.0;
        c[m + j] = 1.0;
        let lin: LinearBound = self.bounds.upper_linear(&c, &[0.0, 0.0], &nb)?;
        // -N_j ≤ lin0, N_j ≤ lin1
        let upper_coef: Vec<f64> = band.a_up.iter().zip(lin.row(0)).map(|(a, l)| a + l).collect();
        let lower_coef: Vec<f64> = lin.row(1).iter().zip(&band.a_low).map(|(l, a)| l - a).collect();
        let c = bx.center();
        let n_c = self.net.forward_output(j, c)?;
        Ok(ResidualBounds {
            upper_center: band.upper_at(c) - n_c,
            lower_center: n_c - band.lower_at(c),
            upper: max_affine(&upper_coef, band.b_up + lin.b[0], bx),
            lower: max_affine(&lower_coef, lin.b[1] - band.b_low, bx),
            upper_coef,
            lower_coef,
        })
    }

    /// `|f_j(x) - N_j(x)| > ε` by direct evaluation.
    pub fn confirm_counterexample(&self, x: &[f64], j: usize, epsilon: f64) -> Result<bool> {
        Ok(self.error_at(x, j)? > epsilon)
    }

    pub fn error_at(&self, x: &[f64], j: usize) -> Result<f64> {
        let f = self.reference.evaluate_output(j, x)?;
        let n = self.net.forward_output(j, x)?;
        Ok((f - n).abs())
    }

    pub fn check_box(&self, task: &VerificationTask) -> Result<Verdict> {
        let VerificationTask { bx, j, epsilon, depth } = task;
        let (j, eps) = (*j, *epsilon);
        let band = self.reference.enclosure(j, bx)?;
        let width = band.width(bx);
        if width > eps {
            let axis = self.choose_split_axis(j, bx, *depth, SplitReason::Remainder, None)?;
            return Ok(Verdict::Split { axis, reason: SplitReason::Remainder, excess: width - eps });
        }
        let rb = self.residual_bounds(&band, bx, j)?;
        let limit = eps - CERT_MARGIN;
        if rb.upper < limit && rb.lower < limit {
            return Ok(Verdict::Certified);
        }
        let mut candidates = vec![
            argmax_corner(&rb.upper_coef, bx),
            argmax_corner(&rb.lower_coef, bx),
            bx.center().to_vec(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(task_seed(self.config.seed, bx, j));
        candidates.extend((0..self.config.samples).map(|_| bx.sample(&mut rng)));
        for x in candidates {
            let error = self.error_at(&x, j)?;
            if error > eps {
                return Ok(Verdict::Falsified { x, error });
            }
        }
        let axis = self.choose_split_axis(j, bx, *depth, SplitReason::Residual, Some(&rb))?;
        let excess = rb.upper.max(rb.lower) - eps;
        Ok(Verdict::Split { axis, reason: SplitReason::Residual, excess })
    }

    fn admissible(&self, bx: &Hyperrectangle) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| bx.width(i) >= self.config.min_width[i] && bx.radius()[i] > 0.0)
            .collect()
    }

    /// Widest axis relative to its floor.
    fn widest(&self, bx: &Hyperrectangle, axes: &[usize]) -> Option<usize> {
        let score = |i: usize| bx.width(i) / self.config.min_width[i];
        axes.iter().copied().fold(None, |best, i| match best {
            Some(b) if score(b) >= score(i) => Some(b),
            _ => Some(i),
        })
    }

    /// Picks the axis to halve.
    ///
    /// Remainder splits stay on the inputs entering output `j` nonlinearly
    /// and pick the one whose half-radius probe shows the largest
    /// first-order Taylor error. Residual splits may use any admissible
    /// axis. When the linear part of the failing residual bound dominates
    /// they pick the largest contribution `|coef_i| δ_i`; when the
    /// relaxation slack dominates the coefficients say little, so each axis
    /// is probed by bounding both halves. Every fourth split of a lineage instead cycles through
    /// the candidates so no admissible axis is starved.
    pub fn choose_split_axis(
        &self,
        j: usize,
        bx: &Hyperrectangle,
        depth: usize,
        reason: SplitReason,
        residual: Option<&ResidualBounds>,
    ) -> Result<usize> {
        let admissible = self.admissible(bx);
        let candidates: Vec<usize> = match (&self.reference, reason) {
            (Reference::Analytic(sys), SplitReason::Remainder) => {
                let nl = &sys.dependency_graph()[j];
                admissible.iter().copied().filter(|i| nl.contains(i)).collect()
            }
            _ => admissible,
        };
        if candidates.is_empty() {
            return Err(Error::NoAdmissibleAxis { output: j });
        }
        if (depth + 1) % 4 == 0 {
            return Ok(candidates[(depth / 4) % candidates.len()]);
        }
        let ranked = match (&self.reference, reason) {
            (Reference::Analytic(sys), SplitReason::Remainder) => perturbation_axis(sys, j, bx, &candidates),
            (Reference::Network { .. }, SplitReason::Remainder) => self.probe_axis(j, bx, &candidates),
            (_, SplitReason::Residual) => residual.and_then(|rb| {
                let (bound, coef, at_center) = if rb.upper >= rb.lower {
                    (rb.upper, &rb.upper_coef, rb.upper_center)
                } else {
                    (rb.lower, &rb.lower_coef, rb.lower_center)
                };
                let linear: f64 = candidates.iter().map(|&i| coef[i].abs() * bx.radius()[i]).sum();
                // slack the activation relaxations add on top of the true residual
                if bound - linear - at_center > linear {
                    self.residual_probe(j, bx, &candidates)
                } else {
                    best_by(&candidates, |i| coef[i].abs() * bx.radius()[i])
                }
            }),
            (Reference::Lipschitz { .. }, SplitReason::Remainder) => None,
        };
        Ok(ranked
            .or_else(|| self.widest(bx, &candidates))
            .expect("candidates nonempty"))
    }

    /// Axis whose halves have the smallest residual bounds in total.
    fn residual_probe(&self, j: usize, bx: &Hyperrectangle, axes: &[usize]) -> Option<usize> {
        best_by(axes, |i| {
            let Ok((a, b)) = bx.split(i) else { return f64::NEG_INFINITY };
            let w = |h: &Hyperrectangle| {
                self.reference
                    .enclosure(j, h)
                    .and_then(|band| self.residual_bounds(&band, h, j))
                    .map(|r| r.upper.max(r.lower))
                    .unwrap_or(f64::INFINITY)
            };
            -(w(&a) + w(&b))
        })
    }

    /// Axis whose halving most reduces the reference band width.
    fn probe_axis(&self, j: usize, bx: &Hyperrectangle, axes: &[usize]) -> Option<usize> {
        best_by(axes, |i| {
            let Ok((a, b)) = bx.split(i) else { return f64::NEG_INFINITY };
            let w = |h: &Hyperrectangle| {
                self.reference.enclosure(j, h).map(|e| e.width(h)).unwrap_or(f64::INFINITY)
            };
            -(w(&a).max(w(&b)))
        })
    }
}

/// Argmax of `score` over `axes`; first index wins ties, NaN scores lose.
fn best_by(axes: &[usize], mut score: impl FnMut(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in axes {
        let s = score(i);
        if s.is_nan() {
            continue;
        }
        match best {
            Some((_, bs)) if bs >= s => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// `|f_j(c + h_i e_i) - f_j(c) - h_i ∂_i f_j(c)|` with `h_i = δ_i / 2`.
fn perturbation_axis(sys: &DynamicalSystem, j: usize, bx: &Hyperrectangle, axes: &[usize]) -> Option<usize> {
    let c = bx.center();
    let fc = sys.evaluate_output(j, c).ok()?;
    let g = sys.gradient(j, c).ok()?;
    let mut probe = c.to_vec();
    best_by(axes, |i| {
        let h = 0.5 * bx.radius()[i];
        probe[i] = c[i] + h;
        let s = match sys.evaluate_output(j, &probe) {
            Ok(v) => (v - fc - g[i] * h).abs(),
            Err(_) => f64::NAN,
        };
        probe[i] = c[i];
        s
    })
}

/// Upper bound on `max_x ρ(x)` for the residual on `side`, where the band is
/// row `j` of `enclosure`.
pub fn residual_bound(
    net: &Network,
    enclosure: &CertifiedEnclosure,
    bx: &Hyperrectangle,
    j: usize,
    side: Side,
) -> Result<f64> {
    if enclosure.bx != *bx {
        return Err(Error::InvalidBox("enclosure was built on a different box".into()));
    }
    let bounds = BoundNet::new(net);
    let nb = bounds.neuron_bounds(bx, false)?;
    let m = net.m();
    let mut c = vec![0.0; m];
    let band = enclosure.row(j);
    match side {
        Side::Upper => {
            c[j] = -1.0;
            let lin = bounds.upper_linear(&c, &[0.0], &nb)?;
            let coef: Vec<f64> = band.a_up.iter().zip(lin.row(0)).map(|(a, l)| a + l).collect();
            Ok(max_affine(&coef, band.b_up + lin.b[0], bx))
        }
        Side::Lower => {
            c[j] = 1.0;
            let lin = bounds.upper_linear(&c, &[0.0], &nb)?;
            let coef: Vec<f64> = lin.row(0).iter().zip(&band.a_low).map(|(l, a)| l - a).collect();
            Ok(max_affine(&coef, lin.b[0] - band.b_low, bx))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// `|f_j(x) - N_j(x)| > ε` by direct evaluation.
pub fn confirm_counterexample(
    reference: &Reference,
    net: &Network,
    x: &[f64],
    j: usize,
    epsilon: f64,
) -> Result<bool> {
    let f = reference.evaluate_output(j, x)?;
    let n = net.forward_output(j, x)?;
    Ok((f - n).abs() > epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{lookup_system, parse_expr, TimeKind};
    use crate::network::{Activation, Layer};

    fn sys1(src: &str, lo: f64, hi: f64) -> DynamicalSystem {
        let e = parse_expr(src, &[]).unwrap();
        let d = Hyperrectangle::from_bounds(&[lo], &[hi]).unwrap();
        DynamicalSystem::new("t", vec![e], d, 0.1, TimeKind::Continuous).unwrap()
    }

    fn affine_net(w: f64, b: f64) -> Network {
        Network::new(vec![Layer::new(vec![vec![w]], Some(vec![b]), Activation::Identity).unwrap()]).unwrap()
    }

    fn verifier(sys: DynamicalSystem, net: Network) -> Verifier {
        let mw = sys.domain.radius().iter().map(|r| 2e-4 * r).collect();
        Verifier::new(Reference::analytic(sys), net, CheckConfig::new(mw)).unwrap()
    }

    fn task(lo: f64, hi: f64, eps: f64) -> VerificationTask {
        VerificationTask {
            bx: Hyperrectangle::from_bounds(&[lo], &[hi]).unwrap(),
            j: 0,
            epsilon: eps,
            depth: 0,
        }
    }

    #[test]
    fn exact_affine_net_certifies() {
        let v = verifier(sys1("2*x0", -1.0, 1.0), affine_net(2.0, 0.0));
        assert_eq!(v.check_box(&task(-1.0, 1.0, 1e-9)).unwrap(), Verdict::Certified);
    }

    #[test]
    fn offset_net_is_falsified() {
        let v = verifier(sys1("x0", -1.0, 1.0), affine_net(1.0, 0.2));
        match v.check_box(&task(-1.0, 1.0, 0.1)).unwrap() {
            Verdict::Falsified { x, error } => {
                assert!(error > 0.1);
                assert!(v.confirm_counterexample(&x, 0, 0.1).unwrap());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wide_remainder_splits() {
        let v = verifier(sys1("x0^2", -1.0, 1.0), affine_net(0.0, 0.0));
        assert!(matches!(
            v.check_box(&task(-1.0, 1.0, 0.1)).unwrap(),
            Verdict::Split { axis: 0, reason: SplitReason::Remainder, .. }
        ));
    }

    #[test]
    fn residual_bound_examples() {
        let bx = Hyperrectangle::from_bounds(&[0.0], &[1.0]).unwrap();
        let exact = CertifiedEnclosure::from_rows(
            bx.clone(),
            vec![AffineBand { a_low: vec![1.0], a_up: vec![1.0], b_low: 0.0, b_up: 0.0 }],
        );
        let half = affine_net(0.5, 0.0);
        assert_eq!(residual_bound(&half, &exact, &bx, 0, Side::Upper).unwrap(), 0.5);
        let same = affine_net(1.0, 0.0);
        assert_eq!(residual_bound(&same, &exact, &bx, 0, Side::Upper).unwrap(), 0.0);
        assert_eq!(residual_bound(&same, &exact, &bx, 0, Side::Lower).unwrap(), 0.0);
    }

    #[test]
    fn confirm_examples() {
        let r = Reference::analytic(sys1("x0", -1.0, 1.0));
        assert!(confirm_counterexample(&r, &affine_net(1.0, 0.2), &[0.0], 0, 0.1).unwrap());
        assert!(!confirm_counterexample(&r, &affine_net(1.0, 0.0), &[0.3], 0, 1e-12).unwrap());
    }

    #[test]
    fn jet_engine_split_axes() {
        let jet = lookup_system("JetEngine").unwrap();
        let net = Network::new(vec![Layer::new(vec![vec![0.0, 0.0]; 2], None, Activation::Identity).unwrap()])
            .unwrap();
        let v = verifier(jet, net);
        let bx = Hyperrectangle::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        for depth in [0, 1, 2, 3, 4, 7] {
            assert_eq!(v.choose_split_axis(0, &bx, depth, SplitReason::Remainder, None).unwrap(), 0);
        }
        assert!(matches!(
            v.choose_split_axis(1, &bx, 0, SplitReason::Remainder, None),
            Err(Error::NoAdmissibleAxis { output: 1 })
        ));
        let ex = verifier(lookup_system("Exponential").unwrap(), v.net.clone());
        assert_eq!(ex.choose_split_axis(0, &bx, 0, SplitReason::Remainder, None).unwrap(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let v = verifier(sys1("x0", -1.0, 1.0), affine_net(1.0, 0.05));
        let t = task(-0.5, 0.25, 0.06);
        assert_eq!(v.check_box(&t).unwrap(), v.check_box(&t).unwrap());
    }
}
