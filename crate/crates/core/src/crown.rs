//! Linear bound propagation through ReLU / LeakyReLU networks.
//!
//! Networks are first prepared into a [`BoundNet`]: every identity layer that
//! is followed by another layer is folded into it, so a chain such as
//! encoder → K → … → K → decoder is propagated as a handful of dense blocks.
//! Intermediate pre-activation bounds come from interval propagation, or,
//! with `tight`, from a backward pass per block intersected with the
//! interval bounds.

use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;
use crate::interval::Interval;
use crate::network::{Activation, Network};
use crate::taylor::{AffineBand, CertifiedEnclosure};

/// Affine block `σ(W x + b)`, `W` row-major.
#[derive(Clone, Debug)]
struct Block {
    w: Vec<f64>,
    b: Vec<f64>,
    rows: usize,
    cols: usize,
    act: Activation,
}

impl Block {
    fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.cols..(i + 1) * self.cols]
    }

    /// `self ∘ prev` for an identity `prev`.
    fn absorb(&self, prev: &Block) -> Block {
        let mut w = vec![0.0; self.rows * prev.cols];
        let mut b = self.b.clone();
        for i in 0..self.rows {
            let out = &mut w[i * prev.cols..(i + 1) * prev.cols];
            for (k, &wik) in self.row(i).iter().enumerate() {
                if wik == 0.0 {
                    continue;
                }
                for (o, p) in out.iter_mut().zip(prev.row(k)) {
                    *o += wik * p;
                }
                b[i] += wik * prev.b[k];
            }
        }
        Block { w, b, rows: self.rows, cols: prev.cols, act: self.act }
    }
}

/// A network prepared for bound propagation.
#[derive(Clone, Debug)]
pub struct BoundNet {
    n: usize,
    m: usize,
    blocks: Vec<Block>,
}

/// Pre-activation intervals of every block of a [`BoundNet`] on a box.
///
/// For networks without consecutive identity layers the blocks are exactly
/// the layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronBounds {
    pub bx: Hyperrectangle,
    pub layers: Vec<Vec<Interval>>,
}

/// `a_low·x + b_low ≤ N(x) ≤ a_up·x + b_up` on `bx`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineBounds {
    pub bx: Hyperrectangle,
    pub a_low: Vec<Vec<f64>>,
    pub a_up: Vec<Vec<f64>>,
    pub b_low: Vec<f64>,
    pub b_up: Vec<f64>,
}

/// Upper bounds `C N(x) + d ≤ a x + b`, one row per objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBound {
    /// `k × n`, row-major.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub k: usize,
    pub n: usize,
}

impl LinearBound {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.a[r * self.n..(r + 1) * self.n]
    }

    /// Maximum of row `r` over the box.
    pub fn max_over(&self, r: usize, bx: &Hyperrectangle) -> f64 {
        max_affine(self.row(r), self.b[r], bx)
    }
}

/// `max_x a·x + b` over the box.
pub fn max_affine(a: &[f64], b: f64, bx: &Hyperrectangle) -> f64 {
    let mut s = b;
    for ((a, c), d) in a.iter().zip(bx.center()).zip(bx.radius()) {
        s += a * c + a.abs() * d;
    }
    s
}

/// `min_x a·x + b` over the box.
pub fn min_affine(a: &[f64], b: f64, bx: &Hyperrectangle) -> f64 {
    let mut s = b;
    for ((a, c), d) in a.iter().zip(bx.center()).zip(bx.radius()) {
        s += a * c - a.abs() * d;
    }
    s
}

/// Point of the box maximising `a·x` (lower corner on ties).
pub fn argmax_corner(a: &[f64], bx: &Hyperrectangle) -> Vec<f64> {
    a.iter()
        .zip(bx.lower_ref().iter().zip(bx.upper_ref()))
        .map(|(a, (l, u))| if *a > 0.0 { *u } else { *l })
        .collect()
}

/// Linear relaxation of an activation on `[l, u]`:
/// `lower.0·y + lower.1 ≤ σ(y) ≤ upper.0·y + upper.1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation {
    pub upper: (f64, f64),
    pub lower: (f64, f64),
}

const IDENTITY: Relaxation = Relaxation { upper: (1.0, 0.0), lower: (1.0, 0.0) };

/// Triangle relaxation. The upper face is the chord through the endpoints;
/// the lower face is the steeper of the two pieces when `u > |l|`, otherwise
/// the flatter one.
pub fn relax_activation(kind: Activation, l: f64, u: f64) -> Result<Relaxation> {
    if !(l <= u) {
        return Err(Error::InvalidInterval { lo: l, hi: u });
    }
    let neg_slope = match kind {
        Activation::Identity => return Ok(IDENTITY),
        Activation::Relu => 0.0,
        Activation::LeakyRelu(s) => s,
    };
    if l >= 0.0 {
        return Ok(IDENTITY);
    }
    if u <= 0.0 {
        return Ok(Relaxation { upper: (neg_slope, 0.0), lower: (neg_slope, 0.0) });
    }
    let slope = (u - neg_slope * l) / (u - l);
    let intercept = u - slope * u;
    let lower = if u > -l { 1.0 } else { neg_slope };
    Ok(Relaxation { upper: (slope, intercept), lower: (lower, 0.0) })
}

impl BoundNet {
    pub fn new(net: &Network) -> Self {
        let mut blocks: Vec<Block> = Vec::new();
        for layer in net.layers() {
            let block = Block {
                w: (0..layer.out_dim()).flat_map(|i| layer.row(i).to_vec()).collect(),
                b: (0..layer.out_dim()).map(|i| layer.bias_at(i)).collect(),
                rows: layer.out_dim(),
                cols: layer.in_dim(),
                act: layer.activation,
            };
            match blocks.last() {
                Some(prev) if prev.act == Activation::Identity => {
                    let merged = block.absorb(prev);
                    *blocks.last_mut().expect("nonempty") = merged;
                }
                _ => blocks.push(block),
            }
        }
        BoundNet { n: net.n(), m: net.m(), blocks }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    fn check_box(&self, bx: &Hyperrectangle) -> Result<()> {
        if bx.dim() != self.n {
            return Err(Error::Dimension(format!(
                "box has {} axes, network has {} inputs",
                bx.dim(),
                self.n
            )));
        }
        Ok(())
    }

    /// `W h + b` for interval `h`, in midpoint-radius form.
    fn affine_interval(block: &Block, h: &[Interval]) -> Vec<Interval> {
        let hc: Vec<f64> = h.iter().map(|v| v.mid()).collect();
        let hr: Vec<f64> = h.iter().zip(&hc).map(|(v, c)| (v.hi - c).max(c - v.lo)).collect();
        (0..block.rows)
            .map(|i| {
                let row = block.row(i);
                let mut c = block.b[i];
                let mut r = 0.0;
                for k in 0..block.cols {
                    c += row[k] * hc[k];
                    r += row[k].abs() * hr[k];
                }
                Interval::new(c - r, c + r)
            })
            .collect()
    }

    fn activate(act: Activation, z: &[Interval]) -> Vec<Interval> {
        z.iter()
            .map(|v| Interval::new(act.apply(v.lo), act.apply(v.hi)))
            .collect()
    }

    /// Pre-activation bounds of every block.
    pub fn neuron_bounds(&self, bx: &Hyperrectangle, tight: bool) -> Result<NeuronBounds> {
        self.check_box(bx)?;
        let mut h = bx.intervals();
        let mut layers: Vec<Vec<Interval>> = Vec::with_capacity(self.blocks.len());
        for (idx, block) in self.blocks.iter().enumerate() {
            let mut z = Self::affine_interval(block, &h);
            if tight && idx > 0 {
                let back = self.pre_activation_linear(idx, &layers);
                for (i, zi) in z.iter_mut().enumerate() {
                    let hi = back.max_over(i, bx);
                    let lo = -back.max_over(block.rows + i, bx);
                    *zi = zi.clip(&Interval::new(lo, hi));
                }
            }
            h = Self::activate(block.act, &z);
            layers.push(z);
        }
        Ok(NeuronBounds { bx: bx.clone(), layers })
    }

    /// Linear upper bounds on `±z_idx` (rows `0..r` are `+z`, `r..2r` are `-z`).
    fn pre_activation_linear(&self, idx: usize, bounds: &[Vec<Interval>]) -> LinearBound {
        let block = &self.blocks[idx];
        let r = block.rows;
        let k = 2 * r;
        let mut lam = vec![0.0; k * block.cols];
        let mut beta = vec![0.0; k];
        for i in 0..r {
            lam[i * block.cols..(i + 1) * block.cols].copy_from_slice(block.row(i));
            beta[i] = block.b[i];
            for (o, w) in lam[(r + i) * block.cols..(r + i + 1) * block.cols]
                .iter_mut()
                .zip(block.row(i))
            {
                *o = -w;
            }
            beta[r + i] = -block.b[i];
        }
        self.backward_from(idx, lam, beta, k, bounds)
    }

    /// Continues a backward pass whose multipliers `lam` (`k × cols` of block
    /// `idx`) act on the output of block `idx - 1`.
    fn backward_from(
        &self,
        idx: usize,
        mut lam: Vec<f64>,
        mut beta: Vec<f64>,
        k: usize,
        bounds: &[Vec<Interval>],
    ) -> LinearBound {
        for j in (0..idx).rev() {
            let block = &self.blocks[j];
            self.relax_into(block, &bounds[j], &mut lam, &mut beta, k);
            lam = self.pull_back(block, &lam, &mut beta, k);
        }
        LinearBound { a: lam, b: beta, k, n: self.n }
    }

    /// Replaces `σ(z)` by its relaxation, picking the face by sign so the
    /// result stays an upper bound.
    fn relax_into(&self, block: &Block, z: &[Interval], lam: &mut [f64], beta: &mut [f64], k: usize) {
        if block.act == Activation::Identity {
            return;
        }
        let rel: Vec<Relaxation> = z
            .iter()
            .map(|v| relax_activation(block.act, v.lo, v.hi).expect("ordered bounds"))
            .collect();
        for r in 0..k {
            let row = &mut lam[r * block.rows..(r + 1) * block.rows];
            for (l, rel) in row.iter_mut().zip(&rel) {
                let (s, t) = if *l >= 0.0 { rel.upper } else { rel.lower };
                beta[r] += *l * t;
                *l *= s;
            }
        }
    }

    /// `lam · (W h + b)` → new multipliers on `h`.
    fn pull_back(&self, block: &Block, lam: &[f64], beta: &mut [f64], k: usize) -> Vec<f64> {
        let mut out = vec![0.0; k * block.cols];
        for r in 0..k {
            let row = &lam[r * block.rows..(r + 1) * block.rows];
            let dst = &mut out[r * block.cols..(r + 1) * block.cols];
            for (i, &l) in row.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                beta[r] += l * block.b[i];
                for (d, w) in dst.iter_mut().zip(block.row(i)) {
                    *d += l * w;
                }
            }
        }
        out
    }

    /// Upper bounds on `C N(x) + d` over the box, `C` given as `k × m`
    /// row-major.
    pub fn upper_linear(&self, c: &[f64], d: &[f64], bounds: &NeuronBounds) -> Result<LinearBound> {
        let k = d.len();
        if c.len() != k * self.m {
            return Err(Error::Dimension(format!(
                "objective has {} entries, expected {k}×{}",
                c.len(),
                self.m
            )));
        }
        let last = self.blocks.len() - 1;
        let mut lam = c.to_vec();
        let mut beta = d.to_vec();
        let top = &self.blocks[last];
        self.relax_into(top, &bounds.layers[last], &mut lam, &mut beta, k);
        let lam = self.pull_back(top, &lam, &mut beta, k);
        Ok(self.backward_from(last, lam, beta, k, &bounds.layers))
    }

    pub fn affine_bounds(&self, bx: &Hyperrectangle, tight: bool) -> Result<AffineBounds> {
        let bounds = self.neuron_bounds(bx, tight)?;
        let m = self.m;
        let mut c = vec![0.0; 2 * m * m];
        for j in 0..m {
            c[j * m + j] = 1.0;
            c[(m + j) * m + j] = -1.0;
        }
        let lin = self.upper_linear(&c, &vec![0.0; 2 * m], &bounds)?;
        Ok(AffineBounds {
            bx: bx.clone(),
            a_up: (0..m).map(|j| lin.row(j).to_vec()).collect(),
            b_up: lin.b[..m].to_vec(),
            a_low: (0..m).map(|j| lin.row(m + j).iter().map(|v| -v).collect()).collect(),
            b_low: lin.b[m..].iter().map(|v| -v).collect(),
        })
    }
}

/// Sound pre-activation intervals for every block of `net` on `bx`.
pub fn pre_activation_bounds(net: &Network, bx: &Hyperrectangle, tight: bool) -> Result<NeuronBounds> {
    BoundNet::new(net).neuron_bounds(bx, tight)
}

/// Backward linear bound propagation with interval intermediate bounds.
pub fn backward_crown(net: &Network, bx: &Hyperrectangle) -> Result<AffineBounds> {
    BoundNet::new(net).affine_bounds(bx, false)
}

/// Output intervals implied by affine bounds on their box.
pub fn concretize(bounds: &AffineBounds) -> Vec<Interval> {
    (0..bounds.b_up.len())
        .map(|j| {
            Interval::new(
                min_affine(&bounds.a_low[j], bounds.b_low[j], &bounds.bx),
                max_affine(&bounds.a_up[j], bounds.b_up[j], &bounds.bx),
            )
        })
        .collect()
}

/// Affine bounds of a network, packaged as a reference enclosure.
pub fn linearize_network(net: &Network, bx: &Hyperrectangle) -> Result<CertifiedEnclosure> {
    let ab = backward_crown(net, bx)?;
    Ok(enclosure_from_bounds(ab))
}

pub fn enclosure_from_bounds(ab: AffineBounds) -> CertifiedEnclosure {
    let rows = (0..ab.b_up.len())
        .map(|j| AffineBand {
            a_low: ab.a_low[j].clone(),
            a_up: ab.a_up[j].clone(),
            b_low: ab.b_low[j],
            b_up: ab.b_up[j],
        })
        .collect();
    CertifiedEnclosure::from_rows(ab.bx, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;

    fn net(layers: Vec<(Vec<Vec<f64>>, Vec<f64>, Activation)>) -> Network {
        Network::new(
            layers
                .into_iter()
                .map(|(w, b, a)| Layer::new(w, Some(b), a).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn unit(lo: f64, hi: f64) -> Hyperrectangle {
        Hyperrectangle::from_bounds(&[lo], &[hi]).unwrap()
    }

    #[test]
    fn interval_pre_activations() {
        let id = net(vec![(vec![vec![2.0]], vec![0.0], Activation::Identity)]);
        let nb = pre_activation_bounds(&id, &unit(-1.0, 1.0), false).unwrap();
        assert_eq!(nb.layers, vec![vec![Interval::new(-2.0, 2.0)]]);
        let two = net(vec![
            (vec![vec![1.0], vec![-1.0]], vec![0.0, 0.0], Activation::Relu),
            (vec![vec![1.0, 1.0]], vec![0.0], Activation::Identity),
        ]);
        let nb = pre_activation_bounds(&two, &unit(0.0, 1.0), false).unwrap();
        assert_eq!(nb.layers[0], vec![Interval::new(0.0, 1.0), Interval::new(-1.0, 0.0)]);
    }

    #[test]
    fn relu_relaxations() {
        let r = relax_activation(Activation::Relu, -1.0, 1.0).unwrap();
        assert_eq!(r, Relaxation { upper: (0.5, 0.5), lower: (0.0, 0.0) });
        let r = relax_activation(Activation::Relu, 0.2, 1.0).unwrap();
        assert_eq!(r, IDENTITY);
        let r = relax_activation(Activation::Relu, -2.0, -0.5).unwrap();
        assert_eq!(r, Relaxation { upper: (0.0, 0.0), lower: (0.0, 0.0) });
        let r = relax_activation(Activation::Relu, -1.0, 3.0).unwrap();
        assert_eq!(r.lower, (1.0, 0.0));
        let r = relax_activation(Activation::LeakyRelu(0.1), -1.0, 0.5).unwrap();
        assert_eq!(r.lower, (0.1, 0.0));
        assert!((-r.upper.0 + r.upper.1 + 0.1).abs() < 1e-15);
        assert!(relax_activation(Activation::Relu, 1.0, 0.0).is_err());
    }

    #[test]
    fn single_relu_neuron() {
        let n = net(vec![
            (vec![vec![1.0]], vec![0.0], Activation::Relu),
            (vec![vec![1.0]], vec![0.0], Activation::Identity),
        ]);
        let ab = backward_crown(&n, &unit(-1.0, 1.0)).unwrap();
        assert_eq!((ab.a_up[0][0], ab.b_up[0]), (0.5, 0.5));
        assert_eq!((ab.a_low[0][0], ab.b_low[0]), (0.0, 0.0));
        assert_eq!(concretize(&ab), vec![Interval::new(0.0, 1.0)]);
    }

    #[test]
    fn affine_network_is_exact() {
        let n = net(vec![(vec![vec![3.0]], vec![1.0], Activation::Identity)]);
        let ab = backward_crown(&n, &unit(-2.0, 4.0)).unwrap();
        assert_eq!((ab.a_up[0][0], ab.b_up[0]), (3.0, 1.0));
        assert_eq!((ab.a_low[0][0], ab.b_low[0]), (3.0, 1.0));
        let e = linearize_network(&n, &unit(-2.0, 4.0)).unwrap();
        assert_eq!(e.width(0), 0.0);
    }

    #[test]
    fn identity_layers_are_folded() {
        let k = (vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.0], Activation::Identity);
        let n = net(vec![
            (vec![vec![1.0], vec![-1.0]], vec![0.0, 0.5], Activation::Relu),
            (vec![vec![1.0, 0.0], vec![0.0, 2.0]], vec![0.1, 0.0], Activation::Identity),
            k.clone(),
            k,
            (vec![vec![1.0, 1.0]], vec![0.0], Activation::Relu),
            (vec![vec![2.0]], vec![0.0], Activation::Identity),
        ]);
        let bn = BoundNet::new(&n);
        assert_eq!(bn.block_count(), 3);
        let bx = unit(-1.0, 1.0);
        let ab = bn.affine_bounds(&bx, true).unwrap();
        for i in 0..=100 {
            let x = -1.0 + 0.02 * i as f64;
            let y = n.forward(&[x]).unwrap()[0];
            assert!(ab.a_low[0][0] * x + ab.b_low[0] <= y + 1e-12);
            assert!(y <= ab.a_up[0][0] * x + ab.b_up[0] + 1e-12);
        }
    }

    #[test]
    fn concretize_zero_bounds() {
        let ab = AffineBounds {
            bx: unit(-1.0, 1.0),
            a_low: vec![vec![0.0]],
            a_up: vec![vec![0.0]],
            b_low: vec![0.0],
            b_up: vec![0.0],
        };
        assert_eq!(concretize(&ab), vec![Interval::point(0.0)]);
    }
}
