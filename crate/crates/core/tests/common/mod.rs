#![allow(dead_code)]

use nacert::network::{Activation, Layer, Network};
use nacert::Hyperrectangle;
use rand::Rng;

/// Random dense network with the given layer widths; the last layer is
/// identity, the others draw their activation from `acts`.
pub fn random_net<R: Rng>(rng: &mut R, widths: &[usize], acts: &[Activation]) -> Network {
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let scale = 1.0 / (w[0] as f64).sqrt();
            let weight = (0..w[1]).map(|_| (0..w[0]).map(|_| rng.gen_range(-1.5..1.5) * scale).collect()).collect();
            let bias = rng.gen_bool(0.8).then(|| (0..w[1]).map(|_| rng.gen_range(-0.5..0.5)).collect());
            let act = if k + 2 == widths.len() { Activation::Identity } else { acts[rng.gen_range(0..acts.len())] };
            Layer::new(weight, bias, act).unwrap()
        })
        .collect();
    Network::new(layers).unwrap()
}

/// Random sub-box of `domain` whose side is a random fraction of the domain.
pub fn random_subbox<R: Rng>(rng: &mut R, domain: &Hyperrectangle, max_frac: f64) -> Hyperrectangle {
    let (lo, hi) = (domain.lower(), domain.upper());
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..domain.dim() {
        let w = (hi[i] - lo[i]) * max_frac * rng.gen::<f64>();
        let s = lo[i] + rng.gen_range(0.0..=1.0) * (hi[i] - lo[i] - w);
        a.push(s);
        b.push((s + w).min(hi[i]));
    }
    Hyperrectangle::from_bounds(&a, &b).unwrap()
}

pub fn random_box<R: Rng>(rng: &mut R, n: usize) -> Hyperrectangle {
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
    Hyperrectangle::new(c, r).unwrap()
}

/// Samples from the box, corners included.
pub fn probe_points<R: Rng>(rng: &mut R, bx: &Hyperrectangle, count: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = (bx.lower(), bx.upper());
    let n = bx.dim();
    let mut pts: Vec<Vec<f64>> = Vec::new();
    if n <= 10 {
        for mask in 0..(1usize << n) {
            pts.push((0..n).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect());
        }
    }
    pts.push(bx.center().to_vec());
    while pts.len() < count {
        pts.push(bx.sample(rng));
    }
    pts
}
