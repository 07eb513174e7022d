use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

/// Axis-aligned box `{x : |x - center| ≤ radius}` (elementwise).
///
/// The corners are stored alongside center and radius so boxes built from
/// bounds, and the children of splits, keep their exact edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Corners", into = "Corners")]
pub struct Hyperrectangle {
    center: Vec<f64>,
    radius: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Corners {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<Corners> for Hyperrectangle {
    type Error = Error;

    fn try_from(c: Corners) -> Result<Self> {
        Hyperrectangle::from_bounds(&c.lower, &c.upper)
    }
}

impl From<Hyperrectangle> for Corners {
    fn from(b: Hyperrectangle) -> Self {
        Corners { lower: b.lo, upper: b.hi }
    }
}

impl Hyperrectangle {
    pub fn new(center: Vec<f64>, radius: Vec<f64>) -> Result<Self> {
        if center.len() != radius.len() {
            return Err(Error::InvalidBox(format!(
                "center has {} entries but radius has {}",
                center.len(),
                radius.len()
            )));
        }
        if center.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        if let Some(i) = radius.iter().position(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "radius[{i}] = {} must be finite and nonnegative",
                radius[i]
            )));
        }
        if let Some(i) = center.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidBox(format!("center[{i}] is not finite")));
        }
        let lo = center.iter().zip(&radius).map(|(c, r)| c - r).collect();
        let hi = center.iter().zip(&radius).map(|(c, r)| c + r).collect();
        Ok(Hyperrectangle { center, radius, lo, hi })
    }

    /// Box from its min and max corners.
    pub fn from_bounds(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::InvalidBox("corner dimensions differ".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::InvalidBox(format!(
                "lower[{i}] = {} exceeds upper[{i}] = {}",
                lower[i], upper[i]
            )));
        }
        if lower.is_empty() {
            return Err(Error::InvalidBox("zero-dimensional box".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !lower[i].is_finite() || !upper[i].is_finite()) {
            return Err(Error::InvalidBox(format!("bounds along axis {i} are not finite")));
        }
        Ok(Self::from_corners_unchecked(lower.to_vec(), upper.to_vec()))
    }

    fn from_corners_unchecked(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let center = lo.iter().zip(&hi).map(|(l, u)| 0.5 * l + 0.5 * u).collect();
        let radius = lo.iter().zip(&hi).map(|(l, u)| 0.5 * (u - l)).collect();
        Hyperrectangle { center, radius, lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn lower(&self) -> Vec<f64> {
        self.lo.clone()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.hi.clone()
    }

    pub fn lower_ref(&self) -> &[f64] {
        &self.lo
    }

    pub fn upper_ref(&self) -> &[f64] {
        &self.hi
    }

    pub fn interval(&self, i: usize) -> Interval {
        Interval::new(self.lo[i], self.hi[i])
    }

    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.dim()).map(|i| self.interval(i)).collect()
    }

    /// Lebesgue measure, `∏ 2δ_i`, taken from the corners.
    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, u)| u - l).product()
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, u))| l <= x && x <= u)
    }

    /// Whether `other` lies inside `self`, up to a relative tolerance.
    pub fn contains_box(&self, other: &Hyperrectangle, tol: f64) -> bool {
        let (lo, hi) = (&self.lo, &self.hi);
        let (olo, ohi) = (&other.lo, &other.hi);
        (0..self.dim()).all(|i| {
            let slack = tol * (hi[i] - lo[i]).max(1.0);
            olo[i] >= lo[i] - slack && ohi[i] <= hi[i] + slack
        })
    }

    /// Halves the box along `axis`: both children keep every other radius,
    /// the split radius becomes `δ_axis / 2`, and the centers move to
    /// `c ± (δ - δ')`. Returns `(upper child, lower child)`.
    pub fn split(&self, axis: usize) -> Result<(Hyperrectangle, Hyperrectangle)> {
        if axis >= self.dim() {
            return Err(Error::DegenerateAxis {
                axis,
                reason: format!("box has only {} axes", self.dim()),
            });
        }
        if !(self.radius[axis] > 0.0) {
            return Err(Error::DegenerateAxis {
                axis,
                reason: "zero radius".into(),
            });
        }
        let mid = self.center[axis];
        let mut up_lo = self.lo.clone();
        up_lo[axis] = mid;
        let mut down_hi = self.hi.clone();
        down_hi[axis] = mid;
        Ok((
            Self::from_corners_unchecked(up_lo, self.hi.clone()),
            Self::from_corners_unchecked(self.lo.clone(), down_hi),
        ))
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, u)| (l + (u - l) * rng.gen::<f64>()).min(*u))
            .collect()
    }

    /// Regular grid of `counts[i]` cells per axis, covering `self` exactly.
    pub fn grid(&self, counts: &[usize]) -> Result<Vec<Hyperrectangle>> {
        if counts.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "grid has {} axes, box has {}",
                counts.len(),
                self.dim()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::Config("grid counts must be at least 1".into()));
        }
        let (lo, hi) = (&self.lo, &self.hi);
        // Cell edges per axis; the outermost edges are the exact corners.
        let edges: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| {
                (0..=counts[i])
                    .map(|k| {
                        if k == counts[i] {
                            hi[i]
                        } else {
                            lo[i] + (hi[i] - lo[i]) * k as f64 / counts[i] as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let total: usize = counts.iter().product();
        let mut cells = Vec::with_capacity(total);
        let mut idx = vec![0usize; self.dim()];
        for _ in 0..total {
            let cl: Vec<f64> = (0..self.dim()).map(|i| edges[i][idx[i]]).collect();
            let cu: Vec<f64> = (0..self.dim()).map(|i| edges[i][idx[i] + 1]).collect();
            cells.push(Self::from_corners_unchecked(cl, cu));
            for i in (0..self.dim()).rev() {
                idx[i] += 1;
                if idx[i] < counts[i] {
                    break;
                }
                idx[i] = 0;
            }
        }
        Ok(cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_formula() {
        let b = Hyperrectangle::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let (a, c) = b.split(0).unwrap();
        assert_eq!(a.center(), &[0.5, 0.0]);
        assert_eq!(c.center(), &[-0.5, 0.0]);
        assert_eq!(a.radius(), &[0.5, 1.0]);
        assert_eq!(c.radius(), &[0.5, 1.0]);
    }

    #[test]
    fn split_one_dimensional() {
        let b = Hyperrectangle::new(vec![2.0], vec![1.0]).unwrap();
        let (hi, lo) = b.split(0).unwrap();
        assert_eq!((lo.lower(), lo.upper()), (vec![1.0], vec![2.0]));
        assert_eq!((hi.lower(), hi.upper()), (vec![2.0], vec![3.0]));
    }

    #[test]
    fn split_degenerate_axis_rejected() {
        let b = Hyperrectangle::new(vec![0.0, 0.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(b.split(0), Err(Error::DegenerateAxis { .. })));
        assert!(b.split(5).is_err());
    }

    #[test]
    fn grid_two_by_two() {
        let d = Hyperrectangle::from_bounds(&[-0.5, -0.5], &[0.5, 0.5]).unwrap();
        let cells = d.grid(&[2, 2]).unwrap();
        assert_eq!(cells.len(), 4);
        for c in &cells {
            assert_eq!(c.radius(), &[0.25, 0.25]);
            assert!(c.center().iter().all(|x| x.abs() == 0.25));
        }
        assert_eq!(d.grid(&[1, 1]).unwrap(), vec![d.clone()]);
    }

    #[test]
    fn invalid_boxes() {
        assert!(Hyperrectangle::new(vec![0.0], vec![-1.0]).is_err());
        assert!(Hyperrectangle::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(Hyperrectangle::from_bounds(&[1.0], &[0.0]).is_err());
        assert!(Hyperrectangle::new(vec![], vec![]).is_err());
    }
}
