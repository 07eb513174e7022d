//! Coverage reports, the region file and plot data.
//!
//! Region file, one box per line after a header:
//!
//! ```text
//! nacert-regions 1 n=2 m=1
//! certified 0 -1 -1 0 0
//! counterexample 0 0 -1 1 0 0.5 -0.25 0.1172
//! unknown 0 0 0 1 1
//! ```
//!
//! Columns are status, output index, the min corner, the max corner and,
//! for counterexample boxes, the witness and its error. Numbers use the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionStatus {
    Certified,
    Counterexample,
    Unknown,
}

impl RegionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RegionStatus::Certified => "certified",
            RegionStatus::Counterexample => "counterexample",
            RegionStatus::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "certified" => RegionStatus::Certified,
            "counterexample" => RegionStatus::Counterexample,
            "unknown" => RegionStatus::Unknown,
            _ => return None,
        })
    }
}

/// A terminal box of the refinement for one output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub status: RegionStatus,
    pub j: usize,
    #[serde(rename = "box")]
    pub bx: Hyperrectangle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Counterexample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub j: usize,
    pub error: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputCoverage {
    pub j: usize,
    pub certified_volume: f64,
    pub counterexample_volume: f64,
    pub unknown_volume: f64,
    pub certified_fraction: f64,
    pub boxes_checked: u64,
    /// Splits per axis, by what triggered them.
    pub remainder_splits: Vec<u64>,
    pub residual_splits: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub system: String,
    pub epsilon: f64,
    pub n: usize,
    pub m: usize,
    pub domain: Hyperrectangle,
    /// Volume fraction of the domain certified for every output at once.
    pub certified_fraction: f64,
    pub per_output: Vec<OutputCoverage>,
    pub counterexamples: Vec<Counterexample>,
    pub regions: Vec<Region>,
    pub boxes_checked: u64,
    pub splits: u64,
    pub max_depth: usize,
    pub wall_time: f64,
    pub workers: usize,
    pub seed: u64,
    /// Early-stop run that ended before exhausting the work.
    pub partial: bool,
    pub budget_exhausted: bool,
}

impl CoverageReport {
    pub fn unknown_boxes(&self) -> impl Iterator<Item = &Region> {
        self.regions.iter().filter(|r| r.status == RegionStatus::Unknown)
    }

    pub fn fully_certified(&self) -> bool {
        self.certified_fraction == 1.0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&src)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Table-style summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{}: eps={} certified={:.4}% boxes={} splits={} depth={} time={:.3}s",
            self.system,
            self.epsilon,
            100.0 * self.certified_fraction,
            self.boxes_checked,
            self.splits,
            self.max_depth,
            self.wall_time
        );
        for o in &self.per_output {
            let _ = writeln!(
                s,
                "  output {}: certified {:.4}%  counterexample {:.4}%  unknown {:.4}%",
                o.j,
                100.0 * o.certified_fraction,
                100.0 * o.counterexample_volume / self.domain.volume(),
                100.0 * o.unknown_volume / self.domain.volume()
            );
        }
        if !self.counterexamples.is_empty() {
            let _ = writeln!(s, "  {} counterexamples", self.counterexamples.len());
        }
        if self.partial {
            let _ = writeln!(s, "  stopped early (partial report)");
        }
        if self.budget_exhausted {
            let _ = writeln!(s, "  time budget exhausted");
        }
        s
    }
}

/// Per-output volumes of a region list.
pub fn volume_by_status(regions: &[Region], m: usize) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; m];
    for r in regions {
        let k = match r.status {
            RegionStatus::Certified => 0,
            RegionStatus::Counterexample => 1,
            RegionStatus::Unknown => 2,
        };
        out[r.j][k] += r.bx.volume();
    }
    out
}

const REGION_MAGIC: &str = "nacert-regions";

pub fn write_regions(regions: &[Region], n: usize, m: usize) -> String {
    let mut s = format!("{REGION_MAGIC} 1 n={n} m={m}\n");
    for r in regions {
        let _ = write!(s, "{} {}", r.status.as_str(), r.j);
        for v in r.bx.lower_ref().iter().chain(r.bx.upper_ref()) {
            let _ = write!(s, " {v:?}");
        }
        if let Some(w) = &r.witness {
            for v in &w.x {
                let _ = write!(s, " {v:?}");
            }
            let _ = write!(s, " {:?}", w.error);
        }
        s.push('\n');
    }
    s
}

/// Parses a region file; returns `(n, m, regions)`.
pub fn read_regions(src: &str) -> Result<(usize, usize, Vec<Region>)> {
    let err = |line: usize, column: usize, message: String| Error::Parse { line, column, message };
    let mut lines = src.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, 1, "empty region file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let dim = |f: Option<&&str>, key: &str| -> Result<usize> {
        f.and_then(|s| s.strip_prefix(key))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(1, 1, format!("header must read `{REGION_MAGIC} 1 n=<n> m=<m>`")))
    };
    if fields.first() != Some(&REGION_MAGIC) || fields.get(1) != Some(&"1") || fields.len() != 4 {
        return Err(err(1, 1, format!("header must read `{REGION_MAGIC} 1 n=<n> m=<m>`")));
    }
    let n = dim(fields.get(2), "n=")?;
    let m = dim(fields.get(3), "m=")?;
    if n == 0 || m == 0 || n > 1 << 16 {
        return Err(err(1, 1, "dimensions must be positive".into()));
    }
    let mut regions = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let status = RegionStatus::parse(toks[0])
            .ok_or_else(|| err(lineno, 1, format!("unknown status `{}`", toks[0])))?;
        let expected = 2 + 2 * n + if status == RegionStatus::Counterexample { n + 1 } else { 0 };
        if toks.len() != expected {
            return Err(err(lineno, 1, format!("expected {expected} fields, found {}", toks.len())));
        }
        let j: usize = toks[1]
            .parse()
            .map_err(|_| err(lineno, 2, format!("bad output index `{}`", toks[1])))?;
        if j >= m {
            return Err(err(lineno, 2, format!("output index {j} out of range")));
        }
        let nums = toks[2..]
            .iter()
            .enumerate()
            .map(|(k, t)| {
                t.parse::<f64>()
                    .map_err(|_| err(lineno, k + 3, format!("bad number `{t}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let bx = Hyperrectangle::from_bounds(&nums[..n], &nums[n..2 * n])
            .map_err(|e| err(lineno, 3, e.to_string()))?;
        let witness = (status == RegionStatus::Counterexample).then(|| Counterexample {
            x: nums[2 * n..3 * n].to_vec(),
            j,
            error: nums[3 * n],
        });
        regions.push(Region { status, j, bx, witness });
    }
    Ok((n, m, regions))
}

pub fn export_regions(report: &CoverageReport, path: &Path) -> Result<()> {
    std::fs::write(path, write_regions(&report.regions, report.n, report.m)).map_err(|e| Error::io(path, e))
}

/// Whitespace-separated rectangles for plotting 1D/2D partitions:
/// `status xmin.. xmax.. j`, followed by `witness x.. j` marker rows.
pub fn plot_data(report: &CoverageReport) -> Result<String> {
    if report.n > 2 {
        return Err(Error::Dimension(format!(
            "partition plots need n <= 2, the report has n = {}",
            report.n
        )));
    }
    let mut s = String::new();
    for r in &report.regions {
        let _ = write!(s, "{}", r.status.as_str());
        for v in r.bx.lower_ref().iter().chain(r.bx.upper_ref()) {
            let _ = write!(s, " {v:?}");
        }
        let _ = writeln!(s, " {}", r.j);
    }
    for c in &report.counterexamples {
        let _ = write!(s, "witness");
        for v in &c.x {
            let _ = write!(s, " {v:?}");
        }
        let _ = writeln!(s, " {}", c.j);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(status: RegionStatus, j: usize, lo: &[f64], hi: &[f64]) -> Region {
        let bx = Hyperrectangle::from_bounds(lo, hi).unwrap();
        let witness = (status == RegionStatus::Counterexample).then(|| Counterexample {
            x: bx.center().to_vec(),
            j,
            error: 0.1 + 1e-17,
        });
        Region { status, j, bx, witness }
    }

    #[test]
    fn empty_region_file_is_header_only() {
        assert_eq!(write_regions(&[], 2, 1), "nacert-regions 1 n=2 m=1\n");
        assert_eq!(read_regions("nacert-regions 1 n=2 m=1\n").unwrap(), (2, 1, vec![]));
    }

    #[test]
    fn region_round_trip_is_exact() {
        let rs = vec![
            region(RegionStatus::Certified, 0, &[0.1, -1.0 / 3.0], &[0.2, 1e-300]),
            region(RegionStatus::Counterexample, 1, &[-0.7, 0.0], &[0.3, 2.5]),
            region(RegionStatus::Unknown, 0, &[1.0, 2.0], &[1.0 + f64::EPSILON, 3.0]),
        ];
        let text = write_regions(&rs, 2, 2);
        let (n, m, back) = read_regions(&text).unwrap();
        assert_eq!((n, m), (2, 2));
        assert_eq!(back, rs);
        assert_eq!(volume_by_status(&back, 2), volume_by_status(&rs, 2));
    }

    #[test]
    fn malformed_region_files() {
        for bad in [
            "",
            "regions 1 n=1 m=1\n",
            "nacert-regions 1 n=1 m=1\ncertified 0 0\n",
            "nacert-regions 1 n=1 m=1\nmaybe 0 0 1\n",
            "nacert-regions 1 n=1 m=1\ncertified 3 0 1\n",
            "nacert-regions 1 n=1 m=1\ncertified 0 1 0\n",
            "nacert-regions 1 n=1 m=1\ncertified 0 x 1\n",
        ] {
            assert!(read_regions(bad).is_err(), "{bad:?}");
        }
    }
}
