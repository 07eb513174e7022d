//! Adaptive refinement of the domain over a pool of worker threads.
//!
//! Work items live on one shared LIFO stack (a priority heap in early-stop
//! mode). Each worker pops a task, runs the per-box check and either records
//! a terminal region or pushes the two halves back. The run ends when the
//! stack is empty and no task is in flight. Every task is a pure function of
//! its box, output and depth, so the final partition does not depend on the
//! number of workers or on scheduling.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperrect::Hyperrectangle;
use crate::network::Network;
use crate::report::{Counterexample, CoverageReport, OutputCoverage, Region, RegionStatus};
use crate::verifier::{CheckConfig, Reference, SplitReason, VerificationTask, Verdict, Verifier};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Refine until every box is certified, falsified or at the floor.
    #[default]
    Exhaustive,
    /// Stop at the first counterexample; the report is flagged partial.
    EarlyStop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PartitionConfig {
    pub workers: usize,
    /// Initial cells per axis. Defaults to 2 per axis for n <= 3, else 1.
    pub grid: Option<Vec<usize>>,
    /// Per-axis split floor. Defaults to 1e-4 of the domain width.
    pub min_width: Option<Vec<f64>>,
    pub max_depth: usize,
    pub seed: u64,
    pub samples: usize,
    pub tight_bounds: bool,
    pub mode: Mode,
    /// Wall-clock budget; whatever is left when it runs out becomes unknown.
    pub time_budget: Option<Duration>,
    /// Outputs to verify; all of them when `None`.
    pub outputs: Option<Vec<usize>>,
    /// Name recorded in the report.
    pub system: String,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            grid: None,
            min_width: None,
            max_depth: 60,
            seed: 0,
            samples: 8,
            tight_bounds: false,
            mode: Mode::Exhaustive,
            time_budget: None,
            outputs: None,
            system: String::new(),
        }
    }
}

impl PartitionConfig {
    pub fn resolved_grid(&self, n: usize) -> Result<Vec<usize>> {
        match &self.grid {
            Some(g) if g.len() != n => Err(Error::Config(format!("grid has {} entries for n = {n}", g.len()))),
            Some(g) if g.contains(&0) => Err(Error::Config("grid counts must be positive".into())),
            Some(g) => Ok(g.clone()),
            None => Ok(vec![if n <= 3 { 2 } else { 1 }; n]),
        }
    }

    pub fn resolved_min_width(&self, domain: &Hyperrectangle) -> Result<Vec<f64>> {
        let n = domain.dim();
        match &self.min_width {
            Some(w) if w.len() != n => Err(Error::Config(format!("min_width has {} entries for n = {n}", w.len()))),
            Some(w) if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) => {
                Err(Error::Config("min_width entries must be finite and non-negative".into()))
            }
            Some(w) => Ok(w.clone()),
            None => Ok((0..n).map(|i| 1e-4 * domain.width(i)).collect()),
        }
    }

    /// Per-box settings matching this run.
    pub fn check_config(&self, domain: &Hyperrectangle) -> Result<CheckConfig> {
        Ok(CheckConfig {
            samples: self.samples,
            seed: self.seed,
            tight_bounds: self.tight_bounds,
            min_width: self.resolved_min_width(domain)?,
        })
    }
}

/// Cells of the initial grid over the domain.
pub fn initial_partition(domain: &Hyperrectangle, grid: &[usize]) -> Result<Vec<Hyperrectangle>> {
    domain.grid(grid)
}

/// Halves `task` along `axis`; children inherit output and ε at depth + 1.
pub fn split_box(task: &VerificationTask, axis: usize) -> Result<(VerificationTask, VerificationTask)> {
    let (a, b) = task.bx.split(axis)?;
    let child = |bx| VerificationTask { bx, j: task.j, epsilon: task.epsilon, depth: task.depth + 1 };
    Ok((child(a), child(b)))
}

/// Builds the verifier from the config and runs [`verify_with`].
pub fn verify_domain(
    reference: Reference,
    net: Network,
    domain: &Hyperrectangle,
    epsilon: f64,
    config: &PartitionConfig,
) -> Result<CoverageReport> {
    let verifier = Verifier::new(reference, net, config.check_config(domain)?)?;
    verify_with(&verifier, domain, epsilon, config)
}

/// A queued task and the branch it was split from.
type Pending = (VerificationTask, Option<u64>);

struct Item {
    task: Pending,
    priority: f64,
    seq: u64,
}

impl PartialEq for Item {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority).then(other.seq.cmp(&self.seq))
    }
}

enum Queue {
    Stack(Vec<Pending>),
    Heap(BinaryHeap<Item>, u64),
}

impl Queue {
    fn push(&mut self, task: Pending, excess: f64) {
        match self {
            Queue::Stack(s) => s.push(task),
            Queue::Heap(h, seq) => {
                let priority = excess / task.0.bx.volume();
                h.push(Item { task, priority, seq: *seq });
                *seq += 1;
            }
        }
    }

    fn pop(&mut self) -> Option<Pending> {
        match self {
            Queue::Stack(s) => s.pop(),
            Queue::Heap(h, _) => h.pop().map(|i| i.task),
        }
    }

    fn len(&self) -> usize {
        match self {
            Queue::Stack(s) => s.len(),
            Queue::Heap(h, _) => h.len(),
        }
    }

    fn drain(&mut self) -> Vec<Pending> {
        match self {
            Queue::Stack(s) => std::mem::take(s),
            Queue::Heap(h, _) => std::mem::take(h).into_iter().map(|i| i.task).collect(),
        }
    }
}

/// A split box whose halves are not both settled yet.
struct Branch {
    parent: Option<u64>,
    bx: Hyperrectangle,
    open: u8,
    mixed: bool,
    held: Vec<Hyperrectangle>,
}

enum Settled {
    Certified(Hyperrectangle),
    Region(Region),
    /// a subtree that already emitted its regions
    Mixed,
}

/// Split tree of the open work. A branch whose halves both certify is
/// reported as one certified box, so the regions are the leaves with every
/// fully certified subtree collapsed into its root. That result does not
/// depend on scheduling, and memory stays proportional to the open work.
#[derive(Default)]
struct Tree {
    next: u64,
    branches: HashMap<u64, Branch>,
    regions: Vec<Region>,
    settled_volume: f64,
}

impl Tree {
    fn branch(&mut self, parent: Option<u64>, bx: Hyperrectangle) -> u64 {
        let id = self.next;
        self.next += 1;
        self.branches.insert(id, Branch { parent, bx, open: 2, mixed: false, held: Vec::new() });
        id
    }

    fn leaf(&mut self, parent: Option<u64>, j: usize, bx: Hyperrectangle, status: RegionStatus, witness: Option<Counterexample>) {
        self.settled_volume += bx.volume();
        let settled = match status {
            RegionStatus::Certified => Settled::Certified(bx),
            _ => Settled::Region(Region { status, j, bx, witness }),
        };
        self.settle(parent, j, settled);
    }

    fn settle(&mut self, mut parent: Option<u64>, j: usize, mut settled: Settled) {
        loop {
            let Some(id) = parent else {
                match settled {
                    Settled::Certified(bx) => self.regions.push(Region { status: RegionStatus::Certified, j, bx, witness: None }),
                    Settled::Region(r) => self.regions.push(r),
                    Settled::Mixed => {}
                }
                return;
            };
            let b = self.branches.get_mut(&id).expect("open branch");
            match settled {
                Settled::Certified(bx) => b.held.push(bx),
                Settled::Region(r) => {
                    b.mixed = true;
                    self.regions.push(r);
                }
                Settled::Mixed => b.mixed = true,
            }
            b.open -= 1;
            if b.open > 0 {
                return;
            }
            let b = self.branches.remove(&id).expect("open branch");
            parent = b.parent;
            settled = if b.mixed {
                let certified = b.held.into_iter().map(|bx| Region { status: RegionStatus::Certified, j, bx, witness: None });
                self.regions.extend(certified);
                Settled::Mixed
            } else {
                Settled::Certified(b.bx)
            };
        }
    }
}

struct Shared {
    queue: Queue,
    tree: Tree,
    total_volume: f64,
    in_flight: usize,
    processed: u64,
    stop: bool,
    partial: bool,
    budget_exhausted: bool,
    error: Option<Error>,
}

#[derive(Default)]
struct Local {
    checked: Vec<u64>,
    remainder: Vec<Vec<u64>>,
    residual: Vec<Vec<u64>>,
    max_depth: usize,
}

impl Local {
    fn new(n: usize, m: usize) -> Self {
        Local {
            checked: vec![0; m],
            remainder: vec![vec![0; n]; m],
            residual: vec![vec![0; n]; m],
            max_depth: 0,
        }
    }

    fn merge(&mut self, other: Local) {
        for j in 0..self.checked.len() {
            self.checked[j] += other.checked[j];
            for i in 0..self.remainder[j].len() {
                self.remainder[j][i] += other.remainder[j][i];
                self.residual[j][i] += other.residual[j][i];
            }
        }
        self.max_depth = self.max_depth.max(other.max_depth);
    }
}

enum Step {
    Terminal(RegionStatus, Option<Counterexample>),
    Split(VerificationTask, VerificationTask, f64),
}

fn process(verifier: &Verifier, task: &VerificationTask, max_depth: usize, local: &mut Local) -> Result<Step> {
    local.checked[task.j] += 1;
    local.max_depth = local.max_depth.max(task.depth);
    let verdict = match verifier.check_box(task) {
        Ok(v) => v,
        Err(Error::NoAdmissibleAxis { .. }) | Err(Error::EnclosureUnavailable(_)) => {
            return Ok(Step::Terminal(RegionStatus::Unknown, None))
        }
        Err(e) => return Err(e),
    };
    Ok(match verdict {
        Verdict::Certified => Step::Terminal(RegionStatus::Certified, None),
        Verdict::Falsified { x, error } => {
            Step::Terminal(RegionStatus::Counterexample, Some(Counterexample { x, j: task.j, error }))
        }
        Verdict::Split { .. } if task.depth >= max_depth => Step::Terminal(RegionStatus::Unknown, None),
        Verdict::Split { axis, reason, excess } => {
            let counts = match reason {
                SplitReason::Remainder => &mut local.remainder,
                SplitReason::Residual => &mut local.residual,
            };
            counts[task.j][axis] += 1;
            let (a, b) = split_box(task, axis)?;
            Step::Split(a, b, excess)
        }
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

const PROGRESS_EVERY: u64 = 100_000;

fn worker(
    verifier: &Verifier,
    shared: &Mutex<Shared>,
    cv: &Condvar,
    config: &PartitionConfig,
    deadline: Option<Instant>,
) -> Local {
    let mut local = Local::new(verifier.n(), verifier.m());
    let lock = || shared.lock().unwrap_or_else(|p| p.into_inner());
    loop {
        let task = {
            let mut s = lock();
            loop {
                if s.stop {
                    break None;
                }
                if deadline.is_some_and(|d| Instant::now() >= d) {
                    s.budget_exhausted = true;
                    s.stop = true;
                    cv.notify_all();
                    break None;
                }
                if let Some(t) = s.queue.pop() {
                    s.in_flight += 1;
                    break Some(t);
                }
                if s.in_flight == 0 {
                    break None;
                }
                s = match deadline {
                    Some(d) => cv.wait_timeout(s, d.saturating_duration_since(Instant::now())).unwrap_or_else(|p| p.into_inner()).0,
                    None => cv.wait(s).unwrap_or_else(|p| p.into_inner()),
                };
            }
        };
        let Some((task, parent)) = task else {
            cv.notify_all();
            return local;
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| process(verifier, &task, config.max_depth, &mut local)))
            .unwrap_or_else(|p| {
                Err(Error::WorkerPanic {
                    task: format!("output {} box {:?}..{:?}", task.j, task.bx.lower_ref(), task.bx.upper_ref()),
                    message: panic_message(p),
                })
            });
        let mut s = lock();
        s.in_flight -= 1;
        s.processed += 1;
        if s.processed % PROGRESS_EVERY == 0 {
            let settled = 100.0 * s.tree.settled_volume / s.total_volume;
            tracing::info!(boxes = s.processed, queued = s.queue.len(), settled = format!("{settled:.3}%"), "partitioning");
        }
        let j = task.j;
        match outcome {
            Ok(Step::Terminal(status, witness)) => {
                if status == RegionStatus::Counterexample && config.mode == Mode::EarlyStop {
                    s.stop = true;
                    s.partial = true;
                }
                s.tree.leaf(parent, j, task.bx, status, witness);
            }
            Ok(Step::Split(a, b, excess)) => {
                if s.stop {
                    s.tree.leaf(parent, j, task.bx, RegionStatus::Unknown, None);
                } else {
                    let id = s.tree.branch(parent, task.bx);
                    s.queue.push((b, Some(id)), excess);
                    s.queue.push((a, Some(id)), excess);
                }
            }
            Err(e) => {
                s.tree.leaf(parent, j, task.bx, RegionStatus::Unknown, None);
                s.error.get_or_insert(e);
                s.stop = true;
            }
        }
        cv.notify_all();
    }
}

/// Refines `domain` until every output is settled on every box.
pub fn verify_with(
    verifier: &Verifier,
    domain: &Hyperrectangle,
    epsilon: f64,
    config: &PartitionConfig,
) -> Result<CoverageReport> {
    let start = Instant::now();
    let (n, m) = (verifier.n(), verifier.m());
    if domain.dim() != n {
        return Err(Error::Dimension(format!("domain has dimension {}, the network takes {n}", domain.dim())));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive and finite, got {epsilon}")));
    }
    if config.workers == 0 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    let outputs = config.outputs.clone().unwrap_or_else(|| (0..m).collect());
    if let Some(&j) = outputs.iter().find(|&&j| j >= m) {
        return Err(Error::Config(format!("output {j} out of range for m = {m}")));
    }
    let cells = initial_partition(domain, &config.resolved_grid(n)?)?;

    let mut queue = match config.mode {
        Mode::Exhaustive => Queue::Stack(Vec::new()),
        Mode::EarlyStop => Queue::Heap(BinaryHeap::new(), 0),
    };
    // reversed so the stack pops cells in grid order, output 0 first
    for &j in outputs.iter().rev() {
        for bx in cells.iter().rev() {
            queue.push((VerificationTask { bx: bx.clone(), j, epsilon, depth: 0 }, None), f64::INFINITY);
        }
    }
    let shared = Mutex::new(Shared {
        queue,
        tree: Tree::default(),
        total_volume: domain.volume() * outputs.len() as f64,
        in_flight: 0,
        processed: 0,
        stop: false,
        partial: false,
        budget_exhausted: false,
        error: None,
    });
    let cv = Condvar::new();
    let deadline = config.time_budget.map(|b| start + b);

    tracing::info!(system = %config.system, epsilon, cells = cells.len(), outputs = outputs.len(), "verification started");
    let mut total = Local::new(n, m);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..config.workers)
            .map(|_| scope.spawn(|| worker(verifier, &shared, &cv, config, deadline)))
            .collect();
        for h in handles {
            // worker bodies catch panics from the checks themselves
            total.merge(h.join().expect("worker loop panicked"));
        }
    });

    let mut shared = shared.into_inner().unwrap_or_else(|p| p.into_inner());
    if let Some(e) = shared.error.take() {
        return Err(e);
    }
    for (task, parent) in shared.queue.drain() {
        shared.tree.leaf(parent, task.j, task.bx, RegionStatus::Unknown, None);
    }
    debug_assert!(shared.tree.branches.is_empty());

    let mut regions = std::mem::take(&mut shared.tree.regions);
    regions.sort_by(region_order);
    let mut counterexamples: Vec<Counterexample> = regions.iter().filter_map(|r| r.witness.clone()).collect();
    counterexamples.sort_by(|a, b| a.j.cmp(&b.j).then(lex(&a.x, &b.x)));

    let domain_volume = domain.volume();
    let mut per_output: Vec<OutputCoverage> = (0..m)
        .map(|j| OutputCoverage {
            j,
            boxes_checked: total.checked[j],
            remainder_splits: total.remainder[j].clone(),
            residual_splits: total.residual[j].clone(),
            ..Default::default()
        })
        .collect();
    for r in &regions {
        let o = &mut per_output[r.j];
        let v = r.bx.volume();
        match r.status {
            RegionStatus::Certified => o.certified_volume += v,
            RegionStatus::Counterexample => o.counterexample_volume += v,
            RegionStatus::Unknown => o.unknown_volume += v,
        }
    }
    for o in &mut per_output {
        o.certified_fraction = if outputs.contains(&o.j) && o.counterexample_volume == 0.0 && o.unknown_volume == 0.0 {
            1.0
        } else {
            (o.certified_volume / domain_volume).clamp(0.0, 1.0)
        };
    }
    let certified_fraction = if outputs.len() < m {
        0.0
    } else {
        joint_certified_fraction(&regions, &per_output, domain_volume)
    };

    tracing::info!(
        certified_fraction,
        boxes = total.checked.iter().sum::<u64>(),
        seconds = start.elapsed().as_secs_f64(),
        "verification finished"
    );
    let splits = per_output
        .iter()
        .map(|o| o.remainder_splits.iter().chain(&o.residual_splits).sum::<u64>())
        .sum();
    Ok(CoverageReport {
        system: config.system.clone(),
        epsilon,
        n,
        m,
        domain: domain.clone(),
        certified_fraction,
        per_output,
        counterexamples,
        regions,
        boxes_checked: total.checked.iter().sum(),
        splits,
        max_depth: total.max_depth,
        wall_time: start.elapsed().as_secs_f64(),
        workers: config.workers,
        seed: config.seed,
        partial: shared.partial,
        budget_exhausted: shared.budget_exhausted,
    })
}

/// One probe of an ε sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub epsilon: f64,
    pub certified_fraction: f64,
    pub counterexamples: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Smallest probe certified on the whole domain.
    pub certified: f64,
    /// Largest probe that was not, if any was tried.
    pub rejected: Option<f64>,
    pub probes: Vec<Probe>,
}

/// Bisects `[lo, hi]` for the smallest ε certified on the whole domain,
/// until `certified <= rejected * (1 + tolerance)`. `hi` must certify.
/// `config.time_budget` applies to each probe.
pub fn sweep_epsilon(
    verifier: &Verifier,
    domain: &Hyperrectangle,
    lo: f64,
    hi: f64,
    tolerance: f64,
    config: &PartitionConfig,
) -> Result<SweepResult> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Config(format!("sweep bracket [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    if !(tolerance > 0.0) {
        return Err(Error::Config("sweep tolerance must be positive".into()));
    }
    let mut probes = Vec::new();
    let mut probe = |eps: f64| -> Result<bool> {
        let r = verify_with(verifier, domain, eps, config)?;
        probes.push(Probe {
            epsilon: eps,
            certified_fraction: r.certified_fraction,
            counterexamples: r.counterexamples.len(),
            wall_time: r.wall_time,
        });
        Ok(r.fully_certified())
    };
    if !probe(hi)? {
        return Err(Error::Config(format!("upper bracket {hi} does not certify within the budget")));
    }
    if probe(lo)? {
        return Ok(SweepResult { certified: lo, rejected: None, probes });
    }
    let (mut good, mut bad) = (hi, lo);
    while good > bad * (1.0 + tolerance) {
        let mid = 0.5 * (good + bad);
        if probe(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(SweepResult { certified: good, rejected: Some(bad), probes })
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Output, then min corner, then max corner.
pub fn region_order(a: &Region, b: &Region) -> Ordering {
    a.j.cmp(&b.j)
        .then_with(|| lex(a.bx.lower_ref(), b.bx.lower_ref()))
        .then_with(|| lex(a.bx.upper_ref(), b.bx.upper_ref()))
}

/// Beyond this many uncertified boxes the joint fraction falls back to the
/// union bound instead of the exact union volume.
const EXACT_UNION_LIMIT: usize = 4096;

/// Fraction of the domain certified for every output at once.
fn joint_certified_fraction(regions: &[Region], per_output: &[OutputCoverage], domain_volume: f64) -> f64 {
    let bad: Vec<&Hyperrectangle> =
        regions.iter().filter(|r| r.status != RegionStatus::Certified).map(|r| &r.bx).collect();
    if bad.is_empty() {
        return 1.0;
    }
    if bad.len() > EXACT_UNION_LIMIT {
        let missing: f64 = per_output.iter().map(|o| 1.0 - o.certified_fraction).sum();
        return (1.0 - missing).clamp(0.0, 1.0);
    }
    (1.0 - union_volume(&bad) / domain_volume).clamp(0.0, 1.0)
}

/// Volume of a union of boxes, by cutting each new box against the
/// disjoint pieces kept so far.
pub fn union_volume(boxes: &[&Hyperrectangle]) -> f64 {
    let mut pieces: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for b in boxes {
        let mut fresh = vec![(b.lower(), b.upper())];
        for (plo, phi) in &pieces {
            fresh = fresh.into_iter().flat_map(|f| subtract(f, plo, phi)).collect();
            if fresh.is_empty() {
                break;
            }
        }
        pieces.extend(fresh);
    }
    pieces
        .iter()
        .map(|(lo, hi)| lo.iter().zip(hi).map(|(l, h)| h - l).product::<f64>())
        .sum()
}

/// `a \ b` as at most `2n` disjoint boxes.
fn subtract(a: (Vec<f64>, Vec<f64>), blo: &[f64], bhi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (mut lo, mut hi) = a;
    let n = lo.len();
    if (0..n).any(|i| bhi[i] <= lo[i] || blo[i] >= hi[i]) {
        return vec![(lo, hi)];
    }
    let mut out = Vec::new();
    for i in 0..n {
        if lo[i] < blo[i] {
            let mut h = hi.clone();
            h[i] = blo[i];
            out.push((lo.clone(), h));
            lo[i] = blo[i];
        }
        if hi[i] > bhi[i] {
            let mut l = lo.clone();
            l[i] = bhi[i];
            out.push((l, hi.clone()));
            hi[i] = bhi[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{parse_expr, DynamicalSystem, TimeKind};
    use crate::network::{Activation, Layer};

    fn system(srcs: &[&str], lo: &[f64], hi: &[f64]) -> DynamicalSystem {
        let outputs = srcs.iter().map(|s| parse_expr(s, &[]).unwrap()).collect();
        let d = Hyperrectangle::from_bounds(lo, hi).unwrap();
        DynamicalSystem::new("t", outputs, d, 0.1, TimeKind::Continuous).unwrap()
    }

    fn affine_net(w: Vec<Vec<f64>>, b: Vec<f64>) -> Network {
        Network::new(vec![Layer::new(w, Some(b), Activation::Identity).unwrap()]).unwrap()
    }

    fn config(workers: usize) -> PartitionConfig {
        PartitionConfig { workers, ..Default::default() }
    }

    /// Splits [0,1] into four quarters and settles them in `order`.
    fn settle_quarters(order: &[usize], status: [RegionStatus; 4]) -> Vec<Region> {
        let unit = Hyperrectangle::from_bounds(&[0.0], &[1.0]).unwrap();
        let mut t = Tree::default();
        let root = t.branch(None, unit.clone());
        let (l, r) = unit.split(0).unwrap();
        let ids = [t.branch(Some(root), l.clone()), t.branch(Some(root), r.clone())];
        let (a, b) = l.split(0).unwrap();
        let (c, d) = r.split(0).unwrap();
        let quarters = [a, b, c, d];
        for &k in order {
            t.leaf(Some(ids[k / 2]), 0, quarters[k].clone(), status[k], None);
        }
        assert!(t.branches.is_empty());
        t.regions.sort_by(region_order);
        t.regions
    }

    #[test]
    fn certified_subtrees_collapse() {
        use RegionStatus::*;
        let all = settle_quarters(&[0, 1, 2, 3], [Certified; 4]);
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].bx.upper(), vec![1.0]);

        let mixed = [Certified, Certified, Certified, Unknown];
        let regions = settle_quarters(&[0, 1, 2, 3], mixed);
        assert_eq!(regions.len(), 3);
        assert!(regions.iter().any(|r| r.status == Certified && r.bx.volume() == 0.5));
        for order in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
            assert_eq!(settle_quarters(&order, mixed), regions);
        }
    }

    #[test]
    fn certified_runs_report_the_initial_grid() {
        let sys = system(&["x0*x0", "x1"], &[-1.0, -1.0], &[1.0, 1.0]);
        let d = sys.domain.clone();
        let net = affine_net(vec![vec![0.0, 0.0], vec![0.0, 1.0]], vec![0.5, 0.0]);
        let r = verify_domain(Reference::analytic(sys), net, &d, 0.6, &config(2)).unwrap();
        assert_eq!(r.certified_fraction, 1.0);
        assert!(r.splits > 0);
        assert_eq!(r.regions.len(), 8);
    }

    #[test]
    fn default_grid_and_floor() {
        let c = PartitionConfig::default();
        assert_eq!(c.resolved_grid(2).unwrap(), vec![2, 2]);
        assert_eq!(c.resolved_grid(4).unwrap(), vec![1; 4]);
        let d = Hyperrectangle::from_bounds(&[0.0, -1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(c.resolved_min_width(&d).unwrap(), vec![1e-4, 4e-4]);
    }

    #[test]
    fn split_box_halves_and_deepens() {
        let t = VerificationTask {
            bx: Hyperrectangle::from_bounds(&[0.0, 0.0], &[2.0, 1.0]).unwrap(),
            j: 1,
            epsilon: 0.1,
            depth: 3,
        };
        let (a, b) = split_box(&t, 0).unwrap();
        assert_eq!((a.depth, b.depth, a.j), (4, 4, 1));
        assert_eq!(a.bx.volume() + b.bx.volume(), 2.0);
    }

    #[test]
    fn exact_affine_network_is_fully_certified() {
        let sys = system(&["x0 + 2*x1 - 1"], &[-1.0, -1.0], &[1.0, 1.0]);
        let net = affine_net(vec![vec![1.0, 2.0]], vec![-1.0]);
        let d = Hyperrectangle::from_bounds(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let r = verify_domain(Reference::analytic(sys), net, &d, 0.01, &config(1)).unwrap();
        assert_eq!(r.certified_fraction, 1.0);
        assert_eq!(r.regions.len(), 4);
        assert!(r.counterexamples.is_empty());
    }

    #[test]
    fn offset_network_yields_counterexamples() {
        let sys = system(&["x0"], &[-1.0], &[1.0]);
        let net = affine_net(vec![vec![1.0]], vec![0.5]);
        let d = Hyperrectangle::from_bounds(&[-1.0], &[1.0]).unwrap();
        let r = verify_domain(Reference::analytic(sys), net, &d, 0.1, &config(2)).unwrap();
        assert_eq!(r.certified_fraction, 0.0);
        assert_eq!(r.counterexamples.len(), 2);
        assert!(r.counterexamples.iter().all(|c| (c.error - 0.5).abs() < 1e-12));
    }

    #[test]
    fn sweep_brackets_a_constant_offset() {
        let sys = system(&["x0"], &[-1.0], &[1.0]);
        let d = sys.domain.clone();
        let net = affine_net(vec![vec![1.0]], vec![0.2]);
        let c = config(1);
        let v = Verifier::new(Reference::analytic(sys), net, c.check_config(&d).unwrap()).unwrap();
        let r = sweep_epsilon(&v, &d, 0.01, 1.0, 0.05, &c).unwrap();
        assert!(r.certified > 0.2 && r.certified <= 0.2 * 1.05, "{r:?}");
        assert!(r.rejected.unwrap() <= 0.2);
        assert!(sweep_epsilon(&v, &d, 0.01, 0.1, 0.05, &c).is_err());
    }

    #[test]
    fn union_volume_of_overlapping_boxes() {
        let a = Hyperrectangle::from_bounds(&[0.0, 0.0], &[2.0, 2.0]).unwrap();
        let b = Hyperrectangle::from_bounds(&[1.0, 1.0], &[3.0, 3.0]).unwrap();
        let c = Hyperrectangle::from_bounds(&[0.5, 0.5], &[1.5, 1.5]).unwrap();
        assert_eq!(union_volume(&[&a, &b]), 7.0);
        assert_eq!(union_volume(&[&a, &b, &c]), 7.0);
        assert_eq!(union_volume(&[&c, &a]), 4.0);
    }

    #[test]
    fn invalid_configs() {
        let sys = system(&["x0"], &[-1.0], &[1.0]);
        let d = Hyperrectangle::from_bounds(&[-1.0], &[1.0]).unwrap();
        let run = |c: PartitionConfig, eps: f64| {
            verify_domain(Reference::analytic(sys.clone()), affine_net(vec![vec![1.0]], vec![0.0]), &d, eps, &c)
        };
        assert!(run(config(0), 0.1).is_err());
        assert!(run(config(1), 0.0).is_err());
        assert!(run(PartitionConfig { grid: Some(vec![1, 1]), ..config(1) }, 0.1).is_err());
        assert!(run(PartitionConfig { outputs: Some(vec![1]), ..config(1) }, 0.1).is_err());
    }
}
