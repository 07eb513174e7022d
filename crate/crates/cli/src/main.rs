use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use nacert::dynamics::{lookup_system, DynamicalSystem, SystemConfig};
use nacert::koopman::{verify_koopman, KoopmanModel};
use nacert::network::Network;
use nacert::partitioner::{sweep_epsilon, verify_with, Mode, PartitionConfig};
use nacert::report::{export_regions, plot_data, CoverageReport};
use nacert::verifier::{Reference, Verifier};
use nacert::Hyperrectangle;

#[derive(Parser)]
#[command(name = "nacert", version, about = "Certify neural abstractions of nonlinear dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify a network against a system over its domain.
    Verify(VerifyArgs),
    /// Bisect for the smallest ε certified on the whole domain.
    Sweep(SweepArgs),
    /// Write plot-ready rectangles from a report (n <= 2).
    PlotData(ReportArgs),
    /// Write the region file of a report.
    Export(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML run configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in system name, e.g. water_tank.
    #[arg(long)]
    system: Option<String>,
    /// TOML system definition instead of a built-in.
    #[arg(long)]
    system_config: Option<PathBuf>,
    /// Network to verify.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Use a network as the reference instead of the system equations.
    #[arg(long)]
    reference_weights: Option<PathBuf>,
    /// Koopman model prefix, e.g. weights/koopman; verifies each step.
    #[arg(long, conflicts_with_all = ["weights", "reference_weights"])]
    koopman: Option<PathBuf>,
    /// Koopman steps to verify; all up to the horizon by default.
    #[arg(long, value_delimiter = ',')]
    steps: Option<Vec<usize>>,
    /// Use the tolerance of the larger networks.
    #[arg(long)]
    large: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    min_width: Option<Vec<f64>>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Backward passes for intermediate bounds instead of intervals.
    #[arg(long)]
    tight_bounds: bool,
    /// Wall-clock budget in seconds (per probe when sweeping).
    #[arg(long)]
    time_budget: Option<f64>,
    /// Restrict verification to these outputs.
    #[arg(long, value_delimiter = ',')]
    outputs: Option<Vec<usize>>,
    /// Verify over this box instead of the system domain, as lo:hi per axis.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    domain: Option<Vec<String>>,
    /// Machine-readable report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Region file export.
    #[arg(long)]
    regions: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, allow_negative_numbers = true)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Lower bracket; defaults to hi / 100.
    #[arg(long)]
    eps_lo: Option<f64>,
    /// Upper bracket; must certify. Defaults to the system tolerance.
    #[arg(long)]
    eps_hi: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Exhaustive,
    EarlyStop,
}

/// Run configuration file; same keys as the flags, in snake case.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunFile {
    system: Option<String>,
    system_config: Option<PathBuf>,
    weights: Option<PathBuf>,
    reference_weights: Option<PathBuf>,
    koopman: Option<PathBuf>,
    steps: Option<Vec<usize>>,
    #[serde(default)]
    large: bool,
    epsilon: Option<f64>,
    workers: Option<usize>,
    grid: Option<Vec<usize>>,
    min_width: Option<Vec<f64>>,
    max_depth: Option<usize>,
    seed: Option<u64>,
    samples: Option<usize>,
    mode: Option<ModeArg>,
    #[serde(default)]
    tight_bounds: bool,
    time_budget: Option<f64>,
    outputs: Option<Vec<usize>>,
    domain: Option<Vec<String>>,
    report: Option<PathBuf>,
    regions: Option<PathBuf>,
}

impl RunFile {
    fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file: RunFile = toml::from_str(&src).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut file.system_config,
            &mut file.weights,
            &mut file.reference_weights,
            &mut file.koopman,
            &mut file.report,
            &mut file.regions,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(file)
    }
}

/// Flags merged over the config file.
struct Run {
    args: RunArgs,
    epsilon: Option<f64>,
}

impl Run {
    fn new(mut args: RunArgs, epsilon: Option<f64>) -> Result<Self> {
        let file = match &args.config {
            Some(p) => RunFile::load(p)?,
            None => RunFile::default(),
        };
        macro_rules! merge {
            ($($f:ident),*) => { $( if args.$f.is_none() { args.$f = file.$f; } )* };
        }
        merge!(
            system, system_config, weights, reference_weights, koopman, steps, workers, grid, min_width,
            max_depth, seed, samples, mode, time_budget, outputs, domain, report, regions
        );
        args.large |= file.large;
        args.tight_bounds |= file.tight_bounds;
        Ok(Run { args, epsilon: epsilon.or(file.epsilon) })
    }

    fn system(&self) -> Result<DynamicalSystem> {
        match (&self.args.system, &self.args.system_config) {
            (Some(_), Some(_)) => bail!("give either --system or --system-config, not both"),
            (Some(name), None) => Ok(lookup_system(name)?),
            (None, Some(path)) => Ok(SystemConfig::load(path)?.build()?),
            (None, None) => bail!("no system given (--system or --system-config)"),
        }
    }

    fn default_epsilon(&self, sys: &DynamicalSystem) -> f64 {
        match (self.args.large, sys.large_epsilon) {
            (true, Some(e)) => e,
            _ => sys.default_epsilon,
        }
    }

    fn partition_config(&self, system: &str) -> Result<PartitionConfig> {
        let a = &self.args;
        let mut c = PartitionConfig { system: system.to_string(), tight_bounds: a.tight_bounds, ..Default::default() };
        if let Some(w) = a.workers {
            if w == 0 {
                bail!("--workers must be positive");
            }
            c.workers = w;
        }
        c.grid = a.grid.clone();
        c.min_width = a.min_width.clone();
        if let Some(d) = a.max_depth {
            c.max_depth = d;
        }
        if let Some(s) = a.seed {
            c.seed = s;
        }
        if let Some(s) = a.samples {
            c.samples = s;
        }
        if let Some(m) = a.mode {
            c.mode = match m {
                ModeArg::Exhaustive => Mode::Exhaustive,
                ModeArg::EarlyStop => Mode::EarlyStop,
            };
        }
        if let Some(t) = a.time_budget {
            if !(t > 0.0 && t.is_finite()) {
                bail!("--time-budget must be positive");
            }
            c.time_budget = Some(Duration::from_secs_f64(t));
        }
        c.outputs = a.outputs.clone();
        Ok(c)
    }

    fn verifier(&self, sys: DynamicalSystem, config: &PartitionConfig) -> Result<(Verifier, Hyperrectangle)> {
        let weights = self.args.weights.as_ref().context("no network given (--weights)")?;
        let net = Network::load(weights)?;
        let domain = match &self.args.domain {
            Some(axes) => parse_domain(axes, sys.n)?,
            None => sys.domain.clone(),
        };
        let reference = match &self.args.reference_weights {
            Some(p) => Reference::network(Network::load(p)?),
            None => Reference::analytic(sys),
        };
        let check = nacert::verifier::CheckConfig {
            samples: config.samples,
            seed: config.seed,
            tight_bounds: config.tight_bounds,
            min_width: config.resolved_min_width(&domain)?,
        };
        Ok((Verifier::new(reference, net, check)?, domain))
    }
}

fn parse_domain(axes: &[String], n: usize) -> Result<Hyperrectangle> {
    if axes.len() != n {
        bail!("--domain has {} axes, the system has {n}", axes.len());
    }
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for a in axes {
        let (l, h) = a.split_once(':').with_context(|| format!("domain axis `{a}` is not lo:hi"))?;
        lo.push(l.trim().parse::<f64>().with_context(|| format!("domain axis `{a}`"))?);
        hi.push(h.trim().parse::<f64>().with_context(|| format!("domain axis `{a}`"))?);
    }
    Ok(Hyperrectangle::from_bounds(&lo, &hi)?)
}

/// 0 fully certified, 2 counterexamples, 3 only unknown volume left.
fn exit_code(report: &CoverageReport) -> u8 {
    if report.fully_certified() {
        0
    } else if !report.counterexamples.is_empty() {
        2
    } else {
        3
    }
}

fn write_artifacts(run: &Run, report: &CoverageReport) -> Result<()> {
    if let Some(p) = &run.args.report {
        report.save(p)?;
    }
    if let Some(p) = &run.args.regions {
        export_regions(report, p)?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let run = Run::new(args.run, args.epsilon)?;
    if let Some(prefix) = &run.args.koopman {
        return cmd_koopman(&run, prefix);
    }
    let sys = run.system()?;
    let eps = run.epsilon.unwrap_or_else(|| run.default_epsilon(&sys));
    let config = run.partition_config(&sys.name)?;
    let (verifier, domain) = run.verifier(sys, &config)?;
    let report = verify_with(&verifier, &domain, eps, &config)?;
    print!("{}", report.summary());
    for c in &report.counterexamples {
        println!("  counterexample output {} at {:?}: error {}", c.j, c.x, c.error);
    }
    write_artifacts(&run, &report)?;
    Ok(exit_code(&report))
}

fn cmd_koopman(run: &Run, prefix: &Path) -> Result<u8> {
    let dir = prefix.parent().unwrap_or(Path::new("."));
    let name = prefix.file_name().and_then(|s| s.to_str()).context("bad Koopman prefix")?;
    let model = KoopmanModel::load(dir, name)?;
    let eps = run.epsilon.unwrap_or(0.1);
    let config = run.partition_config("QuadraticSystem")?;
    let steps = run.args.steps.clone().unwrap_or_else(|| (0..=model.horizon).collect());
    let reports = verify_koopman(&model, eps, steps, &config)?;
    let mut code = 0;
    let mut all = Vec::new();
    for s in &reports {
        let r = &s.report;
        println!(
            "step {:>3}: certified {:.4}%  counterexamples {}  boxes {}  time {:.3}s",
            s.t,
            100.0 * r.certified_fraction,
            r.counterexamples.len(),
            r.boxes_checked,
            r.wall_time
        );
        code = code.max(match exit_code(r) {
            0 => 0,
            3 => 1,
            _ => 2,
        });
        all.push(s.clone());
    }
    if let Some(p) = &run.args.report {
        let json = serde_json::to_string_pretty(&all)?;
        std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok([0, 3, 2][code])
}

fn cmd_sweep(args: SweepArgs) -> Result<u8> {
    let run = Run::new(args.run, None)?;
    let sys = run.system()?;
    let hi = args.eps_hi.unwrap_or_else(|| run.default_epsilon(&sys));
    let lo = args.eps_lo.unwrap_or(hi / 100.0);
    let config = run.partition_config(&sys.name)?;
    let (verifier, domain) = run.verifier(sys, &config)?;
    let result = sweep_epsilon(&verifier, &domain, lo, hi, args.tolerance, &config)?;
    for p in &result.probes {
        println!(
            "eps {:<12} certified {:.4}%  counterexamples {}  time {:.3}s",
            p.epsilon,
            100.0 * p.certified_fraction,
            p.counterexamples,
            p.wall_time
        );
    }
    match result.rejected {
        Some(r) => println!("minimal certified eps: {} (rejected {r})", result.certified),
        None => println!("minimal certified eps: {} (lower bracket)", result.certified),
    }
    if let Some(p) = &run.args.report {
        let json = serde_json::to_string_pretty(&result)?;
        std::fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(0)
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_plot_data(args: ReportArgs) -> Result<u8> {
    let report = CoverageReport::load(&args.report)?;
    emit(args.output.as_deref(), &plot_data(&report)?)?;
    Ok(0)
}

fn cmd_export(args: ReportArgs) -> Result<u8> {
    let report = CoverageReport::load(&args.report)?;
    emit(
        args.output.as_deref(),
        &nacert::report::write_regions(&report.regions, report.n, report.m),
    )?;
    Ok(0)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    // usage errors exit 1; 2 is reserved for counterexamples
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::PlotData(a) => cmd_plot_data(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
