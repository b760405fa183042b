//! Command-line front end.
//!
//! Every subcommand reads its settings from three layers: command-line
//! flags, then the matching `[section]` of the `--config` TOML file, then
//! built-in defaults. Reports go to stdout, data files to `--out-dir`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::io::{emit_xy, format_g6, ingest_csv, read_xy, results_line, XyTable, RESULTS_HEADER};
use crate::kde::{kde_at_quantile, KdeConfig};
use crate::resampler::{ls_density, LsConfig};
use crate::select::{auto_ls_density, grid_estimates, select_sigma, EstimateTrace, SelectionStage, SigmaGrid, DEFAULT_H};
use crate::sim::{mse_curve, run_comparison, CensoringSpec, ScenarioSpec, SigmaChoice};
use crate::survival::km_fit;

const DEFAULT_P: f64 = 0.5;
const DEFAULT_SEED: u64 = 20_240_601;
const DEFAULT_ESTIMATE_B: usize = 100_000;
const DEFAULT_SIMULATE_B: usize = 1_000;
const DEFAULT_CURVE_B: usize = 100_000;
const DEFAULT_SIMULATE_REPS: usize = 500;
const DEFAULT_CURVE_REPS: usize = 100;
const DEFAULT_CURVE_RATE: f64 = 0.12;

#[derive(Debug, Parser)]
#[command(name = "qdensity", version, about = "Density at a quantile for right-censored data")]
pub struct Cli {
    /// TOML file with one section per subcommand; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select σ by plateau search and estimate f(q) (or use a fixed --sigma).
    Estimate(Flags),
    /// Write the σ-versus-estimate trace.
    Grid(Flags),
    /// Run the plateau selector on an existing `x y` trace file.
    Select(Flags),
    /// IPCW kernel estimate at the estimated quantile.
    Kde(Flags),
    /// Monte-Carlo LS vs KDE comparison table.
    Simulate(Flags),
    /// MSE of the LS estimate over a σ grid.
    MseCurve(Flags),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Exp,
    Cauchy,
}

impl ScenarioKind {
    fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Exp => "exp",
            ScenarioKind::Cauchy => "cauchy",
        }
    }
}

/// Flags shared by the subcommands; each one uses the subset it needs.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Flags {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Quantile order.
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of Gaussian perturbations.
    #[arg(long = "B", id = "resamples")]
    #[serde(rename = "B")]
    pub resamples: Option<usize>,
    /// Fixed σ; bypasses the plateau search.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// σ grid as lo:hi:step.
    #[arg(long)]
    pub sigma_grid: Option<String>,
    /// Neighborhood half-width of the plateau search.
    #[arg(long)]
    pub h: Option<usize>,
    /// Bandwidth grid as lo:hi:count (log-spaced).
    #[arg(long)]
    pub bandwidth_grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Accept zero or negative times.
    #[arg(long)]
    #[serde(default)]
    pub allow_negative: bool,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioKind>,
    /// Target censored fractions, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub censoring: Option<Vec<f64>>,
    /// Exponential censoring rate (mse-curve).
    #[arg(long)]
    pub censoring_rate: Option<f64>,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Monte-Carlo replications.
    #[arg(long)]
    pub reps: Option<usize>,
}

impl Flags {
    /// Fills unset flags from `file`.
    fn layered_over(self, file: Flags) -> Flags {
        Flags {
            input: self.input.or(file.input),
            p: self.p.or(file.p),
            resamples: self.resamples.or(file.resamples),
            sigma: self.sigma.or(file.sigma),
            sigma_grid: self.sigma_grid.or(file.sigma_grid),
            h: self.h.or(file.h),
            bandwidth_grid: self.bandwidth_grid.or(file.bandwidth_grid),
            seed: self.seed.or(file.seed),
            out_dir: self.out_dir.or(file.out_dir),
            allow_negative: self.allow_negative || file.allow_negative,
            scenario: self.scenario.or(file.scenario),
            censoring: self.censoring.or(file.censoring),
            censoring_rate: self.censoring_rate.or(file.censoring_rate),
            n: self.n.or(file.n),
            reps: self.reps.or(file.reps),
        }
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("--input is required".into()))
    }

    fn p(&self) -> f64 {
        self.p.unwrap_or(DEFAULT_P)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn h(&self) -> usize {
        self.h.unwrap_or(DEFAULT_H)
    }

    fn sigma_grid(&self, default: (f64, f64, f64)) -> Result<SigmaGrid> {
        match &self.sigma_grid {
            Some(s) => {
                let (lo, hi, step) = parse_triple(s, "--sigma-grid")?;
                SigmaGrid::uniform(lo, hi, step)
            }
            None => SigmaGrid::uniform(default.0, default.1, default.2),
        }
    }

    fn kde_config(&self) -> Result<Option<KdeConfig>> {
        self.bandwidth_grid
            .as_deref()
            .map(|s| {
                let (lo, hi, count) = parse_triple(s, "--bandwidth-grid")?;
                if count.fract() != 0.0 || count < 2.0 {
                    return Err(Error::InvalidConfig(
                        "--bandwidth-grid count must be an integer >= 2".into(),
                    ));
                }
                KdeConfig::log_spaced(lo, hi, count as usize)
            })
            .transpose()
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out_dir {
            fs::create_dir_all(dir)?;
        }
        Ok(self.out_dir.as_deref())
    }
}

fn parse_triple(s: &str, flag: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    let parsed: std::result::Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse()).collect();
    match parsed.as_deref() {
        Ok([a, b, c]) => Ok((*a, *b, *c)),
        _ => Err(Error::InvalidConfig(format!("{flag} expects lo:hi:x, got `{s}`"))),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct ConfigFile {
    #[serde(default)]
    estimate: Flags,
    #[serde(default)]
    grid: Flags,
    #[serde(default)]
    select: Flags,
    #[serde(default)]
    kde: Flags,
    #[serde(default)]
    simulate: Flags,
    #[serde(default)]
    mse_curve: Flags,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e
            .span()
            .map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
        column: 1,
        message: e.message().to_string(),
    })
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            1
        }
    }
}

/// Runs a parsed command, returning the stdout report.
pub fn run(cli: Cli) -> Result<String> {
    let file = load_config(cli.config.as_deref())?;
    let work = move || match cli.command {
        Command::Estimate(f) => cmd_estimate(&f.layered_over(file.estimate)),
        Command::Grid(f) => cmd_grid(&f.layered_over(file.grid)),
        Command::Select(f) => cmd_select(&f.layered_over(file.select)),
        Command::Kde(f) => cmd_kde(&f.layered_over(file.kde)),
        Command::Simulate(f) => cmd_simulate(&f.layered_over(file.simulate)),
        Command::MseCurve(f) => cmd_mse_curve(&f.layered_over(file.mse_curve)),
    };
    match cli.threads {
        Some(0) => Err(Error::InvalidConfig("--threads must be positive".into())),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn stage_label(stage: SelectionStage) -> &'static str {
    match stage {
        SelectionStage::Extremum => "extremum",
        SelectionStage::SlidingWindow => "sliding-window",
    }
}

fn trace_table(grid: &SigmaGrid, trace: &EstimateTrace) -> Result<XyTable> {
    XyTable::new(grid.values().iter().copied().zip(trace.estimates().iter().copied()).collect())
}

pub fn cmd_estimate(flags: &Flags) -> Result<String> {
    let sample = ingest_csv(flags.input()?, flags.allow_negative)?;
    let curve = km_fit(&sample)?;
    let p = flags.p();
    let resamples = flags.resamples.unwrap_or(DEFAULT_ESTIMATE_B);
    let seed = flags.seed();
    let mut out = String::new();
    writeln!(out, "n = {}", sample.len()).unwrap();
    writeln!(out, "events = {}", sample.n_events()).unwrap();
    writeln!(out, "p = {}", format_g6(p)).unwrap();

    if let Some(sigma) = flags.sigma {
        let est = ls_density(&curve, p, &LsConfig::new(resamples, sigma, seed)?)?;
        writeln!(out, "q_hat = {}", format_g6(est.q_hat)).unwrap();
        writeln!(out, "sigma = {} (fixed)", format_g6(sigma)).unwrap();
        writeln!(out, "f_hat = {}", format_g6(est.value)).unwrap();
        writeln!(out, "mc_std_error = {}", format_g6(est.std_error)).unwrap();
        return Ok(out);
    }

    let grid = flags.sigma_grid((0.05, 10.0, 0.05))?;
    let auto = auto_ls_density(&curve, p, &grid, flags.h(), resamples, seed)?;
    let (lo, hi) = auto.selection.plateau;
    writeln!(out, "q_hat = {}", format_g6(auto.estimate.q_hat)).unwrap();
    writeln!(
        out,
        "sigma = {} ({} stage, plateau [{}, {}])",
        format_g6(auto.selection.sigma),
        stage_label(auto.selection.stage),
        format_g6(grid.values()[lo]),
        format_g6(grid.values()[hi])
    )
    .unwrap();
    writeln!(out, "f_hat = {}", format_g6(auto.estimate.value)).unwrap();
    writeln!(out, "mc_std_error = {}", format_g6(auto.estimate.std_error)).unwrap();
    if let Some(dir) = flags.out_dir()? {
        let path = dir.join("trace.txt");
        emit_xy(&trace_table(&grid, &auto.trace)?, &path)?;
        writeln!(out, "trace = {}", path.display()).unwrap();
    }
    Ok(out)
}

pub fn cmd_grid(flags: &Flags) -> Result<String> {
    let sample = ingest_csv(flags.input()?, flags.allow_negative)?;
    let curve = km_fit(&sample)?;
    let grid = flags.sigma_grid((0.05, 10.0, 0.05))?;
    let trace = grid_estimates(
        &curve,
        flags.p(),
        &grid,
        flags.resamples.unwrap_or(DEFAULT_ESTIMATE_B),
        flags.seed(),
        flags.h(),
    )?;
    let table = trace_table(&grid, &trace)?;
    match flags.out_dir()? {
        Some(dir) => {
            let path = dir.join("trace.txt");
            emit_xy(&table, &path)?;
            Ok(format!("trace = {}\n", path.display()))
        }
        None => Ok(table.render()),
    }
}

pub fn cmd_select(flags: &Flags) -> Result<String> {
    let table = read_xy(flags.input()?)?;
    let grid = SigmaGrid::new(table.rows().iter().map(|r| r.0).collect())?;
    let trace = EstimateTrace::new(table.rows().iter().map(|r| r.1).collect(), flags.h())?;
    let sel = select_sigma(&grid, &trace)?;
    let (lo, hi) = sel.plateau;
    Ok(format!(
        "sigma = {}\nstage = {}\nplateau = [{}, {}]\n",
        format_g6(sel.sigma),
        stage_label(sel.stage),
        format_g6(grid.values()[lo]),
        format_g6(grid.values()[hi])
    ))
}

pub fn cmd_kde(flags: &Flags) -> Result<String> {
    let sample = ingest_csv(flags.input()?, flags.allow_negative)?;
    let config = flags.kde_config()?;
    let est = kde_at_quantile(&sample, flags.p(), config.as_ref())?;
    Ok(format!(
        "p = {}\nq_hat = {}\nbandwidth = {}\nf_hat = {}\n",
        format_g6(flags.p()),
        format_g6(est.eval_point),
        format_g6(est.bandwidth),
        format_g6(est.value)
    ))
}

fn scenario_spec(kind: ScenarioKind, n: usize, censoring: CensoringSpec) -> ScenarioSpec {
    let base = match kind {
        ScenarioKind::Exp => ScenarioSpec::scenario1(n, 0.0),
        ScenarioKind::Cauchy => ScenarioSpec::scenario2(n, 0.0),
    };
    ScenarioSpec { censoring, ..base }
}

#[derive(serde::Serialize)]
struct RunMetadata {
    scenario: &'static str,
    master_seed: u64,
    replications: usize,
    resamples: usize,
    p: f64,
    sigma_selection: String,
    runs: Vec<RunEntry>,
}

#[derive(serde::Serialize)]
struct RunEntry {
    n: usize,
    censoring_target: f64,
    censoring_rate: f64,
    realized_censoring: f64,
    true_density: f64,
    mean_selected_sigma: f64,
    retained: usize,
    excluded: usize,
}

pub fn cmd_simulate(flags: &Flags) -> Result<String> {
    let kind = flags.scenario.unwrap_or(ScenarioKind::Exp);
    let sizes = flags.n.clone().unwrap_or_else(|| vec![50, 200]);
    let levels = flags.censoring.clone().unwrap_or_else(|| vec![0.4, 0.25, 0.1]);
    let seed = flags.seed();
    let reps = flags.reps.unwrap_or(DEFAULT_SIMULATE_REPS);
    let resamples = flags.resamples.unwrap_or(DEFAULT_SIMULATE_B);
    let p = flags.p();
    let choice = match flags.sigma {
        Some(s) => SigmaChoice::Fixed(s),
        None => SigmaChoice::GridSearch {
            grid: flags.sigma_grid((0.05, 10.0, 0.05))?,
            h: flags.h(),
        },
    };
    let kde = flags.kde_config()?;

    let mut csv = String::from(RESULTS_HEADER);
    csv.push('\n');
    let mut runs = Vec::new();
    for &n in &sizes {
        for &c in &levels {
            let spec = ScenarioSpec {
                p,
                replications: reps,
                resamples,
                master_seed: seed,
                ..scenario_spec(kind, n, CensoringSpec::Fraction(c))
            };
            let report = run_comparison(&spec, &choice, kde.as_ref())?;
            for row in &report.rows {
                csv.push_str(&results_line(kind.label(), row));
                csv.push('\n');
            }
            runs.push(RunEntry {
                n,
                censoring_target: c,
                censoring_rate: report.censoring_rate,
                realized_censoring: report.realized_censoring,
                true_density: report.truth,
                mean_selected_sigma: report.mean_sigma,
                retained: report.retained,
                excluded: report.excluded,
            });
        }
    }
    let meta = RunMetadata {
        scenario: kind.label(),
        master_seed: seed,
        replications: reps,
        resamples,
        p,
        sigma_selection: match &choice {
            SigmaChoice::Fixed(s) => format!("fixed {s}"),
            SigmaChoice::GridSearch { grid, h } => format!(
                "grid search over {} values [{}, {}], h = {h}",
                grid.len(),
                format_g6(grid.values()[0]),
                format_g6(grid.values()[grid.len() - 1])
            ),
        },
        runs,
    };
    let mut out = csv.clone();
    let excluded: usize = meta.runs.iter().map(|r| r.excluded).sum();
    writeln!(out, "# excluded replicates: {excluded}").unwrap();
    if let Some(dir) = flags.out_dir()? {
        fs::write(dir.join("results.csv"), &csv)?;
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| Error::InvalidInput(format!("metadata: {e}")))?;
        fs::write(dir.join("metadata.json"), json + "\n")?;
    }
    Ok(out)
}

pub fn cmd_mse_curve(flags: &Flags) -> Result<String> {
    let kind = flags.scenario.unwrap_or(ScenarioKind::Exp);
    let sizes = flags.n.clone().unwrap_or_else(|| vec![50, 200, 1000]);
    let grid = flags.sigma_grid((0.05, 15.0, 0.05))?;
    let censoring = match (flags.censoring_rate, flags.censoring.as_deref()) {
        (Some(r), _) => CensoringSpec::Rate(r),
        (None, Some([f])) => CensoringSpec::Fraction(*f),
        (None, Some(_)) => {
            return Err(Error::InvalidConfig(
                "mse-curve takes a single --censoring value".into(),
            ))
        }
        (None, None) => CensoringSpec::Rate(DEFAULT_CURVE_RATE),
    };
    let mut out = String::new();
    let dir = flags.out_dir()?;
    for n in sizes {
        let spec = ScenarioSpec {
            p: flags.p(),
            replications: flags.reps.unwrap_or(DEFAULT_CURVE_REPS),
            resamples: flags.resamples.unwrap_or(DEFAULT_CURVE_B),
            master_seed: flags.seed(),
            ..scenario_spec(kind, n, censoring)
        };
        let curve = mse_curve(&spec, &grid)?;
        let (lo, hi) = curve.low_mse_window(2.0);
        let best = curve
            .points
            .iter()
            .min_by(|a, b| a.mse.total_cmp(&b.mse))
            .expect("grid is nonempty");
        writeln!(
            out,
            "n = {n}: min mse {} at sigma {}, mse <= 2x min on [{}, {}], excluded {}",
            format_g6(best.mse),
            format_g6(best.sigma),
            format_g6(lo),
            format_g6(hi),
            curve.excluded
        )
        .unwrap();
        if let Some(dir) = dir {
            let table = XyTable::new(curve.points.iter().map(|pt| (pt.sigma, pt.mse)).collect())?;
            emit_xy(&table, &dir.join(format!("data_n{n}.txt")))?;
        }
    }
    Ok(out)
}
