//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pfconv_core::cox::{simulate, CoxModel, CoxParams, GammaProposal, ObservationSeries};
use pfconv_core::histogram::{total_variation, weighted_histogram};
use pfconv_core::moments::{check_cox_moment_condition, quadrature_weight_moment, MomentCondition};
use pfconv_core::{run_filter, ResampleScheme, RunOptions, TestFunction};
use serde::Serialize;

use crate::checks::check_resampler;
use crate::config::ExperimentConfig;
use crate::proposal::ProposalChoice;
use crate::report::{emit_report, num, write_density_csv, write_filter_csv, write_grid_csv, Format};
use crate::study::{grid_oracle, run_convergence_study, workers_from_env, ConvergenceReport, Measure};
use crate::svg::histogram_overlay;
use crate::LabError;

#[derive(Debug, Parser)]
#[command(name = "pfconv", version, about = "Particle filter convergence experiments on a Cox-process model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the reflected random walk and its Poisson counts.
    Simulate(SimulateArgs),
    /// Run one particle filter over an observation file.
    Filter(FilterArgs),
    /// Run the dense-grid reference filter.
    Grid(GridArgs),
    /// Tabulate weight-moment verdicts for the Gamma proposal.
    Moments(MomentsArgs),
    /// Run a convergence study from a config file.
    Converge(ConvergeArgs),
    /// Check the resampling contracts on random inputs.
    CheckResampler(CheckResamplerArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Intensity slope: y_t ~ Poisson(c x_t).
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Variance of the random-walk step.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of observations.
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Observation CSV (`t,y`).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional state CSV (`t,x`, including t = 0).
    #[arg(long)]
    pub states: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProposalArgs {
    /// `gamma` or `bootstrap`.
    #[arg(long, default_value = "gamma")]
    pub proposal: String,
    /// Gamma shape.
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    /// Gamma rate.
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
}

impl ProposalArgs {
    fn choice(&self) -> Result<ProposalChoice, LabError> {
        match self.proposal.as_str() {
            "gamma" => Ok(ProposalChoice::Gamma(GammaProposal::new(self.alpha, self.beta)?)),
            "bootstrap" => Ok(ProposalChoice::Bootstrap),
            other => Err(LabError::Config(format!("unknown proposal {other:?}"))),
        }
    }
}

#[derive(Debug, Args)]
pub struct GridGeometry {
    /// Grid cell width.
    #[arg(long, default_value_t = 0.005)]
    pub dx: f64,
    /// Upper end of the grid.
    #[arg(long, default_value_t = 15.0)]
    pub x_max: f64,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub proposal: ProposalArgs,
    /// Observation CSV (`t,y`).
    #[arg(long)]
    pub obs: PathBuf,
    /// Number of particles.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// multinomial, stratified or systematic.
    #[arg(long, default_value = "multinomial")]
    pub resampler: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Test function; repeat for several (one, exp_neg, indicator_leq(a), min_cap(a)).
    #[arg(long = "phi", default_value = "exp_neg")]
    pub phi: Vec<String>,
    /// Resample only when ESS falls below this fraction of N.
    #[arg(long)]
    pub ess_threshold: Option<f64>,
    /// Per-step CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Histogram-vs-grid overlay SVG at `--plot-step`.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Weighted particle cloud (`x,weight`) at `--plot-step`.
    #[arg(long)]
    pub cloud_out: Option<PathBuf>,
    #[arg(long, default_value_t = 11)]
    pub plot_step: usize,
    /// Histogram bins on [0, hist-max).
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    #[arg(long, default_value_t = 6.0)]
    pub hist_max: f64,
    #[command(flatten)]
    pub grid: GridGeometry,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridGeometry,
    /// Observation CSV (`t,y`).
    #[arg(long)]
    pub obs: PathBuf,
    /// Test function reported in `estimate_phi`.
    #[arg(long, default_value = "exp_neg")]
    pub phi: String,
    /// Per-step CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full density dump (`t,x,density`).
    #[arg(long)]
    pub density_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Moment orders (2 and/or 4).
    #[arg(long, value_delimiter = ',', default_values_t = vec![2, 4])]
    pub p: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1.5, 1.25])]
    pub alpha: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5])]
    pub beta: Vec<f64>,
    /// Previous state at which the quadrature is evaluated.
    #[arg(long, default_value_t = 1.0)]
    pub x_prev: f64,
    /// Quadrature refinement level.
    #[arg(long, default_value_t = 20)]
    pub level: u32,
    /// text or json.
    #[arg(long, default_value = "text")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Study config (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Intensity slope.
    #[arg(long)]
    pub c: Option<f64>,
    /// Random-walk step variance.
    #[arg(long)]
    pub eta: Option<f64>,
    /// `gamma` or `bootstrap`.
    #[arg(long)]
    pub proposal: Option<String>,
    /// Gamma shape.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Gamma rate.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Observation CSV (`t,y`).
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Comma-separated particle counts, e.g. `128,512,2048`.
    #[arg(long, value_delimiter = ',')]
    pub particle_counts: Option<Vec<usize>>,
    /// Independent replicates per particle count.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated test functions.
    #[arg(long, value_delimiter = ',')]
    pub test_functions: Option<Vec<String>>,
    /// Comma-separated error moments (2 and/or 4).
    #[arg(long, value_delimiter = ',')]
    pub moments: Option<Vec<u32>>,
    /// multinomial, stratified or systematic.
    #[arg(long)]
    pub resampler: Option<String>,
    /// Master seed for all replicate streams.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time step at which the rate is fitted.
    #[arg(long)]
    pub fit_step: Option<usize>,
    /// Oracle grid cell width.
    #[arg(long)]
    pub dx: Option<f64>,
    /// Upper end of the oracle grid.
    #[arg(long)]
    pub x_max: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Output file stem.
    #[arg(long)]
    pub stem: Option<String>,
}

impl ConvergeArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig, LabError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.model.c, self.c);
        set!(cfg.model.eta, self.eta);
        set!(cfg.proposal.kind, self.proposal);
        set!(cfg.proposal.alpha, self.alpha);
        set!(cfg.proposal.beta, self.beta);
        set!(cfg.data.observations, self.observations);
        set!(cfg.study.particle_counts, self.particle_counts);
        set!(cfg.study.replicates, self.replicates);
        set!(cfg.study.test_functions, self.test_functions);
        set!(cfg.study.moments, self.moments);
        set!(cfg.study.resampler, self.resampler);
        set!(cfg.study.master_seed, self.seed);
        set!(cfg.study.fit_step, self.fit_step);
        set!(cfg.oracle.dx, self.dx);
        set!(cfg.oracle.x_max, self.x_max);
        set!(cfg.output.dir, self.out_dir);
        set!(cfg.output.stem, self.stem);
        if cfg.data.observations.as_os_str().is_empty() {
            return Err(LabError::Config("no observation file (set data.observations or --observations)".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct CheckResamplerArgs {
    /// Scheme to check; all three when omitted.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Parse `argv` and run; returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), LabError> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Filter(a) => cmd_filter(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Moments(a) => cmd_moments(a),
        Command::Converge(a) => cmd_converge(a),
        Command::CheckResampler(a) => cmd_check_resampler(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, LabError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LabError::Io(format!("{}: {e}", path.display())))
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, LabError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn read_observations(path: &Path) -> Result<ObservationSeries, LabError> {
    let f = File::open(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    Ok(ObservationSeries::read_csv(f)?)
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), LabError> {
    let params = CoxParams::new(a.model.c, a.model.eta)?;
    let (traj, obs) = simulate(&params, a.steps, a.seed)?;
    obs.write_csv(create(&a.out)?)?;
    if let Some(p) = &a.states {
        traj.write_csv(create(p)?)?;
    }
    Ok(())
}

fn parse_phis(names: &[String]) -> Result<Vec<TestFunction>, LabError> {
    Ok(names.iter().map(|n| n.parse()).collect::<Result<Vec<_>, _>>()?)
}

fn cmd_filter(a: FilterArgs) -> Result<(), LabError> {
    let model = CoxModel::new(a.model.c, a.model.eta)?;
    let proposal = a.proposal.choice()?;
    let resampler: ResampleScheme = a.resampler.parse()?;
    let obs = read_observations(&a.obs)?.values();
    let want_cloud = a.svg.is_some() || a.cloud_out.is_some();
    let options = RunOptions {
        test_functions: parse_phis(&a.phi)?,
        ess_threshold: a.ess_threshold,
        full_cloud_steps: if want_cloud { vec![a.plot_step] } else { vec![] },
        thinned_cloud_size: None,
    };
    let run = run_filter(&model, &proposal, &obs, a.n, &resampler, &options, a.seed)?;
    write_filter_csv(&run, sink(&a.out)?)?;

    if !want_cloud {
        return Ok(());
    }
    let cloud = run
        .full_clouds
        .first()
        .ok_or_else(|| LabError::Config(format!("plot step {} is beyond the {} observations", a.plot_step, obs.len())))?;
    if let Some(p) = &a.cloud_out {
        let mut w = csv::Writer::from_writer(create(p)?);
        w.write_record(["x", "weight"])?;
        for (x, wt) in cloud.particles.iter().zip(&cloud.weights) {
            w.write_record([num(*x), num(*wt)])?;
        }
        w.flush()?;
    }
    if let Some(p) = &a.svg {
        let steps = grid_oracle(&model, &obs[..a.plot_step], a.grid.dx, a.grid.x_max, &[])?;
        let density = &steps[a.plot_step - 1].density;
        let hist = weighted_histogram(&cloud.particles, &cloud.weights, a.bins, 0.0, a.hist_max);
        let tv = total_variation(&hist, &density.bin_probabilities(a.bins, 0.0, a.hist_max));
        let curve: Vec<(f64, f64)> = density.midpoints().zip(density.values().iter().copied()).collect();
        let title = format!("t = {}: {} particles vs grid (TV {:.4})", a.plot_step, a.n, tv);
        std::fs::write(p, histogram_overlay(&title, &hist, 0.0, a.hist_max, &curve))?;
        eprintln!("total variation at t={}: {tv:.6}", a.plot_step);
    }
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<(), LabError> {
    let model = CoxModel::new(a.model.c, a.model.eta)?;
    let phi: TestFunction = a.phi.parse()?;
    let obs = read_observations(&a.obs)?.values();
    let steps = grid_oracle(&model, &obs, a.grid.dx, a.grid.x_max, &[phi])?;
    write_grid_csv(&steps, sink(&a.out)?)?;
    if let Some(p) = &a.density_out {
        write_density_csv(&steps, create(p)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct MomentRow {
    pub p: u32,
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub eta: f64,
    pub s: f64,
    pub tail_rate: f64,
    pub status: String,
    pub bound: Option<f64>,
    pub quadrature_estimate: f64,
}

pub fn moment_rows(a: &MomentsArgs) -> Result<Vec<MomentRow>, LabError> {
    let model = CoxModel::new(a.model.c, a.model.eta)?;
    let mut rows = Vec::new();
    for &p in &a.p {
        for &alpha in &a.alpha {
            for &beta in &a.beta {
                let cond = MomentCondition::new(p, alpha, beta, a.model.c, a.model.eta)?;
                let v = check_cox_moment_condition(&cond);
                let q = GammaProposal::new(alpha, beta)?;
                let quad = quadrature_weight_moment(&model, &q, a.x_prev, 0, p as f64, a.level)?;
                rows.push(MomentRow {
                    p,
                    alpha,
                    beta,
                    c: a.model.c,
                    eta: a.model.eta,
                    s: v.s,
                    tail_rate: v.tail_rate,
                    status: v.status.to_string(),
                    bound: v.bound,
                    quadrature_estimate: quad,
                });
            }
        }
    }
    Ok(rows)
}

fn cmd_moments(a: MomentsArgs) -> Result<(), LabError> {
    let rows = moment_rows(&a)?;
    let mut out = std::io::stdout().lock();
    match a.format.as_str() {
        "json" => {
            serde_json::to_writer_pretty(&mut out, &rows).map_err(|e| LabError::Io(e.to_string()))?;
            writeln!(out)?;
        }
        "text" => {
            writeln!(
                out,
                "{:>2} {:>6} {:>6} {:>6} {:>6} {:>7} {:>9} {:<21} {:>12} {:>19}",
                "p", "alpha", "beta", "c", "eta", "s", "tail_rate", "status", "bound", "quadrature_estimate"
            )?;
            for r in &rows {
                writeln!(
                    out,
                    "{:>2} {:>6} {:>6} {:>6} {:>6} {:>7.4} {:>9.4} {:<21} {:>12} {:>19.6e}",
                    r.p,
                    r.alpha,
                    r.beta,
                    r.c,
                    r.eta,
                    r.s,
                    r.tail_rate,
                    r.status,
                    r.bound.map(|b| format!("{b:.6}")).unwrap_or_else(|| "-".into()),
                    r.quadrature_estimate
                )?;
            }
            writeln!(out, "quadrature at y = 0, x_prev = {}, level {}", a.x_prev, a.level)?;
        }
        other => return Err(LabError::Config(format!("unknown format {other:?} (text or json)"))),
    }
    Ok(())
}

/// Write `<stem>.csv`, `<stem>_resampled.csv`, `<stem>.json` and `<stem>.svg`.
pub fn write_study_outputs(report: &ConvergenceReport, dir: &Path, stem: &str) -> Result<(), LabError> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::Io(format!("{}: {e}", dir.display())))?;
    emit_report(report, Format::Csv, &dir.join(format!("{stem}.csv")))?;
    emit_report(report, Format::Json, &dir.join(format!("{stem}.json")))?;
    emit_report(report, Format::Svg, &dir.join(format!("{stem}.svg")))?;
    Ok(())
}

fn cmd_converge(a: ConvergeArgs) -> Result<(), LabError> {
    let cfg = a.resolve()?;
    let obs = read_observations(&cfg.data.observations)?.values();
    let (report, failure) = match run_convergence_study(&cfg, &obs, workers_from_env()) {
        Ok(r) => (r, None),
        Err(LabError::StudyAborted { report, n, replicate, source }) => (
            *report,
            Some(LabError::Aborted(format!("N={n}, replicate {replicate}: {source}; partial report written"))),
        ),
        Err(e) => return Err(e),
    };
    write_study_outputs(&report, &cfg.output.dir, &cfg.output.stem)?;
    let t = cfg.study.fit_step;
    for f in report.fits.iter().filter(|f| f.t == t && f.measure == Measure::Filtered) {
        match &f.fit {
            Some(fit) => println!(
                "{} p={} t={}: slope {:.4}, r^2 {:.4}",
                f.phi, f.p, f.t, fit.slope, fit.r_squared
            ),
            None => println!("{} p={} t={}: no fit ({})", f.phi, f.p, f.t, f.error.as_deref().unwrap_or("")),
        }
    }
    println!("oracle self-check (dx/2): max change {:.3e}", report.oracle.max_check_difference);
    match failure {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn cmd_check_resampler(a: CheckResamplerArgs) -> Result<(), LabError> {
    let schemes = match &a.scheme {
        Some(s) => vec![s.parse::<ResampleScheme>()?],
        None => ResampleScheme::ALL.to_vec(),
    };
    let mut failed = Vec::new();
    for scheme in schemes {
        let c = check_resampler(scheme, a.trials, a.seed)?;
        println!(
            "{:<12} trials={} total_violations={} zero_weight_violations={} bracket_violations={} max_mean_z={:.3} {}",
            c.scheme,
            c.trials,
            c.total_violations,
            c.zero_weight_violations,
            c.bracket_violations,
            c.max_mean_z,
            if c.passed() { "ok" } else { "FAILED" }
        );
        if !c.passed() {
            failed.push(c.scheme);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(LabError::Config(format!("resampler contract violated: {}", failed.join(", "))))
    }
}
