//! Command-line front end: configuration, the five pipeline commands and
//! argument parsing.
//!
//! Inference commands accept only count-record (or timeline) paths, never the
//! trajectory file.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    baum_welch, bayes_omega, extract_dwells, fit_dwell_histogram, hybrid_estimate, uniform_grid, BaumWelchOptions,
    BayesOptions, DwellFit, DwellHistogram, DwellShape, HybridEstimate, HybridOptions, RateEstimate,
};
use crate::io::{self, digest_entry, Digests, ExperimentBundle, FORMAT_VERSION};
use crate::model::ModelParams;
use crate::seeding::{derive_seed, Stream};
use crate::sensor::synthesize_counts;
use crate::smoother::{smooth_with, InferenceModel, SmoothOptions, DEFAULT_THRESHOLD};
use crate::trajectory::simulate_trajectory;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// rad/µs
    pub lo: f64,
    /// rad/µs
    pub hi: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartingGuess {
    /// rad/µs
    pub omega: f64,
    /// µs⁻¹
    pub gamma_down: f64,
    /// µs⁻¹
    pub gamma_up: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Grid posterior over Ω with the configured rates.
    Bayes,
    /// Rate re-estimation at the configured Ω.
    BaumWelch,
    /// Alternation of both, from the starting guess.
    Hybrid,
}

/// Missing fields take their default values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ModelParams,
    /// Simulated record length [µs].
    pub duration: f64,
    /// Root seed; each component derives its own stream.
    pub seed: u64,
    /// Occupation threshold for state assignment and dwell extraction.
    pub threshold: f64,
    pub grid: GridSpec,
    pub guess: StartingGuess,
    pub method: Method,
    pub n_inner: usize,
    pub n_outer: usize,
    /// Relative parameter change that ends the hybrid loop.
    pub tolerance: f64,
    pub coherent_transfer: bool,
    /// Bins between likelihood snapshots; 0 disables them.
    pub snapshot_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            duration: 1000.0,
            seed: 1,
            threshold: DEFAULT_THRESHOLD,
            grid: GridSpec { lo: 3.5, hi: 6.5, n: 60 },
            guess: StartingGuess {
                omega: 4.0,
                gamma_down: 2.0,
                gamma_up: 4.0,
            },
            method: Method::Hybrid,
            n_inner: 5,
            n_outer: 5,
            tolerance: 1e-3,
            coherent_transfer: true,
            snapshot_every: 1000,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be finite and >= 0, got {}", self.duration));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        if !(self.grid.lo > 0.0 && self.grid.lo.is_finite() && self.grid.hi.is_finite()) {
            return bad(format!("grid bounds must be positive and finite, got [{}, {}]", self.grid.lo, self.grid.hi));
        }
        uniform_grid(self.grid.lo, self.grid.hi, self.grid.n).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let g = self.guess;
        if [g.omega, g.gamma_down, g.gamma_up].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad(format!("starting guess must be finite and >= 0, got {g:?}"));
        }
        if self.n_outer == 0 {
            return bad("n_outer must be at least 1".into());
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be positive, got {}", self.tolerance));
        }
        Ok(())
    }

    pub fn omega_grid(&self) -> Result<Vec<f64>> {
        uniform_grid(self.grid.lo, self.grid.hi, self.grid.n)
    }

    pub fn trajectory_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Trajectory, 0)
    }

    pub fn sensor_seed(&self) -> u64 {
        derive_seed(self.seed, Stream::Sensor, 0)
    }

    fn hybrid_options(&self) -> HybridOptions {
        HybridOptions {
            n_inner: self.n_inner,
            n_outer: self.n_outer,
            tolerance: self.tolerance,
            baum_welch: self.baum_welch_options(),
        }
    }

    fn baum_welch_options(&self) -> BaumWelchOptions {
        BaumWelchOptions {
            coherent_transfer: self.coherent_transfer,
        }
    }
}

/// What a command consumed and produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub seed: Option<u64>,
    pub inputs: Digests,
    pub outputs: Digests,
    pub notes: Vec<String>,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(seed) = self.seed {
            writeln!(f, "seed {seed}")?;
        }
        for (name, digest) in &self.inputs {
            writeln!(f, "input  {name} sha256:{digest}")?;
        }
        for (name, digest) in &self.outputs {
            writeln!(f, "output {name} sha256:{digest}")?;
        }
        for note in &self.notes {
            writeln!(f, "{note}")?;
        }
        Ok(())
    }
}

fn outputs(paths: &[&Path]) -> Result<Digests> {
    paths.iter().map(|p| digest_entry(p)).collect()
}

/// Simulates a trajectory with the trajectory stream of the root seed.
pub fn cmd_simulate(config: &RunConfig, output: &Path) -> Result<Summary> {
    config.validate()?;
    let seed = config.trajectory_seed();
    let traj = simulate_trajectory(&config.params, config.duration, seed)?;
    io::write_trajectory(output, &traj)?;
    Ok(Summary {
        seed: Some(seed),
        outputs: outputs(&[output])?,
        notes: vec![format!("{} steps, {} jumps", traj.n_steps(), traj.events.len())],
        ..Default::default()
    })
}

/// Synthesizes sensor counts for a stored trajectory.
pub fn cmd_sense(config: &RunConfig, trajectory: &Path, output: &Path) -> Result<Summary> {
    config.validate()?;
    let traj = io::read_trajectory(trajectory)?;
    if traj.params.dt_sim != config.params.dt_sim {
        return Err(Error::InvalidInput(format!(
            "trajectory step {} µs differs from configured dt_sim {} µs",
            traj.params.dt_sim, config.params.dt_sim
        )));
    }
    let seed = config.sensor_seed();
    let record = synthesize_counts(&traj, &config.params, seed)?;
    let inputs: Digests = [digest_entry(trajectory)?].into();
    io::write_counts(output, &record, inputs.clone())?;
    Ok(Summary {
        seed: Some(seed),
        inputs,
        outputs: outputs(&[output])?,
        notes: vec![format!("{} bins", record.len())],
    })
}

fn load_record(config: &RunConfig, counts: &Path) -> Result<(crate::sensor::CountRecord, io::CountHeader)> {
    let (record, header) = io::read_counts(counts)?;
    let p = &config.params;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !close(record.bin_dt, p.bin_dt) {
        return Err(Error::InvalidInput(format!(
            "{}: bin duration {} µs does not match configured bin_dt {} µs",
            counts.display(),
            record.bin_dt,
            p.bin_dt
        )));
    }
    if !close(record.r0, p.r0) || !close(record.r1, p.r1) {
        return Err(Error::InvalidInput(format!(
            "{}: sensor rates ({}, {}) do not match configured ({}, {})",
            counts.display(),
            record.r0,
            record.r1,
            p.r0,
            p.r1
        )));
    }
    Ok((record, header))
}

/// Filter and past-quantum-state timeline of a count record.
pub fn cmd_smooth(config: &RunConfig, counts: &Path, output: &Path) -> Result<Summary> {
    config.validate()?;
    let (record, _) = load_record(config, counts)?;
    let model = InferenceModel::from_params(&config.params)?;
    let timeline = smooth_with(&model, &record, &SmoothOptions::default())?;
    let inputs: Digests = [digest_entry(counts)?].into();
    io::write_timeline(output, &timeline, &config.params, config.threshold, inputs.clone())?;
    Ok(Summary {
        seed: Some(record.seed),
        inputs,
        outputs: outputs(&[output])?,
        notes: vec![format!("log-likelihood {:.6}", timeline.log_likelihood)],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesSummary {
    pub omegas: Vec<f64>,
    pub log_likelihood: Vec<f64>,
    pub posterior: Vec<f64>,
    pub omega_hat: f64,
    /// Ties are broken toward the smallest candidate.
    pub tie: bool,
    pub curvature_width: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub omega: f64,
    pub gamma_down: f64,
    pub gamma_up: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub kind: String,
    pub format_version: u32,
    pub method: Method,
    pub config: RunConfig,
    /// Seed recorded in the count record.
    pub record_seed: u64,
    pub inputs: Digests,
    pub estimate: PointEstimate,
    pub bayes: Option<BayesSummary>,
    pub baum_welch: Option<Vec<RateEstimate>>,
    pub hybrid: Option<HybridEstimate>,
}

/// Parameter estimation; writes the JSON report and, when a grid was
/// evaluated, the likelihood evolution CSV.
pub fn cmd_estimate(config: &RunConfig, counts: &Path, report_path: &Path, likelihood_csv: &Path) -> Result<Summary> {
    config.validate()?;
    let (record, _) = load_record(config, counts)?;
    let grid = config.omega_grid()?;
    let p = config.params;
    let snapshots = BayesOptions {
        snapshot_every: config.snapshot_every,
    };
    let (estimate, bayes_at, baum, hybrid) = match config.method {
        Method::Bayes => (PointEstimate { omega: p.omega, gamma_down: p.gamma_down, gamma_up: p.gamma_up }, Some(p), None, None),
        Method::BaumWelch => {
            let history = baum_welch(&record, &p, config.n_inner, &config.baum_welch_options())?;
            let (gd, gu) = history.last().map_or((p.gamma_down, p.gamma_up), |e| (e.gamma_down, e.gamma_up));
            (PointEstimate { omega: p.omega, gamma_down: gd, gamma_up: gu }, None, Some(history), None)
        }
        Method::Hybrid => {
            let g = config.guess;
            let start = p.with_omega(g.omega).with_rates(g.gamma_down, g.gamma_up);
            let h = hybrid_estimate(&record, &grid, &start, &config.hybrid_options())?;
            let est = PointEstimate { omega: h.omega, gamma_down: h.gamma_down, gamma_up: h.gamma_up };
            let rates = p.with_rates(h.gamma_down, h.gamma_up);
            (est, Some(rates), None, Some(h))
        }
    };
    let mut estimate = estimate;
    let mut bayes = None;
    let mut written = vec![report_path];
    if let Some(at) = bayes_at {
        let g = bayes_omega(&record, &grid, &at, &snapshots)?;
        if config.method == Method::Bayes {
            estimate.omega = g.omega_hat();
        }
        let rows = g.snapshots.iter().flat_map(|s| {
            g.omegas
                .iter()
                .zip(&s.log_likelihood)
                .map(move |(o, l)| vec![s.time.to_string(), o.to_string(), l.to_string()])
        });
        let header = serde_json::json!({
            "kind": "likelihood",
            "format_version": FORMAT_VERSION,
            "gamma_down": at.gamma_down,
            "gamma_up": at.gamma_up,
            "inputs": Digests::from([digest_entry(counts)?]),
        });
        io::write_table(likelihood_csv, &header, &io::LIKELIHOOD_COLUMNS, rows)?;
        written.push(likelihood_csv);
        bayes = Some(BayesSummary {
            posterior: g.posterior(),
            omega_hat: g.omega_hat(),
            tie: g.tie,
            curvature_width: g.curvature_width(2),
            omegas: g.omegas,
            log_likelihood: g.log_likelihood,
        });
    }
    let inputs: Digests = [digest_entry(counts)?].into();
    let converged = hybrid.as_ref().map(|h| h.converged);
    let report = EstimateReport {
        kind: "estimate".into(),
        format_version: FORMAT_VERSION,
        method: config.method,
        config: config.clone(),
        record_seed: record.seed,
        inputs: inputs.clone(),
        estimate: estimate.clone(),
        bayes,
        baum_welch: baum,
        hybrid,
    };
    io::write_json(report_path, &report)?;
    let mut notes = vec![format!(
        "Ω = {:.6} rad/µs, γ↓ = {:.6} /µs, γ↑ = {:.6} /µs",
        estimate.omega, estimate.gamma_down, estimate.gamma_up
    )];
    if converged == Some(false) {
        notes.push("warning: hybrid loop did not converge; reporting the most likely iterate".into());
    }
    Ok(Summary {
        seed: Some(record.seed),
        inputs,
        outputs: outputs(&written)?,
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DwellReport {
    pub kind: String,
    pub format_version: u32,
    pub threshold: f64,
    pub inputs: Digests,
    pub fit: DwellFit,
    pub histogram: DwellHistogram,
}

/// Expected histogram counts under the fitted occupied-interval law.
pub fn fitted_counts(hist: &DwellHistogram, fit: &DwellFit) -> Result<Vec<f64>> {
    let shape = DwellShape::new(fit.occupied.omega, fit.occupied.gamma, fit.occupied.gamma)?;
    let c = fit.occupied.cutoff;
    let norm = shape.tail(c);
    let n = hist.occupied.len() as f64;
    Ok(hist
        .edges
        .windows(2)
        .map(|e| n * (shape.tail(e[0].max(c)) - shape.tail(e[1].max(c))) / norm)
        .collect())
}

/// Dwell-time histogram of a stored timeline and its maximum-likelihood fit.
pub fn cmd_histogram(config: &RunConfig, timeline: &Path, report_path: &Path, histogram_csv: &Path) -> Result<Summary> {
    config.validate()?;
    let (tl, header) = io::read_timeline(timeline)?;
    let hist = extract_dwells(&tl, config.threshold)?;
    let fit = fit_dwell_histogram(&hist)?;
    let expected = fitted_counts(&hist, &fit)?;
    let inputs: Digests = [digest_entry(timeline)?].into();
    let rows = hist.edges.windows(2).zip(&hist.counts).zip(&expected).map(|((e, c), x)| {
        vec![e[0].to_string(), e[1].to_string(), c.to_string(), x.to_string()]
    });
    let csv_header = serde_json::json!({
        "kind": "dwell_histogram",
        "format_version": FORMAT_VERSION,
        "threshold": config.threshold,
        "inputs": inputs,
    });
    io::write_table(histogram_csv, &csv_header, &io::HISTOGRAM_COLUMNS, rows)?;
    let report = DwellReport {
        kind: "dwell".into(),
        format_version: FORMAT_VERSION,
        threshold: config.threshold,
        inputs: inputs.clone(),
        fit,
        histogram: hist,
    };
    io::write_json(report_path, &report)?;
    let mut notes = vec![format!(
        "{} occupied / {} empty intervals; Ω = {:.4} rad/µs, γ↑ = {:.4} /µs, γ↓ = {:.4} /µs",
        fit.n_occupied, fit.n_empty, fit.omega, fit.gamma_up, fit.gamma_down
    )];
    if header.threshold != config.threshold {
        notes.push(format!(
            "note: timeline was assigned at threshold {}, dwells extracted at {}",
            header.threshold, config.threshold
        ));
    }
    Ok(Summary {
        seed: None,
        inputs,
        outputs: outputs(&[report_path, histogram_csv])?,
        notes,
    })
}

#[derive(Debug, Parser)]
#[command(name = "qdot", version, about = "Simulate, smooth and estimate a monitored single-electron quantum dot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a ground-truth trajectory.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Synthesize sensor counts for a trajectory.
    Sense {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Filter and smooth a count record.
    Smooth {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Estimate Ω, γ↓ and γ↑ from a count record.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        likelihood_csv: Option<PathBuf>,
    },
    /// Dwell-time histogram and fit of a smoothed timeline.
    Histogram {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        timeline: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        histogram_csv: Option<PathBuf>,
    },
}

/// Configuration file plus one override flag per field.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding the standard file names.
    #[arg(long, default_value = ".")]
    pub bundle: PathBuf,
    /// Rabi frequency Ω [rad/µs]
    #[arg(long)]
    pub omega: Option<f64>,
    /// γ↓ [µs⁻¹]
    #[arg(long)]
    pub gamma_down: Option<f64>,
    /// γ↑ [µs⁻¹]
    #[arg(long)]
    pub gamma_up: Option<f64>,
    /// Sensor rate with the dot empty [counts/µs]
    #[arg(long)]
    pub r0: Option<f64>,
    /// Sensor rate with the dot occupied [counts/µs]
    #[arg(long)]
    pub r1: Option<f64>,
    /// Simulation step [µs]
    #[arg(long)]
    pub dt_sim: Option<f64>,
    /// Measurement bin τ [µs]
    #[arg(long)]
    pub bin_dt: Option<f64>,
    /// Record length [µs]
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Smallest Ω candidate [rad/µs]
    #[arg(long)]
    pub grid_lo: Option<f64>,
    /// Largest Ω candidate [rad/µs]
    #[arg(long)]
    pub grid_hi: Option<f64>,
    #[arg(long)]
    pub grid_n: Option<usize>,
    #[arg(long)]
    pub guess_omega: Option<f64>,
    #[arg(long)]
    pub guess_gamma_down: Option<f64>,
    #[arg(long)]
    pub guess_gamma_up: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub n_inner: Option<usize>,
    #[arg(long)]
    pub n_outer: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub coherent_transfer: Option<bool>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

impl RunArgs {
    /// The configuration file (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => io::read_json(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            omega => params.omega,
            gamma_down => params.gamma_down,
            gamma_up => params.gamma_up,
            r0 => params.r0,
            r1 => params.r1,
            dt_sim => params.dt_sim,
            bin_dt => params.bin_dt,
            duration => duration,
            seed => seed,
            threshold => threshold,
            grid_lo => grid.lo,
            grid_hi => grid.hi,
            grid_n => grid.n,
            guess_omega => guess.omega,
            guess_gamma_down => guess.gamma_down,
            guess_gamma_up => guess.gamma_up,
            method => method,
            n_inner => n_inner,
            n_outer => n_outer,
            tolerance => tolerance,
            coherent_transfer => coherent_transfer,
            snapshot_every => snapshot_every,
        );
        c.validate()?;
        Ok(c)
    }
}

fn execute(command: &Command) -> Result<Summary> {
    let or = |p: &Option<PathBuf>, d: PathBuf| p.clone().unwrap_or(d);
    match command {
        Command::Simulate { run, output } => {
            let config = run.resolve()?;
            let b = ExperimentBundle::new(&run.bundle);
            let out = or(output, b.trajectory());
            let mut summary = cmd_simulate(&config, &out)?;
            if output.is_none() {
                io::write_json(&b.config(), &config)?;
                summary.outputs.extend(outputs(&[&b.config()])?);
            }
            Ok(summary)
        }
        Command::Sense { run, trajectory, output } => {
            let b = ExperimentBundle::new(&run.bundle);
            cmd_sense(&run.resolve()?, &or(trajectory, b.trajectory()), &or(output, b.counts()))
        }
        Command::Smooth { run, counts, output } => {
            let b = ExperimentBundle::new(&run.bundle);
            cmd_smooth(&run.resolve()?, &or(counts, b.counts()), &or(output, b.timeline()))
        }
        Command::Estimate { run, counts, output, likelihood_csv } => {
            let b = ExperimentBundle::new(&run.bundle);
            cmd_estimate(
                &run.resolve()?,
                &or(counts, b.counts()),
                &or(output, b.report()),
                &or(likelihood_csv, b.likelihood()),
            )
        }
        Command::Histogram { run, timeline, output, histogram_csv } => {
            let b = ExperimentBundle::new(&run.bundle);
            cmd_histogram(
                &run.resolve()?,
                &or(timeline, b.timeline()),
                &or(output, b.dwell_report()),
                &or(histogram_csv, b.dwell_histogram()),
            )
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code: 0 success, 2 usage or input error, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
