use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modebank::baseline::run_zupt_ins;
use modebank::learning::{learn_transition_matrix, Sequence};
use modebank::models::MotionModel;
use modebank::pipeline::{error_metrics, initial_belief, resting_mode_prior, run_bank, TrajectoryRow, TruthPoint};
use modebank::sim::{simulate, GaitProfile};
use modebank::strapdown::ImuSample;

use crate::config::{ModelChoice, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{self, MetricsFile, ReportFile, TruthRow};

#[derive(Debug, Parser)]
#[command(name = "modebank", version, about = "Motion-mode filter banks for foot-mounted inertial navigation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic IMU sequence with ground truth.
    Simulate(SimulateArgs),
    /// Run the filter bank over an IMU sequence.
    Run(RunArgs),
    /// Learn the mode transition matrix from IMU sequences.
    Learn(LearnArgs),
    /// Compare the filter bank with the stance-detector reference system.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Stationary,
    Walk,
    Run,
    WalkRun,
    Stairs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "walk", conflicts_with = "profile_file")]
    pub profile: ProfileKind,
    /// TOML gait profile (phase list and options) instead of a preset.
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
    /// Sequence length in seconds for presets.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Length of each walking or running segment of the walk-run preset.
    #[arg(long, default_value_t = 30.0)]
    pub segment: f64,
    /// Height of each stair of the stairs preset.
    #[arg(long, default_value_t = 0.17)]
    pub step_height: f64,
    /// Noise seed; 0 when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Accelerometer noise standard deviation (m/s²).
    #[arg(long)]
    pub sigma_s: Option<f64>,
    /// Gyroscope noise standard deviation (rad/s).
    #[arg(long)]
    pub sigma_w: Option<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the model selected in the configuration.
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Overrides the leaf budget of the configuration.
    #[arg(long)]
    pub max_leaves: Option<usize>,
}

impl EstimatorArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(m) = self.model {
            cfg.model = m;
        }
        if let Some(l) = self.max_leaves {
            cfg.max_leaves = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub imu: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Trajectory CSV; `trajectory.csv` unless set here or in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// IMU sequence; repeat for several.
    #[arg(long, required = true)]
    pub imu: Vec<PathBuf>,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// TOML file whose `pi` key is the starting transition matrix.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Report file; `report.toml` unless set here or in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub imu: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Stance-detector threshold of the reference system.
    #[arg(long)]
    pub gamma: f64,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Output directory; `[output] dir` of the configuration when omitted.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Learn(a) => cmd_learn(&a),
        Command::Compare(a) => cmd_compare(&a),
    }
}

fn preset(args: &SimulateArgs) -> Result<GaitProfile> {
    if !(args.duration > 0.0 && args.duration.is_finite()) {
        return Err(CliError::Config(format!("duration must be positive, got {}", args.duration)));
    }
    Ok(match args.profile {
        ProfileKind::Stationary => GaitProfile::stationary(args.duration),
        ProfileKind::Walk => GaitProfile::walk(args.duration),
        ProfileKind::Run => GaitProfile::run(args.duration),
        ProfileKind::WalkRun => GaitProfile::walk_run(args.duration, args.segment),
        ProfileKind::Stairs => GaitProfile::flat_stair_flat(args.duration, args.step_height),
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut profile = match &args.profile_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<GaitProfile>(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => preset(args)?.with_seed(0),
    };
    if let Some(seed) = args.seed {
        profile.seed = seed;
    }
    if let Some(s) = args.sigma_s {
        profile.noise.sigma_s = s;
    }
    if let Some(w) = args.sigma_w {
        profile.noise.sigma_w = w;
    }
    profile.validate()?;
    let (samples, truth) = simulate(&profile)?;
    let rows = truth.iter().map(TruthRow::from_record).collect::<modebank::Result<Vec<_>>>()?;

    let dir = io::ensure_dir(&args.out_dir)?;
    io::write_imu(&dir.join("imu.csv"), &samples)?;
    io::write_truth(&dir.join("truth.csv"), &rows)?;

    let (first, last) = (&rows[0], &rows[rows.len() - 1]);
    let path_length: f64 = rows.windows(2).map(|w| (w[1].position - w[0].position).norm()).sum();
    println!(
        "simulated {} samples ({:.2} s, seed {}): path length {:.2} m, net height change {:+.3} m -> {}",
        samples.len(),
        last.t - first.t,
        profile.seed,
        path_length,
        last.position.z - first.position.z,
        dir.display()
    );
    Ok(())
}

fn bank_trajectory(cfg: &RunConfig, model: &MotionModel, samples: &[ImuSample]) -> Result<Vec<TrajectoryRow>> {
    let prior = initial_belief(samples, cfg.align_window, &cfg.initial, model.has_height_ref())?;
    Ok(run_bank(
        model,
        &cfg.noise,
        samples,
        prior,
        &resting_mode_prior(model),
        Some(cfg.max_leaves),
    )?)
}

fn occupancy(rows: &[TrajectoryRow], num_modes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_modes];
    for r in rows {
        counts[r.map_mode.zero_based()] += 1;
    }
    counts.iter().map(|&c| 100.0 * c as f64 / rows.len().max(1) as f64).collect()
}

fn percentages(p: &[f64]) -> String {
    p.iter().map(|x| format!("{x:.1}%")).collect::<Vec<_>>().join("/")
}

pub fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg = args.estimator.config()?;
    let model = cfg.model()?;
    let samples = io::read_imu(&args.imu)?;
    let rows = bank_trajectory(&cfg, &model, &samples)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.trajectory.clone())
        .unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    io::write_trajectory(&out, &rows)?;
    let last = &rows[rows.len() - 1];
    println!(
        "processed {} samples with the {} model ({} leaves): final position [{:.3}, {:.3}, {:.3}] m, MAP modes {} -> {}",
        rows.len(),
        model.kind(),
        cfg.max_leaves,
        last.position.x,
        last.position.y,
        last.position.z,
        percentages(&occupancy(&rows, model.num_modes())),
        out.display()
    );
    Ok(())
}

pub fn cmd_learn(args: &LearnArgs) -> Result<()> {
    let mut cfg = args.estimator.config()?;
    if let Some(n) = args.max_iter {
        cfg.learn.max_iter = n;
    }
    if let Some(path) = &args.init {
        cfg.learn.initial_transition = Some(io::read_transition_file(path)?);
    }
    let model = cfg.model()?;
    let init = cfg.initial_transition(&model)?;
    let data = args
        .imu
        .iter()
        .map(|path| {
            let samples = io::read_imu(path)?;
            let prior = initial_belief(&samples, cfg.align_window, &cfg.initial, model.has_height_ref())?;
            Ok(Sequence {
                samples,
                prior,
                mode_prior: resting_mode_prior(&model),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = learn_transition_matrix(&data, &model, &cfg.noise, &init, &cfg.learn_config())?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.report.clone())
        .unwrap_or_else(|| PathBuf::from("report.toml"));
    io::write_report(&out, &ReportFile::from(&report))?;
    let diag: Vec<String> = report
        .transition
        .rows()
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{:.3}", r[i]))
        .collect();
    println!(
        "learned transition matrix in {} iterations ({} likelihood evaluations), log-likelihood {:.3}, diagonal [{}], MAP modes {} -> {}",
        report.iterations,
        report.evaluations,
        report.loglik_trace.last().copied().unwrap_or(f64::NAN),
        diag.join(", "),
        percentages(&report.occupancy),
        out.display()
    );
    if !report.converged {
        return Err(CliError::NotConverged {
            iterations: report.iterations,
            report: out,
        });
    }
    Ok(())
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let cfg = args.estimator.config()?;
    let model = cfg.model()?;
    let detector = cfg.detector(Some(args.gamma))?;
    let samples = io::read_imu(&args.imu)?;
    let truth = io::read_truth(&args.truth)?;
    if truth.len() != samples.len() {
        return Err(CliError::parse(
            &args.truth,
            format!("{} truth rows for {} IMU samples", truth.len(), samples.len()),
        ));
    }
    if let Some((k, _)) = truth.iter().zip(&samples).enumerate().find(|(_, (r, u))| (r.t - u.t).abs() > 1e-9) {
        return Err(CliError::parse(&args.truth, format!("line {}: timestamp differs from the IMU file", k + 2)));
    }

    let bank = bank_trajectory(&cfg, &model, &samples)?;
    let prior = initial_belief(&samples, cfg.align_window, &cfg.initial, false)?;
    let baseline = run_zupt_ins(&samples, &detector, &cfg.noise, prior, cfg.zupt_sigma)?;

    let points: Vec<TruthPoint> = truth.iter().map(TruthRow::point).collect();
    let metrics = MetricsFile {
        filter_bank: error_metrics(&bank, &points)?,
        baseline: error_metrics(&baseline, &points)?,
    };
    let dir = args
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| CliError::Config("an output directory is required (--out-dir or [output] dir)".into()))?;
    let dir = io::ensure_dir(&dir)?;
    io::write_metrics(&dir.join("metrics.toml"), &metrics)?;
    io::write_plot_data(&dir.join("plot.csv"), &truth, &bank, &baseline)?;
    io::write_trajectory(&dir.join("bank.csv"), &bank)?;
    io::write_trajectory(&dir.join("baseline.csv"), &baseline)?;
    for (name, m) in [("filter bank", &metrics.filter_bank), ("baseline", &metrics.baseline)] {
        println!(
            "{name:>11}: final horizontal {:.3} m (along {:+.3}, cross {:+.3}), vertical RMS {:.3} m, final vertical {:+.3} m",
            m.final_horizontal, m.along_track, m.cross_track, m.vertical_rms, m.final_vertical
        );
    }
    println!("wrote metrics.toml, plot.csv, bank.csv and baseline.csv to {}", dir.display());
    Ok(())
}
