use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use privreg::bench::{self, ExperimentSpec, Method};
use privreg::dataio::{prepare, DataError, DatasetManifest, PreparedData};
use privreg::dp::{train_private, DpTrainingConfig, Init, Sampling};
use privreg::pac::{
    add_noise, estimate_deviations, NoiseMode, NoiseProfile, PacEstimationConfig, PrivacyLevel,
    ProjectionChoice, DEFAULT_DELTA,
};
use privreg::regression::{Coefficients, FitKind, FitSpec};

/// Private linear regression: DP-SGD and PAC-privacy output perturbation.
#[derive(Debug, Parser)]
#[command(name = "privreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert between posterior success rate, mutual information and ε.
    Convert(ConvertArgs),
    /// Fit a non-private OLS, ridge or lasso model.
    Fit(FitArgs),
    /// Train with DP-SGD at a target (ε, δ).
    DpTrain(DpTrainArgs),
    /// Estimate a PAC noise profile and write it as JSON.
    PacEstimate(PacEstimateArgs),
    /// Fit and perturb with PAC-calibrated noise.
    PacTrain(PacTrainArgs),
    /// Run benchmark spec files and write their reports.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, id = "quantity")]
struct Quantity {
    /// Posterior success rate of membership inference, in (0.5, 1).
    #[arg(long)]
    psr: Option<f64>,
    /// DP privacy budget ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Mutual information budget, in (0, ln 2).
    #[arg(long)]
    mi: Option<f64>,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[command(flatten)]
    quantity: Quantity,
    /// δ of the DP-equivalent pair.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    dataset: PathBuf,
    /// Fraction of rows held out for testing.
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Seed of the train/test shuffle.
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
    /// Keep raw feature scales instead of standardizing.
    #[arg(long)]
    no_normalize: bool,
    /// Write the model (or profile) JSON here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Ols,
    Ridge,
    Lasso,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Regression solver.
    #[arg(long, value_enum, default_value = "ols")]
    kind: KindArg,
    /// Penalty strength for ridge and lasso.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Fit without an intercept.
    #[arg(long)]
    no_intercept: bool,
}

impl ModelArgs {
    fn spec(&self) -> FitSpec {
        let kind = match self.kind {
            KindArg::Ols => FitKind::Ols,
            KindArg::Ridge => FitKind::Ridge,
            KindArg::Lasso => FitKind::Lasso,
        };
        FitSpec {
            kind,
            lambda: self.lambda,
            fit_intercept: !self.no_intercept,
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SamplingArg {
    Poisson,
    Fixed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Zeros,
    Random,
}

#[derive(Debug, Args)]
struct DpTrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON training config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Learning rate η.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Expected batch size b.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Passes over the training data.
    #[arg(long)]
    epochs: Option<usize>,
    /// Per-example gradient clipping norm C.
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Target ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Target δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Batch sampling scheme.
    #[arg(long, value_enum)]
    sampling: Option<SamplingArg>,
    /// Parameter initialization.
    #[arg(long, value_enum)]
    init: Option<InitArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    CovarianceCorrect,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Svd,
    Identity,
}

#[derive(Debug, Args)]
struct PacArgs {
    /// Posterior success rate to allow, in (0.5, 1).
    #[arg(long, conflicts_with = "mi")]
    psr: Option<f64>,
    /// Mutual information budget (overrides the success rate).
    #[arg(long)]
    mi: Option<f64>,
    /// δ reported for the DP-equivalent ε.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// How the resampling pair is formed and noise mapped back.
    #[arg(long, value_enum, default_value = "covariance-correct")]
    mode: ModeArg,
    /// Basis the noise is estimated in.
    #[arg(long, value_enum, default_value = "svd")]
    projection: ProjectionArg,
    /// Mechanism runs used to learn the SVD basis.
    #[arg(long, default_value_t = 100)]
    projection_samples: usize,
    /// Running-mean change below which estimation stops.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    /// Minimum resampling rounds per left-out point.
    #[arg(long, default_value_t = 30)]
    min_rounds: usize,
    /// Maximum resampling rounds per left-out point.
    #[arg(long, default_value_t = 1000)]
    max_rounds: usize,
    /// Estimate from at most this many left-out points.
    #[arg(long)]
    max_instances: Option<usize>,
    /// Estimation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PacArgs {
    fn level(&self) -> anyhow::Result<PrivacyLevel> {
        match (self.psr, self.mi) {
            (_, Some(mi)) => {
                // budgets at or beyond ln 2 have no success-rate equivalent
                Ok(PrivacyLevel::from_mi(mi, self.delta).unwrap_or(PrivacyLevel {
                    psr: f64::NAN,
                    mi,
                    epsilon_equiv: f64::NAN,
                    delta_equiv: self.delta,
                    prior: 0.5,
                }))
            }
            (Some(psr), None) => Ok(PrivacyLevel::from_psr(psr, self.delta)?),
            (None, None) => Err(anyhow!("one of --psr or --mi is required")),
        }
    }

    fn config(&self, mi: f64) -> PacEstimationConfig {
        PacEstimationConfig {
            sampling_rate: 0.5,
            convergence_threshold: self.threshold,
            min_rounds: self.min_rounds,
            max_rounds: self.max_rounds,
            projection: match self.projection {
                ProjectionArg::Svd => ProjectionChoice::Svd {
                    samples: self.projection_samples,
                },
                ProjectionArg::Identity => ProjectionChoice::Identity,
            },
            mi_budget: mi,
            mode: match self.mode {
                ModeArg::CovarianceCorrect => NoiseMode::CovarianceCorrect,
                ModeArg::PaperLiteral => NoiseMode::PaperLiteral,
            },
            max_instances: self.max_instances,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
struct PacEstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    pac: PacArgs,
}

#[derive(Debug, Args)]
struct PacTrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    pac: PacArgs,
    /// Use this noise profile instead of estimating one.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Seed of the noise draw.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Experiment spec files (JSON).
    #[arg(required = true)]
    specs: Vec<PathBuf>,
    /// Results directory.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Override the number of trials in every spec.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the master seed in every spec.
    #[arg(long)]
    seed: Option<u64>,
}

/// Errors split by exit code.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    let manifest = DatasetManifest::from_file(path).map_err(|e| match e {
        DataError::MissingFile(p) => usage(anyhow!("dataset manifest not found: {}", p.display())),
        other => usage(other),
    })?;
    if !manifest.path.exists() {
        return Err(usage(anyhow!("dataset file not found: {}", manifest.path.display())));
    }
    Ok(manifest)
}

fn load_data(args: &DataArgs) -> Result<PreparedData, Failure> {
    let manifest = load_manifest(&args.dataset)?;
    let data = manifest.load().context("loading dataset")?;
    Ok(prepare(&data, args.test_fraction, args.split_seed, !args.no_normalize).context("splitting dataset")?)
}

fn print_metrics(model: &Coefficients, data: &PreparedData) -> anyhow::Result<()> {
    let (rmse, r2) = bench::evaluate(model, &data.test).map_err(|e| anyhow!(e))?;
    println!("test rmse: {rmse}");
    println!("test r2: {r2}");
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, output: Option<&Path>) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match output {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> Result<(), Failure> {
    let q = &args.quantity;
    let level = if let Some(p) = q.psr {
        PrivacyLevel::from_psr(p, args.delta)
    } else if let Some(e) = q.epsilon {
        PrivacyLevel::from_epsilon(e, args.delta)
    } else {
        PrivacyLevel::from_mi(q.mi.expect("clap enforces one quantity"), args.delta)
    }
    .map_err(usage)?;
    if args.json {
        println!("{}", serde_json::to_string(&level).map_err(anyhow::Error::from)?);
    } else {
        println!("psr: {:.6}", level.psr);
        println!("epsilon: {:.6}", level.epsilon_equiv);
        println!("mi: {:.6}", level.mi);
        println!("delta: {}", level.delta_equiv);
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let spec = args.model.spec();
    spec.validate().map_err(usage)?;
    let data = load_data(&args.data)?;
    let fit = spec.fit_dataset(&data.train).context("fitting")?;
    if fit.rank_deficient {
        log::warn!("design is rank deficient; returned the minimum-norm solution");
    }
    write_json(&fit.coefficients, args.data.output.as_deref())?;
    print_metrics(&fit.coefficients, &data)?;
    Ok(())
}

fn cmd_dp_train(args: &DpTrainArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(anyhow!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str::<DpTrainingConfig>(&text)
                .map_err(|e| usage(anyhow!("{}: {e}", p.display())))?
        }
        None => DpTrainingConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            clip_norm: 1.0,
            epsilon: 1.0,
            delta: DEFAULT_DELTA,
            seed: 0,
            sampling: Sampling::Poisson,
            init: Init::Zeros,
        },
    };
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.clip_norm {
        cfg.clip_norm = v;
    }
    if let Some(v) = args.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = args.delta {
        cfg.delta = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.sampling {
        cfg.sampling = match v {
            SamplingArg::Poisson => Sampling::Poisson,
            SamplingArg::Fixed => Sampling::Fixed,
        };
    }
    if let Some(v) = args.init {
        cfg.init = match v {
            InitArg::Zeros => Init::Zeros,
            InitArg::Random => Init::Random,
        };
    }
    let data = load_data(&args.data)?;
    let out = train_private(&data.train, &cfg).context("DP-SGD training")?;
    write_json(&out.coefficients, args.data.output.as_deref())?;
    println!("noise multiplier: {}", out.noise_multiplier);
    println!("steps: {}", out.steps);
    println!("epsilon spent: {}", out.epsilon_spent);
    print_metrics(&out.coefficients, &data)?;
    Ok(())
}

fn estimate_profile(
    data: &PreparedData,
    model: &ModelArgs,
    pac: &PacArgs,
) -> Result<(PrivacyLevel, NoiseProfile), Failure> {
    let spec = model.spec();
    spec.validate().map_err(usage)?;
    let level = pac.level().map_err(Failure::Usage)?;
    let config = pac.config(level.mi);
    config.validate().map_err(usage)?;
    let profile = estimate_deviations(&data.train, &spec, &config)
        .context("estimating noise")?
        .profile(level.mi)
        .context("scaling noise")?;
    if !profile.converged {
        log::warn!("some left-out points reached the round limit before settling");
    }
    Ok((level, profile))
}

fn cmd_pac_estimate(args: &PacEstimateArgs) -> Result<(), Failure> {
    let data = load_data(&args.data)?;
    let (_, profile) = estimate_profile(&data, &args.model, &args.pac)?;
    write_json(&profile, args.data.output.as_deref())?;
    Ok(())
}

fn cmd_pac_train(args: &PacTrainArgs) -> Result<(), Failure> {
    let data = load_data(&args.data)?;
    let spec = args.model.spec();
    let profile = match &args.profile {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(anyhow!("cannot read {}: {e}", p.display())))?;
            NoiseProfile::from_json(&text).map_err(usage)?
        }
        None => estimate_profile(&data, &args.model, &args.pac)?.1,
    };
    let fit = spec.fit_dataset(&data.train).context("fitting")?;
    let noisy = add_noise(&fit.coefficients, &profile, args.noise_seed).context("adding noise")?;
    write_json(&noisy, args.data.output.as_deref())?;
    println!("noise trace: {}", profile.variances.iter().sum::<f64>());
    print_metrics(&noisy, &data)?;
    Ok(())
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<(), Failure> {
    let mut specs = Vec::new();
    let mut problems = Vec::new();
    for path in &args.specs {
        match ExperimentSpec::from_file(path) {
            Ok(mut s) => {
                if let Some(t) = args.trials {
                    s.trials = t;
                }
                if let Some(seed) = args.seed {
                    s.seed = seed;
                }
                problems.extend(s.problems().into_iter().map(|p| format!("{}: {p}", path.display())));
                match s.manifest() {
                    Ok(m) if !m.path.exists() => {
                        problems.push(format!("{}: dataset file not found: {}", path.display(), m.path.display()))
                    }
                    Ok(_) => {}
                    Err(e) => problems.push(format!("{}: {e}", path.display())),
                }
                specs.push(s);
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if !problems.is_empty() {
        return Err(usage(anyhow!("invalid benchmark input:\n  {}", problems.join("\n  "))));
    }
    for spec in &specs {
        let report = bench::run_benchmark(spec).context("running benchmark")?;
        let written = bench::write_results_dir(&report, &args.out).context("writing results")?;
        print_summary(&report);
        for p in written {
            log::info!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn print_summary(report: &bench::TrialReport) {
    println!("dataset: {} ({} train / {} test rows)", report.dataset, report.metadata.n_train, report.metadata.n_test);
    println!(
        "{:<12} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "method", "psr", "epsilon", "rmse", "rmse_std", "r2", "r2_std"
    );
    for c in &report.results {
        println!(
            "{:<12} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            c.method.as_str(),
            c.psr,
            c.epsilon,
            c.rmse_mean,
            c.rmse_std,
            c.r2_mean,
            c.r2_std
        );
    }
    let r = &report.reference;
    println!(
        "{:<12} {:>6} {:>10} {:>10.4} {:>10} {:>10.4}",
        Method::NonPrivate.as_str(),
        "-",
        "inf",
        r.rmse_mean,
        "-",
        r.r2_mean
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Fit(a) => cmd_fit(a),
        Command::DpTrain(a) => cmd_dp_train(a),
        Command::PacEstimate(a) => cmd_pac_estimate(a),
        Command::PacTrain(a) => cmd_pac_train(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
