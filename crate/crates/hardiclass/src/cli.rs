//! Subcommand definitions and their implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hardiclass_core::baseline::{cross_validate_fusion, fusion_datasets, FusionConfig, FusionMode};
use hardiclass_core::eval::{compute_metrics, cross_validate, estimate_classification_time, REFERENCE_RUN_SECONDS};
use hardiclass_core::features::{extract, DEFAULT_LAMBDA};
use hardiclass_core::filter::{convolve_features_with, flatten, Border};
use hardiclass_core::ga::{
    evolve_from, genome_to_bank, initial_population, Control, GaConfig, GenerationStats, Genome, KernelFitness,
};
use hardiclass_core::phantom::{generate_phantom, PhantomSpec};
use hardiclass_core::svm::train_svm;
use hardiclass_core::{
    Dims, EvalReport, FeatureKind, FeatureVolume, FitnessWeights, KernelBank, Label, LabelVolume, SvmConfig, SvmModel,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{read_dwi, read_features, read_json, read_labels, volume_paths, write_json, write_volume};
use crate::manifest::RunManifest;
use crate::parallel::RayonEvaluator;
use crate::render::render_slice;

/// Seed used whenever `--seed` is omitted.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "hardiclass", version, about = "Voxel tissue classification of diffusion MRI with optimized convolution kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Generate a synthetic phantom and its ground-truth labels.
    Phantom(PhantomArgs),
    /// Compute a feature volume from a diffusion volume.
    Features(FeaturesArgs),
    /// Convolve every feature slice with a kernel bank.
    Convolve(ConvolveArgs),
    /// Train a one-vs-one SVM on all labeled voxels.
    Train(TrainArgs),
    /// Label every voxel with a trained model.
    Classify(ClassifyArgs),
    /// Score predictions, or cross-validate a classifier on labeled features.
    Evaluate(EvaluateArgs),
    /// Search kernel banks with the genetic algorithm.
    Optimize(OptimizeArgs),
    /// Cross-validate the multi-feature SVM fusion baseline.
    Baseline(BaselineArgs),
    /// Draw predicted labels, ground truth and the error mask as PPM images.
    Render(RenderArgs),
    /// Estimate classification time for a voxel count.
    Timing(TimingArgs),
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    let parsed: Result<Vec<usize>, _> = parts.iter().map(|p| p.trim().parse::<usize>()).collect();
    match parsed {
        Ok(v) if v.len() == 3 => Ok([v[0], v[1], v[2]]),
        _ => Err(format!("expected X,Y,Z, got {s:?}")),
    }
}

fn parse_kind(s: &str) -> Result<FeatureKind, String> {
    s.parse().map_err(|e: hardiclass_core::Error| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct PhantomArgs {
    /// Output prefix; writes `<out>_dwi` and `<out>_labels` volumes.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    pub snr: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_parser = parse_dims, default_value = "64,64,3")]
    pub dims: [usize; 3],
    #[arg(long, default_value_t = 64)]
    pub directions: usize,
    #[arg(long, default_value_t = 1500.0)]
    pub b_value: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    /// Diffusion volume prefix.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: FeatureKind,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BorderArg {
    Zero,
    Replicate,
}

impl From<BorderArg> for Border {
    fn from(b: BorderArg) -> Self {
        match b {
            BorderArg::Zero => Border::Zero,
            BorderArg::Replicate => Border::Replicate,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ConvolveArgs {
    /// Feature volume prefix.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub bank: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = BorderArg::Zero)]
    pub border: BorderArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SvmArgs {
    /// Box constraint.
    #[arg(long = "c", default_value_t = 1.0)]
    pub c: f64,
    /// Kernel width; defaults to 1/n.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 200)]
    pub cache_mb: usize,
}

impl SvmArgs {
    fn config(&self) -> SvmConfig {
        SvmConfig { c: self.c, gamma: self.gamma, tolerance: self.tolerance, cache_mb: self.cache_mb, ..SvmConfig::default() }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct WeightArgs {
    /// Weight of the missed white-matter ratio.
    #[arg(long, default_value_t = 1.5)]
    pub alpha: f64,
    /// Weight of the exchanged white-matter ratio.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Weight of the imagined white-matter ratio.
    #[arg(long = "gamma-w", default_value_t = 2.0)]
    pub gamma_w: f64,
}

impl WeightArgs {
    fn weights(&self) -> FitnessWeights {
        FitnessWeights { alpha: self.alpha, beta: self.beta, gamma_w: self.gamma_w }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Kernel bank applied to the features before training.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[command(flatten)]
    pub svm: SvmArgs,
    /// Model JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Kernel bank the model was trained with.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// Output label volume prefix.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Ground-truth label volume.
    #[arg(long)]
    pub labels: PathBuf,
    /// Predicted label volume to score against the ground truth.
    #[arg(long, conflicts_with_all = ["features", "bank"])]
    pub predicted: Option<PathBuf>,
    /// Feature volume to cross-validate on (instead of `--predicted`).
    #[arg(long, required_unless_present = "predicted")]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub svm: SvmArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Report JSON path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Kernel width (odd).
    #[arg(long, default_value_t = 5)]
    pub width: usize,
    #[arg(long, default_value_t = 500)]
    pub population: usize,
    #[arg(long, default_value_t = 100)]
    pub generations: usize,
    /// Stop after the generation during which this many hours have elapsed.
    #[arg(long)]
    pub budget_hours: Option<f64>,
    #[arg(long, default_value_t = 20)]
    pub elites: usize,
    #[arg(long, default_value_t = 0.9)]
    pub crossover_rate: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mutation_rate: f64,
    #[arg(long, default_value_t = 0.2)]
    pub mutation_sigma: f64,
    #[arg(long, default_value_t = 3)]
    pub tournament: usize,
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads for fitness evaluation; 0 uses every CPU.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[command(flatten)]
    pub svm: SvmArgs,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Best kernel bank JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// History CSV path; defaults to `history.csv` beside `--out`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Svm,
    Vote,
}

#[derive(Debug, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(long)]
    pub dwi: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Svm)]
    pub mode: ModeArg,
    #[arg(long)]
    pub report: PathBuf,
    /// Outer cross-validation folds used to score the fused classifier.
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    /// Folds of the grid search and of the stacking step.
    #[arg(long, default_value_t = 10)]
    pub inner_folds: usize,
    /// Comma-separated C grid; defaults to 2^-5, 2^-3, ..., 2^9.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    /// Comma-separated gamma grid; defaults to 2^-15, 2^-13, ..., 2^3.
    #[arg(long, value_delimiter = ',')]
    pub gamma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(flatten)]
    pub weights: WeightArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub predicted: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Output prefix; one `<out>_z<k>.ppm` per slice.
    #[arg(long)]
    pub out: PathBuf,
    /// Pixels per voxel edge.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TimingArgs {
    #[arg(long)]
    pub voxels: u64,
    /// Seconds to classify a 3x64x64 volume.
    #[arg(long, default_value_t = REFERENCE_RUN_SECONDS)]
    pub per_run: f64,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> CliResult<()> {
    let start = Instant::now();
    let params = serde_json::to_value(command).expect("arguments serialize");
    let name = params.as_object().and_then(|o| o.keys().next().cloned()).unwrap_or_default();
    let params = params.get(&name).cloned().unwrap_or_default();
    let seed = params.get("seed").and_then(|s| s.as_u64());
    let mut manifest = RunManifest::new(&name, params, seed);
    let primary = match command {
        Command::Phantom(a) => phantom(a, &mut manifest)?,
        Command::Features(a) => features(a, &mut manifest)?,
        Command::Convolve(a) => convolve(a, &mut manifest)?,
        Command::Train(a) => train(a, &mut manifest)?,
        Command::Classify(a) => classify(a, &mut manifest)?,
        Command::Evaluate(a) => evaluate(a, &mut manifest)?,
        Command::Optimize(a) => optimize(a, &mut manifest)?,
        Command::Baseline(a) => baseline(a, &mut manifest)?,
        Command::Render(a) => render(a, &mut manifest)?,
        Command::Timing(a) => {
            println!("{:?}", estimate_classification_time(a.voxels, a.per_run));
            None
        }
    };
    if let Some(primary) = primary {
        manifest.wall_seconds = start.elapsed().as_secs_f64();
        manifest.write(&primary)?;
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn record_volume(manifest: &mut RunManifest, prefix: &Path) -> CliResult<()> {
    let (json, raw) = volume_paths(prefix);
    manifest.output(&json)?;
    manifest.output(&raw)
}

fn input_volume(manifest: &mut RunManifest, prefix: &Path) {
    let (json, raw) = volume_paths(prefix);
    manifest.input(&json);
    manifest.input(&raw);
}

fn phantom(a: &PhantomArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    let spec = PhantomSpec {
        dims: Dims::new(a.dims[0], a.dims[1], a.dims[2]),
        n_directions: a.directions,
        b_value: a.b_value,
        snr: a.snr,
        seed: a.seed,
        ..PhantomSpec::default()
    };
    let (dwi, labels) = generate_phantom(&spec)?;
    let (dwi_path, label_path) = (with_suffix(&a.out, "_dwi"), with_suffix(&a.out, "_labels"));
    let hist = labels.histogram();
    write_volume(&dwi_path, &dwi.into())?;
    write_volume(&label_path, &labels.into())?;
    record_volume(m, &dwi_path)?;
    record_volume(m, &label_path)?;
    println!(
        "phantom {}: CSF {} GM {} WMSF {} WMCF {}",
        spec.dims, hist[0], hist[1], hist[2], hist[3]
    );
    Ok(Some(a.out.clone()))
}

fn features(a: &FeaturesArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    input_volume(m, &a.input);
    let dwi = read_dwi(&a.input)?;
    let f = extract(&dwi, a.kind, a.lambda)?;
    println!("{} features, n = {}", f.kind(), f.n());
    write_volume(&a.out, &f.into())?;
    record_volume(m, &a.out)?;
    Ok(Some(a.out.clone()))
}

fn load_bank(path: &Path, m: &mut RunManifest) -> CliResult<KernelBank> {
    m.input(path);
    read_json(path)
}

fn maybe_convolve(f: FeatureVolume, bank: Option<&Path>, m: &mut RunManifest) -> CliResult<FeatureVolume> {
    match bank {
        None => Ok(f),
        Some(p) => Ok(convolve_features_with(&f, &load_bank(p, m)?, Border::Zero)?),
    }
}

fn convolve(a: &ConvolveArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    input_volume(m, &a.input);
    let f = read_features(&a.input)?;
    let bank = load_bank(&a.bank, m)?;
    let out = convolve_features_with(&f, &bank, a.border.into())?;
    write_volume(&a.out, &out.into())?;
    record_volume(m, &a.out)?;
    Ok(Some(a.out.clone()))
}

fn load_labeled(features: &Path, labels: &Path, bank: Option<&Path>, m: &mut RunManifest) -> CliResult<(FeatureVolume, LabelVolume)> {
    input_volume(m, features);
    input_volume(m, labels);
    let f = maybe_convolve(read_features(features)?, bank, m)?;
    Ok((f, read_labels(labels)?))
}

fn train(a: &TrainArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    let (f, labels) = load_labeled(&a.features, &a.labels, a.bank.as_deref(), m)?;
    let data = flatten(&f, &labels)?;
    let model = train_svm(&data, &a.svm.config())?;
    println!("trained on {} samples, {} support vectors", data.len(), model.n_support());
    write_json(&a.out, &model)?;
    m.output(&a.out)?;
    Ok(Some(a.out.clone()))
}

fn classify(a: &ClassifyArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    input_volume(m, &a.features);
    m.input(&a.model);
    let f = maybe_convolve(read_features(&a.features)?, a.bank.as_deref(), m)?;
    let model: SvmModel = read_json(&a.model)?;
    let start = Instant::now();
    let predicted = predict_volume(&model, &f)?;
    println!("classified {} voxels in {:.3} s", f.dims().voxel_count(), start.elapsed().as_secs_f64());
    write_volume(&a.out, &predicted.into())?;
    record_volume(m, &a.out)?;
    Ok(Some(a.out.clone()))
}

/// Labels every voxel of a feature volume.
pub fn predict_volume(model: &SvmModel, f: &FeatureVolume) -> CliResult<LabelVolume> {
    let voxels = f.dims().voxel_count();
    let mut rows = vec![0.0; voxels * f.n()];
    for (v, row) in rows.chunks_exact_mut(f.n()).enumerate() {
        f.vector(v, row);
    }
    let labels = model.predict_rows(&rows)?;
    Ok(LabelVolume::new(f.dims(), labels)?)
}

/// Fixed-layout text summary of a report.
pub fn format_report(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "confusion (rows = truth, columns = predicted)");
    let _ = write!(s, "{:>6}", "");
    for l in Label::ALL {
        let _ = write!(s, " {:>8}", l.name());
    }
    s.push('\n');
    for (l, row) in Label::ALL.iter().zip(&r.confusion) {
        let _ = write!(s, "{:>6}", l.name());
        for c in row {
            let _ = write!(s, " {c:>8}");
        }
        s.push('\n');
    }
    for (name, v) in [
        ("MWMR", r.mwmr),
        ("EWMR", r.ewmr),
        ("IWMR", r.iwmr),
        ("fitness", r.fitness),
        ("global_error", r.global_error),
        ("merged_global_error", r.merged_global_error),
    ] {
        let _ = writeln!(s, "{name:<20} {v:.6}");
    }
    if r.no_white_matter {
        let _ = writeln!(s, "note: no white-matter voxels in the ground truth");
    }
    if r.no_other_tissue {
        let _ = writeln!(s, "note: no CSF or GM voxels in the ground truth");
    }
    s
}

fn evaluate(a: &EvaluateArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    let weights = a.weights.weights();
    let report = if let Some(pred) = &a.predicted {
        input_volume(m, &a.labels);
        input_volume(m, pred);
        let truth = read_labels(&a.labels)?;
        let predicted = read_labels(pred)?;
        if truth.dims() != predicted.dims() {
            return Err(hardiclass_core::Error::Validation(format!(
                "prediction is {} but ground truth is {}",
                predicted.dims(),
                truth.dims()
            ))
            .into());
        }
        compute_metrics(truth.labels(), predicted.labels(), weights)?
    } else {
        let features = a.features.as_deref().expect("clap requires --features without --predicted");
        let (f, labels) = load_labeled(features, &a.labels, a.bank.as_deref(), m)?;
        cross_validate(&flatten(&f, &labels)?, &a.svm.config(), weights, a.folds, a.seed)?
    };
    print!("{}", format_report(&report));
    match &a.report {
        Some(p) => {
            write_json(p, &report)?;
            m.output(p)?;
            Ok(Some(p.clone()))
        }
        None => Ok(None),
    }
}

/// One line of `history.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub elapsed_seconds: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("generation,best_fitness,mean_fitness,elapsed_seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.3}", r.generation, r.best_fitness, r.mean_fitness, r.elapsed_seconds);
    }
    s
}

/// Search state saved after every generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub generation: usize,
    pub n: usize,
    pub width: usize,
    pub config: GaConfig,
    pub history: Vec<HistoryRow>,
    /// Evaluated population of `generation`, best first.
    pub population: Vec<Genome>,
}

pub fn checkpoint_path(out: &Path) -> PathBuf {
    let stem = if out.extension().is_some_and(|e| e == "json") { out.with_extension("") } else { out.to_path_buf() };
    with_suffix(&stem, ".checkpoint.json")
}

fn optimize(a: &OptimizeArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    let (f, labels) = load_labeled(&a.features, &a.labels, None, m)?;
    let data = flatten(&f, &labels)?;
    let config = GaConfig {
        population: a.population,
        generations: a.generations,
        wall_clock_budget: a.budget_hours.map(|h| h * 3600.0),
        crossover_rate: a.crossover_rate,
        mutation_rate: a.mutation_rate,
        mutation_sigma: a.mutation_sigma,
        elites: a.elites,
        seed: a.seed,
        tournament: a.tournament,
        folds: a.folds,
        ..GaConfig::default()
    };
    let problem = KernelFitness::new(&data, a.width, a.svm.config(), a.weights.weights(), a.folds, a.seed)?;
    let evaluator = RayonEvaluator::new(a.threads).map_err(|e| CliError::Usage(e.to_string()))?;
    let (start_gen, population, mut history) = match &a.resume {
        Some(p) => {
            m.input(p);
            let cp: Checkpoint = read_json(p)?;
            // The generation cap and time budget may change between sessions.
            let fixed = |c: &GaConfig| GaConfig { generations: 0, wall_clock_budget: None, ..c.clone() };
            if cp.n != f.n() || cp.width != a.width || fixed(&cp.config) != fixed(&config) {
                return Err(CliError::Usage(format!("{} was written for different features or settings", p.display())));
            }
            (cp.generation, cp.population, cp.history)
        }
        None => (0, initial_population(f.n(), a.width, &config)?, Vec::new()),
    };
    let offset = history.last().map_or(0.0, |r: &HistoryRow| r.elapsed_seconds);
    let history_path = a.history.clone().unwrap_or_else(|| a.out.with_file_name("history.csv"));
    let cp_path = checkpoint_path(&a.out);
    let clock = Instant::now();
    let mut failure: Option<CliError> = None;
    let mut observer = |s: &GenerationStats, pop: &[Genome]| -> Control {
        let elapsed = offset + clock.elapsed().as_secs_f64();
        if history.last().is_some_and(|r| r.generation >= s.generation) {
            // Generation restored from a checkpoint; already recorded.
            return Control::Continue;
        }
        history.push(HistoryRow {
            generation: s.generation,
            best_fitness: s.best_fitness,
            mean_fitness: s.mean_fitness,
            elapsed_seconds: elapsed,
        });
        eprintln!(
            "generation {:>4}  best {:.6}  mean {:.6}  evaluated {:>4}  {:.0} s",
            s.generation, s.best_fitness, s.mean_fitness, s.evaluations, elapsed
        );
        let cp = Checkpoint {
            generation: s.generation,
            n: f.n(),
            width: a.width,
            config: config.clone(),
            history: history.clone(),
            population: pop.to_vec(),
        };
        let written = fs::write(&history_path, history_csv(&history))
            .map_err(|e| CliError::io(&history_path, e))
            .and_then(|()| write_json(&cp_path, &cp));
        if let Err(e) = written {
            failure = Some(e);
            return Control::Stop;
        }
        match config.wall_clock_budget {
            Some(budget) if elapsed >= budget => Control::Stop,
            _ => Control::Continue,
        }
    };
    let outcome = evolve_from(&problem, &config, start_gen, population, &evaluator, &mut observer)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let bank = genome_to_bank(&outcome.best.genes, f.n(), a.width)?;
    write_json(&a.out, &bank)?;
    println!("best fitness {:.6} after {} generations", outcome.best_fitness(), history.len());
    m.output(&a.out)?;
    m.output(&history_path)?;
    Ok(Some(a.out.clone()))
}

fn baseline(a: &BaselineArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    input_volume(m, &a.dwi);
    input_volume(m, &a.labels);
    let dwi = read_dwi(&a.dwi)?;
    let labels = read_labels(&a.labels)?;
    let volumes = FeatureKind::ALL.iter().map(|&k| extract(&dwi, k, a.lambda)).collect::<Result<Vec<_>, _>>()?;
    let sets = fusion_datasets(&volumes, &labels)?;
    let defaults = FusionConfig::default();
    let config = FusionConfig {
        mode: match a.mode {
            ModeArg::Svm => FusionMode::Svm,
            ModeArg::Vote => FusionMode::Vote,
        },
        c_grid: a.c_grid.clone().unwrap_or(defaults.c_grid),
        gamma_grid: a.gamma_grid.clone().unwrap_or(defaults.gamma_grid),
        folds: a.inner_folds,
        seed: a.seed,
        ..defaults
    };
    let predicted = cross_validate_fusion(&sets, &config, a.folds, a.seed)?;
    let report = compute_metrics(sets[0].1.labels(), &predicted, a.weights.weights())?;
    print!("{}", format_report(&report));
    write_json(&a.report, &report)?;
    m.output(&a.report)?;
    Ok(Some(a.report.clone()))
}

fn render(a: &RenderArgs, m: &mut RunManifest) -> CliResult<Option<PathBuf>> {
    input_volume(m, &a.predicted);
    input_volume(m, &a.truth);
    let predicted = read_labels(&a.predicted)?;
    let truth = read_labels(&a.truth)?;
    if predicted.dims() != truth.dims() {
        return Err(hardiclass_core::Error::Validation(format!(
            "prediction is {} but ground truth is {}",
            predicted.dims(),
            truth.dims()
        ))
        .into());
    }
    for z in 0..truth.dims().nz {
        let path = with_suffix(&a.out, &format!("_z{z}.ppm"));
        let img = render_slice(&predicted, &truth, z, a.scale);
        fs::write(&path, img.to_ppm()).map_err(|e| CliError::io(&path, e))?;
        m.output(&path)?;
    }
    Ok(Some(a.out.clone()))
}
