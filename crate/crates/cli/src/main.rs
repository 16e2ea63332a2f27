//! `qssvm`: generate data, train and apply quadratic surface classifiers,
//! tune and benchmark them, and check their theoretical properties.
//!
//! Exit codes: 0 ok, 1 a `verify` check failed, 2 input/output, 3 data
//! generation, 4 infeasible or non-separable, 5 solver failure or flagged
//! benchmark cell, 64 usage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qssvm_core::datagen::{self, GenConfig, SurfaceSpec, Table1Set};
use qssvm_core::diagnostics::{self, SeparabilityKind};
use qssvm_core::experiment::{self, Evaluation, ExperimentPlan, LabelColumn, TuningScore};
use qssvm_core::halfvec::assemble_design;
use qssvm_core::models::{self, sparsity_pattern, TrainConfig, Variant};
use qssvm_core::{Dataset, Error, QuadSurfaceModel, SolveOptions};

const SPARSITY_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "qssvm", version, about = "Kernel-free quadratic surface SVMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic data set and its metadata sidecar.
    Generate(GenerateArgs),
    /// Train one model and report its diagnostics.
    Train(TrainArgs),
    /// Apply a saved model to a data set.
    Predict(PredictArgs),
    /// Grid-search mu for SQSSVM, then lambda for L1-SQSSVM.
    Tune(TuneArgs),
    /// Repeated random-subset benchmark.
    Benchmark(BenchmarkArgs),
    /// Check assumptions and theoretical properties.
    Verify(VerifyArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Label column: `last`, a 0-based index or a header name.
    #[arg(long, default_value = "last")]
    label: String,
    /// Label value mapped to +1; the other becomes -1.
    #[arg(long, default_value = "1")]
    positive: String,
}

impl DataArgs {
    fn column(&self) -> LabelColumn {
        if self.label.eq_ignore_ascii_case("last") {
            LabelColumn::Last
        } else if let Ok(i) = self.label.parse() {
            LabelColumn::Index(i)
        } else {
            LabelColumn::Name(self.label.clone())
        }
    }

    fn load(&self) -> Result<Dataset, Failure> {
        experiment::load_csv(&self.data, &self.column(), &self.positive).map_err(|e| {
            let mut f = Failure::from(e);
            f.message = format!("{}: {}", self.data.display(), f.message);
            f
        })
    }

    fn describe(&self, out: &mut String) {
        let _ = writeln!(out, "data = {}", self.data.display());
        let _ = writeln!(out, "label = {}", self.label);
        let _ = writeln!(out, "positive = {}", self.positive);
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SpecName {
    /// The 10-feature sparse surface.
    Sparse10,
    /// Random hyperplane through the origin.
    Linear,
    /// Two concentric rings in the plane.
    Ring,
    /// Artificial set I (n = 3, 67/58).
    I,
    /// Artificial set II (n = 3, 79/71).
    Ii,
    /// Artificial set III (n = 5, 106/81).
    Iii,
    /// Artificial set IV (n = 10, 204/171).
    Iv,
    /// Quadratically separable 3-D ellipsoid (99/101).
    #[value(name = "3d")]
    ThreeD,
}

impl SpecName {
    fn table1(self) -> Option<Table1Set> {
        match self {
            SpecName::I => Some(Table1Set::I),
            SpecName::Ii => Some(Table1Set::II),
            SpecName::Iii => Some(Table1Set::III),
            SpecName::Iv => Some(Table1Set::IV),
            SpecName::ThreeD => Some(Table1Set::ThreeD),
            _ => None,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, conflicts_with = "surface", required_unless_present = "surface")]
    spec: Option<SpecName>,
    /// Model file whose surface is sampled instead of a named spec.
    #[arg(long)]
    surface: Option<PathBuf>,
    /// Clean points per class.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    clean: Option<u64>,
    /// Clean positives; overrides --clean.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pos: Option<u64>,
    /// Clean negatives; overrides --clean.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    neg: Option<u64>,
    /// Points near the surface with coin-flip labels.
    #[arg(long, default_value_t = 0)]
    noise: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dimension of the `linear` spec.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    /// Half-width of the sampling box.
    #[arg(long = "box", default_value_t = 5.0)]
    box_half_width: f64,
    #[arg(long, default_value_t = 0.25)]
    band: f64,
    #[arg(long, default_value_t = 1.0)]
    r_inner: f64,
    #[arg(long, default_value_t = 2.0)]
    r_outer: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative tolerance for primal, dual and gap residuals.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

impl SolverArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            tol_primal: self.tol,
            tol_dual: self.tol,
            tol_gap: self.tol,
            max_iterations: self.max_iterations,
            ..SolveOptions::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// SVM, SSVM, QSSVM, SQSSVM, L1-QSSVM, L1-SQSSVM or R-QSSVM.
    #[arg(long, default_value = "L1-SQSSVM")]
    variant: String,
    /// A positive number, or `auto` for the SVM-equivalence bound.
    #[arg(long, default_value = "1")]
    lambda: String,
    /// A positive number, or `auto` for twice the vanishing-slack bound.
    #[arg(long, default_value = "1")]
    mu: String,
    /// Comma-separated hvec indices forced to zero (R-QSSVM).
    #[arg(long, value_delimiter = ',')]
    zero_set: Vec<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Where to write the model.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Leave the wall time out of the report.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    /// CSV of `index,label,predicted,value`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Exponents(Vec<i32>);

/// `lo:hi` inclusive exponent range or a comma list.
fn parse_exponents(s: &str) -> Result<Exponents, String> {
    if let Some((lo, hi)) = s.split_once(':') {
        let lo: i32 = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad exponent '{lo}'"))?;
        let hi: i32 = hi
            .trim()
            .parse()
            .map_err(|_| format!("bad exponent '{hi}'"))?;
        if lo > hi {
            return Err(format!("empty range {lo}:{hi}"));
        }
        return Ok(Exponents((lo..=hi).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad exponent '{t}'")))
        .collect::<Result<_, _>>()
        .map(Exponents)
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct GridArgs {
    /// Exponents e of mu = 2^e, as `lo:hi` or a comma list.
    #[arg(long, default_value = "-3:20", value_parser = parse_exponents, allow_hyphen_values = true)]
    mu_exp: Exponents,
    /// Exponents e of lambda = 2^e.
    #[arg(long, default_value = "-10:25", value_parser = parse_exponents, allow_hyphen_values = true)]
    lambda_exp: Exponents,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TuneOn {
    Full,
    Training,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalOn {
    Full,
    HeldOut,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant,
          default_value = "L1-SQSSVM,SQSSVM,SSVM,SVM")]
    variants: Vec<Variant>,
    /// Training rates in percent.
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    rates: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    grid: GridArgs,
    /// Data that scores tuning candidates.
    #[arg(long, value_enum, default_value = "full")]
    tune_on: TuneOn,
    /// Data that scores the tuned models.
    #[arg(long, value_enum, default_value = "full")]
    evaluate_on: EvalOn,
    /// Results CSV.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Per-repetition scores CSV.
    #[arg(long)]
    raw: Option<PathBuf>,
    /// Write zero timings so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Assumptions,
    Gpd,
    Separability,
    Kkt,
    SvmEquiv,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    check: Vec<Check>,
    /// Model for the `kkt` check.
    #[arg(long)]
    model: Option<PathBuf>,
    /// For `svm-equiv`: list curvature of hard L1-QSSVM for lambda = 2^e up
    /// to the equivalence bound.
    #[arg(long)]
    lambda_sweep: bool,
    /// Relative KKT tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_)
            | Error::Parse { .. }
            | Error::NotTwoClasses { .. }
            | Error::EmptyDataset
            | Error::InvalidDataset(_)
            | Error::ModelFormat(_)
            | Error::DimensionMismatch { .. } => 2,
            Error::RejectionBudgetExceeded { .. } => 3,
            Error::HardMarginInfeasible
            | Error::NotLinearlySeparable
            | Error::NotQuadraticallySeparable => 4,
            Error::SolverFailure(_) | Error::OracleTooLarge { .. } => 5,
            Error::InvalidConfig(_) | Error::NotSymmetric { .. } => 64,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 64,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 64 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Tune(a) => tune(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn print_config(command: &str, body: &str) {
    println!("# {command}");
    for line in body.lines() {
        println!("  {line}");
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn read_model(path: &Path) -> Result<QuadSurfaceModel, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    Ok(QuadSurfaceModel::from_text(&text)?)
}

fn generate(a: GenerateArgs) -> Outcome {
    let table1 = a.spec.and_then(SpecName::table1);
    if table1.is_some() && (a.clean.is_some() || a.pos.is_some() || a.neg.is_some() || a.noise > 0)
    {
        return Err(usage(
            "artificial sets I-IV and 3d have fixed sizes; drop --clean/--pos/--neg/--noise",
        ));
    }
    let counts = || -> Result<(usize, usize), Failure> {
        let pos = a
            .pos
            .or(a.clean)
            .ok_or_else(|| usage("give --clean or both --pos and --neg"))?;
        let neg = a
            .neg
            .or(a.clean)
            .ok_or_else(|| usage("give --clean or both --pos and --neg"))?;
        Ok((pos as usize, neg as usize))
    };
    let cfg_for = |pos, neg| GenConfig {
        margin: a.margin,
        box_half_width: a.box_half_width,
        noise_band: a.band,
        ..GenConfig::new(a.seed, pos, neg).with_noise(a.noise)
    };

    let mut meta = String::new();
    let _ = writeln!(meta, "generator = {}", datagen::GENERATOR_ID);
    let _ = writeln!(meta, "seed = {}", a.seed);
    let (ds, spec_label, surface) = if let Some(which) = table1 {
        let ds = datagen::gen_table1_artificial(which, a.seed)?;
        (ds, format!("{which:?}"), None)
    } else {
        let (pos, neg) = counts()?;
        let cfg = cfg_for(pos, neg);
        let _ = writeln!(meta, "m_pos = {pos}\nm_neg = {neg}\nnoise = {}", a.noise);
        match (a.spec, &a.surface) {
            (Some(SpecName::Ring), _) => {
                if a.noise > 0 {
                    return Err(usage("the ring generator has no noise option"));
                }
                let _ = writeln!(meta, "r_inner = {}\nr_outer = {}", a.r_inner, a.r_outer);
                let ds = datagen::gen_ring(a.r_inner, a.r_outer, pos, neg, a.seed)?;
                (ds, "ring".to_string(), None)
            }
            (Some(SpecName::Linear), _) => {
                let _ = writeln!(
                    meta,
                    "margin = {}\nbox = {}\nband = {}",
                    a.margin, a.box_half_width, a.band
                );
                (
                    datagen::gen_linear_with(a.dim, &cfg)?,
                    "linear".to_string(),
                    None,
                )
            }
            (Some(SpecName::Sparse10), _) => {
                let _ = writeln!(
                    meta,
                    "margin = {}\nbox = {}\nband = {}",
                    a.margin, a.box_half_width, a.band
                );
                let spec = datagen::builtin_sparse_surface();
                (
                    datagen::gen_from_surface(&spec, &cfg)?,
                    "sparse10".to_string(),
                    Some(spec),
                )
            }
            (None, Some(path)) => {
                let _ = writeln!(
                    meta,
                    "margin = {}\nbox = {}\nband = {}",
                    a.margin, a.box_half_width, a.band
                );
                let m = read_model(path)?;
                let spec = SurfaceSpec::new(m.w, m.b, m.c)?;
                (
                    datagen::gen_from_surface(&spec, &cfg)?,
                    path.display().to_string(),
                    Some(spec),
                )
            }
            _ => unreachable!("clap requires --spec or --surface"),
        }
    };
    let _ = writeln!(meta, "spec = {spec_label}");
    if let Some(s) = surface {
        let model = s.to_model();
        for line in model
            .to_text()
            .lines()
            .filter(|l| l.starts_with("c ") || l.starts_with("b ") || l.starts_with("w_hvec"))
        {
            let _ = writeln!(meta, "surface_{line}");
        }
    }
    let _ = writeln!(meta, "n = {}\nm = {}", ds.dim(), ds.len());
    print_config("generate", &format!("{meta}out = {}", a.out.display()));

    write_file(&a.out, &ds.to_csv_string())?;
    let mut sidecar = a.out.clone().into_os_string();
    sidecar.push(".meta");
    write_file(Path::new(&sidecar), &meta)?;
    println!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(0)
}

fn resolve_lambda(arg: &str, ds: &Dataset) -> Result<f64, Failure> {
    if arg.eq_ignore_ascii_case("auto") {
        return Ok(models::lambda_equivalence_bound(ds)?);
    }
    arg.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 0.0)
        .ok_or_else(|| {
            usage(format!(
                "--lambda expects a number >= 0 or 'auto', got '{arg}'"
            ))
        })
}

fn resolve_mu(arg: &str, ds: &Dataset, lambda: f64) -> Result<f64, Failure> {
    if arg.eq_ignore_ascii_case("auto") {
        let bound = models::mu_vanishing_bound(ds, lambda)?;
        return Ok((2.0 * bound).max(1e-6));
    }
    arg.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v > 0.0)
        .ok_or_else(|| usage(format!("--mu expects a number > 0 or 'auto', got '{arg}'")))
}

fn train(a: TrainArgs) -> Outcome {
    let variant = parse_variant(&a.variant).map_err(usage)?;
    if !a.zero_set.is_empty() && variant != Variant::Rqssvm {
        return Err(usage("--zero-set only applies to R-QSSVM"));
    }
    let ds = a.data.load()?;
    let lambda = if variant.is_l1() {
        resolve_lambda(&a.lambda, &ds)?
    } else {
        0.0
    };
    let mu = if variant.is_soft() {
        resolve_mu(&a.mu, &ds, lambda)?
    } else {
        1.0
    };
    let mut cfg = TrainConfig::new(variant).with_lambda(lambda).with_mu(mu);
    if variant == Variant::Rqssvm {
        cfg = cfg.with_zero_set(a.zero_set.clone());
    }
    cfg.solver = a.solver.options();

    let mut conf = String::new();
    a.data.describe(&mut conf);
    let _ = writeln!(conf, "samples = {} (n = {})", ds.len(), ds.dim());
    let _ = writeln!(conf, "variant = {variant}");
    if variant.is_l1() {
        let _ = writeln!(
            conf,
            "lambda = {lambda:e}{}",
            if a.lambda == "auto" { " (auto)" } else { "" }
        );
    }
    if variant.is_soft() {
        let _ = writeln!(
            conf,
            "mu = {mu:e}{}",
            if a.mu == "auto" { " (auto)" } else { "" }
        );
    }
    if variant == Variant::Rqssvm {
        let _ = writeln!(conf, "zero_set = {:?}", a.zero_set);
    }
    let _ = writeln!(
        conf,
        "tol = {:e}\nmax_iterations = {}",
        a.solver.tol, a.solver.max_iterations
    );
    if let Some(out) = &a.out {
        let _ = writeln!(conf, "out = {}", out.display());
    }
    print_config("train", &conf);

    let r = models::train(&ds, &cfg)?;
    let zeros = sparsity_pattern(&r.model, SPARSITY_TOL).len();
    let h = r.model.hvec().len();
    println!("status = {:?}", r.solver_stats.status);
    println!("iterations = {}", r.solver_stats.iterations);
    if !a.no_timing {
        println!(
            "wall_time_s = {:.6}",
            r.solver_stats.wall_time.as_secs_f64()
        );
    }
    println!("objective = {:.10e}", r.objective);
    println!("xi_l1 = {:.6e}", r.xi.sum());
    println!(
        "kkt = stationarity {:.2e}, primal {:.2e}, complementarity {:.2e}, dual {:.2e} (worst relative {:.2e})",
        r.kkt.stationarity,
        r.kkt.primal_feasibility,
        r.kkt.complementarity,
        r.kkt.dual_feasibility,
        r.kkt.worst_relative()
    );
    println!("curvature = {:.6e}", diagnostics::curvature(&r.model));
    println!("nonzeros = {} of {h} (tol {SPARSITY_TOL:e})", h - zeros);
    println!(
        "training_accuracy = {:.4}",
        experiment::accuracy_score(&r.model, &ds)?
    );
    if let Some(out) = &a.out {
        write_file(out, &r.model.to_text())?;
    }
    Ok(0)
}

fn predict(a: PredictArgs) -> Outcome {
    let mut conf = String::new();
    a.data.describe(&mut conf);
    let _ = writeln!(conf, "model = {}", a.model.display());
    if let Some(out) = &a.out {
        let _ = writeln!(conf, "out = {}", out.display());
    }
    print_config("predict", &conf);
    let model = read_model(&a.model)?;
    let ds = a.data.load()?;
    let mut csv = String::from("index,label,predicted,value\n");
    let mut correct = 0;
    for i in 0..ds.len() {
        let x = ds.sample(i);
        let value = model.eval(&x)?;
        let label = model.predict(&x)?;
        if label == ds.labels()[i] {
            correct += 1;
        }
        let _ = writeln!(csv, "{i},{},{label},{value:.17e}", ds.labels()[i]);
    }
    println!("accuracy = {:.4}", 100.0 * correct as f64 / ds.len() as f64);
    match &a.out {
        Some(out) => write_file(out, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn tune(a: TuneArgs) -> Outcome {
    let mut conf = String::new();
    a.data.describe(&mut conf);
    let _ = writeln!(conf, "mu_exponents = {:?}", a.grid.mu_exp.0);
    let _ = writeln!(conf, "lambda_exponents = {:?}", a.grid.lambda_exp.0);
    print_config("tune", &conf);
    let ds = a.data.load()?;
    let plan = ExperimentPlan {
        mu_exponents: a.grid.mu_exp.0,
        lambda_exponents: a.grid.lambda_exp.0,
        ..ExperimentPlan::default()
    };
    let mu = experiment::tune_mu(&ds, &ds, &plan)?;
    let lambda = experiment::tune_lambda(&ds, &ds, mu, &plan)?;
    let r = models::train(
        &ds,
        &TrainConfig::new(Variant::L1Sqssvm)
            .with_mu(mu)
            .with_lambda(lambda),
    )?;
    println!("mu = {mu:e} (2^{:.4})", mu.log2());
    println!("lambda = {lambda:e} (2^{:.4})", lambda.log2());
    println!(
        "accuracy = {:.4}",
        experiment::accuracy_score(&r.model, &ds)?
    );
    Ok(0)
}

fn benchmark(a: BenchmarkArgs) -> Outcome {
    let plan = ExperimentPlan {
        variants: a.variants.clone(),
        training_rates: a.rates.clone(),
        repetitions: a.repetitions,
        mu_exponents: a.grid.mu_exp.0.clone(),
        lambda_exponents: a.grid.lambda_exp.0.clone(),
        seed: a.seed,
        tuning: match a.tune_on {
            TuneOn::Full => TuningScore::FullSet,
            TuneOn::Training => TuningScore::TrainingSet,
        },
        evaluation: match a.evaluate_on {
            EvalOn::Full => Evaluation::FullSet,
            EvalOn::HeldOut => Evaluation::HeldOut,
        },
    };
    plan.validate()?;
    let mut conf = String::new();
    a.data.describe(&mut conf);
    let names: Vec<&str> = plan.variants.iter().map(|v| v.name()).collect();
    let _ = writeln!(conf, "variants = {}", names.join(","));
    let _ = writeln!(conf, "rates = {:?}", plan.training_rates);
    let _ = writeln!(conf, "repetitions = {}", plan.repetitions);
    let _ = writeln!(conf, "seed = {}", plan.seed);
    let _ = writeln!(conf, "mu_exponents = {:?}", plan.mu_exponents);
    let _ = writeln!(conf, "lambda_exponents = {:?}", plan.lambda_exponents);
    let _ = writeln!(
        conf,
        "tuning = {:?}\nevaluation = {:?}",
        plan.tuning, plan.evaluation
    );
    print_config("benchmark", &conf);

    let ds = a.data.load()?;
    let started = Instant::now();
    let table = experiment::run_benchmark(&ds, &plan)?;
    print!("{}", table.to_text(!a.no_timing));
    if !a.no_timing {
        eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());
    }
    if let Some(out) = &a.out {
        write_file(out, &table.to_csv(!a.no_timing))?;
    }
    if let Some(raw) = &a.raw {
        write_file(raw, &table.raw_csv(!a.no_timing))?;
    }
    if table.any_flagged() {
        eprintln!("error: more than 10% of the repetitions failed in at least one cell");
        return Ok(5);
    }
    Ok(0)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn verify(a: VerifyArgs) -> Outcome {
    if a.check.contains(&Check::Kkt) && a.model.is_none() {
        return Err(usage("the kkt check needs --model"));
    }
    let mut conf = String::new();
    a.data.describe(&mut conf);
    let _ = writeln!(
        conf,
        "checks = {}",
        a.check
            .iter()
            .map(|c| c
                .to_possible_value()
                .map_or_else(String::new, |v| v.get_name().to_string()))
            .collect::<Vec<_>>()
            .join(",")
    );
    if let Some(m) = &a.model {
        let _ = writeln!(conf, "model = {}", m.display());
    }
    let _ = writeln!(conf, "tol = {:e}", a.tol);
    print_config("verify", &conf);

    let ds = a.data.load()?;
    let mut all_ok = true;
    for check in &a.check {
        let ok = match check {
            Check::Assumptions => {
                let r = diagnostics::check_assumptions(&ds);
                println!(
                    "[{}] assumptions: distinct samples {}, nonconstant features {}",
                    verdict(r.a1 && r.a2),
                    r.a1,
                    r.a2
                );
                r.a1 && r.a2
            }
            Check::Gpd => {
                let cache = assemble_design(&ds);
                let ok = diagnostics::is_g_pd(&cache);
                println!(
                    "[{}] gpd: min eigenvalue / ||G|| = {:.3e}, Schur test {}",
                    verdict(ok),
                    diagnostics::g_min_eigen_ratio(&cache),
                    diagnostics::is_g_pd_schur(&cache)
                );
                ok
            }
            Check::Separability => {
                let lin = diagnostics::check_separability(&ds, SeparabilityKind::Linear)?;
                let quad = diagnostics::check_separability(&ds, SeparabilityKind::Quadratic)?;
                let kind = if lin.kind == SeparabilityKind::Linear {
                    lin.kind
                } else {
                    quad.kind
                };
                println!("[PASS] separability: {kind:?}");
                true
            }
            Check::Kkt => {
                let model = read_model(a.model.as_deref().expect("checked above"))?;
                let r = diagnostics::verify_model_kkt(&ds, &model)?;
                let ok = r.worst_relative() <= a.tol;
                println!(
                    "[{}] kkt: stationarity {:.2e}, primal {:.2e}, complementarity {:.2e}, dual {:.2e}, worst relative {:.2e}",
                    verdict(ok),
                    r.stationarity,
                    r.primal_feasibility,
                    r.complementarity,
                    r.dual_feasibility,
                    r.worst_relative()
                );
                ok
            }
            Check::SvmEquiv => svm_equivalence(&ds, a.lambda_sweep)?,
        };
        all_ok &= ok;
    }
    Ok(if all_ok { 0 } else { 1 })
}

fn svm_equivalence(ds: &Dataset, sweep: bool) -> Result<bool, Failure> {
    let bound = match models::lambda_equivalence_bound(ds) {
        Ok(b) => b,
        Err(Error::NotLinearlySeparable) => {
            println!("[FAIL] svm-equiv: data is not linearly separable");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    if sweep {
        let cache = assemble_design(ds);
        let top = bound.log2().ceil() as i32;
        let mut last = f64::INFINITY;
        let mut monotone = true;
        println!("  {:>8} {:>14} {:>14}", "lambda", "curvature", "||w||_inf");
        for e in -4..=top {
            let lambda = 2f64.powi(e);
            let r = models::train_with_cache(
                ds,
                &TrainConfig::new(Variant::L1Qssvm).with_lambda(lambda),
                &cache,
            )?;
            let k = diagnostics::curvature(&r.model);
            monotone &= k <= last + 1e-8;
            last = k;
            println!(
                "  {:>8} {k:>14.6e} {:>14.6e}",
                format!("2^{e}"),
                r.model.hvec().max_abs()
            );
        }
        println!("  curvature nonincreasing: {monotone}");
    }
    let cmp = diagnostics::compare_with_svm(ds, bound)?;
    let ok = cmp.w_infnorm <= SPARSITY_TOL;
    println!(
        "[{}] svm-equiv: lambda bound {bound:.6e}, ||w||_inf {:.2e}, |b - u|_inf {:.2e}, |c - d| {:.2e}",
        verdict(ok),
        cmp.w_infnorm,
        cmp.b_gap,
        cmp.c_gap
    );
    Ok(ok)
}
