//! `discclust` command-line front end.
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O failure.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use discclust::contrastive::Augmentation;
use discclust::data::{make_circles, make_gaussian_blobs, standardize};
use discclust::runner::{
    boundary_grid, run_contrastive, run_fit, sweep, write_sweep_csv, ContrastiveConfig, GridSpec, ModelId,
    RunConfig, RunOutcome,
};
use discclust::{DataMatrix, Error, FitReport, KernelChoice, ModelDocument, ObjectiveId, Rng};

#[derive(Parser, Debug)]
#[command(
    name = "discclust",
    version,
    about = "Discriminative clustering with mutual information, MMD-GEMINI and contrastive critics",
    after_help = "Any subcommand accepts --config FILE: `key = value` lines naming its long flags \
                  (e.g. `model = kernel-rim`). Flags on the command line override the file.\n\
                  Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O failure.",
    args_override_self = true
)]
struct Cli {
    /// `key = value` file of flags for the subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic dataset to CSV (columns f0.., label)
    Generate(GenerateArgs),
    /// Fit a clustering model and write report.json, labels.csv and model.json
    Fit(FitArgs),
    /// Evaluate a saved model on a 2-d grid (x0,x1,p_cluster2 or x0,x1,argmax_value)
    Boundary(BoundaryArgs),
    /// Fit over a grid of K values and seeds; one CSV row per configuration
    Sweep(SweepArgs),
    /// Train a contrastive critic and cluster by its argmax output
    Contrastive(ContrastiveArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Dataset {
    Circles,
    Blobs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    dataset: Dataset,
    /// Number of samples (circles)
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Gaussian noise std added to every coordinate (circles)
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Inner/outer radius ratio (circles)
    #[arg(long, default_value_t = 0.1)]
    factor: f64,
    /// Component means, rows separated by `;` (blobs)
    #[arg(long, default_value = "0,0;5,5;-5,5", allow_hyphen_values = true)]
    means: String,
    /// Component std, one value or one per component (blobs)
    #[arg(long, default_value = "1")]
    std: String,
    /// Samples per component, one value or one per component (blobs)
    #[arg(long, default_value = "50")]
    count: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rescale features to zero mean and unit variance
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// kmeans, spectral, linear, linear-rim, kernel, kernel-rim, mlp or nonparametric
    #[arg(long)]
    model: ModelId,
    /// mi, rim or mmd-gemini (default: rim for *-rim models, mi otherwise)
    #[arg(long)]
    objective: Option<ObjectiveId>,
    /// linear, rbf or rbf:GAMMA (rbf bandwidth defaults to 1/(d * variance))
    #[arg(long)]
    kernel: Option<KernelChoice>,
    /// l2 weight of the rim objective (default 0.1 for *-rim models)
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long, default_value_t = discclust::models::DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = discclust::optim::DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = discclust::optim::DEFAULT_LEARNING_RATE)]
    lr: f64,
    /// Std of the initial weights (default depends on the model)
    #[arg(long)]
    init_scale: Option<f64>,
    /// k-means restarts
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    /// k-means iteration cap
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    /// k-means convergence tolerance on centroid movement
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
}

impl ModelArgs {
    fn run_config(&self, k: usize, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::new(self.model);
        cfg.n_clusters = k;
        cfg.seed = seed;
        if let Some(o) = self.objective {
            cfg.objective = o;
        }
        if self.kernel.is_some() {
            cfg.kernel = self.kernel;
        }
        if let Some(r) = self.reg {
            cfg.reg = r;
        }
        cfg.hidden = self.hidden;
        cfg.epochs = self.epochs;
        cfg.learning_rate = self.lr;
        cfg.init_scale = self.init_scale;
        cfg.n_init = self.n_init;
        cfg.max_iter = self.max_iter;
        cfg.tol = self.tol;
        cfg
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of clusters
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BoundaryArgs {
    /// model.json written by fit or contrastive (a report.json also works)
    #[arg(long, value_name = "JSON")]
    model: PathBuf,
    /// `LO,HI` for both axes or `X0LO,X0HI,X1LO,X1HI`
    #[arg(long, default_value = "-3,3", allow_hyphen_values = true)]
    bounds: String,
    /// Points per axis
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    /// K values: `A..B` (inclusive) or a comma list
    #[arg(long, default_value = "2..6")]
    k: String,
    /// Seeds: `A..B` (inclusive) or a comma list
    #[arg(long, default_value = "0")]
    seeds: String,
    #[arg(long, value_name = "CSV")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ContrastiveArgs {
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    /// rotation:LO:HI (radians) or noise:SIGMA
    #[arg(long, default_value = "rotation:0:6.283185307179586")]
    aug: Augmentation,
    #[arg(long, default_value_t = discclust::models::DEFAULT_HIDDEN)]
    hidden: usize,
    /// Output dimension, one per cluster
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = discclust::contrastive::DEFAULT_CONTRASTIVE_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = discclust::contrastive::DEFAULT_CONTRASTIVE_LEARNING_RATE)]
    lr: f64,
    #[arg(long)]
    init_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

mod lists {
    use discclust::Error;

    /// Parses `"a,b;c,d"` into rows.
    pub fn parse_matrix(s: &str) -> Result<Vec<Vec<f64>>, Error> {
        s.split(';')
            .map(parse_list)
            .collect()
    }

    pub fn parse_list(s: &str) -> Result<Vec<f64>, Error> {
        s.split(',')
            .map(|t| {
                let t = t.trim().replace('\u{2212}', "-");
                t.parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad number `{t}`")))
            })
            .collect()
    }
}

/// `A..B` inclusive or `a,b,c`.
fn parse_range(s: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::Parameter(format!("bad range `{s}` (expected A..B or a,b,c)"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) | Error::Dimension(_) | Error::Incompatible(_) => 2,
        Error::Degenerate(_) | Error::Numeric(_) => 3,
        Error::Io(_) | Error::Format(_) => 4,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn read_data(path: &Path) -> Result<DataMatrix, Error> {
    DataMatrix::read_csv(BufReader::new(File::open(path)?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_outcome(dir: &Path, outcome: &RunOutcome, extra: &[(&str, &Path)]) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    let mut report = outcome.report.clone();
    if let Some(serde_json::Value::Object(cfg)) = report.config.as_mut() {
        for (k, v) in extra {
            cfg.insert(k.to_string(), serde_json::Value::String(v.display().to_string()));
        }
    }
    write_json(&dir.join("report.json"), &report)?;
    write_json(&dir.join("model.json"), &outcome.model)?;
    let mut w = create(&dir.join("labels.csv"))?;
    writeln!(w, "label")?;
    for l in &report.labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn summary(report: &FitReport) -> String {
    let m = report.metrics.clone().unwrap_or_default();
    let show = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
    format!(
        "objective {}  ari {}  silhouette {}  kernel_kmeans_score {}",
        show(report.final_objective.or(report.history.last().copied())),
        show(m.ari),
        show(m.silhouette),
        show(m.kernel_kmeans_score)
    )
}

fn generate(a: &GenerateArgs) -> Result<(), Error> {
    let mut rng = Rng::new(a.seed);
    let data = match a.dataset {
        Dataset::Circles => make_circles(a.n, a.noise, a.factor, &mut rng)?,
        Dataset::Blobs => {
            let rows = lists::parse_matrix(&a.means)?;
            let (c, d) = (rows.len(), rows[0].len());
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::Parameter("blob means must all have the same length".into()));
            }
            let means = ndarray::Array2::from_shape_vec((c, d), rows.concat())
                .map_err(|e| Error::Parameter(e.to_string()))?;
            let broadcast = |v: Vec<f64>, what: &str| -> Result<Vec<f64>, Error> {
                match v.len() {
                    1 => Ok(vec![v[0]; c]),
                    l if l == c => Ok(v),
                    l => Err(Error::Parameter(format!("{l} {what} values for {c} components"))),
                }
            };
            let stds = broadcast(lists::parse_list(&a.std)?, "std")?;
            let counts: Vec<usize> = broadcast(lists::parse_list(&a.count)?, "count")?
                .into_iter()
                .map(|v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(Error::Parameter(format!("count must be a whole number, got {v}")))
                    }
                })
                .collect::<Result<_, _>>()?;
            make_gaussian_blobs(means.view(), &stds, &counts, &mut rng)?
        }
    };
    let data = if a.standardize { standardize(&data)? } else { data };
    let mut w = create(&a.out)?;
    data.write_csv(&mut w)?;
    eprintln!("wrote {} samples to {}", data.n_samples(), a.out.display());
    Ok(())
}

fn fit(a: &FitArgs) -> Result<(), Error> {
    let data = read_data(&a.data)?;
    let cfg = a.model.run_config(a.k, a.seed);
    let outcome = run_fit(&cfg, &data)?;
    write_outcome(&a.out, &outcome, &[("data", &a.data), ("out", &a.out)])?;
    println!("{}: {}", cfg.model, summary(&outcome.report));
    Ok(())
}

fn load_document(path: &Path) -> Result<ModelDocument, Error> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    let doc = match value.get("final_model") {
        Some(m) => m.clone(),
        None => value,
    };
    Ok(serde_json::from_value(doc)?)
}

fn boundary(a: &BoundaryArgs) -> Result<(), Error> {
    let doc = load_document(&a.model)?;
    let b = lists::parse_list(&a.bounds)?;
    let grid = match b[..] {
        [lo, hi] => GridSpec::square(lo, hi, a.resolution),
        [x0lo, x0hi, x1lo, x1hi] => GridSpec { x0: (x0lo, x0hi), x1: (x1lo, x1hi), resolution: a.resolution },
        _ => return Err(Error::Parameter(format!("bounds need 2 or 4 values, got {}", b.len()))),
    };
    let g = boundary_grid(&doc, &grid)?;
    let mut w = create(&a.out)?;
    g.write_csv(&mut w)?;
    eprintln!("wrote {} grid points to {}", g.values.len(), a.out.display());
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<(), Error> {
    let data = read_data(&a.data)?;
    let ks: Vec<usize> = parse_range(&a.k)?.into_iter().map(|k| k as usize).collect();
    let seeds = parse_range(&a.seeds)?;
    let rows = sweep(&a.model.run_config(2, 0), &ks, &seeds, &data)?;
    let mut w = create(&a.out)?;
    write_sweep_csv(&rows, &mut w)?;
    eprintln!("wrote {} configurations to {}", rows.len(), a.out.display());
    Ok(())
}

fn contrastive(a: &ContrastiveArgs) -> Result<(), Error> {
    let data = read_data(&a.data)?;
    let cfg = ContrastiveConfig {
        augmentation: a.aug,
        n_clusters: a.k,
        hidden: a.hidden,
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
        init_scale: a.init_scale,
    };
    let outcome = run_contrastive(&cfg, &data)?;
    write_outcome(&a.out, &outcome, &[("data", &a.data), ("out", &a.out)])?;
    println!("contrastive: {}", summary(&outcome.report));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(match e {
                config::ConfigError::Io(_) => 4,
                config::ConfigError::Syntax(_) => 2,
            });
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Fit(a) => fit(a),
        Command::Boundary(a) => boundary(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Contrastive(a) => contrastive(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
