//! Command-line front end for the lotkit library: barycentric-coding
//! analysis/synthesis on measure files, the synthetic covariance experiment,
//! occluded-image reconstruction, and the representational-capacity suites.
//! Every subcommand reads one JSON config and writes CSV/JSON results; with a
//! fixed seed the outputs are byte-identical across runs.

use clap::{Parser, Subcommand};
use lotkit::capacity;
use lotkit::eot::epsilon_schedule;
use lotkit::exact_ot::{discrete_w2, w2_1d, Quantile1D};
use lotkit::gaussian_bw::{
    experiment_rows_to_csv, run_covariance_experiment, CovExperimentConfig, CovMethod, MleConfig,
};
use lotkit::imaging::{
    base_image, image_to_measure, occlude, read_idx_images, reconstruct, write_pgm, BaseImageKind,
    GridImage, OcclusionBlock, RasterConfig, Reconstruction, ReconstructionMethod,
    ReconstructionParams,
};
use lotkit::lbcm::{build_gram, fit_problem, synthesize, AnalysisConfig};
use lotkit::measures::{DiscreteMeasure, SimplexWeights};
use lotkit::sampling::{derive_seed, rng_from_seed};
use lotkit::simplex_opt::min_quadratic_simplex;
use lotkit::w2bcm::BarycenterConfig;
use rand::RngExt;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

// ---------------------------------------------------------------------------
// errors and exit codes

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

enum AppError {
    /// Bad flags, bad config schema, missing or malformed input files.
    Config(String),
    /// The computation itself failed (solver divergence, degenerate data...).
    Numeric(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AppError::Config(_) => "config",
            AppError::Numeric(_) => "numeric",
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Numeric(m) => m,
        }
    }
}

type AppResult<T> = Result<T, AppError>;

/// Tags an error raised while loading configuration or input files.
fn cfg<T, E: std::fmt::Display>(r: Result<T, E>) -> AppResult<T> {
    r.map_err(|e| AppError::Config(e.to_string()))
}

/// Tags an error raised by the numerical computation itself.
fn num<T, E: std::fmt::Display>(r: Result<T, E>) -> AppResult<T> {
    r.map_err(|e| AppError::Numeric(e.to_string()))
}

// ---------------------------------------------------------------------------
// command line

#[derive(Parser)]
#[command(
    name = "lotkit-cli",
    about = "Barycentric coding of measures: analysis, synthesis, and experiment runners",
    after_help = "Each subcommand reads a JSON config (see README for schemas) and writes its \
results under --out. All randomness flows from the seed, and repeated runs with the same \
config and seed produce byte-identical outputs. Exit codes: 0 success, 2 config/input \
error, 3 numerical failure; errors are reported as JSON on stderr."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed field.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if absent).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Coordinate estimation / synthesis over measure CSV files.
    Lbcm,
    /// Synthetic covariance-estimation benchmark.
    CovExperiment,
    /// Occluded-image reconstruction over image files.
    Digits,
    /// 1D density check and the 2D gap suite.
    Capacity,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            report(&AppError::Config(e.to_string()));
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            report(&err);
            ExitCode::from(err.code())
        }
    }
}

fn report(err: &AppError) {
    let doc = serde_json::json!({
        "error": {
            "code": err.code(),
            "kind": err.kind(),
            "message": err.message(),
        }
    });
    eprintln!("{doc}");
}

fn dispatch(cli: &Cli) -> AppResult<()> {
    check_thread_env()?;
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::Config("--config <path> is required".into()))?;
    let raw = cfg(std::fs::read_to_string(config_path)
        .map_err(|e| format!("cannot read config {}: {e}", config_path.display())))?;
    cfg(std::fs::create_dir_all(&cli.out)
        .map_err(|e| format!("cannot create output dir {}: {e}", cli.out.display())))?;
    match cli.command {
        Command::Lbcm => cmd_lbcm(&raw, cli),
        Command::CovExperiment => cmd_cov_experiment(&raw, cli),
        Command::Digits => cmd_digits(&raw, cli),
        Command::Capacity => cmd_capacity(&raw, cli),
    }
}

/// LOTKIT_THREADS caps internal parallelism. The implementation is
/// single-threaded, so any positive value is accepted and the effective
/// parallelism is 1; non-positive or non-numeric values are config errors.
fn check_thread_env() -> AppResult<()> {
    match std::env::var("LOTKIT_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(()),
        Err(e) => Err(AppError::Config(format!("LOTKIT_THREADS: {e}"))),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(v) if v >= 1 => Ok(()),
            _ => Err(AppError::Config(format!(
                "LOTKIT_THREADS must be a positive integer, got {s:?}"
            ))),
        },
    }
}

fn parse_config<'a, T: Deserialize<'a>>(raw: &'a str) -> AppResult<T> {
    serde_json::from_str(raw).map_err(|e| AppError::Config(format!("config: {e}")))
}

fn write_out(dir: &Path, name: &str, contents: &str) -> AppResult<()> {
    cfg(std::fs::write(dir.join(name), contents)
        .map_err(|e| format!("cannot write {name}: {e}")))
}

fn float_cell(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// lbcm

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum LbcmConfigFile {
    /// Estimate the simplex coordinates of a target over references.
    Analyze {
        base: PathBuf,
        refs: Vec<PathBuf>,
        target: PathBuf,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default = "default_qp_tol")]
        qp_tol: f64,
    },
    /// Push the base forward through a fixed convex combination of maps.
    Synthesize {
        base: PathBuf,
        refs: Vec<PathBuf>,
        lambda: Vec<f64>,
        #[serde(default)]
        epsilon: Option<f64>,
    },
}

fn default_qp_tol() -> f64 {
    1e-9
}

fn load_measure(path: &Path) -> AppResult<DiscreteMeasure> {
    cfg(DiscreteMeasure::from_csv_path(path)
        .map_err(|e| format!("measure {}: {e}", path.display())))
}

fn load_measures(paths: &[PathBuf]) -> AppResult<Vec<DiscreteMeasure>> {
    paths.iter().map(|p| load_measure(p)).collect()
}

/// Default epsilon: the sample-size schedule at the smallest participating
/// atom count (the base contributes its fitting half).
fn default_epsilon(base: &DiscreteMeasure, others: &[&DiscreteMeasure]) -> f64 {
    let n = others
        .iter()
        .map(|m| m.len())
        .chain([(base.len() / 2).max(1)])
        .min()
        .unwrap_or(1);
    epsilon_schedule(n, base.dim(), 3.0)
}

fn cmd_lbcm(raw: &str, cli: &Cli) -> AppResult<()> {
    match parse_config::<LbcmConfigFile>(raw)? {
        LbcmConfigFile::Analyze {
            base,
            refs,
            target,
            epsilon,
            qp_tol,
        } => {
            let base_m = load_measure(&base)?;
            let ref_ms = load_measures(&refs)?;
            let target_m = load_measure(&target)?;
            let mut participants: Vec<&DiscreteMeasure> = ref_ms.iter().collect();
            participants.push(&target_m);
            let eps = epsilon.unwrap_or_else(|| default_epsilon(&base_m, &participants));
            let mut acfg = AnalysisConfig::new(eps);
            acfg.qp_tol = qp_tol;
            let problem = num(fit_problem(&base_m, &ref_ms, Some(&target_m), &acfg))?;
            let gram = num(build_gram(&problem))?;
            let qp = num(min_quadratic_simplex(&gram, qp_tol))?;
            let mut gram_csv = String::new();
            for i in 0..gram.nrows() {
                let row: Vec<String> = (0..gram.ncols())
                    .map(|j| float_cell(gram[(i, j)]))
                    .collect();
                gram_csv.push_str(&row.join(","));
                gram_csv.push('\n');
            }
            write_out(&cli.out, "gram.csv", &gram_csv)?;
            let doc = serde_json::json!({
                "lambda": qp.lambda,
                "objective": qp.objective,
                "certificate_gap": qp.certificate_gap,
                "degenerate": qp.degenerate,
                "epsilon": eps,
            });
            write_out(&cli.out, "lambda.json", &format!("{doc}\n"))
        }
        LbcmConfigFile::Synthesize {
            base,
            refs,
            lambda,
            epsilon,
        } => {
            let base_m = load_measure(&base)?;
            let ref_ms = load_measures(&refs)?;
            let lam = cfg(SimplexWeights::new(lambda))?;
            let participants: Vec<&DiscreteMeasure> = ref_ms.iter().collect();
            let eps = epsilon.unwrap_or_else(|| default_epsilon(&base_m, &participants));
            let acfg = AnalysisConfig::new(eps);
            let problem = num(fit_problem(&base_m, &ref_ms, None, &acfg))?;
            let synth = num(synthesize(&lam, &problem))?;
            write_out(&cli.out, "synthesis.csv", &synth.to_csv_string())
        }
    }
}

// ---------------------------------------------------------------------------
// cov-experiment

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CovConfigFile {
    #[serde(default = "default_cov_m")]
    m: usize,
    #[serde(default = "default_cov_d")]
    d: usize,
    #[serde(default = "default_cov_n_grid")]
    n_grid: Vec<usize>,
    #[serde(default = "default_cov_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_cov_methods")]
    methods: Vec<String>,
    /// Wall-time column is excluded by default so outputs stay byte-stable.
    #[serde(default)]
    include_timing: bool,
    #[serde(default = "default_fp_iters")]
    barycenter_fp_iters: usize,
    #[serde(default = "default_qp_tol")]
    qp_tol: f64,
    #[serde(default)]
    mle: Option<MleJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MleJson {
    eta: Option<f64>,
    max_iters: Option<usize>,
    fp_iters: Option<usize>,
    sq_iters: Option<usize>,
    fd_step: Option<f64>,
}

fn default_cov_m() -> usize {
    10
}
fn default_cov_d() -> usize {
    10
}
fn default_cov_n_grid() -> Vec<usize> {
    vec![100, 1000, 10000]
}
fn default_cov_trials() -> usize {
    10
}
fn default_cov_methods() -> Vec<String> {
    vec!["empirical".into(), "bcm".into(), "lbcm".into(), "mle".into()]
}
fn default_fp_iters() -> usize {
    100
}

fn parse_method(s: &str) -> AppResult<CovMethod> {
    match s {
        "empirical" => Ok(CovMethod::Empirical),
        "bcm" => Ok(CovMethod::Bcm),
        "lbcm" => Ok(CovMethod::Lbcm),
        "mle" => Ok(CovMethod::Mle),
        other => Err(AppError::Config(format!(
            "unknown method {other:?}; expected empirical, bcm, lbcm or mle"
        ))),
    }
}

fn cmd_cov_experiment(raw: &str, cli: &Cli) -> AppResult<()> {
    let file: CovConfigFile = parse_config(raw)?;
    let methods = file
        .methods
        .iter()
        .map(|s| parse_method(s))
        .collect::<AppResult<Vec<_>>>()?;
    let mut mle = MleConfig::default();
    if let Some(m) = &file.mle {
        if let Some(v) = m.eta {
            mle.eta = v;
        }
        if let Some(v) = m.max_iters {
            mle.max_iters = v;
        }
        if let Some(v) = m.fp_iters {
            mle.fp_iters = v;
        }
        if let Some(v) = m.sq_iters {
            mle.sq_iters = v;
        }
        if let Some(v) = m.fd_step {
            mle.fd_step = v;
        }
    }
    let exp = CovExperimentConfig {
        m: file.m,
        d: file.d,
        n_grid: file.n_grid,
        trials: file.trials,
        seed: cli.seed.unwrap_or(file.seed),
        methods,
        mle,
        barycenter_fp_iters: file.barycenter_fp_iters,
        qp_tol: file.qp_tol,
    };
    let rows = num(run_covariance_experiment(&exp))?;
    write_out(
        &cli.out,
        "covariance.csv",
        &experiment_rows_to_csv(&rows, file.include_timing),
    )
}

// ---------------------------------------------------------------------------
// digits

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DigitsConfigFile {
    refs: Vec<ImageSourceJson>,
    targets: Vec<ImageSourceJson>,
    #[serde(default = "default_digit_methods")]
    methods: Vec<String>,
    /// Base image file for the map-space method; overrides `base_kind`.
    #[serde(default)]
    base: Option<ImageSourceJson>,
    #[serde(default = "default_base_kind")]
    base_kind: String,
    #[serde(default)]
    block: Option<BlockJson>,
    #[serde(default)]
    raster: Option<RasterJson>,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default = "default_subsample_cap")]
    subsample_cap: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    barycenter: Option<BarycenterJson>,
    /// Wall-time column is excluded by default so outputs stay byte-stable.
    #[serde(default)]
    include_timing: bool,
    /// Also write a PGM preview next to each reconstruction CSV.
    #[serde(default)]
    write_pgm: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageSourceJson {
    path: PathBuf,
    /// Image index inside an IDX container; ignored for CSV files.
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockJson {
    row0: usize,
    col0: usize,
    height: usize,
    width: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RasterJson {
    out_size: Option<usize>,
    resolution: Option<usize>,
    bandwidth: Option<f64>,
    lower_bound: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BarycenterJson {
    alpha: Option<f64>,
    k: Option<usize>,
}

fn default_digit_methods() -> Vec<String> {
    vec!["lbcm".into(), "w2bcm".into(), "linear".into()]
}
fn default_base_kind() -> String {
    "uniform".into()
}
fn default_subsample_cap() -> usize {
    1500
}

fn load_image(src: &ImageSourceJson) -> AppResult<GridImage> {
    let is_csv = src
        .path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return cfg(GridImage::from_csv_path(&src.path)
            .map_err(|e| format!("image {}: {e}", src.path.display())));
    }
    let images = cfg(read_idx_images(&src.path)
        .map_err(|e| format!("idx {}: {e}", src.path.display())))?;
    let idx = src.index.unwrap_or(0);
    images.into_iter().nth(idx).ok_or_else(|| {
        AppError::Config(format!(
            "idx {}: index {idx} out of range",
            src.path.display()
        ))
    })
}

fn cmd_digits(raw: &str, cli: &Cli) -> AppResult<()> {
    let file: DigitsConfigFile = parse_config(raw)?;
    if file.refs.is_empty() || file.targets.is_empty() {
        return Err(AppError::Config(
            "digits config needs at least one reference and one target".into(),
        ));
    }
    let refs: Vec<GridImage> = file
        .refs
        .iter()
        .map(load_image)
        .collect::<AppResult<Vec<_>>>()?;
    let targets: Vec<GridImage> = file
        .targets
        .iter()
        .map(load_image)
        .collect::<AppResult<Vec<_>>>()?;
    let d = refs[0].size();
    if refs
        .iter()
        .chain(&targets)
        .any(|img| img.size() != d)
    {
        return Err(AppError::Config(
            "all reference and target images must share one size".into(),
        ));
    }

    let mut params = ReconstructionParams::new(cli.seed.unwrap_or(file.seed));
    params.block = match &file.block {
        Some(b) => OcclusionBlock {
            row0: b.row0,
            col0: b.col0,
            height: b.height,
            width: b.width,
        },
        None => OcclusionBlock::central(d, 10),
    };
    let mut raster = RasterConfig {
        out_size: d,
        ..RasterConfig::default()
    };
    if let Some(r) = &file.raster {
        if let Some(v) = r.out_size {
            raster.out_size = v;
        }
        if let Some(v) = r.resolution {
            raster.resolution = v;
        }
        if let Some(v) = r.bandwidth {
            raster.bandwidth = v;
        }
        if let Some(v) = r.lower_bound {
            raster.lower_bound = v;
        }
    }
    params.raster = raster;
    params.epsilon = file.epsilon;
    params.subsample_cap = file.subsample_cap;
    if let Some(b) = &file.barycenter {
        let mut bc = BarycenterConfig::default();
        if let Some(v) = b.alpha {
            bc.alpha = v;
        }
        if let Some(v) = b.k {
            bc.k = v;
        }
        params.barycenter = bc;
    }

    let base = match &file.base {
        Some(src) => load_image(src)?,
        None => {
            let kind: BaseImageKind = cfg(file.base_kind.parse())?;
            cfg(base_image(kind, d))?
        }
    };
    if base.size() != d {
        return Err(AppError::Config(
            "base image must share the reference size".into(),
        ));
    }

    let methods: Vec<(String, ReconstructionMethod)> = file
        .methods
        .iter()
        .map(|name| match name.as_str() {
            "lbcm" => Ok((
                name.clone(),
                ReconstructionMethod::Lbcm { base: base.clone() },
            )),
            "w2bcm" => Ok((name.clone(), ReconstructionMethod::W2bcm)),
            "linear" => Ok((name.clone(), ReconstructionMethod::Linear)),
            other => Err(AppError::Config(format!(
                "unknown method {other:?}; expected lbcm, w2bcm or linear"
            ))),
        })
        .collect::<AppResult<_>>()?;

    let mut metrics = String::from(if file.include_timing {
        "target,method,w2_sq,lambda,wall_time_ms\n"
    } else {
        "target,method,w2_sq,lambda\n"
    });
    let base_seed = params.seed;
    for (t, target) in targets.iter().enumerate() {
        let occluded = num(occlude(target, &params.block))?;
        let target_measure = num(image_to_measure(target))?;
        for (name, method) in &methods {
            let mut p = params.clone();
            p.seed = derive_seed(base_seed, t as u64);
            let start = std::time::Instant::now();
            let Reconstruction { image, lambda } =
                num(reconstruct(method, &occluded, &refs, &p))?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let recon_measure = num(image_to_measure(&image))?;
            let (plan, _) = num(discrete_w2(&recon_measure, &target_measure))?;
            let lambda_str: Vec<String> = lambda.iter().map(|v| float_cell(*v)).collect();
            metrics.push_str(&format!("{t},{name},{}", float_cell(plan.cost())));
            metrics.push_str(&format!(",{}", lambda_str.join(";")));
            if file.include_timing {
                metrics.push_str(&format!(",{}", float_cell(wall_ms)));
            }
            metrics.push('\n');
            let stem = format!("recon_t{t}_{name}");
            write_out(&cli.out, &format!("{stem}.csv"), &image.to_csv_string())?;
            if file.write_pgm {
                num(write_pgm(&image, cli.out.join(format!("{stem}.pgm"))))?;
            }
        }
    }
    write_out(&cli.out, "metrics.csv", &metrics)
}

// ---------------------------------------------------------------------------
// capacity

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
enum CapacityConfigFile {
    /// Per target measure and grid size: synthesize the coefficient encoding
    /// of the target's quantile map and report the W2 error.
    OneD {
        targets: Vec<PathBuf>,
        #[serde(default = "default_grids")]
        grids: Vec<usize>,
        /// Base grid for synthesis; defaults to each row's coefficient grid,
        /// which keeps the encoding exact at the grid points.
        #[serde(default)]
        n_base: Option<usize>,
    },
    /// Monte-Carlo gap of random vertex-map combinations against the
    /// gradient of the separating potential, plus an optional search.
    TwoD {
        #[serde(default = "default_combos")]
        combos: usize,
        #[serde(default = "default_max_atoms")]
        max_atoms: usize,
        #[serde(default = "default_n_mc")]
        n_mc: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        search: Option<SearchJson>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchJson {
    #[serde(default = "default_search_atoms")]
    max_atoms: usize,
    #[serde(default = "default_restarts")]
    restarts: usize,
    #[serde(default = "default_n_mc_search")]
    n_mc_search: usize,
    #[serde(default = "default_n_mc")]
    n_mc_final: usize,
}

fn default_grids() -> Vec<usize> {
    vec![50, 200]
}
fn default_combos() -> usize {
    200
}
fn default_max_atoms() -> usize {
    50
}
fn default_n_mc() -> usize {
    200_000
}
fn default_search_atoms() -> usize {
    30
}
fn default_restarts() -> usize {
    100
}
fn default_n_mc_search() -> usize {
    4000
}

fn cmd_capacity(raw: &str, cli: &Cli) -> AppResult<()> {
    match parse_config::<CapacityConfigFile>(raw)? {
        CapacityConfigFile::OneD {
            targets,
            grids,
            n_base,
        } => {
            if targets.is_empty() || grids.is_empty() {
                return Err(AppError::Config(
                    "1D capacity needs at least one target and one grid size".into(),
                ));
            }
            let mut out = String::from("target,grid,w2_error\n");
            for path in &targets {
                let target = load_measure(path)?;
                if target.dim() != 1 {
                    return Err(AppError::Config(format!(
                        "target {} must be 1D",
                        path.display()
                    )));
                }
                if target
                    .support()
                    .iter()
                    .any(|p| !(0.0..=1.0).contains(&p[0]))
                {
                    return Err(AppError::Config(format!(
                        "target {} must be supported on [0, 1]",
                        path.display()
                    )));
                }
                let quant = cfg(Quantile1D::new(&target))?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                for &g in &grids {
                    let map = num(capacity::MonotoneMap1D::from_fn(g, |x| quant.eval(x)))?;
                    let coeff = num(capacity::coeff_measure_from_map(&map))?;
                    let synth =
                        num(capacity::lbcm_1d_synthesize(&coeff, n_base.unwrap_or(g)))?;
                    let err = num(w2_1d(&synth, &target))?;
                    out.push_str(&format!("{name},{g},{}\n", float_cell(err)));
                }
            }
            write_out(&cli.out, "capacity_1d.csv", &out)
        }
        CapacityConfigFile::TwoD {
            combos,
            max_atoms,
            n_mc,
            seed,
            search,
        } => {
            if combos == 0 {
                return Err(AppError::Config(
                    "2D capacity needs at least one combination".into(),
                ));
            }
            if max_atoms == 0 {
                return Err(AppError::Config("max_atoms must be at least 1".into()));
            }
            let seed = cli.seed.unwrap_or(seed);
            let mut out = String::from("combo,n_atoms,gap,stderr,bound\n");
            let bound = capacity::GAP_LOWER_BOUND;
            for c in 0..combos {
                let combo_seed = derive_seed(seed, c as u64);
                let n_atoms = rng_from_seed(derive_seed(combo_seed, 0))
                    .random_range(1..=max_atoms);
                let combo = num(capacity::random_combo(n_atoms, combo_seed))?;
                let (gap, stderr) =
                    num(capacity::counterexample_gap(&combo, n_mc, derive_seed(combo_seed, 3)))?;
                out.push_str(&format!(
                    "{c},{n_atoms},{},{},{}\n",
                    float_cell(gap),
                    float_cell(stderr),
                    float_cell(bound)
                ));
            }
            write_out(&cli.out, "capacity_2d.csv", &out)?;
            if let Some(s) = search {
                let res = num(capacity::search_min_gap(
                    s.max_atoms,
                    s.restarts,
                    s.n_mc_search,
                    s.n_mc_final,
                    derive_seed(seed, 0xC0FFEE),
                ))?;
                let doc = serde_json::json!({
                    "gap": res.gap,
                    "stderr": res.stderr,
                    "n_atoms": res.combo.len(),
                    "bound": bound,
                    "below_bound": res.gap < bound - 3.0 * res.stderr,
                });
                write_out(&cli.out, "search.json", &format!("{doc}\n"))?;
            }
            Ok(())
        }
    }
}
