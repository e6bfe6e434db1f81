use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use subspace_sketch::conclab::{verify_lemma_with, ExperimentConfig, LemmaId, RunOptions, Spectrum};
use subspace_sketch::estimator::{calibrate_constants, plan_sketch_dimension, rip_band, rip_estimate, CalibrationResult};
use subspace_sketch::io::{
    load_config, load_subspace, read_json, report_to_csv, report_to_svg, save_subspace, ManifestBuilder,
    PlanSection, RunConfigFile, VerifySection,
};
use subspace_sketch::rng::derive_seed;
use subspace_sketch::sketch::{apply, gaussian_operator};
use subspace_sketch::subspace::{generate_pair_with_angles, generate_random_subspace, pf_distance_direct, principal_angles};
use subspace_sketch::Error;

const THREADS_ENV: &str = "SUBSPACE_SKETCH_THREADS";

#[derive(Parser)]
#[command(name = "subspace-sketch", version, about = "Gaussian sketching of subspaces and its concentration checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one random subspace, or a pair with prescribed principal cosines.
    Gen(GenArgs),
    /// Principal angles, affinity and distance between two subspace files.
    Measure(MeasureArgs),
    /// Sketch subspace files with a seeded Gaussian operator.
    Sketch(SketchArgs),
    /// Monte Carlo failure rates of one concentration statement over an n grid.
    Verify(VerifyArgs),
    /// Smallest sketch dimension for L subspaces from a calibration file.
    Plan(PlanArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    ambient: usize,
    /// One dimension, or `d1,d2` for a pair.
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Principal cosines of the pair, non-increasing; one per dimension of the smaller subspace.
    #[arg(long, value_delimiter = ',', conflicts_with = "haar")]
    cosines: Option<Vec<f64>>,
    /// Independent Haar-random subspaces (the default without --cosines).
    #[arg(long)]
    haar: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write CSV instead of SSKM.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct MeasureArgs {
    x1: PathBuf,
    x2: PathBuf,
}

#[derive(Args)]
struct SketchArgs {
    /// One or two subspace files.
    #[arg(required = true, num_args = 1..=2)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Band half-width for the reported RIP interval.
    #[arg(long, default_value_t = 0.3)]
    epsilon: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// TOML file with a [verify] section; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lemma: Option<String>,
    #[arg(long)]
    ambient: Option<usize>,
    /// Grid of sketch dimensions.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    d1: Option<usize>,
    #[arg(long)]
    d2: Option<usize>,
    #[arg(long, value_delimiter = ',', conflicts_with = "haar")]
    cosines: Option<Vec<f64>>,
    #[arg(long)]
    haar: bool,
    /// Number of subspaces for set trials.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Offset t for singular value tails.
    #[arg(long)]
    tail_offset: Option<f64>,
    /// Worker cap; overrides SUBSPACE_SKETCH_THREADS. Never changes results.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Fitted constants for `plan`.
    #[arg(long)]
    out_calibration: Option<PathBuf>,
    /// Defaults to `<first output>.manifest.json`.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "L", alias = "l")]
    l: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Acceptable probability that some pair leaves the band.
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    calibration: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code(), message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Measure(a) => measure(a),
        Command::Sketch(a) => sketch(a),
        Command::Verify(a) => verify(a),
        Command::Plan(a) => plan(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn ext(csv: bool) -> &'static str {
    if csv {
        "csv"
    } else {
        "sskm"
    }
}

fn write_subspace(mb: &mut ManifestBuilder, path: &Path, x: &subspace_sketch::Subspace) -> CliResult {
    save_subspace(path, x)?;
    let bytes = std::fs::read(path).map_err(Error::from)?;
    mb.record(path, &bytes);
    Ok(())
}

fn gen(a: GenArgs) -> CliResult {
    let xs = match (a.dims.as_slice(), &a.cosines) {
        (&[d], None) => vec![generate_random_subspace(a.ambient, d, a.seed)?],
        (&[_], Some(_)) => return Err(usage("--cosines needs --dims d1,d2")),
        (&[d1, d2], None) => vec![
            generate_random_subspace(a.ambient, d1, derive_seed(a.seed, 1))?,
            generate_random_subspace(a.ambient, d2, derive_seed(a.seed, 2))?,
        ],
        (&[d1, d2], Some(c)) => {
            if c.len() != d1.min(d2) {
                return Err(usage(format!("--cosines has {} values, the smaller dimension is {}", c.len(), d1.min(d2))));
            }
            let (x1, x2, _) = generate_pair_with_angles(a.ambient, c, d1.max(d2), a.seed)?;
            if d1 <= d2 {
                vec![x1, x2]
            } else {
                vec![x2, x1]
            }
        }
        _ => return Err(usage("--dims takes one or two values")),
    };
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let config = json!({
        "ambient": a.ambient, "dims": a.dims, "cosines": a.cosines, "haar": a.cosines.is_none(), "seed": a.seed,
    });
    let mut mb = ManifestBuilder::start("gen", config, Some(a.seed));
    for (i, x) in xs.iter().enumerate() {
        let path = a.out.join(format!("x{}.{}", i + 1, ext(a.csv)));
        write_subspace(&mut mb, &path, x)?;
        println!("{}", path.display());
    }
    mb.finish_to(&a.out.join("manifest.json"))?;
    Ok(())
}

fn load(path: &Path) -> CliResult<subspace_sketch::Subspace> {
    load_subspace(path).map_err(|e| match e {
        Error::Parse(_) | Error::Io(_) => e.into(),
        other => Failure { code: 3, message: format!("{}: {other}", path.display()) },
    })
}

fn measure(a: MeasureArgs) -> CliResult {
    let (x1, x2) = (load(&a.x1)?, load(&a.x2)?);
    let g = principal_angles(&x1, &x2)?;
    let direct = pf_distance_direct(&x1, &x2)?;
    let direct_sq = direct * direct;
    let out = json!({
        "d1": g.d1,
        "d2": g.d2,
        "ambient": x1.ambient_dim(),
        "cosines": g.cosines,
        "angles": g.angles,
        "affinity_sq": g.affinity_sq,
        "distance_sq": g.distance_sq,
        "distance_sq_direct": direct_sq,
        "discrepancy": (g.distance_sq - direct_sq).abs(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    Ok(())
}

fn sketch(a: SketchArgs) -> CliResult {
    let xs = a.inputs.iter().map(|p| load(p)).collect::<CliResult<Vec<_>>>()?;
    let ambient = xs[0].ambient_dim();
    if let Some(x) = xs.iter().find(|x| x.ambient_dim() != ambient) {
        return Err(Error::DimensionMismatch(format!("ambient dimensions {ambient} and {}", x.ambient_dim())).into());
    }
    let max_dim = xs.iter().map(|x| x.dim()).max().unwrap_or(0);
    if a.n <= max_dim || a.n >= ambient {
        return Err(usage(format!("--n must satisfy {max_dim} < n < {ambient}, got {}", a.n)));
    }
    let op = gaussian_operator(a.n, ambient, a.seed)?;
    let ys = xs.iter().map(|x| apply(&op, x)).collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let config = json!({"inputs": a.inputs, "n": a.n, "seed": a.seed, "epsilon": a.epsilon});
    let mut mb = ManifestBuilder::start("sketch", config, Some(a.seed));
    for (i, y) in ys.iter().enumerate() {
        write_subspace(&mut mb, &a.out.join(format!("y{}.{}", i + 1, ext(a.csv))), y)?;
    }
    let mut record = json!({"n": a.n, "seed": a.seed, "ambient": ambient, "dims": xs.iter().map(|x| x.dim()).collect::<Vec<_>>()});
    if let [x1, x2] = xs.as_slice() {
        let before = principal_angles(x1, x2)?;
        let after = principal_angles(&ys[0], &ys[1])?;
        let (d1, d2) = (before.d1, before.d2);
        let est = rip_estimate(before.affinity_sq.clamp(0.0, d1 as f64), d1, d2, a.n, a.epsilon)?;
        let band = rip_band(before.distance_sq, a.epsilon)?;
        record["before"] = serde_json::to_value(&before).expect("json");
        record["after"] = serde_json::to_value(&after).expect("json");
        record["estimate"] = json!({
            "affinity_sq": est.oaff_sq,
            "distance_sq": est.od_sq,
            "affinity_slack": est.slack,
            "affinity_error": (after.affinity_sq - est.oaff_sq).abs(),
            "distance_error": (after.distance_sq - est.od_sq).abs(),
            "within_slack": (after.affinity_sq - est.oaff_sq).abs() <= est.slack,
        });
        record["rip_band"] = json!({"epsilon": a.epsilon, "lo": band.0, "hi": band.1,
            "inside": after.distance_sq >= band.0 && after.distance_sq <= band.1});
    }
    let text = serde_json::to_string_pretty(&record).expect("json") + "\n";
    mb.write(&a.out.join("sketch.json"), text.as_bytes())?;
    mb.finish_to(&a.out.join("manifest.json"))?;
    print!("{text}");
    Ok(())
}

fn env_threads() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

fn read_config(path: &Option<PathBuf>) -> CliResult<RunConfigFile> {
    Ok(match path {
        Some(p) => load_config(p)?,
        None => RunConfigFile::default(),
    })
}

/// Flags over config file over defaults.
fn resolve_verify(a: &VerifyArgs, file: VerifySection) -> CliResult<ExperimentConfig> {
    let lemma_text = a.lemma.clone().or(file.lemma).unwrap_or_else(|| "thm2".into());
    let lemma: LemmaId = lemma_text.parse().map_err(|e: Error| usage(e.to_string()))?;
    let cosines = if a.haar { None } else { a.cosines.clone().or(file.cosines.filter(|_| file.haar != Some(true))) };
    let d2 = a.d2.or(file.d2).unwrap_or(4);
    let d1 = match &cosines {
        Some(c) => c.len(),
        None => a.d1.or(file.d1).unwrap_or(d2),
    };
    if let (Some(c), Some(d)) = (&cosines, a.d1.or(file.d1)) {
        if c.len() != d {
            return Err(usage(format!("{} cosines given but d1 = {d}", c.len())));
        }
    }
    Ok(ExperimentConfig {
        ambient: a.ambient.or(file.ambient).unwrap_or(512),
        n_grid: a.n.clone().or(file.n).unwrap_or_else(|| vec![16, 24, 32, 48]),
        d1,
        d2,
        spectrum: match cosines {
            Some(cosines) => Spectrum::Prescribed { cosines },
            None => Spectrum::Haar,
        },
        l_count: a.l.or(file.l).unwrap_or(2),
        epsilon: a.epsilon.or(file.epsilon).unwrap_or(0.1),
        trials: a.trials.or(file.trials).unwrap_or(2000),
        master_seed: a.seed.or(file.seed).unwrap_or(0),
        lemma,
        tail_offset: a.tail_offset.or(file.tail_offset).unwrap_or(0.0),
    })
}

fn verify(a: VerifyArgs) -> CliResult {
    let file = read_config(&a.config)?.verify;
    let threads = match a.threads.or(file.threads) {
        Some(0) => return Err(usage("--threads must be positive")),
        Some(t) => Some(t),
        None => env_threads()?,
    };
    let config = resolve_verify(&a, file)?;
    let report = verify_lemma_with(&config, RunOptions { threads })?;

    let csv = report_to_csv(&report);
    let mut mb = ManifestBuilder::start("verify", serde_json::to_value(&config).expect("json"), Some(config.master_seed));
    let outputs: Vec<(&Option<PathBuf>, Vec<u8>)> = vec![
        (&a.out_csv, csv.clone().into_bytes()),
        (&a.out_svg, report_to_svg(&report).into_bytes()),
        (&a.out_json, (serde_json::to_string_pretty(&report).expect("json") + "\n").into_bytes()),
        (
            &a.out_calibration,
            (serde_json::to_string_pretty(&calibrate_constants(&report)).expect("json") + "\n").into_bytes(),
        ),
    ];
    let mut first = None;
    for (path, bytes) in outputs {
        if let Some(p) = path {
            mb.write(p, &bytes)?;
            first.get_or_insert_with(|| p.clone());
        }
    }
    match a.manifest.clone().or_else(|| first.map(|p| PathBuf::from(format!("{}.manifest.json", p.display())))) {
        Some(m) => {
            mb.finish_to(&m)?;
        }
        None => {}
    }
    if a.out_csv.is_none() {
        print!("{csv}");
    } else {
        for c in &report.cells {
            eprintln!("n={} p_hat={} ({}/{})", c.n, c.p_hat, c.failures, c.valid);
        }
    }
    Ok(())
}

fn plan(a: PlanArgs) -> CliResult {
    let file: PlanSection = read_config(&a.config)?.plan;
    let missing = |flag: &str| usage(format!("missing --{flag}"));
    let d = a.d.or(file.d).ok_or_else(|| missing("d"))?;
    let l = a.l.or(file.l).unwrap_or(1);
    let epsilon = a.epsilon.or(file.epsilon).ok_or_else(|| missing("epsilon"))?;
    let target = a.target.or(file.target).ok_or_else(|| missing("target"))?;
    let cal_path = a.calibration.or(file.calibration).ok_or_else(|| missing("calibration"))?;
    let cal: CalibrationResult = read_json(&cal_path)?;
    let plan = plan_sketch_dimension(d, l, epsilon, target, &cal)?;
    println!("{}", serde_json::to_string(&plan).expect("json"));
    Ok(())
}
