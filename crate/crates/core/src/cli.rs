//! The `predaug` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_dataset, Schema};
use crate::error::{Error, ErrorKind, Result};
use crate::harness::{ladder_csv, noise_ladder, run_sweep, write_file, Method, SimConfig};
use crate::paq::{rate_probe, Boundary, DerivBound, PositionMap, QuadratureConfig, ResidualFamily};
use crate::part_mean::part_mean_ci;
use crate::part_regression::part_ols_ci;
use crate::report::EstimateReport;
use crate::tree::{LeafSummary, Tree, TreeConfig};

#[derive(Debug, Parser)]
#[command(name = "predaug", version, about = "Prediction-augmented estimates and confidence intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate E[Y] from labeled rows, unlabeled rows and predictions.
    EstimateMean(MeanArgs),
    /// Estimate one OLS coefficient of Y on the features.
    EstimateOls(OlsArgs),
    /// Run a replication sweep described by a config file.
    Simulate(SimArgs),
    /// Monte Carlo bias and variance rates of the quadrature residual term.
    RateProbe(RateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeanMethod {
    Empirical,
    Ppi,
    #[value(name = "ppi++")]
    PpiPlusPlus,
    Part,
    Coord,
    Paq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundaryArg {
    Constant,
    Extrapolate,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file; rows with an empty label cell are unlabeled.
    #[arg(long)]
    data: PathBuf,
    /// Column roles, e.g. "features=x1,x2;label=y;prediction=f".
    #[arg(long)]
    schema: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Accepted for uniformity; the estimators are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct MeanArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: MeanMethod,
    /// Maximum tree depth for --method part.
    #[arg(long, default_value_t = 1)]
    depth: usize,
    /// Minimum labeled points per leaf for --method part.
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    /// Binary feature index (0-based) for --method coord.
    #[arg(long, default_value_t = 0)]
    coord: usize,
    #[arg(long, default_value_t = 1)]
    paq_degree: usize,
    /// "L1,L2" for degree 1, "L" for degree p > 1 (position scale).
    #[arg(long)]
    deriv_bounds: Option<String>,
    /// "pit" (empirical CDF) or "affine:LO:HI".
    #[arg(long, default_value = "pit")]
    positions: String,
    /// Boundary treatment; defaults to constant for degree 1.
    #[arg(long, value_enum)]
    boundary: Option<BoundaryArg>,
    /// Write the fitted tree here ("-" appends it to standard output).
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OlsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Coefficient index (0-based).
    #[arg(long)]
    coef: usize,
    #[arg(long, default_value_t = 1)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    #[arg(long)]
    dump_tree: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output prefix.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct RateArgs {
    /// "sine(cycles=1)", "poly(c0,c1,...)" or "exp(rate=1)".
    #[arg(long, default_value = "sine(cycles=1)")]
    family: String,
    #[arg(long, default_value_t = 1)]
    degree: usize,
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

/// Process exit status for an error.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numerical => 4,
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(e.kind())
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::EstimateMean(a) => estimate_mean(a, out),
        Command::EstimateOls(a) => estimate_ols(a, out),
        Command::Simulate(a) => simulate(a, out),
        Command::RateProbe(a) => probe(a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
}

fn render(report: &EstimateReport, format: Format) -> String {
    match format {
        Format::Json => format!("{}\n", report.to_json()),
        Format::Csv => format!("{}\n{}\n", EstimateReport::CSV_HEADER, report.to_csv_row()),
    }
}

fn dump<L: LeafSummary>(tree: &Tree<L>, dest: &Path, out: &mut dyn Write) -> Result<()> {
    if dest == Path::new("-") {
        emit(out, &tree.dump())
    } else {
        write_file(dest, &tree.dump())
    }
}

fn parse_schema(text: &str) -> Result<Schema> {
    text.parse()
}

fn parse_bounds(text: &str, degree: usize, boundary: Boundary) -> Result<DerivBound> {
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::invalid(format!("--deriv-bounds expects numbers, got '{text}'")))?;
    match (boundary, values.as_slice()) {
        (Boundary::Constant, [first, second]) => Ok(DerivBound::Trapezoid { first: *first, second: *second }),
        (Boundary::Extrapolate, [top]) => Ok(DerivBound::Lagrange { top: *top }),
        (Boundary::Constant, _) => Err(Error::invalid("--deriv-bounds needs \"L1,L2\" for degree 1")),
        (Boundary::Extrapolate, _) => Err(Error::invalid(format!(
            "--deriv-bounds needs one bound on derivative {} for extrapolated blocks",
            degree + 1
        ))),
    }
}

fn parse_positions(text: &str) -> Result<PositionMap> {
    if text == "pit" {
        return Ok(PositionMap::EmpiricalCdf);
    }
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["affine", lo, hi] => {
            let lo = lo.parse().map_err(|_| Error::invalid(format!("bad lower bound in '{text}'")))?;
            let hi = hi.parse().map_err(|_| Error::invalid(format!("bad upper bound in '{text}'")))?;
            Ok(PositionMap::Affine { lo, hi })
        }
        _ => Err(Error::invalid(format!("--positions expects pit or affine:LO:HI, got '{text}'"))),
    }
}

fn estimate_mean(a: MeanArgs, out: &mut dyn Write) -> Result<()> {
    let schema = parse_schema(&a.data.schema)?;
    // Validate method flags before touching the data.
    let paq_cfg = if a.method == MeanMethod::Paq {
        let mut cfg = QuadratureConfig::new(a.paq_degree);
        if let Some(b) = a.boundary {
            cfg = cfg.with_boundary(match b {
                BoundaryArg::Constant => Boundary::Constant,
                BoundaryArg::Extrapolate => Boundary::Extrapolate,
            });
        }
        cfg = cfg.with_positions(parse_positions(&a.positions)?);
        let text = a
            .deriv_bounds
            .as_deref()
            .ok_or_else(|| Error::MissingBound("--method paq requires --deriv-bounds".into()))?;
        cfg = cfg.with_bound(parse_bounds(text, cfg.degree, cfg.boundary)?);
        cfg.validate()?;
        Some(cfg)
    } else {
        None
    };
    let ds = load_dataset(&a.data.data, &schema)?;
    let alpha = a.data.alpha;
    let report = match a.method {
        MeanMethod::Part => {
            let (report, tree) = part_mean_ci(&ds, TreeConfig::new(a.depth, a.min_leaf), alpha)?;
            emit(out, &render(&report, a.data.format))?;
            if let Some(dest) = &a.dump_tree {
                dump(&tree, dest, out)?;
            }
            return Ok(());
        }
        MeanMethod::Empirical => Method::Empirical.run(&ds, alpha)?,
        MeanMethod::Ppi => Method::Ppi.run(&ds, alpha)?,
        MeanMethod::PpiPlusPlus => Method::PpiPlusPlus.run(&ds, alpha)?,
        MeanMethod::Coord => Method::CoordPartition { coord: a.coord }.run(&ds, alpha)?,
        MeanMethod::Paq => Method::Paq { cfg: paq_cfg.expect("built above") }.run(&ds, alpha)?,
    };
    if a.dump_tree.is_some() {
        return Err(Error::invalid("--dump-tree applies to --method part only"));
    }
    emit(out, &render(&report, a.data.format))
}

fn estimate_ols(a: OlsArgs, out: &mut dyn Write) -> Result<()> {
    let schema = parse_schema(&a.data.schema)?;
    let ds = load_dataset(&a.data.data, &schema)?;
    let (report, tree) = part_ols_ci(&ds, a.coef, TreeConfig::new(a.depth, a.min_leaf), a.data.alpha)?;
    emit(out, &render(&report, a.data.format))?;
    if let Some(dest) = &a.dump_tree {
        dump(&tree, dest, out)?;
    }
    Ok(())
}

fn simulate(a: SimArgs, out: &mut dyn Write) -> Result<()> {
    let text = std::fs::read_to_string(&a.config).map_err(|source| Error::Io { path: a.config.clone(), source })?;
    let mut cfg = SimConfig::parse(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = a.jobs {
        cfg.jobs = Some(jobs);
    }
    if let Some(output) = a.output {
        cfg.output = output;
    }
    if let Some(noises) = cfg.noise_ladder.clone() {
        let ladder = noise_ladder(&cfg, &noises)?;
        let text = ladder_csv(&ladder);
        let mut path = cfg.output.clone().into_os_string();
        path.push("_ladder.csv");
        write_file(Path::new(&path), &text)?;
        return emit(out, &text);
    }
    let result = run_sweep(&cfg)?;
    result.write(&cfg.output)?;
    emit(out, &result.summary_table())
}

fn probe(a: RateArgs, out: &mut dyn Write) -> Result<()> {
    let family: ResidualFamily = a.family.parse()?;
    let run = || rate_probe(&family, a.degree, &a.n_grid, a.reps, a.seed);
    let result = match a.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let text = result.to_csv();
    match &a.output {
        Some(path) => write_file(path, &text),
        None => emit(out, &text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("predaug").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn toy_csv(dir: &Path) -> PathBuf {
        let path = dir.join("toy.csv");
        std::fs::write(&path, "x,y,f\n0,1,0.5\n1,2,1.5\n0,,1\n1,,2\n2,,3\n").unwrap();
        path
    }

    const SCHEMA: &str = "features=x;label=y;prediction=f";

    #[test]
    fn ppi_toy_estimate() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy_csv(dir.path());
        let (code, out, _) = call(&["estimate-mean", "--data", data.to_str().unwrap(), "--schema", SCHEMA, "--method", "ppi"]);
        assert_eq!(code, 0);
        let r: EstimateReport = serde_json::from_str(out.trim()).unwrap();
        assert!((r.estimate - 2.5).abs() < 1e-12);
        assert_eq!((r.n_used, r.big_n_used), (2, 3));
    }

    #[test]
    fn depth_zero_part_matches_ppi() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy_csv(dir.path());
        let d = data.to_str().unwrap();
        let (_, ppi, _) = call(&["estimate-mean", "--data", d, "--schema", SCHEMA, "--method", "ppi"]);
        let (code, part, _) = call(&[
            "estimate-mean", "--data", d, "--schema", SCHEMA, "--method", "part", "--depth", "0", "--min-leaf", "2",
        ]);
        assert_eq!(code, 0);
        let a: EstimateReport = serde_json::from_str(ppi.trim()).unwrap();
        let b: EstimateReport = serde_json::from_str(part.trim()).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.half_width, b.half_width);
    }

    #[test]
    fn paq_without_bounds_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy_csv(dir.path());
        let (code, _, err) = call(&["estimate-mean", "--data", data.to_str().unwrap(), "--schema", SCHEMA, "--method", "paq"]);
        assert_eq!(code, 2);
        assert!(err.contains("--deriv-bounds"));
    }

    #[test]
    fn exit_codes() {
        let (code, _, _) = call(&["estimate-mean", "--bogus"]);
        assert_eq!(code, 2);
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("estimate-mean") && out.contains("rate-probe"));
        let (code, _, _) = call(&["estimate-mean", "--data", "/nonexistent.csv", "--schema", SCHEMA, "--method", "ppi"]);
        assert_eq!(code, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("const.csv");
        // A constant predictor makes the PPI++ tuning undefined.
        std::fs::write(&path, "x,y,f\n0,1,1\n1,3,1\n0,,1\n").unwrap();
        let (code, _, _) = call(&["estimate-mean", "--data", path.to_str().unwrap(), "--schema", SCHEMA, "--method", "ppi++"]);
        assert_eq!(code, 4);
    }

    #[test]
    fn csv_format_and_tree_dump() {
        let dir = tempfile::tempdir().unwrap();
        let data = toy_csv(dir.path());
        let (code, out, _) = call(&[
            "estimate-mean", "--data", data.to_str().unwrap(), "--schema", SCHEMA, "--method", "part",
            "--depth", "1", "--min-leaf", "1", "--format", "csv", "--dump-tree", "-",
        ]);
        assert_eq!(code, 0, "{out}");
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), EstimateReport::CSV_HEADER);
        assert!(lines.next().unwrap().starts_with("\"part(depth=1,min_leaf=1)\","));
        assert!(out.contains("leaf n="));
    }

    #[test]
    fn bounds_and_positions_parsing() {
        assert_eq!(
            parse_bounds("1, 2", 1, Boundary::Constant).unwrap(),
            DerivBound::Trapezoid { first: 1.0, second: 2.0 }
        );
        assert!(parse_bounds("1", 1, Boundary::Constant).is_err());
        assert_eq!(parse_bounds("4", 2, Boundary::Extrapolate).unwrap(), DerivBound::Lagrange { top: 4.0 });
        assert_eq!(parse_positions("affine:0:2").unwrap(), PositionMap::Affine { lo: 0.0, hi: 2.0 });
        assert!(parse_positions("cdf").is_err());
    }

    #[test]
    fn rate_probe_to_stdout() {
        let (code, out, _) = call(&["rate-probe", "--family", "exp(rate=1)", "--n-grid", "8,16", "--reps", "50"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("n,mean_bias,var\n8,"));
        assert!(out.lines().last().unwrap().starts_with("slope,"));
    }

    #[test]
    fn simulate_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("min.cfg");
        let prefix = dir.path().join("res");
        std::fs::write(
            &cfg,
            format!(
                "methods = ppi\nn_grid = 20\nreplications = 1\nsource = synthetic:sine(noise=0.1)\nunlabeled_size = 100\noutput = {}\n",
                prefix.display()
            ),
        )
        .unwrap();
        let (code, out, err) = call(&["simulate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("ppi"));
        let csv = std::fs::read_to_string(dir.path().join("res.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let bad = dir.path().join("bad.cfg");
        std::fs::write(&bad, "methods = nope\nn_grid = 20\nsource = synthetic:sine\n").unwrap();
        let (code, _, _) = call(&["simulate", "--config", bad.to_str().unwrap()]);
        assert_eq!(code, 2);
    }
}
