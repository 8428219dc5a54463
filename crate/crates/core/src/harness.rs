//! Replication sweeps: obfuscate labels, run estimators, aggregate interval
//! width and coverage.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::baseline::{coordinate_partition_mean_ci, empirical_mean_ci, ppi_mean_ci, ppi_pp_mean_ci};
use crate::data::{load_dataset, obfuscate_split, Dataset, LabeledSample, Schema};
use crate::error::{Error, Result};
use crate::paq::{paq_ci, DerivBound, PositionMap, QuadratureConfig};
use crate::part_mean::{coverage_correction, part_mean_ci};
use crate::part_regression::{ols_coefficients, part_ols_ci};
use crate::report::{fmt12, EstimateReport};
use crate::rng::{stream_id, RandomSource};
use crate::stats::{mean, sample_variance};
use crate::tree::TreeConfig;

const POOL_TAG: u8 = 1;
const SPLIT_TAG: u8 = 0;

/// Synthetic fully-labeled pools with known estimands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticSpec {
    /// `x ~ U[0, pi]`, `f = x^2`, `y = x^2 + sin x + noise * eps`.
    SineResidual { noise: f64 },
    /// `x = +-1`, `f = x`, `y - f | x ~ N(x, 1)`.
    HeteroscedasticBinary,
    /// Features `(1, sex, age)`; income linear with noise sd 2 or 6 by
    /// sex; the predictor has a linear bias.
    LinearIncome,
    /// Features `(x1, x2)` jointly Gaussian without intercept, `y = 1.5 x1
    /// - 2 x2 + eps`; the predictor is shrunk and has a quadratic bias.
    GaussianLinear,
}

const INCOME_THETA: [f64; 3] = [10.0, 5.0, 0.3];
const GAUSSIAN_THETA: [f64; 2] = [1.5, -2.0];

impl SyntheticSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::SineResidual { .. } | Self::HeteroscedasticBinary => 1,
            Self::LinearIncome => 3,
            Self::GaussianLinear => 2,
        }
    }

    /// Fully labeled pool of `m` rows.
    pub fn generate(&self, m: usize, source: RandomSource) -> Result<Dataset> {
        if m < 4 {
            return Err(Error::InsufficientData { what: "pool rows", needed: 4, got: m });
        }
        let mut rng = source.rng();
        let mut rows = Vec::with_capacity(m);
        for _ in 0..m {
            rows.push(match *self {
                Self::SineResidual { noise } => {
                    let x = PI * rng.random::<f64>();
                    let eps = if noise > 0.0 { noise * normal(&mut rng) } else { 0.0 };
                    LabeledSample::new(vec![x], x * x + x.sin() + eps, x * x)
                }
                Self::HeteroscedasticBinary => {
                    let x = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    LabeledSample::new(vec![x], 2.0 * x + normal(&mut rng), x)
                }
                Self::LinearIncome => {
                    let sex = if rng.random::<bool>() { 1.0 } else { 0.0 };
                    let age = rng.random_range(0..100) as f64;
                    let [a, b, c] = INCOME_THETA;
                    let sd = if sex == 1.0 { 6.0 } else { 2.0 };
                    let y = a + b * sex + c * age + sd * normal(&mut rng);
                    let f = 12.0 + 4.0 * sex + 0.25 * age;
                    LabeledSample::new(vec![1.0, sex, age], y, f)
                }
                Self::GaussianLinear => {
                    let x1 = 1.0 + normal(&mut rng);
                    let x2 = 0.5 * (x1 - 1.0) + 0.75f64.sqrt() * normal(&mut rng);
                    let [a, b] = GAUSSIAN_THETA;
                    let y = a * x1 + b * x2 + normal(&mut rng);
                    let f = 0.9 * (a * x1 + b * x2) + 0.5 * x2 * x2 - 0.3;
                    LabeledSample::new(vec![x1, x2], y, f)
                }
            });
        }
        Dataset::new(rows, Vec::new(), self.dim())
    }

    /// Population mean of `Y` and, where defined, population OLS
    /// coefficients of `Y` on `x`.
    pub fn truth(&self) -> Truth {
        match self {
            Self::SineResidual { .. } => Truth::mean(PI * PI / 3.0 + 2.0 / PI),
            Self::HeteroscedasticBinary => Truth {
                mean: 0.0,
                // E[xx^T] = 1, E[xy] = 2.
                coefficients: Some(vec![2.0]),
            },
            Self::LinearIncome => {
                let [a, b, c] = INCOME_THETA;
                // age is uniform on {0..99}, mean 49.5.
                Truth { mean: a + 0.5 * b + 49.5 * c, coefficients: Some(INCOME_THETA.to_vec()) }
            }
            Self::GaussianLinear => Truth { mean: GAUSSIAN_THETA[0], coefficients: Some(GAUSSIAN_THETA.to_vec()) },
        }
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

impl fmt::Display for SyntheticSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SineResidual { noise } => write!(f, "sine(noise={})", fmt12(*noise)),
            Self::HeteroscedasticBinary => write!(f, "binary"),
            Self::LinearIncome => write!(f, "income"),
            Self::GaussianLinear => write!(f, "gaussian"),
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = Call::parse(s)?;
        let spec = match call.name.as_str() {
            "sine" => Self::SineResidual { noise: call.float("noise", Some(0.0))? },
            "binary" => Self::HeteroscedasticBinary,
            "income" => Self::LinearIncome,
            "gaussian" => Self::GaussianLinear,
            other => return Err(Error::invalid(format!("unknown synthetic generator '{other}'"))),
        };
        call.finish()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub mean: f64,
    pub coefficients: Option<Vec<f64>>,
}

impl Truth {
    pub fn mean(mean: f64) -> Self {
        Self { mean, coefficients: None }
    }
}

/// An estimator and its tuning, as named in sweep configs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Empirical,
    Ppi,
    PpiPlusPlus,
    Part { depth: usize, min_leaf: usize },
    CoordPartition { coord: usize },
    Paq { cfg: QuadratureConfig },
    PartOls { coord: usize, depth: usize, min_leaf: usize },
}

impl Method {
    pub fn run(&self, ds: &Dataset, alpha: f64) -> Result<EstimateReport> {
        match *self {
            Self::Empirical => empirical_mean_ci(&ds.labeled, alpha),
            Self::Ppi => ppi_mean_ci(&ds.labeled, &ds.unlabeled, alpha),
            Self::PpiPlusPlus => ppi_pp_mean_ci(&ds.labeled, &ds.unlabeled, alpha),
            Self::Part { depth, min_leaf } => {
                Ok(part_mean_ci(ds, TreeConfig::new(depth, min_leaf), alpha)?.0)
            }
            Self::CoordPartition { coord } => {
                coordinate_partition_mean_ci(&ds.labeled, &ds.unlabeled, coord, alpha)
            }
            Self::Paq { cfg } => paq_ci(&ds.labeled, &ds.unlabeled, &cfg, alpha),
            Self::PartOls { coord, depth, min_leaf } => {
                Ok(part_ols_ci(ds, coord, TreeConfig::new(depth, min_leaf), alpha)?.0)
            }
        }
    }

    /// The estimand this method targets.
    pub fn target(&self, truth: &Truth) -> Result<f64> {
        match self {
            Self::PartOls { coord, .. } => truth
                .coefficients
                .as_ref()
                .and_then(|c| c.get(*coord).copied())
                .ok_or_else(|| Error::invalid(format!("no true coefficient {coord} for this source"))),
            _ => Ok(truth.mean),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empirical => write!(f, "empirical"),
            Self::Ppi => write!(f, "ppi"),
            Self::PpiPlusPlus => write!(f, "ppi++"),
            Self::Part { depth, min_leaf } => write!(f, "part(depth={depth},min_leaf={min_leaf})"),
            Self::CoordPartition { coord } => write!(f, "coord(k={coord})"),
            Self::Paq { cfg } => {
                write!(f, "paq(degree={}", cfg.degree)?;
                match cfg.bound {
                    Some(DerivBound::Trapezoid { first, second }) => {
                        write!(f, ",l1={},l2={}", fmt12(first), fmt12(second))?
                    }
                    Some(DerivBound::Lagrange { top }) => write!(f, ",l={}", fmt12(top))?,
                    None => {}
                }
                if let PositionMap::Affine { lo, hi } = cfg.positions {
                    write!(f, ",lo={},hi={}", fmt12(lo), fmt12(hi))?;
                }
                write!(f, ")")
            }
            Self::PartOls { coord, depth, min_leaf } => {
                write!(f, "part_ols(coef={coord},depth={depth},min_leaf={min_leaf})")
            }
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let call = Call::parse(s)?;
        let method = match call.name.as_str() {
            "empirical" => Self::Empirical,
            "ppi" => Self::Ppi,
            "ppi++" => Self::PpiPlusPlus,
            "part" => Self::Part {
                depth: call.int("depth", Some(1))?,
                min_leaf: call.int("min_leaf", Some(5))?,
            },
            "coord" | "coord_partition" => Self::CoordPartition { coord: call.int("k", Some(0))? },
            "part_ols" => Self::PartOls {
                coord: call.int("coef", None)?,
                depth: call.int("depth", Some(1))?,
                min_leaf: call.int("min_leaf", Some(5))?,
            },
            "paq" => {
                let degree = call.int("degree", Some(1))?;
                let mut cfg = QuadratureConfig::new(degree);
                if call.has("l") {
                    cfg = cfg.with_bound(DerivBound::Lagrange { top: call.float("l", None)? });
                } else if call.has("l1") || call.has("l2") {
                    cfg = cfg.with_bound(DerivBound::Trapezoid {
                        first: call.float("l1", None)?,
                        second: call.float("l2", None)?,
                    });
                }
                if call.has("lo") || call.has("hi") {
                    cfg = cfg.with_positions(PositionMap::Affine {
                        lo: call.float("lo", None)?,
                        hi: call.float("hi", None)?,
                    });
                }
                cfg.validate()?;
                Self::Paq { cfg }
            }
            other => return Err(Error::invalid(format!("unknown method '{other}'"))),
        };
        call.finish()?;
        Ok(method)
    }
}

/// `name(key=value,...)` with the argument list optional.
struct Call {
    name: String,
    args: Vec<(String, String)>,
    used: std::cell::RefCell<Vec<bool>>,
}

impl Call {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, body) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            None => (s, ""),
            _ => return Err(Error::invalid(format!("malformed term '{s}'"))),
        };
        let mut args = Vec::new();
        for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value in '{s}', got '{part}'")))?;
            args.push((k.trim().to_string(), v.trim().to_string()));
        }
        let used = std::cell::RefCell::new(vec![false; args.len()]);
        Ok(Self { name: name.trim().to_string(), args, used })
    }

    fn has(&self, key: &str) -> bool {
        self.args.iter().any(|(k, _)| k == key)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let i = self.args.iter().position(|(k, _)| k == key)?;
        self.used.borrow_mut()[i] = true;
        Some(&self.args[i].1)
    }

    fn value<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::invalid(format!("bad value '{v}' for {key} in {}", self.name))),
            None => default.ok_or_else(|| Error::invalid(format!("{} needs {key}=...", self.name))),
        }
    }

    fn int(&self, key: &str, default: Option<usize>) -> Result<usize> {
        self.value(key, default)
    }

    fn float(&self, key: &str, default: Option<f64>) -> Result<f64> {
        self.value(key, default)
    }

    fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        match self.args.iter().zip(used.iter()).find(|(_, u)| !**u) {
            Some(((k, _), _)) => Err(Error::invalid(format!("unknown parameter '{k}' for {}", self.name))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    /// Regenerated for every `(n, replication)`, with `unlabeled` rows
    /// beyond the labeled ones.
    Synthetic { spec: SyntheticSpec, unlabeled: usize },
    /// A fully labeled pool; truth is taken from the whole pool.
    Pool { data: Arc<Dataset>, truth: Truth },
}

impl DataSource {
    /// Loads a fully labeled CSV; truth is the pool label mean and, when
    /// the design is well posed, the pool OLS coefficients.
    pub fn from_csv(path: &Path, schema: &Schema) -> Result<Self> {
        let data = load_dataset(path, schema)?;
        if !data.unlabeled.is_empty() {
            return Err(Error::Schema(format!(
                "{}: sweeps need every row labeled, found {} without labels",
                path.display(),
                data.unlabeled.len()
            )));
        }
        let truth = pool_truth(&data)?;
        Ok(Self::Pool { data: Arc::new(data), truth })
    }
}

/// Label mean and OLS coefficients over a fully labeled pool.
pub fn pool_truth(data: &Dataset) -> Result<Truth> {
    let y: Vec<f64> = data.labeled.iter().map(|s| s.y).collect();
    if y.is_empty() {
        return Err(Error::InsufficientData { what: "pool rows", needed: 1, got: 0 });
    }
    let coefficients = ols_coefficients(&data.labeled).ok().map(|b| b.iter().copied().collect());
    Ok(Truth { mean: mean(&y), coefficients })
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub methods: Vec<Method>,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
    pub source: DataSource,
    /// Replaces the source's truth for every method.
    pub truth_override: Option<f64>,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    /// Output prefix for `simulate`.
    pub output: PathBuf,
    /// Noise levels for a sine-residual ladder, if any.
    pub noise_ladder: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(methods: Vec<Method>, n_grid: Vec<usize>, source: DataSource) -> Self {
        Self {
            methods,
            n_grid,
            replications: 100,
            alpha: 0.05,
            seed: 0,
            source,
            truth_override: None,
            jobs: None,
            output: PathBuf::from("sim"),
            noise_ladder: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.n_grid.is_empty() {
            return Err(Error::invalid("the n grid is empty"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let DataSource::Pool { data, .. } = &self.source {
            let m = data.n();
            if let Some(&n) = self.n_grid.iter().find(|&&n| n < 2 || n >= m) {
                return Err(Error::invalid(format!("n = {n} must lie in [2, {}] for a pool of {m}", m.saturating_sub(1))));
            }
        }
        if self.noise_ladder.is_some() && !matches!(self.source, DataSource::Synthetic { spec: SyntheticSpec::SineResidual { .. }, .. }) {
            return Err(Error::invalid("noise ladders need the synthetic sine source"));
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected key = value, got '{line}'"),
            })?;
            let key = k.trim().to_string();
            if entries.iter().any(|(_, k, _)| *k == key) {
                return Err(Error::Config { line: line_no, message: format!("duplicate key '{key}'") });
            }
            entries.push((line_no, key, v.trim().to_string()));
        }
        let get = |key: &str| entries.iter().find(|(_, k, _)| k == key);
        let at = |key: &str, e: Error| -> Error {
            let line = get(key).map(|(l, _, _)| *l).unwrap_or(0);
            Error::Config { line, message: e.to_string() }
        };
        let known = [
            "methods", "n_grid", "replications", "alpha", "seed", "source", "schema",
            "unlabeled_size", "truth", "jobs", "output", "noise_ladder",
        ];
        if let Some((line, key, _)) = entries.iter().find(|(_, k, _)| !known.contains(&k.as_str())) {
            return Err(Error::Config { line: *line, message: format!("unknown key '{key}'") });
        }
        let required = |key: &str| -> Result<&str> {
            get(key).map(|(_, _, v)| v.as_str()).ok_or(Error::Config {
                line: 0,
                message: format!("missing required key '{key}'"),
            })
        };
        let parse_num = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| at(key, Error::invalid(format!("bad number '{v}' for {key}"))))
        };
        let parse_int = |key: &str, v: &str| -> Result<usize> {
            v.parse::<usize>().map_err(|_| at(key, Error::invalid(format!("bad integer '{v}' for {key}"))))
        };

        let methods = split_terms(required("methods")?)
            .iter()
            .map(|t| t.parse::<Method>())
            .collect::<Result<Vec<_>>>()
            .map_err(|e| at("methods", e))?;
        let n_grid = required("n_grid")?
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| parse_int("n_grid", t))
            .collect::<Result<Vec<_>>>()?;

        let source_text = required("source")?;
        let source = if let Some(path) = source_text.strip_prefix("csv:") {
            let schema: Schema = required("schema")?.parse().map_err(|e| at("schema", e))?;
            DataSource::from_csv(Path::new(path.trim()), &schema)?
        } else if let Some(spec) = source_text.strip_prefix("synthetic:") {
            let spec: SyntheticSpec = spec.parse().map_err(|e| at("source", e))?;
            let unlabeled = match get("unlabeled_size") {
                Some((_, _, v)) => parse_int("unlabeled_size", v)?,
                None => 10_000,
            };
            DataSource::Synthetic { spec, unlabeled }
        } else {
            return Err(at("source", Error::invalid("source must start with csv: or synthetic:")));
        };

        let mut cfg = SimConfig::new(methods, n_grid, source);
        if let Some((_, _, v)) = get("replications") {
            cfg.replications = parse_int("replications", v)?;
        }
        if let Some((_, _, v)) = get("alpha") {
            cfg.alpha = parse_num("alpha", v)?;
        }
        if let Some((_, _, v)) = get("seed") {
            cfg.seed = v.parse().map_err(|_| at("seed", Error::invalid(format!("bad seed '{v}'"))))?;
        }
        if let Some((_, _, v)) = get("truth") {
            if v != "auto" {
                cfg.truth_override = Some(parse_num("truth", v)?);
            }
        }
        if let Some((_, _, v)) = get("jobs") {
            cfg.jobs = Some(parse_int("jobs", v)?);
        }
        if let Some((_, _, v)) = get("output") {
            cfg.output = PathBuf::from(v);
        }
        if let Some((_, _, v)) = get("noise_ladder") {
            cfg.noise_ladder = Some(
                v.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| parse_num("noise_ladder", t))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        cfg.validate().map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config { line: 0, message: m },
            other => other,
        })?;
        Ok(cfg)
    }
}

/// Whitespace-separated terms, keeping spaces inside parentheses.
fn split_terms(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        if c.is_whitespace() && depth <= 0 {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if !c.is_whitespace() {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Result of one method on one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub estimate: f64,
    pub width: f64,
    pub covered: bool,
    pub leaves: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub n: usize,
    pub method: String,
    pub mean_width: f64,
    pub sd_width: f64,
    pub coverage: f64,
    pub mean_estimate: f64,
    /// Spread of the point estimates across replications.
    pub sd_estimate: f64,
    /// Replications where the method failed; any failure makes the row NA.
    pub failures: usize,
    pub min_leaves: Option<usize>,
    pub mean_leaves: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rows: Vec<SimRow>,
}

impl SimResult {
    pub const HEADER: [&'static str; 6] = ["n", "method", "mean_width", "sd_width", "coverage", "mean_estimate"];

    pub fn row(&self, n: usize, method: &str) -> Option<&SimRow> {
        self.rows.iter().find(|r| r.n == n && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(Self::HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.method.clone(),
                fmt12(r.mean_width),
                fmt12(r.sd_width),
                fmt12(r.coverage),
                fmt12(r.mean_estimate),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Wide table with one column per method, for plotting `pick` against
    /// `n`.
    pub fn plot_csv(&self, pick: impl Fn(&SimRow) -> f64) -> String {
        let mut methods: Vec<&str> = Vec::new();
        let mut ns: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
            if !ns.contains(&r.n) {
                ns.push(r.n);
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n".to_string()];
        header.extend(methods.iter().map(|m| m.to_string()));
        w.write_record(&header).expect("in-memory write");
        for n in ns {
            let mut rec = vec![n.to_string()];
            for m in &methods {
                rec.push(self.row(n, m).map(|r| fmt12(pick(r))).unwrap_or_else(|| "NA".into()));
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    /// Writes `<prefix>.csv`, `<prefix>_width.csv` and
    /// `<prefix>_coverage.csv`; returns the paths.
    pub fn write(&self, prefix: &Path) -> Result<Vec<PathBuf>> {
        let files = [
            (with_suffix(prefix, ".csv"), self.to_csv()),
            (with_suffix(prefix, "_width.csv"), self.plot_csv(|r| r.mean_width)),
            (with_suffix(prefix, "_coverage.csv"), self.plot_csv(|r| r.coverage)),
        ];
        let mut out = Vec::new();
        for (path, text) in files {
            write_file(&path, &text)?;
            out.push(path);
        }
        Ok(out)
    }

    /// Fixed-width table for terminals.
    pub fn summary_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
        let mut out = format!(
            "{:>6}  {:<width$}  {:>14}  {:>14}  {:>8}  {:>14}\n",
            "n", "method", "mean_width", "sd_width", "coverage", "mean_estimate"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:>6}  {:<width$}  {:>14}  {:>14}  {:>8}  {:>14}\n",
                r.n,
                r.method,
                fmt12(r.mean_width),
                fmt12(r.sd_width),
                fmt12(r.coverage),
                fmt12(r.mean_estimate)
            ));
        }
        out
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn aggregate(n: usize, method: &Method, cells: &[Option<Cell>]) -> SimRow {
    let failures = cells.iter().filter(|c| c.is_none()).count();
    let ok: Vec<Cell> = cells.iter().flatten().copied().collect();
    let na = failures > 0 || ok.is_empty();
    let pick = |f: fn(&Cell) -> f64| -> Vec<f64> { ok.iter().map(f).collect() };
    let widths = pick(|c| c.width);
    let leaves: Vec<usize> = ok.iter().filter_map(|c| c.leaves).collect();
    SimRow {
        n,
        method: method.to_string(),
        mean_width: if na { f64::NAN } else { mean(&widths) },
        sd_width: if na { f64::NAN } else { sample_variance(&widths).sqrt() },
        coverage: if na { f64::NAN } else { ok.iter().filter(|c| c.covered).count() as f64 / ok.len() as f64 },
        mean_estimate: if na { f64::NAN } else { mean(&pick(|c| c.estimate)) },
        sd_estimate: if na { f64::NAN } else { sample_variance(&pick(|c| c.estimate)).sqrt() },
        failures,
        min_leaves: leaves.iter().min().copied(),
        mean_leaves: (!leaves.is_empty()).then(|| leaves.iter().sum::<usize>() as f64 / leaves.len() as f64),
    }
}

/// One replication: build the split and run every method.
fn replicate(cfg: &SimConfig, n: usize, rep: usize) -> Result<Vec<Option<Cell>>> {
    let (split, truth) = match &cfg.source {
        DataSource::Synthetic { spec, unlabeled } => {
            let pool = spec.generate(n + unlabeled, RandomSource::new(cfg.seed, stream_id(POOL_TAG, n, rep)))?;
            (obfuscate_split(&pool, n, RandomSource::new(cfg.seed, stream_id(SPLIT_TAG, n, rep)))?, spec.truth())
        }
        DataSource::Pool { data, truth } => (
            obfuscate_split(data, n, RandomSource::new(cfg.seed, stream_id(SPLIT_TAG, n, rep)))?,
            truth.clone(),
        ),
    };
    cfg.methods
        .iter()
        .map(|m| {
            let target = match cfg.truth_override {
                Some(t) => t,
                None => m.target(&truth)?,
            };
            Ok(m.run(&split, cfg.alpha).ok().map(|r| Cell {
                estimate: r.estimate,
                width: r.width(),
                covered: r.contains(target),
                leaves: r.leaves,
            }))
        })
        .collect()
}

/// Runs every `(n, replication)` cell, in parallel, and aggregates per
/// `(n, method)` in grid order. Results do not depend on thread count.
pub fn run_sweep(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let work = || -> Result<SimResult> {
        let mut rows = Vec::new();
        for &n in &cfg.n_grid {
            let cells: Vec<Vec<Option<Cell>>> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| replicate(cfg, n, rep))
                .collect::<Result<_>>()?;
            for (j, method) in cfg.methods.iter().enumerate() {
                let column: Vec<Option<Cell>> = cells.iter().map(|c| c[j]).collect();
                rows.push(aggregate(n, method, &column));
            }
        }
        Ok(SimResult { rows })
    };
    match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Sine-residual sweeps at each noise level.
pub fn noise_ladder(cfg: &SimConfig, noises: &[f64]) -> Result<Vec<(f64, SimResult)>> {
    let unlabeled = match cfg.source {
        DataSource::Synthetic { spec: SyntheticSpec::SineResidual { .. }, unlabeled } => unlabeled,
        _ => return Err(Error::invalid("noise ladders need the synthetic sine source")),
    };
    noises
        .iter()
        .map(|&noise| {
            let mut c = cfg.clone();
            c.noise_ladder = None;
            c.source = DataSource::Synthetic { spec: SyntheticSpec::SineResidual { noise }, unlabeled };
            Ok((noise, run_sweep(&c)?))
        })
        .collect()
}

pub fn ladder_csv(ladder: &[(f64, SimResult)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["noise"];
    header.extend(SimResult::HEADER);
    w.write_record(&header).expect("in-memory write");
    for (noise, res) in ladder {
        for r in &res.rows {
            w.write_record([
                fmt12(*noise),
                r.n.to_string(),
                r.method.clone(),
                fmt12(r.mean_width),
                fmt12(r.sd_width),
                fmt12(r.coverage),
                fmt12(r.mean_estimate),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub n: usize,
    pub leaf_cap: usize,
    pub depth: usize,
    pub coverage: f64,
    pub min_leaves: usize,
    pub mean_leaves: f64,
    /// `1 - alpha - penalty(leaf_cap)`.
    pub bound_at_cap: f64,
    /// `1 - alpha - penalty(min realized leaves)`, the largest bound any
    /// realized tree implies.
    pub bound_at_realized: f64,
}

/// Empirical PART coverage against the finite-sample coverage bound for
/// each leaf cap in `leaf_caps`, grown at depth `ceil(log2 cap)`.
pub fn coverage_vs_bound(cfg: &SimConfig, leaf_caps: &[usize], min_leaf: usize) -> Result<Vec<BoundRow>> {
    let dim = match &cfg.source {
        DataSource::Synthetic { spec, .. } => spec.dim(),
        DataSource::Pool { data, .. } => data.dim(),
    };
    let mut c = cfg.clone();
    c.methods = leaf_caps
        .iter()
        .map(|&cap| Method::Part { depth: depth_for(cap), min_leaf })
        .collect();
    let res = run_sweep(&c)?;
    let mut out = Vec::new();
    for &n in &cfg.n_grid {
        for (&cap, method) in leaf_caps.iter().zip(&c.methods) {
            let row = res.row(n, &method.to_string()).expect("row per method");
            let min_leaves = row.min_leaves.unwrap_or(cap);
            let bound = |l: usize| 1.0 - cfg.alpha - coverage_correction(l, n, dim);
            out.push(BoundRow {
                n,
                leaf_cap: cap,
                depth: depth_for(cap),
                coverage: row.coverage,
                min_leaves,
                mean_leaves: row.mean_leaves.unwrap_or(f64::NAN),
                bound_at_cap: bound(cap),
                bound_at_realized: bound(min_leaves),
            });
        }
    }
    Ok(out)
}

fn depth_for(cap: usize) -> usize {
    let mut d = 0;
    while (1usize << d) < cap {
        d += 1;
    }
    d
}

pub fn bound_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("n,leaf_cap,depth,coverage,min_leaves,mean_leaves,bound_at_cap,bound_at_realized\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.n,
            r.leaf_cap,
            r.depth,
            fmt12(r.coverage),
            r.min_leaves,
            fmt12(r.mean_leaves),
            fmt12(r.bound_at_cap),
            fmt12(r.bound_at_realized)
        ));
    }
    out
}
