//! Quadrature estimators of the residual term for a univariate feature.
//!
//! Features are first mapped to positions in `[0, 1]`, by default through
//! the empirical CDF of the unlabeled features. The residual integral
//! `int_0^1 r(u) du` is then approximated either by nearest-neighbor
//! imputation (equivalently a trapezoid rule with constant boundary
//! extension) or by blocked degree-p interpolation.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{LabeledSample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::report::{fmt12, EstimateReport};
use crate::rng::{stream_id, RandomSource};
use crate::stats::{mean, ols_slope, sample_variance};

/// How the outermost blocks treat `[0, u_1]` and `[u_n, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Hold the nearest residual constant. Degree 1 only.
    Constant,
    /// Integrate the boundary block's polynomial out to the edge.
    Extrapolate,
}

/// Derivative bounds on the residual as a function of position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivBound {
    /// `sup |r'| <= first`, `sup |r''| <= second`.
    Trapezoid { first: f64, second: f64 },
    /// `sup |r^(p+1)| <= top`.
    Lagrange { top: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositionMap {
    /// `u = F_N(x)`, the empirical CDF of the unlabeled features.
    EmpiricalCdf,
    /// `u = (x - lo) / (hi - lo)`.
    Affine { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub degree: usize,
    pub boundary: Boundary,
    pub bound: Option<DerivBound>,
    pub positions: PositionMap,
}

impl QuadratureConfig {
    /// Constant boundaries for degree 1, extrapolation above.
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            boundary: if degree == 1 { Boundary::Constant } else { Boundary::Extrapolate },
            bound: None,
            positions: PositionMap::EmpiricalCdf,
        }
    }

    pub fn with_bound(mut self, bound: DerivBound) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn with_positions(mut self, positions: PositionMap) -> Self {
        self.positions = positions;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::invalid("quadrature degree must be at least 1"));
        }
        if self.boundary == Boundary::Constant && self.degree != 1 {
            return Err(Error::invalid("constant boundary extension needs degree 1"));
        }
        if let PositionMap::Affine { lo, hi } = self.positions {
            if !(lo < hi) {
                return Err(Error::invalid(format!("affine positions need lo < hi, got [{lo}, {hi}]")));
            }
        }
        match self.bound {
            Some(DerivBound::Trapezoid { first, second }) if !(first >= 0.0 && second >= 0.0) => {
                Err(Error::invalid("derivative bounds must be nonnegative"))
            }
            Some(DerivBound::Lagrange { top }) if !(top >= 0.0) => {
                Err(Error::invalid("derivative bounds must be nonnegative"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for QuadratureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "paq(degree={}", self.degree)?;
        if self.degree == 1 && self.boundary == Boundary::Extrapolate {
            write!(f, ",boundary=extrapolate")?;
        }
        if let PositionMap::Affine { lo, hi } = self.positions {
            write!(f, ",positions=affine({},{})", fmt12(lo), fmt12(hi))?;
        }
        write!(f, ")")
    }
}

/// Sorted labeled positions and their gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacingProfile {
    pub positions: Vec<f64>,
    /// `order[i]` is the labeled index at sorted position `i`.
    pub order: Vec<usize>,
    /// `n + 1` gaps: `u_1`, the interior spacings, then `1 - u_n`.
    pub gaps: Vec<f64>,
    /// Positions nudged to keep nodes distinct.
    pub perturbed: usize,
}

impl SpacingProfile {
    /// Sorts `raw` (all in `[0, 1]`) and separates tied positions by one
    /// representable step.
    pub fn from_positions(raw: &[f64]) -> Result<Self> {
        if let Some(&u) = raw.iter().find(|u| !(0.0..=1.0).contains(*u)) {
            return Err(Error::Domain(format!(
                "position {u} outside [0, 1]; map features through a CDF first"
            )));
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
        let mut positions: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
        let mut perturbed = 0;
        for i in 1..positions.len() {
            if positions[i] <= positions[i - 1] {
                positions[i] = positions[i - 1].next_up();
                perturbed += 1;
            }
        }
        // Pull back anything pushed past 1.
        for i in (0..positions.len()).rev() {
            let cap = if i + 1 < positions.len() { positions[i + 1].next_down() } else { 1.0 };
            if positions[i] > cap {
                positions[i] = cap;
            }
        }
        let mut gaps = Vec::with_capacity(positions.len() + 1);
        let mut prev = 0.0;
        for &u in &positions {
            gaps.push(u - prev);
            prev = u;
        }
        gaps.push(1.0 - prev);
        Ok(Self { positions, order, gaps, perturbed })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `values` indexed by labeled index, rearranged into sorted order.
    pub fn arrange(&self, values: &[f64]) -> Vec<f64> {
        self.order.iter().map(|&i| values[i]).collect()
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `#{reference <= x} / len` for each `x`, with `reference` sorted.
fn cdf_ranks(reference: &[f64], xs: &[f64]) -> Vec<f64> {
    let len = reference.len() as f64;
    xs.iter()
        .map(|&x| reference.partition_point(|&v| v <= x) as f64 / len)
        .collect()
}

/// Positions `u_i = F_N(x_i)` under the empirical CDF of `unlabeled_x`.
pub fn pit_positions(labeled_x: &[f64], unlabeled_x: &[f64]) -> SpacingProfile {
    let reference = sorted(unlabeled_x);
    SpacingProfile::from_positions(&cdf_ranks(&reference, labeled_x))
        .expect("empirical CDF values lie in [0, 1]")
}

fn affine(xs: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    let span = hi - lo;
    xs.iter()
        .map(|&x| {
            let u = (x - lo) / span;
            if (0.0..=1.0).contains(&u) {
                Ok(u)
            } else {
                Err(Error::Domain(format!("feature {x} outside the affine range [{lo}, {hi}]")))
            }
        })
        .collect()
}

/// Mapped positions of the labeled features (as a profile) and of the
/// unlabeled features (in input order).
pub fn map_positions(
    map: PositionMap,
    labeled_x: &[f64],
    unlabeled_x: &[f64],
) -> Result<(SpacingProfile, Vec<f64>)> {
    match map {
        PositionMap::EmpiricalCdf => {
            let reference = sorted(unlabeled_x);
            let profile = SpacingProfile::from_positions(&cdf_ranks(&reference, labeled_x))?;
            Ok((profile, cdf_ranks(&reference, unlabeled_x)))
        }
        PositionMap::Affine { lo, hi } => {
            let profile = SpacingProfile::from_positions(&affine(labeled_x, lo, hi)?)?;
            Ok((profile, affine(unlabeled_x, lo, hi)?))
        }
    }
}

/// Index of the nearest labeled point for each query. Ties in distance,
/// and duplicated labeled locations, go to the lower labeled index.
pub fn nearest_labeled(labeled: &[f64], queries: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.sort_by(|&a, &b| labeled[a].total_cmp(&labeled[b]).then(a.cmp(&b)));
    order.dedup_by(|later, earlier| labeled[*later] == labeled[*earlier]);
    let locs: Vec<f64> = order.iter().map(|&i| labeled[i]).collect();
    queries
        .iter()
        .map(|&q| {
            let j = locs.partition_point(|&v| v < q);
            if j == 0 {
                return order[0];
            }
            if j == locs.len() {
                return order[j - 1];
            }
            let (dl, dr) = (q - locs[j - 1], locs[j] - q);
            if dl < dr || (dl == dr && order[j - 1] < order[j]) {
                order[j - 1]
            } else {
                order[j]
            }
        })
        .collect()
}

fn univariate(labeled: &[LabeledSample], unlabeled: &[UnlabeledSample]) -> Result<(Vec<f64>, Vec<f64>)> {
    for x in labeled.iter().map(|s| &s.x).chain(unlabeled.iter().map(|s| &s.x)) {
        if x.len() != 1 {
            return Err(Error::Dimension { expected: 1, got: x.len() });
        }
    }
    Ok((
        labeled.iter().map(|s| s.x[0]).collect(),
        unlabeled.iter().map(|s| s.x[0]).collect(),
    ))
}

fn require_nonempty(labeled: &[LabeledSample], unlabeled: &[UnlabeledSample]) -> Result<()> {
    if labeled.is_empty() {
        return Err(Error::InsufficientData { what: "labeled rows", needed: 1, got: 0 });
    }
    if unlabeled.is_empty() {
        return Err(Error::InsufficientData { what: "unlabeled rows", needed: 1, got: 0 });
    }
    Ok(())
}

/// Nearest-neighbor imputation: `(1/N) sum f(x~) + r(h(x~))` with `h`
/// the nearest labeled feature.
pub fn paq_nn_estimate(labeled: &[LabeledSample], unlabeled: &[UnlabeledSample]) -> Result<f64> {
    let (lx, ux) = univariate(labeled, unlabeled)?;
    require_nonempty(labeled, unlabeled)?;
    let nn = nearest_labeled(&lx, &ux);
    let total: f64 = unlabeled
        .iter()
        .zip(&nn)
        .map(|(s, &j)| s.f + labeled[j].residual())
        .sum();
    Ok(total / unlabeled.len() as f64)
}

/// Trapezoid weights `{D0 + D1/2, (D1 + D2)/2, ..., D(n-1)/2 + Dn}`.
pub fn trapezoid_weights(gaps: &[f64]) -> Vec<f64> {
    let n = gaps.len() - 1;
    (0..n)
        .map(|i| {
            let left = if i == 0 { gaps[0] } else { gaps[i] / 2.0 };
            let right = if i == n - 1 { gaps[n] } else { gaps[i + 1] / 2.0 };
            left + right
        })
        .collect()
}

/// Trapezoid rule with constant extension past the outermost nodes.
/// `residuals` are in the profile's sorted order.
pub fn trapezoid_residual_term(profile: &SpacingProfile, residuals: &[f64]) -> f64 {
    trapezoid_weights(&profile.gaps)
        .iter()
        .zip(residuals)
        .map(|(w, r)| w * r)
        .sum()
}

/// Closed-form residual term of the nearest-neighbor estimator for
/// features already in `[0, 1]`.
pub fn paq_trapezoid_form(labeled: &[LabeledSample]) -> Result<f64> {
    let (lx, _) = univariate(labeled, &[])?;
    if lx.is_empty() {
        return Err(Error::InsufficientData { what: "labeled rows", needed: 1, got: 0 });
    }
    let profile = SpacingProfile::from_positions(&lx)?;
    let residuals: Vec<f64> = labeled.iter().map(LabeledSample::residual).collect();
    Ok(trapezoid_residual_term(&profile, &profile.arrange(&residuals)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Edge {
    Zero,
    One,
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    lower: Edge,
    upper: Edge,
    /// First of the `p + 1` consecutive fit nodes (0-based).
    first: usize,
}

/// Consecutive blocks of `p + 1` sorted nodes sharing endpoints. Gaps
/// left over when `p` does not divide `n - 2p - 1` widen the last
/// interior block, which then fits on its last `p + 1` nodes.
fn block_layout(n: usize, p: usize) -> Result<Vec<Block>> {
    if n < 2 * p + 2 {
        return Err(Error::InsufficientData {
            what: "labeled points for degree-p quadrature",
            needed: 2 * p + 2,
            got: n,
        });
    }
    let mut blocks = vec![Block { lower: Edge::Zero, upper: Edge::Node(p), first: 0 }];
    // Interior span covers 0-based nodes p ..= n-p-1.
    let last = n - p - 1;
    let mut start = p;
    while start < last {
        if start + 2 * p <= last {
            blocks.push(Block { lower: Edge::Node(start), upper: Edge::Node(start + p), first: start });
            start += p;
        } else {
            let first = if start + p == last { start } else { last - p };
            blocks.push(Block { lower: Edge::Node(start), upper: Edge::Node(last), first });
            start = last;
        }
    }
    blocks.push(Block { lower: Edge::Node(last), upper: Edge::One, first: last });
    Ok(blocks)
}

/// `int_a^b q(u) du` for the interpolant through `(nodes, values)`, via
/// divided differences expanded about the interval midpoint. `None` when
/// two nodes coincide.
fn integrate_interpolant(nodes: &[f64], values: &[f64], a: f64, b: f64) -> Option<f64> {
    let p = nodes.len() - 1;
    let mut coef = values.to_vec();
    for j in 1..=p {
        for i in (j..=p).rev() {
            let denom = nodes[i] - nodes[i - j];
            if denom == 0.0 {
                return None;
            }
            coef[i] = (coef[i] - coef[i - 1]) / denom;
        }
    }
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut poly = vec![coef[p]];
    for i in (0..p).rev() {
        let shift = c - nodes[i];
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &v) in poly.iter().enumerate() {
            next[k + 1] += v;
            next[k] += shift * v;
        }
        next[0] += coef[i];
        poly = next;
    }
    // Odd powers of t = u - c integrate to zero over [-h, h].
    Some(
        poly.iter()
            .enumerate()
            .step_by(2)
            .map(|(k, v)| 2.0 * v * h.powi(k as i32 + 1) / (k + 1) as f64)
            .sum(),
    )
}

fn edge_value(edge: Edge, positions: &[f64]) -> f64 {
    match edge {
        Edge::Zero => 0.0,
        Edge::One => 1.0,
        Edge::Node(i) => positions[i],
    }
}

/// Sum of closed-form block integrals of the degree-`p` interpolants.
/// `residuals` are in the profile's sorted order.
pub fn blocked_residual_term(profile: &SpacingProfile, residuals: &[f64], p: usize) -> Result<f64> {
    let u = &profile.positions;
    let mut total = 0.0;
    for (idx, b) in block_layout(u.len(), p)?.iter().enumerate() {
        let nodes = &u[b.first..=b.first + p];
        let values = &residuals[b.first..=b.first + p];
        let (lo, hi) = (edge_value(b.lower, u), edge_value(b.upper, u));
        total += integrate_interpolant(nodes, values, lo, hi)
            .ok_or(Error::DegenerateNodes { block: idx })?;
    }
    Ok(total)
}

/// Widths of the quadrature blocks for degree `p`.
pub fn block_widths(profile: &SpacingProfile, p: usize) -> Result<Vec<f64>> {
    let u = &profile.positions;
    Ok(block_layout(u.len(), p)?
        .iter()
        .map(|b| edge_value(b.upper, u) - edge_value(b.lower, u))
        .collect())
}

fn residual_term(profile: &SpacingProfile, residuals: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    match cfg.boundary {
        Boundary::Constant => Ok(trapezoid_residual_term(profile, residuals)),
        Boundary::Extrapolate => blocked_residual_term(profile, residuals, cfg.degree),
    }
}

/// Mean unlabeled prediction plus the quadrature residual term, both
/// computed on mapped positions.
pub fn paq_degree_p_estimate(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (lx, ux) = univariate(labeled, unlabeled)?;
    require_nonempty(labeled, unlabeled)?;
    let (profile, _) = map_positions(cfg.positions, &lx, &ux)?;
    let residuals: Vec<f64> = labeled.iter().map(LabeledSample::residual).collect();
    let term = residual_term(&profile, &profile.arrange(&residuals), cfg)?;
    let f: Vec<f64> = unlabeled.iter().map(|s| s.f).collect();
    Ok(mean(&f) + term)
}

/// Worst-case quadrature error for residuals obeying `cfg.bound`.
///
/// Constant boundaries: `(L2/12) sum D_i^3 + (L1/2)(D_0^2 + D_n^2)`.
/// Extrapolated blocks: `L/(p+1)! * sum |I_j|^(p+2)`.
pub fn remainder_bound(profile: &SpacingProfile, cfg: &QuadratureConfig) -> Result<f64> {
    let bound = cfg
        .bound
        .ok_or_else(|| Error::MissingBound("a confidence interval needs --deriv-bounds".into()))?;
    match (cfg.boundary, bound) {
        (Boundary::Constant, DerivBound::Trapezoid { first, second }) => {
            let g = &profile.gaps;
            let n = g.len() - 1;
            let interior: f64 = g[1..n].iter().map(|d| d * d * d).sum();
            Ok(second / 12.0 * interior + first / 2.0 * (g[0] * g[0] + g[n] * g[n]))
        }
        (Boundary::Extrapolate, DerivBound::Lagrange { top }) => {
            let p = cfg.degree;
            let fact: f64 = (1..=p + 1).map(|k| k as f64).product();
            let sum: f64 = block_widths(profile, p)?
                .iter()
                .map(|w| w.powi(p as i32 + 2))
                .sum();
            Ok(top / fact * sum)
        }
        (Boundary::Constant, _) => Err(Error::invalid(
            "degree-1 intervals need two bounds: first and second derivative",
        )),
        (Boundary::Extrapolate, _) => Err(Error::invalid(
            "degree-p intervals need one bound on the (p+1)-th derivative",
        )),
    }
}

/// PAQ point estimate with `z * sqrt(V_N / N) + B` half-width, where
/// `V_N` is the sample variance of `f(x~) + r(h(x~))` and `B` is
/// [`remainder_bound`].
pub fn paq_ci(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    cfg: &QuadratureConfig,
    alpha: f64,
) -> Result<EstimateReport> {
    cfg.validate()?;
    if cfg.bound.is_none() {
        return Err(Error::MissingBound("a confidence interval needs --deriv-bounds".into()));
    }
    let (lx, ux) = univariate(labeled, unlabeled)?;
    require_nonempty(labeled, unlabeled)?;
    let (profile, unl_pos) = map_positions(cfg.positions, &lx, &ux)?;
    let residuals: Vec<f64> = labeled.iter().map(LabeledSample::residual).collect();

    let mut lab_pos = vec![0.0; labeled.len()];
    for (rank, &i) in profile.order.iter().enumerate() {
        lab_pos[i] = profile.positions[rank];
    }
    let nn = nearest_labeled(&lab_pos, &unl_pos);
    let imputed: Vec<f64> = unlabeled
        .iter()
        .zip(&nn)
        .map(|(s, &j)| s.f + residuals[j])
        .collect();

    let estimate = match cfg.boundary {
        Boundary::Constant => mean(&imputed),
        Boundary::Extrapolate => {
            let f: Vec<f64> = unlabeled.iter().map(|s| s.f).collect();
            mean(&f) + blocked_residual_term(&profile, &profile.arrange(&residuals), cfg.degree)?
        }
    };
    let big_n = unlabeled.len();
    EstimateReport::with_remainder(
        cfg.to_string(),
        estimate,
        sample_variance(&imputed) / big_n as f64,
        remainder_bound(&profile, cfg)?,
        alpha,
        labeled.len(),
        big_n,
    )
}

/// Residual shapes on `[0, 1]` with known integrals.
#[derive(Debug, Clone, PartialEq)]
pub enum ResidualFamily {
    /// `sin(2 pi c u)`.
    Sine { cycles: f64 },
    /// `sum a_k u^k`.
    Polynomial { coeffs: Vec<f64> },
    /// `exp(a u)`.
    Exponential { rate: f64 },
}

impl ResidualFamily {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Sine { cycles } => (2.0 * std::f64::consts::PI * cycles * u).sin(),
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, a| acc * u + a),
            Self::Exponential { rate } => (rate * u).exp(),
        }
    }

    pub fn integral(&self) -> f64 {
        match self {
            Self::Sine { cycles } => {
                let w = 2.0 * std::f64::consts::PI * cycles;
                (1.0 - w.cos()) / w
            }
            Self::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, a)| a / (k + 1) as f64)
                .sum(),
            Self::Exponential { rate } if *rate == 0.0 => 1.0,
            Self::Exponential { rate } => rate.exp_m1() / rate,
        }
    }
}

impl std::str::FromStr for ResidualFamily {
    type Err = Error;

    /// `sine(cycles=1)`, `poly(0,1,2)`, `exp(rate=1)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            None => (s, ""),
            _ => return Err(Error::invalid(format!("malformed residual family '{s}'"))),
        };
        let value = |key: &str, default: f64| -> Result<f64> {
            if args.trim().is_empty() {
                return Ok(default);
            }
            let raw = args.trim().strip_prefix(key).and_then(|r| r.trim().strip_prefix('='));
            raw.unwrap_or(args)
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad {key} in '{s}'")))
        };
        match name.trim() {
            "sine" | "sin" => Ok(Self::Sine { cycles: value("cycles", 1.0)? }),
            "exp" => Ok(Self::Exponential { rate: value("rate", 1.0)? }),
            "poly" => {
                let coeffs = args
                    .split(',')
                    .map(|c| c.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::invalid(format!("bad coefficients in '{s}'")))?;
                Ok(Self::Polynomial { coeffs })
            }
            other => Err(Error::invalid(format!("unknown residual family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub mean_bias: f64,
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateProbe {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log |mean_bias|` on `log n`.
    pub bias_slope: f64,
    /// Least-squares slope of `log var` on `log n`.
    pub var_slope: f64,
}

impl RateProbe {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,mean_bias,var\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.n, fmt12(r.mean_bias), fmt12(r.var)));
        }
        out.push_str(&format!("slope,{},{}\n", fmt12(self.bias_slope), fmt12(self.var_slope)));
        out
    }
}

/// Monte Carlo error of the residual term on `n` i.i.d. uniform positions
/// with exact residuals `family(u)`.
pub fn rate_probe(
    family: &ResidualFamily,
    degree: usize,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<RateProbe> {
    if reps < 2 {
        return Err(Error::invalid("rate probe needs at least 2 replications"));
    }
    if n_grid.len() < 2 {
        return Err(Error::invalid("rate probe needs at least two sample sizes"));
    }
    let cfg = QuadratureConfig::new(degree);
    cfg.validate()?;
    let truth = family.integral();
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let errors: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = RandomSource::new(seed, stream_id(2, n, rep)).rng();
                let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let profile = SpacingProfile::from_positions(&raw)?;
                let values: Vec<f64> = profile.positions.iter().map(|&u| family.eval(u)).collect();
                Ok(residual_term(&profile, &values, &cfg)? - truth)
            })
            .collect::<Result<_>>()?;
        rows.push(RateRow { n, mean_bias: mean(&errors), var: sample_variance(&errors) });
    }
    let log_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let log_bias: Vec<f64> = rows.iter().map(|r| r.mean_bias.abs().ln()).collect();
    let log_var: Vec<f64> = rows.iter().map(|r| r.var.ln()).collect();
    Ok(RateProbe {
        bias_slope: ols_slope(&log_n, &log_bias),
        var_slope: ols_slope(&log_n, &log_var),
        rows,
    })
}
