//! The residual-tree (PART) estimator of `E[Y]`.
//!
//! The tree is grown greedily on the variance-of-mixture-of-splits
//! criterion
//!
//! ```text
//! VMS(k, s) = p_L^2 * s_L^2 / n_L + p_R^2 * s_R^2 / n_R
//! ```
//!
//! where `p` is a child's unlabeled mass and `s^2` the sample variance of
//! the labeled residuals inside it. The estimate is the unlabeled
//! prediction mean plus the mass-weighted leaf residual means.

use crate::baseline::{prediction_term, require_labeled, require_unlabeled};
use crate::data::{Dataset, LabeledSample, UnlabeledSample};
use crate::error::Result;
use crate::report::{fmt12, EstimateReport};
use crate::stats::{mean, sample_variance};
use crate::tree::{grow, LeafSummary, NodeInfo, Objective, Region, SplitRule, Tree, TreeConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LeafStats {
    pub region: Region,
    pub n_leaf: usize,
    pub mean_residual: f64,
    pub var_residual: f64,
    pub mass: f64,
}

impl LeafStats {
    /// `p^2 * s^2 / n`.
    pub fn variance_term(&self) -> f64 {
        self.mass * self.mass * self.var_residual / self.n_leaf as f64
    }
}

impl LeafSummary for LeafStats {
    fn summary(&self) -> String {
        format!(
            "n={} mean_residual={} var_residual={} mass={}",
            self.n_leaf,
            fmt12(self.mean_residual),
            fmt12(self.var_residual),
            fmt12(self.mass)
        )
    }
}

struct MeanObjective {
    residuals: Vec<f64>,
    min_child: usize,
}

impl MeanObjective {
    fn gather(&self, labeled: &[usize]) -> Vec<f64> {
        labeled.iter().map(|&i| self.residuals[i]).collect()
    }
}

impl Objective for MeanObjective {
    type Leaf = LeafStats;

    fn min_child(&self) -> usize {
        self.min_child
    }

    fn cell_term(&self, labeled: &[usize], mass: f64) -> Option<f64> {
        if labeled.len() < self.min_child {
            return None;
        }
        let r = self.gather(labeled);
        Some(mass * mass * sample_variance(&r) / r.len() as f64)
    }

    fn leaf(&self, info: &NodeInfo, labeled: &[usize]) -> Result<LeafStats> {
        let r = self.gather(labeled);
        Ok(LeafStats {
            region: info.region.clone(),
            n_leaf: r.len(),
            mean_residual: mean(&r),
            var_residual: sample_variance(&r),
            mass: info.mass,
        })
    }
}

/// Grows the residual tree. Leaves hold at least `max(min_leaf, 2)`
/// labeled points.
pub fn build_tree(ds: &Dataset, config: TreeConfig) -> Result<Tree<LeafStats>> {
    let objective = MeanObjective {
        residuals: ds.residuals(),
        min_child: config.min_leaf.max(2),
    };
    grow(&objective, ds, config)
}

/// Unlabeled fraction inside `region`.
pub fn unlabeled_mass(region: &Region, unlabeled: &[UnlabeledSample]) -> f64 {
    unlabeled.iter().filter(|s| region.contains(&s.x)).count() as f64 / unlabeled.len() as f64
}

/// The split criterion for one candidate, evaluated from scratch.
///
/// `labeled` are the labeled points in `region`; `mass` gives the
/// unlabeled mass of a sub-region. `None` when either child holds fewer
/// than `max(min_leaf, 2)` labeled points.
pub fn vms(
    split: &SplitRule,
    region: &Region,
    labeled: &[LabeledSample],
    min_leaf: usize,
    mass: impl Fn(&Region) -> f64,
) -> Option<f64> {
    let floor = min_leaf.max(2);
    let (left, right) = region.split(split);
    let mut term = 0.0;
    for child in [&left, &right] {
        let r: Vec<f64> = labeled
            .iter()
            .filter(|s| child.contains(&s.x))
            .map(LabeledSample::residual)
            .collect();
        if r.len() < floor {
            return None;
        }
        let p = mass(child);
        term += p * p * sample_variance(&r) / r.len() as f64;
    }
    Some(term)
}

/// PART point estimate and Wald interval together with the grown tree.
pub fn part_mean_ci(
    ds: &Dataset,
    config: TreeConfig,
    alpha: f64,
) -> Result<(EstimateReport, Tree<LeafStats>)> {
    require_labeled(&ds.labeled, 2)?;
    require_unlabeled(&ds.unlabeled)?;
    let tree = build_tree(ds, config)?;
    let (f_mean, f_var) = prediction_term(&ds.unlabeled);
    let leaves = tree.leaves();
    let correction: f64 = leaves.iter().map(|l| l.mass * l.mean_residual).sum();
    let variance: f64 = leaves.iter().map(|l| l.variance_term()).sum::<f64>() + f_var;
    let mut report = EstimateReport::wald(
        format!("part(depth={},min_leaf={})", config.max_depth, config.min_leaf),
        f_mean + correction,
        variance,
        alpha,
        ds.n(),
        ds.big_n(),
    )?;
    report.leaves = Some(leaves.len());
    Ok((report, tree))
}

/// Finite-sample coverage penalty for a tree with at most `leaves` leaves:
/// `sqrt(2 L log(d n) / n) + (n d)^(-L)`.
pub fn coverage_correction(leaves: usize, n: usize, d: usize) -> f64 {
    let (l, n, d) = (leaves as f64, n as f64, d as f64);
    (2.0 * l * (d * n).ln() / n).sqrt() + (n * d).powf(-l)
}
