//! Axis-aligned regions and the greedy partition builder shared by the
//! mean and regression trees.
//!
//! A node's candidate thresholds on coordinate `k` are the midpoints
//! between consecutive nearest-rank quantiles (levels `j/n`, `n` the total
//! labeled count) of the unlabeled `k`-th coordinate values. The builder
//! picks the feasible `(k, s)` with the smallest objective, breaking ties
//! towards the smaller `k` and then the smaller `s`.

use std::fmt::{self, Write as _};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::report::fmt12;
use crate::stats::quantiles_of_sorted;

/// Half-open box: `x` lies inside iff `lower_k < x_k <= upper_k` for all `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Region {
    pub fn whole(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| lo < v && v <= hi)
    }

    /// `(left, right)` children: `x_k <= s` and `x_k > s`.
    pub fn split(&self, rule: &SplitRule) -> (Region, Region) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[rule.coord] = left.upper[rule.coord].min(rule.threshold);
        right.lower[rule.coord] = right.lower[rule.coord].max(rule.threshold);
        (left, right)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_infinite() && hi.is_infinite() {
                continue;
            }
            if !first {
                f.write_str(" & ")?;
            }
            first = false;
            match (lo.is_finite(), hi.is_finite()) {
                (true, true) => write!(f, "{}<x[{k}]<={}", fmt12(*lo), fmt12(*hi))?,
                (true, false) => write!(f, "x[{k}]>{}", fmt12(*lo))?,
                _ => write!(f, "x[{k}]<={}", fmt12(*hi))?,
            }
        }
        if first {
            f.write_str("all")?;
        }
        Ok(())
    }
}

/// Send `x` left iff `x[coord] <= threshold`. Coordinates are 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRule {
    pub coord: usize,
    pub threshold: f64,
}

impl SplitRule {
    pub fn goes_left(&self, x: &[f64]) -> bool {
        x[self.coord] <= self.threshold
    }
}

/// Midpoints `(q_j + q_{j+1}) / 2`, `j = 1..n-2`, of the nearest-rank
/// quantiles of `values` at levels `1/n, ..., (n-1)/n`; sorted and
/// deduplicated. Empty when every quantile coincides.
pub fn candidate_splits(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("candidate splits of an empty sequence"));
    }
    if n < 3 {
        return Err(Error::invalid(format!("candidate splits need n >= 3, got {n}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(candidates_of_sorted(&sorted, n))
}

fn candidates_of_sorted(sorted: &[f64], n: usize) -> Vec<f64> {
    let q = quantiles_of_sorted(sorted, n);
    let mut mids: Vec<f64> = q
        .windows(2)
        .filter(|w| w[0] < w[1])
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect();
    mids.dedup();
    mids
}

/// Where candidate thresholds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateScope {
    /// Quantiles of the unlabeled points inside the node's region.
    #[default]
    Region,
    /// Quantiles of all unlabeled points, computed once.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeConfig {
    pub max_depth: usize,
    /// User minimum leaf size; floored by each objective's own minimum.
    pub min_leaf: usize,
    pub scope: CandidateScope,
    /// Stop when the best split does not strictly lower the node's own
    /// variance term. Off by default.
    pub early_stop: bool,
}

impl TreeConfig {
    pub fn new(max_depth: usize, min_leaf: usize) -> Self {
        Self {
            max_depth,
            min_leaf,
            scope: CandidateScope::Region,
            early_stop: false,
        }
    }
}

/// Counts and unlabeled mass of a node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub region: Region,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub mass: f64,
    /// The node's own `p^2 * var / n` term, when defined.
    pub own_term: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node<L> {
    Leaf {
        info: NodeInfo,
        stats: L,
    },
    Split {
        info: NodeInfo,
        rule: SplitRule,
        /// Objective value of the chosen split.
        objective: f64,
        left: Box<Node<L>>,
        right: Box<Node<L>>,
    },
}

impl<L> Node<L> {
    pub fn info(&self) -> &NodeInfo {
        match self {
            Node::Leaf { info, .. } | Node::Split { info, .. } => info,
        }
    }
}

/// A grown partition with per-leaf statistics `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree<L> {
    pub root: Node<L>,
    pub config: TreeConfig,
}

impl<L> Tree<L> {
    pub fn leaves(&self) -> Vec<&L> {
        fn walk<'a, L>(node: &'a Node<L>, out: &mut Vec<&'a L>) {
            match node {
                Node::Leaf { stats, .. } => out.push(stats),
                Node::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().len()
    }

    pub fn depth(&self) -> usize {
        fn walk<L>(node: &Node<L>) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// Largest leaf count the depth limit allows.
    pub fn leaf_cap(&self) -> usize {
        1usize << self.config.max_depth.min(usize::BITS as usize - 2)
    }

    /// Every split rule in pre-order.
    pub fn splits(&self) -> Vec<SplitRule> {
        fn walk<L>(node: &Node<L>, out: &mut Vec<SplitRule>) {
            if let Node::Split {
                rule, left, right, ..
            } = node
            {
                out.push(*rule);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }
}

/// One-line description of a leaf's statistics for tree dumps.
pub trait LeafSummary {
    fn summary(&self) -> String;
}

impl<L: LeafSummary> Tree<L> {
    /// Indented text form: one line per node, children indented by two
    /// spaces, left child first.
    pub fn dump(&self) -> String {
        fn walk<L: LeafSummary>(node: &Node<L>, depth: usize, out: &mut String) {
            let pad = "  ".repeat(depth);
            match node {
                Node::Leaf { stats, .. } => {
                    let _ = writeln!(out, "{pad}leaf {}", stats.summary());
                }
                Node::Split {
                    info,
                    rule,
                    objective,
                    left,
                    right,
                } => {
                    let _ = writeln!(
                        out,
                        "{pad}split coord={} threshold={} n={} mass={} objective={}",
                        rule.coord,
                        fmt12(rule.threshold),
                        info.n_labeled,
                        fmt12(info.mass),
                        fmt12(*objective)
                    );
                    walk(left, depth + 1, out);
                    walk(right, depth + 1, out);
                }
            }
        }
        let mut out = String::new();
        walk(&self.root, 0, &mut out);
        out
    }
}

/// The per-cell variance functional a tree minimizes.
pub(crate) trait Objective {
    type Leaf;

    /// Smallest labeled count a child may hold.
    fn min_child(&self) -> usize;

    /// `p^2 * var / n` for a cell holding the given labeled rows and
    /// unlabeled mass; `None` where the cell is infeasible.
    fn cell_term(&self, labeled: &[usize], mass: f64) -> Option<f64>;

    fn leaf(&self, info: &NodeInfo, labeled: &[usize]) -> Result<Self::Leaf>;
}

pub(crate) fn grow<O: Objective>(
    objective: &O,
    ds: &Dataset,
    config: TreeConfig,
) -> Result<Tree<O::Leaf>> {
    let n = ds.n();
    let min_child = objective.min_child();
    if n < min_child {
        return Err(Error::invalid(format!(
            "labeled size {n} is below the minimum leaf size {min_child}"
        )));
    }
    if ds.big_n() == 0 {
        return Err(Error::InsufficientData {
            what: "unlabeled sample",
            needed: 1,
            got: 0,
        });
    }
    let global = match config.scope {
        CandidateScope::Global if n >= 3 => Some(
            (0..ds.dim())
                .map(|k| {
                    let mut v: Vec<f64> = ds.unlabeled.iter().map(|s| s.x[k]).collect();
                    v.sort_by(f64::total_cmp);
                    candidates_of_sorted(&v, n)
                })
                .collect::<Vec<_>>(),
        ),
        _ => None,
    };
    let builder = Builder {
        objective,
        ds,
        config,
        min_child,
        global,
    };
    let root = builder.node(
        Region::whole(ds.dim()),
        (0..n).collect(),
        (0..ds.big_n()).collect(),
        0,
    )?;
    Ok(Tree { root, config })
}

struct Builder<'a, O> {
    objective: &'a O,
    ds: &'a Dataset,
    config: TreeConfig,
    min_child: usize,
    global: Option<Vec<Vec<f64>>>,
}

struct BestSplit {
    rule: SplitRule,
    value: f64,
}

impl<O: Objective> Builder<'_, O> {
    fn node(
        &self,
        region: Region,
        labeled: Vec<usize>,
        unlabeled: Vec<usize>,
        depth: usize,
    ) -> Result<Node<O::Leaf>> {
        let big_n = self.ds.big_n() as f64;
        let mass = unlabeled.len() as f64 / big_n;
        let info = NodeInfo {
            region,
            n_labeled: labeled.len(),
            n_unlabeled: unlabeled.len(),
            mass,
            own_term: self.objective.cell_term(&labeled, mass),
        };

        let can_split = depth < self.config.max_depth
            && labeled.len() >= 2 * self.min_child
            && self.ds.n() >= 3;
        let best = if can_split {
            self.best_split(&labeled, &unlabeled)
        } else {
            None
        };
        let best = best.filter(|b| {
            !self.config.early_stop || info.own_term.is_some_and(|own| b.value < own)
        });

        let Some(best) = best else {
            let stats = self.objective.leaf(&info, &labeled)?;
            return Ok(Node::Leaf { info, stats });
        };

        let rule = best.rule;
        let (left_region, right_region) = info.region.split(&rule);
        let (l_lab, r_lab): (Vec<usize>, Vec<usize>) = labeled
            .iter()
            .partition(|&&i| rule.goes_left(&self.ds.labeled[i].x));
        let (l_unl, r_unl): (Vec<usize>, Vec<usize>) = unlabeled
            .iter()
            .partition(|&&i| rule.goes_left(&self.ds.unlabeled[i].x));
        let left = self.node(left_region, l_lab, l_unl, depth + 1)?;
        let right = self.node(right_region, r_lab, r_unl, depth + 1)?;
        Ok(Node::Split {
            info,
            rule,
            objective: best.value,
            left: Box::new(left),
            right: Box::new(right),
        })
    }

    fn best_split(&self, labeled: &[usize], unlabeled: &[usize]) -> Option<BestSplit> {
        let ds = self.ds;
        let big_n = ds.big_n() as f64;
        let mut best: Option<BestSplit> = None;
        for k in 0..ds.dim() {
            let mut unl_vals: Vec<f64> = unlabeled.iter().map(|&i| ds.unlabeled[i].x[k]).collect();
            unl_vals.sort_by(f64::total_cmp);
            let region_candidates;
            let candidates: &[f64] = match &self.global {
                Some(g) => &g[k],
                None => {
                    if unl_vals.is_empty() {
                        continue;
                    }
                    region_candidates = candidates_of_sorted(&unl_vals, ds.n());
                    &region_candidates
                }
            };
            let mut by_coord = labeled.to_vec();
            by_coord.sort_by(|&a, &b| ds.labeled[a].x[k].total_cmp(&ds.labeled[b].x[k]));
            for &s in candidates {
                let split_at = by_coord.partition_point(|&i| ds.labeled[i].x[k] <= s);
                let (left, right) = by_coord.split_at(split_at);
                if left.len() < self.min_child || right.len() < self.min_child {
                    continue;
                }
                let n_left_unl = unl_vals.partition_point(|&v| v <= s);
                let p_left = n_left_unl as f64 / big_n;
                let p_right = (unl_vals.len() - n_left_unl) as f64 / big_n;
                let (Some(a), Some(b)) = (
                    self.objective.cell_term(left, p_left),
                    self.objective.cell_term(right, p_right),
                ) else {
                    continue;
                };
                let value = a + b;
                if best.as_ref().is_none_or(|b| value < b.value) {
                    best = Some(BestSplit {
                        rule: SplitRule { coord: k, threshold: s },
                        value,
                    });
                }
            }
        }
        best
    }
}
