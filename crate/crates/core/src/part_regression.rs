//! Residual trees for a single OLS coefficient.
//!
//! The prediction-only fit `theta~ = Sigma~^-1 (1/N) sum x~ f(x~)` is
//! debiased leaf by leaf with
//!
//! ```text
//! R_hat = (1/n_R) Sigma~^-1 X_R^T (Y_R - f(X_R))
//! M_hat = sample covariance of x (y - f(x)) over the region
//! V_hat = Sigma~^-1 M_hat Sigma~^-1
//! ```
//!
//! and splits minimize `p_L^2 V_L[k,k] / n_L + p_R^2 V_R[k,k] / n_R`.
//!
//! `M_hat` is centered at `Sigma~ R_hat`, the mean of `x (y - f(x))`.
//! Centering each residual at `x^T R_hat` instead would estimate the
//! variance of a labeled-Gram OLS fit, not of `R_hat`.

use nalgebra::{DMatrix, DVector};

use crate::baseline::{require_labeled, require_unlabeled};
use crate::data::{Dataset, LabeledSample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::report::{fmt12, EstimateReport};
use crate::stats::sample_variance;
use crate::tree::{grow, LeafSummary, NodeInfo, Objective, Region, SplitRule, Tree, TreeConfig};

/// Largest accepted condition number of the unlabeled second-moment matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSummary {
    /// `(1/N) sum x~ x~^T`.
    pub sigma_tilde: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub condition: f64,
    /// `Sigma~^-1 (1/N) sum x~ f(x~)`.
    pub theta_tilde: DVector<f64>,
    /// Sandwich covariance of `theta_tilde` over the unlabeled draw,
    /// already divided by `N`.
    pub theta_tilde_cov: DMatrix<f64>,
}

fn row(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn design_summary(unlabeled: &[UnlabeledSample]) -> Result<DesignSummary> {
    require_unlabeled(unlabeled)?;
    let d = unlabeled[0].x.len();
    let big_n = unlabeled.len();
    if big_n < d {
        return Err(Error::InsufficientData {
            what: "unlabeled rows for the design matrix",
            needed: d,
            got: big_n,
        });
    }
    let mut sigma = DMatrix::<f64>::zeros(d, d);
    let mut xf = DVector::<f64>::zeros(d);
    for s in unlabeled {
        let x = row(&s.x);
        sigma.ger(1.0, &x, &x, 1.0);
        xf.axpy(s.f, &x, 1.0);
    }
    sigma /= big_n as f64;
    xf /= big_n as f64;
    // Exact symmetry before the eigen-decomposition.
    let sigma = (&sigma + sigma.transpose()) * 0.5;

    let eig = sigma.clone().symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let sigma_inv = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    let theta_tilde = &sigma_inv * xf;

    let mut meat = DMatrix::<f64>::zeros(d, d);
    for s in unlabeled {
        let x = row(&s.x);
        let e = s.f - x.dot(&theta_tilde);
        meat.ger(e * e, &x, &x, 1.0);
    }
    if big_n > 1 {
        meat /= (big_n - 1) as f64;
    }
    let theta_tilde_cov = &sigma_inv * meat * &sigma_inv / big_n as f64;

    Ok(DesignSummary {
        sigma_tilde: sigma,
        sigma_inv,
        condition,
        theta_tilde,
        theta_tilde_cov,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionRegressionStats {
    pub region: Region,
    pub n_r: usize,
    pub r_hat: DVector<f64>,
    pub m_hat: DMatrix<f64>,
    pub v_hat: DMatrix<f64>,
    pub mass: f64,
    /// Target coordinate the tree was grown for.
    pub target: usize,
}

impl RegionRegressionStats {
    pub fn variance_term(&self) -> f64 {
        let k = self.target;
        self.mass * self.mass * self.v_hat[(k, k)] / self.n_r as f64
    }
}

impl LeafSummary for RegionRegressionStats {
    fn summary(&self) -> String {
        let k = self.target;
        format!(
            "n={} mass={} r_hat[{k}]={} v_hat[{k},{k}]={}",
            self.n_r,
            fmt12(self.mass),
            fmt12(self.r_hat[k]),
            fmt12(self.v_hat[(k, k)])
        )
    }
}

fn residual_vector(points: &[&LabeledSample], summary: &DesignSummary) -> DVector<f64> {
    let d = summary.theta_tilde.len();
    let mut acc = DVector::<f64>::zeros(d);
    for s in points {
        acc.axpy(s.residual(), &row(&s.x), 1.0);
    }
    &summary.sigma_inv * acc / points.len() as f64
}

fn region_stats(
    region: &Region,
    points: &[&LabeledSample],
    summary: &DesignSummary,
    mass: f64,
    target: usize,
) -> Result<RegionRegressionStats> {
    let d = summary.theta_tilde.len();
    if points.len() < d + 1 {
        return Err(Error::InsufficientData {
            what: "labeled points in a regression region",
            needed: d + 1,
            got: points.len(),
        });
    }
    let r_hat = residual_vector(points, summary);
    let center = &summary.sigma_tilde * &r_hat;
    let mut m_hat = DMatrix::<f64>::zeros(d, d);
    for s in points {
        let e = row(&s.x) * s.residual() - &center;
        m_hat.ger(1.0, &e, &e, 1.0);
    }
    m_hat /= (points.len() - 1) as f64;
    let v_hat = &summary.sigma_inv * &m_hat * &summary.sigma_inv;
    Ok(RegionRegressionStats {
        region: region.clone(),
        n_r: points.len(),
        r_hat,
        m_hat,
        v_hat,
        mass,
        target,
    })
}

/// Residual vector and covariance estimates for the labeled points
/// falling inside `region`. The target coordinate only affects
/// [`RegionRegressionStats::variance_term`].
pub fn region_regression_stats(
    region: &Region,
    labeled: &[LabeledSample],
    summary: &DesignSummary,
    mass: f64,
    target: usize,
) -> Result<RegionRegressionStats> {
    let points: Vec<&LabeledSample> = labeled.iter().filter(|s| region.contains(&s.x)).collect();
    region_stats(region, &points, summary, mass, target)
}

/// `V_hat[k,k]`: the sample variance of `r * (Sigma~^-1 x)[k]`.
fn v_kk(points: &[&LabeledSample], summary: &DesignSummary, k: usize) -> f64 {
    let a = summary.sigma_inv.row(k).transpose();
    let w: Vec<f64> = points
        .iter()
        .map(|s| s.residual() * a.dot(&row(&s.x)))
        .collect();
    sample_variance(&w)
}

struct RegressionObjective<'a> {
    ds: &'a Dataset,
    summary: &'a DesignSummary,
    target: usize,
    min_child: usize,
}

impl RegressionObjective<'_> {
    fn points(&self, labeled: &[usize]) -> Vec<&LabeledSample> {
        labeled.iter().map(|&i| &self.ds.labeled[i]).collect()
    }
}

impl Objective for RegressionObjective<'_> {
    type Leaf = RegionRegressionStats;

    fn min_child(&self) -> usize {
        self.min_child
    }

    fn cell_term(&self, labeled: &[usize], mass: f64) -> Option<f64> {
        if labeled.len() < self.min_child {
            return None;
        }
        let points = self.points(labeled);
        let v = v_kk(&points, self.summary, self.target);
        Some(mass * mass * v / labeled.len() as f64)
    }

    fn leaf(&self, info: &NodeInfo, labeled: &[usize]) -> Result<RegionRegressionStats> {
        region_stats(
            &info.region,
            &self.points(labeled),
            self.summary,
            info.mass,
            self.target,
        )
    }
}

fn check_target(dim: usize, k: usize) -> Result<()> {
    if k >= dim {
        return Err(Error::invalid(format!(
            "coefficient index {k} out of range for dimension {dim}"
        )));
    }
    Ok(())
}

/// Split criterion for coefficient `k`, evaluated from scratch.
///
/// `None` when a child holds fewer than `max(min_leaf, d + 1)` labeled
/// points.
pub fn vms_lr(
    split: &SplitRule,
    region: &Region,
    labeled: &[LabeledSample],
    summary: &DesignSummary,
    k: usize,
    min_leaf: usize,
    mass: impl Fn(&Region) -> f64,
) -> Option<f64> {
    let d = summary.theta_tilde.len();
    let floor = min_leaf.max(d + 1);
    let (left, right) = region.split(split);
    let mut term = 0.0;
    for child in [&left, &right] {
        let points: Vec<&LabeledSample> =
            labeled.iter().filter(|s| child.contains(&s.x)).collect();
        if points.len() < floor {
            return None;
        }
        let p = mass(child);
        term += p * p * v_kk(&points, summary, k) / points.len() as f64;
    }
    Some(term)
}

pub fn build_regression_tree(
    ds: &Dataset,
    summary: &DesignSummary,
    k: usize,
    config: TreeConfig,
) -> Result<Tree<RegionRegressionStats>> {
    check_target(ds.dim(), k)?;
    let objective = RegressionObjective {
        ds,
        summary,
        target: k,
        min_child: config.min_leaf.max(ds.dim() + 1),
    };
    grow(&objective, ds, config)
}

/// Debiased estimate and Wald interval for coefficient `k`.
pub fn part_ols_ci(
    ds: &Dataset,
    k: usize,
    config: TreeConfig,
    alpha: f64,
) -> Result<(EstimateReport, Tree<RegionRegressionStats>)> {
    check_target(ds.dim(), k)?;
    require_labeled(&ds.labeled, 2 * (ds.dim() + 1))?;
    let summary = design_summary(&ds.unlabeled)?;
    let tree = build_regression_tree(ds, &summary, k, config)?;
    let leaves = tree.leaves();
    let correction: f64 = leaves.iter().map(|l| l.mass * l.r_hat[k]).sum();
    let variance: f64 =
        leaves.iter().map(|l| l.variance_term()).sum::<f64>() + summary.theta_tilde_cov[(k, k)];
    let mut report = EstimateReport::wald(
        format!(
            "part_ols(coef={k},depth={},min_leaf={})",
            config.max_depth, config.min_leaf
        ),
        summary.theta_tilde[k] + correction,
        variance,
        alpha,
        ds.n(),
        ds.big_n(),
    )?;
    report.leaves = Some(leaves.len());
    Ok((report, tree))
}

/// Ordinary least squares of `y` on `x` over labeled rows.
pub fn ols_coefficients(labeled: &[LabeledSample]) -> Result<DVector<f64>> {
    require_labeled(labeled, 1)?;
    let d = labeled[0].x.len();
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    for s in labeled {
        let x = row(&s.x);
        xtx.ger(1.0, &x, &x, 1.0);
        xty.axpy(s.y, &x, 1.0);
    }
    let chol = xtx
        .cholesky()
        .ok_or(Error::Conditioning { condition: f64::INFINITY })?;
    Ok(chol.solve(&xty))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unl(x: &[f64], f: f64) -> UnlabeledSample {
        UnlabeledSample::new(x.to_vec(), f)
    }

    #[test]
    fn summary_of_unit_rows() {
        let s = design_summary(&[unl(&[1.0, 0.0], 1.0), unl(&[0.0, 1.0], 2.0)]).unwrap();
        assert!((s.sigma_tilde.clone() - DMatrix::from_diagonal_element(2, 2, 0.5)).norm() < 1e-15);
        assert!((s.sigma_inv.clone() - DMatrix::from_diagonal_element(2, 2, 2.0)).norm() < 1e-12);
        let id = &s.sigma_inv * &s.sigma_tilde;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-8);
    }

    #[test]
    fn exact_linear_predictor_recovered() {
        let beta = [0.7, -1.3, 2.0];
        let rows: Vec<_> = (0..50)
            .map(|i| {
                let x = [1.0, (i as f64 * 0.37).sin(), (i % 7) as f64];
                let f = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                unl(&x, f)
            })
            .collect();
        let s = design_summary(&rows).unwrap();
        for (t, b) in s.theta_tilde.iter().zip(beta) {
            assert!((t - b).abs() < 1e-10);
        }
        assert!(s.theta_tilde_cov.norm() < 1e-18);
    }

    #[test]
    fn duplicated_column_is_ill_conditioned() {
        let rows: Vec<_> = (0..20).map(|i| unl(&[i as f64, i as f64], 1.0)).collect();
        assert!(matches!(design_summary(&rows), Err(Error::Conditioning { .. })));
    }

    #[test]
    fn one_dimensional_hand_example() {
        let summary = design_summary(&[unl(&[1.0], 0.0)]).unwrap();
        let labeled = [
            LabeledSample::new(vec![1.0], 1.0, 0.0),
            LabeledSample::new(vec![1.0], 3.0, 0.0),
        ];
        let st = region_regression_stats(&Region::whole(1), &labeled, &summary, 1.0, 0).unwrap();
        assert!((st.r_hat[0] - 2.0).abs() < 1e-15);
        assert!((st.m_hat[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((st.v_hat[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_residuals_give_zero_stats() {
        let summary = design_summary(&[unl(&[1.0, 0.5], 0.0), unl(&[0.2, 1.0], 0.0)]).unwrap();
        let labeled: Vec<_> = (0..5)
            .map(|i| LabeledSample::new(vec![i as f64, 1.0], 2.0, 2.0))
            .collect();
        let st = region_regression_stats(&Region::whole(2), &labeled, &summary, 1.0, 0).unwrap();
        assert_eq!(st.r_hat.norm(), 0.0);
        assert_eq!(st.m_hat.norm(), 0.0);
    }

    #[test]
    fn too_few_points_in_region() {
        let summary = design_summary(&[unl(&[1.0, 0.5], 0.0), unl(&[0.2, 1.0], 0.0)]).unwrap();
        let labeled: Vec<_> = (0..2)
            .map(|i| LabeledSample::new(vec![i as f64, 1.0], 2.0, 2.0))
            .collect();
        assert!(matches!(
            region_regression_stats(&Region::whole(2), &labeled, &summary, 1.0, 0),
            Err(Error::InsufficientData { needed: 3, .. })
        ));
    }

    #[test]
    fn v_kk_matches_full_matrix() {
        let summary = design_summary(&[
            unl(&[1.0, 0.5], 0.0),
            unl(&[0.2, 1.0], 0.0),
            unl(&[-0.4, 0.3], 0.0),
        ])
        .unwrap();
        let labeled: Vec<_> = (0..9)
            .map(|i| {
                let t = i as f64;
                LabeledSample::new(vec![t.cos(), 0.3 * t], (2.0 * t).sin(), 0.1 * t)
            })
            .collect();
        let st = region_regression_stats(&Region::whole(2), &labeled, &summary, 1.0, 1).unwrap();
        let points: Vec<_> = labeled.iter().collect();
        for k in 0..2 {
            assert!((v_kk(&points, &summary, k) - st.v_hat[(k, k)]).abs() < 1e-10);
        }
    }

    #[test]
    fn vms_lr_hand_example() {
        let summary = design_summary(&[unl(&[1.0], 0.0)]).unwrap();
        // Left: x r = {1, 3}; right: x r = {2, 2}.
        let labeled = [
            LabeledSample::new(vec![0.5], 2.0, 0.0),
            LabeledSample::new(vec![0.5], 6.0, 0.0),
            LabeledSample::new(vec![2.0], 1.0, 0.0),
            LabeledSample::new(vec![2.0], 1.0, 0.0),
        ];
        let rule = SplitRule { coord: 0, threshold: 1.0 };
        let v = vms_lr(&rule, &Region::whole(1), &labeled, &summary, 0, 2, |_| 0.5).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        let swapped: Vec<_> = labeled.iter().rev().cloned().collect();
        let w = vms_lr(&rule, &Region::whole(1), &swapped, &summary, 0, 2, |_| 0.5).unwrap();
        assert_eq!(v, w);
        let thin = &labeled[..3];
        assert_eq!(vms_lr(&rule, &Region::whole(1), thin, &summary, 0, 1, |_| 0.5), None);
    }

    fn gaussian_like(n: usize, big_n: usize) -> Dataset {
        let point = |i: usize, salt: f64| {
            let t = i as f64 * 0.618 + salt;
            let z = (t * 7.3).sin() * 1.5;
            vec![1.0, z]
        };
        let labeled = (0..n)
            .map(|i| {
                let x = point(i, 0.0);
                let y = 1.0 + 2.0 * x[1] + (i as f64 * 1.7).cos();
                let f = 0.8 * (1.0 + 2.0 * x[1]) + 0.3 * x[1] * x[1];
                LabeledSample::new(x, y, f)
            })
            .collect();
        let unlabeled = (0..big_n)
            .map(|i| {
                let x = point(i, 0.31);
                let f = 0.8 * (1.0 + 2.0 * x[1]) + 0.3 * x[1] * x[1];
                UnlabeledSample::new(x, f)
            })
            .collect();
        Dataset::new(labeled, unlabeled, 2).unwrap()
    }

    #[test]
    fn debias_telescoping() {
        let ds = gaussian_like(40, 300);
        let summary = design_summary(&ds.unlabeled).unwrap();
        let st = region_regression_stats(&Region::whole(2), &ds.labeled, &summary, 1.0, 0).unwrap();
        let mut a = DVector::<f64>::zeros(2);
        for s in &ds.unlabeled {
            a.axpy(s.f / 300.0, &row(&s.x), 1.0);
        }
        for s in &ds.labeled {
            a.axpy(s.residual() / 40.0, &row(&s.x), 1.0);
        }
        let direct = &summary.sigma_inv * a;
        let via = &summary.theta_tilde + &st.r_hat;
        assert!((direct - via).norm() < 1e-12);

        for k in 0..2 {
            let (r, tree) = part_ols_ci(&ds, k, TreeConfig::new(0, 3), 0.05).unwrap();
            assert_eq!(tree.leaf_count(), 1);
            assert!((r.estimate - (summary.theta_tilde[k] + st.r_hat[k])).abs() < 1e-10);
        }
    }

    #[test]
    fn perfect_linear_model() {
        let labeled: Vec<_> = (0..30)
            .map(|i| {
                let z = (i as f64 * 0.9).sin();
                LabeledSample::new(vec![1.0, z], 3.0 - z, 3.0 - z)
            })
            .collect();
        let unlabeled: Vec<_> = (0..200)
            .map(|i| {
                let z = (i as f64 * 0.37).cos();
                UnlabeledSample::new(vec![1.0, z], 3.0 - z)
            })
            .collect();
        let ds = Dataset::new(labeled, unlabeled, 2).unwrap();
        let (r, _) = part_ols_ci(&ds, 1, TreeConfig::new(2, 4), 0.05).unwrap();
        assert!((r.estimate + 1.0).abs() < 1e-8);
        assert!(r.half_width < 1e-6);
    }

    #[test]
    fn regression_tree_conservation() {
        let ds = gaussian_like(120, 600);
        let (_, tree) = part_ols_ci(&ds, 1, TreeConfig::new(2, 5), 0.05).unwrap();
        let leaves = tree.leaves();
        assert_eq!(leaves.iter().map(|l| l.n_r).sum::<usize>(), 120);
        assert!(leaves.iter().all(|l| l.n_r >= 5));
        assert!((leaves.iter().map(|l| l.mass).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(tree.dump().contains("r_hat[1]="));
    }

    #[test]
    fn bad_target_and_small_n() {
        let ds = gaussian_like(40, 100);
        assert!(matches!(part_ols_ci(&ds, 2, TreeConfig::new(1, 3), 0.05), Err(Error::InvalidArgument(_))));
        let small = gaussian_like(5, 100);
        assert!(matches!(
            part_ols_ci(&small, 0, TreeConfig::new(0, 3), 0.05),
            Err(Error::InsufficientData { needed: 6, .. })
        ));
    }

    #[test]
    fn ols_recovers_exact_fit() {
        let labeled: Vec<_> = (0..10)
            .map(|i| LabeledSample::new(vec![1.0, i as f64], 2.0 + 0.5 * i as f64, 0.0))
            .collect();
        let b = ols_coefficients(&labeled).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-10 && (b[1] - 0.5).abs() < 1e-10);
    }
}
