//! Empirical, PPI, PPI++ and coordinate-partition mean estimators.
//!
//! Every variance estimate carries the `Var(f)/N` term from averaging the
//! predictions over the unlabeled sample, so intervals stay honest when
//! `N` is not much larger than `n`.

use crate::data::{LabeledSample, UnlabeledSample};
use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::stats::{mean, sample_covariance, sample_variance};

pub(crate) fn require_labeled(labeled: &[LabeledSample], needed: usize) -> Result<()> {
    if labeled.len() < needed {
        return Err(Error::InsufficientData {
            what: "labeled sample",
            needed,
            got: labeled.len(),
        });
    }
    Ok(())
}

pub(crate) fn require_unlabeled(unlabeled: &[UnlabeledSample]) -> Result<()> {
    if unlabeled.is_empty() {
        return Err(Error::InsufficientData {
            what: "unlabeled sample",
            needed: 1,
            got: 0,
        });
    }
    Ok(())
}

/// Mean of the unlabeled predictions and the variance of that mean.
pub(crate) fn prediction_term(unlabeled: &[UnlabeledSample]) -> (f64, f64) {
    let f: Vec<f64> = unlabeled.iter().map(|s| s.f).collect();
    (mean(&f), sample_variance(&f) / f.len() as f64)
}

pub fn empirical_mean_ci(labeled: &[LabeledSample], alpha: f64) -> Result<EstimateReport> {
    require_labeled(labeled, 2)?;
    let y: Vec<f64> = labeled.iter().map(|s| s.y).collect();
    let n = y.len();
    EstimateReport::wald(
        "empirical",
        mean(&y),
        sample_variance(&y) / n as f64,
        alpha,
        n,
        0,
    )
}

pub fn ppi_mean_ci(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    alpha: f64,
) -> Result<EstimateReport> {
    require_labeled(labeled, 2)?;
    require_unlabeled(unlabeled)?;
    let residuals: Vec<f64> = labeled.iter().map(LabeledSample::residual).collect();
    let n = residuals.len();
    let (f_mean, f_var) = prediction_term(unlabeled);
    EstimateReport::wald(
        "ppi",
        f_mean + mean(&residuals),
        sample_variance(&residuals) / n as f64 + f_var,
        alpha,
        n,
        unlabeled.len(),
    )
}

/// The PPI++ power-tuning parameter and its ingredients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub lambda: f64,
    pub cov_yf: f64,
    pub pooled_var_f: f64,
    /// `n / N`.
    pub ratio: f64,
}

/// `lambda = Cov_n(y, f) / ((1 + n/N) Var_{n+N}(f))`, with the variance
/// pooled over labeled and unlabeled predictions.
pub fn ppi_lambda(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
) -> Result<LambdaEstimate> {
    require_labeled(labeled, 2)?;
    require_unlabeled(unlabeled)?;
    let y: Vec<f64> = labeled.iter().map(|s| s.y).collect();
    let f: Vec<f64> = labeled.iter().map(|s| s.f).collect();
    let pooled: Vec<f64> = f
        .iter()
        .copied()
        .chain(unlabeled.iter().map(|s| s.f))
        .collect();
    let cov_yf = sample_covariance(&y, &f);
    let pooled_var_f = sample_variance(&pooled);
    if pooled_var_f <= 0.0 {
        return Err(Error::DegeneratePredictor);
    }
    let ratio = labeled.len() as f64 / unlabeled.len() as f64;
    Ok(LambdaEstimate {
        lambda: cov_yf / ((1.0 + ratio) * pooled_var_f),
        cov_yf,
        pooled_var_f,
        ratio,
    })
}

/// PPI++ with the tuned `lambda` from [`ppi_lambda`].
pub fn ppi_pp_mean_ci(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    alpha: f64,
) -> Result<EstimateReport> {
    let lambda = ppi_lambda(labeled, unlabeled)?.lambda;
    ppi_pp_with_lambda(labeled, unlabeled, lambda, alpha)
}

/// PPI++ at a caller-chosen `lambda`. `lambda = 0` gives the empirical mean
/// and `lambda = 1` gives PPI.
pub fn ppi_pp_with_lambda(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    lambda: f64,
    alpha: f64,
) -> Result<EstimateReport> {
    require_labeled(labeled, 2)?;
    require_unlabeled(unlabeled)?;
    let adjusted: Vec<f64> = labeled.iter().map(|s| s.y - lambda * s.f).collect();
    let n = adjusted.len();
    let (f_mean, f_var) = prediction_term(unlabeled);
    EstimateReport::wald(
        "ppi++",
        lambda * f_mean + mean(&adjusted),
        sample_variance(&adjusted) / n as f64 + lambda * lambda * f_var,
        alpha,
        n,
        unlabeled.len(),
    )
}

/// Plug-in asymptotic variance of the PPI++ estimator at `lambda`, with
/// `Var(f)` taken from the pooled predictions in both the labeled and the
/// unlabeled term:
///
/// `v(lambda) = (Var_n(y) - 2 lambda Cov_n(y,f) + lambda^2 V) / n + lambda^2 V / N`.
///
/// Its exact minimizer is the tuned `lambda` of [`ppi_lambda`].
pub fn ppi_pp_plugin_variance(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    lambda: f64,
) -> Result<f64> {
    let est = ppi_lambda(labeled, unlabeled)?;
    let y: Vec<f64> = labeled.iter().map(|s| s.y).collect();
    let n = labeled.len() as f64;
    let big_n = unlabeled.len() as f64;
    let v = est.pooled_var_f;
    Ok((sample_variance(&y) - 2.0 * lambda * est.cov_yf + lambda * lambda * v) / n
        + lambda * lambda * v / big_n)
}

/// Group-specific residual correction on one binary coordinate.
pub fn coordinate_partition_mean_ci(
    labeled: &[LabeledSample],
    unlabeled: &[UnlabeledSample],
    coord: usize,
    alpha: f64,
) -> Result<EstimateReport> {
    require_labeled(labeled, 2)?;
    require_unlabeled(unlabeled)?;
    let dim = labeled[0].x.len();
    if coord >= dim {
        return Err(Error::invalid(format!(
            "coordinate {coord} out of range for dimension {dim}"
        )));
    }
    let mut levels: Vec<f64> = labeled
        .iter()
        .map(|s| s.x[coord])
        .chain(unlabeled.iter().map(|s| s.x[coord]))
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() != 2 {
        return Err(Error::invalid(format!(
            "coordinate {coord} takes {} distinct values, expected 2",
            levels.len()
        )));
    }

    let big_n = unlabeled.len() as f64;
    let (f_mean, f_var) = prediction_term(unlabeled);
    let mut correction = 0.0;
    let mut variance = f_var;
    for level in levels {
        let res: Vec<f64> = labeled
            .iter()
            .filter(|s| s.x[coord] == level)
            .map(LabeledSample::residual)
            .collect();
        if res.len() < 2 {
            return Err(Error::InsufficientData {
                what: "labeled points in a coordinate group",
                needed: 2,
                got: res.len(),
            });
        }
        let mass = unlabeled.iter().filter(|s| s.x[coord] == level).count() as f64 / big_n;
        correction += mass * mean(&res);
        variance += mass * mass * sample_variance(&res) / res.len() as f64;
    }
    EstimateReport::wald(
        format!("coord({coord})"),
        f_mean + correction,
        variance,
        alpha,
        labeled.len(),
        unlabeled.len(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(x: f64, y: f64, f: f64) -> LabeledSample {
        LabeledSample::new(vec![x], y, f)
    }

    fn unl(x: f64, f: f64) -> UnlabeledSample {
        UnlabeledSample::new(vec![x], f)
    }

    #[test]
    fn empirical_examples() {
        let r = empirical_mean_ci(&[lab(0., 1., 0.), lab(0., 1., 0.), lab(0., 1., 0.)], 0.05)
            .unwrap();
        assert_eq!((r.estimate, r.half_width), (1.0, 0.0));
        let r = empirical_mean_ci(&[lab(0., 0., 0.), lab(0., 2., 0.)], 0.05).unwrap();
        assert_eq!((r.estimate, r.variance_estimate), (1.0, 1.0));
        assert!(matches!(
            empirical_mean_ci(&[lab(0., 0., 0.)], 0.05),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn ppi_toy() {
        let labeled = [lab(0., 1., 0.5), lab(0., 2., 1.5)];
        let unlabeled = [unl(0., 1.), unl(0., 2.), unl(0., 3.)];
        let r = ppi_mean_ci(&labeled, &unlabeled, 0.05).unwrap();
        assert!((r.estimate - 2.5).abs() < 1e-15);
        // residuals {0.5, 0.5}: zero variance; Var(f) = 1 over N = 3.
        assert!((r.variance_estimate - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ppi_with_zero_predictor_is_empirical() {
        let labeled = [lab(0., 1., 0.), lab(0., 4., 0.), lab(0., 2., 0.)];
        let unlabeled = [unl(0., 0.), unl(1., 0.)];
        let a = ppi_mean_ci(&labeled, &unlabeled, 0.1).unwrap();
        let b = empirical_mean_ci(&labeled, 0.1).unwrap();
        assert_eq!(a.estimate, b.estimate);
        assert_eq!(a.variance_estimate, b.variance_estimate);
    }

    #[test]
    fn ppi_perfect_predictor() {
        let labeled = [lab(0., 1., 1.), lab(0., 3., 3.)];
        let unlabeled = [unl(0., 2.), unl(0., 6.)];
        let r = ppi_mean_ci(&labeled, &unlabeled, 0.1).unwrap();
        assert_eq!(r.estimate, 4.0);
        assert_eq!(r.variance_estimate, 8.0 / 2.0);
    }

    #[test]
    fn lambda_hand_example() {
        let labeled = [lab(0., 0., 0.), lab(0., 2., 2.)];
        let unlabeled = [unl(0., 0.), unl(0., 2.)];
        let l = ppi_lambda(&labeled, &unlabeled).unwrap();
        assert!((l.cov_yf - 2.0).abs() < 1e-15);
        assert!((l.pooled_var_f - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(l.ratio, 1.0);
        assert!((l.lambda - 0.75).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_covariance() {
        // y symmetric around its mean against f.
        let labeled = [lab(0., 1., 0.), lab(0., 0., 1.), lab(0., 1., 2.)];
        let unlabeled = [unl(0., 0.), unl(0., 2.)];
        assert_eq!(ppi_lambda(&labeled, &unlabeled).unwrap().lambda, 0.0);
    }

    #[test]
    fn lambda_degenerate_predictor() {
        let labeled = [lab(0., 1., 3.), lab(0., 2., 3.)];
        let unlabeled = [unl(0., 3.)];
        assert!(matches!(
            ppi_lambda(&labeled, &unlabeled),
            Err(Error::DegeneratePredictor)
        ));
    }

    #[test]
    fn lambda_tends_to_one_for_perfect_predictor_and_huge_n() {
        let f = [0.0, 1.0, 3.0, 4.0];
        let labeled: Vec<_> = (0..400).map(|i| lab(0., f[i % 4], f[i % 4])).collect();
        let unlabeled: Vec<_> = (0..1_000_000).map(|i| unl(0., f[i % 4])).collect();
        let l = ppi_lambda(&labeled, &unlabeled).unwrap().lambda;
        assert!((l - 1.0).abs() < 1e-2, "lambda {l}");
    }

    #[test]
    fn ppi_pp_reductions() {
        let labeled = [lab(0., 1.0, 0.7), lab(0., 2.5, 2.0), lab(0., 0.2, 0.9), lab(0., 3.0, 2.2)];
        let unlabeled = [unl(0., 1.0), unl(0., 1.5), unl(0., 2.5)];
        let zero = ppi_pp_with_lambda(&labeled, &unlabeled, 0.0, 0.05).unwrap();
        let emp = empirical_mean_ci(&labeled, 0.05).unwrap();
        assert!((zero.estimate - emp.estimate).abs() < 1e-12);
        assert!((zero.half_width - emp.half_width).abs() < 1e-12);
        let one = ppi_pp_with_lambda(&labeled, &unlabeled, 1.0, 0.05).unwrap();
        let ppi = ppi_mean_ci(&labeled, &unlabeled, 0.05).unwrap();
        assert!((one.estimate - ppi.estimate).abs() < 1e-12);
        assert!((one.half_width - ppi.half_width).abs() < 1e-12);
    }

    #[test]
    fn coord_partition_perfect_predictor() {
        let labeled = [lab(-1., 1., 1.), lab(-1., 2., 2.), lab(1., 5., 5.), lab(1., 0., 0.)];
        let unlabeled = [unl(-1., 1.), unl(1., 3.), unl(1., 5.)];
        let r = coordinate_partition_mean_ci(&labeled, &unlabeled, 0, 0.05).unwrap();
        assert!((r.estimate - 3.0).abs() < 1e-15);
        assert!((r.variance_estimate - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn coord_partition_errors() {
        let labeled = [lab(-1., 1., 1.), lab(-1., 2., 2.), lab(1., 5., 5.)];
        let unlabeled = [unl(-1., 1.), unl(1., 3.)];
        assert!(matches!(
            coordinate_partition_mean_ci(&labeled, &unlabeled, 0, 0.05),
            Err(Error::InsufficientData { .. })
        ));
        let unlabeled = [unl(-1., 1.), unl(0., 3.)];
        assert!(matches!(
            coordinate_partition_mean_ci(&labeled, &unlabeled, 0, 0.05),
            Err(Error::InvalidArgument(_))
        ));
    }
}
