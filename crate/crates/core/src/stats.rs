//! Shared numeric helpers: moments, normal quantiles, empirical quantiles
//! and step CDFs.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (`len - 1` denominator). Zero for fewer than
/// two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Unbiased sample covariance of paired sequences.
pub fn sample_covariance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.len() < 2 {
        return 0.0;
    }
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() - 1) as f64
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation followed by a Newton step on `Φ`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    if p == 0.5 {
        return Ok(0.0);
    }
    let density = normal_pdf(x);
    if density > 0.0 {
        x -= (normal_cdf(x) - p) / density;
    }
    Ok(x)
}

/// `z_{1 - alpha/2}`.
pub fn two_sided_z(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    normal_quantile(1.0 - alpha / 2.0)
}

/// Nearest-rank quantiles at levels `1/n, ..., (n-1)/n`.
///
/// `q_j` is the order statistic at 1-based rank `ceil(j * len / n)`.
pub fn empirical_quantiles(values: &[f64], n: usize) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("quantiles of an empty sequence"));
    }
    if n < 2 {
        return Err(Error::invalid(format!("quantile count n must be >= 2, got {n}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantiles_of_sorted(&sorted, n))
}

pub(crate) fn quantiles_of_sorted(sorted: &[f64], n: usize) -> Vec<f64> {
    let len = sorted.len();
    (1..n)
        .map(|j| {
            let rank = (j * len).div_ceil(n).max(1);
            sorted[rank - 1]
        })
        .collect()
}

/// Right-continuous empirical CDF `F(x) = #{knots <= x} / #knots`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCdf {
    knots: Vec<f64>,
}

impl StepCdf {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.knots.partition_point(|&k| k <= x) as f64 / self.knots.len() as f64
    }

    /// Kolmogorov distance to a continuous reference CDF.
    pub fn sup_distance(&self, reference: impl Fn(f64) -> f64) -> f64 {
        let len = self.knots.len() as f64;
        self.knots
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let f = reference(k);
                let above = (i + 1) as f64 / len - f;
                let below = f - i as f64 / len;
                above.max(below)
            })
            .fold(0.0, f64::max)
    }
}

pub fn empirical_cdf(values: &[f64]) -> Result<StepCdf> {
    if values.is_empty() {
        return Err(Error::invalid("empirical CDF of an empty sequence"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("empirical CDF of non-finite values".into()));
    }
    let mut knots = values.to_vec();
    knots.sort_by(f64::total_cmp);
    Ok(StepCdf { knots })
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    sample_covariance(x, y) / sample_variance(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    use crate::rng::RandomSource;

    #[test]
    fn quantile_reference_values() {
        // 30-digit reference values of sqrt(2) * erfinv(2p - 1).
        let cases = [
            (0.975, 1.959_963_984_540_054),
            (0.95, 1.644_853_626_951_472_7),
            (0.9, 1.281_551_565_544_600_5),
            (0.001, -3.090_232_306_167_813_5),
            (1e-10, -6.361_340_902_404_056),
            (0.999_999, 4.753_424_308_822_899),
        ];
        for (p, z) in cases {
            let got = normal_quantile(p).unwrap();
            assert!((got - z).abs() < 1e-8, "p={p}: {got} vs {z}");
        }
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(p).is_err());
        }
    }

    proptest! {
        #[test]
        fn quantile_inverts_cdf(p in 1e-12f64..(1.0 - 1e-12)) {
            let z = normal_quantile(p).unwrap();
            prop_assert!((normal_cdf(z) - p).abs() <= 1e-9);
        }

        #[test]
        fn quantiles_sorted_with_expected_length(
            values in prop::collection::vec(-1e6f64..1e6, 1..200),
            n in 2usize..60,
        ) {
            let q = empirical_quantiles(&values, n).unwrap();
            prop_assert_eq!(q.len(), n - 1);
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn nearest_rank_examples() {
        assert_eq!(empirical_quantiles(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), vec![2.0]);
        assert_eq!(empirical_quantiles(&[5.0], 2).unwrap(), vec![5.0]);
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(
            empirical_quantiles(&grid, 4).unwrap(),
            vec![25.0, 50.0, 75.0]
        );
        assert!(empirical_quantiles(&[], 3).is_err());
    }

    #[test]
    fn step_cdf_examples() {
        let cdf = empirical_cdf(&[0.3, 0.1, 0.2]).unwrap();
        assert!((cdf.eval(0.2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(cdf.eval(0.05), 0.0);
        assert_eq!(cdf.eval(0.3), 1.0);
        assert_eq!(cdf.eval(10.0), 1.0);
    }

    #[test]
    fn dkw_band_holds_for_uniform_draws() {
        let draws = 10_000;
        let eps = 2.0 * ((2.0f64 / 0.01).ln() / (2.0 * draws as f64)).sqrt();
        let trials = 100;
        let mut inside = 0;
        for t in 0..trials {
            let mut rng = RandomSource::new(11, t).rng();
            let v: Vec<f64> = (0..draws).map(|_| rng.random::<f64>()).collect();
            let cdf = empirical_cdf(&v).unwrap();
            if cdf.sup_distance(|x| x.clamp(0.0, 1.0)) <= eps {
                inside += 1;
            }
        }
        assert!(inside >= 99, "{inside} of {trials} within the DKW band");
    }

    #[test]
    fn moments() {
        assert_eq!(sample_variance(&[0.0, 2.0]), 2.0);
        assert_eq!(sample_covariance(&[0.0, 2.0], &[0.0, 2.0]), 2.0);
        assert_eq!(sample_variance(&[3.0]), 0.0);
    }
}
