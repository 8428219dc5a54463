//! The common return type of every estimator.

use serde::{Deserialize, Serialize, Serializer};

use crate::error::Result;
use crate::stats::two_sided_z;

/// Point estimate with a Wald-type interval.
///
/// `half_width = z_{1-alpha/2} * sqrt(variance_estimate) + remainder_bound`,
/// where `remainder_bound` is zero except for the quadrature estimators.
/// Floats serialize rounded to 12 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    #[serde(serialize_with = "sig12")]
    pub estimate: f64,
    #[serde(serialize_with = "sig12")]
    pub half_width: f64,
    #[serde(serialize_with = "sig12")]
    pub alpha: f64,
    pub method: String,
    #[serde(serialize_with = "sig12")]
    pub variance_estimate: f64,
    #[serde(serialize_with = "sig12")]
    pub remainder_bound: f64,
    pub n_used: usize,
    #[serde(rename = "N_used")]
    pub big_n_used: usize,
    /// Leaf count of the partition, for the tree estimators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaves: Option<usize>,
}

impl EstimateReport {
    pub fn wald(
        method: impl Into<String>,
        estimate: f64,
        variance_estimate: f64,
        alpha: f64,
        n_used: usize,
        big_n_used: usize,
    ) -> Result<Self> {
        Self::with_remainder(method, estimate, variance_estimate, 0.0, alpha, n_used, big_n_used)
    }

    pub fn with_remainder(
        method: impl Into<String>,
        estimate: f64,
        variance_estimate: f64,
        remainder_bound: f64,
        alpha: f64,
        n_used: usize,
        big_n_used: usize,
    ) -> Result<Self> {
        let z = two_sided_z(alpha)?;
        let variance_estimate = variance_estimate.max(0.0);
        Ok(Self {
            estimate,
            half_width: z * variance_estimate.sqrt() + remainder_bound,
            alpha,
            method: method.into(),
            variance_estimate,
            remainder_bound,
            n_used,
            big_n_used,
            leaves: None,
        })
    }

    pub fn lower(&self) -> f64 {
        self.estimate - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.estimate + self.half_width
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower() <= value && value <= self.upper()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub const CSV_HEADER: &'static str =
        "method,estimate,half_width,lower,upper,alpha,variance_estimate,remainder_bound,n_used,N_used,leaves";

    /// One CSV record, without a trailing newline. Methods with commas
    /// are quoted.
    pub fn to_csv_row(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            self.method.clone(),
            fmt12(self.estimate),
            fmt12(self.half_width),
            fmt12(self.lower()),
            fmt12(self.upper()),
            fmt12(self.alpha),
            fmt12(self.variance_estimate),
            fmt12(self.remainder_bound),
            self.n_used.to_string(),
            self.big_n_used.to_string(),
            self.leaves.map(|l| l.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
        let bytes = w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("utf8 csv").trim_end().to_string()
    }
}

/// Rounds to 12 significant digits.
pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest decimal form of `v` rounded to 12 significant digits; `NA` for
/// non-finite values.
pub fn fmt12(v: f64) -> String {
    if v.is_finite() {
        format!("{}", round12(v))
    } else {
        "NA".to_string()
    }
}

fn sig12<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round12(*v))
}
