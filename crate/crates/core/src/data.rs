//! Labeled/unlabeled samples, CSV ingestion and label obfuscation.

use std::path::Path;
use std::str::FromStr;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::RandomSource;

/// A labeled observation: features, outcome and the model's prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub x: Vec<f64>,
    pub y: f64,
    pub f: f64,
}

impl LabeledSample {
    pub fn new(x: Vec<f64>, y: f64, f: f64) -> Self {
        Self { x, y, f }
    }

    /// `y - f(x)`.
    pub fn residual(&self) -> f64 {
        self.y - self.f
    }

    pub fn unlabeled(&self) -> UnlabeledSample {
        UnlabeledSample {
            x: self.x.clone(),
            f: self.f,
        }
    }
}

/// An unlabeled observation: features and prediction only.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSample {
    pub x: Vec<f64>,
    pub f: f64,
}

impl UnlabeledSample {
    pub fn new(x: Vec<f64>, f: f64) -> Self {
        Self { x, f }
    }
}

/// The two sample populations sharing one feature dimension.
///
/// Construction checks dimensions and finiteness only. Size requirements
/// (`n >= 2`, `N >= 1`, ...) belong to the estimators, since ingestion and
/// simulation legitimately produce fully-labeled or nearly-empty pools.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub labeled: Vec<LabeledSample>,
    pub unlabeled: Vec<UnlabeledSample>,
    dim: usize,
}

impl Dataset {
    pub fn new(
        labeled: Vec<LabeledSample>,
        unlabeled: Vec<UnlabeledSample>,
        dim: usize,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        for s in &labeled {
            check_row(&s.x, dim)?;
            if !s.y.is_finite() || !s.f.is_finite() {
                return Err(Error::Domain("non-finite label or prediction".into()));
            }
        }
        for s in &unlabeled {
            check_row(&s.x, dim)?;
            if !s.f.is_finite() {
                return Err(Error::Domain("non-finite prediction".into()));
            }
        }
        Ok(Self {
            labeled,
            unlabeled,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of labeled rows.
    pub fn n(&self) -> usize {
        self.labeled.len()
    }

    /// Number of unlabeled rows.
    pub fn big_n(&self) -> usize {
        self.unlabeled.len()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.labeled.iter().map(LabeledSample::residual).collect()
    }

    pub fn unlabeled_predictions(&self) -> Vec<f64> {
        self.unlabeled.iter().map(|s| s.f).collect()
    }
}

fn check_row(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite feature value".into()));
    }
    Ok(())
}

/// Which CSV columns hold features, labels and predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub features: Vec<String>,
    pub label: Option<String>,
    pub prediction: String,
}

impl FromStr for Schema {
    type Err = Error;

    /// Parses `features=a,b;label=y;prediction=f` (`label` optional).
    fn from_str(s: &str) -> Result<Self> {
        let mut features = None;
        let mut label = None;
        let mut prediction = None;
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("expected key=value, got '{part}'")))?;
            let value = value.trim();
            match key.trim() {
                "features" => {
                    features = Some(
                        value
                            .split(',')
                            .map(|c| c.trim().to_string())
                            .filter(|c| !c.is_empty())
                            .collect::<Vec<_>>(),
                    )
                }
                "label" => label = Some(value.to_string()),
                "prediction" => prediction = Some(value.to_string()),
                other => return Err(Error::Schema(format!("unknown schema key '{other}'"))),
            }
        }
        let features = features
            .filter(|f| !f.is_empty())
            .ok_or_else(|| Error::Schema("schema names no feature columns".into()))?;
        let prediction =
            prediction.ok_or_else(|| Error::Schema("schema names no prediction column".into()))?;
        Ok(Schema {
            features,
            label,
            prediction,
        })
    }
}

/// Reads a headed, comma-separated file. Rows with an empty label cell
/// become unlabeled samples. Row numbers in errors count data rows from 1.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let feature_cols = schema
        .features
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let label_col = schema.label.as_deref().map(column).transpose()?;
    let pred_col = column(&schema.prediction)?;

    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: headers.get(col).unwrap_or("?").to_string(),
                    value: raw.to_string(),
                })
        };
        let x = feature_cols
            .iter()
            .map(|&c| cell(c))
            .collect::<Result<Vec<_>>>()?;
        let f = cell(pred_col)?;
        match label_col {
            Some(c) if !record.get(c).unwrap_or("").is_empty() => {
                labeled.push(LabeledSample::new(x, cell(c)?, f));
            }
            _ => unlabeled.push(UnlabeledSample::new(x, f)),
        }
    }
    Dataset::new(labeled, unlabeled, schema.features.len())
}

/// Hides all but a uniformly random `n`-subset of the labels.
///
/// `ds` must be fully labeled (`M` rows). Surviving labeled rows and the
/// newly unlabeled rows both keep their original relative order.
pub fn obfuscate_split(ds: &Dataset, n: usize, source: RandomSource) -> Result<Dataset> {
    if !ds.unlabeled.is_empty() {
        return Err(Error::invalid(
            "obfuscation expects a fully labeled dataset",
        ));
    }
    let m = ds.labeled.len();
    if n < 2 || n + 1 > m {
        return Err(Error::invalid(format!(
            "labeled size {n} must lie in [2, {}]",
            m.saturating_sub(1)
        )));
    }
    let mut rng = source.rng();
    let mut keep = vec![false; m];
    for i in index::sample(&mut rng, m, n) {
        keep[i] = true;
    }
    let mut labeled = Vec::with_capacity(n);
    let mut unlabeled = Vec::with_capacity(m - n);
    for (s, k) in ds.labeled.iter().zip(keep) {
        if k {
            labeled.push(s.clone());
        } else {
            unlabeled.push(s.unlabeled());
        }
    }
    Dataset::new(labeled, unlabeled, ds.dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        "features=x;label=y;prediction=f".parse().unwrap()
    }

    #[test]
    fn all_labels_present() {
        let csv = "x,y,f\n1,2,3\n4,5,6\n7,8,9\n";
        let ds = read_dataset(csv.as_bytes(), &schema()).unwrap();
        assert_eq!((ds.n(), ds.big_n()), (3, 0));
        assert_eq!(ds.labeled[1], LabeledSample::new(vec![4.0], 5.0, 6.0));
    }

    #[test]
    fn blank_labels_become_unlabeled() {
        let csv = "x,y,f\n1,,3\n4,5,6\n7,,9\n";
        let ds = read_dataset(csv.as_bytes(), &schema()).unwrap();
        assert_eq!((ds.n(), ds.big_n()), (1, 2));
        assert_eq!(ds.unlabeled[1], UnlabeledSample::new(vec![7.0], 9.0));
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let csv = "x,y,f\n1,2,3\nabc,5,6\n";
        match read_dataset(csv.as_bytes(), &schema()) {
            Err(Error::Parse { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "x", "abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "x,y\n1,2\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), &schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn schema_without_label_marks_all_unlabeled() {
        let schema: Schema = "features=a,b;prediction=p".parse().unwrap();
        let csv = "a,b,p\n1,2,3\n";
        let ds = read_dataset(csv.as_bytes(), &schema).unwrap();
        assert_eq!((ds.n(), ds.big_n(), ds.dim()), (0, 1, 2));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let r = Dataset::new(vec![LabeledSample::new(vec![1.0, 2.0], 0.0, 0.0)], vec![], 1);
        assert!(matches!(r, Err(Error::Dimension { expected: 1, got: 2 })));
    }

    fn pool(m: usize) -> Dataset {
        let labeled = (0..m)
            .map(|i| LabeledSample::new(vec![i as f64], i as f64, 0.0))
            .collect();
        Dataset::new(labeled, vec![], 1).unwrap()
    }

    #[test]
    fn obfuscation_counts() {
        let ds = obfuscate_split(&pool(10), 9, RandomSource::new(1, 0)).unwrap();
        assert_eq!((ds.n(), ds.big_n()), (9, 1));
    }

    #[test]
    fn obfuscation_is_deterministic() {
        let a = obfuscate_split(&pool(50), 10, RandomSource::new(3, 4)).unwrap();
        let b = obfuscate_split(&pool(50), 10, RandomSource::new(3, 4)).unwrap();
        assert_eq!(a, b);
        let c = obfuscate_split(&pool(50), 10, RandomSource::new(3, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn obfuscation_range_checked() {
        assert!(obfuscate_split(&pool(10), 10, RandomSource::new(1, 0)).is_err());
        assert!(obfuscate_split(&pool(10), 1, RandomSource::new(1, 0)).is_err());
    }

    #[test]
    fn obfuscation_is_uniform_over_rows() {
        // Each row should be kept with frequency n/M = 0.1.
        let m = 1000;
        let ds = pool(m);
        let seeds = 10_000;
        let mut hits = vec![0u32; m];
        for seed in 0..seeds {
            let split = obfuscate_split(&ds, 100, RandomSource::new(seed, 0)).unwrap();
            for s in &split.labeled {
                hits[s.x[0] as usize] += 1;
            }
        }
        for h in hits {
            let freq = f64::from(h) / seeds as f64;
            assert!((freq - 0.1).abs() <= 0.01, "row frequency {freq}");
        }
    }
}
