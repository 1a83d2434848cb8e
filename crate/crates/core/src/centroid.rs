//! Nearest-class-mean classification, shared by the BOVW histograms and
//! the tapped feature vectors, plus the tapped-feature TSV reader.
//!
//! Tapped-feature file:
//!
//! ```text
//! # comments
//! dims<TAB>D
//! sample_id<TAB>class_label<TAB>v0<TAB>...<TAB>v(D-1)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CentroidError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("no training vectors")]
    EmptyTrainingSet,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("dimension mismatch: expected {want}, got {got}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("partition {0} would be empty")]
    EmptyPartition(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `sum (a - b)^2 / (a + b)` over bins with `a + b > 0`; meant for
    /// non-negative histograms.
    ChiSquare,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "chi2" | "chi_square" => Ok(Metric::ChiSquare),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::ChiSquare => "chi2",
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::ChiSquare => a
                .iter()
                .zip(b)
                .filter(|(x, y)| *x + *y > 0.0)
                .map(|(x, y)| (x - y) * (x - y) / (x + y))
                .sum(),
        }
    }
}

/// Per-class mean vectors. Labels are kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidModel {
    pub dim: usize,
    pub labels: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub metric: Metric,
}

/// Winning label plus the full hit list, ascending by distance (exact ties
/// in label order).
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: String,
    pub hits: Vec<(String, f64)>,
}

/// Arithmetic mean per class, accumulated in input order.
pub fn fit_centroids<L: AsRef<str>, V: AsRef<[f64]>>(vectors: &[(L, V)]) -> Result<CentroidModel, CentroidError> {
    let dim = vectors.first().ok_or(CentroidError::EmptyTrainingSet)?.1.as_ref().len();
    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (label, v) in vectors {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(CentroidError::DimensionMismatch { want: dim, got: v.len() });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(CentroidError::NonFinite);
        }
        let entry = sums.entry(label.as_ref()).or_insert_with(|| (vec![0.0; dim], 0));
        for (s, x) in entry.0.iter_mut().zip(v) {
            *s += x;
        }
        entry.1 += 1;
    }
    let mut labels = Vec::with_capacity(sums.len());
    let mut centroids = Vec::with_capacity(sums.len());
    for (label, (sum, n)) in sums {
        labels.push(label.to_string());
        centroids.push(sum.into_iter().map(|s| s / n as f64).collect());
    }
    Ok(CentroidModel {
        dim,
        labels,
        centroids,
        metric: Metric::Euclidean,
    })
}

impl CentroidModel {
    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    fn check(&self, query: &[f64]) -> Result<(), CentroidError> {
        if query.len() != self.dim {
            return Err(CentroidError::DimensionMismatch { want: self.dim, got: query.len() });
        }
        Ok(())
    }

    pub fn classify(&self, query: &[f64]) -> Result<Classification, CentroidError> {
        self.check(query)?;
        let mut hits: Vec<(String, f64)> = self
            .labels
            .iter()
            .zip(&self.centroids)
            .map(|(l, c)| (l.clone(), self.metric.distance(query, c)))
            .collect();
        // labels are already sorted, so a stable sort keeps label order on ties
        hits.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(Classification {
            label: hits[0].0.clone(),
            hits,
        })
    }

    /// Label of the nearest centroid without building the hit list.
    pub fn nearest(&self, query: &[f64]) -> Result<&str, CentroidError> {
        self.check(query)?;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = self.metric.distance(query, c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(&self.labels[best])
    }
}

/// Fraction of test items whose nearest centroid carries the true label.
pub fn evaluate<L: AsRef<str>, V: AsRef<[f64]>>(model: &CentroidModel, test: &[(L, V)]) -> Result<f64, CentroidError> {
    if test.is_empty() {
        return Err(CentroidError::EmptyTestSet);
    }
    let mut correct = 0usize;
    for (label, v) in test {
        if model.nearest(v.as_ref())? == label.as_ref() {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

pub fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TappedRow {
    pub sample_id: String,
    pub class_label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TappedFeatureSet {
    pub dim: usize,
    pub rows: Vec<TappedRow>,
}

impl TappedFeatureSet {
    pub fn labeled(rows: &[TappedRow]) -> Vec<(&str, &[f64])> {
        rows.iter().map(|r| (r.class_label.as_str(), r.values.as_slice())).collect()
    }
}

pub fn load_tapped_features(path: &Path) -> Result<TappedFeatureSet, CentroidError> {
    let text = fs::read_to_string(path).map_err(|source| CentroidError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tapped_features(&text)
}

pub fn parse_tapped_features(text: &str) -> Result<TappedFeatureSet, CentroidError> {
    let mut dim: Option<usize> = None;
    let mut rows = Vec::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| CentroidError::Malformed { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let Some(d) = dim else {
            if fields.len() != 2 || fields[0] != "dims" {
                return Err(malformed("expected header 'dims<TAB>D'".into()));
            }
            let d: usize = fields[1]
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad dimension {:?}", fields[1])))?;
            if d == 0 {
                return Err(malformed("dimension must be >= 1".into()));
            }
            dim = Some(d);
            continue;
        };
        if fields.len() < 2 || fields[0].is_empty() || fields[1].is_empty() {
            return Err(malformed("expected sample_id and class_label".into()));
        }
        let n_values = fields.len() - 2;
        if n_values != d {
            return Err(malformed(format!("expected {d} values, found {n_values}")));
        }
        let values = fields[2..]
            .iter()
            .map(|f| match f.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(malformed(format!("non-numeric value {f:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(TappedRow {
            sample_id: fields[0].to_string(),
            class_label: fields[1].to_string(),
            values,
        });
    }
    let dim = dim.ok_or(CentroidError::Malformed { line: 1, msg: "missing 'dims' header".into() })?;
    Ok(TappedFeatureSet { dim, rows })
}

pub fn write_tapped_features(set: &TappedFeatureSet) -> String {
    let mut out = format!("dims\t{}\n", set.dim);
    for r in &set.rows {
        out.push_str(&r.sample_id);
        out.push('\t');
        out.push_str(&r.class_label);
        for v in &r.values {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PartitionScheme {
    /// Even row indices (0-based) train, odd rows test.
    #[default]
    OddEven,
    /// Every eighth row (`index % 8 == 7`) is test, the rest train.
    Mod8,
}

impl FromStr for PartitionScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "odd_even" => Ok(PartitionScheme::OddEven),
            "mod8" => Ok(PartitionScheme::Mod8),
            other => Err(format!("unknown partition scheme {other:?}")),
        }
    }
}

impl PartitionScheme {
    pub fn is_test(self, index: usize) -> bool {
        match self {
            PartitionScheme::OddEven => index % 2 == 1,
            PartitionScheme::Mod8 => index % 8 == 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PartitionScheme::OddEven => "odd_even",
            PartitionScheme::Mod8 => "mod8",
        }
    }
}

/// Split rows by file position into `(train, test)`.
pub fn partition_by_index(
    set: &TappedFeatureSet,
    scheme: PartitionScheme,
) -> Result<(Vec<TappedRow>, Vec<TappedRow>), CentroidError> {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in set.rows.iter().enumerate() {
        if scheme.is_test(i) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    if train.is_empty() {
        return Err(CentroidError::EmptyPartition("train"));
    }
    if test.is_empty() {
        return Err(CentroidError::EmptyPartition("test"));
    }
    Ok((train, test))
}
