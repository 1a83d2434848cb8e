use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::results::RunResult;
use super::{HarnessError, Method};

/// The highest-accuracy attempt of every (book, method), earliest attempt
/// on ties, in `(book_id, method)` order.
pub fn best_attempts(results: &[RunResult]) -> Vec<&RunResult> {
    let mut best: BTreeMap<(&str, Method), &RunResult> = BTreeMap::new();
    for r in results {
        let slot = best.entry((r.book_id.as_str(), r.method)).or_insert(r);
        if r.accuracy > slot.accuracy || (r.accuracy == slot.accuracy && r.attempt < slot.attempt) {
            *slot = r;
        }
    }
    best.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every book counts once.
    #[default]
    Unweighted,
    /// Books weighted by their test-set size.
    TestSize,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unweighted" | "books" => Ok(Weighting::Unweighted),
            "test_size" | "weighted" => Ok(Weighting::TestSize),
            other => Err(format!("unknown weighting {other:?}")),
        }
    }
}

/// Accuracy over books for one method, in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub n_books: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n - 1); with weights, the unbiased
    /// reliability-weighted form. Zero for a single book.
    pub sd_accuracy: f64,
}

/// Per-method mean and standard deviation of the best attempt per book.
pub fn summarize(results: &[RunResult], weighting: Weighting) -> Result<Vec<MethodSummary>, HarnessError> {
    let mut per_method: BTreeMap<Method, Vec<(f64, f64)>> = BTreeMap::new();
    for r in best_attempts(results) {
        let w = match weighting {
            Weighting::Unweighted => 1.0,
            Weighting::TestSize => r.n_test as f64,
        };
        per_method.entry(r.method).or_default().push((100.0 * r.accuracy, w));
    }
    if per_method.is_empty() {
        return Err(HarnessError::Empty);
    }
    per_method
        .into_iter()
        .map(|(method, xs)| {
            let v1: f64 = xs.iter().map(|&(_, w)| w).sum();
            if v1 <= 0.0 {
                return Err(HarnessError::InvalidConfig(format!("{method}: all weights are zero")));
            }
            let v2: f64 = xs.iter().map(|&(_, w)| w * w).sum();
            let mean = xs.iter().map(|&(a, w)| a * w).sum::<f64>() / v1;
            let ss: f64 = xs.iter().map(|&(a, w)| w * (a - mean) * (a - mean)).sum();
            let denom = v1 - v2 / v1;
            let sd = if xs.len() > 1 && denom > 0.0 { (ss / denom).sqrt() } else { 0.0 };
            Ok(MethodSummary { method, n_books: xs.len(), mean_accuracy: mean, sd_accuracy: sd })
        })
        .collect()
}

pub fn summary_tsv(summaries: &[MethodSummary]) -> String {
    let mut s = String::from("method\tn_books\tmean_accuracy_pct\tsd_accuracy_pct\n");
    for m in summaries {
        let _ = writeln!(s, "{}\t{}\t{:.3}\t{:.3}", m.method, m.n_books, m.mean_accuracy, m.sd_accuracy);
    }
    s
}

/// Books per accuracy band `[k*w, (k+1)*w)` percent, the last band closed
/// at 100, counted from the best attempt per book.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub band_width: f64,
    pub counts: BTreeMap<Method, Vec<usize>>,
}

impl Histogram {
    pub fn n_bands(&self) -> usize {
        band_count(self.band_width)
    }

    /// `(low, high)` percent of band `k`.
    pub fn band(&self, k: usize) -> (f64, f64) {
        let lo = k as f64 * self.band_width;
        (lo, (lo + self.band_width).min(100.0))
    }

    /// Index of the band holding `accuracy` (a fraction).
    pub fn band_of(&self, accuracy: f64) -> usize {
        band_index(accuracy, self.band_width)
    }

    /// One row per band: `band_low`, `band_high`, then one count column per
    /// method.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("band_low\tband_high");
        for m in self.counts.keys() {
            let _ = write!(s, "\t{m}");
        }
        s.push('\n');
        for k in 0..self.n_bands() {
            let (lo, hi) = self.band(k);
            let _ = write!(s, "{lo}\t{hi}");
            for c in self.counts.values() {
                let _ = write!(s, "\t{}", c[k]);
            }
            s.push('\n');
        }
        s
    }
}

fn band_count(w: f64) -> usize {
    ((100.0 / w) - 1e-9).ceil().max(1.0) as usize
}

fn band_index(accuracy: f64, w: f64) -> usize {
    // Accuracies are ratios of counts; the slack absorbs the rounding of
    // `100 * accuracy` just below a band edge.
    let k = (100.0 * accuracy / w + 1e-9).floor().max(0.0) as usize;
    k.min(band_count(w) - 1)
}

pub fn histogram_report(results: &[RunResult], band_width: f64) -> Result<Histogram, HarnessError> {
    if !(band_width > 0.0 && band_width <= 100.0) {
        return Err(HarnessError::InvalidConfig(format!("band width must be in (0, 100], got {band_width}")));
    }
    if results.is_empty() {
        return Err(HarnessError::Empty);
    }
    let n = band_count(band_width);
    let mut counts: BTreeMap<Method, Vec<usize>> = BTreeMap::new();
    for r in best_attempts(results) {
        counts.entry(r.method).or_insert_with(|| vec![0; n])[band_index(r.accuracy, band_width)] += 1;
    }
    Ok(Histogram { band_width, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    NClasses,
    /// `n_train_human / n_classes`.
    AvgTrainPerClass,
    /// Human plus augmented training samples.
    NTrainTotal,
}

impl Factor {
    pub fn as_str(self) -> &'static str {
        match self {
            Factor::NClasses => "n_classes",
            Factor::AvgTrainPerClass => "avg_train_per_class",
            Factor::NTrainTotal => "n_train_total",
        }
    }

    pub fn value(self, r: &RunResult) -> f64 {
        match self {
            Factor::NClasses => r.n_classes as f64,
            Factor::AvgTrainPerClass if r.n_classes == 0 => 0.0,
            Factor::AvgTrainPerClass => r.n_train_human as f64 / r.n_classes as f64,
            Factor::NTrainTotal => (r.n_train_human + r.n_train_augmented) as f64,
        }
    }
}

impl FromStr for Factor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n_classes" => Ok(Factor::NClasses),
            "avg_train_per_class" => Ok(Factor::AvgTrainPerClass),
            "n_train_total" => Ok(Factor::NTrainTotal),
            other => Err(format!("unknown factor {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    pub factor: f64,
    pub accuracy: f64,
    pub method: Method,
    pub book_id: String,
    pub attempt: u32,
}

/// One row per result, ascending by factor value, ties by book id (then
/// method and attempt).
pub fn accuracy_vs_factor(results: &[RunResult], factor: Factor) -> Vec<FactorRow> {
    let mut rows: Vec<FactorRow> = results
        .iter()
        .map(|r| FactorRow {
            factor: factor.value(r),
            accuracy: r.accuracy,
            method: r.method,
            book_id: r.book_id.clone(),
            attempt: r.attempt,
        })
        .collect();
    rows.sort_by(|a, b| {
        a.factor
            .total_cmp(&b.factor)
            .then_with(|| a.book_id.cmp(&b.book_id))
            .then(a.method.cmp(&b.method))
            .then(a.attempt.cmp(&b.attempt))
    });
    rows
}

pub fn factor_tsv(rows: &[FactorRow], factor: Factor) -> String {
    let mut s = format!("{}\taccuracy\tmethod\tbook_id\tattempt\n", factor.as_str());
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.factor, r.accuracy, r.method, r.book_id, r.attempt);
    }
    s
}
