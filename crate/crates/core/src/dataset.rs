//! Book manifests, the per-class 7/9 : 1/9 : 1/9 split, class/book
//! eligibility filtering and corpus statistics.
//!
//! Manifest format: UTF-8 text, LF line endings, `#` comment lines, one
//! record per line:
//!
//! ```text
//! book_id<TAB>class_label<TAB>origin<TAB>image_ref
//! ```
//!
//! `origin` is `human` or `augmented:<source_sample_id>`. The sample id of
//! a record is its `image_ref`, which must therefore be unique per book.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("duplicate sample_id {sample_id:?} in book {book_id:?}")]
    DuplicateSample { book_id: String, sample_id: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("class {class:?} has {have} human samples, split needs at least {need}")]
    ClassTooSmall { class: String, have: usize, need: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("class count summary of an empty book list")]
    EmptyBookList,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Origin {
    Human,
    /// An elastically morphed copy of the human record `source`.
    Augmented { source: String },
}

impl Origin {
    pub fn is_human(&self) -> bool {
        matches!(self, Origin::Human)
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Human => f.write_str("human"),
            Origin::Augmented { source } => write!(f, "augmented:{source}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleRecord {
    pub sample_id: String,
    pub book_id: String,
    pub class_label: String,
    /// Image path relative to the manifest's directory.
    pub image_ref: String,
    pub origin: Origin,
}

impl SampleRecord {
    pub fn human(book_id: &str, class_label: &str, image_ref: &str) -> Self {
        SampleRecord {
            sample_id: image_ref.to_string(),
            book_id: book_id.to_string(),
            class_label: class_label.to_string(),
            image_ref: image_ref.to_string(),
            origin: Origin::Human,
        }
    }
}

/// One book: the unit of a training-and-testing event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BookManifest {
    pub book_id: String,
    pub samples: Vec<SampleRecord>,
    pub classes: BTreeSet<String>,
}

impl BookManifest {
    /// Validates ids and derives the class inventory from the records.
    pub fn new(book_id: &str, samples: Vec<SampleRecord>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.sample_id.is_empty() {
                return Err(DatasetError::InvalidRecord("empty sample_id".into()));
            }
            if s.class_label.is_empty() {
                return Err(DatasetError::InvalidRecord(format!(
                    "empty class_label for {:?}",
                    s.sample_id
                )));
            }
            if s.book_id != book_id {
                return Err(DatasetError::InvalidRecord(format!(
                    "record {:?} belongs to book {:?}, not {book_id:?}",
                    s.sample_id, s.book_id
                )));
            }
            if !seen.insert(s.sample_id.as_str()) {
                return Err(DatasetError::DuplicateSample {
                    book_id: book_id.to_string(),
                    sample_id: s.sample_id.clone(),
                });
            }
        }
        let humans: HashSet<&str> = samples
            .iter()
            .filter(|s| s.origin.is_human())
            .map(|s| s.sample_id.as_str())
            .collect();
        for s in &samples {
            if let Origin::Augmented { source } = &s.origin {
                if !humans.contains(source.as_str()) {
                    return Err(DatasetError::InvalidRecord(format!(
                        "augmented record {:?} references unknown human record {source:?}",
                        s.sample_id
                    )));
                }
            }
        }
        let classes = samples.iter().map(|s| s.class_label.clone()).collect();
        Ok(BookManifest {
            book_id: book_id.to_string(),
            samples,
            classes,
        })
    }

    pub fn human_samples(&self) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(|s| s.origin.is_human())
    }

    pub fn stats(&self) -> BookStats {
        let n_human = self.human_samples().count();
        BookStats {
            n_classes: self.classes.len(),
            n_human,
            n_augmented: self.samples.len() - n_human,
            n_total: self.samples.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BookStats {
    pub n_classes: usize,
    pub n_human: usize,
    pub n_augmented: usize,
    pub n_total: usize,
}

/// Parse a manifest file. Books are returned in order of first appearance.
pub fn load_manifest(path: &Path) -> Result<Vec<BookManifest>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<BookManifest>, DatasetError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_book: HashMap<String, Vec<SampleRecord>> = HashMap::new();
    let mut ids: HashSet<(String, String)> = HashSet::new();

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(DatasetError::Malformed {
                line: line_no,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let [book_id, class_label, origin, image_ref] = [fields[0], fields[1], fields[2], fields[3]];
        for (name, value) in [("book_id", book_id), ("class_label", class_label), ("image_ref", image_ref)] {
            if value.is_empty() {
                return Err(DatasetError::Malformed {
                    line: line_no,
                    msg: format!("empty {name}"),
                });
            }
        }
        let origin = match origin {
            "human" => Origin::Human,
            o => match o.strip_prefix("augmented:") {
                Some(src) if !src.is_empty() => Origin::Augmented {
                    source: src.to_string(),
                },
                _ => {
                    return Err(DatasetError::Malformed {
                        line: line_no,
                        msg: format!("origin must be 'human' or 'augmented:<source>', got {o:?}"),
                    })
                }
            },
        };
        if !ids.insert((book_id.to_string(), image_ref.to_string())) {
            return Err(DatasetError::Malformed {
                line: line_no,
                msg: format!("duplicate sample_id {image_ref:?} in book {book_id:?}"),
            });
        }
        let rec = SampleRecord {
            sample_id: image_ref.to_string(),
            book_id: book_id.to_string(),
            class_label: class_label.to_string(),
            image_ref: image_ref.to_string(),
            origin,
        };
        by_book
            .entry(book_id.to_string())
            .or_insert_with(|| {
                order.push(book_id.to_string());
                Vec::new()
            })
            .push(rec);
    }

    order
        .into_iter()
        .map(|id| {
            let samples = by_book.remove(&id).unwrap_or_default();
            BookManifest::new(&id, samples)
        })
        .collect()
}

pub fn write_manifest(path: &Path, books: &[BookManifest]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    writeln!(out, "# book_id\tclass_label\torigin\timage_ref").map_err(io_err)?;
    for book in books {
        for s in &book.samples {
            writeln!(out, "{}\t{}\t{}\t{}", s.book_id, s.class_label, s.origin, s.image_ref)
                .map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

/// A non-negative rational number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub const fn new(num: u64, den: u64) -> Self {
        Fraction { num, den }
    }

    /// `n * self` rounded half up.
    fn scale_round(self, n: u64) -> u64 {
        (2 * n * self.num + self.den) / (2 * self.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Fraction,
    pub val: Fraction,
    pub test: Fraction,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: Fraction::new(7, 9),
            val: Fraction::new(1, 9),
            test: Fraction::new(1, 9),
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fr = [self.train, self.val, self.test];
        if fr.iter().any(|f| f.den == 0 || f.num == 0) {
            return Err(DatasetError::InvalidSplit("all fractions must be > 0".into()));
        }
        let (a, b) = (self.train.num, self.train.den);
        let (c, d) = (self.val.num, self.val.den);
        let (e, f) = (self.test.num, self.test.den);
        if a * d * f + c * b * f + e * b * d != b * d * f {
            return Err(DatasetError::InvalidSplit("fractions must sum to 1".into()));
        }
        Ok(())
    }

    /// Smallest class size for which every partition can receive a sample:
    /// the reciprocal of the smallest fraction, rounded up.
    pub fn min_class_size(&self) -> usize {
        [self.train, self.val, self.test]
            .iter()
            .map(|f| f.den.div_ceil(f.num) as usize)
            .max()
            .unwrap_or(1)
    }

    /// Per-class partition sizes `(train, val, test)` for a class of `n`.
    pub fn partition_sizes(&self, n: usize) -> (usize, usize, usize) {
        let n = n as u64;
        let train = self.train.scale_round(n).min(n);
        let rem = n - train;
        // val share of the remainder = v / (v + t), rounded up
        let vn = self.val.num * self.test.den;
        let tn = self.test.num * self.val.den;
        let val = (rem * vn).div_ceil(vn + tn);
        (train as usize, val as usize, (rem - val) as usize)
    }
}

/// Disjoint train/val/test partitions of a book's human records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<SampleRecord>,
    pub val: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

/// Stratified per-class split of the human-origin records.
///
/// Within a class, records are ordered by a seeded hash of
/// `(seed, book_id, sample_id)` and cut into consecutive runs, so the
/// assignment does not depend on manifest order. Each partition is
/// returned sorted by `(class_label, sample_id)`.
pub fn split_book(book: &BookManifest, spec: &SplitSpec) -> Result<Split, DatasetError> {
    spec.validate()?;
    let need = spec.min_class_size();
    let mut per_class: BTreeMap<&str, Vec<&SampleRecord>> = BTreeMap::new();
    for s in book.human_samples() {
        per_class.entry(s.class_label.as_str()).or_default().push(s);
    }
    let mut split = Split::default();
    for (class, mut recs) in per_class {
        if recs.len() < need {
            return Err(DatasetError::ClassTooSmall {
                class: class.to_string(),
                have: recs.len(),
                need,
            });
        }
        recs.sort_by_cached_key(|r| {
            let h = seed::derive(&crate::seed_key!(spec.seed, &book.book_id, &r.sample_id));
            (h, r.sample_id.clone())
        });
        let (n_train, n_val, _) = spec.partition_sizes(recs.len());
        for (i, r) in recs.into_iter().enumerate() {
            let dst = if i < n_train {
                &mut split.train
            } else if i < n_train + n_val {
                &mut split.val
            } else {
                &mut split.test
            };
            dst.push(r.clone());
        }
    }
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.sort_by(|a, b| (&a.class_label, &a.sample_id).cmp(&(&b.class_label, &b.sample_id)));
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EligibilityRule {
    pub min_train_per_class: usize,
    pub min_classes: usize,
}

impl Default for EligibilityRule {
    fn default() -> Self {
        EligibilityRule {
            min_train_per_class: 20,
            min_classes: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibleBook {
    /// The manifest restricted to retained classes (all origins).
    pub book: BookManifest,
    pub split: Split,
    pub removed_classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    TooFewClasses { retained: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub book_id: String,
    pub reason: RejectReason,
    pub removed_classes: Vec<String>,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.reason {
            RejectReason::TooFewClasses { retained, required } => write!(
                f,
                "book {}: {retained} classes with enough training samples, {required} required",
                self.book_id
            ),
        }
    }
}

/// Drop classes with too few training samples, then reject the book if
/// too few classes remain.
pub fn filter_eligible(
    book: &BookManifest,
    split: &Split,
    rule: &EligibilityRule,
) -> Result<EligibleBook, Rejection> {
    let mut train_counts: BTreeMap<&str, usize> =
        book.classes.iter().map(|c| (c.as_str(), 0)).collect();
    for s in &split.train {
        *train_counts.entry(s.class_label.as_str()).or_default() += 1;
    }
    let removed: Vec<String> = train_counts
        .iter()
        .filter(|(_, &n)| n < rule.min_train_per_class)
        .map(|(c, _)| c.to_string())
        .collect();
    let retained = book.classes.len() - removed.len();
    if retained < rule.min_classes {
        return Err(Rejection {
            book_id: book.book_id.clone(),
            reason: RejectReason::TooFewClasses {
                retained,
                required: rule.min_classes,
            },
            removed_classes: removed,
        });
    }
    let drop: HashSet<&str> = removed.iter().map(String::as_str).collect();
    let keep = |recs: &[SampleRecord]| -> Vec<SampleRecord> {
        recs.iter()
            .filter(|s| !drop.contains(s.class_label.as_str()))
            .cloned()
            .collect()
    };
    let filtered = BookManifest {
        book_id: book.book_id.clone(),
        samples: keep(&book.samples),
        classes: book
            .classes
            .iter()
            .filter(|c| !drop.contains(c.as_str()))
            .cloned()
            .collect(),
    };
    Ok(EligibleBook {
        book: filtered,
        split: Split {
            train: keep(&split.train),
            val: keep(&split.val),
            test: keep(&split.test),
        },
        removed_classes: removed,
    })
}

/// Mean, extremes and sample standard deviation of per-book class counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCountSummary {
    pub mean: f64,
    pub min: usize,
    pub max: usize,
    pub sd: f64,
}

pub fn class_count_summary(books: &[BookManifest]) -> Result<ClassCountSummary, DatasetError> {
    if books.is_empty() {
        return Err(DatasetError::EmptyBookList);
    }
    let counts: Vec<usize> = books.iter().map(|b| b.classes.len()).collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let sd = if counts.len() > 1 {
        let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ClassCountSummary {
        mean,
        min: *counts.iter().min().unwrap(),
        max: *counts.iter().max().unwrap(),
        sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn book_with(counts: &[(&str, usize)]) -> BookManifest {
        let mut samples = Vec::new();
        for (class, n) in counts {
            for i in 0..*n {
                samples.push(SampleRecord::human("b1", class, &format!("{class}/{i:04}.pgm")));
            }
        }
        BookManifest::new("b1", samples).unwrap()
    }

    #[test]
    fn manifest_two_lines_one_book() {
        let books = parse_manifest("b1\tcat\thuman\ta.pgm\nb1\tdog\thuman\tb.pgm\n").unwrap();
        assert_eq!(books.len(), 1);
        assert_eq!(books[0].samples.len(), 2);
        assert_eq!(books[0].classes.len(), 2);
    }

    #[test]
    fn manifest_empty_file() {
        assert!(parse_manifest("").unwrap().is_empty());
        assert!(parse_manifest("# only a comment\n").unwrap().is_empty());
    }

    #[test]
    fn manifest_short_line_names_line_number() {
        let mut text = String::from("# header\n");
        for i in 0..5 {
            text.push_str(&format!("b1\tc\thuman\t{i}.pgm\n"));
        }
        text.push_str("b1\tc\thuman\n");
        let err = parse_manifest(&text).unwrap_err().to_string();
        assert!(err.starts_with("line 7: expected 4 fields"), "{err}");
    }

    #[test]
    fn manifest_duplicate_sample_rejected() {
        let err = parse_manifest("b1\tc\thuman\ta.pgm\nb1\td\thuman\ta.pgm\n").unwrap_err();
        assert!(err.to_string().contains("duplicate sample_id"), "{err}");
        // same image_ref in different books is fine
        assert_eq!(parse_manifest("b1\tc\thuman\ta.pgm\nb2\tc\thuman\ta.pgm\n").unwrap().len(), 2);
    }

    #[test]
    fn manifest_preserves_order_and_origins() {
        let text = "b2\tx\thuman\tq.pgm\nb1\tc\thuman\ta.pgm\nb1\tc\taugmented:a.pgm\ta_m0.pgm\n";
        let books = parse_manifest(text).unwrap();
        assert_eq!(books[0].book_id, "b2");
        assert_eq!(books[1].book_id, "b1");
        assert_eq!(
            books[1].samples[1].origin,
            Origin::Augmented { source: "a.pgm".into() }
        );
        let st = books[1].stats();
        assert_eq!((st.n_human, st.n_augmented, st.n_total), (1, 1, 2));
        assert!(parse_manifest("b1\tc\taugmented:zz\ta.pgm\n").is_err());
        assert!(parse_manifest("b1\tc\tmachine\ta.pgm\n").is_err());
    }

    #[test]
    fn split_sizes_nine_and_ninety() {
        let spec = SplitSpec::default();
        assert_eq!(spec.partition_sizes(9), (7, 1, 1));
        assert_eq!(spec.partition_sizes(90), (70, 10, 10));
        assert_eq!(spec.partition_sizes(26), (20, 3, 3));
        assert_eq!(spec.partition_sizes(12), (9, 2, 1));

        let split = split_book(&book_with(&[("a", 9), ("b", 90)]), &spec).unwrap();
        let count = |v: &[SampleRecord], c: &str| v.iter().filter(|s| s.class_label == c).count();
        assert_eq!((count(&split.train, "a"), count(&split.val, "a"), count(&split.test, "a")), (7, 1, 1));
        assert_eq!((count(&split.train, "b"), count(&split.val, "b"), count(&split.test, "b")), (70, 10, 10));
    }

    #[test]
    fn split_is_deterministic() {
        let book = book_with(&[("a", 30), ("b", 40)]);
        let spec = SplitSpec::with_seed(42);
        assert_eq!(split_book(&book, &spec).unwrap(), split_book(&book, &spec).unwrap());
        let other = split_book(&book, &SplitSpec::with_seed(43)).unwrap();
        assert_ne!(split_book(&book, &spec).unwrap().train, other.train);
    }

    #[test]
    fn split_small_class_errors() {
        let err = split_book(&book_with(&[("a", 9), ("tiny", 8)]), &SplitSpec::default()).unwrap_err();
        assert!(matches!(err, DatasetError::ClassTooSmall { ref class, have: 8, need: 9 } if class == "tiny"));
    }

    #[test]
    fn split_ignores_augmented_records() {
        let mut book = book_with(&[("a", 9)]);
        book.samples.push(SampleRecord {
            sample_id: "a/0000_m0.pgm".into(),
            book_id: "b1".into(),
            class_label: "a".into(),
            image_ref: "a/0000_m0.pgm".into(),
            origin: Origin::Augmented { source: "a/0000.pgm".into() },
        });
        let split = split_book(&book, &SplitSpec::default()).unwrap();
        assert_eq!(split.train.len() + split.val.len() + split.test.len(), 9);
    }

    #[test]
    fn invalid_split_spec() {
        let mut spec = SplitSpec { test: Fraction::new(2, 9), ..Default::default() };
        assert!(spec.validate().is_err());
        spec.test = Fraction::new(0, 9);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn eligibility_all_pass() {
        let counts: Vec<(String, usize)> = (0..12).map(|i| (format!("c{i:02}"), 32)).collect();
        let refs: Vec<(&str, usize)> = counts.iter().map(|(c, n)| (c.as_str(), *n)).collect();
        let book = book_with(&refs);
        let split = split_book(&book, &SplitSpec::default()).unwrap();
        assert_eq!(split.train.len(), 12 * 25);
        let el = filter_eligible(&book, &split, &EligibilityRule::default()).unwrap();
        assert_eq!(el.book, book);
        assert_eq!(el.split, split);
        assert!(el.removed_classes.is_empty());
    }

    #[test]
    fn eligibility_removes_small_class() {
        // 24 human samples -> 19 train
        assert_eq!(SplitSpec::default().partition_sizes(24).0, 19);
        let mut counts: Vec<(String, usize)> = (0..10).map(|i| (format!("c{i:02}"), 26)).collect();
        counts.push(("small".into(), 24));
        let refs: Vec<(&str, usize)> = counts.iter().map(|(c, n)| (c.as_str(), *n)).collect();
        let book = book_with(&refs);
        let split = split_book(&book, &SplitSpec::default()).unwrap();
        let el = filter_eligible(&book, &split, &EligibilityRule::default()).unwrap();
        assert_eq!(el.removed_classes, vec!["small".to_string()]);
        assert_eq!(el.book.classes.len(), 10);
        for part in [&el.split.train, &el.split.val, &el.split.test] {
            assert!(part.iter().all(|s| s.class_label != "small"));
        }
        assert!(el.book.samples.iter().all(|s| s.class_label != "small"));
    }

    #[test]
    fn eligibility_rejects_book_with_nine_classes() {
        let mut counts: Vec<(String, usize)> = (0..9).map(|i| (format!("c{i:02}"), 26)).collect();
        counts.push(("small".into(), 20));
        let refs: Vec<(&str, usize)> = counts.iter().map(|(c, n)| (c.as_str(), *n)).collect();
        let book = book_with(&refs);
        let split = split_book(&book, &SplitSpec::default()).unwrap();
        let rej = filter_eligible(&book, &split, &EligibilityRule::default()).unwrap_err();
        assert_eq!(rej.reason, RejectReason::TooFewClasses { retained: 9, required: 10 });
    }

    #[test]
    fn class_count_summary_cases() {
        let b10 = book_with(&(0..10).map(|i| (["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"][i], 1)).collect::<Vec<_>>());
        let s = class_count_summary(std::slice::from_ref(&b10)).unwrap();
        assert_eq!((s.mean, s.min, s.max, s.sd), (10.0, 10, 10, 0.0));

        let labels: Vec<String> = (0..30).map(|i| format!("k{i}")).collect();
        let b30 = book_with(&labels.iter().map(|l| (l.as_str(), 1)).collect::<Vec<_>>());
        let s = class_count_summary(&[b10, b30]).unwrap();
        assert_eq!(s.mean, 20.0);
        // sqrt(((10-20)^2 + (30-20)^2) / 1) = sqrt(200)
        assert!((s.sd - 14.142_135_623_730_951).abs() < 1e-12);
        assert!(matches!(class_count_summary(&[]), Err(DatasetError::EmptyBookList)));
    }

    proptest! {
        #[test]
        fn split_properties(sizes in proptest::collection::vec(9usize..60, 1..6), seed in any::<u64>(), rot in 0usize..100) {
            let counts: Vec<(String, usize)> = sizes.iter().enumerate().map(|(i, &n)| (format!("c{i}"), n)).collect();
            let refs: Vec<(&str, usize)> = counts.iter().map(|(c, n)| (c.as_str(), *n)).collect();
            let book = book_with(&refs);
            let spec = SplitSpec::with_seed(seed);
            let split = split_book(&book, &spec).unwrap();

            // disjoint and covering
            let mut all: Vec<&str> = split.train.iter().chain(&split.val).chain(&split.test).map(|s| s.sample_id.as_str()).collect();
            let n = all.len();
            all.sort();
            all.dedup();
            prop_assert_eq!(all.len(), n);
            prop_assert_eq!(n, book.samples.len());

            for (c, size) in &counts {
                let tr = split.train.iter().filter(|s| &s.class_label == c).count();
                let va = split.val.iter().filter(|s| &s.class_label == c).count();
                let te = split.test.iter().filter(|s| &s.class_label == c).count();
                prop_assert_eq!(tr, (14 * size + 9) / 18);
                prop_assert!(va >= te && te >= 1);
            }

            // order independence
            let mut shuffled = book.samples.clone();
            let len = shuffled.len();
            shuffled.rotate_left(rot % len);
            shuffled.reverse();
            let book2 = BookManifest::new("b1", shuffled).unwrap();
            prop_assert_eq!(split_book(&book2, &spec).unwrap(), split);
        }
    }
}
