use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::config::RetryScope;
use super::pipeline::{BookInput, MethodRunner, Pipeline};
use super::results::{sort_results, write_results_csv, RunResult};
use super::{ExperimentConfig, HarnessError, Method};

/// Run one method on one book, timing the whole event. Pipeline errors
/// become failed rows carrying the error text.
pub fn run_book<R: MethodRunner + ?Sized>(
    runner: &R,
    book: &BookInput,
    method: Method,
    attempt: u32,
    config: &ExperimentConfig,
) -> RunResult {
    let t0 = Instant::now();
    let outcome = runner.run(book, method, attempt, config).and_then(|o| {
        if (0.0..=1.0).contains(&o.accuracy) {
            Ok(o)
        } else {
            Err(HarnessError::Pipeline(format!("accuracy {} outside [0, 1]", o.accuracy)))
        }
    });
    let wall_seconds = t0.elapsed().as_secs_f64();
    let row = match outcome {
        Ok(o) => RunResult {
            book_id: book.book_id().to_string(),
            method,
            attempt,
            n_classes: o.n_classes,
            n_train_human: o.n_train_human,
            n_train_augmented: o.n_train_augmented,
            n_test: o.n_test,
            accuracy: o.accuracy,
            wall_seconds,
            failed: o.accuracy < config.failure_threshold,
            error_note: String::new(),
        },
        Err(e) => RunResult {
            book_id: book.book_id().to_string(),
            method,
            attempt,
            n_classes: book.manifest.classes.len(),
            n_train_human: 0,
            n_train_augmented: 0,
            n_test: 0,
            accuracy: 0.0,
            wall_seconds,
            failed: true,
            error_note: e.to_string().replace(['\n', '\r'], " "),
        },
    };
    if row.error_note.is_empty() {
        log::info!(
            "{} {} attempt {}: accuracy {:.4} in {:.1}s",
            row.book_id,
            method,
            attempt,
            row.accuracy,
            wall_seconds
        );
    } else {
        log::warn!("{} {} attempt {}: {}", row.book_id, method, attempt, row.error_note);
    }
    row
}

fn maybe_par<T, F>(parallel: bool, jobs: Vec<T>, f: F) -> Vec<RunResult>
where
    T: Send,
    F: Fn(T) -> Vec<RunResult> + Sync + Send,
{
    if parallel {
        jobs.into_par_iter().flat_map_iter(f).collect()
    } else {
        jobs.into_iter().flat_map(f).collect()
    }
}

/// Further attempts for the runs selected by the retry policy: methods in
/// `retry_methods`, and under [`RetryScope::Failed`] only while the latest
/// attempt failed. Each attempt derives its own seed. Returns the new rows,
/// sorted; the input rows are not repeated.
pub fn apply_retry<R: MethodRunner + ?Sized>(
    runner: &R,
    books: &[BookInput],
    results: &[RunResult],
    config: &ExperimentConfig,
) -> Vec<RunResult> {
    let by_id: HashMap<&str, &BookInput> = books.iter().map(|b| (b.book_id(), b)).collect();
    let mut latest: BTreeMap<(&str, Method), &RunResult> = BTreeMap::new();
    for r in results {
        if !config.retry_methods.contains(&r.method) {
            continue;
        }
        let slot = latest.entry((r.book_id.as_str(), r.method)).or_insert(r);
        if r.attempt > slot.attempt {
            *slot = r;
        }
    }
    let jobs: Vec<(&BookInput, &RunResult)> = latest
        .into_values()
        .filter_map(|r| by_id.get(r.book_id.as_str()).map(|b| (*b, r)))
        .collect();
    let mut out = maybe_par(config.parallel_books, jobs, |(book, last)| {
        let mut rows = Vec::new();
        let (mut attempt, mut failed) = (last.attempt, last.failed);
        while attempt < config.max_attempts && (failed || config.retry_scope == RetryScope::All) {
            attempt += 1;
            let r = run_book(runner, book, last.method, attempt, config);
            failed = r.failed;
            rows.push(r);
        }
        rows
    });
    sort_results(&mut out);
    out
}

/// Outcome of retried runs, comparing each run's first attempt with its
/// last one against the failure flag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetryCounts {
    pub retried: usize,
    /// Failed both times.
    pub still_failed: usize,
    /// Failed first, then reached the threshold.
    pub improved: usize,
    /// Passed first, then fell below the threshold.
    pub worsened: usize,
    /// Passed both times.
    pub stayed_ok: usize,
}

impl fmt::Display for RetryCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} retried: {} still failed, {} improved, {} worsened, {} stayed above threshold",
            self.retried, self.still_failed, self.improved, self.worsened, self.stayed_ok
        )
    }
}

/// First and last attempt seen for one (book, method).
type AttemptPair<'a> = (Option<&'a RunResult>, Option<&'a RunResult>);

pub fn retry_counts(results: &[RunResult]) -> RetryCounts {
    let mut groups: BTreeMap<(&str, Method), AttemptPair> = BTreeMap::new();
    for r in results {
        let (first, last) = groups.entry((r.book_id.as_str(), r.method)).or_default();
        if r.attempt == 1 {
            *first = Some(r);
        } else if last.is_none_or(|l| r.attempt > l.attempt) {
            *last = Some(r);
        }
    }
    let mut c = RetryCounts::default();
    for (first, last) in groups.into_values() {
        let (Some(a), Some(b)) = (first, last) else { continue };
        c.retried += 1;
        match (a.failed, b.failed) {
            (true, true) => c.still_failed += 1,
            (true, false) => c.improved += 1,
            (false, true) => c.worsened += 1,
            (false, false) => c.stayed_ok += 1,
        }
    }
    c
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    /// Every attempt, sorted by `(book_id, method, attempt)`.
    pub results: Vec<RunResult>,
    pub retry: RetryCounts,
    pub csv_path: PathBuf,
}

pub const RESULTS_FILE: &str = "results.csv";

/// [`run_suite_with`] using the real pipelines and the codebooks named in
/// the config.
pub fn run_suite(books: &[BookInput], config: &ExperimentConfig) -> Result<SuiteReport, HarnessError> {
    config.validate()?;
    let pipeline = Pipeline::from_config(config)?;
    run_suite_with(&pipeline, books, config)
}

/// First attempts of every (book, method), then retries; writes
/// `results.csv` and the effective `config.txt` into the output directory.
/// The output location is checked before any run starts.
pub fn run_suite_with<R: MethodRunner + ?Sized>(
    runner: &R,
    books: &[BookInput],
    config: &ExperimentConfig,
) -> Result<SuiteReport, HarnessError> {
    config.validate()?;
    if books.is_empty() {
        return Err(HarnessError::NoBooks);
    }
    let mut ids = HashSet::new();
    if let Some(dup) = books.iter().find(|b| !ids.insert(b.book_id())) {
        return Err(HarnessError::InvalidConfig(format!("book {:?} given twice", dup.book_id())));
    }
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let csv_path = dir.join(RESULTS_FILE);
    let csv_file = File::create(&csv_path).map_err(HarnessError::io(&csv_path))?;
    let config_path = dir.join("config.txt");
    fs::write(&config_path, config.to_text()).map_err(HarnessError::io(&config_path))?;

    let jobs: Vec<(&BookInput, Method)> =
        books.iter().flat_map(|b| config.methods.iter().map(move |&m| (b, m))).collect();
    let mut results = maybe_par(config.parallel_books, jobs, |(b, m)| vec![run_book(runner, b, m, 1, config)]);
    let retries = apply_retry(runner, books, &results, config);
    results.extend(retries);
    sort_results(&mut results);

    write_results_csv(&results, BufWriter::new(csv_file)).map_err(|e| HarnessError::Io {
        path: csv_path.clone(),
        source: e.into(),
    })?;
    let retry = retry_counts(&results);
    if retry.retried > 0 {
        log::info!("retries: {retry}");
    }
    Ok(SuiteReport { results, retry, csv_path })
}

#[cfg(test)]
mod tests {
    use super::super::pipeline::MethodOutcome;
    use super::*;
    use crate::dataset::{BookManifest, SampleRecord};
    use crate::harness::ImageStore;
    use std::sync::Arc;

    /// Accuracy looked up by (book, method, attempt); unknown keys error.
    struct Scripted(HashMap<(String, Method, u32), f64>);

    impl MethodRunner for Scripted {
        fn run(&self, book: &BookInput, method: Method, attempt: u32, _: &ExperimentConfig) -> Result<MethodOutcome, HarnessError> {
            let acc = self
                .0
                .get(&(book.book_id().to_string(), method, attempt))
                .ok_or_else(|| HarnessError::Pipeline("scripted failure".into()))?;
            Ok(MethodOutcome { n_classes: 10, n_train_human: 200, n_train_augmented: 1000, n_test: 30, accuracy: *acc })
        }
    }

    fn book(id: &str) -> BookInput {
        let recs = vec![SampleRecord::human(id, "w", &format!("{id}/a.pgm"))];
        BookInput {
            manifest: BookManifest::new(id, recs).unwrap(),
            images: ImageStore::Memory(Arc::new(HashMap::new())),
            tapped: None,
        }
    }

    fn config(dir: &std::path::Path) -> ExperimentConfig {
        ExperimentConfig { output_dir: dir.to_path_buf(), parallel_books: false, ..Default::default() }
    }

    #[test]
    fn failure_flag_is_strict() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let b = book("b");
        let s = Scripted(HashMap::from([
            (("b".into(), Method::Cnn, 1), 0.07),
            (("b".into(), Method::Bovw, 1), 0.10),
        ]));
        assert!(run_book(&s, &b, Method::Cnn, 1, &cfg).failed);
        assert!(!run_book(&s, &b, Method::Bovw, 1, &cfg).failed);
        let err = run_book(&s, &b, Method::Tapped, 1, &cfg);
        assert!(err.failed);
        assert_eq!(err.error_note, "scripted failure");
    }

    #[test]
    fn suite_rows_sorted_and_complete() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.methods = vec![Method::Cnn, Method::Bovw];
        cfg.max_attempts = 1;
        let books = [book("c"), book("a"), book("b")];
        let mut script = HashMap::new();
        for id in ["a", "b", "c"] {
            for m in [Method::Bovw, Method::Cnn] {
                script.insert((id.to_string(), m, 1), 0.5);
            }
        }
        let rep = run_suite_with(&Scripted(script), &books, &cfg).unwrap();
        assert_eq!(rep.results.len(), 6);
        let keys: Vec<_> = rep.results.iter().map(|r| (r.book_id.clone(), r.method)).collect();
        assert_eq!(keys[0], ("a".to_string(), Method::Bovw));
        assert_eq!(keys[5], ("c".to_string(), Method::Cnn));
        let text = fs::read_to_string(&rep.csv_path).unwrap();
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn unwritable_output_fails_before_running() {
        struct Panics;
        impl MethodRunner for Panics {
            fn run(&self, _: &BookInput, _: Method, _: u32, _: &ExperimentConfig) -> Result<MethodOutcome, HarnessError> {
                panic!("must not run")
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let cfg = config(&blocker.join("out"));
        assert!(matches!(run_suite_with(&Panics, &[book("a")], &cfg), Err(HarnessError::Io { .. })));
    }

    #[test]
    fn no_failures_no_retries() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path());
        let b = [book("a")];
        let first = vec![run_book(&Scripted(HashMap::from([(("a".into(), Method::Cnn, 1), 0.9)])), &b[0], Method::Cnn, 1, &cfg)];
        assert!(apply_retry(&Scripted(HashMap::new()), &b, &first, &cfg).is_empty());
    }

    #[test]
    fn fail_then_succeed_is_improved() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.methods = vec![Method::Cnn];
        let s = Scripted(HashMap::from([
            (("a".into(), Method::Cnn, 1), 0.02),
            (("a".into(), Method::Cnn, 2), 0.6),
        ]));
        let rep = run_suite_with(&s, &[book("a")], &cfg).unwrap();
        assert_eq!(rep.results.len(), 2);
        assert_eq!(rep.retry, RetryCounts { retried: 1, improved: 1, ..Default::default() });
    }

    #[test]
    fn retry_scope_and_attempt_cap() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path());
        cfg.methods = vec![Method::Cnn, Method::Bovw];
        cfg.max_attempts = 3;
        let mut script = HashMap::new();
        for a in 1..=3 {
            script.insert(("a".to_string(), Method::Cnn, a), 0.01);
            script.insert(("b".to_string(), Method::Cnn, a), 0.9);
            script.insert(("a".to_string(), Method::Bovw, a), 0.01);
            script.insert(("b".to_string(), Method::Bovw, a), 0.9);
        }
        let s = Scripted(script);
        let rep = run_suite_with(&s, &[book("a"), book("b")], &cfg).unwrap();
        // only the failing CNN run is retried, twice; bovw is never retried
        assert_eq!(rep.results.len(), 6);
        assert_eq!(rep.retry, RetryCounts { retried: 1, still_failed: 1, ..Default::default() });
        cfg.retry_scope = RetryScope::All;
        let rep = run_suite_with(&s, &[book("a"), book("b")], &cfg).unwrap();
        assert_eq!(rep.results.len(), 8);
        assert_eq!(rep.retry.stayed_ok, 1);
    }
}
