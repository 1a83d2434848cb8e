use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{HarnessError, Method};

pub const CSV_HEADER: [&str; 11] = [
    "book_id",
    "method",
    "attempt",
    "n_classes",
    "n_train_human",
    "n_train_augmented",
    "n_test",
    "accuracy",
    "wall_seconds",
    "failed",
    "error_note",
];

/// One training-and-testing event.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub book_id: String,
    pub method: Method,
    /// 1-based.
    pub attempt: u32,
    pub n_classes: usize,
    pub n_train_human: usize,
    pub n_train_augmented: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub wall_seconds: f64,
    pub failed: bool,
    /// Empty unless the pipeline raised an error.
    pub error_note: String,
}

impl RunResult {
    pub fn sort_key(&self) -> (&str, Method, u32) {
        (&self.book_id, self.method, self.attempt)
    }

    /// The row without its timing, for determinism comparisons.
    pub fn without_timing(&self) -> RunResult {
        RunResult { wall_seconds: 0.0, ..self.clone() }
    }
}

pub(crate) fn sort_results(rows: &mut [RunResult]) {
    rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Accuracy is written in shortest round-trip form so rows read back
/// exactly; wall time to the millisecond.
pub fn write_results_csv<W: Write>(rows: &[RunResult], w: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in rows {
        out.write_record([
            r.book_id.clone(),
            r.method.to_string(),
            r.attempt.to_string(),
            r.n_classes.to_string(),
            r.n_train_human.to_string(),
            r.n_train_augmented.to_string(),
            r.n_test.to_string(),
            r.accuracy.to_string(),
            format!("{:.3}", r.wall_seconds),
            r.failed.to_string(),
            r.error_note.clone(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<RunResult>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let bad = |line: usize, msg: String| HarnessError::BadResults { line, msg };
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(1, format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("bad {what} {s:?}"))
        }
        let parsed: Result<RunResult, String> = (|| {
            let accuracy: f64 = num(field(7), "accuracy")?;
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(format!("accuracy {accuracy} outside [0, 1]"));
            }
            Ok(RunResult {
                book_id: field(0).to_string(),
                method: field(1).parse()?,
                attempt: num(field(2), "attempt")?,
                n_classes: num(field(3), "n_classes")?,
                n_train_human: num(field(4), "n_train_human")?,
                n_train_augmented: num(field(5), "n_train_augmented")?,
                n_test: num(field(6), "n_test")?,
                accuracy,
                wall_seconds: num(field(8), "wall_seconds")?,
                failed: num(field(9), "failed")?,
                error_note: field(10).to_string(),
            })
        })();
        rows.push(parsed.map_err(|m| bad(line, m))?);
    }
    Ok(rows)
}

pub fn load_results(path: &Path) -> Result<Vec<RunResult>, HarnessError> {
    let f = File::open(path).map_err(HarnessError::io(path))?;
    read_results_csv(f)
}
