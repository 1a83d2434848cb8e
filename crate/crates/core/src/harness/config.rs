//! Flat `key = value` experiment configuration. Blank lines and `#`
//! comments are ignored; unknown and repeated keys are errors. Lists are
//! comma-separated.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{HarnessError, Method};
use crate::augment::MorphParams;
use crate::bovw::{PatchConfig, SomSchedule};
use crate::centroid::{Metric, PartitionScheme};
use crate::dataset::EligibilityRule;
use crate::nn::{Precision, TrainConfig};

/// Which CNN runs get further attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetryScope {
    /// Only runs whose latest attempt failed.
    #[default]
    Failed,
    /// Every run, up to `max_attempts`.
    All,
}

impl FromStr for RetryScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "failed" => Ok(RetryScope::Failed),
            "all" => Ok(RetryScope::All),
            other => Err(format!("unknown retry scope {other:?}")),
        }
    }
}

impl RetryScope {
    pub fn as_str(self) -> &'static str {
        match self {
            RetryScope::Failed => "failed",
            RetryScope::All => "all",
        }
    }
}

/// Everything that determines a suite's results. The seeds inside `morph`,
/// `som` and `train` are ignored: each run derives its own from `seed`,
/// the book, the method and the attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Runs with accuracy strictly below this are flagged failed.
    pub failure_threshold: f64,
    pub max_attempts: u32,
    pub retry_scope: RetryScope,
    pub retry_methods: Vec<Method>,
    pub output_dir: PathBuf,
    pub parallel_books: bool,
    pub eligibility: EligibilityRule,
    /// Methods whose training set is augmented with morphed copies.
    pub augment_methods: Vec<Method>,
    pub morph: MorphParams,
    pub grid_w: usize,
    pub grid_h: usize,
    pub som: SomSchedule,
    pub patch: PatchConfig,
    /// Candidate codebook files; empty means each book trains its own.
    pub codebooks: Vec<PathBuf>,
    /// Training images sampled for a book's own codebook.
    pub codebook_images: usize,
    /// Training images sampled to probe the candidate codebooks.
    pub probe_images: usize,
    pub bovw_metric: Metric,
    pub train: TrainConfig,
    pub partition: PartitionScheme,
    /// Directory of `<book_id>.tsv` tapped-feature files.
    pub tapped_dir: Option<PathBuf>,
    pub tapped_normalize: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: Method::ALL.to_vec(),
            seed: 0,
            failure_threshold: 0.10,
            max_attempts: 2,
            retry_scope: RetryScope::Failed,
            retry_methods: vec![Method::Cnn],
            output_dir: PathBuf::from("results"),
            parallel_books: true,
            eligibility: EligibilityRule::default(),
            augment_methods: vec![Method::Bovw, Method::Cnn],
            morph: MorphParams::default(),
            grid_w: 15,
            grid_h: 15,
            som: SomSchedule::for_grid(15, 15),
            patch: PatchConfig::default(),
            codebooks: Vec::new(),
            codebook_images: 400,
            probe_images: 50,
            bovw_metric: Metric::Euclidean,
            train: TrainConfig::default(),
            partition: PartitionScheme::OddEven,
            tapped_dir: None,
            tapped_normalize: false,
        }
    }
}

fn parse_list<T: FromStr<Err = String> + Ord>(v: &str) -> Result<Vec<T>, String> {
    let set: BTreeSet<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(T::from_str)
        .collect::<Result<_, _>>()?;
    Ok(set.into_iter().collect())
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| format!("{v:?}: {e}"))
}

fn join(methods: &[Method]) -> String {
    methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
        Self::parse(&text)
    }

    /// Parse and validate. Keys not given keep their defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut c = ExperimentConfig::default();
        let mut seen = BTreeSet::new();
        let mut radius_given = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| HarnessError::Config { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, v) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            let r: Result<(), String> = (|| {
                match key {
                    "methods" => c.methods = parse_list(v)?,
                    "seed" => c.seed = num(v)?,
                    "failure_threshold" => c.failure_threshold = num(v)?,
                    "max_attempts" => c.max_attempts = num(v)?,
                    "retry_scope" => c.retry_scope = v.parse()?,
                    "retry_methods" => c.retry_methods = parse_list(v)?,
                    "output_dir" => c.output_dir = PathBuf::from(v),
                    "parallel_books" => c.parallel_books = parse_bool(v)?,
                    "min_train_per_class" => c.eligibility.min_train_per_class = num(v)?,
                    "min_classes" => c.eligibility.min_classes = num(v)?,
                    "augment_methods" => c.augment_methods = parse_list(v)?,
                    "morph.amplitude" => c.morph.amplitude = num(v)?,
                    "morph.smoothing_radius" => c.morph.smoothing_radius = num(v)?,
                    "morph.variants" => c.morph.variants_per_sample = num(v)?,
                    "som.grid_w" => c.grid_w = num(v)?,
                    "som.grid_h" => c.grid_h = num(v)?,
                    "som.epochs" => c.som.epochs = num(v)?,
                    "som.lr_start" => c.som.lr_start = num(v)?,
                    "som.lr_end" => c.som.lr_end = num(v)?,
                    "som.radius_start" => {
                        c.som.radius_start = num(v)?;
                        radius_given = true;
                    }
                    "som.radius_end" => c.som.radius_end = num(v)?,
                    "som.max_descriptors" => c.som.max_descriptors = num(v)?,
                    "patch.size" => c.patch.patch = num(v)?,
                    "patch.stride" => c.patch.stride = num(v)?,
                    "patch.min_std" => c.patch.min_std = num(v)?,
                    "bovw.codebooks" => {
                        c.codebooks = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
                    }
                    "bovw.codebook_images" => c.codebook_images = num(v)?,
                    "bovw.probe_images" => c.probe_images = num(v)?,
                    "bovw.metric" => c.bovw_metric = v.parse()?,
                    "cnn.epochs" => c.train.epochs = num(v)?,
                    "cnn.batch_size" => c.train.batch_size = num(v)?,
                    "cnn.learning_rate" => c.train.learning_rate = num(v)?,
                    "cnn.beta1" => c.train.beta1 = num(v)?,
                    "cnn.beta2" => c.train.beta2 = num(v)?,
                    "cnn.epsilon" => c.train.epsilon = num(v)?,
                    "cnn.precision" => c.train.precision = v.parse::<Precision>()?,
                    "tapped.partition" => c.partition = v.parse()?,
                    "tapped.features_dir" => c.tapped_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
                    "tapped.normalize" => c.tapped_normalize = parse_bool(v)?,
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            r.map_err(err)?;
        }
        if !radius_given {
            c.som.radius_start = SomSchedule::for_grid(c.grid_w, c.grid_h).radius_start;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if !(self.failure_threshold > 0.0 && self.failure_threshold < 1.0) {
            return bad(format!("failure_threshold must be in (0, 1), got {}", self.failure_threshold));
        }
        if self.max_attempts < 1 {
            return bad("max_attempts must be >= 1".into());
        }
        if !self.morph.is_valid() {
            return bad("morph amplitude must be >= 0 and smoothing radius > 0".into());
        }
        if self.grid_w == 0 || self.grid_h == 0 {
            return bad("SOM grid dimensions must be >= 1".into());
        }
        if self.patch.patch == 0 || self.patch.stride == 0 {
            return bad("patch size and stride must be >= 1".into());
        }
        if self.codebook_images == 0 || self.probe_images == 0 {
            return bad("bovw.codebook_images and bovw.probe_images must be >= 1".into());
        }
        self.som.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        self.train.validate().map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Every key, in a form [`ExperimentConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("methods", join(&self.methods));
        kv("seed", self.seed.to_string());
        kv("failure_threshold", self.failure_threshold.to_string());
        kv("max_attempts", self.max_attempts.to_string());
        kv("retry_scope", self.retry_scope.as_str().into());
        kv("retry_methods", join(&self.retry_methods));
        kv("output_dir", self.output_dir.display().to_string());
        kv("parallel_books", self.parallel_books.to_string());
        kv("min_train_per_class", self.eligibility.min_train_per_class.to_string());
        kv("min_classes", self.eligibility.min_classes.to_string());
        kv("augment_methods", join(&self.augment_methods));
        kv("morph.amplitude", self.morph.amplitude.to_string());
        kv("morph.smoothing_radius", self.morph.smoothing_radius.to_string());
        kv("morph.variants", self.morph.variants_per_sample.to_string());
        kv("som.grid_w", self.grid_w.to_string());
        kv("som.grid_h", self.grid_h.to_string());
        kv("som.epochs", self.som.epochs.to_string());
        kv("som.lr_start", self.som.lr_start.to_string());
        kv("som.lr_end", self.som.lr_end.to_string());
        kv("som.radius_start", self.som.radius_start.to_string());
        kv("som.radius_end", self.som.radius_end.to_string());
        kv("som.max_descriptors", self.som.max_descriptors.to_string());
        kv("patch.size", self.patch.patch.to_string());
        kv("patch.stride", self.patch.stride.to_string());
        kv("patch.min_std", self.patch.min_std.to_string());
        kv(
            "bovw.codebooks",
            self.codebooks.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(","),
        );
        kv("bovw.codebook_images", self.codebook_images.to_string());
        kv("bovw.probe_images", self.probe_images.to_string());
        kv("bovw.metric", self.bovw_metric.as_str().into());
        kv("cnn.epochs", self.train.epochs.to_string());
        kv("cnn.batch_size", self.train.batch_size.to_string());
        kv("cnn.learning_rate", self.train.learning_rate.to_string());
        kv("cnn.beta1", self.train.beta1.to_string());
        kv("cnn.beta2", self.train.beta2.to_string());
        kv("cnn.epsilon", self.train.epsilon.to_string());
        kv("cnn.precision", self.train.precision.as_str().into());
        kv("tapped.partition", self.partition.as_str().into());
        kv(
            "tapped.features_dir",
            self.tapped_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        kv("tapped.normalize", self.tapped_normalize.to_string());
        s
    }

    pub fn is_augmented(&self, method: Method) -> bool {
        self.augment_methods.contains(&method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.failure_threshold, 0.10);
        assert_eq!(c.max_attempts, 2);
        assert_eq!(c.som.radius_start, 7.5);
    }

    #[test]
    fn parses_keys_and_comments() {
        let c = ExperimentConfig::parse(
            "# smoke\nmethods = cnn, bovw\nseed=7\n\nretry_scope = all\ncnn.epochs = 3\nsom.grid_w = 4\nsom.grid_h = 2\n",
        )
        .unwrap();
        assert_eq!(c.methods, vec![Method::Bovw, Method::Cnn]);
        assert_eq!(c.seed, 7);
        assert_eq!(c.retry_scope, RetryScope::All);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.som.radius_start, 2.0);
    }

    #[test]
    fn rejects_bad_input() {
        for (text, want) in [
            ("nonsense", "line 1"),
            ("seed = 1\nseed = 2", "duplicate"),
            ("colour = red", "unknown key"),
            ("max_attempts = 0", "max_attempts"),
            ("failure_threshold = 1.0", "failure_threshold"),
            ("failure_threshold = 0", "failure_threshold"),
            ("methods = svm", "unknown method"),
            ("methods =", "at least one method"),
            ("cnn.epochs = many", "line 1"),
        ] {
            let e = ExperimentConfig::parse(text).unwrap_err().to_string();
            assert!(e.contains(want), "{text:?}: {e}");
        }
    }

    proptest! {
        #[test]
        fn text_round_trip(seed in any::<u64>(), thr in 0.001f64..0.999, attempts in 1u32..5, amp in 0.0f64..10.0, all in any::<bool>()) {
            let mut c = ExperimentConfig {
                seed,
                failure_threshold: thr,
                max_attempts: attempts,
                retry_scope: if all { RetryScope::All } else { RetryScope::Failed },
                codebooks: vec![PathBuf::from("a.wfcb"), PathBuf::from("b.wfcb")],
                tapped_dir: Some(PathBuf::from("feat")),
                ..Default::default()
            };
            c.morph.amplitude = amp;
            prop_assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
        }
    }
}
