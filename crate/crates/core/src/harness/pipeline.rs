//! The per-method training-and-testing pipelines.
//!
//! Images are streamed: each worker loads one source image, derives its
//! features (and those of its morphs) and drops the pixels, so memory grows
//! with the feature size rather than the image size.

use std::borrow::Cow;
use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;

use super::{ExperimentConfig, HarnessError, Method};
use crate::augment::{morph_variants, MorphParams};
use crate::bovw::{bovw_histogram, sample_descriptors, select_codebook, train_som, Codebook, SomSchedule};
use crate::centroid::{
    evaluate, fit_centroids, l2_normalize, load_tapped_features, partition_by_index, TappedFeatureSet,
};
use crate::dataset::{filter_eligible, split_book, BookManifest, EligibleBook, SampleRecord, SplitSpec};
use crate::imaging::{bovw_working_scale, load_pgm, prepare_cnn_input, resize_bilinear, GrayImage};
use crate::nn::{accuracy, build_model, train, ByteRows, CnnArchitecture, LabelIndex, Precision, Scalar, TrainConfig};
use crate::seed;

/// Side lengths of the built-in pixel tap used when a book has no tapped
/// feature file: 64 x 32 = 2048 values.
pub const PIXEL_TAP_WIDTH: usize = 64;
pub const PIXEL_TAP_HEIGHT: usize = 32;

/// Source images keyed by `image_ref`.
#[derive(Debug, Clone)]
pub enum ImageStore {
    /// PGM files relative to a directory.
    Dir(PathBuf),
    Memory(Arc<HashMap<String, GrayImage>>),
}

impl ImageStore {
    pub fn load(&self, image_ref: &str) -> Result<GrayImage, HarnessError> {
        match self {
            ImageStore::Dir(root) => load_pgm(&root.join(image_ref)).map_err(HarnessError::pipeline),
            ImageStore::Memory(map) => map
                .get(image_ref)
                .cloned()
                .ok_or_else(|| HarnessError::Pipeline(format!("image {image_ref:?} not found"))),
        }
    }
}

/// A book plus where to find its images and, optionally, tapped features.
#[derive(Debug, Clone)]
pub struct BookInput {
    pub manifest: BookManifest,
    pub images: ImageStore,
    pub tapped: Option<TappedFeatureSet>,
}

impl BookInput {
    pub fn from_dir(manifest: BookManifest, root: impl Into<PathBuf>) -> Self {
        BookInput { manifest, images: ImageStore::Dir(root.into()), tapped: None }
    }

    /// A book from generated `(record, image)` pairs of one book id.
    pub fn in_memory(items: Vec<(SampleRecord, GrayImage)>) -> Result<Self, HarnessError> {
        let book_id = items
            .first()
            .map(|(r, _)| r.book_id.clone())
            .ok_or_else(|| HarnessError::Pipeline("book without samples".into()))?;
        let mut images = HashMap::with_capacity(items.len());
        let mut records = Vec::with_capacity(items.len());
        for (rec, img) in items {
            images.insert(rec.image_ref.clone(), img);
            records.push(rec);
        }
        let manifest = BookManifest::new(&book_id, records).map_err(HarnessError::pipeline)?;
        Ok(BookInput { manifest, images: ImageStore::Memory(Arc::new(images)), tapped: None })
    }

    pub fn book_id(&self) -> &str {
        &self.manifest.book_id
    }
}

/// Counts and accuracy of one successful event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub n_classes: usize,
    pub n_train_human: usize,
    pub n_train_augmented: usize,
    pub n_test: usize,
    pub accuracy: f64,
}

/// Executes one method on one book. The harness times the call and turns
/// errors into failed rows; tests substitute scripted runners.
pub trait MethodRunner: Sync {
    fn run(
        &self,
        book: &BookInput,
        method: Method,
        attempt: u32,
        config: &ExperimentConfig,
    ) -> Result<MethodOutcome, HarnessError>;
}

/// The real pipelines. Holds the candidate codebooks shared by all books.
#[derive(Debug, Clone, Default)]
pub struct Pipeline {
    codebooks: Vec<Codebook>,
}

impl Pipeline {
    pub fn new(codebooks: Vec<Codebook>) -> Self {
        Pipeline { codebooks }
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let codebooks = config
            .codebooks
            .iter()
            .map(|p| Codebook::load(p).map_err(HarnessError::pipeline))
            .collect::<Result<_, _>>()?;
        Ok(Pipeline { codebooks })
    }

    pub fn codebooks(&self) -> &[Codebook] {
        &self.codebooks
    }
}

impl MethodRunner for Pipeline {
    fn run(
        &self,
        book: &BookInput,
        method: Method,
        attempt: u32,
        config: &ExperimentConfig,
    ) -> Result<MethodOutcome, HarnessError> {
        let run_seed = seed::derive(&crate::seed_key!(config.seed, book.book_id(), method.as_str(), u64::from(attempt)));
        match method {
            Method::Bovw => run_bovw(book, config, run_seed, &self.codebooks),
            Method::Cnn => match config.train.precision {
                Precision::Single => run_cnn::<f32>(book, config, run_seed),
                Precision::Double => run_cnn::<f64>(book, config, run_seed),
            },
            Method::Tapped => run_tapped(book, config, run_seed),
        }
    }
}

/// The split depends only on the suite seed and the book, so every method
/// and attempt sees the same test set.
fn eligible(book: &BookInput, config: &ExperimentConfig) -> Result<EligibleBook, HarnessError> {
    let spec = SplitSpec::with_seed(seed::derive(&crate::seed_key!(config.seed, book.book_id(), "split")));
    let split = split_book(&book.manifest, &spec).map_err(HarnessError::pipeline)?;
    filter_eligible(&book.manifest, &split, &config.eligibility).map_err(HarnessError::pipeline)
}

const CHUNK: usize = 64;

/// Features of every record, in order; when `morph` is set each record is
/// followed by the features of its morphed variants.
fn stream_features<X, F>(
    book: &BookInput,
    records: &[SampleRecord],
    morph: Option<&MorphParams>,
    feature: F,
    mut sink: impl FnMut(&SampleRecord, X),
) -> Result<(), HarnessError>
where
    X: Send,
    F: Fn(&GrayImage) -> X + Sync,
{
    for chunk in records.chunks(CHUNK) {
        let done: Vec<Vec<X>> = chunk
            .par_iter()
            .map(|rec| {
                let img = book.images.load(&rec.image_ref)?;
                let mut out = vec![feature(&img)];
                if let Some(params) = morph {
                    out.extend(morph_variants(rec, &img, params).iter().map(|(_, m)| feature(m)));
                }
                Ok(out)
            })
            .collect::<Result<_, HarnessError>>()?;
        for (rec, feats) in chunk.iter().zip(done) {
            for f in feats {
                sink(rec, f);
            }
        }
    }
    Ok(())
}

fn morph_for(config: &ExperimentConfig, method: Method, run_seed: u64) -> Option<MorphParams> {
    config.is_augmented(method).then(|| MorphParams {
        seed: seed::derive(&crate::seed_key!(run_seed, "morph")),
        ..config.morph
    })
}

fn n_augmented(n_human: usize, morph: &Option<MorphParams>) -> usize {
    morph.map_or(0, |m| n_human * m.variants_per_sample)
}

fn run_cnn<T: Scalar>(book: &BookInput, config: &ExperimentConfig, run_seed: u64) -> Result<MethodOutcome, HarnessError> {
    let eb = eligible(book, config)?;
    let index = LabelIndex::new(eb.book.classes.iter());
    let arch = CnnArchitecture::word_classifier(index.len());
    let width = arch.input.len();
    let morph = morph_for(config, Method::Cnn, run_seed);
    let prepare = |img: &GrayImage| prepare_cnn_input(img).pixels().to_vec();

    let rows_of = |records: &[SampleRecord], morph: Option<&MorphParams>| {
        let per = 1 + morph.map_or(0, |m| m.variants_per_sample);
        let mut rows = ByteRows::with_capacity(width, records.len() * per);
        let mut labels = Vec::with_capacity(records.len() * per);
        let mut err = None;
        stream_features(book, records, morph, prepare, |rec, x| {
            rows.push(&x);
            match index.index_of(&rec.class_label) {
                Ok(i) => labels.push(i),
                Err(e) => err = Some(e),
            }
        })?;
        match err {
            Some(e) => Err(HarnessError::pipeline(e)),
            None => Ok((rows, labels)),
        }
    };
    let (train_x, train_y) = rows_of(&eb.split.train, morph.as_ref())?;
    let (val_x, val_y) = rows_of(&eb.split.val, None)?;
    let (test_x, test_y) = rows_of(&eb.split.test, None)?;

    let mut model = build_model::<T>(&arch, seed::derive(&crate::seed_key!(run_seed, "init")))
        .map_err(HarnessError::pipeline)?;
    let cfg = TrainConfig { seed: seed::derive(&crate::seed_key!(run_seed, "shuffle")), ..config.train.clone() };
    train(&mut model, &train_x, &train_y, Some((&val_x, &val_y)), &cfg).map_err(HarnessError::pipeline)?;
    let acc = accuracy(&model, &test_x, &test_y).map_err(HarnessError::pipeline)?;
    Ok(MethodOutcome {
        n_classes: index.len(),
        n_train_human: eb.split.train.len(),
        n_train_augmented: n_augmented(eb.split.train.len(), &morph),
        n_test: eb.split.test.len(),
        accuracy: acc,
    })
}

/// A seeded subset of at most `n` items, in their original order.
fn subset<T>(items: &[T], n: usize, seed_value: u64) -> Vec<&T> {
    if items.len() <= n {
        return items.iter().collect();
    }
    let mut rng = seed::rng(&crate::seed_key!(seed_value, "subset"));
    let mut idx = index::sample(&mut rng, items.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &items[i]).collect()
}

fn load_working(book: &BookInput, records: &[&SampleRecord]) -> Result<Vec<GrayImage>, HarnessError> {
    records
        .par_iter()
        .map(|r| book.images.load(&r.image_ref).map(|img| bovw_working_scale(&img)))
        .collect()
}

/// Train a codebook on patches from a seeded sample of the books' human
/// images (at most `config.codebook_images` of them).
pub fn train_codebook(codebook_id: &str, books: &[BookInput], config: &ExperimentConfig) -> Result<Codebook, HarnessError> {
    let seed_value = seed::derive(&crate::seed_key!(config.seed, "codebook", codebook_id));
    let pool: Vec<(&BookInput, &SampleRecord)> =
        books.iter().flat_map(|b| b.manifest.human_samples().map(move |r| (b, r))).collect();
    let images: Vec<GrayImage> = subset(&pool, config.codebook_images, seed_value)
        .par_iter()
        .map(|(b, r)| b.images.load(&r.image_ref).map(|img| bovw_working_scale(&img)))
        .collect::<Result<_, _>>()?;
    codebook_from_images(codebook_id, &images, config, seed_value)
}

fn codebook_from_images(
    codebook_id: &str,
    images: &[GrayImage],
    config: &ExperimentConfig,
    seed_value: u64,
) -> Result<Codebook, HarnessError> {
    let descriptors = sample_descriptors(images, &config.patch, config.som.max_descriptors, seed_value);
    let schedule = SomSchedule { seed: seed_value, ..config.som };
    train_som(codebook_id, &descriptors, config.grid_w, config.grid_h, &schedule).map_err(HarnessError::pipeline)
}

fn run_bovw(
    book: &BookInput,
    config: &ExperimentConfig,
    run_seed: u64,
    candidates: &[Codebook],
) -> Result<MethodOutcome, HarnessError> {
    let eb = eligible(book, config)?;
    let own;
    let codebook = if candidates.is_empty() {
        let picked = subset(&eb.split.train, config.codebook_images, run_seed);
        let images = load_working(book, &picked)?;
        own = codebook_from_images(&format!("{}-own", book.book_id()), &images, config, run_seed)?;
        &own
    } else {
        let picked = subset(&eb.split.train, config.probe_images, run_seed);
        let probe = sample_descriptors(&load_working(book, &picked)?, &config.patch, usize::MAX, run_seed);
        let id = select_codebook(candidates, &probe).map_err(HarnessError::pipeline)?;
        candidates.iter().find(|c| c.codebook_id == id).expect("selected from candidates")
    };
    log::info!("book {}: codebook {}", book.book_id(), codebook.codebook_id);

    let morph = morph_for(config, Method::Bovw, run_seed);
    let hist = |img: &GrayImage| bovw_histogram(&bovw_working_scale(img), codebook, &config.patch).bins;
    let collect = |records: &[SampleRecord], morph: Option<&MorphParams>| {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        stream_features(book, records, morph, hist, |rec, h| out.push((rec.class_label.clone(), h)))?;
        Ok::<_, HarnessError>(out)
    };
    let train_v = collect(&eb.split.train, morph.as_ref())?;
    let test_v = collect(&eb.split.test, None)?;
    let model = fit_centroids(&train_v).map_err(HarnessError::pipeline)?.with_metric(config.bovw_metric);
    let acc = evaluate(&model, &test_v).map_err(HarnessError::pipeline)?;
    Ok(MethodOutcome {
        n_classes: eb.book.classes.len(),
        n_train_human: eb.split.train.len(),
        n_train_augmented: n_augmented(eb.split.train.len(), &morph),
        n_test: eb.split.test.len(),
        accuracy: acc,
    })
}

/// Ink darkness (`1 - intensity`) at 64 x 32, row-major: a fixed 2048-d
/// stand-in for a network's tapped layer.
pub fn pixel_tap(img: &GrayImage) -> Vec<f64> {
    if img.is_empty() {
        return vec![0.0; PIXEL_TAP_WIDTH * PIXEL_TAP_HEIGHT];
    }
    let small = resize_bilinear(img, PIXEL_TAP_WIDTH, PIXEL_TAP_HEIGHT).expect("non-zero target");
    small.pixels().iter().map(|&v| 1.0 - f64::from(v)).collect()
}

fn run_tapped(book: &BookInput, config: &ExperimentConfig, run_seed: u64) -> Result<MethodOutcome, HarnessError> {
    let from_file: Option<Cow<TappedFeatureSet>> = match (&book.tapped, &config.tapped_dir) {
        (Some(set), _) => Some(Cow::Borrowed(set)),
        (None, Some(dir)) => {
            let path = dir.join(format!("{}.tsv", book.book_id()));
            Some(Cow::Owned(load_tapped_features(&path).map_err(HarnessError::pipeline)?))
        }
        (None, None) => None,
    };
    let normalize = |mut v: Vec<f64>| {
        if config.tapped_normalize {
            l2_normalize(&mut v);
        }
        v
    };

    if let Some(set) = from_file {
        let (train_rows, test_rows) = partition_by_index(&set, config.partition).map_err(HarnessError::pipeline)?;
        let train_v: Vec<(String, Vec<f64>)> =
            train_rows.into_iter().map(|r| (r.class_label, normalize(r.values))).collect();
        let test_v: Vec<(String, Vec<f64>)> =
            test_rows.into_iter().map(|r| (r.class_label, normalize(r.values))).collect();
        let model = fit_centroids(&train_v).map_err(HarnessError::pipeline)?;
        let acc = evaluate(&model, &test_v).map_err(HarnessError::pipeline)?;
        let classes: BTreeSet<&str> = train_v.iter().map(|(l, _)| l.as_str()).collect();
        return Ok(MethodOutcome {
            n_classes: classes.len(),
            n_train_human: train_v.len(),
            n_train_augmented: 0,
            n_test: test_v.len(),
            accuracy: acc,
        });
    }

    let eb = eligible(book, config)?;
    let morph = morph_for(config, Method::Tapped, run_seed);
    let collect = |records: &[SampleRecord], morph: Option<&MorphParams>| {
        let mut out: Vec<(String, Vec<f64>)> = Vec::new();
        stream_features(book, records, morph, |img| normalize(pixel_tap(img)), |rec, v| {
            out.push((rec.class_label.clone(), v))
        })?;
        Ok::<_, HarnessError>(out)
    };
    let train_v = collect(&eb.split.train, morph.as_ref())?;
    let test_v = collect(&eb.split.test, None)?;
    let model = fit_centroids(&train_v).map_err(HarnessError::pipeline)?;
    let acc = evaluate(&model, &test_v).map_err(HarnessError::pipeline)?;
    Ok(MethodOutcome {
        n_classes: eb.book.classes.len(),
        n_train_human: eb.split.train.len(),
        n_train_augmented: n_augmented(eb.split.train.len(), &morph),
        n_test: eb.split.test.len(),
        accuracy: acc,
    })
}
