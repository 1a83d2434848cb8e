//! Bag of visual words over raw image patches, with a Kohonen
//! self-organizing map as the codebook.
//!
//! Patches are `patch x patch` windows on a regular grid. Low-contrast
//! windows are discarded; the rest are zero-meaned and L2-normalized. A
//! word image becomes the L1-normalized histogram of best-matching SOM
//! units over its patches.

use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::imaging::GrayImage;
use crate::linalg::Gemm;
use crate::seed;

const CODEBOOK_MAGIC: &[u8; 4] = b"WFCB";
const CODEBOOK_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum BovwError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("SOM needs at least {need} descriptors, got {have}")]
    TooFewDescriptors { need: usize, have: usize },
    #[error("quantization error of an empty descriptor set")]
    EmptyProbe,
    #[error("no candidate codebooks")]
    NoCandidates,
    #[error("descriptor length {got} does not match codebook dimension {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("invalid SOM schedule: {0}")]
    InvalidSchedule(String),
    #[error("malformed codebook file: {0}")]
    BadCodebook(String),
}

/// Front-end geometry of the patch extractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    pub patch: usize,
    pub stride: usize,
    /// Windows whose intensity standard deviation is below this are skipped.
    pub min_std: f32,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            patch: 15,
            stride: 5,
            min_std: 0.05,
        }
    }
}

impl PatchConfig {
    pub fn dim(&self) -> usize {
        self.patch * self.patch
    }
}

/// Zero-mean, unit-L2 patch intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDescriptor(pub Vec<f32>);

impl PatchDescriptor {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

pub fn extract_patches(img: &GrayImage, cfg: &PatchConfig) -> Vec<PatchDescriptor> {
    let p = cfg.patch;
    if p == 0 || img.width() < p || img.height() < p {
        return Vec::new();
    }
    let n = (p * p) as f64;
    let mut out = Vec::new();
    let mut buf = vec![0f64; p * p];
    for y0 in (0..=img.height() - p).step_by(cfg.stride.max(1)) {
        for x0 in (0..=img.width() - p).step_by(cfg.stride.max(1)) {
            for dy in 0..p {
                let row = &img.pixels()[(y0 + dy) * img.width() + x0..][..p];
                for (dst, &v) in buf[dy * p..(dy + 1) * p].iter_mut().zip(row) {
                    *dst = f64::from(v);
                }
            }
            let mean = buf.iter().sum::<f64>() / n;
            let var = buf.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var.sqrt() < f64::from(cfg.min_std) {
                continue;
            }
            let norm = (var * n).sqrt();
            out.push(PatchDescriptor(buf.iter().map(|v| ((v - mean) / norm) as f32).collect()));
        }
    }
    out
}

/// A trained SOM grid of patch prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub codebook_id: String,
    pub grid_w: usize,
    pub grid_h: usize,
    pub dim: usize,
    /// `grid_w * grid_h` prototypes of length `dim`, unit index `y * grid_w + x`.
    pub prototypes: Vec<f32>,
}

impl Codebook {
    pub fn n_units(&self) -> usize {
        self.grid_w * self.grid_h
    }

    pub fn prototype(&self, unit: usize) -> &[f32] {
        &self.prototypes[unit * self.dim..(unit + 1) * self.dim]
    }

    fn check_dim(&self, d: &PatchDescriptor) -> Result<(), BovwError> {
        if d.0.len() != self.dim {
            return Err(BovwError::DimensionMismatch { want: self.dim, got: d.0.len() });
        }
        Ok(())
    }

    /// Best-matching unit per descriptor (ties: lowest unit index), using
    /// `|p|^2 - 2 x.p` from one matrix product.
    pub fn best_units(&self, descriptors: &[PatchDescriptor]) -> Vec<usize> {
        let n = descriptors.len();
        let k = self.n_units();
        if n == 0 {
            return Vec::new();
        }
        let mut x = Vec::with_capacity(n * self.dim);
        for d in descriptors {
            x.extend_from_slice(&d.0);
        }
        let norms: Vec<f32> = (0..k)
            .map(|u| self.prototype(u).iter().map(|v| v * v).sum())
            .collect();
        let mut dots = vec![0f32; n * k];
        f32::gemm(n, self.dim, k, 1.0, &x, false, &self.prototypes, true, 0.0, &mut dots);
        dots.chunks_exact(k)
            .map(|row| {
                let mut best = 0;
                let mut best_d = f32::INFINITY;
                for (u, (&dot, &nrm)) in row.iter().zip(&norms).enumerate() {
                    let d = nrm - 2.0 * dot;
                    if d < best_d {
                        best_d = d;
                        best = u;
                    }
                }
                best
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), BovwError> {
        fs::write(path, self.to_bytes()?).map_err(|source| BovwError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, BovwError> {
        let fit = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| BovwError::BadCodebook(format!("{what} {v} exceeds u16")))
        };
        let mut out = Vec::with_capacity(12 + self.prototypes.len() * 4);
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.extend_from_slice(&CODEBOOK_VERSION.to_le_bytes());
        out.extend_from_slice(&fit(self.grid_w, "grid_w")?.to_le_bytes());
        out.extend_from_slice(&fit(self.grid_h, "grid_h")?.to_le_bytes());
        out.extend_from_slice(&fit(self.dim, "descriptor_dim")?.to_le_bytes());
        for v in &self.prototypes {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Load a codebook file; its id is the file stem.
    pub fn load(path: &Path) -> Result<Codebook, BovwError> {
        let bytes = fs::read(path).map_err(|source| BovwError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Codebook::from_bytes(&id, &bytes)
    }

    pub fn from_bytes(codebook_id: &str, mut bytes: &[u8]) -> Result<Codebook, BovwError> {
        let bad = |m: &str| BovwError::BadCodebook(m.to_string());
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CODEBOOK_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u16s = [0u16; 4];
        for v in &mut u16s {
            let mut b = [0u8; 2];
            bytes.read_exact(&mut b).map_err(|_| bad("truncated header"))?;
            *v = u16::from_le_bytes(b);
        }
        let [version, grid_w, grid_h, dim] = u16s.map(usize::from);
        if version != usize::from(CODEBOOK_VERSION) {
            return Err(BovwError::BadCodebook(format!("unsupported version {version}")));
        }
        let count = grid_w * grid_h * dim;
        if bytes.len() != count * 4 {
            return Err(BovwError::BadCodebook(format!(
                "expected {} prototype bytes, found {}",
                count * 4,
                bytes.len()
            )));
        }
        let prototypes: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if prototypes.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite prototype value"));
        }
        Ok(Codebook {
            codebook_id: codebook_id.to_string(),
            grid_w,
            grid_h,
            dim,
            prototypes,
        })
    }
}

/// Learning-rate and neighbourhood-radius schedule of the online SOM.
/// Both decay exponentially from their start to end values over
/// `epochs * N` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SomSchedule {
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub radius_start: f64,
    pub radius_end: f64,
    pub seed: u64,
    /// Larger training sets are uniformly subsampled to this size.
    pub max_descriptors: usize,
}

impl SomSchedule {
    pub fn for_grid(grid_w: usize, grid_h: usize) -> Self {
        SomSchedule {
            epochs: 10,
            lr_start: 0.9,
            lr_end: 0.01,
            radius_start: (grid_w.max(grid_h) as f64 / 2.0).max(1.0),
            radius_end: 1.0,
            seed: 0,
            max_descriptors: 200_000,
        }
    }

    pub fn validate(&self) -> Result<(), BovwError> {
        let bad = |m: &str| Err(BovwError::InvalidSchedule(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.lr_end > 0.0 && self.lr_end <= self.lr_start) {
            return bad("need 0 < lr_end <= lr_start");
        }
        if !(self.radius_end >= 0.5 && self.radius_start >= self.radius_end) {
            return bad("need 0.5 <= radius_end <= radius_start");
        }
        Ok(())
    }
}

impl Default for SomSchedule {
    fn default() -> Self {
        SomSchedule::for_grid(15, 15)
    }
}

#[inline]
fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct SomStart<'a> {
    cb: Codebook,
    sample: Vec<&'a PatchDescriptor>,
    rng: rand_chacha::ChaCha8Rng,
}

fn som_start<'a>(
    codebook_id: &str,
    descriptors: &'a [PatchDescriptor],
    grid_w: usize,
    grid_h: usize,
    schedule: &SomSchedule,
) -> Result<SomStart<'a>, BovwError> {
    schedule.validate()?;
    let units = grid_w * grid_h;
    if units == 0 || descriptors.len() < units {
        return Err(BovwError::TooFewDescriptors { need: units.max(1), have: descriptors.len() });
    }
    let dim = descriptors[0].0.len();
    if let Some(d) = descriptors.iter().find(|d| d.0.len() != dim) {
        return Err(BovwError::DimensionMismatch { want: dim, got: d.0.len() });
    }
    let mut rng = seed::rng(&crate::seed_key!(schedule.seed, "som", codebook_id));

    let sample: Vec<&PatchDescriptor> = if descriptors.len() > schedule.max_descriptors {
        let mut idx = index::sample(&mut rng, descriptors.len(), schedule.max_descriptors).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &descriptors[i]).collect()
    } else {
        descriptors.iter().collect()
    };

    let mut prototypes = Vec::with_capacity(units * dim);
    for i in index::sample(&mut rng, sample.len(), units) {
        prototypes.extend_from_slice(&sample[i].0);
    }
    let cb = Codebook {
        codebook_id: codebook_id.to_string(),
        grid_w,
        grid_h,
        dim,
        prototypes,
    };
    Ok(SomStart { cb, sample, rng })
}

/// The seeded starting point of [`train_som`]: prototypes copied from
/// randomly chosen descriptors, before any update.
pub fn init_som(
    codebook_id: &str,
    descriptors: &[PatchDescriptor],
    grid_w: usize,
    grid_h: usize,
    schedule: &SomSchedule,
) -> Result<Codebook, BovwError> {
    Ok(som_start(codebook_id, descriptors, grid_w, grid_h, schedule)?.cb)
}

/// Train a `grid_w x grid_h` SOM on `descriptors` with online updates.
pub fn train_som(
    codebook_id: &str,
    descriptors: &[PatchDescriptor],
    grid_w: usize,
    grid_h: usize,
    schedule: &SomSchedule,
) -> Result<Codebook, BovwError> {
    let mut s = som_start(codebook_id, descriptors, grid_w, grid_h, schedule)?;
    som_updates(&mut s.cb, &s.sample, schedule, &mut s.rng);
    Ok(s.cb)
}

/// Continue online SOM training from an existing codebook.
pub fn refine_som(mut cb: Codebook, descriptors: &[PatchDescriptor], schedule: &SomSchedule) -> Result<Codebook, BovwError> {
    schedule.validate()?;
    if descriptors.is_empty() {
        return Err(BovwError::TooFewDescriptors { need: 1, have: 0 });
    }
    for d in descriptors {
        cb.check_dim(d)?;
    }
    let mut rng = seed::rng(&crate::seed_key!(schedule.seed, "som-refine", &cb.codebook_id));
    let sample: Vec<&PatchDescriptor> = descriptors.iter().take(schedule.max_descriptors).collect();
    som_updates(&mut cb, &sample, schedule, &mut rng);
    Ok(cb)
}

fn som_updates(cb: &mut Codebook, sample: &[&PatchDescriptor], schedule: &SomSchedule, rng: &mut impl rand::Rng) {
    let (grid_w, units, dim) = (cb.grid_w, cb.n_units(), cb.dim);
    let prototypes = &mut cb.prototypes;
    let grid: Vec<(f64, f64)> = (0..units)
        .map(|u| ((u % grid_w) as f64, (u / grid_w) as f64))
        .collect();
    let total = (schedule.epochs * sample.len()) as f64;
    let denom = (total - 1.0).max(1.0);
    let lr_ratio = schedule.lr_end / schedule.lr_start;
    let r_ratio = schedule.radius_end / schedule.radius_start;
    let mut order: Vec<usize> = (0..sample.len()).collect();
    let mut weights = vec![0f32; units];
    let mut step = 0usize;
    for _ in 0..schedule.epochs {
        order.shuffle(rng);
        for &i in &order {
            let x = &sample[i].0;
            let frac = step as f64 / denom;
            let lr = schedule.lr_start * lr_ratio.powf(frac);
            let radius = schedule.radius_start * r_ratio.powf(frac);
            step += 1;

            let mut bmu = 0;
            let mut best = f32::INFINITY;
            for u in 0..units {
                let d = sq_dist(x, &prototypes[u * dim..(u + 1) * dim]);
                if d < best {
                    best = d;
                    bmu = u;
                }
            }
            let (bx, by) = grid[bmu];
            let two_r2 = 2.0 * radius * radius;
            for (u, w) in weights.iter_mut().enumerate() {
                let (gx, gy) = grid[u];
                let d2 = (gx - bx).powi(2) + (gy - by).powi(2);
                *w = (lr * (-d2 / two_r2).exp()) as f32;
            }
            for (proto, &w) in prototypes.chunks_exact_mut(dim).zip(&weights) {
                if w == 0.0 {
                    continue;
                }
                for (p, &xv) in proto.iter_mut().zip(x) {
                    *p += w * (xv - *p);
                }
            }
        }
    }
}

/// Mean Euclidean distance from each descriptor to its nearest prototype.
pub fn quantization_error(cb: &Codebook, descriptors: &[PatchDescriptor]) -> Result<f64, BovwError> {
    if descriptors.is_empty() {
        return Err(BovwError::EmptyProbe);
    }
    for d in descriptors {
        cb.check_dim(d)?;
    }
    let mut total = 0.0f64;
    for (d, u) in descriptors.iter().zip(cb.best_units(descriptors)) {
        let exact: f64 = d
            .0
            .iter()
            .zip(cb.prototype(u))
            .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
            .sum();
        total += exact.sqrt();
    }
    Ok(total / descriptors.len() as f64)
}

/// Id of the candidate with the lowest quantization error on `probe`;
/// ties go to the lexicographically smallest id.
pub fn select_codebook<'a>(candidates: &'a [Codebook], probe: &[PatchDescriptor]) -> Result<&'a str, BovwError> {
    let mut best: Option<(f64, &str)> = None;
    for cb in candidates {
        let qe = quantization_error(cb, probe)?;
        let better = match best {
            None => true,
            Some((bq, bid)) => qe < bq || (qe == bq && cb.codebook_id.as_str() < bid),
        };
        if better {
            best = Some((qe, &cb.codebook_id));
        }
    }
    best.map(|(_, id)| id).ok_or(BovwError::NoCandidates)
}

/// L1-normalized unit-assignment histogram; all zeros when the image has
/// no usable patch.
#[derive(Debug, Clone, PartialEq)]
pub struct BovwHistogram {
    pub bins: Vec<f64>,
}

pub fn bovw_histogram(img: &GrayImage, cb: &Codebook, cfg: &PatchConfig) -> BovwHistogram {
    let mut bins = vec![0f64; cb.n_units()];
    let patches = extract_patches(img, cfg);
    if patches.is_empty() || patches[0].0.len() != cb.dim {
        return BovwHistogram { bins };
    }
    for u in cb.best_units(&patches) {
        bins[u] += 1.0;
    }
    let n = patches.len() as f64;
    for b in &mut bins {
        *b /= n;
    }
    BovwHistogram { bins }
}

/// Pool the patches of many images and uniformly subsample to `cap`.
pub fn sample_descriptors<'a, I>(images: I, cfg: &PatchConfig, cap: usize, seed_value: u64) -> Vec<PatchDescriptor>
where
    I: IntoIterator<Item = &'a GrayImage>,
{
    let mut all: Vec<PatchDescriptor> = images.into_iter().flat_map(|img| extract_patches(img, cfg)).collect();
    if all.len() > cap {
        let mut rng = seed::rng(&crate::seed_key!(seed_value, "descriptor-sample"));
        let mut idx = index::sample(&mut rng, all.len(), cap).into_vec();
        idx.sort_unstable();
        let mut keep = Vec::with_capacity(cap);
        let mut slots: Vec<Option<PatchDescriptor>> = all.drain(..).map(Some).collect();
        for i in idx {
            keep.push(slots[i].take().expect("distinct indices"));
        }
        all = keep;
    }
    all
}
