//! Synthetic books of glyph-like word images.
//!
//! Each class gets a prototype drawn as a handful of random smooth strokes;
//! samples are elastically morphed copies of the prototype with additive
//! pixel noise. A style family fixes stroke width, smoothness and slant, so
//! books of the same family look alike at the patch level.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::augment::{elastic_morph, MorphParams};
use crate::dataset::{BookManifest, DatasetError, SampleRecord};
use crate::imaging::{save_pgm, GrayImage, ImageError};
use crate::seed;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic book spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthBookSpec {
    pub book_id: String,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub image_w: usize,
    pub image_h: usize,
    /// Inclusive range of strokes per glyph.
    pub strokes_per_glyph: (usize, usize),
    pub jitter_amplitude: f64,
    pub noise_sigma: f64,
    pub style_family: u32,
    pub seed: u64,
}

impl SynthBookSpec {
    pub fn new(book_id: &str, n_classes: usize, samples_per_class: usize) -> Self {
        SynthBookSpec {
            book_id: book_id.to_string(),
            n_classes,
            samples_per_class,
            image_w: 200,
            image_h: 100,
            strokes_per_glyph: (3, 8),
            jitter_amplitude: 2.0,
            noise_sigma: 0.03,
            style_family: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.book_id.is_empty() || self.book_id.contains(['\t', '\n', '/', '\\']) {
            return bad(format!("book_id {:?} must be non-empty without tabs or slashes", self.book_id));
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.samples_per_class < 1 {
            return bad("samples_per_class must be >= 1".into());
        }
        if self.image_w < 16 || self.image_h < 8 {
            return bad(format!("image {}x{} is too small", self.image_w, self.image_h));
        }
        let (lo, hi) = self.strokes_per_glyph;
        if lo < 1 || lo > hi {
            return bad(format!("strokes_per_glyph {lo}-{hi} is not a valid range"));
        }
        if !(self.jitter_amplitude >= 0.0 && self.jitter_amplitude.is_finite()) {
            return bad("jitter_amplitude must be >= 0".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0".into());
        }
        Ok(())
    }

    /// Label of class `index`; zero-padded so lexical and numeric order agree.
    pub fn class_label(&self, index: usize) -> String {
        format!("w{index:05}")
    }

    fn image_ref(&self, class: usize, sample: usize) -> String {
        format!("{}/{}_{sample:03}.pgm", self.book_id, self.class_label(class))
    }
}

/// Stroke statistics shared by every book of a style family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Style {
    pub stroke_width: f64,
    /// Smooth (spline) strokes when true, straight polylines otherwise.
    pub smooth: bool,
    /// Horizontal shear applied to control points.
    pub slant: f64,
}

impl Style {
    pub fn for_family(family: u32) -> Self {
        Style {
            stroke_width: 1.5 + 1.75 * f64::from(family % 3),
            smooth: family.is_multiple_of(2),
            slant: (f64::from((family * 7) % 5) - 2.0) * 0.15,
        }
    }
}

/// Squared distance from `p` to the segment `a`-`b`.
fn seg_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    cx * cx + cy * cy
}

/// Catmull-Rom resampling of a control polygon.
fn spline(ctrl: &[(f64, f64)], per_segment: usize) -> Vec<(f64, f64)> {
    let n = ctrl.len();
    let at = |i: isize| ctrl[i.clamp(0, n as isize - 1) as usize];
    let mut out = Vec::with_capacity((n - 1) * per_segment + 1);
    for i in 0..n - 1 {
        let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
        for s in 0..per_segment {
            let t = s as f64 / per_segment as f64;
            let (t2, t3) = (t * t, t * t * t);
            let f = |a: f64, b: f64, c: f64, d: f64| {
                0.5 * (2.0 * b + (-a + c) * t + (2.0 * a - 5.0 * b + 4.0 * c - d) * t2 + (-a + 3.0 * b - 3.0 * c + d) * t3)
            };
            out.push((f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1)));
        }
    }
    out.push(ctrl[n - 1]);
    out
}

/// Draw an anti-aliased dark polyline of width `width` onto `px`.
fn draw_polyline(px: &mut [f32], w: usize, h: usize, pts: &[(f64, f64)], width: f64) {
    let r = width / 2.0;
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let x0 = (a.0.min(b.0) - r - 1.0).floor().max(0.0) as usize;
        let x1 = ((a.0.max(b.0) + r + 1.0).ceil() as usize).min(w - 1);
        let y0 = (a.1.min(b.1) - r - 1.0).floor().max(0.0) as usize;
        let y1 = ((a.1.max(b.1) + r + 1.0).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = seg_dist2((x as f64, y as f64), a, b).sqrt();
                let cover = (r + 0.5 - d).clamp(0.0, 1.0) as f32;
                let v = &mut px[y * w + x];
                *v = v.min(1.0 - cover);
            }
        }
    }
}

/// Prototype image of class `class` of the book described by `spec`.
pub fn render_prototype(spec: &SynthBookSpec, class: usize) -> GrayImage {
    let style = Style::for_family(spec.style_family);
    let (w, h) = (spec.image_w, spec.image_h);
    let mut rng = seed::rng(&crate::seed_key!(spec.seed, "glyph", &spec.book_id, class as u64));
    let mut px = vec![1.0f32; w * h];
    let (mx, my) = (0.08 * w as f64, 0.15 * h as f64);
    let n_strokes = rng.random_range(spec.strokes_per_glyph.0..=spec.strokes_per_glyph.1);
    for _ in 0..n_strokes {
        let n_ctrl = rng.random_range(3..=5);
        let cx = rng.random_range(mx..w as f64 - mx);
        let cy = rng.random_range(my..h as f64 - my);
        let reach = (0.35 * h as f64).max(4.0);
        let ctrl: Vec<(f64, f64)> = (0..n_ctrl)
            .map(|_| {
                let x = (cx + rng.random_range(-reach..reach)).clamp(mx, w as f64 - mx);
                let y = (cy + rng.random_range(-reach..reach)).clamp(my, h as f64 - my);
                let sheared = x + style.slant * (h as f64 / 2.0 - y);
                (sheared.clamp(1.0, w as f64 - 2.0), y)
            })
            .collect();
        let pts = if style.smooth { spline(&ctrl, 12) } else { ctrl };
        draw_polyline(&mut px, w, h, &pts, style.stroke_width);
    }
    GrayImage::from_raw(w, h, px)
}

/// Sample `index` of class `class`: the morphed prototype plus clamped
/// Gaussian noise.
pub fn render_sample(spec: &SynthBookSpec, prototype: &GrayImage, class: usize, index: usize) -> GrayImage {
    let params = MorphParams { amplitude: spec.jitter_amplitude, seed: spec.seed, ..MorphParams::default() };
    let key = format!("synth/{}/{class}", spec.book_id);
    let morphed = elastic_morph(prototype, &params, &key, index as u64);
    if spec.noise_sigma == 0.0 {
        return morphed;
    }
    let mut rng = seed::rng(&crate::seed_key!(spec.seed, "noise", &spec.book_id, class as u64, index as u64));
    let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
    let px = morphed
        .pixels()
        .iter()
        .map(|&v| (v + noise.sample(&mut rng) as f32).clamp(0.0, 1.0))
        .collect();
    GrayImage::from_raw(morphed.width(), morphed.height(), px)
}

fn render_class(spec: &SynthBookSpec, class: usize) -> Vec<(SampleRecord, GrayImage)> {
    let proto = render_prototype(spec, class);
    let label = spec.class_label(class);
    (0..spec.samples_per_class)
        .map(|i| {
            let rec = SampleRecord::human(&spec.book_id, &label, &spec.image_ref(class, i));
            (rec, render_sample(spec, &proto, class, i))
        })
        .collect()
}

/// All records and images of a book, in class then sample order.
pub fn generate_book_in_memory(spec: &SynthBookSpec) -> Result<Vec<(SampleRecord, GrayImage)>, SynthError> {
    spec.validate()?;
    let per_class: Vec<Vec<(SampleRecord, GrayImage)>> =
        (0..spec.n_classes).into_par_iter().map(|c| render_class(spec, c)).collect();
    Ok(per_class.into_iter().flatten().collect())
}

/// Write the book's images as PGM files under `root/<book_id>/` and return
/// its manifest (image references relative to `root`). Classes are
/// rendered and written a few at a time, so large books need little memory.
pub fn generate_book(spec: &SynthBookSpec, root: &Path) -> Result<BookManifest, SynthError> {
    const CLASSES_PER_CHUNK: usize = 32;
    spec.validate()?;
    let dir = root.join(&spec.book_id);
    fs::create_dir_all(&dir).map_err(|source| SynthError::Io { path: dir.clone(), source })?;
    let mut records = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    let classes: Vec<usize> = (0..spec.n_classes).collect();
    for chunk in classes.chunks(CLASSES_PER_CHUNK) {
        let written: Vec<Vec<SampleRecord>> = chunk
            .par_iter()
            .map(|&c| {
                render_class(spec, c)
                    .into_iter()
                    .map(|(rec, img)| save_pgm(&img, &root.join(&rec.image_ref)).map(|_| rec))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        records.extend(written.into_iter().flatten());
    }
    Ok(BookManifest::new(&spec.book_id, records)?)
}

impl FromStr for SynthBookSpec {
    type Err = SynthError;

    /// One book as whitespace-separated `key=value` pairs, e.g.
    /// `book_id=s10 n_classes=10 samples_per_class=26 style_family=1 seed=3`.
    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut spec = SynthBookSpec::new("", 0, 0);
        let bad = |m: String| SynthError::InvalidSpec(m);
        for pair in line.split_whitespace() {
            let (k, v) = pair.split_once('=').ok_or_else(|| bad(format!("expected key=value, got {pair:?}")))?;
            let num = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{k}: {e}")));
            let real = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("{k}: {e}")));
            match k {
                "book_id" => spec.book_id = v.to_string(),
                "n_classes" => spec.n_classes = num(v)?,
                "samples_per_class" => spec.samples_per_class = num(v)?,
                "image_w" => spec.image_w = num(v)?,
                "image_h" => spec.image_h = num(v)?,
                "strokes_per_glyph" => {
                    let (lo, hi) = v.split_once('-').ok_or_else(|| bad(format!("{k}: expected lo-hi, got {v:?}")))?;
                    spec.strokes_per_glyph = (num(lo)?, num(hi)?);
                }
                "jitter_amplitude" => spec.jitter_amplitude = real(v)?,
                "noise_sigma" => spec.noise_sigma = real(v)?,
                "style_family" => spec.style_family = v.parse().map_err(|e| bad(format!("{k}: {e}")))?,
                "seed" => spec.seed = v.parse().map_err(|e| bad(format!("{k}: {e}")))?,
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parse a spec file: one book per line, `#` comments and blank lines ignored.
pub fn parse_synth_specs(text: &str) -> Result<Vec<SynthBookSpec>, SynthError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            l.parse::<SynthBookSpec>().map_err(|e| match e {
                SynthError::InvalidSpec(m) => SynthError::InvalidSpec(format!("line {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}
