//! Elastic morphing: smooth random displacement fields applied by
//! backward warping. Five morphed copies per human-labeled training image.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{Origin, SampleRecord};
use crate::imaging::GrayImage;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphParams {
    /// Largest displacement in the field, in pixels.
    pub amplitude: f64,
    /// Standard deviation of the Gaussian that smooths the raw noise field.
    pub smoothing_radius: f64,
    pub variants_per_sample: usize,
    pub seed: u64,
}

impl Default for MorphParams {
    fn default() -> Self {
        MorphParams {
            amplitude: 2.5,
            smoothing_radius: 8.0,
            variants_per_sample: 5,
            seed: 0,
        }
    }
}

impl MorphParams {
    pub fn is_valid(&self) -> bool {
        self.amplitude >= 0.0 && self.amplitude.is_finite() && self.smoothing_radius > 0.0
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-half..=half)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

/// Separable convolution with edge clamping, in place. Taps are summed in
/// kernel order for every pixel.
fn smooth(field: &mut [f64], w: usize, h: usize, kernel: &[f64]) {
    let half = kernel.len() / 2;
    let mut padded = vec![0.0; w + 2 * half];
    let mut tmp = vec![0.0; field.len()];
    for y in 0..h {
        let row = &field[y * w..(y + 1) * w];
        padded[..half].fill(row[0]);
        padded[half..half + w].copy_from_slice(row);
        padded[half + w..].fill(row[w - 1]);
        let out = &mut tmp[y * w..(y + 1) * w];
        out.fill(0.0);
        for (k, &kv) in kernel.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(&padded[k..k + w]) {
                *o += kv * p;
            }
        }
    }
    field.fill(0.0);
    for y in 0..h {
        let out = &mut field[y * w..(y + 1) * w];
        for (k, &kv) in kernel.iter().enumerate() {
            let sy = (y + k).saturating_sub(half).min(h - 1);
            for (o, &p) in out.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                *o += kv * p;
            }
        }
    }
}

/// Bilinear read where every neighbour outside the image is white.
#[inline]
fn sample_white_border(img: &GrayImage, x: f64, y: f64) -> f32 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = ((x - x0) as f32, (y - y0) as f32);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let read = |xi: i64, yi: i64| -> f32 {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            1.0
        } else {
            img.get(xi as usize, yi as usize)
        }
    };
    let top = read(x0, y0) * (1.0 - fx) + read(x0 + 1, y0) * fx;
    let bot = read(x0, y0 + 1) * (1.0 - fx) + read(x0 + 1, y0 + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// One morphed variant of `img`. The random field is keyed by
/// `(params.seed, sample_key, draw_index)`.
pub fn elastic_morph(img: &GrayImage, params: &MorphParams, sample_key: &str, draw_index: u64) -> GrayImage {
    if params.amplitude == 0.0 || img.is_empty() {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let mut rng = seed::rng(&crate::seed_key!(params.seed, sample_key, draw_index));
    let mut dx: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut dy: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let kernel = gaussian_kernel(params.smoothing_radius);
    smooth(&mut dx, w, h, &kernel);
    smooth(&mut dy, w, h, &kernel);

    let max_mag = dx
        .iter()
        .zip(&dy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .fold(0.0f64, f64::max);
    if max_mag == 0.0 {
        return img.clone();
    }
    let scale = params.amplitude / max_mag;

    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let sx = x as f64 + dx[i] * scale;
            let sy = y as f64 + dy[i] * scale;
            out.push(sample_white_border(img, sx, sy).clamp(0.0, 1.0));
        }
    }
    GrayImage::from_raw(w, h, out)
}

/// Reference of the `k`-th morph of `source`: `a/b.pgm` becomes `a/b_m<k>.pgm`.
pub fn morph_ref(source: &str, k: usize) -> String {
    let (stem, ext) = match source.rfind('.') {
        Some(dot) if !source[dot..].contains('/') => (&source[..dot], &source[dot..]),
        _ => (source, ""),
    };
    format!("{stem}_m{k}{ext}")
}

/// The `variants_per_sample` morphed copies of one human record, each
/// carrying the source's class label and origin `augmented:<source>`.
pub fn morph_variants(rec: &SampleRecord, img: &GrayImage, params: &MorphParams) -> Vec<(SampleRecord, GrayImage)> {
    let key = format!("{}/{}", rec.book_id, rec.sample_id);
    (0..params.variants_per_sample)
        .map(|k| {
            let aug = SampleRecord {
                sample_id: morph_ref(&rec.sample_id, k),
                book_id: rec.book_id.clone(),
                class_label: rec.class_label.clone(),
                image_ref: morph_ref(&rec.image_ref, k),
                origin: Origin::Augmented {
                    source: rec.sample_id.clone(),
                },
            };
            (aug, elastic_morph(img, params, &key, k as u64))
        })
        .collect()
}

/// Originals followed by their morphs: for each input record, the record
/// itself and then its [`morph_variants`].
pub fn augment_training_set(
    train: &[(SampleRecord, GrayImage)],
    params: &MorphParams,
) -> Vec<(SampleRecord, GrayImage)> {
    let per_source: Vec<Vec<(SampleRecord, GrayImage)>> = train
        .par_iter()
        .map(|(rec, img)| {
            let mut group = Vec::with_capacity(params.variants_per_sample + 1);
            group.push((rec.clone(), img.clone()));
            group.extend(morph_variants(rec, img, params));
            group
        })
        .collect();
    per_source.into_iter().flatten().collect()
}

/// Order-sensitive checksum of an image quantized to 8 bits per pixel.
pub fn image_checksum(img: &GrayImage) -> String {
    let mut h = seed::Fnv64::default();
    h.write(&(img.width() as u64).to_le_bytes());
    h.write(&(img.height() as u64).to_le_bytes());
    for &v in img.pixels() {
        h.write(&[(v.clamp(0.0, 1.0) * 255.0).round() as u8]);
    }
    format!("{:016x}", h.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn glyph(w: usize, h: usize) -> GrayImage {
        let mut px = vec![1.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let (cx, cy) = (x as f32 - w as f32 / 2.0, y as f32 - h as f32 / 2.0);
                let r = (cx * cx + cy * cy).sqrt();
                if (r - h as f32 / 3.0).abs() < 2.0 || (x as i64 - y as i64 * 2).abs() < 2 {
                    px[y * w + x] = 0.0;
                }
            }
        }
        GrayImage::new(w, h, px).unwrap()
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let img = glyph(60, 30);
        let p = MorphParams { amplitude: 0.0, ..Default::default() };
        assert_eq!(elastic_morph(&img, &p, "s", 3), img);
    }

    #[test]
    fn dimensions_preserved() {
        let img = glyph(37, 19);
        for amp in [0.5, 2.5, 10.0] {
            let out = elastic_morph(&img, &MorphParams { amplitude: amp, ..Default::default() }, "s", 0);
            assert_eq!((out.width(), out.height()), (37, 19));
            assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn morph_is_deterministic_and_keyed() {
        let img = glyph(60, 30);
        let p = MorphParams::default();
        let a = elastic_morph(&img, &p, "b1/x.pgm", 0);
        assert_eq!(a, elastic_morph(&img, &p, "b1/x.pgm", 0));
        assert_ne!(a, elastic_morph(&img, &p, "b1/x.pgm", 1));
        assert_ne!(a, elastic_morph(&img, &p, "b1/y.pgm", 0));
        assert_ne!(a, img);
    }

    #[test]
    fn max_displacement_matches_amplitude() {
        // a horizontal ramp reveals the displacement: out(x) = ramp(x + dx)
        let w = 80;
        let h = 40;
        let px: Vec<f32> = (0..h).flat_map(|_| (0..w).map(|x| x as f32 / (w as f32 * 4.0))).collect();
        let img = GrayImage::new(w, h, px).unwrap();
        let p = MorphParams { amplitude: 3.0, ..Default::default() };
        let out = elastic_morph(&img, &p, "ramp", 0);
        let mut max_dx: f32 = 0.0;
        for y in 4..h - 4 {
            for x in 4..w - 4 {
                let d = (out.get(x, y) - img.get(x, y)) * (w as f32 * 4.0);
                max_dx = max_dx.max(d.abs());
            }
        }
        assert!(max_dx <= 3.0 + 1e-3, "{max_dx}");
        assert!(max_dx > 0.5, "{max_dx}");
    }

    #[test]
    fn mean_intensity_roughly_preserved() {
        let img = glyph(200, 100);
        for k in 0..5 {
            let out = elastic_morph(&img, &MorphParams::default(), "m", k);
            assert!((out.mean() - img.mean()).abs() < 0.05);
        }
    }

    #[test]
    fn golden_checksum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let px: Vec<f32> = (0..48 * 24).map(|_| rng.random::<f32>()).collect();
        let img = GrayImage::new(48, 24, px).unwrap();
        let p = MorphParams { seed: 7, ..Default::default() };
        assert_eq!(image_checksum(&elastic_morph(&img, &p, "golden", 0)), GOLDEN_MORPH);
        assert_eq!(image_checksum(&glyph(60, 30)), GOLDEN_GLYPH);
    }

    const GOLDEN_MORPH: &str = "ad34c15f8e936d18";
    const GOLDEN_GLYPH: &str = "ce0884b574ac6b12";

    #[test]
    fn morph_refs() {
        assert_eq!(morph_ref("a/b.pgm", 2), "a/b_m2.pgm");
        assert_eq!(morph_ref("noext", 0), "noext_m0");
        assert_eq!(morph_ref("dir.v1/noext", 4), "dir.v1/noext_m4");
    }

    #[test]
    fn augment_counts_and_labels() {
        assert!(augment_training_set(&[], &MorphParams::default()).is_empty());
        let img = glyph(30, 15);
        let train: Vec<_> = (0..100)
            .map(|i| (SampleRecord::human("b", &format!("c{}", i % 7), &format!("{i}.pgm")), img.clone()))
            .collect();
        let out = augment_training_set(&train, &MorphParams::default());
        assert_eq!(out.len(), 600);
        let n_aug = out.iter().filter(|(r, _)| !r.origin.is_human()).count();
        assert_eq!(n_aug, 5 * 100);
        for (rec, _) in &out {
            if let Origin::Augmented { source } = &rec.origin {
                let src = train.iter().find(|(r, _)| &r.sample_id == source).unwrap();
                assert_eq!(src.0.class_label, rec.class_label);
            }
        }
    }
}
