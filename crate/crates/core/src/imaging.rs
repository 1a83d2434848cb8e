//! Grayscale images, PGM (P2/P5) I/O and bilinear resampling.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Width and height of the CNN input (landscape: 100 wide, 50 high).
pub const CNN_INPUT_WIDTH: usize = 100;
pub const CNN_INPUT_HEIGHT: usize = 50;

/// Images whose larger side exceeds this are halved once before patch
/// extraction (a proxy for 300 dpi to 150 dpi).
pub const BOVW_HALVING_THRESHOLD: usize = 600;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a PGM file (magic {0:?})")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (only 1..=255)")]
    UnsupportedMaxval(u32),
    #[error("truncated PGM data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("PGM sample {value} exceeds maxval {maxval}")]
    SampleOutOfRange { value: u32, maxval: u32 },
    #[error("invalid dimensions {width}x{height}")]
    BadDimensions { width: usize, height: usize },
}

/// Row-major grayscale image with intensities in `[0, 1]`, 1.0 = white.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self, ImageError> {
        if width * height != pixels.len() {
            return Err(ImageError::BadDimensions { width, height });
        }
        let pixels = pixels.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&v| f64::from(v)).sum::<f64>() / self.pixels.len() as f64
    }

    /// Construct without clamping; values must already be in range.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        debug_assert_eq!(width * height, pixels.len());
        GrayImage { width, height, pixels }
    }
}

pub fn load_pgm(path: &Path) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pgm(&bytes)
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&[u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.data[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        let tok = self
            .token()
            .ok_or_else(|| ImageError::BadHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::BadHeader(format!("bad {what} {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.len() < 2 {
        return Err(ImageError::BadMagic(String::from_utf8_lossy(bytes).into_owned()));
    }
    let magic = &bytes[..2];
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(ImageError::BadMagic(String::from_utf8_lossy(magic).into_owned())),
    };
    let mut rd = HeaderReader { data: bytes, pos: 2 };
    let width = rd.number("width")? as usize;
    let height = rd.number("height")? as usize;
    let maxval = rd.number("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(ImageError::BadDimensions { width, height });
    }
    let n = width * height;
    let scale = maxval as f32;
    let mut pixels = Vec::with_capacity(n);
    let check = |v: u32| {
        if v > maxval {
            Err(ImageError::SampleOutOfRange { value: v, maxval })
        } else {
            Ok(v as f32 / scale)
        }
    };
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = rd.pos + 1;
        let raster = bytes.get(start..).unwrap_or(&[]);
        if raster.len() < n {
            return Err(ImageError::Truncated { expected: n, found: raster.len() });
        }
        for &b in &raster[..n] {
            pixels.push(check(u32::from(b))?);
        }
    } else {
        while pixels.len() < n {
            let tok = rd
                .token()
                .ok_or(ImageError::Truncated { expected: n, found: pixels.len() })?;
            let v: u32 = std::str::from_utf8(tok)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| ImageError::BadHeader("non-numeric P2 sample".into()))?;
            pixels.push(check(v)?);
        }
    }
    Ok(GrayImage::from_raw(width, height, pixels))
}

/// Encode as binary P5 with maxval 255.
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn save_pgm(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    fs::write(path, encode_pgm(img)).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &GrayImage, out_w: usize, out_h: usize) -> Result<GrayImage, ImageError> {
    if out_w == 0 || out_h == 0 || img.is_empty() {
        return Err(ImageError::BadDimensions { width: out_w, height: out_h });
    }
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f32)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(n_in - 1);
                (i0, i1, (src - i0 as f64) as f32)
            })
            .collect()
    };
    let xs = taps(img.width, out_w);
    let ys = taps(img.height, out_h);
    let mut out = Vec::with_capacity(out_w * out_h);
    for &(y0, y1, fy) in &ys {
        let r0 = &img.pixels[y0 * img.width..(y0 + 1) * img.width];
        let r1 = &img.pixels[y1 * img.width..(y1 + 1) * img.width];
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
            let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
            out.push((top + (bot - top) * fy).clamp(0.0, 1.0));
        }
    }
    Ok(GrayImage::from_raw(out_w, out_h, out))
}

/// Resize to the fixed 100x50 network input.
pub fn prepare_cnn_input(img: &GrayImage) -> GrayImage {
    if img.is_empty() {
        return GrayImage::filled(CNN_INPUT_WIDTH, CNN_INPUT_HEIGHT, 1.0);
    }
    resize_bilinear(img, CNN_INPUT_WIDTH, CNN_INPUT_HEIGHT).expect("non-zero target")
}

/// Halve once when the larger side exceeds [`BOVW_HALVING_THRESHOLD`].
pub fn bovw_working_scale(img: &GrayImage) -> GrayImage {
    if img.width.max(img.height) > BOVW_HALVING_THRESHOLD {
        resize_bilinear(img, (img.width / 2).max(1), (img.height / 2).max(1)).expect("non-zero target")
    } else {
        img.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn p5_and_p2_decode_identically() {
        let mut p5 = b"P5\n2 2\n255\n".to_vec();
        p5.extend([0u8, 255, 255, 0]);
        let a = decode_pgm(&p5).unwrap();
        assert_eq!(a.pixels(), &[0.0, 1.0, 1.0, 0.0]);
        let b = decode_pgm(b"P2\n# comment\n2 2\n255\n0 255\n255 0\n").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn maxval_scaling_and_errors() {
        let img = decode_pgm(b"P2 3 1 4 0 2 4").unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.5, 1.0]);
        let err = decode_pgm(b"P2\n1 1\n65535\n7\n").unwrap_err();
        assert!(err.to_string().contains("unsupported maxval"));
        assert!(matches!(decode_pgm(b"P5\n4 4\n255\n\x00\x01"), Err(ImageError::Truncated { .. })));
        assert!(matches!(decode_pgm(b"P2\n2 1\n255\n3\n"), Err(ImageError::Truncated { .. })));
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\x00"), Err(ImageError::BadMagic(_))));
        assert!(matches!(decode_pgm(b"P2\n1 1\n9\n10\n"), Err(ImageError::SampleOutOfRange { .. })));
    }

    #[test]
    fn pgm_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = GrayImage::new(3, 2, vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        save_pgm(&img, &path).unwrap();
        let back = load_pgm(&path).unwrap();
        assert_eq!(encode_pgm(&back), fs::read(&path).unwrap());
        assert!(back.pixels().iter().zip(img.pixels()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0));
    }

    // explicit-loop reference: clamp-read four neighbours per output pixel
    fn naive_bilinear(img: &GrayImage, ow: usize, oh: usize) -> Vec<f64> {
        let read = |x: i64, y: i64| -> f64 {
            let x = x.clamp(0, img.width() as i64 - 1) as usize;
            let y = y.clamp(0, img.height() as i64 - 1) as usize;
            f64::from(img.get(x, y))
        };
        let mut out = vec![];
        for oy in 0..oh {
            for ox in 0..ow {
                let sx = ((ox as f64 + 0.5) * img.width() as f64 / ow as f64 - 0.5).max(0.0);
                let sy = ((oy as f64 + 0.5) * img.height() as f64 / oh as f64 - 0.5).max(0.0);
                let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
                let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
                let v = read(x0, y0) * (1.0 - fx) * (1.0 - fy)
                    + read(x0 + 1, y0) * fx * (1.0 - fy)
                    + read(x0, y0 + 1) * (1.0 - fx) * fy
                    + read(x0 + 1, y0 + 1) * fx * fy;
                out.push(v);
            }
        }
        out
    }

    #[test]
    fn ramp_downscale_matches_oracle() {
        let row = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let img = GrayImage::new(4, 2, row.iter().chain(row.iter()).copied().collect()).unwrap();
        let out = resize_bilinear(&img, 2, 1).unwrap();
        let oracle = naive_bilinear(&img, 2, 1);
        assert!((oracle[0] - 1.0 / 6.0).abs() < 1e-7 && (oracle[1] - 5.0 / 6.0).abs() < 1e-7);
        for (a, b) in out.pixels().iter().zip(&oracle) {
            assert!((f64::from(*a) - b).abs() < 1e-6);
        }
    }

    #[test]
    fn random_resizes_match_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
            let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap();
            let (ow, oh) = (rng.random_range(1..50), rng.random_range(1..50));
            let out = resize_bilinear(&img, ow, oh).unwrap();
            for (a, b) in out.pixels().iter().zip(naive_bilinear(&img, ow, oh)) {
                assert!((f64::from(*a) - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn resize_identity_and_zero_target() {
        let img = GrayImage::new(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(resize_bilinear(&img, 3, 2).unwrap(), img);
        assert!(resize_bilinear(&img, 0, 2).is_err());
        assert!(resize_bilinear(&img, 2, 0).is_err());
    }

    #[test]
    fn cnn_input_shapes() {
        let same = GrayImage::filled(100, 50, 0.3);
        assert_eq!(prepare_cnn_input(&same), same);
        let big = GrayImage::filled(300, 150, 0.7);
        let out = prepare_cnn_input(&big);
        assert_eq!((out.width(), out.height()), (100, 50));
    }

    #[test]
    fn bovw_scale_halves_large_images_only() {
        let small = GrayImage::filled(600, 200, 1.0);
        assert_eq!(bovw_working_scale(&small).width(), 600);
        let big = GrayImage::filled(1201, 301, 1.0);
        let h = bovw_working_scale(&big);
        assert_eq!((h.width(), h.height()), (600, 150));
    }

    proptest! {
        #[test]
        fn constant_images_stay_constant(w in 1usize..30, h in 1usize..30, ow in 1usize..30, oh in 1usize..30, v in 0u8..=255) {
            let v = f32::from(v) / 255.0;
            let out = resize_bilinear(&GrayImage::filled(w, h, v), ow, oh).unwrap();
            prop_assert!(out.pixels().iter().all(|&p| p == v));
        }

        #[test]
        fn cnn_input_in_range(w in 1usize..150, h in 1usize..80, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.random::<f32>()).collect()).unwrap();
            let out = prepare_cnn_input(&img);
            prop_assert_eq!((out.width(), out.height()), (100, 50));
            prop_assert!(out.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
            let again = resize_bilinear(&out, 100, 50).unwrap();
            prop_assert_eq!(again, out);
        }

        #[test]
        fn p5_round_trip_bit_exact(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
            bytes.extend((0..w * h).map(|_| rng.random::<u8>()));
            let img = decode_pgm(&bytes).unwrap();
            prop_assert_eq!(encode_pgm(&img), bytes);
        }
    }
}
