//! Evaluation: per-light bitwise prediction error, PSNR, SSIM, rank
//! correlation and the per-frame CSV log.

use std::io::Write;
use std::path::Path;

use image::RgbImage;
use thiserror::Error;

use crate::visibility::VisibilityBitmap;

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("inputs differ in shape: {0}")]
    DimensionMismatch(String),
    #[error("image {width}x{height} is smaller than the {window}x{window} SSIM window")]
    TooSmall { width: u32, height: u32, window: usize },
    #[error("writing frame log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitwiseError {
    /// Fraction of compared pixels whose bit differs, per light.
    pub per_light: Vec<f64>,
    pub mean: f64,
    pub compared_pixels: usize,
}

/// Compares two bitmaps light by light over the pixels where `mask` is set
/// (all pixels when `mask` is `None`). An empty comparison set yields zeros.
pub fn bitwise_error(
    actual: &VisibilityBitmap,
    predicted: &VisibilityBitmap,
    mask: Option<&[bool]>,
) -> Result<BitwiseError, MetricsError> {
    if !actual.same_shape(predicted) {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            actual.width, actual.height, actual.num_lights, predicted.width, predicted.height, predicted.num_lights
        )));
    }
    let pixels = (actual.width * actual.height) as usize;
    if let Some(m) = mask {
        if m.len() != pixels {
            return Err(MetricsError::DimensionMismatch(format!(
                "mask has {} entries for {pixels} pixels",
                m.len()
            )));
        }
    }
    let lights = actual.num_lights as usize;
    let wpp = actual.words_per_pixel();
    let mut differing = vec![0usize; lights];
    let mut compared = 0usize;
    let pairs = actual.words().chunks_exact(wpp.max(1)).zip(predicted.words().chunks_exact(wpp.max(1)));
    for (i, (a, p)) in pairs.enumerate().take(pixels) {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        compared += 1;
        for (light, count) in differing.iter_mut().enumerate() {
            let w = light / 32;
            if (a[w] ^ p[w]) >> (light % 32) & 1 == 1 {
                *count += 1;
            }
        }
    }
    let per_light: Vec<f64> = differing
        .iter()
        .map(|&d| if compared == 0 { 0.0 } else { d as f64 / compared as f64 })
        .collect();
    let mean = if lights == 0 { 0.0 } else { per_light.iter().sum::<f64>() / lights as f64 };
    Ok(BitwiseError {
        per_light,
        mean,
        compared_pixels: compared,
    })
}

fn check_same_size(a: &RgbImage, b: &RgbImage) -> Result<(), MetricsError> {
    if a.dimensions() != b.dimensions() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(())
}

/// PSNR over all RGB samples of two 8-bit images.
pub fn psnr(reference: &RgbImage, test: &RgbImage) -> Result<f64, MetricsError> {
    check_same_size(reference, test)?;
    let samples = reference.as_raw().len();
    let sse: f64 = reference
        .as_raw()
        .iter()
        .zip(test.as_raw())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    if sse == 0.0 || samples == 0 {
        return Ok(PSNR_IDENTICAL);
    }
    let mse = sse / samples as f64;
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Rec. 601 luma on the 0..255 scale.
pub fn luma(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
        .collect()
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter keeping only fully-covered window positions.
fn filter_valid(img: &[f64], width: usize, height: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horizontal = vec![0.0; ow * height];
    for y in 0..height {
        let row = &img[y * width..(y + 1) * width];
        for x in 0..ow {
            horizontal[y * ow + x] = k.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, w)| w * horizontal[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM on luma with an 11x11 Gaussian window (sigma 1.5), averaged over
/// every window position that lies fully inside the image.
pub fn ssim(reference: &RgbImage, test: &RgbImage) -> Result<f64, MetricsError> {
    check_same_size(reference, test)?;
    let (w, h) = reference.dimensions();
    if (w as usize) < SSIM_WINDOW || (h as usize) < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let (w, h) = (w as usize, h as usize);
    let a = luma(reference);
    let b = luma(test);
    let k = gaussian_kernel();
    let product = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&a, w, h, &k);
    let mu_b = filter_valid(&b, w, h, &k);
    let aa = filter_valid(&product(&a, &a), w, h, &k);
    let bb = filter_valid(&product(&b, &b), w, h, &k);
    let ab = filter_valid(&product(&a, &b), w, h, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either series is constant or the
/// lengths differ or are below two.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// One displayed frame. `m`/`p` are empty until the first bitmap arrives.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameLog {
    pub n: u32,
    pub r: u32,
    pub m: Option<u32>,
    pub p: Option<u32>,
    pub x: u32,
    pub bitwise_error_per_light: Option<Vec<f64>>,
    pub bitwise_error_mean: Option<f64>,
    /// Mean per-light error restricted to pixels whose sample fell outside the
    /// received display region.
    pub edge_bitwise_error: Option<f64>,
    pub fallback_pixels: usize,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub response_time_ms: Option<f64>,
    pub displayed_lag_ms: f64,
    pub bytes_received: u64,
    pub compression_ratio: Option<f64>,
}

pub const FRAME_LOG_COLUMNS: [&str; 15] = [
    "n",
    "r",
    "m",
    "p",
    "x",
    "bitwise_error_per_light",
    "bitwise_error_mean",
    "edge_bitwise_error",
    "fallback_pixels",
    "psnr_db",
    "ssim",
    "response_time_ms",
    "displayed_lag_ms",
    "bytes_received",
    "compression_ratio",
];

/// `%g`-style formatting with six significant digits.
pub fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{v:.*}", (5 - exp) as usize))
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn opt_g6(v: Option<f64>) -> String {
    v.map(format_g6).unwrap_or_default()
}

impl FrameLog {
    pub fn csv_record(&self) -> [String; 15] {
        [
            self.n.to_string(),
            self.r.to_string(),
            opt(self.m),
            opt(self.p),
            self.x.to_string(),
            self.bitwise_error_per_light
                .as_ref()
                .map(|v| v.iter().map(|&e| format_g6(e)).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            opt_g6(self.bitwise_error_mean),
            opt_g6(self.edge_bitwise_error),
            self.fallback_pixels.to_string(),
            opt_g6(self.psnr_db),
            opt_g6(self.ssim),
            opt_g6(self.response_time_ms),
            format_g6(self.displayed_lag_ms),
            self.bytes_received.to_string(),
            opt_g6(self.compression_ratio),
        ]
    }
}

pub fn write_frame_log_to(out: impl Write, rows: &[FrameLog]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FRAME_LOG_COLUMNS)?;
    for row in rows {
        w.write_record(row.csv_record())?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_frame_log(path: &Path, rows: &[FrameLog]) -> Result<(), MetricsError> {
    let file = std::fs::File::create(path).map_err(|source| MetricsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_frame_log_to(std::io::BufWriter::new(file), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn solid(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, image::Rgb([v; 3]))
    }

    fn pattern(w: u32, h: u32, salt: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let r = (x * 7 + y * 13 + salt * ((x * y) % 17)) % 256;
            let g = (x * x + y + salt * 3) % 256;
            let b = (x * y * 3 + salt * (x % 5)) % 256;
            image::Rgb([r as u8, g as u8, b as u8])
        })
    }

    #[test]
    fn identical_bitmaps_have_zero_error() {
        let mut a = VisibilityBitmap::new(4, 3, 3, 0);
        a.set_bit(1, 1, 2, true).unwrap();
        let e = bitwise_error(&a, &a.clone(), None).unwrap();
        assert_eq!(e.per_light, vec![0.0; 3]);
        assert_eq!(e.mean, 0.0);
    }

    #[test]
    fn all_visible_against_all_occluded_is_total_error() {
        let a = VisibilityBitmap::new(4, 3, 3, 0);
        let p = VisibilityBitmap::all_visible(4, 3, 3, 0);
        let e = bitwise_error(&a, &p, None).unwrap();
        assert_eq!(e.per_light, vec![1.0; 3]);
        assert_eq!(e.mean, 1.0);
    }

    #[test]
    fn one_differing_bit_in_four_pixels() {
        let a = VisibilityBitmap::new(2, 2, 1, 0);
        let mut p = a.clone();
        p.set_bit(1, 0, 0, true).unwrap();
        assert_eq!(bitwise_error(&a, &p, None).unwrap().per_light, vec![0.25]);
    }

    #[test]
    fn mask_restricts_the_comparison() {
        let a = VisibilityBitmap::new(2, 2, 1, 0);
        let mut p = a.clone();
        p.set_bit(1, 0, 0, true).unwrap();
        let mask = [true, false, true, true];
        let e = bitwise_error(&a, &p, Some(&mask)).unwrap();
        assert_eq!((e.per_light[0], e.compared_pixels), (0.0, 3));
        let e = bitwise_error(&a, &p, Some(&[false; 4])).unwrap();
        assert_eq!((e.mean, e.compared_pixels), (0.0, 0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = VisibilityBitmap::new(2, 2, 1, 0);
        assert!(bitwise_error(&a, &VisibilityBitmap::new(2, 2, 2, 0), None).is_err());
        assert!(bitwise_error(&a, &a, Some(&[true])).is_err());
        assert!(psnr(&solid(2, 2, 0), &solid(2, 3, 0)).is_err());
        assert!(ssim(&solid(12, 12, 0), &solid(12, 13, 0)).is_err());
        assert!(matches!(ssim(&solid(10, 12, 0), &solid(10, 12, 0)), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn psnr_fixed_points() {
        assert_eq!(psnr(&solid(5, 5, 9), &solid(5, 5, 9)).unwrap(), PSNR_IDENTICAL);
        assert!(psnr(&solid(5, 5, 0), &solid(5, 5, 255)).unwrap().abs() < 1e-12);
        // MSE = 1 gives 20 log10(255).
        let p = psnr(&solid(3, 3, 10), &solid(3, 3, 11)).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = pattern(20, 16, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkerboard_against_its_inverse_is_negative() {
        let board = |inv: bool| {
            RgbImage::from_fn(16, 16, |x, y| {
                let on = ((x + y) % 2 == 0) ^ inv;
                image::Rgb([if on { 255 } else { 0 }; 3])
            })
        };
        assert!(ssim(&board(false), &board(true)).unwrap() < 0.0);
    }

    /// Direct windowed evaluation with no separable filtering.
    fn ssim_brute_force(a: &RgbImage, b: &RgbImage) -> f64 {
        let (w, h) = (a.width() as usize, a.height() as usize);
        let (la, lb) = (luma(a), luma(b));
        let k = gaussian_kernel();
        let mut total = 0.0;
        let mut count = 0;
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let wt = k[dx] * k[dy];
                        let i = (y0 + dy) * w + x0 + dx;
                        ma += wt * la[i];
                        mb += wt * lb[i];
                        saa += wt * la[i] * la[i];
                        sbb += wt * lb[i] * lb[i];
                        sab += wt * la[i] * lb[i];
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn ssim_matches_direct_window_sum() {
        let (a, b) = (pattern(23, 17, 0), pattern(23, 17, 2));
        assert!((ssim(&a, &b).unwrap() - ssim_brute_force(&a, &b)).abs() < 1e-10);
    }

    #[test]
    fn ssim_matches_independent_implementation() {
        // scikit-image structural_similarity on the same luma planes with
        // gaussian_weights, sigma 1.5, population covariance, data_range 255.
        const EXPECTED: f64 = 0.9344737703164157;
        let (a, b) = (pattern(24, 20, 0), pattern(24, 20, 1));
        let s = ssim(&a, &b).unwrap();
        assert!((s - EXPECTED).abs() < 1e-9, "{s}");
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), None);
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        // Ties share ranks: ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 4.5 / (4.5f64 * 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn g6_formatting() {
        assert_eq!(format_g6(0.0), "0");
        assert_eq!(format_g6(1.0), "1");
        assert_eq!(format_g6(33.3), "33.3");
        assert_eq!(format_g6(1.0 / 3.0), "0.333333");
        assert_eq!(format_g6(123456.7), "123457");
        assert_eq!(format_g6(1234567.0), "1.23457e+06");
        assert_eq!(format_g6(0.000012345), "1.2345e-05");
        assert_eq!(format_g6(-2.5), "-2.5");
        assert_eq!(format_g6(99.99999), "100");
    }

    fn csv_of(rows: &[FrameLog]) -> String {
        let mut buf = Vec::new();
        write_frame_log_to(&mut buf, rows).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn empty_log_is_header_only() {
        let s = csv_of(&[]);
        assert_eq!(s.lines().count(), 1);
        assert_eq!(s.trim_end(), FRAME_LOG_COLUMNS.join(","));
    }

    #[test]
    fn three_frames_give_four_lines() {
        let rows: Vec<_> = (0..3)
            .map(|n| FrameLog {
                n,
                r: n,
                bitwise_error_per_light: Some(vec![0.5, 0.25]),
                displayed_lag_ms: 11.1,
                ..Default::default()
            })
            .collect();
        let s = csv_of(&rows);
        assert_eq!(s.lines().count(), 4);
        assert_eq!(s.lines().nth(1).unwrap(), "0,0,,,0,0.5;0.25,,,0,,,,11.1,0,");
        assert_eq!(s, csv_of(&rows));
    }

    #[test]
    fn write_to_missing_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nope").join("log.csv");
        assert!(matches!(write_frame_log(&path, &[]), Err(MetricsError::Io { .. })));
    }

    fn translate(img: &RgbImage, dx: u32, dy: u32) -> RgbImage {
        RgbImage::from_fn(img.width(), img.height(), |x, y| {
            *img.get_pixel((x + dx) % img.width(), (y + dy) % img.height())
        })
    }

    proptest! {
        #[test]
        fn bitwise_error_is_symmetric(
            a in proptest::collection::vec(any::<u32>(), 30),
            b in proptest::collection::vec(any::<u32>(), 30),
        ) {
            let mask = |v: Vec<u32>| v.into_iter().map(|w| w & 0x1f).collect::<Vec<_>>();
            let a = VisibilityBitmap::from_words(6, 5, 5, 0, mask(a)).unwrap();
            let b = VisibilityBitmap::from_words(6, 5, 5, 0, mask(b)).unwrap();
            let ab = bitwise_error(&a, &b, None).unwrap();
            prop_assert_eq!(&ab, &bitwise_error(&b, &a, None).unwrap());
            prop_assert_eq!(ab.mean == 0.0, a == b);
        }

        #[test]
        fn metrics_invariant_under_shared_translation(dx in 0u32..8, dy in 0u32..8, salt in 1u32..5) {
            let (a, b) = (pattern(32, 28, 0), pattern(32, 28, salt));
            let (ta, tb) = (translate(&a, dx, dy), translate(&b, dx, dy));
            prop_assert!((psnr(&a, &b).unwrap() - psnr(&ta, &tb).unwrap()).abs() < 1e-9);
            // Interior crop that both versions contain without wrap-around.
            let crop = |img: &RgbImage, ox, oy| image::imageops::crop_imm(img, ox, oy, 24, 20).to_image();
            let s0 = ssim(&crop(&a, dx, dy), &crop(&b, dx, dy)).unwrap();
            let s1 = ssim(&crop(&ta, 0, 0), &crop(&tb, 0, 0)).unwrap();
            prop_assert!((s0 - s1).abs() < 1e-12);
        }
    }
}
