//! Structural similarity: global, windowed minimum, and the histogram
//! prescreen that runs before it.

use serde::{Deserialize, Serialize};

use super::GrayImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
    /// Smallest window side; the effective side is `max(window, min(H, W) / 8)`.
    pub window: usize,
    /// Fraction of a window shared with its neighbour.
    pub overlap_frac: f64,
    /// Both images are area-downsampled to this width before windowing.
    pub downsample_width: usize,
    /// Largest L1 distance between normalized 64-bin histograms that still
    /// proceeds to SSIM.
    pub histogram_reject: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            c1: (0.01f64 * 255.0).powi(2),
            c2: (0.03f64 * 255.0).powi(2),
            window: 16,
            overlap_frac: 0.5,
            downsample_width: 256,
            histogram_reject: 0.5,
        }
    }
}

impl SsimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidParam("SSIM constants must be positive".into()));
        }
        if self.window < 4 {
            return Err(Error::InvalidParam("SSIM window must be at least 4".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_frac) {
            return Err(Error::InvalidParam("overlap_frac must lie in [0, 1)".into()));
        }
        if self.downsample_width == 0 {
            return Err(Error::InvalidParam("downsample_width must be positive".into()));
        }
        Ok(())
    }

    /// Adaptive window side for an image of the given size.
    pub fn window_side(&self, width: usize, height: usize) -> usize {
        self.window.max(width.min(height) / 8).min(width.min(height)).max(1)
    }
}

fn ensure_same_dims(a: &GrayImage, b: &GrayImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    Ok(())
}

/// Means, population variances and covariance over a rectangle.
fn window_stats(a: &GrayImage, b: &GrayImage, x0: usize, y0: usize, w: usize, h: usize) -> [f64; 5] {
    let n = (w * h) as f64;
    let (mut sa, mut sb) = (0.0, 0.0);
    for y in y0..y0 + h {
        let (ra, rb) = (&a.row(y)[x0..x0 + w], &b.row(y)[x0..x0 + w]);
        sa += ra.iter().sum::<f64>();
        sb += rb.iter().sum::<f64>();
    }
    let (ma, mb) = (sa / n, sb / n);
    let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
    for y in y0..y0 + h {
        let (ra, rb) = (&a.row(y)[x0..x0 + w], &b.row(y)[x0..x0 + w]);
        for (&pa, &pb) in ra.iter().zip(rb) {
            let (da, db) = (pa - ma, pb - mb);
            vaa += da * da;
            vbb += db * db;
            vab += da * db;
        }
    }
    [ma, mb, vaa / n, vbb / n, vab / n]
}

fn ssim_from_stats([mx, my, vx, vy, cxy]: [f64; 5], c1: f64, c2: f64) -> f64 {
    ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// SSIM with the whole image as a single window.
pub fn ssim(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64> {
    ensure_same_dims(a, b)?;
    let (w, h) = a.dims();
    Ok(ssim_from_stats(window_stats(a, b, 0, 0, w, h), p.c1, p.c2))
}

// Window origins along one axis, always ending flush with the edge.
fn window_origins(len: usize, side: usize, stride: usize) -> Vec<usize> {
    let last = len - side;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Minimum SSIM over overlapping windows of both images after downsampling.
pub fn min_window_ssim(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64> {
    let a = a.downsample_to_width(p.downsample_width);
    let b = b.downsample_to_width(p.downsample_width);
    min_window_ssim_prepared(&a, &b, p)
}

/// As [`min_window_ssim`] for images already at their comparison resolution.
pub(crate) fn min_window_ssim_prepared(a: &GrayImage, b: &GrayImage, p: &SsimParams) -> Result<f64> {
    ensure_same_dims(a, b)?;
    let (w, h) = a.dims();
    let side = p.window_side(w, h);
    let stride = ((side as f64 * (1.0 - p.overlap_frac)).round() as usize).max(1);
    let xs = window_origins(w, side, stride);
    let ys = window_origins(h, side, stride);
    let mut min = f64::INFINITY;
    for &y in &ys {
        for &x in &xs {
            let s = ssim_from_stats(window_stats(a, b, x, y, side, side), p.c1, p.c2);
            min = min.min(s);
        }
    }
    Ok(min)
}

pub const HISTOGRAM_BINS: usize = 64;

/// Normalized 64-bin intensity histogram.
pub fn histogram(g: &GrayImage) -> [f64; HISTOGRAM_BINS] {
    let mut bins = [0.0; HISTOGRAM_BINS];
    for &v in g.pixels() {
        let i = ((v / 256.0 * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
        bins[i] += 1.0;
    }
    let n = g.pixels().len() as f64;
    bins.iter_mut().for_each(|b| *b /= n);
    bins
}

pub(crate) fn histogram_l1(a: &[f64; HISTOGRAM_BINS], b: &[f64; HISTOGRAM_BINS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Fast reject: `true` ("may be similar") iff the L1 distance between the
/// normalized histograms is at most `reject_threshold`.
pub fn histogram_prescreen(a: &GrayImage, b: &GrayImage, reject_threshold: f64) -> bool {
    histogram_l1(&histogram(a), &histogram(b)) <= reject_threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..255.0)).collect();
        GrayImage::from_fn(w, h, |x, y| cells[((y / 4) % 16) * 16 + (x / 4) % 16])
    }

    #[test]
    fn default_constants() {
        let p = SsimParams::default();
        assert!((p.c1 - 6.5025).abs() < 1e-12);
        assert!((p.c2 - 58.5225).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_identical_is_one() {
        let x = textured(1, 50, 40);
        assert!((ssim(&x, &x, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn black_vs_white_closed_form() {
        let p = SsimParams::default();
        let black = GrayImage::filled(8, 8, 0.0);
        let white = GrayImage::filled(8, 8, 255.0);
        let want = p.c1 / (255.0 * 255.0 + p.c1);
        let got = ssim(&black, &white, &p).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 1.0e-4).abs() < 1e-6);
    }

    #[test]
    fn ssim_is_symmetric() {
        let (x, y) = (textured(1, 30, 30), textured(2, 30, 30));
        let p = SsimParams::default();
        assert_eq!(ssim(&x, &y, &p).unwrap(), ssim(&y, &x, &p).unwrap());
    }

    #[test]
    fn ssim_rejects_mismatched_dims() {
        let p = SsimParams::default();
        let err = ssim(&GrayImage::filled(3, 3, 0.0), &GrayImage::filled(3, 4, 0.0), &p);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
        let err = min_window_ssim(&GrayImage::filled(30, 30, 0.0), &GrayImage::filled(30, 40, 0.0), &p);
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn window_side_is_adaptive() {
        let p = SsimParams::default();
        assert_eq!(p.window_side(256, 455), 32);
        assert_eq!(p.window_side(100, 100), 16);
        assert_eq!(p.window_side(10, 100), 10);
    }

    #[test]
    fn window_origins_cover_the_edge() {
        assert_eq!(window_origins(100, 32, 16), vec![0, 16, 32, 48, 64, 68]);
        assert_eq!(window_origins(32, 32, 16), vec![0]);
    }

    #[test]
    fn min_window_ssim_identical_and_constant() {
        let p = SsimParams::default();
        let x = textured(4, 300, 500);
        assert!((min_window_ssim(&x, &x, &p).unwrap() - 1.0).abs() < 1e-9);
        let c = GrayImage::filled(200, 120, 77.0);
        assert_eq!(min_window_ssim(&c, &c, &p).unwrap(), 1.0);
    }

    #[test]
    fn local_change_is_caught_by_windows_only() {
        let p = SsimParams::default();
        let x = textured(5, 256, 256);
        // Invert one window-sized block (side 32 at this size).
        let y = GrayImage::from_fn(256, 256, |i, j| {
            let v = x.get(i, j);
            if (96..128).contains(&i) && (64..96).contains(&j) {
                255.0 - v
            } else {
                v
            }
        });
        let global = ssim(&x, &y, &p).unwrap();
        let local = min_window_ssim(&x, &y, &p).unwrap();
        assert!(global > 0.9, "{global}");
        assert!(local < 0.0, "{local}");
    }

    #[test]
    fn histogram_prescreen_examples() {
        let x = textured(6, 64, 64);
        assert!(histogram_prescreen(&x, &x, 0.5));

        let black = GrayImage::filled(10, 10, 0.0);
        let white = GrayImage::filled(10, 10, 255.0);
        assert_eq!(histogram_l1(&histogram(&black), &histogram(&white)), 2.0);
        assert!(!histogram_prescreen(&black, &white, 0.5));

        let mut px = x.pixels().to_vec();
        px.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let shuffled = GrayImage::new(64, 64, px);
        assert!(histogram_prescreen(&x, &shuffled, 0.0));
    }
}
