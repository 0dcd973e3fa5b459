//! Frame-pair similarity comparators.

use super::phash::{phash, PerceptualHash};
use super::ssim::{histogram, histogram_l1, min_window_ssim_prepared, SsimParams, HISTOGRAM_BINS};
use super::{to_grayscale, GrayImage};
use crate::error::{Error, Result};
use crate::ingest::{Comparator, Frame, SamplingParams};

/// Mean absolute intensity difference.
pub fn l1_distance(a: &GrayImage, b: &GrayImage) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::dims(a.dims(), b.dims()));
    }
    let sum: f64 = a.pixels().iter().zip(b.pixels()).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.pixels().len() as f64)
}

/// Everything a comparator needs from one frame, computed once.
#[derive(Debug, Clone)]
pub struct FrameSignature {
    /// Luminance at the comparison width.
    pub small: GrayImage,
    pub hash: PerceptualHash,
    pub histogram: [f64; HISTOGRAM_BINS],
}

impl FrameSignature {
    pub fn new(frame: &Frame, sp: &SsimParams) -> Self {
        Self::from_gray(&to_grayscale(frame), sp)
    }

    pub fn from_gray(gray: &GrayImage, sp: &SsimParams) -> Self {
        let small = gray.downsample_to_width(sp.downsample_width);
        Self {
            hash: phash(&small),
            histogram: histogram(&small),
            small,
        }
    }

    /// Applies the configured comparator. Frames whose comparison
    /// resolutions differ are never similar.
    pub fn similar_to(&self, other: &FrameSignature, p: &SamplingParams, sp: &SsimParams) -> bool {
        if self.small.dims() != other.small.dims() {
            return false;
        }
        let phash_gate = || self.hash.distance(&other.hash) <= p.phash_threshold;
        let l1_confirm = || {
            l1_distance(&self.small, &other.small)
                .map(|d| d <= p.l1_threshold)
                .unwrap_or(false)
        };
        match p.comparator {
            Comparator::PhashSsim => {
                phash_gate()
                    && histogram_l1(&self.histogram, &other.histogram) <= sp.histogram_reject
                    && min_window_ssim_prepared(&self.small, &other.small, sp)
                        .map(|s| s >= p.ssim_threshold)
                        .unwrap_or(false)
            }
            Comparator::L1 => l1_confirm(),
            Comparator::PhashL1 => phash_gate() && l1_confirm(),
        }
    }
}

/// Whether `cur` is redundant with `prev` under the configured comparator.
pub fn hybrid_similar(prev: &Frame, cur: &Frame, p: &SamplingParams, sp: &SsimParams) -> bool {
    FrameSignature::new(prev, sp).similar_to(&FrameSignature::new(cur, sp), p, sp)
}
