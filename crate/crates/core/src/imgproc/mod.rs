//! Pixel-level primitives used by keyframe selection and stitching.

pub mod blur;
pub mod compare;
pub mod phash;
pub mod resample;
pub mod ssim;

pub use blur::{is_blurry, laplacian_variance};
pub use compare::{hybrid_similar, l1_distance, FrameSignature};
pub use phash::{hamming_distance, phash, PerceptualHash};
pub use ssim::{histogram_prescreen, min_window_ssim, ssim, SsimParams};

use image::RgbImage;

use crate::ingest::Frame;

/// Luma weights (ITU-R BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major luminance grid with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "buffer does not match dimensions");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Rows `[top, bottom)` as a new image.
    pub fn rows(&self, top: usize, bottom: usize) -> GrayImage {
        GrayImage::new(
            self.width,
            bottom - top,
            self.data[top * self.width..bottom * self.width].to_vec(),
        )
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage::new(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Area-averaged resample to exactly `new_w` x `new_h`.
    pub fn resize(&self, new_w: usize, new_h: usize) -> GrayImage {
        if (new_w, new_h) == self.dims() {
            return self.clone();
        }
        let data = resample::resample_area(&self.data, self.width, self.height, 1, new_w, new_h);
        GrayImage::new(new_w, new_h, data)
    }

    /// Area-averaged downscale to `target_w`, keeping aspect ratio. Narrower
    /// images are returned unchanged.
    pub fn downsample_to_width(&self, target_w: usize) -> GrayImage {
        if self.width <= target_w {
            return self.clone();
        }
        let new_h = ((self.height as f64 * target_w as f64 / self.width as f64).round() as usize).max(1);
        self.resize(target_w, new_h)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

pub fn rgb_to_gray(pixels: &RgbImage) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = pixels
        .pixels()
        .map(|p| {
            let v = wr * f64::from(p[0]) + wg * f64::from(p[1]) + wb * f64::from(p[2]);
            v.clamp(0.0, 255.0)
        })
        .collect();
    GrayImage::new(pixels.width() as usize, pixels.height() as usize, data)
}

pub fn to_grayscale(frame: &Frame) -> GrayImage {
    rgb_to_gray(&frame.pixels)
}
