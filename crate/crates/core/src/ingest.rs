//! Frame loading, interval sampling and width normalization.
//!
//! Frame directories hold files named `frame_%06d.png` (or `.jpg`). Video files
//! are never decoded in-process: an external decoder command is run to
//! produce such a directory first.

use std::path::{Path, PathBuf};
use std::process::Command;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::resample::resample_area;

/// A single decoded frame of a screen recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Position in the source sequence.
    pub index: usize,
    pub timestamp_s: f64,
    pub pixels: RgbImage,
}

impl Frame {
    pub fn new(index: usize, timestamp_s: f64, pixels: RgbImage) -> Self {
        Self {
            index,
            timestamp_s,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.pixels.width() as usize
    }

    pub fn height(&self) -> usize {
        self.pixels.height() as usize
    }

    pub fn area(&self) -> u64 {
        self.pixels.width() as u64 * self.pixels.height() as u64
    }
}

/// Which similarity test decides whether two sampled frames are redundant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    /// pHash gate, histogram prescreen, then windowed SSIM confirm.
    PhashSsim,
    /// Mean absolute intensity difference only.
    L1,
    /// pHash gate, then L1 confirm.
    PhashL1,
}

impl Comparator {
    pub const ALL: [Comparator; 3] = [Comparator::L1, Comparator::PhashL1, Comparator::PhashSsim];

    pub fn name(self) -> &'static str {
        match self {
            Comparator::PhashSsim => "phash_ssim",
            Comparator::L1 => "l1",
            Comparator::PhashL1 => "phash_l1",
        }
    }
}

impl std::str::FromStr for Comparator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phash_ssim" => Ok(Comparator::PhashSsim),
            "l1" => Ok(Comparator::L1),
            "phash_l1" => Ok(Comparator::PhashL1),
            other => Err(Error::InvalidParam(format!("unknown comparator `{other}`"))),
        }
    }
}

/// What `prev` refers to when a sampled frame is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompareAgainst {
    /// Every sampled frame, blurry or not, becomes `prev`.
    #[default]
    LastSampled,
    /// Only clear frames become `prev`, i.e. the tail of the current batch.
    LastRetained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub interval_s: f64,
    pub fps: f64,
    /// Laplacian-variance floor below which a frame counts as blurry.
    pub blur_threshold: f64,
    /// Maximum pHash Hamming distance (of 64 bits) for two frames to be similar.
    pub phash_threshold: u32,
    pub ssim_threshold: f64,
    /// Mean absolute intensity difference accepted by the L1 comparators.
    pub l1_threshold: f64,
    pub comparator: Comparator,
    pub compare_against: CompareAgainst,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            interval_s: 0.5,
            fps: 30.0,
            blur_threshold: 100.0,
            phash_threshold: 10,
            ssim_threshold: 0.85,
            l1_threshold: 8.0,
            comparator: Comparator::PhashSsim,
            compare_against: CompareAgainst::LastSampled,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.interval_s > 0.0) {
            return Err(Error::InvalidParam("interval_s must be > 0".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidParam("fps must be > 0".into()));
        }
        if !(self.blur_threshold >= 0.0) {
            return Err(Error::InvalidParam("blur_threshold must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.ssim_threshold) {
            return Err(Error::InvalidParam("ssim_threshold must lie in [0, 1]".into()));
        }
        if !(self.l1_threshold >= 0.0) {
            return Err(Error::InvalidParam("l1_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    FrameDir,
    VideoFile,
}

/// Options that influence how a source becomes frames.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Used to synthesize timestamps as `index / fps`.
    pub fps: f64,
    /// External decoder, e.g. `ffmpeg -loglevel error -i {input} {output}/frame_%06d.png`.
    pub decoder_cmd: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            fps: 30.0,
            decoder_cmd: None,
        }
    }
}

/// Loads frames in source order, with indices `0..N`.
pub fn load_frames(source: &Path, kind: SourceKind, opts: &LoadOptions) -> Result<Vec<Frame>> {
    if !source.exists() {
        return Err(Error::MissingPath {
            path: source.to_path_buf(),
        });
    }
    if !(opts.fps > 0.0) {
        return Err(Error::InvalidParam("fps must be > 0".into()));
    }
    match kind {
        SourceKind::FrameDir => load_frame_dir(source, opts.fps),
        SourceKind::VideoFile => {
            let cmd = opts.decoder_cmd.as_deref().ok_or(Error::NoDecoder)?;
            let scratch = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
            run_decoder(cmd, source, scratch.path())?;
            load_frame_dir(scratch.path(), opts.fps)
        }
    }
}

/// Image files of a frame directory in load order.
pub fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
            .unwrap_or(false);
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort_by_cached_key(|p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
        (numeric_key(&name), name)
    });
    Ok(files)
}

// Last run of digits in the file stem; unnumbered files sort after numbered ones.
fn numeric_key(name: &str) -> u64 {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().unwrap_or(u64::MAX)
}

fn load_frame_dir(dir: &Path, fps: f64) -> Result<Vec<Frame>> {
    let files = frame_files(dir)?;
    if files.is_empty() {
        return Err(Error::NoFrames {
            path: dir.to_path_buf(),
        });
    }
    files
        .iter()
        .enumerate()
        .map(|(index, path)| {
            let pixels = image::open(path)
                .map_err(|source| Error::Decode {
                    path: path.clone(),
                    source,
                })?
                .to_rgb8();
            Ok(Frame::new(index, index as f64 / fps, pixels))
        })
        .collect()
}

fn run_decoder(template: &str, input: &Path, output: &Path) -> Result<()> {
    let mut parts = template.split_whitespace().map(|part| {
        part.replace("{input}", &input.to_string_lossy())
            .replace("{output}", &output.to_string_lossy())
    });
    let program = parts
        .next()
        .ok_or_else(|| Error::Decoder("empty decoder command".into()))?;
    let status = Command::new(&program)
        .args(parts)
        .status()
        .map_err(|e| Error::Decoder(format!("{program}: {e}")))?;
    if !status.success() {
        return Err(Error::Decoder(format!("{program} exited with {status}")));
    }
    Ok(())
}

/// Sampling stride in frames, `floor(fps * interval)` clamped to at least 1.
pub fn effective_skip(fps: f64, interval_s: f64) -> usize {
    ((fps * interval_s).floor() as usize).max(1)
}

/// Indices in `0..total` that fall on the sampling stride.
pub fn sample_indices(fps: f64, interval_s: f64, total: usize) -> Vec<usize> {
    (0..total).step_by(effective_skip(fps, interval_s)).collect()
}

pub const MIN_TARGET_WIDTH: usize = 16;

/// Downscales a frame to `target_w` keeping its aspect ratio; narrower frames
/// are returned unchanged.
pub fn resize_to_width(frame: &Frame, target_w: usize) -> Result<Frame> {
    if target_w < MIN_TARGET_WIDTH {
        return Err(Error::InvalidParam(format!(
            "target width {target_w} is below the minimum of {MIN_TARGET_WIDTH}"
        )));
    }
    let (w, h) = (frame.width(), frame.height());
    if w <= target_w {
        return Ok(frame.clone());
    }
    let new_h = ((h as f64 * target_w as f64 / w as f64).round() as usize).max(1);
    Ok(Frame {
        pixels: resize_rgb(&frame.pixels, target_w, new_h),
        ..frame.clone()
    })
}

pub(crate) fn resize_rgb(img: &RgbImage, new_w: usize, new_h: usize) -> RgbImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src: Vec<f64> = img.as_raw().iter().map(|&v| f64::from(v)).collect();
    let out = resample_area(&src, w, h, 3, new_w, new_h);
    let raw = out.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    RgbImage::from_raw(new_w as u32, new_h as u32, raw).expect("buffer sized for dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn write_png(path: &Path, w: u32, h: u32, value: u8) {
        RgbImage::from_pixel(w, h, Rgb([value, value, value]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn loads_directory_in_numeric_order() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("frame_000002.png"), 4, 4, 30);
        write_png(&dir.path().join("frame_000000.png"), 4, 4, 10);
        write_png(&dir.path().join("frame_000001.png"), 4, 4, 20);
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();

        let frames = load_frames(dir.path(), SourceKind::FrameDir, &LoadOptions::default()).unwrap();
        let indices: Vec<_> = frames.iter().map(|f| f.index).collect();
        assert_eq!(indices, vec![0, 1, 2]);
        let values: Vec<_> = frames.iter().map(|f| f.pixels.get_pixel(0, 0)[0]).collect();
        assert_eq!(values, vec![10, 20, 30]);
        assert!((frames[2].timestamp_s - 2.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn unpadded_numbers_still_sort_numerically() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("frame_10.png"), 2, 2, 10);
        write_png(&dir.path().join("frame_9.png"), 2, 2, 9);
        let files = frame_files(dir.path()).unwrap();
        assert!(files[0].ends_with("frame_9.png"));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_frames(dir.path(), SourceKind::FrameDir, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoFrames { .. }));
        assert!(err.to_string().contains("no frames"));
    }

    #[test]
    fn missing_path_is_an_error() {
        let err = load_frames(
            Path::new("/definitely/not/here"),
            SourceKind::FrameDir,
            &LoadOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingPath { .. }));
    }

    #[test]
    fn undecodable_image_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("frame_000000.png"), b"not a png").unwrap();
        let err = load_frames(dir.path(), SourceKind::FrameDir, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Decode { .. }));
    }

    #[test]
    fn mixed_sizes_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("frame_000000.png"), 4, 6, 0);
        write_png(&dir.path().join("frame_000001.png"), 8, 3, 0);
        let frames = load_frames(dir.path(), SourceKind::FrameDir, &LoadOptions::default()).unwrap();
        assert_eq!((frames[0].width(), frames[0].height()), (4, 6));
        assert_eq!((frames[1].width(), frames[1].height()), (8, 3));
    }

    #[test]
    fn video_without_decoder_is_rejected() {
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = load_frames(file.path(), SourceKind::VideoFile, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoDecoder));
    }

    #[test]
    fn video_goes_through_decoder_command() {
        let frames_dir = tempfile::tempdir().unwrap();
        write_png(&frames_dir.path().join("frame_000000.png"), 3, 3, 1);
        write_png(&frames_dir.path().join("frame_000001.png"), 3, 3, 2);
        let video = tempfile::NamedTempFile::new().unwrap();
        // `cp -r <dir>/. {output}` stands in for a real decoder.
        let opts = LoadOptions {
            fps: 10.0,
            decoder_cmd: Some(format!("cp -r {}/. {{output}}", frames_dir.path().display())),
        };
        let frames = load_frames(video.path(), SourceKind::VideoFile, &opts).unwrap();
        assert_eq!(frames.len(), 2);
        assert!((frames[1].timestamp_s - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sample_indices_examples() {
        assert_eq!(sample_indices(30.0, 0.5, 45), vec![0, 15, 30]);
        assert_eq!(sample_indices(10.0, 0.05, 4), vec![0, 1, 2, 3]);
        assert_eq!(effective_skip(29.97, 1.0), 29);
        assert!(sample_indices(30.0, 1.0, 0).is_empty());
    }

    #[test]
    fn resize_examples() {
        let frame = Frame::new(0, 0.0, RgbImage::from_pixel(1080, 2400, Rgb([7, 80, 200])));
        let out = resize_to_width(&frame, 512).unwrap();
        assert_eq!((out.width(), out.height()), (512, 1138));
        assert!(out.pixels.pixels().all(|p| *p == Rgb([7, 80, 200])));

        let narrow = Frame::new(0, 0.0, RgbImage::from_pixel(384, 700, Rgb([1, 2, 3])));
        assert_eq!(resize_to_width(&narrow, 512).unwrap(), narrow);

        assert!(resize_to_width(&narrow, 15).is_err());
    }

    #[test]
    fn area_resize_averages_blocks() {
        let mut img = RgbImage::new(4, 2);
        for (x, _, p) in img.enumerate_pixels_mut() {
            *p = if x % 2 == 0 { Rgb([0, 0, 0]) } else { Rgb([200, 100, 50]) };
        }
        let frame = Frame::new(0, 0.0, img);
        let out = resize_to_width(&frame, 16).unwrap();
        assert_eq!(out, frame);
        let half = resize_rgb(&frame.pixels, 2, 1);
        assert!(half.pixels().all(|p| *p == Rgb([100, 50, 25])));
    }
}
