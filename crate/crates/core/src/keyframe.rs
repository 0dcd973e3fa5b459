//! Similarity-based keyframe selection.
//!
//! Sampled frames are walked in order. Blurry frames are skipped. Runs of
//! mutually similar clear frames form a batch, and only the last frame of
//! each batch is kept, since later frames tend to show fully loaded widgets
//! and typed input.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{laplacian_variance, to_grayscale, FrameSignature, SsimParams};
use crate::ingest::{effective_skip, CompareAgainst, Frame, SamplingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedFrame {
    pub index: usize,
    /// Path of the written PNG, relative to the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeManifest {
    pub source_id: String,
    pub params: SamplingParams,
    pub sampled_indices: Vec<usize>,
    /// Sampled frames rejected by the blur gate.
    pub blurry_indices: Vec<usize>,
    pub retained: Vec<RetainedFrame>,
    pub frame_compression_pct: f64,
    pub pixel_compression_pct: f64,
}

impl KeyframeManifest {
    pub fn retained_indices(&self) -> Vec<usize> {
        self.retained.iter().map(|r| r.index).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    pub frame_compression_pct: f64,
    pub pixel_compression_pct: f64,
}

/// Share of sampled frames and of sampled pixel area that the retained
/// output no longer carries. Each slice holds one pixel area per image.
pub fn compression_stats(sampled_areas: &[u64], retained_areas: &[u64]) -> Result<CompressionStats> {
    if sampled_areas.is_empty() {
        return Err(Error::EmptyInput("no sampled frames"));
    }
    let sampled_px: u64 = sampled_areas.iter().sum();
    let retained_px: u64 = retained_areas.iter().sum();
    let pct = |kept: f64, total: f64| ((1.0 - kept / total) * 100.0).clamp(0.0, 100.0);
    Ok(CompressionStats {
        frame_compression_pct: pct(retained_areas.len() as f64, sampled_areas.len() as f64),
        pixel_compression_pct: if sampled_px == 0 {
            0.0
        } else {
            pct(retained_px as f64, sampled_px as f64)
        },
    })
}

/// Runs interval sampling, the blur gate and batch accumulation over `frames`.
pub fn select_keyframes(
    source_id: &str,
    frames: &[Frame],
    params: &SamplingParams,
    sp: &SsimParams,
) -> Result<KeyframeManifest> {
    if frames.is_empty() {
        return Err(Error::EmptyInput("no frames to select from"));
    }
    params.validate()?;
    sp.validate()?;

    let skip = effective_skip(params.fps, params.interval_s);
    let sampled: Vec<usize> = (0..frames.len()).step_by(skip).collect();

    let mut kept: Vec<usize> = Vec::new();
    let mut blurry = Vec::new();
    let mut batch: Vec<usize> = Vec::new();
    let mut prev: Option<FrameSignature> = None;

    for &pos in &sampled {
        let gray = to_grayscale(&frames[pos]);
        let clear = laplacian_variance(&gray) >= params.blur_threshold;
        let sig = FrameSignature::from_gray(&gray, sp);
        if clear {
            match &prev {
                None => batch = vec![pos],
                Some(prev_sig) => {
                    if prev_sig.similar_to(&sig, params, sp) {
                        batch.push(pos);
                    } else {
                        if let Some(&last) = batch.last() {
                            kept.push(last);
                        }
                        batch = vec![pos];
                    }
                }
            }
        } else {
            blurry.push(frames[pos].index);
        }
        if clear || params.compare_against == CompareAgainst::LastSampled {
            prev = Some(sig);
        }
    }
    if let Some(&last) = batch.last() {
        kept.push(last);
    }

    let sampled_areas: Vec<u64> = sampled.iter().map(|&p| frames[p].area()).collect();
    let retained_areas: Vec<u64> = kept.iter().map(|&p| frames[p].area()).collect();
    let stats = compression_stats(&sampled_areas, &retained_areas)?;

    Ok(KeyframeManifest {
        source_id: source_id.to_owned(),
        params: params.clone(),
        sampled_indices: sampled.iter().map(|&p| frames[p].index).collect(),
        blurry_indices: blurry,
        retained: kept
            .iter()
            .map(|&p| RetainedFrame {
                index: frames[p].index,
                path: None,
            })
            .collect(),
        frame_compression_pct: stats.frame_compression_pct,
        pixel_compression_pct: stats.pixel_compression_pct,
    })
}

/// Retained frames, in order, looked up by source index.
pub fn retained_frames<'a>(manifest: &KeyframeManifest, frames: &'a [Frame]) -> Vec<&'a Frame> {
    manifest
        .retained
        .iter()
        .filter_map(|r| frames.iter().find(|f| f.index == r.index))
        .collect()
}

/// Writes each retained frame as `<subdir>/frame_%06d.png` under `out_dir`
/// and records the relative paths in the manifest.
pub fn write_keyframes(
    manifest: &mut KeyframeManifest,
    frames: &[Frame],
    out_dir: &Path,
    subdir: &str,
) -> Result<()> {
    let dir = out_dir.join(subdir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for retained in &mut manifest.retained {
        let frame = frames
            .iter()
            .find(|f| f.index == retained.index)
            .ok_or_else(|| Error::InvalidParam(format!("frame {} not loaded", retained.index)))?;
        let rel = format!("{subdir}/frame_{:06}.png", retained.index);
        let path = out_dir.join(&rel);
        frame
            .pixels
            .save(&path)
            .map_err(|source| Error::Encode { path, source })?;
        retained.path = Some(rel);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Random blocky screens: sharp, and mutually dissimilar for distinct seeds.
    fn screen(seed: u64) -> RgbImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells: Vec<[u8; 3]> = (0..24 * 16).map(|_| rng.random()).collect();
        RgbImage::from_fn(192, 288, |x, y| Rgb(cells[(y as usize / 12) * 16 + x as usize / 12]))
    }

    fn blurred() -> RgbImage {
        RgbImage::from_pixel(192, 288, Rgb([128, 128, 128]))
    }

    fn frames(images: Vec<RgbImage>) -> Vec<Frame> {
        images
            .into_iter()
            .enumerate()
            .map(|(i, px)| Frame::new(i, i as f64, px))
            .collect()
    }

    fn every_frame() -> SamplingParams {
        SamplingParams {
            fps: 1.0,
            interval_s: 1.0,
            ..SamplingParams::default()
        }
    }

    #[test]
    fn keeps_last_of_each_batch() {
        let (a, b, c) = (screen(1), screen(2), screen(3));
        let seq = frames(vec![a.clone(), a.clone(), a, b.clone(), b, c]);
        let m = select_keyframes("t", &seq, &every_frame(), &SsimParams::default()).unwrap();
        assert_eq!(m.retained_indices(), vec![2, 4, 5]);
        assert_eq!(m.sampled_indices, vec![0, 1, 2, 3, 4, 5]);
        assert!((m.frame_compression_pct - 50.0).abs() < 1e-9);
    }

    #[test]
    fn all_blurry_keeps_nothing() {
        let seq = frames(vec![blurred(), blurred(), blurred()]);
        let m = select_keyframes("t", &seq, &every_frame(), &SsimParams::default()).unwrap();
        assert!(m.retained.is_empty());
        assert_eq!(m.blurry_indices, vec![0, 1, 2]);
        assert_eq!(m.frame_compression_pct, 100.0);
    }

    #[test]
    fn blurry_frame_becomes_prev_when_comparing_against_last_sampled() {
        // A flat grey frame is blurry and unlike A, so the second A starts a
        // new batch and both copies survive.
        let a = screen(1);
        let seq = frames(vec![a.clone(), blurred(), a]);
        let m = select_keyframes("t", &seq, &every_frame(), &SsimParams::default()).unwrap();
        assert_eq!(m.retained_indices(), vec![0, 2]);

        let params = SamplingParams {
            compare_against: CompareAgainst::LastRetained,
            ..every_frame()
        };
        let m = select_keyframes("t", &seq, &params, &SsimParams::default()).unwrap();
        assert_eq!(m.retained_indices(), vec![2]);
    }

    #[test]
    fn sampling_stride_applies_before_selection() {
        let seq = frames((0..6).map(screen).collect());
        let params = SamplingParams {
            fps: 2.0,
            interval_s: 1.0,
            ..SamplingParams::default()
        };
        let m = select_keyframes("t", &seq, &params, &SsimParams::default()).unwrap();
        assert_eq!(m.sampled_indices, vec![0, 2, 4]);
        assert_eq!(m.retained_indices(), vec![0, 2, 4]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(select_keyframes("t", &[], &every_frame(), &SsimParams::default()).is_err());
    }

    #[test]
    fn compression_examples() {
        let s = compression_stats(&[100; 45], &[100; 20]).unwrap();
        assert!((s.frame_compression_pct - 55.5556).abs() < 1e-3);
        assert!((s.pixel_compression_pct - 55.5556).abs() < 1e-3);

        let s = compression_stats(&[100; 45], &[100; 45]).unwrap();
        assert_eq!((s.frame_compression_pct, s.pixel_compression_pct), (0.0, 0.0));

        // Two stitched images replacing four frames: areas differ from counts.
        let s = compression_stats(&[1000, 1000, 1000, 1000], &[1500, 1000]).unwrap();
        assert!((s.frame_compression_pct - 50.0).abs() < 1e-12);
        assert!((s.pixel_compression_pct - 37.5).abs() < 1e-12);

        assert!(compression_stats(&[], &[]).is_err());
    }

    #[test]
    fn writes_pngs_with_relative_paths() {
        let seq = frames(vec![screen(1), screen(2)]);
        let mut m = select_keyframes("t", &seq, &every_frame(), &SsimParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_keyframes(&mut m, &seq, dir.path(), "keyframes").unwrap();
        assert_eq!(m.retained[1].path.as_deref(), Some("keyframes/frame_000001.png"));
        let back = image::open(dir.path().join("keyframes/frame_000001.png")).unwrap().to_rgb8();
        assert_eq!(back, seq[1].pixels);
    }
}
