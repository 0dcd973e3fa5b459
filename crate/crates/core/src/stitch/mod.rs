//! Batch screenshot stitching for vertical scrolls.
//!
//! Consecutive keyframes are merged into one tall image when their content
//! overlaps. Shared status and navigation bars are found by comparing
//! per-strip perceptual hashes, cut away before matching, and put back after
//! each merge. Overlap comes from matched corner descriptors: the median
//! vertical displacement of the surviving matches.

pub mod matching;
pub mod orb;

pub use matching::{knn_match, lowe_filter, overlap_offset, Correspondence, MatchPair};
pub use orb::{orb_features, Descriptor, Keypoint};

use image::imageops::crop_imm;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{phash, rgb_to_gray};
use crate::ingest::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StitchParams {
    /// Lowe ratio threshold.
    pub ratio_threshold: f64,
    pub knn_k: usize,
    pub min_matches: usize,
    pub max_features: usize,
    /// FAST intensity delta.
    pub fast_threshold: f64,
    /// Height of the row blocks compared when looking for bars.
    pub strip_height: usize,
    pub bar_hamming_max: u32,
    /// Each bar is capped at this fraction of the image height.
    pub max_bar_frac: f64,
    pub max_x_drift: f64,
}

impl Default for StitchParams {
    fn default() -> Self {
        Self {
            ratio_threshold: 0.5,
            knn_k: 2,
            min_matches: 10,
            max_features: 500,
            fast_threshold: 20.0,
            strip_height: 16,
            bar_hamming_max: 3,
            max_bar_frac: 0.25,
            max_x_drift: 5.0,
        }
    }
}

impl StitchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParam(msg.into()));
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold < 1.0) {
            return bad("ratio_threshold must lie in (0, 1)");
        }
        if self.knn_k < 2 {
            return bad("knn_k must be at least 2");
        }
        if self.min_matches < 4 {
            return bad("min_matches must be at least 4");
        }
        if self.max_features == 0 || self.strip_height == 0 {
            return bad("max_features and strip_height must be positive");
        }
        if !(0.0..=0.5).contains(&self.max_bar_frac) {
            return bad("max_bar_frac must lie in [0, 0.5]");
        }
        if self.fast_threshold <= 0.0 || self.max_x_drift < 0.0 {
            return bad("fast_threshold must be positive and max_x_drift non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StitchedImage {
    pub pixels: RgbImage,
    /// Source indices of the merged keyframes.
    pub member_indices: Vec<usize>,
    /// Seam rows, each within the accumulated content at the time of the merge.
    pub seam_offsets: Vec<i64>,
    pub h_top: usize,
    pub h_bot: usize,
}

impl StitchedImage {
    pub fn area(&self) -> u64 {
        self.pixels.width() as u64 * self.pixels.height() as u64
    }
}

fn rows(img: &RgbImage, top: usize, bottom: usize) -> RgbImage {
    crop_imm(img, 0, top as u32, img.width(), (bottom - top) as u32).to_image()
}

fn vstack(parts: &[&RgbImage]) -> RgbImage {
    let w = parts[0].width();
    let h: u32 = parts.iter().map(|p| p.height()).sum();
    let mut raw = Vec::with_capacity((w * h * 3) as usize);
    for p in parts {
        raw.extend_from_slice(p.as_raw());
    }
    RgbImage::from_raw(w, h, raw).expect("parts share one width")
}

/// Heights of the top and bottom bars shared by `a` and `b`.
///
/// Both images are cut into strips of `strip_height` rows. Consecutive
/// strips whose hashes differ by at most `bar_hamming_max` bits are counted
/// from the top and from the bottom; each side is capped at
/// `max_bar_frac` of the shorter image.
pub fn detect_common_bars(a: &RgbImage, b: &RgbImage, p: &StitchParams) -> Result<(usize, usize)> {
    if a.width() != b.width() {
        return Err(Error::dims(
            (a.width() as usize, a.height() as usize),
            (b.width() as usize, b.height() as usize),
        ));
    }
    let (ga, gb) = (rgb_to_gray(a), rgb_to_gray(b));
    let (ha, hb) = (ga.height(), gb.height());
    let min_h = ha.min(hb);
    let cap = (p.max_bar_frac * min_h as f64).floor() as usize;
    let s = p.strip_height;
    let same = |ta: usize, tb: usize| phash(&ga.rows(ta, ta + s)).distance(&phash(&gb.rows(tb, tb + s))) <= p.bar_hamming_max;

    let mut top = 0;
    while top + s <= min_h && top < cap && same(top, top) {
        top += s;
    }
    let mut bot = 0;
    while bot + s <= min_h && bot < cap && same(ha - bot - s, hb - bot - s) {
        bot += s;
    }
    Ok((top.min(cap), bot.min(cap)))
}

/// A successful merge of two content regions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStitch {
    pub pixels: RgbImage,
    pub y_pos: i64,
}

fn estimate_offset(acc: &RgbImage, next: &RgbImage, p: &StitchParams) -> Result<i64> {
    // Only the bottom of the accumulation can overlap the incoming frame.
    let start = acc.height().saturating_sub(next.height()) as usize;
    let window = rgb_to_gray(&rows(acc, start, acc.height() as usize));
    let next_gray = rgb_to_gray(next);
    let (train, query) = std::thread::scope(|s| {
        let t = s.spawn(|| orb_features(&window, p));
        let q = orb_features(&next_gray, p);
        (t.join().expect("feature thread panicked"), q)
    });
    let (train, query) = (train?, query?);
    let pairs = lowe_filter(&knn_match(&query, &train, p.knn_k)?, p.ratio_threshold);
    let corr: Vec<Correspondence> = pairs
        .iter()
        .map(|m| {
            let t = train[m.best_train_index].keypoint;
            let q = query[m.query_index].keypoint;
            Correspondence {
                acc: (t.x, t.y + start as f64),
                next: (q.x, q.y),
            }
        })
        .collect();
    overlap_offset(&corr, p)
}

/// Merges two bar-free content regions, or `None` when no valid overlap is
/// found. The result is rows `[0, y_pos)` of `acc` above all of `next`.
pub fn stitch_pair(acc: &RgbImage, next: &RgbImage, p: &StitchParams) -> Option<PairStitch> {
    if acc.width() != next.width() {
        return None;
    }
    let y_pos = estimate_offset(acc, next, p).ok()?;
    if y_pos <= 0 || y_pos >= acc.height() as i64 {
        return None;
    }
    let head = rows(acc, 0, y_pos as usize);
    Some(PairStitch {
        pixels: vstack(&[&head, next]),
        y_pos,
    })
}

/// Groups ordered keyframes into scroll panoramas.
pub fn stitch_batch(frames: &[Frame], p: &StitchParams) -> Result<Vec<StitchedImage>> {
    let first = frames.first().ok_or(Error::EmptyInput("no keyframes to stitch"))?;
    p.validate()?;
    let start = |f: &Frame| StitchedImage {
        pixels: f.pixels.clone(),
        member_indices: vec![f.index],
        seam_offsets: Vec::new(),
        h_top: 0,
        h_bot: 0,
    };
    let mut out = Vec::new();
    let mut acc = start(first);
    for f in &frames[1..] {
        let merged = detect_common_bars(&acc.pixels, &f.pixels, p).ok().and_then(|(top, bot)| {
            let (ha, hn) = (acc.pixels.height() as usize, f.height());
            let acc_content = rows(&acc.pixels, top, ha - bot);
            let next_content = rows(&f.pixels, top, hn - bot);
            let pair = stitch_pair(&acc_content, &next_content, p)?;
            let pixels = vstack(&[&rows(&acc.pixels, 0, top), &pair.pixels, &rows(&acc.pixels, ha - bot, ha)]);
            Some((pixels, pair.y_pos, top, bot))
        });
        match merged {
            Some((pixels, y_pos, top, bot)) => {
                acc.pixels = pixels;
                acc.member_indices.push(f.index);
                acc.seam_offsets.push(y_pos);
                acc.h_top = top;
                acc.h_bot = bot;
            }
            None => out.push(std::mem::replace(&mut acc, start(f))),
        }
    }
    out.push(acc);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_page, render_sequence, PageSpec};

    fn page(seed: u64, height: usize) -> RgbImage {
        generate_page(&PageSpec {
            width: 360,
            height,
            texture_density: 1.0,
            seed,
            viewport_height: 640,
        })
        .unwrap()
    }

    fn scroll(seed: u64, offsets: &[usize]) -> (Vec<Frame>, RgbImage) {
        let pg = page(seed, 2400);
        let (frames, _) = render_sequence(&pg, (360, 640), offsets, 48, 96, seed).unwrap();
        (frames, pg)
    }

    #[test]
    fn bars_are_found_within_one_strip() {
        let (frames, _) = scroll(1, &[0, 250]);
        let p = StitchParams::default();
        let (top, bot) = detect_common_bars(&frames[0].pixels, &frames[1].pixels, &p).unwrap();
        assert!(top.abs_diff(48) <= p.strip_height, "top {top}");
        assert!(bot.abs_diff(96) <= p.strip_height, "bot {bot}");
    }

    #[test]
    fn identical_frames_hit_the_bar_cap() {
        let (frames, _) = scroll(2, &[0]);
        let bars = detect_common_bars(&frames[0].pixels, &frames[0].pixels, &StitchParams::default()).unwrap();
        assert_eq!(bars, (160, 160));
    }

    #[test]
    fn unrelated_images_share_no_bars() {
        let a = rows(&page(3, 1400), 0, 640);
        let b = rows(&page(4, 1400), 0, 640);
        assert_eq!(detect_common_bars(&a, &b, &StitchParams::default()).unwrap(), (0, 0));
        let narrow = RgbImage::new(200, 640);
        assert!(detect_common_bars(&a, &narrow, &StitchParams::default()).is_err());
    }

    #[test]
    fn pair_with_known_offset() {
        let pg = page(5, 2000);
        let a = rows(&pg, 0, 700);
        let b = rows(&pg, 300, 1000);
        let r = stitch_pair(&a, &b, &StitchParams::default()).expect("overlap found");
        assert!((r.y_pos - 300).abs() <= 2, "y_pos {}", r.y_pos);
        assert_eq!(r.pixels.height() as i64, 700 + 700 - (700 - r.y_pos));
        assert_eq!(r.pixels, rows(&pg, 0, 1000));
    }

    #[test]
    fn unrelated_pair_does_not_stitch() {
        let a = rows(&page(6, 1400), 0, 500);
        let b = rows(&page(7, 1400), 0, 500);
        assert!(stitch_pair(&a, &b, &StitchParams::default()).is_none());
    }

    #[test]
    fn duplicate_pair_does_not_stitch() {
        let a = rows(&page(8, 1400), 100, 600);
        assert!(stitch_pair(&a, &a.clone(), &StitchParams::default()).is_none());
    }

    #[test]
    fn continuous_scroll_becomes_one_image() {
        let offsets = [0, 250, 500, 750];
        let (frames, pg) = scroll(9, &offsets);
        let out = stitch_batch(&frames, &StitchParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        let s = &out[0];
        assert_eq!(s.member_indices, vec![0, 1, 2, 3]);
        assert_eq!(s.seam_offsets.len(), 3);
        for (seam, &off) in s.seam_offsets.iter().zip(&offsets[1..]) {
            assert!((seam - off as i64).abs() <= 2);
        }
        let content = s.pixels.height() as usize - s.h_top - s.h_bot;
        let member_content = 4 * (640 - s.h_top - s.h_bot);
        let overlaps: usize = 3 * (640 - s.h_top - s.h_bot) - 750;
        assert_eq!(content, member_content - overlaps);
        // Content between the real bars reproduces the page window.
        let inner = rows(&s.pixels, 48, s.pixels.height() as usize - 96);
        assert_eq!(inner, rows(&pg, 0, 750 + 496));
    }

    #[test]
    fn app_switch_splits_the_batch() {
        let (mut frames, _) = scroll(10, &[0, 250]);
        let (other, _) = scroll(11, &[0]);
        frames.push(Frame::new(2, 2.0, other[0].pixels.clone()));
        let out = stitch_batch(&frames, &StitchParams::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].member_indices, vec![0, 1]);
        assert_eq!(out[1].member_indices, vec![2]);
    }

    #[test]
    fn single_frame_passes_through() {
        let (frames, _) = scroll(12, &[0]);
        let out = stitch_batch(&frames, &StitchParams::default()).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].pixels, frames[0].pixels);
        assert!(out[0].seam_offsets.is_empty());
        assert!(stitch_batch(&[], &StitchParams::default()).is_err());
    }

    #[test]
    fn params_validate() {
        assert!(StitchParams::default().validate().is_ok());
        for bad in [
            StitchParams { ratio_threshold: 1.0, ..Default::default() },
            StitchParams { knn_k: 1, ..Default::default() },
            StitchParams { min_matches: 3, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
