//! Seeded synthetic app pages and scroll recordings with known ground truth.
//!
//! A page is a tall, textured image standing in for a scrolling feed. Frames
//! are rendered as a fixed status bar, a viewport window into the page and a
//! fixed navigation bar, so every offset, bar height, duplicate and blurred
//! frame is known exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{is_blurry, rgb_to_gray};
use crate::ingest::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageSpec {
    pub width: usize,
    pub height: usize,
    /// Fraction of layout blocks that receive content, in `[0, 1]`.
    pub texture_density: f64,
    pub seed: u64,
    /// Full frame height the page will be viewed through.
    pub viewport_height: usize,
}

/// Ground truth for one rendered (and possibly corrupted) sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    /// The full page, kept in memory only; written as `truth/page.png`.
    #[serde(skip)]
    pub page: Option<RgbImage>,
    /// Frame size `(W, H)` including bars.
    pub viewport: (usize, usize),
    pub page_size: (usize, usize),
    /// Offsets of the original, uncorrupted frames.
    pub scroll_offsets: Vec<usize>,
    pub h_top: usize,
    pub h_bot: usize,
    /// Page offset shown by every frame of the current sequence.
    pub frame_offsets: Vec<usize>,
    /// Distinct-screen id of every frame.
    pub screen_of: Vec<usize>,
    /// Inserted duplicate frame index -> page offset it copies.
    pub duplicate_map: BTreeMap<usize, usize>,
    pub blur_indices: BTreeSet<usize>,
    pub distinct_screens: usize,
    /// Reference description used when scoring downstream summaries.
    pub label: String,
    pub seed: u64,
}

impl SyntheticTruth {
    pub fn content_height(&self) -> usize {
        self.viewport.1 - self.h_top - self.h_bot
    }
}

/// Default phone-like frame geometry used across tests and the CLI.
pub const DEFAULT_VIEWPORT: (usize, usize) = (360, 640);
pub const DEFAULT_H_TOP: usize = 48;
pub const DEFAULT_H_BOT: usize = 96;

fn rgb(rng: &mut ChaCha8Rng) -> Rgb<u8> {
    Rgb([rng.random(), rng.random(), rng.random()])
}

fn contrasting(rng: &mut ChaCha8Rng, bg: Rgb<u8>) -> Rgb<u8> {
    let luma = |c: Rgb<u8>| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64;
    loop {
        let c = rgb(rng);
        if (luma(c) - luma(bg)).abs() > 60.0 {
            return c;
        }
    }
}

fn fill_rect(img: &mut RgbImage, x: i64, y: i64, w: i64, h: i64, color: Rgb<u8>) {
    let (iw, ih) = (img.width() as i64, img.height() as i64);
    for yy in y.max(0)..(y + h).min(ih) {
        for xx in x.max(0)..(x + w).min(iw) {
            img.put_pixel(xx as u32, yy as u32, color);
        }
    }
}

fn fill_circle(img: &mut RgbImage, cx: i64, cy: i64, r: i64, color: Rgb<u8>) {
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                fill_rect(img, cx + dx, cy + dy, 1, 1, color);
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), t: i64, color: Rgb<u8>) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for s in 0..=steps {
        let x = x0 + (x1 - x0) * s / steps;
        let y = y0 + (y1 - y0) * s / steps;
        fill_rect(img, x, y, t, t, color);
    }
}

/// A row of random 5x7 glyphs at `scale` pixels per glyph cell.
fn text_line(img: &mut RgbImage, rng: &mut ChaCha8Rng, x0: i64, y0: i64, max_w: i64, scale: i64, color: Rgb<u8>) {
    let glyph_w = 6 * scale;
    let n = rng.random_range((max_w / glyph_w / 3).max(1)..=(max_w / glyph_w).max(1));
    let mut x = x0;
    for _ in 0..n {
        if rng.random_bool(0.15) {
            // word gap
            x += glyph_w;
            continue;
        }
        let bits: u64 = rng.random();
        for gy in 0..7 {
            for gx in 0..5 {
                if bits >> (gy * 5 + gx) & 1 == 1 {
                    fill_rect(img, x + gx * scale, y0 + gy * scale, scale, scale, color);
                }
            }
        }
        x += glyph_w;
        if x + glyph_w > x0 + max_w {
            break;
        }
    }
}

/// Generates a tall page of stacked feed blocks (text, media collages, list
/// rows) over a faintly noisy background.
pub fn generate_page(spec: &PageSpec) -> Result<RgbImage> {
    if spec.width < 32 || spec.height == 0 || spec.viewport_height == 0 {
        return Err(Error::InvalidParam(format!(
            "degenerate page {}x{}",
            spec.width, spec.height
        )));
    }
    if spec.height < 2 * spec.viewport_height {
        return Err(Error::InvalidParam(format!(
            "page height {} is less than twice the viewport height {}",
            spec.height, spec.viewport_height
        )));
    }
    if !(0.0..=1.0).contains(&spec.texture_density) {
        return Err(Error::InvalidParam("texture_density must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bg_level: u8 = rng.random_range(200..=245);
    let mut page = RgbImage::from_fn(spec.width as u32, spec.height as u32, |_, _| {
        let v = bg_level.saturating_add_signed(rng.random_range(-3..=3));
        Rgb([v, v, v])
    });
    let bg = Rgb([bg_level; 3]);
    let (w, h) = (spec.width as i64, spec.height as i64);

    let mut y = rng.random_range(4..24);
    while y < h {
        let block_h = rng.random_range(60..200);
        if rng.random_bool(spec.texture_density) {
            match rng.random_range(0..3) {
                0 => {
                    let ink = contrasting(&mut rng, bg);
                    let scale = rng.random_range(2..=3);
                    let mut ty = y;
                    while ty + 8 * scale < y + block_h {
                        text_line(&mut page, &mut rng, 12, ty, w - 24, scale, ink);
                        ty += 10 * scale;
                    }
                }
                1 => {
                    let card = rgb(&mut rng);
                    fill_rect(&mut page, 8, y, w - 16, block_h - 8, card);
                    let title = contrasting(&mut rng, card);
                    text_line(&mut page, &mut rng, 16, y + 6, w - 32, 2, title);
                    for _ in 0..rng.random_range(block_h / 12..block_h / 6) {
                        let c = contrasting(&mut rng, card);
                        let (sx, sy) = (rng.random_range(8..w - 8), rng.random_range(y..y + block_h - 8));
                        match rng.random_range(0..3) {
                            0 => fill_rect(&mut page, sx, sy, rng.random_range(8..60), rng.random_range(6..40), c),
                            1 => fill_circle(&mut page, sx, sy, rng.random_range(4..20), c),
                            _ => {
                                let end = (rng.random_range(8..w - 8), rng.random_range(y..y + block_h));
                                draw_line(&mut page, (sx, sy), end, rng.random_range(1..4), c);
                            }
                        }
                    }
                }
                _ => {
                    let ink = contrasting(&mut rng, bg);
                    let mut ry = y;
                    while ry + 40 < y + block_h {
                        let icon = rgb(&mut rng);
                        fill_circle(&mut page, 28, ry + 18, 14, icon);
                        text_line(&mut page, &mut rng, 56, ry + 4, w - 72, 2, ink);
                        draw_line(&mut page, (56, ry + 36), (w - 12, ry + 36), 1, ink);
                        ry += 44;
                    }
                }
            }
        }
        y += block_h + rng.random_range(4..16);
    }
    Ok(page)
}

fn render_bar(rng: &mut ChaCha8Rng, width: usize, height: usize, top: bool) -> RgbImage {
    let bg = if top { Rgb([30, 30, 36]) } else { Rgb([245, 245, 250]) };
    let mut bar = RgbImage::from_pixel(width as u32, height as u32, bg);
    let ink = contrasting(rng, bg);
    let (w, h) = (width as i64, height as i64);
    if top {
        text_line(&mut bar, rng, 10, (h - 14) / 2, 60, 2, ink);
        for i in 0..4 {
            fill_rect(&mut bar, w - 20 - i * 18, h / 2 - 5 + i % 2 * 2, 12, 10, ink);
        }
    } else {
        let step = w / 4;
        fill_circle(&mut bar, step, h / 2, 12, ink);
        fill_rect(&mut bar, 2 * step - 11, h / 2 - 11, 22, 22, ink);
        draw_line(&mut bar, (3 * step - 10, h / 2), (3 * step + 10, h / 2 - 12), 3, ink);
        draw_line(&mut bar, (3 * step - 10, h / 2), (3 * step + 10, h / 2 + 12), 3, ink);
        text_line(&mut bar, rng, 8, 6, w - 16, 1, ink);
    }
    bar
}

/// Renders one frame per offset: status bar, page window, navigation bar.
pub fn render_sequence(
    page: &RgbImage,
    viewport: (usize, usize),
    offsets: &[usize],
    h_top: usize,
    h_bot: usize,
    seed: u64,
) -> Result<(Vec<Frame>, SyntheticTruth)> {
    let (vw, vh) = viewport;
    if vw != page.width() as usize {
        return Err(Error::InvalidParam(format!(
            "viewport width {vw} differs from page width {}",
            page.width()
        )));
    }
    if h_top + h_bot >= vh {
        return Err(Error::InvalidParam("bars leave no content rows".into()));
    }
    let content_h = vh - h_top - h_bot;
    if let Some(&bad) = offsets.iter().find(|&&o| o + content_h > page.height() as usize) {
        return Err(Error::InvalidParam(format!(
            "offset {bad} runs past the page bottom ({} rows)",
            page.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba5e_ba11);
    let top = render_bar(&mut rng, vw, h_top, true);
    let bot = render_bar(&mut rng, vw, h_bot, false);

    let frames = offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| {
            let px = RgbImage::from_fn(vw as u32, vh as u32, |x, y| {
                let y = y as usize;
                if y < h_top {
                    *top.get_pixel(x, y as u32)
                } else if y >= vh - h_bot {
                    *bot.get_pixel(x, (y - (vh - h_bot)) as u32)
                } else {
                    *page.get_pixel(x, (off + y - h_top) as u32)
                }
            });
            Frame::new(i, i as f64, px)
        })
        .collect();

    let truth = SyntheticTruth {
        page: Some(page.clone()),
        viewport,
        page_size: (page.width() as usize, page.height() as usize),
        scroll_offsets: offsets.to_vec(),
        h_top,
        h_bot,
        frame_offsets: offsets.to_vec(),
        screen_of: (0..offsets.len()).collect(),
        duplicate_map: BTreeMap::new(),
        blur_indices: BTreeSet::new(),
        distinct_screens: offsets.len(),
        label: format!(
            "Scrolled through synthetic page {seed} across {} screens",
            offsets.len()
        ),
        seed,
    };
    Ok((frames, truth))
}

/// Separable box blur with replicated borders.
pub fn box_blur(img: &RgbImage, radius: usize) -> RgbImage {
    if radius == 0 {
        return img.clone();
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
    let r = radius as i64;
    let n = (2 * r + 1) as f64;
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                tmp[(y * w + x) * 3 + c] = (-r..=r)
                    .map(|d| src[(y * w + clamp(x as i64 + d, w)) * 3 + c])
                    .sum::<f64>()
                    / n;
            }
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (-r..=r)
                    .map(|d| tmp[(clamp(y as i64 + d, h) * w + x) * 3 + c])
                    .sum::<f64>()
                    / n;
                out[(y * w + x) * 3 + c] = v.round() as u8;
            }
        }
    }
    RgbImage::from_raw(w as u32, h as u32, out).expect("buffer sized for dimensions")
}

/// Blur threshold the corruption step verifies against.
pub const BLUR_GAMMA: f64 = 100.0;

/// Box-blurs `img`, escalating the radius until the result is blurry at `gamma`.
pub fn blur_until_blurry(img: &RgbImage, gamma: f64) -> (RgbImage, usize) {
    let mut radius = 2;
    loop {
        let out = box_blur(img, radius);
        if is_blurry(&rgb_to_gray(&out), gamma) || radius >= img.width().max(img.height()) as usize {
            return (out, radius);
        }
        radius += 1;
    }
}

fn jitter(img: &RgbImage, rng: &mut ChaCha8Rng, amplitude: i16) -> RgbImage {
    let mut out = img.clone();
    for v in out.iter_mut() {
        *v = (*v as i16 + rng.random_range(-amplitude..=amplitude)).clamp(0, 255) as u8;
    }
    out
}

/// Inserts near-duplicate copies and blurred copies of existing frames.
///
/// Duplicates (faint pixel jitter) go directly after their anchor; blurred
/// copies follow the anchor's duplicates, like motion blur as the user
/// scrolls away. Each original frame receives at most one blurred copy.
pub fn corrupt_sequence(
    frames: &[Frame],
    truth: &SyntheticTruth,
    dup_count: usize,
    blur_count: usize,
    seed: u64,
) -> Result<(Vec<Frame>, SyntheticTruth)> {
    let n = frames.len();
    if n == 0 || n != truth.frame_offsets.len() {
        return Err(Error::InvalidParam("frames and truth disagree".into()));
    }
    if dup_count > 3 * n || blur_count > n {
        return Err(Error::InvalidParam(format!(
            "cannot insert {dup_count} duplicates and {blur_count} blurred frames into {n} frames"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dups_per_anchor = vec![0usize; n];
    for _ in 0..dup_count {
        loop {
            let a = rng.random_range(0..n);
            if dups_per_anchor[a] < 3 {
                dups_per_anchor[a] += 1;
                break;
            }
        }
    }
    let mut blurred = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    order.iter().take(blur_count).for_each(|&a| blurred[a] = true);

    let mut out = Vec::with_capacity(n + dup_count + blur_count);
    let mut next = truth.clone();
    next.frame_offsets.clear();
    next.screen_of.clear();
    next.duplicate_map.clear();
    next.blur_indices.clear();

    let push = |px: RgbImage, anchor: usize, out: &mut Vec<Frame>, next: &mut SyntheticTruth| {
        let i = out.len();
        out.push(Frame::new(i, i as f64, px));
        next.frame_offsets.push(truth.frame_offsets[anchor]);
        next.screen_of.push(truth.screen_of[anchor]);
        i
    };
    for a in 0..n {
        push(frames[a].pixels.clone(), a, &mut out, &mut next);
        for _ in 0..dups_per_anchor[a] {
            let px = jitter(&frames[a].pixels, &mut rng, 2);
            let i = push(px, a, &mut out, &mut next);
            next.duplicate_map.insert(i, truth.frame_offsets[a]);
        }
        if blurred[a] {
            let (px, _) = blur_until_blurry(&frames[a].pixels, BLUR_GAMMA);
            let i = push(px, a, &mut out, &mut next);
            next.blur_indices.insert(i);
        }
    }
    Ok((out, next))
}

/// Shape of one synthetic trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub viewport: (usize, usize),
    pub h_top: usize,
    pub h_bot: usize,
    pub min_screens: usize,
    pub max_screens: usize,
    /// Scroll step between screens as a fraction of the content height.
    pub min_step_frac: f64,
    pub max_step_frac: f64,
    pub texture_density: f64,
    pub dup_per_screen: usize,
    /// Probability that a screen also gets a blurred copy.
    pub blur_prob: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            viewport: DEFAULT_VIEWPORT,
            h_top: DEFAULT_H_TOP,
            h_bot: DEFAULT_H_BOT,
            min_screens: 4,
            max_screens: 8,
            min_step_frac: 0.45,
            max_step_frac: 0.9,
            texture_density: 0.9,
            dup_per_screen: 1,
            blur_prob: 0.3,
        }
    }
}

impl TrajectorySpec {
    /// Uncorrupted scroll recordings for stitching: 30-70% overlap.
    pub fn scroll() -> Self {
        Self {
            min_screens: 4,
            max_screens: 8,
            min_step_frac: 0.3,
            max_step_frac: 0.7,
            texture_density: 1.0,
            dup_per_screen: 0,
            blur_prob: 0.0,
            ..Self::default()
        }
    }
}

/// Random scroll offsets with steps drawn from the spec, starting at 0.
pub fn random_offsets(rng: &mut ChaCha8Rng, spec: &TrajectorySpec, screens: usize) -> Vec<usize> {
    let content_h = spec.viewport.1 - spec.h_top - spec.h_bot;
    let mut offsets = vec![0usize];
    while offsets.len() < screens {
        let frac = rng.random_range(spec.min_step_frac..=spec.max_step_frac);
        let step = ((content_h as f64 * frac).round() as usize).max(1);
        offsets.push(offsets.last().unwrap() + step);
    }
    offsets
}

/// Builds one page, scrolls through it and injects redundancy.
pub fn trajectory(spec: &TrajectorySpec, seed: u64) -> Result<(Vec<Frame>, SyntheticTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let screens = rng.random_range(spec.min_screens..=spec.max_screens);
    let offsets = random_offsets(&mut rng, spec, screens);
    let content_h = spec.viewport.1 - spec.h_top - spec.h_bot;
    let page_h = (offsets.last().unwrap() + content_h).max(2 * spec.viewport.1);
    let page = generate_page(&PageSpec {
        width: spec.viewport.0,
        height: page_h,
        texture_density: spec.texture_density,
        seed,
        viewport_height: spec.viewport.1,
    })?;
    let (frames, truth) = render_sequence(&page, spec.viewport, &offsets, spec.h_top, spec.h_bot, seed)?;
    let blur_count = (0..screens).filter(|_| rng.random_bool(spec.blur_prob)).count();
    if spec.dup_per_screen == 0 && blur_count == 0 {
        return Ok((frames, truth));
    }
    corrupt_sequence(&frames, &truth, spec.dup_per_screen * screens, blur_count, seed.wrapping_add(1))
}

/// Writes `frame_%06d.png` files and `truth.json`, plus `truth/page.png` when
/// the page is known (kept out of the frame directory so loaders skip it).
pub fn write_corpus_entry(dir: &Path, frames: &[Frame], truth: &SyntheticTruth) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for f in frames {
        let path = dir.join(format!("frame_{:06}.png", f.index));
        f.pixels
            .save(&path)
            .map_err(|source| Error::Encode { path, source })?;
    }
    if let Some(page) = &truth.page {
        let sub = dir.join("truth");
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let path = sub.join("page.png");
        page.save(&path).map_err(|source| Error::Encode { path, source })?;
    }
    let path = dir.join("truth.json");
    let json = serde_json::to_string_pretty(truth)?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_truth(dir: &Path) -> Result<SyntheticTruth> {
    let path = dir.join("truth.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut truth: SyntheticTruth = serde_json::from_str(&text)?;
    let page = dir.join("truth").join("page.png");
    if page.exists() {
        truth.page = Some(
            image::open(&page)
                .map_err(|source| Error::Decode { path: page, source })?
                .to_rgb8(),
        );
    }
    Ok(truth)
}
