//! Oriented FAST corners with steered binary descriptors.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StitchParams;
use crate::error::{Error, Result};
use crate::imgproc::GrayImage;

/// Smallest image side accepted by [`orb_features`].
pub const MIN_FEATURE_SIDE: usize = 32;
/// Radius of the descriptor patch; keypoints stay this far plus one from the border.
pub const PATCH_RADIUS: i64 = 15;
const BORDER: usize = PATCH_RADIUS as usize + 1;
const PATTERN_SEED: u64 = 0x0b21_ef00;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    /// Radians, from the intensity centroid.
    pub orientation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Descriptor {
    pub bits: [u64; 4],
    pub keypoint: Keypoint,
}

impl Descriptor {
    pub fn distance(&self, other: &Descriptor) -> u32 {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

// Bresenham circle of radius 3, clockwise from 12 o'clock.
const CIRCLE: [(i64, i64); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

fn has_arc(states: &[i8; 16], want: i8) -> bool {
    let mut run = 0;
    for i in 0..32 {
        if states[i % 16] == want {
            run += 1;
            if run >= 9 {
                return true;
            }
        } else {
            run = 0;
        }
    }
    false
}

/// FAST-9 response at `(x, y)`, or 0 when the pixel is not a corner.
fn fast_score(g: &GrayImage, x: usize, y: usize, t: f64) -> f64 {
    let p = g.get(x, y);
    let mut states = [0i8; 16];
    let (mut bright, mut dark) = (0.0, 0.0);
    for (s, &(dx, dy)) in states.iter_mut().zip(&CIRCLE) {
        let v = g.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
        if v > p + t {
            *s = 1;
            bright += v - p - t;
        } else if v < p - t {
            *s = -1;
            dark += p - v - t;
        }
    }
    if has_arc(&states, 1) || has_arc(&states, -1) {
        bright.max(dark)
    } else {
        0.0
    }
}

/// FAST-9 corners with 3x3 non-maximum suppression, strongest first,
/// with the budget spread over a coarse grid.
pub fn fast_corners(g: &GrayImage, threshold: f64, max_features: usize) -> Vec<(usize, usize, f64)> {
    let (w, h) = g.dims();
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Vec::new();
    }
    let mut scores = vec![0.0; w * h];
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            scores[y * w + x] = fast_score(g, x, y, threshold);
        }
    }
    let mut corners = Vec::new();
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let s = scores[y * w + x];
            if s <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let n = scores[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
                    // Earlier neighbours must be strictly weaker so plateaus keep one point.
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > s || (earlier && n == s) {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                corners.push((x, y, s));
            }
        }
    }
    distribute(corners, w, h, max_features)
}

/// Side of the cells that share the feature budget.
pub const GRID_CELL: usize = 64;

fn by_strength(a: &(usize, usize, f64), b: &(usize, usize, f64)) -> std::cmp::Ordering {
    b.2.total_cmp(&a.2).then((a.1, a.0).cmp(&(b.1, b.0)))
}

// Plain top-N by response lets a few busy regions take the whole budget,
// leaving the overlap band empty. Each grid cell first gets an equal quota;
// leftover budget goes to the strongest remaining corners anywhere.
fn distribute(mut corners: Vec<(usize, usize, f64)>, w: usize, h: usize, max_features: usize) -> Vec<(usize, usize, f64)> {
    corners.sort_by(by_strength);
    if corners.len() <= max_features {
        return corners;
    }
    let cols = w.div_ceil(GRID_CELL);
    let cells = cols * h.div_ceil(GRID_CELL);
    let quota = (max_features / cells).max(1);
    let mut used = vec![0usize; cells];
    let (mut picked, mut rest) = (Vec::with_capacity(max_features), Vec::new());
    for c in corners {
        let cell = (c.1 / GRID_CELL) * cols + c.0 / GRID_CELL;
        if used[cell] < quota && picked.len() < max_features {
            used[cell] += 1;
            picked.push(c);
        } else {
            rest.push(c);
        }
    }
    let room = max_features - picked.len();
    picked.extend(rest.into_iter().take(room));
    picked.sort_by(by_strength);
    picked
}

fn intensity_centroid_angle(g: &GrayImage, x: usize, y: usize) -> f64 {
    let (mut m10, mut m01) = (0.0, 0.0);
    for dy in -PATCH_RADIUS..=PATCH_RADIUS {
        for dx in -PATCH_RADIUS..=PATCH_RADIUS {
            if dx * dx + dy * dy > PATCH_RADIUS * PATCH_RADIUS {
                continue;
            }
            let v = g.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
            m10 += dx as f64 * v;
            m01 += dy as f64 * v;
        }
    }
    m01.atan2(m10)
}

/// The fixed 256-pair sampling pattern, points inside the patch disc.
pub fn brief_pattern() -> &'static [[(f64, f64); 2]; 256] {
    static PATTERN: OnceLock<[[(f64, f64); 2]; 256]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(PATTERN_SEED);
        let r = PATCH_RADIUS as f64;
        let mut point = move || loop {
            let (x, y) = (rng.random_range(-r..=r), rng.random_range(-r..=r));
            if x * x + y * y <= r * r {
                return (x, y);
            }
        };
        let mut pattern = [[(0.0, 0.0); 2]; 256];
        for pair in pattern.iter_mut() {
            *pair = [point(), point()];
        }
        pattern
    })
}

// Separable [1 4 6 4 1] / 16 smoothing with replicated borders.
fn smooth(g: &GrayImage) -> GrayImage {
    const K: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];
    let (w, h) = g.dims();
    let at = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let horiz = GrayImage::from_fn(w, h, |x, y| {
        (0..5).map(|k| K[k] * g.get(at(x as i64 + k as i64 - 2, w), y)).sum::<f64>() / 16.0
    });
    GrayImage::from_fn(w, h, |x, y| {
        (0..5).map(|k| K[k] * horiz.get(x, at(y as i64 + k as i64 - 2, h))).sum::<f64>() / 16.0
    })
}

/// Detects up to `max_features` oriented corners and describes each with a
/// 256-bit steered BRIEF string.
pub fn orb_features(g: &GrayImage, p: &StitchParams) -> Result<Vec<Descriptor>> {
    let (w, h) = g.dims();
    if w < MIN_FEATURE_SIDE || h < MIN_FEATURE_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_FEATURE_SIDE,
        });
    }
    let corners = fast_corners(g, p.fast_threshold, p.max_features);
    if corners.is_empty() {
        return Ok(Vec::new());
    }
    let smoothed = smooth(g);
    let pattern = brief_pattern();
    Ok(corners
        .into_iter()
        .map(|(x, y, score)| {
            let theta = intensity_centroid_angle(g, x, y);
            let (sin, cos) = theta.sin_cos();
            let sample = |(px, py): (f64, f64)| {
                let rx = (cos * px - sin * py).round() as i64;
                let ry = (sin * px + cos * py).round() as i64;
                smoothed.get((x as i64 + rx) as usize, (y as i64 + ry) as usize)
            };
            let mut bits = [0u64; 4];
            for (i, [a, b]) in pattern.iter().enumerate() {
                if sample(*a) < sample(*b) {
                    bits[i / 64] |= 1 << (i % 64);
                }
            }
            Descriptor {
                bits,
                keypoint: Keypoint {
                    x: x as f64,
                    y: y as f64,
                    score,
                    orientation: theta,
                },
            }
        })
        .collect())
}
