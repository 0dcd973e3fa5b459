//! Area-averaging (box) resampler.
//!
//! Each output pixel is the coverage-weighted mean of the source pixels its
//! footprint overlaps. Weights along each axis are normalized to sum to one,
//! so constant inputs stay exactly constant.

/// Per-output-sample list of `(source index, weight)`.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let start = i as f64 * scale;
            let end = (i + 1) as f64 * scale;
            let first = start.floor() as usize;
            let last = (end.ceil() as usize).min(src);
            let mut taps: Vec<(usize, f64)> = (first..last)
                .filter_map(|j| {
                    let overlap = (end.min(j as f64 + 1.0) - start.max(j as f64)).max(0.0);
                    (overlap > 0.0).then_some((j, overlap))
                })
                .collect();
            if taps.is_empty() {
                taps.push((first.min(src - 1), 1.0));
            }
            let total: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= total);
            taps
        })
        .collect()
}

/// Resamples an interleaved `channels`-plane buffer of `w` x `h` to `new_w` x `new_h`.
pub fn resample_area(
    src: &[f64],
    w: usize,
    h: usize,
    channels: usize,
    new_w: usize,
    new_h: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), w * h * channels);
    assert!(new_w > 0 && new_h > 0 && w > 0 && h > 0);
    let wx = axis_weights(w, new_w);
    let wy = axis_weights(h, new_h);

    // Horizontal pass: h rows of new_w samples.
    let mut tmp = vec![0.0; h * new_w * channels];
    for y in 0..h {
        let row = &src[y * w * channels..(y + 1) * w * channels];
        for (x, taps) in wx.iter().enumerate() {
            for c in 0..channels {
                tmp[(y * new_w + x) * channels + c] =
                    taps.iter().map(|&(j, wt)| row[j * channels + c] * wt).sum();
            }
        }
    }

    let mut out = vec![0.0; new_h * new_w * channels];
    for (y, taps) in wy.iter().enumerate() {
        let dst = &mut out[y * new_w * channels..(y + 1) * new_w * channels];
        for &(j, wt) in taps {
            let srow = &tmp[j * new_w * channels..(j + 1) * new_w * channels];
            dst.iter_mut().zip(srow).for_each(|(d, s)| *d += s * wt);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for (src, dst) in [(10, 3), (3, 10), (1080, 512), (16, 32), (7, 7)] {
            for taps in axis_weights(src, dst) {
                let s: f64 = taps.iter().map(|t| t.1).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_to_one_averages_pairs() {
        let out = resample_area(&[0.0, 10.0, 20.0, 40.0], 4, 1, 1, 2, 1);
        assert_eq!(out, vec![5.0, 30.0]);
    }

    #[test]
    fn fractional_footprints() {
        // 3 -> 2: each output covers 1.5 source pixels.
        let out = resample_area(&[0.0, 30.0, 60.0], 3, 1, 1, 2, 1);
        assert!((out[0] - 10.0).abs() < 1e-12);
        assert!((out[1] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn upsampling_replicates() {
        let out = resample_area(&[1.0, 2.0], 1, 2, 1, 1, 4);
        assert_eq!(out, vec![1.0, 1.0, 2.0, 2.0]);
    }
}
