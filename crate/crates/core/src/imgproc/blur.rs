use super::GrayImage;

/// Population variance of the 4-neighbour Laplacian response, with replicated
/// borders. Images smaller than 3x3 score 0.
pub fn laplacian_variance(g: &GrayImage) -> f64 {
    let (w, h) = g.dims();
    if w < 3 || h < 3 {
        return 0.0;
    }
    let responses: Vec<f64> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| response(g, x, y))
        .collect();
    let n = responses.len() as f64;
    let mean = responses.iter().sum::<f64>() / n;
    responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
}

#[inline]
fn response(g: &GrayImage, x: usize, y: usize) -> f64 {
    let (w, h) = g.dims();
    let up = g.get(x, y.saturating_sub(1));
    let down = g.get(x, (y + 1).min(h - 1));
    let left = g.get(x.saturating_sub(1), y);
    let right = g.get((x + 1).min(w - 1), y);
    up + down + left + right - 4.0 * g.get(x, y)
}

/// `true` when the Laplacian variance falls strictly below `threshold`.
pub fn is_blurry(g: &GrayImage, threshold: f64) -> bool {
    laplacian_variance(g) < threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn impulse() -> GrayImage {
        GrayImage::from_fn(3, 3, |x, y| if (x, y) == (1, 1) { 9.0 } else { 0.0 })
    }

    #[test]
    fn constant_image_has_zero_variance() {
        let g = GrayImage::filled(20, 11, 123.0);
        assert_eq!(laplacian_variance(&g), 0.0);
        assert!(is_blurry(&g, 100.0));
    }

    #[test]
    fn impulse_matches_hand_convolution() {
        // Responses: corners 0, edges 9, centre -36; mean 0.
        assert_eq!(laplacian_variance(&impulse()), 180.0);
        assert!(!is_blurry(&impulse(), 100.0));
    }

    #[test]
    fn threshold_boundary_keeps_equal_values() {
        let v = laplacian_variance(&impulse());
        assert!(!is_blurry(&impulse(), v));
        assert!(is_blurry(&impulse(), v + 1e-9));
    }

    #[test]
    fn tiny_images_score_zero() {
        assert_eq!(laplacian_variance(&GrayImage::from_fn(2, 5, |x, y| (x * y) as f64)), 0.0);
    }

    #[test]
    fn white_noise_is_sharp() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GrayImage::from_fn(64, 64, |_, _| rng.random_range(0.0..255.0));
        // Uniform noise has variance ~5419; the 4-neighbour stencil has
        // squared-tap sum 20, so the response variance is ~1e5.
        let v = laplacian_variance(&g);
        assert!(v > 50_000.0, "{v}");
    }

    #[test]
    fn linear_ramp_has_constant_interior_response() {
        // Interior responses are 0 for a ramp; only border replication differs.
        let g = GrayImage::from_fn(10, 10, |x, _| 10.0 * x as f64);
        let v = laplacian_variance(&g);
        assert!(v > 0.0 && v < 100.0 * 4.0);
    }
}
