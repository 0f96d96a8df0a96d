use groundpose::raster::ImageBuffer;
use groundpose::registration::poc_register;
use groundpose::synth::GroundTexture;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Texture rendered at one sample per pixel, 2 mm per pixel, with its
/// content translated by `(sx, sy)` pixels.
fn texture_at(n: usize, seed: u64, sx: f64, sy: f64) -> Vec<f32> {
    let tex = GroundTexture::floor(seed);
    (0..n * n)
        .map(|i| {
            let (x, y) = ((i % n) as f64 - sx, (i / n) as f64 - sy);
            tex.sample(2.0 * x, 2.0 * y) as f32
        })
        .collect()
}

fn texture(n: usize, seed: u64) -> Vec<f32> {
    texture_at(n, seed, 0.0, 0.0)
}

fn buffer(n: usize, data: Vec<f32>) -> ImageBuffer {
    ImageBuffer::new(n, n, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_consistency(seed in 0u64..10_000, sx in -31i64..32, sy in -31i64..32) {
        let n = 128;
        let a = texture(n, seed);
        let b = texture_at(n, seed, sx as f64, sy as f64);
        let fwd = poc_register(&buffer(n, a.clone()), &buffer(n, b.clone())).unwrap();
        let back = poc_register(&buffer(n, b), &buffer(n, a)).unwrap();
        prop_assert!((fwd.dx - sx as f64).abs() < 0.01 && (fwd.dy - sy as f64).abs() < 0.01, "{fwd:?}");
        prop_assert!((back.dx + sx as f64).abs() < 0.01 && (back.dy + sy as f64).abs() < 0.01, "{back:?}");
    }

    #[test]
    fn brightness_invariance(seed in 0u64..10_000, gain in 0.2f32..1.0, sx in -8i64..9, sy in -8i64..9) {
        let n = 64;
        let a = texture(n, seed);
        let b = texture_at(n, seed, sx as f64, sy as f64);
        let plain = poc_register(&buffer(n, a.clone()), &buffer(n, b.clone())).unwrap();
        let dim = poc_register(&buffer(n, a), &buffer(n, b.iter().map(|v| v * gain).collect())).unwrap();
        prop_assert!((plain.dx - dim.dx).abs() < 0.01 && (plain.dy - dim.dy).abs() < 0.01);
    }
}

#[test]
fn confidence_falls_with_noise() {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let levels = [0.0, 0.02, 0.05, 0.1, 0.2];
    let mut mean = vec![0.0; levels.len()];
    let trials = 30;
    for _ in 0..trials {
        let a = texture(n, rng.random());
        for (i, &sigma) in levels.iter().enumerate() {
            let noisy: Vec<f32> = if sigma > 0.0 {
                let normal = Normal::new(0.0, sigma).unwrap();
                a.iter()
                    .map(|&v| (v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32)
                    .collect()
            } else {
                a.clone()
            };
            mean[i] += poc_register(&buffer(n, a.clone()), &buffer(n, noisy))
                .unwrap()
                .confidence
                / trials as f64;
        }
    }
    for w in mean.windows(2) {
        assert!(w[1] <= w[0], "{mean:?}");
    }
}
