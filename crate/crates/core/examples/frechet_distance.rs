//! Fréchet distance between Gaussian fits of two activation sets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stylemel::evaluation::{activation_stats, frechet_distance};

fn draw(n: usize, d: usize, shift: f64, spread: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(shift, spread).unwrap();
    (0..n).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect()
}

fn main() -> stylemel::Result<()> {
    let real = activation_stats(&draw(4000, 8, 0.0, 1.0, 1))?;
    for (shift, spread) in [(0.0, 1.0), (0.5, 1.0), (0.0, 2.0), (1.0, 0.5)] {
        let other = activation_stats(&draw(4000, 8, shift, spread, 2))?;
        // Expected: d * (shift^2 + (spread - 1)^2).
        let expected = 8.0 * (shift * shift + (spread - 1.0f64).powi(2));
        println!(
            "shift {shift:.1} spread {spread:.1}: fd {:.4} (population value {expected:.4})",
            frechet_distance(&real, &other)?
        );
    }
    println!("fd(a, a) = {}", frechet_distance(&real, &real)?);
    Ok(())
}
