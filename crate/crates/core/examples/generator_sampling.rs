//! Samples from an untrained generator: class conditioning, style mixing and
//! the fade between resolutions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stylemel::generator::{Generator, GeneratorConfig};

fn main() -> stylemel::Result<()> {
    let cfg = GeneratorConfig {
        num_classes: 10,
        latent_dim: 32,
        w_dim: 32,
        embed_dim: 8,
        mapping_layers: 4,
        channels: 16,
        max_resolution: 32,
    };
    let g = Generator::<f32>::new(cfg, 1)?;
    println!("{} parameters", g.params.num_elements());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = g.sample_latents(4, &mut rng);
    let labels = [0, 3, 7, 9];

    for (res, alpha) in [(8, 1.0), (16, 0.0), (16, 0.5), (16, 1.0), (32, 1.0)] {
        let noise = g.sample_noise(4, res, &mut ChaCha8Rng::seed_from_u64(3));
        let out = g.generate(&z, &labels, &noise, res, alpha)?;
        let d = out.data();
        let mean = d.iter().sum::<f32>() / d.len() as f32;
        println!("{res:>2}x{res:<2} alpha {alpha:.1}: shape {:?}, mean {mean:+.4}", out.shape());
    }

    // Coarse styles from one latent, fine styles from another.
    let p = g.params.bind(false);
    let w1 = g.map(&p, &z, &labels)?;
    let w2 = g.map(&p, &g.sample_latents(4, &mut rng), &labels)?;
    let blocks = g.active_blocks(32);
    let styles = stylemel::generator::style_mix(&w1, &w2, 2, blocks);
    let noise = g.sample_noise(4, 32, &mut rng);
    let mixed = g.synthesis_forward(&p, &styles, &noise, 32, 1.0)?;
    println!("mixed output {:?}", mixed.shape());
    Ok(())
}
