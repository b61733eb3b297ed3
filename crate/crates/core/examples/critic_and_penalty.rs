//! Critic scores for real and generated batches and the WGAN-GP loss terms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stylemel::autodiff::Var;
use stylemel::dataset::{next_batch, toy::toy_cache};
use stylemel::discriminator::{Discriminator, DiscriminatorConfig};
use stylemel::training::{discriminator_loss, generator_loss, gradient_penalty};

fn main() -> stylemel::Result<()> {
    let cache = toy_cache(16, 1);
    let batch = next_batch(&cache, 8, 16, 2)?;
    let d = Discriminator::<f32>::new(
        DiscriminatorConfig {
            num_classes: 2,
            embed_dim: 4,
            channels: 8,
            max_resolution: 16,
        },
        3,
    )?;
    let fake = batch.mels.map(|v| -v);
    let p = d.params.bind(true);
    let real_s = d.forward(&p, &Var::constant(batch.mels.clone()), &batch.labels, 16, 1.0)?;
    let fake_s = d.forward(&p, &Var::constant(fake.clone()), &batch.labels, 16, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f64> = (0..8).map(|_| rand::Rng::gen(&mut rng)).collect();
    let gp = gradient_penalty(|x| d.forward(&p, x, &batch.labels, 16, 1.0), &batch.mels, &fake, &u, 10.0)?;
    let loss = discriminator_loss(&real_s, &fake_s, &gp, 0.001);
    println!("real scores {:?}", real_s.value().data());
    println!("gradient penalty {:.4}", gp.value().item());
    println!("critic loss {:.4}, generator loss {:.4}", loss.value().item(), generator_loss(&fake_s).value().item());
    let grads = p.grads(&loss);
    println!("{} of {} parameters receive gradients", grads.iter().flatten().count(), grads.len());
    Ok(())
}
