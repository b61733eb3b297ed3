//! Prints the progressive-growing schedule of the full configuration.

use stylemel::training::{schedule_state, segments, TrainingConfig};

fn main() -> stylemel::Result<()> {
    let cfg = TrainingConfig::full();
    let segs = segments(&cfg);
    for (i, &(res, phase, start, len)) in segs.iter().enumerate() {
        // The final stabilization runs to the end of training.
        let end = if i + 1 == segs.len() { cfg.total_samples } else { start + len };
        let st = schedule_state(start, &cfg)?;
        println!(
            "{res:>3}x{res:<3} {phase:?}: samples {start:>9} .. {end:>9}  batch {:>3}  lr {}",
            st.batch_size, st.learning_rate
        );
    }
    let mid = schedule_state(1_500_000, &cfg)?;
    println!("at 1.5M samples: {}x{} alpha {:.3}", mid.resolution, mid.resolution, mid.alpha);
    Ok(())
}
