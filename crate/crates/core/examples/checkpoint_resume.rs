//! Interrupts a short run, resumes it from its last checkpoint and confirms
//! the result matches an uninterrupted run.

use stylemel::dataset::toy::toy_cache;
use stylemel::training::{run_training, TrainingConfig, METRICS_FILE};
use stylemel::Error;

fn main() -> stylemel::Result<()> {
    let cfg = TrainingConfig {
        channels: 8,
        max_resolution: 16,
        fade_samples: 256,
        stabilize_samples: 256,
        total_samples: 1024,
        batch_by_resolution: [(8, 16), (16, 16)].into_iter().collect(),
        checkpoint_every: 256,
        ..TrainingConfig::toy()
    };
    let cache = toy_cache(32, 1);
    let root = std::env::temp_dir().join("stylemel-resume-demo");
    let _ = std::fs::remove_dir_all(&root);

    let whole = run_training(&cfg, &cache, root.join("whole"), false, |_, _| Ok(()))?;
    let stopped = run_training(&cfg, &cache, root.join("split"), false, |t, _| {
        if t.progress.samples_seen >= 600 {
            return Err(Error::InvalidArgument("simulated interruption".into()));
        }
        Ok(())
    });
    println!("first attempt: {}", stopped.err().map(|e| e.to_string()).unwrap_or_default());
    let resumed = run_training(&cfg, &cache, root.join("split"), true, |_, _| Ok(()))?;

    let same_log = std::fs::read(root.join("whole").join(METRICS_FILE))?
        == std::fs::read(root.join("split").join(METRICS_FILE))?;
    let same_out = whole.sample(&[0, 1], 9)? == resumed.sample(&[0, 1], 9)?;
    println!("metrics identical: {same_log}, samples identical: {same_out}");
    Ok(())
}
