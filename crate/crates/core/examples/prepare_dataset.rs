//! Builds a labeled WAV corpus on disk, scans it, caches the mels and shows
//! the resolution pyramid of one record.
//!
//!     cargo run --release --example prepare_dataset -- [work_dir]

use stylemel::dataset::toy::{write_toy_corpus, TOY_CLASSES};
use stylemel::dataset::{preprocess_cache, scan_dataset, MelCache, ResolutionPyramid, RESOLUTIONS};

fn main() -> stylemel::Result<()> {
    let work = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dataset-demo".into()));
    let corpus = work.join("corpus");
    write_toy_corpus(&corpus, 24, 3)?;

    let entries = scan_dataset(&corpus, &TOY_CLASSES)?;
    let cache_path = work.join("toy.melc");
    let report = preprocess_cache(&entries, &cache_path)?;
    println!("cached {} clips, skipped {}", report.written, report.skipped.len());

    let cache = MelCache::load(&cache_path)?;
    for (label, count) in cache.class_counts() {
        println!("{:>5}: {count}", TOY_CLASSES[label]);
    }
    let pyramid = ResolutionPyramid::new(&cache.mels[0]);
    for r in RESOLUTIONS {
        let level = pyramid.level(r).unwrap();
        let mean = level.iter().sum::<f32>() / level.len() as f32;
        println!("{r:>3}x{r:<3} mean {mean:+.3}");
    }
    Ok(())
}
