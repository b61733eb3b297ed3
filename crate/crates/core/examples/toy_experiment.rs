//! Trains the small two-class model end to end and reports FD and
//! conditional consistency.
//!
//!     cargo run --release --example toy_experiment -- [out_dir]

use stylemel::experiment::ToyExperiment;

fn main() -> stylemel::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let dir = std::env::args().nth(1).unwrap_or_else(|| "toy-run".into());
    let start = std::time::Instant::now();
    let report = ToyExperiment::default().run(&dir)?;
    println!("classifier held-out accuracy {:.3}", report.classifier.accuracy());
    for (s, fd) in &report.fd_trace {
        println!("samples {s:>7}  fd {fd:.4}");
    }
    println!(
        "fd drop {:.1}%  conditional consistency {:.1}%  ({:.0?})",
        100.0 * report.fd_drop(),
        100.0 * report.consistency,
        start.elapsed()
    );
    Ok(())
}
