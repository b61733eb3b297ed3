//! Phase reconstruction from an STFT magnitude, printing the consistency
//! error as it falls.

use std::f64::consts::TAU;

use stylemel::dsp::{griffin_lim, stft, AudioClip, CLIP_SAMPLES, SAMPLE_RATE};

fn main() -> stylemel::Result<()> {
    let samples: Vec<f64> = (0..CLIP_SAMPLES)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            0.3 * (TAU * 300.0 * t).sin() + 0.2 * (TAU * 2500.0 * t).sin()
        })
        .collect();
    let target = stft(&AudioClip::new(samples, SAMPLE_RATE)?);
    let out = griffin_lim(&target, 60)?;
    for (i, e) in out.errors.iter().enumerate().step_by(10) {
        println!("iteration {:>2}: error {e:.5}", i + 1);
    }
    println!("final error {:.5}", out.errors.last().unwrap());

    let rebuilt = stft(&out.clip);
    let bins = target.bins;
    let (a, b): (Vec<f64>, Vec<f64>) = (0..target.frames.min(rebuilt.frames))
        .flat_map(|f| (0..bins).map(move |k| (f, k)))
        .map(|(f, k)| (target.get(k, f), rebuilt.get(k, f)))
        .unzip();
    println!("magnitude correlation {:.4}", pearson(&a, &b));
    Ok(())
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
