//! Tone -> log-mel spectrogram -> PNG, then back to audio with Griffin-Lim.
//!
//!     cargo run --release --example mel_pipeline -- [out_dir]

use std::f64::consts::TAU;

use stylemel::dsp::{audio_to_mel, mel_to_audio, write_wav, AudioClip, MelFilterbank, CLIP_SAMPLES, SAMPLE_RATE};
use stylemel::plot::write_png;

fn main() -> stylemel::Result<()> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "mel-pipeline".into()));
    std::fs::create_dir_all(&out)?;

    // A rising two-tone chirp, half a second each.
    let samples: Vec<f64> = (0..CLIP_SAMPLES)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let f = if t < 0.5 { 440.0 } else { 1320.0 };
            0.5 * (TAU * f * t).sin()
        })
        .collect();
    let clip = AudioClip::new(samples, SAMPLE_RATE)?;
    let fb = MelFilterbank::standard();
    let mel = audio_to_mel(&clip, &fb);
    let peak = mel.values().iter().copied().fold(f32::MIN, f32::max);
    println!("mel max {peak:.1} dB, floor {:.1} dB", mel.db_floor());

    write_png(&mel, out.join("chirp.png"), 4)?;
    let back = mel_to_audio(&mel, &fb, 60)?;
    write_wav(out.join("chirp-original.wav"), &clip)?;
    write_wav(out.join("chirp-reconstructed.wav"), &back)?;
    println!("rms original {:.3}, reconstructed {:.3}", clip.rms(), back.rms());
    println!("wrote {}", out.display());
    Ok(())
}
