use super::config::TrainingConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Fade,
    Stabilize,
}

/// Where training stands after `samples_seen` real samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageState {
    pub samples_seen: u64,
    pub resolution: usize,
    pub alpha: f64,
    pub phase: Phase,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Position in the sequence of fade/stabilize segments.
    pub segment: usize,
}

/// Segments of the growing schedule: `(resolution, phase, start, length)`.
/// The last segment runs until `total_samples`.
pub fn segments(cfg: &TrainingConfig) -> Vec<(usize, Phase, u64, u64)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, r) in cfg.resolutions().into_iter().enumerate() {
        if i > 0 {
            out.push((r, Phase::Fade, start, cfg.fade_samples));
            start += cfg.fade_samples;
        }
        out.push((r, Phase::Stabilize, start, cfg.stabilize_samples));
        start += cfg.stabilize_samples;
    }
    out
}

pub fn schedule_state(samples_seen: u64, cfg: &TrainingConfig) -> Result<StageState> {
    if samples_seen > cfg.total_samples {
        return Err(Error::InvalidArgument(format!(
            "{samples_seen} samples exceed the {} sample schedule",
            cfg.total_samples
        )));
    }
    let segs = segments(cfg);
    let segment = segs
        .iter()
        .rposition(|&(_, _, start, _)| start <= samples_seen)
        .expect("first segment starts at zero");
    let (resolution, phase, start, len) = segs[segment];
    let alpha = match phase {
        Phase::Fade => ((samples_seen - start) as f64 / len as f64).min(1.0),
        Phase::Stabilize => 1.0,
    };
    let learning_rate = if resolution == cfg.max_resolution {
        cfg.adam_alpha_final_stage
    } else {
        cfg.adam_alpha
    };
    Ok(StageState {
        samples_seen,
        resolution,
        alpha,
        phase,
        batch_size: cfg.batch_by_resolution[&resolution],
        learning_rate,
        segment,
    })
}
