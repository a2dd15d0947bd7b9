//! Movement onset from EMG linear envelopes.
//!
//! The threshold is `T = mu + h * sigma` over a reference window ending at
//! the audio cue. Onset is the first sample of the first run of more than
//! `E` consecutive samples above `T` at or after the cue.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recording::time_to_index;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetConfig {
    /// Threshold multiplier on the reference standard deviation.
    pub h: f64,
    /// A detection needs a run of strictly more than `e` samples.
    pub e: usize,
    pub reference_window_s: f64,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        Self {
            h: 10.0,
            e: 5,
            reference_window_s: 2.0,
        }
    }
}

impl OnsetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Invalid(format!("h must be positive, got {}", self.h)));
        }
        if self.e < 1 {
            return Err(Error::Invalid("E must be at least 1".into()));
        }
        if !(self.reference_window_s > 0.0) {
            return Err(Error::Invalid("reference window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetResult {
    pub onset_sample: Option<usize>,
    pub threshold: f64,
    pub reference_mean: f64,
    pub reference_sd: f64,
}

/// Detects the movement onset on one envelope.
///
/// The reference interval is `[cue - window, cue)`; its standard deviation
/// uses the `n - 1` denominator.
pub fn detect(envelope: &[f64], fs: f64, cue_sample: usize, config: &OnsetConfig) -> Result<OnsetResult> {
    config.validate()?;
    let ref_len = time_to_index(config.reference_window_s, fs);
    if ref_len < 2 || (cue_sample as i64) < ref_len {
        return Err(Error::Range(format!(
            "cue at sample {cue_sample} leaves no room for a {} s reference window at {fs} Hz",
            config.reference_window_s
        )));
    }
    if cue_sample >= envelope.len() {
        return Err(Error::Range(format!(
            "cue at sample {cue_sample} beyond envelope length {}",
            envelope.len()
        )));
    }
    let reference = &envelope[cue_sample - ref_len as usize..cue_sample];
    let n = reference.len() as f64;
    let mean = reference.iter().sum::<f64>() / n;
    let var = reference.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate(format!(
            "flat reference window before cue at sample {cue_sample} (sigma = 0)"
        )));
    }
    let threshold = mean + config.h * sd;

    let mut run = 0usize;
    let mut onset = None;
    for (i, &v) in envelope.iter().enumerate().skip(cue_sample) {
        if v > threshold {
            run += 1;
            if run > config.e {
                onset = Some(i + 1 - run);
                break;
            }
        } else {
            run = 0;
        }
    }
    Ok(OnsetResult {
        onset_sample: onset,
        threshold,
        reference_mean: mean,
        reference_sd: sd,
    })
}

/// How per-channel onsets are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionRule {
    Earliest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedOnset {
    pub onset_sample: Option<usize>,
    /// Channel that produced the fused onset.
    pub channel: Option<usize>,
    pub rule: FusionRule,
}

/// Earliest onset across channels; empty when no channel fires.
pub fn fuse(per_channel: &[OnsetResult]) -> FusedOnset {
    let best = per_channel
        .iter()
        .enumerate()
        .filter_map(|(c, r)| r.onset_sample.map(|s| (s, c)))
        .min();
    FusedOnset {
        onset_sample: best.map(|(s, _)| s),
        channel: best.map(|(_, c)| c),
        rule: FusionRule::Earliest,
    }
}

/// Per-channel detections plus their fusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetReport {
    pub per_channel: Vec<OnsetResult>,
    pub fused: FusedOnset,
}

/// Runs [`detect`] on every envelope and fuses the results.
pub fn detect_channels(
    envelopes: &[Vec<f64>],
    fs: f64,
    cue_sample: usize,
    config: &OnsetConfig,
) -> Result<OnsetReport> {
    let per_channel = envelopes
        .iter()
        .map(|env| detect(env, fs, cue_sample, config))
        .collect::<Result<Vec<_>>>()?;
    let fused = fuse(&per_channel);
    Ok(OnsetReport { per_channel, fused })
}
