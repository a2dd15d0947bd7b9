//! Glue between bundles and the analysis library: preprocessing, EMG onset
//! attachment and per-trial segmentation.

use biodecode::dsp::{design, envelope, filtfilt_rows, resample_rows, IirSpec, DEFAULT_NOTCH_Q};
use biodecode::eval::TrialData;
use biodecode::onset::{detect_channels, OnsetConfig, OnsetReport};
use biodecode::recording::{
    time_to_index, ChannelKind, Event, EventLabel, ProtocolTimeline, Recording, Session,
};
use ndarray::{concatenate, s, Array2, Axis};
use serde::Serialize;

use crate::bundle::Bundle;
use crate::config::PreprocessConfig;
use crate::error::{CliError, CliResult};

/// How long after the audio cue the onset search may run.
pub const ONSET_SEARCH_S: f64 = 4.0;

/// Filters EEG and EOG rows per session and resamples them to the target
/// rate. MI: notch then band-pass; ME: high-pass then notch. Event samples
/// are mapped through time.
pub fn preprocess_eeg(bundle: &Bundle, cfg: &PreprocessConfig) -> CliResult<Bundle> {
    let rec = &bundle.recording;
    let fs = rec.fs();
    let q = if cfg.notch_q > 0.0 { cfg.notch_q } else { DEFAULT_NOTCH_Q };
    let notch = design(&IirSpec::notch(cfg.notch_hz, q, fs))?;
    let mut data = rec.data().clone();
    match bundle.session {
        Session::Mi => {
            data = filtfilt_rows(&notch, data.view())?;
            let band = design(&IirSpec::bandpass(2, cfg.mi_band_hz.0, cfg.mi_band_hz.1, fs))?;
            data = filtfilt_rows(&band, data.view())?;
        }
        Session::Me => {
            let hp = design(&IirSpec::highpass(2, cfg.me_highpass_hz, fs))?;
            data = filtfilt_rows(&hp, data.view())?;
            data = filtfilt_rows(&notch, data.view())?;
        }
    }
    let data = resample_rows(data.view(), fs, cfg.target_fs_hz)?;
    let n = data.ncols();
    let events = rec
        .events()
        .iter()
        .map(|e| {
            let sample = time_to_index(e.sample as f64 / fs, cfg.target_fs_hz).clamp(0, n as i64 - 1) as usize;
            Event::new(sample, e.label, e.transition)
        })
        .collect();
    let recording = Recording::new(rec.channels().to_vec(), cfg.target_fs_hz, data, events, true)?;
    Ok(Bundle { recording, ..bundle.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOnset {
    pub trial: usize,
    pub cue_sample: usize,
    pub onset_sample: Option<usize>,
    pub channel: Option<usize>,
    pub latency_s: Option<f64>,
}

/// EMG linear envelopes of every EMG channel.
pub fn emg_envelopes(emg: &Recording) -> CliResult<Vec<Vec<f64>>> {
    let idx = emg.channel_indices(ChannelKind::Emg);
    if idx.is_empty() {
        return Err(CliError::Config("recording has no EMG channels".into()));
    }
    Ok(idx
        .iter()
        .map(|i| envelope(emg.data().row(*i).as_slice().expect("standard layout"), emg.fs()))
        .collect::<biodecode::Result<_>>()?)
}

/// Detects the movement onset after every audio cue, searching up to
/// [`ONSET_SEARCH_S`] past the cue.
pub fn detect_onsets(emg: &Recording, envelopes: &[Vec<f64>], cfg: &OnsetConfig) -> CliResult<Vec<TrialOnset>> {
    let fs = emg.fs();
    let horizon = time_to_index(ONSET_SEARCH_S, fs) as usize;
    emg.events_labeled(EventLabel::AudioCue)
        .enumerate()
        .map(|(trial, cue)| {
            let end = (cue.sample + horizon).min(emg.n_samples());
            let clipped: Vec<Vec<f64>> = envelopes.iter().map(|e| e[..end].to_vec()).collect();
            let report: OnsetReport = detect_channels(&clipped, fs, cue.sample, cfg)?;
            let onset = report.fused.onset_sample;
            Ok(TrialOnset {
                trial,
                cue_sample: cue.sample,
                onset_sample: onset,
                channel: report.fused.channel,
                latency_s: onset.map(|o| (o - cue.sample) as f64 / fs),
            })
        })
        .collect()
}

/// Adds `movement_onset` events to the EEG recording, mapping each EMG
/// onset through time. Existing movement events are replaced.
pub fn attach_onsets(eeg: &Bundle, emg_fs: f64, onsets: &[TrialOnset]) -> CliResult<Bundle> {
    let rec = &eeg.recording;
    let mut events: Vec<Event> =
        rec.events().iter().filter(|e| e.label != EventLabel::MovementOnset).copied().collect();
    for o in onsets {
        if let Some(s) = o.onset_sample {
            let sample = time_to_index(s as f64 / emg_fs, rec.fs());
            if sample >= 0 && (sample as usize) < rec.n_samples() {
                events.push(Event::new(sample as usize, EventLabel::MovementOnset, eeg.transition));
            }
        }
    }
    Ok(Bundle { recording: rec.with_events(events)?, ..eeg.clone() })
}

/// Cuts the recording into trials at `trial_start` events. Trials missing
/// a movement onset are dropped when `need_movement` is set; their indices
/// are returned alongside.
pub fn load_trials(eeg: &Bundle, need_movement: bool) -> CliResult<(Vec<TrialData>, Vec<usize>)> {
    let rec = &eeg.recording;
    let starts: Vec<usize> = rec.events_labeled(EventLabel::TrialStart).map(|e| e.sample).collect();
    if starts.is_empty() {
        return Err(CliError::Config("recording has no trial_start events".into()));
    }
    let eeg_idx = rec.channel_indices(ChannelKind::Eeg);
    let eog_idx = rec.channel_indices(ChannelKind::Eog);
    let rows = |idx: &[usize], a: usize, b: usize| -> Array2<f64> {
        let views: Vec<_> = idx.iter().map(|i| rec.data().slice(s![*i..*i + 1, a..b])).collect();
        concatenate(Axis(0), &views).expect("equal lengths")
    };
    let timeline = ProtocolTimeline::standard(eeg.session, eeg.transition);
    let mut trials = Vec::new();
    let mut dropped = Vec::new();
    for (k, &a) in starts.iter().enumerate() {
        let b = starts.get(k + 1).copied().unwrap_or(rec.n_samples());
        let within = |label| rec.events_labeled(label).find(|e| e.sample >= a && e.sample < b).map(|e| e.sample - a);
        let rest = within(EventLabel::RestOnset)
            .ok_or_else(|| CliError::Config(format!("trial {k} has no rest_onset event")))?;
        let movement = within(EventLabel::MovementOnset);
        if need_movement && movement.is_none() {
            dropped.push(k);
            continue;
        }
        trials.push(TrialData {
            eeg: rows(&eeg_idx, a, b),
            eog: (!eog_idx.is_empty()).then(|| rows(&eog_idx, a, b)),
            fs: rec.fs(),
            rest_onset: rest,
            movement_onset: movement,
            timeline: timeline.clone(),
        });
    }
    Ok((trials, dropped))
}
