//! Synthetic EEG/EOG/EMG recordings with known ground truth.
//!
//! Each trial block holds a pre-rest lead-in, the 13 s protocol (R, AO,
//! IDLE, TASK) and a tail. EEG is modulated pink noise plus an alpha-band
//! oscillation whose amplitude follows the protocol state; ME sessions add
//! an MRCP around movement onset and an EMG burst. Blinks leak into the EEG
//! through known weights.

use biodecode::dsp::{design, filtfilt, IirSpec};
use biodecode::recording::{
    time_to_index, ChannelKind, ChannelMeta, Event, EventLabel, Recording, Session, Transition, EEG_MONTAGE,
    EMG_MUSCLES,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bundle::Bundle;
use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Lead-in before rest onset within each trial block.
pub const LEAD_S: f64 = 2.5;
/// Protocol length after rest onset.
pub const PROTOCOL_S: f64 = 13.0;
/// Tail after the protocol.
pub const TAIL_S: f64 = 2.0;
/// Audio cue (task onset) relative to rest onset.
pub const CUE_S: f64 = 9.0;

/// Channels that show alpha ERD during action observation. The
/// centro-parietal row stays unmodulated.
pub const PARIETAL: [&str; 4] = ["P3", "Pz", "P4", "POz"];
/// Channels that show alpha ERS during imagery and carry the MRCP.
pub const CENTRAL: [&str; 4] = ["FCz", "C3", "Cz", "C4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub subjects: usize,
    pub trials: usize,
    pub sessions: Vec<Session>,
    pub transitions: Vec<Transition>,
    pub eeg_fs_hz: f64,
    pub emg_fs_hz: f64,
    pub erd_band_hz: (f64, f64),
    /// Power change of the state-dependent alpha, dB.
    pub erd_depth_db: f64,
    pub alpha_amplitude_uv: f64,
    pub noise_uv: f64,
    pub mrcp_amplitude_uv: f64,
    /// MRCP ramp start relative to movement onset (negative).
    pub mrcp_start_s: f64,
    /// Time after onset at which the rebound has decayed.
    pub mrcp_rebound_s: f64,
    pub emg_latency_mean_s: f64,
    pub emg_latency_sd_s: f64,
    pub emg_noise_uv: f64,
    pub emg_burst_gain: f64,
    pub emg_burst_s: f64,
    /// Linear recruitment ramp at burst start and end.
    pub emg_ramp_s: f64,
    pub blink_rate_hz: f64,
    pub blink_amplitude_uv: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            subjects: 1,
            trials: 15,
            sessions: vec![Session::Mi, Session::Me],
            transitions: vec![Transition::SitToStand, Transition::StandToSit],
            eeg_fs_hz: 1200.0,
            emg_fs_hz: 250.0,
            erd_band_hz: (8.0, 12.0),
            erd_depth_db: 6.0,
            alpha_amplitude_uv: 10.0,
            noise_uv: 5.0,
            mrcp_amplitude_uv: 8.0,
            mrcp_start_s: -1.5,
            mrcp_rebound_s: 1.0,
            emg_latency_mean_s: 0.8,
            emg_latency_sd_s: 0.1,
            emg_noise_uv: 5.0,
            emg_burst_gain: 5.0,
            emg_burst_s: 1.5,
            emg_ramp_s: 0.2,
            blink_rate_hz: 0.3,
            blink_amplitude_uv: 150.0,
            seed,
        }
    }

    /// Reads the spec from config keys; the seed comes from `seed` in the
    /// file or the `--seed` flag and is mandatory.
    pub fn from_config(cfg: &Config, seed_flag: Option<u64>) -> CliResult<Self> {
        let seed = match (cfg.get_opt::<u64>("seed")?, seed_flag) {
            (_, Some(s)) | (Some(s), None) => s,
            (None, None) => return Err(CliError::Config("synthesis needs a seed (--seed or seed = ...)".into())),
        };
        let d = Self::with_seed(seed);
        let spec = Self {
            subjects: cfg.get("subjects", d.subjects)?,
            trials: cfg.get("trials", d.trials)?,
            sessions: cfg.list("sessions")?.unwrap_or(d.sessions),
            transitions: cfg.list("transitions")?.unwrap_or(d.transitions),
            eeg_fs_hz: cfg.get("eeg_fs_hz", d.eeg_fs_hz)?,
            emg_fs_hz: cfg.get("emg_fs_hz", d.emg_fs_hz)?,
            erd_band_hz: (cfg.get("erd_lo_hz", d.erd_band_hz.0)?, cfg.get("erd_hi_hz", d.erd_band_hz.1)?),
            erd_depth_db: cfg.get("erd_depth_db", d.erd_depth_db)?,
            alpha_amplitude_uv: cfg.get("alpha_amplitude_uv", d.alpha_amplitude_uv)?,
            noise_uv: cfg.get("noise_uv", d.noise_uv)?,
            mrcp_amplitude_uv: cfg.get("mrcp_amplitude_uv", d.mrcp_amplitude_uv)?,
            mrcp_start_s: cfg.get("mrcp_start_s", d.mrcp_start_s)?,
            mrcp_rebound_s: cfg.get("mrcp_rebound_s", d.mrcp_rebound_s)?,
            emg_latency_mean_s: cfg.get("emg_latency_mean_s", d.emg_latency_mean_s)?,
            emg_latency_sd_s: cfg.get("emg_latency_sd_s", d.emg_latency_sd_s)?,
            emg_noise_uv: cfg.get("emg_noise_uv", d.emg_noise_uv)?,
            emg_burst_gain: cfg.get("emg_burst_gain", d.emg_burst_gain)?,
            emg_burst_s: cfg.get("emg_burst_s", d.emg_burst_s)?,
            emg_ramp_s: cfg.get("emg_ramp_s", d.emg_ramp_s)?,
            blink_rate_hz: cfg.get("blink_rate_hz", d.blink_rate_hz)?,
            blink_amplitude_uv: cfg.get("blink_amplitude_uv", d.blink_amplitude_uv)?,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.subjects == 0 || self.trials == 0 || self.sessions.is_empty() || self.transitions.is_empty() {
            return bad("subjects, trials, sessions and transitions must be non-empty".into());
        }
        let finite = [
            self.erd_depth_db,
            self.alpha_amplitude_uv,
            self.noise_uv,
            self.mrcp_amplitude_uv,
            self.emg_noise_uv,
            self.emg_burst_gain,
            self.blink_amplitude_uv,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("amplitudes and depths must be finite".into());
        }
        if !(self.eeg_fs_hz > 0.0 && self.emg_fs_hz > 0.0) {
            return bad("sample rates must be positive".into());
        }
        if !(self.erd_band_hz.0 > 0.0 && self.erd_band_hz.1 > self.erd_band_hz.0 && self.erd_band_hz.1 < self.eeg_fs_hz / 2.0) {
            return bad(format!("bad ERD band {:?}", self.erd_band_hz));
        }
        let task_len = PROTOCOL_S - CUE_S;
        if !(self.emg_latency_mean_s > 0.0 && self.emg_latency_mean_s < task_len && self.emg_latency_sd_s >= 0.0) {
            return bad(format!("EMG latency must lie inside the {task_len} s task window"));
        }
        if self.transitions.contains(&Transition::None) {
            return bad("transition 'none' cannot be synthesized".into());
        }
        if !(self.emg_ramp_s >= 0.0 && self.emg_burst_s > 0.0) {
            return bad("EMG ramp and burst durations must be non-negative and positive".into());
        }
        if !(self.mrcp_start_s < 0.0 && self.mrcp_rebound_s > 0.3) || self.blink_rate_hz < 0.0 {
            return bad("MRCP timing or blink rate out of range".into());
        }
        Ok(())
    }

    pub fn trial_block_s(&self) -> f64 {
        LEAD_S + PROTOCOL_S + TAIL_S
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTruth {
    pub rest_onset_eeg: usize,
    pub cue_eeg: usize,
    pub cue_emg: usize,
    /// Latency of the movement after the cue, ME sessions only.
    pub latency_s: Option<f64>,
    pub movement_onset_eeg: Option<usize>,
    pub movement_onset_emg: Option<usize>,
}

/// Ground truth kept beside, never inside, the bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub subject: String,
    pub session: Session,
    pub transition: Transition,
    pub seed: u64,
    pub erd_depth_db: f64,
    pub trials: Vec<TrialTruth>,
    /// Blink leakage weight into each EEG channel, montage order.
    pub eog_leakage: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub eeg: Bundle,
    pub emg: Bundle,
    pub truth: Truth,
}

pub fn subject_id(index: usize) -> String {
    format!("S{:02}", index + 1)
}

fn stream_seed(spec: &SynthSpec, subject: usize, session: Session, transition: Transition) -> u64 {
    let s = match session {
        Session::Mi => 1,
        Session::Me => 2,
    };
    let t = match transition {
        Transition::SitToStand => 1,
        Transition::StandToSit => 2,
        Transition::None => 3,
    };
    spec.seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((subject as u64) << 8 | s << 4 | t)
}

/// Pink noise from a three-pole approximation of a 1/f spectrum,
/// normalized to unit RMS.
pub fn pink_noise(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect();
    normalize(&mut out);
    out
}

fn normalize(x: &mut [f64]) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let rms = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v = (*v - mean) / rms);
    }
}

/// Slow log-normal gain, linearly interpolated between 1 s knots; keeps the
/// background non-Gaussian.
fn slow_gain(n: usize, fs: f64, rng: &mut impl Rng) -> Vec<f64> {
    let step = fs.round() as usize;
    let knots: Vec<f64> = (0..n / step + 2).map(|_| (0.4 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    (0..n)
        .map(|i| {
            let k = i / step;
            let frac = (i % step) as f64 / step as f64;
            knots[k] * (1.0 - frac) + knots[k + 1] * frac
        })
        .collect()
}

/// MRCP template at time `t` relative to movement onset: linear negative
/// ramp from `start` to onset, rebound to `+amp/2` at 0.3 s, decay to zero
/// by `rebound`.
pub fn mrcp_template(t: f64, amp: f64, start: f64, rebound: f64) -> f64 {
    if t < start || t >= rebound {
        0.0
    } else if t < 0.0 {
        -amp * (t - start) / -start
    } else if t < 0.3 {
        -amp + 1.5 * amp * t / 0.3
    } else {
        0.5 * amp * (1.0 - (t - 0.3) / (rebound - 0.3))
    }
}

fn blink(t: f64) -> f64 {
    (-t * t / (2.0 * 0.1 * 0.1)).exp()
}

fn leakage(name: &str) -> f64 {
    match name {
        "FCz" => 0.5,
        "C3" | "Cz" | "C4" => 0.3,
        "CP3" | "CPz" | "CP4" => 0.15,
        "P3" | "Pz" | "P4" => 0.08,
        _ => 0.05,
    }
}

fn mrcp_weight(name: &str) -> f64 {
    match name {
        "Cz" => 1.0,
        "FCz" => 0.8,
        "C3" | "C4" | "CPz" => 0.7,
        _ => 0.0,
    }
}

/// Alpha amplitude factor for a channel in a protocol phase.
fn alpha_gain(spec: &SynthSpec, session: Session, name: &str, t_rel: f64) -> f64 {
    let change = 10f64.powf(spec.erd_depth_db / 20.0);
    let parietal = PARIETAL.contains(&name);
    let central = CENTRAL.contains(&name);
    if (4.0..8.0).contains(&t_rel) && parietal {
        1.0 / change
    } else if (CUE_S..PROTOCOL_S).contains(&t_rel) && central {
        match session {
            Session::Mi => change,
            Session::Me => 1.0 / change,
        }
    } else {
        1.0
    }
}

/// One EMG trial block: `channels x samples` with the burst starting at
/// `onset` (sample index) when given.
pub fn emg_block(spec: &SynthSpec, n: usize, onset: Option<usize>, rng: &mut impl Rng) -> Array2<f64> {
    let fs = spec.emg_fs_hz;
    let ramp = (spec.emg_ramp_s * fs).max(1.0);
    let burst_len = spec.emg_burst_s * fs;
    let n_ch = EMG_MUSCLES.len() * 2;
    let mut out = Array2::zeros((n_ch, n));
    for mut row in out.rows_mut() {
        let gain = spec.emg_burst_gain * rng.random_range(0.7..1.3);
        for (i, v) in row.iter_mut().enumerate() {
            let w: f64 = StandardNormal.sample(rng);
            let env = match onset {
                Some(o) if i >= o => {
                    let k = (i - o) as f64;
                    let up = (k / ramp).min(1.0);
                    let down = ((burst_len + ramp - k) / ramp).clamp(0.0, 1.0);
                    1.0 + (gain - 1.0) * up.min(down)
                }
                _ => 1.0,
            };
            *v = spec.emg_noise_uv * env * w;
        }
    }
    out
}

pub fn emg_channels() -> Vec<ChannelMeta> {
    ["L", "R"]
        .iter()
        .flat_map(|side| EMG_MUSCLES.iter().map(move |m| ChannelMeta::new(format!("{m}_{side}"), ChannelKind::Emg, "uV")))
        .collect()
}

pub fn eeg_channels() -> Vec<ChannelMeta> {
    let mut ch: Vec<ChannelMeta> = EEG_MONTAGE.iter().map(|n| ChannelMeta::new(*n, ChannelKind::Eeg, "uV")).collect();
    ch.push(ChannelMeta::new("EOG_V", ChannelKind::Eog, "uV"));
    ch.push(ChannelMeta::new("EOG_H", ChannelKind::Eog, "uV"));
    ch
}

/// Synthesizes one subject/session/transition recording pair.
pub fn synth_recording(spec: &SynthSpec, subject: usize, session: Session, transition: Transition) -> CliResult<SynthRecording> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec, subject, session, transition));
    let fs = spec.eeg_fs_hz;
    let block_eeg = time_to_index(spec.trial_block_s(), fs) as usize;
    let block_emg = time_to_index(spec.trial_block_s(), spec.emg_fs_hz) as usize;
    let n_eeg = block_eeg * spec.trials;
    let n_emg = block_emg * spec.trials;

    let latency = Normal::new(spec.emg_latency_mean_s, spec.emg_latency_sd_s).expect("validated sd");
    let mut trials = Vec::with_capacity(spec.trials);
    let mut eeg_events = Vec::new();
    let mut emg_events = Vec::new();
    for k in 0..spec.trials {
        let t0 = k as f64 * spec.trial_block_s();
        let rest_s = t0 + LEAD_S;
        let at = |t: f64| time_to_index(t, fs) as usize;
        let at_emg = |t: f64| time_to_index(t, spec.emg_fs_hz) as usize;
        for (off, label) in [
            (0.0, EventLabel::RestOnset),
            (4.0, EventLabel::AoOnset),
            (8.0, EventLabel::IdleOnset),
            (CUE_S, EventLabel::AudioCue),
            (CUE_S, EventLabel::TaskOnset),
        ] {
            eeg_events.push(Event::new(at(rest_s + off), label, transition));
            emg_events.push(Event::new(at_emg(rest_s + off), label, transition));
        }
        eeg_events.push(Event::new(at(t0), EventLabel::TrialStart, transition));
        emg_events.push(Event::new(at_emg(t0), EventLabel::TrialStart, transition));
        let lat = (session == Session::Me)
            .then(|| latency.sample(&mut rng).clamp(0.2, PROTOCOL_S - CUE_S - 0.5));
        trials.push(TrialTruth {
            rest_onset_eeg: at(rest_s),
            cue_eeg: at(rest_s + CUE_S),
            cue_emg: at_emg(rest_s + CUE_S),
            latency_s: lat,
            movement_onset_eeg: lat.map(|l| at(rest_s + CUE_S + l)),
            movement_onset_emg: lat.map(|l| at_emg(rest_s + CUE_S + l)),
        });
    }

    // Blink source shared by EOG and (through leakage) EEG.
    let mut blink_src = vec![0.0; n_eeg];
    if spec.blink_rate_hz > 0.0 {
        let gap = Exp::new(spec.blink_rate_hz).expect("positive rate");
        let mut t = gap.sample(&mut rng);
        let half = (0.3 * fs) as isize;
        while t < n_eeg as f64 / fs {
            let amp = spec.blink_amplitude_uv * rng.random_range(0.7..1.3);
            let c = (t * fs) as isize;
            for i in (c - half).max(0)..(c + half).min(n_eeg as isize) {
                blink_src[i as usize] += amp * blink((i - c) as f64 / fs);
            }
            t += gap.sample(&mut rng);
        }
    }

    let channels = eeg_channels();
    let alpha_filter = design(&IirSpec::bandpass(2, spec.erd_band_hz.0, spec.erd_band_hz.1, fs))?;
    let mut data = Array2::zeros((channels.len(), n_eeg));
    let mut leak = Vec::new();
    for (c, meta) in channels.iter().enumerate() {
        let mut row = vec![0.0; n_eeg];
        match meta.kind {
            ChannelKind::Eeg => {
                let pink = pink_noise(n_eeg, &mut rng);
                let gain = slow_gain(n_eeg, fs, &mut rng);
                let white: Vec<f64> = (0..n_eeg).map(|_| StandardNormal.sample(&mut rng)).collect();
                let mut alpha = filtfilt(&alpha_filter, &white)?;
                normalize(&mut alpha);
                let w_leak = leakage(&meta.name);
                let w_mrcp = mrcp_weight(&meta.name);
                leak.push((meta.name.clone(), w_leak));
                for (i, v) in row.iter_mut().enumerate() {
                    let k = i / block_eeg;
                    let t_rel = (i as f64 - trials[k].rest_onset_eeg as f64) / fs;
                    let a = spec.alpha_amplitude_uv * alpha_gain(spec, session, &meta.name, t_rel);
                    let mut x = spec.noise_uv * gain[i] * pink[i] + a * alpha[i] + w_leak * blink_src[i];
                    if let Some(m) = trials[k].movement_onset_eeg {
                        let tm = (i as f64 - m as f64) / fs;
                        x += w_mrcp * mrcp_template(tm, spec.mrcp_amplitude_uv, spec.mrcp_start_s, spec.mrcp_rebound_s);
                    }
                    *v = x;
                }
            }
            _ => {
                let weight = if meta.name == "EOG_V" { 1.0 } else { 0.4 };
                for (i, v) in row.iter_mut().enumerate() {
                    let w: f64 = StandardNormal.sample(&mut rng);
                    *v = weight * blink_src[i] + 2.0 * w;
                }
            }
        }
        data.row_mut(c).assign(&ndarray::Array1::from(row));
    }

    let mut emg = Array2::zeros((EMG_MUSCLES.len() * 2, n_emg));
    for (k, tr) in trials.iter().enumerate() {
        let start = k * block_emg;
        let onset = tr.movement_onset_emg.map(|o| o - start);
        let block = emg_block(spec, block_emg, onset, &mut rng);
        emg.slice_mut(ndarray::s![.., start..start + block_emg]).assign(&block);
    }

    let subject_name = subject_id(subject);
    let eeg = Recording::new(channels, fs, data, eeg_events, true)?;
    let emg = Recording::new(emg_channels(), spec.emg_fs_hz, emg, emg_events, true)?;
    let wrap = |recording| Bundle { subject: subject_name.clone(), session, transition, recording };
    Ok(SynthRecording {
        eeg: wrap(eeg),
        emg: wrap(emg),
        truth: Truth {
            subject: subject_name.clone(),
            session,
            transition,
            seed: spec.seed,
            erd_depth_db: spec.erd_depth_db,
            trials,
            eog_leakage: leak,
        },
    })
}

/// Standalone EMG trials for onset calibration: returns the trial blocks
/// with the cue and true onset sample of each.
pub fn emg_trials(spec: &SynthSpec, n: usize, seed: u64) -> Vec<(Array2<f64>, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = spec.emg_fs_hz;
    let len = time_to_index(spec.trial_block_s(), fs) as usize;
    let cue = time_to_index(LEAD_S + CUE_S, fs) as usize;
    let latency = Normal::new(spec.emg_latency_mean_s, spec.emg_latency_sd_s).expect("validated sd");
    (0..n)
        .map(|_| {
            let lat = latency.sample(&mut rng).clamp(0.2, PROTOCOL_S - CUE_S - 0.5);
            let onset = cue + time_to_index(lat, fs) as usize;
            (emg_block(spec, len, Some(onset), &mut rng), cue, onset)
        })
        .collect()
}
