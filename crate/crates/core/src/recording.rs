//! Recordings, protocol timelines, epochs and sliding windows.
//!
//! Time `t` (seconds) maps to sample index `round(t * fs)` everywhere in the
//! crate; see [`time_to_index`]. Data are stored channel-major
//! (`channels x samples`).

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, Array3, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EEG sample rate of the acquisition amplifier.
pub const EEG_FS_HZ: f64 = 1200.0;
/// EMG sample rate of the EMG front end.
pub const EMG_FS_HZ: f64 = 250.0;
/// Rate every EEG analysis runs at after down-sampling.
pub const ANALYSIS_FS_HZ: f64 = 250.0;

/// The 11-electrode EEG montage.
pub const EEG_MONTAGE: [&str; 11] = [
    "FCz", "C3", "Cz", "C4", "CP3", "CPz", "CP4", "P3", "Pz", "P4", "POz",
];

/// EMG muscles, recorded on both legs.
pub const EMG_MUSCLES: [&str; 3] = ["RF", "TA", "GL"];

/// Tolerance applied before flooring in window-count arithmetic.
pub const WINDOW_EPS: f64 = 1e-9;

/// Maps a time in seconds to a sample index.
pub fn time_to_index(t_s: f64, fs: f64) -> i64 {
    (t_s * fs).round() as i64
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self {
                    $(Self::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(Self::$variant),)+
                    other => Err(Error::Invalid(format!(
                        "unknown {} '{}'", stringify!($name), other
                    ))),
                }
            }
        }
    };
}

string_enum!(
    /// Modality of a channel.
    ChannelKind { Eeg => "EEG", Eog => "EOG", Emg => "EMG" }
);

string_enum!(
    /// Event markers on a recording timeline.
    EventLabel {
        TrialStart => "trial_start",
        RestOnset => "rest_onset",
        AoOnset => "ao_onset",
        IdleOnset => "idle_onset",
        AudioCue => "audio_cue",
        TaskOnset => "task_onset",
        MovementOnset => "movement_onset",
    }
);

string_enum!(
    /// Postural transition performed in a trial.
    Transition { SitToStand => "sit_to_stand", StandToSit => "stand_to_sit", None => "none" }
);

string_enum!(
    /// Experimental session: imagined or executed movement.
    Session { Mi => "MI", Me => "ME" }
);

string_enum!(
    /// Class labels attached to epochs and decoded windows.
    ClassLabel { R => "R", Ao => "AO", Mi => "MI", Mrcp => "MRCP" }
);

string_enum!(
    /// Protocol states of a single trial.
    ProtocolState { R => "R", Ao => "AO", Idle => "IDLE", Task => "TASK" }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub name: String,
    pub kind: ChannelKind,
    pub unit: String,
}

impl ChannelMeta {
    pub fn new(name: impl Into<String>, kind: ChannelKind, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind,
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub sample: usize,
    pub label: EventLabel,
    pub transition: Transition,
}

impl Event {
    pub fn new(sample: usize, label: EventLabel, transition: Transition) -> Self {
        Self {
            sample,
            label,
            transition,
        }
    }
}

/// A multichannel recording with a shared sample rate and an event timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    channels: Vec<ChannelMeta>,
    fs: f64,
    data: Array2<f64>,
    events: Vec<Event>,
}

impl Recording {
    /// Builds a recording, checking that channel metadata, data shape and
    /// events agree. Events are sorted by sample (stable). With
    /// `validate_montage`, EEG channel names must belong to [`EEG_MONTAGE`].
    pub fn new(
        channels: Vec<ChannelMeta>,
        fs: f64,
        data: Array2<f64>,
        mut events: Vec<Event>,
        validate_montage: bool,
    ) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Invalid(format!("sample rate must be positive, got {fs}")));
        }
        if channels.len() != data.nrows() {
            return Err(Error::Shape(format!(
                "{} channel descriptors for {} data rows",
                channels.len(),
                data.nrows()
            )));
        }
        let mut seen = HashSet::new();
        for ch in &channels {
            if !seen.insert(ch.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate channel name '{}'", ch.name)));
            }
            if validate_montage
                && ch.kind == ChannelKind::Eeg
                && !EEG_MONTAGE.contains(&ch.name.as_str())
            {
                return Err(Error::Invalid(format!(
                    "EEG channel '{}' is not part of the montage",
                    ch.name
                )));
            }
        }
        let n = data.ncols();
        if let Some(ev) = events.iter().find(|e| e.sample >= n.max(1)) {
            return Err(Error::Range(format!(
                "event {} at sample {} beyond recording length {}",
                ev.label, ev.sample, n
            )));
        }
        events.sort_by_key(|e| e.sample);
        Ok(Self {
            channels,
            fs,
            data,
            events,
        })
    }

    pub fn channels(&self) -> &[ChannelMeta] {
        &self.channels
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    /// Indices of the channels of one kind, in storage order.
    pub fn channel_indices(&self, kind: ChannelKind) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    /// Rows of one channel kind as a new matrix.
    pub fn select(&self, kind: ChannelKind) -> Array2<f64> {
        let idx = self.channel_indices(kind);
        self.data.select(ndarray::Axis(0), &idx)
    }

    pub fn events_labeled(&self, label: EventLabel) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.label == label)
    }

    /// Same metadata and events with new sample data (e.g. after filtering).
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(
            self.channels.clone(),
            self.fs,
            data,
            self.events.clone(),
            false,
        )
    }

    /// Replaces the event list; events are re-sorted and range checked.
    pub fn with_events(&self, events: Vec<Event>) -> Result<Self> {
        Self::new(
            self.channels.clone(),
            self.fs,
            self.data.clone(),
            events,
            false,
        )
    }

    pub fn into_parts(self) -> (Vec<ChannelMeta>, f64, Array2<f64>, Vec<Event>) {
        (self.channels, self.fs, self.data, self.events)
    }
}

/// Cuts a `channels x samples` epoch out of `data` relative to `anchor`.
///
/// The epoch starts at `anchor + round(start_s * fs)` and holds
/// `round((end_s - start_s) * fs)` samples. `trial` only labels errors.
pub fn epoch_at(
    data: ArrayView2<'_, f64>,
    fs: f64,
    anchor: usize,
    start_s: f64,
    end_s: f64,
    trial: usize,
) -> Result<Array2<f64>> {
    if !(end_s > start_s) {
        return Err(Error::Size(format!(
            "zero-length epoch [{start_s}, {end_s}) s for trial {trial}"
        )));
    }
    let n = time_to_index(end_s - start_s, fs);
    if n <= 0 {
        return Err(Error::Size(format!(
            "epoch [{start_s}, {end_s}) s holds no samples at {fs} Hz (trial {trial})"
        )));
    }
    let first = anchor as i64 + time_to_index(start_s, fs);
    let last = first + n;
    if first < 0 || last > data.ncols() as i64 {
        return Err(Error::Range(format!(
            "epoch [{start_s}, {end_s}) s of trial {trial} around anchor sample {anchor} \
             spans samples {first}..{last}, recording has {}",
            data.ncols()
        )));
    }
    Ok(data.slice(s![.., first as usize..last as usize]).to_owned())
}

/// Cuts an epoch out of a recording, anchored at `anchor`.
pub fn epoch(
    recording: &Recording,
    anchor: &Event,
    start_s: f64,
    end_s: f64,
    trial: usize,
) -> Result<Array2<f64>> {
    epoch_at(
        recording.data().view(),
        recording.fs(),
        anchor.sample,
        start_s,
        end_s,
        trial,
    )
    .map_err(|e| match e {
        Error::Range(msg) => Error::Range(format!("{msg} (anchor event {})", anchor.label)),
        other => other,
    })
}

/// Number of windows of `window_s` stepping by `shift_s` that fit in
/// `duration_s`: `floor((duration - window) / shift + eps) + 1`.
pub fn window_count(duration_s: f64, window_s: f64, shift_s: f64) -> Result<usize> {
    if !(shift_s > 0.0) {
        return Err(Error::Invalid(format!("window shift must be positive, got {shift_s}")));
    }
    if !(window_s > 0.0) {
        return Err(Error::Invalid(format!("window length must be positive, got {window_s}")));
    }
    if window_s > duration_s + WINDOW_EPS {
        return Err(Error::Size(format!(
            "window of {window_s} s longer than {duration_s} s of data"
        )));
    }
    Ok(((duration_s - window_s) / shift_s + WINDOW_EPS).floor() as usize + 1)
}

/// Sample offsets of every window start for a signal of `n_samples`.
pub fn window_starts(n_samples: usize, fs: f64, window_s: f64, shift_s: f64) -> Result<Vec<usize>> {
    let count = window_count(n_samples as f64 / fs, window_s, shift_s)?;
    let len = time_to_index(window_s, fs) as usize;
    let starts: Vec<usize> = (0..count)
        .map(|k| time_to_index(k as f64 * shift_s, fs) as usize)
        .collect();
    debug_assert!(starts.last().map_or(true, |&s| s + len <= n_samples));
    Ok(starts)
}

/// Splits a `channels x samples` epoch into `windows x channels x samples`.
pub fn slide(epoch: ArrayView2<'_, f64>, fs: f64, window_s: f64, shift_s: f64) -> Result<Array3<f64>> {
    let len = time_to_index(window_s, fs);
    if len <= 0 {
        return Err(Error::Size(format!("window of {window_s} s holds no samples")));
    }
    let len = len as usize;
    let starts = window_starts(epoch.ncols(), fs, window_s, shift_s)?;
    let mut out = Array3::zeros((starts.len(), epoch.nrows(), len));
    for (w, &start) in starts.iter().enumerate() {
        if start + len > epoch.ncols() {
            return Err(Error::Size(format!(
                "window {w} ends at sample {} past epoch length {}",
                start + len,
                epoch.ncols()
            )));
        }
        out.slice_mut(s![w, .., ..])
            .assign(&epoch.slice(s![.., start..start + len]));
    }
    Ok(out)
}

/// Labeled `trials x windows x channels x samples` tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSet {
    tensor: Array4<f64>,
    labels: Vec<ClassLabel>,
    fs: f64,
    window_length_s: f64,
    window_shift_s: f64,
}

impl EpochSet {
    pub fn new(
        tensor: Array4<f64>,
        labels: Vec<ClassLabel>,
        fs: f64,
        window_length_s: f64,
        window_shift_s: f64,
    ) -> Result<Self> {
        let (trials, _, _, samples) = tensor.dim();
        if labels.len() != trials {
            return Err(Error::Shape(format!(
                "{} labels for {} trials",
                labels.len(),
                trials
            )));
        }
        if time_to_index(window_length_s, fs) != samples as i64 {
            return Err(Error::Shape(format!(
                "window of {window_length_s} s at {fs} Hz should hold {} samples, tensor has {samples}",
                time_to_index(window_length_s, fs)
            )));
        }
        if !(window_shift_s > 0.0) {
            return Err(Error::Invalid("window shift must be positive".into()));
        }
        Ok(Self {
            tensor,
            labels,
            fs,
            window_length_s,
            window_shift_s,
        })
    }

    /// Windows every epoch and stacks them. All epochs must share a shape.
    pub fn from_epochs(
        epochs: &[Array2<f64>],
        labels: Vec<ClassLabel>,
        fs: f64,
        window_s: f64,
        shift_s: f64,
    ) -> Result<Self> {
        let first = epochs
            .first()
            .ok_or_else(|| Error::Size("no epochs to window".into()))?;
        let shape = first.dim();
        let windows = epochs
            .iter()
            .map(|e| {
                if e.dim() != shape {
                    return Err(Error::Shape(format!(
                        "epoch shape {:?} differs from {:?}",
                        e.dim(),
                        shape
                    )));
                }
                slide(e.view(), fs, window_s, shift_s)
            })
            .collect::<Result<Vec<_>>>()?;
        let (nw, nc, ns) = windows[0].dim();
        let mut tensor = Array4::zeros((epochs.len(), nw, nc, ns));
        for (t, w) in windows.iter().enumerate() {
            tensor.slice_mut(s![t, .., .., ..]).assign(w);
        }
        Self::new(tensor, labels, fs, window_s, shift_s)
    }

    pub fn tensor(&self) -> &Array4<f64> {
        &self.tensor
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn window_length_s(&self) -> f64 {
        self.window_length_s
    }

    pub fn window_shift_s(&self) -> f64 {
        self.window_shift_s
    }

    pub fn n_trials(&self) -> usize {
        self.tensor.dim().0
    }

    pub fn n_windows(&self) -> usize {
        self.tensor.dim().1
    }

    pub fn n_channels(&self) -> usize {
        self.tensor.dim().2
    }

    pub fn window(&self, trial: usize, window: usize) -> ArrayView2<'_, f64> {
        self.tensor.slice(s![trial, window, .., ..])
    }

    /// Iterates `(label, window)` over all trials and windows.
    pub fn iter_windows(&self) -> impl Iterator<Item = (ClassLabel, ArrayView2<'_, f64>)> {
        (0..self.n_trials()).flat_map(move |t| {
            (0..self.n_windows()).map(move |w| (self.labels[t], self.window(t, w)))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub state: ProtocolState,
}

/// The state sequence of one trial, relative to the rest onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTimeline {
    intervals: Vec<StateInterval>,
    pub session: Session,
    pub transition: Transition,
}

impl ProtocolTimeline {
    pub fn new(intervals: Vec<StateInterval>, session: Session, transition: Transition) -> Result<Self> {
        let first = intervals
            .first()
            .ok_or_else(|| Error::Invalid("empty protocol timeline".into()))?;
        if first.start_s != 0.0 {
            return Err(Error::Invalid(format!(
                "timeline must start at 0 s, starts at {}",
                first.start_s
            )));
        }
        for iv in &intervals {
            if !(iv.end_s > iv.start_s) {
                return Err(Error::Invalid(format!(
                    "empty interval {}..{} for state {}",
                    iv.start_s, iv.end_s, iv.state
                )));
            }
        }
        for pair in intervals.windows(2) {
            if (pair[0].end_s - pair[1].start_s).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "intervals not contiguous at {} / {}",
                    pair[0].end_s, pair[1].start_s
                )));
            }
        }
        Ok(Self {
            intervals,
            session,
            transition,
        })
    }

    /// R 0-4 s, AO 4-8 s, idle 8-9 s, task 9-13 s.
    pub fn standard(session: Session, transition: Transition) -> Self {
        let iv = |start_s, end_s, state| StateInterval {
            start_s,
            end_s,
            state,
        };
        Self {
            intervals: vec![
                iv(0.0, 4.0, ProtocolState::R),
                iv(4.0, 8.0, ProtocolState::Ao),
                iv(8.0, 9.0, ProtocolState::Idle),
                iv(9.0, 13.0, ProtocolState::Task),
            ],
            session,
            transition,
        }
    }

    pub fn intervals(&self) -> &[StateInterval] {
        &self.intervals
    }

    pub fn duration_s(&self) -> f64 {
        self.intervals.last().map_or(0.0, |iv| iv.end_s)
    }

    /// State covering time `t_s`; intervals are half-open except the last.
    pub fn state_at(&self, t_s: f64) -> Option<ProtocolState> {
        let last = self.intervals.len() - 1;
        self.intervals
            .iter()
            .enumerate()
            .find(|(i, iv)| t_s >= iv.start_s && (t_s < iv.end_s || (*i == last && t_s <= iv.end_s)))
            .map(|(_, iv)| iv.state)
    }

    /// Start time of the first interval in `state`.
    pub fn onset_of(&self, state: ProtocolState) -> Option<f64> {
        self.intervals
            .iter()
            .find(|iv| iv.state == state)
            .map(|iv| iv.start_s)
    }
}
