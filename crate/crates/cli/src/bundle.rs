//! On-disk recording bundles: `header.json`, a little-endian f32
//! channel-major payload `data.f32`, and `events.csv` with one
//! `sample,label,transition` line per event.

use std::path::{Path, PathBuf};

use biodecode::recording::{ChannelMeta, Event, EventLabel, Recording, Session, Transition};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fsio;

pub const HEADER_FILE: &str = "header.json";
pub const DATA_FILE: &str = "data.f32";
pub const EVENTS_FILE: &str = "events.csv";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub subject: String,
    pub session: Session,
    pub transition: Transition,
    pub fs: f64,
    pub n_samples: usize,
    pub channels: Vec<ChannelMeta>,
}

/// A recording plus the metadata that travels with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub subject: String,
    pub session: Session,
    pub transition: Transition,
    pub recording: Recording,
}

impl Bundle {
    pub fn header(&self) -> Header {
        Header {
            format_version: FORMAT_VERSION,
            subject: self.subject.clone(),
            session: self.session,
            transition: self.transition,
            fs: self.recording.fs(),
            n_samples: self.recording.n_samples(),
            channels: self.recording.channels().to_vec(),
        }
    }
}

pub fn encode_payload(data: &Array2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() * 4);
    for row in data.rows() {
        for v in row {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

pub fn encode_events(events: &[Event]) -> String {
    events
        .iter()
        .map(|e| format!("{},{},{}\n", e.sample, e.label, e.transition))
        .collect()
}

pub fn decode_events(path: &Path, text: &str) -> CliResult<Vec<Event>> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |why: &str| CliError::schema(path, format!("line {}: {why}: '{line}'", i + 1));
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(bad("expected sample,label,transition"));
        }
        let sample = parts[0].parse().map_err(|_| bad("bad sample index"))?;
        let label: EventLabel = parts[1].parse().map_err(|_| bad("unknown event label"))?;
        let transition: Transition = parts[2].parse().map_err(|_| bad("unknown transition"))?;
        events.push(Event::new(sample, label, transition));
    }
    if events.windows(2).any(|w| w[0].sample > w[1].sample) {
        return Err(CliError::schema(path, "events are not sorted by sample"));
    }
    Ok(events)
}

/// The three files of a bundle, encoded.
pub fn encode_bundle(bundle: &Bundle) -> [(&'static str, Vec<u8>); 3] {
    let header = serde_json::to_vec_pretty(&bundle.header()).expect("header serializes");
    [
        (HEADER_FILE, header),
        (DATA_FILE, encode_payload(bundle.recording.data())),
        (EVENTS_FILE, encode_events(bundle.recording.events()).into_bytes()),
    ]
}

/// Writes the bundle directory atomically: files go to a temporary sibling
/// directory that is renamed into place.
pub fn write_bundle(dir: &Path, bundle: &Bundle) -> CliResult<()> {
    fsio::write_dir_atomic(dir, &encode_bundle(bundle))
}

pub fn read_bundle(dir: &Path) -> CliResult<Bundle> {
    let header_path = dir.join(HEADER_FILE);
    let header_bytes = fsio::read(&header_path)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| CliError::schema(&header_path, e.to_string()))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CliError::schema(
            &header_path,
            format!("format version {} (expected {FORMAT_VERSION})", header.format_version),
        ));
    }
    let data_path = dir.join(DATA_FILE);
    let payload = fsio::read(&data_path)?;
    let expected = header.channels.len() * header.n_samples * 4;
    if payload.len() != expected {
        return Err(CliError::schema(
            &data_path,
            format!(
                "payload has {} bytes, header implies {} channels x {} samples x 4 = {expected}",
                payload.len(),
                header.channels.len(),
                header.n_samples
            ),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let data = Array2::from_shape_vec((header.channels.len(), header.n_samples), values)
        .map_err(|e| CliError::schema(&data_path, e.to_string()))?;
    let events_path = dir.join(EVENTS_FILE);
    let events = decode_events(&events_path, &fsio::read_string(&events_path)?)?;
    let recording = Recording::new(header.channels, header.fs, data, events, true)
        .map_err(|e| CliError::schema(dir, e.to_string()))?;
    Ok(Bundle { subject: header.subject, session: header.session, transition: header.transition, recording })
}

/// Every file that makes up the bundle at `dir`.
pub fn bundle_files(dir: &Path) -> Vec<PathBuf> {
    [HEADER_FILE, DATA_FILE, EVENTS_FILE].iter().map(|f| dir.join(f)).collect()
}
