//! Flat `key = value` configuration files. Units live in key names
//! (`window_s`, `erd_depth_db`); `#` starts a comment; lists are
//! comma-separated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use biodecode::eval::{IcaSettings, PipelineConfig, StreamConfig, Task};
use biodecode::features::BandSpec;
use biodecode::model::{Gamma, KernelKind};
use biodecode::onset::OnsetConfig;
use biodecode::recording::{Session, Transition};
use biodecode::tfa::{linear_freqs, CycleRamp, ErspConfig};

use crate::error::{CliError, CliResult};
use crate::fsio;

/// Every key the tool understands; anything else is a schema violation.
pub const KNOWN_KEYS: &[&str] = &[
    // pipeline
    "session", "task", "transition", "window_s", "shift_s", "bands_hz", "csp_pairs", "filter_order",
    "shrinkage", "select_k", "ica", "eog_threshold", "ica_seed", "standardize", "grid_kernels", "grid_c",
    "grid_gamma", "grid_folds", "grid_seed", "svm_tol", "svm_coef0",
    // preprocessing
    "notch_hz", "notch_q", "mi_band_lo_hz", "mi_band_hi_hz", "me_highpass_hz", "target_fs_hz",
    // onset
    "onset_h", "onset_e", "onset_reference_window_s", "sweep_h_min", "sweep_h_max",
    // streaming
    "arm_count", "reversible", "idle_as_ao",
    // ersp
    "ersp_freq_lo_hz", "ersp_freq_hi_hz", "ersp_n_freqs", "ersp_cycles_lo", "ersp_cycles_hi", "ersp_n_out_times",
    "ersp_baseline_start_s", "ersp_baseline_end_s", "ersp_epoch_start_s", "ersp_epoch_end_s", "ersp_p",
    "ersp_n_boot", "ersp_seed",
    // synthesis
    "subjects", "trials", "sessions", "transitions", "eeg_fs_hz", "emg_fs_hz", "erd_lo_hz", "erd_hi_hz",
    "erd_depth_db", "alpha_amplitude_uv", "noise_uv", "mrcp_amplitude_uv", "mrcp_start_s", "mrcp_rebound_s",
    "emg_latency_mean_s", "emg_latency_sd_s", "emg_noise_uv", "emg_burst_gain", "emg_burst_s", "emg_ramp_s", "blink_rate_hz",
    "blink_amplitude_uv", "seed",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
    path: PathBuf,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::schema(path, format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(CliError::schema(path, format!("line {}: unknown key '{key}'", i + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::schema(path, format!("line {}: duplicate key '{key}'", i + 1)));
            }
        }
        Ok(Self { entries, path: path.to_path_buf() })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&fsio::read_string(path)?, path)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn bad(&self, key: &str, why: impl Display) -> CliError {
        CliError::schema(&self.path, format!("key '{key}': {why}"))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| self.bad(key, format!("'{v}': {e}"))),
        }
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse().map_err(|e| self.bad(key, format!("'{v}': {e}"))))
            .transpose()
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| self.bad(key, format!("'{s}': {e}"))))
                    .collect()
            })
            .transpose()
    }

    fn gammas(&self) -> CliResult<Option<Vec<Gamma>>> {
        self.list::<String>("grid_gamma")?
            .map(|items| {
                items
                    .iter()
                    .map(|s| match s.as_str() {
                        "auto" => Ok(Gamma::Auto),
                        v => v.parse().map(Gamma::Value).map_err(|e| self.bad("grid_gamma", format!("'{v}': {e}"))),
                    })
                    .collect()
            })
            .transpose()
    }

    fn bands(&self) -> CliResult<Option<Vec<BandSpec>>> {
        self.list::<String>("bands_hz")?
            .map(|items| {
                items
                    .iter()
                    .map(|b| {
                        let (lo, hi) = b.split_once('-').ok_or_else(|| self.bad("bands_hz", format!("'{b}' is not lo-hi")))?;
                        let lo = lo.trim().parse().map_err(|e| self.bad("bands_hz", e))?;
                        let hi = hi.trim().parse().map_err(|e| self.bad("bands_hz", e))?;
                        Ok(BandSpec::new(lo, hi))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Pipeline settings for `task`, starting from the session defaults.
    pub fn pipeline(&self, task: Task, transition: Transition, seed: u64) -> CliResult<PipelineConfig> {
        let mut p = PipelineConfig::new(task, transition);
        if let Some(s) = self.get_opt::<Session>("session")? {
            if s != task.session() {
                return Err(CliError::Config(format!("task {task} cannot run on the {s} session")));
            }
        }
        p.window_s = self.get("window_s", p.window_s)?;
        p.shift_s = self.get("shift_s", p.shift_s)?;
        if let Some(b) = self.bands()? {
            p.bands = b;
        }
        p.m = self.get("csp_pairs", p.m)?;
        p.filter_order = self.get("filter_order", p.filter_order)?;
        p.shrinkage = self.get("shrinkage", p.shrinkage)?;
        p.select_k = self.get_opt("select_k")?;
        p.standardize = self.get("standardize", p.standardize)?;
        p.ica = if self.get("ica", true)? {
            Some(IcaSettings {
                eog_threshold: self.get("eog_threshold", IcaSettings::default().eog_threshold)?,
                seed: self.get("ica_seed", seed)?,
            })
        } else {
            None
        };
        if let Some(k) = self.list::<KernelKind>("grid_kernels")? {
            p.grid.kernels = k;
        }
        if let Some(c) = self.list("grid_c")? {
            p.grid.c = c;
        }
        if let Some(g) = self.gammas()? {
            p.grid.gamma = g;
        }
        p.grid.folds = self.get("grid_folds", p.grid.folds)?;
        p.grid.seed = self.get("grid_seed", seed)?;
        p.grid.tol = self.get("svm_tol", p.grid.tol)?;
        p.grid.coef0 = self.get("svm_coef0", p.grid.coef0)?;
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn onset(&self) -> CliResult<OnsetConfig> {
        let d = OnsetConfig::default();
        let c = OnsetConfig {
            h: self.get("onset_h", d.h)?,
            e: self.get("onset_e", d.e)?,
            reference_window_s: self.get("onset_reference_window_s", d.reference_window_s)?,
        };
        c.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(c)
    }

    pub fn stream(&self, session: Session) -> CliResult<StreamConfig> {
        let base = match session {
            Session::Mi => StreamConfig::mi(),
            Session::Me => StreamConfig::me(),
        };
        Ok(StreamConfig {
            arm_count: self.get("arm_count", base.arm_count)?,
            reversible: self.get("reversible", base.reversible)?,
            idle_as_ao: self.get("idle_as_ao", base.idle_as_ao)?,
            ..base
        })
    }

    pub fn preprocess(&self) -> CliResult<PreprocessConfig> {
        let d = PreprocessConfig::default();
        Ok(PreprocessConfig {
            notch_hz: self.get("notch_hz", d.notch_hz)?,
            notch_q: self.get("notch_q", d.notch_q)?,
            mi_band_hz: (self.get("mi_band_lo_hz", d.mi_band_hz.0)?, self.get("mi_band_hi_hz", d.mi_band_hz.1)?),
            me_highpass_hz: self.get("me_highpass_hz", d.me_highpass_hz)?,
            target_fs_hz: self.get("target_fs_hz", d.target_fs_hz)?,
        })
    }

    /// ERSP settings plus the epoch end relative to rest onset.
    pub fn ersp(&self, seed: u64) -> CliResult<(ErspConfig, f64)> {
        let d = ErspConfig::default();
        let ramp = CycleRamp {
            f_lo: self.get("ersp_freq_lo_hz", 4.0)?,
            f_hi: self.get("ersp_freq_hi_hz", 40.0)?,
            c_lo: self.get("ersp_cycles_lo", 3.0)?,
            c_hi: self.get("ersp_cycles_hi", 15.0)?,
        };
        let freqs = linear_freqs(ramp.f_lo, ramp.f_hi, self.get("ersp_n_freqs", d.freqs_hz.len())?);
        let cfg = ErspConfig {
            n_out_times: self.get("ersp_n_out_times", d.n_out_times)?,
            baseline_s: (
                self.get("ersp_baseline_start_s", d.baseline_s.0)?,
                self.get("ersp_baseline_end_s", d.baseline_s.1)?,
            ),
            epoch_start_s: self.get("ersp_epoch_start_s", d.epoch_start_s)?,
            p: self.get("ersp_p", d.p)?,
            n_boot: self.get("ersp_n_boot", d.n_boot)?,
            seed: self.get("ersp_seed", seed)?,
            ..d
        }
        .with_freqs(freqs, ramp);
        Ok((cfg, self.get("ersp_epoch_end_s", 13.0)?))
    }
}

/// Filtering and resampling applied by `preprocess`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PreprocessConfig {
    pub notch_hz: f64,
    pub notch_q: f64,
    /// MI-session EEG/EOG band-pass.
    pub mi_band_hz: (f64, f64),
    /// ME-session EEG/EOG high-pass.
    pub me_highpass_hz: f64,
    pub target_fs_hz: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { notch_hz: 50.0, notch_q: 30.0, mi_band_hz: (1.0, 40.0), me_highpass_hz: 0.05, target_fs_hz: 250.0 }
    }
}
