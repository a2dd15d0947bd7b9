//! Morlet time-frequency power, baseline-normalized ERSP and bootstrap
//! significance masks.

use std::f64::consts::PI;
use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wavelet support in standard deviations of the Gaussian envelope.
pub const SUPPORT_SIGMAS: f64 = 3.0;

/// Linear cycle ramp from `(f_lo, c_lo)` to `(f_hi, c_hi)`, clamped outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRamp {
    pub f_lo: f64,
    pub c_lo: f64,
    pub f_hi: f64,
    pub c_hi: f64,
}

impl Default for CycleRamp {
    fn default() -> Self {
        Self { f_lo: 4.0, c_lo: 3.0, f_hi: 40.0, c_hi: 15.0 }
    }
}

impl CycleRamp {
    pub fn cycles(&self, f: f64) -> f64 {
        let frac = ((f - self.f_lo) / (self.f_hi - self.f_lo)).clamp(0.0, 1.0);
        self.c_lo + (self.c_hi - self.c_lo) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErspConfig {
    pub freqs_hz: Vec<f64>,
    pub n_out_times: usize,
    /// Wavelet cycles per frequency, same length as `freqs_hz`.
    pub cycles: Vec<f64>,
    /// Baseline interval relative to rest onset, seconds.
    pub baseline_s: (f64, f64),
    /// Time of the first epoch sample relative to rest onset.
    pub epoch_start_s: f64,
    pub p: f64,
    pub n_boot: usize,
    pub seed: u64,
}

/// `n` linearly spaced frequencies from `lo` to `hi` inclusive.
pub fn linear_freqs(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl Default for ErspConfig {
    /// 40 frequencies over 4-40 Hz, 3 to 15 cycles, 200 output times,
    /// baseline (-1, 0) s, p = 0.05, 2000 resamples.
    fn default() -> Self {
        let freqs_hz = linear_freqs(4.0, 40.0, 40);
        let ramp = CycleRamp::default();
        let cycles = freqs_hz.iter().map(|f| ramp.cycles(*f)).collect();
        Self {
            freqs_hz,
            n_out_times: 200,
            cycles,
            baseline_s: (-1.0, 0.0),
            epoch_start_s: -2.0,
            p: 0.05,
            n_boot: 2000,
            seed: 0,
        }
    }
}

impl ErspConfig {
    /// Replaces the frequency grid and recomputes cycles from `ramp`.
    pub fn with_freqs(mut self, freqs_hz: Vec<f64>, ramp: CycleRamp) -> Self {
        self.cycles = freqs_hz.iter().map(|f| ramp.cycles(*f)).collect();
        self.freqs_hz = freqs_hz;
        self
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.freqs_hz.is_empty() || self.cycles.len() != self.freqs_hz.len() {
            return Err(Error::Invalid(format!(
                "{} frequencies but {} cycle counts",
                self.freqs_hz.len(),
                self.cycles.len()
            )));
        }
        if let Some(f) = self.freqs_hz.iter().find(|f| !(**f > 0.0 && **f < fs / 2.0)) {
            return Err(Error::Invalid(format!("frequency {f} Hz outside (0, {}) Hz", fs / 2.0)));
        }
        if let Some(c) = self.cycles.iter().find(|c| !(**c >= 1.0)) {
            return Err(Error::Invalid(format!("wavelet cycles {c} below 1")));
        }
        if self.n_out_times == 0 || self.n_boot == 0 {
            return Err(Error::Invalid("n_out_times and n_boot must be positive".into()));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Invalid(format!("significance level {} outside (0, 1)", self.p)));
        }
        if !(self.baseline_s.0 < self.baseline_s.1) {
            return Err(Error::Invalid(format!("empty baseline {:?}", self.baseline_s)));
        }
        Ok(())
    }
}

/// Peak-normalized complex Morlet wavelet: a sinusoid of amplitude A at the
/// centre frequency yields magnitude A.
struct Wavelet {
    re: Vec<f64>,
    im: Vec<f64>,
    half: usize,
}

impl Wavelet {
    fn new(f: f64, cycles: f64, fs: f64) -> Self {
        let sigma = cycles / (2.0 * PI * f);
        let half = (SUPPORT_SIGMAS * sigma * fs).ceil() as usize;
        let k: Vec<f64> = (0..=2 * half).map(|i| (i as f64 - half as f64) / fs).collect();
        let g: Vec<f64> = k.iter().map(|t| (-t * t / (2.0 * sigma * sigma)).exp()).collect();
        let norm = 2.0 / g.iter().sum::<f64>();
        let re = k.iter().zip(&g).map(|(t, g)| norm * g * (2.0 * PI * f * t).cos()).collect();
        let im = k.iter().zip(&g).map(|(t, g)| -norm * g * (2.0 * PI * f * t).sin()).collect();
        Self { re, im, half }
    }

    fn power_at(&self, x: &[f64], centre: usize) -> f64 {
        let seg = &x[centre - self.half..=centre + self.half];
        let (mut re, mut im) = (0.0, 0.0);
        for ((v, wr), wi) in seg.iter().zip(&self.re).zip(&self.im) {
            re += v * wr;
            im += v * wi;
        }
        re * re + im * im
    }
}

/// Output sample positions: `n_out` points spread over the span where the
/// widest wavelet fits inside the epoch.
fn output_centres(n_samples: usize, max_half: usize, n_out: usize) -> Vec<usize> {
    let lo = max_half as f64;
    let hi = (n_samples - 1 - max_half) as f64;
    if n_out == 1 {
        return vec![((lo + hi) / 2.0).round() as usize];
    }
    (0..n_out)
        .map(|i| (lo + (hi - lo) * i as f64 / (n_out - 1) as f64).round() as usize)
        .collect()
}

struct Layout {
    wavelets: Vec<Wavelet>,
    centres: Vec<usize>,
}

fn layout(n_samples: usize, fs: f64, config: &ErspConfig) -> Result<Layout> {
    config.validate(fs)?;
    let wavelets: Vec<Wavelet> = config
        .freqs_hz
        .iter()
        .zip(&config.cycles)
        .map(|(f, c)| Wavelet::new(*f, *c, fs))
        .collect();
    let (widest, w) = wavelets
        .iter()
        .enumerate()
        .max_by_key(|(_, w)| w.half)
        .expect("validated non-empty");
    if 2 * w.half + 1 > n_samples {
        return Err(Error::Size(format!(
            "{} Hz wavelet spans {} samples but the epoch has {n_samples}",
            config.freqs_hz[widest],
            2 * w.half + 1
        )));
    }
    let centres = output_centres(n_samples, w.half, config.n_out_times);
    Ok(Layout { wavelets, centres })
}

/// Times (relative to rest onset) of the output columns for an epoch of
/// `n_samples`.
pub fn output_times(n_samples: usize, fs: f64, config: &ErspConfig) -> Result<Vec<f64>> {
    let l = layout(n_samples, fs, config)?;
    Ok(l.centres.iter().map(|c| config.epoch_start_s + *c as f64 / fs).collect())
}

fn power_with(layout: &Layout, epoch: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    epoch
        .rows()
        .into_iter()
        .map(|row| {
            let x = row.to_vec();
            Array2::from_shape_fn((layout.wavelets.len(), layout.centres.len()), |(f, t)| {
                layout.wavelets[f].power_at(&x, layout.centres[t])
            })
        })
        .collect()
}

/// Per-channel `freqs x n_out_times` Morlet power of one epoch.
pub fn morlet_power(epoch: ArrayView2<'_, f64>, fs: f64, config: &ErspConfig) -> Result<Vec<Array2<f64>>> {
    let l = layout(epoch.ncols(), fs, config)?;
    Ok(power_with(&l, epoch))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelErsp {
    /// `freqs x times`, dB relative to the baseline.
    pub power_db: Array2<f64>,
    /// Cells whose deviation is significant; non-significant cells are kept.
    pub significant: Array2<bool>,
    pub baseline_power: Array1<f64>,
    /// Lower and upper null thresholds per frequency, dB.
    pub null_bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErspResult {
    pub freqs_hz: Vec<f64>,
    pub times_s: Vec<f64>,
    pub channels: Vec<ChannelErsp>,
}

impl ErspResult {
    pub fn significant_fraction(&self) -> f64 {
        let (hits, total) = self.channels.iter().fold((0usize, 0usize), |(h, n), c| {
            (h + c.significant.iter().filter(|s| **s).count(), n + c.significant.len())
        });
        hits as f64 / total as f64
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Trial-averaged ERSP per channel with a per-channel baseline.
///
/// The null distribution at each frequency is built by resampling baseline
/// time bins. Each surrogate pairs a cell, the mean power of `n_trials`
/// (trial, baseline bin) draws, with a reference, the mean of `n_trials`
/// trial baselines drawn with replacement, and records their dB ratio, so
/// the null carries the uncertainty of both the cell and the baseline
/// estimate. Cells outside the central `1 - p` of the null are marked
/// significant.
pub fn ersp(trials: &[Array2<f64>], fs: f64, config: &ErspConfig) -> Result<ErspResult> {
    if trials.len() < 2 {
        return Err(Error::Size(format!("ERSP needs at least 2 trials, got {}", trials.len())));
    }
    let dim = trials[0].dim();
    if let Some(bad) = trials.iter().find(|t| t.dim() != dim) {
        return Err(Error::Shape(format!("trial shape {:?} differs from {:?}", bad.dim(), dim)));
    }
    let l = layout(dim.1, fs, config)?;
    let times_s: Vec<f64> = l.centres.iter().map(|c| config.epoch_start_s + *c as f64 / fs).collect();
    let base: Vec<usize> = times_s
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= config.baseline_s.0 && **t < config.baseline_s.1)
        .map(|(i, _)| i)
        .collect();
    if base.is_empty() {
        return Err(Error::Invalid(format!(
            "baseline {:?} s contains no output time (epoch covers {:.3}..{:.3} s)",
            config.baseline_s,
            times_s[0],
            times_s[times_s.len() - 1]
        )));
    }

    // [trial][channel] -> freqs x times
    let powers: Vec<Vec<Array2<f64>>> = trials.iter().map(|t| power_with(&l, t.view())).collect();
    let n_trials = trials.len() as f64;
    let (n_f, n_t) = (config.freqs_hz.len(), times_s.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut channels = Vec::with_capacity(dim.0);
    for ch in 0..dim.0 {
        let mut mean = Array2::<f64>::zeros((n_f, n_t));
        for p in &powers {
            mean += &p[ch];
        }
        mean /= n_trials;
        let baseline_power =
            Array1::from_shape_fn(n_f, |f| base.iter().map(|t| mean[[f, *t]]).sum::<f64>() / base.len() as f64);
        if let Some(f) = baseline_power.iter().position(|b| !(*b > 0.0)) {
            return Err(Error::Degenerate(format!(
                "zero baseline power at {} Hz (channel {ch})",
                config.freqs_hz[f]
            )));
        }
        let power_db = Array2::from_shape_fn((n_f, n_t), |(f, t)| 10.0 * (mean[[f, t]] / baseline_power[f]).log10());

        let mut null_bounds = Vec::with_capacity(n_f);
        let mut null = vec![0.0; config.n_boot];
        let n = powers.len();
        for f in 0..n_f {
            let trial_base: Vec<f64> = powers
                .iter()
                .map(|p| base.iter().map(|t| p[ch][[f, *t]]).sum::<f64>() / base.len() as f64)
                .collect();
            for v in null.iter_mut() {
                let mut cell = 0.0;
                let mut reference = 0.0;
                for _ in 0..n {
                    let trial = rng.random_range(0..n);
                    cell += powers[trial][ch][[f, base[rng.random_range(0..base.len())]]];
                    reference += trial_base[rng.random_range(0..n)];
                }
                *v = 10.0 * (cell / reference).log10();
            }
            null.sort_by(f64::total_cmp);
            null_bounds.push((quantile(&null, config.p / 2.0), quantile(&null, 1.0 - config.p / 2.0)));
        }
        let significant = Array2::from_shape_fn((n_f, n_t), |(f, t)| {
            let v = power_db[[f, t]];
            v < null_bounds[f].0 || v > null_bounds[f].1
        });
        channels.push(ChannelErsp { power_db, significant, baseline_power, null_bounds });
    }
    Ok(ErspResult { freqs_hz: config.freqs_hz.clone(), times_s, channels })
}

/// Line-oriented text: a header of times, then one row per frequency led by
/// the frequency.
pub fn matrix_text(freqs_hz: &[f64], times_s: &[f64], values: ArrayView2<'_, f64>) -> String {
    let mut out = String::from("freq_hz");
    for t in times_s {
        let _ = write!(out, " {t}");
    }
    out.push('\n');
    for (f, row) in freqs_hz.iter().zip(values.rows()) {
        let _ = write!(out, "{f}");
        for v in row {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out
}
