//! Butterworth and notch design as cascaded second-order sections.
//!
//! Analog prototypes are prewarped and mapped through the bilinear
//! transform, then paired into biquads with unit leading denominator
//! coefficient.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pole radius at or above which a design is rejected as unstable.
pub const MAX_POLE_RADIUS: f64 = 1.0 - 1e-8;

/// Default notch quality factor.
pub const DEFAULT_NOTCH_Q: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FilterKind {
    Lowpass { cutoff_hz: f64 },
    Highpass { cutoff_hz: f64 },
    Bandpass { low_hz: f64, high_hz: f64 },
    Notch { center_hz: f64, q: f64 },
}

/// What to design: an order, a response type, and the sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IirSpec {
    pub order: usize,
    pub kind: FilterKind,
    pub fs: f64,
}

impl IirSpec {
    pub fn lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Self {
        Self { order, kind: FilterKind::Lowpass { cutoff_hz }, fs }
    }

    pub fn highpass(order: usize, cutoff_hz: f64, fs: f64) -> Self {
        Self { order, kind: FilterKind::Highpass { cutoff_hz }, fs }
    }

    pub fn bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Self {
        Self { order, kind: FilterKind::Bandpass { low_hz, high_hz }, fs }
    }

    /// Second-order band-reject. `order` is fixed at 2.
    pub fn notch(center_hz: f64, q: f64, fs: f64) -> Self {
        Self { order: 2, kind: FilterKind::Notch { center_hz, q }, fs }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::Design(format!("sample rate must be positive, got {}", self.fs)));
        }
        if self.order == 0 {
            return Err(Error::Design("filter order must be positive".into()));
        }
        let nyq = self.fs / 2.0;
        let inside = |f: f64| f.is_finite() && f > 0.0 && f < nyq;
        let edges: Vec<f64> = match self.kind {
            FilterKind::Lowpass { cutoff_hz } | FilterKind::Highpass { cutoff_hz } => vec![cutoff_hz],
            FilterKind::Bandpass { low_hz, high_hz } => {
                if !(low_hz < high_hz) {
                    return Err(Error::Design(format!(
                        "bandpass edges must increase, got {low_hz}-{high_hz} Hz"
                    )));
                }
                vec![low_hz, high_hz]
            }
            FilterKind::Notch { center_hz, q } => {
                if !(q.is_finite() && q > 0.0) {
                    return Err(Error::Design(format!("notch Q must be positive, got {q}")));
                }
                vec![center_hz]
            }
        };
        for f in edges {
            if !inside(f) {
                return Err(Error::Design(format!(
                    "edge {f} Hz must lie strictly inside (0, {nyq}) Hz"
                )));
            }
        }
        Ok(())
    }
}

/// One biquad: `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Section {
    /// Frequency response at normalized angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = Complex64::new(1.0, 0.0) + z1 * self.a[0] + z2 * self.a[1];
        num / den
    }

    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let [a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// A stable cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IirCoefficients {
    pub sections: Vec<Section>,
    pub spec: IirSpec,
}

impl IirCoefficients {
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.spec.fs;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
    }

    /// `|H(f)|` of a single forward pass.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.sections
            .iter()
            .map(Section::max_pole_radius)
            .fold(0.0, f64::max)
    }
}

fn prewarp(f_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f_hz / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = Complex64::new(2.0 * fs, 0.0);
    (k + s) / (k - s)
}

/// Normalized Butterworth prototype poles, left half plane.
fn butter_prototype(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Groups digital poles into conjugate pairs (or pairs of real poles) and
/// builds sections with the given zeros, two per section.
fn zpk_to_sections(mut zeros: Vec<f64>, poles: Vec<Complex64>) -> Result<Vec<Section>> {
    const IMAG_EPS: f64 = 1e-12;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > IMAG_EPS).collect();
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= IMAG_EPS)
        .map(|p| p.re)
        .collect();
    // Poles closest to the unit circle last, next to the output.
    complex.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    real.sort_by(|a, b| a.abs().total_cmp(&b.abs()));

    let mut pole_pairs: Vec<[f64; 2]> = complex
        .iter()
        .map(|p| [-2.0 * p.re, p.norm_sqr()])
        .collect();
    for chunk in real.chunks(2) {
        match *chunk {
            [p] => pole_pairs.push([-p, 0.0]),
            [p, q] => pole_pairs.push([-(p + q), p * q]),
            _ => unreachable!(),
        }
    }
    pole_pairs.sort_by(|a, b| a[1].abs().total_cmp(&b[1].abs()));

    let mut sections = Vec::with_capacity(pole_pairs.len());
    for a in pole_pairs {
        let b = match (zeros.pop(), zeros.pop()) {
            (Some(z1), Some(z2)) => [1.0, -(z1 + z2), z1 * z2],
            (Some(z1), None) => [1.0, -z1, 0.0],
            _ => [1.0, 0.0, 0.0],
        };
        sections.push(Section { b, a });
    }
    Ok(sections)
}

fn scale_to_unit_gain(sections: &mut [Section], w: f64) -> Result<()> {
    let h = sections
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(w))
        .norm();
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Design(format!("cannot normalize gain (|H| = {h})")));
    }
    // Spread the gain evenly so no section carries an extreme scale.
    let per = h.powf(-1.0 / sections.len() as f64);
    for s in sections.iter_mut() {
        for b in s.b.iter_mut() {
            *b *= per;
        }
    }
    Ok(())
}

/// Designs the filter described by `spec`.
///
/// Butterworth responses of order `n` for low/highpass and `2n` poles for a
/// bandpass of order `n`; the notch is a second-order band-reject with
/// -3 dB bandwidth `center / q`.
pub fn design(spec: &IirSpec) -> Result<IirCoefficients> {
    spec.validate()?;
    let fs = spec.fs;
    let proto = butter_prototype(spec.order);
    let sections = match spec.kind {
        FilterKind::Lowpass { cutoff_hz } => {
            let wc = prewarp(cutoff_hz, fs);
            let poles = proto.iter().map(|p| bilinear(p * wc, fs)).collect();
            let mut s = zpk_to_sections(vec![-1.0; spec.order], poles)?;
            scale_to_unit_gain(&mut s, 0.0)?;
            s
        }
        FilterKind::Highpass { cutoff_hz } => {
            let wc = prewarp(cutoff_hz, fs);
            let poles = proto.iter().map(|p| bilinear(wc / p, fs)).collect();
            let mut s = zpk_to_sections(vec![1.0; spec.order], poles)?;
            scale_to_unit_gain(&mut s, PI)?;
            s
        }
        FilterKind::Bandpass { low_hz, high_hz } => {
            let wl = prewarp(low_hz, fs);
            let wh = prewarp(high_hz, fs);
            let bw = wh - wl;
            let w0_sq = wl * wh;
            let mut poles = Vec::with_capacity(2 * spec.order);
            for p in &proto {
                // s^2 - p*bw*s + w0^2 = 0
                let half = p * bw / 2.0;
                let disc = (half * half - w0_sq).sqrt();
                poles.push(bilinear(half + disc, fs));
                poles.push(bilinear(half - disc, fs));
            }
            let mut zeros = Vec::with_capacity(2 * spec.order);
            for _ in 0..spec.order {
                zeros.push(1.0);
                zeros.push(-1.0);
            }
            let mut s = zpk_to_sections(zeros, poles)?;
            let w_center = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
            scale_to_unit_gain(&mut s, w_center)?;
            s
        }
        FilterKind::Notch { center_hz, q } => {
            let w0 = 2.0 * PI * center_hz / fs;
            let beta = (w0 / q / 2.0).tan();
            let gain = 1.0 / (1.0 + beta);
            vec![Section {
                b: [gain, -2.0 * gain * w0.cos(), gain],
                a: [-2.0 * gain * w0.cos(), 2.0 * gain - 1.0],
            }]
        }
    };
    for (i, s) in sections.iter().enumerate() {
        let r = s.max_pole_radius();
        if !(r < MAX_POLE_RADIUS) || s.b.iter().chain(s.a.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Design(format!(
                "section {i} of {:?} at {fs} Hz has pole radius {r:.12}",
                spec.kind
            )));
        }
    }
    Ok(IirCoefficients {
        sections,
        spec: *spec,
    })
}
