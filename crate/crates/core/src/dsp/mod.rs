//! Filtering, resampling and EMG envelope extraction.

mod design;
mod filter;

pub use design::{
    design, FilterKind, IirCoefficients, IirSpec, Section, DEFAULT_NOTCH_Q, MAX_POLE_RADIUS,
};
pub use filter::{filtfilt, filtfilt_rows, pad_length, sosfilt};
use filter::{forward_backward_unpadded, odd_reflect};

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Order of the resampler's anti-alias lowpass.
pub const RESAMPLE_AA_ORDER: usize = 8;
/// Anti-alias cutoff as a fraction of the lower Nyquist rate.
pub const RESAMPLE_AA_FRACTION: f64 = 0.9;

/// Band and smoothing edges of the EMG linear envelope.
pub const EMG_BAND_HZ: (f64, f64) = (15.0, 124.0);
pub const EMG_SMOOTH_HZ: f64 = 3.0;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// `(up, down)` with `up / down = to / from` in lowest terms.
fn rational_ratio(from: f64, to: f64) -> (u64, u64) {
    let integral = |v: f64| (v - v.round()).abs() < 1e-9 && v.round() <= 1e9;
    if integral(from) && integral(to) {
        let (f, t) = (from.round() as u64, to.round() as u64);
        let g = gcd(f, t);
        return (t / g, f / g);
    }
    // Continued-fraction approximation with bounded denominator.
    let x = to / from;
    let (mut h0, mut h1, mut k0, mut k1) = (0u64, 1u64, 1u64, 0u64);
    let mut r = x;
    loop {
        let a = r.floor();
        let (h2, k2) = (a as u64 * h1 + h0, a as u64 * k1 + k0);
        if k2 > 10_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac < 1e-12 || ((h1 as f64 / k1 as f64) - x).abs() < 1e-12 * x {
            break;
        }
        r = 1.0 / frac;
    }
    (h1.max(1), k1.max(1))
}

/// Rational resampling from `fs_from` to `fs_to`.
///
/// Zero-stuffs by `L`, applies a zero-phase 8th-order Butterworth lowpass at
/// 0.9x the lower Nyquist rate, and keeps every `M`-th sample, with
/// `L / M = fs_to / fs_from`. Output length is `round(len * fs_to / fs_from)`.
pub fn resample(x: &[f64], fs_from: f64, fs_to: f64) -> Result<Vec<f64>> {
    if !(fs_from > 0.0 && fs_to > 0.0) {
        return Err(Error::Invalid(format!(
            "sample rates must be positive, got {fs_from} -> {fs_to}"
        )));
    }
    if x.is_empty() {
        return Err(Error::Size("cannot resample an empty signal".into()));
    }
    let (up, down) = rational_ratio(fs_from, fs_to);
    if up == down {
        return Ok(x.to_vec());
    }
    let (up, down) = (up as usize, down as usize);
    let fs_up = fs_from * up as f64;
    let cutoff = RESAMPLE_AA_FRACTION * fs_from.min(fs_to) / 2.0;
    let aa = design(&IirSpec::lowpass(RESAMPLE_AA_ORDER, cutoff, fs_up))?;

    // Pad before zero-stuffing; reflecting the stuffed signal would turn
    // the inserted zeros into 2*x[0].
    let pad = ((20.0 * fs_from / cutoff).ceil() as usize).max(64).min(x.len() - 1);
    let padded = odd_reflect(x, pad);
    let mut stuffed = vec![0.0; padded.len() * up];
    for (i, v) in padded.iter().enumerate() {
        stuffed[i * up] = v * up as f64;
    }
    forward_backward_unpadded(&aa.sections, &mut stuffed);
    let offset = pad * up;
    let out_len = ((x.len() * up) as f64 / down as f64).round() as usize;
    Ok((0..out_len).map(|k| stuffed[offset + k * down]).collect())
}

/// [`resample`] applied to every row.
pub fn resample_rows(x: ArrayView2<'_, f64>, fs_from: f64, fs_to: f64) -> Result<Array2<f64>> {
    let rows = x
        .axis_iter(Axis(0))
        .map(|r| resample(&r.to_vec(), fs_from, fs_to))
        .collect::<Result<Vec<_>>>()?;
    let n = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((x.nrows(), n), flat).map_err(|e| Error::Shape(e.to_string()))
}

/// Teager-Kaiser energy `x[n]^2 - x[n-1] x[n+1]`; the two endpoints copy
/// their nearest interior value.
pub fn tkeo(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::Size(format!("TKEO needs at least 3 samples, got {n}")));
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        out[i] = x[i] * x[i] - x[i - 1] * x[i + 1];
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    Ok(out)
}

/// Linear envelope of one EMG channel: TKEO, 15-124 Hz bandpass,
/// rectification, 3 Hz lowpass. Filters are 2nd-order Butterworth applied
/// forward-backward. Lowpass ringing may dip below zero and is kept.
pub fn envelope(emg: &[f64], fs: f64) -> Result<Vec<f64>> {
    if fs < 250.0 {
        return Err(Error::Invalid(format!(
            "EMG envelope needs fs >= 250 Hz for the {} Hz edge, got {fs}",
            EMG_BAND_HZ.1
        )));
    }
    let band = design(&IirSpec::bandpass(2, EMG_BAND_HZ.0, EMG_BAND_HZ.1, fs))?;
    let smooth = design(&IirSpec::lowpass(2, EMG_SMOOTH_HZ, fs))?;
    let energy = tkeo(emg)?;
    let rectified: Vec<f64> = filtfilt(&band, &energy)?.into_iter().map(f64::abs).collect();
    filtfilt(&smooth, &rectified)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            sab += (x - ma) * (y - mb);
            saa += (x - ma).powi(2);
            sbb += (y - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn ratio_reduction() {
        assert_eq!(rational_ratio(1200.0, 250.0), (5, 24));
        assert_eq!(rational_ratio(250.0, 1200.0), (24, 5));
        assert_eq!(rational_ratio(250.0, 250.0), (1, 1));
        assert_eq!(rational_ratio(100.5, 201.0), (2, 1));
    }

    #[test]
    fn resample_preserves_duration() {
        let x = vec![0.5; 1200];
        assert_eq!(resample(&x, 1200.0, 250.0).unwrap().len(), 250);
        assert_eq!(resample(&vec![0.0; 1201], 1200.0, 250.0).unwrap().len(), 250);
    }

    #[test]
    fn resample_identity() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        assert_eq!(resample(&x, 250.0, 250.0).unwrap(), x);
    }

    #[test]
    fn resampled_sine_matches_analytic_samples() {
        let x: Vec<f64> = (0..6000)
            .map(|i| (2.0 * PI * 10.0 * i as f64 / 1200.0).sin())
            .collect();
        let y = resample(&x, 1200.0, 250.0).unwrap();
        let truth: Vec<f64> = (0..y.len())
            .map(|i| (2.0 * PI * 10.0 * i as f64 / 250.0).sin())
            .collect();
        assert!(corr(&y, &truth) > 0.99);
        // Amplitude survives the anti-alias filter in its passband.
        let inner = &y[250..1000];
        let peak = inner.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 0.01, "peak {peak}");
    }

    #[test]
    fn resample_round_trip_of_band_limited_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let white: Vec<f64> = (0..5000).map(|_| noise.sample(&mut rng)).collect();
        let lp = design(&IirSpec::lowpass(4, 30.0, 250.0)).unwrap();
        let x = filtfilt(&lp, &white).unwrap();
        let up = resample(&x, 250.0, 1200.0).unwrap();
        let back = resample(&up, 1200.0, 250.0).unwrap();
        assert_eq!(back.len(), x.len());
        assert!(corr(&x, &back) > 0.999);
    }

    #[test]
    fn tkeo_identities() {
        assert!(tkeo(&[2.5; 20]).unwrap().iter().all(|v| v.abs() < 1e-12));
        let ramp: Vec<f64> = (0..50).map(|n| n as f64).collect();
        assert!(tkeo(&ramp).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(matches!(tkeo(&[1.0, 2.0]), Err(Error::Size(_))));
    }

    proptest! {
        #[test]
        fn tkeo_of_sinusoid_is_constant(amp in 0.1f64..10.0, omega in 0.01f64..3.0, phase in 0.0f64..6.28) {
            let x: Vec<f64> = (0..400).map(|n| amp * (omega * n as f64 + phase).sin()).collect();
            let y = tkeo(&x).unwrap();
            let expected = amp * amp * omega.sin().powi(2);
            let interior = &y[1..399];
            let mean = interior.iter().sum::<f64>() / interior.len() as f64;
            let var = interior.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (interior.len() - 1) as f64;
            prop_assert!(var < 1e-9);
            prop_assert!(interior.iter().all(|v| (v - expected).abs() < 1e-9));
        }
    }

    #[test]
    fn envelope_of_silence_and_dc() {
        assert!(envelope(&vec![0.0; 1000], 250.0).unwrap().iter().all(|v| *v == 0.0));
        let dc = envelope(&vec![4.2; 1000], 250.0).unwrap();
        assert!(dc.iter().all(|v| v.abs() < 1e-9));
        assert!(envelope(&vec![0.0; 100], 200.0).is_err());
    }

    #[test]
    fn envelope_peaks_inside_burst() {
        // A pure tone has constant TKEO, which the 15 Hz highpass edge
        // removes; muscle bursts are modelled as 60 Hz narrowband noise.
        let fs = 250.0;
        let n = 2500;
        let (b0, b1) = (1000usize, 1500usize);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let white: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
        let carrier = filtfilt(&design(&IirSpec::bandpass(2, 50.0, 70.0, fs)).unwrap(), &white).unwrap();
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let taper = if (b0..b1).contains(&i) {
                    (PI * (i - b0) as f64 / (b1 - b0) as f64).sin().powi(2)
                } else {
                    0.0
                };
                5.0 * taper * carrier[i] + 0.01 * noise.sample(&mut rng)
            })
            .collect();
        let env = envelope(&x, fs).unwrap();
        let argmax = (0..n).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
        assert!((b0..b1).contains(&argmax));
        let center = (b0 + b1) as f64 / 2.0;
        assert!((argmax as f64 - center).abs() <= 0.25 * fs, "argmax {argmax}");
    }

}
