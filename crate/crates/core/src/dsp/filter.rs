//! Forward-backward (zero-phase) application of second-order sections.

use ndarray::{Array2, ArrayView2, Axis};

use super::design::{IirCoefficients, Section};
use crate::error::{Error, Result};

/// Reflection padding length: `3 * max(6 * sections, 100)` samples.
pub fn pad_length(coeffs: &IirCoefficients) -> usize {
    3 * (6 * coeffs.sections.len()).max(100)
}

/// Steady-state transposed direct-form II state for a unit step, per section,
/// with each section scaled by the DC gain of the sections before it.
fn step_initial_state(sections: &[Section]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sections
        .iter()
        .map(|s| {
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let z2 = b2 - a2 * dc;
            let z1 = b1 - a1 * dc + z2;
            let zi = [z1 * scale, z2 * scale];
            scale *= dc;
            zi
        })
        .collect()
}

/// Runs the cascade over `x` in place, starting from `state * x[0]`.
fn sosfilt_in_place(sections: &[Section], zi: &[[f64; 2]], x: &mut [f64]) {
    let x0 = x[0];
    for (s, z) in sections.iter().zip(zi) {
        let [b0, b1, b2] = s.b;
        let [a1, a2] = s.a;
        let mut z1 = z[0] * x0;
        let mut z2 = z[1] * x0;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z1;
            z1 = b1 * input - a1 * y + z2;
            z2 = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Causal single pass from zero initial state.
pub fn sosfilt(coeffs: &IirCoefficients, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    if y.is_empty() {
        return y;
    }
    let zero = vec![[0.0; 2]; coeffs.sections.len()];
    sosfilt_in_place(&coeffs.sections, &zero, &mut y);
    y
}

/// Forward then backward pass from zero state, in place, no padding.
pub(crate) fn forward_backward_unpadded(sections: &[Section], x: &mut [f64]) {
    if x.is_empty() {
        return;
    }
    let zero = vec![[0.0; 2]; sections.len()];
    sosfilt_in_place(sections, &zero, x);
    x.reverse();
    sosfilt_in_place(sections, &zero, x);
    x.reverse();
}

/// Odd-symmetric reflection of `pad` samples on both ends (`pad < x.len()`).
pub(crate) fn odd_reflect(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut ext = Vec::with_capacity(n + 2 * pad);
    let (first, last) = (x[0], x[n - 1]);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
    ext
}

/// Zero-phase filtering: odd-symmetric reflection padding, a forward pass
/// and a backward pass, each started from the step steady state. The
/// effective magnitude response is `|H|^2` with no phase shift.
pub fn filtfilt(coeffs: &IirCoefficients, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Size("cannot filter an empty signal".into()));
    }
    let pad = pad_length(coeffs).min(n - 1);
    let mut ext = odd_reflect(x, pad);
    let zi = step_initial_state(&coeffs.sections);
    sosfilt_in_place(&coeffs.sections, &zi, &mut ext);
    ext.reverse();
    sosfilt_in_place(&coeffs.sections, &zi, &mut ext);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

/// Applies [`filtfilt`] to every row of a `channels x samples` matrix.
pub fn filtfilt_rows(coeffs: &IirCoefficients, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mut out = Array2::zeros(x.raw_dim());
    for (src, mut dst) in x.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
        let row = match src.as_slice() {
            Some(s) => filtfilt(coeffs, s)?,
            None => filtfilt(coeffs, &src.to_vec())?,
        };
        dst.assign(&ndarray::ArrayView1::from(&row));
    }
    Ok(out)
}
