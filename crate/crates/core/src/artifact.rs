//! Ocular artifact removal with deflation FastICA.
//!
//! ICA is fitted on the EEG channels. Components whose time course
//! correlates with an EOG channel at or above a threshold are rejected and
//! their back-projection is subtracted from the EEG.

use std::collections::BTreeSet;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pearson, symmetric_eigen_desc};

pub const MAX_ITERATIONS: usize = 500;
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Minimum samples per channel accepted by [`fastica_fit`].
pub const MIN_SAMPLES_PER_CHANNEL: usize = 20;
pub const DEFAULT_EOG_THRESHOLD: f64 = 0.7;
/// Eigenvalues below this fraction of the largest count as rank loss.
const RANK_TOL: f64 = 1e-10;

/// Centering and whitening of `channels x samples` data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitening {
    pub mean: Array1<f64>,
    /// `components x channels`, maps centered data to unit covariance.
    pub matrix: Array2<f64>,
    /// `channels x components`, the inverse map on the retained subspace.
    pub dewhitening: Array2<f64>,
    /// Covariance eigenvalues of the retained directions, descending.
    pub variances: Array1<f64>,
}

impl Whitening {
    pub fn fit(x: ArrayView2<'_, f64>, n_components: usize) -> Result<Self> {
        let (channels, samples) = x.dim();
        if channels < 2 {
            return Err(Error::Dimension(format!(
                "ICA needs at least 2 channels, got {channels}"
            )));
        }
        if n_components == 0 || n_components > channels {
            return Err(Error::Dimension(format!(
                "{n_components} components requested from {channels} channels"
            )));
        }
        if samples < MIN_SAMPLES_PER_CHANNEL * channels {
            return Err(Error::Size(format!(
                "ICA needs at least {} samples for {channels} channels, got {samples}",
                MIN_SAMPLES_PER_CHANNEL * channels
            )));
        }
        let mean = x.mean_axis(Axis(1)).expect("non-empty");
        let centered = &x - &mean.view().insert_axis(Axis(1));
        let cov = centered.dot(&centered.t()) / samples as f64;
        let (vals, vecs) = symmetric_eigen_desc(cov.view())?;
        let top = vals[0];
        let rank = vals.iter().filter(|&&v| v > RANK_TOL * top.max(0.0)).count();
        if top <= 0.0 || rank < n_components {
            return Err(Error::Dimension(format!(
                "data rank {rank} below the {n_components} requested components"
            )));
        }
        let mut matrix = Array2::zeros((n_components, channels));
        let mut dewhitening = Array2::zeros((channels, n_components));
        for k in 0..n_components {
            let (sd, v) = (vals[k].sqrt(), vecs.column(k));
            matrix.row_mut(k).assign(&(&v / sd));
            dewhitening.column_mut(k).assign(&(&v * sd));
        }
        Ok(Self {
            mean,
            matrix,
            dewhitening,
            variances: vals.slice(s![..n_components]).to_owned(),
        })
    }

    pub fn apply(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.matrix.dot(&(&x - &self.mean.view().insert_axis(Axis(1))))
    }
}

/// Per-component fixed-point diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentFit {
    pub iterations: usize,
    pub final_change: f64,
}

/// A fitted ICA model and its ocular flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcaDecomposition {
    pub whitening: Whitening,
    /// Orthonormal rotation in whitened space, `components x components`.
    pub rotation: Array2<f64>,
    /// `components x channels`: sources = unmixing * (x - mean).
    pub unmixing: Array2<f64>,
    /// `channels x components`: back-projection of sources.
    pub mixing: Array2<f64>,
    /// `components x eog channels` absolute correlations, once flagged.
    pub component_scores: Option<Array2<f64>>,
    pub rejected: BTreeSet<usize>,
    pub fits: Vec<ComponentFit>,
}

impl IcaDecomposition {
    pub fn n_components(&self) -> usize {
        self.unmixing.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.unmixing.ncols()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.whitening.mean
    }

    /// Component time courses of `eeg`.
    pub fn sources(&self, eeg: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_channels(eeg)?;
        Ok(self
            .unmixing
            .dot(&(&eeg - &self.mean().view().insert_axis(Axis(1)))))
    }

    fn check_channels(&self, eeg: ArrayView2<'_, f64>) -> Result<()> {
        if eeg.nrows() != self.n_channels() {
            return Err(Error::Shape(format!(
                "decomposition fitted on {} channels, data has {}",
                self.n_channels(),
                eeg.nrows()
            )));
        }
        Ok(())
    }

    /// Records EOG scores and the rejected set.
    pub fn set_flags(&mut self, flags: OcularFlags) -> Result<()> {
        if flags.scores.nrows() != self.n_components() {
            return Err(Error::Shape(format!(
                "{} component scores for {} components",
                flags.scores.nrows(),
                self.n_components()
            )));
        }
        self.component_scores = Some(flags.scores);
        self.rejected = flags.rejected;
        Ok(())
    }
}

fn logcosh_update(w: &Array1<f64>, z: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = z.ncols() as f64;
    let proj = w.dot(&z);
    let g = proj.mapv(f64::tanh);
    let g_prime_mean = g.iter().map(|t| 1.0 - t * t).sum::<f64>() / n;
    z.dot(&g) / n - w * g_prime_mean
}

/// Newton step of size `mu` on the log-cosh contrast. At `mu = 1` it points
/// along [`logcosh_update`] up to sign; smaller steps damp the two-cycles
/// the plain fixed point falls into on near-Gaussian subspaces.
fn logcosh_step(w: &Array1<f64>, z: ArrayView2<'_, f64>, mu: f64) -> Array1<f64> {
    let n = z.ncols() as f64;
    let proj = w.dot(&z);
    let g = proj.mapv(f64::tanh);
    let beta = proj.iter().zip(&g).map(|(p, t)| p * t).sum::<f64>() / n;
    let g_prime_mean = g.iter().map(|t| 1.0 - t * t).sum::<f64>() / n;
    let gradient = z.dot(&g) / n - w * beta;
    w - &(gradient * (mu / (g_prime_mean - beta)))
}

fn sign_free_distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (2.0 - 2.0 * a.dot(b).abs()).max(0.0).sqrt()
}

fn orthogonalize(w: &mut Array1<f64>, found: &Array2<f64>, count: usize) {
    for k in 0..count {
        let row = found.row(k);
        let proj = w.dot(&row);
        w.scaled_add(-proj, &row);
    }
}

fn normalize(w: &mut Array1<f64>) -> Result<()> {
    let norm = w.dot(w).sqrt();
    if !(norm.is_finite() && norm > 1e-300) {
        return Err(Error::Degenerate("ICA weight vector collapsed to zero".into()));
    }
    *w /= norm;
    Ok(())
}

/// Deflation FastICA with the log-cosh contrast (a = 1).
///
/// Data are centered and whitened internally. Each weight vector iterates
/// until it moves by less than [`CONVERGENCE_TOL`] (up to sign) or
/// [`MAX_ITERATIONS`] pass, which is reported as non-convergence. The step
/// is halved when the iteration cycles or stalls past half the budget.
/// Components come back ordered by explained variance, descending, and the
/// result is a deterministic function of `seed`.
pub fn fastica_fit(eeg: ArrayView2<'_, f64>, n_components: usize, seed: u64) -> Result<IcaDecomposition> {
    let whitening = Whitening::fit(eeg, n_components)?;
    let z = whitening.apply(eeg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rotation = Array2::<f64>::zeros((n_components, n_components));
    let mut fits = Vec::with_capacity(n_components);

    for p in 0..n_components {
        let mut w = Array1::from_iter((0..n_components).map(|_| StandardNormal.sample(&mut rng)));
        orthogonalize(&mut w, &rotation, p);
        normalize(&mut w)?;
        let mut change = f64::INFINITY;
        let mut iterations = 0;
        let mut mu = 1.0;
        let mut before: Option<Array1<f64>> = None;
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let mut next = if mu < 1.0 { logcosh_step(&w, z.view(), mu) } else { logcosh_update(&w, z.view()) };
            orthogonalize(&mut next, &rotation, p);
            normalize(&mut next)?;
            change = sign_free_distance(&next, &w);
            if change < CONVERGENCE_TOL {
                w = next;
                break;
            }
            // Stabilization: halve the step on a two-cycle, and once when
            // half the budget is spent.
            let cycling = before.as_ref().is_some_and(|b| sign_free_distance(&next, b) < CONVERGENCE_TOL);
            if cycling || (iterations == MAX_ITERATIONS / 2 && mu == 1.0) {
                mu *= 0.5;
            }
            before = Some(std::mem::replace(&mut w, next));
        }
        if change >= CONVERGENCE_TOL {
            return Err(Error::NonConvergence {
                iterations,
                residual: change,
                context: format!("FastICA component {p} of {n_components}"),
            });
        }
        rotation.row_mut(p).assign(&w);
        fits.push(ComponentFit {
            iterations,
            final_change: change,
        });
    }

    let unmixing = rotation.dot(&whitening.matrix);
    let mixing = whitening.dewhitening.dot(&rotation.t());
    // Order by back-projected variance (sources have unit variance).
    let mut order: Vec<usize> = (0..n_components).collect();
    let power: Vec<f64> = (0..n_components)
        .map(|k| mixing.column(k).dot(&mixing.column(k)))
        .collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]));

    Ok(IcaDecomposition {
        rotation: rotation.select(Axis(0), &order),
        unmixing: unmixing.select(Axis(0), &order),
        mixing: mixing.select(Axis(1), &order),
        whitening,
        component_scores: None,
        rejected: BTreeSet::new(),
        fits: order.iter().map(|&k| fits[k].clone()).collect(),
    })
}

/// EOG correlation scores and the components they reject.
#[derive(Debug, Clone, PartialEq)]
pub struct OcularFlags {
    pub scores: Array2<f64>,
    pub rejected: BTreeSet<usize>,
}

/// Flags component `j` when `max_k |r(source_j, eog_k)| >= threshold`.
/// Constant series correlate as 0.
pub fn flag_ocular(
    dec: &IcaDecomposition,
    sources: ArrayView2<'_, f64>,
    eog: ArrayView2<'_, f64>,
    threshold: f64,
) -> Result<OcularFlags> {
    if sources.nrows() != dec.n_components() {
        return Err(Error::Shape(format!(
            "{} source rows for {} components",
            sources.nrows(),
            dec.n_components()
        )));
    }
    if sources.ncols() != eog.ncols() {
        return Err(Error::Shape(format!(
            "sources have {} samples, EOG has {}",
            sources.ncols(),
            eog.ncols()
        )));
    }
    let eog_rows: Vec<Vec<f64>> = eog.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let mut scores = Array2::zeros((sources.nrows(), eog.nrows()));
    let mut rejected = BTreeSet::new();
    for (j, src) in sources.axis_iter(Axis(0)).enumerate() {
        let src = src.to_vec();
        for (k, e) in eog_rows.iter().enumerate() {
            scores[[j, k]] = pearson(&src, e).abs();
        }
        if scores.row(j).iter().any(|&r| r >= threshold) {
            rejected.insert(j);
        }
    }
    Ok(OcularFlags { scores, rejected })
}

/// Removes the rejected components' back-projection from `eeg`.
/// With nothing rejected the input is returned unchanged.
pub fn reconstruct(dec: &IcaDecomposition, eeg: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    dec.check_channels(eeg)?;
    if dec.rejected.is_empty() {
        return Ok(eeg.to_owned());
    }
    let rej: Vec<usize> = dec.rejected.iter().copied().collect();
    if let Some(&bad) = rej.iter().find(|&&j| j >= dec.n_components()) {
        return Err(Error::Shape(format!("rejected component {bad} out of range")));
    }
    let sources = dec.sources(eeg)?.select(Axis(0), &rej);
    let artifact = dec.mixing.select(Axis(1), &rej).dot(&sources);
    Ok(&eeg - &artifact)
}

/// Fits ICA on `eeg`, flags components against `eog`, and returns the
/// decomposition with its flags set.
pub fn fit_ocular_model(
    eeg: ArrayView2<'_, f64>,
    eog: ArrayView2<'_, f64>,
    threshold: f64,
    seed: u64,
) -> Result<IcaDecomposition> {
    let mut dec = fastica_fit(eeg, eeg.nrows(), seed)?;
    let sources = dec.sources(eeg)?;
    let flags = flag_ocular(&dec, sources.view(), eog, threshold)?;
    dec.set_flags(flags)?;
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::Rng;
    use std::f64::consts::PI;

    fn sine_and_sawtooth(n: usize) -> Array2<f64> {
        Array::from_shape_fn((2, n), |(c, t)| {
            let t = t as f64;
            if c == 0 {
                (2.0 * PI * t / 97.0).sin()
            } else {
                2.0 * ((t / 61.0) % 1.0) - 1.0
            }
        })
    }

    fn best_abs_corr(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Vec<f64> {
        a.axis_iter(Axis(0))
            .map(|x| {
                b.axis_iter(Axis(0))
                    .map(|y| pearson(&x.to_vec(), &y.to_vec()).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    #[test]
    fn unmixes_sine_and_sawtooth() {
        let truth = sine_and_sawtooth(5000);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mix = Array::from_shape_fn((2, 2), |_| rng.random_range(-1.0..1.0));
        let x = mix.dot(&truth);
        let dec = fastica_fit(x.view(), 2, 1).unwrap();
        let s = dec.sources(x.view()).unwrap();
        for r in best_abs_corr(truth.view(), s.view()) {
            assert!(r > 0.95, "recovered correlation {r}");
        }
        // Each source matched to a distinct component.
        let c00 = pearson(&truth.row(0).to_vec(), &s.row(0).to_vec()).abs();
        let c01 = pearson(&truth.row(0).to_vec(), &s.row(1).to_vec()).abs();
        assert!((c00 > 0.95) != (c01 > 0.95));
    }

    #[test]
    fn identity_mixing_gives_signed_permutation() {
        let truth = sine_and_sawtooth(5000);
        // Unit-variance sources so unmixing is a pure signed permutation.
        let sd = truth.map_axis(Axis(1), |r| r.std(0.0));
        let x = &truth / &sd.insert_axis(Axis(1));
        let dec = fastica_fit(x.view(), 2, 4).unwrap();
        for row in dec.unmixing.rows() {
            let mut mags: Vec<f64> = row.iter().map(|v| v.abs()).collect();
            mags.sort_by(f64::total_cmp);
            assert!(mags[0] < 0.05 && (mags[1] - 1.0).abs() < 0.05, "row {row}");
        }
    }

    #[test]
    fn single_channel_is_a_dimensionality_error() {
        let x = Array2::from_shape_fn((1, 1000), |(_, t)| (t as f64).sin());
        assert!(matches!(fastica_fit(x.view(), 1, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn rank_deficient_and_short_inputs() {
        let row = Array1::from_iter((0..1000).map(|t| (t as f64 * 0.1).sin()));
        let x = ndarray::stack![Axis(0), row, row.mapv(|v| 2.0 * v)];
        assert!(matches!(fastica_fit(x.view(), 2, 0), Err(Error::Dimension(_))));
        let short = sine_and_sawtooth(30);
        assert!(matches!(fastica_fit(short.view(), 2, 0), Err(Error::Size(_))));
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array::from_shape_fn((4, 3000), |_| rng.random_range(-1.0..1.0));
        let mix = array![[1.0, 0.5, 0.0, 0.2], [0.3, 1.0, 0.1, 0.0], [0.0, 0.4, 1.0, 0.3], [0.2, 0.0, 0.5, 1.0]];
        let mixed = mix.dot(&x) + 5.0;
        let w = Whitening::fit(mixed.view(), 4).unwrap();
        let z = w.apply(mixed.view());
        let cov = z.dot(&z.t()) / z.ncols() as f64;
        for ((i, j), v) in cov.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-8);
        }
    }

    #[test]
    fn rotation_rows_are_unit_norm_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let src = Array::from_shape_fn((3, 4000), |_| rng.random_range(-1.0f64..1.0).powi(3));
        let mix = Array::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let x = mix.dot(&src);
        let a = fastica_fit(x.view(), 3, 9).unwrap();
        let b = fastica_fit(x.view(), 3, 9).unwrap();
        assert_eq!(a, b);
        for row in a.rotation.rows() {
            assert!((row.dot(&row) - 1.0).abs() < 1e-8);
        }
        // Explained variance is non-increasing.
        let power: Vec<f64> = a.mixing.columns().into_iter().map(|c| c.dot(&c)).collect();
        assert!(power.windows(2).all(|p| p[0] >= p[1]));
        // mixing * unmixing is the identity on the full-rank subspace.
        let id = a.mixing.dot(&a.unmixing);
        for ((i, j), v) in id.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
        }
    }

    #[test]
    fn gaussian_data_does_not_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = Array::from_shape_fn((3, 2000), |_| StandardNormal.sample(&mut rng));
        match fastica_fit(x.view(), 3, 0) {
            Err(Error::NonConvergence { iterations, .. }) => assert_eq!(iterations, MAX_ITERATIONS),
            // Rarely a Gaussian sample happens to settle; that is not an error.
            Ok(_) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }

    fn blink_template(n: usize, rate_every: usize) -> Vec<f64> {
        (0..n)
            .map(|t| {
                let phase = t % rate_every;
                let centre = rate_every / 2;
                let d = phase as f64 - centre as f64;
                80.0 * (-d * d / (2.0 * 15.0f64.powi(2))).exp()
            })
            .collect()
    }

    fn blink_scene(n: usize, seed: u64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Three super-Gaussian "neural" sources and one blink source.
        let neural_src = Array::from_shape_fn((3, n), |_| {
            let u: f64 = rng.random_range(-1.0..1.0);
            u.powi(3) * 10.0
        });
        let blink = Array1::from(blink_template(n, 400));
        let neural_mix = array![[1.0, 0.2, 0.1], [0.3, 1.0, 0.2], [0.1, 0.4, 1.0], [0.5, 0.5, 0.5]];
        let blink_gain = array![0.9, 0.5, 0.2, 0.1];
        let neural = neural_mix.dot(&neural_src);
        let leak = blink_gain.insert_axis(Axis(1)).dot(&blink.view().insert_axis(Axis(0)));
        let eeg = &neural + &leak;
        let noise = Array::from_shape_fn((2, n), |_| rng.random_range(-1.0..1.0));
        let eog = ndarray::stack![Axis(0), &blink * 1.0, &blink * 0.6] + noise;
        (eeg, neural, eog)
    }

    fn mean_corr(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let n = a.nrows() as f64;
        a.rows()
            .into_iter()
            .zip(b.rows())
            .map(|(x, y)| pearson(&x.to_vec(), &y.to_vec()))
            .sum::<f64>()
            / n
    }

    #[test]
    fn blink_removal_recovers_neural_signal() {
        let (eeg, neural, eog) = blink_scene(8000, 31);
        let dec = fit_ocular_model(eeg.view(), eog.view(), DEFAULT_EOG_THRESHOLD, 5).unwrap();
        assert_eq!(dec.rejected.len(), 1, "scores {:?}", dec.component_scores);
        let cleaned = reconstruct(&dec, eeg.view()).unwrap();
        assert!(mean_corr(&cleaned, &neural) > mean_corr(&eeg, &neural));
        assert!(mean_corr(&cleaned, &neural) > 0.99);
        let scores = dec.component_scores.as_ref().unwrap();
        assert!(scores.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }

    #[test]
    fn reconstruction_identity_and_full_rejection() {
        let (eeg, _, eog) = blink_scene(4000, 3);
        let mut dec = fit_ocular_model(eeg.view(), eog.view(), 1.01, 1).unwrap();
        assert!(dec.rejected.is_empty());
        let out = reconstruct(&dec, eeg.view()).unwrap();
        let err = (&out - &eeg).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-6);

        dec.rejected = (0..dec.n_components()).collect();
        let flat = reconstruct(&dec, eeg.view()).unwrap();
        for (row, mean) in flat.rows().into_iter().zip(dec.mean().iter()) {
            assert!(row.iter().all(|v| (v - mean).abs() < 1e-6));
        }
        let wrong = Array2::<f64>::zeros((3, 100));
        assert!(matches!(reconstruct(&dec, wrong.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn flagging_rules() {
        let (eeg, _, eog) = blink_scene(4000, 7);
        let dec = fastica_fit(eeg.view(), 4, 0).unwrap();
        // A source identical to an EOG channel correlates perfectly.
        let mut sources = dec.sources(eeg.view()).unwrap();
        sources.row_mut(3).assign(&eog.row(1));
        let flags = flag_ocular(&dec, sources.view(), eog.view(), 0.7).unwrap();
        assert!((flags.scores[[3, 1]] - 1.0).abs() < 1e-12);
        assert!(flags.rejected.contains(&3));
        // Constant sources score 0.
        sources.row_mut(0).fill(2.0);
        let flags = flag_ocular(&dec, sources.view(), eog.view(), 0.7).unwrap();
        assert_eq!(flags.scores.row(0).to_vec(), vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        sources
            .row_mut(2)
            .assign(&Array1::from_iter((0..eog.ncols()).map(|_| StandardNormal.sample(&mut rng))));
        let flags = flag_ocular(&dec, sources.view(), eog.view(), 0.7).unwrap();
        assert!(flags.scores.row(2).iter().all(|&r| r < 0.1));
        assert!(!flags.rejected.contains(&2));
        let none = flag_ocular(&dec, sources.view(), eog.view(), 1.01).unwrap();
        assert!(none.rejected.is_empty());
        let short = eog.slice(s![.., ..100]);
        assert!(flag_ocular(&dec, sources.view(), short, 0.7).is_err());
    }

    #[test]
    fn white_noise_source_is_retained() {
        // Monte Carlo bound: |r| of independent white noise at n = 10_000 has
        // standard deviation 1/sqrt(n) = 0.01, so |r| < 0.1 is a 10-sigma bound.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 10_000;
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            worst = worst.max(pearson(&a, &b).abs());
        }
        assert!(worst < 0.1, "worst |r| {worst}");
    }
}
