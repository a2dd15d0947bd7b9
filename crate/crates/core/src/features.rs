//! Common spatial patterns and filter-bank CSP features.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dsp::{design, filtfilt_rows, IirCoefficients, IirSpec};
use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen_desc;
use crate::recording::{ClassLabel, EpochSet};

/// Default shrinkage of the class covariances.
pub const DEFAULT_SHRINKAGE: f64 = 1e-6;
/// Shrinkage used when the composite covariance is rank deficient.
pub const FALLBACK_SHRINKAGE: f64 = 1e-3;
/// Composite eigenvalue ratio below which the covariance counts as singular.
const SINGULAR_RATIO: f64 = 1e-10;
/// Default filter pairs per band.
pub const DEFAULT_PAIRS: usize = 2;
/// Default number of features kept by mutual-information selection.
pub const DEFAULT_SELECT_K: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandSpec {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Self {
        Self { lo_hz, hi_hz }
    }
}

/// 4 Hz bands from 4 to 40 Hz.
pub fn mi_bank() -> Vec<BandSpec> {
    (0..9)
        .map(|k| BandSpec::new(4.0 + 4.0 * k as f64, 8.0 + 4.0 * k as f64))
        .collect()
}

/// 0.1-0.5 Hz, then 0.5 Hz bands up to 3 Hz.
pub fn me_bank() -> Vec<BandSpec> {
    let mut bands = vec![BandSpec::new(0.1, 0.5)];
    bands.extend((1..6).map(|k| BandSpec::new(0.5 * k as f64, 0.5 * (k + 1) as f64)));
    bands
}

/// Fitted spatial filters of one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CspFilters {
    /// `2m x channels`: the m most class-a-dominant filters, then the m most
    /// class-b-dominant ones, in descending eigenvalue order.
    pub projection: Array2<f64>,
    /// Eigenvalues of the selected rows, descending.
    pub eigenvalues: Vec<f64>,
    /// Full generalized spectrum, descending.
    pub all_eigenvalues: Vec<f64>,
    pub m: usize,
    /// Shrinkage actually applied.
    pub shrinkage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CspConfig {
    pub m: usize,
    pub shrinkage: f64,
}

impl Default for CspConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_PAIRS,
            shrinkage: DEFAULT_SHRINKAGE,
        }
    }
}

/// Centered covariance of one trial divided by its trace.
pub fn normalized_covariance(trial: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let mean = trial
        .mean_axis(Axis(1))
        .ok_or_else(|| Error::Size("empty trial".into()))?;
    let centered = &trial - &mean.insert_axis(Axis(1));
    let cov = centered.dot(&centered.t());
    let tr = cov.diag().sum();
    if !(tr > 0.0 && tr.is_finite()) {
        return Err(Error::Degenerate("trial covariance has zero trace".into()));
    }
    Ok(cov / tr)
}

/// Mean trace-normalized covariance of a set of trials.
pub fn mean_covariance(trials: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
    let mut acc: Option<Array2<f64>> = None;
    for t in trials {
        let c = normalized_covariance(*t)?;
        match acc.as_mut() {
            Some(a) => {
                if a.dim() != c.dim() {
                    return Err(Error::Shape("trials differ in channel count".into()));
                }
                *a += &c;
            }
            None => acc = Some(c),
        }
    }
    let acc = acc.ok_or_else(|| Error::Size("no trials".into()))?;
    Ok(acc / trials.len() as f64)
}

/// `(1 - g) * cov + g * trace(cov) / channels * I`.
pub fn shrink(cov: &Array2<f64>, gamma: f64) -> Array2<f64> {
    let n = cov.nrows();
    let target = cov.diag().sum() / n as f64;
    let mut out = cov * (1.0 - gamma);
    for i in 0..n {
        out[[i, i]] += gamma * target;
    }
    out
}

fn sign_normalize(row: &mut ndarray::ArrayViewMut1<'_, f64>) {
    let idx = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if row[idx] < 0.0 {
        row.mapv_inplace(|v| -v);
    }
}

fn csp_from_covariances(
    cov_a: &Array2<f64>,
    cov_b: &Array2<f64>,
    config: &CspConfig,
) -> Result<CspFilters> {
    let channels = cov_a.nrows();
    let mut gamma = config.shrinkage;
    loop {
        let sa = shrink(cov_a, gamma);
        let sb = shrink(cov_b, gamma);
        let composite = &sa + &sb;
        let (cvals, cvecs) = symmetric_eigen_desc(composite.view())?;
        let top = cvals[0];
        let bottom = cvals[channels - 1];
        if !(top > 0.0) || bottom <= SINGULAR_RATIO * top {
            if gamma < FALLBACK_SHRINKAGE {
                gamma = FALLBACK_SHRINKAGE;
                continue;
            }
            return Err(Error::Rank(format!(
                "composite covariance singular (eigenvalue ratio {:.3e}) even with shrinkage {gamma}",
                bottom / top
            )));
        }
        // Whitening P = D^-1/2 E^T of the composite covariance.
        let mut whitening = cvecs.t().to_owned();
        for (mut row, v) in whitening.rows_mut().into_iter().zip(cvals.iter()) {
            row /= v.sqrt();
        }
        let whitened_a = whitening.dot(&sa).dot(&whitening.t());
        let (vals, vecs) = symmetric_eigen_desc(whitened_a.view())?;
        let full = vecs.t().dot(&whitening);

        let m = config.m;
        let rows: Vec<usize> = (0..m).chain(channels - m..channels).collect();
        let mut projection = full.select(Axis(0), &rows);
        for mut row in projection.rows_mut() {
            sign_normalize(&mut row);
        }
        return Ok(CspFilters {
            projection,
            eigenvalues: rows.iter().map(|&r| vals[r]).collect(),
            all_eigenvalues: vals.to_vec(),
            m,
            shrinkage: gamma,
        });
    }
}

/// Fits CSP filters discriminating `class_a` from `class_b`.
///
/// Per-trial covariances are trace normalized and averaged per class, the
/// composite covariance is whitened, and the whitened class-a covariance is
/// diagonalized. Rows are signed so their largest-magnitude entry is positive.
pub fn csp_fit(
    class_a: &[ArrayView2<'_, f64>],
    class_b: &[ArrayView2<'_, f64>],
    config: &CspConfig,
) -> Result<CspFilters> {
    if class_a.len() < 2 || class_b.len() < 2 {
        return Err(Error::Invalid(format!(
            "CSP needs at least 2 trials per class, got {} and {}",
            class_a.len(),
            class_b.len()
        )));
    }
    let channels = class_a[0].nrows();
    if config.m == 0 || 2 * config.m > channels {
        return Err(Error::Invalid(format!(
            "{} filter pairs do not fit {channels} channels",
            config.m
        )));
    }
    if !(0.0..1.0).contains(&config.shrinkage) {
        return Err(Error::Invalid(format!("shrinkage {} outside [0, 1)", config.shrinkage)));
    }
    let cov_a = mean_covariance(class_a)?;
    let cov_b = mean_covariance(class_b)?;
    if cov_a.dim() != cov_b.dim() {
        return Err(Error::Shape("classes differ in channel count".into()));
    }
    csp_from_covariances(&cov_a, &cov_b, config)
}

/// Log-variance features of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct CspFeatures {
    pub values: Vec<f64>,
    /// Set when a projection had zero variance and was clamped.
    pub degenerate: bool,
}

/// `f_i = log(var_i / sum_j var_j)` of the projected window.
pub fn csp_features(filters: &CspFilters, window: ArrayView2<'_, f64>) -> Result<CspFeatures> {
    if window.nrows() != filters.projection.ncols() {
        return Err(Error::Shape(format!(
            "filters expect {} channels, window has {}",
            filters.projection.ncols(),
            window.nrows()
        )));
    }
    if window.ncols() < 2 {
        return Err(Error::Size("window needs at least 2 samples".into()));
    }
    let projected = filters.projection.dot(&window);
    let vars: Vec<f64> = projected
        .rows()
        .into_iter()
        .map(|r| {
            let m = r.mean().unwrap_or(0.0);
            r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / r.len() as f64
        })
        .collect();
    let total: f64 = vars.iter().sum();
    let mut degenerate = false;
    let values = vars
        .iter()
        .map(|&v| {
            let ratio = if total > 0.0 { v / total } else { 0.0 };
            if ratio > 0.0 && ratio.is_finite() {
                ratio.ln()
            } else {
                degenerate = true;
                f64::EPSILON.ln()
            }
        })
        .collect();
    Ok(CspFeatures { values, degenerate })
}

/// Ordered bands and their designed zero-phase bandpass filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub bands: Vec<BandSpec>,
    pub coefficients: Vec<IirCoefficients>,
    pub fs: f64,
}

impl FilterBank {
    pub fn design(bands: &[BandSpec], order: usize, fs: f64) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Invalid("empty filter bank".into()));
        }
        let coefficients = bands
            .iter()
            .map(|b| {
                design(&IirSpec::bandpass(order, b.lo_hz, b.hi_hz, fs)).map_err(|e| {
                    Error::Design(format!("band {}-{} Hz: {e}", b.lo_hz, b.hi_hz))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bands: bands.to_vec(),
            coefficients,
            fs,
        })
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    /// Zero-phase filters a window through every band.
    pub fn filter(&self, window: ArrayView2<'_, f64>) -> Result<Vec<Array2<f64>>> {
        self.coefficients
            .iter()
            .map(|c| filtfilt_rows(c, window))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbcspConfig {
    pub bands: Vec<BandSpec>,
    pub m: usize,
    pub filter_order: usize,
    pub shrinkage: f64,
    /// Mutual-information selection of the top-k features; `None` keeps all.
    pub select_k: Option<usize>,
}

impl FbcspConfig {
    pub fn new(bands: Vec<BandSpec>) -> Self {
        Self {
            bands,
            m: DEFAULT_PAIRS,
            filter_order: 2,
            shrinkage: DEFAULT_SHRINKAGE,
            select_k: None,
        }
    }
}

/// Fitted filter-bank CSP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbcspModel {
    pub bank: FilterBank,
    pub filters: Vec<CspFilters>,
    pub m: usize,
    pub n_channels: usize,
    pub classes: (ClassLabel, ClassLabel),
    /// Indices into the full `2m * bands` layout, ascending.
    pub selected: Option<Vec<usize>>,
    pub feature_dim: usize,
    pub config: FbcspConfig,
}

impl FbcspModel {
    pub fn full_dim(&self) -> usize {
        2 * self.m * self.filters.len()
    }

    /// Features of a window already passed through [`FilterBank::filter`].
    pub fn transform_filtered(&self, per_band: &[Array2<f64>]) -> Result<Vec<f64>> {
        if per_band.len() != self.filters.len() {
            return Err(Error::Shape(format!(
                "{} filtered bands for a {}-band model",
                per_band.len(),
                self.filters.len()
            )));
        }
        let mut full = Vec::with_capacity(self.full_dim());
        for (f, w) in self.filters.iter().zip(per_band) {
            full.extend(csp_features(f, w.view())?.values);
        }
        Ok(match &self.selected {
            Some(idx) => idx.iter().map(|&i| full[i]).collect(),
            None => full,
        })
    }

    /// Filters, projects and selects: the feature vector of one window.
    pub fn transform(&self, window: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if window.nrows() != self.n_channels {
            return Err(Error::Shape(format!(
                "model fitted on {} channels, window has {}",
                self.n_channels,
                window.nrows()
            )));
        }
        self.transform_filtered(&self.bank.filter(window)?)
    }
}

/// Parzen-window estimate of the mutual information between a scalar
/// feature and a binary class label, in nats.
pub fn mutual_information(values: &[f64], is_a: &[bool]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(sd > 0.0) {
        return 0.0;
    }
    let h = 1.06 * sd * nf.powf(-0.2);
    let n_a = is_a.iter().filter(|&&a| a).count() as f64;
    let n_b = nf - n_a;
    if n_a == 0.0 || n_b == 0.0 {
        return 0.0;
    }
    let (pa, pb) = (n_a / nf, n_b / nf);
    let entropy = -(pa * pa.ln() + pb * pb.ln());
    let mut conditional = 0.0;
    for &vj in values {
        let (mut da, mut db) = (0.0, 0.0);
        for (&vi, &a) in values.iter().zip(is_a) {
            let k = (-0.5 * ((vj - vi) / h).powi(2)).exp();
            if a {
                da += k;
            } else {
                db += k;
            }
        }
        // p(class | v) proportional to p(v | class) P(class).
        let (wa, wb) = (da / n_a * pa, db / n_b * pb);
        let total = wa + wb;
        if total > 0.0 {
            for p in [wa / total, wb / total] {
                if p > 0.0 {
                    conditional -= p * p.ln();
                }
            }
        }
    }
    (entropy - conditional / nf).max(0.0)
}

/// Top-`k` features by mutual information, completed with the paired filter
/// of each chosen one (row `r` pairs with `2m - 1 - r` in the same band).
pub fn select_features(features: &Array2<f64>, is_a: &[bool], m: usize, k: usize) -> Vec<usize> {
    let dim = features.ncols();
    let mut scored: Vec<(usize, f64)> = (0..dim)
        .map(|j| (j, mutual_information(&features.column(j).to_vec(), is_a)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut chosen = std::collections::BTreeSet::new();
    for &(j, _) in scored.iter().take(k.min(dim)) {
        let band = j / (2 * m);
        let r = j % (2 * m);
        chosen.insert(j);
        chosen.insert(band * 2 * m + (2 * m - 1 - r));
    }
    chosen.into_iter().collect()
}

/// Fits FBCSP on windows already filtered through `bank`.
///
/// `per_band[w][b]` is window `w` filtered through band `b`.
pub fn fbcsp_fit_filtered(
    bank: &FilterBank,
    per_band: &[&[Array2<f64>]],
    labels: &[ClassLabel],
    classes: (ClassLabel, ClassLabel),
    config: &FbcspConfig,
) -> Result<FbcspModel> {
    if per_band.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} windows for {} labels",
            per_band.len(),
            labels.len()
        )));
    }
    if classes.0 == classes.1 {
        return Err(Error::Label(format!("both classes are {}", classes.0)));
    }
    if let Some(other) = labels.iter().find(|l| **l != classes.0 && **l != classes.1) {
        return Err(Error::Label(format!(
            "label {other} is neither {} nor {}",
            classes.0, classes.1
        )));
    }
    let n_channels = per_band
        .first()
        .and_then(|w| w.first())
        .map(|a| a.nrows())
        .ok_or_else(|| Error::Size("no windows to fit".into()))?;
    let csp_cfg = CspConfig {
        m: config.m,
        shrinkage: config.shrinkage,
    };
    let mut filters = Vec::with_capacity(bank.len());
    for b in 0..bank.len() {
        let pick = |class: ClassLabel| -> Vec<ArrayView2<'_, f64>> {
            per_band
                .iter()
                .zip(labels)
                .filter(|(_, l)| **l == class)
                .map(|(w, _)| w[b].view())
                .collect()
        };
        let fit = csp_fit(&pick(classes.0), &pick(classes.1), &csp_cfg).map_err(|e| match e {
            Error::Rank(msg) => Error::Rank(format!(
                "band {}-{} Hz: {msg}",
                bank.bands[b].lo_hz, bank.bands[b].hi_hz
            )),
            other => other,
        })?;
        filters.push(fit);
    }
    let mut model = FbcspModel {
        bank: bank.clone(),
        filters,
        m: config.m,
        n_channels,
        classes,
        selected: None,
        feature_dim: 2 * config.m * bank.len(),
        config: config.clone(),
    };
    if let Some(k) = config.select_k {
        let rows = per_band
            .iter()
            .map(|w| model.transform_filtered(w))
            .collect::<Result<Vec<_>>>()?;
        let dim = model.feature_dim;
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((labels.len(), dim), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        let is_a: Vec<bool> = labels.iter().map(|l| *l == classes.0).collect();
        let selected = select_features(&features, &is_a, config.m, k);
        model.feature_dim = selected.len();
        model.selected = Some(selected);
    }
    Ok(model)
}

/// Fits FBCSP on raw windows; `fs` must match the windows' sample rate.
pub fn fbcsp_fit_windows(
    windows: &[ArrayView2<'_, f64>],
    labels: &[ClassLabel],
    classes: (ClassLabel, ClassLabel),
    fs: f64,
    config: &FbcspConfig,
) -> Result<FbcspModel> {
    let bank = FilterBank::design(&config.bands, config.filter_order, fs)?;
    let per_band = windows
        .iter()
        .map(|w| bank.filter(*w))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[Array2<f64>]> = per_band.iter().map(|w| w.as_slice()).collect();
    fbcsp_fit_filtered(&bank, &refs, labels, classes, config)
}

/// Fits FBCSP on every window of a two-class epoch set. The lower label in
/// [`ClassLabel`] order becomes class a.
pub fn fbcsp_fit(epochs: &EpochSet, config: &FbcspConfig) -> Result<FbcspModel> {
    let mut distinct: Vec<ClassLabel> = epochs.labels().to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::Label(format!(
            "FBCSP needs exactly two classes, found {:?}",
            distinct
        )));
    }
    let (labels, windows): (Vec<_>, Vec<_>) = epochs.iter_windows().unzip();
    fbcsp_fit_windows(&windows, &labels, (distinct[0], distinct[1]), epochs.fs(), config)
}

/// Feature matrix (`windows x features`) for a list of windows.
pub fn transform_many(model: &FbcspModel, windows: &[ArrayView2<'_, f64>]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((windows.len(), model.feature_dim));
    for (i, w) in windows.iter().enumerate() {
        out.row_mut(i).assign(&Array1::from(model.transform(*w)?));
    }
    Ok(out)
}

/// Slice helper used by tests and callers holding stacked windows.
pub fn window_views(stack: &ndarray::Array3<f64>) -> Vec<ArrayView2<'_, f64>> {
    (0..stack.dim().0).map(|i| stack.slice(s![i, .., ..])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array, Array3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn noise_trials(n_trials: usize, variances: &[f64], samples: usize, seed: u64) -> Vec<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_trials)
            .map(|_| {
                Array::from_shape_fn((variances.len(), samples), |(c, _)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * variances[c].sqrt()
                })
            })
            .collect()
    }

    fn views(v: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
        v.iter().map(|a| a.view()).collect()
    }

    fn argmax_abs(row: ndarray::ArrayView1<'_, f64>) -> usize {
        row.iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0
    }

    #[test]
    fn filters_concentrate_on_the_high_variance_channel() {
        let a = noise_trials(20, &[10.0, 1.0, 1.0, 1.0], 500, 1);
        let b = noise_trials(20, &[1.0, 10.0, 1.0, 1.0], 500, 2);
        let f = csp_fit(&views(&a), &views(&b), &CspConfig { m: 1, ..Default::default() }).unwrap();
        assert_eq!(argmax_abs(f.projection.row(0)), 0);
        assert_eq!(argmax_abs(f.projection.row(1)), 1);
        assert!(f.eigenvalues[0] > 0.8 && f.eigenvalues[1] < 0.2);
    }

    #[test]
    fn identical_classes_give_half_eigenvalues() {
        // Same trials in both classes: the whitened problem is 0.5 * I.
        let a = noise_trials(10, &[1.0, 2.0, 3.0, 4.0], 300, 3);
        let f = csp_fit(&views(&a), &views(&a), &CspConfig::default()).unwrap();
        assert!(f.all_eigenvalues.iter().all(|v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn csp_preconditions() {
        let a = noise_trials(3, &[1.0; 4], 100, 4);
        let cfg = CspConfig { m: 3, ..Default::default() };
        assert!(matches!(csp_fit(&views(&a), &views(&a), &cfg), Err(Error::Invalid(_))));
        assert!(csp_fit(&views(&a[..1]), &views(&a), &CspConfig::default()).is_err());
    }

    #[test]
    fn rank_deficient_data_triggers_fallback_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials: Vec<Array2<f64>> = (0..6)
            .map(|_| {
                let base = Array::from_shape_fn((2, 200), |_| rng.random_range(-1.0..1.0));
                // Four channels spanning only two dimensions.
                ndarray::concatenate![Axis(0), base, base.mapv(|v| 2.0 * v)]
            })
            .collect();
        let f = csp_fit(&views(&trials[..3]), &views(&trials[3..]), &CspConfig { m: 1, shrinkage: 0.0 })
            .unwrap();
        assert_eq!(f.shrinkage, FALLBACK_SHRINKAGE);
        let zeros = vec![Array2::<f64>::zeros((4, 50)); 2];
        assert!(csp_fit(&views(&zeros), &views(&zeros), &CspConfig::default()).is_err());
    }

    #[test]
    fn eigenvalue_duality_and_composite_identity() {
        let a = noise_trials(12, &[5.0, 1.0, 2.0, 1.0, 0.5], 400, 6);
        let b = noise_trials(12, &[1.0, 4.0, 1.0, 3.0, 0.5], 400, 7);
        let cfg = CspConfig { m: 2, shrinkage: 0.0 };
        let fab = csp_fit(&views(&a), &views(&b), &cfg).unwrap();
        let fba = csp_fit(&views(&b), &views(&a), &cfg).unwrap();
        for (x, y) in fab.all_eigenvalues.iter().zip(fba.all_eigenvalues.iter().rev()) {
            assert!((y - (1.0 - x)).abs() < 1e-8);
        }
        let composite = mean_covariance(&views(&a)).unwrap() + mean_covariance(&views(&b)).unwrap();
        let w = &fab.projection;
        let id = w.dot(&composite).dot(&w.t());
        for ((i, j), v) in id.indexed_iter() {
            assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-6);
        }
        assert!(fab.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
        assert!(fab.all_eigenvalues.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn uniform_rescaling_leaves_filters_unchanged() {
        let a = noise_trials(8, &[3.0, 1.0, 2.0, 1.0], 300, 8);
        let b = noise_trials(8, &[1.0, 3.0, 1.0, 2.0], 300, 9);
        let f = csp_fit(&views(&a), &views(&b), &CspConfig::default()).unwrap();
        let a2: Vec<_> = a.iter().map(|t| t * 37.5).collect();
        let b2: Vec<_> = b.iter().map(|t| t * 37.5).collect();
        let g = csp_fit(&views(&a2), &views(&b2), &CspConfig::default()).unwrap();
        for (x, y) in f.projection.iter().zip(g.projection.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn feature_identities() {
        let a = noise_trials(8, &[3.0, 1.0, 2.0, 1.0], 300, 10);
        let b = noise_trials(8, &[1.0, 3.0, 1.0, 2.0], 300, 11);
        let f = csp_fit(&views(&a), &views(&b), &CspConfig::default()).unwrap();
        let x = &a[0];
        let feats = csp_features(&f, x.view()).unwrap();
        assert!(!feats.degenerate);
        let total: f64 = feats.values.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let scaled = csp_features(&f, (x * 5.0).view()).unwrap();
        for (p, q) in feats.values.iter().zip(&scaled.values) {
            assert!((p - q).abs() < 1e-9);
        }
        let zero = csp_features(&f, Array2::zeros((4, 100)).view()).unwrap();
        assert!(zero.degenerate);
        assert!(csp_features(&f, Array2::zeros((3, 100)).view()).is_err());
    }

    #[test]
    fn single_source_window_maximizes_its_filter() {
        let a = noise_trials(10, &[4.0, 1.0, 2.0, 1.0], 300, 12);
        let b = noise_trials(10, &[1.0, 4.0, 1.0, 2.0], 300, 13);
        let f = csp_fit(&views(&a), &views(&b), &CspConfig::default()).unwrap();
        // Window built from one CSP source via the pseudo-inverse of the
        // projection: only that filter's output carries variance.
        let patterns = crate::linalg::pinv(f.projection.view()).unwrap();
        for k in 0..f.projection.nrows() {
            let source = Array1::from_iter((0..300).map(|t| (2.0 * PI * t as f64 / 25.0).sin()));
            let x = patterns.column(k).to_owned().insert_axis(Axis(1)).dot(&source.insert_axis(Axis(0)));
            let feats = csp_features(&f, x.view()).unwrap();
            let best = feats.values.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).unwrap().0;
            assert_eq!(best, k);
        }
    }

    #[test]
    fn banks() {
        let mi = mi_bank();
        assert_eq!(mi.len(), 9);
        assert_eq!((mi[0].lo_hz, mi[0].hi_hz), (4.0, 8.0));
        assert_eq!((mi[8].lo_hz, mi[8].hi_hz), (36.0, 40.0));
        let me = me_bank();
        let edges: Vec<(f64, f64)> = me.iter().map(|b| (b.lo_hz, b.hi_hz)).collect();
        assert_eq!(edges, vec![(0.1, 0.5), (0.5, 1.0), (1.0, 1.5), (1.5, 2.0), (2.0, 2.5), (2.5, 3.0)]);
        assert!(FilterBank::design(&me, 2, 250.0).is_ok());
        match FilterBank::design(&[BandSpec::new(100.0, 130.0)], 2, 250.0) {
            Err(Error::Design(msg)) => assert!(msg.contains("100-130")),
            other => panic!("{other:?}"),
        }
    }

    /// Alpha-band (8-12 Hz) sources whose amplitude differs by class on
    /// different channels, plus broadband noise.
    fn alpha_windows(n: usize, seed: u64) -> (Vec<Array2<f64>>, Vec<ClassLabel>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = 250.0;
        let mut windows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let class_a = i % 2 == 0;
            let gains = if class_a { [3.0, 0.5, 1.0, 1.0] } else { [0.5, 3.0, 1.0, 1.0] };
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            let w = Array::from_shape_fn((4, 250), |(c, t)| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                gains[c] * (2.0 * PI * 10.0 * t as f64 / fs + phase + c as f64).sin() + 0.5 * noise
            });
            windows.push(w);
            labels.push(if class_a { ClassLabel::Ao } else { ClassLabel::Mi });
        }
        (windows, labels)
    }

    #[test]
    fn fbcsp_layout_and_determinism() {
        let (w, l) = alpha_windows(30, 14);
        let mut cfg = FbcspConfig::new(mi_bank());
        cfg.m = 2;
        let model = fbcsp_fit_windows(&views(&w), &l, (ClassLabel::Ao, ClassLabel::Mi), 250.0, &cfg).unwrap();
        assert_eq!(model.feature_dim, 36);
        let f1 = model.transform(w[0].view()).unwrap();
        let f2 = model.transform(w[0].view()).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), 36);
        // Global amplitude scaling leaves features unchanged.
        let f3 = model.transform((&w[0] * 1e3).view()).unwrap();
        for (p, q) in f1.iter().zip(&f3) {
            assert!((p - q).abs() < 1e-9);
        }
        assert!(model.transform(Array2::zeros((3, 250)).view()).is_err());
    }

    #[test]
    fn single_band_reduces_to_plain_csp() {
        let (w, l) = alpha_windows(20, 15);
        let band = BandSpec::new(8.0, 12.0);
        let cfg = FbcspConfig::new(vec![band]);
        let model = fbcsp_fit_windows(&views(&w), &l, (ClassLabel::Ao, ClassLabel::Mi), 250.0, &cfg).unwrap();
        let bank = FilterBank::design(&[band], 2, 250.0).unwrap();
        let filtered: Vec<Array2<f64>> = w.iter().map(|x| bank.filter(x.view()).unwrap().remove(0)).collect();
        let (a, b): (Vec<_>, Vec<_>) = filtered.iter().zip(&l).partition(|(_, lab)| **lab == ClassLabel::Ao);
        let a: Vec<_> = a.into_iter().map(|(x, _)| x.view()).collect();
        let b: Vec<_> = b.into_iter().map(|(x, _)| x.view()).collect();
        let plain = csp_fit(&a, &b, &CspConfig::default()).unwrap();
        let expected = csp_features(&plain, filtered[3].view()).unwrap().values;
        assert_eq!(model.transform(w[3].view()).unwrap(), expected);
    }

    /// Perceptron on the feature rows; converges iff linearly separable
    /// (within the epoch budget).
    fn perceptron_separates(x: &Array2<f64>, y: &[f64]) -> bool {
        let d = x.ncols();
        let mut w = vec![0.0; d + 1];
        for _ in 0..10_000 {
            let mut errors = 0;
            for (row, &t) in x.rows().into_iter().zip(y) {
                let s: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
                if t * s <= 0.0 {
                    errors += 1;
                    for (wi, xi) in w.iter_mut().zip(row.iter()) {
                        *wi += t * xi;
                    }
                    w[d] += t;
                }
            }
            if errors == 0 {
                return true;
            }
        }
        false
    }

    #[test]
    fn alpha_modulated_classes_are_linearly_separable() {
        let (w, l) = alpha_windows(40, 16);
        let cfg = FbcspConfig::new(mi_bank());
        let model = fbcsp_fit_windows(&views(&w), &l, (ClassLabel::Ao, ClassLabel::Mi), 250.0, &cfg).unwrap();
        let x = transform_many(&model, &views(&w)).unwrap();
        let y: Vec<f64> = l.iter().map(|c| if *c == ClassLabel::Ao { 1.0 } else { -1.0 }).collect();
        assert!(perceptron_separates(&x, &y));
    }

    #[test]
    fn mutual_information_selection() {
        let (w, l) = alpha_windows(40, 17);
        let mut cfg = FbcspConfig::new(mi_bank());
        cfg.select_k = Some(DEFAULT_SELECT_K);
        let model = fbcsp_fit_windows(&views(&w), &l, (ClassLabel::Ao, ClassLabel::Mi), 250.0, &cfg).unwrap();
        let sel = model.selected.clone().unwrap();
        assert!(sel.len() >= DEFAULT_SELECT_K && sel.len() <= 2 * DEFAULT_SELECT_K);
        assert!(sel.windows(2).all(|p| p[0] < p[1]));
        assert!(sel.iter().all(|&i| i < 36));
        // Pairs are complete.
        for &i in &sel {
            let (band, r) = (i / 4, i % 4);
            assert!(sel.contains(&(band * 4 + 3 - r)));
        }
        // The 8-12 Hz band carries the class information.
        assert!(sel.iter().any(|&i| i / 4 == 1));
        assert_eq!(model.transform(w[0].view()).unwrap().len(), sel.len());
    }

    #[test]
    fn mutual_information_bounds() {
        let v: Vec<f64> = (0..100).map(|i| if i < 50 { i as f64 * 0.01 } else { 10.0 + i as f64 * 0.01 }).collect();
        let perfect: Vec<bool> = (0..100).map(|i| i < 50).collect();
        let mi = mutual_information(&v, &perfect);
        assert!(mi > 0.5 && mi <= 2f64.ln() + 1e-12);
        assert_eq!(mutual_information(&[1.0; 10], &perfect[..10]), 0.0);
    }

    #[test]
    fn epoch_set_entry_point() {
        let (w, _) = alpha_windows(8, 18);
        let epochs: Vec<Array2<f64>> = w.iter().map(|x| ndarray::concatenate![Axis(1), x.view(), x.view()]).collect();
        let labels = (0..8).map(|i| if i % 2 == 0 { ClassLabel::Mi } else { ClassLabel::Ao }).collect();
        let set = EpochSet::from_epochs(&epochs, labels, 250.0, 1.0, 0.5).unwrap();
        let model = fbcsp_fit(&set, &FbcspConfig::new(vec![BandSpec::new(8.0, 12.0)])).unwrap();
        assert_eq!(model.classes, (ClassLabel::Ao, ClassLabel::Mi));
        let one = EpochSet::from_epochs(&epochs, vec![ClassLabel::Ao; 8], 250.0, 1.0, 0.5).unwrap();
        assert!(matches!(fbcsp_fit(&one, &FbcspConfig::new(mi_bank())), Err(Error::Label(_))));
        let _ = Array3::<f64>::zeros((1, 1, 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn features_scale_invariant(scale in 1e-3f64..1e3, seed in any::<u64>()) {
            let a = noise_trials(4, &[2.0, 1.0, 1.0], 120, seed);
            let b = noise_trials(4, &[1.0, 2.0, 1.0], 120, seed ^ 1);
            let f = csp_fit(&views(&a), &views(&b), &CspConfig { m: 1, ..Default::default() }).unwrap();
            let x = &a[0];
            let p = csp_features(&f, x.view()).unwrap().values;
            let q = csp_features(&f, (x * scale).view()).unwrap().values;
            for (u, v) in p.iter().zip(&q) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shrink_preserves_trace() {
        let c = array![[2.0, 0.5], [0.5, 1.0]];
        let s = shrink(&c, 0.25);
        assert!((s.diag().sum() - 3.0).abs() < 1e-12);
        assert!((s[[0, 1]] - 0.375).abs() < 1e-12);
    }
}
