//! Leave-one-trial-out evaluation, confusion metrics, Welch tests, and the
//! pseudo-online streaming classifiers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::artifact::{fit_ocular_model, reconstruct, IcaDecomposition, DEFAULT_EOG_THRESHOLD};
use crate::error::{Error, Result};
use crate::features::{
    fbcsp_fit_filtered, me_bank, mi_bank, BandSpec, FbcspConfig, FbcspModel, FilterBank,
    DEFAULT_PAIRS, DEFAULT_SHRINKAGE,
};
use crate::model::{
    grid_search, svm_predict, svm_train, Candidate, GridResult, GridSpec, Scaler, SvmModel,
};
use crate::recording::{
    epoch_at, slide, time_to_index, window_starts, ClassLabel, ProtocolState, ProtocolTimeline,
    Session, Transition,
};

/// Length of the R, AO and MI epochs of the MI session.
pub const MI_EPOCH_S: f64 = 4.0;
/// AO epoch of the ME session: 4 to 6.5 s.
pub const ME_AO_EPOCH_S: f64 = 2.5;
/// MRCP epoch around movement onset.
pub const MRCP_EPOCH_S: (f64, f64) = (-1.5, 1.0);
/// Consecutive AO decisions that arm the second cascade stage.
pub const DEFAULT_ARM_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "r_ao")]
    RvsAo,
    #[serde(rename = "ao_mi")]
    AoVsMi,
    #[serde(rename = "ao_mrcp")]
    AoVsMrcp,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RvsAo => "r_ao",
            Self::AoVsMi => "ao_mi",
            Self::AoVsMrcp => "ao_mrcp",
        }
    }

    /// `(negative, positive)` classes; the SVM labels the second one +1.
    pub fn classes(&self) -> (ClassLabel, ClassLabel) {
        match self {
            Self::RvsAo => (ClassLabel::R, ClassLabel::Ao),
            Self::AoVsMi => (ClassLabel::Ao, ClassLabel::Mi),
            Self::AoVsMrcp => (ClassLabel::Ao, ClassLabel::Mrcp),
        }
    }

    pub fn session(&self) -> Session {
        match self {
            Self::RvsAo | Self::AoVsMi => Session::Mi,
            Self::AoVsMrcp => Session::Me,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_ao" => Ok(Self::RvsAo),
            "ao_mi" => Ok(Self::AoVsMi),
            "ao_mrcp" => Ok(Self::AoVsMrcp),
            other => Err(Error::Invalid(format!("unknown task '{other}'"))),
        }
    }
}

/// One preprocessed trial at the analysis rate. Protocol time 0 (rest
/// onset) is `rest_onset`; ICA, when enabled, is fitted per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialData {
    pub eeg: Array2<f64>,
    pub eog: Option<Array2<f64>>,
    pub fs: f64,
    pub rest_onset: usize,
    pub movement_onset: Option<usize>,
    pub timeline: ProtocolTimeline,
}

impl TrialData {
    /// Epoch of `class` for this trial.
    pub fn class_epoch(&self, eeg: ArrayView2<'_, f64>, class: ClassLabel, index: usize) -> Result<Array2<f64>> {
        let onset = |state: ProtocolState| {
            self.timeline
                .onset_of(state)
                .ok_or_else(|| Error::Invalid(format!("timeline has no {state} state")))
        };
        match (class, self.timeline.session) {
            (ClassLabel::R, _) => {
                let t = onset(ProtocolState::R)?;
                epoch_at(eeg, self.fs, self.rest_onset, t, t + MI_EPOCH_S, index)
            }
            (ClassLabel::Ao, Session::Mi) => {
                let t = onset(ProtocolState::Ao)?;
                epoch_at(eeg, self.fs, self.rest_onset, t, t + MI_EPOCH_S, index)
            }
            (ClassLabel::Ao, Session::Me) => {
                let t = onset(ProtocolState::Ao)?;
                epoch_at(eeg, self.fs, self.rest_onset, t, t + ME_AO_EPOCH_S, index)
            }
            (ClassLabel::Mi, Session::Mi) => {
                let t = onset(ProtocolState::Task)?;
                epoch_at(eeg, self.fs, self.rest_onset, t, t + MI_EPOCH_S, index)
            }
            (ClassLabel::Mrcp, Session::Me) => {
                let anchor = self.movement_onset.ok_or_else(|| {
                    Error::Label(format!("trial {index} has no movement onset for an MRCP epoch"))
                })?;
                epoch_at(eeg, self.fs, anchor, MRCP_EPOCH_S.0, MRCP_EPOCH_S.1, index)
            }
            (class, session) => Err(Error::Label(format!(
                "class {class} has no epoch in the {session} session"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcaSettings {
    pub eog_threshold: f64,
    pub seed: u64,
}

impl Default for IcaSettings {
    fn default() -> Self {
        Self { eog_threshold: DEFAULT_EOG_THRESHOLD, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub session: Session,
    pub task: Task,
    pub transition: Transition,
    pub bands: Vec<BandSpec>,
    pub m: usize,
    pub filter_order: usize,
    pub shrinkage: f64,
    pub select_k: Option<usize>,
    pub grid: GridSpec,
    pub window_s: f64,
    pub shift_s: f64,
    /// Per-fold ocular ICA; `None` skips artifact removal.
    pub ica: Option<IcaSettings>,
    /// Z-score features on the training fold before the SVM.
    pub standardize: bool,
}

impl PipelineConfig {
    /// Session defaults: MI uses the 4-40 Hz bank with 2 s / 0.2 s windows,
    /// ME the 0.1-3 Hz bank with 1 s / 0.5 s windows.
    pub fn new(task: Task, transition: Transition) -> Self {
        let session = task.session();
        let (bands, window_s, shift_s) = match session {
            Session::Mi => (mi_bank(), 2.0, 0.2),
            Session::Me => (me_bank(), 1.0, 0.5),
        };
        Self {
            session,
            task,
            transition,
            bands,
            m: DEFAULT_PAIRS,
            filter_order: 2,
            shrinkage: DEFAULT_SHRINKAGE,
            select_k: None,
            grid: GridSpec::full(0),
            window_s,
            shift_s,
            ica: Some(IcaSettings::default()),
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.task.session() != self.session {
            return Err(Error::Invalid(format!(
                "task {} does not belong to the {} session",
                self.task, self.session
            )));
        }
        if !(self.window_s > 0.0 && self.shift_s > 0.0) {
            return Err(Error::Invalid("window and shift must be positive".into()));
        }
        Ok(())
    }

    fn fbcsp(&self) -> FbcspConfig {
        FbcspConfig {
            bands: self.bands.clone(),
            m: self.m,
            filter_order: self.filter_order,
            shrinkage: self.shrinkage,
            select_k: self.select_k,
        }
    }
}

/// Classifies a single `channels x samples` window.
pub trait WindowClassifier {
    fn classify(&self, window: ArrayView2<'_, f64>) -> Result<ClassLabel>;
}

/// Everything fitted on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub classes: (ClassLabel, ClassLabel),
    pub ica: Option<IcaDecomposition>,
    pub fbcsp: FbcspModel,
    pub scaler: Option<Scaler>,
    pub svm: SvmModel,
    pub grid: GridResult,
}

impl TrainedPipeline {
    pub fn features(&self, window: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let features = match &self.ica {
            Some(dec) => self.fbcsp.transform(reconstruct(dec, window)?.view())?,
            None => self.fbcsp.transform(window)?,
        };
        self.scale(features)
    }

    fn scale(&self, features: Vec<f64>) -> Result<Vec<f64>> {
        match &self.scaler {
            Some(s) => {
                let row = Array2::from_shape_vec((1, features.len()), features)
                    .map_err(|e| Error::Shape(e.to_string()))?;
                Ok(s.transform(row.view())?.into_raw_vec_and_offset().0)
            }
            None => Ok(features),
        }
    }

    fn label_of(&self, sign: f64) -> ClassLabel {
        if sign > 0.0 { self.classes.1 } else { self.classes.0 }
    }

    /// Predicted class and SVM decision value.
    pub fn decide(&self, window: ArrayView2<'_, f64>) -> Result<(ClassLabel, f64)> {
        let f = self.features(window)?;
        let row = Array2::from_shape_vec((1, f.len()), f).map_err(|e| Error::Shape(e.to_string()))?;
        let (labels, values) = svm_predict(&self.svm, row.view())?;
        Ok((self.label_of(labels[0]), values[0]))
    }
}

impl WindowClassifier for TrainedPipeline {
    fn classify(&self, window: ArrayView2<'_, f64>) -> Result<ClassLabel> {
        Ok(self.decide(window)?.0)
    }
}

/// Band-filtered windows of one trial for both task classes.
#[derive(Debug, Clone)]
struct PreparedTrial {
    labels: Vec<ClassLabel>,
    /// `[window][band]`.
    filtered: Vec<Vec<Array2<f64>>>,
}

fn prepare_trial(
    trial: &TrialData,
    eeg: ArrayView2<'_, f64>,
    index: usize,
    config: &PipelineConfig,
    bank: &FilterBank,
) -> Result<PreparedTrial> {
    let (a, b) = config.task.classes();
    let mut labels = Vec::new();
    let mut filtered = Vec::new();
    for class in [a, b] {
        let epoch = trial.class_epoch(eeg, class, index)?;
        let windows = slide(epoch.view(), trial.fs, config.window_s, config.shift_s)?;
        for w in windows.outer_iter() {
            labels.push(class);
            filtered.push(bank.filter(w)?);
        }
    }
    Ok(PreparedTrial { labels, filtered })
}

fn fit_ica(train: &[&TrialData], settings: &IcaSettings) -> Result<IcaDecomposition> {
    let eeg: Vec<ArrayView2<'_, f64>> = train.iter().map(|t| t.eeg.view()).collect();
    let eog = train
        .iter()
        .map(|t| {
            t.eog
                .as_ref()
                .map(|e| e.view())
                .ok_or_else(|| Error::Invalid("ICA requested but a trial has no EOG channels".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let eeg = concatenate(Axis(1), &eeg).map_err(|e| Error::Shape(e.to_string()))?;
    let eog = concatenate(Axis(1), &eog).map_err(|e| Error::Shape(e.to_string()))?;
    fit_ocular_model(eeg.view(), eog.view(), settings.eog_threshold, settings.seed)
}

fn clean(trial: &TrialData, ica: Option<&IcaDecomposition>) -> Result<Array2<f64>> {
    match ica {
        Some(dec) => reconstruct(dec, trial.eeg.view()),
        None => Ok(trial.eeg.clone()),
    }
}

fn stack_features(model: &FbcspModel, trials: &[&PreparedTrial]) -> Result<(Array2<f64>, Vec<ClassLabel>)> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for t in trials {
        for (w, l) in t.filtered.iter().zip(&t.labels) {
            rows.extend(model.transform_filtered(w)?);
            labels.push(*l);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), model.feature_dim), rows)
        .map_err(|e| Error::Shape(e.to_string()))?;
    Ok((x, labels))
}

fn fit_prepared(
    train: &[&PreparedTrial],
    bank: &FilterBank,
    ica: Option<IcaDecomposition>,
    config: &PipelineConfig,
) -> Result<TrainedPipeline> {
    let classes = config.task.classes();
    let windows: Vec<&[Array2<f64>]> = train
        .iter()
        .flat_map(|t| t.filtered.iter().map(|w| w.as_slice()))
        .collect();
    let labels: Vec<ClassLabel> = train.iter().flat_map(|t| t.labels.iter().copied()).collect();
    let fbcsp = fbcsp_fit_filtered(bank, &windows, &labels, classes, &config.fbcsp())?;
    let (x, labels) = stack_features(&fbcsp, train)?;
    let (x, scaler) = if config.standardize {
        let s = Scaler::fit(x.view())?;
        (s.transform(x.view())?, Some(s))
    } else {
        (x, None)
    };
    let y: Vec<f64> = labels.iter().map(|l| if *l == classes.1 { 1.0 } else { -1.0 }).collect();
    let grid = grid_search(x.view(), &y, &config.grid)?;
    let svm = svm_train(x.view(), &y, grid.best.c, grid.best.kernel, config.grid.tol)?;
    Ok(TrainedPipeline { classes, ica, fbcsp, scaler, svm, grid })
}

/// Fits the full pipeline (ICA, FBCSP, scaler, grid search, SVM) on `train`.
pub fn fit_pipeline(train: &[&TrialData], config: &PipelineConfig) -> Result<TrainedPipeline> {
    config.validate()?;
    let fs = train.first().ok_or_else(|| Error::Size("no training trials".into()))?.fs;
    let bank = FilterBank::design(&config.bands, config.filter_order, fs)?;
    let ica = config.ica.as_ref().map(|s| fit_ica(train, s)).transpose()?;
    let prepared = train
        .iter()
        .enumerate()
        .map(|(i, t)| prepare_trial(t, clean(t, ica.as_ref())?.view(), i, config, &bank))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&PreparedTrial> = prepared.iter().collect();
    fit_prepared(&refs, &bank, ica, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub correct: usize,
    pub total: usize,
    /// `None` when the fold failed; see `flag`.
    pub accuracy: Option<f64>,
    pub best: Option<Candidate>,
    pub best_cv_accuracy: Option<f64>,
    pub flagged_candidates: usize,
    pub rejected_components: Vec<usize>,
    pub decision_values: Vec<f64>,
    pub flag: Option<String>,
}

impl FoldResult {
    fn failed(fold: usize, err: &Error) -> Self {
        Self {
            fold,
            correct: 0,
            total: 0,
            accuracy: None,
            best: None,
            best_cv_accuracy: None,
            flagged_candidates: 0,
            rejected_components: Vec::new(),
            decision_values: Vec::new(),
            flag: Some(err.to_string()),
        }
    }
}

fn score_fold(fold: usize, pipeline: &TrainedPipeline, test: &PreparedTrial) -> Result<FoldResult> {
    let mut correct = 0;
    let mut values = Vec::with_capacity(test.labels.len());
    for (w, truth) in test.filtered.iter().zip(&test.labels) {
        let f = pipeline.scale(pipeline.fbcsp.transform_filtered(w)?)?;
        let row = Array2::from_shape_vec((1, f.len()), f).map_err(|e| Error::Shape(e.to_string()))?;
        let (labels, v) = svm_predict(&pipeline.svm, row.view())?;
        if pipeline.label_of(labels[0]) == *truth {
            correct += 1;
        }
        values.push(v[0]);
    }
    let total = test.labels.len();
    Ok(FoldResult {
        fold,
        correct,
        total,
        accuracy: Some(correct as f64 / total as f64),
        best: Some(pipeline.grid.best),
        best_cv_accuracy: Some(pipeline.grid.best_accuracy),
        flagged_candidates: pipeline.grid.table.iter().filter(|r| r.flagged).count(),
        rejected_components: pipeline.ica.as_ref().map(|d| d.rejected.iter().copied().collect()).unwrap_or_default(),
        decision_values: values,
        flag: None,
    })
}

/// Trains on `train` and scores every window of `test`. Failures are
/// reported in the result, not returned.
pub fn run_fold_with_training(
    train: &[&TrialData],
    test: &TrialData,
    fold: usize,
    config: &PipelineConfig,
) -> FoldResult {
    let attempt = || -> Result<FoldResult> {
        let pipeline = fit_pipeline(train, config)?;
        let bank = &pipeline.fbcsp.bank;
        let prepared = prepare_trial(test, clean(test, pipeline.ica.as_ref())?.view(), fold, config, bank)?;
        score_fold(fold, &pipeline, &prepared)
    };
    attempt().unwrap_or_else(|e| FoldResult::failed(fold, &e))
}

/// Fold `fold` of leave-one-trial-out: train on every other trial.
pub fn run_fold(trials: &[TrialData], fold: usize, config: &PipelineConfig) -> FoldResult {
    let train: Vec<&TrialData> = trials.iter().enumerate().filter(|(i, _)| *i != fold).map(|(_, t)| t).collect();
    run_fold_with_training(&train, &trials[fold], fold, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub folds: Vec<FoldResult>,
    /// Mean and standard error over the folds that completed.
    pub mean: Option<f64>,
    pub se: Option<f64>,
    pub n_flagged: usize,
}

/// Mean and standard error (sample standard deviation / sqrt(n)).
pub fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some((var / n as f64).sqrt()))
}

/// Leave-one-trial-out cross-validation. Everything data dependent is
/// fitted inside the fold; without ICA the band-filtered windows are
/// computed once and shared across folds.
pub fn loocv(trials: &[TrialData], config: &PipelineConfig) -> Result<LoocvReport> {
    config.validate()?;
    if trials.len() < 3 {
        return Err(Error::Size(format!("LOOCV needs at least 3 trials, got {}", trials.len())));
    }
    let folds = if config.ica.is_some() {
        (0..trials.len()).map(|f| run_fold(trials, f, config)).collect()
    } else {
        let bank = FilterBank::design(&config.bands, config.filter_order, trials[0].fs)?;
        let prepared = trials
            .iter()
            .enumerate()
            .map(|(i, t)| prepare_trial(t, t.eeg.view(), i, config, &bank))
            .collect::<Result<Vec<_>>>()?;
        (0..trials.len())
            .map(|f| {
                let train: Vec<&PreparedTrial> =
                    prepared.iter().enumerate().filter(|(i, _)| *i != f).map(|(_, p)| p).collect();
                fit_prepared(&train, &bank, None, config)
                    .and_then(|p| score_fold(f, &p, &prepared[f]))
                    .unwrap_or_else(|e| FoldResult::failed(f, &e))
            })
            .collect()
    };
    Ok(summarize(folds))
}

fn summarize(folds: Vec<FoldResult>) -> LoocvReport {
    let accs: Vec<f64> = folds.iter().filter_map(|f| f.accuracy).collect();
    let (mean, se) = mean_se(&accs);
    let n_flagged = folds.iter().filter(|f| f.flag.is_some()).count();
    LoocvReport { folds, mean, se, n_flagged }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted_positive: bool, actual_positive: bool) {
        match (predicted_positive, actual_positive) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

/// Exact ratio `num / den`; undefined when `den == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub num: u64,
    pub den: u64,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rates {
    pub tpr: Rate,
    pub fpr: Rate,
    pub fnr: Rate,
}

/// TPR = TP/(TP+FN), FPR = FP/(FP+TN), FNR = FN/(FN+TP).
pub fn metrics(c: &ConfusionCounts) -> Rates {
    Rates {
        tpr: Rate { num: c.tp, den: c.tp + c.fn_ },
        fpr: Rate { num: c.fp, den: c.fp + c.tn },
        fnr: Rate { num: c.fn_, den: c.fn_ + c.tp },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-tailed.
    pub p: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of
/// freedom.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Size(format!(
            "Welch test needs 2+ observations per set, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite observation".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    if sa + sb <= 0.0 {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(WelchResult { t, df, p, n_a: a.len(), n_b: b.len(), mean_a: ma, mean_b: mb })
}

/// Welch test on observations aligned by key: only keys present in both
/// sets are used, in key order. The variance treatment stays unequal.
pub fn welch_t_keyed<K: Ord + Clone>(a: &[(K, f64)], b: &[(K, f64)]) -> Result<WelchResult> {
    let left: BTreeMap<K, f64> = a.iter().cloned().collect();
    let right: BTreeMap<K, f64> = b.iter().cloned().collect();
    if left.len() != a.len() || right.len() != b.len() {
        return Err(Error::Invalid("duplicate pairing keys".into()));
    }
    let (xa, xb): (Vec<f64>, Vec<f64>) = left
        .iter()
        .filter_map(|(k, va)| right.get(k).map(|vb| (*va, *vb)))
        .unzip();
    welch_t(&xa, &xb)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub start_s: f64,
    pub end_s: f64,
    pub window_s: f64,
    pub shift_s: f64,
    pub arm_count: usize,
    /// Allow the cascade to fall back to stage 1 (ablation only).
    pub reversible: bool,
    /// Score idle windows as AO; otherwise they are left out of the counts.
    pub idle_as_ao: bool,
}

impl StreamConfig {
    /// 0-13 s, 2 s windows, 0.2 s shift.
    pub fn mi() -> Self {
        Self {
            start_s: 0.0,
            end_s: 13.0,
            window_s: 2.0,
            shift_s: 0.2,
            arm_count: DEFAULT_ARM_COUNT,
            reversible: false,
            idle_as_ao: true,
        }
    }

    /// 4-13 s, 1 s windows, 0.5 s shift.
    pub fn me() -> Self {
        Self { start_s: 4.0, window_s: 1.0, shift_s: 0.5, ..Self::mi() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub decisions: Vec<ClassLabel>,
    /// Stage (1 or 2) that produced each decision.
    pub stages: Vec<u8>,
    /// Window whose decision armed stage 2.
    pub switch_window: Option<usize>,
}

/// The two-stage state machine. Stage 1 counts consecutive AO decisions
/// (reset by R); reaching `arm_count` switches to stage 2 from the next
/// window on. With `reversible`, stage 1 keeps running during stage 2 and
/// an R decision returns the machine to stage 1.
pub fn run_cascade(
    n_windows: usize,
    arm_count: usize,
    reversible: bool,
    mut stage1: impl FnMut(usize) -> Result<ClassLabel>,
    mut stage2: impl FnMut(usize) -> Result<ClassLabel>,
) -> Result<CascadeTrace> {
    if arm_count == 0 {
        return Err(Error::Invalid("arm count must be at least 1".into()));
    }
    let mut decisions = Vec::with_capacity(n_windows);
    let mut stages = Vec::with_capacity(n_windows);
    let mut switch_window = None;
    let mut armed = false;
    let mut run = 0;
    for w in 0..n_windows {
        if armed {
            if reversible && stage1(w)? == ClassLabel::R {
                armed = false;
                run = 0;
                decisions.push(ClassLabel::R);
                stages.push(1);
                continue;
            }
            decisions.push(stage2(w)?);
            stages.push(2);
            continue;
        }
        let d = stage1(w)?;
        match d {
            ClassLabel::Ao => run += 1,
            ClassLabel::R => run = 0,
            other => {
                return Err(Error::Label(format!("stage 1 produced {other}, expected R or AO")));
            }
        }
        decisions.push(d);
        stages.push(1);
        if run >= arm_count {
            armed = true;
            switch_window.get_or_insert(w);
        }
    }
    Ok(CascadeTrace { decisions, stages, switch_window })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub decisions: Vec<ClassLabel>,
    /// Ground truth per window; `None` where the window is not scored.
    pub truth: Vec<Option<ClassLabel>>,
    pub switch_window: Option<usize>,
    pub counts: ConfusionCounts,
    pub rates: Rates,
}

/// Class of the protocol state at `t_s`.
pub fn truth_at(timeline: &ProtocolTimeline, t_s: f64, idle_as_ao: bool) -> Option<ClassLabel> {
    match timeline.state_at(t_s)? {
        ProtocolState::R => Some(ClassLabel::R),
        ProtocolState::Ao => Some(ClassLabel::Ao),
        ProtocolState::Idle => idle_as_ao.then_some(ClassLabel::Ao),
        ProtocolState::Task => Some(match timeline.session {
            Session::Mi => ClassLabel::Mi,
            Session::Me => ClassLabel::Mrcp,
        }),
    }
}

/// Midpoint truth of every stream window.
pub fn stream_truth(timeline: &ProtocolTimeline, cfg: &StreamConfig, n_windows: usize) -> Vec<Option<ClassLabel>> {
    (0..n_windows)
        .map(|w| {
            let mid = cfg.start_s + w as f64 * cfg.shift_s + cfg.window_s / 2.0;
            truth_at(timeline, mid, cfg.idle_as_ao)
        })
        .collect()
}

/// Confusion counts of `decisions` against `truth` with `positive` as the
/// detected class.
pub fn score_stream(decisions: &[ClassLabel], truth: &[Option<ClassLabel>], positive: ClassLabel) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (d, t) in decisions.iter().zip(truth) {
        if let Some(t) = t {
            c.add(*d == positive, *t == positive);
        }
    }
    c
}

struct StreamWindows {
    segment: Array2<f64>,
    starts: Vec<usize>,
    len: usize,
}

impl StreamWindows {
    fn new(trial: &TrialData, cfg: &StreamConfig) -> Result<Self> {
        let segment = epoch_at(trial.eeg.view(), trial.fs, trial.rest_onset, cfg.start_s, cfg.end_s, 0)?;
        let starts = window_starts(segment.ncols(), trial.fs, cfg.window_s, cfg.shift_s)?;
        let len = time_to_index(cfg.window_s, trial.fs) as usize;
        Ok(Self { segment, starts, len })
    }

    fn window(&self, w: usize) -> ArrayView2<'_, f64> {
        let s = self.starts[w];
        self.segment.slice(ndarray::s![.., s..s + self.len])
    }
}

/// Cascaded MI-session stream: R-vs-AO until armed, then AO-vs-MI.
pub fn cascade_stream(
    trial: &TrialData,
    stage1: &dyn WindowClassifier,
    stage2: &dyn WindowClassifier,
    cfg: &StreamConfig,
) -> Result<StreamReport> {
    let windows = StreamWindows::new(trial, cfg)?;
    let n = windows.starts.len();
    let trace = run_cascade(
        n,
        cfg.arm_count,
        cfg.reversible,
        |w| stage1.classify(windows.window(w)),
        |w| stage2.classify(windows.window(w)),
    )?;
    let truth = stream_truth(&trial.timeline, cfg, n);
    let counts = score_stream(&trace.decisions, &truth, ClassLabel::Mi);
    Ok(StreamReport {
        decisions: trace.decisions,
        truth,
        switch_window: trace.switch_window,
        counts,
        rates: metrics(&counts),
    })
}

/// Single-stage ME-session stream with positive class MRCP.
pub fn me_stream(trial: &TrialData, model: &dyn WindowClassifier, cfg: &StreamConfig) -> Result<StreamReport> {
    let windows = StreamWindows::new(trial, cfg)?;
    let n = windows.starts.len();
    let decisions = (0..n).map(|w| model.classify(windows.window(w))).collect::<Result<Vec<_>>>()?;
    let truth = stream_truth(&trial.timeline, cfg, n);
    let counts = score_stream(&decisions, &truth, ClassLabel::Mrcp);
    Ok(StreamReport { decisions, truth, switch_window: None, counts, rates: metrics(&counts) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrandAverage {
    pub mean: Array2<f64>,
    /// `None` for a single trial.
    pub se: Option<Array2<f64>>,
    pub n: usize,
    pub times_s: Vec<f64>,
}

/// Pointwise mean and standard error across epochs (`channels x samples`).
pub fn grand_average_mrcp(epochs: &[Array2<f64>], fs: f64, start_s: f64) -> Result<GrandAverage> {
    let first = epochs.first().ok_or_else(|| Error::Size("no epochs to average".into()))?;
    if let Some(bad) = epochs.iter().find(|e| e.dim() != first.dim()) {
        return Err(Error::Shape(format!("epoch shape {:?} differs from {:?}", bad.dim(), first.dim())));
    }
    let n = epochs.len() as f64;
    let mut mean = Array2::<f64>::zeros(first.dim());
    for e in epochs {
        mean += e;
    }
    mean /= n;
    let se = (epochs.len() > 1).then(|| {
        let mut ss = Array2::<f64>::zeros(first.dim());
        for e in epochs {
            ss += &(e - &mean).mapv(|v| v * v);
        }
        ss.mapv(|v| (v / (n - 1.0) / n).sqrt())
    });
    let times_s = (0..first.ncols()).map(|i| start_s + i as f64 / fs).collect();
    Ok(GrandAverage { mean, se, n: epochs.len(), times_s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    struct Fixed(ClassLabel);

    impl WindowClassifier for Fixed {
        fn classify(&self, _: ArrayView2<'_, f64>) -> Result<ClassLabel> {
            Ok(self.0)
        }
    }

    fn blank_trial(session: Session) -> TrialData {
        TrialData {
            eeg: Array2::zeros((2, 250 * 15)),
            eog: None,
            fs: 250.0,
            rest_onset: 250,
            movement_onset: Some(250 + 250 * 10),
            timeline: ProtocolTimeline::standard(session, Transition::SitToStand),
        }
    }

    fn scripted(seq: Vec<ClassLabel>) -> impl FnMut(usize) -> Result<ClassLabel> {
        move |w| Ok(seq[w])
    }

    #[test]
    fn task_parsing_and_sessions() {
        for t in [Task::RvsAo, Task::AoVsMi, Task::AoVsMrcp] {
            assert_eq!(t.as_str().parse::<Task>().unwrap(), t);
        }
        assert_eq!(Task::AoVsMrcp.session(), Session::Me);
        let mut cfg = PipelineConfig::new(Task::AoVsMi, Transition::StandToSit);
        assert!(cfg.validate().is_ok());
        cfg.session = Session::Me;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn class_epochs_have_expected_lengths() {
        let mi = blank_trial(Session::Mi);
        for class in [ClassLabel::R, ClassLabel::Ao, ClassLabel::Mi] {
            let e = mi.class_epoch(mi.eeg.view(), class, 0).unwrap();
            assert_eq!(e.ncols(), 1000);
            assert_eq!(slide(e.view(), 250.0, 2.0, 0.2).unwrap().dim().0, 11);
        }
        assert!(mi.class_epoch(mi.eeg.view(), ClassLabel::Mrcp, 0).is_err());
        let me = blank_trial(Session::Me);
        for class in [ClassLabel::Ao, ClassLabel::Mrcp] {
            let e = me.class_epoch(me.eeg.view(), class, 0).unwrap();
            assert_eq!(e.ncols(), 625);
            assert_eq!(slide(e.view(), 250.0, 1.0, 0.5).unwrap().dim().0, 4);
        }
    }

    #[test]
    fn metric_examples() {
        let r = metrics(&ConfusionCounts { tp: 3, fn_: 1, ..Default::default() });
        assert_eq!(r.tpr.value(), Some(0.75));
        assert_eq!(r.fnr.value(), Some(0.25));
        assert_eq!(metrics(&ConfusionCounts { fp: 0, tn: 10, ..Default::default() }).fpr.value(), Some(0.0));
        assert_eq!(metrics(&ConfusionCounts::default()).tpr.value(), None);
    }

    proptest! {
        #[test]
        fn tpr_plus_fnr_is_one(tp in 0u64..1000, fn_ in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000) {
            let r = metrics(&ConfusionCounts { tp, fp, tn, fn_ });
            if tp + fn_ > 0 {
                prop_assert_eq!(r.tpr.den, r.fnr.den);
                prop_assert_eq!(r.tpr.num + r.fnr.num, r.tpr.den);
            } else {
                prop_assert!(r.tpr.value().is_none() && r.fnr.value().is_none());
            }
        }
    }

    fn direct_welch(a: &[f64], b: &[f64]) -> (f64, f64) {
        let stats = |x: &[f64]| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let v = x.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (n - 1.0);
            (m, v, n)
        };
        let (ma, va, na) = stats(a);
        let (mb, vb, nb) = stats(b);
        let t = (ma - mb) / (va / na + vb / nb).sqrt();
        let df = (va / na + vb / nb).powi(2) / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
        (t, df)
    }

    #[test]
    fn welch_examples() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [3.0, 4.0, 5.0, 6.0, 7.0];
        let r = welch_t(&a, &b).unwrap();
        // Equal variances 2.5: t = -2 / sqrt(1), df = 8.
        assert!((r.t + 2.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        let (t, df) = direct_welch(&a, &b);
        assert_eq!((r.t, r.df), (t, df));
        // Two-tailed p from Student's t with 8 df.
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let dist = StudentsT::new(0.0, 1.0, 8.0).unwrap();
        assert!((r.p - 2.0 * dist.cdf(-2.0)).abs() < 1e-12);
        let same = welch_t(&a, &a).unwrap();
        assert_eq!((same.t, same.p), (0.0, 1.0));
        let swapped = welch_t(&b, &a).unwrap();
        assert_eq!(swapped.t, -r.t);
        assert_eq!(swapped.p, r.p);
        assert!(matches!(welch_t(&[1.0, 1.0], &[2.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(welch_t(&[1.0], &a).is_err());
    }

    #[test]
    fn welch_keyed_aligns() {
        let a = vec![(3, 1.0), (1, 2.0), (2, 4.0), (9, 100.0)];
        let b = vec![(1, 1.0), (2, 3.0), (3, 2.0)];
        let r = welch_t_keyed(&a, &b).unwrap();
        let plain = welch_t(&[2.0, 4.0, 1.0], &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(r, plain);
    }

    #[test]
    fn cascade_arms_after_five_ao() {
        use ClassLabel::{Ao, Mi, R};
        let mut seq = vec![R; 56];
        for w in [3, 4, 5, 6] {
            seq[w] = Ao;
        }
        for w in 20..40 {
            seq[w] = Ao;
        }
        let trace = run_cascade(56, 5, false, scripted(seq), |_| Ok(Mi)).unwrap();
        assert_eq!(trace.switch_window, Some(24));
        assert!(trace.stages[..25].iter().all(|s| *s == 1));
        assert!(trace.stages[25..].iter().all(|s| *s == 2));
        assert!(trace.decisions[25..].iter().all(|d| *d == Mi));
    }

    #[test]
    fn cascade_is_irreversible_unless_asked() {
        use ClassLabel::{Ao, Mi, R};
        let mut seq = vec![Ao; 10];
        seq.extend(vec![R; 10]);
        let fixed = run_cascade(20, 5, false, scripted(seq.clone()), |_| Ok(Mi)).unwrap();
        assert!(fixed.decisions[5..].iter().all(|d| *d == Mi));
        let rev = run_cascade(20, 5, true, scripted(seq), |_| Ok(Mi)).unwrap();
        assert_eq!(&rev.decisions[5..10], &[Mi; 5]);
        assert!(rev.decisions[10..].iter().all(|d| *d == R));
    }

    proptest! {
        #[test]
        fn switch_index_monotone_in_arm_count(bits in proptest::collection::vec(any::<bool>(), 56), k in 1usize..8) {
            let seq: Vec<ClassLabel> = bits.iter().map(|b| if *b { ClassLabel::Ao } else { ClassLabel::R }).collect();
            let hi = run_cascade(56, k + 1, false, scripted(seq.clone()), |_| Ok(ClassLabel::Mi)).unwrap();
            let lo = run_cascade(56, k, false, scripted(seq), |_| Ok(ClassLabel::Mi)).unwrap();
            match (lo.switch_window, hi.switch_window) {
                (Some(a), Some(b)) => prop_assert!(a <= b),
                (None, Some(_)) => prop_assert!(false),
                _ => {}
            }
        }

        #[test]
        fn stream_count_matches_formula(dur in 2.0f64..20.0, win in 0.2f64..2.0, shift in 0.1f64..1.0) {
            let fs = 250.0;
            let n = time_to_index(dur, fs) as usize;
            let starts = window_starts(n, fs, win, shift).unwrap();
            let expected = crate::recording::window_count(n as f64 / fs, win, shift).unwrap();
            prop_assert_eq!(starts.len(), expected);
        }
    }

    #[test]
    fn stream_arithmetic_and_forced_paths() {
        let mi = blank_trial(Session::Mi);
        let cfg = StreamConfig::mi();
        let all_r = cascade_stream(&mi, &Fixed(ClassLabel::R), &Fixed(ClassLabel::Mi), &cfg).unwrap();
        assert_eq!(all_r.decisions.len(), 56);
        assert_eq!(all_r.switch_window, None);
        assert_eq!(all_r.counts.tp + all_r.counts.fp, 0);
        assert_eq!(all_r.rates.fpr.value(), Some(0.0));

        let me = blank_trial(Session::Me);
        let cfg = StreamConfig::me();
        let all_ao = me_stream(&me, &Fixed(ClassLabel::Ao), &cfg).unwrap();
        assert_eq!(all_ao.decisions.len(), 17);
        assert_eq!(all_ao.rates.tpr.value(), Some(0.0));
        assert_eq!(all_ao.rates.fpr.value(), Some(0.0));

        // Oracle decisions copied from the timeline.
        let truth = stream_truth(&me.timeline, &cfg, 17);
        let oracle: Vec<ClassLabel> = truth.iter().map(|t| t.unwrap_or(ClassLabel::Ao)).collect();
        let c = score_stream(&oracle, &truth, ClassLabel::Mrcp);
        let r = metrics(&c);
        assert_eq!((r.tpr.value(), r.fpr.value(), r.fnr.value()), (Some(1.0), Some(0.0), Some(0.0)));

        let short = TrialData { eeg: Array2::zeros((2, 400)), ..blank_trial(Session::Mi) };
        assert!(cascade_stream(&short, &Fixed(ClassLabel::R), &Fixed(ClassLabel::Mi), &StreamConfig::mi()).is_err());
    }

    #[test]
    fn idle_scoring_is_configurable() {
        let tl = ProtocolTimeline::standard(Session::Mi, Transition::SitToStand);
        assert_eq!(truth_at(&tl, 8.5, true), Some(ClassLabel::Ao));
        assert_eq!(truth_at(&tl, 8.5, false), None);
        assert_eq!(truth_at(&tl, 10.0, true), Some(ClassLabel::Mi));
    }

    #[test]
    fn grand_average_examples() {
        let x = array![[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]];
        let same = grand_average_mrcp(&[x.clone(), x.clone(), x.clone()], 250.0, -1.5).unwrap();
        assert_eq!(same.mean, x);
        assert!(same.se.unwrap().iter().all(|v| *v == 0.0));
        let sym = grand_average_mrcp(&[x.clone(), -&x], 250.0, -1.5).unwrap();
        assert!(sym.mean.iter().all(|v| *v == 0.0));
        assert!(grand_average_mrcp(&[x.clone()], 250.0, -1.5).unwrap().se.is_none());
        assert_eq!(sym.times_s[0], -1.5);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise: Vec<Array2<f64>> = (0..100)
            .map(|_| Array::from_shape_fn((1, 400), |_| StandardNormal.sample(&mut rng)))
            .collect();
        let ga = grand_average_mrcp(&noise, 250.0, -1.5).unwrap();
        let se = ga.se.unwrap();
        let mean_se = se.iter().sum::<f64>() / se.len() as f64;
        assert!((mean_se - 0.1).abs() < 0.02);
    }

    /// Trials whose alpha power on channel 0 vs 1 flips between AO and MI.
    fn alpha_trials(n: usize, depth: f64, seed: u64) -> Vec<TrialData> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = 250.0;
        (0..n)
            .map(|_| {
                let len = 250 * 15;
                let phase: f64 = rng.random_range(0.0..6.28);
                let eeg = Array::from_shape_fn((4, len), |(c, i)| {
                    let t = i as f64 / fs - 1.0;
                    let in_task = (9.0..13.0).contains(&t);
                    let gain = match (c, in_task) {
                        (0, true) => depth,
                        (1, false) => depth,
                        _ => 1.0,
                    };
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    gain * (2.0 * std::f64::consts::PI * 10.0 * t + phase + c as f64).sin() + 0.7 * noise
                });
                TrialData {
                    eeg,
                    eog: None,
                    fs,
                    rest_onset: 250,
                    movement_onset: None,
                    timeline: ProtocolTimeline::standard(Session::Mi, Transition::SitToStand),
                }
            })
            .collect()
    }

    fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::new(Task::AoVsMi, Transition::SitToStand);
        cfg.bands = vec![BandSpec::new(8.0, 12.0), BandSpec::new(12.0, 16.0)];
        cfg.m = 1;
        cfg.ica = None;
        cfg.grid = GridSpec {
            kernels: vec![crate::model::KernelKind::Linear],
            c: vec![0.1, 1.0],
            folds: 5,
            ..GridSpec::full(0)
        };
        cfg
    }

    #[test]
    fn loocv_separates_and_folds_are_isolated() {
        let trials = alpha_trials(6, 3.0, 1);
        let cfg = small_config();
        let report = loocv(&trials, &cfg).unwrap();
        assert_eq!(report.folds.len(), 6);
        assert!(report.folds.iter().all(|f| f.total == 22));
        assert!(report.mean.unwrap() >= 0.9, "{:?}", report.mean);
        // Uncached fold computation equals the cached LOOCV fold.
        let f2 = run_fold(&trials, 2, &cfg);
        assert_eq!(f2, report.folds[2]);
        // Leaking the test trial into training changes the fold.
        let mut train: Vec<&TrialData> = trials.iter().enumerate().filter(|(i, _)| *i != 2).map(|(_, t)| t).collect();
        train.push(&trials[2]);
        let leaked = run_fold_with_training(&train, &trials[2], 2, &cfg);
        assert_ne!(leaked.decision_values, f2.decision_values);
    }

    #[test]
    fn loocv_flags_failed_folds_and_continues() {
        let mut trials = alpha_trials(4, 3.0, 2);
        trials[1].eeg = Array2::zeros((3, 250 * 15));
        let report = loocv(&trials, &small_config()).unwrap();
        assert!(report.n_flagged >= 1);
        assert!(report.folds[1].flag.is_some());
        assert!(loocv(&trials[..2], &small_config()).is_err());
    }

    #[test]
    fn mean_se_values() {
        assert_eq!(mean_se(&[]), (None, None));
        assert_eq!(mean_se(&[0.5]), (Some(0.5), None));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((se.unwrap() - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
