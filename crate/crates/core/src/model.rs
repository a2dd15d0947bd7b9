//! Kernel SVM trained by sequential minimal optimization, plus the
//! cross-validation harness used to pick its hyperparameters.

use std::collections::{HashMap, VecDeque};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-3;
/// Iteration cap per training sample.
pub const ITERATIONS_PER_SAMPLE: usize = 100;
/// Step curvature substituted for non-positive pair curvature.
const TAU: f64 = 1e-12;
/// Multipliers at or below this are dropped from the model.
const ALPHA_EPS: f64 = 1e-12;
/// Byte budget for a fully cached Gram matrix.
pub const KERNEL_CACHE_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelKind {
    Linear,
    Rbf,
    Sigmoid,
}

impl KernelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Rbf => "rbf",
            Self::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "rbf" => Ok(Self::Rbf),
            "sigmoid" => Ok(Self::Sigmoid),
            other => Err(Error::Invalid(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Gamma {
    /// `1 / feature_dim`.
    Auto,
    Value(f64),
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: Gamma,
    pub coef0: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, gamma: Gamma::Auto, coef0: 0.0 }
    }

    pub fn rbf(gamma: Gamma) -> Self {
        Self { kind: KernelKind::Rbf, gamma, coef0: 0.0 }
    }

    pub fn sigmoid(gamma: Gamma) -> Self {
        Self { kind: KernelKind::Sigmoid, gamma, coef0: 0.0 }
    }

    pub fn resolve(&self, dim: usize) -> Result<Kernel> {
        let gamma = match self.gamma {
            Gamma::Auto => 1.0 / dim.max(1) as f64,
            Gamma::Value(g) => g,
        };
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Invalid(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Kernel { kind: self.kind, gamma, coef0: self.coef0 })
    }
}

/// Kernel with a concrete gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    pub gamma: f64,
    pub coef0: f64,
}

impl Kernel {
    pub fn eval(&self, a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
        match self.kind {
            KernelKind::Linear => a.dot(&b),
            KernelKind::Rbf => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Sigmoid => (self.gamma * a.dot(&b) + self.coef0).tanh(),
        }
    }

    /// Gram matrix between the rows of `a` and the rows of `b`.
    pub fn gram(&self, a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let dots = a.dot(&b.t());
        match self.kind {
            KernelKind::Linear => dots,
            KernelKind::Sigmoid => dots.mapv(|v| (self.gamma * v + self.coef0).tanh()),
            KernelKind::Rbf => {
                let na: Vec<f64> = a.rows().into_iter().map(|r| r.dot(&r)).collect();
                let nb: Vec<f64> = b.rows().into_iter().map(|r| r.dot(&r)).collect();
                let mut out = dots;
                for ((i, j), v) in out.indexed_iter_mut() {
                    let d2 = (na[i] + nb[j] - 2.0 * *v).max(0.0);
                    *v = (-self.gamma * d2).exp();
                }
                out
            }
        }
    }
}

/// Source of kernel rows for the solver. `load` makes a row available to
/// `row` without evicting the row passed as `keep`.
trait KernelRows {
    fn load(&mut self, i: usize, keep: Option<usize>);
    fn row(&self, i: usize) -> &[f64];
    fn diag(&self, i: usize) -> f64;
}

/// Gram matrix restricted to a subset of a precomputed full matrix.
struct SubsetGram {
    n: usize,
    values: Vec<f64>,
}

impl SubsetGram {
    fn new(full: &Array2<f64>, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * idx.len());
        for &i in idx {
            let row = full.row(i);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        Self { n: idx.len(), values }
    }
}

impl KernelRows for SubsetGram {
    fn load(&mut self, _i: usize, _keep: Option<usize>) {}

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    fn diag(&self, i: usize) -> f64 {
        self.values[i * self.n + i]
    }
}

/// Rows computed on demand with an LRU cache under the byte budget.
struct LazyGram<'a> {
    x: ArrayView2<'a, f64>,
    kernel: Kernel,
    diag: Vec<f64>,
    cache: HashMap<usize, Vec<f64>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> LazyGram<'a> {
    fn new(x: ArrayView2<'a, f64>, kernel: Kernel, budget: usize) -> Self {
        let n = x.nrows();
        let diag = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();
        let capacity = (budget / (8 * n.max(1))).max(2);
        Self { x, kernel, diag, cache: HashMap::new(), order: VecDeque::new(), capacity }
    }
}

impl KernelRows for LazyGram<'_> {
    fn load(&mut self, i: usize, keep: Option<usize>) {
        if self.cache.contains_key(&i) {
            return;
        }
        if self.cache.len() >= self.capacity {
            if let Some(pos) = self.order.iter().position(|&r| Some(r) != keep) {
                let old = self.order.remove(pos).expect("position is in range");
                self.cache.remove(&old);
            }
        }
        let r = (0..self.x.nrows())
            .map(|j| self.kernel.eval(self.x.row(i), self.x.row(j)))
            .collect();
        self.cache.insert(i, r);
        self.order.push_back(i);
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.cache[&i]
    }

    fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    /// Maximal KKT violation `m - M` at exit.
    pub final_violation: f64,
    pub converged: bool,
    /// Dual objective after each iteration (starting at 0).
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub support_vectors: Array2<f64>,
    /// `alpha_i * y_i` for each support vector.
    pub dual_coef: Vec<f64>,
    /// Training-set row of each support vector.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    pub kernel: Kernel,
    pub spec: KernelSpec,
    pub c: f64,
    pub tol: f64,
    pub diagnostics: TrainDiagnostics,
}

/// Choice of the second working-set index. The first index is always the
/// maximal KKT violator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkingSet {
    /// Partner with the minimal `-y G` (the maximal violating pair).
    MaxViolatingPair,
    /// Violating partner with the largest second-order objective decrease.
    SecondOrder,
}

pub const DEFAULT_WORKING_SET: WorkingSet = WorkingSet::MaxViolatingPair;

struct SmoOutcome {
    alpha: Vec<f64>,
    rho: f64,
    diagnostics: TrainDiagnostics,
}

fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    // f = 1/2 a'Qa - e'a = 1/2 a'(G - e); the dual objective is -f.
    -0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>()
}

/// Solves the C-SVC dual with maximal-violating-pair working sets.
fn smo<Q: KernelRows>(q: &mut Q, y: &[f64], c: f64, tol: f64, selection: WorkingSet) -> Result<SmoOutcome> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let cap = ITERATIONS_PER_SAMPLE * n;
    let mut history = vec![0.0];
    let mut iterations = 0;
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi < 0.0 && a < c) || (yi > 0.0 && a > 0.0);
    let mut violation;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let (mut i, mut j) = (usize::MAX, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        violation = if i == usize::MAX || j == usize::MAX { 0.0 } else { gmax - gmin };
        if violation < tol || iterations >= cap {
            break;
        }
        iterations += 1;

        q.load(i, None);
        let qi = q.row(i);
        if selection == WorkingSet::SecondOrder {
            // Among violating partners, the largest guaranteed objective gain.
            let kii = q.diag(i);
            let mut best = f64::INFINITY;
            for t in 0..n {
                let v = -y[t] * grad[t];
                let b = gmax - v;
                if low(alpha[t], y[t]) && b > 0.0 {
                    let mut a = kii + q.diag(t) - 2.0 * qi[t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let gain = -(b * b) / a;
                    if gain < best {
                        best = gain;
                        j = t;
                    }
                }
            }
        }
        q.load(j, Some(i));
        let (qi, qj) = (q.row(i), q.row(j));
        let (kii, kjj, kij) = (q.diag(i), q.diag(j), qi[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = kii + kjj - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = kii + kjj - 2.0 * kij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        // Kernel rows are in K; Q_it = y_i y_t K_it.
        let (dai, daj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * qi[t] * dai + y[j] * qj[t] * daj);
        }
        history.push(dual_objective(&alpha, &grad));
    }

    let converged = violation < tol;
    if !converged && violation > 10.0 * tol {
        return Err(Error::NonConvergence {
            iterations,
            residual: violation,
            context: format!("SMO with C = {c} hit the {cap}-iteration cap"),
        });
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    Ok(SmoOutcome {
        alpha,
        rho,
        diagnostics: TrainDiagnostics {
            iterations,
            final_violation: violation,
            converged,
            objective_history: history,
        },
    })
}

fn check_training_set(x: ArrayView2<'_, f64>, y: &[f64], c: f64, tol: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", x.nrows(), y.len())));
    }
    if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
        return Err(Error::Label(format!("labels must be +1 or -1, got {bad}")));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::Label("training labels contain a single class".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite feature value".into()));
    }
    if !(c > 0.0 && c.is_finite()) || !(tol > 0.0) {
        return Err(Error::Invalid(format!("need C > 0 and tol > 0, got C = {c}, tol = {tol}")));
    }
    Ok(())
}

fn assemble(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    outcome: SmoOutcome,
    kernel: Kernel,
    spec: KernelSpec,
    c: f64,
    tol: f64,
) -> SvmModel {
    let support_indices: Vec<usize> = (0..y.len()).filter(|&i| outcome.alpha[i] > ALPHA_EPS).collect();
    SvmModel {
        support_vectors: x.select(Axis(0), &support_indices),
        dual_coef: support_indices.iter().map(|&i| outcome.alpha[i] * y[i]).collect(),
        support_indices,
        bias: -outcome.rho,
        kernel,
        spec,
        c,
        tol,
        diagnostics: outcome.diagnostics,
    }
}

/// Trains a C-SVC. Labels are +1/-1.
pub fn svm_train(x: ArrayView2<'_, f64>, y: &[f64], c: f64, spec: KernelSpec, tol: f64) -> Result<SvmModel> {
    svm_train_with(x, y, c, spec, tol, DEFAULT_WORKING_SET)
}

/// [`svm_train`] with an explicit working-set rule.
pub fn svm_train_with(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    c: f64,
    spec: KernelSpec,
    tol: f64,
    selection: WorkingSet,
) -> Result<SvmModel> {
    check_training_set(x, y, c, tol)?;
    let kernel = spec.resolve(x.ncols())?;
    let n = x.nrows();
    let outcome = if n * n * 8 <= KERNEL_CACHE_BYTES {
        let full = kernel.gram(x, x);
        let idx: Vec<usize> = (0..n).collect();
        smo(&mut SubsetGram::new(&full, &idx), y, c, tol, selection)?
    } else {
        smo(&mut LazyGram::new(x, kernel, KERNEL_CACHE_BYTES), y, c, tol, selection)?
    };
    Ok(assemble(x, y, outcome, kernel, spec, c, tol))
}

/// Trains on the rows `idx` of `x` given their Gram matrix.
fn svm_train_subset(
    x: ArrayView2<'_, f64>,
    gram: &mut SubsetGram,
    y_all: &[f64],
    idx: &[usize],
    c: f64,
    kernel: Kernel,
    spec: KernelSpec,
    tol: f64,
) -> Result<SvmModel> {
    let xs = x.select(Axis(0), idx);
    let ys: Vec<f64> = idx.iter().map(|&i| y_all[i]).collect();
    check_training_set(xs.view(), &ys, c, tol)?;
    let outcome = smo(gram, &ys, c, tol, DEFAULT_WORKING_SET)?;
    Ok(assemble(xs.view(), &ys, outcome, kernel, spec, c, tol))
}

impl SvmModel {
    pub fn feature_dim(&self) -> usize {
        self.support_vectors.ncols()
    }

    pub fn decision_function(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        if x.nrows() > 0 && x.ncols() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.feature_dim(),
                x.ncols()
            )));
        }
        let k = self.kernel.gram(x, self.support_vectors.view());
        Ok(k.dot(&Array1::from(self.dual_coef.clone())) + self.bias)
    }

    /// Multiplier of every training row (zero for non-support vectors).
    pub fn alphas(&self, n_train: usize) -> Vec<f64> {
        let mut a = vec![0.0; n_train];
        for (&i, coef) in self.support_indices.iter().zip(&self.dual_coef) {
            a[i] = coef.abs();
        }
        a
    }
}

/// Labels (+1/-1) and decision values; a zero decision value maps to -1.
pub fn svm_predict(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let values = model.decision_function(x)?.to_vec();
    let labels = values.iter().map(|&v| if v > 0.0 { 1.0 } else { -1.0 }).collect();
    Ok((labels, values))
}

/// Largest KKT residual of a trained model on its own training set.
pub fn kkt_residual(model: &SvmModel, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64> {
    let f = model.decision_function(x)?;
    let alpha = model.alphas(y.len());
    let c = model.c;
    let bound = 1e-12 * c.max(1.0);
    Ok(y.iter()
        .zip(f.iter())
        .zip(&alpha)
        .map(|((&yi, &fi), &a)| {
            let m = yi * fi;
            if a <= bound {
                (1.0 - m).max(0.0)
            } else if a >= c - bound {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .fold(0.0, f64::max))
}

/// Per-dimension z-score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaler {
    /// Constant columns get unit scale.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Size("cannot standardize zero rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty").to_vec();
        let scale = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(col, m)| {
                let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} features, got {}",
                self.mean.len(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Fold index of every sample. Classes are shuffled with `seed`, then dealt
/// round-robin with the fold counter carried from one class to the next.
pub fn stratified_kfold<T: Ord + Copy>(y: &[T], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut classes: Vec<T> = y.to_vec();
    classes.sort();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; y.len()];
    let mut next = 0;
    for class in classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        if members.len() < k {
            return Err(Error::Stratification(format!(
                "class with {} samples cannot fill {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

pub const GRID_C: [f64; 9] = [0.001, 0.01, 0.1, 1.0, 10.0, 25.0, 50.0, 100.0, 1000.0];
pub const GRID_GAMMA: [Gamma; 5] = [
    Gamma::Auto,
    Gamma::Value(0.01),
    Gamma::Value(0.001),
    Gamma::Value(0.0001),
    Gamma::Value(0.00001),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub kernels: Vec<KernelKind>,
    pub c: Vec<f64>,
    pub gamma: Vec<Gamma>,
    pub folds: usize,
    pub seed: u64,
    pub tol: f64,
    pub coef0: f64,
}

impl GridSpec {
    /// Three kernels, nine C values, five gammas, 10 folds.
    pub fn full(seed: u64) -> Self {
        Self {
            kernels: vec![KernelKind::Linear, KernelKind::Rbf, KernelKind::Sigmoid],
            c: GRID_C.to_vec(),
            gamma: GRID_GAMMA.to_vec(),
            folds: 10,
            seed,
            tol: DEFAULT_TOL,
            coef0: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.c.is_empty() || self.gamma.is_empty() {
            return Err(Error::Invalid("grid lists must be non-empty".into()));
        }
        if self.folds < 2 {
            return Err(Error::Invalid(format!("need at least 2 folds, got {}", self.folds)));
        }
        Ok(())
    }

    /// Canonical enumeration: kernel order as listed, C ascending, gamma
    /// order as listed; the linear kernel contributes one candidate per C.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut cs = self.c.clone();
        cs.sort_by(f64::total_cmp);
        let mut out = Vec::new();
        for &kind in &self.kernels {
            for &c in &cs {
                let gammas: &[Gamma] = if kind == KernelKind::Linear { &[Gamma::Auto] } else { &self.gamma };
                for &gamma in gammas {
                    out.push(Candidate { kernel: KernelSpec { kind, gamma, coef0: self.coef0 }, c });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub kernel: KernelSpec,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub candidate: Candidate,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    /// Some fold failed to converge; the candidate scores 0.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: Candidate,
    pub best_accuracy: f64,
    pub table: Vec<CandidateScore>,
}

/// Stratified k-fold grid search over `grid`; returns the first candidate
/// (in canonical order) with the highest mean fold accuracy.
pub fn grid_search(x: ArrayView2<'_, f64>, y: &[f64], grid: &GridSpec) -> Result<GridResult> {
    grid.validate()?;
    check_training_set(x, y, 1.0, grid.tol)?;
    let labels: Vec<i8> = y.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect();
    let folds = stratified_kfold(&labels, grid.folds, grid.seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..grid.folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| folds[i] == f);
            (train, test)
        })
        .collect();

    // Candidates sharing a kernel reuse its per-fold Gram matrices.
    let candidates = grid.candidates();
    let mut kernels: Vec<Kernel> = Vec::new();
    let mut kernel_of = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let kernel = cand.kernel.resolve(x.ncols())?;
        let k = kernels.iter().position(|&other| other == kernel).unwrap_or_else(|| {
            kernels.push(kernel);
            kernels.len() - 1
        });
        kernel_of.push(k);
    }
    let mut scores: Vec<Option<CandidateScore>> = vec![None; candidates.len()];
    for (k, &kernel) in kernels.iter().enumerate() {
        let members: Vec<usize> = (0..candidates.len()).filter(|&i| kernel_of[i] == k).collect();
        let full = kernel.gram(x, x);
        let mut accs = vec![Vec::with_capacity(splits.len()); members.len()];
        let mut flagged = vec![false; members.len()];
        for (train, test) in &splits {
            let mut sub = SubsetGram::new(&full, train);
            let x_test = x.select(Axis(0), test);
            for (m, &ci) in members.iter().enumerate() {
                let cand = candidates[ci];
                match svm_train_subset(x, &mut sub, y, train, cand.c, kernel, cand.kernel, grid.tol) {
                    Ok(model) => {
                        let (pred, _) = svm_predict(&model, x_test.view())?;
                        let correct = pred.iter().zip(test).filter(|(p, &i)| **p == y[i]).count();
                        accs[m].push(correct as f64 / test.len() as f64);
                    }
                    Err(Error::NonConvergence { .. }) => {
                        flagged[m] = true;
                        accs[m].push(0.0);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        for (m, &ci) in members.iter().enumerate() {
            let fold_accuracies = std::mem::take(&mut accs[m]);
            let mean = if flagged[m] { 0.0 } else { fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64 };
            scores[ci] = Some(CandidateScore {
                candidate: candidates[ci],
                mean_accuracy: mean,
                fold_accuracies,
                flagged: flagged[m],
            });
        }
    }
    let table: Vec<CandidateScore> = scores.into_iter().map(|s| s.expect("every candidate scored")).collect();
    let mut best = 0;
    for (i, row) in table.iter().enumerate() {
        if row.mean_accuracy > table[best].mean_accuracy {
            best = i;
        }
    }
    Ok(GridResult {
        best: table[best].candidate,
        best_accuracy: table[best].mean_accuracy,
        table,
    })
}
