//! Gaussian-kernel soft-margin SVM trained by SMO and combined one-vs-one.
//!
//! The binary solver minimizes the dual `½αᵀQα − eᵀα` subject to
//! `0 ≤ αᵢ ≤ C` and `yᵀα = 0`, with `Qᵢⱼ = yᵢyⱼ exp(−γ‖xᵢ − xⱼ‖²)`. Each
//! step picks the maximal-violating index `i` and the partner `j` with the
//! largest second-order decrease of the objective, then solves the
//! two-variable subproblem analytically. It stops once the KKT gap
//! `m(α) − M(α)` drops below the tolerance.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter::Dataset;
use crate::linalg::{dot, exp_neg};
use crate::volume::Label;

const TAU: f64 = 1e-12;

/// Hyperparameters of every binary SVM in a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Box constraint `C`.
    pub c: f64,
    /// Kernel width; `None` means `1 / n` for `n` features.
    pub gamma: Option<f64>,
    /// KKT gap at which SMO stops.
    pub tolerance: f64,
    /// Iteration cap per binary problem; `None` means `max(10⁷, 100·l)`.
    pub max_iterations: Option<usize>,
    /// Kernel row cache budget per binary problem, in MiB.
    pub cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tolerance: 1e-3, max_iterations: None, cache_mb: 200 }
    }
}

impl SvmConfig {
    pub fn with_params(c: f64, gamma: f64) -> Self {
        Self { c, gamma: Some(gamma), ..Self::default() }
    }

    pub fn gamma_for(&self, n: usize) -> f64 {
        self.gamma.unwrap_or(1.0 / n as f64)
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(invalid!("C must be > 0, got {}", self.c));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid!("gamma must be > 0, got {g}"));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid!("tolerance must be > 0, got {}", self.tolerance));
        }
        Ok(())
    }
}

/// Per-feature z-score statistics of a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Standard deviations below this are treated as constant features.
pub const MIN_SIGMA: f64 = 1e-12;

impl Normalizer {
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mu).zip(&self.sigma) {
            *o = (v - m) / s;
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

/// Population mean and standard deviation of each feature; degenerate
/// deviations are replaced by 1.
pub fn fit_normalizer(train: &Dataset) -> Result<Normalizer> {
    if train.is_empty() {
        return Err(invalid!("cannot fit a normalizer on an empty dataset"));
    }
    let n = train.n();
    let count = train.len() as f64;
    let mut mu = vec![0.0; n];
    for s in 0..train.len() {
        for (m, v) in mu.iter_mut().zip(train.sample(s)) {
            *m += v;
        }
    }
    mu.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; n];
    for s in 0..train.len() {
        for ((acc, v), m) in var.iter_mut().zip(train.sample(s)).zip(&mu) {
            let d = v - m;
            *acc += d * d;
        }
    }
    let sigma = var
        .into_iter()
        .map(|v| {
            let s = libm::sqrt(v / count);
            if s < MIN_SIGMA {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(Normalizer { mu, sigma })
}

/// Result of one binary SMO run.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    /// Offset `ρ` of the decision function `f(x) = Σ αᵢyᵢK(xᵢ, x) − ρ`.
    pub rho: f64,
    /// Dual objective `½αᵀQα − eᵀα` at the solution.
    pub objective: f64,
    pub iterations: usize,
}

/// Rows of the signed kernel matrix `Q`, computed on demand with an LRU cache.
struct QMatrix<'a> {
    x: &'a [f64],
    n: usize,
    y: &'a [f64],
    gamma: f64,
    norms: Vec<f64>,
    l: usize,
    capacity: usize,
    data: Vec<f64>,
    slot_row: Vec<usize>,
    slot_stamp: Vec<u64>,
    row_slot: Vec<usize>,
    clock: u64,
}

const NO_SLOT: usize = usize::MAX;

/// `‖a − b‖²` from precomputed squared norms; training and prediction both
/// use this form so their kernel values agree bit for bit.
#[inline]
fn sq_dist(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    (norm_a + norm_b - 2.0 * dot(a, b)).max(0.0)
}

impl<'a> QMatrix<'a> {
    fn new(x: &'a [f64], n: usize, y: &'a [f64], gamma: f64, cache_bytes: usize) -> Self {
        let l = y.len();
        let norms = (0..l).map(|i| dot(&x[i * n..(i + 1) * n], &x[i * n..(i + 1) * n])).collect();
        let capacity = (cache_bytes / (8 * l.max(1))).clamp(2, l.max(2));
        Self {
            x,
            n,
            y,
            gamma,
            norms,
            l,
            capacity,
            data: Vec::with_capacity(capacity * l),
            slot_row: Vec::new(),
            slot_stamp: Vec::new(),
            row_slot: vec![NO_SLOT; l],
            clock: 0,
        }
    }

    /// Makes row `i` resident and returns its slot.
    fn ensure(&mut self, i: usize) -> usize {
        self.clock += 1;
        let s = self.row_slot[i];
        if s != NO_SLOT {
            self.slot_stamp[s] = self.clock;
            return s;
        }
        let slot = if self.slot_row.len() < self.capacity {
            self.data.resize(self.data.len() + self.l, 0.0);
            self.slot_row.push(i);
            self.slot_stamp.push(self.clock);
            self.slot_row.len() - 1
        } else {
            let (victim, _) = self
                .slot_stamp
                .iter()
                .enumerate()
                .min_by_key(|(_, &t)| t)
                .expect("cache has at least two slots");
            self.row_slot[self.slot_row[victim]] = NO_SLOT;
            self.slot_row[victim] = i;
            self.slot_stamp[victim] = self.clock;
            victim
        };
        self.row_slot[i] = slot;
        let (n, l, gamma) = (self.n, self.l, self.gamma);
        let xi = &self.x[i * n..(i + 1) * n];
        let (ni, yi) = (self.norms[i], self.y[i]);
        let row = &mut self.data[slot * l..(slot + 1) * l];
        for ((q, xt), nt) in row.iter_mut().zip(self.x.chunks_exact(n)).zip(&self.norms) {
            *q = gamma * sq_dist(xi, ni, xt, *nt);
        }
        for (q, yt) in row.iter_mut().zip(self.y) {
            *q = yi * yt * exp_neg(*q);
        }
        slot
    }

    fn row(&self, slot: usize) -> &[f64] {
        &self.data[slot * self.l..(slot + 1) * self.l]
    }
}

/// Solves one binary C-SVC dual by SMO.
///
/// `x` is row-major with `n` features per sample and `y` holds ±1 targets.
#[allow(clippy::too_many_arguments)]
pub fn solve_binary(
    x: &[f64],
    n: usize,
    y: &[f64],
    c: f64,
    gamma: f64,
    tolerance: f64,
    max_iterations: Option<usize>,
    cache_bytes: usize,
) -> Result<Solution> {
    let l = y.len();
    if l == 0 || x.len() != l * n {
        return Err(invalid!("binary problem needs {l} rows of {n} features, got {} values", x.len()));
    }
    let max_iter = max_iterations.unwrap_or_else(|| 10_000_000usize.max(100 * l));
    let mut q = QMatrix::new(x, n, y, gamma, cache_bytes);
    // RBF kernel: K(x, x) = 1.
    let qd = 1.0;
    let mut alpha = vec![0.0; l];
    let mut grad = vec![-1.0; l];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    // Membership of the sets where αₜ may move in the direction of yₜ (up)
    // or against it (low).
    let in_up = |a: f64, yt: f64| if yt > 0.0 { !upper(a) } else { !lower(a) };
    let in_low = |a: f64, yt: f64| if yt > 0.0 { !lower(a) } else { !upper(a) };
    let mut up: Vec<bool> = y.iter().map(|&yt| in_up(0.0, yt)).collect();
    let mut low: Vec<bool> = y.iter().map(|&yt| in_low(0.0, yt)).collect();
    let mut iterations = 0;

    // Index i: maximal violation −yₜGₜ among the up set.
    let (mut gmax, mut i) = (f64::NEG_INFINITY, NO_SLOT);
    for t in 0..l {
        let v = -y[t] * grad[t];
        if up[t] && v >= gmax {
            gmax = v;
            i = t;
        }
    }

    loop {
        if i == NO_SLOT {
            break;
        }
        let slot_i = q.ensure(i);
        let yi = y[i];
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = NO_SLOT;
        let mut obj_min = f64::INFINITY;
        {
            let qi = q.row(slot_i);
            for t in 0..l {
                if low[t] {
                    let v = -y[t] * grad[t];
                    if -v >= gmax2 {
                        gmax2 = -v;
                    }
                    let gd = gmax - v;
                    if gd > 0.0 {
                        let quad = qd + qd - 2.0 * yi * y[t] * qi[t];
                        let obj = -(gd * gd) / if quad > 0.0 { quad } else { TAU };
                        if obj <= obj_min {
                            j = t;
                            obj_min = obj;
                        }
                    }
                }
            }
        }
        if gmax + gmax2 < tolerance || j == NO_SLOT {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NotConverged { iterations });
        }
        iterations += 1;

        let slot_i = q.ensure(i);
        let slot_j = q.ensure(j);
        let qij = q.row(slot_i)[j];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = qd + qd + 2.0 * qij;
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
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
            let quad = qd + qd - 2.0 * qij;
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
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
        for t in [i, j] {
            up[t] = in_up(alpha[t], y[t]);
            low[t] = in_low(alpha[t], y[t]);
        }
        // Gradient update fused with the next choice of i.
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (qi, qj) = (q.row(slot_i), q.row(slot_j));
        (gmax, i) = (f64::NEG_INFINITY, NO_SLOT);
        for t in 0..l {
            grad[t] += qi[t] * di + qj[t] * dj;
            let v = -y[t] * grad[t];
            if up[t] && v >= gmax {
                gmax = v;
                i = t;
            }
        }
    }

    // ρ: mean of yG over free variables, else the midpoint of the feasible interval.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..l {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    let objective = alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>() / 2.0;
    Ok(Solution { alpha, rho, objective, iterations })
}

/// One pairwise classifier. Positive decisions vote for `positive`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: Label,
    pub negative: Label,
    /// Row-major support vectors in normalized feature space.
    pub support: Vec<f64>,
    /// `αᵢyᵢ` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Set when a class of the pair was absent; the binary then always votes this class.
    pub constant_vote: Option<Label>,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn n_support(&self) -> usize {
        self.coef.len()
    }

    /// Decision value `Σ αᵢyᵢK(sᵢ, x) + b` for a normalized `x`.
    pub fn decision(&self, x: &[f64], gamma: f64) -> f64 {
        let n = x.len();
        let nx = dot(x, x);
        let mut f = self.bias;
        for (s, c) in self.support.chunks_exact(n).zip(&self.coef) {
            f += c * exp_neg(gamma * sq_dist(x, nx, s, dot(s, s)));
        }
        f
    }

    pub fn vote(&self, x: &[f64], gamma: f64) -> Label {
        if let Some(l) = self.constant_vote {
            return l;
        }
        if self.decision(x, gamma) > 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Trained one-vs-one classifier over the four tissue classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub n: usize,
    pub gamma: f64,
    pub config: SvmConfig,
    pub normalizer: Normalizer,
    pub binaries: Vec<BinarySvm>,
}

fn pair_labels() -> impl Iterator<Item = (Label, Label)> {
    Label::ALL
        .into_iter()
        .enumerate()
        .flat_map(|(i, a)| Label::ALL[i + 1..].iter().map(move |&b| (a, b)))
}

/// Fits a normalizer on `train` and one SMO binary per class pair.
pub fn train_svm(train: &Dataset, config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    let hist = train.histogram();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(invalid!("training set needs at least two classes, got counts {hist:?}"));
    }
    let n = train.n();
    let normalizer = fit_normalizer(train)?;
    let mut x = vec![0.0; train.len() * n];
    for s in 0..train.len() {
        normalizer.apply(train.sample(s), &mut x[s * n..(s + 1) * n]);
    }
    if x.iter().all(|v| *v == 0.0) {
        return Err(Error::Numerical("all training samples are identical".into()));
    }
    let gamma = config.gamma_for(n);
    let cache_bytes = config.cache_mb.saturating_mul(1 << 20);

    let mut binaries = Vec::with_capacity(6);
    for (pos, neg) in pair_labels() {
        let (np, nn) = (hist[pos.index()], hist[neg.index()]);
        if np == 0 || nn == 0 {
            // Absent classes can never out-vote present ones: each present class
            // collects one vote from every pair it forms with an absent class.
            let vote = if np > 0 || nn == 0 { pos } else { neg };
            binaries.push(BinarySvm {
                positive: pos,
                negative: neg,
                support: Vec::new(),
                coef: Vec::new(),
                bias: 0.0,
                constant_vote: Some(vote),
                iterations: 0,
            });
            continue;
        }
        let mut px = Vec::with_capacity((np + nn) * n);
        let mut py = Vec::with_capacity(np + nn);
        for s in 0..train.len() {
            let l = train.label(s);
            if l == pos || l == neg {
                px.extend_from_slice(&x[s * n..(s + 1) * n]);
                py.push(if l == pos { 1.0 } else { -1.0 });
            }
        }
        let sol = solve_binary(&px, n, &py, config.c, gamma, config.tolerance, config.max_iterations, cache_bytes)?;
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for (t, a) in sol.alpha.iter().enumerate() {
            if *a > 0.0 {
                support.extend_from_slice(&px[t * n..(t + 1) * n]);
                coef.push(a * py[t]);
            }
        }
        binaries.push(BinarySvm {
            positive: pos,
            negative: neg,
            support,
            coef,
            bias: -sol.rho,
            constant_vote: None,
            iterations: sol.iterations,
        });
    }
    Ok(SvmModel { n, gamma, config: *config, normalizer, binaries })
}

impl SvmModel {
    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(invalid!("feature vector has length {}, model expects {}", x.len(), self.n));
        }
        Ok(())
    }

    /// Votes per class (indexed by label code) for a raw feature vector.
    pub fn votes(&self, x: &[f64]) -> Result<[u32; Label::COUNT]> {
        self.check_len(x)?;
        let mut z = vec![0.0; self.n];
        self.normalizer.apply(x, &mut z);
        Ok(self.votes_normalized(&z))
    }

    fn votes_normalized(&self, z: &[f64]) -> [u32; Label::COUNT] {
        let mut votes = [0; Label::COUNT];
        for b in &self.binaries {
            votes[b.vote(z, self.gamma).index()] += 1;
        }
        votes
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(winner(&self.votes(x)?))
    }

    /// Predicts every row of a row-major batch.
    ///
    /// Support vectors shared between pairwise classifiers are evaluated once
    /// per row; the votes equal those of [`SvmModel::predict`].
    pub fn predict_rows(&self, rows: &[f64]) -> Result<Vec<Label>> {
        if !rows.len().is_multiple_of(self.n) {
            return Err(invalid!("batch of {} values is not a multiple of n = {}", rows.len(), self.n));
        }
        let n = self.n;
        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut unique: Vec<f64> = Vec::new();
        let refs: Vec<Vec<usize>> = self
            .binaries
            .iter()
            .map(|b| {
                b.support
                    .chunks_exact(n)
                    .map(|s| {
                        let key = s.iter().map(|v| v.to_bits()).collect();
                        *index.entry(key).or_insert_with(|| {
                            unique.extend_from_slice(s);
                            unique.len() / n - 1
                        })
                    })
                    .collect()
            })
            .collect();
        let norms: Vec<f64> = unique.chunks_exact(n).map(|s| dot(s, s)).collect();
        let mut kernel = vec![0.0; norms.len()];
        let mut z = vec![0.0; n];
        Ok(rows
            .chunks_exact(n)
            .map(|x| {
                self.normalizer.apply(x, &mut z);
                let nz = dot(&z, &z);
                for ((k, s), ns) in kernel.iter_mut().zip(unique.chunks_exact(n)).zip(&norms) {
                    *k = self.gamma * sq_dist(&z, nz, s, *ns);
                }
                kernel.iter_mut().for_each(|k| *k = exp_neg(*k));
                let mut votes = [0; Label::COUNT];
                for (b, idx) in self.binaries.iter().zip(&refs) {
                    let label = match b.constant_vote {
                        Some(l) => l,
                        None => {
                            let f = idx.iter().zip(&b.coef).fold(b.bias, |f, (&i, c)| f + c * kernel[i]);
                            if f > 0.0 {
                                b.positive
                            } else {
                                b.negative
                            }
                        }
                    };
                    votes[label.index()] += 1;
                }
                winner(&votes)
            })
            .collect())
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<Label>> {
        self.check_len(&vec![0.0; data.n()])?;
        self.predict_rows(data.features())
    }

    pub fn n_support(&self) -> usize {
        self.binaries.iter().map(BinarySvm::n_support).sum()
    }
}

/// Class with most votes; ties go to the lowest class code.
pub fn winner(votes: &[u32; Label::COUNT]) -> Label {
    let mut best = 0;
    for (i, v) in votes.iter().enumerate() {
        if *v > votes[best] {
            best = i;
        }
    }
    Label::ALL[best]
}
