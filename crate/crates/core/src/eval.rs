//! Stratified cross-validation and the weighted white-matter error score.
//!
//! Three failure modes are counted separately:
//! - missed white matter (MWMR): true WM predicted as CSF or GM, over all true WM;
//! - exchanged white matter (EWMR): single-fiber and crossing WM swapped, over all true WM;
//! - imagined white matter (IWMR): true CSF/GM predicted as WM, over all true non-WM.
//!
//! The fitness is `α·MWMR + β·EWMR + γ·IWMR`; CSF/GM swaps do not enter it.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::filter::Dataset;
use crate::svm::{train_svm, SvmConfig};
use crate::volume::Label;

/// Weights of the three error ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_w: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self { alpha: 1.5, beta: 1.0, gamma_w: 2.0 }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma_w >= 0.0) {
            return Err(invalid!("fitness weights must be >= 0, got {self:?}"));
        }
        Ok(())
    }

    pub fn score(&self, mwmr: f64, ewmr: f64, iwmr: f64) -> f64 {
        self.alpha * mwmr + self.beta * ewmr + self.gamma_w * iwmr
    }
}

/// Confusion counts indexed `[truth][predicted]` by label code.
pub type Confusion = [[u64; Label::COUNT]; Label::COUNT];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub mwmr: f64,
    pub ewmr: f64,
    pub iwmr: f64,
    pub fitness: f64,
    pub global_error: f64,
    /// Error rate when CSF/GM confusions count as correct.
    pub merged_global_error: f64,
    /// No true white-matter samples: MWMR and EWMR were set to 0.
    pub no_white_matter: bool,
    /// No true non-white-matter samples: IWMR was set to 0.
    pub no_other_tissue: bool,
    pub weights: FitnessWeights,
}

impl EvalReport {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

/// Builds the report from a confusion matrix.
pub fn report_from_confusion(confusion: Confusion, weights: FitnessWeights) -> EvalReport {
    let wm = |l: usize| Label::ALL[l].is_white_matter();
    let (mut true_wm, mut true_other) = (0u64, 0u64);
    let (mut missed, mut exchanged, mut imagined) = (0u64, 0u64, 0u64);
    let (mut wrong, mut wrong_merged, mut total) = (0u64, 0u64, 0u64);
    for (t, row) in confusion.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            total += count;
            if wm(t) {
                true_wm += count;
                if !wm(p) {
                    missed += count;
                } else if p != t {
                    exchanged += count;
                }
            } else {
                true_other += count;
                if wm(p) {
                    imagined += count;
                }
            }
            if p != t {
                wrong += count;
                let both_other = !wm(p) && !wm(t);
                if !both_other {
                    wrong_merged += count;
                }
            }
        }
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mwmr = ratio(missed, true_wm);
    let ewmr = ratio(exchanged, true_wm);
    let iwmr = ratio(imagined, true_other);
    EvalReport {
        confusion,
        mwmr,
        ewmr,
        iwmr,
        fitness: weights.score(mwmr, ewmr, iwmr),
        global_error: ratio(wrong, total),
        merged_global_error: ratio(wrong_merged, total),
        no_white_matter: true_wm == 0,
        no_other_tissue: true_other == 0,
        weights,
    }
}

pub fn confusion_matrix(truth: &[Label], predicted: &[Label]) -> Confusion {
    let mut c = [[0u64; Label::COUNT]; Label::COUNT];
    for (t, p) in truth.iter().zip(predicted) {
        c[t.index()][p.index()] += 1;
    }
    c
}

pub fn compute_metrics(truth: &[Label], predicted: &[Label], weights: FitnessWeights) -> Result<EvalReport> {
    if truth.len() != predicted.len() {
        return Err(invalid!("{} truth labels vs {} predictions", truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(invalid!("cannot score an empty prediction set"));
    }
    weights.validate()?;
    Ok(report_from_confusion(confusion_matrix(truth, predicted), weights))
}

/// Splits sample indices into `k` class-balanced folds.
///
/// Every fold receives `⌊m/k⌋` samples of a class with `m` members; the
/// `m mod k` leftovers are spread so that fold sizes differ by at most one
/// and each fold's class proportions stay within one sample of the global
/// ones. Samples of each class are put in voxel scan order, shuffled with
/// the seeded stream and dealt round-robin over the folds chosen for them.
/// Fold membership therefore depends on which voxels are present, not on
/// their position in the dataset. Each fold is returned sorted by voxel scan
/// order.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(invalid!("need at least 2 folds, got {k}"));
    }
    let hist = dataset.histogram();
    for (l, &count) in Label::ALL.iter().zip(&hist) {
        if count > 0 && count < k {
            return Err(invalid!("class {l} has {count} samples, fewer than {k} folds"));
        }
    }
    let counts = fold_counts(&hist, k);
    let key = |i: &usize| dataset.provenance()[*i].scan_key();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.label(i) == label).collect();
        members.sort_by_key(key);
        members.shuffle(&mut rng);
        let c = label.index();
        // Folds holding one extra sample come first in the dealing order.
        let base = hist[c] / k;
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by_key(|&f| (counts[f][c] == base, f));
        for (n, i) in members.into_iter().enumerate() {
            folds[order[n % k]].push(i);
        }
    }
    for f in &mut folds {
        f.sort_by_key(key);
    }
    Ok(folds)
}

/// Per-fold class counts, `[fold][class]`.
///
/// The `R` leftover samples (summed over classes) make the first `R mod k`
/// folds one sample larger. Inside each of the two fold sizes the folds are
/// interchangeable, so it suffices to choose how many leftovers of each
/// class go to the larger folds; the choice respects, per class, the folds
/// where an extra sample (or its absence) would push the class share more
/// than one sample away from the global share.
fn fold_counts(hist: &[usize; Label::COUNT], k: usize) -> Vec<[usize; Label::COUNT]> {
    let total: usize = hist.iter().sum();
    let q = hist.map(|m| m / k);
    let r = hist.map(|m| m % k);
    let (e, b) = (r.iter().sum::<usize>() / k, r.iter().sum::<usize>() % k);
    let small = q.iter().sum::<usize>() + e;
    let within = |count: usize, c: usize, size: usize| {
        (count as f64 - hist[c] as f64 * size as f64 / total as f64).abs() <= 1.0 + 1e-12
    };
    let mut lo = [0usize; Label::COUNT];
    let mut hi = [0usize; Label::COUNT];
    for c in 0..Label::COUNT {
        lo[c] = r[c].saturating_sub(k - b);
        hi[c] = r[c].min(b);
        if b > 0 && !within(q[c] + 1, c, small + 1) {
            hi[c] = 0;
        }
        if b > 0 && !within(q[c], c, small + 1) {
            lo[c] = lo[c].max(b);
        }
        if !within(q[c] + 1, c, small) {
            lo[c] = lo[c].max(r[c]);
        }
        if !within(q[c], c, small) {
            hi[c] = hi[c].min(r[c] - (k - b).min(r[c]));
        }
    }
    let target = b * (e + 1);
    let feasible = (0..Label::COUNT).all(|c| lo[c] <= hi[c])
        && lo.iter().sum::<usize>() <= target
        && target <= hi.iter().sum::<usize>();
    let mut to_large = lo;
    if feasible {
        let mut rest = target - lo.iter().sum::<usize>();
        for c in 0..Label::COUNT {
            let add = rest.min(hi[c] - to_large[c]);
            to_large[c] += add;
            rest -= add;
        }
    } else {
        // Fall back to an even spread of leftovers.
        let mut rest = target;
        for c in 0..Label::COUNT {
            to_large[c] = rest.min(r[c]).min(b);
            rest -= to_large[c];
        }
    }
    let mut counts = vec![q; k];
    let (mut large, mut other) = (0, 0);
    for c in 0..Label::COUNT {
        for _ in 0..to_large[c] {
            counts[large][c] += 1;
            large = (large + 1) % b;
        }
        for _ in 0..r[c] - to_large[c] {
            counts[b + other][c] += 1;
            other = (other + 1) % (k - b);
        }
    }
    counts
}

/// Out-of-fold predictions for a fixed partition (indexed like `dataset`).
pub fn out_of_fold_predictions(dataset: &Dataset, folds: &[Vec<usize>], config: &SvmConfig) -> Result<Vec<Label>> {
    let mut in_fold = vec![usize::MAX; dataset.len()];
    for (f, members) in folds.iter().enumerate() {
        for &i in members {
            if i >= dataset.len() || in_fold[i] != usize::MAX {
                return Err(invalid!("fold partition repeats or overruns sample {i}"));
            }
            in_fold[i] = f;
        }
    }
    if in_fold.contains(&usize::MAX) {
        return Err(invalid!("fold partition does not cover every sample"));
    }
    let key = |i: &usize| dataset.provenance()[*i].scan_key();
    let mut predicted = vec![Label::Csf; dataset.len()];
    for (f, test) in folds.iter().enumerate() {
        let mut train_idx: Vec<usize> = (0..dataset.len()).filter(|&i| in_fold[i] != f).collect();
        train_idx.sort_by_key(key);
        let model = train_svm(&dataset.subset(&train_idx), config)?;
        let pred = model.predict_dataset(&dataset.subset(test))?;
        for (&i, p) in test.iter().zip(pred) {
            predicted[i] = p;
        }
    }
    Ok(predicted)
}

/// Pools the predictions of every held-out fold into a single report.
pub fn cross_validate_folds(
    dataset: &Dataset,
    folds: &[Vec<usize>],
    config: &SvmConfig,
    weights: FitnessWeights,
) -> Result<EvalReport> {
    let predicted = out_of_fold_predictions(dataset, folds, config)?;
    compute_metrics(dataset.labels(), &predicted, weights)
}

pub fn cross_validate(
    dataset: &Dataset,
    config: &SvmConfig,
    weights: FitnessWeights,
    k: usize,
    seed: u64,
) -> Result<EvalReport> {
    let folds = stratified_folds(dataset, k, seed)?;
    cross_validate_folds(dataset, &folds, config, weights)
}

/// Upper estimate of the time to classify `voxels` voxels, given the time one
/// classification pass takes on a 3-slice 64x64 volume.
pub fn estimate_classification_time(voxels: u64, per_run_seconds: f64) -> f64 {
    per_run_seconds * voxels as f64 / (3.0 * 64.0 * 64.0)
}

/// Seconds per 3x64x64 pass used by [`estimate_classification_time`] by default.
pub const REFERENCE_RUN_SECONDS: f64 = 1.5;
