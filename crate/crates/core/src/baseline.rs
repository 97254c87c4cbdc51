//! Reference classifier: one SVM per feature space, fused by a second SVM or a
//! majority vote.
//!
//! Each stage-1 SVM gets its own `(C, γ)` from a cross-validated grid search.
//! The fusion SVM learns from the label codes that the stage-1 classifiers
//! predict for samples they were not trained on.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::eval::{out_of_fold_predictions, stratified_folds};
use crate::filter::{flatten, Dataset};
use crate::svm::{train_svm, winner, SvmConfig, SvmModel};
use crate::volume::{FeatureKind, FeatureVolume, Label, LabelVolume};

/// `2^-5, 2^-3, …, 2^9`.
pub fn default_c_grid() -> Vec<f64> {
    (-5..=9).step_by(2).map(|e| libm::exp2(e as f64)).collect()
}

/// `2^-15, 2^-13, …, 2^3`.
pub fn default_gamma_grid() -> Vec<f64> {
    (-15..=3).step_by(2).map(|e| libm::exp2(e as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub error: f64,
}

/// Picks the `(C, γ)` with the lowest pooled cross-validated global error.
/// Ties go to the smaller `C`, then the smaller `γ`. Tolerance, cache size and
/// iteration cap are taken from `base`.
pub fn grid_search(
    train: &Dataset,
    c_grid: &[f64],
    gamma_grid: &[f64],
    k: usize,
    seed: u64,
    base: &SvmConfig,
) -> Result<(SvmConfig, Vec<GridPoint>)> {
    if c_grid.is_empty() || gamma_grid.is_empty() {
        return Err(invalid!("grid search needs non-empty C and gamma grids"));
    }
    if let Some(v) = c_grid.iter().chain(gamma_grid).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(invalid!("grid values must be positive and finite, got {v}"));
    }
    let mut cs = c_grid.to_vec();
    let mut gammas = gamma_grid.to_vec();
    cs.sort_by(f64::total_cmp);
    gammas.sort_by(f64::total_cmp);
    let folds = stratified_folds(train, k, seed)?;
    let mut points = Vec::with_capacity(cs.len() * gammas.len());
    let mut best: Option<GridPoint> = None;
    for &c in &cs {
        for &gamma in &gammas {
            let config = SvmConfig { c, gamma: Some(gamma), ..*base };
            let predicted = out_of_fold_predictions(train, &folds, &config)?;
            let wrong = predicted.iter().zip(train.labels()).filter(|(p, t)| p != t).count();
            let point = GridPoint { c, gamma, error: wrong as f64 / train.len() as f64 };
            if best.is_none_or(|b| point.error < b.error) {
                best = Some(point);
            }
            points.push(point);
        }
    }
    let best = best.expect("grids are non-empty");
    Ok((SvmConfig { c: best.c, gamma: Some(best.gamma), ..*base }, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    #[default]
    Svm,
    Vote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    /// Folds for both the grid search and the out-of-fold stacking.
    pub folds: usize,
    pub seed: u64,
    /// Solver settings shared by every grid point.
    pub base: SvmConfig,
    /// Configuration of the fusion SVM.
    pub stage2: SvmConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            mode: FusionMode::Svm,
            c_grid: default_c_grid(),
            gamma_grid: default_gamma_grid(),
            folds: 10,
            seed: 42,
            base: SvmConfig::default(),
            stage2: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1 {
    pub kind: FeatureKind,
    pub model: SvmModel,
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub mode: FusionMode,
    /// Stage-1 classifiers in the order their codes are fed to stage 2.
    pub stage1: Vec<Stage1>,
    /// Present in SVM mode; its input dimensionality equals `stage1.len()`.
    pub stage2: Option<SvmModel>,
}

/// Flattens each feature volume against the same labels.
pub fn fusion_datasets(volumes: &[FeatureVolume], labels: &LabelVolume) -> Result<Vec<(FeatureKind, Dataset)>> {
    volumes.iter().map(|v| Ok((v.kind(), flatten(v, labels)?))).collect()
}

fn check_sets(sets: &[(FeatureKind, Dataset)]) -> Result<()> {
    let Some((_, first)) = sets.first() else {
        return Err(invalid!("fusion needs at least one feature space"));
    };
    for (i, (kind, ds)) in sets.iter().enumerate() {
        if sets[..i].iter().any(|(k, _)| k == kind) {
            return Err(invalid!("feature space {kind} listed twice"));
        }
        if ds.n() != kind.dim() {
            return Err(invalid!("{kind} dataset has {} features, expected {}", ds.n(), kind.dim()));
        }
        if ds.labels() != first.labels() || ds.provenance() != first.provenance() {
            return Err(invalid!("{kind} dataset does not cover the same voxels as the others"));
        }
    }
    Ok(())
}

/// Most frequent label; ties go to the lowest code.
pub fn majority_vote(labels: &[Label]) -> Label {
    let mut votes = [0u32; Label::COUNT];
    for l in labels {
        votes[l.index()] += 1;
    }
    winner(&votes)
}

fn code_rows(columns: &[Vec<Label>]) -> Vec<f64> {
    let rows = columns.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(rows * columns.len());
    for r in 0..rows {
        out.extend(columns.iter().map(|c| c[r].code() as f64));
    }
    out
}

/// Fusion training set: per sample, the label codes predicted by every
/// stage-1 configuration while that sample was held out.
pub fn stacking_inputs(
    sets: &[(FeatureKind, Dataset)],
    configs: &[SvmConfig],
    folds: &[Vec<usize>],
) -> Result<Dataset> {
    check_sets(sets)?;
    if configs.len() != sets.len() {
        return Err(invalid!("{} configs for {} feature spaces", configs.len(), sets.len()));
    }
    let columns = sets
        .iter()
        .zip(configs)
        .map(|((_, ds), cfg)| out_of_fold_predictions(ds, folds, cfg))
        .collect::<Result<Vec<_>>>()?;
    let base = &sets[0].1;
    base.with_features(sets.len(), code_rows(&columns))
}

/// Trains the stage-1 bank and the fusion stage on aligned datasets.
pub fn train_fusion(sets: &[(FeatureKind, Dataset)], config: &FusionConfig) -> Result<FusionModel> {
    check_sets(sets)?;
    let mut stage1 = Vec::with_capacity(sets.len());
    let mut configs = Vec::with_capacity(sets.len());
    for (kind, ds) in sets {
        let (cfg, grid) = grid_search(ds, &config.c_grid, &config.gamma_grid, config.folds, config.seed, &config.base)?;
        stage1.push(Stage1 { kind: *kind, model: train_svm(ds, &cfg)?, grid });
        configs.push(cfg);
    }
    let stage2 = match config.mode {
        FusionMode::Vote => None,
        FusionMode::Svm => {
            let folds = stratified_folds(&sets[0].1, config.folds, config.seed)?;
            Some(train_svm(&stacking_inputs(sets, &configs, &folds)?, &config.stage2)?)
        }
    };
    Ok(FusionModel { mode: config.mode, stage1, stage2 })
}

impl FusionModel {
    pub fn kinds(&self) -> Vec<FeatureKind> {
        self.stage1.iter().map(|s| s.kind).collect()
    }

    /// Combines stage-1 labels given in this model's kind order.
    pub fn fuse(&self, codes: &[Label]) -> Result<Label> {
        if codes.len() != self.stage1.len() {
            return Err(invalid!("{} stage-1 labels for {} classifiers", codes.len(), self.stage1.len()));
        }
        match &self.stage2 {
            None => Ok(majority_vote(codes)),
            Some(m) => m.predict(&codes.iter().map(|l| l.code() as f64).collect::<Vec<_>>()),
        }
    }

    /// Predicts one voxel from its feature vectors, given in any kind order.
    pub fn predict(&self, vectors: &[(FeatureKind, &[f64])]) -> Result<Label> {
        let mut codes = Vec::with_capacity(self.stage1.len());
        for s in &self.stage1 {
            let (_, x) = vectors
                .iter()
                .find(|(k, _)| *k == s.kind)
                .ok_or_else(|| invalid!("missing feature vector for {}", s.kind))?;
            codes.push(s.model.predict(x)?);
        }
        self.fuse(&codes)
    }

    /// Predicts every sample of aligned datasets.
    pub fn predict_sets(&self, sets: &[(FeatureKind, Dataset)]) -> Result<Vec<Label>> {
        check_sets(sets)?;
        let mut columns = Vec::with_capacity(self.stage1.len());
        for s in &self.stage1 {
            let (_, ds) = sets
                .iter()
                .find(|(k, _)| *k == s.kind)
                .ok_or_else(|| invalid!("missing feature space {}", s.kind))?;
            columns.push(s.model.predict_dataset(ds)?);
        }
        let rows = sets[0].1.len();
        let mut codes = vec![Label::Csf; self.stage1.len()];
        (0..rows)
            .map(|r| {
                for (c, col) in codes.iter_mut().zip(&columns) {
                    *c = col[r];
                }
                self.fuse(&codes)
            })
            .collect()
    }
}

/// Pooled out-of-fold predictions of the whole two-stage pipeline under an
/// outer `k`-fold split (each outer training part runs its own grid search).
pub fn cross_validate_fusion(
    sets: &[(FeatureKind, Dataset)],
    config: &FusionConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<Label>> {
    check_sets(sets)?;
    let base = &sets[0].1;
    let folds = stratified_folds(base, k, seed)?;
    let mut predicted = vec![Label::Csf; base.len()];
    for (f, test) in folds.iter().enumerate() {
        let mut train: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, m)| m.iter().copied()).collect();
        train.sort_by_key(|i| base.provenance()[*i].scan_key());
        let train_sets: Vec<_> = sets.iter().map(|(kd, ds)| (*kd, ds.subset(&train))).collect();
        let test_sets: Vec<_> = sets.iter().map(|(kd, ds)| (*kd, ds.subset(test))).collect();
        let model = train_fusion(&train_sets, config)?;
        for (&i, p) in test.iter().zip(model.predict_sets(&test_sets)?) {
            predicted[i] = p;
        }
    }
    Ok(predicted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Voxel};
    use Label::*;

    #[test]
    fn default_grids() {
        let c = default_c_grid();
        assert_eq!(c.len(), 8);
        assert_eq!((c[0], c[7]), (1.0 / 32.0, 512.0));
        let g = default_gamma_grid();
        assert_eq!(g.len(), 10);
        assert_eq!((g[0], g[9]), (1.0 / 32768.0, 8.0));
    }

    #[test]
    fn votes() {
        assert_eq!(majority_vote(&[Gm, Gm, Gm, Gm, Wmsf, Wmsf, Wmsf]), Gm);
        assert_eq!(majority_vote(&[Wmcf, Wmsf, Wmcf, Wmsf]), Wmsf);
        assert_eq!(majority_vote(&[Wmcf; 7]), Wmcf);
    }

    fn blobs() -> Dataset {
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for (i, l) in [Csf, Gm, Wmsf, Wmcf].into_iter().enumerate() {
            for j in 0..4 {
                feats.extend([i as f64 * 10.0 + j as f64 * 0.01, -(i as f64) * 10.0]);
                labels.push(l);
            }
        }
        let prov = (0..16).map(|i| Voxel::new(i, 0, 0)).collect();
        Dataset::new(Dims::new(16, 1, 1), 2, feats, labels, prov).unwrap()
    }

    #[test]
    fn singleton_and_tie_break() {
        let ds = blobs();
        let (cfg, pts) = grid_search(&ds, &[4.0], &[0.5], 2, 0, &SvmConfig::default()).unwrap();
        assert_eq!((cfg.c, cfg.gamma), (4.0, Some(0.5)));
        assert_eq!(pts.len(), 1);
        let (cfg, pts) = grid_search(&ds, &[8.0, 2.0], &[1.0, 0.25], 2, 0, &SvmConfig::default()).unwrap();
        assert!(pts.iter().all(|p| p.error == 0.0));
        assert_eq!((cfg.c, cfg.gamma), (2.0, Some(0.25)));
        assert!(grid_search(&ds, &[], &[1.0], 2, 0, &SvmConfig::default()).is_err());
    }

    #[test]
    fn vote_mode_and_missing_kind() {
        let ds = blobs();
        let sets = vec![(FeatureKind::Sh4ri, Dataset::new(ds.dims(), 3, ds.features().chunks(2).flat_map(|r| [r[0], r[1], 1.0]).collect(), ds.labels().to_vec(), ds.provenance().to_vec()).unwrap())];
        let cfg = FusionConfig { mode: FusionMode::Vote, c_grid: vec![1.0], gamma_grid: vec![0.5], folds: 2, ..FusionConfig::default() };
        let model = train_fusion(&sets, &cfg).unwrap();
        assert!(model.stage2.is_none());
        assert_eq!(model.predict_sets(&sets).unwrap(), ds.labels());
        assert!(model.predict(&[(FeatureKind::Eig, &[0.0, 0.0, 0.0][..])]).is_err());
    }
}
