use hardiclass_core::eval::{compute_metrics, report_from_confusion, stratified_folds, Confusion};
use hardiclass_core::filter::{convolve_planes, flatten, Border, Dataset};
use hardiclass_core::ga::{bank_to_genome, genome_to_bank};
use hardiclass_core::svm::fit_normalizer;
use hardiclass_core::{Dims, FeatureKind, FeatureVolume, FitnessWeights, KernelBank, Label, LabelVolume, Voxel};
use proptest::prelude::*;

fn label_strategy() -> impl Strategy<Value = Label> {
    (0u8..4).prop_map(|c| Label::from_code(c).unwrap())
}

/// A one-row dataset of `labels`, optionally listed in a permuted order.
fn dataset(labels: &[Label], order: &[usize]) -> Dataset {
    let feats = order.iter().map(|&i| i as f64).collect();
    let lab = order.iter().map(|&i| labels[i]).collect();
    let prov = order.iter().map(|&i| Voxel::new(i, 0, 0)).collect();
    Dataset::new(Dims::new(labels.len(), 1, 1), 1, feats, lab, prov).unwrap()
}

fn class_counts() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2usize..=6).prop_flat_map(|k| {
        let count = prop_oneof![Just(0usize), k..(k + 40)];
        (Just(k), proptest::collection::vec(count, 4))
    })
    .prop_filter("at least one sample", |(_, c)| c.iter().sum::<usize>() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn folds_partition_and_balance((k, counts) in class_counts(), seed in any::<u64>()) {
        let labels: Vec<Label> = counts.iter().enumerate().flat_map(|(c, &m)| vec![Label::ALL[c]; m]).collect();
        let order: Vec<usize> = (0..labels.len()).collect();
        let ds = dataset(&labels, &order);
        let folds = stratified_folds(&ds, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        prop_assert_eq!(all, order);
        for label in Label::ALL {
            let per: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| ds.label(i) == label).count()).collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        let n = labels.len() as f64;
        for f in &folds {
            if f.is_empty() {
                continue;
            }
            for label in Label::ALL {
                let global = labels.iter().filter(|&&l| l == label).count() as f64 / n;
                let local = f.iter().filter(|&&i| ds.label(i) == label).count() as f64 / f.len() as f64;
                prop_assert!((global - local).abs() <= 1.0 / f.len() as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn folds_ignore_dataset_order((k, counts) in class_counts(), seed in any::<u64>(), shuffle in any::<u64>()) {
        let labels: Vec<Label> = counts.iter().enumerate().flat_map(|(c, &m)| vec![Label::ALL[c]; m]).collect();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let a = dataset(&labels, &order);
        // Deterministic permutation from the shuffle seed.
        order.sort_by_key(|&i| (i as u64).wrapping_mul(shuffle | 1).rotate_left(17));
        let b = dataset(&labels, &order);
        let voxels = |ds: &Dataset, folds: Vec<Vec<usize>>| -> Vec<Vec<Voxel>> {
            folds.into_iter().map(|f| f.into_iter().map(|i| ds.provenance()[i]).collect()).collect()
        };
        prop_assert_eq!(
            voxels(&a, stratified_folds(&a, k, seed).unwrap()),
            voxels(&b, stratified_folds(&b, k, seed).unwrap())
        );
    }

    #[test]
    fn metrics_invariants(pairs in proptest::collection::vec((label_strategy(), label_strategy()), 1..200), rot in 0usize..200) {
        let w = FitnessWeights::default();
        let truth: Vec<Label> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<Label> = pairs.iter().map(|p| p.1).collect();
        let r = compute_metrics(&truth, &pred, w).unwrap();
        prop_assert_eq!(r.total(), pairs.len() as u64);
        prop_assert!(r.merged_global_error <= r.global_error);
        for v in [r.mwmr, r.ewmr, r.iwmr, r.global_error, r.merged_global_error] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert_eq!(r.fitness, 1.5 * r.mwmr + 1.0 * r.ewmr + 2.0 * r.iwmr);
        let s = rot % pairs.len();
        let (mut t2, mut p2) = (truth.clone(), pred.clone());
        t2.rotate_left(s);
        p2.rotate_left(s);
        t2.reverse();
        p2.reverse();
        prop_assert_eq!(compute_metrics(&t2, &p2, w).unwrap(), r);
    }

    #[test]
    fn imagined_ratio_weight(m in 0.0..1.0f64, e in 0.0..1.0f64, i in 0.0..0.5f64, d in 0.0..0.5f64) {
        let w = FitnessWeights::default();
        prop_assert!((w.score(m, e, i + d) - w.score(m, e, i) - 2.0 * d).abs() <= 1e-12);
    }

    #[test]
    fn confusion_recount(counts in proptest::collection::vec(0u64..50, 16)) {
        let mut c: Confusion = [[0; 4]; 4];
        for (k, v) in counts.iter().enumerate() {
            c[k / 4][k % 4] = *v;
        }
        prop_assume!(counts.iter().sum::<u64>() > 0);
        let r = report_from_confusion(c, FitnessWeights::default());
        let wm = c[2][2] + c[2][3] + c[3][2] + c[3][3] + c[2][0] + c[2][1] + c[3][0] + c[3][1];
        let missed = c[2][0] + c[2][1] + c[3][0] + c[3][1];
        if wm > 0 {
            prop_assert_eq!(r.mwmr, missed as f64 / wm as f64);
            prop_assert_eq!(r.ewmr, (c[2][3] + c[3][2]) as f64 / wm as f64);
        } else {
            prop_assert!(r.no_white_matter && r.mwmr == 0.0);
        }
        prop_assert!(r.merged_global_error <= r.global_error);
    }

    #[test]
    fn genome_round_trip(n in 1usize..6, half in 0usize..4, seed in any::<u64>()) {
        let w = 2 * half + 1;
        let genes: Vec<f64> = (0..n * w * w)
            .map(|i| (((i as u64).wrapping_mul(seed | 1) % 4001) as f64) / 1000.0 - 2.0)
            .collect();
        let bank = genome_to_bank(&genes, n, w).unwrap();
        prop_assert_eq!(bank.n(), n);
        prop_assert_eq!(&bank_to_genome(&bank).genes, &genes);
        prop_assert_eq!(genome_to_bank(&bank_to_genome(&bank).genes, n, w).unwrap(), bank);
    }

    #[test]
    fn convolution_is_linear(
        nx in 1usize..9, ny in 1usize..9,
        a in -3.0..3.0f64, b in -3.0..3.0f64,
        f in proptest::collection::vec(-5.0..5.0f64, 64),
        g in proptest::collection::vec(-5.0..5.0f64, 64),
        k in proptest::collection::vec(-2.0..2.0f64, 9),
    ) {
        let dims = Dims::new(nx, ny, 1);
        let len = nx * ny;
        let bank = KernelBank::new(3, vec![k]).unwrap();
        let conv = |v: &[f64]| {
            let mut out = vec![0.0; len];
            convolve_planes(v, dims, &bank, Border::Zero, &mut out);
            out
        };
        let mix: Vec<f64> = (0..len).map(|i| a * f[i] + b * g[i]).collect();
        let (cf, cg, cm) = (conv(&f[..len]), conv(&g[..len]), conv(&mix));
        for i in 0..len {
            prop_assert!((cm[i] - (a * cf[i] + b * cg[i])).abs() <= 1e-9);
        }
        let delta = KernelBank::delta(1, 5).unwrap();
        let mut out = vec![0.0; len];
        convolve_planes(&f[..len], dims, &delta, Border::Replicate, &mut out);
        prop_assert_eq!(&out[..], &f[..len]);
    }

    #[test]
    fn flatten_keeps_provenance(nx in 1usize..6, ny in 1usize..6, nz in 1usize..3, codes in proptest::collection::vec(0u8..4, 72)) {
        let dims = Dims::new(nx, ny, nz);
        let v = dims.voxel_count();
        let values: Vec<f64> = (0..v * 3).map(|i| i as f64 * 0.5).collect();
        let fv = FeatureVolume::new(dims, FeatureKind::Eig, values).unwrap();
        let lv = LabelVolume::from_codes(dims, &codes[..v]).unwrap();
        let ds = flatten(&fv, &lv).unwrap();
        prop_assert_eq!(ds.len(), v);
        let mut row = [0.0; 3];
        for i in 0..ds.len() {
            let p = ds.provenance()[i];
            let idx = dims.index(p.x, p.y, p.z);
            fv.vector(idx, &mut row);
            prop_assert_eq!(ds.sample(i), &row[..]);
            prop_assert_eq!(ds.label(i), lv.labels()[idx]);
        }
        let mut planar = vec![0.0; v * 3];
        ds.scatter(&mut planar);
        prop_assert_eq!(&planar[..], fv.values());
        let mut rows = Vec::new();
        ds.gather(&planar, &mut rows);
        prop_assert_eq!(&rows[..], ds.features());
    }

    #[test]
    fn normalized_training_set_is_standard(rows in proptest::collection::vec(proptest::collection::vec(-100.0..100.0f64, 3), 2..60)) {
        let n = rows.len();
        let feats: Vec<f64> = rows.concat();
        let prov = (0..n).map(|i| Voxel::new(i, 0, 0)).collect();
        let ds = Dataset::new(Dims::new(n, 1, 1), 3, feats, vec![Label::Csf; n], prov).unwrap();
        let nz = fit_normalizer(&ds).unwrap();
        let mut z = vec![0.0; n * 3];
        for i in 0..n {
            nz.apply(ds.sample(i), &mut z[i * 3..(i + 1) * 3]);
        }
        for j in 0..3 {
            let col: Vec<f64> = (0..n).map(|i| z[i * 3 + j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-10);
            if nz.sigma[j] != 1.0 || var > 0.0 {
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
            }
        }
    }
}
