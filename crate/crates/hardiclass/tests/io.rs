use std::fs;

use hardiclass::io::{read_gradient_text, read_volume, volume_paths, write_volume, Volume};
use hardiclass::CliError;
use hardiclass_core::{Dims, DwiVolume, Error, FeatureKind, FeatureVolume, GradientTable, LabelVolume};
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = FeatureKind> {
    proptest::sample::select(FeatureKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn feature_volumes_round_trip(nx in 1usize..5, ny in 1usize..5, nz in 1usize..3, kind in kind(), seed in any::<u32>()) {
        let dims = Dims::new(nx, ny, nz);
        let len = dims.voxel_count() * kind.dim();
        // f32-representable values survive the blob exactly.
        let values = (0..len).map(|i| f64::from(((i as u32).wrapping_mul(seed | 1) % 20001) as f32 / 100.0 - 100.0)).collect();
        let v = Volume::from(FeatureVolume::new(dims, kind, values).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("f");
        write_volume(&prefix, &v).unwrap();
        prop_assert_eq!(read_volume(&prefix).unwrap(), v);
        let (_, raw) = volume_paths(&prefix);
        prop_assert_eq!(fs::metadata(raw).unwrap().len() as usize, len * 4);
    }

    #[test]
    fn label_volumes_round_trip(codes in proptest::collection::vec(0u8..4, 1..60)) {
        let dims = Dims::new(codes.len(), 1, 1);
        let v = Volume::from(LabelVolume::from_codes(dims, &codes).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("l.json");
        write_volume(&prefix, &v).unwrap();
        prop_assert_eq!(read_volume(&prefix).unwrap(), v);
        prop_assert_eq!(fs::read(dir.path().join("l.raw")).unwrap(), codes);
    }
}

#[test]
fn dwi_round_trip_and_truncation() {
    let dims = Dims::new(3, 2, 1);
    let grads = GradientTable::new(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0], [0.0, 0.6, 0.8], [0.8, 0.0, 0.6]], 1000.0).unwrap();
    let s0 = vec![100.0; 6];
    let signal = (0..36).map(|i| f64::from(i as f32 * 0.5)).collect();
    let v = Volume::from(DwiVolume::new(dims, 2.0, s0, signal, grads).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("d");
    write_volume(&prefix, &v).unwrap();
    assert_eq!(read_volume(&prefix).unwrap(), v);
    let raw = dir.path().join("d.raw");
    assert_eq!(fs::metadata(&raw).unwrap().len(), 6 * 7 * 4);
    let bytes = fs::read(&raw).unwrap();
    fs::write(&raw, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(read_volume(&prefix), Err(CliError::Format { .. })));
}

#[test]
fn values_beyond_f32_are_rejected() {
    let v = Volume::from(FeatureVolume::new(Dims::new(1, 1, 1), FeatureKind::Eig, vec![1.0, 1e300, 0.0]).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("n");
    assert!(matches!(write_volume(&prefix, &v), Err(CliError::Core(Error::Validation(_)))));
    assert!(!dir.path().join("n.raw").exists());
}

#[test]
fn unknown_feature_kind_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("k");
    write_volume(&prefix, &Volume::from(FeatureVolume::zeros(Dims::new(1, 1, 1), FeatureKind::Eig))).unwrap();
    let json = fs::read_to_string(dir.path().join("k.json")).unwrap().replace("\"EIG\"", "\"SH6\"");
    fs::write(dir.path().join("k.json"), json).unwrap();
    assert!(matches!(read_volume(&prefix), Err(CliError::Format { .. })));
}

#[test]
fn gradient_text_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.txt");
    fs::write(&p, "# bvecs\n2 0 0\n0 3 0\n\n0 0 0.5\n3 4 0\n0 3 4\n4 0 3\n").unwrap();
    let g = read_gradient_text(&p, 1500.0).unwrap();
    assert_eq!(g.directions()[..4], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]]);
    assert_eq!(g.b_value(), 1500.0);
    fs::write(&p, "1 0 0\n0 1 0\n0 0 1\n1 1 0\n0 1 1\n0 0 0\n").unwrap();
    assert!(read_gradient_text(&p, 1500.0).is_err());
}
