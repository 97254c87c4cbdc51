//! Per-voxel feature extraction from diffusion-weighted volumes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::sh::{self, ShBasis};
use crate::volume::{DwiVolume, FeatureKind, FeatureVolume, GradientTable};

/// Laplace–Beltrami regularization weight used unless overridden.
pub const DEFAULT_LAMBDA: f64 = 0.006;

/// Floor applied to `S/S0` before taking the log in tensor fits.
pub const LOG_SIGNAL_FLOOR: f64 = 1e-6;

/// Fits SH coefficients of order 4 or 8 to `S/S0` in every voxel.
pub fn fit_sh(volume: &DwiVolume, order: usize, lambda: f64) -> Result<FeatureVolume> {
    let kind = match order {
        4 => FeatureKind::Sh4,
        8 => FeatureKind::Sh8,
        _ => return Err(invalid!("SH order must be 4 or 8, got {order}")),
    };
    let basis = ShBasis::new(volume.gradients().directions(), order, lambda)?;
    let dims = volume.dims();
    let voxels = dims.voxel_count();
    let nc = basis.n_coeffs();
    let mut signal = vec![0.0; volume.gradients().len()];
    let mut coeffs = vec![0.0; nc];
    let mut values = vec![0.0; voxels * nc];
    for v in 0..voxels {
        volume.normalized_signal(v, &mut signal);
        basis.fit(&signal, &mut coeffs);
        for (j, c) in coeffs.iter().enumerate() {
            values[v + j * voxels] = *c;
        }
    }
    FeatureVolume::new(dims, kind, values)
}

/// Log-linear diffusion tensor estimator for one gradient table.
#[derive(Debug, Clone)]
pub struct TensorModel {
    n_dirs: usize,
    /// `(AᵀA)⁻¹Aᵀ` for design rows `−b·[gx², gy², gz², 2gxgy, 2gxgz, 2gygz]`.
    projector: Vec<f64>,
}

/// A fitted tensor and its sorted spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorFit {
    pub tensor: [[f64; 3]; 3],
    /// Eigenvalues, largest first.
    pub eigenvalues: [f64; 3],
}

impl TensorModel {
    pub fn new(gradients: &GradientTable) -> Result<Self> {
        let b = gradients.b_value();
        let n_dirs = gradients.len();
        let mut design = Vec::with_capacity(n_dirs * 6);
        for g in gradients.directions() {
            design.extend_from_slice(&[
                -b * g[0] * g[0],
                -b * g[1] * g[1],
                -b * g[2] * g[2],
                -2.0 * b * g[0] * g[1],
                -2.0 * b * g[0] * g[2],
                -2.0 * b * g[1] * g[2],
            ]);
        }
        // Scale columns to O(1) so the rank test is meaningful.
        let scale = b;
        design.iter_mut().for_each(|v| *v /= scale);
        let mut projector = linalg::ls_projector(&design, n_dirs, 6, &[0.0; 6])
            .ok_or_else(|| invalid!("gradient directions are rank deficient for a tensor fit"))?;
        projector.iter_mut().for_each(|v| *v /= scale);
        Ok(Self { n_dirs, projector })
    }

    /// Fits `ln(S/S0) = −b gᵀDg` to one voxel's normalized signal.
    pub fn fit(&self, normalized: &[f64]) -> TensorFit {
        let logs: Vec<f64> = normalized.iter().map(|s| libm::log(s.max(LOG_SIGNAL_FLOOR))).collect();
        let mut d = [0.0; 6];
        linalg::mat_vec(&self.projector, 6, self.n_dirs, &logs, &mut d);
        let tensor = [[d[0], d[3], d[4]], [d[3], d[1], d[5]], [d[4], d[5], d[2]]];
        TensorFit { tensor, eigenvalues: linalg::sym3_eigenvalues(tensor) }
    }
}

/// Sorted diffusion-tensor eigenvalues per voxel (mm²/s).
pub fn fit_tensor_eigenvalues(volume: &DwiVolume) -> Result<FeatureVolume> {
    let model = TensorModel::new(volume.gradients())?;
    let dims = volume.dims();
    let voxels = dims.voxel_count();
    let mut signal = vec![0.0; volume.gradients().len()];
    let mut values = vec![0.0; voxels * 3];
    for v in 0..voxels {
        volume.normalized_signal(v, &mut signal);
        let fit = model.fit(&signal);
        for (i, e) in fit.eigenvalues.iter().enumerate() {
            values[v + i * voxels] = *e;
        }
    }
    FeatureVolume::new(dims, FeatureKind::Eig, values)
        .map_err(|e| Error::Numerical(alloc::format!("tensor fit: {e}")))
}

fn require_sh(sh: &FeatureVolume) -> Result<usize> {
    match sh.kind() {
        FeatureKind::Sh4 => Ok(4),
        FeatureKind::Sh8 => Ok(8),
        other => Err(invalid!("expected SH4 or SH8 coefficients, got {other}")),
    }
}

/// Per-degree power `p_l = Σ_m c_{l,m}²` for each even degree.
pub fn rotation_invariant_features(sh: &FeatureVolume) -> Result<FeatureVolume> {
    let order = require_sh(sh)?;
    let kind = if order == 4 { FeatureKind::Sh4ri } else { FeatureKind::Sh8ri };
    let dims = sh.dims();
    let voxels = dims.voxel_count();
    let degrees = sh::degrees(order);
    let mut values = vec![0.0; voxels * kind.dim()];
    for (j, l) in degrees.iter().enumerate() {
        let src = sh.component(j);
        let dst = &mut values[(l / 2) * voxels..(l / 2 + 1) * voxels];
        for (d, c) in dst.iter_mut().zip(src) {
            *d += c * c;
        }
    }
    FeatureVolume::new(dims, kind, values)
}

/// Funk–Radon transform in the SH domain: `c'_{l,m} = 2π P_l(0) c_{l,m}`.
pub fn sh_to_odf(sh: &FeatureVolume) -> Result<FeatureVolume> {
    let order = require_sh(sh)?;
    let kind = if order == 4 { FeatureKind::Odf4 } else { FeatureKind::Odf8 };
    let voxels = sh.dims().voxel_count();
    let mut out = sh.clone().with_kind(kind);
    for (j, l) in sh::degrees(order).into_iter().enumerate() {
        let f = 2.0 * PI * sh::legendre_at_zero(l);
        out.values_mut()[j * voxels..(j + 1) * voxels].iter_mut().for_each(|c| *c *= f);
    }
    Ok(out)
}

/// Computes any supported feature space from a DWI volume.
pub fn extract(volume: &DwiVolume, kind: FeatureKind, lambda: f64) -> Result<FeatureVolume> {
    match kind {
        FeatureKind::Sh4 => fit_sh(volume, 4, lambda),
        FeatureKind::Sh8 => fit_sh(volume, 8, lambda),
        FeatureKind::Eig => fit_tensor_eigenvalues(volume),
        FeatureKind::Sh4ri => rotation_invariant_features(&fit_sh(volume, 4, lambda)?),
        FeatureKind::Sh8ri => rotation_invariant_features(&fit_sh(volume, 8, lambda)?),
        FeatureKind::Odf4 => sh_to_odf(&fit_sh(volume, 4, lambda)?),
        FeatureKind::Odf8 => sh_to_odf(&fit_sh(volume, 8, lambda)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::hemisphere_directions;
    use crate::volume::Dims;

    fn single_voxel(signal: Vec<f64>) -> DwiVolume {
        let g = GradientTable::new(hemisphere_directions(signal.len()), 1500.0).unwrap();
        DwiVolume::new(Dims::new(1, 1, 1), 3.0, vec![1.0], signal, g).unwrap()
    }

    fn coeff_volume(kind: FeatureKind, c: Vec<f64>) -> FeatureVolume {
        FeatureVolume::new(Dims::new(1, 1, 1), kind, c).unwrap()
    }

    #[test]
    fn constant_signal_is_pure_l0() {
        let vol = single_voxel(vec![0.4; 64]);
        for order in [4, 8] {
            let f = fit_sh(&vol, order, 0.0).unwrap();
            assert!((f.get(0, 0) - 0.4 * 2.0 * libm::sqrt(PI)).abs() < 1e-10);
            for j in 1..f.n() {
                assert!(f.get(0, j).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn isotropic_tensor() {
        let d = 0.8e-3;
        let vol = single_voxel(vec![libm::exp(-1500.0 * d); 64]);
        let f = fit_tensor_eigenvalues(&vol).unwrap();
        for i in 0..3 {
            assert!((f.get(0, i) - d).abs() < 1e-12);
        }
    }

    #[test]
    fn coplanar_directions_are_rank_deficient() {
        let dirs: Vec<[f64; 3]> = (0..8)
            .map(|k| {
                let a = k as f64 * 0.4;
                [libm::cos(a), libm::sin(a), 0.0]
            })
            .collect();
        let g = GradientTable::new(dirs, 1000.0).unwrap();
        assert!(matches!(TensorModel::new(&g), Err(Error::Validation(_))));
    }

    #[test]
    fn power_spectrum_cases() {
        let mut c = vec![0.0; 15];
        c[0] = 2.0;
        let p = rotation_invariant_features(&coeff_volume(FeatureKind::Sh4, c)).unwrap();
        assert_eq!(p.values(), &[4.0, 0.0, 0.0]);
        let z = rotation_invariant_features(&coeff_volume(FeatureKind::Sh8, vec![0.0; 45])).unwrap();
        assert_eq!(z.values(), &[0.0; 5]);
        assert!(rotation_invariant_features(&coeff_volume(FeatureKind::Eig, vec![0.0; 3])).is_err());
    }

    #[test]
    fn funk_radon_scaling() {
        let mut c = vec![0.0; 45];
        c[0] = 1.0;
        c[sh::index(2, 1)] = 3.0;
        c[sh::index(8, -5)] = 2.0;
        let odf = sh_to_odf(&coeff_volume(FeatureKind::Sh8, c)).unwrap();
        assert_eq!(odf.kind(), FeatureKind::Odf8);
        assert!((odf.get(0, 0) - 2.0 * PI).abs() < 1e-15);
        assert!((odf.get(0, sh::index(2, 1)) + PI * 3.0).abs() < 1e-14);
        assert!((odf.get(0, sh::index(8, -5)) - 2.0 * PI * 35.0 / 128.0 * 2.0).abs() < 1e-14);
        assert!(sh_to_odf(&coeff_volume(FeatureKind::Odf4, vec![0.0; 15])).is_err());
    }
}
