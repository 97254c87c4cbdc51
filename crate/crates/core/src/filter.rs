//! Per-feature 2D slice convolution and the flat voxel dataset.
//!
//! Kernels are applied in cross-correlation orientation:
//! `out[x, y] = Σ k[r + dy][r + dx] · in[x + dx, y + dy]` with `r = w / 2`.
//! Any learned kernel is equivalent to a true convolution with the kernel
//! flipped, so the orientation only fixes how genomes are read.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::volume::{Dims, FeatureVolume, Label, LabelVolume, Voxel};

/// Range every kernel weight must lie in.
pub const WEIGHT_LIMIT: f64 = 2.0;

/// One `w x w` kernel per feature dimension, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBank")]
pub struct KernelBank {
    n: usize,
    w: usize,
    kernels: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawBank {
    n: usize,
    w: usize,
    kernels: Vec<Vec<f64>>,
}

impl TryFrom<RawBank> for KernelBank {
    type Error = crate::Error;

    fn try_from(raw: RawBank) -> Result<Self> {
        let bank = KernelBank::new(raw.w, raw.kernels)?;
        if bank.n != raw.n {
            return Err(invalid!("bank declares n = {} but holds {} kernels", raw.n, bank.n));
        }
        Ok(bank)
    }
}

impl KernelBank {
    pub fn new(w: usize, kernels: Vec<Vec<f64>>) -> Result<Self> {
        if w.is_multiple_of(2) {
            return Err(invalid!("kernel width must be odd, got {w}"));
        }
        if kernels.is_empty() {
            return Err(invalid!("kernel bank needs at least one kernel"));
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.len() != w * w {
                return Err(invalid!("kernel {i} has {} weights, expected {}", k.len(), w * w));
            }
            if let Some(v) = k.iter().find(|v| !(v.abs() <= WEIGHT_LIMIT)) {
                return Err(invalid!("kernel {i} weight {v} outside [-2, 2]"));
            }
        }
        Ok(Self { n: kernels.len(), w, kernels })
    }

    /// `n` copies of the centered unit impulse.
    pub fn delta(n: usize, w: usize) -> Result<Self> {
        let mut k = vec![0.0; w * w];
        k[(w / 2) * w + w / 2] = 1.0;
        Self::new(w, vec![k; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn kernels(&self) -> &[Vec<f64>] {
        &self.kernels
    }

    pub fn kernel(&self, i: usize) -> &[f64] {
        &self.kernels[i]
    }
}

/// `n` identical Gaussian kernels with σ = w/4, normalized to unit sum.
pub fn gaussian_bank(n: usize, w: usize) -> Result<KernelBank> {
    if w.is_multiple_of(2) {
        return Err(invalid!("kernel width must be odd, got {w}"));
    }
    KernelBank::new(w, vec![gaussian_kernel(w); n])
}

fn gaussian_kernel(w: usize) -> Vec<f64> {
    let r = (w / 2) as f64;
    let sigma = w as f64 / 4.0;
    let mut k: Vec<f64> = (0..w * w)
        .map(|i| {
            let dx = (i % w) as f64 - r;
            let dy = (i / w) as f64 - r;
            libm::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// How samples outside a slice are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Border {
    #[default]
    Zero,
    Replicate,
}

/// Copies one `nx x ny` plane into a buffer padded by `r` on every side.
fn pad_plane(src: &[f64], nx: usize, ny: usize, r: usize, border: Border, dst: &mut Vec<f64>) {
    let px = nx + 2 * r;
    let py = ny + 2 * r;
    dst.clear();
    dst.resize(px * py, 0.0);
    for yy in 0..py {
        let sy = match border {
            Border::Zero if yy < r || yy >= ny + r => continue,
            Border::Zero => yy - r,
            Border::Replicate => yy.saturating_sub(r).min(ny - 1),
        };
        let row = &src[sy * nx..(sy + 1) * nx];
        dst[yy * px + r..yy * px + r + nx].copy_from_slice(row);
        if border == Border::Replicate {
            let (first, last) = (row[0], row[nx - 1]);
            dst[yy * px..yy * px + r].fill(first);
            dst[yy * px + r + nx..(yy + 1) * px].fill(last);
        }
    }
}

/// Correlates every z-plane of every component with that component's kernel.
///
/// `values` is planar (x fastest, then y, z, component) with `bank.n()` components.
pub fn convolve_planes(values: &[f64], dims: Dims, bank: &KernelBank, border: Border, out: &mut [f64]) {
    let (nx, ny) = (dims.nx, dims.ny);
    let plane = dims.slice_len();
    let w = bank.w();
    let r = w / 2;
    let px = nx + 2 * r;
    let mut padded = Vec::new();
    for (c, kernel) in bank.kernels().iter().enumerate() {
        for z in 0..dims.nz {
            let off = c * dims.voxel_count() + z * plane;
            pad_plane(&values[off..off + plane], nx, ny, r, border, &mut padded);
            let dst = &mut out[off..off + plane];
            dst.fill(0.0);
            for ky in 0..w {
                for kx in 0..w {
                    let wt = kernel[ky * w + kx];
                    if wt == 0.0 {
                        continue;
                    }
                    for y in 0..ny {
                        let src = &padded[(y + ky) * px + kx..(y + ky) * px + kx + nx];
                        let row = &mut dst[y * nx..(y + 1) * nx];
                        for (o, s) in row.iter_mut().zip(src) {
                            *o += wt * s;
                        }
                    }
                }
            }
        }
    }
}

/// Applies kernel `i` to feature `i` of every slice, with zero padding.
pub fn convolve_features(features: &FeatureVolume, bank: &KernelBank) -> Result<FeatureVolume> {
    convolve_features_with(features, bank, Border::Zero)
}

pub fn convolve_features_with(features: &FeatureVolume, bank: &KernelBank, border: Border) -> Result<FeatureVolume> {
    if bank.n() != features.n() {
        return Err(invalid!(
            "kernel bank has {} kernels but {} features have {} dimensions",
            bank.n(),
            features.kind(),
            features.n()
        ));
    }
    let mut out = FeatureVolume::zeros(features.dims(), features.kind());
    convolve_planes(features.values(), features.dims(), bank, border, out.values_mut());
    if out.values().iter().any(|v| !v.is_finite()) {
        return Err(invalid!("convolution produced non-finite values"));
    }
    Ok(out)
}

/// Labeled feature vectors pooled over all slices, with the voxel each came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: Dims,
    n: usize,
    features: Vec<f64>,
    labels: Vec<Label>,
    provenance: Vec<Voxel>,
}

impl Dataset {
    /// `features` is row-major, one row of `n` values per sample.
    pub fn new(dims: Dims, n: usize, features: Vec<f64>, labels: Vec<Label>, provenance: Vec<Voxel>) -> Result<Self> {
        if n == 0 {
            return Err(invalid!("feature dimension must be positive"));
        }
        if features.len() != labels.len() * n {
            return Err(invalid!(
                "{} feature values do not form {} samples of dimension {n}",
                features.len(),
                labels.len()
            ));
        }
        if provenance.len() != labels.len() {
            return Err(invalid!("{} provenance entries for {} samples", provenance.len(), labels.len()));
        }
        if let Some(v) = provenance.iter().find(|v| !dims.contains(**v)) {
            return Err(invalid!("provenance voxel {v:?} lies outside {dims}"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(invalid!("dataset contains non-finite features"));
        }
        Ok(Self { dims, n, features, labels, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n..(i + 1) * self.n]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn provenance(&self) -> &[Voxel] {
        &self.provenance
    }

    pub fn histogram(&self) -> [usize; Label::COUNT] {
        let mut h = [0; Label::COUNT];
        for l in &self.labels {
            h[l.index()] += 1;
        }
        h
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n);
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        Dataset {
            dims: self.dims,
            n: self.n,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// Same samples and labels with replaced feature rows.
    pub fn with_features(&self, n: usize, features: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.dims, n, features, self.labels.clone(), self.provenance.clone())
    }

    /// Writes every sample back onto its voxel in a planar buffer; voxels
    /// without a sample stay zero.
    pub fn scatter(&self, out: &mut [f64]) {
        let stride = self.dims.voxel_count();
        out.fill(0.0);
        for (s, v) in self.provenance.iter().enumerate() {
            let idx = self.dims.index(v.x, v.y, v.z);
            for (i, val) in self.sample(s).iter().enumerate() {
                out[idx + i * stride] = *val;
            }
        }
    }

    /// Reads each sample's voxel from a planar buffer into row-major rows.
    pub fn gather(&self, planar: &[f64], out: &mut Vec<f64>) {
        let stride = self.dims.voxel_count();
        out.clear();
        for v in &self.provenance {
            let idx = self.dims.index(v.x, v.y, v.z);
            out.extend((0..self.n).map(|i| planar[idx + i * stride]));
        }
    }
}

/// One sample per voxel in (z, y, x) scan order.
pub fn flatten(features: &FeatureVolume, labels: &LabelVolume) -> Result<Dataset> {
    let dims = features.dims();
    if dims != labels.dims() {
        return Err(invalid!("feature dims {dims} differ from label dims {}", labels.dims()));
    }
    let n = features.n();
    let voxels = dims.voxel_count();
    let mut rows = vec![0.0; voxels * n];
    for v in 0..voxels {
        features.vector(v, &mut rows[v * n..(v + 1) * n]);
    }
    Dataset::new(dims, n, rows, labels.labels().to_vec(), (0..voxels).map(|i| dims.voxel(i)).collect())
}
