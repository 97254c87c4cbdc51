//! Grid, label and gradient types shared by every stage.
//!
//! All multi-component grids are stored planar: x varies fastest, then y,
//! then z, then the component (gradient direction or feature index). This is
//! also the on-disk element order, so a volume's buffer can be written as is.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Voxel counts along x, y and z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Dims {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Self { nx, ny, nz }
    }

    pub const fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn slice_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    pub fn voxel(&self, index: usize) -> Voxel {
        let x = index % self.nx;
        let y = (index / self.nx) % self.ny;
        let z = index / self.slice_len();
        Voxel { x, y, z }
    }

    pub fn contains(&self, v: Voxel) -> bool {
        v.x < self.nx && v.y < self.ny && v.z < self.nz
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.voxel_count() == 0 {
            return Err(invalid!("volume dims {self} contain no voxels"));
        }
        Ok(())
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Grid position of one voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Voxel {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Voxel {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    /// Key ordering voxels slice by slice, row by row (z, then y, then x).
    pub const fn scan_key(&self) -> (usize, usize, usize) {
        (self.z, self.y, self.x)
    }
}

/// Tissue class of a voxel. The discriminant is the on-disk code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Label {
    Csf = 0,
    Gm = 1,
    /// White matter with a single fiber bundle.
    Wmsf = 2,
    /// White matter with crossing fiber bundles.
    Wmcf = 3,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Csf, Label::Gm, Label::Wmsf, Label::Wmcf];
    pub const COUNT: usize = 4;

    pub const fn code(self) -> u8 {
        self as u8
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Label> {
        Self::ALL.get(code as usize).copied()
    }

    pub const fn is_white_matter(self) -> bool {
        matches!(self, Label::Wmsf | Label::Wmcf)
    }

    pub const fn name(self) -> &'static str {
        match self {
            Label::Csf => "CSF",
            Label::Gm => "GM",
            Label::Wmsf => "WMSF",
            Label::Wmcf => "WMCF",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which per-voxel representation a [`FeatureVolume`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FeatureKind {
    Sh4,
    Sh8,
    Eig,
    Sh4ri,
    Sh8ri,
    Odf4,
    Odf8,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::Sh4,
        FeatureKind::Sh4ri,
        FeatureKind::Sh8,
        FeatureKind::Sh8ri,
        FeatureKind::Eig,
        FeatureKind::Odf4,
        FeatureKind::Odf8,
    ];

    /// Feature dimensionality.
    pub const fn dim(self) -> usize {
        match self {
            FeatureKind::Sh4 | FeatureKind::Odf4 => 15,
            FeatureKind::Sh8 | FeatureKind::Odf8 => 45,
            FeatureKind::Eig | FeatureKind::Sh4ri => 3,
            FeatureKind::Sh8ri => 5,
        }
    }

    /// SH order for the coefficient-valued kinds.
    pub const fn sh_order(self) -> Option<usize> {
        match self {
            FeatureKind::Sh4 | FeatureKind::Odf4 => Some(4),
            FeatureKind::Sh8 | FeatureKind::Odf8 => Some(8),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            FeatureKind::Sh4 => "SH4",
            FeatureKind::Sh8 => "SH8",
            FeatureKind::Eig => "EIG",
            FeatureKind::Sh4ri => "SH4RI",
            FeatureKind::Sh8ri => "SH8RI",
            FeatureKind::Odf4 => "ODF4",
            FeatureKind::Odf8 => "ODF8",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid!("unknown feature kind {s:?}"))
    }
}

/// Unit gradient directions plus the shared b-value (s/mm²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientTable {
    directions: Vec<[f64; 3]>,
    b_value: f64,
}

pub const MIN_DIRECTIONS: usize = 6;
const UNIT_TOLERANCE: f64 = 1e-6;

impl GradientTable {
    /// Builds a table from directions that must already be unit length.
    pub fn new(directions: Vec<[f64; 3]>, b_value: f64) -> Result<Self> {
        if !(b_value > 0.0 && b_value.is_finite()) {
            return Err(invalid!("b-value must be positive, got {b_value}"));
        }
        if directions.len() < MIN_DIRECTIONS {
            return Err(invalid!(
                "need at least {MIN_DIRECTIONS} gradient directions, got {}",
                directions.len()
            ));
        }
        for (i, d) in directions.iter().enumerate() {
            let norm = norm3(d);
            if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
                return Err(invalid!(
                    "gradient {i} ({}, {}, {}) has norm {norm}, expected 1",
                    d[0],
                    d[1],
                    d[2]
                ));
            }
        }
        Ok(Self { directions, b_value })
    }

    /// Builds a table from arbitrary nonzero vectors, rescaling each to unit length.
    pub fn normalized(vectors: &[[f64; 3]], b_value: f64) -> Result<Self> {
        let mut directions = Vec::with_capacity(vectors.len());
        for (i, v) in vectors.iter().enumerate() {
            let norm = norm3(v);
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(invalid!("gradient {i} is a zero or non-finite vector"));
            }
            directions.push([v[0] / norm, v[1] / norm, v[2] / norm]);
        }
        Self::new(directions, b_value)
    }

    pub fn directions(&self) -> &[[f64; 3]] {
        &self.directions
    }

    pub fn b_value(&self) -> f64 {
        self.b_value
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

pub(crate) fn norm3(v: &[f64; 3]) -> f64 {
    libm::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

/// Diffusion-weighted signal with its baseline (b = 0) image.
#[derive(Debug, Clone, PartialEq)]
pub struct DwiVolume {
    dims: Dims,
    voxel_size: f64,
    s0: Vec<f64>,
    signal: Vec<f64>,
    gradients: GradientTable,
}

impl DwiVolume {
    pub fn new(
        dims: Dims,
        voxel_size: f64,
        s0: Vec<f64>,
        signal: Vec<f64>,
        gradients: GradientTable,
    ) -> Result<Self> {
        dims.check_nonempty()?;
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(invalid!("voxel size must be positive, got {voxel_size}"));
        }
        let voxels = dims.voxel_count();
        if s0.len() != voxels {
            return Err(invalid!("s0 has {} values, dims {dims} need {voxels}", s0.len()));
        }
        let expected = voxels * gradients.len();
        if signal.len() != expected {
            return Err(invalid!(
                "signal has {} values, expected {expected} ({voxels} voxels x {} directions)",
                signal.len(),
                gradients.len()
            ));
        }
        if let Some(i) = s0.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(invalid!("s0 at voxel {i} is {}, must be > 0", s0[i]));
        }
        if let Some(i) = signal.iter().position(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(invalid!("signal element {i} is {}, must be >= 0", signal[i]));
        }
        Ok(Self { dims, voxel_size, s0, signal, gradients })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn gradients(&self) -> &GradientTable {
        &self.gradients
    }

    pub fn s0(&self) -> &[f64] {
        &self.s0
    }

    /// Planar signal buffer, direction-major.
    pub fn signal(&self) -> &[f64] {
        &self.signal
    }

    pub fn signal_at(&self, voxel: usize, direction: usize) -> f64 {
        self.signal[voxel + direction * self.dims.voxel_count()]
    }

    /// Copies the voxel's signal divided by its s0 into `out`.
    pub fn normalized_signal(&self, voxel: usize, out: &mut [f64]) {
        let stride = self.dims.voxel_count();
        let s0 = self.s0[voxel];
        for (g, o) in out.iter_mut().enumerate().take(self.gradients.len()) {
            *o = self.signal[voxel + g * stride] / s0;
        }
    }
}

/// Ground-truth (or predicted) class per voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    dims: Dims,
    labels: Vec<Label>,
}

impl LabelVolume {
    pub fn new(dims: Dims, labels: Vec<Label>) -> Result<Self> {
        dims.check_nonempty()?;
        if labels.len() != dims.voxel_count() {
            return Err(invalid!(
                "label grid has {} cells, dims {dims} need {}",
                labels.len(),
                dims.voxel_count()
            ));
        }
        Ok(Self { dims, labels })
    }

    pub fn from_codes(dims: Dims, codes: &[u8]) -> Result<Self> {
        let labels = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| Label::from_code(c).ok_or_else(|| invalid!("cell {i} holds label code {c}")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims, labels)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Label {
        self.labels[self.dims.index(x, y, z)]
    }

    pub fn histogram(&self) -> [usize; Label::COUNT] {
        let mut h = [0; Label::COUNT];
        for l in &self.labels {
            h[l.index()] += 1;
        }
        h
    }
}

/// Per-voxel feature vectors on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    dims: Dims,
    kind: FeatureKind,
    values: Vec<f64>,
}

impl FeatureVolume {
    pub fn new(dims: Dims, kind: FeatureKind, values: Vec<f64>) -> Result<Self> {
        dims.check_nonempty()?;
        let expected = dims.voxel_count() * kind.dim();
        if values.len() != expected {
            return Err(invalid!(
                "{kind} volume over {dims} needs {expected} values, got {}",
                values.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid!("feature element {i} is not finite ({})", values[i]));
        }
        Ok(Self { dims, kind, values })
    }

    pub fn zeros(dims: Dims, kind: FeatureKind) -> Self {
        Self { dims, kind, values: alloc::vec![0.0; dims.voxel_count() * kind.dim()] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.kind.dim()
    }

    /// Planar value buffer, feature-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// All voxels of feature `i` as one x-fastest plane stack.
    pub fn component(&self, i: usize) -> &[f64] {
        let len = self.dims.voxel_count();
        &self.values[i * len..(i + 1) * len]
    }

    pub fn get(&self, voxel: usize, i: usize) -> f64 {
        self.values[voxel + i * self.dims.voxel_count()]
    }

    /// Gathers one voxel's feature vector into `out`.
    pub fn vector(&self, voxel: usize, out: &mut [f64]) {
        let stride = self.dims.voxel_count();
        for (i, o) in out.iter_mut().enumerate().take(self.n()) {
            *o = self.values[voxel + i * stride];
        }
    }

    pub(crate) fn with_kind(self, kind: FeatureKind) -> Self {
        debug_assert_eq!(kind.dim(), self.kind.dim());
        Self { kind, ..self }
    }
}
