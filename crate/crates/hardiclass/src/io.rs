//! Volume files: a JSON sidecar `<name>.json` next to a raw little-endian
//! blob `<name>.raw`.
//!
//! Blob values run x fastest, then y, then z, then component. Signals and
//! features are stored as `f32le`, labels as `u8`. A diffusion volume has
//! `1 + G` components: the S0 plane followed by one plane per gradient
//! direction.

use std::fs;
use std::path::{Path, PathBuf};

use hardiclass_core::{Dims, DwiVolume, FeatureKind, FeatureVolume, GradientTable, LabelVolume};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Dwi,
    Features,
    Labels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32le,
    U8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F32le => 4,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dims: [usize; 3],
    /// Isotropic voxel edge; recorded for diffusion volumes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxel_size_mm: Option<f64>,
    pub kind: VolumeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_kind: Option<FeatureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradients: Option<Vec<[f64; 3]>>,
    pub dtype: Dtype,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    Dwi(DwiVolume),
    Features(FeatureVolume),
    Labels(LabelVolume),
}

impl From<DwiVolume> for Volume {
    fn from(v: DwiVolume) -> Self {
        Volume::Dwi(v)
    }
}

impl From<FeatureVolume> for Volume {
    fn from(v: FeatureVolume) -> Self {
        Volume::Features(v)
    }
}

impl From<LabelVolume> for Volume {
    fn from(v: LabelVolume) -> Self {
        Volume::Labels(v)
    }
}

/// `(sidecar, blob)` paths for a volume prefix; a trailing `.json` or `.raw` is ignored.
pub fn volume_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let stem = match prefix.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("raw") => prefix.with_extension(""),
        _ => prefix.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut raw = stem.into_os_string();
    raw.push(".raw");
    (json.into(), raw.into())
}

fn to_f32_bytes(values: &[f64], path: &Path) -> CliResult<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for &v in values {
        if v.is_nan() {
            return Err(hardiclass_core::Error::Validation(format!("{}: NaN in volume payload", path.display())).into());
        }
        let f = v as f32;
        if !f.is_finite() {
            return Err(hardiclass_core::Error::Validation(format!("{}: value {v} does not fit in f32", path.display())).into());
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

fn dims_array(d: Dims) -> [usize; 3] {
    [d.nx, d.ny, d.nz]
}

/// Writes `<prefix>.json` and `<prefix>.raw`.
pub fn write_volume(prefix: &Path, volume: &Volume) -> CliResult<()> {
    let (json_path, raw_path) = volume_paths(prefix);
    let (header, blob) = match volume {
        Volume::Dwi(v) => {
            let mut values = v.s0().to_vec();
            values.extend_from_slice(v.signal());
            let header = Header {
                dims: dims_array(v.dims()),
                voxel_size_mm: Some(v.voxel_size()),
                kind: VolumeKind::Dwi,
                feature_kind: None,
                b_value: Some(v.gradients().b_value()),
                gradients: Some(v.gradients().directions().to_vec()),
                dtype: Dtype::F32le,
            };
            (header, to_f32_bytes(&values, &raw_path)?)
        }
        Volume::Features(v) => {
            let header = Header {
                dims: dims_array(v.dims()),
                voxel_size_mm: None,
                kind: VolumeKind::Features,
                feature_kind: Some(v.kind()),
                b_value: None,
                gradients: None,
                dtype: Dtype::F32le,
            };
            (header, to_f32_bytes(v.values(), &raw_path)?)
        }
        Volume::Labels(v) => {
            let header = Header {
                dims: dims_array(v.dims()),
                voxel_size_mm: None,
                kind: VolumeKind::Labels,
                feature_kind: None,
                b_value: None,
                gradients: None,
                dtype: Dtype::U8,
            };
            (header, v.labels().iter().map(|l| l.code()).collect())
        }
    };
    write_json(&json_path, &header)?;
    fs::write(&raw_path, blob).map_err(|e| CliError::io(&raw_path, e))
}

/// Reads a volume written by [`write_volume`] or produced externally in the same format.
pub fn read_volume(prefix: &Path) -> CliResult<Volume> {
    let (json_path, raw_path) = volume_paths(prefix);
    let header: Header = read_json(&json_path)?;
    let blob = fs::read(&raw_path).map_err(|e| CliError::io(&raw_path, e))?;
    let [nx, ny, nz] = header.dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(CliError::format(&json_path, format!("dims must be positive, got {nx}x{ny}x{nz}")));
    }
    let dims = Dims::new(nx, ny, nz);
    let expected_dtype = if header.kind == VolumeKind::Labels { Dtype::U8 } else { Dtype::F32le };
    if header.dtype != expected_dtype {
        return Err(CliError::format(&json_path, format!("{:?} volumes must use dtype {:?}", header.kind, expected_dtype)));
    }
    let components = match header.kind {
        VolumeKind::Labels => 1,
        VolumeKind::Features => header
            .feature_kind
            .ok_or_else(|| CliError::format(&json_path, "feature volume without feature_kind"))?
            .dim(),
        VolumeKind::Dwi => {
            1 + header.gradients.as_ref().ok_or_else(|| CliError::format(&json_path, "dwi volume without gradients"))?.len()
        }
    };
    let expected = dims.voxel_count() * components * header.dtype.size();
    if blob.len() != expected {
        return Err(CliError::format(
            &raw_path,
            format!("blob has {} bytes, header implies {expected}", blob.len()),
        ));
    }
    let floats = || -> Vec<f64> {
        blob.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect()
    };
    Ok(match header.kind {
        VolumeKind::Labels => Volume::Labels(LabelVolume::from_codes(dims, &blob)?),
        VolumeKind::Features => {
            let kind = header.feature_kind.expect("checked above");
            Volume::Features(FeatureVolume::new(dims, kind, floats())?)
        }
        VolumeKind::Dwi => {
            let b = header.b_value.ok_or_else(|| CliError::format(&json_path, "dwi volume without b_value"))?;
            let gradients = GradientTable::new(header.gradients.clone().expect("checked above"), b)?;
            let voxel_size = header.voxel_size_mm.ok_or_else(|| CliError::format(&json_path, "dwi volume without voxel_size_mm"))?;
            let mut values = floats();
            let signal = values.split_off(dims.voxel_count());
            Volume::Dwi(DwiVolume::new(dims, voxel_size, values, signal, gradients)?)
        }
    })
}

fn wrong_kind(prefix: &Path, want: &str) -> CliError {
    CliError::format(&volume_paths(prefix).0, format!("expected a {want} volume"))
}

pub fn read_dwi(prefix: &Path) -> CliResult<DwiVolume> {
    match read_volume(prefix)? {
        Volume::Dwi(v) => Ok(v),
        _ => Err(wrong_kind(prefix, "dwi")),
    }
}

pub fn read_features(prefix: &Path) -> CliResult<FeatureVolume> {
    match read_volume(prefix)? {
        Volume::Features(v) => Ok(v),
        _ => Err(wrong_kind(prefix, "features")),
    }
}

pub fn read_labels(prefix: &Path) -> CliResult<LabelVolume> {
    match read_volume(prefix)? {
        Volume::Labels(v) => Ok(v),
        _ => Err(wrong_kind(prefix, "labels")),
    }
}

/// Parses a plain-text gradient table: one `x y z` triple per line. Blank
/// lines and `#` comments are skipped; vectors are rescaled to unit length.
pub fn read_gradient_text(path: &Path, b_value: f64) -> CliResult<GradientTable> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut vectors = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => vectors.push([v[0], v[1], v[2]]),
            _ => return Err(CliError::format(path, format!("line {}: expected three numbers", lineno + 1))),
        }
    }
    Ok(GradientTable::normalized(&vectors, b_value)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Reads JSON; syntax and schema problems are format errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))
}
