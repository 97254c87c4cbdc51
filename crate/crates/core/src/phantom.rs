//! Synthetic FiberCup-like phantom with exact ground truth.
//!
//! Strands are drawn inside a circular mask. Voxels on the one-voxel outer
//! ring of the mask are gray matter, fiber-free voxels elsewhere are CSF, and
//! fiber voxels are single-fiber or crossing white matter depending on how
//! many strands cover them and at what angle. The signal follows a
//! multi-tensor model with equal volume fractions per covering strand.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sphere::{hemisphere_directions, DEFAULT_DIRECTIONS};
use crate::volume::{Dims, DwiVolume, GradientTable, Label, LabelVolume};

/// A fiber bundle traced in one slice.
///
/// `centerline` points are in disk coordinates: the unit disk maps onto the
/// inner part of the phantom mask (inside the gray-matter ring), with `+u`
/// along grid x and `+v` along grid y. `half_width` is in voxels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberStrand {
    pub centerline: Vec<[f64; 2]>,
    pub half_width: f64,
}

/// Diffusion parameters of the three tissue compartments (mm²/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TissueParams {
    /// Axial then radial eigenvalues of a single-fiber tensor.
    pub fiber_eigenvalues: [f64; 3],
    pub csf_diffusivity: f64,
    pub gm_diffusivity: f64,
    pub s0: f64,
    /// Minimum tangent separation (degrees) for overlapping strands to count as a crossing.
    pub crossing_angle_deg: f64,
}

impl Default for TissueParams {
    fn default() -> Self {
        Self {
            fiber_eigenvalues: [1.7e-3, 0.3e-3, 0.3e-3],
            csf_diffusivity: 3.0e-3,
            gm_diffusivity: 0.8e-3,
            s0: 1.0,
            crossing_angle_deg: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: Dims,
    pub n_directions: usize,
    pub b_value: f64,
    pub voxel_size: f64,
    /// Signal-to-noise ratio at S0; zero disables noise.
    pub snr: f64,
    pub seed: u64,
    pub geometry: Vec<FiberStrand>,
    pub tissue: TissueParams,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            dims: Dims::new(64, 64, 3),
            n_directions: DEFAULT_DIRECTIONS,
            b_value: 1500.0,
            voxel_size: 3.0,
            snr: 20.0,
            seed: 42,
            geometry: default_fibercup_geometry(),
            tissue: TissueParams::default(),
        }
    }
}

/// One diffusion compartment of a voxel: a volume fraction and its tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compartment {
    pub fraction: f64,
    pub tensor: [[f64; 3]; 3],
}

/// Ground truth of one voxel column (identical in every slice).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelModel {
    pub label: Label,
    pub compartments: Vec<Compartment>,
}

/// Fixed strand layout: a straight bundle, a U-shaped bundle and two pairs
/// of crossing bundles (80 and 64 degrees apart).
pub fn default_fibercup_geometry() -> Vec<FiberStrand> {
    let line = |a: [f64; 2], b: [f64; 2], hw: f64| FiberStrand { centerline: vec![a, b], half_width: hw };
    let deg = core::f64::consts::PI / 180.0;
    let ray = |c: [f64; 2], angle: f64, half_len: f64| {
        let (s, co) = (libm::sin(angle * deg), libm::cos(angle * deg));
        ([c[0] - half_len * co, c[1] - half_len * s], [c[0] + half_len * co, c[1] + half_len * s])
    };

    // U-shaped bundle opening upward in the lower half.
    let (uc, ur) = ([0.0, 0.42], 0.36);
    let u_shape: Vec<[f64; 2]> = (0..=16)
        .map(|k| {
            let t = k as f64 / 16.0 * 180.0 * deg;
            [uc[0] - ur * libm::cos(t), uc[1] + ur * libm::sin(t)]
        })
        .collect();

    let (a1, b1) = ray([-0.05, -0.05], 40.0, 0.55);
    let (a2, b2) = ray([-0.05, -0.05], -40.0, 0.55);
    let (a3, b3) = ray([0.52, -0.45], 90.0, 0.25);
    vec![
        // Straight bundle across the upper part.
        line([-0.65, -0.55], [0.62, -0.55], 2.6),
        FiberStrand { centerline: u_shape, half_width: 2.6 },
        // Crossing pair near the center.
        line(a1, b1, 2.8),
        line(a2, b2, 2.8),
        // A vertical bundle crossing the end of the straight one.
        line(a3, b3, 2.6),
    ]
}

struct Frame {
    cx: f64,
    cy: f64,
    mask_radius: f64,
    inner_radius: f64,
}

impl Frame {
    fn new(dims: Dims) -> Self {
        let cx = (dims.nx as f64 - 1.0) / 2.0;
        let cy = (dims.ny as f64 - 1.0) / 2.0;
        let mask_radius = dims.nx.min(dims.ny) as f64 / 2.0 - 0.5;
        Self { cx, cy, mask_radius, inner_radius: mask_radius - 1.0 }
    }

    fn to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        [self.cx + p[0] * self.inner_radius, self.cy + p[1] * self.inner_radius]
    }
}

/// Distance from `p` to a polyline and the unit tangent of the nearest segment.
fn nearest_on_polyline(p: [f64; 2], line: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [1.0, 0.0]);
    for seg in line.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        if len2 == 0.0 {
            continue;
        }
        let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
        let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
        let dist = libm::sqrt(q[0] * q[0] + q[1] * q[1]);
        if dist < best.0 {
            let len = libm::sqrt(len2);
            best = (dist, [d[0] / len, d[1] / len]);
        }
    }
    best
}

fn validate(spec: &PhantomSpec) -> Result<()> {
    let d = spec.dims;
    if d.nx == 0 || d.ny == 0 || d.nz == 0 {
        return Err(invalid!("phantom dims must all be >= 1, got {d}"));
    }
    if spec.n_directions < crate::volume::MIN_DIRECTIONS {
        return Err(invalid!("phantom needs >= 6 directions, got {}", spec.n_directions));
    }
    if !(spec.snr >= 0.0 && spec.snr.is_finite()) {
        return Err(invalid!("snr must be >= 0, got {}", spec.snr));
    }
    let frame = Frame::new(d);
    for (i, s) in spec.geometry.iter().enumerate() {
        if s.centerline.len() < 2 {
            return Err(invalid!("strand {i} needs at least 2 centerline points"));
        }
        if !(s.half_width > 0.0) {
            return Err(invalid!("strand {i} half width must be > 0, got {}", s.half_width));
        }
        for p in &s.centerline {
            let g = frame.to_grid(*p);
            let (lo, hi_x, hi_y) = (s.half_width, d.nx as f64 - 1.0 - s.half_width, d.ny as f64 - 1.0 - s.half_width);
            if !(g[0] >= lo && g[0] <= hi_x && g[1] >= lo && g[1] <= hi_y) {
                return Err(invalid!(
                    "strand {i} point ({}, {}) leaves the {}x{} grid at half width {}",
                    p[0],
                    p[1],
                    d.nx,
                    d.ny,
                    s.half_width
                ));
            }
        }
    }
    Ok(())
}

fn fiber_tensor(t: [f64; 2], ev: [f64; 3]) -> [[f64; 3]; 3] {
    // D = λ⊥ I + (λ∥ − λ⊥) t tᵀ for an in-plane tangent t (radial eigenvalues equal).
    let (par, perp) = (ev[0], ev[1]);
    let t3 = [t[0], t[1], 0.0];
    let mut d = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            d[i][j] = (par - perp) * t3[i] * t3[j] + if i == j { perp } else { 0.0 };
        }
    }
    if ev[2] != ev[1] {
        // Third eigenvector is the slice normal.
        d[2][2] += ev[2] - ev[1];
    }
    d
}

fn isotropic(d: f64) -> [[f64; 3]; 3] {
    [[d, 0.0, 0.0], [0.0, d, 0.0], [0.0, 0.0, d]]
}

/// Label and compartments of in-slice position `(x, y)`.
pub fn voxel_model(spec: &PhantomSpec, x: usize, y: usize) -> VoxelModel {
    let frame = Frame::new(spec.dims);
    voxel_model_in(spec, &frame, x, y)
}

fn voxel_model_in(spec: &PhantomSpec, frame: &Frame, x: usize, y: usize) -> VoxelModel {
    let p = [x as f64, y as f64];
    let mut tangents: Vec<[f64; 2]> = Vec::new();
    for s in &spec.geometry {
        let line: Vec<[f64; 2]> = s.centerline.iter().map(|q| frame.to_grid(*q)).collect();
        let (dist, t) = nearest_on_polyline(p, &line);
        if dist <= s.half_width {
            tangents.push(t);
        }
    }
    let tissue = &spec.tissue;
    if tangents.is_empty() {
        let r = libm::hypot(p[0] - frame.cx, p[1] - frame.cy);
        let on_ring = r <= frame.mask_radius && r > frame.inner_radius;
        let (label, d) = if on_ring {
            (Label::Gm, tissue.gm_diffusivity)
        } else {
            (Label::Csf, tissue.csf_diffusivity)
        };
        return VoxelModel { label, compartments: vec![Compartment { fraction: 1.0, tensor: isotropic(d) }] };
    }
    let cos_limit = libm::cos(tissue.crossing_angle_deg.to_radians());
    let mut crossing = false;
    for (i, a) in tangents.iter().enumerate() {
        for b in &tangents[i + 1..] {
            // Strands are undirected lines; separation is in [0, 90] degrees.
            let c = (a[0] * b[0] + a[1] * b[1]).abs();
            if c <= cos_limit + 1e-12 {
                crossing = true;
            }
        }
    }
    let fraction = 1.0 / tangents.len() as f64;
    VoxelModel {
        label: if crossing { Label::Wmcf } else { Label::Wmsf },
        compartments: tangents
            .iter()
            .map(|t| Compartment { fraction, tensor: fiber_tensor(*t, tissue.fiber_eigenvalues) })
            .collect(),
    }
}

/// Noiseless attenuation `S(g)/S0 = Σ f_i exp(−b gᵀ D_i g)`.
pub fn attenuation(compartments: &[Compartment], b_value: f64, g: &[f64; 3]) -> f64 {
    compartments
        .iter()
        .map(|c| {
            let mut q = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    q += g[i] * c.tensor[i][j] * g[j];
                }
            }
            c.fraction * libm::exp(-b_value * q)
        })
        .sum()
}

/// Renders the phantom's diffusion-weighted signal and its exact labels.
///
/// Noise for voxel `v` comes from a ChaCha stream selected by `(seed, v)`, so
/// the output does not depend on evaluation order.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(DwiVolume, LabelVolume)> {
    validate(spec)?;
    let dims = spec.dims;
    let frame = Frame::new(dims);
    let gradients = GradientTable::new(hemisphere_directions(spec.n_directions), spec.b_value)?;
    let voxels = dims.voxel_count();
    let n_dirs = gradients.len();
    let s0_value = spec.tissue.s0;
    let sigma = if spec.snr > 0.0 { s0_value / spec.snr } else { 0.0 };

    let models: Vec<VoxelModel> = (0..dims.slice_len())
        .map(|i| voxel_model_in(spec, &frame, i % dims.nx, i / dims.nx))
        .collect();

    let mut labels = Vec::with_capacity(voxels);
    let mut signal = vec![0.0; voxels * n_dirs];
    for v in 0..voxels {
        let model = &models[v % dims.slice_len()];
        labels.push(model.label);
        let mut rng = (sigma > 0.0).then(|| {
            let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
            r.set_stream(v as u64);
            r
        });
        for (g, dir) in gradients.directions().iter().enumerate() {
            let clean = s0_value * attenuation(&model.compartments, spec.b_value, dir);
            signal[v + g * voxels] = match rng.as_mut() {
                Some(r) => {
                    let e1: f64 = StandardNormal.sample(r);
                    let e2: f64 = StandardNormal.sample(r);
                    libm::hypot(clean + sigma * e1, sigma * e2)
                }
                None => clean,
            };
        }
    }

    let labels = LabelVolume::new(dims, labels)?;
    let hist = labels.histogram();
    if hist.contains(&0) {
        return Err(invalid!(
            "phantom produced class counts {hist:?} (CSF, GM, WMSF, WMCF); all four classes are required"
        ));
    }
    let dwi = DwiVolume::new(dims, spec.voxel_size, vec![s0_value; voxels], signal, gradients)?;
    Ok((dwi, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> PhantomSpec {
        PhantomSpec { snr: 0.0, ..PhantomSpec::default() }
    }

    #[test]
    fn default_phantom_has_all_classes() {
        let (_, labels) = generate_phantom(&PhantomSpec::default()).unwrap();
        let h = labels.histogram();
        assert!(h.iter().all(|&c| c > 0), "{h:?}");
        let wm = h[2] + h[3];
        assert!(h[3] > 0 && h[3] < wm);
    }

    #[test]
    fn csf_signal_is_flat() {
        let spec = noiseless();
        let (dwi, labels) = generate_phantom(&spec).unwrap();
        let v = labels.labels().iter().position(|&l| l == Label::Csf).unwrap();
        let expected = libm::exp(-1500.0 * 3.0e-3);
        for g in 0..dwi.gradients().len() {
            assert!((dwi.signal_at(v, g) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn perpendicular_crossing_is_equal_mixture() {
        let ev = TissueParams::default().fiber_eigenvalues;
        let d1 = fiber_tensor([1.0, 0.0], ev);
        let d2 = fiber_tensor([0.0, 1.0], ev);
        let comps = [Compartment { fraction: 0.5, tensor: d1 }, Compartment { fraction: 0.5, tensor: d2 }];
        let g = [0.6, 0.0, 0.8];
        let q1 = 1.7e-3 * 0.36 + 0.3e-3 * 0.64;
        let q2 = 0.3e-3;
        let expected = 0.5 * libm::exp(-1500.0 * q1) + 0.5 * libm::exp(-1500.0 * q2);
        assert!((attenuation(&comps, 1500.0, &g) - expected).abs() < 1e-15);
    }

    #[test]
    fn noise_never_changes_labels_and_seed_fixes_output() {
        let (a, la) = generate_phantom(&PhantomSpec::default()).unwrap();
        let (b, lb) = generate_phantom(&PhantomSpec::default()).unwrap();
        let (_, lc) = generate_phantom(&noiseless()).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la, lc);
        let (d, _) = generate_phantom(&PhantomSpec { seed: 7, ..PhantomSpec::default() }).unwrap();
        assert_ne!(a.signal(), d.signal());
    }

    #[test]
    fn noiseless_signal_never_exceeds_s0() {
        let (dwi, _) = generate_phantom(&noiseless()).unwrap();
        assert!(dwi.signal().iter().all(|&s| s <= 1.0 && s > 0.0));
    }

    #[test]
    fn strand_outside_grid_is_rejected() {
        let mut spec = PhantomSpec::default();
        spec.geometry.push(FiberStrand { centerline: vec![[0.0, 0.0], [1.2, 0.0]], half_width: 2.0 });
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn missing_class_is_rejected() {
        let spec = PhantomSpec { geometry: vec![], ..noiseless() };
        assert!(generate_phantom(&spec).is_err());
    }

    #[test]
    fn crossing_strands_meet_at_wide_angle() {
        let geo = default_fibercup_geometry();
        let dir = |s: &FiberStrand| {
            let (a, b) = (s.centerline[0], s.centerline[1]);
            let n = libm::hypot(b[0] - a[0], b[1] - a[1]);
            [(b[0] - a[0]) / n, (b[1] - a[1]) / n]
        };
        let (t1, t2) = (dir(&geo[2]), dir(&geo[3]));
        let angle = libm::acos((t1[0] * t2[0] + t1[1] * t2[1]).abs()).to_degrees();
        assert!(angle >= 60.0, "{angle}");
        assert_eq!(geo, default_fibercup_geometry());
    }
}
