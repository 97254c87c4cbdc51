//! Slow, direct reference implementations used to check the fast paths.
#![allow(dead_code)]

use hardiclass_core::filter::Border;
use hardiclass_core::volume::Dims;
use hardiclass_core::KernelBank;
use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

/// Quadruple loop over (component, z, y, x) and kernel taps, reading the
/// source through the border rule on every access.
pub fn naive_convolve(values: &[f64], dims: Dims, bank: &KernelBank, border: Border) -> Vec<f64> {
    let (nx, ny, nz) = (dims.nx as isize, dims.ny as isize, dims.nz);
    let w = bank.w() as isize;
    let r = w / 2;
    let mut out = vec![0.0; values.len()];
    for (c, k) in bank.kernels().iter().enumerate() {
        for z in 0..nz {
            let base = c * dims.voxel_count() + z * dims.slice_len();
            for y in 0..ny {
                for x in 0..nx {
                    let mut acc = 0.0;
                    for ky in 0..w {
                        for kx in 0..w {
                            let (mut sx, mut sy) = (x + kx - r, y + ky - r);
                            let inside = (0..nx).contains(&sx) && (0..ny).contains(&sy);
                            if !inside {
                                match border {
                                    Border::Zero => continue,
                                    Border::Replicate => {
                                        sx = sx.clamp(0, nx - 1);
                                        sy = sy.clamp(0, ny - 1);
                                    }
                                }
                            }
                            acc += k[(ky * w + kx) as usize] * values[base + (sy * nx + sx) as usize];
                        }
                    }
                    out[base + (y * nx + x) as usize] = acc;
                }
            }
        }
    }
    out
}

fn rbf_q(x: &[f64], n: usize, y: &[f64], gamma: f64) -> DMatrix<f64> {
    let l = y.len();
    DMatrix::from_fn(l, l, |i, j| {
        let d2: f64 = (0..n).map(|k| (x[i * n + k] - x[j * n + k]).powi(2)).sum();
        y[i] * y[j] * (-gamma * d2).exp()
    })
}

pub fn dual_objective(x: &[f64], n: usize, y: &[f64], gamma: f64, alpha: &[f64]) -> f64 {
    let q = rbf_q(x, n, y, gamma);
    let a = DVector::from_column_slice(alpha);
    0.5 * (a.transpose() * &q * &a)[(0, 0)] - a.sum()
}

/// Global minimum of the C-SVC dual by enumerating every assignment of the
/// variables to {at 0, at C, free} and solving the KKT system of the free
/// ones. Returns `(objective, alpha)`.
pub fn exhaustive_qp(x: &[f64], n: usize, y: &[f64], c: f64, gamma: f64) -> (f64, Vec<f64>) {
    let l = y.len();
    let q = rbf_q(x, n, y, gamma);
    let mut best = (f64::INFINITY, vec![0.0; l]);
    let total = 3usize.pow(l as u32);
    for code in 0..total {
        let mut state = vec![0u8; l];
        let mut k = code;
        for s in state.iter_mut() {
            *s = (k % 3) as u8;
            k /= 3;
        }
        let free: Vec<usize> = (0..l).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let fixed_sum: f64 = (0..l).filter(|&i| state[i] == 1).map(|i| y[i] * c).sum();
        if free.is_empty() {
            if fixed_sum.abs() > 1e-12 {
                continue;
            }
        } else {
            let m = free.len();
            let mut a = DMatrix::zeros(m + 1, m + 1);
            let mut b = DVector::zeros(m + 1);
            for (r, &i) in free.iter().enumerate() {
                for (s, &j) in free.iter().enumerate() {
                    a[(r, s)] = q[(i, j)];
                }
                a[(r, m)] = y[i];
                a[(m, r)] = y[i];
                let bound: f64 = (0..l).filter(|&j| state[j] == 1).map(|j| q[(i, j)] * c).sum();
                b[r] = 1.0 - bound;
            }
            b[m] = -fixed_sum;
            let Some(sol) = a.lu().solve(&b) else { continue };
            let mut ok = true;
            for (r, &i) in free.iter().enumerate() {
                let v = sol[r];
                if !(-1e-12..=c + 1e-12).contains(&v) {
                    ok = false;
                }
                alpha[i] = v.clamp(0.0, c);
            }
            if !ok {
                continue;
            }
        }
        let obj = dual_objective(x, n, y, gamma, &alpha);
        if obj < best.0 {
            best = (obj, alpha);
        }
    }
    best
}

/// Closed forms of the real even harmonics of degree 2 and of `(4, 0)` in
/// Cartesian coordinates of a unit vector.
pub fn closed_form_sh(l: usize, m: i32, d: &[f64; 3]) -> f64 {
    use std::f64::consts::PI;
    let [x, y, z] = *d;
    match (l, m) {
        (0, 0) => 0.5 / PI.sqrt(),
        (2, -2) => 0.25 * (15.0 / PI).sqrt() * (x * x - y * y),
        (2, -1) => -0.5 * (15.0 / PI).sqrt() * x * z,
        (2, 0) => 0.25 * (5.0 / PI).sqrt() * (3.0 * z * z - 1.0),
        (2, 1) => -0.5 * (15.0 / PI).sqrt() * y * z,
        (2, 2) => 0.5 * (15.0 / PI).sqrt() * x * y,
        (4, 0) => 3.0 / 16.0 / PI.sqrt() * (35.0 * z.powi(4) - 30.0 * z * z + 3.0),
        _ => panic!("no closed form for ({l}, {m})"),
    }
}

/// Regularized least squares through an SVD of the stacked system
/// `[B; √reg] c ≈ [s; 0]`.
pub fn regularized_lstsq(design: &[f64], rows: usize, cols: usize, reg: &[f64], s: &[f64]) -> Vec<f64> {
    let mut a = DMatrix::zeros(rows + cols, cols);
    let mut b = DVector::zeros(rows + cols);
    for r in 0..rows {
        for c in 0..cols {
            a[(r, c)] = design[r * cols + c];
        }
        b[r] = s[r];
    }
    for c in 0..cols {
        a[(rows + c, c)] = reg[c].sqrt();
    }
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-14).expect("svd solve").iter().copied().collect()
}

/// Eigenvalues of a symmetric 3x3 matrix, largest first.
pub fn sym3_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let mat = Matrix3::from_fn(|i, j| m[i][j]);
    let mut e: Vec<f64> = SymmetricEigen::new(mat).eigenvalues.iter().copied().collect();
    e.sort_by(|a, b| b.total_cmp(a));
    [e[0], e[1], e[2]]
}
