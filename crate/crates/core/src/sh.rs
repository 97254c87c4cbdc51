//! Real symmetric spherical-harmonic basis.
//!
//! Only even degrees are kept, since diffusion signals are antipodally
//! symmetric. Coefficients use one flat index
//! `j = (l² + l + 2)/2 + m - 1` for `l = 0, 2, …, L` and `m = -l..=l`, so
//! order 4 has 15 coefficients and order 8 has 45. For `m < 0` the basis
//! function is `√2·Re(Y_l^|m|)`, for `m = 0` it is `Y_l^0`, and for `m > 0`
//! it is `√2·Im(Y_l^m)`, where `Y_l^m` are the orthonormal complex harmonics
//! with the Condon–Shortley phase.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::sphere::to_spherical;

/// Number of coefficients of an even order.
pub const fn n_coeffs(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// Flat coefficient index of `(l, m)`.
pub const fn index(l: usize, m: i32) -> usize {
    (((l * l + l + 2) / 2 - 1) as isize + m as isize) as usize
}

/// Degree `l` of each flat index up to `order`.
pub fn degrees(order: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_coeffs(order));
    for l in (0..=order).step_by(2) {
        out.extend(core::iter::repeat_n(l, 2 * l + 1));
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Associated Legendre function `P_l^m(x)` with the Condon–Shortley phase, `m ≥ 0`.
pub fn assoc_legendre(l: usize, m: usize, x: f64) -> f64 {
    debug_assert!(m <= l);
    let mut pmm = 1.0;
    if m > 0 {
        let somx2 = libm::sqrt((1.0 - x) * (1.0 + x));
        let mut fact = 1.0;
        for _ in 0..m {
            pmm *= -fact * somx2;
            fact += 2.0;
        }
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in m + 2..=l {
        pll = ((2 * ll - 1) as f64 * x * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Value of the real symmetric basis function `(l, m)` at polar angle
/// `theta` and azimuth `phi`.
pub fn real_sh(l: usize, m: i32, theta: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs() as usize;
    let norm = libm::sqrt(
        (2 * l + 1) as f64 / (4.0 * PI) * factorial(l - am) / factorial(l + am),
    );
    let p = norm * assoc_legendre(l, am, libm::cos(theta));
    match m {
        0 => p,
        m if m < 0 => core::f64::consts::SQRT_2 * p * libm::cos(am as f64 * phi),
        _ => core::f64::consts::SQRT_2 * p * libm::sin(am as f64 * phi),
    }
}

/// Row of all basis values up to `order` at one unit direction.
pub fn basis_row(order: usize, dir: &[f64; 3], out: &mut [f64]) {
    let (theta, phi) = to_spherical(dir);
    let mut j = 0;
    for l in (0..=order).step_by(2) {
        for m in -(l as i32)..=(l as i32) {
            out[j] = real_sh(l, m, theta, phi);
            j += 1;
        }
    }
}

/// Design matrix (rows = directions) and the regularized least-squares
/// projector for one direction set.
#[derive(Debug, Clone)]
pub struct ShBasis {
    order: usize,
    lambda: f64,
    n_dirs: usize,
    design: Vec<f64>,
    projector: Vec<f64>,
}

impl ShBasis {
    /// Precomputes `(BᵀB + λ·diag(l²(l+1)²))⁻¹ Bᵀ` for the given directions.
    pub fn new(directions: &[[f64; 3]], order: usize, lambda: f64) -> Result<Self> {
        if !order.is_multiple_of(2) || order == 0 {
            return Err(invalid!("SH order must be a positive even integer, got {order}"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid!("regularization weight must be >= 0, got {lambda}"));
        }
        let n_dirs = directions.len();
        let nc = n_coeffs(order);
        let mut design = vec![0.0; n_dirs * nc];
        for (r, d) in directions.iter().enumerate() {
            basis_row(order, d, &mut design[r * nc..(r + 1) * nc]);
        }
        let reg: Vec<f64> = degrees(order)
            .into_iter()
            .map(|l| {
                let lb = (l * (l + 1)) as f64;
                lambda * lb * lb
            })
            .collect();
        let projector = linalg::ls_projector(&design, n_dirs, nc, &reg).ok_or_else(|| {
            Error::Numerical(alloc::format!(
                "SH order {order} normal matrix is singular for this {n_dirs}-direction set \
                 (lambda = {lambda}); the basis is rank deficient independently of any voxel"
            ))
        })?;
        Ok(Self { order, lambda, n_dirs, design, projector })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_coeffs(&self) -> usize {
        n_coeffs(self.order)
    }

    pub fn n_directions(&self) -> usize {
        self.n_dirs
    }

    /// Row-major `n_directions x n_coeffs` basis values.
    pub fn design(&self) -> &[f64] {
        &self.design
    }

    /// Fits coefficients to one sampled signal.
    pub fn fit(&self, signal: &[f64], coeffs: &mut [f64]) {
        linalg::mat_vec(&self.projector, self.n_coeffs(), self.n_dirs, signal, coeffs);
    }

    /// Evaluates coefficients back on the direction set.
    pub fn synthesize(&self, coeffs: &[f64], signal: &mut [f64]) {
        linalg::mat_vec(&self.design, self.n_dirs, self.n_coeffs(), coeffs, signal);
    }
}

/// Legendre polynomial `P_l(0)`: zero for odd `l`, else `(-1)^(l/2) (l-1)!!/l!!`.
pub fn legendre_at_zero(l: usize) -> f64 {
    if l % 2 == 1 {
        return 0.0;
    }
    let mut v = 1.0;
    let mut k = 2;
    while k <= l {
        v *= -((k - 1) as f64) / k as f64;
        k += 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::hemisphere_directions;

    #[test]
    fn flat_index_layout() {
        assert_eq!(index(0, 0), 0);
        assert_eq!(index(2, -2), 1);
        assert_eq!(index(2, 2), 5);
        assert_eq!(index(4, -4), 6);
        assert_eq!(index(8, 8), 44);
        assert_eq!(n_coeffs(4), 15);
        assert_eq!(n_coeffs(8), 45);
        assert_eq!(degrees(4), vec![0, 2, 2, 2, 2, 2, 4, 4, 4, 4, 4, 4, 4, 4, 4]);
    }

    #[test]
    fn y00_is_constant() {
        let v = real_sh(0, 0, 0.3, 1.2);
        assert!((v - 1.0 / (2.0 * libm::sqrt(PI))).abs() < 1e-15);
    }

    #[test]
    fn legendre_zero_values() {
        let expected = [1.0, -0.5, 3.0 / 8.0, -5.0 / 16.0, 35.0 / 128.0];
        for (i, e) in expected.iter().enumerate() {
            assert!((legendre_at_zero(2 * i) - e).abs() < 1e-15);
        }
        // Cross-check against the associated Legendre recurrence at m = 0.
        for l in 0..=8 {
            assert!((legendre_at_zero(l) - assoc_legendre(l, 0, 0.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn orthonormal_under_quadrature() {
        // Gauss-free check: midpoint rule on a fine (theta, phi) grid.
        let (nt, np) = (400, 800);
        let nc = n_coeffs(8);
        let mut gram = vec![0.0; nc * nc];
        let mut row = vec![0.0; nc];
        for it in 0..nt {
            let theta = (it as f64 + 0.5) * PI / nt as f64;
            let w = libm::sin(theta) * (PI / nt as f64) * (2.0 * PI / np as f64);
            for ip in 0..np {
                let phi = (ip as f64 + 0.5) * 2.0 * PI / np as f64;
                let d = [
                    libm::sin(theta) * libm::cos(phi),
                    libm::sin(theta) * libm::sin(phi),
                    libm::cos(theta),
                ];
                basis_row(8, &d, &mut row);
                for a in 0..nc {
                    for b in 0..nc {
                        gram[a * nc + b] += w * row[a] * row[b];
                    }
                }
            }
        }
        for a in 0..nc {
            for b in 0..nc {
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * nc + b] - e).abs() < 1e-4, "({a},{b}) = {}", gram[a * nc + b]);
            }
        }
    }

    #[test]
    fn default_table_has_full_rank_for_order_8() {
        let dirs = hemisphere_directions(64);
        assert!(ShBasis::new(&dirs, 8, 0.0).is_ok());
        assert!(ShBasis::new(&dirs, 4, 0.0).is_ok());
    }

    #[test]
    fn too_few_directions_is_a_numerical_error() {
        let dirs = hemisphere_directions(10);
        assert!(matches!(ShBasis::new(&dirs, 4, 0.0), Err(Error::Numerical(_))));
        assert!(ShBasis::new(&dirs, 4, 0.006).is_ok());
    }
}
