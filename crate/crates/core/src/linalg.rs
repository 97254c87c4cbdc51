//! Small dense kernels: Cholesky for the normal equations and a Jacobi
//! eigensolver for 3x3 symmetric tensors.

use alloc::vec;
use alloc::vec::Vec;

/// In-place lower Cholesky factor of a row-major `n x n` SPD matrix.
///
/// Returns `None` when a pivot falls below `rel_tol` times the largest
/// diagonal entry, i.e. the matrix is singular to working precision.
pub(crate) fn cholesky(a: &mut [f64], n: usize, rel_tol: f64) -> Option<()> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > rel_tol * scale) {
            return None;
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    Some(())
}

/// Solves `L Lᵀ x = b` in place given the factor from [`cholesky`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Least-squares projector `(AᵀA + R)⁻¹ Aᵀ` for a row-major `rows x cols`
/// matrix `a` and a diagonal regularizer `reg` (length `cols`).
///
/// The result is row-major `cols x rows`. Returns `None` if the regularized
/// normal matrix is singular.
pub(crate) fn ls_projector(a: &[f64], rows: usize, cols: usize, reg: &[f64]) -> Option<Vec<f64>> {
    let mut normal = vec![0.0; cols * cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        for i in 0..cols {
            for j in 0..=i {
                normal[i * cols + j] += row[i] * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            normal[j * cols + i] = normal[i * cols + j];
        }
        normal[i * cols + i] += reg[i];
    }
    cholesky(&mut normal, cols, 1e-12)?;
    let mut proj = vec![0.0; cols * rows];
    let mut col = vec![0.0; cols];
    for r in 0..rows {
        col.copy_from_slice(&a[r * cols..(r + 1) * cols]);
        cholesky_solve(&normal, cols, &mut col);
        for i in 0..cols {
            proj[i * rows + r] = col[i];
        }
    }
    Some(proj)
}

/// `out = m · v` for a row-major `rows x cols` matrix.
#[inline]
pub(crate) fn mat_vec(m: &[f64], rows: usize, cols: usize, v: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        let row = &m[r * cols..(r + 1) * cols];
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

/// Eigenvalues of a symmetric 3x3 matrix, sorted descending (cyclic Jacobi).
#[allow(clippy::needless_range_loop)]
pub(crate) fn sym3_eigenvalues(m: [[f64; 3]; 3]) -> [f64; 3] {
    let mut a = m;
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= 1e-36 * diag || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / libm::sqrt(t * t + 1.0);
            let s = t * c;
            // A' = Jᵀ A J with J the Givens rotation in the (p, q) plane.
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2]];
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `exp(-v)` for `v >= 0`, accurate to a few ulp and free of branches so
/// loops over it vectorize. Arguments beyond 700 return `exp(-700)`.
#[inline]
pub(crate) fn exp_neg(v: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1.5·2⁵²: adding it rounds to an integer held in the low mantissa bits.
    const SHIFTER: f64 = 6_755_399_441_055_744.0;
    let x = (-v).max(-700.0);
    let kf = x * core::f64::consts::LOG2_E + SHIFTER;
    let k_bits = kf.to_bits();
    let k = kf - SHIFTER;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Taylor series to degree 13; |r| <= ln2/2 keeps the truncation below 1e-17.
    let mut p = 1.0 / 6_227_020_800.0;
    for d in [479_001_600.0, 39_916_800.0, 3_628_800.0, 362_880.0, 40_320.0, 5_040.0, 720.0, 120.0, 24.0, 6.0, 2.0, 1.0, 1.0] {
        p = p * r + 1.0 / d;
    }
    let scale = f64::from_bits(
        k_bits.wrapping_sub(SHIFTER.to_bits()).wrapping_add(1023) << 52,
    );
    p * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let mut a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let orig = a.clone();
        cholesky(&mut a, 3, 1e-14).unwrap();
        let mut b = vec![1.0, -2.0, 0.5];
        let rhs = b.clone();
        cholesky_solve(&a, 3, &mut b);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| orig[i * 3 + j] * b[j]).sum();
            assert!((r - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn cholesky_flags_singular() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        assert!(cholesky(&mut a, 2, 1e-12).is_none());
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        // Rotation of diag(3, 2, 1) about z by 30 degrees.
        let (c, s) = (libm::cos(core::f64::consts::FRAC_PI_6), libm::sin(core::f64::consts::FRAC_PI_6));
        let m = [
            [3.0 * c * c + 2.0 * s * s, (3.0 - 2.0) * c * s, 0.0],
            [(3.0 - 2.0) * c * s, 3.0 * s * s + 2.0 * c * c, 0.0],
            [0.0, 0.0, 1.0],
        ];
        let ev = sym3_eigenvalues(m);
        for (a, b) in ev.iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-14, "{ev:?}");
        }
    }

    #[test]
    fn exp_neg_matches_libm() {
        let mut v = 0.0;
        while v < 745.0 {
            let (got, want) = (exp_neg(v), libm::exp(-v));
            if v <= 700.0 {
                assert!((got - want).abs() <= 4.0 * f64::EPSILON * want, "v = {v}: {got} vs {want}");
            } else {
                assert!(got < 1e-303);
            }
            v += 0.0137;
        }
        assert_eq!(exp_neg(0.0), 1.0);
    }

    #[test]
    fn dot_with_remainder() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert_eq!(dot(&a, &a), 91.0);
    }
}
