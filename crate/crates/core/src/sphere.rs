//! Direction sets and spherical coordinates.

use alloc::vec::Vec;
use core::f64::consts::PI;

/// Number of gradient directions in the default acquisition.
pub const DEFAULT_DIRECTIONS: usize = 64;

/// `n` unit vectors spread over the upper hemisphere by a golden-angle spiral.
///
/// Diffusion signals are antipodally symmetric, so a hemisphere covers the
/// full sphere. The set is a pure function of `n`.
pub fn hemisphere_directions(n: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - libm::sqrt(5.0));
    (0..n)
        .map(|k| {
            let z = 1.0 - (k as f64 + 0.5) / n as f64;
            let r = libm::sqrt(1.0 - z * z);
            let phi = golden * k as f64;
            [r * libm::cos(phi), r * libm::sin(phi), z]
        })
        .collect()
}

/// Polar angle from +z and azimuth from +x of a unit vector.
#[inline]
pub fn to_spherical(v: &[f64; 3]) -> (f64, f64) {
    let theta = libm::acos(v[2].clamp(-1.0, 1.0));
    let phi = libm::atan2(v[1], v[0]);
    (theta, phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit_and_distinct() {
        let d = hemisphere_directions(64);
        assert_eq!(d.len(), 64);
        for (i, a) in d.iter().enumerate() {
            let n = libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
            assert!((n - 1.0).abs() < 1e-12);
            assert!(a[2] > 0.0);
            for b in &d[i + 1..] {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 0.999);
            }
        }
        assert_eq!(d, hemisphere_directions(64));
    }
}
