//! Adaptive Gauss-Legendre quadrature along straight segments in the plane.
//!
//! The error estimate pairs a 15-point rule with its embedded 7-point rule;
//! segments are bisected until the pairwise discrepancy meets the tolerance
//! or the depth cap is hit.

use num_complex::Complex64;

use crate::error::WeierstrassError;

/// 15-point Gauss-Legendre nodes on [-1, 1] (positive half; symmetric).
const GL15_X: [f64; 8] = [
    0.0,
    0.2011940939974345,
    0.3941513470775634,
    0.5709721726085388,
    0.7244177313601700,
    0.8482065834104272,
    0.9372733924007059,
    0.9879925180204854,
];
const GL15_W: [f64; 8] = [
    0.2025782419255613,
    0.1984314853271116,
    0.1861610000155622,
    0.1662692058169939,
    0.1395706779261543,
    0.1071592204671719,
    0.0703660474881081,
    0.0307532419961173,
];

/// 7-point Gauss-Legendre nodes on [-1, 1] (positive half; symmetric).
const GL7_X: [f64; 4] = [0.0, 0.4058451513773972, 0.7415311855993945, 0.9491079123427585];
const GL7_W: [f64; 4] = [
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_DEPTH: u32 = 20;

#[derive(Clone, Copy, Debug)]
pub struct QuadOpts {
    pub tol: f64,
    pub max_depth: u32,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            tol: DEFAULT_TOL,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

fn rule<const N: usize>(
    f: &mut dyn FnMut(Complex64) -> [Complex64; 3],
    a: Complex64,
    b: Complex64,
    xs: &[f64],
    ws: &[f64],
) -> [Complex64; N] {
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let mut acc = [Complex64::new(0.0, 0.0); N];
    // center node (x = 0) appears once
    let v0 = f(mid);
    for k in 0..N {
        acc[k] += v0[k] * ws[0];
    }
    for i in 1..xs.len() {
        let dz = half * xs[i];
        let vp = f(mid + dz);
        let vm = f(mid - dz);
        for k in 0..N {
            acc[k] += (vp[k] + vm[k]) * ws[i];
        }
    }
    for a in acc.iter_mut() {
        *a *= half;
    }
    acc
}

/// Integrate a C^3-valued integrand along the straight segment [a, b].
pub fn integrate_segment3(
    f: &mut dyn FnMut(Complex64) -> [Complex64; 3],
    a: Complex64,
    b: Complex64,
    opts: QuadOpts,
) -> Result<[Complex64; 3], WeierstrassError> {
    fn norm3(v: &[Complex64; 3]) -> f64 {
        (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr()).sqrt()
    }
    fn go(
        f: &mut dyn FnMut(Complex64) -> [Complex64; 3],
        a: Complex64,
        b: Complex64,
        tol: f64,
        depth: u32,
    ) -> Result<[Complex64; 3], WeierstrassError> {
        let hi: [Complex64; 3] = rule(f, a, b, &GL15_X, &GL15_W);
        let lo: [Complex64; 3] = rule(f, a, b, &GL7_X, &GL7_W);
        let err = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        if norm3(&err) <= tol {
            return Ok(hi);
        }
        if depth == 0 {
            return Err(WeierstrassError::QuadratureNoConverge);
        }
        let mid = (a + b) * 0.5;
        let l = go(f, a, mid, tol * 0.5, depth - 1)?;
        let r = go(f, mid, b, tol * 0.5, depth - 1)?;
        Ok([l[0] + r[0], l[1] + r[1], l[2] + r[2]])
    }
    go(f, a, b, opts.tol, opts.max_depth)
}

/// Scalar convenience wrapper.
pub fn integrate_segment(
    f: &mut dyn FnMut(Complex64) -> Complex64,
    a: Complex64,
    b: Complex64,
    opts: QuadOpts,
) -> Result<Complex64, WeierstrassError> {
    let mut g = |z: Complex64| [f(z), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
    Ok(integrate_segment3(&mut g, a, b, opts)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        let mut f = |z: Complex64| z * z;
        let got = integrate_segment(&mut f, Complex64::new(0.0, 0.0), Complex64::new(1.0, 1.0), QuadOpts::default())
            .unwrap();
        let b = Complex64::new(1.0, 1.0);
        let expect = b.powi(3) / 3.0;
        assert!((got - expect).norm() < 1e-13);
    }

    #[test]
    fn adaptive_handles_near_singularity() {
        // 1/(z - p) with p just off the segment.
        let p = Complex64::new(0.5, 1e-3);
        let mut f = |z: Complex64| (z - p).finv();
        let a = Complex64::new(0.0, 0.0);
        let b = Complex64::new(1.0, 0.0);
        let got = integrate_segment(&mut f, a, b, QuadOpts::default()).unwrap();
        let expect = ((b - p) / (a - p)).ln();
        assert!((got - expect).norm() < 1e-8, "got {got}, expect {expect}");
    }
}
