//! Evaluation helpers shared by the deformation engines: routed immersion
//! values, incremental evaluation along chains of nearby points, deviation
//! fields between two data sets, and domain sample clouds.

use num_complex::Complex64;

use crate::domain::{flat_path, MultiCycle};
use crate::error::DeformError;
use crate::quad::{integrate_segment3, QuadOpts};
use crate::weierstrass::{PhiTape, WeierstrassData};

pub struct Evaluator<'a> {
    pub w: &'a WeierstrassData,
    pub j: &'a MultiCycle,
    tape: PhiTape,
    route_pitch: f64,
    pub quad: QuadOpts,
}

impl<'a> Evaluator<'a> {
    pub fn new(w: &'a WeierstrassData, j: &'a MultiCycle, quad: QuadOpts) -> Self {
        let route_pitch = j.diameter() / 96.0;
        Evaluator {
            w,
            j,
            tape: w.compile_phi(),
            route_pitch,
            quad,
        }
    }

    pub fn lambda(&mut self, z: Complex64) -> f64 {
        self.tape.lambda(z)
    }

    pub fn phi(&mut self, z: Complex64) -> [Complex64; 3] {
        self.tape.eval(z)
    }

    fn integrate(&mut self, a: Complex64, b: Complex64) -> Result<[f64; 3], DeformError> {
        let tape = &mut self.tape;
        let mut f = |z: Complex64| tape.eval(z);
        let v = integrate_segment3(&mut f, a, b, self.quad)
            .map_err(crate::error::DeformError::Weierstrass)?;
        Ok([v[0].re, v[1].re, v[2].re])
    }

    /// X at z via a routed path from the basepoint.
    pub fn eval_routed(&mut self, z: Complex64) -> Result<[f64; 3], DeformError> {
        let path = flat_path(self.j, self.w.basepoint(), z, self.route_pitch)
            .map_err(crate::error::DeformError::Domain)?;
        let mut acc = [0.0; 3];
        for w in path.windows(2) {
            let seg = self.integrate(w[0], w[1])?;
            for k in 0..3 {
                acc[k] += seg[k];
            }
        }
        Ok(acc)
    }

    /// X along a chain of nearby points whose consecutive segments stay in
    /// the domain: one routed anchor plus increments.
    pub fn eval_chain(&mut self, chain: &[Complex64]) -> Result<Vec<[f64; 3]>, DeformError> {
        if chain.is_empty() {
            return Ok(vec![]);
        }
        let mut out = Vec::with_capacity(chain.len());
        let mut cur = self.eval_routed(chain[0])?;
        out.push(cur);
        for w in chain.windows(2) {
            let seg = self.integrate(w[0], w[1])?;
            for k in 0..3 {
                cur[k] += seg[k];
            }
            out.push(cur);
        }
        Ok(out)
    }
}

/// Max over sample points of ||X_a - X_b||, where both immersions share the
/// basepoint: integrates the difference of the triples along one routed path
/// per point.
pub fn max_deviation(
    wa: &WeierstrassData,
    wb: &WeierstrassData,
    j: &MultiCycle,
    points: &[Complex64],
    quad: QuadOpts,
) -> Result<f64, DeformError> {
    let mut ta = wa.compile_phi();
    let mut tb = wb.compile_phi();
    let pitch = j.diameter() / 96.0;
    let p0 = wa.basepoint();
    let mut worst: f64 = 0.0;
    for &z in points {
        let path = flat_path(j, p0, z, pitch).map_err(DeformError::Domain)?;
        let mut acc = [0.0f64; 3];
        for w in path.windows(2) {
            let ta = &mut ta;
            let tb = &mut tb;
            let mut f = |q: Complex64| {
                let a = ta.eval(q);
                let b = tb.eval(q);
                [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
            };
            let seg = integrate_segment3(&mut f, w[0], w[1], quad)
                .map_err(DeformError::Weierstrass)?;
            for k in 0..3 {
                acc[k] += seg[k].re;
            }
        }
        let d = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
        worst = worst.max(d);
    }
    Ok(worst)
}

/// Min over sample points of lambda_a / lambda_b.
pub fn min_metric_ratio(
    wa: &WeierstrassData,
    wb: &WeierstrassData,
    points: &[Complex64],
) -> f64 {
    let mut ta = wa.compile_phi();
    let mut tb = wb.compile_phi();
    let mut worst = f64::INFINITY;
    for &z in points {
        let (la, lb) = (ta.lambda(z), tb.lambda(z));
        if lb > 0.0 {
            worst = worst.min(la / lb);
        }
    }
    worst
}

/// Hex-grid sample cloud of M(J) with the given pitch and boundary margin.
pub fn domain_cloud(j: &MultiCycle, pitch: f64, margin: f64) -> Vec<Complex64> {
    let (lo, hi) = j.bbox();
    let mut out = Vec::new();
    let ny = ((hi.im - lo.im) / (pitch * 0.866)).ceil() as i64 + 1;
    let nx = ((hi.re - lo.re) / pitch).ceil() as i64 + 1;
    for iy in 0..=ny {
        for ix in 0..=nx {
            let p = Complex64::new(
                lo.re + ix as f64 * pitch + (iy % 2) as f64 * pitch * 0.5,
                lo.im + iy as f64 * pitch * 0.866,
            );
            if j.contains_with_margin(p, margin) {
                out.push(p);
            }
        }
    }
    out
}
