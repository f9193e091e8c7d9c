//! The Weierstrass representation: an immersion X = Re \int Phi with
//! Phi_1 = (1 - g^2) eta / 2, Phi_2 = i (1 + g^2) eta / 2, Phi_3 = g eta.
//!
//! Internally the triple Phi (world coordinates) is the primary object; the
//! pair (g, eta) is kept alongside in the presentation frame. Every numeric
//! query (metric, periods, immersion values, conformality residuals) goes
//! through the triple, which is built from linear combinations and the
//! Lopez-Ros substitution only, so the conic identity
//! Phi_1^2 + Phi_2^2 + Phi_3^2 = 0 survives at rounding level through
//! arbitrarily long deformation sweeps.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{HoloError, WeierstrassError};
use crate::holo::{HoloMap, Tape};
use crate::quad::{integrate_segment3, QuadOpts};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// An orthonormal, right-handed basis of R^3 given by rows e1, e2, e3.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame(pub Matrix3<f64>);

impl Frame {
    pub fn identity() -> Self {
        Frame(Matrix3::identity())
    }

    pub fn from_rows(e1: [f64; 3], e2: [f64; 3], e3: [f64; 3]) -> Result<Self, WeierstrassError> {
        let m = Matrix3::from_rows(&[
            Vector3::from(e1).transpose(),
            Vector3::from(e2).transpose(),
            Vector3::from(e3).transpose(),
        ]);
        let f = Frame(m);
        f.validate()?;
        Ok(f)
    }

    /// Completes a unit e3 to a right-handed orthonormal frame.
    pub fn from_e3(e3: [f64; 3]) -> Result<Self, WeierstrassError> {
        let w = Vector3::from(e3).normalize();
        let seed = if w[0].abs() < 0.8 {
            Vector3::new(1.0, 0.0, 0.0)
        } else {
            Vector3::new(0.0, 1.0, 0.0)
        };
        let u = (seed - w * seed.dot(&w)).normalize();
        let v = w.cross(&u);
        Frame::from_rows([u[0], u[1], u[2]], [v[0], v[1], v[2]], [w[0], w[1], w[2]])
    }

    pub fn validate(&self) -> Result<(), WeierstrassError> {
        let m = &self.0;
        let gram = m * m.transpose();
        let dev = (gram - Matrix3::identity()).norm();
        let det = m.determinant();
        if dev > 1e-12 || (det - 1.0).abs() > 1e-12 {
            return Err(WeierstrassError::NotOrthonormal);
        }
        Ok(())
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    /// Coordinates of a world vector in this frame.
    pub fn to_frame(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0 * Vector3::from(v);
        [r[0], r[1], r[2]]
    }

    pub fn to_world(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.0.transpose() * Vector3::from(v);
        [r[0], r[1], r[2]]
    }
}

/// Apply a real 3x3 matrix to a triple of expression DAGs.
fn lincomb(m: &Matrix3<f64>, phi: &[HoloMap; 3]) -> [HoloMap; 3] {
    std::array::from_fn(|j| {
        let mut terms = Vec::new();
        for (k, p) in phi.iter().enumerate() {
            let c = m[(j, k)];
            if c == 1.0 {
                terms.push(p.clone());
            } else if c != 0.0 {
                terms.push(p.scale(Complex64::new(c, 0.0)));
            }
        }
        if terms.is_empty() {
            HoloMap::zero()
        } else if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            HoloMap::sum(terms)
        }
    })
}

/// Weierstrass data of a conformal minimal immersion on a planar domain,
/// anchored at X(p0) = 0.
#[derive(Clone, Debug)]
pub struct WeierstrassData {
    g: HoloMap,
    eta: HoloMap,
    frame: Frame,
    p0: Complex64,
    /// World-frame coefficient triple of Phi = phi dz.
    phi: [HoloMap; 3],
}

impl WeierstrassData {
    /// Build from the classical pair in the given presentation frame.
    pub fn from_g_eta(g: HoloMap, eta: HoloMap, frame: Frame, p0: Complex64) -> Self {
        let phi_frame = phi_from_pair(&g, &eta);
        let phi = lincomb(&frame.0.transpose(), &phi_frame);
        WeierstrassData {
            g,
            eta,
            frame,
            p0,
            phi,
        }
    }

    /// Build from a triple given in frame `s`; (g, eta) are extracted as
    /// eta = Phi1 - i Phi2 and g = Phi3 / eta.
    pub fn from_phi_in_frame(phi_s: [HoloMap; 3], s: Frame, p0: Complex64) -> Self {
        let eta = HoloMap::sum(vec![phi_s[0].clone(), phi_s[1].scale(-I)]);
        let g = HoloMap::mul(&phi_s[2], &HoloMap::recip_unchecked(&eta));
        let phi = lincomb(&s.0.transpose(), &phi_s);
        WeierstrassData {
            g,
            eta,
            frame: s,
            p0,
            phi,
        }
    }

    pub fn g(&self) -> &HoloMap {
        &self.g
    }

    pub fn eta(&self) -> &HoloMap {
        &self.eta
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn basepoint(&self) -> Complex64 {
        self.p0
    }

    pub fn phi_world(&self) -> &[HoloMap; 3] {
        &self.phi
    }

    /// Triple components in an arbitrary frame.
    pub fn phi_in_frame(&self, s: &Frame) -> [HoloMap; 3] {
        lincomb(&s.0, &self.phi)
    }

    pub fn declared_poles(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::new();
        for c in self.phi.iter().flat_map(|p| p.declared_poles().iter()) {
            if !out.iter().any(|&q| (q - c).norm() < 1e-14) {
                out.push(*c);
            }
        }
        out
    }

    pub fn compile_phi(&self) -> PhiTape {
        let tape = Tape::compile(&[self.phi[0].clone(), self.phi[1].clone(), self.phi[2].clone()]);
        let scratch = tape.scratch();
        PhiTape { tape, scratch }
    }

    /// lambda(z) = sqrt(|phi|^2 / 2) = (1 + |g|^2) |eta| / 2.
    pub fn conformal_factor(&self, z: Complex64) -> Result<f64, WeierstrassError> {
        let mut t = self.compile_phi();
        let v = t.eval(z);
        let n2 = v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr();
        if !n2.is_finite() {
            return Err(WeierstrassError::PoleAtPoint);
        }
        Ok((0.5 * n2).sqrt())
    }

    /// Max over samples of |sum phi_j^2| / |phi|^2.
    pub fn conformality_residual(&self, samples: &[Complex64]) -> f64 {
        let mut t = self.compile_phi();
        let mut worst: f64 = 0.0;
        for &z in samples {
            let v = t.eval(z);
            let conic = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            let n2 = v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr();
            if n2 > 0.0 && n2.is_finite() {
                worst = worst.max(conic.norm() / n2);
            }
        }
        worst
    }

    /// Re int_path Phi by adaptive quadrature over the polyline path, which
    /// must start at the basepoint.
    pub fn immersion_eval(
        &self,
        path: &[Complex64],
        opts: QuadOpts,
    ) -> Result<[f64; 3], WeierstrassError> {
        if path.is_empty() || (path[0] - self.p0).norm() > 1e-12 {
            return Err(WeierstrassError::PoleOnPath);
        }
        let poles = self.declared_poles();
        let clearance = 1e-3 * path_diameter(path).max(1e-9);
        for w in path.windows(2) {
            for &p in &poles {
                if crate::weierstrass::segment_point_dist(w[0], w[1], p) < clearance {
                    return Err(WeierstrassError::PoleOnPath);
                }
            }
        }
        let mut t = self.compile_phi();
        let mut acc = [0.0f64; 3];
        for w in path.windows(2) {
            let mut f = |z: Complex64| t.eval(z);
            let seg = integrate_segment3(&mut f, w[0], w[1], opts)?;
            for k in 0..3 {
                acc[k] += seg[k].re;
            }
        }
        Ok(acc)
    }

    /// Contour integrals of Phi over each cycle.
    pub fn periods(
        &self,
        cycles: &[crate::domain::Cycle],
        opts: QuadOpts,
    ) -> Result<Vec<[Complex64; 3]>, WeierstrassError> {
        let poles = self.declared_poles();
        let mut t = self.compile_phi();
        let mut out = Vec::with_capacity(cycles.len());
        for cyc in cycles {
            for &p in &poles {
                if cyc.distance_to(p) < 1e-9 {
                    return Err(WeierstrassError::PoleOnCycle);
                }
            }
            out.push(integrate_cycle(&mut t, cyc, opts)?);
        }
        Ok(out)
    }

    /// Inverse stereographic projection of the data's g at z; g = 0 maps to
    /// the south pole (0,0,-1), poles of g to the north pole.
    pub fn gauss_map(&self, z: Complex64) -> GaussPoint {
        let phi_s = self.phi_in_frame(&self.frame);
        let tape = Tape::compile(&[phi_s[0].clone(), phi_s[1].clone(), phi_s[2].clone()]);
        let mut scratch = tape.scratch();
        let v = tape.eval(z, &mut scratch);
        let eta = v[0] - I * v[1];
        let phi3 = v[2];
        if eta.norm() <= 1e-14 * phi3.norm().max(1e-300) {
            return GaussPoint {
                dir: [0.0, 0.0, 1.0],
                at_pole: true,
            };
        }
        let g = phi3 / eta;
        let d = 1.0 + g.norm_sqr();
        GaussPoint {
            dir: [2.0 * g.re / d, 2.0 * g.im / d, (g.norm_sqr() - 1.0) / d],
            at_pole: false,
        }
    }

    /// Lopez-Ros transformation by a zero-free h in the presentation frame:
    /// (g, eta) -> (g/h, eta h). The third coordinate function in that frame
    /// is preserved node-for-node.
    pub fn lopez_ros(
        &self,
        h: &HoloMap,
        zero_check_samples: &[Complex64],
    ) -> Result<Self, WeierstrassError> {
        let frame = self.frame.clone();
        self.lopez_ros_in_frame(h, frame, zero_check_samples)
    }

    /// Lopez-Ros in an arbitrary frame `s`; the result is presented in `s`.
    pub fn lopez_ros_in_frame(
        &self,
        h: &HoloMap,
        s: Frame,
        zero_check_samples: &[Complex64],
    ) -> Result<Self, WeierstrassError> {
        if !h.is_zero_free() {
            if zero_check_samples.is_empty() {
                return Err(WeierstrassError::Holo(HoloError::ZeroOnDomain));
            }
            h.certify_zero_free(zero_check_samples, 1e-12)?;
        }
        let hinv = if h.is_zero_free() {
            HoloMap::recip(h)?
        } else {
            HoloMap::recip_unchecked(h)
        };
        let phi_s = self.phi_in_frame(&s);
        // eta = Phi1 - i Phi2, g^2 eta = -(Phi1 + i Phi2), Phi3 = g eta
        let eta = HoloMap::sum(vec![phi_s[0].clone(), phi_s[1].scale(-I)]);
        let g2eta_neg = HoloMap::sum(vec![phi_s[0].clone(), phi_s[1].scale(I)]);
        let eta_h = HoloMap::mul(&eta, h);
        let g2eta_over_h = HoloMap::mul(&g2eta_neg, &hinv);
        let half = Complex64::new(0.5, 0.0);
        let new1 = HoloMap::sum(vec![eta_h.scale(half), g2eta_over_h.scale(half)]);
        let new2 = HoloMap::sum(vec![
            eta_h.scale(half * I),
            g2eta_over_h.scale(-half * I),
        ]);
        let new_phi_s = [new1, new2, phi_s[2].clone()];
        // canonical pair in s: extract from the old triple then substitute
        let g_s = HoloMap::mul(&phi_s[2], &HoloMap::recip_unchecked(&eta));
        let new_g = HoloMap::mul(&g_s, &hinv);
        let new_eta = eta_h;
        let phi_world = lincomb(&s.0.transpose(), &new_phi_s);
        Ok(WeierstrassData {
            g: new_g,
            eta: new_eta,
            frame: s,
            p0: self.p0,
            phi: phi_world,
        })
    }

    /// Rotate the immersion by `s`: X' = s X. The presentation frame is kept,
    /// (g, eta) are re-extracted from the rotated triple.
    pub fn rotate_frame(&self, s: &Frame) -> Result<Self, WeierstrassError> {
        s.validate()?;
        let phi_rot = lincomb(&s.0, &self.phi);
        let frame = self.frame.clone();
        let phi_f = lincomb(&frame.0, &phi_rot);
        let eta = HoloMap::sum(vec![phi_f[0].clone(), phi_f[1].scale(-I)]);
        let g = HoloMap::mul(&phi_f[2], &HoloMap::recip_unchecked(&eta));
        Ok(WeierstrassData {
            g,
            eta,
            frame,
            p0: self.p0,
            phi: phi_rot,
        })
    }

    pub fn to_json(&self) -> Result<Value, HoloError> {
        Ok(json!({
            "g": self.g.to_json()?,
            "eta": self.eta.to_json()?,
            "p0": [self.p0.re, self.p0.im],
            "frame": self.frame.rows(),
        }))
    }

    pub fn from_json(v: &Value) -> Result<Self, HoloError> {
        let g = HoloMap::from_json(v.get("g").ok_or(HoloError::BadExpression("missing g".into()))?)?;
        let eta =
            HoloMap::from_json(v.get("eta").ok_or(HoloError::BadExpression("missing eta".into()))?)?;
        let p0 = v
            .get("p0")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .map(|a| {
                Complex64::new(
                    a[0].as_f64().unwrap_or(0.0),
                    a[1].as_f64().unwrap_or(0.0),
                )
            })
            .unwrap_or_else(|| Complex64::new(0.0, 0.0));
        let frame = v
            .get("frame")
            .and_then(Value::as_array)
            .map(|rows| {
                let row = |i: usize| -> [f64; 3] {
                    let r = rows[i].as_array().unwrap();
                    [
                        r[0].as_f64().unwrap_or(0.0),
                        r[1].as_f64().unwrap_or(0.0),
                        r[2].as_f64().unwrap_or(0.0),
                    ]
                };
                Frame::from_rows(row(0), row(1), row(2))
                    .map_err(|_| HoloError::BadExpression("bad frame".into()))
            })
            .transpose()?
            .unwrap_or_else(Frame::identity);
        Ok(WeierstrassData::from_g_eta(g, eta, frame, p0))
    }
}

/// Compiled triple evaluator with its scratch space.
pub struct PhiTape {
    tape: Tape,
    scratch: Vec<Complex64>,
}

impl PhiTape {
    pub fn eval(&mut self, z: Complex64) -> [Complex64; 3] {
        let v = self.tape.eval(z, &mut self.scratch);
        [v[0], v[1], v[2]]
    }

    pub fn lambda(&mut self, z: Complex64) -> f64 {
        let v = self.eval(z);
        (0.5 * (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr())).sqrt()
    }

    pub fn len(&self) -> usize {
        self.tape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tape.is_empty()
    }
}

fn phi_from_pair(g: &HoloMap, eta: &HoloMap) -> [HoloMap; 3] {
    let one = HoloMap::one();
    let g2 = HoloMap::mul(g, g);
    let half = Complex64::new(0.5, 0.0);
    let phi1 = HoloMap::mul(
        &HoloMap::sum(vec![one.clone(), g2.scale(Complex64::new(-1.0, 0.0))]),
        eta,
    )
    .scale(half);
    let phi2 = HoloMap::mul(&HoloMap::sum(vec![one, g2.clone()]), eta).scale(half * I);
    let phi3 = HoloMap::mul(g, eta);
    [phi1, phi2, phi3]
}

pub(crate) fn segment_point_dist(a: Complex64, b: Complex64, p: Complex64) -> f64 {
    let ab = b - a;
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / ab.norm_sqr().max(1e-300);
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn path_diameter(path: &[Complex64]) -> f64 {
    let mut lo = Complex64::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &p in path {
        lo.re = lo.re.min(p.re);
        lo.im = lo.im.min(p.im);
        hi.re = hi.re.max(p.re);
        hi.im = hi.im.max(p.im);
    }
    (hi - lo).norm()
}

pub fn integrate_cycle(
    t: &mut PhiTape,
    cyc: &crate::domain::Cycle,
    opts: QuadOpts,
) -> Result<[Complex64; 3], WeierstrassError> {
    use crate::domain::CycleKind;
    match &cyc.kind {
        CycleKind::Circle { c, r } => {
            let center = Complex64::new(c[0], c[1]);
            let r = *r;
            let mut total = [Complex64::new(0.0, 0.0); 3];
            let arcs = 8;
            for k in 0..arcs {
                let a = 2.0 * std::f64::consts::PI * k as f64 / arcs as f64;
                let b = 2.0 * std::f64::consts::PI * (k + 1) as f64 / arcs as f64;
                let mut f = |theta: Complex64| {
                    // parameter integral along the real axis
                    let w = Complex64::from_polar(r, theta.re);
                    let z = center + w;
                    let dz = I * w;
                    let v = t.eval(z);
                    [v[0] * dz, v[1] * dz, v[2] * dz]
                };
                let seg = integrate_segment3(
                    &mut f,
                    Complex64::new(a, 0.0),
                    Complex64::new(b, 0.0),
                    opts,
                )?;
                for i in 0..3 {
                    total[i] += seg[i];
                }
            }
            Ok(total)
        }
        CycleKind::Polyline { vertices } => {
            let mut total = [Complex64::new(0.0, 0.0); 3];
            let n = vertices.len();
            for i in 0..n {
                let a = Complex64::new(vertices[i][0], vertices[i][1]);
                let b = Complex64::new(vertices[(i + 1) % n][0], vertices[(i + 1) % n][1]);
                let mut f = |z: Complex64| t.eval(z);
                let seg = integrate_segment3(&mut f, a, b, opts)?;
                for k in 0..3 {
                    total[k] += seg[k];
                }
            }
            Ok(total)
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GaussPoint {
    pub dir: [f64; 3],
    pub at_pole: bool,
}

/// Stock Weierstrass data used by drivers and tests.
pub mod seeds {
    use super::*;

    /// g = 0, eta = 2 dz: X(z) = (Re z, -Im z, 0), the flat disk inclusion.
    pub fn flat_disk() -> WeierstrassData {
        WeierstrassData::from_g_eta(
            HoloMap::zero(),
            HoloMap::constant(Complex64::new(2.0, 0.0)),
            Frame::identity(),
            Complex64::new(0.0, 0.0),
        )
    }

    /// Enneper: g = z, eta = dz.
    pub fn enneper() -> WeierstrassData {
        WeierstrassData::from_g_eta(
            HoloMap::z(),
            HoloMap::one(),
            Frame::identity(),
            Complex64::new(0.0, 0.0),
        )
    }

    /// Catenoid: g = z, eta = dz / z^2, anchored at z = 1.
    pub fn catenoid() -> WeierstrassData {
        WeierstrassData::from_g_eta(
            HoloMap::z(),
            HoloMap::pole_term(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), 2),
            Frame::identity(),
            Complex64::new(1.0, 0.0),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::QuadOpts;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disk_samples(n: usize, r: f64) -> Vec<Complex64> {
        // deterministic spiral covering of the disk
        (1..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                Complex64::from_polar(r * t.sqrt(), 2.399963229728653 * k as f64)
            })
            .collect()
    }

    #[test]
    fn enneper_immersion_at_one() {
        // oracle: antiderivatives (z - z^3/3)/2, i(z + z^3/3)/2, z^2/2 at z=1
        let w = seeds::enneper();
        let x = w
            .immersion_eval(&[c64(0.0, 0.0), c64(1.0, 0.0)], QuadOpts::default())
            .unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
        assert!((x[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constant_path_is_origin() {
        let w = seeds::enneper();
        let x = w
            .immersion_eval(&[c64(0.0, 0.0)], QuadOpts::default())
            .unwrap();
        assert_eq!(x, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn catenoid_third_coordinate_path_independent() {
        // upper vs lower unit semicircle from 1 to -1: Re of the dz/z period
        // vanishes, so X3 agrees
        let w = seeds::catenoid();
        let upper: Vec<Complex64> = (0..=32)
            .map(|k| Complex64::from_polar(1.0, std::f64::consts::PI * k as f64 / 32.0))
            .collect();
        let lower: Vec<Complex64> = (0..=32)
            .map(|k| Complex64::from_polar(1.0, -std::f64::consts::PI * k as f64 / 32.0))
            .collect();
        let xu = w.immersion_eval(&upper, QuadOpts::default()).unwrap();
        let xl = w.immersion_eval(&lower, QuadOpts::default()).unwrap();
        assert!((xu[2] - xl[2]).abs() < 1e-10);
    }

    #[test]
    fn conformal_factor_enneper() {
        let w = seeds::enneper();
        assert!((w.conformal_factor(c64(0.0, 0.0)).unwrap() - 0.5).abs() < 1e-14);
        assert!((w.conformal_factor(c64(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let flat = seeds::flat_disk();
        assert!((flat.conformal_factor(c64(0.3, -0.2)).unwrap() - 1.0).abs() < 1e-14);
        // planar case g = 0, eta = dz
        let w0 = WeierstrassData::from_g_eta(
            HoloMap::zero(),
            HoloMap::one(),
            Frame::identity(),
            c64(0.0, 0.0),
        );
        assert!((w0.conformal_factor(c64(0.7, 0.7)).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn conformality_residual_tiny() {
        for w in [seeds::enneper(), seeds::catenoid(), seeds::flat_disk()] {
            let samples: Vec<Complex64> = disk_samples(1000, 0.9)
                .into_iter()
                .map(|z| z + c64(1.2, 0.0))
                .collect();
            assert!(w.conformality_residual(&samples) < 1e-12);
        }
    }

    #[test]
    fn lopez_ros_identity_and_scaling() {
        let w = seeds::catenoid();
        let samples = disk_samples(64, 0.3)
            .into_iter()
            .map(|z| z + c64(1.0, 0.0))
            .collect::<Vec<_>>();
        let w1 = w.lopez_ros(&HoloMap::one(), &samples).unwrap();
        // h = 1: immersion values agree
        let path = vec![c64(1.0, 0.0), c64(1.2, 0.3)];
        let a = w.immersion_eval(&path, QuadOpts::default()).unwrap();
        let b = w1.immersion_eval(&path, QuadOpts::default()).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
        // h = 2: third coordinate preserved
        let w2 = w
            .lopez_ros(&HoloMap::constant(c64(2.0, 0.0)), &samples)
            .unwrap();
        for s in disk_samples(100, 0.35) {
            let p = c64(1.0, 0.0) + s;
            let pa = vec![c64(1.0, 0.0), p];
            let xa = w.immersion_eval(&pa, QuadOpts::default()).unwrap();
            let xb = w2.immersion_eval(&pa, QuadOpts::default()).unwrap();
            assert!((xa[2] - xb[2]).abs() < 1e-10);
        }
    }

    #[test]
    fn lopez_ros_metric_identity() {
        // lambda-tilde = (|h| + |g|^2/|h|) |eta| / 2 at a point (paper's
        // transformed metric), compared against the direct conformal factor
        let w = seeds::enneper();
        let h = HoloMap::exp(&HoloMap::z());
        let wt = w.lopez_ros(&h, &[]).unwrap();
        let z = c64(0.3, 0.1);
        let hv = h.eval(z);
        let gv = z; // enneper g = z
        let eta_v = 1.0;
        let expect = 0.5 * (hv.norm() + gv.norm_sqr() / hv.norm()) * eta_v;
        let got = wt.conformal_factor(z).unwrap();
        assert!((got - expect).abs() < 1e-12, "got {got} expect {expect}");
    }

    #[test]
    fn rotate_frame_round_trip_and_axis_swap() {
        let w = seeds::catenoid();
        let rx = Frame::from_rows([1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]).unwrap();
        let wr = w.rotate_frame(&rx).unwrap();
        // conformality survives rotation
        let samples: Vec<Complex64> = disk_samples(200, 0.4)
            .into_iter()
            .map(|z| z + c64(1.0, 0.0))
            .collect();
        assert!(wr.conformality_residual(&samples) < 1e-12);
        // new third coordinate = old second
        for s in disk_samples(20, 0.3) {
            let p = c64(1.0, 0.0) + s;
            let path = vec![c64(1.0, 0.0), p];
            let a = w.immersion_eval(&path, QuadOpts::default()).unwrap();
            let b = wr.immersion_eval(&path, QuadOpts::default()).unwrap();
            assert!((b[2] - a[1]).abs() < 1e-10);
        }
        // compose with the transpose: back to the original
        let rt = Frame(rx.0.transpose());
        let back = wr.rotate_frame(&rt).unwrap();
        let p = c64(1.3, 0.2);
        let a = w
            .immersion_eval(&[c64(1.0, 0.0), p], QuadOpts::default())
            .unwrap();
        let b = back
            .immersion_eval(&[c64(1.0, 0.0), p], QuadOpts::default())
            .unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_rotation_is_noop() {
        let w = seeds::enneper();
        let wr = w.rotate_frame(&Frame::identity()).unwrap();
        let z = c64(0.4, -0.2);
        let a = w
            .immersion_eval(&[c64(0.0, 0.0), z], QuadOpts::default())
            .unwrap();
        let b = wr
            .immersion_eval(&[c64(0.0, 0.0), z], QuadOpts::default())
            .unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn periods_enneper_zero_catenoid_residue() {
        let w = seeds::enneper();
        let cyc = crate::domain::Cycle::circle(c64(0.0, 0.0), 0.8);
        let p = w.periods(&[cyc], QuadOpts::default()).unwrap();
        for k in 0..3 {
            assert!(p[0][k].norm() < 1e-11);
        }
        // catenoid: Re parts vanish, Im of Phi3 period is 2 pi
        let w = seeds::catenoid();
        let cyc = crate::domain::Cycle::circle(c64(0.0, 0.0), 1.0);
        let p = w.periods(&[cyc], QuadOpts::default()).unwrap();
        for k in 0..3 {
            assert!(p[0][k].re.abs() < 1e-10, "Re period {k} = {}", p[0][k].re);
        }
        assert!((p[0][2].im - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn periods_match_residue_oracle() {
        // g = z, eta = dz/z: Phi = ((1/z - z)/2, i(1/z + z)/2, 1)
        // residues at 0: (1/2, i/2, 0) => periods 2 pi i * res
        let w = WeierstrassData::from_g_eta(
            HoloMap::z(),
            HoloMap::pole_term(c64(1.0, 0.0), c64(0.0, 0.0), 1),
            Frame::identity(),
            c64(1.0, 0.0),
        );
        let cyc = crate::domain::Cycle::circle(c64(0.0, 0.0), 1.0);
        let p = w.periods(&[cyc], QuadOpts::default()).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let expect = [
            I * tau * c64(0.5, 0.0),
            I * tau * c64(0.0, 0.5),
            c64(0.0, 0.0),
        ];
        for k in 0..3 {
            assert!((p[0][k] - expect[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn gauss_map_conventions() {
        let flat = seeds::flat_disk(); // g = 0
        let gp = flat.gauss_map(c64(0.2, 0.3));
        assert!(!gp.at_pole);
        assert!((Vector3::from(gp.dir) - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        let enn = seeds::enneper(); // g = z
        let gp = enn.gauss_map(c64(1.0, 0.0));
        assert!((Vector3::from(gp.dir) - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        // |g| = 1: equator
        let gp = enn.gauss_map(Complex64::from_polar(1.0, 0.7));
        assert!(gp.dir[2].abs() < 1e-12);
        // unit norm
        let gp = enn.gauss_map(c64(0.3, -0.8));
        let n = (gp.dir[0].powi(2) + gp.dir[1].powi(2) + gp.dir[2].powi(2)).sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quadrature_tolerance_consistency() {
        let w = seeds::catenoid();
        let path = vec![c64(1.0, 0.0), c64(0.4, 0.5)];
        let a = w
            .immersion_eval(&path, QuadOpts { tol: 1e-8, max_depth: 20 })
            .unwrap();
        let b = w
            .immersion_eval(&path, QuadOpts { tol: 5e-9, max_depth: 20 })
            .unwrap();
        let dev = (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-7);
    }

    #[test]
    fn json_round_trip_preserves_values() {
        let w = seeds::catenoid();
        let j = w.to_json().unwrap();
        let w2 = WeierstrassData::from_json(&j).unwrap();
        let z = c64(0.8, 0.4);
        let mut ta = w.compile_phi();
        let mut tb = w2.compile_phi();
        let (a, b) = (ta.eval(z), tb.eval(z));
        for k in 0..3 {
            assert!((a[k] - b[k]).norm() < 1e-12);
        }
    }

    #[test]
    fn bad_frame_rejected() {
        assert!(Frame::from_rows([1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]).is_err());
        assert!(Frame::from_rows([1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]).is_err());
    }
}
