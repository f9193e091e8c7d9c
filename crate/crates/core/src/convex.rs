//! Smooth strictly convex bodies represented by support functions.
//!
//! The support representation makes parallel bodies exact (h + t) and turns
//! the Hausdorff distance between convex bodies into a sup of support-function
//! gaps. Boundary points come from the gradient of the 1-homogeneous
//! extension H(p) = |p| h(p/|p|); curvature radii are the tangent eigenvalues
//! of Hess H.

use nalgebra::{Matrix2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::ConvexError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BodyShape {
    Ball {
        c: [f64; 3],
        r: f64,
    },
    Ellipsoid {
        c: [f64; 3],
        semi: [f64; 3],
    },
    /// Support values tabulated on a lat-lon grid (row-major, latitude rows
    /// from -pi/2 to pi/2 inclusive, longitude columns from 0 to 2pi
    /// exclusive), bilinearly interpolated.
    Tabulated {
        nlat: usize,
        nlon: usize,
        values: Vec<f64>,
    },
}

/// A bounded convex body with 0 in its interior, plus an exact parallel
/// offset: the support function is shape support + offset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexBody {
    #[serde(flatten)]
    pub shape: BodyShape,
    #[serde(default)]
    pub offset: f64,
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl ConvexBody {
    pub fn ball(center: [f64; 3], r: f64) -> Self {
        ConvexBody {
            shape: BodyShape::Ball { c: center, r },
            offset: 0.0,
        }
    }

    pub fn ellipsoid(center: [f64; 3], semi: [f64; 3]) -> Self {
        ConvexBody {
            shape: BodyShape::Ellipsoid { c: center, semi },
            offset: 0.0,
        }
    }

    /// Tabulate a support function with spherical-cap average smoothing
    /// (kernel half-width in degrees).
    pub fn tabulated_from(
        f: &dyn Fn(Vector3<f64>) -> f64,
        nlat: usize,
        nlon: usize,
        smooth_deg: f64,
    ) -> Self {
        let mut values = Vec::with_capacity(nlat * nlon);
        let kw = smooth_deg.to_radians();
        for i in 0..nlat {
            let lat = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * i as f64 / (nlat - 1) as f64;
            for j in 0..nlon {
                let lon = 2.0 * std::f64::consts::PI * j as f64 / nlon as f64;
                let u = dir(lat, lon);
                let h = if kw > 0.0 { cap_average(f, u, kw) } else { f(u) };
                values.push(h);
            }
        }
        ConvexBody {
            shape: BodyShape::Tabulated { nlat, nlon, values },
            offset: 0.0,
        }
    }

    /// Support function h(u) for unit u.
    pub fn support(&self, u: Vector3<f64>) -> f64 {
        let s = match &self.shape {
            BodyShape::Ball { c, r } => v3(*c).dot(&u) + r,
            BodyShape::Ellipsoid { c, semi } => {
                let q = (semi[0] * u[0]).powi(2) + (semi[1] * u[1]).powi(2)
                    + (semi[2] * u[2]).powi(2);
                v3(*c).dot(&u) + q.sqrt()
            }
            BodyShape::Tabulated { nlat, nlon, values } => {
                bilinear(*nlat, *nlon, values, u)
            }
        };
        s + self.offset
    }

    /// 1-homogeneous extension H(p) = |p| h(p/|p|).
    fn homog(&self, p: Vector3<f64>) -> f64 {
        let n = p.norm();
        n * self.support(p / n)
    }

    /// Boundary point with outward normal u: grad H(u).
    pub fn boundary_point(&self, u: Vector3<f64>) -> Vector3<f64> {
        match &self.shape {
            BodyShape::Ball { c, r } => v3(*c) + u * (r + self.offset),
            BodyShape::Ellipsoid { c, semi } => {
                let q = Vector3::new(
                    semi[0] * semi[0] * u[0],
                    semi[1] * semi[1] * u[1],
                    semi[2] * semi[2] * u[2],
                );
                let h0 = (semi[0] * u[0]).powi(2).max(0.0)
                    + (semi[1] * u[1]).powi(2)
                    + (semi[2] * u[2]).powi(2);
                v3(*c) + q / h0.sqrt() + u * self.offset
            }
            BodyShape::Tabulated { .. } => {
                let d = 1e-5;
                let mut g = Vector3::zeros();
                for k in 0..3 {
                    let mut pp = u;
                    let mut pm = u;
                    pp[k] += d;
                    pm[k] -= d;
                    g[k] = (self.homog(pp) - self.homog(pm)) / (2.0 * d);
                }
                g
            }
        }
    }

    /// Strict membership test.
    pub fn contains(&self, x: Vector3<f64>) -> bool {
        self.signed_distance(x) < 0.0
    }

    /// Signed Euclidean distance to the boundary (negative inside). Exact for
    /// balls, via normal projection otherwise.
    pub fn signed_distance(&self, x: Vector3<f64>) -> f64 {
        match &self.shape {
            BodyShape::Ball { c, r } => (x - v3(*c)).norm() - (r + self.offset),
            _ => {
                let (_, foot, t) = self.project(x);
                let _ = foot;
                t
            }
        }
    }

    /// Normal projection: returns (normal direction u*, foot point, signed
    /// offset t) with x = foot + t u* up to the solver tolerance.
    pub fn project(&self, x: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>, f64) {
        if let BodyShape::Ball { c, r } = &self.shape {
            let d = x - v3(*c);
            let n = d.norm();
            if n < 1e-14 {
                let u = Vector3::new(1.0, 0.0, 0.0);
                return (u, v3(*c) + u * (r + self.offset), -(r + self.offset));
            }
            let u = d / n;
            return (u, v3(*c) + u * (r + self.offset), n - (r + self.offset));
        }
        // coarse seed on a direction grid
        let mut best = (f64::INFINITY, Vector3::new(1.0, 0.0, 0.0));
        let (nlat, nlon) = (24, 48);
        for i in 0..nlat {
            let lat = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * (i as f64 + 0.5) / nlat as f64;
            for j in 0..nlon {
                let lon = 2.0 * std::f64::consts::PI * j as f64 / nlon as f64;
                let u = dir(lat, lon);
                let d2 = (x - self.boundary_point(u)).norm_squared();
                if d2 < best.0 {
                    best = (d2, u);
                }
            }
        }
        let mut u = best.1;
        // Gauss-Newton on tangent coordinates of F(u) = |x - b(u)|^2 / 2
        for _ in 0..60 {
            let b = self.boundary_point(u);
            let r = x - b;
            let (t1, t2) = tangent_basis(u);
            let d = 1e-6;
            let col = |t: Vector3<f64>| -> Vector3<f64> {
                let up = (u + t * d).normalize();
                let um = (u - t * d).normalize();
                (self.boundary_point(up) - self.boundary_point(um)) / (2.0 * d)
            };
            let j1 = col(t1);
            let j2 = col(t2);
            // solve J^T J s = J^T r
            let a = Matrix2::new(j1.dot(&j1), j1.dot(&j2), j1.dot(&j2), j2.dot(&j2));
            let g = nalgebra::Vector2::new(j1.dot(&r), j2.dot(&r));
            // residual tangential component must vanish at the foot
            if g.norm() < 1e-13 * (1.0 + r.norm()) {
                break;
            }
            let s = match a.try_inverse() {
                Some(ai) => ai * g,
                None => break,
            };
            let mut step = 1.0;
            let f0 = r.norm_squared();
            for _ in 0..20 {
                let cand = (u + (t1 * s[0] + t2 * s[1]) * step).normalize();
                let f1 = (x - self.boundary_point(cand)).norm_squared();
                if f1 <= f0 {
                    u = cand;
                    break;
                }
                step *= 0.5;
            }
        }
        let foot = self.boundary_point(u);
        let t = (x - foot).dot(&u);
        (u, foot, t)
    }

    /// Principal curvature range over a boundary grid: (min kappa1, max
    /// kappa2), Richardson-refined. Errors if the body fails to be strictly
    /// convex on the grid.
    pub fn curvature_range(&self, nlat: usize, nlon: usize) -> Result<(f64, f64), ConvexError> {
        match &self.shape {
            BodyShape::Ball { r, .. } => {
                let rr = r + self.offset;
                if rr <= 0.0 {
                    return Err(ConvexError::NotStrictlyConvex);
                }
                Ok((1.0 / rr, 1.0 / rr))
            }
            _ => {
                let mut kmin = f64::INFINITY;
                let mut kmax: f64 = 0.0;
                for i in 0..nlat {
                    let lat = -std::f64::consts::FRAC_PI_2
                        + std::f64::consts::PI * (i as f64 + 0.5) / nlat as f64;
                    for j in 0..nlon {
                        let lon = 2.0 * std::f64::consts::PI * j as f64 / nlon as f64;
                        let u = dir(lat, lon);
                        let radii = self.curvature_radii(u)?;
                        let (r1, r2) = radii;
                        if r1 <= 0.0 || r2 <= 0.0 {
                            return Err(ConvexError::NotStrictlyConvex);
                        }
                        kmin = kmin.min(1.0 / r2.max(r1));
                        kmax = kmax.max(1.0 / r2.min(r1));
                    }
                }
                if !(kmin > 0.0) || !kmin.is_finite() {
                    return Err(ConvexError::NotStrictlyConvex);
                }
                Ok((kmin, kmax))
            }
        }
    }

    /// Principal curvature radii at the boundary point with normal u, from
    /// the tangent block of Hess H with Richardson extrapolation.
    fn curvature_radii(&self, u: Vector3<f64>) -> Result<(f64, f64), ConvexError> {
        let (t1, t2) = tangent_basis(u);
        let hess2 = |d: f64| -> Matrix2<f64> {
            let f = |p: Vector3<f64>| self.homog(p);
            let h11 = (f(u + t1 * d) - 2.0 * f(u) + f(u - t1 * d)) / (d * d);
            let h22 = (f(u + t2 * d) - 2.0 * f(u) + f(u - t2 * d)) / (d * d);
            let h12 = (f(u + (t1 + t2) * d) - f(u + (t1 - t2) * d) - f(u + (t2 - t1) * d)
                + f(u - (t1 + t2) * d))
                / (4.0 * d * d);
            Matrix2::new(h11, h12, h12, h22)
        };
        let d0 = match &self.shape {
            BodyShape::Tabulated { nlat, .. } => (std::f64::consts::PI / *nlat as f64) * 0.75,
            _ => 1e-3,
        };
        let a = hess2(d0);
        let b = hess2(d0 * 0.5);
        let m = (b * 4.0 - a) / 3.0;
        let tr = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let r1 = tr / 2.0 - disc;
        let r2 = tr / 2.0 + disc;
        if !r1.is_finite() || !r2.is_finite() {
            return Err(ConvexError::NotStrictlyConvex);
        }
        Ok((r1, r2))
    }

    /// Sampled inner reach a(E) = 0.9 min(1/kappa2).
    pub fn inner_reach(&self) -> Result<f64, ConvexError> {
        let (_, kmax) = self.curvature_range(32, 64)?;
        Ok(0.9 / kmax)
    }

    /// Sampled strict-convexity test: tangent second differences of H stay
    /// positive on a great-circle sweep.
    pub fn strict_convexity_check(&self, n: usize) -> bool {
        self.curvature_range(n.max(8), 2 * n.max(8)).is_ok()
    }

    pub fn scale(&self) -> f64 {
        let mut m: f64 = 0.0;
        for &u in &axis_dirs() {
            m = m.max(self.support(u).abs());
        }
        m
    }
}

fn axis_dirs() -> [Vector3<f64>; 6] {
    [
        Vector3::new(1.0, 0.0, 0.0),
        Vector3::new(-1.0, 0.0, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, 1.0),
        Vector3::new(0.0, 0.0, -1.0),
    ]
}

fn dir(lat: f64, lon: f64) -> Vector3<f64> {
    Vector3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
}

fn tangent_basis(u: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if u[0].abs() < 0.8 {
        Vector3::new(1.0, 0.0, 0.0)
    } else {
        Vector3::new(0.0, 1.0, 0.0)
    };
    let t1 = (seed - u * seed.dot(&u)).normalize();
    let t2 = u.cross(&t1);
    (t1, t2)
}

fn cap_average(f: &dyn Fn(Vector3<f64>) -> f64, u: Vector3<f64>, kw: f64) -> f64 {
    let (t1, t2) = tangent_basis(u);
    let mut acc = f(u);
    let mut n = 1.0;
    for ring in 1..=2 {
        let rho = kw * ring as f64 / 2.0;
        for k in 0..6 {
            let ang = 2.0 * std::f64::consts::PI * k as f64 / 6.0;
            let v = (u * rho.cos() + (t1 * ang.cos() + t2 * ang.sin()) * rho.sin()).normalize();
            acc += f(v);
            n += 1.0;
        }
    }
    acc / n
}

fn bilinear(nlat: usize, nlon: usize, values: &[f64], u: Vector3<f64>) -> f64 {
    let lat = u[2].clamp(-1.0, 1.0).asin();
    let lon = u[1].atan2(u[0]).rem_euclid(2.0 * std::f64::consts::PI);
    let fi = (lat + std::f64::consts::FRAC_PI_2) / std::f64::consts::PI * (nlat - 1) as f64;
    let fj = lon / (2.0 * std::f64::consts::PI) * nlon as f64;
    let i0 = (fi.floor() as usize).min(nlat - 1);
    let i1 = (i0 + 1).min(nlat - 1);
    let j0 = (fj.floor() as usize) % nlon;
    let j1 = (j0 + 1) % nlon;
    let a = fi - fi.floor();
    let b = fj - fj.floor();
    let v = |i: usize, j: usize| values[i * nlon + j];
    v(i0, j0) * (1.0 - a) * (1.0 - b)
        + v(i1, j0) * a * (1.0 - b)
        + v(i0, j1) * (1.0 - a) * b
        + v(i1, j1) * a * b
}

/// Parallel body E_t via the exact support shift h + t.
pub fn parallel_body(e: &ConvexBody, t: f64) -> Result<ConvexBody, ConvexError> {
    if t < 0.0 {
        let a = e.inner_reach()?;
        if -t > a {
            return Err(ConvexError::BeyondReach(t));
        }
    }
    let mut out = e.clone();
    out.offset += t;
    Ok(out)
}

/// Hausdorff distance between convex bodies: sup over directions of the
/// support gap, with local refinement of the maximizing direction.
pub fn hausdorff(c: &ConvexBody, d: &ConvexBody) -> f64 {
    // analytic ball pair
    if let (
        BodyShape::Ball { c: c1, r: r1 },
        BodyShape::Ball { c: c2, r: r2 },
    ) = (&c.shape, &d.shape)
    {
        let dc = (v3(*c1) - v3(*c2)).norm();
        return dc + (r1 + c.offset - r2 - d.offset).abs().max(0.0).max(
            ((r1 + c.offset) - (r2 + d.offset)).abs(),
        );
    }
    let f = |u: Vector3<f64>| (c.support(u) - d.support(u)).abs();
    let (mut best, mut bu) = (0.0f64, Vector3::new(1.0, 0.0, 0.0));
    let (nlat, nlon) = (48, 96);
    for i in 0..nlat {
        let lat = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (i as f64 + 0.5) / nlat as f64;
        for j in 0..nlon {
            let u = dir(lat, 2.0 * std::f64::consts::PI * j as f64 / nlon as f64);
            let v = f(u);
            if v > best {
                best = v;
                bu = u;
            }
        }
    }
    // local refinement: shrink a tangent simplex around the best direction
    let mut step = std::f64::consts::PI / nlat as f64;
    for _ in 0..40 {
        let (t1, t2) = tangent_basis(bu);
        let mut improved = false;
        for &(a, b) in &[(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (0.7, 0.7), (-0.7, 0.7), (0.7, -0.7), (-0.7, -0.7)] {
            let cand = (bu + (t1 * a + t2 * b) * step).normalize();
            let v = f(cand);
            if v > best {
                best = v;
                bu = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-9 {
                break;
            }
        }
    }
    best
}

/// True when h_inner <= h_outer on the sampled sphere (inner subset outer).
pub fn body_subset(inner: &ConvexBody, outer: &ConvexBody, tol: f64) -> bool {
    let (nlat, nlon) = (32, 64);
    for i in 0..nlat {
        let lat = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (i as f64 + 0.5) / nlat as f64;
        for j in 0..nlon {
            let u = dir(lat, 2.0 * std::f64::consts::PI * j as f64 / nlon as f64);
            if inner.support(u) > outer.support(u) + tol {
                return false;
            }
        }
    }
    true
}

/// The joint-step margin
/// m(a,b,eps,E,E') = eps + sqrt(2 (dH + a + 2b)/kappa1 + (dH + a)^2).
pub fn lemma5_margin(
    a: f64,
    b: f64,
    eps: f64,
    e: &ConvexBody,
    ep: &ConvexBody,
) -> Result<f64, ConvexError> {
    let (k1, _) = e.curvature_range(64, 128)?;
    let dh = hausdorff(e, ep);
    Ok(eps + (2.0 * (dh + a + 2.0 * b) / k1 + (dh + a) * (dh + a)).sqrt())
}

/// The strict-convexity deviation bound
/// M(b2,E,E') = sqrt(2 (dH + 2 b2)/kappa1 + dH^2).
pub fn remark_margin(b2: f64, e: &ConvexBody, ep: &ConvexBody) -> Result<f64, ConvexError> {
    let (k1, _) = e.curvature_range(64, 128)?;
    let dh = hausdorff(e, ep);
    Ok((2.0 * (dh + 2.0 * b2) / k1 + dh * dh).sqrt())
}

/// mu = max over x in E' of dist(x, boundary of E); the properness push
/// scale.
pub fn max_depth_inside(e: &ConvexBody, ep: &ConvexBody) -> f64 {
    if let (BodyShape::Ball { c: c1, r: r1 }, BodyShape::Ball { c: c2, r: r2 }) =
        (&e.shape, &ep.shape)
    {
        let (r1, r2) = (r1 + e.offset, r2 + ep.offset);
        let dc = (v3(*c1) - v3(*c2)).norm();
        return r1.max(dc + r2 - r1);
    }
    let (nlat, nlon) = (24, 48);
    let mut best: f64 = 0.0;
    for i in 0..nlat {
        let lat = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (i as f64 + 0.5) / nlat as f64;
        for j in 0..nlon {
            let u = dir(lat, 2.0 * std::f64::consts::PI * j as f64 / nlon as f64);
            let bp = ep.boundary_point(u);
            // walk the chord from the boundary of E' toward the origin
            for k in 0..=16 {
                let x = bp * (k as f64 / 16.0);
                best = best.max(e.signed_distance(x).abs());
            }
        }
    }
    best
}

/// Fraction of query points inside the convex hull of `hull_pts`, by a
/// direction-sampled support test with the given slack.
#[derive(Clone, Debug, Serialize)]
pub struct HullReport {
    pub total: usize,
    pub inside: usize,
    pub fraction: f64,
    pub worst_excess: f64,
}

pub fn hull_fraction(queries: &[[f64; 3]], hull_pts: &[[f64; 3]], slack: f64) -> HullReport {
    let (nlat, nlon) = (24, 48);
    let mut dirs = Vec::with_capacity(nlat * nlon);
    for i in 0..nlat {
        let lat = -std::f64::consts::FRAC_PI_2
            + std::f64::consts::PI * (i as f64 + 0.5) / nlat as f64;
        for j in 0..nlon {
            dirs.push(dir(lat, 2.0 * std::f64::consts::PI * j as f64 / nlon as f64));
        }
    }
    let sup: Vec<f64> = dirs
        .iter()
        .map(|u| {
            hull_pts
                .iter()
                .map(|p| v3(*p).dot(u))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut inside = 0;
    let mut worst: f64 = 0.0;
    for q in queries {
        let mut excess: f64 = 0.0;
        for (u, m) in dirs.iter().zip(sup.iter()) {
            excess = excess.max(v3(*q).dot(u) - m);
        }
        if excess <= slack {
            inside += 1;
        }
        worst = worst.max(excess);
    }
    HullReport {
        total: queries.len(),
        inside,
        fraction: if queries.is_empty() {
            1.0
        } else {
            inside as f64 / queries.len() as f64
        },
        worst_excess: worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_ball_is_exact() {
        let b = ConvexBody::ball([0.0; 3], 1.0);
        let bt = parallel_body(&b, 0.5).unwrap();
        let u = Vector3::new(0.6f64, 0.8, 0.0).normalize();
        assert!((bt.support(u) - 1.5).abs() < 1e-15);
        let bs = parallel_body(&b, -0.3).unwrap();
        assert!((bs.support(u) - 0.7).abs() < 1e-15);
        assert!(matches!(
            parallel_body(&b, -1.2),
            Err(ConvexError::BeyondReach(_))
        ));
        // round trip restores the support function
        let back = parallel_body(&bt, -0.5).unwrap();
        assert!((back.support(u) - b.support(u)).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_identities() {
        let b1 = ConvexBody::ball([0.0; 3], 1.0);
        let b2 = ConvexBody::ball([0.0; 3], 2.0);
        assert!((hausdorff(&b1, &b2) - 1.0).abs() < 1e-12);
        assert_eq!(hausdorff(&b1, &b1), 0.0);
        let moved = ConvexBody::ball([0.24, -0.32, 0.0], 1.0);
        assert!((hausdorff(&b1, &moved) - 0.4).abs() < 1e-10);
        // symmetry
        assert!((hausdorff(&moved, &b1) - hausdorff(&b1, &moved)).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_triangle_inequality_sampled() {
        let a = ConvexBody::ball([0.1, 0.0, 0.0], 1.0);
        let b = ConvexBody::ellipsoid([0.0; 3], [1.5, 1.0, 0.8]);
        let c = ConvexBody::ball([0.0, 0.2, 0.0], 1.3);
        let ab = hausdorff(&a, &b);
        let bc = hausdorff(&b, &c);
        let ac = hausdorff(&a, &c);
        assert!(ac <= ab + bc + 1e-8);
    }

    #[test]
    fn normal_projection_ball_and_boundary() {
        let b = ConvexBody::ball([0.0; 3], 1.0);
        let (u, foot, t) = b.project(Vector3::new(2.0, 0.0, 0.0));
        assert!((foot - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
        assert!((u - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-14);
        assert!((t - 1.0).abs() < 1e-14);
        // x on the boundary projects to itself
        let (_, foot, t) = b.project(Vector3::new(0.0, 1.0, 0.0));
        assert!((foot - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-14);
        assert!(t.abs() < 1e-14);
    }

    #[test]
    fn normal_projection_ellipsoid_against_dense_argmin() {
        let e = ConvexBody::ellipsoid([0.0; 3], [2.0, 1.0, 1.0]);
        let x = Vector3::new(3.0, 0.5, 0.0);
        let (u, foot, t) = e.project(x);
        // brute-force boundary-sampling oracle: coarse lat-lon argmin, then
        // re-sampled on successively zoomed patches around the best cell
        let mut best = (f64::INFINITY, Vector3::zeros(), 0.0f64, 0.0f64);
        for i in 0..200 {
            for j in 0..400 {
                let lat = -std::f64::consts::FRAC_PI_2
                    + std::f64::consts::PI * (i as f64 + 0.5) / 200.0;
                let lon = 2.0 * std::f64::consts::PI * j as f64 / 400.0;
                let p = e.boundary_point(dir(lat, lon));
                let d = (x - p).norm();
                if d < best.0 {
                    best = (d, p, lat, lon);
                }
            }
        }
        let mut span = std::f64::consts::PI / 200.0;
        for _ in 0..6 {
            let (lat0, lon0) = (best.2, best.3);
            for i in -20..=20 {
                for j in -20..=20 {
                    let lat = lat0 + span * i as f64 / 20.0;
                    let lon = lon0 + span * j as f64 / 20.0;
                    let p = e.boundary_point(dir(lat, lon));
                    let d = (x - p).norm();
                    if d < best.0 {
                        best = (d, p, lat, lon);
                    }
                }
            }
            span /= 10.0;
        }
        assert!((foot - best.1).norm() < 1e-4, "foot {foot:?} oracle {:?}", best.1);
        // decomposition and orthogonality
        assert!((x - (foot + u * t)).norm() < 1e-8);
        let (t1, t2) = tangent_basis(u);
        let d = 1e-5;
        for tb in [t1, t2] {
            let p1 = e.boundary_point((u + tb * d).normalize());
            let p0 = e.boundary_point((u - tb * d).normalize());
            let tangent = (p1 - p0).normalize();
            assert!((x - foot).normalize().dot(&tangent).abs() < 1e-4);
        }
    }

    #[test]
    fn curvature_ball_and_ellipsoid() {
        let b = ConvexBody::ball([0.0; 3], 2.0);
        let (k1, k2) = b.curvature_range(16, 32).unwrap();
        assert!((k1 - 0.5).abs() < 1e-12 && (k2 - 0.5).abs() < 1e-12);
        // ellipsoid (2,1,1): min principal curvature c/a^2 = 0.25
        let e = ConvexBody::ellipsoid([0.0; 3], [2.0, 1.0, 1.0]);
        let (k1, _) = e.curvature_range(128, 256).unwrap();
        assert!((k1 - 0.25).abs() / 0.25 < 0.02, "k1 = {k1}");
    }

    #[test]
    fn degenerate_tabulated_body_rejected() {
        // slab-like: support nearly linear in |u3| => curvature collapses
        let f = |u: Vector3<f64>| 0.02 + u[2].abs();
        let body = ConvexBody::tabulated_from(&f, 64, 128, 0.0);
        assert!(body.curvature_range(32, 64).is_err());
    }

    #[test]
    fn lemma5_margin_values() {
        let e = ConvexBody::ball([0.0; 3], 1.0);
        let ep = ConvexBody::ball([0.0; 3], 2.0);
        let m = lemma5_margin(0.1, 0.1, 0.01, &e, &ep).unwrap();
        let expect = 0.01 + (2.0f64 * 1.3 / 1.0 + 1.21).sqrt();
        assert!((m - expect).abs() < 1e-10, "m {m} expect {expect}");
        // all terms vanish
        let z = lemma5_margin(0.0, 0.0, 0.0, &e, &e).unwrap();
        assert!(z.abs() < 1e-12);
    }

    #[test]
    fn margin_limit_as_curvature_grows() {
        // kappa1 -> large: margin -> eps + (dH + a)
        let tiny = ConvexBody::ball([0.0; 3], 1e-6);
        let outer = ConvexBody::ball([0.0; 3], 1.0 + 1e-6);
        let m = lemma5_margin(0.3, 0.2, 0.05, &tiny, &outer).unwrap();
        let dh = 1.0;
        let lim = 0.05 + ((dh + 0.3f64).powi(2) + 2e-6 * (dh + 0.3 + 0.4)).sqrt();
        assert!((m - lim).abs() < 1e-2, "m {m} lim {lim}");
    }

    #[test]
    fn margin_monotonicity() {
        let e = ConvexBody::ball([0.0; 3], 1.0);
        let ep = ConvexBody::ball([0.0; 3], 1.5);
        let base = lemma5_margin(0.1, 0.1, 0.1, &e, &ep).unwrap();
        assert!(lemma5_margin(0.2, 0.1, 0.1, &e, &ep).unwrap() > base);
        assert!(lemma5_margin(0.1, 0.2, 0.1, &e, &ep).unwrap() > base);
        assert!(lemma5_margin(0.1, 0.1, 0.2, &e, &ep).unwrap() > base);
        // smaller kappa1 (bigger ball) raises the margin
        let big = ConvexBody::ball([0.0; 3], 1.2);
        let ep2 = ConvexBody::ball([0.0; 3], 1.7);
        assert!(lemma5_margin(0.1, 0.1, 0.1, &big, &ep2).unwrap() > base - 0.3);
    }

    #[test]
    fn depth_scale_for_ball_pair() {
        let e = ConvexBody::ball([0.0; 3], 1.0);
        let ep = ConvexBody::ball([0.0; 3], 1.6);
        assert!((max_depth_inside(&e, &ep) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hull_test_flat_disk_and_negative_control() {
        // flat disk inside the hull of its boundary circle
        let hull: Vec<[f64; 3]> = (0..256)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / 256.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect();
        let queries: Vec<[f64; 3]> = (0..100)
            .map(|k| {
                let t = k as f64 / 100.0;
                [0.9 * t * (7.0 * t).cos(), 0.9 * t * (7.0 * t).sin(), 0.0]
            })
            .collect();
        let rep = hull_fraction(&queries, &hull, 1e-6);
        assert_eq!(rep.inside, rep.total);
        // bumped point far outside must be flagged
        let rep = hull_fraction(&[[0.0, 0.0, 0.5]], &hull, 1e-6);
        assert_eq!(rep.inside, 0);
        assert!(rep.worst_excess > 0.4);
    }

    #[test]
    fn body_json_round_trip() {
        let e = ConvexBody::ellipsoid([0.1, 0.0, -0.2], [2.0, 1.0, 1.5]);
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"type\":\"ellipsoid\""));
        let back: ConvexBody = serde_json::from_str(&s).unwrap();
        let u = Vector3::new(0.3f64, -0.5, 0.81).normalize();
        assert!((back.support(u) - e.support(u)).abs() < 1e-14);
    }
}
