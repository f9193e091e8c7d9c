//! Jordan curves in the plane: circles and simple closed polylines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

pub const MIN_POLYLINE_VERTICES: usize = 8;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CycleKind {
    Circle {
        c: [f64; 2],
        r: f64,
    },
    Polyline {
        /// CCW-ordered closed vertex loop (last connects to first).
        vertices: Vec<[f64; 2]>,
    },
}

/// One cycle of a multicycle. Orientation is +1 for the stored CCW order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Cycle {
    #[serde(flatten)]
    pub kind: CycleKind,
    #[serde(default = "default_orientation")]
    pub orientation: i8,
}

fn default_orientation() -> i8 {
    1
}

pub fn cx(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn seg_dist(p: Complex64, a: Complex64, b: Complex64) -> f64 {
    let ab = b - a;
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / ab.norm_sqr().max(1e-300);
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn segs_intersect(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> bool {
    let cross = |u: Complex64, v: Complex64| u.re * v.im - u.im * v.re;
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

impl Cycle {
    pub fn circle(center: Complex64, radius: f64) -> Self {
        Cycle {
            kind: CycleKind::Circle {
                c: [center.re, center.im],
                r: radius,
            },
            orientation: 1,
        }
    }

    pub fn polyline(vertices: Vec<Complex64>) -> Self {
        Cycle {
            kind: CycleKind::Polyline {
                vertices: vertices.iter().map(|z| [z.re, z.im]).collect(),
            },
            orientation: 1,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match &self.kind {
            CycleKind::Circle { r, .. } => {
                if !(*r > 0.0) {
                    return Err(DomainError::DegenerateCycle(format!("radius {r} <= 0")));
                }
            }
            CycleKind::Polyline { vertices } => {
                if vertices.len() < MIN_POLYLINE_VERTICES {
                    return Err(DomainError::DegenerateCycle(format!(
                        "polyline has {} vertices, needs >= {MIN_POLYLINE_VERTICES}",
                        vertices.len()
                    )));
                }
                let vs: Vec<Complex64> = vertices.iter().map(|&p| cx(p)).collect();
                let n = vs.len();
                for i in 0..n {
                    let (a, b) = (vs[i], vs[(i + 1) % n]);
                    if (b - a).norm() < 1e-15 {
                        return Err(DomainError::DegenerateCycle("zero-length edge".into()));
                    }
                    for j in i + 1..n {
                        // skip adjacent edges
                        if j == i || (j + 1) % n == i || (i + 1) % n == j {
                            continue;
                        }
                        let (c, d) = (vs[j], vs[(j + 1) % n]);
                        if segs_intersect(a, b, c, d) {
                            return Err(DomainError::DegenerateCycle(
                                "polyline self-intersects".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn vertices_complex(&self) -> Vec<Complex64> {
        match &self.kind {
            CycleKind::Circle { c, r } => {
                let n = 128;
                (0..n)
                    .map(|i| {
                        let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                        cx(*c) + Complex64::from_polar(*r, t)
                    })
                    .collect()
            }
            CycleKind::Polyline { vertices } => vertices.iter().map(|&p| cx(p)).collect(),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match &self.kind {
            CycleKind::Circle { r, .. } => 2.0 * std::f64::consts::PI * r,
            CycleKind::Polyline { vertices } => {
                let vs = vertices;
                let n = vs.len();
                (0..n)
                    .map(|i| (cx(vs[(i + 1) % n]) - cx(vs[i])).norm())
                    .sum()
            }
        }
    }

    /// Point at arclength s (wrapping).
    pub fn point_at(&self, s: f64) -> Complex64 {
        match &self.kind {
            CycleKind::Circle { c, r } => {
                let t = s / r;
                cx(*c) + Complex64::from_polar(*r, t)
            }
            CycleKind::Polyline { vertices } => {
                let per = self.perimeter();
                let mut s = s.rem_euclid(per.max(1e-300));
                let vs = vertices;
                let n = vs.len();
                for i in 0..n {
                    let (a, b) = (cx(vs[i]), cx(vs[(i + 1) % n]));
                    let len = (b - a).norm();
                    if s <= len {
                        return a + (b - a) * (s / len);
                    }
                    s -= len;
                }
                cx(vs[0])
            }
        }
    }

    /// Euclidean distance from p to the curve.
    pub fn distance_to(&self, p: Complex64) -> f64 {
        match &self.kind {
            CycleKind::Circle { c, r } => ((p - cx(*c)).norm() - r).abs(),
            CycleKind::Polyline { vertices } => {
                let vs = vertices;
                let n = vs.len();
                (0..n)
                    .map(|i| seg_dist(p, cx(vs[i]), cx(vs[(i + 1) % n])))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Arclength of the closest point on the curve to p.
    pub fn project_arclength(&self, p: Complex64) -> f64 {
        match &self.kind {
            CycleKind::Circle { c, r } => {
                let d = p - cx(*c);
                let t = d.im.atan2(d.re).rem_euclid(2.0 * std::f64::consts::PI);
                t * r
            }
            CycleKind::Polyline { vertices } => {
                let vs = vertices;
                let n = vs.len();
                let mut best = (f64::INFINITY, 0.0);
                let mut acc = 0.0;
                for i in 0..n {
                    let (a, b) = (cx(vs[i]), cx(vs[(i + 1) % n]));
                    let ab = b - a;
                    let len = ab.norm();
                    let t = (((p - a).re * ab.re + (p - a).im * ab.im) / ab.norm_sqr())
                        .clamp(0.0, 1.0);
                    let d = (p - (a + ab * t)).norm();
                    if d < best.0 {
                        best = (d, acc + t * len);
                    }
                    acc += len;
                }
                best.1
            }
        }
    }

    /// True if p lies strictly inside the bounded component of the complement.
    pub fn encloses(&self, p: Complex64) -> bool {
        match &self.kind {
            CycleKind::Circle { c, r } => (p - cx(*c)).norm() < *r,
            CycleKind::Polyline { vertices } => {
                // ray casting to +x
                let vs = vertices;
                let n = vs.len();
                let mut inside = false;
                for i in 0..n {
                    let a = cx(vs[i]);
                    let b = cx(vs[(i + 1) % n]);
                    if (a.im > p.im) != (b.im > p.im) {
                        let xint = a.re + (p.im - a.im) / (b.im - a.im) * (b.re - a.re);
                        if xint > p.re {
                            inside = !inside;
                        }
                    }
                }
                inside
            }
        }
    }

    /// Signed area of the bounded component (positive for CCW order).
    pub fn signed_area(&self) -> f64 {
        match &self.kind {
            CycleKind::Circle { r, .. } => std::f64::consts::PI * r * r,
            CycleKind::Polyline { vertices } => {
                let vs = vertices;
                let n = vs.len();
                0.5 * (0..n)
                    .map(|i| {
                        let a = vs[i];
                        let b = vs[(i + 1) % n];
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum::<f64>()
            }
        }
    }

    /// Force CCW vertex order for polylines.
    pub fn normalized(mut self) -> Self {
        if let CycleKind::Polyline { vertices } = &mut self.kind {
            let area: f64 = {
                let vs = &vertices;
                let n = vs.len();
                0.5 * (0..n)
                    .map(|i| {
                        let a = vs[i];
                        let b = vs[(i + 1) % n];
                        a[0] * b[1] - b[0] * a[1]
                    })
                    .sum::<f64>()
            };
            if area < 0.0 {
                vertices.reverse();
            }
        }
        self
    }

    pub fn centroid(&self) -> Complex64 {
        match &self.kind {
            CycleKind::Circle { c, .. } => cx(*c),
            CycleKind::Polyline { vertices } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for &v in vertices {
                    acc += cx(v);
                }
                acc / vertices.len() as f64
            }
        }
    }

    /// Characteristic size: radius for circles, perimeter/2pi otherwise.
    pub fn scale(&self) -> f64 {
        match &self.kind {
            CycleKind::Circle { r, .. } => *r,
            CycleKind::Polyline { .. } => self.perimeter() / (2.0 * std::f64::consts::PI),
        }
    }

    pub fn bbox(&self) -> (Complex64, Complex64) {
        match &self.kind {
            CycleKind::Circle { c, r } => (
                Complex64::new(c[0] - r, c[1] - r),
                Complex64::new(c[0] + r, c[1] + r),
            ),
            CycleKind::Polyline { vertices } => {
                let (mut lo, mut hi) = (
                    Complex64::new(f64::INFINITY, f64::INFINITY),
                    Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
                );
                for &v in vertices {
                    lo.re = lo.re.min(v[0]);
                    lo.im = lo.im.min(v[1]);
                    hi.re = hi.re.max(v[0]);
                    hi.im = hi.im.max(v[1]);
                }
                (lo, hi)
            }
        }
    }

    /// Offset the curve by `d` toward the bounded side (d > 0 shrinks the
    /// enclosed disk, d < 0 grows it). Polyline offsets move each vertex
    /// along the inward vertex normal and prune vertices that landed closer
    /// to the original curve than |d| (miter self-intersection repair).
    pub fn offset_inward(&self, d: f64) -> Result<Cycle, DomainError> {
        match &self.kind {
            CycleKind::Circle { c, r } => {
                let nr = r - d;
                if nr <= 0.0 {
                    return Err(DomainError::OffsetVanishes);
                }
                Ok(Cycle::circle(cx(*c), nr))
            }
            CycleKind::Polyline { vertices } => {
                let vs: Vec<Complex64> = vertices.iter().map(|&p| cx(p)).collect();
                let n = vs.len();
                let mut out = Vec::with_capacity(n);
                for i in 0..n {
                    let prev = vs[(i + n - 1) % n];
                    let cur = vs[i];
                    let next = vs[(i + 1) % n];
                    // inward normals (CCW order: inward = right of travel... for
                    // CCW the interior is to the LEFT; left normal of (b-a) is
                    // i*(b-a)/|b-a|.
                    let n1 = rot90((cur - prev) / (cur - prev).norm());
                    let n2 = rot90((next - cur) / (next - cur).norm());
                    let m = n1 + n2;
                    let mn = m.norm();
                    let dir = if mn < 1e-9 { n2 } else { m / mn };
                    let cos_half = (dir.re * n2.re + dir.im * n2.im).max(0.2);
                    out.push(cur + dir * (d / cos_half));
                }
                // prune vertices that violated the clearance (concave corners)
                let keep: Vec<Complex64> = out
                    .into_iter()
                    .filter(|&p| self.distance_to(p) >= d.abs() * 0.75)
                    .collect();
                if keep.len() < MIN_POLYLINE_VERTICES {
                    return Err(DomainError::OffsetVanishes);
                }
                let c = Cycle::polyline(keep).normalized();
                c.validate()
                    .map_err(|_| DomainError::OffsetCollision)
                    .map(|_| c)
            }
        }
    }
}

fn rot90(v: Complex64) -> Complex64 {
    Complex64::new(-v.im, v.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_offset_is_exact() {
        let c = Cycle::circle(Complex64::new(0.0, 0.0), 1.0);
        let inner = c.offset_inward(0.25).unwrap();
        match inner.kind {
            CycleKind::Circle { r, .. } => assert!((r - 0.75).abs() < 1e-15),
            _ => panic!(),
        }
        assert!(c.offset_inward(1.5).is_err());
    }

    #[test]
    fn polyline_validation_catches_bowtie() {
        let mut vs: Vec<Complex64> = (0..8)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
                Complex64::from_polar(1.0, t)
            })
            .collect();
        vs.swap(1, 5);
        let c = Cycle::polyline(vs);
        assert!(c.validate().is_err());
    }

    #[test]
    fn encloses_and_projection() {
        let c = Cycle::circle(Complex64::new(1.0, 0.0), 0.5);
        assert!(c.encloses(Complex64::new(1.2, 0.1)));
        assert!(!c.encloses(Complex64::new(0.0, 0.0)));
        let s = c.project_arclength(Complex64::new(2.0, 0.0));
        assert!(s.abs() < 1e-12 || (s - c.perimeter()).abs() < 1e-12);
    }
}
