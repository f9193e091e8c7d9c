//! Planar genus-0 domains bounded by multicycles, parallel cycles, the flat
//! |dz| metric, paths, and intrinsic flat distances.

mod cycle;
mod flatdist;

pub use cycle::{cx, Cycle, CycleKind, MIN_POLYLINE_VERTICES};
pub use flatdist::{flat_distance, flat_path, grid_dijkstra};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Which side of the cycle family is the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    /// One outermost cycle bounds the domain; the others bound holes.
    Interior,
    /// The plane minus all closed disks.
    Exterior,
}

/// An ordered family of disjoint Jordan curves bounding a connected planar
/// domain. For `Interior` domains, `outer` indexes the cycle whose bounded
/// side contains every other cycle; its "disk" is the unbounded complement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiCycle {
    pub cycles: Vec<Cycle>,
    pub domain: DomainKind,
    #[serde(skip)]
    outer: Option<usize>,
}

/// Validated constructor. Infers the domain kind: if exactly one cycle
/// encloses all the others it becomes the outer boundary of an interior-kind
/// domain, otherwise the domain is the plane minus the disks.
pub fn make_multicycle(cycles: Vec<Cycle>) -> Result<MultiCycle, DomainError> {
    MultiCycle::new_inferred(cycles)
}

impl MultiCycle {
    pub fn new_inferred(cycles: Vec<Cycle>) -> Result<Self, DomainError> {
        if cycles.is_empty() {
            return Err(DomainError::DegenerateCycle("empty cycle list".into()));
        }
        for c in &cycles {
            c.validate()?;
        }
        let cycles: Vec<Cycle> = cycles.into_iter().map(|c| c.normalized()).collect();
        let n = cycles.len();
        let mut outer = None;
        if n == 1 {
            // Single-cycle convention: interior domain (the bounded disk).
            return Ok(MultiCycle {
                cycles,
                domain: DomainKind::Interior,
                outer: Some(0),
            });
        }
        for i in 0..n {
            let encloses_all = (0..n)
                .filter(|&j| j != i)
                .all(|j| cycles[i].encloses(cycles[j].centroid()));
            if encloses_all {
                outer = Some(i);
                break;
            }
        }
        let domain = if outer.is_some() {
            DomainKind::Interior
        } else {
            DomainKind::Exterior
        };
        let mc = MultiCycle {
            cycles,
            domain,
            outer,
        };
        mc.check_disjoint()?;
        Ok(mc)
    }

    pub fn exterior(cycles: Vec<Cycle>) -> Result<Self, DomainError> {
        for c in &cycles {
            c.validate()?;
        }
        let mc = MultiCycle {
            cycles: cycles.into_iter().map(|c| c.normalized()).collect(),
            domain: DomainKind::Exterior,
            outer: None,
        };
        mc.check_disjoint()?;
        Ok(mc)
    }

    /// Rebuild the outer index after deserialization.
    pub fn rehydrate(mut self) -> Result<Self, DomainError> {
        match self.domain {
            DomainKind::Exterior => {
                self.outer = None;
                Ok(self)
            }
            DomainKind::Interior => {
                let n = self.cycles.len();
                if n == 1 {
                    self.outer = Some(0);
                    return Ok(self);
                }
                for i in 0..n {
                    if (0..n)
                        .filter(|&j| j != i)
                        .all(|j| self.cycles[i].encloses(self.cycles[j].centroid()))
                    {
                        self.outer = Some(i);
                        return Ok(self);
                    }
                }
                Err(DomainError::NoOuterCycle)
            }
        }
    }

    fn check_disjoint(&self) -> Result<(), DomainError> {
        let n = self.cycles.len();
        for i in 0..n {
            for j in i + 1..n {
                if self.cycles_touch(i, j) {
                    return Err(DomainError::OverlappingCycles(i, j));
                }
            }
        }
        // inner cycles must actually be inside the outer one
        if let Some(o) = self.outer {
            for (j, c) in self.cycles.iter().enumerate() {
                if j != o {
                    for v in c.vertices_complex() {
                        if !self.cycles[o].encloses(v) {
                            return Err(DomainError::OverlappingCycles(o, j));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn cycles_touch(&self, i: usize, j: usize) -> bool {
        use CycleKind::*;
        let (a, b) = (&self.cycles[i], &self.cycles[j]);
        let outer = self.outer;
        let nested = |inner: usize, out: usize| outer == Some(out) || outer == Some(inner);
        match (&a.kind, &b.kind) {
            (Circle { c: c1, r: r1 }, Circle { c: c2, r: r2 }) => {
                let d = (cx(*c1) - cx(*c2)).norm();
                if nested(i, j) {
                    // one encloses the other: require strict containment gap
                    let (rin, rout) = if outer == Some(i) { (*r2, *r1) } else { (*r1, *r2) };
                    d + rin >= rout
                } else {
                    d <= r1 + r2
                }
            }
            _ => {
                // sampled clearance for polyline pairs
                let va = a.vertices_complex();
                let min = va
                    .iter()
                    .map(|&p| b.distance_to(p))
                    .fold(f64::INFINITY, f64::min);
                let min2 = b
                    .vertices_complex()
                    .iter()
                    .map(|&p| a.distance_to(p))
                    .fold(min, f64::min);
                if nested(i, j) {
                    min2 <= 0.0
                } else {
                    // disjoint bounded disks: no vertex of one inside the other
                    va.iter().any(|&p| b.encloses(p))
                        || b.vertices_complex().iter().any(|&p| a.encloses(p))
                        || min2 <= 0.0
                }
            }
        }
    }

    pub fn cycle_count(&self) -> usize {
        self.cycles.len()
    }

    pub fn outer_index(&self) -> Option<usize> {
        self.outer
    }

    /// Homology rank of M(J) in genus zero: e - 1 for interior domains
    /// (loops around each hole), e for exterior ones.
    pub fn homology_rank(&self) -> usize {
        match self.domain {
            DomainKind::Interior => self.cycles.len() - 1,
            DomainKind::Exterior => self.cycles.len(),
        }
    }

    /// Strict membership in the open domain M(J).
    pub fn contains(&self, p: Complex64) -> bool {
        self.contains_with_margin(p, 0.0)
    }

    /// Membership with clearance: every boundary at distance > margin on the
    /// domain side.
    pub fn contains_with_margin(&self, p: Complex64, margin: f64) -> bool {
        for (i, c) in self.cycles.iter().enumerate() {
            let inside_bounded = c.encloses(p);
            let d = c.distance_to(p);
            if Some(i) == self.outer {
                if !inside_bounded || d <= margin {
                    return false;
                }
            } else if inside_bounded || d <= margin {
                return false;
            }
        }
        true
    }

    /// Distance from p to the boundary J.
    pub fn boundary_distance(&self, p: Complex64) -> f64 {
        self.cycles
            .iter()
            .map(|c| c.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimal gap between distinct cycles (flat metric).
    pub fn cycle_separation(&self) -> f64 {
        let n = self.cycles.len();
        let mut sep = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let s = self.cycles[i]
                    .vertices_complex()
                    .iter()
                    .map(|&p| self.cycles[j].distance_to(p))
                    .fold(f64::INFINITY, f64::min);
                sep = sep.min(s);
            }
        }
        if n == 1 {
            // single boundary: available depth is the inradius-ish scale
            sep = self.cycles[0].scale();
        }
        sep
    }

    pub fn bbox(&self) -> (Complex64, Complex64) {
        let mut lo = Complex64::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &self.cycles {
            let (l, h) = c.bbox();
            lo.re = lo.re.min(l.re);
            lo.im = lo.im.min(l.im);
            hi.re = hi.re.max(h.re);
            hi.im = hi.im.max(h.im);
        }
        (lo, hi)
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).norm()
    }

    /// A representative interior point (used as default basepoint).
    pub fn interior_point(&self) -> Complex64 {
        if let Some(o) = self.outer {
            let c = self.cycles[o].centroid();
            if self.contains(c) {
                return c;
            }
            // scan a coarse grid
            let (lo, hi) = self.cycles[o].bbox();
            for k in 1..64 {
                for l in 1..64 {
                    let p = Complex64::new(
                        lo.re + (hi.re - lo.re) * k as f64 / 64.0,
                        lo.im + (hi.im - lo.im) * l as f64 / 64.0,
                    );
                    if self.contains_with_margin(p, 1e-6) {
                        return p;
                    }
                }
            }
            c
        } else {
            let (lo, hi) = self.bbox();
            let pad = (hi - lo).norm() * 0.5 + 1.0;
            Complex64::new(hi.re + pad, 0.0)
        }
    }
}

/// J^eps for sign=+1 (each disk Int(gamma_i) grows by eps, the domain
/// shrinks) and J^{-eps} for sign=-1.
pub fn parallel_multicycle(j: &MultiCycle, eps: f64, sign: i8) -> Result<MultiCycle, DomainError> {
    assert!(eps > 0.0, "eps must be positive");
    let shrink_domain = sign > 0;
    let mut out = Vec::with_capacity(j.cycles.len());
    for (i, c) in j.cycles.iter().enumerate() {
        let is_outer = Some(i) == j.outer_index();
        // Growing Int(gamma) moves the curve into the domain: inward (toward
        // the bounded side) for the outer cycle, outward for hole cycles.
        let d = match (is_outer, shrink_domain) {
            (true, true) => eps,
            (true, false) => -eps,
            (false, true) => -eps,
            (false, false) => eps,
        };
        out.push(c.offset_inward(d)?);
    }
    let res = MultiCycle {
        cycles: out,
        domain: j.domain,
        outer: j.outer,
    };
    res.check_disjoint().map_err(|_| DomainError::OffsetCollision)?;
    Ok(res)
}

/// Strict containment of the bounded disk of `inner` in the bounded disk of
/// `outer` (closure included). Exact for circle pairs, sampled otherwise.
pub fn cycle_strictly_inside(inner: &Cycle, outer: &Cycle) -> bool {
    if let (CycleKind::Circle { c: c1, r: r1 }, CycleKind::Circle { c: c2, r: r2 }) =
        (&inner.kind, &outer.kind)
    {
        return (cx(*c1) - cx(*c2)).norm() + r1 < *r2;
    }
    inner
        .vertices_complex()
        .iter()
        .all(|&v| outer.encloses(v) && outer.distance_to(v) > 0.0)
        && !outer.vertices_complex().iter().any(|&v| inner.encloses(v))
}

/// The paper's nesting order: jp < j holds when every disk closure of j sits
/// strictly inside the matching disk of jp, so closure(M(jp)) is contained
/// in M(j) (jp is the smaller domain).
pub fn multicycle_less(jp: &MultiCycle, j: &MultiCycle) -> bool {
    if jp.cycle_count() != j.cycle_count() || jp.outer_index() != j.outer_index() {
        return false;
    }
    for i in 0..j.cycles.len() {
        let ok = if Some(i) == j.outer_index() {
            // Int = exterior disk: closure(ext of j) subset ext of jp holds
            // exactly when jp's outer curve is strictly inside j's
            cycle_strictly_inside(&jp.cycles[i], &j.cycles[i])
        } else {
            cycle_strictly_inside(&j.cycles[i], &jp.cycles[i])
        };
        if !ok {
            return false;
        }
    }
    true
}

/// A polyline path constrained to the closure of M(J).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DomainPath {
    pub vertices: Vec<[f64; 2]>,
}

impl DomainPath {
    pub fn new(vertices: Vec<Complex64>, host: &MultiCycle) -> Result<Self, DomainError> {
        let path = DomainPath {
            vertices: vertices.iter().map(|z| [z.re, z.im]).collect(),
        };
        path.validate(host)?;
        Ok(path)
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.vertices.iter().map(|&p| cx(p)).collect()
    }

    pub fn validate(&self, host: &MultiCycle) -> Result<(), DomainError> {
        let pts = self.points();
        if pts.is_empty() {
            return Err(DomainError::DegenerateCycle("empty path".into()));
        }
        let tol = -1e-9 * host.diameter().max(1.0);
        for w in pts.windows(2) {
            for k in 0..=16 {
                let t = k as f64 / 16.0;
                let p = w[0] + (w[1] - w[0]) * t;
                if !host.contains_with_margin(p, tol) {
                    return Err(DomainError::PointOutsideDomain);
                }
            }
        }
        if pts.len() == 1 && !host.contains_with_margin(pts[0], tol) {
            return Err(DomainError::PointOutsideDomain);
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.points().windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn section8_seed_multicycle_is_valid() {
        // circles r=1/16 at +-7i/8 plus outer circle r=31/32 at 0
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 31.0 / 32.0),
            Cycle::circle(c64(0.0, 0.875), 0.0625),
            Cycle::circle(c64(0.0, -0.875), 0.0625),
        ])
        .unwrap();
        assert_eq!(j.domain, DomainKind::Interior);
        assert_eq!(j.outer_index(), Some(0));
        assert_eq!(j.homology_rank(), 2);
        assert!(j.contains(c64(0.0, 0.0)));
        assert!(!j.contains(c64(0.0, 0.875)));
    }

    #[test]
    fn overlapping_circles_rejected() {
        let e = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 1.0),
            Cycle::circle(c64(1.5, 0.0), 1.0),
        ]);
        assert!(matches!(e, Err(DomainError::OverlappingCycles(_, _))));
    }

    #[test]
    fn single_circle_is_unit_disk() {
        let j = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap();
        assert!(j.contains(c64(0.5, 0.0)));
        assert!(!j.contains(c64(1.5, 0.0)));
    }

    #[test]
    fn parallel_offsets_move_into_domain() {
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 1.0),
            Cycle::circle(c64(0.0, 0.0), 0.25),
        ])
        .unwrap();
        let je = parallel_multicycle(&j, 0.1, 1).unwrap();
        match (&je.cycles[0].kind, &je.cycles[1].kind) {
            (CycleKind::Circle { r: r0, .. }, CycleKind::Circle { r: r1, .. }) => {
                assert!((r0 - 0.9).abs() < 1e-15);
                assert!((r1 - 0.35).abs() < 1e-15);
            }
            _ => panic!(),
        }
        assert!(multicycle_less(&je, &j));
        // round trip
        let back = parallel_multicycle(&je, 0.1, -1).unwrap();
        match &back.cycles[0].kind {
            CycleKind::Circle { r, .. } => assert!((r - 1.0).abs() < 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn offset_vanishes_on_small_disk() {
        let j = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 0.05)]).unwrap();
        // single cycle is the outer boundary of a disk; shrinking the domain
        // past the radius kills it
        assert!(matches!(
            parallel_multicycle(&j, 0.1, 1),
            Err(DomainError::OffsetVanishes)
        ));
    }

    #[test]
    fn grown_disks_collide() {
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 2.0),
            Cycle::circle(c64(-0.6, 0.0), 0.25),
            Cycle::circle(c64(0.6, 0.0), 0.25),
        ])
        .unwrap();
        assert!(matches!(
            parallel_multicycle(&j, 0.36, 1),
            Err(DomainError::OffsetCollision)
        ));
    }

    #[test]
    fn multicycle_json_round_trip() {
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 1.0),
            Cycle::circle(c64(0.3, 0.1), 0.2),
        ])
        .unwrap();
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.contains("\"type\":\"circle\""));
        assert!(s.contains("\"domain\":\"interior\""));
        let back: MultiCycle = serde_json::from_str(&s).unwrap();
        let back = back.rehydrate().unwrap();
        assert_eq!(back.outer_index(), Some(0));
    }
}
