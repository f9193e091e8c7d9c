//! The boundary labyrinth: for each boundary cycle, 2N division points, a
//! stack of parallel curves across a collar band, alternating radial walls,
//! and the region Omega_N where a conformal weight is boosted so that any
//! crossing of the collar picks up length growing linearly in N.
//!
//! Geometry is expressed in band coordinates (angle along the cycle, depth
//! into the domain). Circles are exact; radial-graph polylines (the cycles
//! produced by the deformation steps) use radial depth.

use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{cx, grid_dijkstra, Cycle, CycleKind, MultiCycle};
use crate::error::DeformError;

/// Band-coordinate chart around one boundary cycle: angle theta in [0, 2pi),
/// depth d >= 0 measured into the domain.
#[derive(Clone, Debug)]
pub struct CycleBand {
    pub center: Complex64,
    /// Radius profile by angle (uniform grid over [0, 2pi)); length 1 means a
    /// circle.
    pub radius: Vec<f64>,
    /// +1 if depth increases toward the center (outer boundary of an
    /// interior domain), -1 if away from it (hole cycle).
    pub inward: f64,
}

impl CycleBand {
    pub fn for_cycle(
        j: &MultiCycle,
        cycle_index: usize,
    ) -> Result<CycleBand, DeformError> {
        let cyc = &j.cycles[cycle_index];
        let is_outer = j.outer_index() == Some(cycle_index);
        let inward = if is_outer { 1.0 } else { -1.0 };
        match &cyc.kind {
            CycleKind::Circle { c, .. } => Ok(CycleBand {
                center: cx(*c),
                radius: vec![cyc.scale()],
                inward,
            }),
            CycleKind::Polyline { vertices } => {
                let center = cyc.centroid();
                let n = 720usize;
                let mut radius = vec![f64::NAN; n];
                // radial-graph check: sample radius by angle via segment
                // intersections with rays
                let vs: Vec<Complex64> = vertices.iter().map(|&p| cx(p)).collect();
                let m = vs.len();
                for k in 0..n {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    let dir = Complex64::from_polar(1.0, th);
                    let mut hits: Vec<f64> = Vec::new();
                    for i in 0..m {
                        let (a, b) = (vs[i] - center, vs[(i + 1) % m] - center);
                        // solve a + t(b-a) = r dir, t in [0,1), r > 0
                        let det = (b - a).re * (-dir.im) - (b - a).im * (-dir.re);
                        if det.abs() < 1e-15 {
                            continue;
                        }
                        let t = ((-a.re) * (-dir.im) - (-a.im) * (-dir.re)) / det;
                        let r = ((b - a).re * (-a.im) - (b - a).im * (-a.re)) / det;
                        if (-1e-9..1.0 - 1e-9).contains(&t) && r > 0.0 {
                            hits.push(r);
                        }
                    }
                    hits.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    hits.dedup_by(|x, y| (*x - *y).abs() < 1e-9 * (1.0 + y.abs()));
                    if hits.len() != 1 {
                        return Err(DeformError::UnsupportedGeometry(
                            "cycle is not a radial graph around its centroid".into(),
                        ));
                    }
                    radius[k] = hits[0];
                }
                Ok(CycleBand {
                    center,
                    radius,
                    inward,
                })
            }
        }
    }

    pub fn radius_at(&self, theta: f64) -> f64 {
        if self.radius.len() == 1 {
            return self.radius[0];
        }
        let n = self.radius.len();
        let f = theta.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
            * n as f64;
        let i0 = (f.floor() as usize) % n;
        let i1 = (i0 + 1) % n;
        let a = f - f.floor();
        self.radius[i0] * (1.0 - a) + self.radius[i1] * a
    }

    /// Mean radius (the cycle's scale in this chart).
    pub fn scale(&self) -> f64 {
        self.radius.iter().sum::<f64>() / self.radius.len() as f64
    }

    /// Band coordinates of p: (theta, depth into the domain). Depth grows
    /// inward for the outer cycle of an interior domain and outward for hole
    /// cycles.
    pub fn to_band(&self, p: Complex64) -> (f64, f64) {
        let d = p - self.center;
        let theta = d.im.atan2(d.re).rem_euclid(2.0 * std::f64::consts::PI);
        let rho = d.norm();
        let depth = if self.inward > 0.0 {
            self.radius_at(theta) - rho
        } else {
            rho - self.radius_at(theta)
        };
        (theta, depth)
    }

    pub fn from_band(&self, theta: f64, depth: f64) -> Complex64 {
        let rho = if self.inward > 0.0 {
            self.radius_at(theta) - depth
        } else {
            self.radius_at(theta) + depth
        };
        self.center + Complex64::from_polar(rho, theta)
    }

    /// The offset cycle at the given depth, as a circle or sampled polyline.
    pub fn offset_cycle(&self, depth: f64) -> Cycle {
        if self.radius.len() == 1 {
            let r = if self.inward > 0.0 {
                self.radius[0] - depth
            } else {
                self.radius[0] + depth
            };
            Cycle::circle(self.center, r)
        } else {
            let n = self.radius.len();
            let pts = (0..n)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    self.from_band(th, depth)
                })
                .collect();
            Cycle::polyline(pts)
        }
    }
}

/// Per-cycle labyrinth data at parameter N.
#[derive(Clone, Debug)]
pub struct CycleLabyrinth {
    pub band: f64,
    /// Parallel-curve spacing (band / (2 N^2)).
    pub step: f64,
    /// Number of parallel curves G_0..G_{2N^2}.
    pub n_curves: usize,
    /// Angular positions of the 2N division points.
    pub wall_angles: Vec<f64>,
    /// Cheap-corridor half-width around H (step / 4).
    pub tube: f64,
    /// Separation half-width delta(N) for the varpi neighborhoods (step / 8).
    pub delta_sep: f64,
    pub chart: CycleBand,
}

impl CycleLabyrinth {
    /// True when (theta, d) lies in Omega_N for this cycle.
    pub fn in_omega(&self, theta: f64, d: f64) -> bool {
        if d <= 0.0 || d >= self.band {
            return false;
        }
        self.dist_to_barrier(theta, d) >= self.tube
    }

    /// Flat distance from band point to H (rings plus active walls).
    pub fn dist_to_barrier(&self, theta: f64, d: f64) -> f64 {
        let ring = (d / self.step).round() * self.step;
        let mut best = (d - ring).abs();
        let gap = (d / self.step).floor() as i64;
        let r_here = self.chart.radius_at(theta);
        for (i, &wa) in self.wall_angles.iter().enumerate() {
            if (i as i64) % 2 == gap % 2 {
                let mut da = (theta - wa).abs() % (2.0 * std::f64::consts::PI);
                if da > std::f64::consts::PI {
                    da = 2.0 * std::f64::consts::PI - da;
                }
                best = best.min(da * r_here);
            }
        }
        best
    }

    /// True when the band point lies within delta(N) of omega_i (the wall
    /// strip of division point i plus its touching Omega components).
    pub fn in_varpi(&self, i: usize, theta: f64, d: f64) -> bool {
        let pad = self.delta_sep;
        if d < -pad || d > self.band + pad {
            return false;
        }
        let r_scale = self.chart.radius_at(theta);
        let wa = self.wall_angles[i];
        let mut da = (theta - wa).abs() % (2.0 * std::f64::consts::PI);
        if da > std::f64::consts::PI {
            da = 2.0 * std::f64::consts::PI - da;
        }
        let arc = da * r_scale;
        // the wall strip itself
        if arc <= pad {
            return true;
        }
        // touching Omega components: the wall crosses the middles of the
        // opposite-parity gaps, whose components span to the adjacent
        // barrier walls one spacing away
        let window = 2.0 * std::f64::consts::PI / self.wall_angles.len() as f64; // spacing
        if da >= window {
            return false;
        }
        let gap = (d / self.step).floor() as i64;
        if gap < 0 || d > self.band {
            return false;
        }
        if (i as i64) % 2 != gap % 2 {
            self.dist_to_barrier(theta, d) >= self.tube - pad
        } else {
            false
        }
    }

    /// Sample cloud of omega_i (wall segment plus touching Omega components).
    pub fn omega_cloud(&self, i: usize, per_gap: usize) -> Vec<Complex64> {
        let mut out = Vec::new();
        let wa = self.wall_angles[i];
        // wall segment
        let nseg = (2 * self.n_curves).min(512);
        for k in 0..=nseg {
            let d = self.band * k as f64 / nseg as f64;
            out.push(self.chart.from_band(wa, d));
        }
        // touching components live in the opposite-parity gaps
        let window = 2.0 * std::f64::consts::PI / self.wall_angles.len() as f64;
        let gaps = self.n_curves - 1;
        for gap in 0..gaps {
            if (i % 2) == (gap % 2) {
                continue;
            }
            let d = (gap as f64 + 0.5) * self.step;
            for k in 0..per_gap {
                let t = (k as f64 + 0.5) / per_gap as f64 * 2.0 - 1.0; // [-1, 1]
                let theta = wa + t * 0.9 * window;
                if self.in_omega(theta, d) {
                    out.push(self.chart.from_band(theta, d));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Labyrinth {
    pub n: usize,
    pub per_cycle: Vec<CycleLabyrinth>,
    /// Component count of Omega_N (by construction: 2 N^3 per cycle).
    pub omega_components: usize,
}

/// Build the labyrinth at parameter N: 2N division points per cycle,
/// 2N^2 + 1 parallel curves across a collar of width 2 scale / N with
/// spacing scale / N^3.
pub fn build_labyrinth(j: &MultiCycle, n: usize) -> Result<Labyrinth, DeformError> {
    assert!(n >= 2, "labyrinth needs N >= 2");
    let mut per_cycle = Vec::new();
    for ci in 0..j.cycles.len() {
        let chart = CycleBand::for_cycle(j, ci)?;
        let scale = chart.scale();
        // collar width 2 scale / N, capped at the cycle's clearance so the
        // per-cycle labyrinths stay disjoint
        let clearance = cycle_clearance(j, ci);
        let cap = if j.cycles.len() == 1 { 0.9 } else { 0.45 };
        let band = (2.0 * scale / n as f64).min(cap * clearance);
        if !(band > 0.0) || band < 1e-12 * scale {
            return Err(DeformError::NTooLargeForGeometry);
        }
        per_cycle.push(build_cycle_labyrinth(chart, band, n));
    }
    Ok(Labyrinth {
        n,
        per_cycle,
        omega_components: 2 * n * n * n * j.cycles.len(),
    })
}

/// Min distance from cycle ci to the other cycles (or its own scale when the
/// domain has a single boundary component).
fn cycle_clearance(j: &MultiCycle, ci: usize) -> f64 {
    if j.cycles.len() == 1 {
        return j.cycles[0].scale();
    }
    let mine = j.cycles[ci].vertices_complex();
    let mut best = f64::INFINITY;
    for (k, other) in j.cycles.iter().enumerate() {
        if k == ci {
            continue;
        }
        for &p in &mine {
            best = best.min(other.distance_to(p));
        }
    }
    best
}

/// Labyrinth over an explicit band width (used by the completeness step,
/// whose collar must fit inside the eps-offset).
pub fn build_labyrinth_banded(
    j: &MultiCycle,
    n: usize,
    band: f64,
    rings: usize,
) -> Result<Labyrinth, DeformError> {
    assert!(n >= 2 && rings >= 2);
    let mut per_cycle = Vec::new();
    for ci in 0..j.cycles.len() {
        let chart = CycleBand::for_cycle(j, ci)?;
        let mut lab = build_cycle_labyrinth(chart, band, n);
        // override the ring stack
        lab.n_curves = rings + 1;
        lab.step = band / rings as f64;
        lab.tube = lab.step / 4.0;
        lab.delta_sep = lab.step / 8.0;
        per_cycle.push(lab);
    }
    Ok(Labyrinth {
        n,
        per_cycle,
        omega_components: n * rings * j.cycles.len(),
    })
}

fn build_cycle_labyrinth(chart: CycleBand, band: f64, n: usize) -> CycleLabyrinth {
    let rings = 2 * n * n;
    let step = band / rings as f64;
    let wall_angles = (0..2 * n)
        .map(|i| 2.0 * std::f64::consts::PI * i as f64 / (2 * n) as f64)
        .collect();
    CycleLabyrinth {
        band,
        step,
        n_curves: rings + 1,
        wall_angles,
        tube: step / 4.0,
        delta_sep: step / 8.0,
        chart,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Weighting {
    /// c off Omega_N, c N^4 on Omega_N.
    Labyrinth,
    /// Uniform c (negative control).
    Uniform,
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossingReport {
    pub n: usize,
    pub c: f64,
    /// Per cycle: minimal weighted length of a crossing of the collar.
    pub min_lengths: Vec<f64>,
    /// min length / (c N), per cycle.
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
}

/// Minimal weighted length of curves crossing the labyrinth collar, by
/// Dijkstra on a structured band graph whose nodes sit on the parallel
/// curves (with wall tubes resolved exactly) and whose radial edges carry
/// the exact line integral of the piecewise-constant weight profile.
pub fn crossing_length_bound(
    lab: &Labyrinth,
    c: f64,
    weighting: Weighting,
) -> Result<CrossingReport, DeformError> {
    let boost = match weighting {
        Weighting::Labyrinth => c * (lab.n as f64).powi(4),
        Weighting::Uniform => c,
    };
    let mut min_lengths = Vec::new();
    for lc in &lab.per_cycle {
        min_lengths.push(cycle_crossing(lc, c, boost)?);
    }
    let ratios: Vec<f64> = min_lengths
        .iter()
        .map(|&l| l / (c * lab.n as f64))
        .collect();
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CrossingReport {
        n: lab.n,
        c,
        min_lengths,
        ratios,
        min_ratio,
    })
}

fn cycle_crossing(lc: &CycleLabyrinth, c: f64, boost: f64) -> Result<f64, DeformError> {
    let rings = lc.n_curves - 1;
    let r_scale = lc.chart.scale();
    // angular node set: uniform background plus wall tubes resolved
    let tube_ang = lc.tube / r_scale;
    let spacing = 2.0 * std::f64::consts::PI / lc.wall_angles.len() as f64;
    if tube_ang * 4.0 >= spacing {
        return Err(DeformError::GridTooCoarse);
    }
    let mut angles: Vec<f64> = Vec::new();
    let uniform = (lc.wall_angles.len() * 4).max(128);
    for k in 0..uniform {
        angles.push(2.0 * std::f64::consts::PI * k as f64 / uniform as f64);
    }
    for &wa in &lc.wall_angles {
        angles.push(wa);
        angles.push((wa - 0.9 * tube_ang).rem_euclid(2.0 * std::f64::consts::PI));
        angles.push((wa + 0.9 * tube_ang).rem_euclid(2.0 * std::f64::consts::PI));
    }
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let na = angles.len();
    let nr = lc.n_curves;
    let idx = |ring: usize, ai: usize| ring * na + ai;
    let nnodes = nr * na;
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); nnodes];
    // ring arcs (cheap corridors)
    for ring in 0..nr {
        let depth = ring as f64 * lc.step;
        for ai in 0..na {
            let aj = (ai + 1) % na;
            let mut da = angles[aj] - angles[ai];
            if aj == 0 {
                da += 2.0 * std::f64::consts::PI;
            }
            let r_here = if lc.chart.inward > 0.0 {
                lc.chart.radius_at(angles[ai]) - depth
            } else {
                lc.chart.radius_at(angles[ai]) + depth
            };
            let w = c * da * r_here.abs();
            adj[idx(ring, ai)].push((idx(ring, aj) as u32, w));
            adj[idx(ring, aj)].push((idx(ring, ai) as u32, w));
        }
    }
    // radial edges through each gap
    for ring in 0..rings {
        let gap = ring as i64;
        for (ai, &th) in angles.iter().enumerate() {
            // inside an active wall tube?
            let mut in_tube = false;
            for (i, &wa) in lc.wall_angles.iter().enumerate() {
                if (i as i64) % 2 != gap % 2 {
                    continue;
                }
                let mut da = (th - wa).abs() % (2.0 * std::f64::consts::PI);
                if da > std::f64::consts::PI {
                    da = 2.0 * std::f64::consts::PI - da;
                }
                if da * r_scale <= lc.tube * 0.95 {
                    in_tube = true;
                    break;
                }
            }
            let w = if in_tube {
                c * lc.step
            } else {
                // cheap within one tube of each bounding ring, boosted in
                // the middle
                c * 2.0 * lc.tube + boost * (lc.step - 2.0 * lc.tube)
            };
            adj[idx(ring, ai)].push((idx(ring + 1, ai) as u32, w));
            adj[idx(ring + 1, ai)].push((idx(ring, ai) as u32, w));
        }
    }
    // top ring (depth = band) to bottom ring (the cycle itself)
    let seeds: Vec<(usize, f64)> = (0..na).map(|ai| (idx(rings, ai), 0.0)).collect();
    let dist = grid_dijkstra(&adj, &seeds);
    let best = (0..na)
        .map(|ai| dist[idx(0, ai)])
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(DeformError::GridTooCoarse);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_multicycle;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_disk() -> MultiCycle {
        make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap()
    }

    #[test]
    fn counts_match_construction() {
        let lab = build_labyrinth(&unit_disk(), 4).unwrap();
        let lc = &lab.per_cycle[0];
        assert_eq!(lc.wall_angles.len(), 8);
        assert_eq!(lc.n_curves, 33);
        assert!((lc.step - 1.0 / 64.0).abs() < 1e-15);
        assert!((lc.band - 0.5).abs() < 1e-15);
    }

    #[test]
    fn n_too_small_for_division() {
        let j = unit_disk();
        // N = 1 is rejected by the precondition assert
        let result = std::panic::catch_unwind(|| build_labyrinth(&j, 1));
        assert!(result.is_err());
    }

    #[test]
    fn seed_multicycle_inner_circle_scaled_band() {
        // section-8 seed: inner circles r = 1/16; at N = 8 the band is
        // 2 r / N = r / 4, and everything stays disjoint
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 31.0 / 32.0),
            Cycle::circle(c64(0.0, 0.875), 0.0625),
            Cycle::circle(c64(0.0, -0.875), 0.0625),
        ])
        .unwrap();
        let lab = build_labyrinth(&j, 8).unwrap();
        let inner = &lab.per_cycle[1];
        // confined to an annulus of width at most 2 r / N = r / 4
        assert!(inner.band <= 2.0 * 0.0625 / 8.0 + 1e-15 && inner.band > 0.0);
        // varpi neighborhoods pairwise disjoint: sample points of one must
        // not be in another
        for i in 0..4 {
            let cloud = inner.omega_cloud(i, 16);
            assert!(!cloud.is_empty());
            for p in &cloud {
                let (th, d) = inner.chart.to_band(*p);
                assert!(inner.in_varpi(i, th, d));
                for i2 in 0..inner.wall_angles.len() {
                    if i2 != i {
                        assert!(
                            !inner.in_varpi(i2, th, d),
                            "point in varpi_{i} and varpi_{i2}"
                        );
                    }
                }
            }
        }
        // Omega points keep their clearance from the barrier
        let lc = &lab.per_cycle[1];
        for k in 0..200 {
            let th = 6.283 * (k as f64) / 200.0;
            let d = lc.band * 0.37;
            if lc.in_omega(th, d) {
                assert!(lc.dist_to_barrier(th, d) >= lc.tube - 1e-12);
            }
        }
    }

    #[test]
    fn crossing_grows_linearly_and_control_does_not() {
        let j = unit_disk();
        let mut ratios = Vec::new();
        for n in [6, 12] {
            let lab = build_labyrinth(&j, n).unwrap();
            let rep = crossing_length_bound(&lab, 1.0, Weighting::Labyrinth).unwrap();
            ratios.push(rep.min_ratio);
            // negative control: uniform weight crosses at the band width
            let ctl = crossing_length_bound(&lab, 1.0, Weighting::Uniform).unwrap();
            assert!(
                (ctl.min_lengths[0] - lab.per_cycle[0].band).abs() / lab.per_cycle[0].band
                    < 0.05,
                "uniform control {} vs band {}",
                ctl.min_lengths[0],
                lab.per_cycle[0].band
            );
        }
        assert!(ratios[0] > 0.0);
        let rel = (ratios[0] - ratios[1]).abs() / ratios[0];
        assert!(rel < 0.2, "ratios {ratios:?}");
    }

    #[test]
    fn doubling_c_doubles_length() {
        let lab = build_labyrinth(&unit_disk(), 6).unwrap();
        let r1 = crossing_length_bound(&lab, 1.0, Weighting::Labyrinth).unwrap();
        let r2 = crossing_length_bound(&lab, 2.0, Weighting::Labyrinth).unwrap();
        assert!(
            (r2.min_lengths[0] - 2.0 * r1.min_lengths[0]).abs() < 1e-9 * r1.min_lengths[0]
        );
    }

    #[test]
    fn radial_graph_polyline_chart() {
        // star-shaped polyline cycle
        let pts: Vec<Complex64> = (0..64)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                Complex64::from_polar(1.0 + 0.1 * (5.0 * th).sin(), th)
            })
            .collect();
        let j = make_multicycle(vec![Cycle::polyline(pts)]).unwrap();
        let chart = CycleBand::for_cycle(&j, 0).unwrap();
        let p = chart.from_band(1.0, 0.05);
        let (th, d) = chart.to_band(p);
        assert!((th - 1.0).abs() < 1e-9);
        assert!((d - 0.05).abs() < 1e-3);
    }
}
