//! Shortest-path length in M(J) under the flat |dz| metric, computed on an
//! 8-connected grid graph with obstacle disks removed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

use super::MultiCycle;
use crate::error::DomainError;

#[derive(Copy, Clone, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}
impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.partial_cmp(&self.cost).unwrap_or(Ordering::Equal)
    }
}
impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over an adjacency list; returns per-node distance from the seeds.
pub fn grid_dijkstra(adj: &[Vec<(u32, f64)>], seeds: &[(usize, f64)]) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    for &(s, d0) in seeds {
        if d0 < dist[s] {
            dist[s] = d0;
            heap.push(State { cost: d0, node: s });
        }
    }
    while let Some(State { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            let nc = cost + w;
            if nc < dist[next as usize] {
                dist[next as usize] = nc;
                heap.push(State {
                    cost: nc,
                    node: next as usize,
                });
            }
        }
    }
    dist
}

/// Flat intrinsic distance between p and q in M(J), on a grid of pitch h.
///
/// The estimate is an upper bound that decreases as the pitch is refined
/// (up to the usual 8-connectivity anisotropy) and is never below |p - q|.
pub fn flat_distance(
    j: &MultiCycle,
    p: Complex64,
    q: Complex64,
    h: f64,
) -> Result<f64, DomainError> {
    assert!(h > 0.0, "grid pitch must be positive");
    let tol = 1e-9 * j.diameter().max(1.0);
    if !j.contains_with_margin(p, -tol) || !j.contains_with_margin(q, -tol) {
        return Err(DomainError::PointOutsideDomain);
    }
    if (p - q).norm() == 0.0 {
        return Ok(0.0);
    }
    // straight-line fast path
    if segment_inside(j, p, q) {
        return Ok((p - q).norm());
    }

    let (lo, hi) = j.bbox();
    let pad = 2.0 * h;
    let nx = (((hi.re - lo.re) + 2.0 * pad) / h).ceil() as usize + 1;
    let ny = (((hi.im - lo.im) + 2.0 * pad) / h).ceil() as usize + 1;
    let origin = Complex64::new(lo.re - pad, lo.im - pad);
    let n = nx * ny;
    let pos = |i: usize| -> Complex64 {
        Complex64::new(
            origin.re + (i % nx) as f64 * h,
            origin.im + (i / nx) as f64 * h,
        )
    };
    let mut inside = vec![false; n];
    for i in 0..n {
        inside[i] = j.contains(pos(i));
    }
    let idx = |x: usize, y: usize| y * nx + x;
    let diag = h * std::f64::consts::SQRT_2;
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n + 2];
    for y in 0..ny {
        for x in 0..nx {
            let i = idx(x, y);
            if !inside[i] {
                continue;
            }
            let push = |x2: isize, y2: isize, w: f64, adj: &mut Vec<Vec<(u32, f64)>>| {
                if x2 < 0 || y2 < 0 || x2 as usize >= nx || y2 as usize >= ny {
                    return;
                }
                let k = idx(x2 as usize, y2 as usize);
                if inside[k] {
                    adj[i].push((k as u32, w));
                }
            };
            push(x as isize + 1, y as isize, h, &mut adj);
            push(x as isize - 1, y as isize, h, &mut adj);
            push(x as isize, y as isize + 1, h, &mut adj);
            push(x as isize, y as isize - 1, h, &mut adj);
            push(x as isize + 1, y as isize + 1, diag, &mut adj);
            push(x as isize + 1, y as isize - 1, diag, &mut adj);
            push(x as isize - 1, y as isize + 1, diag, &mut adj);
            push(x as isize - 1, y as isize - 1, diag, &mut adj);
        }
    }
    // endpoint nodes n (=p) and n+1 (=q), linked to nearby grid nodes by
    // straight in-domain segments
    let link = |endpoint: Complex64, node: usize, adj: &mut Vec<Vec<(u32, f64)>>| {
        let cx = ((endpoint.re - origin.re) / h).round() as isize;
        let cy = ((endpoint.im - origin.im) / h).round() as isize;
        let mut linked = false;
        for r in 0..=3isize {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 || x as usize >= nx || y as usize >= ny {
                        continue;
                    }
                    let k = idx(x as usize, y as usize);
                    if inside[k] && segment_inside(j, endpoint, pos(k)) {
                        let w = (endpoint - pos(k)).norm();
                        adj[node].push((k as u32, w));
                        adj[k].push((node as u32, w));
                        linked = true;
                    }
                }
            }
            if linked && r >= 1 {
                break;
            }
        }
        linked
    };
    let mut adj = adj;
    if !link(p, n, &mut adj) || !link(q, n + 1, &mut adj) {
        return Err(DomainError::PointOutsideDomain);
    }
    let dist = grid_dijkstra(&adj, &[(n, 0.0)]);
    let d = dist[n + 1];
    if !d.is_finite() {
        return Err(DomainError::PointOutsideDomain);
    }
    Ok(d.max((p - q).norm()))
}

fn segment_inside(j: &MultiCycle, a: Complex64, b: Complex64) -> bool {
    let steps = 48;
    let tol = -1e-12 * j.diameter().max(1.0);
    (0..=steps).all(|k| {
        let t = k as f64 / steps as f64;
        j.contains_with_margin(a + (b - a) * t, tol)
    })
}

/// A polyline from p to q inside M(J): the straight segment when it fits,
/// otherwise a shortcut-smoothed grid path.
pub fn flat_path(
    j: &MultiCycle,
    p: Complex64,
    q: Complex64,
    h: f64,
) -> Result<Vec<Complex64>, DomainError> {
    if segment_inside(j, p, q) {
        return Ok(vec![p, q]);
    }
    let (lo, hi) = j.bbox();
    let pad = 2.0 * h;
    let nx = (((hi.re - lo.re) + 2.0 * pad) / h).ceil() as usize + 1;
    let ny = (((hi.im - lo.im) + 2.0 * pad) / h).ceil() as usize + 1;
    let origin = Complex64::new(lo.re - pad, lo.im - pad);
    let n = nx * ny;
    let pos = |i: usize| -> Complex64 {
        Complex64::new(
            origin.re + (i % nx) as f64 * h,
            origin.im + (i / nx) as f64 * h,
        )
    };
    // margin keeps grid nodes clear of the boundary so path segments between
    // adjacent nodes stay inside
    let margin = h * 0.75;
    let inside: Vec<bool> = (0..n).map(|i| j.contains_with_margin(pos(i), margin)).collect();
    let idx = |x: usize, y: usize| y * nx + x;
    let diag = h * std::f64::consts::SQRT_2;
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n + 2];
    for y in 0..ny {
        for x in 0..nx {
            let i = idx(x, y);
            if !inside[i] {
                continue;
            }
            for (dx, dy, w) in [
                (1isize, 0isize, h),
                (0, 1, h),
                (1, 1, diag),
                (1, -1, diag),
            ] {
                let (x2, y2) = (x as isize + dx, y as isize + dy);
                if x2 < 0 || y2 < 0 || x2 as usize >= nx || y2 as usize >= ny {
                    continue;
                }
                let k = idx(x2 as usize, y2 as usize);
                if inside[k] {
                    adj[i].push((k as u32, w));
                    adj[k].push((i as u32, w));
                }
            }
        }
    }
    let link = |endpoint: Complex64, node: usize, adj: &mut Vec<Vec<(u32, f64)>>| -> bool {
        let cx = ((endpoint.re - origin.re) / h).round() as isize;
        let cy = ((endpoint.im - origin.im) / h).round() as isize;
        let mut linked = false;
        for r in 0..=4isize {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) != r {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 || x as usize >= nx || y as usize >= ny {
                        continue;
                    }
                    let k = idx(x as usize, y as usize);
                    if inside[k] && segment_inside(j, endpoint, pos(k)) {
                        let w = (endpoint - pos(k)).norm();
                        adj[node].push((k as u32, w));
                        adj[k].push((node as u32, w));
                        linked = true;
                    }
                }
            }
            if linked && r >= 1 {
                break;
            }
        }
        linked
    };
    if !link(p, n, &mut adj) || !link(q, n + 1, &mut adj) {
        return Err(DomainError::PointOutsideDomain);
    }
    let dist = grid_dijkstra(&adj, &[(n, 0.0)]);
    if !dist[n + 1].is_finite() {
        return Err(DomainError::PointOutsideDomain);
    }
    // reconstruct by greedy descent
    let mut path = vec![q];
    let mut cur = n + 1;
    let mut guard = 0;
    while cur != n {
        let mut best = (f64::INFINITY, cur);
        for &(nb, w) in &adj[cur] {
            let cand = dist[nb as usize] + w;
            if (cand - dist[cur]).abs() < 1e-9 * (1.0 + dist[cur]) && dist[nb as usize] < best.0 {
                best = (dist[nb as usize], nb as usize);
            }
        }
        if best.1 == cur {
            return Err(DomainError::PointOutsideDomain);
        }
        cur = best.1;
        path.push(if cur == n { p } else { pos(cur) });
        guard += 1;
        if guard > n {
            return Err(DomainError::PointOutsideDomain);
        }
    }
    path.reverse();
    // string pulling: drop waypoints while the shortcut segment stays inside
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut k = path.len() - 1;
        while k > i + 1 && !segment_inside(j, path[i], path[k]) {
            k -= 1;
        }
        out.push(path[k]);
        i = k;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_multicycle, Cycle};

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn straight_segment_is_euclidean() {
        let j = make_multicycle(vec![Cycle::circle(c64(0.5, 0.0), 2.0)]).unwrap();
        let d = flat_distance(&j, c64(0.0, 0.0), c64(1.0, 0.0), 0.02).unwrap();
        assert!((d - 1.0).abs() / 1.0 < 0.02, "d = {d}");
    }

    #[test]
    fn identical_points_have_zero_distance() {
        let j = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap();
        assert_eq!(flat_distance(&j, c64(0.2, 0.1), c64(0.2, 0.1), 0.05).unwrap(), 0.0);
    }

    #[test]
    fn outside_point_rejected() {
        let j = make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap();
        assert!(flat_distance(&j, c64(2.0, 0.0), c64(0.0, 0.0), 0.05).is_err());
    }

    #[test]
    fn path_detours_around_obstacle_disk() {
        // independent oracle: same computation at pitch h/4
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 1.0),
            Cycle::circle(c64(0.0, 0.0), 0.1),
        ])
        .unwrap();
        let p = c64(-0.2, 0.0);
        let q = c64(0.2, 0.0);
        let h = 0.02;
        let coarse = flat_distance(&j, p, q, h).unwrap();
        let fine = flat_distance(&j, p, q, h / 4.0).unwrap();
        assert!(coarse >= (p - q).norm());
        assert!((coarse - fine).abs() / fine < 0.02, "coarse {coarse} fine {fine}");
        // taut path around a disk of radius 0.1 between (-0.2,0) and (0.2,0):
        // two tangent legs plus the wrapped arc
        let r: f64 = 0.1;
        let leg = (0.04f64 - r * r).sqrt();
        let wrap = r * (std::f64::consts::PI - 2.0 * (r / 0.2f64).acos());
        let taut = 2.0 * leg + wrap;
        // 8-connectivity overestimates oblique paths by at most sec(pi/8)
        assert!(fine >= taut * 0.999, "fine {fine} taut {taut}");
        assert!(fine <= taut * 1.0824 * 1.01, "fine {fine} taut {taut}");
    }

    #[test]
    fn triangle_inequality_within_grid_tolerance() {
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 1.0),
            Cycle::circle(c64(0.3, 0.2), 0.15),
        ])
        .unwrap();
        let h = 0.025;
        let pts = [c64(-0.5, -0.3), c64(0.6, 0.4), c64(0.0, -0.7)];
        let d01 = flat_distance(&j, pts[0], pts[1], h).unwrap();
        let d12 = flat_distance(&j, pts[1], pts[2], h).unwrap();
        let d02 = flat_distance(&j, pts[0], pts[2], h).unwrap();
        assert!(d02 <= d01 + d12 + 2.0 * h);
    }
}
