//! Triangulated immersion samples.
//!
//! A mesh carries, per vertex, the domain parameter z, the immersion position
//! X(z) integrated along a spanning tree from the basepoint, and the
//! conformal factor lambda(z). Edge weights lambda * |dz| drive intrinsic
//! distance queries. The maximum loop-closure residual over non-tree edges
//! certifies that the real periods vanish at mesh scale.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use crate::domain::{cx, Cycle, CycleKind, MultiCycle};
use crate::error::MeshError;
use crate::quad::{integrate_segment3, QuadOpts};
use crate::weierstrass::WeierstrassData;

#[derive(Clone, Debug, Serialize)]
pub struct MeshVertex {
    pub z: [f64; 2],
    pub pos: [f64; 3],
    pub lambda: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshEdge {
    pub a: u32,
    pub b: u32,
    pub flat_len: f64,
    pub lambda_mid: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImmersionMesh {
    pub vertices: Vec<MeshVertex>,
    pub triangles: Vec<[u32; 3]>,
    pub edges: Vec<MeshEdge>,
    /// Max over non-tree edges of the position mismatch around loops.
    pub loop_residual: f64,
}

impl ImmersionMesh {
    pub fn vertex_z(&self, i: u32) -> Complex64 {
        Complex64::new(self.vertices[i as usize].z[0], self.vertices[i as usize].z[1])
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.vertices.iter().map(|v| v.pos).collect()
    }

    /// Indices of vertices within tol of the given cycle.
    pub fn vertices_near_cycle(&self, cycle: &Cycle, tol: f64) -> Vec<u32> {
        (0..self.vertices.len() as u32)
            .filter(|&i| cycle.distance_to(self.vertex_z(i)) <= tol)
            .collect()
    }

    pub fn nearest_vertex(&self, z: Complex64) -> u32 {
        let mut best = (f64::INFINITY, 0u32);
        for i in 0..self.vertices.len() as u32 {
            let d = (self.vertex_z(i) - z).norm();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    pub fn min_lambda(&self) -> f64 {
        self.vertices.iter().map(|v| v.lambda).fold(f64::INFINITY, f64::min)
    }
}

/// Extra interior points with local sizing, for graded refinement near
/// small features.
#[derive(Clone, Debug, Default)]
pub struct MeshSeeds {
    pub points: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug)]
pub struct MeshOpts {
    pub quad: QuadOpts,
    /// Loop-closure certification threshold (informational; stored residual
    /// is always measured).
    pub loop_tol: f64,
}

impl Default for MeshOpts {
    fn default() -> Self {
        MeshOpts {
            quad: QuadOpts::default(),
            loop_tol: 1e-8,
        }
    }
}

/// Constrained triangulation of M(J) at the given pitch, with immersion
/// positions along a BFS spanning tree from the basepoint.
pub fn sample_mesh(
    w: &WeierstrassData,
    j: &MultiCycle,
    pitch: f64,
    seeds: &MeshSeeds,
    opts: &MeshOpts,
) -> Result<ImmersionMesh, MeshError> {
    assert!(pitch > 0.0, "pitch must be positive");
    for p in w.declared_poles() {
        if j.contains_with_margin(p, pitch * 0.5) {
            return Err(MeshError::PoleInDomain);
        }
    }
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::new();
    let insert = |p: Complex64,
                      cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>|
     -> Result<spade::handles::FixedVertexHandle, MeshError> {
        cdt.insert(Point2::new(p.re, p.im))
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))
    };
    // boundary loops as constraint edges
    for cyc in &j.cycles {
        let pts = discretize_cycle(cyc, pitch);
        let handles: Vec<_> = pts
            .iter()
            .map(|&p| insert(p, &mut cdt))
            .collect::<Result<_, _>>()?;
        for k in 0..handles.len() {
            let a = handles[k];
            let b = handles[(k + 1) % handles.len()];
            if a != b && cdt.can_add_constraint(a, b) {
                cdt.add_constraint(a, b);
            }
        }
    }
    // basepoint
    let p0 = w.basepoint();
    if j.contains(p0) {
        insert(p0, &mut cdt)?;
    }
    // interior grid points, kept clear of the boundary
    let (lo, hi) = j.bbox();
    let nx = ((hi.re - lo.re) / pitch).ceil() as i64 + 1;
    let ny = ((hi.im - lo.im) / pitch).ceil() as i64 + 1;
    for iy in 0..=ny {
        for ix in 0..=nx {
            let p = Complex64::new(
                lo.re + ix as f64 * pitch + (iy % 2) as f64 * pitch * 0.5,
                lo.im + iy as f64 * pitch * 0.866,
            );
            if j.contains_with_margin(p, pitch * 0.45) {
                insert(p, &mut cdt)?;
            }
        }
    }
    for &p in &seeds.points {
        if j.contains_with_margin(p, 0.0) {
            insert(p, &mut cdt)?;
        }
    }

    // harvest vertices and interior triangles
    let nverts = cdt.num_vertices();
    let mut zs: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); nverts];
    for v in cdt.vertices() {
        let p = v.position();
        zs[v.fix().index()] = Complex64::new(p.x, p.y);
    }
    let mut triangles = Vec::new();
    let mut used = vec![false; nverts];
    for f in cdt.inner_faces() {
        let vs = f.vertices();
        let tri = [
            vs[0].fix().index() as u32,
            vs[1].fix().index() as u32,
            vs[2].fix().index() as u32,
        ];
        let centroid =
            (zs[tri[0] as usize] + zs[tri[1] as usize] + zs[tri[2] as usize]) / 3.0;
        if j.contains(centroid) {
            triangles.push(tri);
            for &t in &tri {
                used[t as usize] = true;
            }
        }
    }
    // compact the vertex set
    let mut remap = vec![u32::MAX; nverts];
    let mut kept_z = Vec::new();
    for (i, &u) in used.iter().enumerate() {
        if u {
            remap[i] = kept_z.len() as u32;
            kept_z.push(zs[i]);
        }
    }
    for t in triangles.iter_mut() {
        for k in 0..3 {
            t[k] = remap[t[k] as usize];
        }
    }
    let n = kept_z.len();
    if n == 0 {
        return Ok(ImmersionMesh {
            vertices: vec![],
            triangles: vec![],
            edges: vec![],
            loop_residual: 0.0,
        });
    }

    // unique undirected edges
    let mut edge_set = std::collections::HashSet::new();
    let mut edges_raw: Vec<(u32, u32)> = Vec::new();
    for t in &triangles {
        for &(a, b) in &[(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = if a < b { (a, b) } else { (b, a) };
            if edge_set.insert(key) {
                edges_raw.push(key);
            }
        }
    }

    // evaluate lambda and integrate Phi along each edge
    let mut tape = w.compile_phi();
    let lambdas: Vec<f64> = kept_z.iter().map(|&z| tape.lambda(z)).collect();
    let mut adj: Vec<Vec<(u32, usize)>> = vec![Vec::new(); n];
    let mut edge_integrals: Vec<[f64; 3]> = Vec::with_capacity(edges_raw.len());
    let mut edges = Vec::with_capacity(edges_raw.len());
    for (ei, &(a, b)) in edges_raw.iter().enumerate() {
        let (za, zb) = (kept_z[a as usize], kept_z[b as usize]);
        let mut f = |z: Complex64| tape.eval(z);
        let seg = integrate_segment3(&mut f, za, zb, opts.quad)
            .map_err(|_| MeshError::Triangulation("edge quadrature failed".into()))?;
        edge_integrals.push([seg[0].re, seg[1].re, seg[2].re]);
        let lambda_mid = tape.lambda((za + zb) * 0.5);
        edges.push(MeshEdge {
            a,
            b,
            flat_len: (zb - za).norm(),
            lambda_mid,
        });
        adj[a as usize].push((b, ei));
        adj[b as usize].push((a, ei));
    }

    // BFS spanning tree from the vertex nearest the basepoint
    let root = kept_z
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            (*a - p0)
                .norm()
                .partial_cmp(&(*b - p0).norm())
                .unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let mut pos = vec![[f64::NAN; 3]; n];
    // anchor: X(root) = Re int from p0 to root_z (straight segment)
    let mut f = |z: Complex64| tape.eval(z);
    let anchor = integrate_segment3(&mut f, p0, kept_z[root], opts.quad)
        .map_err(|_| MeshError::Triangulation("anchor quadrature failed".into()))?;
    pos[root] = [anchor[0].re, anchor[1].re, anchor[2].re];
    let mut in_tree = vec![false; edges_raw.len()];
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root as u32]);
    while let Some(vi) = queue.pop_front() {
        for &(wj, ei) in &adj[vi as usize] {
            if !seen[wj as usize] {
                seen[wj as usize] = true;
                in_tree[ei] = true;
                let sgn = if edges_raw[ei].0 == vi { 1.0 } else { -1.0 };
                for k in 0..3 {
                    pos[wj as usize][k] = pos[vi as usize][k] + sgn * edge_integrals[ei][k];
                }
                queue.push_back(wj);
            }
        }
    }
    // loop closure on non-tree edges
    let mut loop_residual: f64 = 0.0;
    for (ei, &(a, b)) in edges_raw.iter().enumerate() {
        if in_tree[ei] || !seen[a as usize] || !seen[b as usize] {
            continue;
        }
        let mut r: f64 = 0.0;
        for k in 0..3 {
            r += (pos[b as usize][k] - pos[a as usize][k] - edge_integrals[ei][k]).powi(2);
        }
        loop_residual = loop_residual.max(r.sqrt());
    }

    let vertices = kept_z
        .iter()
        .zip(pos.iter())
        .zip(lambdas.iter())
        .map(|((&z, &p), &l)| MeshVertex {
            z: [z.re, z.im],
            pos: p,
            lambda: l,
        })
        .collect();
    Ok(ImmersionMesh {
        vertices,
        triangles,
        edges,
        loop_residual,
    })
}

fn discretize_cycle(cyc: &Cycle, pitch: f64) -> Vec<Complex64> {
    match &cyc.kind {
        CycleKind::Circle { c, r } => {
            let n = ((2.0 * std::f64::consts::PI * r / pitch).ceil() as usize).max(16);
            (0..n)
                .map(|k| {
                    let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                    cx(*c) + Complex64::from_polar(*r, t)
                })
                .collect()
        }
        CycleKind::Polyline { vertices } => {
            let mut out = Vec::new();
            let n = vertices.len();
            for i in 0..n {
                let a = cx(vertices[i]);
                let b = cx(vertices[(i + 1) % n]);
                let len = (b - a).norm();
                let segs = (len / pitch).ceil().max(1.0) as usize;
                for k in 0..segs {
                    out.push(a + (b - a) * (k as f64 / segs as f64));
                }
            }
            out
        }
    }
}

/// Dijkstra distance between vertex sets under lambda * |dz| edge weights.
pub fn intrinsic_distance(
    mesh: &ImmersionMesh,
    src: &[u32],
    dst: &[u32],
) -> Result<f64, MeshError> {
    if src.is_empty() || dst.is_empty() {
        return Err(MeshError::DisconnectedMesh);
    }
    let n = mesh.vertices.len();
    let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for e in &mesh.edges {
        let w = e.lambda_mid * e.flat_len;
        adj[e.a as usize].push((e.b, w));
        adj[e.b as usize].push((e.a, w));
    }
    let seeds: Vec<(usize, f64)> = src.iter().map(|&s| (s as usize, 0.0)).collect();
    let dist = crate::domain::grid_dijkstra(&adj, &seeds);
    let d = dst
        .iter()
        .map(|&t| dist[t as usize])
        .fold(f64::INFINITY, f64::min);
    if !d.is_finite() {
        return Err(MeshError::DisconnectedMesh);
    }
    Ok(d)
}

/// X at an arbitrary domain point: nearest mesh vertex plus a straight
/// correction integral.
pub fn position_at(
    w: &WeierstrassData,
    mesh: &ImmersionMesh,
    z: Complex64,
    opts: &MeshOpts,
) -> Result<[f64; 3], MeshError> {
    let v = mesh.nearest_vertex(z);
    let zv = mesh.vertex_z(v);
    let mut tape = w.compile_phi();
    let mut f = |q: Complex64| tape.eval(q);
    let seg = integrate_segment3(&mut f, zv, z, opts.quad)
        .map_err(|_| MeshError::Triangulation("correction quadrature failed".into()))?;
    let p = mesh.vertices[v as usize].pos;
    Ok([p[0] + seg[0].re, p[1] + seg[1].re, p[2] + seg[2].re])
}

#[derive(Clone, Copy, Debug)]
pub enum MeshFormat {
    Obj,
    Ply,
}

/// ASCII OBJ (v/f) or PLY with per-vertex quality = lambda. Byte
/// deterministic for a given mesh.
pub fn export_mesh(mesh: &ImmersionMesh, format: MeshFormat, path: &Path) -> Result<(), MeshError> {
    let mut out = String::new();
    match format {
        MeshFormat::Obj => {
            for v in &mesh.vertices {
                out.push_str(&format!(
                    "v {:.9e} {:.9e} {:.9e}\n",
                    v.pos[0], v.pos[1], v.pos[2]
                ));
            }
            for t in &mesh.triangles {
                out.push_str(&format!("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1));
            }
        }
        MeshFormat::Ply => {
            out.push_str("ply\nformat ascii 1.0\n");
            out.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
            out.push_str("property float x\nproperty float y\nproperty float z\nproperty float quality\n");
            out.push_str(&format!("element face {}\n", mesh.triangles.len()));
            out.push_str("property list uchar int vertex_indices\nend_header\n");
            for v in &mesh.vertices {
                out.push_str(&format!(
                    "{:.9e} {:.9e} {:.9e} {:.9e}\n",
                    v.pos[0], v.pos[1], v.pos[2], v.lambda
                ));
            }
            for t in &mesh.triangles {
                out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{make_multicycle, Cycle};
    use crate::weierstrass::seeds;

    fn c64(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit_disk() -> MultiCycle {
        make_multicycle(vec![Cycle::circle(c64(0.0, 0.0), 1.0)]).unwrap()
    }

    #[test]
    fn flat_disk_positions_match_formula() {
        let w = seeds::flat_disk();
        let j = unit_disk();
        let mesh = sample_mesh(&w, &j, 1.0 / 16.0, &MeshSeeds::default(), &MeshOpts::default())
            .unwrap();
        assert!(mesh.vertices.len() > 200);
        for v in &mesh.vertices {
            assert!((v.pos[0] - v.z[0]).abs() < 1e-9);
            assert!((v.pos[1] + v.z[1]).abs() < 1e-9);
            assert!(v.pos[2].abs() < 1e-9);
            assert!((v.lambda - 1.0).abs() < 1e-12);
        }
        assert!(mesh.loop_residual < 1e-10);
    }

    #[test]
    fn pitch_refinement_consistent() {
        let w = seeds::enneper();
        let j = unit_disk();
        let coarse =
            sample_mesh(&w, &j, 0.2, &MeshSeeds::default(), &MeshOpts::default()).unwrap();
        let fine = sample_mesh(&w, &j, 0.1, &MeshSeeds::default(), &MeshOpts::default()).unwrap();
        // positions at shared parameters agree: compare a few coarse vertices
        // against position_at on the fine mesh
        for i in (0..coarse.vertices.len()).step_by(37) {
            let z = coarse.vertex_z(i as u32);
            let p = position_at(&w, &fine, z, &MeshOpts::default()).unwrap();
            for k in 0..3 {
                assert!((p[k] - coarse.vertices[i].pos[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn catenoid_annulus_loop_closure() {
        let w = seeds::catenoid();
        let j = make_multicycle(vec![
            Cycle::circle(c64(0.0, 0.0), 1.4),
            Cycle::circle(c64(0.0, 0.0), 0.45),
        ])
        .unwrap();
        let mesh =
            sample_mesh(&w, &j, 0.05, &MeshSeeds::default(), &MeshOpts::default()).unwrap();
        assert!(
            mesh.loop_residual < 1e-8,
            "loop residual {}",
            mesh.loop_residual
        );
        for v in &mesh.vertices {
            assert!(v.lambda > 0.0);
        }
    }

    #[test]
    fn pole_inside_domain_rejected() {
        let w = seeds::catenoid(); // pole at 0
        let j = unit_disk();
        assert!(matches!(
            sample_mesh(&w, &j, 0.1, &MeshSeeds::default(), &MeshOpts::default()),
            Err(MeshError::PoleInDomain)
        ));
    }

    #[test]
    fn intrinsic_distance_flat_disk() {
        let w = seeds::flat_disk();
        let j = unit_disk();
        let mesh = sample_mesh(&w, &j, 1.0 / 64.0, &MeshSeeds::default(), &MeshOpts::default())
            .unwrap();
        let center = vec![mesh.nearest_vertex(c64(0.0, 0.0))];
        let boundary = mesh.vertices_near_cycle(&j.cycles[0], 1e-6);
        assert!(!boundary.is_empty());
        let d = intrinsic_distance(&mesh, &center, &boundary).unwrap();
        assert!((d - 1.0).abs() < 0.03, "d = {d}");
        // src = dst: zero
        let d0 = intrinsic_distance(&mesh, &center, &center).unwrap();
        assert_eq!(d0, 0.0);
    }

    #[test]
    fn export_round_trips() {
        let w = seeds::flat_disk();
        let j = unit_disk();
        let mesh = sample_mesh(&w, &j, 0.2, &MeshSeeds::default(), &MeshOpts::default()).unwrap();
        let dir = std::env::temp_dir();
        let obj = dir.join("minlab_test_mesh.obj");
        let ply = dir.join("minlab_test_mesh.ply");
        export_mesh(&mesh, MeshFormat::Obj, &obj).unwrap();
        export_mesh(&mesh, MeshFormat::Ply, &ply).unwrap();
        let obj_text = std::fs::read_to_string(&obj).unwrap();
        let f_count = obj_text.lines().filter(|l| l.starts_with("f ")).count();
        assert_eq!(f_count, mesh.triangles.len());
        let ply_text = std::fs::read_to_string(&ply).unwrap();
        assert!(ply_text.contains(&format!("element vertex {}", mesh.vertices.len())));
        // empty mesh still writes a valid file
        let empty = ImmersionMesh {
            vertices: vec![],
            triangles: vec![],
            edges: vec![],
            loop_residual: 0.0,
        };
        export_mesh(&empty, MeshFormat::Obj, &obj).unwrap();
        assert_eq!(std::fs::read_to_string(&obj).unwrap(), "");
        let _ = std::fs::remove_file(obj);
        let _ = std::fs::remove_file(ply);
    }
}
