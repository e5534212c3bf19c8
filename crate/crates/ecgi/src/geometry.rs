//! Parametric 2D torso–heart geometry.
//!
//! The computational domain is the region between a circular heart (the
//! epicardium) and a circular torso boundary, optionally with circular lung
//! inclusions that are tagged per element. Meshes are built from structured
//! polar rings, jittered, relaxed and made Delaunay by edge flips.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Torso,
    Lung,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    Heart,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disk {
    pub center: Point,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Point, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: Point) -> bool {
        dist(p, self.center) < self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    pub region: Region,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
}

/// Conforming triangulation of the torso minus the heart.
///
/// The torso circle is centered at the origin; the heart circle at
/// `heart_center`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    pub vertices: Vec<Point>,
    pub triangles: Vec<Triangle>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub outer_radius: f64,
    pub heart_radius: f64,
    pub heart_center: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    pub outer_radius: f64,
    pub heart_radius: f64,
    pub heart_center: Point,
    pub lung_disks: Vec<Disk>,
    pub target_h: f64,
    pub seed: u64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            outer_radius: 10.0,
            heart_radius: 3.0,
            heart_center: [-0.5, 0.0],
            lung_disks: vec![Disk::new([5.5, 1.0], 2.2), Disk::new([-5.5, 2.5], 2.0)],
            target_h: 2.0 * PI * 3.0 / 64.0,
            seed: 0,
        }
    }
}

/// Closed polyline discretizing the epicardium.
///
/// Segment `k` joins local nodes `k` and `k + 1 (mod n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh1D {
    pub vertex_ids: Vec<usize>,
    pub points: Vec<Point>,
    pub segment_lengths: Vec<f64>,
    pub tangents: Vec<Point>,
    pub normals: Vec<Point>,
}

impl SurfaceMesh1D {
    /// Builds the segment data for a closed loop of points.
    pub fn from_loop(vertex_ids: Vec<usize>, points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        if n < 3 || vertex_ids.len() != n {
            return Err(Error::Topology(format!(
                "closed curve needs >= 3 nodes, got {n}"
            )));
        }
        let mut segment_lengths = Vec::with_capacity(n);
        let mut tangents = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for k in 0..n {
            let a = points[k];
            let b = points[(k + 1) % n];
            let len = dist(a, b);
            if !(len > 0.0) {
                return Err(Error::Topology(format!("degenerate segment {k}")));
            }
            let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            segment_lengths.push(len);
            tangents.push(t);
            normals.push([t[1], -t[0]]);
        }
        Ok(Self {
            vertex_ids,
            points,
            segment_lengths,
            tangents,
            normals,
        })
    }

    /// Regular polygon inscribed in a circle, starting at angle zero.
    pub fn circle(center: Point, radius: f64, n: usize) -> Result<Self> {
        let points = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
            })
            .collect();
        Self::from_loop((0..n).collect(), points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.segment_lengths.iter().sum()
    }

    /// Endpoints (local indices) of segment `k`.
    pub fn segment(&self, k: usize) -> (usize, usize) {
        (k, (k + 1) % self.len())
    }
}

/// Disjoint electrode patches on the torso boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeSet {
    /// Indices into `Mesh2D::boundary_edges`, ordered along the boundary.
    pub patches: Vec<Vec<usize>>,
    pub patch_lengths: Vec<f64>,
}

impl ElectrodeSet {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn angle_of(p: Point, center: Point) -> f64 {
    (p[1] - center[1])
        .atan2(p[0] - center[0])
        .rem_euclid(2.0 * PI)
}

impl Mesh2D {
    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let v = self.triangles[t].vertices;
        [
            self.vertices[v[0]],
            self.vertices[v[1]],
            self.vertices[v[2]],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Unique undirected edges as sorted vertex pairs.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut e: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| {
                let v = t.vertices;
                [[v[0], v[1]], [v[1], v[2]], [v[2], v[0]]]
            })
            .map(|[a, b]| [a.min(b), a.max(b)])
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                min_angle_of(a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest element diameter (longest edge).
    pub fn max_diameter(&self) -> f64 {
        self.edges()
            .iter()
            .map(|&[a, b]| dist(self.vertices[a], self.vertices[b]))
            .fold(0.0, f64::max)
    }

    pub fn vertices_with_marker(&self, marker: BoundaryMarker) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.marker == marker)
            .flat_map(|e| e.vertices)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Checks every structural invariant of the triangulation.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.vertices.iter().any(|&v| v >= nv) {
                return Err(Error::Topology(format!(
                    "triangle {t} references a missing vertex"
                )));
            }
            if !(self.triangle_area(t) > 0.0) {
                return Err(Error::MeshQuality(format!(
                    "triangle {t} is not positively oriented"
                )));
            }
        }

        let mut count: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            let v = tri.vertices;
            for (a, b) in [(v[0], v[1]), (v[1], v[2]), (v[2], v[0])] {
                *count.entry([a.min(b), a.max(b)]).or_default() += 1;
            }
        }
        let mut boundary: HashMap<[usize; 2], BoundaryMarker> = HashMap::new();
        for e in &self.boundary_edges {
            let [a, b] = e.vertices;
            if boundary.insert([a.min(b), a.max(b)], e.marker).is_some() {
                return Err(Error::Topology(format!(
                    "boundary edge {a}-{b} listed twice"
                )));
            }
        }
        for (edge, &c) in &count {
            let on_boundary = boundary.contains_key(edge);
            match (c, on_boundary) {
                (2, false) | (1, true) => {}
                _ => {
                    return Err(Error::Topology(format!(
                        "edge {edge:?} shared by {c} triangles (boundary: {on_boundary})"
                    )))
                }
            }
        }
        if boundary.keys().any(|e| !count.contains_key(e)) {
            return Err(Error::Topology("boundary edge not in any triangle".into()));
        }

        let tol_h = 1e-12 * self.heart_radius;
        for v in self.vertices_with_marker(BoundaryMarker::Heart) {
            let r = dist(self.vertices[v], self.heart_center);
            if (r - self.heart_radius).abs() > tol_h {
                return Err(Error::MeshQuality(format!(
                    "heart vertex {v} off circle by {:.3e}",
                    r - self.heart_radius
                )));
            }
        }
        let tol_o = 1e-12 * self.outer_radius;
        for v in self.vertices_with_marker(BoundaryMarker::Outer) {
            let r = dist(self.vertices[v], [0.0, 0.0]);
            if (r - self.outer_radius).abs() > tol_o {
                return Err(Error::MeshQuality(format!(
                    "outer vertex {v} off circle by {:.3e}",
                    r - self.outer_radius
                )));
            }
        }
        let min_angle = self.min_angle_deg();
        if min_angle < 20.0 {
            return Err(Error::MeshQuality(format!(
                "minimum angle {min_angle:.2} deg < 20 deg"
            )));
        }
        Ok(())
    }
}

fn check_config(cfg: &MeshConfig) -> Result<()> {
    if !(cfg.target_h > 0.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "targetH must be positive, got {}",
            cfg.target_h
        )));
    }
    if !(cfg.heart_radius > 0.0) || !(cfg.outer_radius > 0.0) {
        return Err(Error::ParameterOutOfRange("radii must be positive".into()));
    }
    let origin = [0.0, 0.0];
    if dist(cfg.heart_center, origin) + cfg.heart_radius >= cfg.outer_radius {
        return Err(Error::GeometryOverlap(
            "heart disk is not strictly inside the torso".into(),
        ));
    }
    for (i, lung) in cfg.lung_disks.iter().enumerate() {
        if !(lung.radius > 0.0) {
            return Err(Error::ParameterOutOfRange(format!(
                "lung {i} radius must be positive"
            )));
        }
        if dist(lung.center, origin) + lung.radius >= cfg.outer_radius {
            return Err(Error::GeometryOverlap(format!(
                "lung {i} is not inside the torso"
            )));
        }
        if dist(lung.center, cfg.heart_center) <= lung.radius + cfg.heart_radius {
            return Err(Error::GeometryOverlap(format!(
                "lung {i} intersects the heart"
            )));
        }
    }
    Ok(())
}

/// Triangulates the band between two closed rings by advancing along the
/// ring with the smaller next angle.
fn zip_rings(
    inner: &[usize],
    inner_angles: &[f64],
    outer: &[usize],
    outer_angles: &[f64],
    vertices: &[Point],
    out: &mut Vec<[usize; 3]>,
) {
    let (na, nb) = (inner.len(), outer.len());
    let a0 = inner_angles[0];
    // outer start: nearest angle to a0
    let j0 = (0..nb)
        .min_by(|&p, &q| {
            let dp = ((outer_angles[p] - a0 + PI).rem_euclid(2.0 * PI) - PI).abs();
            let dq = ((outer_angles[q] - a0 + PI).rem_euclid(2.0 * PI) - PI).abs();
            dp.total_cmp(&dq)
        })
        .unwrap();
    let b0 = a0 + ((outer_angles[j0] - a0 + PI).rem_euclid(2.0 * PI) - PI);
    let ang_a = |i: usize| a0 + 2.0 * PI * i as f64 / na as f64;
    let ang_b = |j: usize| b0 + 2.0 * PI * j as f64 / nb as f64;

    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let advance_inner = if i == na {
            false
        } else if j == nb {
            true
        } else {
            ang_a(i + 1) < ang_b(j + 1)
        };
        let ai = inner[i % na];
        let bj = outer[(j0 + j) % nb];
        let tri = if advance_inner {
            let an = inner[(i + 1) % na];
            i += 1;
            [ai, an, bj]
        } else {
            let bn = outer[(j0 + j + 1) % nb];
            j += 1;
            [ai, bn, bj]
        };
        let t = if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
            [tri[0], tri[2], tri[1]]
        } else {
            tri
        };
        out.push(t);
    }
}

fn in_circumcircle(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (adx, ady) = (a[0] - d[0], a[1] - d[1]);
    let (bdx, bdy) = (b[0] - d[0], b[1] - d[1]);
    let (cdx, cdy) = (c[0] - d[0], c[1] - d[1]);
    let det = (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        - (bdx * bdx + bdy * bdy) * (adx * cdy - cdx * ady)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady);
    let scale =
        (adx * adx + ady * ady) * (bdx * bdx + bdy * bdy).sqrt() * (cdx * cdx + cdy * cdy).sqrt();
    det > 1e-12 * scale
}

/// Lawson edge flips until every interior edge is locally Delaunay.
fn delaunay_flips(vertices: &[Point], tris: &mut [[usize; 3]]) {
    for _ in 0..200 {
        let mut owner: HashMap<(usize, usize), usize> = HashMap::with_capacity(tris.len() * 3);
        for (t, v) in tris.iter().enumerate() {
            for k in 0..3 {
                owner.insert((v[k], v[(k + 1) % 3]), t);
            }
        }
        let mut touched = vec![false; tris.len()];
        let mut flipped = 0;
        for t1 in 0..tris.len() {
            if touched[t1] {
                continue;
            }
            for k in 0..3 {
                let v = tris[t1];
                let (a, b, c) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                let Some(&t2) = owner.get(&(b, a)) else {
                    continue;
                };
                if touched[t2] || touched[t1] {
                    continue;
                }
                let w = tris[t2];
                let d = w.iter().copied().find(|&x| x != a && x != b).unwrap();
                if in_circumcircle(vertices[a], vertices[b], vertices[c], vertices[d]) {
                    let n1 = [a, d, c];
                    let n2 = [d, b, c];
                    if signed_area(vertices[a], vertices[d], vertices[c]) > 0.0
                        && signed_area(vertices[d], vertices[b], vertices[c]) > 0.0
                    {
                        tris[t1] = n1;
                        tris[t2] = n2;
                        touched[t1] = true;
                        touched[t2] = true;
                        flipped += 1;
                        break;
                    }
                }
            }
        }
        if flipped == 0 {
            break;
        }
    }
}

struct RingMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    fixed: Vec<bool>,
}

impl RingMesh {
    fn relax(&mut self, target_h: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amp = 0.1 * target_h;
        for (p, &fixed) in self.vertices.iter_mut().zip(&self.fixed) {
            if !fixed {
                let r = amp * rng.random::<f64>().sqrt();
                let t = 2.0 * PI * rng.random::<f64>();
                p[0] += r * t.cos();
                p[1] += r * t.sin();
            }
        }

        let n = self.vertices.len();
        delaunay_flips(&self.vertices, &mut self.triangles);
        for _ in 0..16 {
            let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
            for t in &self.triangles {
                for k in 0..3 {
                    let (a, b) = (t[k], t[(k + 1) % 3]);
                    nbrs[a].push(b);
                    nbrs[b].push(a);
                }
            }
            for l in &mut nbrs {
                l.sort_unstable();
                l.dedup();
            }
            let prev = self.vertices.clone();
            for v in 0..n {
                if self.fixed[v] || nbrs[v].is_empty() {
                    continue;
                }
                let k = nbrs[v].len() as f64;
                let mean = nbrs[v].iter().fold([0.0, 0.0], |acc, &w| {
                    [acc[0] + prev[w][0] / k, acc[1] + prev[w][1] / k]
                });
                self.vertices[v] = [
                    0.5 * prev[v][0] + 0.5 * mean[0],
                    0.5 * prev[v][1] + 0.5 * mean[1],
                ];
            }
            delaunay_flips(&self.vertices, &mut self.triangles);
        }
        for _ in 0..4 {
            self.optimize_stars(target_h);
            delaunay_flips(&self.vertices, &mut self.triangles);
        }
    }

    /// Moves free vertices with poorly shaped stars to the best of a few
    /// nearby candidate positions.
    fn optimize_stars(&mut self, target_h: f64) {
        let n = self.vertices.len();
        let mut star: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (t, v) in self.triangles.iter().enumerate() {
            for &k in v {
                star[k].push(t);
            }
        }
        let star_quality = |verts: &[Point], tris: &[[usize; 3]], ts: &[usize]| -> f64 {
            ts.iter()
                .map(|&t| {
                    let [a, b, c] = tris[t].map(|v| verts[v]);
                    if signed_area(a, b, c) <= 0.0 {
                        return -1.0;
                    }
                    min_angle_of(a, b, c)
                })
                .fold(f64::INFINITY, f64::min)
        };
        for v in 0..n {
            if self.fixed[v] || star[v].is_empty() {
                continue;
            }
            let base = star_quality(&self.vertices, &self.triangles, &star[v]);
            if base >= 30.0 {
                continue;
            }
            let origin = self.vertices[v];
            let mut best = (base, origin);
            let step = 0.05 * target_h;
            for ring in 1..=4 {
                for dir in 0..12 {
                    let t = 2.0 * PI * dir as f64 / 12.0;
                    let r = step * ring as f64;
                    self.vertices[v] = [origin[0] + r * t.cos(), origin[1] + r * t.sin()];
                    let q = star_quality(&self.vertices, &self.triangles, &star[v]);
                    if q > best.0 {
                        best = (q, self.vertices[v]);
                    }
                }
            }
            self.vertices[v] = best.1;
        }
    }
}

fn min_angle_of(a: Point, b: Point, c: Point) -> f64 {
    let p = [a, b, c];
    (0..3)
        .map(|k| {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * w[0] + u[1] * w[1]) / (dist(a, b) * dist(a, c));
            cos.clamp(-1.0, 1.0).acos().to_degrees()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Generates the torso–heart triangulation.
pub fn build_torso_mesh(cfg: &MeshConfig) -> Result<Mesh2D> {
    check_config(cfg)?;
    let h = cfg.target_h;
    let c = cfg.heart_center;
    let (r_h, r_o) = (cfg.heart_radius, cfg.outer_radius);
    let ring_point = |s: f64, t: f64| {
        let (ct, st) = (t.cos(), t.sin());
        [
            (1.0 - s) * (c[0] + r_h * ct) + s * r_o * ct,
            (1.0 - s) * (c[1] + r_h * st) + s * r_o * st,
        ]
    };
    let max_gap = (0..720)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / 720.0;
            dist(ring_point(0.0, t), ring_point(1.0, t))
        })
        .fold(0.0, f64::max);
    let n_rings = ((max_gap / (0.866 * h)).ceil() as usize).max(1);

    let mut vertices = Vec::new();
    let mut rings: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for k in 0..=n_rings {
        let s = k as f64 / n_rings as f64;
        let length: f64 = (0..512)
            .map(|q| {
                let t0 = 2.0 * PI * q as f64 / 512.0;
                let t1 = 2.0 * PI * (q + 1) as f64 / 512.0;
                dist(ring_point(s, t0), ring_point(s, t1))
            })
            .sum();
        let count = ((length / h).ceil() as usize).max(3);
        let phase = if k % 2 == 1 { 0.5 } else { 0.0 };
        let mut ids = Vec::with_capacity(count);
        let mut angles = Vec::with_capacity(count);
        for i in 0..count {
            let t = 2.0 * PI * (i as f64 + phase) / count as f64;
            let mut p = ring_point(s, t);
            if k == 0 {
                p = [c[0] + r_h * t.cos(), c[1] + r_h * t.sin()];
            } else if k == n_rings {
                p = [r_o * t.cos(), r_o * t.sin()];
            }
            ids.push(vertices.len());
            angles.push(t);
            vertices.push(p);
        }
        rings.push((ids, angles));
    }

    let mut triangles = Vec::new();
    for k in 0..n_rings {
        zip_rings(
            &rings[k].0,
            &rings[k].1,
            &rings[k + 1].0,
            &rings[k + 1].1,
            &vertices,
            &mut triangles,
        );
    }
    let mut fixed = vec![false; vertices.len()];
    for &v in rings[0].0.iter().chain(&rings[n_rings].0) {
        fixed[v] = true;
    }
    let mut rm = RingMesh {
        vertices,
        triangles,
        fixed,
    };
    rm.relax(h, cfg.seed);

    let mut boundary_edges = Vec::new();
    for (ring, marker) in [
        (&rings[0].0, BoundaryMarker::Heart),
        (&rings[n_rings].0, BoundaryMarker::Outer),
    ] {
        for i in 0..ring.len() {
            boundary_edges.push(BoundaryEdge {
                vertices: [ring[i], ring[(i + 1) % ring.len()]],
                marker,
            });
        }
    }
    let triangles = rm
        .triangles
        .iter()
        .map(|&v| {
            let cen = [
                (rm.vertices[v[0]][0] + rm.vertices[v[1]][0] + rm.vertices[v[2]][0]) / 3.0,
                (rm.vertices[v[0]][1] + rm.vertices[v[1]][1] + rm.vertices[v[2]][1]) / 3.0,
            ];
            let region = if cfg.lung_disks.iter().any(|d| d.contains(cen)) {
                Region::Lung
            } else {
                Region::Torso
            };
            Triangle {
                vertices: v,
                region,
            }
        })
        .collect();

    let mesh = Mesh2D {
        vertices: rm.vertices,
        triangles,
        boundary_edges,
        outer_radius: r_o,
        heart_radius: r_h,
        heart_center: c,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Triangulates a full disk; the rim is marked [`BoundaryMarker::Heart`].
///
/// `rim_nodes` fixes the number of boundary vertices; the interior spacing
/// follows from it.
pub fn build_disk_mesh(center: Point, radius: f64, rim_nodes: usize, seed: u64) -> Result<Mesh2D> {
    if rim_nodes < 6 || !(radius > 0.0) {
        return Err(Error::ParameterOutOfRange(
            "disk mesh needs radius > 0 and >= 6 rim nodes".into(),
        ));
    }
    let h = 2.0 * PI * radius / rim_nodes as f64;
    let n_rings = ((radius / (0.866 * h)).round() as usize).max(1);
    let mut vertices = vec![center];
    let mut rings: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
    for k in 1..=n_rings {
        let r = radius * k as f64 / n_rings as f64;
        let count = if k == n_rings {
            rim_nodes
        } else {
            ((2.0 * PI * r / h).round() as usize).max(6)
        };
        let phase = if (n_rings - k) % 2 == 1 { 0.5 } else { 0.0 };
        let mut ids = Vec::with_capacity(count);
        let mut angles = Vec::with_capacity(count);
        for i in 0..count {
            let t = 2.0 * PI * (i as f64 + phase) / count as f64;
            ids.push(vertices.len());
            angles.push(t);
            vertices.push([center[0] + r * t.cos(), center[1] + r * t.sin()]);
        }
        rings.push((ids, angles));
    }
    let mut triangles = Vec::new();
    let first = &rings[0].0;
    for i in 0..first.len() {
        triangles.push([0, first[i], first[(i + 1) % first.len()]]);
    }
    for k in 0..n_rings - 1 {
        zip_rings(
            &rings[k].0,
            &rings[k].1,
            &rings[k + 1].0,
            &rings[k + 1].1,
            &vertices,
            &mut triangles,
        );
    }
    let rim = rings[n_rings - 1].0.clone();
    let mut fixed = vec![false; vertices.len()];
    for &v in &rim {
        fixed[v] = true;
    }
    let mut rm = RingMesh {
        vertices,
        triangles,
        fixed,
    };
    rm.relax(h, seed);
    let boundary_edges = (0..rim.len())
        .map(|i| BoundaryEdge {
            vertices: [rim[i], rim[(i + 1) % rim.len()]],
            marker: BoundaryMarker::Heart,
        })
        .collect();
    let mesh = Mesh2D {
        vertices: rm.vertices,
        triangles: rm
            .triangles
            .into_iter()
            .map(|vertices| Triangle {
                vertices,
                region: Region::Torso,
            })
            .collect(),
        boundary_edges,
        outer_radius: radius,
        heart_radius: radius,
        heart_center: center,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Ordered counterclockwise loop of the heart boundary vertices.
pub fn extract_epicardial_curve(mesh: &Mesh2D) -> Result<SurfaceMesh1D> {
    let heart: Vec<[usize; 2]> = mesh
        .boundary_edges
        .iter()
        .filter(|e| e.marker == BoundaryMarker::Heart)
        .map(|e| e.vertices)
        .collect();
    if heart.len() < 3 {
        return Err(Error::Topology(format!(
            "need >= 3 heart edges, found {}",
            heart.len()
        )));
    }
    let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
    for &[a, b] in &heart {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    if let Some((v, n)) = adj.iter().find(|(_, n)| n.len() != 2) {
        return Err(Error::Topology(format!(
            "heart vertex {v} has {} boundary neighbours",
            n.len()
        )));
    }
    let c = mesh.heart_center;
    let start = *adj
        .keys()
        .min_by(|&&p, &&q| {
            angle_of(mesh.vertices[p], c)
                .total_cmp(&angle_of(mesh.vertices[q], c))
                .then(p.cmp(&q))
        })
        .unwrap();
    let mut order = vec![start];
    let mut prev = start;
    let mut cur = adj[&start][0];
    while cur != start {
        if order.len() > adj.len() {
            return Err(Error::Topology("heart boundary walk did not close".into()));
        }
        order.push(cur);
        let next = if adj[&cur][0] == prev {
            adj[&cur][1]
        } else {
            adj[&cur][0]
        };
        prev = cur;
        cur = next;
    }
    if order.len() != adj.len() {
        return Err(Error::Topology(format!(
            "heart edges form more than one loop ({} of {} vertices reached)",
            order.len(),
            adj.len()
        )));
    }
    let area: f64 = (0..order.len())
        .map(|k| {
            signed_area(
                c,
                mesh.vertices[order[k]],
                mesh.vertices[order[(k + 1) % order.len()]],
            )
        })
        .sum();
    if area < 0.0 {
        order[1..].reverse();
    }
    let points = order.iter().map(|&v| mesh.vertices[v]).collect();
    SurfaceMesh1D::from_loop(order, points)
}

/// Equal-width electrode patches centered at uniformly spaced angles.
pub fn define_electrodes(
    mesh: &Mesh2D,
    n_electrodes: usize,
    coverage: f64,
) -> Result<ElectrodeSet> {
    if n_electrodes == 0 || !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "need nElectrodes >= 1 and coverage in (0, 1], got {n_electrodes}, {coverage}"
        )));
    }
    let outer: Vec<usize> = (0..mesh.boundary_edges.len())
        .filter(|&e| mesh.boundary_edges[e].marker == BoundaryMarker::Outer)
        .collect();
    if outer.len() < 2 * n_electrodes {
        return Err(Error::InsufficientResolution(format!(
            "{} outer edges for {n_electrodes} electrodes",
            outer.len()
        )));
    }
    let edge_angle = |e: usize| {
        let [a, b] = mesh.boundary_edges[e].vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        angle_of([(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0], [0.0, 0.0])
    };
    let width = 2.0 * PI * coverage / n_electrodes as f64;
    let mut patches = Vec::with_capacity(n_electrodes);
    let mut patch_lengths = Vec::with_capacity(n_electrodes);
    for i in 0..n_electrodes {
        let center = 2.0 * PI * i as f64 / n_electrodes as f64;
        let lo = center - width / 2.0;
        let mut members: Vec<(f64, usize)> = outer
            .iter()
            .map(|&e| ((edge_angle(e) - lo).rem_euclid(2.0 * PI), e))
            .filter(|&(off, _)| off < width)
            .collect();
        if members.is_empty() {
            return Err(Error::InsufficientResolution(format!(
                "electrode {i} contains no boundary edge"
            )));
        }
        members.sort_by(|p, q| p.0.total_cmp(&q.0));
        let edges: Vec<usize> = members.into_iter().map(|(_, e)| e).collect();
        let len = edges
            .iter()
            .map(|&e| {
                let [a, b] = mesh.boundary_edges[e].vertices;
                dist(mesh.vertices[a], mesh.vertices[b])
            })
            .sum();
        patches.push(edges);
        patch_lengths.push(len);
    }
    Ok(ElectrodeSet {
        patches,
        patch_lengths,
    })
}

/// Red refinement: every triangle is split into four through its edge
/// midpoints; boundary midpoints are projected onto their circles.
pub fn refine_uniform(mesh: &Mesh2D) -> Result<Mesh2D> {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    let markers: HashMap<[usize; 2], BoundaryMarker> = mesh
        .boundary_edges
        .iter()
        .map(|e| {
            let [a, b] = e.vertices;
            ([a.min(b), a.max(b)], e.marker)
        })
        .collect();

    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = [a.min(b), a.max(b)];
        *midpoint.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            let mut m = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0];
            match markers.get(&key) {
                Some(BoundaryMarker::Heart) => {
                    let c = mesh.heart_center;
                    let r = dist(m, c);
                    m = [
                        c[0] + mesh.heart_radius * (m[0] - c[0]) / r,
                        c[1] + mesh.heart_radius * (m[1] - c[1]) / r,
                    ];
                }
                Some(BoundaryMarker::Outer) => {
                    let r = dist(m, [0.0, 0.0]);
                    m = [mesh.outer_radius * m[0] / r, mesh.outer_radius * m[1] / r];
                }
                None => {}
            }
            vertices.push(m);
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for tri in &mesh.triangles {
        let [a, b, c] = tri.vertices;
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        for v in [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]] {
            triangles.push(Triangle {
                vertices: v,
                region: tri.region,
            });
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.vertices;
        let m = mid(a, b, &mut vertices);
        boundary_edges.push(BoundaryEdge {
            vertices: [a, m],
            marker: e.marker,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [m, b],
            marker: e.marker,
        });
    }
    let refined = Mesh2D {
        vertices,
        triangles,
        boundary_edges,
        outer_radius: mesh.outer_radius,
        heart_radius: mesh.heart_radius,
        heart_center: mesh.heart_center,
    };
    refined.validate()?;
    Ok(refined)
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Torso => "TORSO",
        Region::Lung => "LUNG",
    }
}

fn marker_name(m: BoundaryMarker) -> &'static str {
    match m {
        BoundaryMarker::Heart => "HEART",
        BoundaryMarker::Outer => "OUTER",
    }
}

/// Serializes the mesh (and optional electrodes) in the `mesh2d v1` text format.
pub fn write_mesh_text(mesh: &Mesh2D, electrodes: Option<&ElectrodeSet>) -> String {
    let mut s = String::new();
    s.push_str("mesh2d v1\n");
    let _ = writeln!(s, "vertices {}", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let [i, j, k] = t.vertices;
        let _ = writeln!(s, "{i} {j} {k} {}", region_name(t.region));
    }
    let _ = writeln!(s, "boundary {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [i, j] = e.vertices;
        let _ = writeln!(s, "{i} {j} {}", marker_name(e.marker));
    }
    let patches = electrodes.map(|e| e.patches.as_slice()).unwrap_or(&[]);
    let _ = writeln!(s, "electrodes {}", patches.len());
    for p in patches {
        let idx: Vec<String> = p.iter().map(|e| e.to_string()).collect();
        let _ = writeln!(s, "{} {}", p.len(), idx.join(" "));
    }
    s
}

/// Algebraic least-squares circle through points lying on one circle.
fn fit_circle(points: &[Point]) -> Option<(Point, f64)> {
    use nalgebra::{Matrix3, Vector3};
    if points.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let row = Vector3::new(p[0], p[1], 1.0);
        ata += row * row.transpose();
        atb += row * -(p[0] * p[0] + p[1] * p[1]);
    }
    let sol = ata.lu().solve(&atb)?;
    let c = [-sol[0] / 2.0, -sol[1] / 2.0];
    let r = (c[0] * c[0] + c[1] * c[1] - sol[2]).sqrt();
    // polish with the mean distance, exact for points on the circle
    let r_mean = points.iter().map(|&p| dist(p, c)).sum::<f64>() / points.len() as f64;
    Some((c, if r.is_finite() { r_mean } else { r }))
}

/// Parses the `mesh2d v1` text format; circle data is recovered from the
/// boundary vertices.
pub fn parse_mesh_text(text: &str) -> Result<(Mesh2D, Option<ElectrodeSet>)> {
    let bad = |m: &str| Error::Format(format!("mesh2d: {m}"));
    let all: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    if all.first() != Some(&"mesh2d v1") {
        return Err(bad("missing header"));
    }
    let mut pos = 1usize;
    let header = |name: &str, pos: &mut usize| -> Result<usize> {
        let line = all.get(*pos).ok_or_else(|| bad("unexpected end"))?;
        *pos += 1;
        let mut it = line.split_whitespace();
        if it.next() != Some(name) {
            return Err(bad(&format!("expected block '{name}', got '{line}'")));
        }
        it.next()
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| bad(&format!("bad count in '{line}'")))
    };
    let fields = |pos: &mut usize| -> Result<Vec<&str>> {
        let line = all.get(*pos).ok_or_else(|| bad("unexpected end"))?;
        *pos += 1;
        Ok(line.split_whitespace().collect())
    };
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(&format!("bad number '{s}'"))) };
    let idx =
        |s: &str| -> Result<usize> { s.parse().map_err(|_| bad(&format!("bad index '{s}'"))) };

    let nv = header("vertices", &mut pos)?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let f = fields(&mut pos)?;
        if f.len() != 2 {
            return Err(bad("vertex line needs 2 fields"));
        }
        vertices.push([num(f[0])?, num(f[1])?]);
    }
    let nt = header("triangles", &mut pos)?;
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let f = fields(&mut pos)?;
        if f.len() != 4 {
            return Err(bad("triangle line needs 4 fields"));
        }
        let region = match f[3] {
            "TORSO" => Region::Torso,
            "LUNG" => Region::Lung,
            other => return Err(bad(&format!("unknown region '{other}'"))),
        };
        triangles.push(Triangle {
            vertices: [idx(f[0])?, idx(f[1])?, idx(f[2])?],
            region,
        });
    }
    let nb = header("boundary", &mut pos)?;
    let mut boundary_edges = Vec::with_capacity(nb);
    for _ in 0..nb {
        let f = fields(&mut pos)?;
        if f.len() != 3 {
            return Err(bad("boundary line needs 3 fields"));
        }
        let marker = match f[2] {
            "HEART" => BoundaryMarker::Heart,
            "OUTER" => BoundaryMarker::Outer,
            other => return Err(bad(&format!("unknown marker '{other}'"))),
        };
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(f[0])?, idx(f[1])?],
            marker,
        });
    }
    let ne = header("electrodes", &mut pos)?;
    let mut patches = Vec::with_capacity(ne);
    for _ in 0..ne {
        let f = fields(&mut pos)?;
        let n = idx(f.first().copied().unwrap_or(""))?;
        if f.len() != n + 1 {
            return Err(bad("electrode run length mismatch"));
        }
        patches.push(f[1..].iter().map(|s| idx(s)).collect::<Result<Vec<_>>>()?);
    }

    let mut mesh = Mesh2D {
        vertices,
        triangles,
        boundary_edges,
        outer_radius: 0.0,
        heart_radius: 0.0,
        heart_center: [0.0, 0.0],
    };
    let heart_pts: Vec<Point> = mesh
        .vertices_with_marker(BoundaryMarker::Heart)
        .iter()
        .map(|&v| mesh.vertices[v])
        .collect();
    let outer_pts: Vec<Point> = mesh
        .vertices_with_marker(BoundaryMarker::Outer)
        .iter()
        .map(|&v| mesh.vertices[v])
        .collect();
    if let Some((c, r)) = fit_circle(&heart_pts) {
        mesh.heart_center = c;
        mesh.heart_radius = r;
    }
    if !outer_pts.is_empty() {
        mesh.outer_radius =
            outer_pts.iter().map(|&p| dist(p, [0.0, 0.0])).sum::<f64>() / outer_pts.len() as f64;
    } else {
        mesh.outer_radius = mesh.heart_radius;
    }
    let electrodes = if patches.is_empty() {
        None
    } else {
        let patch_lengths = patches
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&e| {
                        let [a, b] = mesh.boundary_edges[e].vertices;
                        dist(mesh.vertices[a], mesh.vertices[b])
                    })
                    .sum()
            })
            .collect();
        Some(ElectrodeSet {
            patches,
            patch_lengths,
        })
    };
    Ok((mesh, electrodes))
}

pub fn write_mesh(path: &Path, mesh: &Mesh2D, electrodes: Option<&ElectrodeSet>) -> Result<()> {
    std::fs::write(path, write_mesh_text(mesh, electrodes))?;
    Ok(())
}

pub fn read_mesh(path: &Path) -> Result<(Mesh2D, Option<ElectrodeSet>)> {
    parse_mesh_text(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(h: f64) -> MeshConfig {
        MeshConfig {
            outer_radius: 3.0,
            heart_radius: 1.0,
            heart_center: [0.0, 0.0],
            lung_disks: vec![],
            target_h: h,
            seed: 7,
        }
    }

    #[test]
    fn annulus_without_lungs_is_all_torso() {
        let m = build_torso_mesh(&plain(0.3)).unwrap();
        assert!(m.triangles.iter().all(|t| t.region == Region::Torso));
        assert!(!m.vertices_with_marker(BoundaryMarker::Heart).is_empty());
        assert!(!m.vertices_with_marker(BoundaryMarker::Outer).is_empty());
        assert!(m.max_diameter() <= 1.5 * 0.3);
    }

    #[test]
    fn halving_h_quadruples_vertices() {
        let a = build_torso_mesh(&plain(0.3)).unwrap().vertices.len() as f64;
        let b = build_torso_mesh(&plain(0.15)).unwrap().vertices.len() as f64;
        let ratio = b / a;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn lung_overlapping_heart_is_rejected() {
        let mut cfg = plain(0.3);
        cfg.lung_disks.push(Disk::new([1.2, 0.0], 0.5));
        assert!(matches!(
            build_torso_mesh(&cfg),
            Err(Error::GeometryOverlap(_))
        ));
    }

    #[test]
    fn heart_outside_torso_is_rejected() {
        let mut cfg = plain(0.3);
        cfg.heart_center = [2.5, 0.0];
        assert!(matches!(
            build_torso_mesh(&cfg),
            Err(Error::GeometryOverlap(_))
        ));
    }

    #[test]
    fn lungs_are_tagged_by_centroid() {
        let cfg = MeshConfig::default();
        let m = build_torso_mesh(&cfg).unwrap();
        for t in 0..m.triangles.len() {
            let inside = cfg.lung_disks.iter().any(|d| d.contains(m.centroid(t)));
            assert_eq!(inside, m.triangles[t].region == Region::Lung);
        }
        assert!(m.triangles.iter().any(|t| t.region == Region::Lung));
    }

    #[test]
    fn offset_heart_mesh_is_valid() {
        let mut cfg = plain(0.25);
        cfg.heart_center = [0.6, -0.3];
        let m = build_torso_mesh(&cfg).unwrap();
        m.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let a = build_torso_mesh(&MeshConfig::default()).unwrap();
        let b = build_torso_mesh(&MeshConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn curve_perimeter_close_to_circle() {
        let m = build_torso_mesh(&plain(1.0 / 20.0)).unwrap();
        let c = extract_epicardial_curve(&m).unwrap();
        let rel = (c.perimeter() - 2.0 * PI).abs() / (2.0 * PI);
        assert!(rel < 0.02, "{rel}");
        // counterclockwise and closed
        let area: f64 = (0..c.len())
            .map(|k| signed_area(m.heart_center, c.points[k], c.points[(k + 1) % c.len()]))
            .sum();
        assert!(area > 0.0);
        for k in 0..c.len() {
            let (t, n) = (c.tangents[k], c.normals[k]);
            assert!((t[0] * n[0] + t[1] * n[1]).abs() < 1e-12);
            assert!(((t[0].powi(2) + t[1].powi(2)).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_heart_edge_is_a_topology_error() {
        let mut m = build_torso_mesh(&plain(0.3)).unwrap();
        let k = m
            .boundary_edges
            .iter()
            .position(|e| e.marker == BoundaryMarker::Heart)
            .unwrap();
        m.boundary_edges.remove(k);
        assert!(matches!(
            extract_epicardial_curve(&m),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn perimeter_error_decreases_under_refinement() {
        let m0 = build_torso_mesh(&plain(0.4)).unwrap();
        let m1 = refine_uniform(&m0).unwrap();
        let m2 = refine_uniform(&m1).unwrap();
        let errs: Vec<f64> = [&m0, &m1, &m2]
            .iter()
            .map(|m| (2.0 * PI - extract_epicardial_curve(m).unwrap().perimeter()).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn single_full_electrode_covers_boundary() {
        let m = build_torso_mesh(&plain(0.3)).unwrap();
        let e = define_electrodes(&m, 1, 1.0).unwrap();
        let n_outer = m
            .boundary_edges
            .iter()
            .filter(|e| e.marker == BoundaryMarker::Outer)
            .count();
        assert_eq!(e.patches[0].len(), n_outer);
    }

    #[test]
    fn electrode_patches_are_disjoint_with_expected_coverage() {
        let m = build_torso_mesh(&plain(0.1)).unwrap();
        let e = define_electrodes(&m, 32, 0.8).unwrap();
        assert_eq!(e.len(), 32);
        let mut all: Vec<usize> = e.patches.iter().flatten().copied().collect();
        let n = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), n);
        let total: f64 = e.patch_lengths.iter().sum();
        let expected = 0.8 * 2.0 * PI * 3.0;
        assert!(
            (total - expected).abs() / expected < 0.05,
            "{total} vs {expected}"
        );
        for p in &e.patches {
            for w in p.windows(2) {
                // contiguous: consecutive edges share a vertex
                let a = m.boundary_edges[w[0]].vertices;
                let b = m.boundary_edges[w[1]].vertices;
                assert!(a.iter().any(|v| b.contains(v)));
            }
        }
    }

    #[test]
    fn too_many_electrodes_is_insufficient_resolution() {
        let m = build_torso_mesh(&plain(0.5)).unwrap();
        let n_outer = m
            .boundary_edges
            .iter()
            .filter(|e| e.marker == BoundaryMarker::Outer)
            .count();
        assert!(matches!(
            define_electrodes(&m, n_outer + 1, 0.9),
            Err(Error::InsufficientResolution(_))
        ));
    }

    #[test]
    fn refinement_counts_and_snapping() {
        let m = build_torso_mesh(&plain(0.4)).unwrap();
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.triangles.len(), 4 * m.triangles.len());
        assert_eq!(r.vertices.len(), m.vertices.len() + m.edges().len());
        let rr = refine_uniform(&r).unwrap();
        assert_eq!(rr.vertices.len(), r.vertices.len() + r.edges().len());
        // Euler: V - E + F = 0 for the annulus (two boundary loops)
        for mesh in [&m, &r, &rr] {
            let euler = mesh.vertices.len() as i64 - mesh.edges().len() as i64
                + mesh.triangles.len() as i64;
            assert_eq!(euler, 0);
        }
        for v in rr.vertices_with_marker(BoundaryMarker::Heart) {
            assert!((dist(rr.vertices[v], rr.heart_center) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn mesh_text_round_trip() {
        let m = build_torso_mesh(&MeshConfig::default()).unwrap();
        let e = define_electrodes(&m, 16, 0.9).unwrap();
        let text = write_mesh_text(&m, Some(&e));
        let (back, be) = parse_mesh_text(&text).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(be.unwrap().patches, e.patches);
        assert!((back.heart_radius - m.heart_radius).abs() < 1e-9);
        assert!(dist(back.heart_center, m.heart_center) < 1e-9);
    }

    #[test]
    fn disk_mesh_is_valid() {
        let m = build_disk_mesh([0.3, -0.2], 2.0, 96, 1).unwrap();
        let c = extract_epicardial_curve(&m).unwrap();
        assert_eq!(c.len(), 96);
    }
}
