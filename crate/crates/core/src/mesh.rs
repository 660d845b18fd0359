//! Structured polar meshes of the reference disk and annulus.
//!
//! The disk has a centre node and `R` rings, ring `k` carrying `6k` nodes.
//! The annulus has `R + 1` rings of `6R` nodes each, the innermost ring
//! coinciding bit-for-bit with the outer ring of the disk.

use crate::error::{FpsiError, Result};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interface,
    Outer,
    None,
}

impl BoundaryTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryTag::Interface => "INTERFACE",
            BoundaryTag::Outer => "OUTER",
            BoundaryTag::None => "NONE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "INTERFACE" => Some(BoundaryTag::Interface),
            "OUTER" => Some(BoundaryTag::Outer),
            "NONE" => Some(BoundaryTag::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryEdge>,
}

/// Number of rings for a refinement level.
pub fn ring_count(n_refine: u32) -> usize {
    2usize << n_refine
}

fn on_circle(radius: f64, i: usize, n: usize) -> [f64; 2] {
    let t = 2.0 * PI * i as f64 / n as f64;
    [radius * t.cos(), radius * t.sin()]
}

fn orient(nodes: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    if signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

pub fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Unit disk, all boundary edges tagged INTERFACE.
pub fn build_disk_mesh(n_refine: u32) -> Mesh2D {
    let r = ring_count(n_refine);
    let mut nodes = vec![[0.0, 0.0]];
    let offset = |k: usize| if k == 0 { 0 } else { 1 + 3 * k * (k - 1) };
    for k in 1..=r {
        let radius = if k == r { 1.0 } else { k as f64 / r as f64 };
        for i in 0..6 * k {
            nodes.push(on_circle(radius, i, 6 * k));
        }
    }
    let mut triangles = Vec::with_capacity(6 * r * r);
    for i in 0..6 {
        let a = offset(1) + i;
        let b = offset(1) + (i + 1) % 6;
        triangles.push(orient(&nodes, [0, a, b]));
    }
    for k in 2..=r {
        let n_in = 6 * (k - 1);
        let n_out = 6 * k;
        let inner = |i: usize| offset(k - 1) + i % n_in;
        let outer = |j: usize| offset(k) + j % n_out;
        let (mut a, mut b) = (0usize, 0usize);
        while a < n_in || b < n_out {
            // Advance along whichever ring has the smaller next angle:
            // (b+1)/n_out <= (a+1)/n_in, compared exactly in integers.
            let advance_outer = a == n_in || (b < n_out && (b + 1) * n_in <= (a + 1) * n_out);
            if advance_outer {
                triangles.push(orient(&nodes, [inner(a), outer(b), outer(b + 1)]));
                b += 1;
            } else {
                triangles.push(orient(&nodes, [inner(a), outer(b), inner(a + 1)]));
                a += 1;
            }
        }
    }
    let n_b = 6 * r;
    let boundary = (0..n_b)
        .map(|i| BoundaryEdge {
            nodes: [offset(r) + i, offset(r) + (i + 1) % n_b],
            tag: BoundaryTag::Interface,
        })
        .collect();
    Mesh2D { nodes, triangles, boundary }
}

/// Annulus 1 < |x| < 2; inner boundary INTERFACE, outer boundary OUTER.
pub fn build_annulus_mesh(n_refine: u32) -> Mesh2D {
    let r = ring_count(n_refine);
    let n = 6 * r;
    let mut nodes = Vec::with_capacity((r + 1) * n);
    for j in 0..=r {
        let radius = if j == 0 {
            1.0
        } else if j == r {
            2.0
        } else {
            1.0 + j as f64 / r as f64
        };
        for i in 0..n {
            nodes.push(on_circle(radius, i, n));
        }
    }
    let id = |j: usize, i: usize| j * n + i % n;
    let mut triangles = Vec::with_capacity(2 * r * n);
    for j in 0..r {
        for i in 0..n {
            let (a, b, c, d) = (id(j, i), id(j, i + 1), id(j + 1, i + 1), id(j + 1, i));
            if (i + j) % 2 == 0 {
                triangles.push(orient(&nodes, [a, b, c]));
                triangles.push(orient(&nodes, [a, c, d]));
            } else {
                triangles.push(orient(&nodes, [a, b, d]));
                triangles.push(orient(&nodes, [b, c, d]));
            }
        }
    }
    let mut boundary = Vec::with_capacity(2 * n);
    for i in 0..n {
        boundary.push(BoundaryEdge { nodes: [id(0, i), id(0, i + 1)], tag: BoundaryTag::Interface });
    }
    for i in 0..n {
        boundary.push(BoundaryEdge { nodes: [id(r, i), id(r, i + 1)], tag: BoundaryTag::Outer });
    }
    Mesh2D { nodes, triangles, boundary }
}

/// Result of [`Mesh2D::audit`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeshAudit {
    pub min_area: f64,
    pub duplicate_nodes: usize,
    pub untagged_boundary_edges: usize,
    pub misplaced_tags: usize,
    pub non_manifold_edges: usize,
}

impl MeshAudit {
    pub fn ok(&self) -> bool {
        self.min_area > 0.0
            && self.duplicate_nodes == 0
            && self.untagged_boundary_edges == 0
            && self.misplaced_tags == 0
            && self.non_manifold_edges == 0
    }
}

impl Mesh2D {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, e: usize) -> f64 {
        let t = self.triangles[e];
        signed_area(self.nodes[t[0]], self.nodes[t[1]], self.nodes[t[2]])
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|e| self.triangle_area(e)).sum()
    }

    pub fn triangle_diameter(&self, e: usize) -> f64 {
        let t = self.triangles[e];
        let d = |a: usize, b: usize| {
            let (p, q) = (self.nodes[t[a]], self.nodes[t[b]]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        };
        d(0, 1).max(d(1, 2)).max(d(2, 0))
    }

    pub fn min_edge_length(&self) -> f64 {
        let mut m = f64::INFINITY;
        for t in &self.triangles {
            for k in 0..3 {
                let (p, q) = (self.nodes[t[k]], self.nodes[t[(k + 1) % 3]]);
                m = m.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        m
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.n_triangles()).map(|e| self.triangle_diameter(e)).fold(0.0, f64::max)
    }

    /// Nodes on edges with the given tag, ordered by polar angle in [0, 2π).
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v.sort_by(|&a, &b| angle(self.nodes[a]).partial_cmp(&angle(self.nodes[b])).unwrap());
        v
    }

    pub fn tagged_edges(&self, tag: BoundaryTag) -> Vec<[usize; 2]> {
        self.boundary.iter().filter(|e| e.tag == tag).map(|e| e.nodes).collect()
    }

    /// Exhaustive structural audit.
    pub fn audit(&self) -> MeshAudit {
        let min_area = (0..self.n_triangles()).map(|e| self.triangle_area(e)).fold(f64::INFINITY, f64::min);
        let mut keys: Vec<(i64, i64)> = self
            .nodes
            .iter()
            .map(|p| ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64))
            .collect();
        keys.sort_unstable();
        let duplicate_nodes = keys.windows(2).filter(|w| w[0] == w[1]).count();

        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        let non_manifold_edges = count.values().filter(|&&c| c > 2).count();
        let tagged: HashMap<(usize, usize), BoundaryTag> = self
            .boundary
            .iter()
            .map(|e| ((e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])), e.tag))
            .collect();
        let mut untagged_boundary_edges = 0;
        for (edge, &c) in &count {
            if c == 1 && !matches!(tagged.get(edge), Some(BoundaryTag::Interface | BoundaryTag::Outer)) {
                untagged_boundary_edges += 1;
            }
        }
        let mut misplaced_tags = 0;
        for e in &self.boundary {
            let key = (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1]));
            let radius_ok = |r: f64| {
                e.nodes.iter().all(|&n| (norm(self.nodes[n]) - r).abs() < 1e-12)
            };
            let ok = count.get(&key) == Some(&1)
                && match e.tag {
                    BoundaryTag::Interface => radius_ok(1.0),
                    BoundaryTag::Outer => radius_ok(2.0),
                    BoundaryTag::None => true,
                };
            if !ok {
                misplaced_tags += 1;
            }
        }
        MeshAudit { min_area, duplicate_nodes, untagged_boundary_edges, misplaced_tags, non_manifold_edges }
    }

    /// Plain-text serialization; see the README for the format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "fpsi-mesh 1").unwrap();
        writeln!(s, "nodes {}", self.nodes.len()).unwrap();
        for p in &self.nodes {
            writeln!(s, "{:e} {:e}", p[0], p[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        writeln!(s, "boundary {}", self.boundary.len()).unwrap();
        for e in &self.boundary {
            writeln!(s, "{} {} {}", e.nodes[0], e.nodes[1], e.tag.as_str()).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let err = |line: usize, msg: &str| FpsiError::Parse { line: line + 1, msg: msg.to_string() };
        let mut next = |what: &str| lines.next().ok_or_else(|| err(usize::MAX - 1, &format!("unexpected end of input, expected {what}")));
        let (l0, header) = next("header")?;
        if header.trim() != "fpsi-mesh 1" {
            return Err(err(l0, "expected header `fpsi-mesh 1`"));
        }
        let count = |(l, s): (usize, &str), key: &str| -> Result<usize> {
            let mut it = s.split_whitespace();
            if it.next() != Some(key) {
                return Err(err(l, &format!("expected `{key} <count>`")));
            }
            it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(l, "bad count"))
        };
        let nn = count(next("nodes")?, "nodes")?;
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let (l, s) = next("node")?;
            let v: Vec<f64> = s.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| err(l, "bad coordinate"))?;
            if v.len() != 2 {
                return Err(err(l, "node needs two coordinates"));
            }
            nodes.push([v[0], v[1]]);
        }
        let nt = count(next("triangles")?, "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (l, s) = next("triangle")?;
            let v: Vec<usize> = s.split_whitespace().map(|t| t.parse::<usize>()).collect::<std::result::Result<_, _>>().map_err(|_| err(l, "bad index"))?;
            if v.len() != 3 || v.iter().any(|&i| i >= nn) {
                return Err(err(l, "triangle needs three valid node indices"));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        let nb = count(next("boundary")?, "boundary")?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (l, s) = next("boundary edge")?;
            let parts: Vec<&str> = s.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(err(l, "boundary edge needs `a b TAG`"));
            }
            let a: usize = parts[0].parse().map_err(|_| err(l, "bad index"))?;
            let b: usize = parts[1].parse().map_err(|_| err(l, "bad index"))?;
            let tag = BoundaryTag::parse(parts[2]).ok_or_else(|| err(l, "unknown tag"))?;
            if a >= nn || b >= nn {
                return Err(err(l, "boundary node out of range"));
            }
            boundary.push(BoundaryEdge { nodes: [a, b], tag });
        }
        Ok(Mesh2D { nodes, triangles, boundary })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub fn norm(p: [f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

/// Polar angle in [0, 2π).
pub fn angle(p: [f64; 2]) -> f64 {
    let a = p[1].atan2(p[0]);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Barycentric coordinates of `x` in the triangle `(a, b, c)`.
pub fn barycentric(a: [f64; 2], b: [f64; 2], c: [f64; 2], x: [f64; 2]) -> [f64; 3] {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Bucket grid for point location.
#[derive(Debug, Clone)]
pub struct PointLocator {
    lo: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh2D) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let h = mesh.max_diameter().max(1e-12);
        let pad = 0.1 * h;
        lo = [lo[0] - pad, lo[1] - pad];
        hi = [hi[0] + pad, hi[1] + pad];
        let cell = h;
        let nx = (((hi[0] - lo[0]) / cell).ceil() as usize).max(1);
        let ny = (((hi[1] - lo[1]) / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (e, t) in mesh.triangles.iter().enumerate() {
            let mut bl = [f64::INFINITY; 2];
            let mut bh = [f64::NEG_INFINITY; 2];
            for &n in t {
                for d in 0..2 {
                    bl[d] = bl[d].min(mesh.nodes[n][d]);
                    bh[d] = bh[d].max(mesh.nodes[n][d]);
                }
            }
            let i0 = (((bl[0] - pad - lo[0]) / cell).floor().max(0.0)) as usize;
            let i1 = ((((bh[0] + pad - lo[0]) / cell).floor()) as usize).min(nx - 1);
            let j0 = (((bl[1] - pad - lo[1]) / cell).floor().max(0.0)) as usize;
            let j1 = ((((bh[1] + pad - lo[1]) / cell).floor()) as usize).min(ny - 1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(e);
                }
            }
        }
        Self { lo, cell, nx, ny, buckets }
    }

    fn candidates(&self, x: [f64; 2]) -> &[usize] {
        let i = ((x[0] - self.lo[0]) / self.cell).floor();
        let j = ((x[1] - self.lo[1]) / self.cell).floor();
        if i < 0.0 || j < 0.0 || i as usize >= self.nx || j as usize >= self.ny {
            return &[];
        }
        &self.buckets[j as usize * self.nx + i as usize]
    }

    /// Element containing `x` (barycentric tolerance 1e-10) and its
    /// barycentric coordinates. Ties go to the lowest element index.
    pub fn locate(&self, mesh: &Mesh2D, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let (e, l) = self.locate_nearest(mesh, x)?;
        if l.iter().all(|&v| v >= -1e-10) {
            Some((e, l))
        } else {
            None
        }
    }

    /// Element whose most negative barycentric coordinate at `x` is largest.
    /// Points slightly outside the mesh get linearly extrapolated coordinates.
    pub fn locate_nearest(&self, mesh: &Mesh2D, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &e in self.candidates(x) {
            let t = mesh.triangles[e];
            let l = barycentric(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], x);
            let m = l[0].min(l[1]).min(l[2]);
            if best.as_ref().map_or(true, |b| m > b.2 + 1e-14) {
                best = Some((e, l, m));
            }
        }
        best.map(|(e, l, _)| (e, l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_counts_and_area() {
        for n in 0..4 {
            let m = build_disk_mesh(n);
            let r = ring_count(n);
            assert_eq!(m.n_nodes(), 1 + 3 * r * (r + 1));
            assert_eq!(m.n_triangles(), 6 * r * r);
            assert!(m.audit().ok(), "{:?}", m.audit());
        }
        let a0 = build_disk_mesh(0).area();
        assert!((a0 - PI).abs() / PI < 0.05);
        let e2 = (build_disk_mesh(2).area() - PI).abs();
        let e3 = (build_disk_mesh(3).area() - PI).abs();
        assert!(e3 <= e2);
    }

    #[test]
    fn annulus_area_and_conformity() {
        let a = build_annulus_mesh(0);
        assert!((a.area() - 3.0 * PI).abs() / (3.0 * PI) < 0.05);
        for n in 0..3 {
            let d = build_disk_mesh(n);
            let a = build_annulus_mesh(n);
            assert!(a.audit().ok());
            let di = d.tagged_nodes(BoundaryTag::Interface);
            let ai = a.tagged_nodes(BoundaryTag::Interface);
            assert_eq!(di.len(), ai.len());
            for (x, y) in di.iter().zip(&ai) {
                assert_eq!(d.nodes[*x], a.nodes[*y]);
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let m = build_annulus_mesh(0);
        let back = Mesh2D::from_text(&m.to_text()).unwrap();
        assert_eq!(m, back);
        assert!(Mesh2D::from_text("nonsense").is_err());
    }

    #[test]
    fn locator_finds_points() {
        let m = build_disk_mesh(1);
        let loc = PointLocator::new(&m);
        let (e, l) = loc.locate(&m, [0.3, 0.4]).unwrap();
        let t = m.triangles[e];
        let p = [0, 1].map(|d| (0..3).map(|k| l[k] * m.nodes[t[k]][d]).sum::<f64>());
        assert!((p[0] - 0.3).abs() < 1e-14 && (p[1] - 0.4).abs() < 1e-14);
        assert!(loc.locate(&m, [1.5, 0.0]).is_none());
        assert!(loc.locate_nearest(&m, [0.999 * (0.1f64).cos(), 0.999 * (0.1f64).sin()]).is_some());
    }
}
