//! Finite element spaces, reference basis functions and basic assembly.

use crate::error::{FpsiError, Result};
use crate::interface::InterfaceGrid;
use crate::mesh::{BoundaryTag, Mesh2D};
use crate::quadrature::QuadRule;
use crate::sparse::{CsrMatrix, Triplets};
use rayon::prelude::*;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    P1Scalar,
    P1Vector,
    P2Vector,
    FourierVector,
}

/// Affine geometry of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeom {
    pub area: f64,
    /// Gradients of the three barycentric coordinates.
    pub grad_lam: [[f64; 2]; 3],
    pub vertices: [[f64; 2]; 3],
}

impl ElementGeom {
    pub fn new(mesh: &Mesh2D, e: usize) -> Result<Self> {
        let t = mesh.triangles[e];
        let v = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
        let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        let area = 0.5 * det;
        if !(area > 1e-14) {
            return Err(FpsiError::DegenerateElement { element: e, area });
        }
        let g1 = [(v[2][1] - v[0][1]) / det, -(v[2][0] - v[0][0]) / det];
        let g2 = [-(v[1][1] - v[0][1]) / det, (v[1][0] - v[0][0]) / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Ok(Self { area, grad_lam: [g0, g1, g2], vertices: v })
    }

    pub fn all(mesh: &Mesh2D) -> Result<Vec<Self>> {
        (0..mesh.n_triangles()).map(|e| Self::new(mesh, e)).collect()
    }

    pub fn point(&self, lam: [f64; 3]) -> [f64; 2] {
        let v = &self.vertices;
        [
            lam[0] * v[0][0] + lam[1] * v[1][0] + lam[2] * v[2][0],
            lam[0] * v[0][1] + lam[1] * v[1][1] + lam[2] * v[2][1],
        ]
    }
}

/// P2 local ordering: vertices 0, 1, 2, then midpoints of (0,1), (1,2), (2,0).
pub const P2_EDGES: [[usize; 2]; 3] = [[0, 1], [1, 2], [2, 0]];

pub fn p1_values(lam: [f64; 3]) -> [f64; 3] {
    lam
}

pub fn p2_values(lam: [f64; 3]) -> [f64; 6] {
    [
        lam[0] * (2.0 * lam[0] - 1.0),
        lam[1] * (2.0 * lam[1] - 1.0),
        lam[2] * (2.0 * lam[2] - 1.0),
        4.0 * lam[0] * lam[1],
        4.0 * lam[1] * lam[2],
        4.0 * lam[2] * lam[0],
    ]
}

pub fn p2_gradients(lam: [f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut out = [[0.0; 2]; 6];
    for d in 0..2 {
        for i in 0..3 {
            out[i][d] = (4.0 * lam[i] - 1.0) * g[i][d];
        }
        for (k, [a, b]) in P2_EDGES.iter().enumerate() {
            out[3 + k][d] = 4.0 * (lam[*a] * g[*b][d] + lam[*b] * g[*a][d]);
        }
    }
    out
}

/// A discrete function space. Vector dofs are interleaved: `dof = node * 2 + comp`.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub kind: SpaceKind,
    pub components: usize,
    /// Geometric location of each dof node (empty for the Fourier space).
    pub nodes: Vec<[f64; 2]>,
    /// Local-to-global dof-node map per triangle (3 or 6 entries).
    pub elements: Vec<Vec<usize>>,
    /// True for dofs fixed to zero.
    pub constrained: Vec<bool>,
    /// Mesh edge (sorted vertex pair) to midpoint node, P2 only.
    pub edge_nodes: HashMap<(usize, usize), usize>,
    /// Coefficients per component (Fourier only).
    pub n_coeffs: usize,
    /// Interface grid (M, K) the Fourier space is built on.
    pub fourier_grid: Option<(usize, usize)>,
}

impl FeSpace {
    pub fn p1_scalar(mesh: &Mesh2D) -> Self {
        Self::p1(mesh, 1, SpaceKind::P1Scalar)
    }

    pub fn p1_vector(mesh: &Mesh2D) -> Self {
        Self::p1(mesh, 2, SpaceKind::P1Vector)
    }

    fn p1(mesh: &Mesh2D, components: usize, kind: SpaceKind) -> Self {
        Self {
            kind,
            components,
            nodes: mesh.nodes.clone(),
            elements: mesh.triangles.iter().map(|t| t.to_vec()).collect(),
            constrained: vec![false; components * mesh.n_nodes()],
            edge_nodes: HashMap::new(),
            n_coeffs: 0,
            fourier_grid: None,
        }
    }

    /// P2 vector space; dofs on edges tagged `zero_tag` are constrained.
    pub fn p2_vector(mesh: &Mesh2D, zero_tag: Option<BoundaryTag>) -> Self {
        let mut nodes = mesh.nodes.clone();
        let mut edge_nodes = HashMap::new();
        let mut elements = Vec::with_capacity(mesh.n_triangles());
        for t in &mesh.triangles {
            let mut loc = t.to_vec();
            for [a, b] in P2_EDGES {
                let key = (t[a].min(t[b]), t[a].max(t[b]));
                let id = *edge_nodes.entry(key).or_insert_with(|| {
                    let (p, q) = (mesh.nodes[key.0], mesh.nodes[key.1]);
                    nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                    nodes.len() - 1
                });
                loc.push(id);
            }
            elements.push(loc);
        }
        let mut constrained = vec![false; 2 * nodes.len()];
        if let Some(tag) = zero_tag {
            for e in mesh.boundary.iter().filter(|e| e.tag == tag) {
                let key = (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1]));
                for n in [e.nodes[0], e.nodes[1], edge_nodes[&key]] {
                    constrained[2 * n] = true;
                    constrained[2 * n + 1] = true;
                }
            }
        }
        Self { kind: SpaceKind::P2Vector, components: 2, nodes, elements, constrained, edge_nodes, n_coeffs: 0, fourier_grid: None }
    }

    pub fn fourier_vector(grid: &InterfaceGrid) -> Self {
        let n = grid.n_coeffs();
        Self {
            kind: SpaceKind::FourierVector,
            components: 2,
            nodes: Vec::new(),
            elements: Vec::new(),
            constrained: vec![false; 2 * n],
            edge_nodes: HashMap::new(),
            n_coeffs: n,
            fourier_grid: Some((grid.m, grid.k)),
        }
    }

    pub fn dof_count(&self) -> usize {
        match self.kind {
            SpaceKind::FourierVector => 2 * self.n_coeffs,
            _ => self.components * self.nodes.len(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.dof_count()).filter(|&d| !self.constrained[d]).collect()
    }

    pub fn edge_node(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_nodes.get(&(a.min(b), a.max(b))).copied()
    }

    /// Interpolate a function at the dof nodes.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.dof_count()];
        for (i, &x) in self.nodes.iter().enumerate() {
            let v = f(x);
            for c in 0..self.components {
                out[self.components * i + c] = v[c];
            }
        }
        for (d, &fixed) in self.constrained.iter().enumerate() {
            if fixed {
                out[d] = 0.0;
            }
        }
        out
    }
}

/// Local scalar shape values and gradients at a barycentric point.
pub fn local_shapes(kind: SpaceKind, lam: [f64; 3], g: &[[f64; 2]; 3]) -> (Vec<f64>, Vec<[f64; 2]>) {
    match kind {
        SpaceKind::P2Vector => (p2_values(lam).to_vec(), p2_gradients(lam, g).to_vec()),
        _ => (p1_values(lam).to_vec(), g.to_vec()),
    }
}

/// Mass and stiffness (componentwise Laplacian) matrices of a space.
///
/// The Fourier space gets the diagonal discrete L² and H¹-seminorm forms.
pub fn assemble_mass_stiffness(space: &FeSpace, mesh: &Mesh2D, quad: &QuadRule) -> Result<(CsrMatrix, CsrMatrix)> {
    let ndof = space.dof_count();
    if space.kind == SpaceKind::FourierVector {
        let (gm, gk) = space.fourier_grid.expect("Fourier space without grid");
        let grid = InterfaceGrid::new(gm, gk)?;
        let mut m = Triplets::new(ndof, ndof);
        let mut k = Triplets::new(ndof, ndof);
        for c in 0..2 {
            for i in 0..space.n_coeffs {
                let w = grid.coeff_weight(i);
                let mode = grid.mode_of(i).0 as f64;
                m.push(c * space.n_coeffs + i, c * space.n_coeffs + i, w);
                k.push(c * space.n_coeffs + i, c * space.n_coeffs + i, w * mode * mode);
            }
        }
        return Ok((m.to_csr(), k.to_csr()));
    }
    let geoms = ElementGeom::all(mesh)?;
    let bary = quad.barycentric();
    let locals: Vec<(Vec<f64>, Vec<f64>)> = geoms
        .par_iter()
        .map(|g| {
            let nl = if space.kind == SpaceKind::P2Vector { 6 } else { 3 };
            let mut me = vec![0.0; nl * nl];
            let mut ke = vec![0.0; nl * nl];
            for (lam, w) in bary.iter().zip(&quad.weights) {
                let (phi, dphi) = local_shapes(space.kind, *lam, &g.grad_lam);
                let wq = 2.0 * g.area * w;
                for a in 0..nl {
                    for b in 0..nl {
                        me[a * nl + b] += wq * phi[a] * phi[b];
                        ke[a * nl + b] += wq * (dphi[a][0] * dphi[b][0] + dphi[a][1] * dphi[b][1]);
                    }
                }
            }
            (me, ke)
        })
        .collect();
    let mut m = Triplets::new(ndof, ndof);
    let mut k = Triplets::new(ndof, ndof);
    let nc = space.components;
    for (e, (me, ke)) in locals.iter().enumerate() {
        let loc = &space.elements[e];
        let nl = loc.len();
        for a in 0..nl {
            for b in 0..nl {
                for c in 0..nc {
                    m.push(nc * loc[a] + c, nc * loc[b] + c, me[a * nl + b]);
                    k.push(nc * loc[a] + c, nc * loc[b] + c, ke[a * nl + b]);
                }
            }
        }
    }
    Ok((m.to_csr(), k.to_csr()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_annulus_mesh, build_disk_mesh};

    #[test]
    fn p2_partition_of_unity() {
        let lam = [0.2, 0.3, 0.5];
        let s: f64 = p2_values(lam).iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        let g = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
        let gs = p2_gradients(lam, &g);
        for d in 0..2 {
            assert!(gs.iter().map(|v| v[d]).sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn mass_and_stiffness_basic_properties() {
        let mesh = build_disk_mesh(1);
        let q = QuadRule::triangle(4);
        for space in [FeSpace::p1_scalar(&mesh), FeSpace::p1_vector(&mesh), FeSpace::p2_vector(&mesh, None)] {
            let (m, k) = assemble_mass_stiffness(&space, &mesh, &q).unwrap();
            assert!(m.asymmetry() < 1e-14);
            let total: f64 = m.row_sums().iter().sum();
            assert!((total - space.components as f64 * mesh.area()).abs() < 1e-12);
            let ones = vec![1.0; space.dof_count()];
            assert!(k.matvec(&ones).iter().all(|v| v.abs() < 1e-12));
            assert!(m.factor().is_ok());
        }
    }

    #[test]
    fn p2_outer_constraint() {
        let mesh = build_annulus_mesh(0);
        let s = FeSpace::p2_vector(&mesh, Some(BoundaryTag::Outer));
        let n_outer = mesh.tagged_edges(BoundaryTag::Outer).len();
        let fixed = s.constrained.iter().filter(|&&c| c).count();
        assert_eq!(fixed, 2 * 2 * n_outer);
    }

    #[test]
    fn degenerate_triangle_is_reported() {
        let mesh = Mesh2D {
            nodes: vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            triangles: vec![[0, 1, 2]],
            boundary: vec![],
        };
        let err = assemble_mass_stiffness(&FeSpace::p1_scalar(&mesh), &mesh, &QuadRule::triangle(2)).unwrap_err();
        assert!(matches!(err, FpsiError::DegenerateElement { element: 0, .. }));
    }
}
