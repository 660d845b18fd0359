//! Everything that is fixed for a run: meshes, spaces, quadrature, the
//! regularization operator, the ALE solver, interface traces and the
//! geometry-independent Biot matrices.

use crate::error::Result;
use crate::geometry::AleSolver;
use crate::interface::InterfaceGrid;
use crate::mesh::{build_annulus_mesh, build_disk_mesh, ring_count, BoundaryTag, Mesh2D};
use crate::quadrature::QuadRule;
use crate::regularizer::{MollifierResolution, RegularizationOperator, Row};
use crate::space::{ElementGeom, FeSpace};
use crate::sparse::{CsrMatrix, Triplets};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationParams {
    pub refine: u32,
    pub m: usize,
    pub k: usize,
    pub delta: f64,
    pub fluid_quad_order: usize,
    pub biot_quad_order: usize,
    pub mollifier: MollifierResolution,
}

impl Default for DiscretizationParams {
    fn default() -> Self {
        Self { refine: 1, m: 48, k: 8, delta: 0.25, fluid_quad_order: 6, biot_quad_order: 2, mollifier: MollifierResolution::default() }
    }
}

/// Geometry-independent Biot matrices on the disk (P1).
#[derive(Debug, Clone)]
pub struct BiotMatrices {
    /// ∫ η·ψ, interleaved vector dofs.
    pub mass: CsrMatrix,
    /// ∫ D(η):D(ψ).
    pub strain: CsrMatrix,
    /// ∫ (∇·η)(∇·ψ).
    pub div: CsrMatrix,
    /// ∫ p r.
    pub p_mass: CsrMatrix,
}

pub struct Discretization {
    pub params: DiscretizationParams,
    pub disk: Mesh2D,
    pub annulus: Mesh2D,
    pub grid: InterfaceGrid,
    pub fluid_quad: QuadRule,
    pub biot_quad: QuadRule,
    pub reg: RegularizationOperator,
    pub ale: AleSolver,
    /// P2 velocity on the annulus with OUTER dofs constrained.
    pub velocity: FeSpace,
    pub disk_geoms: Vec<ElementGeom>,
    pub annulus_geoms: Vec<ElementGeom>,
    /// Per interface sample: P2 velocity nodes and weights of the trace.
    pub u_trace: Vec<Row>,
    /// Per interface sample: disk nodes and weights of the P1 trace.
    pub p_trace: Vec<Row>,
    pub biot: BiotMatrices,
}

/// Sample `j` lies on boundary edge `i` of a ring of `n` equispaced nodes at
/// local parameter `t`; computed in integers so samples at nodes are exact.
fn edge_of_sample(j: usize, m: usize, n: usize) -> (usize, f64) {
    let s = j * n;
    (s / m, (s % m) as f64 / m as f64)
}

impl Discretization {
    pub fn new(params: DiscretizationParams) -> Result<Self> {
        let disk = build_disk_mesh(params.refine);
        let annulus = build_annulus_mesh(params.refine);
        let grid = InterfaceGrid::new(params.m, params.k)?;
        let fluid_quad = QuadRule::triangle(params.fluid_quad_order);
        let biot_quad = QuadRule::triangle(params.biot_quad_order);
        let reg = RegularizationOperator::build(&disk, &grid, params.delta, &biot_quad, params.mollifier)?;
        let ale = AleSolver::new(&annulus)?;
        let velocity = FeSpace::p2_vector(&annulus, Some(BoundaryTag::Outer));
        let disk_geoms = ElementGeom::all(&disk)?;
        let annulus_geoms = ElementGeom::all(&annulus)?;

        let n_ring = 6 * ring_count(params.refine);
        let ann_ring = annulus.tagged_nodes(BoundaryTag::Interface);
        let disk_ring = disk.tagged_nodes(BoundaryTag::Interface);
        debug_assert_eq!(ann_ring.len(), n_ring);
        let mut u_trace = Vec::with_capacity(grid.m);
        let mut p_trace = Vec::with_capacity(grid.m);
        for j in 0..grid.m {
            let (i, t) = edge_of_sample(j, grid.m, n_ring);
            let (a, b) = (ann_ring[i], ann_ring[(i + 1) % n_ring]);
            let mid = velocity.edge_node(a, b).expect("interface edge without midpoint");
            let mut row: Row = vec![(a, (1.0 - t) * (1.0 - 2.0 * t)), (b, t * (2.0 * t - 1.0)), (mid, 4.0 * t * (1.0 - t))];
            row.retain(|e| e.1 != 0.0);
            u_trace.push(row);
            let (a, b) = (disk_ring[i], disk_ring[(i + 1) % n_ring]);
            let mut row: Row = vec![(a, 1.0 - t), (b, t)];
            row.retain(|e| e.1 != 0.0);
            p_trace.push(row);
        }
        let biot = biot_matrices(&disk, &disk_geoms);
        Ok(Self {
            params,
            disk,
            annulus,
            grid,
            fluid_quad,
            biot_quad,
            reg,
            ale,
            velocity,
            disk_geoms,
            annulus_geoms,
            u_trace,
            p_trace,
            biot,
        })
    }

    pub fn n_velocity_dofs(&self) -> usize {
        self.velocity.dof_count()
    }

    pub fn n_disk_nodes(&self) -> usize {
        self.disk.n_nodes()
    }

    pub fn n_annulus_nodes(&self) -> usize {
        self.annulus.n_nodes()
    }

    /// Fluid velocity at interface sample `j`.
    pub fn u_at_sample(&self, u: &[f64], j: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for &(k, w) in &self.u_trace[j] {
            out[0] += w * u[2 * k];
            out[1] += w * u[2 * k + 1];
        }
        out
    }

    pub fn p_at_sample(&self, p: &[f64], j: usize) -> f64 {
        self.p_trace[j].iter().map(|&(k, w)| w * p[k]).sum()
    }

    /// Band-limited regularized trace T η at every sample.
    pub fn trace_samples(&self, eta: &[[f64; 2]]) -> Vec<[f64; 2]> {
        (0..self.grid.m)
            .map(|j| {
                let row = self.reg.trace_sample_row(j);
                let mut out = [0.0; 2];
                for &k in &self.reg.trace_support {
                    out[0] += row[k] * eta[k][0];
                    out[1] += row[k] * eta[k][1];
                }
                out
            })
            .collect()
    }
}

fn biot_matrices(mesh: &Mesh2D, geoms: &[ElementGeom]) -> BiotMatrices {
    let n = mesh.n_nodes();
    let mut mass = Triplets::new(2 * n, 2 * n);
    let mut strain = Triplets::new(2 * n, 2 * n);
    let mut div = Triplets::new(2 * n, 2 * n);
    let mut p_mass = Triplets::new(n, n);
    for (t, g) in mesh.triangles.iter().zip(geoms) {
        for a in 0..3 {
            for b in 0..3 {
                let m = g.area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 };
                p_mass.push(t[a], t[b], m);
                let (ga, gb) = (g.grad_lam[a], g.grad_lam[b]);
                let dot = ga[0] * gb[0] + ga[1] * gb[1];
                for c in 0..2 {
                    mass.push(2 * t[a] + c, 2 * t[b] + c, m);
                    for d in 0..2 {
                        let dd = if c == d { dot } else { 0.0 };
                        strain.push(2 * t[a] + c, 2 * t[b] + d, g.area * 0.5 * (dd + ga[d] * gb[c]));
                        div.push(2 * t[a] + c, 2 * t[b] + d, g.area * ga[c] * gb[d]);
                    }
                }
            }
        }
    }
    BiotMatrices { mass: mass.to_csr(), strain: strain.to_csr(), div: div.to_csr(), p_mass: p_mass.to_csr() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces_reproduce_linear_fields() {
        let d = Discretization::new(DiscretizationParams::default()).unwrap();
        let u = d.velocity.interpolate(|x| [x[0] + 2.0, 3.0 * x[1]]);
        let p: Vec<f64> = d.disk.nodes.iter().map(|x| 1.0 - x[0]).collect();
        let n = 6 * ring_count(1);
        for j in 0..d.grid.m {
            let (i, t) = edge_of_sample(j, d.grid.m, n);
            let th0 = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let th1 = 2.0 * std::f64::consts::PI * (i + 1) as f64 / n as f64;
            let x = [(1.0 - t) * th0.cos() + t * th1.cos(), (1.0 - t) * th0.sin() + t * th1.sin()];
            let v = d.u_at_sample(&u, j);
            assert!((v[0] - x[0] - 2.0).abs() < 1e-12 && (v[1] - 3.0 * x[1]).abs() < 1e-12);
            assert!((d.p_at_sample(&p, j) - 1.0 + x[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn biot_matrices_kernels() {
        let mesh = build_disk_mesh(1);
        let b = biot_matrices(&mesh, &ElementGeom::all(&mesh).unwrap());
        // rigid rotation has zero strain, but nonzero divergence only for dilation
        let rot: Vec<f64> = mesh.nodes.iter().flat_map(|x| [-x[1], x[0]]).collect();
        assert!(b.strain.bilinear(&rot, &rot).abs() < 1e-12);
        assert!(b.div.bilinear(&rot, &rot).abs() < 1e-12);
        let dil: Vec<f64> = mesh.nodes.iter().flat_map(|x| [x[0], x[1]]).collect();
        let area = mesh.area();
        assert!((b.div.bilinear(&dil, &dil) - 4.0 * area).abs() < 1e-12);
        assert!((b.strain.bilinear(&dil, &dil) - 2.0 * area).abs() < 1e-12);
        assert!((b.p_mass.row_sums().iter().sum::<f64>() - area).abs() < 1e-12);
    }
}
