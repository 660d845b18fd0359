//! Maps between reference and deformed configurations, transformed
//! derivatives, the interface frame, nondegeneracy certificates and the
//! annulus path metric.

use crate::error::{FpsiError, Result};
use crate::interface::{InterfaceGrid, PlateField};
use crate::mesh::{angle, norm, BoundaryTag, Mesh2D, PointLocator};
use crate::space::{assemble_mass_stiffness, ElementGeom, FeSpace};
use crate::sparse::{CsrMatrix, LuFactor};
use crate::quadrature::QuadRule;
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest singular value of a 2×2 matrix.
pub fn spectral_norm(a: &Matrix2<f64>) -> f64 {
    let f2 = a.norm_squared();
    let d = a.determinant();
    (0.5 * (f2 + (f2 * f2 - 4.0 * d * d).max(0.0).sqrt())).sqrt()
}

/// Per-element gradient of nodal vector data; row = component, column = derivative.
pub fn p1_gradients(geoms: &[ElementGeom], mesh: &Mesh2D, values: &[[f64; 2]]) -> Vec<Matrix2<f64>> {
    geoms
        .iter()
        .zip(&mesh.triangles)
        .map(|(g, t)| {
            let mut m = Matrix2::zeros();
            for a in 0..3 {
                for c in 0..2 {
                    for d in 0..2 {
                        m[(c, d)] += values[t[a]][c] * g.grad_lam[a][d];
                    }
                }
            }
            m
        })
        .collect()
}

pub fn flat_to_nodes(flat: &[f64]) -> Vec<[f64; 2]> {
    flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

pub fn nodes_to_flat(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|p| [p[0], p[1]]).collect()
}

/// Nodal P1 displacement with its per-element gradients.
#[derive(Debug, Clone)]
pub struct DeformationField {
    pub values: Vec<[f64; 2]>,
    pub grads: Vec<Matrix2<f64>>,
}

impl DeformationField {
    pub fn new(mesh: &Mesh2D, values: Vec<[f64; 2]>) -> Result<Self> {
        assert_eq!(values.len(), mesh.n_nodes());
        let geoms = ElementGeom::all(mesh)?;
        let grads = p1_gradients(&geoms, mesh, &values);
        Ok(Self { values, grads })
    }

    pub fn from_flat(mesh: &Mesh2D, flat: &[f64]) -> Result<Self> {
        Self::new(mesh, flat_to_nodes(flat))
    }

    pub fn zero(mesh: &Mesh2D) -> Result<Self> {
        Self::new(mesh, vec![[0.0; 2]; mesh.n_nodes()])
    }

    /// Deformation gradient I + ∇η on each element.
    pub fn deformation_gradients(&self) -> Vec<Matrix2<f64>> {
        self.grads.iter().map(|g| Matrix2::identity() + g).collect()
    }

    pub fn eval(&self, mesh: &Mesh2D, loc: &PointLocator, x: [f64; 2]) -> Result<[f64; 2]> {
        let (e, l) = loc.locate(mesh, x).ok_or(FpsiError::PointLocation(x[0], x[1]))?;
        Ok(interp_p1(mesh, &self.values, e, l))
    }
}

pub fn interp_p1(mesh: &Mesh2D, values: &[[f64; 2]], e: usize, l: [f64; 3]) -> [f64; 2] {
    let t = mesh.triangles[e];
    let mut out = [0.0; 2];
    for a in 0..3 {
        for c in 0..2 {
            out[c] += l[a] * values[t[a]][c];
        }
    }
    out
}

/// x̂ ↦ x̂ + η(x̂).
pub fn lagrangian_map(mesh: &Mesh2D, loc: &PointLocator, eta: &DeformationField, x: [f64; 2]) -> Result<[f64; 2]> {
    let v = eta.eval(mesh, loc, x)?;
    Ok([x[0] + v[0], x[1] + v[1]])
}

/// det(I + ∇η) per element. The sign is reported, not checked.
pub fn biot_jacobian(eta: &DeformationField) -> Vec<f64> {
    eta.deformation_gradients().iter().map(|f| f.determinant()).collect()
}

fn inverses(fs: &[Matrix2<f64>]) -> Result<Vec<Matrix2<f64>>> {
    fs.iter()
        .enumerate()
        .map(|(e, f)| {
            let d = f.determinant();
            if d == 0.0 || !d.is_finite() {
                return Err(FpsiError::SingularElement { element: e });
            }
            Ok(Matrix2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / d)
        })
        .collect()
}

/// ∇f (I + ∇η)^{-1} per element for a scalar nodal field f.
pub fn transformed_gradient_scalar(mesh: &Mesh2D, eta: &DeformationField, f: &[f64]) -> Result<Vec<[f64; 2]>> {
    let geoms = ElementGeom::all(mesh)?;
    let inv = inverses(&eta.deformation_gradients())?;
    Ok(geoms
        .iter()
        .zip(&mesh.triangles)
        .zip(&inv)
        .map(|((g, t), fi)| {
            let mut grad = [0.0; 2];
            for a in 0..3 {
                for d in 0..2 {
                    grad[d] += f[t[a]] * g.grad_lam[a][d];
                }
            }
            [grad[0] * fi[(0, 0)] + grad[1] * fi[(1, 0)], grad[0] * fi[(0, 1)] + grad[1] * fi[(1, 1)]]
        })
        .collect())
}

/// ∇f (I + ∇η)^{-1} per element for a vector nodal field f; its trace is the
/// transformed divergence.
pub fn transformed_gradient_vector(mesh: &Mesh2D, eta: &DeformationField, f: &[[f64; 2]]) -> Result<Vec<Matrix2<f64>>> {
    let geoms = ElementGeom::all(mesh)?;
    let inv = inverses(&eta.deformation_gradients())?;
    let grads = p1_gradients(&geoms, mesh, f);
    Ok(grads.iter().zip(&inv).map(|(g, fi)| g * fi).collect())
}

/// Discrete harmonic extension on a P1 annulus mesh, with the interior
/// stiffness block factored once.
pub struct AleSolver {
    stiffness: CsrMatrix,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    k_ib: CsrMatrix,
    lu: LuFactor,
    geoms: Vec<ElementGeom>,
    interface_nodes: Vec<usize>,
    outer_nodes: Vec<usize>,
}

impl AleSolver {
    pub fn new(mesh: &Mesh2D) -> Result<Self> {
        let space = FeSpace::p1_scalar(mesh);
        let (_, stiffness) = assemble_mass_stiffness(&space, mesh, &QuadRule::triangle(2))?;
        let interface_nodes = mesh.tagged_nodes(BoundaryTag::Interface);
        let outer_nodes = mesh.tagged_nodes(BoundaryTag::Outer);
        let mut on_boundary = vec![false; mesh.n_nodes()];
        for &n in interface_nodes.iter().chain(&outer_nodes) {
            on_boundary[n] = true;
        }
        let interior: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| !on_boundary[n]).collect();
        let boundary: Vec<usize> = (0..mesh.n_nodes()).filter(|&n| on_boundary[n]).collect();
        let k_ii = stiffness.submatrix(&interior, &interior);
        let k_ib = stiffness.submatrix(&interior, &boundary);
        let lu = k_ii.factor()?;
        Ok(Self { stiffness, interior, boundary, k_ib, lu, geoms: ElementGeom::all(mesh)?, interface_nodes, outer_nodes })
    }

    pub fn interface_nodes(&self) -> &[usize] {
        &self.interface_nodes
    }

    /// Harmonic extension of x + ω on INTERFACE and x on OUTER.
    pub fn solve(&self, mesh: &Mesh2D, grid: &InterfaceGrid, omega: &PlateField) -> Result<AleMap> {
        let mut values = mesh.nodes.clone();
        for &n in &self.interface_nodes {
            let w = omega.eval(grid, angle(mesh.nodes[n]), 0);
            values[n] = [mesh.nodes[n][0] + w[0], mesh.nodes[n][1] + w[1]];
        }
        for c in 0..2 {
            let xb: Vec<f64> = self.boundary.iter().map(|&n| values[n][c]).collect();
            let rhs: Vec<f64> = self.k_ib.matvec(&xb).iter().map(|v| -v).collect();
            let xi = self.lu.solve(&rhs)?;
            for (k, &n) in self.interior.iter().enumerate() {
                values[n][c] = xi[k];
            }
        }
        let mut residual = 0.0f64;
        for c in 0..2 {
            let x: Vec<f64> = values.iter().map(|v| v[c]).collect();
            let r = self.stiffness.matvec(&x);
            for &n in &self.interior {
                residual = residual.max(r[n].abs());
            }
        }
        let _ = &self.outer_nodes;
        AleMap::from_values(&self.geoms, mesh, values, residual)
    }
}

/// Nodal ALE map with per-element gradient, Jacobian and inverse gradient.
#[derive(Debug, Clone)]
pub struct AleMap {
    pub values: Vec<[f64; 2]>,
    pub grads: Vec<Matrix2<f64>>,
    pub jac: Vec<f64>,
    pub inv_grads: Vec<Matrix2<f64>>,
    /// Max interior residual of the discrete Laplacian.
    pub residual: f64,
}

impl AleMap {
    pub fn from_values(geoms: &[ElementGeom], mesh: &Mesh2D, values: Vec<[f64; 2]>, residual: f64) -> Result<Self> {
        let grads = p1_gradients(geoms, mesh, &values);
        let jac: Vec<f64> = grads.iter().map(|g| g.determinant()).collect();
        let inv_grads = grads
            .iter()
            .zip(&jac)
            .map(|(g, &d)| Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / d)
            .collect();
        Ok(Self { values, grads, jac, inv_grads, residual })
    }

    pub fn identity(mesh: &Mesh2D) -> Result<Self> {
        Self::from_values(&ElementGeom::all(mesh)?, mesh, mesh.nodes.clone(), 0.0)
    }
}

/// Convenience wrapper building a fresh solver.
pub fn solve_ale_map(mesh: &Mesh2D, grid: &InterfaceGrid, omega: &PlateField) -> Result<AleMap> {
    AleSolver::new(mesh)?.solve(mesh, grid, omega)
}

/// w = (Φ_next − Φ_prev)/Δt at the mesh nodes.
pub fn discrete_ale_velocity(next: &AleMap, prev: &AleMap, dt: f64) -> Vec<[f64; 2]> {
    next.values
        .iter()
        .zip(&prev.values)
        .map(|(a, b)| [(a[0] - b[0]) / dt, (a[1] - b[1]) / dt])
        .collect()
}

/// Rescaled normal, tangent and arc-length element at each grid sample.
#[derive(Debug, Clone)]
pub struct InterfaceFrame {
    pub n: Vec<[f64; 2]>,
    pub tau: Vec<[f64; 2]>,
    pub s: Vec<f64>,
}

pub fn interface_frame(grid: &InterfaceGrid, omega: &PlateField) -> InterfaceFrame {
    let d = omega.derivative(grid).samples(grid);
    let mut n = Vec::with_capacity(grid.m);
    let mut tau = Vec::with_capacity(grid.m);
    let mut s = Vec::with_capacity(grid.m);
    for j in 0..grid.m {
        let (c, si) = (grid.cos_at(1, j), grid.sin_at(1, j));
        let nj = [c + d[1][j], si - d[0][j]];
        let tj = [-si + d[0][j], c + d[1][j]];
        s.push(norm(tj));
        n.push(nj);
        tau.push(tj);
    }
    InterfaceFrame { n, tau, s }
}

/// Positions Φ_Γ(z_j) = (cos z_j, sin z_j) + ω(z_j).
pub fn interface_positions(grid: &InterfaceGrid, omega: &PlateField) -> Vec<[f64; 2]> {
    let w = omega.samples(grid);
    (0..grid.m).map(|j| [grid.cos_at(1, j) + w[0][j], grid.sin_at(1, j) + w[1][j]]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertThresholds {
    /// Lower bound for det(I + ∇η^δ).
    pub det_min: f64,
    /// c3: the fluid Jacobian must lie in [1/c3, c3] and |∇Φ| ≤ c3.
    pub jac_bound: f64,
    /// Tangent norm and secant ratio must be at least alpha/2.
    pub alpha: f64,
    /// Interface image must stay within radius 2 - margin.
    pub clearance_margin: f64,
}

impl Default for CertThresholds {
    fn default() -> Self {
        Self { det_min: 0.1, jac_bound: 10.0, alpha: 1.0, clearance_margin: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeomCertificate {
    pub min_det_b: f64,
    /// max |I + ∇η^δ| (spectral norm).
    pub max_grad_b: f64,
    pub min_jac_f: f64,
    pub max_jac_f: f64,
    pub max_grad_f: f64,
    pub min_tangent_norm: f64,
    pub min_secant_ratio: f64,
    pub max_interface_radius: f64,
    pub det_ok: bool,
    pub jac_ok: bool,
    pub injectivity_ok: bool,
    pub clearance_ok: bool,
}

impl GeomCertificate {
    pub fn passed(&self) -> bool {
        self.det_ok && self.jac_ok && self.injectivity_ok && self.clearance_ok
    }

    pub fn failure(&self) -> Option<String> {
        let mut v = Vec::new();
        if !self.det_ok {
            v.push(format!("det(I+grad eta_delta) min {:.6e} below threshold", self.min_det_b));
        }
        if !self.jac_ok {
            v.push(format!("fluid Jacobian range [{:.6e}, {:.6e}] or |grad Phi| {:.6e} out of bounds", self.min_jac_f, self.max_jac_f, self.max_grad_f));
        }
        if !self.injectivity_ok {
            v.push(format!("interface injectivity: tangent min {:.6e}, secant ratio min {:.6e}", self.min_tangent_norm, self.min_secant_ratio));
        }
        if !self.clearance_ok {
            v.push(format!("interface clearance: max radius {:.6e}", self.max_interface_radius));
        }
        if v.is_empty() {
            None
        } else {
            Some(v.join("; "))
        }
    }
}

pub fn torus_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % (2.0 * PI);
    d.min(2.0 * PI - d)
}

pub fn certify_geometry(
    eta_delta: &DeformationField,
    grid: &InterfaceGrid,
    omega: &PlateField,
    ale: &AleMap,
    th: &CertThresholds,
) -> GeomCertificate {
    let fb = eta_delta.deformation_gradients();
    let min_det_b = fb.iter().map(|f| f.determinant()).fold(f64::INFINITY, f64::min);
    let max_grad_b = fb.iter().map(spectral_norm).fold(0.0, f64::max);
    let min_jac_f = ale.jac.iter().copied().fold(f64::INFINITY, f64::min);
    let max_jac_f = ale.jac.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_grad_f = ale.grads.iter().map(spectral_norm).fold(0.0, f64::max);
    let frame = interface_frame(grid, omega);
    let min_tangent_norm = frame.s.iter().copied().fold(f64::INFINITY, f64::min);
    let pos = interface_positions(grid, omega);
    let mut min_secant_ratio = f64::INFINITY;
    for i in 0..grid.m {
        for j in (i + 1)..grid.m {
            let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
            let r = norm(d) / torus_distance(grid.samples[i], grid.samples[j]);
            min_secant_ratio = min_secant_ratio.min(r);
        }
    }
    let max_interface_radius = pos.iter().map(|p| norm(*p)).fold(0.0, f64::max);
    let half = 0.5 * th.alpha;
    GeomCertificate {
        min_det_b,
        max_grad_b,
        min_jac_f,
        max_jac_f,
        max_grad_f,
        min_tangent_norm,
        min_secant_ratio,
        max_interface_radius,
        det_ok: min_det_b >= th.det_min,
        jac_ok: min_jac_f >= 1.0 / th.jac_bound && max_jac_f <= th.jac_bound && max_grad_f <= th.jac_bound,
        injectivity_ok: min_tangent_norm >= half && min_secant_ratio >= half,
        clearance_ok: max_interface_radius <= 2.0 - th.clearance_margin,
    }
}

/// Length of the radial-then-circular path between two annulus points.
pub fn annulus_path_length(p1: [f64; 2], p2: [f64; 2]) -> Result<f64> {
    let (r1, r2) = (norm(p1), norm(p2));
    for (p, r) in [(p1, r1), (p2, r2)] {
        if !(r > 1.0 && r < 2.0) {
            return Err(FpsiError::InvalidParameter(format!("point ({}, {}) is outside the open annulus", p[0], p[1])));
        }
    }
    let mut dth = p2[1].atan2(p2[0]) - p1[1].atan2(p1[0]);
    // Wrap into (-π, π].
    while dth > PI {
        dth -= 2.0 * PI;
    }
    while dth <= -PI {
        dth += 2.0 * PI;
    }
    Ok((r1 - r2).abs() + r2 * dth.abs())
}

/// Length of the image of a polyline under a nodal P1 map.
///
/// Each segment is split at a resolution finer than the mesh so the image
/// follows the piecewise-linear map.
pub fn curve_length_under_map(mesh: &Mesh2D, loc: &PointLocator, map: &[[f64; 2]], polyline: &[[f64; 2]]) -> Result<f64> {
    let h = 0.25 * mesh.min_edge_length();
    let eval = |x: [f64; 2]| -> Result<[f64; 2]> {
        let (e, l) = loc.locate(mesh, x).ok_or(FpsiError::PointLocation(x[0], x[1]))?;
        Ok(interp_p1(mesh, map, e, l))
    };
    let mut total = 0.0;
    for seg in polyline.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = norm([b[0] - a[0], b[1] - a[1]]);
        let n = ((len / h).ceil() as usize).max(1);
        let mut prev = eval(a)?;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let cur = eval([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])?;
            total += norm([cur[0] - prev[0], cur[1] - prev[1]]);
            prev = cur;
        }
    }
    Ok(total)
}

pub fn polyline_length(polyline: &[[f64; 2]]) -> f64 {
    polyline.windows(2).map(|s| norm([s[1][0] - s[0][0], s[1][1] - s[0][1]])).sum()
}

/// max over elements of the spectral norm of ∇f for nodal P1 data f.
pub fn max_gradient_norm(mesh: &Mesh2D, map: &[[f64; 2]]) -> Result<f64> {
    let geoms = ElementGeom::all(mesh)?;
    Ok(p1_gradients(&geoms, mesh, map).iter().map(spectral_norm).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_annulus_mesh, build_disk_mesh};

    #[test]
    fn lagrangian_map_examples() {
        let m = build_disk_mesh(1);
        let loc = PointLocator::new(&m);
        let zero = DeformationField::zero(&m).unwrap();
        assert_eq!(lagrangian_map(&m, &loc, &zero, [0.3, 0.4]).unwrap(), [0.3, 0.4]);
        let shift = DeformationField::new(&m, vec![[0.1, 0.0]; m.n_nodes()]).unwrap();
        let p = lagrangian_map(&m, &loc, &shift, [0.5, 0.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && p[1].abs() < 1e-15);
        let lin = DeformationField::new(&m, m.nodes.iter().map(|x| [0.1 * x[0], 0.0]).collect()).unwrap();
        let p = lagrangian_map(&m, &loc, &lin, [0.5, 0.0]).unwrap();
        assert!((p[0] - 0.55).abs() < 1e-15);
        assert!(lagrangian_map(&m, &loc, &zero, [3.0, 0.0]).is_err());
    }

    #[test]
    fn jacobian_and_transformed_gradient_affine() {
        let m = build_disk_mesh(1);
        let (a, b) = (0.2, -0.3);
        let eta = DeformationField::new(&m, m.nodes.iter().map(|x| [a * x[0], b * x[1]]).collect()).unwrap();
        for j in biot_jacobian(&eta) {
            assert!((j - (1.0 + a) * (1.0 + b)).abs() < 1e-14);
        }
        let eta = DeformationField::new(&m, m.nodes.iter().map(|x| [a * x[0], 0.0]).collect()).unwrap();
        let f: Vec<f64> = m.nodes.iter().map(|x| x[0]).collect();
        for g in transformed_gradient_scalar(&m, &eta, &f).unwrap() {
            assert!((g[0] - 1.0 / (1.0 + a)).abs() < 1e-14 && g[1].abs() < 1e-14);
        }
    }

    #[test]
    fn ale_identity_and_frame_examples() {
        let mesh = build_annulus_mesh(0);
        let grid = InterfaceGrid::new(24, 6).unwrap();
        let ale = solve_ale_map(&mesh, &grid, &PlateField::zeros(&grid)).unwrap();
        for (v, x) in ale.values.iter().zip(&mesh.nodes) {
            assert!((v[0] - x[0]).abs() < 1e-13 && (v[1] - x[1]).abs() < 1e-13);
        }
        assert!(ale.jac.iter().all(|j| (j - 1.0).abs() < 1e-12));
        let eps = 0.05;
        let om = PlateField::from_fn(&grid, |z| [eps * z.cos(), eps * z.sin()]);
        let fr = interface_frame(&grid, &om);
        for j in 0..grid.m {
            let z = grid.samples[j];
            assert!((fr.n[j][0] - (1.0 + eps) * z.cos()).abs() < 1e-14);
            assert!((fr.tau[j][1] - (1.0 + eps) * z.cos()).abs() < 1e-14);
            assert!((fr.s[j] - (1.0 + eps)).abs() < 1e-14);
        }
    }

    #[test]
    fn certificate_examples() {
        let disk = build_disk_mesh(0);
        let ann = build_annulus_mesh(0);
        let grid = InterfaceGrid::new(24, 6).unwrap();
        let zero = PlateField::zeros(&grid);
        let ale = solve_ale_map(&ann, &grid, &zero).unwrap();
        let c = certify_geometry(&DeformationField::zero(&disk).unwrap(), &grid, &zero, &ale, &CertThresholds::default());
        assert!((c.min_det_b - 1.0).abs() < 1e-15);
        assert!((c.min_jac_f - 1.0).abs() < 1e-12 && (c.max_jac_f - 1.0).abs() < 1e-12);
        assert!((c.min_tangent_norm - 1.0).abs() < 1e-15);
        assert!(c.passed());
        let big = PlateField::from_fn(&grid, |z| [1.2 * z.cos(), 1.2 * z.sin()]);
        let ale = solve_ale_map(&ann, &grid, &big).unwrap();
        let c = certify_geometry(&DeformationField::zero(&disk).unwrap(), &grid, &big, &ale, &CertThresholds::default());
        assert!(!c.clearance_ok);
    }

    #[test]
    fn path_length_examples() {
        let p = [1.5, 0.0];
        assert_eq!(annulus_path_length(p, p).unwrap(), 0.0);
        let th: f64 = 1.1;
        let q = [1.5 * th.cos(), 1.5 * th.sin()];
        assert!((annulus_path_length(p, q).unwrap() - 1.5 * th).abs() < 1e-14);
        assert!(annulus_path_length([0.5, 0.0], p).is_err());
    }
}
