//! Radial-clamp extension, mollification and the regularized interface trace.

use crate::error::{FpsiError, Result};
use crate::geometry::interp_p1;
use crate::interface::{InterfaceGrid, PlateField};
use crate::mesh::{angle, barycentric, norm, Mesh2D, PointLocator};
use crate::quadrature::{gauss_legendre, QuadRule};
use crate::space::ElementGeom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest supported mollifier radius.
pub const MAX_DELTA: f64 = 0.5;

/// Standard bump φ(z) = C exp(-1/(1-|z|²)) scaled to radius δ.
#[derive(Debug, Clone, Copy)]
pub struct Mollifier {
    pub delta: f64,
    pub norm_const: f64,
}

impl Mollifier {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(FpsiError::InvalidParameter(format!("mollifier radius must be positive, got {delta}")));
        }
        // ∫_{|z|<1} exp(-1/(1-|z|²)) dz = π ∫_0^1 exp(-1/(1-u)) du.
        // Composite Gauss rule; the integrand is flat but non-analytic at u = 1.
        let (x, w) = gauss_legendre(10);
        let panels = 200;
        let mut i = 0.0;
        for p in 0..panels {
            let a = p as f64 / panels as f64;
            let h = 1.0 / panels as f64;
            i += x.iter().zip(&w).map(|(t, w)| h * w * (-1.0 / (1.0 - (a + h * t))).exp()).sum::<f64>();
        }
        Ok(Self { delta, norm_const: 1.0 / (PI * i) })
    }

    /// Unscaled profile at |z| = r.
    pub fn profile(&self, r: f64) -> f64 {
        if r >= 1.0 {
            0.0
        } else {
            self.norm_const * (-1.0 / (1.0 - r * r)).exp()
        }
    }

    /// φ_δ at distance ρ from the origin.
    pub fn eval(&self, rho: f64) -> f64 {
        self.profile(rho / self.delta) / (self.delta * self.delta)
    }
}

/// Sub-element quadrature used against the mollifier: every element (and
/// every collar sector) is cut into cells no wider than δ / `cells_per_delta`
/// and each cell gets a Gauss rule of the given polynomial order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MollifierResolution {
    pub cells_per_delta: usize,
    pub order: usize,
}

impl Default for MollifierResolution {
    fn default() -> Self {
        Self { cells_per_delta: 6, order: 9 }
    }
}

impl MollifierResolution {
    pub fn refined(self, factor: usize) -> Self {
        Self { cells_per_delta: self.cells_per_delta * factor, order: self.order }
    }
}

fn clamp_to_disk(x: [f64; 2]) -> [f64; 2] {
    let r = norm(x);
    if r > 1.0 {
        [x[0] / r, x[1] / r]
    } else {
        x
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    norm([a[0] - b[0], a[1] - b[1]])
}

/// Angular sector between consecutive boundary nodes, outside the chord.
#[derive(Debug, Clone, Copy)]
struct Sector {
    th0: f64,
    th1: f64,
    a: [f64; 2],
    b: [f64; 2],
    element: usize,
}

/// Mesh data needed to evaluate Ef and integrate it against φ_δ.
#[derive(Debug, Clone)]
pub struct Extension {
    loc: PointLocator,
    sectors: Vec<Sector>,
    centroid: Vec<[f64; 2]>,
    radius: Vec<f64>,
}

impl Extension {
    pub fn new(mesh: &Mesh2D) -> Self {
        let loc = PointLocator::new(mesh);
        let mut owner = std::collections::HashMap::new();
        for (e, t) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                let (p, q) = (t[k], t[(k + 1) % 3]);
                owner.insert((p.min(q), p.max(q)), e);
            }
        }
        let mut sectors: Vec<Sector> = mesh
            .boundary
            .iter()
            .map(|be| {
                let [p, q] = be.nodes;
                let (a, b) = (mesh.nodes[p], mesh.nodes[q]);
                let ta = angle(a);
                let mut d = angle(b) - ta;
                if d > PI {
                    d -= 2.0 * PI;
                } else if d <= -PI {
                    d += 2.0 * PI;
                }
                let (th0, a, b) = if d >= 0.0 { (ta, a, b) } else { (ta + d, b, a) };
                Sector { th0, th1: th0 + d.abs(), a, b, element: owner[&(p.min(q), p.max(q))] }
            })
            .collect();
        sectors.sort_by(|s, t| s.th0.total_cmp(&t.th0));
        let centroid: Vec<[f64; 2]> = mesh
            .triangles
            .iter()
            .map(|t| {
                let p = t.map(|i| mesh.nodes[i]);
                [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0]
            })
            .collect();
        let radius = mesh
            .triangles
            .iter()
            .zip(&centroid)
            .map(|(t, c)| t.iter().map(|&i| dist(mesh.nodes[i], *c)).fold(0.0, f64::max))
            .collect();
        Self { loc, sectors, centroid, radius }
    }

    fn sector_of(&self, th: f64) -> &Sector {
        for s in &self.sectors {
            let mut t = th;
            if t < s.th0 {
                t += 2.0 * PI;
            }
            if t <= s.th1 {
                return s;
            }
        }
        &self.sectors[0]
    }

    /// Element and (possibly extrapolated) barycentric coordinates defining Ef at `x`.
    pub fn locate(&self, mesh: &Mesh2D, x: [f64; 2]) -> (usize, [f64; 3]) {
        let y = clamp_to_disk(x);
        if let Some(hit) = self.loc.locate(mesh, y) {
            return hit;
        }
        let e = self.sector_of(angle(y)).element;
        let t = mesh.triangles[e];
        (e, barycentric(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]], y))
    }

    /// Ef(x) = f(x) inside the disk and f(x/|x|) outside. Points between the
    /// polygonal boundary and the unit circle use the affine extension of the
    /// element on the adjacent boundary edge.
    pub fn eval(&self, mesh: &Mesh2D, values: &[[f64; 2]], x: [f64; 2]) -> [f64; 2] {
        let (e, l) = self.locate(mesh, x);
        interp_p1(mesh, values, e, l)
    }

    /// Weights of (Ef * φ_δ)(x) on the nodal values.
    pub fn row(&self, mesh: &Mesh2D, moll: &Mollifier, res: MollifierResolution, x: [f64; 2]) -> Row {
        let delta = moll.delta;
        let mut acc: Vec<(usize, f64)> = Vec::new();
        let mut mass = 0.0;
        let mut add = |t: [usize; 3], l: [f64; 3], w: f64| {
            for a in 0..3 {
                acc.push((t[a], w * l[a]));
            }
            mass += w;
        };
        let tri = QuadRule::triangle(res.order);
        let bary = tri.barycentric();
        for (e, t) in mesh.triangles.iter().enumerate() {
            if dist(x, self.centroid[e]) >= delta + self.radius[e] {
                continue;
            }
            let p = t.map(|i| mesh.nodes[i]);
            let s = ((res.cells_per_delta as f64) * 2.0 * self.radius[e] / delta).ceil().max(1.0) as usize;
            let area = 0.5 * cross([p[1][0] - p[0][0], p[1][1] - p[0][1]], [p[2][0] - p[0][0], p[2][1] - p[0][1]]);
            let sub_area = area.abs() / (s * s) as f64;
            let sub_radius = self.radius[e] / s as f64 * 2.0;
            let at = |l: [f64; 3]| [l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0], l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1]];
            let sf = s as f64;
            for i in 0..s {
                for j in 0..s - i {
                    let mut cells = vec![[[i, j], [i + 1, j], [i, j + 1]]];
                    if i + j + 1 < s {
                        cells.push([[i + 1, j], [i + 1, j + 1], [i, j + 1]]);
                    }
                    for c in cells {
                        let v = c.map(|[a, b]| [a as f64 / sf, b as f64 / sf]);
                        let cl = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
                        if dist(x, at([1.0 - cl[0] - cl[1], cl[0], cl[1]])) >= delta + sub_radius {
                            continue;
                        }
                        for (q, wq) in bary.iter().zip(&tri.weights) {
                            let u = q[0] * v[0][0] + q[1] * v[1][0] + q[2] * v[2][0];
                            let w = q[0] * v[0][1] + q[1] * v[1][1] + q[2] * v[2][1];
                            let l = [1.0 - u - w, u, w];
                            let phi = moll.eval(dist(x, at(l)));
                            if phi > 0.0 {
                                add(*t, l, 2.0 * sub_area * wq * phi);
                            }
                        }
                    }
                }
            }
        }
        let (gx, gw) = gauss_legendre(res.order / 2 + 1);
        let r_out = 1.0 + delta;
        for sec in &self.sectors {
            let mid = 0.5 * (sec.th0 + sec.th1);
            let arc = sec.th1 - sec.th0;
            let c = [mid.cos(), mid.sin()];
            if dist(x, c) >= 2.0 * delta + arc {
                continue;
            }
            let t = mesh.triangles[sec.element];
            let p = t.map(|i| mesh.nodes[i]);
            let ab = [sec.b[0] - sec.a[0], sec.b[1] - sec.a[1]];
            let n_th = ((res.cells_per_delta as f64) * arc / delta).ceil().max(1.0) as usize;
            let n_r = res.cells_per_delta.max(1);
            let dth = arc / n_th as f64;
            for it in 0..n_th {
                for (xt, wt) in gx.iter().zip(&gw) {
                    let th = sec.th0 + (it as f64 + xt) * dth;
                    let u = [th.cos(), th.sin()];
                    let rp = cross(sec.a, ab) / cross(u, ab);
                    let lu = barycentric(p[0], p[1], p[2], u);
                    // chord to circle: one panel, Ef affine in y
                    for (xr, wr) in gx.iter().zip(&gw) {
                        let r = rp + (1.0 - rp) * xr;
                        let y = [r * u[0], r * u[1]];
                        let phi = moll.eval(dist(x, y));
                        if phi > 0.0 {
                            add(t, barycentric(p[0], p[1], p[2], y), wt * dth * wr * (1.0 - rp) * r * phi);
                        }
                    }
                    // outside the circle Ef is constant along rays
                    let dr = (r_out - 1.0) / n_r as f64;
                    for ir in 0..n_r {
                        for (xr, wr) in gx.iter().zip(&gw) {
                            let r = 1.0 + (ir as f64 + xr) * dr;
                            let phi = moll.eval(dist(x, [r * u[0], r * u[1]]));
                            if phi > 0.0 {
                                add(t, lu, wt * dth * wr * dr * r * phi);
                            }
                        }
                    }
                }
            }
        }
        acc.sort_by_key(|e| e.0);
        let mut row: Row = Vec::new();
        for (k, w) in acc {
            match row.last_mut() {
                Some(last) if last.0 == k => last.1 += w,
                _ => row.push((k, w)),
            }
        }
        row.retain(|e| e.1 != 0.0);
        for e in &mut row {
            e.1 /= mass;
        }
        row
    }
}

/// Ef at a single point; builds the extension data on every call.
pub fn extend(mesh: &Mesh2D, values: &[[f64; 2]], x: [f64; 2]) -> [f64; 2] {
    Extension::new(mesh).eval(mesh, values, x)
}

/// Sparse row: (node, weight) pairs sorted by node.
pub type Row = Vec<(usize, f64)>;

/// Linear map from nodal Biot data to mollified values at fixed points.
#[derive(Debug, Clone)]
pub struct RegularizationOperator {
    pub delta: f64,
    pub resolution: MollifierResolution,
    pub n_nodes: usize,
    /// Rows evaluating η^δ at the Biot mesh nodes.
    pub node_rows: Vec<Row>,
    /// Rows evaluating η^δ at the interface samples.
    pub sample_rows: Vec<Row>,
    /// Regularized trace: row-major `n_coeffs × n_nodes`, Fourier projection of `sample_rows`.
    pub trace: Vec<f64>,
    /// Band-limited trace at the samples: row-major `M × n_nodes`.
    pub trace_samples: Vec<f64>,
    /// Columns with a nonzero entry in `trace_samples`.
    pub trace_support: Vec<usize>,
    pub under_resolved: bool,
    pub n_coeffs: usize,
    pub m: usize,
}

pub fn apply_row(row: &Row, values: &[[f64; 2]]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for &(k, w) in row {
        out[0] += w * values[k][0];
        out[1] += w * values[k][1];
    }
    out
}

impl RegularizationOperator {
    pub fn build(mesh: &Mesh2D, grid: &InterfaceGrid, delta: f64, quad: &QuadRule, res: MollifierResolution) -> Result<Self> {
        if !(delta > 0.0 && delta <= MAX_DELTA) {
            return Err(FpsiError::InvalidParameter(format!("delta must lie in (0, {MAX_DELTA}], got {delta}")));
        }
        if res.cells_per_delta == 0 || res.order == 0 {
            return Err(FpsiError::InvalidParameter("mollifier quadrature needs at least one cell and order >= 1".into()));
        }
        ElementGeom::all(mesh)?;
        let moll = Mollifier::new(delta)?;
        let ext = Extension::new(mesh);
        let node_rows: Vec<Row> = mesh.nodes.par_iter().map(|&x| ext.row(mesh, &moll, res, x)).collect();
        let sample_rows: Vec<Row> = (0..grid.m)
            .into_par_iter()
            .map(|j| ext.row(mesh, &moll, res, [grid.cos_at(1, j), grid.sin_at(1, j)]))
            .collect();
        let nv = mesh.n_nodes();
        let nc = grid.n_coeffs();
        let proj = grid.projection_matrix();
        let mut trace = vec![0.0; nc * nv];
        for i in 0..nc {
            for (j, row) in sample_rows.iter().enumerate() {
                let p = proj[i * grid.m + j];
                if p == 0.0 {
                    continue;
                }
                for &(k, w) in row {
                    trace[i * nv + k] += p * w;
                }
            }
        }
        let synth = grid.synthesis_matrix();
        let mut trace_samples = vec![0.0; grid.m * nv];
        for j in 0..grid.m {
            for i in 0..nc {
                let s = synth[j * nc + i];
                if s == 0.0 {
                    continue;
                }
                for k in 0..nv {
                    trace_samples[j * nv + k] += s * trace[i * nv + k];
                }
            }
        }
        let trace_support = (0..nv).filter(|&k| (0..grid.m).any(|j| trace_samples[j * nv + k] != 0.0)).collect();
        let h_q = mesh.min_edge_length() / (quad.len() as f64).sqrt();
        Ok(Self {
            delta,
            resolution: res,
            n_nodes: nv,
            node_rows,
            sample_rows,
            trace,
            trace_samples,
            trace_support,
            under_resolved: delta < 2.0 * h_q,
            n_coeffs: nc,
            m: grid.m,
        })
    }

    /// Rows at arbitrary points (e.g. element quadrature points).
    pub fn rows_at(&self, mesh: &Mesh2D, points: &[[f64; 2]]) -> Result<Vec<Row>> {
        let moll = Mollifier::new(self.delta)?;
        let ext = Extension::new(mesh);
        Ok(points.par_iter().map(|&x| ext.row(mesh, &moll, self.resolution, x)).collect())
    }

    /// Rows at every quadrature point of every element, element-major.
    pub fn quadrature_rows(&self, mesh: &Mesh2D, quad: &QuadRule) -> Result<Vec<Row>> {
        let geoms = ElementGeom::all(mesh)?;
        let bary = quad.barycentric();
        let pts: Vec<[f64; 2]> = geoms.iter().flat_map(|g| bary.iter().map(move |l| g.point(*l))).collect();
        self.rows_at(mesh, &pts)
    }

    /// η^δ at the Biot nodes.
    pub fn regularize_nodes(&self, values: &[[f64; 2]]) -> Vec<[f64; 2]> {
        self.node_rows.iter().map(|r| apply_row(r, values)).collect()
    }

    /// η^δ at the interface samples (before Fourier projection).
    pub fn regularize_samples(&self, values: &[[f64; 2]]) -> Vec<[f64; 2]> {
        self.sample_rows.iter().map(|r| apply_row(r, values)).collect()
    }

    /// Fourier coefficients of η^δ|_Γ (the regularized trace R η).
    pub fn regularized_trace(&self, values: &[[f64; 2]]) -> PlateField {
        let nv = self.n_nodes;
        let mut c = [vec![0.0; self.n_coeffs], vec![0.0; self.n_coeffs]];
        for i in 0..self.n_coeffs {
            for k in 0..nv {
                let t = self.trace[i * nv + k];
                c[0][i] += t * values[k][0];
                c[1][i] += t * values[k][1];
            }
        }
        PlateField { c }
    }

    /// Row `j` of the band-limited trace at the samples.
    pub fn trace_sample_row(&self, j: usize) -> &[f64] {
        &self.trace_samples[j * self.n_nodes..(j + 1) * self.n_nodes]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_disk_mesh;

    #[test]
    fn mollifier_has_unit_mass() {
        let m = Mollifier::new(0.3).unwrap();
        // Independent check with a fine midpoint rule in polar coordinates.
        let n = 200_000;
        let dr = m.delta / n as f64;
        let total: f64 = (0..n).map(|i| {
            let r = (i as f64 + 0.5) * dr;
            2.0 * PI * r * m.eval(r) * dr
        }).sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn constants_and_traces() {
        let mesh = build_disk_mesh(1);
        let grid = InterfaceGrid::new(48, 8).unwrap();
        let op = RegularizationOperator::build(&mesh, &grid, 0.25, &QuadRule::triangle(5), MollifierResolution::default()).unwrap();
        let c = vec![[0.3, -1.2]; mesh.n_nodes()];
        for v in op.regularize_nodes(&c) {
            assert!((v[0] - 0.3).abs() < 1e-12 && (v[1] + 1.2).abs() < 1e-12);
        }
        let t = op.regularized_trace(&c);
        assert!((t.c[0][0] - 0.3).abs() < 1e-12 && (t.c[1][0] + 1.2).abs() < 1e-12);
        assert!(t.c[0][1..].iter().chain(&t.c[1][1..]).all(|v| v.abs() < 1e-12));
        let z = op.regularized_trace(&vec![[0.0; 2]; mesh.n_nodes()]);
        assert_eq!(z.max_abs_coeff(), 0.0);
        assert!(RegularizationOperator::build(&mesh, &grid, 0.6, &QuadRule::triangle(5), MollifierResolution::default()).is_err());
    }
}
