//! One implicit Biot/fluid substep: assembly of the coupled saddle-point
//! system (velocity, divergence multiplier, Biot displacement, pore
//! pressure) with the regularized kinematic coupling eliminated, its solve,
//! and the energy balance of the substep.
//!
//! Rows are scaled as in the Lax–Milgram form: everything is multiplied by
//! Δt², and fluid and pressure test functions carry one more factor Δt.

use crate::discretization::Discretization;
use crate::error::{FpsiError, Result};
use crate::geometry::{certify_geometry, discrete_ale_velocity, interface_frame, p1_gradients, spectral_norm, AleMap, CertThresholds, DeformationField, GeomCertificate, InterfaceFrame};
use crate::interface::PlateField;
use crate::space::{p2_gradients, p2_values};
use crate::sparse::{dot, norm2, CsrMatrix, Triplets};
use nalgebra::Matrix2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Physical constants of the coupled model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub rho_b: f64,
    pub mu_e: f64,
    pub lambda_e: f64,
    pub mu_v: f64,
    pub lambda_v: f64,
    pub c0: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub nu: f64,
    pub beta: f64,
    /// Plate thickness.
    pub h: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { rho_b: 1.0, mu_e: 1.0, lambda_e: 1.0, mu_v: 1.0, lambda_v: 1.0, c0: 1.0, alpha: 1.0, kappa: 1.0, nu: 0.01, beta: 1.0, h: 1.0 }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho_b", self.rho_b),
            ("mu_e", self.mu_e),
            ("lambda_e", self.lambda_e),
            ("c0", self.c0),
            ("kappa", self.kappa),
            ("nu", self.nu),
            ("beta", self.beta),
            ("h", self.h),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FpsiError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(FpsiError::InvalidParameter(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        let (mv, lv) = (self.mu_v, self.lambda_v);
        let both_zero = mv == 0.0 && lv == 0.0;
        let both_pos = mv > 0.0 && lv > 0.0 && mv.is_finite() && lv.is_finite();
        if !(both_zero || both_pos) {
            return Err(FpsiError::InvalidParameter(format!("mu_v and lambda_v must be both zero or both positive (got {mv}, {lv})")));
        }
        Ok(())
    }
}

/// Fluid velocity (P2, interleaved) and divergence multiplier (P1) on the annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
}

impl FluidState {
    pub fn zeros(disc: &Discretization) -> Self {
        Self { u: vec![0.0; disc.n_velocity_dofs()], pi: vec![0.0; disc.n_annulus_nodes()] }
    }
}

/// Biot displacement at two levels and pore pressure on the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct BiotState {
    pub eta: Vec<[f64; 2]>,
    /// Displacement one step earlier; ξ = (η − η_prev)/Δt.
    pub eta_prev: Vec<[f64; 2]>,
    pub p: Vec<f64>,
}

impl BiotState {
    pub fn zeros(disc: &Discretization) -> Self {
        let n = disc.n_disk_nodes();
        Self { eta: vec![[0.0; 2]; n], eta_prev: vec![[0.0; 2]; n], p: vec![0.0; n] }
    }

    pub fn xi(&self, dt: f64) -> Vec<[f64; 2]> {
        self.eta.iter().zip(&self.eta_prev).map(|(a, b)| [(a[0] - b[0]) / dt, (a[1] - b[1]) / dt]).collect()
    }
}

fn flat(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|p| [p[0], p[1]]).collect()
}

fn diff(a: &[[f64; 2]], b: &[[f64; 2]]) -> Vec<[f64; 2]> {
    a.iter().zip(b).map(|(x, y)| [x[0] - y[0], x[1] - y[1]]).collect()
}

/// Frozen geometry of one step: ALE maps at ω^n and ω^{n+1}, the ALE
/// velocity, the interface frame at ω^n and the regularized Biot geometry
/// built from (η^n)^δ.
#[derive(Debug, Clone)]
pub struct StepGeometry {
    pub ale_n: AleMap,
    pub ale_next: AleMap,
    pub w: Vec<[f64; 2]>,
    pub frame: InterfaceFrame,
    pub eta_delta: Vec<[f64; 2]>,
    pub fb: Vec<Matrix2<f64>>,
    pub fb_inv: Vec<Matrix2<f64>>,
    pub jb: Vec<f64>,
    /// Certificate of ((η^n)^δ, ω^n).
    pub cert_n: GeomCertificate,
    /// Certificate of ((η^n)^δ, ω^{n+1}).
    pub cert_next: GeomCertificate,
}

impl StepGeometry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        disc: &Discretization,
        omega_n: &PlateField,
        omega_next: &PlateField,
        ale_n: AleMap,
        ale_next: AleMap,
        eta_n: &[[f64; 2]],
        dt: f64,
        th: &CertThresholds,
    ) -> Result<Self> {
        let eta_delta = disc.reg.regularize_nodes(eta_n);
        let field = DeformationField { values: eta_delta.clone(), grads: p1_gradients(&disc.disk_geoms, &disc.disk, &eta_delta) };
        let cert_n = certify_geometry(&field, &disc.grid, omega_n, &ale_n, th);
        let cert_next = certify_geometry(&field, &disc.grid, omega_next, &ale_next, th);
        let fb = field.deformation_gradients();
        let mut fb_inv = Vec::with_capacity(fb.len());
        let mut jb = Vec::with_capacity(fb.len());
        for (e, f) in fb.iter().enumerate() {
            let d = f.determinant();
            if d == 0.0 || !d.is_finite() {
                return Err(FpsiError::SingularElement { element: e });
            }
            jb.push(d);
            fb_inv.push(Matrix2::new(f[(1, 1)], -f[(0, 1)], -f[(1, 0)], f[(0, 0)]) / d);
        }
        let w = discrete_ale_velocity(&ale_next, &ale_n, dt);
        let frame = interface_frame(&disc.grid, omega_n);
        Ok(Self { ale_n, ale_next, w, frame, eta_delta, fb, fb_inv, jb, cert_n, cert_next })
    }

    pub fn check(&self) -> Result<()> {
        for c in [&self.cert_n, &self.cert_next] {
            if let Some(msg) = c.failure() {
                return Err(FpsiError::Certificate(msg));
            }
        }
        Ok(())
    }
}

/// Unknown ordering of the step system: free velocity dofs, multiplier,
/// displacement (interleaved), pressure.
#[derive(Debug, Clone)]
pub struct Layout {
    /// System index of every P2 velocity dof, `None` when constrained.
    pub u_map: Vec<Option<usize>>,
    pub n_u: usize,
    pub off_pi: usize,
    pub off_eta: usize,
    pub off_p: usize,
    pub n: usize,
}

impl Layout {
    pub fn new(disc: &Discretization) -> Self {
        let mut u_map = vec![None; disc.n_velocity_dofs()];
        let mut n_u = 0;
        for (d, &fixed) in disc.velocity.constrained.iter().enumerate() {
            if !fixed {
                u_map[d] = Some(n_u);
                n_u += 1;
            }
        }
        let off_pi = n_u;
        let off_eta = off_pi + disc.n_annulus_nodes();
        let off_p = off_eta + 2 * disc.n_disk_nodes();
        let n = off_p + disc.n_disk_nodes();
        Self { u_map, n_u, off_pi, off_eta, off_p, n }
    }

    pub fn pack(&self, u: &[f64], pi: &[f64], eta: &[[f64; 2]], p: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        for (d, m) in self.u_map.iter().enumerate() {
            if let Some(i) = m {
                x[*i] = u[d];
            }
        }
        x[self.off_pi..self.off_eta].copy_from_slice(pi);
        x[self.off_eta..self.off_p].copy_from_slice(&flat(eta));
        x[self.off_p..].copy_from_slice(p);
        x
    }

    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<[f64; 2]>, Vec<f64>) {
        let u = self.u_map.iter().map(|m| m.map_or(0.0, |i| x[i])).collect();
        let pi = x[self.off_pi..self.off_eta].to_vec();
        let eta = x[self.off_eta..self.off_p].chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let p = x[self.off_p..].to_vec();
        (u, pi, eta, p)
    }
}

/// Data of the previous level entering one step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub u_n: &'a [f64],
    pub biot_n: &'a BiotState,
    pub zeta_half: &'a PlateField,
}

pub struct StepSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
    pub dt: f64,
}

/// Values of the fluid element basis at one quadrature point.
struct FluidQp {
    wgt: f64,
    phi: [f64; 6],
    /// Transformed gradients ∇φ (∇Φ)^{-1}.
    g: [[f64; 2]; 6],
    lam: [f64; 3],
}

fn fluid_qps(disc: &Discretization, e: usize, finv: &Matrix2<f64>) -> Vec<FluidQp> {
    let geo = &disc.annulus_geoms[e];
    disc.fluid_quad
        .barycentric()
        .iter()
        .zip(&disc.fluid_quad.weights)
        .map(|(lam, w)| {
            let phi = p2_values(*lam);
            let dphi = p2_gradients(*lam, &geo.grad_lam);
            let mut g = [[0.0; 2]; 6];
            for a in 0..6 {
                for d in 0..2 {
                    g[a][d] = dphi[a][0] * finv[(0, d)] + dphi[a][1] * finv[(1, d)];
                }
            }
            FluidQp { wgt: 2.0 * geo.area * w, phi, g, lam: *lam }
        })
        .collect()
}

fn local_u(u: &[f64], loc: &[usize], phi: &[f64; 6]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for a in 0..6 {
        out[0] += phi[a] * u[2 * loc[a]];
        out[1] += phi[a] * u[2 * loc[a] + 1];
    }
    out
}

/// Local fluid contributions of one element.
struct FluidLocal {
    a: [[f64; 12]; 12],
    b: [[f64; 12]; 3],
    rhs: [f64; 12],
}

pub fn assemble_step(disc: &Discretization, prm: &PhysicalParams, dt: f64, geom: &StepGeometry, input: StepInput) -> Result<StepSystem> {
    prm.validate()?;
    if !(dt > 0.0) {
        return Err(FpsiError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    geom.check()?;
    let layout = Layout::new(disc);
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let mut trip = Triplets::new(layout.n, layout.n);
    let mut rhs = vec![0.0; layout.n];
    let u_n = input.u_n;

    // Fluid volume terms.
    let locals: Vec<FluidLocal> = (0..disc.annulus.n_triangles())
        .into_par_iter()
        .map(|e| {
            let loc = &disc.velocity.elements[e];
            let tri = disc.annulus.triangles[e];
            let j0 = geom.ale_n.jac[e];
            let j1 = geom.ale_next.jac[e];
            let mut out = FluidLocal { a: [[0.0; 12]; 12], b: [[0.0; 12]; 3], rhs: [0.0; 12] };
            for q in fluid_qps(disc, e, &geom.ale_n.inv_grads[e]) {
                let un = local_u(u_n, loc, &q.phi);
                let mut w = [0.0; 2];
                for v in 0..3 {
                    w[0] += q.lam[v] * geom.w[tri[v]][0];
                    w[1] += q.lam[v] * geom.w[tri[v]][1];
                }
                let adv = [un[0] - w[0], un[1] - w[1]];
                let ag: Vec<f64> = q.g.iter().map(|g| adv[0] * g[0] + adv[1] * g[1]).collect();
                let jw = j0 * q.wgt;
                for a in 0..6 {
                    for c in 0..2 {
                        out.rhs[2 * a + c] += dt2 * jw * q.phi[a] * un[c];
                    }
                    for b in 0..6 {
                        let m = q.wgt * q.phi[a] * q.phi[b];
                        let diag = dt2 * j0 * m + 0.5 * dt2 * (j1 - j0) * m + 0.5 * dt3 * jw * (ag[b] * q.phi[a] - ag[a] * q.phi[b]);
                        let gg = q.g[a][0] * q.g[b][0] + q.g[a][1] * q.g[b][1];
                        for c in 0..2 {
                            for d in 0..2 {
                                let dd = if c == d { gg } else { 0.0 };
                                let mut v = 2.0 * prm.nu * dt3 * jw * 0.5 * (dd + q.g[a][d] * q.g[b][c]);
                                if c == d {
                                    v += diag;
                                }
                                out.a[2 * a + c][2 * b + d] += v;
                            }
                        }
                    }
                }
                for v in 0..3 {
                    for b in 0..6 {
                        for d in 0..2 {
                            out.b[v][2 * b + d] -= dt2 * jw * q.lam[v] * q.g[b][d];
                        }
                    }
                }
            }
            out
        })
        .collect();
    for (e, l) in locals.iter().enumerate() {
        let loc = &disc.velocity.elements[e];
        let tri = disc.annulus.triangles[e];
        let gi = |k: usize| layout.u_map[2 * loc[k / 2] + k % 2];
        for r in 0..12 {
            let Some(i) = gi(r) else { continue };
            rhs[i] += l.rhs[r];
            for s in 0..12 {
                if let Some(j) = gi(s) {
                    trip.push(i, j, l.a[r][s]);
                }
            }
            for v in 0..3 {
                trip.push(i, layout.off_pi + tri[v], l.b[v][r]);
                trip.push(layout.off_pi + tri[v], i, l.b[v][r]);
            }
        }
    }

    // Biot volume terms with constant matrices.
    let b = &disc.biot;
    let c_strain = 2.0 * prm.mu_e * dt2 + 2.0 * prm.mu_v * dt;
    let c_div = prm.lambda_e * dt2 + prm.lambda_v * dt;
    let eta_n = flat(&input.biot_n.eta);
    let eta_prev = flat(&input.biot_n.eta_prev);
    for (mat, scale) in [(&b.mass, prm.rho_b), (&b.strain, c_strain), (&b.div, c_div)] {
        for i in 0..mat.nrows {
            for (j, v) in mat.row(i) {
                trip.push(layout.off_eta + i, layout.off_eta + j, scale * v);
            }
        }
    }
    let inertia: Vec<f64> = eta_n.iter().zip(&eta_prev).map(|(a, b)| 2.0 * a - b).collect();
    let m_in = b.mass.matvec(&inertia);
    let s_n = b.strain.matvec(&eta_n);
    let d_n = b.div.matvec(&eta_n);
    for i in 0..eta_n.len() {
        rhs[layout.off_eta + i] += prm.rho_b * m_in[i] + 2.0 * prm.mu_v * dt * s_n[i] + prm.lambda_v * dt * d_n[i];
    }
    for i in 0..b.p_mass.nrows {
        for (j, v) in b.p_mass.row(i) {
            trip.push(layout.off_p + i, layout.off_p + j, prm.c0 * dt2 * v);
        }
    }
    let mp = b.p_mass.matvec(&input.biot_n.p);
    for i in 0..mp.len() {
        rhs[layout.off_p + i] += prm.c0 * dt2 * mp[i];
    }

    // Darcy and regularized pressure-coupling terms.
    for (e, t) in disc.disk.triangles.iter().enumerate() {
        let geo = &disc.disk_geoms[e];
        let finv = &geom.fb_inv[e];
        let je = geom.jb[e];
        let g: Vec<[f64; 2]> = (0..3)
            .map(|a| {
                let gl = geo.grad_lam[a];
                [gl[0] * finv[(0, 0)] + gl[1] * finv[(1, 0)], gl[0] * finv[(0, 1)] + gl[1] * finv[(1, 1)]]
            })
            .collect();
        for a in 0..3 {
            for bb in 0..3 {
                let v = prm.kappa * dt3 * je * geo.area * (g[a][0] * g[bb][0] + g[a][1] * g[bb][1]);
                trip.push(layout.off_p + t[a], layout.off_p + t[bb], v);
            }
        }
        if prm.alpha == 0.0 {
            continue;
        }
        // ∫_e J_b p ∇^b·ψ^δ = J_e (area/3) Σ p_m · Σ_(k,c) ψ_(k,c) ge[(k,c)]
        let mut ge: Vec<(usize, f64)> = Vec::new();
        for a in 0..3 {
            for &(k, s) in &disc.reg.node_rows[t[a]] {
                for c in 0..2 {
                    ge.push((2 * k + c, s * g[a][c]));
                }
            }
        }
        ge.sort_by_key(|x| x.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(ge.len());
        for (k, v) in ge {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += v,
                _ => merged.push((k, v)),
            }
        }
        let coef = prm.alpha * dt2 * je * geo.area / 3.0;
        let div_n: f64 = merged.iter().map(|&(k, v)| v * eta_n[k]).sum();
        for &m in t {
            for &(k, v) in &merged {
                trip.push(layout.off_eta + k, layout.off_p + m, -coef * v);
                trip.push(layout.off_p + m, layout.off_eta + k, coef * v);
            }
            rhs[layout.off_p + m] += coef * div_n;
        }
    }

    // Interface terms, trapezoid rule over the samples.
    let grid = &disc.grid;
    let wz = grid.weight();
    let support = &disc.reg.trace_support;
    let ns = support.len();
    let t_eta_n = disc.trace_samples(&input.biot_n.eta);
    let zeta_half = input.zeta_half.samples(grid);
    // Gram blocks Σ_j d_j^{cd} T_jk T_jl over the trace support.
    let mut gram = vec![[0.0f64; 4]; ns * ns];
    for j in 0..grid.m {
        let n = geom.frame.n[j];
        let tau = geom.frame.tau[j];
        let s = geom.frame.s[j];
        let un = disc.u_at_sample(u_n, j);
        let trow = disc.reg.trace_sample_row(j);
        let tv: Vec<f64> = support.iter().map(|&k| trow[k]).collect();
        let urow = &disc.u_trace[j];
        let prow = &disc.p_trace[j];
        let te = t_eta_n[j];
        let te_n = te[0] * n[0] + te[1] * n[1];
        let te_t = te[0] * tau[0] + te[1] * tau[1];
        let bs = prm.beta / s;

        let mut dcd = [0.0; 4];
        for c in 0..2 {
            for d in 0..2 {
                dcd[2 * c + d] = wz * (if c == d { prm.h } else { 0.0 } + bs * dt * tau[c] * tau[d]);
            }
        }
        for (x, &tk) in tv.iter().enumerate() {
            if tk == 0.0 {
                continue;
            }
            for (y, &tl) in tv.iter().enumerate() {
                let p = tk * tl;
                let cell = &mut gram[x * ns + y];
                for q in 0..4 {
                    cell[q] += dcd[q] * p;
                }
            }
        }

        for &(a, ua) in urow {
            for c in 0..2 {
                let Some(i) = layout.u_map[2 * a + c] else { continue };
                for &(bn, ub) in urow {
                    for d in 0..2 {
                        let Some(jj) = layout.u_map[2 * bn + d] else { continue };
                        let v = 0.5 * dt3 * ua * ub * n[d] * un[c] - 0.5 * dt3 * ub * un[d] * ua * n[c] + bs * dt3 * ub * tau[d] * ua * tau[c];
                        trip.push(i, jj, wz * v);
                    }
                }
                for (x, &k) in support.iter().enumerate() {
                    let tk = tv[x];
                    if tk == 0.0 {
                        continue;
                    }
                    for d in 0..2 {
                        let v = -0.5 * dt2 * tk * n[d] * un[c] * ua - bs * dt2 * tk * tau[d] * ua * tau[c];
                        trip.push(i, layout.off_eta + 2 * k + d, wz * v);
                        let v = 0.5 * dt2 * ua * un[c] * tk * n[d] - bs * dt2 * ua * tau[c] * tk * tau[d];
                        trip.push(layout.off_eta + 2 * k + d, i, wz * v);
                    }
                }
                for &(m, pm) in prow {
                    trip.push(i, layout.off_p + m, wz * dt3 * pm * ua * n[c]);
                    trip.push(layout.off_p + m, i, -wz * dt3 * ua * n[c] * pm);
                }
                rhs[i] += wz * (-0.5 * dt2 * te_n * un[c] * ua - bs * dt2 * te_t * tau[c] * ua);
            }
        }
        for (x, &k) in support.iter().enumerate() {
            let tk = tv[x];
            if tk == 0.0 {
                continue;
            }
            for c in 0..2 {
                for &(m, pm) in prow {
                    trip.push(layout.off_eta + 2 * k + c, layout.off_p + m, -wz * dt2 * pm * tk * n[c]);
                    trip.push(layout.off_p + m, layout.off_eta + 2 * k + c, wz * dt2 * tk * n[c] * pm);
                }
                let target = te[c] + dt * zeta_half[c][j];
                rhs[layout.off_eta + 2 * k + c] += wz * (prm.h * tk * target + bs * dt * te_t * tk * tau[c]);
            }
        }
        for &(m, pm) in prow {
            rhs[layout.off_p + m] += wz * dt2 * te_n * pm;
        }
    }
    for (x, &k) in support.iter().enumerate() {
        for (y, &l) in support.iter().enumerate() {
            let cell = gram[x * ns + y];
            for c in 0..2 {
                for d in 0..2 {
                    let v = cell[2 * c + d];
                    if v != 0.0 {
                        trip.push(layout.off_eta + 2 * k + c, layout.off_eta + 2 * l + d, v);
                    }
                }
            }
        }
    }
    Ok(StepSystem { matrix: trip.to_csr(), rhs, layout, dt })
}

/// Solution of one step.
#[derive(Debug, Clone)]
pub struct StepSolution {
    pub fluid: FluidState,
    pub eta: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    /// ζ^{n+1} = R(η^{n+1} − η^n)/Δt.
    pub zeta: PlateField,
    /// ‖Ax − b‖ / max(‖b‖, ‖Ax‖).
    pub residual: f64,
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
    let scale = norm2(b).max(norm2(&ax));
    if scale == 0.0 {
        0.0
    } else {
        norm2(&r) / scale
    }
}

pub const SOLVE_TOLERANCE: f64 = 1e-10;

pub fn solve_step(disc: &Discretization, system: &StepSystem, eta_n: &[[f64; 2]], tolerance: f64) -> Result<StepSolution> {
    let lu = system.matrix.factor()?;
    let mut x = lu.solve(&system.rhs)?;
    // one step of iterative refinement
    let ax = system.matrix.matvec(&x);
    let r: Vec<f64> = system.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    if norm2(&r) > 0.0 {
        let dx = lu.solve(&r)?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
    }
    let residual = relative_residual(&system.matrix, &x, &system.rhs);
    if !(residual <= tolerance) {
        return Err(FpsiError::Residual { residual, tolerance });
    }
    let (u, pi, eta, p) = system.layout.unpack(&x);
    let zeta = disc.reg.regularized_trace(&diff(&eta, eta_n)).scale(1.0 / system.dt);
    Ok(StepSolution { fluid: FluidState { u, pi }, eta, p, zeta, residual })
}

/// ½∫ J |u|² with J from the given ALE map.
pub fn fluid_kinetic(disc: &Discretization, u: &[f64], ale: &AleMap) -> f64 {
    let bary = disc.fluid_quad.barycentric();
    (0..disc.annulus.n_triangles())
        .map(|e| {
            let loc = &disc.velocity.elements[e];
            let area = disc.annulus_geoms[e].area;
            bary.iter()
                .zip(&disc.fluid_quad.weights)
                .map(|(lam, w)| {
                    let v = local_u(u, loc, &p2_values(*lam));
                    0.5 * ale.jac[e] * 2.0 * area * w * (v[0] * v[0] + v[1] * v[1])
                })
                .sum::<f64>()
        })
        .sum()
}

/// 2ν ∫ J |D^ω u|².
pub fn fluid_viscous(disc: &Discretization, nu: f64, u: &[f64], ale: &AleMap) -> f64 {
    (0..disc.annulus.n_triangles())
        .map(|e| {
            let loc = &disc.velocity.elements[e];
            fluid_qps(disc, e, &ale.inv_grads[e])
                .iter()
                .map(|q| {
                    let mut gu = [[0.0; 2]; 2];
                    for a in 0..6 {
                        for c in 0..2 {
                            for d in 0..2 {
                                gu[c][d] += u[2 * loc[a] + c] * q.g[a][d];
                            }
                        }
                    }
                    let off = 0.5 * (gu[0][1] + gu[1][0]);
                    let dd = gu[0][0] * gu[0][0] + gu[1][1] * gu[1][1] + 2.0 * off * off;
                    2.0 * nu * ale.jac[e] * q.wgt * dd
                })
                .sum::<f64>()
        })
        .sum()
}

/// Σ_q ∫ J_e q ∇^ω·u for every multiplier node, i.e. the constraint residual.
pub fn divergence_residual(disc: &Discretization, u: &[f64], ale: &AleMap) -> Vec<f64> {
    let mut out = vec![0.0; disc.n_annulus_nodes()];
    for e in 0..disc.annulus.n_triangles() {
        let loc = &disc.velocity.elements[e];
        let tri = disc.annulus.triangles[e];
        for q in fluid_qps(disc, e, &ale.inv_grads[e]) {
            let mut div = 0.0;
            for a in 0..6 {
                div += u[2 * loc[a]] * q.g[a][0] + u[2 * loc[a] + 1] * q.g[a][1];
            }
            for v in 0..3 {
                out[tri[v]] += ale.jac[e] * q.wgt * q.lam[v] * div;
            }
        }
    }
    out
}

/// κ ∫ J_b |∇^b p|².
pub fn darcy_form(disc: &Discretization, kappa: f64, p: &[f64], geom: &StepGeometry) -> f64 {
    disc.disk
        .triangles
        .iter()
        .enumerate()
        .map(|(e, t)| {
            let geo = &disc.disk_geoms[e];
            let mut g = [0.0; 2];
            for a in 0..3 {
                g[0] += p[t[a]] * geo.grad_lam[a][0];
                g[1] += p[t[a]] * geo.grad_lam[a][1];
            }
            let fi = &geom.fb_inv[e];
            let tg = [g[0] * fi[(0, 0)] + g[1] * fi[(1, 0)], g[0] * fi[(0, 1)] + g[1] * fi[(1, 1)]];
            kappa * geom.jb[e] * geo.area * (tg[0] * tg[0] + tg[1] * tg[1])
        })
        .sum()
}

/// ∫ |∇p|² on the reference disk.
pub fn grad_norm_sq(disc: &Discretization, p: &[f64]) -> f64 {
    disc.disk
        .triangles
        .iter()
        .zip(&disc.disk_geoms)
        .map(|(t, geo)| {
            let mut g = [0.0; 2];
            for a in 0..3 {
                g[0] += p[t[a]] * geo.grad_lam[a][0];
                g[1] += p[t[a]] * geo.grad_lam[a][1];
            }
            geo.area * (g[0] * g[0] + g[1] * g[1])
        })
        .sum()
}

/// β Σ_j w S^{-1} ((ζ − u)·τ)² at the samples; `zeta` given as sample values.
pub fn slip_form(disc: &Discretization, beta: f64, frame: &InterfaceFrame, zeta: &[[f64; 2]], u: &[f64]) -> f64 {
    let wz = disc.grid.weight();
    (0..disc.grid.m)
        .map(|j| {
            let uj = disc.u_at_sample(u, j);
            let t = frame.tau[j];
            let r = (zeta[j][0] - uj[0]) * t[0] + (zeta[j][1] - uj[1]) * t[1];
            wz * beta / frame.s[j] * r * r
        })
        .sum()
}

/// Energy of one level, split by contribution.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub fluid_kinetic: f64,
    pub biot_kinetic: f64,
    pub plate_kinetic: f64,
    pub plate_bending: f64,
    pub elastic_strain: f64,
    pub elastic_div: f64,
    pub pressure: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.fluid_kinetic + self.biot_kinetic + self.plate_kinetic + self.plate_bending + self.elastic_strain + self.elastic_div + self.pressure
    }

    pub fn plate(&self) -> f64 {
        self.plate_kinetic + self.plate_bending
    }
}

/// All quantities defining one energy level.
#[derive(Debug, Clone, Copy)]
pub struct Level<'a> {
    pub u: &'a [f64],
    pub ale: &'a AleMap,
    pub biot: &'a BiotState,
    pub zeta: &'a PlateField,
    pub omega: &'a PlateField,
}

pub fn energy(disc: &Discretization, prm: &PhysicalParams, dt: f64, lv: Level) -> EnergyParts {
    let b = &disc.biot;
    let xi = flat(&lv.biot.xi(dt));
    let eta = flat(&lv.biot.eta);
    EnergyParts {
        fluid_kinetic: fluid_kinetic(disc, lv.u, lv.ale),
        biot_kinetic: 0.5 * prm.rho_b * b.mass.bilinear(&xi, &xi),
        plate_kinetic: 0.5 * prm.h * lv.zeta.norm_sq(&disc.grid),
        plate_bending: 0.5 * prm.h * lv.omega.laplacian(&disc.grid).norm_sq(&disc.grid),
        elastic_strain: prm.mu_e * b.strain.bilinear(&eta, &eta),
        elastic_div: 0.5 * prm.lambda_e * b.div.bilinear(&eta, &eta),
        pressure: 0.5 * prm.c0 * b.p_mass.bilinear(&lv.biot.p, &lv.biot.p),
    }
}

/// Terms of the Biot/fluid energy balance
/// E^{n+1} + Δt·D + jumps = E^{n+1/2}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BiotFluidBalance {
    pub e_half: f64,
    pub e_next: f64,
    pub d_visc: f64,
    pub d_slip: f64,
    pub d_biot_visc: f64,
    pub d_darcy: f64,
    pub j_u: f64,
    pub j_xi: f64,
    pub j_zeta: f64,
    pub j_eta_strain: f64,
    pub j_eta_div: f64,
    pub j_p: f64,
    pub residual: f64,
    /// residual / max(1, E^{n+1/2}).
    pub relative: f64,
}

impl BiotFluidBalance {
    pub fn dissipation(&self) -> f64 {
        self.d_visc + self.d_slip + self.d_biot_visc + self.d_darcy
    }

    pub fn jumps(&self) -> f64 {
        self.j_u + self.j_xi + self.j_zeta + self.j_eta_strain + self.j_eta_div + self.j_p
    }
}

/// Evaluates every term of the balance directly from the fields.
#[allow(clippy::too_many_arguments)]
pub fn verify_biot_fluid_energy_identity(
    disc: &Discretization,
    prm: &PhysicalParams,
    dt: f64,
    geom: &StepGeometry,
    before: Level,
    u_next: &[f64],
    biot_next: &BiotState,
    zeta_next: &PlateField,
) -> BiotFluidBalance {
    let grid = &disc.grid;
    let b = &disc.biot;
    let e_half = energy(disc, prm, dt, before).total();
    let e_next = energy(disc, prm, dt, Level { u: u_next, ale: &geom.ale_next, biot: biot_next, zeta: zeta_next, omega: before.omega }).total();
    let xi_next = flat(&biot_next.xi(dt));
    let xi_n = flat(&before.biot.xi(dt));
    let zs = zeta_next.samples(grid);
    let zeta_samples: Vec<[f64; 2]> = (0..grid.m).map(|j| [zs[0][j], zs[1][j]]).collect();
    let du: Vec<f64> = u_next.iter().zip(before.u).map(|(a, b)| a - b).collect();
    let dxi: Vec<f64> = xi_next.iter().zip(&xi_n).map(|(a, b)| a - b).collect();
    let deta = flat(&diff(&biot_next.eta, &before.biot.eta));
    let dp: Vec<f64> = biot_next.p.iter().zip(&before.biot.p).map(|(a, b)| a - b).collect();
    let mut out = BiotFluidBalance {
        e_half,
        e_next,
        d_visc: fluid_viscous(disc, prm.nu, u_next, &geom.ale_n),
        d_slip: slip_form(disc, prm.beta, &geom.frame, &zeta_samples, u_next),
        d_biot_visc: 2.0 * prm.mu_v * b.strain.bilinear(&xi_next, &xi_next) + prm.lambda_v * b.div.bilinear(&xi_next, &xi_next),
        d_darcy: darcy_form(disc, prm.kappa, &biot_next.p, geom),
        j_u: fluid_kinetic(disc, &du, &geom.ale_n),
        j_xi: 0.5 * prm.rho_b * b.mass.bilinear(&dxi, &dxi),
        j_zeta: 0.5 * prm.h * zeta_next.sub(before.zeta).norm_sq(grid),
        j_eta_strain: prm.mu_e * b.strain.bilinear(&deta, &deta),
        j_eta_div: 0.5 * prm.lambda_e * b.div.bilinear(&deta, &deta),
        j_p: 0.5 * prm.c0 * b.p_mass.bilinear(&dp, &dp),
        residual: 0.0,
        relative: 0.0,
    };
    out.residual = (out.e_next + dt * out.dissipation() + out.jumps() - out.e_half).abs();
    out.relative = out.residual / e_half.max(1.0);
    out
}

/// Closed form of x^T A x for x = (u, η, p) with zero multiplier.
pub fn coercivity_closed_form(disc: &Discretization, prm: &PhysicalParams, dt: f64, geom: &StepGeometry, u: &[f64], eta: &[[f64; 2]], p: &[f64]) -> f64 {
    let dt2 = dt * dt;
    let dt3 = dt2 * dt;
    let b = &disc.biot;
    let ef = flat(eta);
    let te = disc.trace_samples(eta);
    let wz = disc.grid.weight();
    let mut slip = 0.0;
    let mut plate = 0.0;
    for j in 0..disc.grid.m {
        let uj = disc.u_at_sample(u, j);
        let t = geom.frame.tau[j];
        let r = (te[j][0] - dt * uj[0]) * t[0] + (te[j][1] - dt * uj[1]) * t[1];
        slip += wz * prm.beta / geom.frame.s[j] * r * r;
        plate += wz * (te[j][0] * te[j][0] + te[j][1] * te[j][1]);
    }
    dt2 * (fluid_kinetic(disc, u, &geom.ale_n) + fluid_kinetic(disc, u, &geom.ale_next))
        + dt3 * fluid_viscous(disc, prm.nu, u, &geom.ale_n)
        + dt * slip
        + prm.rho_b * b.mass.bilinear(&ef, &ef)
        + prm.h * plate
        + (2.0 * prm.mu_e * dt2 + 2.0 * prm.mu_v * dt) * b.strain.bilinear(&ef, &ef)
        + (prm.lambda_e * dt2 + prm.lambda_v * dt) * b.div.bilinear(&ef, &ef)
        + prm.c0 * dt2 * b.p_mass.bilinear(p, p)
        + dt3 * darcy_form(disc, prm.kappa, p, geom)
}

/// Darcy block bound: returns (κΔt³∫J_b|∇^b p|², κΔt³ c1 c2^{-2} ‖∇p‖²)
/// with c1 = min det F_b and c2 = max |F_b|.
pub fn darcy_bound(disc: &Discretization, prm: &PhysicalParams, dt: f64, geom: &StepGeometry, p: &[f64]) -> (f64, f64) {
    let c1 = geom.jb.iter().copied().fold(f64::INFINITY, f64::min);
    let c2 = geom.fb.iter().map(spectral_norm).fold(0.0, f64::max);
    let dt3 = dt * dt * dt;
    (dt3 * darcy_form(disc, prm.kappa, p, geom), prm.kappa * dt3 * c1 / (c2 * c2) * grad_norm_sq(disc, p))
}

/// x^T A x of an assembled system.
pub fn quadratic_form(system: &StepSystem, x: &[f64]) -> f64 {
    dot(x, &system.matrix.matvec(x))
}

/// J-weighted L² projection of `u0` onto the discretely divergence-free
/// velocities at the geometry `ale`; constrained dofs are set to zero.
pub fn project_divergence_free(disc: &Discretization, ale: &AleMap, u0: &[f64]) -> Result<Vec<f64>> {
    let layout = Layout::new(disc);
    let n = layout.off_eta;
    let mut trip = Triplets::new(n, n);
    let mut rhs = vec![0.0; n];
    for e in 0..disc.annulus.n_triangles() {
        let loc = &disc.velocity.elements[e];
        let tri = disc.annulus.triangles[e];
        let j0 = ale.jac[e];
        for q in fluid_qps(disc, e, &ale.inv_grads[e]) {
            let jw = j0 * q.wgt;
            let uq = local_u(u0, loc, &q.phi);
            for a in 0..6 {
                for c in 0..2 {
                    let Some(i) = layout.u_map[2 * loc[a] + c] else { continue };
                    rhs[i] += jw * q.phi[a] * uq[c];
                    for b in 0..6 {
                        if let Some(jj) = layout.u_map[2 * loc[b] + c] {
                            trip.push(i, jj, jw * q.phi[a] * q.phi[b]);
                        }
                    }
                    for v in 0..3 {
                        let val = -jw * q.lam[v] * q.g[a][c];
                        trip.push(i, layout.off_pi + tri[v], val);
                        trip.push(layout.off_pi + tri[v], i, val);
                    }
                }
            }
        }
    }
    let a = trip.to_csr();
    let x = a.factor()?.solve(&rhs)?;
    let residual = relative_residual(&a, &x, &rhs);
    if !(residual <= SOLVE_TOLERANCE) {
        return Err(FpsiError::Residual { residual, tolerance: SOLVE_TOLERANCE });
    }
    Ok(layout.u_map.iter().map(|m| m.map_or(0.0, |i| x[i])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::DiscretizationParams;

    struct Case {
        disc: Discretization,
        geom: StepGeometry,
        u_n: Vec<f64>,
        biot: BiotState,
        zeta_half: PlateField,
        omega: PlateField,
    }

    fn case(dt: f64, amp: f64) -> Case {
        let disc = Discretization::new(DiscretizationParams::default()).unwrap();
        let g = &disc.grid;
        let omega = PlateField::from_fn(g, |z| [amp * (2.0 * z).cos(), amp * z.sin()]);
        let zeta_half = PlateField::from_fn(g, |z| [amp * z.sin(), -amp * (3.0 * z).cos()]);
        let omega_next = omega.axpy(dt, &zeta_half);
        let ale_n = disc.ale.solve(&disc.annulus, g, &omega).unwrap();
        let ale_next = disc.ale.solve(&disc.annulus, g, &omega_next).unwrap();
        let eta: Vec<[f64; 2]> = disc.disk.nodes.iter().map(|x| [amp * x[0] * x[1], -amp * x[0]]).collect();
        let eta_prev: Vec<[f64; 2]> = eta.iter().zip(&disc.disk.nodes).map(|(e, x)| [e[0] - dt * amp * x[1], e[1]]).collect();
        let p: Vec<f64> = disc.disk.nodes.iter().map(|x| amp * (x[0] - x[1] * x[1])).collect();
        let u_n = disc.velocity.interpolate(|x| [amp * (x[1] - 0.5), amp * x[0] * x[1]]);
        let u_n: Vec<f64> = u_n.iter().zip(&disc.velocity.constrained).map(|(v, &c)| if c { 0.0 } else { *v }).collect();
        let geom = StepGeometry::new(&disc, &omega, &omega_next, ale_n, ale_next, &eta, dt, &CertThresholds::default()).unwrap();
        Case { disc, geom, u_n, biot: BiotState { eta, eta_prev, p }, zeta_half, omega }
    }

    fn run(c: &Case, prm: &PhysicalParams, dt: f64) -> (StepSolution, BiotFluidBalance) {
        let input = StepInput { u_n: &c.u_n, biot_n: &c.biot, zeta_half: &c.zeta_half };
        let sys = assemble_step(&c.disc, prm, dt, &c.geom, input).unwrap();
        let sol = solve_step(&c.disc, &sys, &c.biot.eta, SOLVE_TOLERANCE).unwrap();
        let next = BiotState { eta: sol.eta.clone(), eta_prev: c.biot.eta.clone(), p: sol.p.clone() };
        let before = Level { u: &c.u_n, ale: &c.geom.ale_n, biot: &c.biot, zeta: &c.zeta_half, omega: &c.omega };
        let bal = verify_biot_fluid_energy_identity(&c.disc, prm, dt, &c.geom, before, &sol.fluid.u, &next, &sol.zeta);
        (sol, bal)
    }

    #[test]
    fn zero_data_gives_zero_step() {
        let c = case(0.05, 0.0);
        let (sol, bal) = run(&c, &PhysicalParams::default(), 0.05);
        assert!(sol.fluid.u.iter().chain(&sol.p).all(|v| v.abs() < 1e-14));
        assert_eq!(bal.e_half, 0.0);
        assert!(bal.residual < 1e-14);
    }

    #[test]
    fn energy_identity_holds() {
        for prm in [PhysicalParams::default(), PhysicalParams { mu_v: 0.0, lambda_v: 0.0, ..Default::default() }] {
            let dt = 0.05;
            let c = case(dt, 0.05);
            let (sol, bal) = run(&c, &prm, dt);
            assert!(sol.residual < 1e-12);
            assert!(bal.relative < 1e-9, "{bal:?}");
            assert!(bal.e_next <= bal.e_half);
            // the discrete velocity satisfies the constraint
            let r = divergence_residual(&c.disc, &sol.fluid.u, &c.geom.ale_n);
            assert!(r.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn quadratic_form_matches_closed_form() {
        let dt = 0.05;
        let c = case(dt, 0.05);
        let prm = PhysicalParams::default();
        let input = StepInput { u_n: &c.u_n, biot_n: &c.biot, zeta_half: &c.zeta_half };
        let sys = assemble_step(&c.disc, &prm, dt, &c.geom, input).unwrap();
        let u = c.disc.velocity.interpolate(|x| [x[0].sin(), x[1] * x[0]]);
        let u: Vec<f64> = u.iter().zip(&c.disc.velocity.constrained).map(|(v, &k)| if k { 0.0 } else { *v }).collect();
        let eta: Vec<[f64; 2]> = c.disc.disk.nodes.iter().map(|x| [x[1].cos(), x[0] * x[0]]).collect();
        let p: Vec<f64> = c.disc.disk.nodes.iter().map(|x| x[0] + 0.3 * x[1]).collect();
        let pi = vec![0.0; c.disc.n_annulus_nodes()];
        let x = sys.layout.pack(&u, &pi, &eta, &p);
        let form = quadratic_form(&sys, &x);
        let closed = coercivity_closed_form(&c.disc, &prm, dt, &c.geom, &u, &eta, &p);
        assert!((form - closed).abs() <= 1e-9 * closed.abs(), "{form} {closed}");
        let (darcy, bound) = darcy_bound(&c.disc, &prm, dt, &c.geom, &p);
        assert!(darcy >= bound);
    }

    #[test]
    fn projection_enforces_constraint() {
        let c = case(0.05, 0.05);
        let u0 = c.disc.velocity.interpolate(|x| [x[0] * (4.0 - x[0] * x[0] - x[1] * x[1]), 0.0]);
        let u = project_divergence_free(&c.disc, &c.geom.ale_n, &u0).unwrap();
        let before = divergence_residual(&c.disc, &u0, &c.geom.ale_n);
        let after = divergence_residual(&c.disc, &u, &c.geom.ale_n);
        assert!(before.iter().any(|v| v.abs() > 1e-3));
        assert!(after.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn rejects_bad_viscous_pair() {
        let p = PhysicalParams { mu_v: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
