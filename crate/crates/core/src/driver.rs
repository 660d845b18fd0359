//! Lie splitting over [0, T]: initialization, alternating plate and
//! Biot/fluid substeps with geometry certification, the energy ledger, and
//! the time reconstructions of a trajectory.

use crate::biot_fluid::{
    assemble_step, energy, project_divergence_free, solve_step, verify_biot_fluid_energy_identity, BiotFluidBalance, BiotState, EnergyParts, Level, PhysicalParams,
    StepGeometry, StepInput,
};
use crate::config::RunConfig;
use crate::discretization::Discretization;
use crate::error::{FpsiError, Result};
use crate::geometry::{certify_geometry, p1_gradients, AleMap, CertThresholds, DeformationField, GeomCertificate};
use crate::interface::PlateField;
use crate::plate::{solve_plate_step, verify_plate_energy_identity, PlateBalance, PlateState};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const STRESS_DATUM_TOML: &str = include_str!("../../../data/stress_datum.toml");

/// Recorded certificate values of a datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatumMargins {
    pub min_det_b: f64,
    pub min_jac_f: f64,
    pub max_jac_f: f64,
    pub max_grad_f: f64,
    pub min_tangent_norm: f64,
    pub min_secant_ratio: f64,
    pub max_interface_radius: f64,
}

/// Low-mode analytic initial condition; see `data/stress_datum.toml`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StressDatum {
    pub eta_radial: f64,
    pub eta_shear: f64,
    pub eta_mode2: f64,
    pub xi_radial: f64,
    pub xi_shear: f64,
    pub xi_mode2: f64,
    pub p_amp: f64,
    pub swirl: f64,
    pub margins: Option<DatumMargins>,
}

impl StressDatum {
    pub fn committed() -> Self {
        Self::from_toml_str(STRESS_DATUM_TOML).expect("committed datum parses")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FpsiError::Config(format!("datum: {e}")))
    }

    pub fn eta(&self, x: [f64; 2]) -> [f64; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        [
            self.eta_radial * x[0] - self.eta_shear * r2 * x[1] + self.eta_mode2 * (x[0] * x[0] - x[1] * x[1]),
            self.eta_radial * x[1] + self.eta_shear * r2 * x[0] - self.eta_mode2 * 2.0 * x[0] * x[1],
        ]
    }

    pub fn xi(&self, x: [f64; 2]) -> [f64; 2] {
        [
            self.xi_radial * x[0] - self.xi_shear * x[1] + self.xi_mode2 * (x[0] * x[0] - x[1] * x[1]),
            self.xi_radial * x[1] + self.xi_shear * x[0] - self.xi_mode2 * 2.0 * x[0] * x[1],
        ]
    }

    pub fn p(&self, x: [f64; 2]) -> f64 {
        self.p_amp * (1.0 - x[0] * x[0] - x[1] * x[1])
    }

    pub fn u(&self, x: [f64; 2]) -> [f64; 2] {
        let s = self.swirl * (4.0 - x[0] * x[0] - x[1] * x[1]) / 4.0;
        [-s * x[1], s * x[0]]
    }

    pub fn initial_data(&self, disc: &Discretization, scale: f64) -> InitialData {
        let nodes = &disc.disk.nodes;
        let sc = |v: [f64; 2]| [scale * v[0], scale * v[1]];
        InitialData {
            u0: disc.velocity.interpolate(|x| sc(self.u(x))),
            eta0: nodes.iter().map(|&x| sc(self.eta(x))).collect(),
            xi0: nodes.iter().map(|&x| sc(self.xi(x))).collect(),
            p0: nodes.iter().map(|&x| scale * self.p(x)).collect(),
        }
    }
}

/// Initial fields on the reference meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    /// P2 velocity, interleaved; need not satisfy the constraint.
    pub u0: Vec<f64>,
    pub eta0: Vec<[f64; 2]>,
    pub xi0: Vec<[f64; 2]>,
    pub p0: Vec<f64>,
}

impl InitialData {
    pub fn zeros(disc: &Discretization) -> Self {
        let n = disc.n_disk_nodes();
        Self { u0: vec![0.0; disc.n_velocity_dofs()], eta0: vec![[0.0; 2]; n], xi0: vec![[0.0; 2]; n], p0: vec![0.0; n] }
    }

    /// Datum named by the config: "stress", "zero", or a file path.
    pub fn from_config(disc: &Discretization, cfg: &RunConfig) -> Result<Self> {
        match cfg.datum.as_str() {
            "zero" => Ok(Self::zeros(disc)),
            "stress" => Ok(StressDatum::committed().initial_data(disc, cfg.datum_scale)),
            path => {
                let text = std::fs::read_to_string(Path::new(path)).map_err(|e| FpsiError::Config(format!("datum {path}: {e}")))?;
                Ok(StressDatum::from_toml_str(&text)?.initial_data(disc, cfg.datum_scale))
            }
        }
    }
}

/// All unknowns at one integer time level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelState {
    pub t: f64,
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    pub eta: Vec<[f64; 2]>,
    pub xi: Vec<[f64; 2]>,
    pub p: Vec<f64>,
    pub omega: PlateField,
    pub zeta: PlateField,
}

/// Energy ledger of one step n → n+1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub n: usize,
    /// t_{n+1}.
    pub t: f64,
    pub e_n: f64,
    pub e_half: f64,
    pub e_next: f64,
    pub plate: PlateBalance,
    pub biot: BiotFluidBalance,
    /// Plate part of E^{n+1}.
    pub e_plate_next: f64,
    /// ‖ω^{n+1} − R η^{n+1}‖.
    pub drift_next: f64,
    pub res_plate: f64,
    pub res_biotfluid: f64,
    pub solve_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Complete,
    /// Stopped before step `step` could be taken.
    Partial { step: usize, time: f64, reason: String },
}

impl Outcome {
    pub fn is_complete(&self) -> bool {
        matches!(self, Outcome::Complete)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub n_steps: usize,
    pub params: PhysicalParams,
    /// Levels 0..=accepted steps.
    pub levels: Vec<LevelState>,
    /// ζ^{n+1/2} of every accepted step.
    pub zeta_half: Vec<PlateField>,
    /// η^{-1} = η₀ − Δt ξ₀.
    pub eta_before_start: Vec<[f64; 2]>,
    pub records: Vec<StepRecord>,
    /// certificates[n] is ((η^n)^δ, ω^n).
    pub certificates: Vec<GeomCertificate>,
    /// Energy split at every level.
    pub energies: Vec<EnergyParts>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn accepted_steps(&self) -> usize {
        self.records.len()
    }

    /// Time up to which every certificate passed.
    pub fn certified_horizon(&self) -> f64 {
        self.levels.last().map_or(0.0, |l| l.t)
    }

    pub fn last(&self) -> &LevelState {
        self.levels.last().expect("trajectory has level 0")
    }

    pub fn max_ledger_residual(&self) -> f64 {
        self.records.iter().map(|r| r.res_plate.max(r.res_biotfluid)).fold(0.0, f64::max)
    }
}

pub struct Driver<'a> {
    pub disc: &'a Discretization,
    pub params: PhysicalParams,
    pub dt: f64,
    pub n_steps: usize,
    pub thresholds: CertThresholds,
    pub solve_tol: f64,
    pub ledger_tol: f64,
}

fn level_energy(disc: &Discretization, prm: &PhysicalParams, dt: f64, lv: &LevelState, eta_prev: &[[f64; 2]], ale: &AleMap) -> EnergyParts {
    let biot = BiotState { eta: lv.eta.clone(), eta_prev: eta_prev.to_vec(), p: lv.p.clone() };
    energy(disc, prm, dt, Level { u: &lv.u, ale, biot: &biot, zeta: &lv.zeta, omega: &lv.omega })
}

impl<'a> Driver<'a> {
    pub fn from_config(disc: &'a Discretization, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            disc,
            params: cfg.physical(),
            dt: cfg.dt,
            n_steps: cfg.n_steps()?,
            thresholds: cfg.thresholds(),
            solve_tol: cfg.solve_tol,
            ledger_tol: cfg.ledger_tol,
        })
    }

    fn certificate(&self, eta: &[[f64; 2]], omega: &PlateField, ale: &AleMap) -> GeomCertificate {
        let d = self.disc;
        let eta_delta = d.reg.regularize_nodes(eta);
        let field = DeformationField { grads: p1_gradients(&d.disk_geoms, &d.disk, &eta_delta), values: eta_delta };
        certify_geometry(&field, &d.grid, omega, ale, &self.thresholds)
    }

    /// Level 0: ω⁰ = Rη₀, ζ⁰ = Rξ₀, u⁰ projected at the initial geometry.
    pub fn initialize(&self, data: &InitialData) -> Result<(Trajectory, AleMap)> {
        self.params.validate()?;
        let d = self.disc;
        let omega = d.reg.regularized_trace(&data.eta0);
        let zeta = d.reg.regularized_trace(&data.xi0);
        let ale = d.ale.solve(&d.annulus, &d.grid, &omega)?;
        let cert = self.certificate(&data.eta0, &omega, &ale);
        if let Some(msg) = cert.failure() {
            return Err(FpsiError::Certificate(format!("initial data: {msg}")));
        }
        let u = project_divergence_free(d, &ale, &data.u0)?;
        let eta_before_start: Vec<[f64; 2]> = data.eta0.iter().zip(&data.xi0).map(|(e, x)| [e[0] - self.dt * x[0], e[1] - self.dt * x[1]]).collect();
        let level = LevelState {
            t: 0.0,
            u,
            pi: vec![0.0; d.n_annulus_nodes()],
            eta: data.eta0.clone(),
            xi: data.xi0.clone(),
            p: data.p0.clone(),
            omega,
            zeta,
        };
        let e0 = level_energy(d, &self.params, self.dt, &level, &eta_before_start, &ale);
        let traj = Trajectory {
            dt: self.dt,
            n_steps: self.n_steps,
            params: self.params,
            levels: vec![level],
            zeta_half: Vec::new(),
            eta_before_start,
            records: Vec::new(),
            certificates: vec![cert],
            energies: vec![e0],
            outcome: Outcome::Complete,
        };
        Ok((traj, ale))
    }

    pub fn run(&self, data: &InitialData) -> Result<Trajectory> {
        let (mut traj, mut ale_n) = self.initialize(data)?;
        let d = self.disc;
        let (prm, dt) = (&self.params, self.dt);
        for n in 0..self.n_steps {
            let cur = traj.levels.last().expect("level").clone();
            let eta_prev = if n == 0 { traj.eta_before_start.clone() } else { traj.levels[n - 1].eta.clone() };
            let t_next = (n + 1) as f64 * dt;

            let before_plate = PlateState { omega: cur.omega.clone(), zeta: cur.zeta.clone() };
            let half = solve_plate_step(&d.grid, &before_plate, prm.h, dt)?;
            let plate = verify_plate_energy_identity(&d.grid, &before_plate, &half, prm.h, dt);

            let partial = |traj: &mut Trajectory, reason: String| {
                traj.outcome = Outcome::Partial { step: n, time: cur.t, reason };
            };
            let ale_next = d.ale.solve(&d.annulus, &d.grid, &half.omega)?;
            let geom = StepGeometry::new(d, &cur.omega, &half.omega, ale_n.clone(), ale_next, &cur.eta, dt, &self.thresholds)?;
            if let Err(FpsiError::Certificate(msg)) = geom.check() {
                partial(&mut traj, msg);
                break;
            }
            let biot_n = BiotState { eta: cur.eta.clone(), eta_prev: eta_prev.clone(), p: cur.p.clone() };
            let input = StepInput { u_n: &cur.u, biot_n: &biot_n, zeta_half: &half.zeta };
            let system = assemble_step(d, prm, dt, &geom, input)?;
            let sol = solve_step(d, &system, &cur.eta, self.solve_tol)?;
            let biot_next = BiotState { eta: sol.eta.clone(), eta_prev: cur.eta.clone(), p: sol.p.clone() };
            let before = Level { u: &cur.u, ale: &geom.ale_n, biot: &biot_n, zeta: &half.zeta, omega: &half.omega };
            let biot = verify_biot_fluid_energy_identity(d, prm, dt, &geom, before, &sol.fluid.u, &biot_next, &sol.zeta);

            let next = LevelState {
                t: t_next,
                u: sol.fluid.u,
                pi: sol.fluid.pi,
                xi: biot_next.xi(dt),
                eta: sol.eta,
                p: sol.p,
                omega: half.omega.clone(),
                zeta: sol.zeta,
            };
            let e_next_parts = level_energy(d, prm, dt, &next, &cur.eta, &geom.ale_next);
            let e_n = traj.energies[n].total();
            let e_half = e_n - (plate.e_before - plate.e_after);
            let res_plate = plate.residual / e_n.max(1.0);
            let drift_next = next.omega.sub(&d.reg.regularized_trace(&next.eta)).norm_sq(&d.grid).sqrt();
            let record = StepRecord {
                n,
                t: t_next,
                e_n,
                e_half,
                e_next: e_next_parts.total(),
                plate,
                biot,
                e_plate_next: e_next_parts.plate(),
                drift_next,
                res_plate,
                res_biotfluid: biot.relative,
                solve_residual: sol.residual,
            };
            let cert = geom.cert_next;
            ale_n = geom.ale_next;
            traj.levels.push(next);
            traj.zeta_half.push(half.zeta);
            traj.records.push(record);
            traj.certificates.push(cert);
            traj.energies.push(e_next_parts);
            if res_plate > self.ledger_tol || biot.relative > self.ledger_tol {
                traj.outcome = Outcome::Partial {
                    step: n + 1,
                    time: t_next,
                    reason: format!("energy ledger residual at step {n}: plate {res_plate:.3e}, biot/fluid {:.3e}", biot.relative),
                };
                break;
            }
        }
        Ok(traj)
    }
}

/// Convenience: discretization, datum and run from one config.
pub fn run_config(cfg: &RunConfig) -> Result<(Discretization, Trajectory)> {
    cfg.validate()?;
    let disc = Discretization::new(cfg.discretization())?;
    let data = InitialData::from_config(&disc, cfg)?;
    let traj = Driver::from_config(&disc, cfg)?.run(&data)?;
    Ok((disc, traj))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reconstruction {
    /// Right-endpoint piecewise constant.
    Piecewise,
    /// Piecewise linear in time.
    Interpolant,
    /// Piecewise constant with ζ replaced by the half-step value ζ^{n+1/2}.
    Star,
}

/// Time reconstruction of a trajectory at `t` in [0, T_accepted].
pub fn reconstruct(traj: &Trajectory, t: f64, kind: Reconstruction) -> Result<LevelState> {
    let horizon = traj.certified_horizon();
    let tol = 1e-12 * horizon.max(1.0);
    if !(t >= -tol && t <= horizon + tol) {
        return Err(FpsiError::InvalidParameter(format!("time {t} outside [0, {horizon}]")));
    }
    if t <= tol {
        return Ok(traj.levels[0].clone());
    }
    let s = t / traj.dt;
    let upper = ((s - 1e-9).ceil() as usize).clamp(1, traj.levels.len() - 1);
    let right = &traj.levels[upper];
    match kind {
        Reconstruction::Piecewise => Ok(right.clone()),
        Reconstruction::Star => Ok(LevelState { zeta: traj.zeta_half[upper - 1].clone(), ..right.clone() }),
        Reconstruction::Interpolant => {
            let left = &traj.levels[upper - 1];
            let th = ((t - left.t) / traj.dt).clamp(0.0, 1.0);
            let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - th) * x + th * y).collect::<Vec<f64>>();
            let mix2 = |a: &[[f64; 2]], b: &[[f64; 2]]| a.iter().zip(b).map(|(x, y)| [(1.0 - th) * x[0] + th * y[0], (1.0 - th) * x[1] + th * y[1]]).collect::<Vec<_>>();
            let mixf = |a: &PlateField, b: &PlateField| a.scale(1.0 - th).axpy(th, b);
            Ok(LevelState {
                t,
                u: mix(&left.u, &right.u),
                pi: mix(&left.pi, &right.pi),
                eta: mix2(&left.eta, &right.eta),
                xi: mix2(&left.xi, &right.xi),
                p: mix(&left.p, &right.p),
                omega: mixf(&left.omega, &right.omega),
                zeta: mixf(&left.zeta, &right.zeta),
            })
        }
    }
}

/// d^n = ‖ω^n − R η^n‖ at every accepted level.
pub fn kinematic_drift(disc: &Discretization, traj: &Trajectory) -> Vec<f64> {
    traj.levels.iter().map(|l| l.omega.sub(&disc.reg.regularized_trace(&l.eta)).norm_sq(&disc.grid).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(datum: &str) -> RunConfig {
        let mut c = RunConfig::default();
        c.datum = datum.into();
        c.dt = 0.0625;
        c.t_final = 0.25;
        c
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let (disc, traj) = run_config(&short("zero")).unwrap();
        assert!(traj.outcome.is_complete());
        assert_eq!(traj.accepted_steps(), 4);
        for (l, e) in traj.levels.iter().zip(&traj.energies) {
            assert_eq!(e.total(), 0.0);
            assert!(l.u.iter().chain(&l.p).all(|v| *v == 0.0));
        }
        assert!(kinematic_drift(&disc, &traj).iter().all(|d| *d == 0.0));
        let c = traj.certificates[0];
        assert_eq!(c.min_det_b, 1.0);
        assert!((c.min_jac_f - 1.0).abs() < 1e-12 && (c.max_jac_f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stress_run_closes_ledger() {
        let (disc, traj) = run_config(&short("stress")).unwrap();
        assert!(traj.outcome.is_complete());
        assert!(kinematic_drift(&disc, &traj)[0] < 1e-14);
        let e0 = traj.energies[0].total();
        let mut spent = 0.0;
        for r in &traj.records {
            assert!(r.res_plate < 1e-12 && r.res_biotfluid < 1e-12);
            // the plate balance and the Biot/fluid balance agree on E^{n+1/2}
            assert!((r.e_half - r.biot.e_half).abs() < 1e-12);
            assert!(r.e_next <= r.e_half && r.e_half <= r.e_n);
            spent += r.e_n - r.e_next;
        }
        let en = traj.energies.last().unwrap().total();
        assert!((e0 - en - spent).abs() <= 1e-8 * e0);
    }

    #[test]
    fn reconstructions() {
        let (_, traj) = run_config(&short("stress")).unwrap();
        let dt = traj.dt;
        let at = reconstruct(&traj, 2.0 * dt, Reconstruction::Piecewise).unwrap();
        assert_eq!(at, reconstruct(&traj, 2.0 * dt, Reconstruction::Interpolant).unwrap());
        let mid = reconstruct(&traj, 1.5 * dt, Reconstruction::Interpolant).unwrap();
        let (a, b) = (&traj.levels[1], &traj.levels[2]);
        for i in 0..a.p.len() {
            assert!((mid.p[i] - 0.5 * (a.p[i] + b.p[i])).abs() < 1e-15);
        }
        assert_eq!(reconstruct(&traj, 1.5 * dt, Reconstruction::Piecewise).unwrap(), *b);
        let star = reconstruct(&traj, 1.25 * dt, Reconstruction::Star).unwrap();
        assert_eq!(star.zeta, traj.zeta_half[1]);
        assert!(reconstruct(&traj, 1.0, Reconstruction::Piecewise).is_err());
    }

    #[test]
    fn compressed_initial_data_rejected() {
        let disc = Discretization::new(Default::default()).unwrap();
        let mut data = InitialData::zeros(&disc);
        data.eta0 = disc.disk.nodes.iter().map(|x| [-0.95 * x[0], -0.95 * x[1]]).collect();
        let drv = Driver::from_config(&disc, &short("zero")).unwrap();
        match drv.initialize(&data) {
            Err(FpsiError::Certificate(msg)) => assert!(msg.contains("det")),
            other => panic!("expected certificate failure, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn committed_margins_match() {
        let cfg = RunConfig::default();
        let disc = Discretization::new(cfg.discretization()).unwrap();
        let data = InitialData::from_config(&disc, &cfg).unwrap();
        let (traj, _) = Driver::from_config(&disc, &cfg).unwrap().initialize(&data).unwrap();
        let c = traj.certificates[0];
        let m = StressDatum::committed().margins.unwrap();
        let pairs = [
            (c.min_det_b, m.min_det_b),
            (c.min_jac_f, m.min_jac_f),
            (c.max_jac_f, m.max_jac_f),
            (c.max_grad_f, m.max_grad_f),
            (c.min_tangent_norm, m.min_tangent_norm),
            (c.min_secant_ratio, m.min_secant_ratio),
            (c.max_interface_radius, m.max_interface_radius),
        ];
        for (a, b) in pairs {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn certificate_failure_gives_partial() {
        let mut c = short("stress");
        c.datum_scale = 1.0;
        // a clearance margin the moving interface soon violates
        c.clearance_margin = 2.0 - 1.066;
        let (_, traj) = run_config(&c).unwrap();
        match &traj.outcome {
            Outcome::Partial { step, reason, .. } => {
                assert_eq!(*step, traj.accepted_steps());
                assert!(reason.contains("clearance"));
            }
            Outcome::Complete => panic!("expected partial run"),
        }
    }
}
