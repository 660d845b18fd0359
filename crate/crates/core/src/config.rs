//! Run configuration: a flat TOML table with every key optional, plus
//! `key=value` overrides type-checked against the same schema.

use crate::biot_fluid::{PhysicalParams, SOLVE_TOLERANCE};
use crate::discretization::DiscretizationParams;
use crate::error::{FpsiError, Result};
use crate::geometry::CertThresholds;
use crate::regularizer::MollifierResolution;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
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
    pub h: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_final: f64,
    pub refine: u32,
    pub m: usize,
    pub k: usize,
    pub fluid_quad_order: usize,
    pub biot_quad_order: usize,
    pub mollifier_cells_per_delta: usize,
    pub mollifier_order: usize,
    pub det_min: f64,
    pub jac_bound: f64,
    pub alpha_min: f64,
    pub clearance_margin: f64,
    pub solve_tol: f64,
    /// Relative tolerance of both per-step energy equalities.
    pub ledger_tol: f64,
    /// "stress", "zero", or a path to a datum file.
    pub datum: String,
    /// Multiplies every amplitude of the datum.
    pub datum_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PhysicalParams::default();
        let d = DiscretizationParams::default();
        let t = CertThresholds::default();
        Self {
            rho_b: p.rho_b,
            mu_e: p.mu_e,
            lambda_e: p.lambda_e,
            mu_v: p.mu_v,
            lambda_v: p.lambda_v,
            c0: p.c0,
            alpha: p.alpha,
            kappa: p.kappa,
            nu: p.nu,
            beta: p.beta,
            h: p.h,
            delta: d.delta,
            dt: 0.25 / 32.0,
            t_final: 0.25,
            refine: d.refine,
            m: d.m,
            k: d.k,
            fluid_quad_order: d.fluid_quad_order,
            biot_quad_order: d.biot_quad_order,
            mollifier_cells_per_delta: d.mollifier.cells_per_delta,
            mollifier_order: d.mollifier.order,
            det_min: t.det_min,
            jac_bound: t.jac_bound,
            alpha_min: t.alpha,
            clearance_margin: t.clearance_margin,
            solve_tol: SOLVE_TOLERANCE,
            ledger_tol: 1e-9,
            datum: "stress".into(),
            datum_scale: 1.0,
        }
    }
}

impl RunConfig {
    pub fn physical(&self) -> PhysicalParams {
        PhysicalParams {
            rho_b: self.rho_b,
            mu_e: self.mu_e,
            lambda_e: self.lambda_e,
            mu_v: self.mu_v,
            lambda_v: self.lambda_v,
            c0: self.c0,
            alpha: self.alpha,
            kappa: self.kappa,
            nu: self.nu,
            beta: self.beta,
            h: self.h,
        }
    }

    pub fn discretization(&self) -> DiscretizationParams {
        DiscretizationParams {
            refine: self.refine,
            m: self.m,
            k: self.k,
            delta: self.delta,
            fluid_quad_order: self.fluid_quad_order,
            biot_quad_order: self.biot_quad_order,
            mollifier: MollifierResolution { cells_per_delta: self.mollifier_cells_per_delta, order: self.mollifier_order },
        }
    }

    pub fn thresholds(&self) -> CertThresholds {
        CertThresholds { det_min: self.det_min, jac_bound: self.jac_bound, alpha: self.alpha_min, clearance_margin: self.clearance_margin }
    }

    /// Number of steps N with N·dt = t_final.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(FpsiError::Config(format!("dt and t_final must be positive (dt={}, t_final={})", self.dt, self.t_final)));
        }
        let n = (self.t_final / self.dt).round();
        if n < 1.0 || (n * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(FpsiError::Config(format!("t_final={} is not an integer multiple of dt={}", self.t_final, self.dt)));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.physical().validate().map_err(|e| FpsiError::Config(e.to_string()))?;
        self.n_steps()?;
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(FpsiError::Config(format!("delta must lie in (0, 0.5], got {}", self.delta)));
        }
        if self.m % 2 != 0 || self.k < 2 || 2 * self.k > self.m {
            return Err(FpsiError::Config(format!("need even m and 2 <= k <= m/2 (m={}, k={})", self.m, self.k)));
        }
        for (name, v) in [("det_min", self.det_min), ("jac_bound", self.jac_bound), ("alpha_min", self.alpha_min), ("solve_tol", self.solve_tol), ("ledger_tol", self.ledger_tol)] {
            if !(v > 0.0) {
                return Err(FpsiError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.datum_scale >= 0.0 && self.datum_scale.is_finite()) {
            return Err(FpsiError::Config(format!("datum_scale must be nonnegative, got {}", self.datum_scale)));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FpsiError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FpsiError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies one `key=value` override. The key must exist and the value
    /// must parse as the key's type.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, raw) = spec.split_once('=').ok_or_else(|| FpsiError::Config(format!("override `{spec}` is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let mut table = toml::Table::try_from(&*self).map_err(|e| FpsiError::Config(e.to_string()))?;
        let old = table.get(key).ok_or_else(|| FpsiError::Config(format!("unknown config key `{key}`")))?;
        let bad = || FpsiError::Config(format!("invalid value `{raw}` for `{key}`"));
        let new = match old {
            toml::Value::String(_) => toml::Value::String(raw.trim_matches('"').to_string()),
            toml::Value::Integer(_) => toml::Value::Integer(raw.parse().map_err(|_| bad())?),
            toml::Value::Float(_) => toml::Value::Float(raw.parse().map_err(|_| bad())?),
            toml::Value::Boolean(_) => toml::Value::Boolean(raw.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        table.insert(key.to_string(), new);
        *self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| FpsiError::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_override("dt=0.015625").unwrap();
        c.apply_override("h = 0.1").unwrap();
        c.apply_override("datum=zero").unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.n_steps().unwrap(), 16);
    }

    #[test]
    fn rejects_unknown_and_mistyped() {
        let mut c = RunConfig::default();
        assert!(c.apply_override("frob=1").is_err());
        assert!(c.apply_override("refine=1.5").is_err());
        assert!(c.apply_override("dt").is_err());
        assert!(RunConfig::from_toml_str("frob = 1").is_err());
        c.t_final = 0.1;
        c.dt = 0.03;
        assert!(c.n_steps().is_err());
    }
}
