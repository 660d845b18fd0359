//! Energy ledger CSV, parameter sweeps with their reports, and field and
//! plot exports.

use crate::config::RunConfig;
use crate::discretization::Discretization;
use crate::driver::{kinematic_drift, run_config, LevelState, Outcome, Trajectory};
use crate::error::{FpsiError, Result};
use crate::geometry::interface_positions;
use crate::mesh::Mesh2D;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const ENERGY_CSV_COLUMNS: [&str; 22] = [
    "n",
    "t",
    "E_n",
    "E_half",
    "E_next",
    "D_plate",
    "D_visc",
    "D_slip",
    "D_biot_visc",
    "D_darcy",
    "J_plate_zeta",
    "J_plate_omega",
    "J_u",
    "J_xi",
    "J_zeta",
    "J_eta_strain",
    "J_eta_div",
    "J_p",
    "E_plate_next",
    "drift_next",
    "res_plate",
    "res_biotfluid",
];

/// One parsed ledger row: step index and the 21 real columns in header order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub n: usize,
    pub values: [f64; 21],
}

impl EnergyRow {
    pub fn get(&self, column: &str) -> Option<f64> {
        let i = ENERGY_CSV_COLUMNS.iter().position(|c| *c == column)?;
        if i == 0 {
            Some(self.n as f64)
        } else {
            Some(self.values[i - 1])
        }
    }
}

pub fn energy_rows(traj: &Trajectory) -> Vec<EnergyRow> {
    traj.records
        .iter()
        .map(|r| {
            let (p, b) = (&r.plate, &r.biot);
            EnergyRow {
                n: r.n,
                values: [
                    r.t,
                    r.e_n,
                    r.e_half,
                    r.e_next,
                    p.dissipation,
                    b.d_visc,
                    b.d_slip,
                    b.d_biot_visc,
                    b.d_darcy,
                    p.jump_zeta,
                    p.jump_omega,
                    b.j_u,
                    b.j_xi,
                    b.j_zeta,
                    b.j_eta_strain,
                    b.j_eta_div,
                    b.j_p,
                    r.e_plate_next,
                    r.drift_next,
                    r.res_plate,
                    r.res_biotfluid,
                ],
            }
        })
        .collect()
}

pub fn energy_csv_string(traj: &Trajectory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ENERGY_CSV_COLUMNS).expect("in-memory write");
    for row in energy_rows(traj) {
        let mut rec = vec![row.n.to_string()];
        rec.extend(row.values.iter().map(|v| format!("{v:.16e}")));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

pub fn write_energy_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, energy_csv_string(traj))?;
    Ok(())
}

pub fn parse_energy_csv(text: &str) -> Result<Vec<EnergyRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| FpsiError::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().ne(ENERGY_CSV_COLUMNS.iter().copied()) {
        return Err(FpsiError::Parse { line: 1, msg: "unexpected energy CSV header".into() });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| FpsiError::Parse { line, msg: e.to_string() })?;
        let bad = |msg: &str| FpsiError::Parse { line, msg: msg.to_string() };
        let n = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad step index"))?;
        let mut values = [0.0; 21];
        for (k, v) in values.iter_mut().enumerate() {
            *v = rec.get(k + 1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad value"))?;
        }
        rows.push(EnergyRow { n, values });
    }
    Ok(rows)
}

pub fn read_energy_csv(path: &Path) -> Result<Vec<EnergyRow>> {
    parse_energy_csv(&std::fs::read_to_string(path)?)
}

/// Count of steps violating E^{n+1} ≤ E^{n+1/2} ≤ E^n (with a roundoff slack
/// of `tol`·max(1, E^n)).
pub fn monotonicity_violations(traj: &Trajectory, tol: f64) -> usize {
    traj.records
        .iter()
        .filter(|r| {
            let s = tol * r.e_n.max(1.0);
            r.e_half > r.e_n + s || r.e_next > r.e_half + s
        })
        .count()
}

/// Squared reference-domain L² norms of (u, η, p) differences.
pub fn state_distance(disc: &Discretization, a: &LevelState, b: &LevelState) -> f64 {
    let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let ident = crate::geometry::AleMap::identity(&disc.annulus).expect("reference mesh is valid");
    let fu = 2.0 * crate::biot_fluid::fluid_kinetic(disc, &du, &ident);
    let de: Vec<f64> = a.eta.iter().zip(&b.eta).flat_map(|(x, y)| [x[0] - y[0], x[1] - y[1]]).collect();
    let dp: Vec<f64> = a.p.iter().zip(&b.p).map(|(x, y)| x - y).collect();
    (fu + disc.biot.mass.bilinear(&de, &de) + disc.biot.p_mass.bilinear(&dp, &dp)).sqrt()
}

pub fn state_norm(disc: &Discretization, a: &LevelState) -> f64 {
    let zero = LevelState {
        u: vec![0.0; a.u.len()],
        eta: vec![[0.0; 2]; a.eta.len()],
        p: vec![0.0; a.p.len()],
        ..a.clone()
    };
    state_distance(disc, a, &zero)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub value: f64,
    pub complete: bool,
    pub outcome: Outcome,
    pub accepted_steps: usize,
    pub certified_horizon: f64,
    pub e_initial: f64,
    pub e_final: f64,
    /// Plate energy over total energy at the last level.
    pub plate_share: f64,
    pub terminal_norm: f64,
    pub max_drift: f64,
    pub max_ledger_residual: f64,
    pub monotonicity_violations: usize,
}

pub fn summarize(disc: &Discretization, traj: &Trajectory, label: &str, value: f64) -> RunSummary {
    let e_final = traj.energies.last().map_or(0.0, |e| e.total());
    let plate = traj.energies.last().map_or(0.0, |e| e.plate());
    RunSummary {
        label: label.to_string(),
        value,
        complete: traj.outcome.is_complete(),
        outcome: traj.outcome.clone(),
        accepted_steps: traj.accepted_steps(),
        certified_horizon: traj.certified_horizon(),
        e_initial: traj.energies[0].total(),
        e_final,
        plate_share: if e_final > 0.0 { plate / e_final } else { 0.0 },
        terminal_norm: state_norm(disc, traj.last()),
        max_drift: kinematic_drift(disc, traj).into_iter().fold(0.0, f64::max),
        max_ledger_residual: traj.max_ledger_residual(),
        monotonicity_violations: monotonicity_violations(traj, 1e-12),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepKind {
    H,
    Dt,
    Delta,
}

impl SweepKind {
    pub fn key(self) -> &'static str {
        match self {
            SweepKind::H => "h",
            SweepKind::Dt => "dt",
            SweepKind::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub runs: Vec<RunSummary>,
    /// Runs that failed with an error rather than a trajectory.
    pub errors: Vec<(f64, String)>,
    /// Terminal differences between consecutive runs (same mesh only).
    pub consecutive_differences: Vec<f64>,
    pub difference_ratios: Vec<f64>,
    /// log2 of the difference ratios.
    pub orders: Vec<f64>,
    pub drift_orders: Vec<f64>,
    /// Plate share relative to the first run, divided by the relative h.
    pub plate_share_scaling: Vec<f64>,
    pub horizons_identical: bool,
    pub partial: bool,
}

/// One finished run of a sweep.
pub struct SweepRun {
    pub value: f64,
    pub config: RunConfig,
    pub result: Result<(Discretization, Trajectory)>,
}

/// Runs `base` with `key` set to each value, in parallel.
pub fn sweep_runs(base: &RunConfig, kind: SweepKind, values: &[f64]) -> Vec<SweepRun> {
    values
        .par_iter()
        .map(|&v| {
            let mut cfg = base.clone();
            let result = cfg.apply_override(&format!("{}={v:e}", kind.key())).and_then(|_| run_config(&cfg));
            SweepRun { value: v, config: cfg, result }
        })
        .collect()
}

fn log2_ratio(a: f64, b: f64) -> f64 {
    (a / b).log2()
}

/// Report built from finished runs only; never re-runs anything.
pub fn build_report(kind: SweepKind, runs: &[SweepRun]) -> SweepReport {
    let mut summaries = Vec::new();
    let mut errors = Vec::new();
    let mut ok: Vec<(&Discretization, &Trajectory)> = Vec::new();
    for r in runs {
        match &r.result {
            Ok((d, t)) => {
                summaries.push(summarize(d, t, kind.key(), r.value));
                ok.push((d, t));
            }
            Err(e) => errors.push((r.value, e.to_string())),
        }
    }
    let same_mesh = kind != SweepKind::Delta && errors.is_empty();
    let mut diffs = Vec::new();
    if same_mesh {
        for w in ok.windows(2) {
            diffs.push(state_distance(w[0].0, w[0].1.last(), w[1].1.last()));
        }
    }
    let ratios: Vec<f64> = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    let orders = diffs.windows(2).map(|w| log2_ratio(w[0], w[1])).collect();
    let drift_orders = if kind == SweepKind::Dt { summaries.windows(2).map(|w| log2_ratio(w[0].max_drift, w[1].max_drift)).collect() } else { Vec::new() };
    let plate_share_scaling = if kind == SweepKind::H && !summaries.is_empty() {
        let (s0, h0) = (summaries[0].plate_share, summaries[0].value);
        summaries.iter().map(|s| (s.plate_share / s0) / (s.value / h0)).collect()
    } else {
        Vec::new()
    };
    let horizons_identical = summaries.windows(2).all(|w| w[0].certified_horizon == w[1].certified_horizon);
    let partial = !errors.is_empty() || summaries.iter().any(|s| !s.complete);
    SweepReport {
        kind,
        values: runs.iter().map(|r| r.value).collect(),
        runs: summaries,
        errors,
        consecutive_differences: diffs,
        difference_ratios: ratios,
        orders,
        drift_orders,
        plate_share_scaling,
        horizons_identical,
        partial,
    }
}

pub fn h_sweep(base: &RunConfig, hs: &[f64]) -> (SweepReport, Vec<SweepRun>) {
    let runs = sweep_runs(base, SweepKind::H, hs);
    (build_report(SweepKind::H, &runs), runs)
}

/// Δt = base.dt / 2^i for i in 0..levels.
pub fn dt_refinement(base: &RunConfig, levels: usize) -> (SweepReport, Vec<SweepRun>) {
    let dts: Vec<f64> = (0..levels).map(|i| base.dt / (1u64 << i) as f64).collect();
    let runs = sweep_runs(base, SweepKind::Dt, &dts);
    (build_report(SweepKind::Dt, &runs), runs)
}

pub fn delta_sweep(base: &RunConfig, deltas: &[f64]) -> (SweepReport, Vec<SweepRun>) {
    let runs = sweep_runs(base, SweepKind::Delta, deltas);
    (build_report(SweepKind::Delta, &runs), runs)
}

/// Legacy ASCII VTK unstructured grid of triangles with point data.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub title: String,
    pub points: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// (name, components, values) with values point-major.
    pub point_data: Vec<(String, usize, Vec<f64>)>,
}

impl VtkData {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# vtk DataFile Version 3.0").unwrap();
        writeln!(s, "{}", self.title).unwrap();
        writeln!(s, "ASCII").unwrap();
        writeln!(s, "DATASET UNSTRUCTURED_GRID").unwrap();
        writeln!(s, "POINTS {} double", self.points.len()).unwrap();
        for p in &self.points {
            writeln!(s, "{:e} {:e} 0", p[0], p[1]).unwrap();
        }
        writeln!(s, "CELLS {} {}", self.triangles.len(), 4 * self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
        }
        writeln!(s, "CELL_TYPES {}", self.triangles.len()).unwrap();
        for _ in &self.triangles {
            writeln!(s, "5").unwrap();
        }
        if !self.point_data.is_empty() {
            writeln!(s, "POINT_DATA {}", self.points.len()).unwrap();
        }
        for (name, nc, vals) in &self.point_data {
            if *nc == 1 {
                writeln!(s, "SCALARS {name} double 1").unwrap();
                writeln!(s, "LOOKUP_TABLE default").unwrap();
                for v in vals {
                    writeln!(s, "{v:e}").unwrap();
                }
            } else {
                writeln!(s, "VECTORS {name} double").unwrap();
                for c in vals.chunks(2) {
                    writeln!(s, "{:e} {:e} 0", c[0], c[1]).unwrap();
                }
            }
        }
        s
    }

    /// Parses files written by `to_text`.
    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let err = |line: usize, msg: &str| FpsiError::Parse { line: line + 1, msg: msg.to_string() };
        if lines.len() < 5 || !lines[0].starts_with("# vtk DataFile") || lines[2] != "ASCII" || lines[3] != "DATASET UNSTRUCTURED_GRID" {
            return Err(err(0, "not an ASCII unstructured-grid VTK file"));
        }
        let title = lines[1].to_string();
        let mut i = 4;
        let header = |i: usize, key: &str| -> Result<Vec<&str>> {
            let l = lines.get(i).ok_or_else(|| err(i, "unexpected end of file"))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.first() != Some(&key) {
                return Err(err(i, &format!("expected {key}")));
            }
            Ok(parts)
        };
        let num = |i: usize, s: &str| -> Result<f64> { s.parse().map_err(|_| err(i, "bad number")) };
        let idx = |i: usize, s: &str| -> Result<usize> { s.parse().map_err(|_| err(i, "bad index")) };
        let line_at = |i: usize| -> Result<Vec<&str>> { Ok(lines.get(i).ok_or_else(|| err(i, "unexpected end of file"))?.split_whitespace().collect()) };
        let np = idx(i, header(i, "POINTS")?.get(1).copied().unwrap_or(""))?;
        i += 1;
        let mut points = Vec::with_capacity(np);
        for _ in 0..np {
            let p = line_at(i)?;
            if p.len() != 3 {
                return Err(err(i, "point needs three coordinates"));
            }
            points.push([num(i, p[0])?, num(i, p[1])?]);
            i += 1;
        }
        let nc = idx(i, header(i, "CELLS")?.get(1).copied().unwrap_or(""))?;
        i += 1;
        let mut triangles = Vec::with_capacity(nc);
        for _ in 0..nc {
            let p = line_at(i)?;
            if p.len() != 4 || p[0] != "3" {
                return Err(err(i, "only triangles are supported"));
            }
            let t = [idx(i, p[1])?, idx(i, p[2])?, idx(i, p[3])?];
            if t.iter().any(|&v| v >= np) {
                return Err(err(i, "cell index out of range"));
            }
            triangles.push(t);
            i += 1;
        }
        header(i, "CELL_TYPES")?;
        i += 1 + nc;
        let mut point_data = Vec::new();
        if i < lines.len() {
            header(i, "POINT_DATA")?;
            i += 1;
        }
        while i < lines.len() {
            let h = line_at(i)?;
            match h.first().copied() {
                Some("SCALARS") => {
                    let name = h.get(1).ok_or_else(|| err(i, "missing name"))?.to_string();
                    header(i + 1, "LOOKUP_TABLE")?;
                    i += 2;
                    let mut vals = Vec::with_capacity(np);
                    for _ in 0..np {
                        vals.push(num(i, lines.get(i).ok_or_else(|| err(i, "unexpected end of file"))?.trim())?);
                        i += 1;
                    }
                    point_data.push((name, 1, vals));
                }
                Some("VECTORS") => {
                    let name = h.get(1).ok_or_else(|| err(i, "missing name"))?.to_string();
                    i += 1;
                    let mut vals = Vec::with_capacity(2 * np);
                    for _ in 0..np {
                        let p = line_at(i)?;
                        if p.len() != 3 {
                            return Err(err(i, "vector needs three components"));
                        }
                        vals.push(num(i, p[0])?);
                        vals.push(num(i, p[1])?);
                        i += 1;
                    }
                    point_data.push((name, 2, vals));
                }
                None => i += 1,
                _ => return Err(err(i, "expected SCALARS or VECTORS")),
            }
        }
        Ok(Self { title, points, triangles, point_data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn field(&self, name: &str) -> Option<&[f64]> {
        self.point_data.iter().find(|f| f.0 == name).map(|f| f.2.as_slice())
    }
}

fn flat2(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|p| [p[0], p[1]]).collect()
}

fn mesh_vtk(title: String, mesh: &Mesh2D, points: Vec<[f64; 2]>, data: Vec<(String, usize, Vec<f64>)>) -> VtkData {
    VtkData { title, points, triangles: mesh.triangles.clone(), point_data: data }
}

/// Reference and mapped Biot and fluid grids of one level; the fluid
/// velocity is written at mesh vertices.
pub fn field_files(disc: &Discretization, state: &LevelState) -> Result<Vec<(String, VtkData)>> {
    let disk = &disc.disk;
    let ann = &disc.annulus;
    let biot_data = vec![("eta".to_string(), 2, flat2(&state.eta)), ("xi".to_string(), 2, flat2(&state.xi)), ("p".to_string(), 1, state.p.clone())];
    let deformed: Vec<[f64; 2]> = disk.nodes.iter().zip(&state.eta).map(|(x, e)| [x[0] + e[0], x[1] + e[1]]).collect();
    let ale = disc.ale.solve(ann, &disc.grid, &state.omega)?;
    let nv = ann.n_nodes();
    let fluid_data = vec![
        ("u".to_string(), 2, state.u[..2 * nv].to_vec()),
        ("pi".to_string(), 1, state.pi.clone()),
        ("ale_displacement".to_string(), 2, ale.values.iter().zip(&ann.nodes).flat_map(|(a, x)| [a[0] - x[0], a[1] - x[1]]).collect()),
    ];
    let t = state.t;
    Ok(vec![
        ("biot_reference.vtk".into(), mesh_vtk(format!("biot reference t={t:e}"), disk, disk.nodes.clone(), biot_data.clone())),
        ("biot_deformed.vtk".into(), mesh_vtk(format!("biot deformed t={t:e}"), disk, deformed, biot_data)),
        ("fluid_reference.vtk".into(), mesh_vtk(format!("fluid reference t={t:e}"), ann, ann.nodes.clone(), fluid_data.clone())),
        ("fluid_deformed.vtk".into(), mesh_vtk(format!("fluid deformed t={t:e}"), ann, ale.values.clone(), fluid_data)),
    ])
}

pub fn export_fields(disc: &Discretization, state: &LevelState, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (name, vtk) in field_files(disc, state)? {
        let p = dir.join(name);
        vtk.write(&p)?;
        out.push(p);
    }
    Ok(out)
}

fn svg_polyline(points: &[(f64, f64)], bounds: (f64, f64, f64, f64), color: &str) -> String {
    let (x0, x1, y0, y1) = bounds;
    let (w, h, pad) = (560.0, 360.0, 40.0);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0).max(1e-300) * w;
    let sy = |y: f64| pad + h - (y - y0) / (y1 - y0).max(1e-300) * h;
    let pts: Vec<String> = points.iter().map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y))).collect();
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", pts.join(" "))
}

fn svg_doc(title: &str, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"440\" viewBox=\"0 0 640 440\">\n<rect width=\"640\" height=\"440\" fill=\"white\"/>\n<rect x=\"40\" y=\"40\" width=\"560\" height=\"360\" fill=\"none\" stroke=\"black\"/>\n<text x=\"40\" y=\"25\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n{body}</svg>\n"
    )
}

/// E^n (black) and E^{n+1/2} (red) against time.
pub fn energy_svg(traj: &Trajectory) -> String {
    let mut whole = vec![(0.0, traj.energies[0].total())];
    let mut half = Vec::new();
    for r in &traj.records {
        whole.push((r.t, r.e_next));
        half.push((r.t - 0.5 * traj.dt, r.e_half));
    }
    let t1 = whole.last().map_or(1.0, |p| p.0).max(traj.dt);
    let ymax = whole.iter().map(|p| p.1).fold(0.0, f64::max).max(1e-300);
    let b = (0.0, t1, 0.0, ymax * 1.05);
    let body = svg_polyline(&whole, b, "black") + &svg_polyline(&half, b, "red");
    svg_doc(&format!("energy, E max {ymax:.4e}"), &body)
}

/// Interface images at the first (black) and last (blue) accepted level.
pub fn interface_svg(disc: &Discretization, traj: &Trajectory) -> String {
    let curve = |l: &LevelState| {
        let mut p: Vec<(f64, f64)> = interface_positions(&disc.grid, &l.omega).iter().map(|x| (x[0], x[1])).collect();
        p.push(p[0]);
        p
    };
    let b = (-2.0, 2.0, -2.0, 2.0);
    let body = svg_polyline(&curve(&traj.levels[0]), b, "black") + &svg_polyline(&curve(traj.last()), b, "blue");
    svg_doc(&format!("interface at t=0 and t={:.4}", traj.last().t), &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(datum: &str) -> RunConfig {
        let mut c = RunConfig::default();
        c.datum = datum.into();
        c.dt = 0.0625;
        c
    }

    #[test]
    fn csv_round_trip() {
        let (_, traj) = run_config(&cfg("stress")).unwrap();
        let text = energy_csv_string(&traj);
        let rows = parse_energy_csv(&text).unwrap();
        assert_eq!(rows, energy_rows(&traj));
        assert_eq!(rows.len(), traj.n_steps);
        let max_res = rows.iter().map(|r| r.get("res_biotfluid").unwrap()).fold(0.0, f64::max);
        let direct = traj.records.iter().map(|r| r.res_biotfluid).fold(0.0, f64::max);
        assert_eq!(max_res, direct);
        assert!(parse_energy_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn zero_run_ledger_is_zero() {
        let (_, traj) = run_config(&cfg("zero")).unwrap();
        assert!(energy_rows(&traj).iter().all(|r| r.values[1..].iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn vtk_round_trip_and_mapping() {
        let (disc, traj) = run_config(&cfg("stress")).unwrap();
        let state = traj.last();
        for (name, vtk) in field_files(&disc, state).unwrap() {
            let back = VtkData::from_text(&vtk.to_text()).unwrap();
            assert_eq!(back, vtk, "{name}");
        }
        let files = field_files(&disc, state).unwrap();
        let def = &files[1].1;
        for (i, x) in disc.disk.nodes.iter().enumerate() {
            assert_eq!(def.points[i], [x[0] + state.eta[i][0], x[1] + state.eta[i][1]]);
        }
        let (_, zero) = run_config(&cfg("zero")).unwrap();
        let files = field_files(&disc, zero.last()).unwrap();
        for (p, x) in files[3].1.points.iter().zip(&disc.annulus.nodes) {
            assert!((p[0] - x[0]).abs() < 1e-12 && (p[1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn svg_is_deterministic() {
        let (disc, traj) = run_config(&cfg("stress")).unwrap();
        assert_eq!(energy_svg(&traj), energy_svg(&traj));
        assert!(interface_svg(&disc, &traj).starts_with("<svg"));
    }

    #[test]
    fn zero_sweeps_report_zeros() {
        let mut base = cfg("zero");
        base.t_final = 0.125;
        let (rep, _) = h_sweep(&base, &[1.0, 0.5, 0.25, 0.125]);
        assert!(!rep.partial && rep.horizons_identical);
        assert!(rep.runs.iter().all(|r| r.e_final == 0.0 && r.terminal_norm == 0.0 && r.max_drift == 0.0));
        assert!(rep.consecutive_differences.iter().all(|d| *d == 0.0));
    }
}
