//! The ten acceptance criteria with pinned tolerances. Prints one line per
//! criterion and exits nonzero on any failure not listed in KNOWN_FAILURES.

use fpsi_core::verification::*;
use std::time::Instant;

/// Sub-checks that fail on the current discretization and are documented in
/// the README. They are still run and reported as FAIL.
const KNOWN_FAILURES: &[&str] = &["7b"];

/// Runtime budgets in seconds, per criterion.
const BUDGETS: [(&str, f64); 10] =
    [("1", 10.0), ("2", 120.0), ("3", 30.0), ("4", 30.0), ("5", 10.0), ("6", 30.0), ("7", 600.0), ("8", 900.0), ("9", f64::INFINITY), ("10", f64::INFINITY)];

struct Line {
    id: &'static str,
    parts: Vec<CheckResult>,
    seconds: f64,
}

fn main() {
    let scale = SuiteScale::acceptance();
    let mut lines = Vec::new();
    let mut single = |id: &'static str, r: CheckResult| {
        let s = r.seconds;
        lines.push(Line { id, parts: vec![r], seconds: s });
    };
    single("1", plate_energy_equality(&scale));
    let (c2, t2) = biot_fluid_energy_equality(&scale);
    single("2", c2);
    single("3", coercivity_audit(&scale));
    single("4", geometry_oracles(&scale));
    single("5", path_metric(&scale));
    single("6", regularizer_checks(&scale));

    let t0 = Instant::now();
    let (rep7, runs7) = dt_study(4);
    let (c7, t7) = self_convergence(&rep7, &runs7);
    lines.push(Line { id: "7", parts: c7, seconds: t0.elapsed().as_secs_f64() });

    let t0 = Instant::now();
    let (rep8, runs8) = h_study(&H_LIST);
    let (c8, t8) = singular_limit(&rep8, &runs8);
    lines.push(Line { id: "8", parts: vec![c8], seconds: t0.elapsed().as_secs_f64() });

    lines.push(Line { id: "9", parts: vec![monotone_decay(t2.merge(t7).merge(t8))], seconds: 0.0 });
    let c10 = determinism();
    let s10 = c10.seconds;
    lines.push(Line { id: "10", parts: vec![c10], seconds: s10 });

    let mut unexpected = Vec::new();
    for line in &lines {
        let budget = BUDGETS.iter().find(|b| b.0 == line.id).map_or(f64::INFINITY, |b| b.1);
        let in_time = line.seconds <= budget;
        let passed = in_time && line.parts.iter().all(|p| p.passed);
        let mut detail = Vec::new();
        for p in &line.parts {
            let known = KNOWN_FAILURES.contains(&p.id.as_str());
            if !p.passed && !known {
                unexpected.push(p.id.clone());
            }
            let tag = match (p.passed, known) {
                (true, _) => "PASS",
                (false, true) => "FAIL, known",
                (false, false) => "FAIL",
            };
            detail.push(format!("[{} {tag}] {}: {}", p.id, p.name, p.detail));
        }
        if !in_time {
            unexpected.push(format!("{} (runtime)", line.id));
        }
        let budget_text = if budget.is_finite() { format!("budget {budget}s") } else { "no budget".into() };
        println!("criterion {:>2} {} ({:.1}s, {budget_text}) {}", line.id, if passed { "PASS" } else { "FAIL" }, line.seconds, detail.join(" "));
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
