//! One PASS/FAIL line per acceptance criterion. Runs without the default test
//! harness so the lines always reach stdout.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use paramstab::config::ModelConfig;
use paramstab::harness::{certify, sweep, SweepReport};
use paramstab::models::validate_cocoercivity;
use paramstab::models::RlcModel;
use paramstab::suite::{
    coefficient_anchor_error, lemma_suite, oscillator_order, perov_closed_form_error, rlc_residual,
    soundness_suite,
};
use paramstab::NormKind;

const FIG3: &str = include_str!("../../../configs/fig3.json");

fn fig3_panels() -> Result<Vec<(&'static str, ModelConfig)>, String> {
    let fixed = ModelConfig::from_json(FIG3).map_err(|e| e.to_string())?;
    let mut shifted = fixed.clone();
    shifted.perturb_initial = Some(true);
    if let Some(p) = shifted.perturbation.as_mut() {
        p.x0 = None;
    }
    Ok(vec![("fixed x0", fixed), ("x0 = (1+λ, 1+λ)", shifted)])
}

fn run_config(cfg: &ModelConfig) -> Result<SweepReport, String> {
    let family = cfg.build_family().map_err(|e| e.to_string())?;
    let lambdas = cfg.lambdas().map_err(|e| e.to_string())?;
    let options = cfg.sweep_options().map_err(|e| e.to_string())?;
    sweep(&family, &lambdas, &options).map_err(|e| e.to_string())
}

fn figure_reproduction() -> Result<(bool, String), String> {
    let started = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, cfg) in fig3_panels()? {
        let report = run_config(&cfg)?;
        let mut points: Vec<(f64, f64)> = report
            .rows
            .iter()
            .map(|r| {
                let v = r.values.as_ref().and_then(|v| v.dev_z).unwrap_or(f64::NAN);
                (r.lambda.values()[0], v)
            })
            .collect();
        points.sort_by(|a, b| b.0.total_cmp(&a.0));
        let decreasing = points.windows(2).all(|w| w[1].1 < w[0].1);
        let ratios: Vec<f64> = points.iter().map(|(l, d)| d / l).collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        let certified = certify(&report).is_pass();
        ok &= decreasing && hi <= 2.0 * lo && certified;
        detail.push(format!(
            "{name}: decreasing {decreasing}, dev_z/λ in [{lo:.4}, {hi:.4}], certify {}",
            if certified { "PASS" } else { "FAIL" }
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    ok &= secs < 5.0;
    detail.push(format!("{secs:.2}s"));
    Ok((ok, detail.join("; ")))
}

fn bound_soundness() -> Result<(bool, String), String> {
    let started = Instant::now();
    let s = soundness_suite(100, 4, 42, 1000, NormKind::Sup).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    Ok((
        s.passed() && secs < 60.0,
        format!(
            "{} families, {} rows, {} violations, {} failed rows, {secs:.2}s",
            s.families, s.rows, s.violations, s.failed_rows
        ),
    ))
}

fn integrator_order() -> Result<(bool, String), String> {
    let (order, err) = oscillator_order(1000).map_err(|e| e.to_string())?;
    Ok((
        order >= 3.8 && err <= 1e-8,
        format!("order {order:.4} (M=500 to 1000), endpoint error {err:.3e} at M=2000"),
    ))
}

fn perov_oracles() -> Result<(bool, String), String> {
    let err = perov_closed_form_error().map_err(|e| e.to_string())?;
    Ok((err <= 1e-9, format!("max relative error {err:.3e}")))
}

fn lemma_paths() -> Result<(bool, String), String> {
    let s = lemma_suite(1000, 10_000, 42, 1e-8, NormKind::Euclidean).map_err(|e| e.to_string())?;
    Ok((
        s.violations == 0,
        format!(
            "{} paths, {} violations, worst lhs - rhs {:.3e}",
            s.paths, s.violations, s.worst_gap
        ),
    ))
}

fn coefficient_anchors() -> Result<(bool, String), String> {
    let (err, exact) = coefficient_anchor_error().map_err(|e| e.to_string())?;
    Ok((
        err <= 1e-6 && exact,
        format!("max deviation {err:.3e} at t=1, (1, 0, 0) at t=0: {exact}"),
    ))
}

fn rlc_consistency() -> Result<(bool, String), String> {
    let residual = rlc_residual(2000).map_err(|e| e.to_string())?;
    let valid = RlcModel::default_parallel(1.0, 3.0, 0.0, 0.2)
        .validate()
        .is_ok();
    Ok((
        residual <= 1e-4 && valid,
        format!("residual {residual:.3e}, validator at α₀=3: {valid}"),
    ))
}

fn cocoercivity() -> Result<(bool, String), String> {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
    let good = validate_cocoercivity(&a, 0.5, 10_000);
    let bad = validate_cocoercivity(&a, 1.0, 10_000);
    Ok((
        good.passed && !bad.passed,
        format!("α=1/2 passes: {}, α=1 passes: {}", good.passed, bad.passed),
    ))
}

fn determinism() -> Result<(bool, String), String> {
    let mut same = true;
    let mut bytes = 0;
    for (_, cfg) in fig3_panels()? {
        let first = run_config(&cfg)?.to_csv();
        let second = run_config(&cfg)?.to_csv();
        bytes += first.len();
        same &= first == second;
    }
    let rlc = ModelConfig::from_json(r#"{"model": "rlc", "lambdas": [0.2, -0.1, 0.05]}"#)
        .map_err(|e| e.to_string())?;
    let (a, b) = (run_config(&rlc)?.to_csv(), run_config(&rlc)?.to_csv());
    same &= a == b;
    Ok((
        same,
        format!("{} bytes compared across three sweeps", bytes + a.len()),
    ))
}

type Criterion = fn() -> Result<(bool, String), String>;

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 9] = [
        ("figure reproduction", figure_reproduction),
        ("bound soundness", bound_soundness),
        ("integrator order", integrator_order),
        ("perov closed forms", perov_oracles),
        ("lemma on polynomial paths", lemma_paths),
        ("coefficient anchors", coefficient_anchors),
        ("rlc consistency", rlc_consistency),
        ("cocoercivity validator", cocoercivity),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        if !passed {
            failures += 1;
        }
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("criterion {} {tag} {name}: {detail}", i + 1);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
