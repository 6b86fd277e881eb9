//! The `verify` subcommand: numerical checks of the deviation inequalities.
//!
//! Each check writes one entry of `report.json`. Only the theorem-backed
//! checks decide the exit status; the others are reported for inspection.

use markov_order::diagnostics::{
    bernstein_mc_check, bernstein_norm_check, bracket_count_check, bracketing_check, deviation_tail_mc,
    enumerated_bracket_count, expected_bernstein_norm, hellinger_sandwich_check, lil_trajectory_seeds, random_instance,
    typicality_trend, BoundParams, Instance, InstanceCheckReport,
};
use markov_order::rng::derive_seed;
use markov_order::{mixture_kernel, MarkovModel};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{ensure_dir, fmt_f64, write_csv, write_text};

pub const THEOREM_BACKED: [&str; 4] = ["bernstein_norm", "hellinger_sandwich", "bracketing", "bernstein"];
pub const ALL_CHECKS: [&str; 7] =
    ["bernstein_norm", "hellinger_sandwich", "bracketing", "bernstein", "deviation_tail", "lil", "typicality"];

/// Confidence level used for the default alpha grid: the largest alpha has
/// a bound of about `1e-4`.
const ALPHA_GRID_LEVEL: f64 = 1e4;
const ALPHA_POINTS: usize = 10;
const BRACKET_PATHS: usize = 10;
const BRACKET_DELTA: f64 = 1.0;
const BRACKET_SIGMA: f64 = 0.05;
const BRACKET_SAMPLES: usize = 200;

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub theorem_backed: bool,
    pub parameters: Value,
    pub empirical: Option<f64>,
    pub bound: Option<f64>,
    pub margin: Option<f64>,
    pub pass: bool,
    pub details: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub all_pass: bool,
    pub checks: Vec<CheckResult>,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report types serialize")
}

fn check_seed(cfg: &ExperimentConfig, name: &str) -> u64 {
    let idx = ALL_CHECKS.iter().position(|c| *c == name).unwrap() as u64;
    derive_seed(cfg.seed, 1000 + idx)
}

fn instances(cfg: &ExperimentConfig) -> Result<Vec<Instance>, CliError> {
    let n = cfg.verify.instance_n;
    if n < 8 || !n.is_multiple_of(2) {
        return Err(CliError::Validation("config field `verify.instance_n`: must be even and at least 8".into()));
    }
    let seed = derive_seed(cfg.seed, 999);
    (0..cfg.verify.instances as u64)
        .map(|k| {
            let m = 2 + (k % 2) as usize;
            let r = 1 + (k % 3) as usize;
            random_instance(derive_seed(seed, k), m, r, n).map_err(CliError::from)
        })
        .collect()
}

fn instance_result(name: &str, params: Value, rep: &InstanceCheckReport) -> CheckResult {
    CheckResult {
        name: name.into(),
        theorem_backed: true,
        parameters: params,
        empirical: Some(rep.worst_ratio),
        bound: Some(1.0),
        margin: Some(1e-9),
        pass: rep.pass(),
        details: to_value(rep),
    }
}

fn analysis_order(cfg: &ExperimentConfig) -> usize {
    cfg.verify.order.unwrap_or(cfg.model.true_order() + 1)
}

/// The truth lifted to order `r`, each row pulled 30% towards a point mass.
pub fn default_candidate(truth: &MarkovModel, r: usize) -> Result<MarkovModel, CliError> {
    let lifted = truth.lift(r)?;
    let m = truth.alphabet_size();
    let table: Vec<f64> = (0..lifted.num_contexts())
        .flat_map(|ctx| {
            lifted
                .row(ctx)
                .iter()
                .enumerate()
                .map(move |(b, p)| 0.7 * p + if b == ctx % m { 0.3 } else { 0.0 })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(MarkovModel::new(truth.alphabet(), r, table, None)?)
}

/// `alpha` with `alpha^2 = 2 ln(L) (K alpha + R)` for `K = 2`.
pub fn default_alpha_grid(big_r: f64) -> Vec<f64> {
    let l = ALPHA_GRID_LEVEL.ln();
    let alpha_max = 2.0 * l + (4.0 * l * l + 2.0 * l * big_r).sqrt();
    (1..=ALPHA_POINTS).map(|k| alpha_max * k as f64 / ALPHA_POINTS as f64).collect()
}

fn bernstein(cfg: &ExperimentConfig) -> Result<CheckResult, CliError> {
    let v = &cfg.verify;
    let truth = &cfg.model;
    let r = analysis_order(cfg);
    let candidate = match &cfg.candidate {
        Some(c) => c.clone(),
        None => default_candidate(truth, r)?,
    };
    let mix = mixture_kernel(&candidate, truth, r)?;
    let big_r = match v.big_r {
        Some(x) => x,
        None => 2.0 * expected_bernstein_norm(truth, &mix, v.mc_n)?,
    };
    if !(big_r > 0.0 && big_r.is_finite()) {
        return Err(CliError::Validation("config field `verify.big_r`: must be positive".into()));
    }
    let alphas = v.alpha_grid.clone().unwrap_or_else(|| default_alpha_grid(big_r));
    let seed = check_seed(cfg, "bernstein");
    let rep = bernstein_mc_check(truth, &candidate, r, v.mc_n, &alphas, big_r, v.mc_replications, seed)?;
    write_csv(
        &cfg.output.join("bernstein_mc.csv"),
        &["alpha", "empirical", "bound", "margin", "pass"],
        rep.rows.iter().map(|row| {
            vec![
                fmt_f64(row.alpha),
                fmt_f64(row.empirical),
                fmt_f64(row.bound),
                fmt_f64(row.margin),
                row.pass.to_string(),
            ]
        }),
    )?;
    let worst = rep
        .rows
        .iter()
        .max_by(|a, b| (a.empirical - a.bound - a.margin).total_cmp(&(b.empirical - b.bound - b.margin)))
        .expect("alpha grid is nonempty");
    Ok(CheckResult {
        name: "bernstein".into(),
        theorem_backed: true,
        parameters: json!({"r": r, "n": v.mc_n, "replications": v.mc_replications, "big_r": big_r, "k": rep.k, "seed": seed}),
        empirical: Some(worst.empirical),
        bound: Some(worst.bound),
        margin: Some(worst.margin),
        pass: rep.all_pass,
        details: to_value(&rep),
    })
}

fn bracketing(cfg: &ExperimentConfig, params: &BoundParams) -> Result<CheckResult, CliError> {
    let v = &cfg.verify;
    let r = analysis_order(cfg).max(1);
    let n = v.instance_n / 2;
    let m = cfg.model.alphabet_size();
    let seed = check_seed(cfg, "bracketing");
    let rep = bracketing_check(v.instances, BRACKET_PATHS, m, r, n, BRACKET_DELTA, params, seed)?;
    let r_count = r.max(cfg.model.true_order());
    let count_seed = derive_seed(seed, u64::MAX);
    let count = if m == 2 {
        enumerated_bracket_count(&cfg.model, r_count, n, BRACKET_SIGMA, BRACKET_DELTA, params)?
    } else {
        bracket_count_check(&cfg.model, r_count, n, BRACKET_SIGMA, BRACKET_DELTA, BRACKET_SAMPLES, params, count_seed)?
    };
    Ok(CheckResult {
        name: "bracketing".into(),
        theorem_backed: true,
        parameters: json!({
            "kernels": v.instances, "paths_per_kernel": BRACKET_PATHS, "m": m, "r": r, "n": n,
            "delta": BRACKET_DELTA, "sigma": BRACKET_SIGMA, "count_method": if m == 2 { "enumerated" } else { "sampled" },
            "count_samples": BRACKET_SAMPLES, "seed": seed,
        }),
        empirical: Some(rep.worst_gap_ratio),
        bound: Some(1.0),
        margin: Some(1e-9),
        pass: rep.pass() && count.pass(),
        details: json!({"brackets": to_value(&rep), "count": to_value(&count)}),
    })
}

fn deviation_tail(cfg: &ExperimentConfig) -> Result<CheckResult, CliError> {
    let v = &cfg.verify;
    let r = analysis_order(cfg);
    let n = v.mc_n / 2;
    let rho = cfg.rho_for(n)?;
    let eps = v.eps_grid.clone().unwrap_or_else(|| (1..=20).map(|k| 0.25 * k as f64).collect());
    let seed = check_seed(cfg, "deviation_tail");
    let rep = deviation_tail_mc(&cfg.model, r, n, &eps, v.mc_replications, cfg.eta, rho, seed)?;
    write_csv(
        &cfg.output.join("deviation_tail.csv"),
        &["eps", "frequency", "count"],
        rep.rows.iter().map(|row| vec![fmt_f64(row.eps), fmt_f64(row.frequency), row.count.to_string()]),
    )?;
    let pass = rep.nonincreasing && rep.slope.is_some_and(|s| s < 0.0) && rep.r_squared.is_some_and(|r2| r2 >= 0.9);
    Ok(CheckResult {
        name: "deviation_tail".into(),
        theorem_backed: false,
        parameters: json!({"r": r, "n": n, "rho": rho, "eta": cfg.eta, "replications": v.mc_replications, "seed": seed}),
        empirical: rep.slope,
        bound: Some(0.0),
        margin: None,
        pass,
        details: to_value(&rep),
    })
}

fn lil(cfg: &ExperimentConfig) -> Result<CheckResult, CliError> {
    let v = &cfg.verify;
    let checkpoints = v
        .lil_checkpoints
        .clone()
        .unwrap_or_else(|| (0..=12).map(|k| (1024.0 * 2f64.powf(k as f64 / 2.0)).round() as usize).collect());
    let seed = check_seed(cfg, "lil");
    let summary = lil_trajectory_seeds(&cfg.model, &checkpoints, &cfg.cutoff, v.lil_seeds, seed)?;
    let rows = summary.series.iter().flat_map(|s| {
        s.checkpoints
            .iter()
            .enumerate()
            .map(move |(k, n)| vec![s.seed.to_string(), n.to_string(), fmt_f64(s.raw[k]), fmt_f64(s.normalized[k])])
    });
    write_csv(&cfg.output.join("lil.csv"), &["seed", "n", "raw", "normalized"], rows)?;
    Ok(CheckResult {
        name: "lil".into(),
        theorem_backed: false,
        parameters: json!({"checkpoints": checkpoints, "seeds": v.lil_seeds, "cutoff": cfg.cutoff.label(), "seed": seed}),
        empirical: Some(summary.slope),
        bound: Some(0.01),
        margin: None,
        pass: summary.slope <= 0.01,
        details: json!({"mean_normalized": summary.mean_normalized, "slope": summary.slope, "max": summary.max}),
    })
}

fn typicality(cfg: &ExperimentConfig) -> Result<CheckResult, CliError> {
    let v = &cfg.verify;
    let ns = v.typicality_n.clone().unwrap_or_else(|| vec![64, 256, 1024, 4096]);
    if ns.is_empty() {
        return Err(CliError::Validation("config field `verify.typicality_n`: must be nonempty".into()));
    }
    let rho = cfg.rho_for(ns[0])?;
    let reps = v.mc_replications.min(2000);
    let seed = check_seed(cfg, "typicality");
    let rows = typicality_trend(&cfg.model, &ns, cfg.eta, rho, reps, seed)?;
    let first = rows.first().map_or(0.0, |r| r.frequency);
    let last = rows.last().map_or(0.0, |r| r.frequency);
    Ok(CheckResult {
        name: "typicality".into(),
        theorem_backed: false,
        parameters: json!({"n": ns, "rho": rho, "eta": cfg.eta, "replications": reps, "seed": seed}),
        empirical: Some(last),
        bound: Some(first),
        margin: None,
        pass: last >= first,
        details: to_value(&rows),
    })
}

pub fn run_checks(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    let params = BoundParams::new(cfg.eta)?;
    let needs_instances = cfg.verify.checks.iter().any(|c| c == "bernstein_norm" || c == "hellinger_sandwich");
    let inst = if needs_instances { instances(cfg)? } else { Vec::new() };
    let inst_params = json!({
        "instances": cfg.verify.instances,
        "path_length": cfg.verify.instance_n,
        "alphabet_sizes": [2, 3],
        "orders": [1, 2, 3],
    });
    let mut checks = Vec::new();
    for name in &cfg.verify.checks {
        let result = match name.as_str() {
            "bernstein_norm" => {
                let rep = bernstein_norm_check(&inst, cfg.verify.inject_fault)?;
                let mut p = inst_params.clone();
                p["inject_fault"] = to_value(&cfg.verify.inject_fault);
                instance_result(name, p, &rep)
            }
            "hellinger_sandwich" => {
                let rep = hellinger_sandwich_check(&inst, &params)?;
                let mut p = inst_params.clone();
                p["eta"] = json!(cfg.eta);
                p["c3"] = json!(params.c3());
                p["c4"] = json!(params.c4());
                instance_result(name, p, &rep)
            }
            "bracketing" => bracketing(cfg, &params)?,
            "bernstein" => bernstein(cfg)?,
            "deviation_tail" => deviation_tail(cfg)?,
            "lil" => lil(cfg)?,
            "typicality" => typicality(cfg)?,
            other => {
                return Err(CliError::Validation(format!("config field `verify.checks`: unknown check {other:?}")))
            }
        };
        checks.push(result);
    }
    let all_pass = checks.iter().filter(|c| c.theorem_backed).all(|c| c.pass);
    Ok(Report { all_pass, checks })
}

pub fn verify(cfg: &ExperimentConfig) -> Result<(), CliError> {
    ensure_dir(&cfg.output)?;
    let report = run_checks(cfg)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text(&cfg.output.join("report.json"), &(text + "\n"))?;
    for c in &report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let kind = if c.theorem_backed { "" } else { " (informational)" };
        println!("{status} {}{kind}", c.name);
    }
    if report.all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> =
            report.checks.iter().filter(|c| c.theorem_backed && !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::CheckFailed(format!("checks failed: {}", failed.join(", "))))
    }
}
