use std::path::Path;

use markov_order::estimator::{evaluate_path, summarize, Evaluation, ExperimentRow, RecoveryRow};
use markov_order::penalty::{cutoff_value, penalty_value, PenaltySpec};
use markov_order::rng::derive_seed;
use markov_order::Symbol;
use rayon::prelude::*;
use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{ensure_dir, fmt_f64, fmt_opt, write_csv, write_text};

const SYMBOLS_PER_LINE: usize = 64;

pub fn format_path(symbols: &[Symbol]) -> String {
    let mut out = String::with_capacity(symbols.len() * 2);
    for line in symbols.chunks(SYMBOLS_PER_LINE) {
        let words: Vec<String> = line.iter().map(|s| s.to_string()).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_path(text: &str, file: &Path) -> Result<Vec<Symbol>, CliError> {
    text.split_whitespace()
        .enumerate()
        .map(|(i, w)| {
            w.parse::<Symbol>()
                .map_err(|_| CliError::Validation(format!("{}: token {i} ({w:?}) is not a symbol", file.display())))
        })
        .collect()
}

/// Writes `paths/path_{i:05}.txt` and `paths/manifest.csv` for every replication.
pub fn simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = cfg.output.join("paths");
    ensure_dir(&dir)?;
    let n = *cfg.n_grid.last().unwrap();
    let entries = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, i);
            let path = cfg.model.sample_path(n, seed)?;
            let file = format!("path_{i:05}.txt");
            write_text(&dir.join(&file), &format_path(&path.symbols))?;
            Ok(vec![i.to_string(), seed.to_string(), n.to_string(), file])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write_csv(&dir.join("manifest.csv"), &["replication", "seed", "n", "file"], entries)
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    replication: u64,
    seed: u64,
    #[allow(dead_code)]
    n: usize,
    file: String,
}

fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let path = dir.join("manifest.csv");
    let mut reader =
        csv::Reader::from_path(&path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    reader.deserialize().map(|r| r.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))).collect()
}

/// Evaluations for every replication, in replication order.
fn evaluate_all(cfg: &ExperimentConfig, pens: &[PenaltySpec]) -> Result<Vec<Evaluation>, CliError> {
    let eval = |symbols: &[Symbol], replication: u64, seed: u64| {
        evaluate_path(&cfg.model, symbols, pens, &cfg.cutoff, &cfg.n_grid, replication, seed).map_err(CliError::from)
    };
    let per_rep = match &cfg.paths_dir {
        Some(dir) => read_manifest(dir)?
            .par_iter()
            .map(|entry| {
                let file = dir.join(&entry.file);
                let text = std::fs::read_to_string(&file)
                    .map_err(|e| CliError::Io(format!("cannot read path {}: {e}", file.display())))?;
                let symbols = parse_path(&text, &file)?;
                cfg.model.alphabet().check_symbols(&symbols, 0)?;
                eval(&symbols, entry.replication, entry.seed)
            })
            .collect::<Result<Vec<_>, CliError>>()?,
        None => {
            let n = *cfg.n_grid.last().unwrap();
            (0..cfg.replications)
                .into_par_iter()
                .map(|i| {
                    let seed = derive_seed(cfg.seed, i);
                    let path = cfg.model.sample_path(n, seed)?;
                    eval(&path.symbols, i, seed)
                })
                .collect::<Result<Vec<_>, CliError>>()?
        }
    };
    Ok(per_rep.into_iter().flatten().collect())
}

pub const ROW_HEADER: [&str; 8] =
    ["n", "penalty", "cutoff", "replication", "chosen_order", "true_order", "lil_stat", "seed"];

fn row_record(r: &ExperimentRow) -> Vec<String> {
    vec![
        r.n.to_string(),
        r.penalty.clone(),
        r.cutoff.clone(),
        r.replication.to_string(),
        r.chosen_order.to_string(),
        r.true_order.to_string(),
        fmt_opt(r.lil_stat),
        r.seed.to_string(),
    ]
}

fn write_recovery(path: &Path, summary: &[RecoveryRow]) -> Result<(), CliError> {
    write_csv(
        path,
        &["n", "penalty", "replications", "recovered", "under", "over", "rate"],
        summary.iter().map(|s| {
            vec![
                s.n.to_string(),
                s.penalty.clone(),
                s.replications.to_string(),
                s.recovered.to_string(),
                s.under.to_string(),
                s.over.to_string(),
                fmt_f64(s.rate),
            ]
        }),
    )
}

fn penalties_or_default(cfg: &ExperimentConfig) -> Vec<PenaltySpec> {
    if cfg.penalties.is_empty() {
        vec![PenaltySpec::default_loglog(cfg.model.alphabet_size())]
    } else {
        cfg.penalties.clone()
    }
}

/// Order estimates with the first configured penalty.
pub fn estimate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    ensure_dir(&cfg.output)?;
    let pens = vec![penalties_or_default(cfg).swap_remove(0)];
    let evals = evaluate_all(cfg, &pens)?;
    write_csv(&cfg.output.join("estimates.csv"), &ROW_HEADER, evals.iter().map(|e| row_record(&e.row)))?;
    let scores = evals.iter().flat_map(|e| {
        e.estimate.table.iter().map(move |s| {
            vec![
                e.row.replication.to_string(),
                e.row.n.to_string(),
                e.row.penalty.clone(),
                s.order.to_string(),
                fmt_f64(s.loglik),
                fmt_f64(s.penalty),
                fmt_f64(s.score),
                (s.order == e.estimate.chosen_order).to_string(),
            ]
        })
    });
    write_csv(
        &cfg.output.join("scores.csv"),
        &["replication", "n", "penalty", "order", "loglik", "penalty_value", "score", "chosen"],
        scores,
    )?;
    let rows: Vec<ExperimentRow> = evals.into_iter().map(|e| e.row).collect();
    write_recovery(&cfg.output.join("recovery.csv"), &summarize(&rows, &cfg.n_grid, &pens))
}

/// All configured penalties on the same paths.
pub fn sweep(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.penalties.len() < 2 {
        return Err(CliError::Validation("config field `penalty`: sweep needs at least two penalties".into()));
    }
    ensure_dir(&cfg.output)?;
    let pens = &cfg.penalties;
    let rows: Vec<ExperimentRow> = evaluate_all(cfg, pens)?.into_iter().map(|e| e.row).collect();
    write_csv(&cfg.output.join("sweep.csv"), &ROW_HEADER, rows.iter().map(row_record))?;
    write_recovery(&cfg.output.join("sweep_recovery.csv"), &summarize(&rows, &cfg.n_grid, pens))?;
    let m = cfg.model.alphabet_size();
    let mut values = Vec::new();
    for &n in &cfg.n_grid {
        let kappa = cutoff_value(&cfg.cutoff, n as f64, m)?.min(n);
        for r in 0..kappa {
            for pen in pens {
                let v = penalty_value(pen, n as f64, r, m)?;
                values.push(vec![n.to_string(), r.to_string(), pen.label(), fmt_f64(v)]);
            }
        }
    }
    write_csv(&cfg.output.join("penalty_values.csv"), &["n", "r", "penalty", "value"], values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_text_round_trip() {
        let symbols: Vec<Symbol> = (0..150).map(|i| (i % 3) as Symbol).collect();
        let text = format_path(&symbols);
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text.lines().next().unwrap().split(' ').count(), 64);
        assert_eq!(parse_path(&text, Path::new("x")).unwrap(), symbols);
        assert!(matches!(parse_path("0 1 x", Path::new("x")), Err(CliError::Validation(_))));
    }
}
