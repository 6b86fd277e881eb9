use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use markov_order::model::parse_model;
use markov_order::rng::derive_seed;
use markov_order::{consistency_experiment, CutoffSpec, PenaltySpec};
use serde_json::Value;

const CHAIN: &str = "alphabet_size = 2\norder = 1\nkernel =\n0.7 0.3\n0.2 0.8\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_markov-order"))
}

fn run(config: &Path, args: &[&str]) -> Output {
    bin().arg("--config").arg(config).args(args).output().unwrap()
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("chain.model"), CHAIN).unwrap();
    let text = format!(
        "model = \"chain.model\"\nn_grid = [256, 1024]\nreplications = 6\nseed = 11\n\
         [[penalty]]\nkind = \"log_log\"\nc = 5.0\n[[penalty]]\nkind = \"bic\"\n{extra}"
    );
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, text).unwrap();
    (dir, cfg)
}

const SMALL_VERIFY: &str = "[verify]\ninstances = 30\ninstance_n = 128\nchecks = [\"bernstein_norm\", \"hellinger_sandwich\", \"bracketing\"]\n";

#[test]
fn exit_codes() {
    let (dir, cfg) = setup("");
    assert_eq!(run(&dir.path().join("absent.toml"), &["estimate"]).status.code(), Some(2));

    fs::write(&cfg, "model = \"chain.model\"\nn_grid = [256]\nreplications = 0\n").unwrap();
    let out = run(&cfg, &["estimate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("replications"));

    fs::write(&cfg, "model = \"nowhere.model\"\nn_grid = [256]\n").unwrap();
    assert_eq!(run(&cfg, &["estimate"]).status.code(), Some(2));

    fs::write(dir.path().join("bad.model"), "alphabet_size = 2\norder = 1\nkernel =\n0.5 0.6\n0.2 0.8\n").unwrap();
    fs::write(&cfg, "model = \"bad.model\"\nn_grid = [256]\n").unwrap();
    assert_eq!(run(&cfg, &["estimate"]).status.code(), Some(1));

    fs::write(&cfg, "model = \"chain.model\"\nn_grid = [256]\n[[penalty]]\nkind = \"bic\"\n").unwrap();
    let out = run(&cfg, &["sweep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("penalty"));

    assert_eq!(bin().arg("estimate").output().unwrap().status.code(), Some(1));
    assert_eq!(run(&cfg, &["estimate"]).status.code(), Some(0));
}

#[test]
fn verify_report_schema_and_fault_injection() {
    let (dir, cfg) = setup(SMALL_VERIFY);
    let out = run(&cfg, &["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], Value::Bool(true));
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 3);
    for c in checks {
        for key in ["name", "theorem_backed", "parameters", "empirical", "bound", "margin", "pass", "details"] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
        assert!(c["theorem_backed"].as_bool().unwrap());
    }

    let faulty = SMALL_VERIFY.to_string() + "inject_fault = \"unnormalized_mixture\"\n";
    let (dir, cfg) = setup(&faulty);
    let out = run(&cfg, &["verify"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], Value::Bool(false));
    let norm = &report["checks"][0];
    assert_eq!(norm["name"], "bernstein_norm");
    assert_eq!(norm["pass"], Value::Bool(false));
    assert!(norm["details"]["violations"].as_u64().unwrap() > 0);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_byte_identical_across_runs_and_thread_counts() {
    let (dir, cfg) = setup(SMALL_VERIFY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, jobs) in [(&a, "1"), (&b, "3")] {
        for cmd in ["simulate", "estimate", "sweep", "verify"] {
            let o = run(&cfg, &["--out", out.to_str().unwrap(), "--jobs", jobs, cmd]);
            assert_eq!(o.status.code(), Some(0), "{cmd}");
        }
    }
    assert_eq!(read_all(&a), read_all(&b));
    assert_eq!(read_all(&a.join("paths")), read_all(&b.join("paths")));
    assert!(read_all(&a).iter().any(|(f, _)| f == "report.json"));
}

#[test]
fn simulate_manifest_uses_derived_seeds() {
    let (dir, cfg) = setup("");
    assert!(run(&cfg, &["--seed", "99", "simulate"]).status.success());
    let paths = dir.path().join("out/paths");
    let mut reader = csv::Reader::from_path(paths.join("manifest.csv")).unwrap();
    let model = parse_model(CHAIN).unwrap();
    let mut count = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.unwrap();
        assert_eq!(rec[0].parse::<u64>().unwrap(), i as u64);
        let seed: u64 = rec[1].parse().unwrap();
        assert_eq!(seed, derive_seed(99, i as u64));
        assert_eq!(&rec[2], "1024");
        let text = fs::read_to_string(paths.join(&rec[3])).unwrap();
        let symbols: Vec<u32> = text.split_whitespace().map(|w| w.parse().unwrap()).collect();
        assert_eq!(symbols, model.sample_path(1024, seed).unwrap().symbols);
        assert!(text.lines().all(|l| l.split(' ').count() <= 64));
        count += 1;
    }
    assert_eq!(count, 6);
}

#[test]
fn estimate_matches_library_and_stored_paths() {
    let (dir, cfg) = setup("");
    assert!(run(&cfg, &["estimate"]).status.success());
    let inline = fs::read_to_string(dir.path().join("out/estimates.csv")).unwrap();

    let model = parse_model(CHAIN).unwrap();
    let table =
        consistency_experiment(&model, &PenaltySpec::LogLog { c: 5.0 }, &CutoffSpec::sub_log(), &[256, 1024], 6, 11)
            .unwrap();
    let lines: Vec<&str> = inline.lines().skip(1).collect();
    assert_eq!(lines.len(), table.rows.len());
    for (line, row) in lines.iter().zip(&table.rows) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0].parse::<usize>().unwrap(), row.n);
        assert_eq!(f[3].parse::<u64>().unwrap(), row.replication);
        assert_eq!(f[4].parse::<usize>().unwrap(), row.chosen_order);
        assert_eq!(f[7].parse::<u64>().unwrap(), row.seed);
    }

    assert!(run(&cfg, &["simulate"]).status.success());
    let text = fs::read_to_string(&cfg).unwrap().replacen("seed = 11\n", "seed = 11\npaths_dir = \"out/paths\"\n", 1);
    fs::write(&cfg, text).unwrap();
    assert!(run(&cfg, &["--out", dir.path().join("from_paths").to_str().unwrap(), "estimate"]).status.success());
    let stored = fs::read_to_string(dir.path().join("from_paths/estimates.csv")).unwrap();
    assert_eq!(inline, stored);
}

#[test]
fn constant_path_selects_order_zero() {
    let (dir, cfg) = setup("");
    let paths = dir.path().join("const");
    fs::create_dir_all(&paths).unwrap();
    fs::write(paths.join("manifest.csv"), "replication,seed,n,file\n0,0,1024,p.txt\n").unwrap();
    fs::write(paths.join("p.txt"), "0 ".repeat(1024)).unwrap();
    let text = fs::read_to_string(&cfg).unwrap().replacen("seed = 11\n", "seed = 11\npaths_dir = \"const\"\n", 1);
    fs::write(&cfg, text).unwrap();
    assert!(run(&cfg, &["estimate"]).status.success());
    let est = fs::read_to_string(dir.path().join("out/estimates.csv")).unwrap();
    let orders: Vec<&str> = est.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(orders, vec!["0", "0"]);

    fs::write(paths.join("p.txt"), "0 1 5 0").unwrap();
    assert_eq!(run(&cfg, &["estimate"]).status.code(), Some(1));
}

#[test]
fn sweep_agrees_with_estimate_for_shared_penalty() {
    let (dir, cfg) = setup("");
    assert!(run(&cfg, &["estimate"]).status.success());
    assert!(run(&cfg, &["sweep"]).status.success());
    let est = fs::read_to_string(dir.path().join("out/estimates.csv")).unwrap();
    let sweep = fs::read_to_string(dir.path().join("out/sweep.csv")).unwrap();
    let first: Vec<&str> = sweep.lines().filter(|l| !l.contains(",bic,")).collect();
    assert_eq!(first, est.lines().collect::<Vec<_>>());
    assert_eq!(sweep.lines().filter(|l| l.contains(",bic,")).count(), 12);

    let values = fs::read_to_string(dir.path().join("out/penalty_values.csv")).unwrap();
    assert!(values.starts_with("n,r,penalty,value\n"));
    let bic_256_0: f64 =
        values.lines().find(|l| l.starts_with("256,0,bic,")).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!((bic_256_0 - 0.5 * 256f64.ln()).abs() < 1e-9);
}
