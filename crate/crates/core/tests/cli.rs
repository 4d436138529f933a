use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gnmk::cli::{ExperimentConfig, RunSummary, MARKER};

fn gnmk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnmk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

fn column_mean(rows: &[&csv::StringRecord], col: usize) -> f64 {
    rows.iter()
        .map(|r| r[col].parse::<f64>().unwrap())
        .sum::<f64>()
        / rows.len() as f64
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = gnmk(&["simulate", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
    assert!(!out_dir.exists());
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "seed = 1\nbogus_field = 3\n");
    let out = gnmk(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_field"));
}

#[test]
fn invalid_value_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 1\n[filter]\ndelta_tau = 5.0\n",
    );
    let out = gnmk(&[
        "smooth",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("filter.delta_tau"));
}

#[test]
fn output_dir_of_another_config_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("o");
    let d = dir.to_str().unwrap();
    assert_eq!(code(&gnmk(&["simulate", "--seed", "1", "--out", d])), 0);
    assert_eq!(code(&gnmk(&["simulate", "--seed", "1", "--out", d])), 0);
    assert_eq!(code(&gnmk(&["simulate", "--seed", "2", "--out", d])), 2);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        assert_eq!(
            code(&gnmk(&[
                "simulate",
                "--seed",
                "1",
                "--out",
                dir.to_str().unwrap()
            ])),
            0
        );
    }
    for f in ["measurement.csv", "truth.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn zero_window_direct_smoother_and_hashes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 4\nsmoother = \"ds\"\nhorizon = 0.0\nquantile_samples = 1000\n",
    );
    let dir = tmp.path().join("o");
    let out = gnmk(&["smooth", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.steps.len(), 1);
    assert_eq!(summary.steps[0].iterations, 1);
    assert_eq!(summary.reports.len(), 1);

    let hash = ExperimentConfig::load(Path::new(&cfg)).unwrap().hash();
    assert_eq!(summary.config_hash, hash);
    assert_eq!(fs::read_to_string(dir.join(MARKER)).unwrap().trim(), hash);
    for r in records(&dir.join("trajectory.csv")) {
        assert_eq!(r.iter().next_back().unwrap(), hash);
    }
    for entry in fs::read_dir(dir.join("posteriors")).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(text.starts_with(&format!("# config_hash {hash}")));
    }
}

#[test]
fn seed_flag_matches_seed_in_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "seed = 7\n");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(
        code(&gnmk(&[
            "simulate",
            "--config",
            &cfg,
            "--out",
            a.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&gnmk(&[
            "simulate",
            "--seed",
            "7",
            "--out",
            b.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        fs::read(a.join("measurement.csv")).unwrap(),
        fs::read(b.join("measurement.csv")).unwrap()
    );
}

#[test]
fn strict_mode_reports_divergence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 1\nsmoother = \"ds\"\nhorizon = 96.0\nquantile_samples = 1000\n",
    );
    let dir = tmp.path().join("o");
    let out = gnmk(&[
        "smooth",
        "--strict",
        "--config",
        &cfg,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("summary.json").exists());
}

#[test]
fn jacobian_check_short_window_is_more_accurate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("o");
    let out = gnmk(&[
        "jacobian-check",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = records(&dir.join("jacobian.csv"));
    let window = |w: f64| -> Vec<&csv::StringRecord> {
        rows.iter()
            .filter(|r| r[1].parse::<f64>().unwrap() == w)
            .collect()
    };
    let (short, long) = (window(6.0), window(24.0));
    assert!(!short.is_empty() && !long.is_empty());
    for col in [2, 3] {
        assert!(
            column_mean(&short, col) < column_mean(&long, col),
            "column {col}"
        );
    }
}

#[test]
fn fit_pce_nmap_beats_hermite_at_96_hours() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 1\n[fit_pce]\npolicies = [\"fixed-hermite\", \"nmap\"]\n",
    );
    let dir = tmp.path().join("o");
    let out = gnmk(&["fit-pce", "--config", &cfg, "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = records(&dir.join("fit_pce.csv"));
    let at = |policy: &str| -> Vec<&csv::StringRecord> {
        rows.iter()
            .filter(|r| &r[0] == policy && r[1].parse::<f64>().unwrap() == 96.0)
            .collect()
    };
    let (hermite, nmap) = (at("fixed-hermite"), at("nmap"));
    assert_eq!(hermite.len(), 3);
    assert_eq!(nmap.len(), 3);
    assert!(column_mean(&nmap, 3) < column_mean(&hermite, 3));
}

#[test]
fn smooth_is_deterministic_and_summary_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "seed = 3\nhorizon = 12.0\nquantile_samples = 1000\n",
    );
    let dirs = [
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    ];
    for (k, dir) in dirs.iter().enumerate() {
        let mut args = vec!["smooth", "--config", &cfg, "--out", dir.to_str().unwrap()];
        if k == 2 {
            args.push("--sequential");
        }
        let out = gnmk(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let traj = fs::read(dirs[0].join("trajectory.csv")).unwrap();
    for dir in &dirs[1..] {
        assert_eq!(traj, fs::read(dir.join("trajectory.csv")).unwrap());
    }
    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(dirs[0].join("summary.json")).unwrap()).unwrap();
    let max_iter = summary.config.filter.max_iter;
    assert!(summary.steps.iter().all(|s| s.iterations <= max_iter));
    for r in &summary.reports {
        assert!((0..3).all(|i| r.p01[i] <= r.p99[i] && r.variance[i] >= 0.0));
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.validate()
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 8);
}
