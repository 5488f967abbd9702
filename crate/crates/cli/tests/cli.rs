use std::path::Path;
use std::process::Command;

use rydq_cli::config::{parse_config, RunConfig};
use rydq_cli::targets::TARGETS;
use rydq_cli::{reproduce_all, EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL};

fn rydq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rydq"))
}

/// Defaults with smaller shot counts.
fn light() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.telegraph.n_shots = 5000;
    cfg.telegraph.trace_shots = 2000;
    cfg.readout.table_shots = 5000;
    cfg.readout.fit_restarts = 2;
    cfg.ensemble.n_pairs = 5000;
    cfg.qubit.washout_pairs = 2000;
    cfg
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn reproduce_all_writes_every_target() {
    let tmp = tempfile::tempdir().unwrap();
    let report = reproduce_all(&light(), tmp.path(), 2).unwrap();
    assert_eq!(report.exit_code(), EXIT_OK, "{:?}", report.failed);
    for t in TARGETS {
        let dir = tmp.path().join(t);
        assert!(dir.join("summary.json").is_file(), "{t}");
        let csvs = std::fs::read_dir(&dir)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
            .count();
        assert!(csvs >= 1, "{t}");
    }
    assert!(tmp.path().join("summary.json").is_file());
    assert!(tmp.path().join("provenance.json").is_file());
    let hash = light().hash();
    let csv = std::fs::read_to_string(tmp.path().join("fig2a_histograms/histograms.csv")).unwrap();
    assert!(csv.starts_with(&format!("# rydq {} config {hash} seed ", env!("CARGO_PKG_VERSION"))));
}

#[test]
fn outputs_are_independent_of_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    reproduce_all(&light(), a.path(), 1).unwrap();
    reproduce_all(&light(), b.path(), 3).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
}

#[test]
fn seed_changes_sampled_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut other = light();
    other.master_seed += 1;
    rydq_cli::run_targets(&light(), a.path(), 2, &["fig4_ramsey"]).unwrap();
    rydq_cli::run_targets(&other, b.path(), 2, &["fig4_ramsey"]).unwrap();
    let fa = std::fs::read_to_string(a.path().join("fig4_ramsey/fringes.csv")).unwrap();
    let fb = std::fs::read_to_string(b.path().join("fig4_ramsey/fringes.csv")).unwrap();
    assert_ne!(fa.lines().nth(3), fb.lines().nth(3));
}

#[test]
fn failing_target_is_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = light();
    // Too short to cover two Rabi periods, so the Rabi fit is refused.
    cfg.qubit.rabi_t_max = 0.2;
    let report = rydq_cli::run_targets(&cfg, tmp.path(), 2, &["fig3_rabi", "fig4_ramsey"]).unwrap();
    assert_eq!(report.exit_code(), EXIT_PARTIAL);
    assert_eq!(report.completed, vec!["fig4_ramsey".to_string()]);
    assert!(tmp.path().join("fig4_ramsey/summary.json").is_file());
    let summary = std::fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    assert!(summary.contains("\"failed\""));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[telegraph]\nf_prep = 1.2\n").unwrap();
    let out = rydq()
        .args(["--config", bad.to_str().unwrap(), "ensemble"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("telegraph.f_prep"));

    std::fs::write(&bad, "[qubit]\nomgea = 5.0\n").unwrap();
    let out = rydq()
        .args(["--config", bad.to_str().unwrap(), "ensemble"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omgea"));
}

#[test]
fn emitted_defaults_parse_back() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rydq().arg("config").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let path = tmp.path().join("defaults.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    assert_eq!(parse_config(&path).unwrap(), RunConfig::default());
}

#[test]
fn subcommand_writes_its_target() {
    let tmp = tempfile::tempdir().unwrap();
    let out = rydq()
        .args(["--out", tmp.path().to_str().unwrap(), "--seed", "5", "readout", "gain"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let s = std::fs::read_to_string(tmp.path().join("readout_gain/summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert!(v["headline"]["gain"].as_f64().unwrap() > 0.0);
}

#[test]
fn fits_histograms_from_files() {
    let tmp = tempfile::tempdir().unwrap();
    let p = rydq_core::telegraph::TelegraphParams::default();
    let mut args = vec![
        "--out".to_string(),
        tmp.path().display().to_string(),
        "readout".into(),
        "fit".into(),
    ];
    for (i, t0) in [0.0, 6.0, 12.0, 18.0].into_iter().enumerate() {
        let w = rydq_core::telegraph::Window::new(t0, 6.0).unwrap();
        let counts = rydq_core::telegraph::simulate_counts(&p, &w, true, 2000, 40 + i as u64).unwrap();
        let hist = rydq_core::telegraph::histogram(&counts);
        let mut csv = String::from("count,occurrences\n");
        for (k, n) in hist.iter().enumerate() {
            csv.push_str(&format!("{k},{n}\n"));
        }
        let path = tmp.path().join(format!("h{i}.csv"));
        std::fs::write(&path, csv).unwrap();
        std::fs::write(
            path.with_extension("json"),
            format!("{{\"t_start\": {t0}, \"t_len\": 6.0}}"),
        )
        .unwrap();
        args.push("--histogram".into());
        args.push(path.display().to_string());
    }
    let out = rydq().args(&args).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&out.stderr));
    let s = std::fs::read_to_string(tmp.path().join("readout_fit/summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    let f = v["headline"]["f_prep"].as_f64().unwrap();
    assert!((f - 0.93).abs() < 0.03, "{f}");
}
