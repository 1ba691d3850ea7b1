use std::fs;
use std::process::{Command, Output};

fn twoboson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twoboson")).args(args).env_remove("TWOBOSON_WORKERS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_cleanly() {
    let o = twoboson(&["phase-diagram", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("--config") && text.contains("--workers"), "{text}");
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(twoboson(&["transmogrify"]).status.code(), Some(2));
    assert_eq!(twoboson(&["spectrum", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(twoboson(&["spectrum", "--mu", "lots"]).status.code(), Some(2));
    let o = twoboson(&["reproduce", "fig99"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("tableII"));
}

#[test]
fn physics_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twoboson(&["spectrum", "--L", "2", "--out", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "diagnostics = 3").unwrap();
    let o = twoboson(&["phase-diagram", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn spectrum_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twoboson(&["spectrum", "--L", "15", "--mu", "0.5", "--U", "0.8", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_hash="));
    assert_eq!(lines[2], "index,re_E,im_E,ipr");
    assert_eq!(lines.len(), 3 + 120);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn phase_diagram_from_config_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("grid.toml");
    fs::write(
        &config,
        r#"
diagnostics = ["pt", "localization"]
output_dir = "unused"
[base_params]
J = 1.0
mu = 0.0
U = 0.0
L = 8
[mu_range]
min = 0.0
max = 1.5
steps = 4
[u_range]
min = 0.0
max = 1.0
steps = 2
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = twoboson(&[
        "phase-diagram",
        "--config",
        config.to_str().unwrap(),
        "--L",
        "15",
        "--U",
        "0.5",
        "--out",
        out.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("grid.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3 + 4);
    assert!(csv.lines().skip(3).all(|l| l.split(',').nth(1) == Some("0.5")));
}

#[test]
fn worker_count_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_twoboson"))
        .args(["phase-diagram", "--L", "15", "--mu", "0.5", "--U", "0.0", "--out", out])
        .env("TWOBOSON_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 cells"));
}

#[test]
fn evolve_and_entropy_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(
        &config,
        r#"{"base_params": {"J": 1.0, "mu": 1.5, "U": 0.8, "L": 13},
            "mu_range": {"min": 1.5, "max": 1.5, "steps": 1},
            "u_range": {"min": 0.8, "max": 0.8, "steps": 1},
            "diagnostics": ["dynamics"],
            "time_grid": {"t_min": 0.1, "t_max": 100.0, "per_decade": 8},
            "output_dir": "x"}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let o = twoboson(&["evolve", "--config", config.to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    assert!(trace.lines().nth(2).unwrap().starts_with("t,log_norm,peak_site,n_1,"));
    assert_eq!(trace.lines().count(), 3 + 25);
    let jumps = fs::read_to_string(dir.path().join("o/jumps.csv")).unwrap();
    assert_eq!(jumps.lines().nth(2).unwrap(), "convention,from_rank,to_rank,from_site,to_site,time");

    let o = twoboson(&["entropy", "--config", config.to_str().unwrap(), "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ee = fs::read_to_string(dir.path().join("o/entropy.csv")).unwrap();
    assert_eq!(ee.lines().nth(2).unwrap(), "t,p0,p1,p2,s_num,s_conf,s_total");
}

#[test]
fn winding_and_doublon_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twoboson(&["winding", "--L", "13", "--mu", "1.5", "--rational-alpha", "--e-re", "0", "--e-im", "0.05", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("winding.csv")).unwrap();
    assert_eq!(csv.lines().nth(2).unwrap(), "mu,U,E_B_re,E_B_im,w,raw_phase");

    let o = twoboson(&["doublon", "--L", "13", "--mu", "0.5", "--U", "10", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let band = fs::read_to_string(dir.path().join("doublon_band.csv")).unwrap();
    assert_eq!(band.lines().count(), 3 + 13);
    assert!(dir.path().join("effective.csv").exists());
}

#[test]
fn reproduce_desk_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = twoboson(&["reproduce", "tableII", "--desk", "--out", out, "--workers", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(dir.path().join("table_ii.csv")).unwrap();
    assert_eq!(table.lines().nth(2).unwrap(), "rank,index,peak_site,re_E,im_E,overlap,biorthogonal");
    assert_eq!(table.lines().count(), 3 + 4);
}
