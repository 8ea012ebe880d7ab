use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_collapsim"));
    c.env("COLLAPSIM_THREADS", "0");
    c
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(experiment: &str, config: &Path, out: &Path) -> Output {
    bin().arg(experiment).arg("--config").arg(config).arg("--out").arg(out).output().unwrap()
}

fn validate(config: &Path) -> Output {
    bin().arg("validate").arg("--config").arg(config).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const RUIN: &str = "experiment = ruin\nx0 = 0.3\nstake = 0.01\ntrajectories = 10000\nseed = 1\n";

const CSL: &str = "experiment = csl
mode = cooked
lambda = 1
a_L = 0.5
a_R = -0.5
x0 = 0.3
dt = 0.005
t_end = 1
trajectories = 200
";

#[test]
fn ruin_report_has_born_fraction_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ruin.conf", RUIN);
    let out = dir.path().join("out");
    let o = run("ruin", &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let f = &report["stats"]["l_win_fraction"];
    let (v, se) = (f["value"].as_f64().unwrap(), f["stderr"].as_f64().unwrap());
    assert!((v - 0.3).abs() <= 3.0 * se, "L won {v} ± {se}");
    assert_eq!(report["seed"], 1);
    assert_eq!(report["config"]["x0"], "0.3");

    let hist = report["histograms"][0].as_str().unwrap();
    let text = fs::read_to_string(out.join(hist)).unwrap();
    assert_eq!(text.lines().next(), Some("bin_lo,bin_hi,count"));
    let total: f64 = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert_eq!(total, 10_000.0);

    // Every statistic points at a file that was written.
    for (_, s) in report["stats"].as_object().unwrap() {
        assert!(out.join(s["source"].as_str().unwrap()).is_file());
    }
}

#[test]
fn zero_trajectories_is_a_config_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ruin.conf", &RUIN.replace("10000", "0"));
    let out = dir.path().join("out");
    let o = run("ruin", &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trajectories"));
    assert!(!out.exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "csl.conf", CSL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("csl", &cfg, &a).status.success());
    let o = bin()
        .env("COLLAPSIM_THREADS", "3")
        .args(["csl", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&b)
        .output()
        .unwrap();
    assert!(o.status.success());
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for n in names.iter().filter(|n| n.to_str().unwrap().ends_with(".csv")) {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn seed_flag_changes_the_realization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "csl.conf", CSL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run("csl", &cfg, &a).status.success());
    let o = bin().args(["csl", "--seed", "99", "--config"]).arg(&cfg).arg("--out").arg(&b).output().unwrap();
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("final.csv")).unwrap(), fs::read(b.join("final.csv")).unwrap());
    let report: Value = serde_json::from_str(&fs::read_to_string(b.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 99);
}

#[test]
fn json_format_writes_json_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ruin.conf", "experiment = ruin\nmode = solve\nstake = 0.1\npoints = 10\n");
    let out = dir.path().join("out");
    let o = bin().args(["ruin", "--format", "json", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let t: Value = serde_json::from_str(&fs::read_to_string(out.join("ruin_probability.json")).unwrap()).unwrap();
    assert_eq!(t["columns"][0], "x0");
    let rows = t["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    for r in rows {
        assert!((r[0].as_f64().unwrap() - r[1].as_f64().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn wrong_subcommand_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ruin.conf", RUIN);
    let out = dir.path().join("out");
    assert_eq!(run("csl", &cfg, &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("ruin", &dir.path().join("absent.conf"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(validate(&dir.path().join("absent.conf")).status.code(), Some(3));
}

#[test]
fn validate_accepts_a_good_csl_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = validate(&write_config(dir.path(), "csl.conf", CSL));
    assert!(o.status.success());
    assert!(stdout(&o).trim_end().ends_with(": ok"));
}

#[test]
fn validate_names_the_missing_key_once() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = CSL.lines().filter(|l| !l.starts_with("lambda")).map(|l| format!("{l}\n")).collect();
    let o = validate(&write_config(dir.path(), "csl.conf", &text));
    assert_eq!(o.status.code(), Some(2));
    let s = stdout(&o);
    assert_eq!(s.lines().count(), 1, "{s}");
    assert!(s.contains("`lambda`"));
}

#[test]
fn validate_cites_the_step_bound() {
    let dir = tempfile::tempdir().unwrap();
    // λ = 2, Δ² = 4 gives 1e-2 / 8 = 1.25e-3.
    let text = CSL.replace("lambda = 1", "lambda = 2").replace("0.5", "1").replace("0.005", "0.002");
    let o = validate(&write_config(dir.path(), "csl.conf", &text));
    assert_eq!(o.status.code(), Some(2));
    let s = stdout(&o);
    assert!(s.contains("stability bound") && s.contains("1.25e-3"), "{s}");
}

#[test]
fn validate_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = stuff\nn_cells = ten\nx_min = 0\nx_max = 1\ncolour = red\n";
    let s = stdout(&validate(&write_config(dir.path(), "s.conf", text)));
    for needle in ["`n_cells`", "`colour`", "`particles`", "`centers`", "`widths`", "`region_lo`", "`region_hi`"] {
        assert!(s.contains(needle), "no diagnostic for {needle}: {s}");
    }
}

#[test]
fn validate_checks_semantics() {
    let dir = tempfile::tempdir().unwrap();
    let text = "experiment = stuff
n_cells = 40
x_min = -1
x_max = 1
particles = 3
centers = 0
widths = 0.1, 0.2
region_lo = -1
region_hi = 0
epsilon = 1.5
";
    let s = stdout(&validate(&write_config(dir.path(), "s.conf", text)));
    assert!(s.contains("same length"), "{s}");
    assert!(s.contains("`epsilon`"), "{s}");
}

#[test]
fn checked_in_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        let o = validate(&p);
        assert!(o.status.success(), "{}: {}", p.display(), stdout(&o));
        n += 1;
    }
    assert!(n >= 12);
}
