use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gnaf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnaf")).args(args).env_remove("GNAF_WORKERS").output().expect("spawn gnaf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
variant = "gnaf-ii"
receiver = "grouped-ml"
constellation = "lattice2"
snr_db = "0:10:20"
trials = 3000
seed = 7
checks = ["clro", "group", "fulldiv"]

[design]
family = "pciod"
relays = 2
"#;

#[test]
fn construct_pciod_four_relays() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    let o = gnaf(&["construct", "--family", "pciod", "--relays", "4", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("T=4 R=4 K=8"), "{s}");
    assert!(s.contains("condition1=true condition2=true"), "{s}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((json["T"].as_u64(), json["K"].as_u64()), (Some(4), Some(8)));
}

#[test]
fn construct_toeplitz_has_t1_plus_r_minus_one_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = gnaf(&["construct", "--family", "toeplitz", "--t1", "2", "--relays", "2", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("T=3 R=2 K=4"));
}

#[test]
fn odd_relays_point_to_rectangular_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = gnaf(&["construct", "--family", "pciod", "--relays", "3", "--out", path(&dir.path().join("x.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("pciod-rect"));
    let o = gnaf(&["construct", "--family", "pciod-rect", "--relays", "3", "--out", path(&dir.path().join("x.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(gnaf(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(gnaf(&["tradeoff", "--relays", "x", "--out", "y"]).status.code(), Some(3));
    assert_eq!(gnaf(&["--help"]).status.code(), Some(0));
}

#[test]
fn verify_reports_witness_and_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.json");
    assert!(gnaf(&["construct", "--family", "pciod", "--relays", "4", "--out", path(&d)]).status.success());
    let report = dir.path().join("r.json");
    let o = gnaf(&[
        "verify", "--design", path(&d), "--checks", "clro,group,fulldiv", "--constellation", "pam2", "--out",
        path(&report),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let fulldiv = json["reports"].as_array().unwrap().iter().find(|r| r["check"] == "fulldiv").unwrap();
    assert_eq!(fulldiv["passed"], false);
    assert_eq!(fulldiv["witness"]["kind"], "difference");

    let o = gnaf(&["verify", "--design", path(&d), "--checks", "clro,group"]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(json["reports"].as_array().unwrap().iter().all(|r| r["passed"] == true));
}

#[test]
fn verify_guard_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.json");
    assert!(gnaf(&["construct", "--family", "pciod", "--relays", "6", "--out", path(&d)]).status.success());
    let o = gnaf(&["verify", "--design", path(&d), "--checks", "fulldiv", "--constellation", "qam16"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn tradeoff_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    assert!(gnaf(&["tradeoff", "--relays", "1", "--samples", "3", "--out", path(&out)]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "# relays: 1");
    assert_eq!(lines[1], "r,d_naf,d_star,d_code,d_lower,no_coop");
    assert_eq!(lines[2], "0,2,2,2,2,1");
    assert_eq!(lines.len(), 5);
}

#[test]
fn pipeline_is_worker_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(gnaf(&["pipeline", "--config", path(&cfg), "--out", path(&a), "--workers", "1"]).status.success());
    assert!(gnaf(&["pipeline", "--config", path(&cfg), "--out", path(&b), "--workers", "3"]).status.success());
    for f in ["results.csv", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let sim = dir.path().join("sim.csv");
    assert!(gnaf(&["simulate", "--config", path(&cfg), "--out", path(&sim), "--workers", "2"]).status.success());
    assert_eq!(fs::read(&sim).unwrap(), fs::read(a.join("results.csv")).unwrap());
}

#[test]
fn failed_check_blocks_simulation_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL.replace("relays = 2", "relays = 4").replace("lattice2", "pam2")).unwrap();
    let out = dir.path().join("o");
    let o = gnaf(&["pipeline", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("report.json").exists());
    assert!(!out.join("results.csv").exists());

    let o = gnaf(&["pipeline", "--config", path(&cfg), "--out", path(&out), "--force"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(out.join("results.csv").exists());
}

#[test]
fn bad_config_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SMALL.replace("seed = 7", "seed = 7\nunknown_key = 1")).unwrap();
    let o = gnaf(&["simulate", "--config", path(&cfg), "--out", path(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    let o = gnaf(&["simulate", "--config", path(&dir.path().join("missing.toml")), "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn cda_from_parameter_file() {
    let dir = tempfile::tempdir().unwrap();
    let params = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/golden_cda.json");
    let out = dir.path().join("cda.json");
    let o = gnaf(&["construct", "--family", "cda", "--relays", "2", "--params", params, "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("T=2 R=2 K=8"));
    let o = gnaf(&["verify", "--design", path(&out), "--checks", "fulldiv,nvd", "--constellation", "qam4"]);
    assert!(o.status.success(), "{}", stderr(&o));
}
