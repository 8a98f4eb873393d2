use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msface_cli::{resolve, Overrides};

fn msface(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msface"))
        .args(args)
        .env_remove("MSFACE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Small forest settings so the commands below run in seconds.
const TINY_FOREST: &str = "[forest]\nn_trees = 2\nmax_depth = 8\npatches_per_frame = 20\nn_candidate_tests = 40\n";

fn tiny_forest(dir: &Path) -> PathBuf {
    let cfg = dir.join("tiny.toml");
    std::fs::write(&cfg, TINY_FOREST).unwrap();
    let forest = dir.join("forest.bin");
    let o = msface(&["--config", p(&cfg), "--out", p(&forest), "train-pose", "--frames", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    forest
}

fn sweep_manifest(dir: &Path) -> PathBuf {
    let o = msface(&["synth", "--dir", p(&dir.join("seq")), "--subjects", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    PathBuf::from(stdout(&o).trim())
}

#[test]
fn calibrate_ir_recovers_the_reference_line() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    let mut s = String::from("intensity,temp_c\n");
    for i in 0..20 {
        let x = (i * 13) as f64;
        s.push_str(&format!("{x},{}\n", 0.2087 * x + 22.28));
    }
    std::fs::write(&pts, s).unwrap();
    let o = msface(&["calibrate-ir", "--points", p(&pts)]);
    assert!(o.status.success());
    let out = stdout(&o);
    let value = |key: &str| -> f64 {
        out.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix('=')).unwrap().parse().unwrap()
    };
    assert!((value("slope") - 0.2087).abs() < 1e-9, "{out}");
    assert!((value("intercept") - 22.28).abs() < 1e-9, "{out}");
    assert_eq!(value("n_points"), 20.0);
}

#[test]
fn fever_protocol_is_byte_exact() {
    let o = msface(&["protocol", "--temp", "38.5"]);
    assert_eq!(stdout(&o), "POSSIBLE ACTION: Inquire: Have you been experiencing a high fever?\n");
    let o = msface(&["protocol", "--temp", "33.727"]);
    assert_eq!(stdout(&o), "");
    let o = msface(&["protocol", "--finding", "appearance-anomaly:artificial moustache"]);
    assert_eq!(stdout(&o), "WARNING: Possible intention to change appearance; artificial moustache.\n");
}

#[test]
fn gate_emits_per_frame_csv_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let forest = tiny_forest(dir.path());
    let manifest = sweep_manifest(dir.path());
    let o = msface(&["gate", "--manifest", p(&manifest), "--forest", p(&forest), "--threshold", "15"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("frame,offset_deg,accepted"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 31);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], i.to_string());
        let off: f64 = r[1].parse().unwrap();
        assert!((0.0..=180.0).contains(&off));
        assert_eq!(r[2], (off <= 15.0).to_string());
    }

    let o = msface(&["gate", "--manifest", p(&manifest), "--forest", p(&forest), "--sweep", "0,15,45,180"]);
    let out = stdout(&o);
    let counts: Vec<usize> = out.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(out.lines().next(), Some("threshold_deg,frames_accepted"));
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{out}");
}

#[test]
fn exit_codes() {
    assert_eq!(msface(&["--help"]).status.code(), Some(0));
    assert_eq!(msface(&["gate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(msface(&["--threshold", "100", "gate", "--manifest", "m.csv", "--forest", "f.bin"]).status.code(), Some(1));
    assert_eq!(msface(&["--stride", "0", "protocol"]).status.code(), Some(1));
    let missing = msface(&["calibrate-ir", "--points", "/nonexistent/pts.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error: "));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "thresold_deg = 10\n").unwrap();
    assert_eq!(msface(&["--config", p(&bad), "protocol"]).status.code(), Some(1));
}

#[test]
fn out_flag_writes_the_file_instead_of_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("msg.txt");
    let o = msface(&["--out", p(&out), "protocol", "--temp", "39"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("POSSIBLE ACTION"));
}

#[test]
fn config_precedence_three_layers() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.toml");
    std::fs::write(&file, "threshold_deg = 20.0\nstride = 5\neigen_k = 30\nseed = 3\n[forest]\nn_trees = 4\n").unwrap();

    let defaults = resolve(None, None, &Overrides::default()).unwrap();
    assert_eq!((defaults.threshold_deg, defaults.stride, defaults.seed), (15.0, 15, None));

    let from_file = resolve(Some(&file), None, &Overrides::default()).unwrap();
    assert_eq!((from_file.threshold_deg, from_file.stride, from_file.eigen_k), (20.0, 5, 30));
    assert_eq!((from_file.seed, from_file.forest.n_trees), (Some(3), 4));
    assert_eq!(from_file.forest.max_depth, defaults.forest.max_depth);

    let flags = Overrides { threshold_deg: Some(12.0), seed: Some(11), ..Default::default() };
    let all = resolve(Some(&file), Some("9"), &flags).unwrap();
    assert_eq!((all.threshold_deg, all.stride, all.eigen_k, all.seed), (12.0, 5, 30, Some(11)));
    let env_over_file = resolve(Some(&file), Some("9"), &Overrides::default()).unwrap();
    assert_eq!(env_over_file.seed, Some(9));
    assert!(resolve(None, Some("x"), &Overrides::default()).is_err());

    // the same layering through the binary
    let o = Command::new(env!("CARGO_BIN_EXE_msface"))
        .args(["--config", p(&file), "--threshold", "12", "--print-config", "protocol"])
        .env("MSFACE_SEED", "9")
        .output()
        .unwrap();
    let toml = stdout(&o);
    assert!(toml.contains("threshold_deg = 12.0"), "{toml}");
    assert!(toml.contains("stride = 5") && toml.contains("seed = 9") && toml.contains("n_trees = 4"), "{toml}");
}

#[test]
fn printed_config_reloads_to_the_same_settings() {
    let dir = tempfile::tempdir().unwrap();
    let o = msface(&["--seed", "5", "--chip-size", "46x56", "--print-config", "protocol"]);
    let file = dir.path().join("eff.toml");
    std::fs::write(&file, stdout(&o)).unwrap();
    let back = resolve(Some(&file), None, &Overrides::default()).unwrap();
    let direct = resolve(None, None, &Overrides { seed: Some(5), chip_size: Some((46, 56)), ..Default::default() }).unwrap();
    assert_eq!(back, direct);
}

#[test]
fn synth_is_idempotent() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = msface(&["--seed", "4", "synth", "--dir", p(d.path()), "--subjects", "2", "--frames", "3"]);
        assert!(o.status.success());
    }
    for s in 0..2 {
        let (da, db) = (a.path().join(format!("subject_{s}")), b.path().join(format!("subject_{s}")));
        let mut names: Vec<_> = std::fs::read_dir(&da).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        assert_eq!(names.len(), 3 * 4 + 3);
        for n in names {
            assert_eq!(std::fs::read(da.join(&n)).unwrap(), std::fs::read(db.join(&n)).unwrap(), "{n:?}");
        }
    }
}
