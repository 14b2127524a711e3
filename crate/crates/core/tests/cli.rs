use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_trmimo");

const BASE: &str = r#"
command = "neff"
trials = 200

[channel]
n_tx = 12
n_rx = 2
pinholes = [6, 4]
carrier = 10.0
bandwidth = 1.0
coherence_bw = 0.25
symbol_interval = 2.0
n_symbols = 8
seed = 7
"#;

fn trmimo(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("exp.toml");
    fs::write(&path, config).unwrap();
    Command::new(BIN)
        .arg("--config")
        .arg(&path)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn neff_prints_both_effective_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = trmimo(dir.path(), BASE, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "2\n2.4\n");
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"complete\""));
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("[config.channel]"));
}

#[test]
fn graphs_lists_the_leading_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = trmimo(dir.path(), BASE, &["--command", "graphs", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("4 leading graphs of 8"), "{s}");
    assert_eq!(s.lines().count(), 5);
    let txt = fs::read_to_string(out.join("graphs.txt")).unwrap();
    assert_eq!(txt.lines().filter(|l| l.ends_with("\ttrue")).count(), 4);
}

#[test]
fn moments_expansion_is_one_line_per_graph() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = trmimo(dir.path(), BASE, &["--command", "moments", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let txt = fs::read_to_string(out.join("moments.txt")).unwrap();
    let rows: Vec<_> = txt.lines().filter(|l| !l.starts_with('#') && !l.starts_with("mask")).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows[0].starts_with("000\tN^2*K1^2*K2^2*|m_a|^2\t1\t"));
}

#[test]
fn rate_table_marks_one_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = format!("{BASE}\n[rate]\npowers = [10.0, 100.0]\npoints = 13\n");
    let o = trmimo(dir.path(), &cfg, &["--command", "rate", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("rate.csv")).unwrap();
    assert!(csv.starts_with("# rates in nats per unit time"));
    assert_eq!(csv.lines().count(), 2 + 26);
    assert_eq!(csv.lines().filter(|l| l.ends_with(",true")).count(), 1);
}

#[test]
fn stability_csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for w in ["1", "8"] {
        let out = dir.path().join(format!("w{w}"));
        let o = trmimo(
            dir.path(),
            BASE,
            &["--command", "stability", "--workers", w, "--out", out.to_str().unwrap()],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read(out.join("stability.csv")).unwrap());
        assert!(!out.join("stability.csv.partial").exists());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    // 8 symbol instants × 2 receivers
    assert_eq!(text.lines().count(), 1 + 16);
}

#[test]
fn seed_flag_changes_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        let o = trmimo(
            dir.path(),
            BASE,
            &["--command", "stability", "--seed", seed, "--out", out.to_str().unwrap()],
        );
        assert!(o.status.success());
        fs::read_to_string(out.join("stability.csv")).unwrap()
    };
    assert_ne!(read("1"), read("2"));
}

#[test]
fn sweep_writes_rows_and_regression() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = format!(
        "{}\n[sweep]\n[[sweep.axes]]\nparameter = \"n_tx\"\nvalues = [4, 8]\n",
        BASE.replace("\"neff\"", "\"sweep\"")
    );
    let o = trmimo(dir.path(), &cfg, &["--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert!(lines[0].starts_with("config_id,n_tx,regime"));
    assert_eq!(lines.len(), 3);
    // two points are too few for a fit; the file says so
    let reg = fs::read_to_string(out.join("regression.txt")).unwrap();
    assert!(reg.contains("no fit"));
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = BASE
        .replace("symbol_interval = 2.0", "symbol_interval = 0.4")
        .replace("pinholes = [6, 4]", "pinholes = [0, 4]\ncolour = 3");
    let o = trmimo(dir.path(), &bad, &["--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown key `channel.colour`"), "{err}");
    assert!(err.contains("pinhole layer 0"), "{err}");
    assert!(err.contains("symbol interval below (2B)⁻¹"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn monte_carlo_needs_enough_trials() {
    let dir = tempfile::tempdir().unwrap();
    let o = trmimo(dir.path(), BASE, &["--command", "stability", "--trials", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 100"));
}

#[test]
fn unknown_command_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = trmimo(dir.path(), BASE, &["--command", "plot"]);
    assert!(!o.status.success());
}
