use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml")
}

fn aedsip(dir: &Path, args: &[&str]) -> Output {
    let d = dir.display();
    Command::new(env!("CARGO_BIN_EXE_aedsip"))
        .arg("--config")
        .arg(config_path())
        .arg("--out-dir")
        .arg(dir)
        .args(["--set", &format!("paths.sites={d}/sites.csv")])
        .args(["--set", &format!("paths.incidents={d}/incidents.csv")])
        .args(["--set", "candidates.count=200", "--set", "explain.method={kind=\"sampled\",n_perm=64}"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut rows: Vec<Vec<String>> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    rows.remove(0);
    rows
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().find(|l| !l.starts_with('#')).unwrap().split(',').map(str::to_string).collect()
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn pipeline_and_sweep_are_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("run");
    let sweep = ["--set", "candidates.sets=2", "--set", "sweep.n_values=[5,20]", "--set", "sweep.d_min_m=[0.0,1200.0]"];
    let mut runs = Vec::new();
    for _ in 0..2 {
        if dir.exists() {
            fs::remove_dir_all(&dir).unwrap();
        }
        ok(aedsip(&dir, &["synth"]));
        ok(aedsip(&dir, &[&sweep[..], &["pipeline"]].concat()));
        ok(aedsip(&dir, &[&sweep[..], &["sweep"]].concat()));
        runs.push(snapshot(&dir));
    }
    assert!(runs[0].len() > 15);
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn missing_sites_path_is_a_named_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bare.toml");
    fs::write(&cfg, "seed = 1\n[region]\nbbox = [-3000.0, -3000.0, 3000.0, 3000.0]\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_aedsip"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .arg("ingest")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[ingest]") && err.contains("paths.sites"), "{err}");
}

#[test]
fn unknown_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = aedsip(dir.path(), &["--set", "train.bogus=1", "grid"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn synth_round_trips_and_seed_matters() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(aedsip(a.path(), &["synth"]));
    ok(aedsip(a.path(), &["ingest"]));
    let summary = fs::read_to_string(a.path().join("ingest_summary.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert!(v["data"]["sites"].as_u64().unwrap() > 0);
    assert!(v["data"]["incidents"].as_u64().unwrap() > 0);
    for key in [
        "sites_skipped_unknown",
        "sites_skipped_unparsable",
        "sites_out_of_bounds",
        "incidents_excluded",
        "incidents_skipped_unparsable",
    ] {
        assert_eq!(v["data"][key], 0, "{key}");
    }

    // The metadata line carries the config hash, which covers the paths.
    let body = |d: &Path| data_rows(&d.join("sites.csv"));
    ok(aedsip(b.path(), &["--seed", "7", "synth"]));
    assert_eq!(body(a.path()), body(b.path()));
    ok(aedsip(b.path(), &["--seed", "8", "synth"]));
    assert_ne!(body(a.path()), body(b.path()));
}

#[test]
fn sweep_shape_follows_the_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(aedsip(dir.path(), &["synth"]));
    let base = ["--set", "candidates.sets=2", "--set", "sweep.n_values=[5,10]", "--set", "sweep.solvers=[\"sip\",\"random\"]"];
    ok(aedsip(dir.path(), &[&base[..], &["--set", "sweep.d_min_m=[0.0,1200.0]", "sweep"]].concat()));
    let long = dir.path().join("sweep_long.csv");
    let summary = dir.path().join("sweep_summary.csv");
    assert_eq!(data_rows(&long).len(), 16);
    assert_eq!(data_rows(&summary).len(), 8);

    ok(aedsip(dir.path(), &[&base[..], &["--set", "sweep.d_min_m=[1200.0]", "sweep"]].concat()));
    assert_eq!(data_rows(&long).len(), 8);
    let rows = data_rows(&summary);
    assert_eq!(rows.len(), 4);
    let d_col = header(&summary).iter().position(|h| h == "d_min_m").unwrap();
    assert!(rows.iter().all(|r| r[d_col] == "1200"));
}

#[test]
fn spaced_plans_beat_random_at_wide_spacing() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    ok(aedsip(dir.path(), &["synth"]));
    let args = [
        "--set",
        "candidates.sets=3",
        "--set",
        "sweep.n_values=[10,20]",
        "--set",
        "sweep.d_min_m=[1200.0]",
        "--set",
        "sweep.solvers=[\"exact\",\"random\"]",
        "sweep",
    ];
    let stdout = ok(aedsip(dir.path(), &args));
    let summary = dir.path().join("sweep_summary.csv");
    let h = header(&summary);
    let solver = h.iter().position(|c| c == "solver").unwrap();
    let pct = h.iter().position(|c| c == "pct_increase_vs_random").unwrap();
    let exact: Vec<f64> =
        data_rows(&summary).iter().filter(|r| r[solver] == "exact").map(|r| r[pct].parse().unwrap()).collect();
    assert_eq!(exact.len(), 2);
    assert!(exact.iter().all(|&p| p > 0.0), "{exact:?}\n{stdout}");
    assert!(start.elapsed() < Duration::from_secs(60));
}
