use std::path::Path;
use std::process::{Command, Output};

use mtnoma::output::{read_csv, OUTPUT_DIR_ENV};
use mtnoma::powermap::PowerMap;
use mtnoma::sim::{SlotMetrics, SweepRow};
use serde_json::Value;

fn mtnoma(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtnoma"))
        .args(args)
        .current_dir(dir)
        .env_remove(OUTPUT_DIR_ENV)
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = mtnoma(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str], dir: &Path) -> String {
    let out = mtnoma(args, dir);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

const RUN: &str = "scheme = \"gf\"\nslots = 200\nseed = 7\n[grid]\nN = 2\nM = 10\n[traffic]\ntotal_devices = 15\n";

#[test]
fn levels_and_analytics() {
    let dir = tempfile::tempdir().unwrap();
    let doc: Value = serde_json::from_str(&ok(&["levels", "-N", "3"], dir.path())).unwrap();
    let powers: Vec<f64> = doc["metrics"].as_array().unwrap().iter().map(|r| r["power"].as_f64().unwrap()).collect();
    assert_eq!(powers, vec![1.0, 2.0, 4.0]);

    let exact: Value = serde_json::from_str(&ok(&["aar-exact", "-N", "2", "-M", "2", "-n", "2"], dir.path())).unwrap();
    let text = exact["metrics"].to_string();
    assert!(text.contains("1.5"), "{text}");

    let mc = ok(&["aar-mc", "-N", "2", "-M", "1", "-n", "1", "--trials", "1000", "--format", "csv"], dir.path());
    assert!(mc.lines().any(|l| l.starts_with("# config")));

    let opt: Value = serde_json::from_str(&ok(&["optimal-load", "-N", "1", "-M", "10", "--n-max", "40"], dir.path())).unwrap();
    assert!(opt["metrics"].to_string().contains("\"n\":9") || opt["metrics"].to_string().contains("\"n\":10"));

    let err = fails(&["aar-exact", "-N", "0", "-M", "3", "-n", "2"], dir.path());
    assert!(err.starts_with("mtnoma:"), "{err}");
}

#[test]
fn simulate_embeds_config_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let doc: Value = serde_json::from_str(&ok(&["simulate", "--config", "run.toml"], dir.path())).unwrap();
    assert_eq!(doc["seed"], 7);
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["config"]["grid"]["M"], 10);
    let defaulted: Vec<&str> = doc["defaulted"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(defaulted.contains(&"traffic.max_attempts"), "{defaulted:?}");

    let csv = ok(&["simulate", "--config", "run.toml", "--set", "slots=30", "--seed", "3", "--format", "csv"], dir.path());
    let (comments, rows) = read_csv::<SlotMetrics>(&csv).unwrap();
    assert_eq!(rows.len(), 30);
    assert!(comments.contains(&"seed 3".to_string()));
    assert!(!csv.contains(",3.0e"), "plain decimals");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let outdir = dir.path().join("results");
    let out = Command::new(env!("CARGO_BIN_EXE_mtnoma"))
        .args(["simulate", "--config", "run.toml", "--format", "csv"])
        .current_dir(dir.path())
        .env(OUTPUT_DIR_ENV, &outdir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(outdir.join("simulate.csv")).unwrap();
    assert_eq!(read_csv::<SlotMetrics>(&text).unwrap().1.len(), 200);
}

#[test]
fn sweep_rows_follow_the_axis() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let csv = ok(
        &["sweep", "--config", "run.toml", "--axis", "traffic.total_devices", "--values", "5:25:10", "--replications", "2", "--format", "csv"],
        dir.path(),
    );
    let (_, rows) = read_csv::<SweepRow>(&csv).unwrap();
    let values: Vec<&str> = rows.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(values, vec!["5", "15", "25"]);
    assert!(rows.iter().all(|r| r.replications == 2));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), RUN).unwrap();
    let err = fails(&["simulate", "--config", "run.toml", "--set", "grid.N=0"], dir.path());
    assert!(err.contains("grid.N ≥ 1"), "{err}");
    let err = fails(&["simulate", "--config", "run.toml", "--set", "bogus=1"], dir.path());
    assert!(err.contains("bogus"), "{err}");
    std::fs::write(dir.path().join("semi.toml"), RUN.replace("scheme = \"gf\"\n", "") + "[scheme.semi_gf]\n").unwrap();
    let err = fails(&["simulate", "--config", "semi.toml"], dir.path());
    assert!(err.contains("power_map"), "{err}");
    fails(&["simulate", "--config", "missing.toml"], dir.path());
    fails(&["simulate", "--config", "run.toml", "--out", "/proc/nope/out.json"], dir.path());
}

#[test]
fn powermap_generate_then_refine() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("map.toml"),
        "grid_rows = 2\ngrid_cols = 2\nmax_tpl = 1e6\n[grid]\nN = 3\nM = 2\n\
         [area]\nshape = \"rectangle\"\norigin = { x = 1.0, y = 1.0 }\nwidth = 20.0\nheight = 20.0\n",
    )
    .unwrap();
    ok(&["powermap", "generate", "--config", "map.toml", "--out", "map.json"], dir.path());
    let map = PowerMap::load(&dir.path().join("map.json")).unwrap();
    assert_eq!(map.num_regions(), 4);
    ok(&["powermap", "refine", "--map", "map.json", "--episodes", "20", "--out", "refined.json"], dir.path());
    let refined = PowerMap::load(&dir.path().join("refined.json")).unwrap();
    for (a, b) in map.regions.iter().zip(&refined.regions) {
        assert!(b.entries.iter().all(|e| a.entries.contains(e)));
    }
}

#[test]
fn experiments_accept_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let csv = ok(&["compare", "--set", "slots=200", "--set", "devices=[1,5,20]", "--format", "csv"], dir.path());
    let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 4);
    assert!(data[0].starts_with("devices,gb,gf"));
    let doc: Value = serde_json::from_str(&ok(
        &["barring-demo", "--set", "slots=300", "--set", "devices=[30]", "--set", "warmup_periods=2"],
        dir.path(),
    ))
    .unwrap();
    assert_eq!(doc["metrics"]["optimal_load"], 26);
    let err = fails(&["compare", "--set", "nonsense=1"], dir.path());
    assert!(err.contains("nonsense"), "{err}");
}
