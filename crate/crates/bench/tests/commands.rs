use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cvcim::instances::load_reference;
use cvcim_bench::config::OracleBudget;
use cvcim_bench::oracle::cmd_oracle;
use cvcim_bench::output::{cells, parse_real, read_runs_jsonl};
use cvcim_bench::ratio::{cmd_ratio, RatioSide};
use cvcim_bench::{cmd_run, cmd_sweep, ExperimentConfig, Overrides};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SMALL_RUN: &str = r#"
master_seed = 3
samples = 50
stride = 20
[params]
roundtrips = 400
[oracle]
starts = 50
[[policies]]
kind = "gd"
[[policies]]
kind = "adam"
[[instances]]
n = 4
kappa = 10.0
seed = 1
"#;

fn config_in(dir: &Path, text: &str) -> ExperimentConfig {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    ExperimentConfig::load(&path).unwrap()
}

fn over(out: &Path, workers: usize) -> Overrides {
    Overrides { out: Some(out.to_path_buf()), workers: Some(workers), ..Overrides::default() }
}

fn digest(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(str::to_string).collect()
}

#[test]
fn run_writes_one_record_per_trajectory() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    cmd_run(config_in(tmp.path(), SMALL_RUN), &over(&out, 2)).unwrap();
    let text = fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert!(!text.contains('\r'));
    let records = read_runs_jsonl(&text).unwrap();
    assert_eq!(records.len(), 100);
    assert_eq!(records.iter().filter(|r| r.policy == "gd").count(), 50);
    assert!(records.iter().all(|r| r.best_gap.is_some()));
    let summary = data_rows(&out.join("summary.csv"));
    assert_eq!(summary.len(), 2);
    assert_eq!(cells(&summary[0])[..3], ["cond-n4-k10-s1", "gd", "50"]);
    let pct = data_rows(&out.join("percentiles.csv"));
    // 400 roundtrips at stride 20 -> 21 points, 4 percentiles, 2 policies.
    assert_eq!(pct.len(), 21 * 4 * 2);
    let refs = load_reference(&fs::read_to_string(out.join("reference.csv")).unwrap()).unwrap();
    assert!(refs.get("cond-n4-k10-s1").unwrap() < 0.0);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    cmd_run(config_in(tmp.path(), SMALL_RUN), &over(&a, 1)).unwrap();
    cmd_run(config_in(tmp.path(), SMALL_RUN), &over(&b, 4)).unwrap();
    for f in ["runs.jsonl", "percentiles.csv", "summary.csv", "reference.csv"] {
        assert_eq!(digest(&a.join(f)), digest(&b.join(f)), "{f}");
    }
    let c = tmp.path().join("c");
    cmd_run(config_in(tmp.path(), SMALL_RUN), &Overrides { seed: Some(4), ..over(&c, 2) }).unwrap();
    assert_ne!(digest(&a.join("runs.jsonl")), digest(&c.join("runs.jsonl")));
}

#[test]
fn missing_instance_file_fails_before_simulation() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let text = format!("{SMALL_RUN}\n[[instances]]\nfile = \"nowhere.txt\"\n");
    let err = cmd_run(config_in(tmp.path(), &text), &over(&out, 1)).unwrap_err();
    assert!(format!("{err:#}").contains("does not exist"), "{err:#}");
    assert!(!out.exists());
}

#[test]
fn instances_without_reference_are_refused() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("lonely.txt"), "2\n0 0\n-1 0\n0 -1\n").unwrap();
    fs::write(tmp.path().join("zero.txt"), "1\n1\n1\n").unwrap();
    fs::write(tmp.path().join("refs.csv"), "label,value\nzero,0\n").unwrap();
    let text = format!(
        "reference = \"refs.csv\"\n{SMALL_RUN}\n[[instances]]\nfile = \"lonely.txt\"\n[[instances]]\nfile = \"zero.txt\"\n"
    );
    let out = tmp.path().join("out");
    let outcome = cmd_run(config_in(tmp.path(), &text), &over(&out, 2)).unwrap();
    let refused: Vec<&str> = outcome.refused.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(refused, ["lonely", "zero"]);
    assert_eq!(outcome.instances.len(), 1);
    assert_eq!(read_runs_jsonl(&fs::read_to_string(out.join("runs.jsonl")).unwrap()).unwrap().len(), 100);
}

#[test]
fn sweep_writes_raw_and_aggregate_rows() {
    let tmp = TempDir::new().unwrap();
    let text = r#"
samples = 2
[params]
roundtrips = 300
[oracle]
starts = 20
[[policies]]
kind = "adam"
[sweep]
n = 4
kappa = [1.0]
lambda = [0.04]
"#;
    let out = tmp.path().join("out");
    let outcome = cmd_sweep(config_in(tmp.path(), text), &over(&out, 2)).unwrap();
    assert_eq!(data_rows(&out.join("sweep_runs.csv")).len(), 2);
    let agg = data_rows(&out.join("sweep.csv"));
    assert_eq!(agg.len(), 1);
    assert_eq!(outcome.cells[0].samples, 2);
    assert_eq!(cells(&agg[0])[2], "adam");

    let again = tmp.path().join("again");
    cmd_sweep(config_in(tmp.path(), text), &over(&again, 1)).unwrap();
    for f in ["sweep_runs.csv", "sweep.csv"] {
        assert_eq!(digest(&out.join(f)), digest(&again.join(f)));
    }
}

fn write_percentiles(dir: &Path, policy: &str, rows: &[(&str, usize, f64)], xs: &[f64]) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut text = String::from("roundtrip,instance,policy,percentile,gap\n");
    for &x in xs {
        for (inst, rt, gap) in rows {
            text.push_str(&format!("{rt},{inst},{policy},{x},{gap}\n"));
        }
    }
    fs::write(dir.join("percentiles.csv"), text).unwrap();
    dir.to_path_buf()
}

#[test]
fn ratio_reproduces_synthetic_scenario() {
    let tmp = TempDir::new().unwrap();
    let a = write_percentiles(
        &tmp.path().join("mom"),
        "momentum",
        &[("i", 0, 1.0), ("i", 5000, 0.05), ("i", 9500, 8e-3), ("i", 20000, 4e-3)],
        &[5.0],
    );
    let b = write_percentiles(
        &tmp.path().join("gd"),
        "gd",
        &[("i", 0, 1.0), ("i", 9500, 0.2), ("i", 20000, 0.02), ("i", 30000, 8e-3)],
        &[5.0],
    );
    let out = tmp.path().join("ratio");
    let rows = cmd_ratio(&RatioSide { dir: a, policy: None }, &RatioSide { dir: b, policy: None }, &[5.0], &out).unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].result.ratio - 0.31667).abs() <= 1e-5);
    assert_eq!(rows[0].result.ratio, 9500.0 / 30000.0);
    assert_eq!(rows[0].faster_name(), "momentum");
    let csv = data_rows(&out.join("ratio.csv"));
    assert_eq!(cells(&csv[0])[8], "momentum");
    let hist = data_rows(&out.join("ratio_histogram.csv"));
    let hit: Vec<&String> = hist.iter().filter(|r| cells(r)[4] == "1").collect();
    assert_eq!(hit.len(), 1);
    assert_eq!(parse_real(cells(hit[0])[2]).unwrap(), 0.3);
}

#[test]
fn ratio_of_identical_runs_is_one() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    cmd_run(config_in(tmp.path(), SMALL_RUN), &over(&run, 2)).unwrap();
    let side = |p: &str| RatioSide { dir: run.clone(), policy: Some(p.to_string()) };
    let rows = cmd_ratio(&side("adam"), &side("adam"), &[5.0, 10.0, 25.0, 50.0], &tmp.path().join("r")).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.result.ratio == 1.0 && r.faster_name() == "tie"));
    let ambiguous = RatioSide { dir: run.clone(), policy: None };
    assert!(cmd_ratio(&ambiguous, &side("gd"), &[5.0], &tmp.path().join("r2")).is_err());
}

#[test]
fn ratio_with_single_percentile_gives_one_row_per_instance() {
    let tmp = TempDir::new().unwrap();
    let rows = [("x", 0, 0.5), ("x", 10, 0.1), ("y", 0, 0.4), ("y", 10, 0.2)];
    let a = write_percentiles(&tmp.path().join("a"), "adam", &rows, &[5.0, 50.0]);
    let b = write_percentiles(&tmp.path().join("b"), "gd", &rows, &[5.0, 50.0]);
    let out = tmp.path().join("out");
    let got = cmd_ratio(&RatioSide { dir: a, policy: None }, &RatioSide { dir: b, policy: None }, &[50.0], &out).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(data_rows(&out.join("ratio.csv")).len(), 2);
}

#[test]
fn oracle_records_exact_convex_optimum_and_never_increases() {
    let tmp = TempDir::new().unwrap();
    let toy = tmp.path().join("toy.txt");
    fs::write(&toy, "3\n1 2 3\n1 0 0\n0 1 0\n0 0 1\n").unwrap();
    let concave = tmp.path().join("cave.txt");
    fs::write(&concave, "2\n0 0\n-1 0.5\n0.5 -2\n").unwrap();
    let out = tmp.path().join("refs");
    let budget = OracleBudget { starts: 5, max_iters: 1000 };
    let t = cmd_oracle(&[toy.clone(), concave.clone()], &budget, 0, &out).unwrap();
    assert_eq!(t.get("toy"), Some(0.0));
    let first = t.get("cave").unwrap();
    assert!((first - -2.0).abs() <= 1e-9, "{first}");

    // A stored better value survives a rerun with a larger budget.
    fs::write(out.join("reference.csv"), "label,value\ntoy,0\ncave,-5\n").unwrap();
    let t = cmd_oracle(&[toy, concave], &OracleBudget { starts: 50, max_iters: 1000 }, 1, &out).unwrap();
    assert_eq!(t.get("cave"), Some(-5.0));
    let on_disk = load_reference(&fs::read_to_string(out.join("reference.csv")).unwrap()).unwrap();
    assert_eq!(on_disk, t);
}

#[test]
fn binary_generates_and_solves_an_instance() {
    let tmp = TempDir::new().unwrap();
    let exe = env!("CARGO_BIN_EXE_cvcim");
    let gen = Command::new(exe)
        .args(["gen", "--n", "4", "--kappa", "10", "--seed", "2", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let path = tmp.path().join("cond-n4-k10-s2.txt");
    assert_eq!(String::from_utf8_lossy(&gen.stdout).trim(), path.display().to_string());
    let oracle = Command::new(exe)
        .args(["oracle", "--starts", "20", "--workers", "1", "--out"])
        .arg(tmp.path())
        .arg(&path)
        .output()
        .unwrap();
    assert!(oracle.status.success(), "{}", String::from_utf8_lossy(&oracle.stderr));
    let refs = load_reference(&fs::read_to_string(tmp.path().join("reference.csv")).unwrap()).unwrap();
    assert!(refs.get("cond-n4-k10-s2").unwrap() < 0.0);

    let bad = Command::new(exe).args(["run", "--config", "/nonexistent/cfg.toml"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn checked_in_configs_validate() {
    use cvcim_bench::Mode;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, mode) in [
        ("convergence.toml", Mode::Run),
        ("diversity.toml", Mode::Run),
        ("success.toml", Mode::Run),
        ("sweep.toml", Mode::Sweep),
    ] {
        let cfg = ExperimentConfig::load(&dir.join(file)).unwrap();
        cfg.validate(mode).unwrap_or_else(|e| panic!("{file}: {e:#}"));
    }
}
