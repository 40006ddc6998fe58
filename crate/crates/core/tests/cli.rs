use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn irmarl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irmarl")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn smoke_pipeline_is_fast_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b): (PathBuf, PathBuf) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    let o = irmarl(&["pipeline", "--config", &config("smoke.toml"), "--out", path_str(&a)]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&irmarl(&["pipeline", "--config", &config("smoke.toml"), "--out", path_str(&b), "--threads", "1"])), 0);

    let gap: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("seed-0/gap.json")).unwrap()).unwrap();
    assert!(gap["max_gap"].as_f64().unwrap() >= -1e-12);
    assert!(gap["config_hash"].is_string());
    for f in ["summary.csv", "seed-0/trace.csv", "seed-0/gap.csv", "seed-1/trace.csv", "seed-0/dataset.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_str(dir.path());
    let cfg = config("smoke.toml");
    for stage in [&["generate-data"][..], &["fit"], &["train"], &["evaluate"]] {
        let mut args = stage.to_vec();
        args.extend(["--config", cfg.as_str(), "--out", out]);
        let o = irmarl(&args);
        assert_eq!(code(&o), 0, "{stage:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["game.json", "behavior.json", "dataset.jsonl", "model.json", "policy.json", "trace.csv", "gap.json", "gap.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,i,h,max_chi2,mean_Q,cell_count,config_hash"));
}

#[test]
fn schedule_values_reach_the_summary() {
    use ir_marl::drac::{theoretical_hyperparams, Setting};
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&irmarl(&["pipeline", "--config", &config("schedule.toml"), "--out", path_str(dir.path())])), 0);
    let mut rd = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let row = rd.records().next().unwrap().unwrap();
    let s = theoretical_hyperparams(Setting::Markov, 2, 2, 2, 0.001, 1.0).unwrap();
    assert_eq!(row[2].parse::<usize>().unwrap(), s.iterations.min(400));
    assert_eq!(row[3].parse::<f64>().unwrap(), s.lambda);
    assert_eq!(row[4].parse::<f64>().unwrap(), s.eta);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&irmarl(&["pipeline"])), 2);
    assert_eq!(code(&irmarl(&["verify", "nonsense"])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "samples = 10\nunknown_key = 1\n").unwrap();
    assert_eq!(code(&irmarl(&["pipeline", "--config", path_str(&bad)])), 2);
    assert_eq!(code(&irmarl(&["evaluate", "--out", path_str(dir.path())])), 2);
}

#[test]
fn mismatched_dataset_is_a_stage_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    assert_eq!(code(&irmarl(&["generate-data", "--config", &config("smoke.toml"), "--out", path_str(&data_dir)])), 0);
    let ds = data_dir.join("dataset.jsonl");
    let o = irmarl(&["fit", "--config", &config("monte_carlo.toml"), "--out", path_str(&dir.path().join("fit")), "--dataset", path_str(&ds)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_suite_passes_and_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = irmarl(&["verify", "drift", "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("PASS drift"), "{stdout}");
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(rep["reports"][0]["violations"], 0);
}

#[test]
fn quadratic_study_writes_traces_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("q.toml");
    std::fs::write(&cfg, "n_agents = [4]\nseeds = [0, 1]\n[actor]\nsteps = 50\n").unwrap();
    let o = irmarl(&["quadratic", "--config", path_str(&cfg), "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let gaps = std::fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 1 + 2 * 3 * 51);
    let svg = std::fs::read_to_string(dir.path().join("gap_n4.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("2-ir"));
    assert!(dir.path().join("n4/seed-1.jsonl").is_file());
}
