use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_next-bench");

const SMALL: &str = r#"
name = "small"

[problem]
app = "cartography"
agents = 4
basis = 3
channels = 6
seed = 5

[graph]
generator = "ring"

[[algorithm]]
kind = "next-pl"
label = "NEXT"
step = { rule = "recursive", alpha0 = 0.5, mu = 0.01 }

[[algorithm]]
kind = "dgradient"
label = "DG"
step = { rule = "recursive", alpha0 = 0.5, mu = 0.01 }

[run]
iterations = 40
repetitions = 2
cadence = 5
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("next-bench-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn bench(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("NEXT_OUT_DIR").output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

#[test]
fn bundled_configs_validate() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let out = bench(&["validate", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), stderr(&out));
    }
}

#[test]
fn empty_algorithm_list_exits_two() {
    let dir = scratch("empty");
    let text = SMALL.split("[[algorithm]]").next().unwrap().to_string() + "[run]\niterations = 5\n";
    let cfg = write_config(&dir, &text);
    let out = bench(&["run", cfg.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("algorithm"), "{}", stderr(&out));
    assert!(!dir.join("o").exists());
}

#[test]
fn bad_beta_exits_two_with_diagnostic() {
    let dir = scratch("beta");
    let text = SMALL.replace(
        r#"label = "NEXT"
step = { rule = "recursive", alpha0 = 0.5, mu = 0.01 }"#,
        r#"label = "NEXT"
step = { rule = "polynomial", alpha0 = 0.5, beta = 0.4 }"#,
    );
    let cfg = write_config(&dir, &text);
    let out = bench(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("β must lie in (0.5, 1]"), "{}", stderr(&out));
}

#[test]
fn unknown_key_exits_two() {
    let dir = scratch("unknown");
    let cfg = write_config(&dir, &SMALL.replace("[run]\n", "[run]\nbogus = 1\n"));
    let out = bench(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bogus"), "{}", stderr(&out));
}

#[test]
fn non_finite_state_exits_three() {
    let dir = scratch("blowup");
    let cfg = write_config(
        &dir,
        r#"
name = "blowup"
[problem]
app = "localization"
agents = 5
targets = 1
snr_db = -1e308
seed = 1
[graph]
generator = "ring"
[[algorithm]]
kind = "next-pl"
step = { rule = "constant", alpha = 0.5 }
[run]
iterations = 20
repetitions = 1
"#,
    );
    let out = bench(&["run", cfg.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("non-finite"), "{}", stderr(&out));
}

#[test]
fn summary_matches_traces() {
    let dir = scratch("summary");
    let cfg = write_config(&dir, SMALL);
    let out_dir = dir.join("o");
    let out = bench(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let label = &row[col("algorithm")];
        let rep: usize = row[col("rep")].parse().unwrap();
        let trace = fs::read_to_string(out_dir.join(format!("{label}_rep{rep:03}.csv"))).unwrap();
        let mut trace_lines = trace.lines();
        assert_eq!(trace_lines.next().unwrap(), "n,comm,J,D,NMSE,U,track_err");
        let last: Vec<&str> = trace.lines().last().unwrap().split(',').collect();
        assert_eq!(last[0], row[col("iterations")]);
        assert_eq!(last[1], row[col("comm")]);
        assert_eq!(last[2], row[col("final_J")]);
        assert_eq!(last[3], row[col("final_D")]);
        assert_eq!(last[5], row[col("final_U")]);
        let per_iteration = if label == "NEXT" { 2 } else { 1 };
        assert_eq!(last[1].parse::<usize>().unwrap(), per_iteration * 40);
    }
    assert!(out_dir.join("instance_rep000.txt").exists());
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = scratch("env");
    let cfg = write_config(&dir, &SMALL.replace("repetitions = 2", "repetitions = 1"));
    let out = Command::new(BIN)
        .args(["run", cfg.to_str().unwrap()])
        .env("NEXT_OUT_DIR", dir.join("env"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(dir.join("env").join("small").join("summary.csv").exists());
}

#[test]
fn graph_dump_roundtrips() {
    let dir = scratch("dump");
    let cfg = write_config(&dir, SMALL);
    let out = bench(&["graph-dump", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let schedule = next_core::graph::io::parse_schedule(&text).unwrap();
    assert_eq!(schedule.agent_count(), 4);

    let file = dir.join("schedule.txt");
    fs::write(&file, &text).unwrap();
    let from_file = SMALL.replace(
        "generator = \"ring\"",
        "generator = \"file\"\npath = \"schedule.txt\"",
    );
    let cfg = write_config(&dir, &from_file);
    let out = bench(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}
